//! Derivation of independent per-run seeds from one master seed.
//!
//! Every stream used by the harness is identified by a `(domain tag, index)`
//! pair and hashed together with the master seed, so tuning and evaluation
//! streams never coincide and results do not depend on scheduling order.

/// Derivation domains. Distinct tags yield disjoint seed families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SeedDomain {
    Tuning,
    Evaluation,
    Bootstrap,
    Agent,
    Environment,
}

impl SeedDomain {
    fn tag(self) -> u64 {
        match self {
            SeedDomain::Tuning => 0x7475_6e69_6e67_0001,
            SeedDomain::Evaluation => 0x6576_616c_7561_0002,
            SeedDomain::Bootstrap => 0x626f_6f74_7374_0003,
            SeedDomain::Agent => 0x6167_656e_7400_0004,
            SeedDomain::Environment => 0x656e_7669_726f_0005,
        }
    }
}

/// SplitMix64 finaliser.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of stream `index` within `domain`.
pub fn derive(master: u64, domain: SeedDomain, index: u64) -> u64 {
    mix64(mix64(master ^ domain.tag()) ^ mix64(index.wrapping_mul(0xd6e8_feb8_6659_fd93)))
}

/// Hashes a label (domain or agent name) into a stream index component.
pub fn label_hash(label: &str) -> u64 {
    // FNV-1a
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
