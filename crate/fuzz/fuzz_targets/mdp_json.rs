#![no_main]

use libfuzzer_sys::fuzz_target;
use mcbrl::mdp::FiniteMdp;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    // Anything that parses must survive a round trip unchanged.
    if let Ok(mdp) = FiniteMdp::from_json(text) {
        let back = FiniteMdp::from_json(&mdp.to_json()).expect("re-parse");
        assert_eq!(back, mdp);
    }
});
