//! Finite discounted MDPs: representation, simulation and exact solvers.
//!
//! Tensors are stored flat in row-major order: `transition[(s * A + a) * S + s']`
//! and `reward_mean[s * A + a]`.

mod solve;

pub use solve::{
    bellman_optimal_backup, greedy_action, greedy_policy, policy_backup, policy_evaluation,
    policy_evaluation_from, value_iteration, value_iteration_from, DEFAULT_TOL,
};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_index, Error, Result};

/// Tolerance on row sums of stochastic matrices.
pub const ROW_SUM_TOL: f64 = 1e-9;

/// One observed step `(s_t, a_t, r_{t+1}, s_{t+1})`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub s: usize,
    pub a: usize,
    pub r: f64,
    pub s_next: usize,
}

/// An exact finite MDP.
///
/// Rewards are attached to `(s, a)` pairs. A domain may additionally declare
/// outcome-dependent rewards indexed by `(s, a, s')`, in which case
/// `reward_mean` is their expectation under the transition kernel. Realized
/// rewards carry Gaussian noise with standard deviation `reward_std`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MdpDoc", into = "MdpDoc")]
pub struct FiniteMdp {
    n_states: usize,
    n_actions: usize,
    transition: Vec<f64>,
    reward_mean: Vec<f64>,
    outcome_reward: Option<Vec<f64>>,
    reward_std: f64,
    discount: f64,
}

/// Wire form of [`FiniteMdp`]; validated on conversion.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MdpDoc {
    n_states: usize,
    n_actions: usize,
    transition: Vec<f64>,
    reward_mean: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    outcome_reward: Option<Vec<f64>>,
    #[serde(default)]
    reward_std: f64,
    discount: f64,
}

impl TryFrom<MdpDoc> for FiniteMdp {
    type Error = Error;

    fn try_from(doc: MdpDoc) -> Result<Self> {
        let mdp = FiniteMdp::new(
            doc.n_states,
            doc.n_actions,
            doc.transition,
            doc.reward_mean,
            doc.discount,
        )?
        .with_reward_std(doc.reward_std)?;
        match doc.outcome_reward {
            None => Ok(mdp),
            Some(outcome) => {
                let rebuilt = mdp.clone().with_outcome_rewards(outcome)?;
                for (i, (&m, &e)) in mdp.reward_mean.iter().zip(&rebuilt.reward_mean).enumerate() {
                    if (m - e).abs() > ROW_SUM_TOL * m.abs().max(1.0) {
                        return Err(Error::InvalidMdp(format!(
                            "reward_mean[{i}] = {m} disagrees with expected outcome reward {e}"
                        )));
                    }
                }
                Ok(FiniteMdp {
                    reward_mean: mdp.reward_mean,
                    ..rebuilt
                })
            }
        }
    }
}

impl From<FiniteMdp> for MdpDoc {
    fn from(m: FiniteMdp) -> Self {
        MdpDoc {
            n_states: m.n_states,
            n_actions: m.n_actions,
            transition: m.transition,
            reward_mean: m.reward_mean,
            outcome_reward: m.outcome_reward,
            reward_std: m.reward_std,
            discount: m.discount,
        }
    }
}

fn tensor_len(n_states: usize, n_actions: usize) -> Result<(usize, usize)> {
    let pairs = n_states
        .checked_mul(n_actions)
        .ok_or_else(|| Error::InvalidMdp("dimensions overflow".into()))?;
    let full = pairs
        .checked_mul(n_states)
        .ok_or_else(|| Error::InvalidMdp("dimensions overflow".into()))?;
    Ok((pairs, full))
}

impl FiniteMdp {
    /// Builds and validates an MDP with deterministic `(s, a)` rewards.
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        reward_mean: Vec<f64>,
        discount: f64,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::InvalidMdp(format!(
                "dimensions must be positive, got {n_states}x{n_actions}"
            )));
        }
        let (pairs, full) = tensor_len(n_states, n_actions)?;
        if transition.len() != full {
            return Err(Error::ShapeMismatch {
                expected: format!("transition of length {full}"),
                got: format!("length {}", transition.len()),
            });
        }
        if reward_mean.len() != pairs {
            return Err(Error::ShapeMismatch {
                expected: format!("reward_mean of length {pairs}"),
                got: format!("length {}", reward_mean.len()),
            });
        }
        if !(0.0..1.0).contains(&discount) {
            return Err(Error::InvalidMdp(format!(
                "discount must lie in [0, 1), got {discount}"
            )));
        }
        if let Some(r) = reward_mean.iter().find(|r| !r.is_finite()) {
            return Err(Error::InvalidMdp(format!("non-finite reward {r}")));
        }
        for (row_idx, row) in transition.chunks_exact(n_states).enumerate() {
            let mut sum = 0.0;
            for &p in row {
                if !p.is_finite() || p < 0.0 {
                    return Err(Error::InvalidMdp(format!(
                        "transition entry {p} in row {row_idx} is not a probability"
                    )));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidMdp(format!(
                    "transition row {row_idx} (s={}, a={}) sums to {sum}",
                    row_idx / n_actions,
                    row_idx % n_actions
                )));
            }
        }
        Ok(FiniteMdp {
            n_states,
            n_actions,
            transition,
            reward_mean,
            outcome_reward: None,
            reward_std: 0.0,
            discount,
        })
    }

    /// Replaces the rewards by outcome rewards `r(s, a, s')`; `reward_mean`
    /// becomes their expectation under the kernel.
    pub fn with_outcome_rewards(mut self, outcome: Vec<f64>) -> Result<Self> {
        if outcome.len() != self.transition.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("outcome_reward of length {}", self.transition.len()),
                got: format!("length {}", outcome.len()),
            });
        }
        if let Some(r) = outcome.iter().find(|r| !r.is_finite()) {
            return Err(Error::InvalidMdp(format!("non-finite outcome reward {r}")));
        }
        let s_n = self.n_states;
        for (pair, mean) in self.reward_mean.iter_mut().enumerate() {
            let p = &self.transition[pair * s_n..(pair + 1) * s_n];
            let r = &outcome[pair * s_n..(pair + 1) * s_n];
            *mean = p.iter().zip(r).map(|(p, r)| p * r).sum();
        }
        self.outcome_reward = Some(outcome);
        Ok(self)
    }

    pub fn with_reward_std(mut self, std: f64) -> Result<Self> {
        if !std.is_finite() || std < 0.0 {
            return Err(Error::InvalidMdp(format!(
                "reward_std must be finite and non-negative, got {std}"
            )));
        }
        self.reward_std = std;
        Ok(self)
    }

    pub fn with_discount(mut self, discount: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&discount) {
            return Err(Error::InvalidMdp(format!(
                "discount must lie in [0, 1), got {discount}"
            )));
        }
        self.discount = discount;
        Ok(self)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn reward_std(&self) -> f64 {
        self.reward_std
    }

    /// The next-state distribution for `(s, a)`.
    #[inline]
    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.transition[start..start + self.n_states]
    }

    #[inline]
    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward_mean[s * self.n_actions + a]
    }

    pub fn transitions(&self) -> &[f64] {
        &self.transition
    }

    pub fn reward_means(&self) -> &[f64] {
        &self.reward_mean
    }

    pub fn outcome_rewards(&self) -> Option<&[f64]> {
        self.outcome_reward.as_deref()
    }

    /// Smallest and largest mean reward.
    pub fn reward_range(&self) -> (f64, f64) {
        self.reward_mean
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| {
                (lo.min(r), hi.max(r))
            })
    }

    pub fn check_state(&self, s: usize) -> Result<()> {
        check_index("state", s, self.n_states)
    }

    pub fn check_action(&self, a: usize) -> Result<()> {
        check_index("action", a, self.n_actions)
    }

    /// Simulates one step from `(s, a)`.
    pub fn step<R: Rng + ?Sized>(&self, s: usize, a: usize, rng: &mut R) -> Result<Transition> {
        self.check_state(s)?;
        self.check_action(a)?;
        let s_next = sample_categorical(self.transition_row(s, a), rng);
        let base = match &self.outcome_reward {
            Some(outcome) => outcome[(s * self.n_actions + a) * self.n_states + s_next],
            None => self.reward(s, a),
        };
        let r = if self.reward_std > 0.0 {
            let z: f64 = StandardNormal.sample(rng);
            base + self.reward_std * z
        } else {
            base
        };
        Ok(Transition { s, a, r, s_next })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("MDP serialization is infallible")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Draws an index from a probability vector by inverse-CDF.
///
/// The last index with positive mass absorbs any rounding slack.
pub fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

/// A `|S| x |A|` table of reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    n_states: usize,
    n_actions: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self::filled(n_states, n_actions, 0.0)
    }

    pub fn filled(n_states: usize, n_actions: usize, value: f64) -> Self {
        QTable {
            n_states,
            n_actions,
            values: vec![value; n_states * n_actions],
        }
    }

    pub fn from_vec(n_states: usize, n_actions: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_states * n_actions {
            return Err(Error::ShapeMismatch {
                expected: format!("{n_states}x{n_actions} table"),
                got: format!("{} values", values.len()),
            });
        }
        Ok(QTable {
            n_states,
            n_actions,
            values,
        })
    }

    pub fn for_mdp(mdp: &FiniteMdp) -> Self {
        Self::zeros(mdp.n_states(), mdp.n_actions())
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.n_actions + a]
    }

    #[inline]
    pub fn set(&mut self, s: usize, a: usize, v: f64) {
        self.values[s * self.n_actions + a] = v;
    }

    #[inline]
    pub fn add(&mut self, s: usize, a: usize, dv: f64) {
        self.values[s * self.n_actions + a] += dv;
    }

    #[inline]
    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn row_max(&self, s: usize) -> f64 {
        self.row(s)
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn same_shape(&self, other: &QTable) -> bool {
        self.n_states == other.n_states && self.n_actions == other.n_actions
    }

    pub(crate) fn check_shape(&self, n_states: usize, n_actions: usize) -> Result<()> {
        if self.n_states == n_states && self.n_actions == n_actions {
            Ok(())
        } else {
            Err(Error::ShapeMismatch {
                expected: format!("{n_states}x{n_actions} table"),
                got: format!("{}x{}", self.n_states, self.n_actions),
            })
        }
    }

    /// Sup-norm distance. Panics on shape mismatch.
    pub fn sup_distance(&self, other: &QTable) -> f64 {
        assert!(self.same_shape(other), "sup_distance on mismatched tables");
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Entrywise mean of equally-shaped tables, summed in slice order.
    pub fn mean_of(tables: &[QTable]) -> Result<QTable> {
        let first = tables.first().ok_or(Error::EmptyInput("tables"))?;
        let mut acc = QTable::zeros(first.n_states, first.n_actions);
        for t in tables {
            t.check_shape(first.n_states, first.n_actions)?;
            for (a, v) in acc.values.iter_mut().zip(&t.values) {
                *a += v;
            }
        }
        let n = tables.len() as f64;
        for a in &mut acc.values {
            *a /= n;
        }
        Ok(acc)
    }
}

/// A memoryless policy: one action distribution per state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryPolicy {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl StationaryPolicy {
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != n_states * n_actions {
            return Err(Error::ShapeMismatch {
                expected: format!("{n_states}x{n_actions} policy"),
                got: format!("{} entries", probs.len()),
            });
        }
        for (s, row) in probs.chunks_exact(n_actions.max(1)).enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) || (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::param(
                    "policy",
                    format!("row {s} is not a probability vector"),
                ));
            }
        }
        Ok(StationaryPolicy {
            n_states,
            n_actions,
            probs,
        })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        StationaryPolicy {
            n_states,
            n_actions,
            probs: vec![1.0 / n_actions as f64; n_states * n_actions],
        }
    }

    /// The deterministic policy choosing `actions[s]` in state `s`.
    pub fn deterministic(n_actions: usize, actions: &[usize]) -> Result<Self> {
        let mut probs = vec![0.0; actions.len() * n_actions];
        for (s, &a) in actions.iter().enumerate() {
            check_index("action", a, n_actions)?;
            probs[s * n_actions + a] = 1.0;
        }
        Ok(StationaryPolicy {
            n_states: actions.len(),
            n_actions,
            probs,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.n_actions + a]
    }

    /// The action chosen in `s` if the row is one-hot.
    pub fn deterministic_action(&self, s: usize) -> Option<usize> {
        let row = self.row(s);
        let mut found = None;
        for (a, &p) in row.iter().enumerate() {
            if p == 1.0 {
                found = Some(a);
            } else if p != 0.0 {
                return None;
            }
        }
        found
    }

    pub fn sample_action<R: Rng + ?Sized>(&self, s: usize, rng: &mut R) -> usize {
        match self.deterministic_action(s) {
            Some(a) => a,
            None => sample_categorical(self.row(s), rng),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn one_state(rewards: &[f64], discount: f64) -> FiniteMdp {
        let n_a = rewards.len();
        FiniteMdp::new(1, n_a, vec![1.0; n_a], rewards.to_vec(), discount).unwrap()
    }

    #[test]
    fn single_state_step_is_identity() {
        let mdp = one_state(&[0.2], 0.9);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = mdp.step(0, 0, &mut rng).unwrap();
        assert_eq!(
            t,
            Transition {
                s: 0,
                a: 0,
                r: 0.2,
                s_next: 0
            }
        );
    }

    #[test]
    fn step_frequency_matches_kernel() {
        let mdp = FiniteMdp::new(2, 1, vec![0.3, 0.7, 0.5, 0.5], vec![0.0, 0.0], 0.9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;
        let hits = (0..n)
            .filter(|_| mdp.step(0, 0, &mut rng).unwrap().s_next == 1)
            .count();
        let freq = hits as f64 / n as f64;
        assert!((freq - 0.7).abs() < 0.01, "freq {freq}");
    }

    #[test]
    fn step_rejects_out_of_range() {
        let mdp = one_state(&[0.0, 1.0], 0.9);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            mdp.step(1, 0, &mut rng),
            Err(Error::IndexOutOfRange { what: "state", .. })
        ));
        assert!(matches!(
            mdp.step(0, 2, &mut rng),
            Err(Error::IndexOutOfRange { what: "action", .. })
        ));
    }

    #[test]
    fn gaussian_reward_noise_has_declared_moments() {
        let mdp = one_state(&[1.5], 0.9).with_reward_std(2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 50_000;
        let xs: Vec<f64> = (0..n)
            .map(|_| mdp.step(0, 0, &mut rng).unwrap().r)
            .collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - 1.5).abs() < 3.0 * 2.0 / (n as f64).sqrt());
        assert!((var.sqrt() - 2.0).abs() < 0.05);
    }

    #[test]
    fn rejects_bad_rows_and_discount() {
        assert!(FiniteMdp::new(2, 1, vec![0.5, 0.6, 1.0, 0.0], vec![0.0; 2], 0.9).is_err());
        assert!(FiniteMdp::new(2, 1, vec![-0.5, 1.5, 1.0, 0.0], vec![0.0; 2], 0.9).is_err());
        assert!(FiniteMdp::new(1, 1, vec![1.0], vec![0.0], 1.0).is_err());
        assert!(FiniteMdp::new(1, 1, vec![1.0], vec![f64::NAN], 0.5).is_err());
        assert!(FiniteMdp::new(0, 1, vec![], vec![], 0.5).is_err());
        assert!(FiniteMdp::new(1, 1, vec![1.0, 0.0], vec![0.0], 0.5).is_err());
    }

    #[test]
    fn json_round_trip_preserves_outcome_rewards() {
        let mdp = FiniteMdp::new(2, 1, vec![0.25, 0.75, 1.0, 0.0], vec![0.0; 2], 0.9)
            .unwrap()
            .with_outcome_rewards(vec![4.0, 0.0, 1.0, 1.0])
            .unwrap();
        assert_eq!(mdp.reward(0, 0), 1.0);
        let back = FiniteMdp::from_json(&mdp.to_json()).unwrap();
        assert_eq!(back, mdp);
    }

    #[test]
    fn json_rejects_inconsistent_outcome_means() {
        let text = r#"{"n_states":1,"n_actions":1,"transition":[1.0],
            "reward_mean":[3.0],"outcome_reward":[1.0],"discount":0.5}"#;
        assert!(FiniteMdp::from_json(text).is_err());
    }

    #[test]
    fn json_rejects_overflowing_dimensions() {
        let text = format!(
            r#"{{"n_states":{},"n_actions":{},"transition":[],"reward_mean":[],"discount":0.5}}"#,
            usize::MAX / 2,
            4
        );
        assert!(FiniteMdp::from_json(&text).is_err());
    }

    #[test]
    fn mean_of_tables() {
        let a = QTable::from_vec(1, 2, vec![1.0, 2.0]).unwrap();
        let b = QTable::from_vec(1, 2, vec![3.0, 6.0]).unwrap();
        let m = QTable::mean_of(&[a, b]).unwrap();
        assert_eq!(m.values(), &[2.0, 4.0]);
        assert!(QTable::mean_of(&[]).is_err());
    }

    #[test]
    fn deterministic_policy_rows() {
        let pol = StationaryPolicy::deterministic(3, &[2, 0]).unwrap();
        assert_eq!(pol.deterministic_action(0), Some(2));
        assert_eq!(pol.row(1), &[1.0, 0.0, 0.0]);
        assert!(StationaryPolicy::deterministic(2, &[2]).is_err());
        assert_eq!(
            StationaryPolicy::uniform(1, 4).deterministic_action(0),
            None
        );
    }
}
