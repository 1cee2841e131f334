//! Conjugate posterior over finite MDPs.
//!
//! Transitions carry an independent Dirichlet per `(s, a)` row and rewards an
//! independent Normal-Gamma over (mean, precision) per `(s, a)`. The posterior
//! depends only on the multiset of observed transitions, never on the policy
//! that generated them.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_index, Error, Result};
use crate::mdp::{sample_categorical, FiniteMdp, Transition};

/// Normal-Gamma distribution over a Gaussian's (mean, precision):
/// `τ ~ Gamma(α, rate β)`, `m | τ ~ N(μ, 1 / (κ τ))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalGamma {
    pub mu: f64,
    pub kappa: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for NormalGamma {
    fn default() -> Self {
        NormalGamma {
            mu: 0.0,
            kappa: 1.0,
            alpha: 1.0,
            beta: 1.0,
        }
    }
}

impl NormalGamma {
    pub fn new(mu: f64, kappa: f64, alpha: f64, beta: f64) -> Result<Self> {
        let ng = NormalGamma {
            mu,
            kappa,
            alpha,
            beta,
        };
        ng.validate()?;
        Ok(ng)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mu.is_finite() {
            return Err(Error::param(
                "mu",
                format!("must be finite, got {}", self.mu),
            ));
        }
        for (name, v) in [
            ("kappa", self.kappa),
            ("alpha", self.alpha),
            ("beta", self.beta),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, format!("must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Conjugate update with one observation `x`.
    pub fn observe(&mut self, x: f64) {
        let kappa_n = self.kappa + 1.0;
        let dev = x - self.mu;
        self.beta += self.kappa * dev * dev / (2.0 * kappa_n);
        self.mu = (self.kappa * self.mu + x) / kappa_n;
        self.kappa = kappa_n;
        self.alpha += 0.5;
    }

    /// Posterior (and prior predictive) mean of the reward mean.
    pub fn mean(&self) -> f64 {
        self.mu
    }

    /// Expected precision `α / β`.
    pub fn expected_precision(&self) -> f64 {
        self.alpha / self.beta
    }

    /// Draws `(mean, precision)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let gamma = Gamma::new(self.alpha, 1.0 / self.beta).expect("validated parameters");
        let tau: f64 = gamma.sample(rng).max(f64::MIN_POSITIVE);
        let z: f64 = StandardNormal.sample(rng);
        let mean = self.mu + z / (self.kappa * tau).sqrt();
        (mean, tau)
    }

    /// Draws only the mean, marginalising the precision (Student-t).
    pub fn sample_mean<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.sample(rng).0
    }
}

/// Prior hyperparameters shared by every `(s, a)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    /// Symmetric Dirichlet pseudo-count per next state.
    pub transition_pseudo_count: f64,
    pub reward: NormalGamma,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig {
            transition_pseudo_count: 0.5,
            reward: NormalGamma::default(),
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        let c = self.transition_pseudo_count;
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::param(
                "transition_pseudo_count",
                format!("must be positive, got {c}"),
            ));
        }
        self.reward.validate()
    }
}

/// Dirichlet counts per `(s, a)` row, flat `(s * A + a) * S + s'`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirichletTransitionBelief {
    counts: Vec<f64>,
}

impl DirichletTransitionBelief {
    pub fn counts(&self) -> &[f64] {
        &self.counts
    }
}

/// Normal-Gamma reward posterior per `(s, a)`, flat `s * A + a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalGammaRewardBelief {
    params: Vec<NormalGamma>,
}

impl NormalGammaRewardBelief {
    pub fn params(&self) -> &[NormalGamma] {
        &self.params
    }
}

/// The posterior over MDPs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BeliefDoc", into = "BeliefDoc")]
pub struct BeliefState {
    n_states: usize,
    n_actions: usize,
    transitions: DirichletTransitionBelief,
    rewards: NormalGammaRewardBelief,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BeliefDoc {
    n_states: usize,
    n_actions: usize,
    counts: Vec<f64>,
    rewards: Vec<NormalGamma>,
}

impl TryFrom<BeliefDoc> for BeliefState {
    type Error = Error;

    fn try_from(doc: BeliefDoc) -> Result<Self> {
        if doc.n_states == 0 || doc.n_actions == 0 {
            return Err(Error::InvalidBelief("dimensions must be positive".into()));
        }
        let pairs = doc
            .n_states
            .checked_mul(doc.n_actions)
            .ok_or_else(|| Error::InvalidBelief("dimensions overflow".into()))?;
        let full = pairs
            .checked_mul(doc.n_states)
            .ok_or_else(|| Error::InvalidBelief("dimensions overflow".into()))?;
        if doc.counts.len() != full || doc.rewards.len() != pairs {
            return Err(Error::InvalidBelief(format!(
                "expected {full} counts and {pairs} reward entries, got {} and {}",
                doc.counts.len(),
                doc.rewards.len()
            )));
        }
        if let Some(c) = doc.counts.iter().find(|c| !(**c > 0.0 && c.is_finite())) {
            return Err(Error::InvalidBelief(format!("count {c} is not positive")));
        }
        for ng in &doc.rewards {
            ng.validate()
                .map_err(|e| Error::InvalidBelief(e.to_string()))?;
        }
        Ok(BeliefState {
            n_states: doc.n_states,
            n_actions: doc.n_actions,
            transitions: DirichletTransitionBelief { counts: doc.counts },
            rewards: NormalGammaRewardBelief {
                params: doc.rewards,
            },
        })
    }
}

impl From<BeliefState> for BeliefDoc {
    fn from(b: BeliefState) -> Self {
        BeliefDoc {
            n_states: b.n_states,
            n_actions: b.n_actions,
            counts: b.transitions.counts,
            rewards: b.rewards.params,
        }
    }
}

impl BeliefState {
    pub fn new(n_states: usize, n_actions: usize, prior: &PriorConfig) -> Result<Self> {
        prior.validate()?;
        if n_states == 0 || n_actions == 0 {
            return Err(Error::InvalidBelief("dimensions must be positive".into()));
        }
        let pairs = n_states * n_actions;
        Ok(BeliefState {
            n_states,
            n_actions,
            transitions: DirichletTransitionBelief {
                counts: vec![prior.transition_pseudo_count; pairs * n_states],
            },
            rewards: NormalGammaRewardBelief {
                params: vec![prior.reward; pairs],
            },
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn transitions(&self) -> &DirichletTransitionBelief {
        &self.transitions
    }

    pub fn rewards(&self) -> &NormalGammaRewardBelief {
        &self.rewards
    }

    #[inline]
    pub fn count_row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.transitions.counts[start..start + self.n_states]
    }

    fn count_row_mut(&mut self, s: usize, a: usize) -> &mut [f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &mut self.transitions.counts[start..start + self.n_states]
    }

    #[inline]
    pub fn reward_posterior(&self, s: usize, a: usize) -> &NormalGamma {
        &self.rewards.params[s * self.n_actions + a]
    }

    /// Replaces the Dirichlet counts of one row.
    pub fn set_count_row(&mut self, s: usize, a: usize, counts: &[f64]) -> Result<()> {
        check_index("state", s, self.n_states)?;
        check_index("action", a, self.n_actions)?;
        if counts.len() != self.n_states || counts.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
            return Err(Error::InvalidBelief(
                "count row must hold one positive entry per state".into(),
            ));
        }
        self.count_row_mut(s, a).copy_from_slice(counts);
        Ok(())
    }

    /// Replaces the reward posterior of one pair.
    pub fn set_reward_posterior(&mut self, s: usize, a: usize, ng: NormalGamma) -> Result<()> {
        check_index("state", s, self.n_states)?;
        check_index("action", a, self.n_actions)?;
        ng.validate()?;
        self.rewards.params[s * self.n_actions + a] = ng;
        Ok(())
    }

    /// Conditions on one observed transition.
    pub fn update(&mut self, t: &Transition) -> Result<()> {
        check_index("state", t.s, self.n_states)?;
        check_index("action", t.a, self.n_actions)?;
        check_index("next state", t.s_next, self.n_states)?;
        if !t.r.is_finite() {
            return Err(Error::param(
                "reward",
                format!("must be finite, got {}", t.r),
            ));
        }
        self.count_row_mut(t.s, t.a)[t.s_next] += 1.0;
        self.rewards.params[t.s * self.n_actions + t.a].observe(t.r);
        Ok(())
    }

    /// Functional form of [`BeliefState::update`].
    pub fn updated(&self, t: &Transition) -> Result<Self> {
        let mut next = self.clone();
        next.update(t)?;
        Ok(next)
    }

    /// Total Dirichlet mass over all rows.
    pub fn total_count(&self) -> f64 {
        self.transitions.counts.iter().sum()
    }

    /// Draws one next-state distribution for `(s, a)` from its Dirichlet.
    pub fn sample_row<R: Rng + ?Sized>(&self, s: usize, a: usize, rng: &mut R, out: &mut [f64]) {
        sample_dirichlet(self.count_row(s, a), rng, out);
    }

    /// Draws one reward mean for `(s, a)`.
    pub fn sample_reward_mean<R: Rng + ?Sized>(&self, s: usize, a: usize, rng: &mut R) -> f64 {
        self.reward_posterior(s, a).sample_mean(rng)
    }

    /// Draws `(s', r)` from one sampled model at `(s, a)`: a kernel row and a
    /// reward mean are sampled, then `s'` from the row.
    pub fn sample_outcome<R: Rng + ?Sized>(
        &self,
        s: usize,
        a: usize,
        rng: &mut R,
        scratch: &mut Vec<f64>,
    ) -> (usize, f64) {
        scratch.resize(self.n_states, 0.0);
        self.sample_row(s, a, rng, scratch);
        let r = self.sample_reward_mean(s, a, rng);
        (sample_categorical(scratch, rng), r)
    }

    /// Draws a complete MDP. Rows are sampled in `(s, a)` order, each
    /// followed by its reward mean; the sample has zero reward noise.
    pub fn sample_mdp<R: Rng + ?Sized>(&self, discount: f64, rng: &mut R) -> Result<FiniteMdp> {
        let pairs = self.n_states * self.n_actions;
        let mut transition = vec![0.0; pairs * self.n_states];
        let mut reward = vec![0.0; pairs];
        for pair in 0..pairs {
            let (s, a) = (pair / self.n_actions, pair % self.n_actions);
            sample_dirichlet(
                self.count_row(s, a),
                rng,
                &mut transition[pair * self.n_states..(pair + 1) * self.n_states],
            );
            reward[pair] = self.rewards.params[pair].sample_mean(rng);
        }
        FiniteMdp::new(self.n_states, self.n_actions, transition, reward, discount)
    }

    /// The expected model: normalised counts and posterior reward means.
    pub fn mean_mdp(&self, discount: f64) -> Result<FiniteMdp> {
        let mut transition = self.transitions.counts.clone();
        for row in transition.chunks_exact_mut(self.n_states) {
            let total: f64 = row.iter().sum();
            row.iter_mut().for_each(|c| *c /= total);
        }
        let reward = self.rewards.params.iter().map(NormalGamma::mean).collect();
        FiniteMdp::new(self.n_states, self.n_actions, transition, reward, discount)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("belief serialization is infallible")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Dirichlet draw by normalising independent `Gamma(c_i, 1)` variates.
pub fn sample_dirichlet<R: Rng + ?Sized>(counts: &[f64], rng: &mut R, out: &mut [f64]) {
    debug_assert_eq!(counts.len(), out.len());
    let mut total = 0.0;
    for (o, &c) in out.iter_mut().zip(counts) {
        let g: f64 = Gamma::new(c, 1.0).expect("positive counts").sample(rng);
        *o = g;
        total += g;
    }
    if total > 0.0 && total.is_finite() {
        out.iter_mut().for_each(|o| *o /= total);
    } else {
        // Every variate underflowed; fall back to the mean.
        let sum: f64 = counts.iter().sum();
        for (o, &c) in out.iter_mut().zip(counts) {
            *o = c / sum;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tr(s: usize, a: usize, r: f64, s_next: usize) -> Transition {
        Transition { s, a, r, s_next }
    }

    #[test]
    fn default_prior_counts() {
        let b = BeliefState::new(2, 1, &PriorConfig::default()).unwrap();
        assert!(b.transitions().counts().iter().all(|&c| c == 0.5));
        assert_eq!(b.count_row(0, 0).iter().sum::<f64>(), 1.0);
        assert_eq!(b.reward_posterior(1, 0).mean(), 0.0);
    }

    #[test]
    fn rejects_non_positive_hyperparameters() {
        let prior = PriorConfig {
            transition_pseudo_count: 0.0,
            ..PriorConfig::default()
        };
        assert!(BeliefState::new(2, 2, &prior).is_err());
        let mut prior = PriorConfig::default();
        prior.reward.beta = -1.0;
        assert!(BeliefState::new(2, 2, &prior).is_err());
    }

    #[test]
    fn update_increments_one_count() {
        let mut b = BeliefState::new(2, 1, &PriorConfig::default()).unwrap();
        b.update(&tr(0, 0, 1.0, 1)).unwrap();
        assert_eq!(b.count_row(0, 0), &[0.5, 1.5]);
        assert_eq!(b.count_row(1, 0), &[0.5, 0.5]);
    }

    #[test]
    fn normal_gamma_single_observation() {
        // κ' = 2, μ' = (0 + 1)/2, α' = 1.5, β' = 1 + 1·1²/(2·2) = 1.25
        let mut b = BeliefState::new(1, 1, &PriorConfig::default()).unwrap();
        b.update(&tr(0, 0, 1.0, 0)).unwrap();
        let ng = b.reward_posterior(0, 0);
        assert_eq!(
            *ng,
            NormalGamma {
                mu: 0.5,
                kappa: 2.0,
                alpha: 1.5,
                beta: 1.25
            }
        );
    }

    #[test]
    fn update_rejects_out_of_range() {
        let mut b = BeliefState::new(2, 2, &PriorConfig::default()).unwrap();
        assert!(b.update(&tr(2, 0, 0.0, 0)).is_err());
        assert!(b.update(&tr(0, 2, 0.0, 0)).is_err());
        assert!(b.update(&tr(0, 0, 0.0, 5)).is_err());
        assert!(b.update(&tr(0, 0, f64::NAN, 0)).is_err());
    }

    #[test]
    fn mean_mdp_uniform_then_normalised() {
        let b = BeliefState::new(3, 1, &PriorConfig::default()).unwrap();
        let m = b.mean_mdp(0.9).unwrap();
        for &p in m.transition_row(1, 0) {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
        let mut b = BeliefState::new(2, 1, &PriorConfig::default()).unwrap();
        for _ in 0..9 {
            b.update(&tr(0, 0, 0.0, 1)).unwrap();
        }
        let m = b.mean_mdp(0.9).unwrap();
        assert!((m.transition_row(0, 0)[0] - 0.05).abs() < 1e-15);
        assert!((m.transition_row(0, 0)[1] - 0.95).abs() < 1e-15);
    }

    #[test]
    fn concentrated_row_samples_near_vertex() {
        let mut b = BeliefState::new(2, 1, &PriorConfig::default()).unwrap();
        b.set_count_row(0, 0, &[1e6, 0.5]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let m = b.sample_mdp(0.9, &mut rng).unwrap();
            assert!((m.transition_row(0, 0)[0] - 1.0).abs() < 0.01);
        }
    }

    #[test]
    fn sampled_rows_average_to_normalised_counts() {
        let mut b = BeliefState::new(3, 1, &PriorConfig::default()).unwrap();
        b.set_count_row(0, 0, &[0.5, 2.0, 4.5]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 100_000;
        let mut acc = [0.0; 3];
        let mut row = [0.0; 3];
        for _ in 0..n {
            b.sample_row(0, 0, &mut rng, &mut row);
            for (a, r) in acc.iter_mut().zip(&row) {
                *a += r;
            }
        }
        for (a, expect) in acc.iter().zip([0.5 / 7.0, 2.0 / 7.0, 4.5 / 7.0]) {
            assert!((a / n as f64 - expect).abs() < 0.01);
        }
    }

    #[test]
    fn sampled_reward_means_centre_on_posterior_mean() {
        let mut b = BeliefState::new(1, 1, &PriorConfig::default()).unwrap();
        for r in [1.0, 2.0, 1.5, 0.5, 1.2, 1.8, 0.9, 1.1] {
            b.update(&tr(0, 0, r, 0)).unwrap();
        }
        let ng = *b.reward_posterior(0, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let n = 100_000;
        let xs: Vec<f64> = (0..n)
            .map(|_| b.sample_reward_mean(0, 0, &mut rng))
            .collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        let se = sd / (n as f64).sqrt();
        assert!((mean - ng.mu).abs() < 3.0 * se, "mean {mean} vs {}", ng.mu);
    }

    #[test]
    fn sampling_is_reproducible() {
        let b = BeliefState::new(3, 2, &PriorConfig::default()).unwrap();
        let m1 = b
            .sample_mdp(0.9, &mut ChaCha8Rng::seed_from_u64(3))
            .unwrap();
        let m2 = b
            .sample_mdp(0.9, &mut ChaCha8Rng::seed_from_u64(3))
            .unwrap();
        assert_eq!(m1, m2);
    }

    #[test]
    fn json_round_trip_and_validation() {
        let mut b = BeliefState::new(2, 2, &PriorConfig::default()).unwrap();
        b.update(&tr(1, 0, -0.25, 0)).unwrap();
        let back = BeliefState::from_json(&b.to_json()).unwrap();
        assert_eq!(back, b);
        let bad = r#"{"n_states":1,"n_actions":1,"counts":[0.0],
            "rewards":[{"mu":0,"kappa":1,"alpha":1,"beta":1}]}"#;
        assert!(BeliefState::from_json(bad).is_err());
        let bad = r#"{"n_states":1,"n_actions":1,"counts":[1.0],
            "rewards":[{"mu":0,"kappa":0,"alpha":1,"beta":1}]}"#;
        assert!(BeliefState::from_json(bad).is_err());
    }
}
