//! Stochastic-gradient learners on a tabular parameter vector.
//!
//! All three updates draw one MDP from the belief per step. The direct
//! update regresses θ onto the sampled MDP's value, the TD update descends
//! the squared one-step error of a state-value table, and the Bellman update
//! descends the squared Bellman optimality error at one `(s, a)` pair.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::{Agent, StepClock, StepSizeSchedule};
use crate::belief::BeliefState;
use crate::error::{check_index, Error, Result};
use crate::mdp::{
    greedy_action, greedy_policy, policy_evaluation_from, value_iteration_from, QTable, Transition,
};

/// Which bound the direct-gradient learner tracks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundMode {
    /// `ω = Q*_μ`
    Upper,
    /// `ω = Q^π_μ` for the greedy policy on θ
    Lower,
}

fn check_step(step: f64) -> Result<()> {
    if step >= 0.0 && step.is_finite() {
        Ok(())
    } else {
        Err(Error::param(
            "step",
            format!("must be non-negative, got {step}"),
        ))
    }
}

fn ensure_finite(theta: &QTable, what: &'static str) -> Result<()> {
    if theta.is_finite() {
        Ok(())
    } else {
        Err(Error::Diverged(what))
    }
}

/// Sum over `(s, a)` of `D(s, a) = (θ(s, a) - ω(s, a)) ∇θ(s, a)` for the
/// tabular parametrisation: the gradient of `½ Σ (θ - ω)²`.
pub fn dgbrl_direction(theta: &QTable, omega: &QTable) -> Result<QTable> {
    omega.check_shape(theta.n_states(), theta.n_actions())?;
    let values = theta
        .values()
        .iter()
        .zip(omega.values())
        .map(|(t, w)| t - w)
        .collect();
    QTable::from_vec(theta.n_states(), theta.n_actions(), values)
}

/// `θ - η Σ D(s, a)` for a given target `ω`.
pub fn dgbrl_step(theta: &QTable, omega: &QTable, step: f64) -> Result<QTable> {
    check_step(step)?;
    let dir = dgbrl_direction(theta, omega)?;
    let mut out = theta.clone();
    for (o, d) in out.values_mut().iter_mut().zip(dir.values()) {
        *o -= step * d;
    }
    Ok(out)
}

/// The sampled target `ω_k` for the direct-gradient update.
pub fn dgbrl_target<R: Rng + ?Sized>(
    theta: &QTable,
    bel: &BeliefState,
    mode: BoundMode,
    discount: f64,
    tol: f64,
    warm_start: Option<QTable>,
    rng: &mut R,
) -> Result<QTable> {
    let mdp = bel.sample_mdp(discount, rng)?;
    let init = warm_start.unwrap_or_else(|| QTable::for_mdp(&mdp));
    match mode {
        BoundMode::Upper => value_iteration_from(&mdp, init, tol),
        BoundMode::Lower => {
            let pol = greedy_policy(theta, rng);
            policy_evaluation_from(&mdp, &pol, init, tol)
        }
    }
}

/// One direct-gradient step over the complete state-action space.
#[allow(clippy::too_many_arguments)]
pub fn dgbrl_update<R: Rng + ?Sized>(
    theta: &QTable,
    bel: &BeliefState,
    mode: BoundMode,
    step: f64,
    discount: f64,
    tol: f64,
    rng: &mut R,
) -> Result<QTable> {
    check_step(step)?;
    theta.check_shape(bel.n_states(), bel.n_actions())?;
    let omega = dgbrl_target(theta, bel, mode, discount, tol, None, rng)?;
    dgbrl_step(theta, &omega, step)
}

/// One sampled TD error `h = v(s) - r - γ v(s')`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TdSample {
    pub s: usize,
    pub s_next: usize,
    pub reward: f64,
    pub error: f64,
}

/// Gradient of `h²` for a tabular state-value table (`|S| x 1`).
pub fn td_direction(
    values: &QTable,
    s: usize,
    s_next: usize,
    reward: f64,
    discount: f64,
) -> QTable {
    let h = values.get(s, 0) - reward - discount * values.get(s_next, 0);
    let mut dir = QTable::zeros(values.n_states(), 1);
    dir.add(s, 0, 2.0 * h);
    dir.add(s_next, 0, -2.0 * discount * h);
    dir
}

/// TD-gradient step in place. `a_k` is the action drawn from the behaviour
/// policy at `s_k`; the successor is drawn from a sampled model.
#[allow(clippy::too_many_arguments)]
pub fn td_gradient_step<R: Rng + ?Sized>(
    values: &mut QTable,
    bel: &BeliefState,
    s_k: usize,
    a_k: usize,
    step: f64,
    discount: f64,
    scratch: &mut Vec<f64>,
    rng: &mut R,
) -> Result<TdSample> {
    check_step(step)?;
    check_index("state", s_k, bel.n_states())?;
    check_index("action", a_k, bel.n_actions())?;
    values.check_shape(bel.n_states(), 1)?;
    let (s_next, reward) = bel.sample_outcome(s_k, a_k, rng, scratch);
    let h = values.get(s_k, 0) - reward - discount * values.get(s_next, 0);
    values.add(s_k, 0, -2.0 * step * h);
    values.add(s_next, 0, 2.0 * step * discount * h);
    Ok(TdSample {
        s: s_k,
        s_next,
        reward,
        error: h,
    })
}

/// Functional form of [`td_gradient_step`].
pub fn td_gradient_update<R: Rng + ?Sized>(
    values: &QTable,
    bel: &BeliefState,
    s_k: usize,
    a_k: usize,
    step: f64,
    discount: f64,
    rng: &mut R,
) -> Result<QTable> {
    let mut out = values.clone();
    td_gradient_step(
        &mut out,
        bel,
        s_k,
        a_k,
        step,
        discount,
        &mut Vec::new(),
        rng,
    )?;
    Ok(out)
}

/// One sampled Bellman error `h = θ(s, a) - r - γ θ(s', a*)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BellmanSample {
    pub s: usize,
    pub a: usize,
    pub s_next: usize,
    pub a_star: usize,
    pub reward: f64,
    pub error: f64,
}

/// Gradient of `h²` with the maximising action `a*` held fixed.
pub fn bellman_direction(
    theta: &QTable,
    s: usize,
    a: usize,
    reward: f64,
    s_next: usize,
    a_star: usize,
    discount: f64,
) -> QTable {
    let h = theta.get(s, a) - reward - discount * theta.get(s_next, a_star);
    let mut dir = QTable::zeros(theta.n_states(), theta.n_actions());
    dir.add(s, a, 2.0 * h);
    dir.add(s_next, a_star, -2.0 * discount * h);
    dir
}

/// Bellman-gradient step in place at `(s_k, a_k)`.
#[allow(clippy::too_many_arguments)]
pub fn bgbrl_step<R: Rng + ?Sized>(
    theta: &mut QTable,
    bel: &BeliefState,
    s_k: usize,
    a_k: usize,
    step: f64,
    discount: f64,
    scratch: &mut Vec<f64>,
    rng: &mut R,
) -> Result<BellmanSample> {
    check_step(step)?;
    check_index("state", s_k, bel.n_states())?;
    check_index("action", a_k, bel.n_actions())?;
    theta.check_shape(bel.n_states(), bel.n_actions())?;
    let (s_next, reward) = bel.sample_outcome(s_k, a_k, rng, scratch);
    let a_star = greedy_action(theta.row(s_next), rng);
    let h = theta.get(s_k, a_k) - reward - discount * theta.get(s_next, a_star);
    theta.add(s_k, a_k, -2.0 * step * h);
    theta.add(s_next, a_star, 2.0 * step * discount * h);
    Ok(BellmanSample {
        s: s_k,
        a: a_k,
        s_next,
        a_star,
        reward,
        error: h,
    })
}

/// Functional form of [`bgbrl_step`].
pub fn bgbrl_update<R: Rng + ?Sized>(
    theta: &QTable,
    bel: &BeliefState,
    s_k: usize,
    a_k: usize,
    step: f64,
    discount: f64,
    rng: &mut R,
) -> Result<QTable> {
    let mut out = theta.clone();
    bgbrl_step(
        &mut out,
        bel,
        s_k,
        a_k,
        step,
        discount,
        &mut Vec::new(),
        rng,
    )?;
    Ok(out)
}

/// Direct-gradient agent: one full sweep toward a sampled MDP's value per step.
#[derive(Debug, Clone)]
pub struct DirectGradientAgent {
    belief: BeliefState,
    theta: QTable,
    omega: Option<QTable>,
    mode: BoundMode,
    steps: StepSizeSchedule,
    discount: f64,
    tol: f64,
    t: u64,
}

impl DirectGradientAgent {
    pub fn new(
        belief: BeliefState,
        mode: BoundMode,
        steps: StepSizeSchedule,
        initial_value: f64,
        discount: f64,
        tol: f64,
    ) -> Self {
        let theta = QTable::filled(belief.n_states(), belief.n_actions(), initial_value);
        DirectGradientAgent {
            belief,
            theta,
            omega: None,
            mode,
            steps,
            discount,
            tol,
            t: 0,
        }
    }

    pub fn theta(&self) -> &QTable {
        &self.theta
    }

    /// The most recent sampled target.
    pub fn last_target(&self) -> Option<&QTable> {
        self.omega.as_ref()
    }
}

impl Agent for DirectGradientAgent {
    fn name(&self) -> &'static str {
        "dgbrl"
    }

    fn act(&mut self, s: usize, rng: &mut dyn RngCore) -> Result<usize> {
        check_index("state", s, self.theta.n_states())?;
        Ok(greedy_action(self.theta.row(s), rng))
    }

    fn observe(&mut self, t: &Transition, rng: &mut dyn RngCore) -> Result<()> {
        self.belief.update(t)?;
        // Successive targets are close, so the previous one warm-starts the solver.
        let omega = dgbrl_target(
            &self.theta,
            &self.belief,
            self.mode,
            self.discount,
            self.tol,
            self.omega.take(),
            rng,
        )?;
        self.theta = dgbrl_step(&self.theta, &omega, self.steps.rate(self.t))?;
        self.omega = Some(omega);
        ensure_finite(&self.theta, "dgbrl")?;
        self.t += 1;
        Ok(())
    }

    fn steps(&self) -> u64 {
        self.t
    }

    fn belief(&self) -> Option<&BeliefState> {
        Some(&self.belief)
    }
}

/// TD-gradient agent on a state-value table; acts by one-step lookahead in
/// the posterior-mean model.
#[derive(Debug, Clone)]
pub struct TdGradientAgent {
    belief: BeliefState,
    values: QTable,
    steps: StepSizeSchedule,
    discount: f64,
    scratch: Vec<f64>,
    lookahead: Vec<f64>,
    clock: StepClock,
    visits: Vec<u64>,
    t: u64,
}

impl TdGradientAgent {
    pub fn new(
        belief: BeliefState,
        steps: StepSizeSchedule,
        initial_value: f64,
        discount: f64,
    ) -> Self {
        let values = QTable::filled(belief.n_states(), 1, initial_value);
        let n_states = belief.n_states();
        let n_actions = belief.n_actions();
        TdGradientAgent {
            belief,
            values,
            steps,
            discount,
            scratch: Vec::new(),
            lookahead: vec![0.0; n_actions],
            clock: StepClock::Global,
            visits: vec![0; n_states],
            t: 0,
        }
    }

    pub fn with_step_clock(mut self, clock: StepClock) -> Self {
        self.clock = clock;
        self
    }

    pub fn values(&self) -> &QTable {
        &self.values
    }
}

impl Agent for TdGradientAgent {
    fn name(&self) -> &'static str {
        "tdgbrl"
    }

    fn act(&mut self, s: usize, rng: &mut dyn RngCore) -> Result<usize> {
        check_index("state", s, self.belief.n_states())?;
        for (a, q) in self.lookahead.iter_mut().enumerate() {
            let counts = self.belief.count_row(s, a);
            let total: f64 = counts.iter().sum();
            let ev: f64 = counts
                .iter()
                .enumerate()
                .map(|(s2, c)| c * self.values.get(s2, 0))
                .sum::<f64>()
                / total;
            *q = self.belief.reward_posterior(s, a).mean() + self.discount * ev;
        }
        Ok(greedy_action(&self.lookahead, rng))
    }

    fn observe(&mut self, t: &Transition, rng: &mut dyn RngCore) -> Result<()> {
        self.belief.update(t)?;
        let k = match self.clock {
            StepClock::Global => self.t,
            StepClock::Entry => self.visits[t.s],
        };
        td_gradient_step(
            &mut self.values,
            &self.belief,
            t.s,
            t.a,
            self.steps.rate(k),
            self.discount,
            &mut self.scratch,
            rng,
        )?;
        ensure_finite(&self.values, "tdgbrl")?;
        self.visits[t.s] += 1;
        self.t += 1;
        Ok(())
    }

    fn steps(&self) -> u64 {
        self.t
    }

    fn belief(&self) -> Option<&BeliefState> {
        Some(&self.belief)
    }
}

/// Bellman-gradient agent: one sampled Bellman-error step at the visited
/// pair per observation, greedy on θ.
#[derive(Debug, Clone)]
pub struct BellmanGradientAgent {
    belief: BeliefState,
    theta: QTable,
    steps: StepSizeSchedule,
    discount: f64,
    scratch: Vec<f64>,
    clock: StepClock,
    visits: Vec<u64>,
    t: u64,
}

impl BellmanGradientAgent {
    pub fn new(
        belief: BeliefState,
        steps: StepSizeSchedule,
        initial_value: f64,
        discount: f64,
    ) -> Self {
        let theta = QTable::filled(belief.n_states(), belief.n_actions(), initial_value);
        let visits = vec![0; belief.n_states() * belief.n_actions()];
        BellmanGradientAgent {
            belief,
            theta,
            steps,
            discount,
            scratch: Vec::new(),
            clock: StepClock::Global,
            visits,
            t: 0,
        }
    }

    pub fn with_step_clock(mut self, clock: StepClock) -> Self {
        self.clock = clock;
        self
    }

    pub fn theta(&self) -> &QTable {
        &self.theta
    }
}

impl Agent for BellmanGradientAgent {
    fn name(&self) -> &'static str {
        "bgbrl"
    }

    fn act(&mut self, s: usize, rng: &mut dyn RngCore) -> Result<usize> {
        check_index("state", s, self.theta.n_states())?;
        Ok(greedy_action(self.theta.row(s), rng))
    }

    fn observe(&mut self, t: &Transition, rng: &mut dyn RngCore) -> Result<()> {
        self.belief.update(t)?;
        let entry = t.s * self.theta.n_actions() + t.a;
        let k = match self.clock {
            StepClock::Global => self.t,
            StepClock::Entry => self.visits[entry],
        };
        bgbrl_step(
            &mut self.theta,
            &self.belief,
            t.s,
            t.a,
            self.steps.rate(k),
            self.discount,
            &mut self.scratch,
            rng,
        )?;
        ensure_finite(&self.theta, "bgbrl")?;
        self.visits[entry] += 1;
        self.t += 1;
        Ok(())
    }

    fn steps(&self) -> u64 {
        self.t
    }

    fn belief(&self) -> Option<&BeliefState> {
        Some(&self.belief)
    }
}
