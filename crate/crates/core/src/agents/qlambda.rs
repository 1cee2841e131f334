use rand::{Rng, RngCore};

use super::{Agent, StepSizeSchedule};
use crate::error::{check_index, Error, Result};
use crate::mdp::{greedy_action, QTable, Transition};

/// Watkins Q(λ) with replacing traces and hyperbolically decaying
/// ε-greedy exploration `ε_t = ε₀ / (1 + t / τ)`.
#[derive(Debug, Clone)]
pub struct QLambdaAgent {
    q: QTable,
    traces: QTable,
    epsilon0: f64,
    epsilon_horizon: f64,
    lambda: f64,
    steps: StepSizeSchedule,
    discount: f64,
    t: u64,
}

impl QLambdaAgent {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        epsilon0: f64,
        epsilon_horizon: f64,
        lambda: f64,
        steps: StepSizeSchedule,
        discount: f64,
    ) -> Result<Self> {
        if !(epsilon0 > 0.0 && epsilon0 <= 1.0) {
            return Err(Error::param(
                "epsilon0",
                format!("must lie in (0, 1], got {epsilon0}"),
            ));
        }
        if !(epsilon_horizon > 0.0 && epsilon_horizon.is_finite()) {
            return Err(Error::param("epsilon_horizon", "must be positive"));
        }
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::param(
                "lambda",
                format!("must lie in [0, 1], got {lambda}"),
            ));
        }
        Ok(QLambdaAgent {
            q: QTable::zeros(n_states, n_actions),
            traces: QTable::zeros(n_states, n_actions),
            epsilon0,
            epsilon_horizon,
            lambda,
            steps,
            discount,
            t: 0,
        })
    }

    pub fn q(&self) -> &QTable {
        &self.q
    }

    pub fn traces(&self) -> &QTable {
        &self.traces
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon0 / (1.0 + self.t as f64 / self.epsilon_horizon)
    }
}

impl Agent for QLambdaAgent {
    fn name(&self) -> &'static str {
        "qlambda"
    }

    fn act(&mut self, s: usize, rng: &mut dyn RngCore) -> Result<usize> {
        check_index("state", s, self.q.n_states())?;
        let explore = rng.random::<f64>() < self.epsilon();
        if !explore {
            return Ok(greedy_action(self.q.row(s), rng));
        }
        let a = rng.random_range(0..self.q.n_actions());
        if self.q.get(s, a) < self.q.row_max(s) {
            // Non-greedy action: the return no longer follows the greedy policy.
            self.traces.values_mut().fill(0.0);
        }
        Ok(a)
    }

    fn observe(&mut self, t: &Transition, _rng: &mut dyn RngCore) -> Result<()> {
        check_index("state", t.s, self.q.n_states())?;
        check_index("action", t.a, self.q.n_actions())?;
        check_index("next state", t.s_next, self.q.n_states())?;
        let decay = self.discount * self.lambda;
        self.traces
            .values_mut()
            .iter_mut()
            .for_each(|e| *e *= decay);
        for a in 0..self.q.n_actions() {
            self.traces.set(t.s, a, 0.0);
        }
        self.traces.set(t.s, t.a, 1.0);

        let td = t.r + self.discount * self.q.row_max(t.s_next) - self.q.get(t.s, t.a);
        let alpha = self.steps.rate(self.t);
        for (q, e) in self.q.values_mut().iter_mut().zip(self.traces.values()) {
            if *e != 0.0 {
                *q += alpha * td * e;
            }
        }
        self.t += 1;
        Ok(())
    }

    fn steps(&self) -> u64 {
        self.t
    }
}
