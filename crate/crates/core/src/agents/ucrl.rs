//! Discounted UCRL: optimistic planning by extended value iteration over
//! L1 confidence sets on transition rows plus a reward bonus.

use rand::RngCore;

use super::{Agent, SwitchSchedule};
use crate::error::{check_index, Error, Result};
use crate::mdp::{greedy_action, QTable, Transition};

// Guards against floating-point stalls, as in the exact solvers.
const MAX_SWEEPS: usize = 1_000_000;

/// Empirical statistics gathered by UCRL.
#[derive(Debug, Clone, PartialEq)]
pub struct UcrlCounts {
    n_states: usize,
    n_actions: usize,
    visits: Vec<u64>,
    next: Vec<u64>,
    reward_sum: Vec<f64>,
    total: u64,
}

impl UcrlCounts {
    pub fn new(n_states: usize, n_actions: usize) -> Self {
        UcrlCounts {
            n_states,
            n_actions,
            visits: vec![0; n_states * n_actions],
            next: vec![0; n_states * n_actions * n_states],
            reward_sum: vec![0.0; n_states * n_actions],
            total: 0,
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn visits(&self, s: usize, a: usize) -> u64 {
        self.visits[s * self.n_actions + a]
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn record(&mut self, t: &Transition) -> Result<()> {
        check_index("state", t.s, self.n_states)?;
        check_index("action", t.a, self.n_actions)?;
        check_index("next state", t.s_next, self.n_states)?;
        let pair = t.s * self.n_actions + t.a;
        self.visits[pair] += 1;
        self.next[pair * self.n_states + t.s_next] += 1;
        self.reward_sum[pair] += t.r;
        self.total += 1;
        Ok(())
    }

    /// Adds `n` copies of one transition.
    pub fn record_many(&mut self, t: &Transition, n: u64) -> Result<()> {
        check_index("state", t.s, self.n_states)?;
        check_index("action", t.a, self.n_actions)?;
        check_index("next state", t.s_next, self.n_states)?;
        let pair = t.s * self.n_actions + t.a;
        self.visits[pair] += n;
        self.next[pair * self.n_states + t.s_next] += n;
        self.reward_sum[pair] += t.r * n as f64;
        self.total += n;
        Ok(())
    }

    /// Empirical next-state distribution; uniform for unvisited pairs.
    pub fn empirical_row(&self, s: usize, a: usize, out: &mut [f64]) {
        let pair = s * self.n_actions + a;
        let n = self.visits[pair];
        let row = &self.next[pair * self.n_states..(pair + 1) * self.n_states];
        if n == 0 {
            out.fill(1.0 / self.n_states as f64);
        } else {
            for (o, &c) in out.iter_mut().zip(row) {
                *o = c as f64 / n as f64;
            }
        }
    }

    /// Empirical mean reward; zero for unvisited pairs.
    pub fn empirical_reward(&self, s: usize, a: usize) -> f64 {
        let pair = s * self.n_actions + a;
        match self.visits[pair] {
            0 => 0.0,
            n => self.reward_sum[pair] / n as f64,
        }
    }
}

/// Confidence radii for one pair at time `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceRadii {
    pub transition_l1: f64,
    pub reward_bonus: f64,
}

pub fn confidence_radii(
    n_states: usize,
    n_actions: usize,
    visits: u64,
    t: u64,
    delta: f64,
) -> ConfidenceRadii {
    let n = visits.max(1) as f64;
    let sa_t = (n_states * n_actions) as f64 * t.max(1) as f64;
    let log_p = n_states as f64 * std::f64::consts::LN_2 + (sa_t / delta).ln();
    let log_r = (2.0 * sa_t / delta).ln();
    ConfidenceRadii {
        transition_l1: (2.0 * log_p / n).sqrt(),
        reward_bonus: (log_r / (2.0 * n)).sqrt(),
    }
}

/// Maximises `p · values` over `{p in simplex : ‖p - p_hat‖₁ <= radius}`.
///
/// `order` lists state indices by decreasing value. Mass `radius / 2` is
/// moved onto the best state and removed from the worst ones.
pub fn max_over_l1_ball(
    p_hat: &[f64],
    radius: f64,
    values: &[f64],
    order: &[usize],
    out: &mut [f64],
) -> f64 {
    out.copy_from_slice(p_hat);
    let best = order[0];
    out[best] = (p_hat[best] + radius / 2.0).min(1.0);
    let mut excess: f64 = out.iter().sum::<f64>() - 1.0;
    for &j in order.iter().rev() {
        if excess <= 0.0 {
            break;
        }
        if j == best {
            continue;
        }
        let cut = out[j].min(excess);
        out[j] -= cut;
        excess -= cut;
    }
    out.iter().zip(values).map(|(p, v)| p * v).sum()
}

/// Optimistic Q-values by discounted extended value iteration.
pub fn ucrl_plan(counts: &UcrlCounts, delta: f64, discount: f64, tol: f64) -> Result<QTable> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::param(
            "delta",
            format!("must lie in (0, 1), got {delta}"),
        ));
    }
    if !(0.0..1.0).contains(&discount) {
        return Err(Error::param(
            "discount",
            format!("must lie in [0, 1), got {discount}"),
        ));
    }
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::param("tol", format!("must be positive, got {tol}")));
    }
    let (n_s, n_a) = (counts.n_states, counts.n_actions);
    let pairs = n_s * n_a;
    let mut p_hat = vec![0.0; pairs * n_s];
    let mut reward = vec![0.0; pairs];
    let mut radius = vec![0.0; pairs];
    for s in 0..n_s {
        for a in 0..n_a {
            let pair = s * n_a + a;
            counts.empirical_row(s, a, &mut p_hat[pair * n_s..(pair + 1) * n_s]);
            let rad = confidence_radii(n_s, n_a, counts.visits[pair], counts.total, delta);
            reward[pair] = counts.empirical_reward(s, a) + rad.reward_bonus;
            radius[pair] = rad.transition_l1;
        }
    }

    let threshold = if discount == 0.0 {
        f64::INFINITY
    } else {
        tol * (1.0 - discount) / discount
    };
    let mut q = QTable::zeros(n_s, n_a);
    let mut next = QTable::zeros(n_s, n_a);
    let mut v = vec![0.0; n_s];
    let mut order: Vec<usize> = (0..n_s).collect();
    let mut p_opt = vec![0.0; n_s];
    for _ in 0..MAX_SWEEPS {
        for (s, vs) in v.iter_mut().enumerate() {
            *vs = q.row_max(s);
        }
        order.sort_by(|&i, &j| v[j].total_cmp(&v[i]).then(i.cmp(&j)));
        for pair in 0..pairs {
            let ev = max_over_l1_ball(
                &p_hat[pair * n_s..(pair + 1) * n_s],
                radius[pair],
                &v,
                &order,
                &mut p_opt,
            );
            next.values_mut()[pair] = reward[pair] + discount * ev;
        }
        let change = next.sup_distance(&q);
        std::mem::swap(&mut q, &mut next);
        if change <= threshold {
            break;
        }
    }
    Ok(q)
}

/// UCRL agent acting greedily on its optimistic plan, re-planned on a
/// [`SwitchSchedule`].
#[derive(Debug, Clone)]
pub struct UcrlAgent {
    counts: UcrlCounts,
    delta: f64,
    schedule: SwitchSchedule,
    plan: Option<QTable>,
    discount: f64,
    tol: f64,
}

impl UcrlAgent {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        delta: f64,
        schedule: SwitchSchedule,
        discount: f64,
        tol: f64,
    ) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::param(
                "delta",
                format!("must lie in (0, 1), got {delta}"),
            ));
        }
        Ok(UcrlAgent {
            counts: UcrlCounts::new(n_states, n_actions),
            delta,
            schedule,
            plan: None,
            discount,
            tol,
        })
    }

    pub fn counts(&self) -> &UcrlCounts {
        &self.counts
    }

    pub fn plan(&self) -> Option<&QTable> {
        self.plan.as_ref()
    }
}

impl Agent for UcrlAgent {
    fn name(&self) -> &'static str {
        "ucrl"
    }

    fn act(&mut self, s: usize, rng: &mut dyn RngCore) -> Result<usize> {
        check_index("state", s, self.counts.n_states)?;
        if self.schedule.poll(self.counts.total) || self.plan.is_none() {
            self.plan = Some(ucrl_plan(
                &self.counts,
                self.delta,
                self.discount,
                self.tol,
            )?);
        }
        let plan = self.plan.as_ref().expect("plan computed above");
        Ok(greedy_action(plan.row(s), rng))
    }

    fn observe(&mut self, t: &Transition, _rng: &mut dyn RngCore) -> Result<()> {
        self.counts.record(t)
    }

    fn steps(&self) -> u64 {
        self.counts.total
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radius_two_moves_all_mass() {
        let p_hat = [0.2, 0.5, 0.3];
        let values = [1.0, 3.0, 2.0];
        let order = [1, 2, 0];
        let mut out = [0.0; 3];
        let v = max_over_l1_ball(&p_hat, 2.0, &values, &order, &mut out);
        assert_eq!(out, [0.0, 1.0, 0.0]);
        assert_eq!(v, 3.0);
    }

    #[test]
    fn zero_radius_keeps_estimate() {
        let p_hat = [0.2, 0.5, 0.3];
        let values = [1.0, 3.0, 2.0];
        let mut out = [0.0; 3];
        let v = max_over_l1_ball(&p_hat, 0.0, &values, &[1, 2, 0], &mut out);
        assert_eq!(out, p_hat);
        assert!((v - 2.3).abs() < 1e-12);
    }

    #[test]
    fn partial_shift_takes_from_worst_first() {
        let p_hat = [0.2, 0.5, 0.3];
        let values = [1.0, 3.0, 2.0];
        let mut out = [0.0; 3];
        max_over_l1_ball(&p_hat, 0.6, &values, &[1, 2, 0], &mut out);
        assert!((out[1] - 0.8).abs() < 1e-12);
        assert!(out[0].abs() < 1e-12);
        assert!((out[2] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_delta() {
        let c = UcrlCounts::new(2, 2);
        assert!(ucrl_plan(&c, 0.0, 0.9, 1e-6).is_err());
        assert!(ucrl_plan(&c, 1.0, 0.9, 1e-6).is_err());
    }
}
