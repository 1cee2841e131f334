//! Planners that solve sampled MDPs: the upper-bound estimate (mean of
//! optimal Q over samples), the multi-MDP lower-bound policy, and posterior
//! sampling.

use rand::{Rng, RngCore};

use super::{Agent, SwitchSchedule};
use crate::belief::BeliefState;
use crate::error::{Error, Result};
use crate::mdp::{
    greedy_action, greedy_policy, policy_evaluation_from, value_iteration, FiniteMdp, QTable,
    StationaryPolicy, Transition,
};

fn check_samples(samples: usize) -> Result<()> {
    if samples == 0 {
        Err(Error::param("samples", "at least one sample is required"))
    } else {
        Ok(())
    }
}

/// Draws `samples` MDPs from the belief, in order.
pub fn sample_mdps<R: Rng + ?Sized>(
    bel: &BeliefState,
    samples: usize,
    discount: f64,
    rng: &mut R,
) -> Result<Vec<FiniteMdp>> {
    (0..samples)
        .map(|_| bel.sample_mdp(discount, rng))
        .collect()
}

/// Monte-Carlo upper bound: `(1/ξ) Σ_i Q*_{μ_i}` with `μ_i ~ β`.
pub fn umcbrl_plan<R: Rng + ?Sized>(
    bel: &BeliefState,
    samples: usize,
    discount: f64,
    tol: f64,
    rng: &mut R,
) -> Result<QTable> {
    check_samples(samples)?;
    let mdps = sample_mdps(bel, samples, discount, rng)?;
    umcbrl_plan_from_samples(&mdps, tol)
}

/// Upper-bound estimate on a fixed set of sampled MDPs.
pub fn umcbrl_plan_from_samples(mdps: &[FiniteMdp], tol: f64) -> Result<QTable> {
    let optimal = solve_all(mdps, tol)?;
    QTable::mean_of(&optimal)
}

fn solve_all(mdps: &[FiniteMdp], tol: f64) -> Result<Vec<QTable>> {
    if mdps.is_empty() {
        return Err(Error::EmptyInput("sampled MDPs"));
    }
    mdps.iter().map(|m| value_iteration(m, tol)).collect()
}

/// Result of the multi-MDP policy search.
#[derive(Debug, Clone)]
pub struct LowerBoundPlan {
    pub policy: StationaryPolicy,
    /// Mean over samples of `Q^π_{μ_i}`.
    pub q: QTable,
    /// Mean over samples of `Q*_{μ_i}`, i.e. the upper-bound estimate on the
    /// same samples.
    pub upper: QTable,
    pub iterations: usize,
}

/// Multi-MDP lower bound: samples `ξ` MDPs and runs policy iteration on the
/// sample-mean Q of a single stationary policy.
pub fn mcbrl_plan<R: Rng + ?Sized>(
    bel: &BeliefState,
    samples: usize,
    discount: f64,
    tol: f64,
    max_iterations: usize,
    rng: &mut R,
) -> Result<(StationaryPolicy, QTable)> {
    check_samples(samples)?;
    let mdps = sample_mdps(bel, samples, discount, rng)?;
    let plan = mcbrl_plan_from_samples(&mdps, tol, max_iterations, rng)?;
    Ok((plan.policy, plan.q))
}

/// Policy iteration against the sample-mean Q on fixed samples.
///
/// Each `Q^π_{μ_i}` is evaluated starting from the corresponding
/// `Q*_{μ_i}`, so `plan.q <= plan.upper` holds entrywise in floating point.
pub fn mcbrl_plan_from_samples<R: Rng + ?Sized>(
    mdps: &[FiniteMdp],
    tol: f64,
    max_iterations: usize,
    rng: &mut R,
) -> Result<LowerBoundPlan> {
    let optimal = solve_all(mdps, tol)?;
    let upper = QTable::mean_of(&optimal)?;
    let mut policy = greedy_policy(&upper, rng);
    let mut q = upper.clone();
    let mut iterations = 0;
    while iterations < max_iterations.max(1) {
        iterations += 1;
        let evaluated = mdps
            .iter()
            .zip(&optimal)
            .map(|(m, q_star)| policy_evaluation_from(m, &policy, q_star.clone(), tol))
            .collect::<Result<Vec<_>>>()?;
        q = QTable::mean_of(&evaluated)?;
        let improved = improve(&policy, &q, rng);
        if improved == policy {
            break;
        }
        policy = improved;
    }
    Ok(LowerBoundPlan {
        policy,
        q,
        upper,
        iterations,
    })
}

/// Greedy improvement that keeps the current action whenever it is among
/// the maximisers, so policy iteration cannot cycle on ties.
fn improve<R: Rng + ?Sized>(
    policy: &StationaryPolicy,
    q: &QTable,
    rng: &mut R,
) -> StationaryPolicy {
    let actions: Vec<usize> = (0..q.n_states())
        .map(|s| {
            let row = q.row(s);
            match policy.deterministic_action(s) {
                Some(a) if row[a] == q.row_max(s) => a,
                _ => greedy_action(row, rng),
            }
        })
        .collect();
    StationaryPolicy::deterministic(q.n_actions(), &actions).expect("actions in range")
}

/// Posterior sampling: `Q*` of a single draw from the belief.
pub fn thompson_plan<R: Rng + ?Sized>(
    bel: &BeliefState,
    discount: f64,
    tol: f64,
    rng: &mut R,
) -> Result<QTable> {
    let mdp = bel.sample_mdp(discount, rng)?;
    value_iteration(&mdp, tol)
}

#[derive(Debug, Clone)]
enum Plan {
    Q(QTable),
    Policy(StationaryPolicy),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Planner {
    Upper {
        samples: usize,
    },
    Lower {
        samples: usize,
        max_iterations: usize,
    },
    Thompson,
}

/// An agent that re-plans on a [`SwitchSchedule`] and acts on its cached plan.
#[derive(Debug, Clone)]
pub struct SamplingAgent {
    planner: Planner,
    belief: BeliefState,
    schedule: SwitchSchedule,
    plan: Option<Plan>,
    discount: f64,
    tol: f64,
    t: u64,
}

impl SamplingAgent {
    fn new(
        planner: Planner,
        belief: BeliefState,
        schedule: SwitchSchedule,
        discount: f64,
        tol: f64,
    ) -> Self {
        SamplingAgent {
            planner,
            belief,
            schedule,
            plan: None,
            discount,
            tol,
            t: 0,
        }
    }

    pub fn upper(
        belief: BeliefState,
        samples: usize,
        schedule: SwitchSchedule,
        discount: f64,
        tol: f64,
    ) -> Result<Self> {
        check_samples(samples)?;
        Ok(Self::new(
            Planner::Upper { samples },
            belief,
            schedule,
            discount,
            tol,
        ))
    }

    pub fn lower(
        belief: BeliefState,
        samples: usize,
        max_iterations: usize,
        schedule: SwitchSchedule,
        discount: f64,
        tol: f64,
    ) -> Result<Self> {
        check_samples(samples)?;
        Ok(Self::new(
            Planner::Lower {
                samples,
                max_iterations,
            },
            belief,
            schedule,
            discount,
            tol,
        ))
    }

    pub fn thompson(
        belief: BeliefState,
        schedule: SwitchSchedule,
        discount: f64,
        tol: f64,
    ) -> Self {
        Self::new(Planner::Thompson, belief, schedule, discount, tol)
    }

    pub fn belief(&self) -> &BeliefState {
        &self.belief
    }

    pub fn schedule(&self) -> &SwitchSchedule {
        &self.schedule
    }

    /// The cached Q-values, if the planner produces them.
    pub fn cached_q(&self) -> Option<&QTable> {
        match &self.plan {
            Some(Plan::Q(q)) => Some(q),
            _ => None,
        }
    }

    fn replan(&mut self, rng: &mut dyn RngCore) -> Result<()> {
        let plan = match self.planner {
            Planner::Upper { samples } => Plan::Q(umcbrl_plan(
                &self.belief,
                samples,
                self.discount,
                self.tol,
                rng,
            )?),
            Planner::Lower {
                samples,
                max_iterations,
            } => Plan::Policy(
                mcbrl_plan(
                    &self.belief,
                    samples,
                    self.discount,
                    self.tol,
                    max_iterations,
                    rng,
                )?
                .0,
            ),
            Planner::Thompson => {
                Plan::Q(thompson_plan(&self.belief, self.discount, self.tol, rng)?)
            }
        };
        self.plan = Some(plan);
        Ok(())
    }
}

impl Agent for SamplingAgent {
    fn name(&self) -> &'static str {
        match self.planner {
            Planner::Upper { .. } => "umcbrl",
            Planner::Lower { .. } => "mcbrl",
            Planner::Thompson => "thompson",
        }
    }

    fn act(&mut self, s: usize, rng: &mut dyn RngCore) -> Result<usize> {
        self.belief_state_check(s)?;
        if self.schedule.poll(self.t) || self.plan.is_none() {
            self.replan(rng)?;
        }
        Ok(match self.plan.as_ref().expect("plan computed above") {
            Plan::Q(q) => greedy_action(q.row(s), rng),
            Plan::Policy(p) => p.sample_action(s, rng),
        })
    }

    fn observe(&mut self, t: &Transition, _rng: &mut dyn RngCore) -> Result<()> {
        self.belief.update(t)?;
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

impl SamplingAgent {
    fn belief_state_check(&self, s: usize) -> Result<()> {
        crate::error::check_index("state", s, self.belief.n_states())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::PriorConfig;
    use crate::mdp::policy_evaluation;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn concentrated_belief(mdp: &FiniteMdp) -> BeliefState {
        let mut bel =
            BeliefState::new(mdp.n_states(), mdp.n_actions(), &PriorConfig::default()).unwrap();
        for s in 0..mdp.n_states() {
            for a in 0..mdp.n_actions() {
                let row: Vec<f64> = mdp
                    .transition_row(s, a)
                    .iter()
                    .map(|p| p * 1e12 + 1e-12)
                    .collect();
                bel.set_count_row(s, a, &row).unwrap();
                let ng =
                    crate::belief::NormalGamma::new(mdp.reward(s, a), 1e12, 1e6, 1e-6).unwrap();
                bel.set_reward_posterior(s, a, ng).unwrap();
            }
        }
        bel
    }

    fn two_state() -> FiniteMdp {
        FiniteMdp::new(
            2,
            2,
            vec![0.9, 0.1, 0.2, 0.8, 0.5, 0.5, 0.0, 1.0],
            vec![0.0, 0.1, 1.0, 0.3],
            0.9,
        )
        .unwrap()
    }

    #[test]
    fn single_sample_is_thompson() {
        let bel = BeliefState::new(3, 2, &PriorConfig::default()).unwrap();
        let u = umcbrl_plan(&bel, 1, 0.95, 1e-6, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let t = thompson_plan(&bel, 0.95, 1e-6, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(u, t);
    }

    #[test]
    fn degenerate_belief_recovers_the_mdp() {
        let mdp = two_state();
        let bel = concentrated_belief(&mdp);
        let exact = value_iteration(&mdp, 1e-6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u = umcbrl_plan(&bel, 8, 0.9, 1e-6, &mut rng).unwrap();
        assert!(u.sup_distance(&exact) < 1e-4, "{}", u.sup_distance(&exact));
        let (pol, _) = mcbrl_plan(&bel, 8, 0.9, 1e-6, 50, &mut rng).unwrap();
        let best = greedy_policy(&exact, &mut rng);
        assert_eq!(pol, best);
    }

    #[test]
    fn upper_dominates_lower_on_shared_samples() {
        let bel = BeliefState::new(4, 3, &PriorConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mdps = sample_mdps(&bel, 16, 0.9, &mut rng).unwrap();
        let upper = umcbrl_plan_from_samples(&mdps, 1e-6).unwrap();
        let lower = mcbrl_plan_from_samples(&mdps, 1e-6, 50, &mut rng).unwrap();
        assert_eq!(upper, lower.upper);
        for (u, l) in upper.values().iter().zip(lower.q.values()) {
            assert!(u >= l);
        }
    }

    #[test]
    fn upper_dominates_fixed_policy_values() {
        // Any fixed policy averaged over the same samples lies below the
        // upper bound.
        let bel = BeliefState::new(2, 2, &PriorConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mdps = sample_mdps(&bel, 1000, 0.9, &mut rng).unwrap();
        let upper = umcbrl_plan_from_samples(&mdps, 1e-6).unwrap();
        for actions in [[0, 0], [0, 1], [1, 0], [1, 1]] {
            let pol = StationaryPolicy::deterministic(2, &actions).unwrap();
            let qs: Vec<QTable> = mdps
                .iter()
                .map(|m| policy_evaluation(m, &pol, 1e-6).unwrap())
                .collect();
            let mean = QTable::mean_of(&qs).unwrap();
            for (u, p) in upper.values().iter().zip(mean.values()) {
                assert!(u + 2e-6 >= *p);
            }
        }
    }

    #[test]
    fn zero_samples_rejected() {
        let bel = BeliefState::new(2, 2, &PriorConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(umcbrl_plan(&bel, 0, 0.9, 1e-6, &mut rng).is_err());
        assert!(mcbrl_plan(&bel, 0, 0.9, 1e-6, 50, &mut rng).is_err());
    }

    #[test]
    fn agent_replans_on_schedule() {
        let bel = BeliefState::new(2, 2, &PriorConfig::default()).unwrap();
        let sched = SwitchSchedule::new(2, 1).unwrap();
        let mut agent = SamplingAgent::upper(bel, 2, sched, 0.9, 1e-6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut plans = Vec::new();
        for step in 0..6 {
            let a = agent.act(0, &mut rng).unwrap();
            plans.push(agent.cached_q().unwrap().clone());
            agent
                .observe(
                    &Transition {
                        s: 0,
                        a,
                        r: 1.0,
                        s_next: step % 2,
                    },
                    &mut rng,
                )
                .unwrap();
        }
        // Switches at t = 0, 2, 5.
        assert_eq!(plans[0], plans[1]);
        assert_ne!(plans[1], plans[2]);
        assert_eq!(plans[2], plans[3]);
        assert_eq!(plans[3], plans[4]);
        assert_ne!(plans[4], plans[5]);
    }

    #[test]
    fn cached_row_drives_action() {
        let bel = BeliefState::new(1, 2, &PriorConfig::default()).unwrap();
        let sched = SwitchSchedule::new(100, 1).unwrap();
        let mut agent = SamplingAgent::thompson(bel, sched, 0.9, 1e-6);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = agent.act(0, &mut rng).unwrap();
        let q = agent.cached_q().unwrap().clone();
        assert_eq!(a, if q.get(0, 1) > q.get(0, 0) { 1 } else { 0 });
    }
}
