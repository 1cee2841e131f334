//! Benchmark environments.
//!
//! Chain, Double-Loop and RiverSwim are exact finite MDPs. Mountain Car runs
//! continuous dynamics; agents see the index of a uniform grid cell, so the
//! process they observe is not Markov in the cell index.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_index, Error, Result};
use crate::mdp::{sample_categorical, FiniteMdp, ROW_SUM_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DomainKind {
    #[serde(rename = "chain")]
    Chain,
    #[serde(rename = "doubleloop")]
    DoubleLoop,
    #[serde(rename = "riverswim")]
    RiverSwim,
    #[serde(rename = "mountaincar5x5")]
    MountainCar5x5,
}

impl DomainKind {
    pub const ALL: [DomainKind; 4] = [
        DomainKind::Chain,
        DomainKind::DoubleLoop,
        DomainKind::RiverSwim,
        DomainKind::MountainCar5x5,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DomainKind::Chain => "chain",
            DomainKind::DoubleLoop => "doubleloop",
            DomainKind::RiverSwim => "riverswim",
            DomainKind::MountainCar5x5 => "mountaincar5x5",
        }
    }
}

impl fmt::Display for DomainKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DomainKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DomainKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownName {
                kind: "domain",
                name: s.to_string(),
            })
    }
}

/// Chain: `forward` advances one state (paying `large_reward` when already
/// at the end), `return` goes back to the start paying `small_reward`.
/// Every action performs the other one with probability `slip`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainParams {
    pub n_states: usize,
    pub slip: f64,
    pub small_reward: f64,
    pub large_reward: f64,
}

impl Default for ChainParams {
    fn default() -> Self {
        ChainParams {
            n_states: 5,
            slip: 0.2,
            small_reward: 2.0,
            large_reward: 10.0,
        }
    }
}

/// RiverSwim: `left` drifts deterministically toward state 0; `right`
/// swims upstream with the given outcome probabilities. Blocked moves at
/// either end stay in place.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RiverSwimParams {
    pub n_states: usize,
    pub p_forward: f64,
    pub p_stay: f64,
    pub p_back: f64,
    pub left_reward: f64,
    pub right_reward: f64,
}

impl Default for RiverSwimParams {
    fn default() -> Self {
        RiverSwimParams {
            n_states: 6,
            p_forward: 0.3,
            p_stay: 0.6,
            p_back: 0.1,
            left_reward: 5.0 / 10_000.0,
            right_reward: 1.0,
        }
    }
}

/// Double-Loop: two deterministic loops of `loop_len` states sharing state 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DoubleLoopParams {
    pub loop_len: usize,
    pub right_reward: f64,
    pub left_reward: f64,
}

impl Default for DoubleLoopParams {
    fn default() -> Self {
        DoubleLoopParams {
            loop_len: 5,
            right_reward: 1.0,
            left_reward: 2.0,
        }
    }
}

/// Per-domain parameter overrides.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DomainParams {
    pub chain: ChainParams,
    pub riverswim: RiverSwimParams,
    pub doubleloop: DoubleLoopParams,
    pub mountaincar: GridDiscretizer,
}

/// Uniform grid over (position, velocity).
///
/// Points on an interior cell boundary belong to the lower cell;
/// out-of-range points are clamped to the border cells. The cell index is
/// `velocity_bin * position_bins + position_bin`, so position is the column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridDiscretizer {
    pub position: (f64, f64),
    pub velocity: (f64, f64),
    pub position_bins: usize,
    pub velocity_bins: usize,
}

impl Default for GridDiscretizer {
    fn default() -> Self {
        GridDiscretizer {
            position: (MountainCar::MIN_POSITION, MountainCar::MAX_POSITION),
            velocity: (-MountainCar::MAX_SPEED, MountainCar::MAX_SPEED),
            position_bins: 5,
            velocity_bins: 5,
        }
    }
}

fn bin(x: f64, (lo, hi): (f64, f64), bins: usize) -> usize {
    let width = (hi - lo) / bins as f64;
    let raw = ((x - lo) / width).ceil() - 1.0;
    if raw.is_nan() || raw < 0.0 {
        0
    } else {
        (raw as usize).min(bins - 1)
    }
}

impl GridDiscretizer {
    pub fn validate(&self) -> Result<()> {
        if self.position_bins == 0 || self.velocity_bins == 0 {
            return Err(Error::param("bins", "must be positive"));
        }
        let ok = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo < hi;
        if !ok(self.position) || !ok(self.velocity) {
            return Err(Error::param("bounds", "need finite lower < upper"));
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.position_bins * self.velocity_bins
    }

    pub fn position_bin(&self, x: f64) -> usize {
        bin(x, self.position, self.position_bins)
    }

    pub fn velocity_bin(&self, v: f64) -> usize {
        bin(v, self.velocity, self.velocity_bins)
    }

    pub fn cell(&self, x: f64, v: f64) -> usize {
        self.velocity_bin(v) * self.position_bins + self.position_bin(x)
    }
}

/// Mountain Car dynamics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MountainCar {
    pub grid: GridDiscretizer,
}

impl MountainCar {
    pub const MIN_POSITION: f64 = -1.2;
    pub const MAX_POSITION: f64 = 0.6;
    pub const MAX_SPEED: f64 = 0.07;
    pub const GOAL: f64 = 0.5;
    pub const N_ACTIONS: usize = 3;

    /// One physics step; `action` in `{0, 1, 2}` applies thrust `-1, 0, +1`.
    pub fn dynamics(x: f64, v: f64, action: usize) -> (f64, f64) {
        let thrust = action as f64 - 1.0;
        let mut v_next = v + 0.001 * thrust - 0.0025 * (3.0 * x).cos();
        v_next = v_next.clamp(-Self::MAX_SPEED, Self::MAX_SPEED);
        let mut x_next = x + v_next;
        if x_next <= Self::MIN_POSITION {
            x_next = Self::MIN_POSITION;
            v_next = 0.0;
        }
        x_next = x_next.min(Self::MAX_POSITION);
        (x_next, v_next)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Dynamics {
    Tabular(FiniteMdp),
    MountainCar(MountainCar),
}

/// A benchmark: its dynamics, agent-facing dimensions and start distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainSpec {
    name: String,
    dynamics: Dynamics,
    n_states: usize,
    n_actions: usize,
    /// Start distribution over tabular states (unused for Mountain Car,
    /// whose start is continuous).
    initial: Vec<f64>,
}

impl DomainSpec {
    pub fn tabular(name: impl Into<String>, mdp: FiniteMdp, initial: Vec<f64>) -> Result<Self> {
        if initial.len() != mdp.n_states() {
            return Err(Error::ShapeMismatch {
                expected: format!("initial distribution over {} states", mdp.n_states()),
                got: format!("{} entries", initial.len()),
            });
        }
        let sum: f64 = initial.iter().sum();
        if initial.iter().any(|p| !(p.is_finite() && *p >= 0.0)) || (sum - 1.0).abs() > ROW_SUM_TOL
        {
            return Err(Error::param("initial", "must be a probability vector"));
        }
        Ok(DomainSpec {
            name: name.into(),
            n_states: mdp.n_states(),
            n_actions: mdp.n_actions(),
            dynamics: Dynamics::Tabular(mdp),
            initial,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn dynamics(&self) -> &Dynamics {
        &self.dynamics
    }

    /// Start distribution of tabular domains; empty for Mountain Car,
    /// whose start state is continuous.
    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    /// The exact MDP for tabular domains.
    pub fn mdp(&self) -> Option<&FiniteMdp> {
        match &self.dynamics {
            Dynamics::Tabular(m) => Some(m),
            Dynamics::MountainCar(_) => None,
        }
    }

    /// Re-discounts the ground-truth MDP. Continuous domains are unaffected.
    pub fn with_discount(mut self, discount: f64) -> Result<Self> {
        if let Dynamics::Tabular(m) = self.dynamics {
            self.dynamics = Dynamics::Tabular(m.with_discount(discount)?);
        }
        Ok(self)
    }

    /// A fresh simulator, with its start state drawn from `rng`.
    pub fn start<R: Rng + ?Sized>(&self, rng: &mut R) -> Simulator<'_> {
        match &self.dynamics {
            Dynamics::Tabular(mdp) => Simulator::Tabular {
                mdp,
                state: sample_categorical(&self.initial, rng),
            },
            Dynamics::MountainCar(car) => Simulator::MountainCar {
                car,
                x: rng.random_range(-0.6..-0.4),
                v: 0.0,
                at_goal: false,
            },
        }
    }
}

/// Per-run simulation state.
#[derive(Debug, Clone)]
pub enum Simulator<'a> {
    Tabular {
        mdp: &'a FiniteMdp,
        state: usize,
    },
    MountainCar {
        car: &'a MountainCar,
        x: f64,
        v: f64,
        at_goal: bool,
    },
}

impl Simulator<'_> {
    /// The agent-facing state.
    pub fn state(&self) -> usize {
        match self {
            Simulator::Tabular { state, .. } => *state,
            Simulator::MountainCar { car, x, v, .. } => car.grid.cell(*x, *v),
        }
    }

    /// Applies `action`; returns `(reward, next agent-facing state)`.
    pub fn step<R: Rng + ?Sized>(&mut self, action: usize, rng: &mut R) -> Result<(f64, usize)> {
        match self {
            Simulator::Tabular { mdp, state } => {
                let t = mdp.step(*state, action, rng)?;
                *state = t.s_next;
                Ok((t.r, t.s_next))
            }
            Simulator::MountainCar { car, x, v, at_goal } => {
                check_index("action", action, MountainCar::N_ACTIONS)?;
                if *at_goal {
                    return Ok((0.0, car.grid.cell(*x, *v)));
                }
                let (x_next, v_next) = MountainCar::dynamics(*x, *v, action);
                *x = x_next;
                *v = v_next;
                let reward = if x_next >= MountainCar::GOAL {
                    *at_goal = true;
                    0.0
                } else {
                    -1.0
                };
                Ok((reward, car.grid.cell(x_next, v_next)))
            }
        }
    }
}

fn point_mass(n: usize, at: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[at] = 1.0;
    v
}

pub const DEFAULT_DISCOUNT: f64 = 0.99;

pub fn make_chain(p: &ChainParams) -> Result<DomainSpec> {
    let n = p.n_states;
    if n < 2 {
        return Err(Error::param("chain.n_states", "need at least 2 states"));
    }
    if !(0.0..=1.0).contains(&p.slip) {
        return Err(Error::param("chain.slip", "must be a probability"));
    }
    const FORWARD: usize = 0;
    const RETURN: usize = 1;
    let mut transition = vec![0.0; n * 2 * n];
    let mut outcome = vec![0.0; n * 2 * n];
    for s in 0..n {
        let ahead = (s + 1).min(n - 1);
        for a in [FORWARD, RETURN] {
            let row = &mut transition[(s * 2 + a) * n..(s * 2 + a + 1) * n];
            let p_forward = if a == FORWARD { 1.0 - p.slip } else { p.slip };
            row[ahead] += p_forward;
            row[0] += 1.0 - p_forward;
            let rew = &mut outcome[(s * 2 + a) * n..(s * 2 + a + 1) * n];
            rew[0] = p.small_reward;
            if s == n - 1 {
                rew[n - 1] = p.large_reward;
            }
        }
    }
    let mdp = FiniteMdp::new(n, 2, transition, vec![0.0; n * 2], DEFAULT_DISCOUNT)?
        .with_outcome_rewards(outcome)?;
    DomainSpec::tabular("chain", mdp, point_mass(n, 0))
}

pub fn make_double_loop(p: &DoubleLoopParams) -> Result<DomainSpec> {
    let len = p.loop_len;
    if len < 2 {
        return Err(Error::param("doubleloop.loop_len", "need at least 2"));
    }
    // State 0 is shared; right loop 1..len, left loop len..2len-1.
    let n = 2 * len - 1;
    let right = |k: usize| k; // k in 1..len
    let left = |k: usize| len - 1 + k; // k in 1..len
    let mut next = vec![[0usize; 2]; n];
    let mut reward = vec![[0.0f64; 2]; n];
    next[0] = [right(1), left(1)];
    for k in 1..len {
        let following = if k + 1 < len { right(k + 1) } else { 0 };
        next[right(k)] = [following, following];
        if k + 1 == len {
            reward[right(k)] = [p.right_reward, p.right_reward];
        }
        let following = if k + 1 < len { left(k + 1) } else { 0 };
        next[left(k)] = [0, following];
        if k + 1 == len {
            reward[left(k)][1] = p.left_reward;
        }
    }
    let mut transition = vec![0.0; n * 2 * n];
    let mut reward_mean = vec![0.0; n * 2];
    for s in 0..n {
        for a in 0..2 {
            transition[(s * 2 + a) * n + next[s][a]] = 1.0;
            reward_mean[s * 2 + a] = reward[s][a];
        }
    }
    let mdp = FiniteMdp::new(n, 2, transition, reward_mean, DEFAULT_DISCOUNT)?;
    DomainSpec::tabular("doubleloop", mdp, point_mass(n, 0))
}

pub fn make_river_swim(p: &RiverSwimParams) -> Result<DomainSpec> {
    let n = p.n_states;
    if n < 2 {
        return Err(Error::param("riverswim.n_states", "need at least 2 states"));
    }
    let probs = [p.p_forward, p.p_stay, p.p_back];
    if probs.iter().any(|x| !(0.0..=1.0).contains(x))
        || (probs.iter().sum::<f64>() - 1.0).abs() > ROW_SUM_TOL
    {
        return Err(Error::param(
            "riverswim",
            "outcome probabilities must sum to 1",
        ));
    }
    const LEFT: usize = 0;
    const RIGHT: usize = 1;
    let mut transition = vec![0.0; n * 2 * n];
    let mut reward_mean = vec![0.0; n * 2];
    for s in 0..n {
        let left_row = &mut transition[(s * 2 + LEFT) * n..(s * 2 + LEFT + 1) * n];
        left_row[s.saturating_sub(1)] = 1.0;
        let right_row = &mut transition[(s * 2 + RIGHT) * n..(s * 2 + RIGHT + 1) * n];
        right_row[(s + 1).min(n - 1)] += p.p_forward;
        right_row[s] += p.p_stay;
        right_row[s.saturating_sub(1)] += p.p_back;
    }
    reward_mean[LEFT] = p.left_reward;
    reward_mean[(n - 1) * 2 + RIGHT] = p.right_reward;
    let mdp = FiniteMdp::new(n, 2, transition, reward_mean, DEFAULT_DISCOUNT)?;
    let mut initial = vec![0.0; n];
    initial[0] = 0.5;
    initial[1] = 0.5;
    DomainSpec::tabular("riverswim", mdp, initial)
}

pub fn make_mountain_car(grid: GridDiscretizer) -> Result<DomainSpec> {
    grid.validate()?;
    Ok(DomainSpec {
        name: "mountaincar5x5".into(),
        n_states: grid.n_cells(),
        n_actions: MountainCar::N_ACTIONS,
        dynamics: Dynamics::MountainCar(MountainCar { grid }),
        initial: Vec::new(),
    })
}

/// Builds a domain by kind with the configured parameters and discount.
pub fn make_domain(kind: DomainKind, params: &DomainParams, discount: f64) -> Result<DomainSpec> {
    let spec = match kind {
        DomainKind::Chain => make_chain(&params.chain)?,
        DomainKind::DoubleLoop => make_double_loop(&params.doubleloop)?,
        DomainKind::RiverSwim => make_river_swim(&params.riverswim)?,
        DomainKind::MountainCar5x5 => make_mountain_car(params.mountaincar)?,
    };
    spec.with_discount(discount)
}
