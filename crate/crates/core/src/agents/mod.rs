//! Decision-making algorithms behind a uniform act/observe interface.

mod gradient;
mod montecarlo;
mod qlambda;
mod schedule;
mod ucrl;

use std::fmt;
use std::str::FromStr;

use rand::RngCore;
use serde::{Deserialize, Serialize};

pub use gradient::{
    bellman_direction, bgbrl_step, bgbrl_update, dgbrl_direction, dgbrl_step, dgbrl_target,
    dgbrl_update, td_direction, td_gradient_step, td_gradient_update, BellmanGradientAgent,
    BellmanSample, BoundMode, DirectGradientAgent, TdGradientAgent, TdSample,
};
pub use montecarlo::{
    mcbrl_plan, mcbrl_plan_from_samples, sample_mdps, thompson_plan, umcbrl_plan,
    umcbrl_plan_from_samples, LowerBoundPlan, SamplingAgent,
};
pub use qlambda::QLambdaAgent;
pub use schedule::{StepClock, StepSizeSchedule, SwitchSchedule};
pub use ucrl::{
    confidence_radii, max_over_l1_ball, ucrl_plan, ConfidenceRadii, UcrlAgent, UcrlCounts,
};

use crate::belief::{BeliefState, PriorConfig};
use crate::error::{Error, Result};
use crate::mdp::{Transition, DEFAULT_TOL};

/// The act/observe contract every algorithm implements.
///
/// An agent is owned by exactly one run. All randomness comes from the
/// run's stream passed in by the caller.
pub trait Agent: Send {
    fn name(&self) -> &'static str;

    /// Chooses the action in state `s`.
    fn act(&mut self, s: usize, rng: &mut dyn RngCore) -> Result<usize>;

    /// Incorporates the outcome of the last action.
    fn observe(&mut self, t: &Transition, rng: &mut dyn RngCore) -> Result<()>;

    /// Number of observed transitions.
    fn steps(&self) -> u64;

    /// The agent's posterior, for Bayesian agents.
    fn belief(&self) -> Option<&BeliefState> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Qlambda,
    Ucrl,
    Mcbrl,
    Umcbrl,
    Dgbrl,
    Tdgbrl,
    Bgbrl,
    Thompson,
}

impl AgentKind {
    pub const ALL: [AgentKind; 8] = [
        AgentKind::Qlambda,
        AgentKind::Ucrl,
        AgentKind::Mcbrl,
        AgentKind::Umcbrl,
        AgentKind::Dgbrl,
        AgentKind::Tdgbrl,
        AgentKind::Bgbrl,
        AgentKind::Thompson,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Qlambda => "qlambda",
            AgentKind::Ucrl => "ucrl",
            AgentKind::Mcbrl => "mcbrl",
            AgentKind::Umcbrl => "umcbrl",
            AgentKind::Dgbrl => "dgbrl",
            AgentKind::Tdgbrl => "tdgbrl",
            AgentKind::Bgbrl => "bgbrl",
            AgentKind::Thompson => "thompson",
        }
    }

    /// The hyperparameters tuned for this agent.
    pub fn tuned(self) -> &'static [Param] {
        match self {
            AgentKind::Qlambda => &[Param::Epsilon0, Param::Step0],
            AgentKind::Ucrl => &[Param::Delta],
            AgentKind::Mcbrl | AgentKind::Umcbrl => &[Param::Samples],
            AgentKind::Dgbrl | AgentKind::Tdgbrl | AgentKind::Bgbrl => &[Param::Step0],
            AgentKind::Thompson => &[],
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AgentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AgentKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownName {
                kind: "agent",
                name: s.to_string(),
            })
    }
}

/// Tunable hyperparameter names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Param {
    /// Initial exploration rate ε₀.
    Epsilon0,
    /// Confidence parameter δ.
    Delta,
    /// Number of posterior samples ξ.
    Samples,
    /// Initial step size η₀.
    Step0,
}

/// One hyperparameter assignment; absent entries fall back to defaults.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hyperparams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step0: Option<f64>,
}

impl Hyperparams {
    /// Fills absent entries from `fallback`.
    pub fn or(self, fallback: &Hyperparams) -> Hyperparams {
        Hyperparams {
            epsilon0: self.epsilon0.or(fallback.epsilon0),
            delta: self.delta.or(fallback.delta),
            samples: self.samples.or(fallback.samples),
            step0: self.step0.or(fallback.step0),
        }
    }
}

impl fmt::Display for Hyperparams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if let Some(v) = self.epsilon0 {
            parts.push(format!("epsilon0={v}"));
        }
        if let Some(v) = self.delta {
            parts.push(format!("delta={v}"));
        }
        if let Some(v) = self.samples {
            parts.push(format!("samples={v}"));
        }
        if let Some(v) = self.step0 {
            parts.push(format!("step0={v}"));
        }
        if parts.is_empty() {
            f.write_str("(none)")
        } else {
            f.write_str(&parts.join(" "))
        }
    }
}

/// Fixed (untuned) agent settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentSettings {
    pub tol: f64,
    pub prior: PriorConfig,
    pub switch_base: u64,
    pub switch_increment: u64,
    pub step_decay: f64,
    /// Step-size counter for the TD and Bellman gradient agents.
    pub step_clock: StepClock,
    pub lambda: f64,
    pub epsilon_horizon: f64,
    pub dgbrl_bound: BoundMode,
    pub initial_value: f64,
    pub max_policy_iterations: usize,
    /// Values used for hyperparameters that are not being tuned.
    pub defaults: Hyperparams,
}

impl Default for AgentSettings {
    fn default() -> Self {
        AgentSettings {
            tol: DEFAULT_TOL,
            prior: PriorConfig::default(),
            switch_base: 10,
            switch_increment: 10,
            step_decay: 0.6,
            step_clock: StepClock::Global,
            lambda: 0.9,
            epsilon_horizon: 1000.0,
            dgbrl_bound: BoundMode::Upper,
            initial_value: 0.0,
            max_policy_iterations: 50,
            defaults: Hyperparams {
                epsilon0: Some(0.1),
                delta: Some(0.05),
                samples: Some(4),
                step0: Some(0.05),
            },
        }
    }
}

impl AgentSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::param("tol", "must be positive"));
        }
        self.prior.validate()?;
        SwitchSchedule::new(self.switch_base, self.switch_increment)?;
        StepSizeSchedule::new(1.0, self.step_decay)?;
        if !self.initial_value.is_finite() {
            return Err(Error::param("initial_value", "must be finite"));
        }
        Ok(())
    }
}

fn required<T>(value: Option<T>, name: &'static str) -> Result<T> {
    value.ok_or_else(|| Error::param(name, "no value and no default"))
}

/// Constructs a fresh agent for an `n_states x n_actions` problem.
pub fn build_agent(
    kind: AgentKind,
    settings: &AgentSettings,
    hyper: &Hyperparams,
    n_states: usize,
    n_actions: usize,
    discount: f64,
) -> Result<Box<dyn Agent>> {
    let hp = hyper.or(&settings.defaults);
    let belief = || BeliefState::new(n_states, n_actions, &settings.prior);
    let switch = || SwitchSchedule::new(settings.switch_base, settings.switch_increment);
    let steps = || StepSizeSchedule::new(required(hp.step0, "step0")?, settings.step_decay);
    let tol = settings.tol;
    Ok(match kind {
        AgentKind::Qlambda => Box::new(QLambdaAgent::new(
            n_states,
            n_actions,
            required(hp.epsilon0, "epsilon0")?,
            settings.epsilon_horizon,
            settings.lambda,
            steps()?,
            discount,
        )?),
        AgentKind::Ucrl => Box::new(UcrlAgent::new(
            n_states,
            n_actions,
            required(hp.delta, "delta")?,
            switch()?,
            discount,
            tol,
        )?),
        AgentKind::Mcbrl => Box::new(SamplingAgent::lower(
            belief()?,
            required(hp.samples, "samples")?,
            settings.max_policy_iterations,
            switch()?,
            discount,
            tol,
        )?),
        AgentKind::Umcbrl => Box::new(SamplingAgent::upper(
            belief()?,
            required(hp.samples, "samples")?,
            switch()?,
            discount,
            tol,
        )?),
        AgentKind::Thompson => {
            Box::new(SamplingAgent::thompson(belief()?, switch()?, discount, tol))
        }
        AgentKind::Dgbrl => Box::new(DirectGradientAgent::new(
            belief()?,
            settings.dgbrl_bound,
            steps()?,
            settings.initial_value,
            discount,
            tol,
        )),
        AgentKind::Tdgbrl => Box::new(
            TdGradientAgent::new(belief()?, steps()?, settings.initial_value, discount)
                .with_step_clock(settings.step_clock),
        ),
        AgentKind::Bgbrl => Box::new(
            BellmanGradientAgent::new(belief()?, steps()?, settings.initial_value, discount)
                .with_step_clock(settings.step_clock),
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for kind in AgentKind::ALL {
            assert_eq!(kind.name().parse::<AgentKind>().unwrap(), kind);
        }
        assert!("sarsa".parse::<AgentKind>().is_err());
    }

    #[test]
    fn every_kind_builds_with_defaults() {
        let settings = AgentSettings::default();
        for kind in AgentKind::ALL {
            let agent = build_agent(kind, &settings, &Hyperparams::default(), 3, 2, 0.9).unwrap();
            assert_eq!(agent.name(), kind.name());
        }
    }

    #[test]
    fn hyperparams_fall_back() {
        let hp = Hyperparams {
            samples: Some(8),
            ..Default::default()
        };
        let merged = hp.or(&AgentSettings::default().defaults);
        assert_eq!(merged.samples, Some(8));
        assert_eq!(merged.step0, Some(0.05));
        assert_eq!(hp.to_string(), "samples=8");
    }
}
