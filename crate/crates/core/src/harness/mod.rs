//! Experiment protocol: tuning on one family of seeds, evaluation on a
//! disjoint family, then bootstrap summaries and result files.

mod output;
mod stats;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use log::warn;
use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use output::{
    bold_flags, emit_results, emit_table, render_svg, render_table_markdown, AgentResult, Summary,
    TableRow,
};
pub use stats::{bootstrap_ci, mean, quantile_sorted, smooth_curve, ConfidenceInterval};

use crate::agents::{build_agent, AgentKind, AgentSettings, Hyperparams, Param};
use crate::domains::{make_domain, DomainKind, DomainParams, DomainSpec};
use crate::error::{Error, Result};
use crate::mdp::Transition;
use crate::seed::{derive, label_hash, SeedDomain};
use crate::RunRng;

/// Candidate values for each tunable hyperparameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperGrid {
    pub epsilon0: Vec<f64>,
    pub delta: Vec<f64>,
    pub samples: Vec<usize>,
    pub step0: Vec<f64>,
}

impl Default for HyperGrid {
    fn default() -> Self {
        HyperGrid {
            epsilon0: vec![0.1, 0.3, 1.0],
            delta: vec![0.1, 0.01, 0.001],
            samples: vec![2, 4, 8, 16],
            step0: vec![0.01, 0.05, 0.2, 0.5],
        }
    }
}

impl HyperGrid {
    fn len_of(&self, p: Param) -> usize {
        match p {
            Param::Epsilon0 => self.epsilon0.len(),
            Param::Delta => self.delta.len(),
            Param::Samples => self.samples.len(),
            Param::Step0 => self.step0.len(),
        }
    }

    /// Cartesian product over the parameters `kind` tunes, first parameter
    /// varying slowest. Agents without tuned parameters get one empty point.
    pub fn points(&self, kind: AgentKind) -> Result<Vec<Hyperparams>> {
        let mut points = vec![Hyperparams::default()];
        for &p in kind.tuned() {
            if self.len_of(p) == 0 {
                return Err(Error::Config(format!(
                    "grid for {p:?} is empty but {kind} tunes it"
                )));
            }
            points = points
                .into_iter()
                .flat_map(|base| {
                    (0..self.len_of(p)).map(move |i| {
                        let mut h = base;
                        match p {
                            Param::Epsilon0 => h.epsilon0 = Some(self.epsilon0[i]),
                            Param::Delta => h.delta = Some(self.delta[i]),
                            Param::Samples => h.samples = Some(self.samples[i]),
                            Param::Step0 => h.step0 = Some(self.step0[i]),
                        }
                        h
                    })
                })
                .collect();
        }
        Ok(points)
    }
}

/// Everything that determines an experiment's results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub domains: Vec<DomainKind>,
    pub agents: Vec<AgentKind>,
    pub grid: HyperGrid,
    pub runs_tuning: usize,
    pub runs_eval: usize,
    pub horizon: usize,
    pub discount: f64,
    pub seed: u64,
    pub bootstrap_resamples: usize,
    pub confidence_level: f64,
    pub smoothing_window: usize,
    /// Worker threads; `None` uses one per core. Results do not depend on it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    pub agent: AgentSettings,
    pub domain_params: DomainParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            domains: vec![DomainKind::Chain],
            agents: vec![AgentKind::Umcbrl],
            grid: HyperGrid::default(),
            runs_tuning: 10,
            runs_eval: 1000,
            horizon: 10_000,
            discount: 0.99,
            seed: 0,
            bootstrap_resamples: 10_000,
            confidence_level: 0.95,
            smoothing_window: 100,
            workers: None,
            agent: AgentSettings::default(),
            domain_params: DomainParams::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("runs_tuning", self.runs_tuning),
            ("runs_eval", self.runs_eval),
            ("horizon", self.horizon),
            ("bootstrap_resamples", self.bootstrap_resamples),
            ("smoothing_window", self.smoothing_window),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be positive".into()));
        }
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return Err(Error::Config(format!(
                "discount must lie in (0, 1), got {}",
                self.discount
            )));
        }
        if !(self.confidence_level > 0.0 && self.confidence_level < 1.0) {
            return Err(Error::Config("confidence_level must lie in (0, 1)".into()));
        }
        if self.domains.is_empty() || self.agents.is_empty() {
            return Err(Error::Config(
                "need at least one domain and one agent".into(),
            ));
        }
        for &kind in &self.agents {
            self.grid.points(kind)?;
        }
        self.agent
            .validate()
            .map_err(|e| Error::Config(format!("agent settings: {e}")))?;
        for &d in &self.domains {
            make_domain(d, &self.domain_params, self.discount)
                .map_err(|e| Error::Config(format!("domain {d}: {e}")))?;
        }
        Ok(())
    }

    /// Parses and validates a JSON config.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// One run's trajectory statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub index: usize,
    pub seed: u64,
    pub hyperparams: Hyperparams,
    pub rewards: Vec<f64>,
    /// Sum of `rewards` in step order.
    pub total: f64,
    /// Wall-clock seconds spent inside the agent (environment excluded).
    pub seconds: f64,
}

/// A run that errored or panicked; excluded from statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub index: usize,
    pub seed: u64,
    pub message: String,
}

/// Outcome of a batch of runs, in run-index order.
#[derive(Debug, Clone, Default)]
pub struct Batch {
    pub records: Vec<RunRecord>,
    pub failures: Vec<RunFailure>,
}

impl Batch {
    pub fn totals(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.total).collect()
    }

    pub fn cpu_seconds(&self) -> f64 {
        self.records.iter().map(|r| r.seconds).sum()
    }
}

/// What a batch of runs needs besides the per-run seed.
#[derive(Debug, Clone, Copy)]
pub struct RunSetup<'a> {
    pub domain: &'a DomainSpec,
    pub agent: AgentKind,
    pub settings: &'a AgentSettings,
    pub hyperparams: Hyperparams,
    pub horizon: usize,
    pub discount: f64,
}

/// One run: fresh agent, fresh start state, `horizon` act/observe steps.
pub fn run_once(setup: &RunSetup<'_>, index: usize, seed: u64) -> Result<RunRecord> {
    let mut env_rng = RunRng::seed_from_u64(derive(seed, SeedDomain::Environment, 0));
    let mut agent_rng = RunRng::seed_from_u64(derive(seed, SeedDomain::Agent, 0));
    let domain = setup.domain;
    let clock = Instant::now();
    let mut agent = build_agent(
        setup.agent,
        setup.settings,
        &setup.hyperparams,
        domain.n_states(),
        domain.n_actions(),
        setup.discount,
    )?;
    let mut seconds = clock.elapsed().as_secs_f64();
    let mut sim = domain.start(&mut env_rng);
    let mut s = sim.state();
    let mut rewards = Vec::with_capacity(setup.horizon);
    for _ in 0..setup.horizon {
        let clock = Instant::now();
        let a = agent.act(s, &mut agent_rng)?;
        seconds += clock.elapsed().as_secs_f64();
        let (r, s_next) = sim.step(a, &mut env_rng)?;
        let clock = Instant::now();
        agent.observe(&Transition { s, a, r, s_next }, &mut agent_rng)?;
        seconds += clock.elapsed().as_secs_f64();
        rewards.push(r);
        s = s_next;
    }
    let total = rewards.iter().sum();
    Ok(RunRecord {
        index,
        seed,
        hyperparams: setup.hyperparams,
        rewards,
        total,
        seconds,
    })
}

fn panic_message(payload: &(dyn std::any::Any + Send)) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "panic".to_string()
    }
}

/// Runs `seeds.len()` runs on `workers` threads. Output order is run-index
/// order regardless of scheduling.
pub fn run_batch(setup: &RunSetup<'_>, seeds: &[u64], workers: Option<usize>) -> Result<Batch> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        builder = builder.num_threads(w);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let outcomes: Vec<std::result::Result<RunRecord, RunFailure>> = pool.install(|| {
        seeds
            .par_iter()
            .enumerate()
            .map(|(index, &seed)| {
                match catch_unwind(AssertUnwindSafe(|| run_once(setup, index, seed))) {
                    Ok(Ok(rec)) => Ok(rec),
                    Ok(Err(e)) => Err(RunFailure {
                        index,
                        seed,
                        message: e.to_string(),
                    }),
                    Err(payload) => Err(RunFailure {
                        index,
                        seed,
                        message: format!("panicked: {}", panic_message(payload.as_ref())),
                    }),
                }
            })
            .collect()
    });
    let mut batch = Batch::default();
    for o in outcomes {
        match o {
            Ok(rec) => batch.records.push(rec),
            Err(f) => {
                warn!(
                    "{} on {}: run {} (seed {:#x}) failed and is excluded: {}",
                    setup.agent,
                    setup.domain.name(),
                    f.index,
                    f.seed,
                    f.message
                );
                batch.failures.push(f);
            }
        }
    }
    Ok(batch)
}

/// Seeds of `count` runs on `domain` within a derivation family. Agents on
/// the same domain share seeds, so they face the same start states.
pub fn run_seeds(master: u64, family: SeedDomain, domain: &str, count: usize) -> Vec<u64> {
    let base = master ^ label_hash(domain);
    (0..count as u64).map(|i| derive(base, family, i)).collect()
}

/// Mean tuning return of one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningEntry {
    pub hyperparams: Hyperparams,
    /// `None` when every tuning run failed.
    pub mean_total: Option<f64>,
    pub failed_runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningReport {
    pub domain: String,
    pub agent: AgentKind,
    pub chosen: Hyperparams,
    pub entries: Vec<TuningEntry>,
}

fn setup<'a>(cfg: &'a ExperimentConfig, domain: &'a DomainSpec, agent: AgentKind) -> RunSetup<'a> {
    RunSetup {
        domain,
        agent,
        settings: &cfg.agent,
        hyperparams: Hyperparams::default(),
        horizon: cfg.horizon,
        discount: cfg.discount,
    }
}

/// Picks the grid point with the highest mean total over `runs_tuning`
/// tuning-family runs; ties go to the earliest point. A one-point grid is
/// returned without running anything.
pub fn tune(cfg: &ExperimentConfig, domain: &DomainSpec, agent: AgentKind) -> Result<TuningReport> {
    let points = cfg.grid.points(agent)?;
    if points.len() == 1 {
        return Ok(TuningReport {
            domain: domain.name().to_string(),
            agent,
            chosen: points[0],
            entries: vec![TuningEntry {
                hyperparams: points[0],
                mean_total: None,
                failed_runs: 0,
            }],
        });
    }
    let seeds = run_seeds(cfg.seed, SeedDomain::Tuning, domain.name(), cfg.runs_tuning);
    let mut entries = Vec::with_capacity(points.len());
    for &hp in &points {
        let batch = run_batch(
            &RunSetup {
                hyperparams: hp,
                ..setup(cfg, domain, agent)
            },
            &seeds,
            cfg.workers,
        )?;
        let mean_total = (!batch.records.is_empty()).then(|| mean(&batch.totals()));
        entries.push(TuningEntry {
            hyperparams: hp,
            mean_total,
            failed_runs: batch.failures.len(),
        });
    }
    // Points whose runs failed (typically diverging step sizes) only compete
    // when no point ran cleanly.
    let any_clean = entries.iter().any(|e| e.failed_runs == 0);
    let mut best: Option<(usize, f64)> = None;
    for (i, e) in entries.iter().enumerate() {
        if any_clean && e.failed_runs > 0 {
            continue;
        }
        if let Some(m) = e.mean_total.filter(|m| !m.is_nan()) {
            if best.is_none_or(|(_, b)| m > b) {
                best = Some((i, m));
            }
        }
    }
    let (chosen, _) = best.ok_or_else(|| Error::InvalidParameter {
        name: "grid",
        reason: format!("every tuning run of {agent} on {} failed", domain.name()),
    })?;
    Ok(TuningReport {
        domain: domain.name().to_string(),
        agent,
        chosen: points[chosen],
        entries,
    })
}

/// `runs_eval` evaluation-family runs at fixed hyperparameters.
pub fn evaluate(
    cfg: &ExperimentConfig,
    domain: &DomainSpec,
    agent: AgentKind,
    hyperparams: Hyperparams,
) -> Result<Batch> {
    let seeds = run_seeds(
        cfg.seed,
        SeedDomain::Evaluation,
        domain.name(),
        cfg.runs_eval,
    );
    run_batch(
        &RunSetup {
            hyperparams,
            ..setup(cfg, domain, agent)
        },
        &seeds,
        cfg.workers,
    )
}

/// Tunes, evaluates and summarizes one (domain, agent) pair.
pub fn run_pair(
    cfg: &ExperimentConfig,
    domain: &DomainSpec,
    agent: AgentKind,
) -> Result<AgentResult> {
    let tuning = tune(cfg, domain, agent)?;
    let batch = evaluate(cfg, domain, agent, tuning.chosen)?;
    AgentResult::new(cfg, domain, tuning, batch)
}

/// Every configured (domain, agent) pair, in config order.
pub fn run_all(cfg: &ExperimentConfig) -> Result<Vec<AgentResult>> {
    let mut results = Vec::new();
    for &d in &cfg.domains {
        let domain = make_domain(d, &cfg.domain_params, cfg.discount)?;
        for &a in &cfg.agents {
            log::info!("{d}/{a}: tuning and evaluating");
            results.push(run_pair(cfg, &domain, a)?);
        }
    }
    Ok(results)
}
