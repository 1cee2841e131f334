use std::fs;

use mcbrl::agents::{AgentKind, AgentSettings, Hyperparams};
use mcbrl::domains::{make_chain, ChainParams, DomainKind, DomainSpec};
use mcbrl::harness::{
    bootstrap_ci, emit_results, emit_table, evaluate, run_batch, run_once, run_pair, tune,
    ExperimentConfig, HyperGrid, RunSetup, Summary, TableRow,
};
use mcbrl::mdp::FiniteMdp;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn one_state(reward: f64) -> DomainSpec {
    let mdp = FiniteMdp::new(1, 1, vec![1.0], vec![reward], 0.9).unwrap();
    DomainSpec::tabular("single", mdp, vec![1.0]).unwrap()
}

fn small_config() -> ExperimentConfig {
    ExperimentConfig {
        runs_tuning: 2,
        runs_eval: 6,
        horizon: 300,
        bootstrap_resamples: 500,
        smoothing_window: 10,
        ..ExperimentConfig::default()
    }
}

#[test]
fn constant_reward_run_totals_are_exact() {
    let domain = one_state(0.2);
    let settings = AgentSettings::default();
    let setup = RunSetup {
        domain: &domain,
        agent: AgentKind::Qlambda,
        settings: &settings,
        hyperparams: Hyperparams::default(),
        horizon: 10,
        discount: 0.9,
    };
    let rec = run_once(&setup, 0, 5).unwrap();
    assert_eq!(rec.rewards, vec![0.2; 10]);
    assert!((rec.total - 2.0).abs() < 1e-12);
}

#[test]
fn single_point_grid_skips_tuning_runs() {
    let cfg = ExperimentConfig {
        grid: HyperGrid {
            samples: vec![3],
            ..HyperGrid::default()
        },
        ..small_config()
    };
    let domain = make_chain(&ChainParams::default()).unwrap();
    let report = tune(&cfg, &domain, AgentKind::Umcbrl).unwrap();
    assert_eq!(report.chosen.samples, Some(3));
    assert_eq!(report.entries.len(), 1);
    assert!(report.entries[0].mean_total.is_none());
}

#[test]
fn diverging_step_sizes_lose_the_tuning() {
    let cfg = ExperimentConfig {
        grid: HyperGrid {
            step0: vec![1e6, 0.05],
            ..HyperGrid::default()
        },
        ..small_config()
    };
    let domain = make_chain(&ChainParams::default()).unwrap();
    let report = tune(&cfg, &domain, AgentKind::Bgbrl).unwrap();
    assert_eq!(report.entries[0].failed_runs, cfg.runs_tuning);
    assert_eq!(report.entries[1].failed_runs, 0);
    assert_eq!(report.chosen.step0, Some(0.05));
}

#[test]
fn batches_do_not_depend_on_worker_count() {
    let domain = make_chain(&ChainParams::default()).unwrap();
    let settings = AgentSettings::default();
    let setup = RunSetup {
        domain: &domain,
        agent: AgentKind::Umcbrl,
        settings: &settings,
        hyperparams: Hyperparams::default(),
        horizon: 200,
        discount: 0.99,
    };
    let seeds: Vec<u64> = (100..112).collect();
    let a = run_batch(&setup, &seeds, Some(1)).unwrap();
    let b = run_batch(&setup, &seeds, Some(5)).unwrap();
    assert_eq!(a.totals(), b.totals());
    let rewards = |x: &mcbrl::harness::Batch| {
        x.records
            .iter()
            .map(|r| r.rewards.clone())
            .collect::<Vec<_>>()
    };
    assert_eq!(rewards(&a), rewards(&b));
    assert!(a
        .records
        .iter()
        .enumerate()
        .all(|(i, r)| r.index == i && r.seed == seeds[i]));
}

#[test]
fn evaluation_is_reproducible_across_calls() {
    let cfg = small_config();
    let domain = make_chain(&ChainParams::default()).unwrap();
    let a = evaluate(&cfg, &domain, AgentKind::Ucrl, Hyperparams::default()).unwrap();
    let b = evaluate(&cfg, &domain, AgentKind::Ucrl, Hyperparams::default()).unwrap();
    assert_eq!(a.totals(), b.totals());
}

#[test]
fn bootstrap_width_matches_normal_theory() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let n = 400;
    let xs: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let ci = bootstrap_ci(&xs, 20_000, 0.95, &mut rng).unwrap();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    let want = 2.0 * 1.959964 * sd / (n as f64).sqrt();
    let width = ci.upper - ci.lower;
    assert!((width - want).abs() < 0.1 * want, "{width} vs {want}");
    assert!(ci.lower < mean && mean < ci.upper);
}

#[test]
fn emitted_files_round_trip() {
    let cfg = small_config();
    let domain = make_chain(&ChainParams::default()).unwrap();
    let result = run_pair(&cfg, &domain, AgentKind::Qlambda).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let dir = emit_results(&result, tmp.path()).unwrap();
    assert_eq!(dir, tmp.path().join("chain").join("qlambda"));

    let summary: Summary =
        serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary, result.summary);

    let mut rdr = csv::Reader::from_path(dir.join("runs.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap(), vec!["run", "seed", "total"]);
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), cfg.runs_eval);
    for (row, rec) in rows.iter().zip(&result.batch.records) {
        assert_eq!(row[2].parse::<f64>().unwrap(), rec.total);
    }

    let curve = fs::read_to_string(dir.join("curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), cfg.horizon + 1);

    let svg = fs::read_to_string(dir.join("curve.svg")).unwrap();
    assert!(svg.trim_start().starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    assert_eq!(svg.matches("<svg").count(), svg.matches("</svg>").count());
    assert!(svg.contains("<polyline"));

    let timing: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("timing.json")).unwrap()).unwrap();
    assert_eq!(
        timing["run_seconds"].as_array().unwrap().len(),
        cfg.runs_eval
    );
}

#[test]
fn table_has_one_row_per_pair() {
    let cfg = ExperimentConfig {
        domains: vec![DomainKind::Chain, DomainKind::RiverSwim],
        agents: vec![AgentKind::Qlambda, AgentKind::Thompson],
        ..small_config()
    };
    let results = mcbrl::harness::run_all(&cfg).unwrap();
    let rows = TableRow::from_results(&results);
    assert_eq!(rows.len(), 4);
    // Each domain has at least one bold entry.
    for d in ["chain", "riverswim"] {
        assert!(rows.iter().any(|r| r.domain == d && r.bold));
    }
    let tmp = tempfile::tempdir().unwrap();
    emit_table(&rows, tmp.path()).unwrap();
    let table = fs::read_to_string(tmp.path().join("table.csv")).unwrap();
    assert_eq!(table.lines().count(), 5);
    assert!(tmp.path().join("table.md").exists());
    assert!(tmp.path().join("table_cpu.csv").exists());
}

#[test]
fn config_json_round_trips_and_rejects_unknown_fields() {
    let cfg = small_config();
    assert_eq!(ExperimentConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    assert!(ExperimentConfig::from_json(r#"{"horizon": 10, "bogus": 1}"#).is_err());
    assert!(ExperimentConfig::from_json(r#"{"horizon": 0}"#).is_err());
    assert!(ExperimentConfig::from_json(r#"{"agents": ["nope"]}"#).is_err());
    assert!(
        ExperimentConfig::from_json(r#"{"grid": {"samples": []}, "agents": ["mcbrl"]}"#).is_err()
    );
}
