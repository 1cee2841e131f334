//! `mcbrl`: tune, evaluate and tabulate Bayesian RL agents on benchmark MDPs.
//!
//! Exit codes: 0 success, 1 configuration or usage error, 2 runtime failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mcbrl::agents::AgentKind;
use mcbrl::domains::{make_domain, DomainKind};
use mcbrl::harness::{
    emit_results, emit_table, render_table_markdown, run_all, tune, AgentResult, ExperimentConfig,
    TableRow,
};
use mcbrl::Error;

#[derive(Debug, Parser)]
#[command(name = "mcbrl", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Pick hyperparameters on tuning seeds and write tuning.json per pair.
    Tune(Common),
    /// Tune, then evaluate and write per-pair result files.
    Eval(Common),
    /// Tune and evaluate every pair, then write the comparison table.
    Table(Common),
    /// Tune and evaluate, reporting the smoothed reward curves.
    Curve(Common),
}

#[derive(Debug, clap::Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Master seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads, overriding the config.
    #[arg(long)]
    workers: Option<usize>,
    /// Comma-separated agent names, overriding the config.
    #[arg(long, value_delimiter = ',')]
    agents: Option<Vec<String>>,
    /// Comma-separated domain names, overriding the config.
    #[arg(long, value_delimiter = ',')]
    domains: Option<Vec<String>>,
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl Failure {
    fn runtime(e: Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn load(args: &Common) -> Result<ExperimentConfig, Failure> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| Failure::Config(format!("cannot read {}: {e}", args.config.display())))?;
    let mut cfg: ExperimentConfig = serde_json::from_str(&text)
        .map_err(|e| Failure::Config(format!("{}: {e}", args.config.display())))?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(w) = args.workers {
        cfg.workers = Some(w);
    }
    let parse_err = |e: Error| Failure::Config(e.to_string());
    if let Some(names) = &args.agents {
        cfg.agents = names
            .iter()
            .map(|n| n.trim().parse::<AgentKind>())
            .collect::<Result<_, _>>()
            .map_err(parse_err)?;
    }
    if let Some(names) = &args.domains {
        cfg.domains = names
            .iter()
            .map(|n| n.trim().parse::<DomainKind>())
            .collect::<Result<_, _>>()
            .map_err(parse_err)?;
    }
    cfg.validate().map_err(parse_err)?;
    Ok(cfg)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), Failure> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Failure::runtime(Error::io(dir, e)))?;
    }
    let text = serde_json::to_string_pretty(value).expect("reports serialize") + "\n";
    std::fs::write(path, text).map_err(|e| Failure::runtime(Error::io(path, e)))
}

type Handler = fn(&ExperimentConfig, &Path) -> Result<(), Failure>;

fn cmd_tune(cfg: &ExperimentConfig, out: &Path) -> Result<(), Failure> {
    for &d in &cfg.domains {
        let domain = make_domain(d, &cfg.domain_params, cfg.discount).map_err(Failure::runtime)?;
        for &a in &cfg.agents {
            let report = tune(cfg, &domain, a).map_err(Failure::runtime)?;
            println!("{d} {a}: {}", report.chosen);
            write_json(
                &out.join(d.name()).join(a.name()).join("tuning.json"),
                &report,
            )?;
        }
    }
    Ok(())
}

fn evaluate_all(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<AgentResult>, Failure> {
    let results = run_all(cfg).map_err(Failure::runtime)?;
    for r in &results {
        emit_results(r, out).map_err(Failure::runtime)?;
    }
    Ok(results)
}

fn cmd_eval(cfg: &ExperimentConfig, out: &Path) -> Result<(), Failure> {
    for r in evaluate_all(cfg, out)? {
        let s = &r.summary;
        println!(
            "{} {} [{}]: mean {:.3} ({}% CI {:.3} .. {:.3}), {} runs, {} failed, {:.2} s",
            s.domain,
            s.agent,
            s.hyperparams,
            s.ci.mean,
            s.confidence_level * 100.0,
            s.ci.lower,
            s.ci.upper,
            s.runs,
            s.failed_runs,
            r.cpu_seconds()
        );
    }
    Ok(())
}

fn cmd_table(cfg: &ExperimentConfig, out: &Path) -> Result<(), Failure> {
    let results = evaluate_all(cfg, out)?;
    let rows = TableRow::from_results(&results);
    emit_table(&rows, out).map_err(Failure::runtime)?;
    print!("{}", render_table_markdown(&rows, true));
    Ok(())
}

fn cmd_curve(cfg: &ExperimentConfig, out: &Path) -> Result<(), Failure> {
    for r in evaluate_all(cfg, out)? {
        let dir = r.dir(out);
        println!(
            "{} {}: {} and {}",
            r.summary.domain,
            r.summary.agent,
            dir.join("curve.csv").display(),
            dir.join("curve.svg").display()
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let (args, run): (&Common, Handler) = match &cli.command {
        Command::Tune(a) => (a, cmd_tune),
        Command::Eval(a) => (a, cmd_eval),
        Command::Table(a) => (a, cmd_table),
        Command::Curve(a) => (a, cmd_curve),
    };
    let outcome = load(args).and_then(|cfg| run(&cfg, &args.out));
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
