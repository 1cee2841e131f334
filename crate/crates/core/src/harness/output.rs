//! Result files.
//!
//! Everything except the timing files is a pure function of the seed and
//! the config, so repeated runs produce byte-identical output. Wall-clock
//! figures go to `timing.json` and `table_cpu.csv` only.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::stats::{bootstrap_ci, smooth_curve, ConfidenceInterval};
use super::{Batch, ExperimentConfig, RunFailure, TuningReport};
use crate::agents::{AgentKind, Hyperparams};
use crate::domains::DomainSpec;
use crate::error::{Error, Result};
use crate::seed::{derive, label_hash, SeedDomain};
use crate::RunRng;

/// Deterministic per-(domain, agent) summary, written as `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Summary {
    pub domain: String,
    pub agent: AgentKind,
    pub hyperparams: Hyperparams,
    pub runs: usize,
    pub failed_runs: usize,
    pub horizon: usize,
    pub discount: f64,
    pub seed: u64,
    pub confidence_level: f64,
    pub bootstrap_resamples: usize,
    pub ci: ConfidenceInterval,
}

/// Everything known about one evaluated (domain, agent) pair.
#[derive(Debug, Clone)]
pub struct AgentResult {
    pub summary: Summary,
    pub tuning: TuningReport,
    pub batch: Batch,
    pub curve: Vec<f64>,
}

impl AgentResult {
    pub fn new(
        cfg: &ExperimentConfig,
        domain: &DomainSpec,
        tuning: TuningReport,
        batch: Batch,
    ) -> Result<Self> {
        if batch.records.is_empty() {
            return Err(Error::EmptyInput("successful evaluation runs"));
        }
        let label = format!("{}/{}", domain.name(), tuning.agent);
        let mut rng = RunRng::seed_from_u64(derive(
            cfg.seed ^ label_hash(&label),
            SeedDomain::Bootstrap,
            0,
        ));
        let ci = bootstrap_ci(
            &batch.totals(),
            cfg.bootstrap_resamples,
            cfg.confidence_level,
            &mut rng,
        )?;
        let rewards: Vec<&[f64]> = batch.records.iter().map(|r| r.rewards.as_slice()).collect();
        let curve = smooth_curve(&rewards, cfg.smoothing_window)?;
        Ok(AgentResult {
            summary: Summary {
                domain: domain.name().to_string(),
                agent: tuning.agent,
                hyperparams: tuning.chosen,
                runs: batch.records.len(),
                failed_runs: batch.failures.len(),
                horizon: cfg.horizon,
                discount: cfg.discount,
                seed: cfg.seed,
                confidence_level: cfg.confidence_level,
                bootstrap_resamples: cfg.bootstrap_resamples,
                ci,
            },
            tuning,
            batch,
            curve,
        })
    }

    pub fn cpu_seconds(&self) -> f64 {
        self.batch.cpu_seconds()
    }

    pub fn dir(&self, out: &Path) -> PathBuf {
        out.join(&self.summary.domain)
            .join(self.summary.agent.name())
    }
}

#[derive(Serialize)]
struct Timing<'a> {
    cpu_seconds_total: f64,
    run_seconds: Vec<f64>,
    failures: &'a [RunFailure],
}

fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("result types serialize") + "\n"
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn csv_text(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| Error::Config(format!("csv: {e}"));
    w.write_record(header).map_err(fail)?;
    for row in rows {
        w.write_record(&row).map_err(fail)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Config(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Writes `runs.csv`, `summary.json`, `tuning.json`, `curve.csv`,
/// `curve.svg` and `timing.json` under `<out>/<domain>/<agent>/`.
pub fn emit_results(result: &AgentResult, out: &Path) -> Result<PathBuf> {
    let dir = result.dir(out);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;

    let runs = csv_text(
        &["run", "seed", "total"],
        result
            .batch
            .records
            .iter()
            .map(|r| vec![r.index.to_string(), r.seed.to_string(), r.total.to_string()]),
    )?;
    write(&dir.join("runs.csv"), &runs)?;

    write(&dir.join("summary.json"), &json(&result.summary))?;
    write(&dir.join("tuning.json"), &json(&result.tuning))?;

    let curve = csv_text(
        &["step", "reward"],
        result
            .curve
            .iter()
            .enumerate()
            .map(|(t, r)| vec![(t + 1).to_string(), r.to_string()]),
    )?;
    write(&dir.join("curve.csv"), &curve)?;
    let title = format!("{} on {}", result.summary.agent, result.summary.domain);
    write(&dir.join("curve.svg"), &render_svg(&result.curve, &title))?;

    let timing = Timing {
        cpu_seconds_total: result.cpu_seconds(),
        run_seconds: result.batch.records.iter().map(|r| r.seconds).collect(),
        failures: &result.batch.failures,
    };
    write(&dir.join("timing.json"), &json(&timing))?;
    Ok(dir)
}

fn escape_xml(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// A standalone SVG line plot of a reward curve.
pub fn render_svg(curve: &[f64], title: &str) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const M: f64 = 50.0;
    let (mut lo, mut hi) = curve
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &y| {
            (l.min(y), h.max(y))
        });
    if !(lo.is_finite() && hi.is_finite()) {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        lo -= 1.0;
        hi += 1.0;
    }
    let n = curve.len().max(2) - 1;
    let x = |t: usize| M + (W - 2.0 * M) * t as f64 / n as f64;
    let y = |v: f64| H - M - (H - 2.0 * M) * (v - lo) / (hi - lo);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="25" text-anchor="middle" font-family="sans-serif" font-size="14">{}</text>"#,
        W / 2.0,
        escape_xml(title)
    );
    let _ = writeln!(
        svg,
        r#"<path d="M{M} {M} V{} H{}" fill="none" stroke="black"/>"#,
        H - M,
        W - M
    );
    for (v, label) in [(lo, lo), (hi, hi)] {
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{:.2}" text-anchor="end" font-family="sans-serif" font-size="10">{:.4}</text>"#,
            M - 4.0,
            y(v) + 3.0,
            label
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="10">step ({} total)</text>"#,
        W / 2.0,
        H - M + 20.0,
        curve.len()
    );
    svg.push_str(r##"<polyline fill="none" stroke="#1f77b4" stroke-width="1" points=""##);
    // Thin long curves to at most ~2000 vertices; the plot is 540 px wide.
    let stride = curve.len().div_ceil(2000).max(1);
    for (t, &v) in curve.iter().enumerate() {
        if t % stride == 0 || t + 1 == curve.len() {
            let _ = write!(svg, "{:.2},{:.2} ", x(t), y(v));
        }
    }
    svg.push_str("\"/>\n</svg>\n");
    svg
}

/// One row of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    pub domain: String,
    pub agent: AgentKind,
    pub hyperparams: Hyperparams,
    pub ci: ConfidenceInterval,
    pub cpu_seconds: f64,
    pub bold: bool,
}

/// Marks, within each domain, the agent with the best mean and every agent
/// whose interval reaches the best agent's lower bound.
pub fn bold_flags(cis: &[ConfidenceInterval]) -> Vec<bool> {
    let Some(best) = cis
        .iter()
        .enumerate()
        .fold(None::<(usize, f64)>, |acc, (i, ci)| match acc {
            Some((_, m)) if ci.mean <= m => acc,
            _ => Some((i, ci.mean)),
        })
    else {
        return Vec::new();
    };
    let floor = cis[best.0].lower;
    cis.iter().map(|ci| ci.upper >= floor).collect()
}

impl TableRow {
    /// Builds rows in result order, bolding per domain.
    pub fn from_results(results: &[AgentResult]) -> Vec<TableRow> {
        let mut rows: Vec<TableRow> = results
            .iter()
            .map(|r| TableRow {
                domain: r.summary.domain.clone(),
                agent: r.summary.agent,
                hyperparams: r.summary.hyperparams,
                ci: r.summary.ci,
                cpu_seconds: r.cpu_seconds(),
                bold: false,
            })
            .collect();
        let mut start = 0;
        while start < rows.len() {
            let end = start
                + rows[start..]
                    .iter()
                    .take_while(|r| r.domain == rows[start].domain)
                    .count();
            let cis: Vec<_> = rows[start..end].iter().map(|r| r.ci).collect();
            for (row, b) in rows[start..end].iter_mut().zip(bold_flags(&cis)) {
                row.bold = b;
            }
            start = end;
        }
        rows
    }
}

/// Markdown table grouped by domain. CPU seconds are included only when
/// requested, since they vary between runs.
pub fn render_table_markdown(rows: &[TableRow], with_cpu: bool) -> String {
    let mut md = String::new();
    let mut current: Option<&str> = None;
    for row in rows {
        if current != Some(row.domain.as_str()) {
            if current.is_some() {
                md.push('\n');
            }
            current = Some(&row.domain);
            let _ = writeln!(md, "### {}\n", row.domain);
            if with_cpu {
                md.push_str("| agent | lower95 | mean | upper95 | cpu_seconds |\n|---|---:|---:|---:|---:|\n");
            } else {
                md.push_str("| agent | lower95 | mean | upper95 |\n|---|---:|---:|---:|\n");
            }
        }
        let cell = |v: f64| {
            if row.bold {
                format!("**{v:.1}**")
            } else {
                format!("{v:.1}")
            }
        };
        let _ = write!(
            md,
            "| {} | {} | {} | {} |",
            row.agent,
            cell(row.ci.lower),
            cell(row.ci.mean),
            cell(row.ci.upper)
        );
        if with_cpu {
            let _ = write!(md, " {:.2} |", row.cpu_seconds);
        }
        md.push('\n');
    }
    md
}

/// Writes `table.csv` and `table.md` (deterministic) and `table_cpu.csv`.
pub fn emit_table(rows: &[TableRow], out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let table = csv_text(
        &[
            "domain",
            "agent",
            "hyperparams",
            "lower95",
            "mean",
            "upper95",
            "bold",
        ],
        rows.iter().map(|r| {
            vec![
                r.domain.clone(),
                r.agent.to_string(),
                r.hyperparams.to_string(),
                r.ci.lower.to_string(),
                r.ci.mean.to_string(),
                r.ci.upper.to_string(),
                r.bold.to_string(),
            ]
        }),
    )?;
    write(&out.join("table.csv"), &table)?;
    write(&out.join("table.md"), &render_table_markdown(rows, false))?;
    let cpu = csv_text(
        &["domain", "agent", "cpu_seconds"],
        rows.iter().map(|r| {
            vec![
                r.domain.clone(),
                r.agent.to_string(),
                r.cpu_seconds.to_string(),
            ]
        }),
    )?;
    write(&out.join("table_cpu.csv"), &cpu)
}
