//! Config-driven experiment runner behind the command-line tool.
//!
//! Each command writes its files into the configured output directory along
//! with the resolved `config.toml`, and returns the list of files and the
//! numerical checks it ran. Outputs depend only on the config and seeds.

pub mod config;
pub mod leapfrog;
pub mod output;

use std::collections::BTreeMap;
use std::fs::File;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::decomposition::{median, refinement_levels, successive_ratios, WeightRule};
use crate::error::{Error, Result};
use crate::generators::Builtin;
use crate::market::{ingest_caps_csv, simulate_gbm, write_caps_csv, MarketPath};

pub use config::{ExperimentConfig, LeapfrogSection, MarketSource, OutputFormat};
use output::{report_document, to_json, wide_csv, write_file};

/// Environment variable capping the worker threads used across seeds.
pub const THREADS_ENV: &str = "SPT_DECOMP_THREADS";

/// Residuals at or below this level count as exact on every grid.
pub const ROUNDOFF_FLOOR: f64 = 1e-12;

/// Band for the per-refinement growth of TV(relative return) (Brownian `√2`).
pub const RELATIVE_TV_RATIO_BAND: (f64, f64) = (1.25, 1.60);

/// Band for the per-refinement ratio of TV(trading).
pub const TRADING_TV_RATIO_BAND: (f64, f64) = (0.75, 1.25);

/// Minimum share of the leapfrog loss attributed to trading.
pub const LEAPFROG_TRADING_SHARE: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct CommandOutcome {
    pub files: Vec<PathBuf>,
    pub checks: Vec<Check>,
}

impl CommandOutcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// `Err(CheckFailed)` listing every failed check.
    pub fn ensure_passed(&self) -> Result<()> {
        let failed: Vec<String> = self
            .checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| format!("{} ({})", c.name, c.detail))
            .collect();
        if failed.is_empty() {
            Ok(())
        } else {
            Err(Error::CheckFailed(failed.join("; ")))
        }
    }
}

/// `true` when the sequence strictly decreases, or sits at rounding level
/// throughout (the identity is then exact on every grid).
pub fn decreasing_or_exact(values: &[f64]) -> bool {
    values.iter().all(|v| v.abs() <= ROUNDOFF_FLOOR)
        || values.windows(2).all(|w| w[1] < w[0])
}

fn within(x: f64, band: (f64, f64)) -> bool {
    x >= band.0 && x <= band.1
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(value) = std::env::var(THREADS_ENV) {
        let threads: usize = value
            .trim()
            .parse()
            .ok()
            .filter(|&t| t > 0)
            .ok_or_else(|| Error::Config(format!("{THREADS_ENV} must be a positive integer, got `{value}`")))?;
        builder = builder.num_threads(threads);
    }
    builder
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker threads: {e}")))
}

/// Runs `f` for every seed, in parallel, returning results in seed order.
fn per_seed<T: Send>(seeds: &[u64], f: impl Fn(u64) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    thread_pool()?.install(|| seeds.par_iter().map(|&s| f(s)).collect())
}

fn write_config(cfg: &ExperimentConfig, outcome: &mut CommandOutcome) -> Result<()> {
    let path = cfg.output_dir().join("config.toml");
    outcome.files.push(write_file(&path, &cfg.to_toml_string())?);
    Ok(())
}

fn meta(command: &str) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("command".into(), command.into());
    m
}

/// Writes one capitalization CSV per seed.
pub fn cmd_simulate(cfg: &ExperimentConfig) -> Result<CommandOutcome> {
    let start = cfg.market()?.start_date;
    let files = per_seed(&cfg.experiment.seeds, |seed| {
        let m = simulate_gbm(&cfg.gbm_spec(seed)?)?;
        let mut buf = Vec::new();
        write_caps_csv(&m, start, None, &mut buf)?;
        Ok((seed, String::from_utf8(buf).expect("csv is utf-8")))
    })?;
    let mut outcome = CommandOutcome::default();
    for (seed, text) in files {
        let path = cfg.output_dir().join(format!("market_seed{seed}.csv"));
        outcome.files.push(write_file(&path, &text)?);
    }
    write_config(cfg, &mut outcome)?;
    Ok(outcome)
}

/// Markets for decomposition: the ingested CSV, or one simulation per seed.
fn markets(cfg: &ExperimentConfig) -> Result<Vec<(Option<u64>, MarketPath)>> {
    match cfg.market()?.source {
        MarketSource::Csv => {
            let path = cfg.csv_path()?;
            let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
            Ok(vec![(None, ingest_caps_csv(file)?)])
        }
        MarketSource::Gbm => per_seed(&cfg.experiment.seeds, |seed| {
            Ok((Some(seed), simulate_gbm(&cfg.gbm_spec(seed)?)?))
        }),
    }
}

/// Decomposes the configured portfolio on each market and writes reports.
pub fn cmd_decompose(cfg: &ExperimentConfig) -> Result<CommandOutcome> {
    let rule = cfg.rule()?;
    let markets = markets(cfg)?;
    let reports = thread_pool()?.install(|| {
        markets
            .par_iter()
            .map(|(seed, m)| rule.decompose(m).map(|r| (*seed, m.n(), r)))
            .collect::<Result<Vec<_>>>()
    })?;

    let mut outcome = CommandOutcome::default();
    let format = cfg.experiment.format;
    for (seed, n, report) in &reports {
        let stem = match seed {
            Some(s) => format!("decomposition_seed{s}"),
            None => "decomposition".to_string(),
        };
        let mut meta = meta("decompose");
        meta.insert("portfolio".into(), rule.to_string().into());
        meta.insert("seed".into(), json!(seed));
        meta.insert("stocks".into(), json!(n));
        meta.insert("steps".into(), json!(report.trading.grid().steps()));
        meta.insert("warnings".into(), json!(report.warnings));
        if format.json() {
            let path = cfg.output_dir().join(format!("{stem}.json"));
            outcome.files.push(write_file(&path, &to_json(&report_document(report, meta)))?);
        }
        if format.csv() {
            let path = cfg.output_dir().join(format!("{stem}.csv"));
            outcome.files.push(write_file(&path, &wide_csv(&report.named_paths()))?);
        }
        let identity = report.diagnostic("identity_residual").unwrap_or(f64::NAN);
        let scale = 1.0 + report.relative_log_return.sup_norm();
        outcome.checks.push(Check::new(
            format!("{stem}: structural + trading = relative return"),
            identity <= ROUNDOFF_FLOOR * scale,
            format!("sup residual {identity:e}"),
        ));
    }
    write_config(cfg, &mut outcome)?;
    Ok(outcome)
}

/// One row of the refinement table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub seed: u64,
    pub steps: usize,
    pub tv_relative: f64,
    pub tv_trading: f64,
    pub sup_trading: f64,
    pub trading_vs_excess_growth: f64,
    /// `sup|structural − Δlog S(μ)|` (generated portfolios only).
    pub r1: Option<f64>,
    /// `sup|trading − Θ|` (generated portfolios only).
    pub r2: Option<f64>,
}

/// Medians across seeds at each refinement level, plus successive ratios
/// of those medians.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceSummary {
    pub portfolio: String,
    pub seeds: usize,
    pub steps: Vec<usize>,
    pub medians: BTreeMap<String, Vec<f64>>,
    pub median_ratios: BTreeMap<String, Vec<f64>>,
    pub checks: Vec<Check>,
}

impl ConvergenceSummary {
    pub fn median_of(&self, key: &str) -> &[f64] {
        self.medians.get(key).map_or(&[], Vec::as_slice)
    }

    pub fn ratios_of(&self, key: &str) -> &[f64] {
        self.median_ratios.get(key).map_or(&[], Vec::as_slice)
    }
}

/// Refinement study: every seed is simulated once on the finest grid and
/// observed at each requested step count.
pub fn convergence_study(
    cfg: &ExperimentConfig,
    rule: &WeightRule,
) -> Result<(Vec<ConvergenceRow>, ConvergenceSummary)> {
    let steps = cfg.experiment.refinements.clone();
    let finest = *steps.last().expect("validated non-empty");
    let per_seed_rows = per_seed(&cfg.experiment.seeds, |seed| {
        let mut spec = cfg.gbm_spec(seed)?;
        spec.steps = finest;
        let levels = refinement_levels(&simulate_gbm(&spec)?, &steps)?;
        levels
            .iter()
            .map(|m| {
                let r = rule.decompose(m)?;
                let d = |k: &str| r.diagnostic(k).unwrap_or(f64::NAN);
                Ok(ConvergenceRow {
                    seed,
                    steps: m.grid().steps(),
                    tv_relative: d("tv_relative"),
                    tv_trading: d("tv_trading"),
                    sup_trading: d("sup_trading"),
                    trading_vs_excess_growth: d("trading_vs_excess_growth"),
                    r1: r.diagnostic("structural_vs_generator"),
                    r2: r.diagnostic("trading_vs_drift"),
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let rows: Vec<ConvergenceRow> = per_seed_rows.into_iter().flatten().collect();

    let column = |f: &dyn Fn(&ConvergenceRow) -> Option<f64>| -> Vec<f64> {
        steps
            .iter()
            .map(|&s| {
                let vals: Vec<f64> = rows.iter().filter(|r| r.steps == s).filter_map(f).collect();
                median(&vals)
            })
            .collect()
    };
    let mut medians = BTreeMap::new();
    medians.insert("tv_relative".to_string(), column(&|r| Some(r.tv_relative)));
    medians.insert("tv_trading".to_string(), column(&|r| Some(r.tv_trading)));
    medians.insert("sup_trading".to_string(), column(&|r| Some(r.sup_trading)));
    medians.insert(
        "trading_vs_excess_growth".to_string(),
        column(&|r| Some(r.trading_vs_excess_growth)),
    );
    if rule.generator().is_some() {
        medians.insert("r1".to_string(), column(&|r| r.r1));
        medians.insert("r2".to_string(), column(&|r| r.r2));
    }
    let median_ratios: BTreeMap<String, Vec<f64>> = medians
        .iter()
        .map(|(k, v)| (k.clone(), successive_ratios(v)))
        .collect();

    let mut checks = Vec::new();
    let fmt = |v: &[f64]| {
        v.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(" -> ")
    };
    match rule.generator() {
        Some(g) => {
            for key in ["r1", "r2"] {
                let m = &medians[key];
                checks.push(Check::new(
                    format!("median {key} decreases under refinement"),
                    decreasing_or_exact(m),
                    fmt(m),
                ));
            }
            if *g != Builtin::Market && steps.len() > 1 {
                let rel = &median_ratios["tv_relative"];
                checks.push(Check::new(
                    "TV(relative return) grows like sqrt(2) per refinement",
                    rel.iter().all(|&r| within(r, RELATIVE_TV_RATIO_BAND)),
                    format!("ratios {}", fmt(rel)),
                ));
                let tr = &median_ratios["tv_trading"];
                checks.push(Check::new(
                    "TV(trading) stays bounded under refinement",
                    tr.iter().all(|&r| within(r, TRADING_TV_RATIO_BAND)),
                    format!("ratios {}", fmt(tr)),
                ));
            }
        }
        None => {
            let m = &medians["sup_trading"];
            checks.push(Check::new(
                "median sup|trading| decreases under refinement",
                decreasing_or_exact(m),
                fmt(m),
            ));
        }
    }

    let summary = ConvergenceSummary {
        portfolio: rule.to_string(),
        seeds: cfg.experiment.seeds.len(),
        steps,
        medians,
        median_ratios,
        checks,
    };
    Ok((rows, summary))
}

fn rows_csv(rows: &[ConvergenceRow]) -> String {
    let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut out = String::from(
        "seed,steps,tv_relative,tv_trading,sup_trading,trading_vs_excess_growth,r1,r2\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.seed,
            r.steps,
            r.tv_relative,
            r.tv_trading,
            r.sup_trading,
            r.trading_vs_excess_growth,
            cell(r.r1),
            cell(r.r2)
        ));
    }
    out
}

/// Runs the refinement study and writes the per-seed table and summary.
pub fn cmd_convergence(cfg: &ExperimentConfig) -> Result<CommandOutcome> {
    if cfg.market()?.source != MarketSource::Gbm {
        return Err(Error::Config("convergence studies need a gbm market".into()));
    }
    let rule = cfg.rule()?;
    let (rows, summary) = convergence_study(cfg, &rule)?;
    let mut outcome = CommandOutcome::default();
    let format = cfg.experiment.format;
    if format.csv() {
        let path = cfg.output_dir().join("convergence_table.csv");
        outcome.files.push(write_file(&path, &rows_csv(&rows))?);
    }
    if format.json() {
        let mut doc = meta("convergence");
        doc.insert("summary".into(), serde_json::to_value(&summary).expect("summary serializes"));
        let path = cfg.output_dir().join("convergence_summary.json");
        outcome.files.push(write_file(&path, &to_json(&doc))?);
    }
    outcome.checks = summary.checks.clone();
    write_config(cfg, &mut outcome)?;
    Ok(outcome)
}

/// Runs the index-membership swap scenario and writes its decomposition.
pub fn cmd_leapfrog(cfg: &ExperimentConfig) -> Result<CommandOutcome> {
    let spec = cfg.leapfrog()?;
    let out = leapfrog::run_leapfrog(spec)?;
    let mut outcome = CommandOutcome::default();
    let format = cfg.experiment.format;
    let mut meta = meta("leapfrog");
    meta.insert("index_size".into(), json!(spec.m));
    meta.insert("swapped".into(), json!(out.swapped.map(|(a, b)| [a, b])));
    meta.insert("relative_return".into(), json!(out.relative_return));
    meta.insert("structural".into(), json!(out.structural));
    meta.insert("trading".into(), json!(out.trading));
    meta.insert("trading_share".into(), json!(out.trading_share()));
    meta.insert("structural_share".into(), json!(out.structural_share()));
    if format.json() {
        let path = cfg.output_dir().join("leapfrog.json");
        outcome.files.push(write_file(&path, &to_json(&report_document(&out.report, meta)))?);
    }
    if format.csv() {
        let path = cfg.output_dir().join("leapfrog.csv");
        outcome.files.push(write_file(&path, &wide_csv(&out.report.named_paths()))?);
    }
    match (out.trading_share(), out.structural_share()) {
        (Some(t), Some(s)) => outcome.checks.push(Check::new(
            "loss attributed to trading",
            t >= LEAPFROG_TRADING_SHARE && s.abs() <= 1.0 - LEAPFROG_TRADING_SHARE,
            format!("trading share {t:.6}, structural share {s:.6}"),
        )),
        _ => {
            let sup = out.report.trading.sup_norm().max(out.report.structural_log.sup_norm());
            outcome.checks.push(Check::new(
                "no relative return, no trading",
                sup <= ROUNDOFF_FLOOR,
                format!("sup {sup:e}"),
            ));
        }
    }
    write_config(cfg, &mut outcome)?;
    Ok(outcome)
}
