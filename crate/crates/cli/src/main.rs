//! `wvdpen`: fit multiresolution sequences, run Monte Carlo rate sweeps,
//! print closed-form rate reports and check the estimator against the
//! exhaustive oracle.
//!
//! Exit codes: 0 success, 2 invalid input or configuration, 3 numerical
//! failure, 4 a check did not pass.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use wvdpen::config::ExperimentConfig;
use wvdpen::estimator::fit_multiscale;
use wvdpen::model::{classify_zone, HyperParams, MultiresSequence, NoiseSpec, Zone};
use wvdpen::penalty::PenaltyConfig;
use wvdpen::rates::{
    default_profile_end, rate_control, rate_control_in_zone, shell_geometry, shell_risk_profile,
};
use wvdpen::simulate::{
    fit_rate_exponent, oracle_equivalence_batch, oracle_inequality_check, sweep, McResult, OracleCheck, SignalKind,
};
use wvdpen::{Error, SCHEMA_VERSION};

const EXIT_INVALID: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_CHECK_FAILED: u8 = 4;

#[derive(Parser)]
#[command(name = "wvdpen", version, about = "Complexity-penalized thresholding for multiresolution inverse problems")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicates: Option<usize>,
    /// Output directory; JSON goes to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a multiresolution sequence read from JSON (`{"j0": .., "levels": [[..], ..]}`).
    Estimate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        /// Noise level; defaults to the first entry of the config's epsilon grid.
        #[arg(long)]
        epsilon: Option<f64>,
        /// Ill-posedness index; defaults to the config's gamma.beta, else 0.
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        nu: Option<f64>,
        #[arg(long)]
        zeta: Option<f64>,
    },
    /// Monte Carlo risk over the config's epsilon grid plus a log-log rate fit.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Rate exponent, rate value, critical indices and the shell-risk profile.
    Rates {
        #[command(flatten)]
        common: Common,
        /// `alpha,p,q,beta`
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        gamma: Option<Vec<f64>>,
        #[arg(long)]
        radius: Option<f64>,
        #[arg(long)]
        epsilon: Option<f64>,
        /// Force the zone used for the rate formulas (dense, sparse, critical).
        #[arg(long)]
        zone: Option<String>,
        /// Profile grid step in j.
        #[arg(long, default_value_t = 0.1)]
        step: f64,
    },
    /// Exhaustive oracle equivalence batch plus the oracle-inequality table.
    OracleCheck {
        #[command(flatten)]
        common: Common,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: cannot configure {t} threads: {e}");
            return ExitCode::from(EXIT_INVALID);
        }
    }
    let outcome = match cli.command {
        Command::Estimate { common, input, epsilon, beta, nu, zeta } => {
            cmd_estimate(&common, &input, epsilon, beta, nu, zeta)
        }
        Command::Sweep { common } => cmd_sweep(&common),
        Command::Rates { common, gamma, radius, epsilon, zone, step } => {
            cmd_rates(&common, gamma, radius, epsilon, zone, step)
        }
        Command::OracleCheck { common } => cmd_oracle_check(&common),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_CHECK_FAILED),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(Error::Numerical(_)) => EXIT_NUMERICAL,
        Some(_) => EXIT_INVALID,
        None if e.downcast_ref::<serde_json::Error>().is_some() => EXIT_INVALID,
        None => 1,
    }
}

fn load_config(common: &Common) -> anyhow::Result<Option<ExperimentConfig>> {
    let Some(path) = &common.config else { return Ok(None) };
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(r) = common.replicates {
        cfg.replicates = r;
    }
    if let Some(o) = &common.out {
        cfg.out_dir = Some(o.display().to_string());
    }
    Ok(Some(cfg.resolve()?))
}

fn require_config(common: &Common) -> anyhow::Result<ExperimentConfig> {
    load_config(common)?.ok_or_else(|| anyhow!(Error::Config("--config is required".into())))
}

fn out_dir(common: &Common, cfg: Option<&ExperimentConfig>) -> Option<PathBuf> {
    common.out.clone().or_else(|| cfg.and_then(|c| c.out_dir.as_ref().map(PathBuf::from)))
}

/// Writes `name` into `dir`, or prints JSON files to stdout without one.
fn emit(dir: Option<&Path>, name: &str, contents: &str) -> anyhow::Result<()> {
    match dir {
        Some(d) => {
            fs::create_dir_all(d).with_context(|| format!("cannot create {}", d.display()))?;
            let path = d.join(name);
            fs::write(&path, contents).with_context(|| format!("cannot write {}", path.display()))
        }
        None => {
            if name.ends_with(".json") {
                println!("{contents}");
            }
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> anyhow::Result<String> {
    Ok(serde_json::to_string_pretty(v)?)
}

fn cmd_estimate(
    common: &Common,
    input: &Path,
    epsilon: Option<f64>,
    beta: Option<f64>,
    nu: Option<f64>,
    zeta: Option<f64>,
) -> anyhow::Result<bool> {
    let cfg = load_config(common)?;
    let text = fs::read_to_string(input).with_context(|| format!("cannot read {}", input.display()))?;
    let y: MultiresSequence = serde_json::from_str(&text)?;

    let mut penalty = match &cfg {
        Some(c) => c.penalty()?,
        None => PenaltyConfig::default(),
    };
    if let Some(b) = beta {
        penalty.beta = b;
    }
    if let Some(v) = nu {
        penalty.nu = v;
    }
    if let Some(z) = zeta {
        penalty.zeta = z;
    }
    let eps = epsilon
        .or_else(|| cfg.as_ref().map(|c| c.epsilon_grid[0]))
        .ok_or_else(|| anyhow!(Error::Config("--epsilon or --config is required".into())))?;
    let noise = match &cfg {
        Some(c) => NoiseSpec { beta: penalty.beta, ..c.noise(eps) },
        None => NoiseSpec::white(eps, penalty.beta),
    };
    if noise.xi1 > penalty.xi1 {
        penalty.xi1 = noise.xi1;
    }
    let fit = fit_multiscale(&y, &penalty, &noise)?;
    let report = json!({
        "schema_version": SCHEMA_VERSION,
        "config": { "penalty": penalty, "noise": noise, "input": input.display().to_string(), "experiment": cfg },
        "fit": fit,
    });
    emit(out_dir(common, cfg.as_ref()).as_deref(), "fit.json", &to_json(&report)?)?;
    Ok(true)
}

#[derive(Serialize)]
struct SweepSummary {
    slope: f64,
    intercept: f64,
    r_hat: f64,
    r_theory: f64,
    relative_error: f64,
    /// Whether `mean_sse` was divided by the rate's log factor before fitting.
    log_corrected: bool,
    tolerance: Option<f64>,
    pass: Option<bool>,
}

fn cmd_sweep(common: &Common) -> anyhow::Result<bool> {
    let cfg = require_config(common)?;
    if cfg.epsilon_grid.len() < 4 {
        return Err(anyhow!(Error::Validation(format!(
            "sweep needs an epsilon grid of >= 4 points, got {}",
            cfg.epsilon_grid.len()
        ))));
    }
    let penalty = cfg.penalty()?;
    let template_eps = cfg.epsilon_grid[0];
    let results = sweep(
        &cfg.signal(template_eps),
        &penalty,
        &cfg.noise(template_eps),
        &cfg.epsilon_grid,
        cfg.replicates,
        cfg.seed,
    )?;

    let zone = classify_zone(&cfg.gamma);
    let log_corrected = zone != Zone::Dense;
    let mut points = Vec::with_capacity(results.len());
    let mut r_theory = f64::NAN;
    for res in &results {
        let rep = rate_control(&cfg.gamma, cfg.radius, res.epsilon)?;
        r_theory = rep.r;
        let base = cfg.radius.powf(2.0 * (1.0 - rep.r)) * res.epsilon.powf(2.0 * rep.r);
        let factor = if log_corrected { rep.rate_value / base } else { 1.0 };
        points.push((res.epsilon, res.mean_sse / factor));
    }
    let fit = fit_rate_exponent(&points)?;
    let relative_error = (fit.r_hat - r_theory).abs() / r_theory;
    let pass = cfg.rate_tolerance.map(|t| relative_error <= t);
    let summary = SweepSummary {
        slope: fit.slope,
        intercept: fit.intercept,
        r_hat: fit.r_hat,
        r_theory,
        relative_error,
        log_corrected,
        tolerance: cfg.rate_tolerance,
        pass,
    };

    let mut csv = String::from(McResult::CSV_HEADER);
    csv.push('\n');
    for r in &results {
        csv.push_str(&r.csv_row());
        csv.push('\n');
    }
    let report = json!({
        "schema_version": SCHEMA_VERSION,
        "config": cfg,
        "zone": zone,
        "results": results,
        "summary": summary,
    });
    let dir = out_dir(common, Some(&cfg));
    emit(dir.as_deref(), "sweep.csv", &csv)?;
    emit(dir.as_deref(), "sweep.json", &to_json(&report)?)?;
    Ok(pass.unwrap_or(true))
}

fn parse_zone(s: &str) -> anyhow::Result<Zone> {
    match s.to_ascii_lowercase().as_str() {
        "dense" => Ok(Zone::Dense),
        "sparse" => Ok(Zone::Sparse),
        "critical" => Ok(Zone::Critical),
        other => Err(anyhow!(Error::Validation(format!("unknown zone {other:?}")))),
    }
}

fn cmd_rates(
    common: &Common,
    gamma: Option<Vec<f64>>,
    radius: Option<f64>,
    epsilon: Option<f64>,
    zone: Option<String>,
    step: f64,
) -> anyhow::Result<bool> {
    let cfg = load_config(common)?;
    let gamma = match (gamma, &cfg) {
        (Some(g), _) if g.len() == 4 => HyperParams::new(g[0], g[1], g[2], g[3])?,
        (Some(g), _) => {
            return Err(anyhow!(Error::Validation(format!("--gamma needs alpha,p,q,beta, got {} values", g.len()))))
        }
        (None, Some(c)) => c.gamma,
        (None, None) => return Err(anyhow!(Error::Config("--gamma or --config is required".into()))),
    };
    let radius = radius.or(cfg.as_ref().map(|c| c.radius)).unwrap_or(1.0);
    let epsilon = epsilon
        .or_else(|| cfg.as_ref().map(|c| c.epsilon_grid[0]))
        .ok_or_else(|| anyhow!(Error::Config("--epsilon or --config is required".into())))?;
    gamma.validate()?;
    let report = match zone {
        Some(z) => rate_control_in_zone(&gamma, parse_zone(&z)?, radius, epsilon)?,
        None => rate_control(&gamma, radius, epsilon)?,
    };
    let geom = shell_geometry(&gamma, radius, epsilon)?;
    let profile = shell_risk_profile(&gamma, radius, epsilon, step, default_profile_end(&geom))?;

    let out = json!({
        "schema_version": SCHEMA_VERSION,
        "config": { "gamma": gamma, "radius": radius, "epsilon": epsilon, "step": step, "experiment": cfg },
        "report": report,
        "profile": { "j_star": profile.j_star, "j_plus": report.j_plus, "points": profile.points.len() },
    });
    let dir = out_dir(common, cfg.as_ref());
    emit(dir.as_deref(), "rates.json", &to_json(&out)?)?;
    emit(dir.as_deref(), "profile.csv", &profile.to_csv())?;
    Ok(true)
}

#[derive(Serialize)]
struct OracleRow {
    kind: SignalKind,
    epsilon: f64,
    #[serde(flatten)]
    check: OracleCheck,
}

fn cmd_oracle_check(common: &Common) -> anyhow::Result<bool> {
    let cfg = require_config(common)?;
    let oc = &cfg.oracle_check;
    let penalty = cfg.penalty()?;
    let equivalence = oracle_equivalence_batch(oc.max_n, oc.instances_per_n, &oc.betas, penalty.nu, cfg.seed)?;

    let mut rows = Vec::new();
    for (k, &kind) in oc.signal_kinds.iter().enumerate() {
        for (i, &eps) in cfg.epsilon_grid.iter().enumerate() {
            let spec = wvdpen::simulate::SignalSpec { kind, ..cfg.signal(eps) };
            let seed = cfg.seed.wrapping_add(((k as u64) << 32) + i as u64);
            let check = oracle_inequality_check(&spec, &penalty, &cfg.noise(eps), cfg.replicates, seed)?;
            rows.push(OracleRow { kind, epsilon: eps, check });
        }
    }
    rows.sort_by(|a, b| a.epsilon.total_cmp(&b.epsilon));
    let ratio_failures = rows.iter().filter(|r| r.check.ratio.is_nan() || r.check.ratio > 1.0).count();
    let pass = equivalence.mismatches == 0 && ratio_failures == 0;

    let report = json!({
        "schema_version": SCHEMA_VERSION,
        "seed": cfg.seed,
        "config": cfg,
        "equivalence": equivalence,
        "oracle_inequality": rows,
        "summary": {
            "mismatches": equivalence.mismatches,
            "ratio_failures": ratio_failures,
            "pass": pass,
        },
    });
    emit(out_dir(common, Some(&cfg)).as_deref(), "oracle_check.json", &to_json(&report)?)?;
    if !pass {
        eprintln!(
            "oracle check failed: {} equivalence mismatches, {} ratios above 1",
            equivalence.mismatches, ratio_failures
        );
    }
    Ok(pass)
}
