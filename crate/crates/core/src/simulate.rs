//! Signal generators on Besov balls, correlated noise sampling, Monte Carlo
//! risk estimation, log-log rate fits and the oracle-inequality check.
//!
//! All randomness flows from a `u64` seed. Replicate `i` uses the seed
//! `mix(seed, i)` and level `j` draws from ChaCha stream `j`, so results do
//! not depend on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Result};
use crate::estimator::{fit_multiscale_from, ideal_risk, per_level_sse, project, select_k, subset_oracle};
use crate::model::{classify_zone, membership, BesovBall, Covariance, HyperParams, MultiresSequence, NoiseSpec, Zone};
use crate::penalty::{jeps, ln_m_prime, nu_at, PenaltyConfig};
use crate::rates::{j_plus, j_star};

/// Largest level a default configuration will reach (`n_j <= 2^20`).
pub const DEFAULT_JMAX_CAP: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalKind {
    Zero,
    /// Equal magnitudes over every coordinate of level `round(j_*)`.
    ShellDense,
    /// Equal spikes at level `round(j_+)`.
    ShellSparse,
    /// Equal-magnitude dense shells on every stored level, sharing the
    /// budget equally in `l_q`.
    BesovSpread,
    /// Sparse blocks on levels `(floor(rho1 j_*), ceil(rho2 j_*)]`.
    CriticalPrior,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalSpec {
    pub kind: SignalKind,
    pub gamma: HyperParams,
    pub radius: f64,
    /// Noise level used to place the signal (through `j_*` and `j_+`).
    pub epsilon: f64,
    #[serde(default = "default_j0")]
    pub j0: usize,
    /// Finest stored level; `None` picks [`default_jmax`].
    #[serde(default)]
    pub jmax: Option<usize>,
    #[serde(default = "default_rho1")]
    pub rho1: f64,
    #[serde(default = "default_rho2")]
    pub rho2: f64,
    /// Lower noise eigenvalue bound entering the critical spike size.
    #[serde(default = "default_xi0")]
    pub xi0: f64,
}

fn default_j0() -> usize {
    1
}
fn default_rho1() -> f64 {
    1.1
}
fn default_rho2() -> f64 {
    1.4
}
fn default_xi0() -> f64 {
    1.0
}

impl SignalSpec {
    pub fn new(kind: SignalKind, gamma: HyperParams, radius: f64, epsilon: f64) -> Self {
        Self {
            kind,
            gamma,
            radius,
            epsilon,
            j0: default_j0(),
            jmax: None,
            rho1: default_rho1(),
            rho2: default_rho2(),
            xi0: default_xi0(),
        }
    }

    pub fn with_jmax(mut self, jmax: usize) -> Self {
        self.jmax = Some(jmax);
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn ball(&self) -> Result<BesovBall> {
        BesovBall::new(self.gamma, self.radius)
    }

    pub fn resolved_jmax(&self) -> Result<usize> {
        match self.jmax {
            Some(j) => Ok(j),
            None => default_jmax(self),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.gamma.validate()?;
        self.ball()?;
        if !(self.epsilon > 0.0 && self.epsilon < self.radius) {
            return Err(validation(format!(
                "signal placement requires 0 < epsilon < C, got epsilon = {}, C = {}",
                self.epsilon, self.radius
            )));
        }
        if self.j0 < 1 {
            return Err(validation("j0 must be >= 1"));
        }
        let jmax = self.resolved_jmax()?;
        if jmax < self.j0 {
            return Err(Error::Config(format!("jmax = {jmax} is below j0 = {}", self.j0)));
        }
        let zone = classify_zone(&self.gamma);
        match self.kind {
            SignalKind::ShellSparse if self.gamma.p >= 2.0 => {
                Err(Error::Config("shell_sparse requires p < 2".into()))
            }
            SignalKind::CriticalPrior => {
                if zone != Zone::Critical {
                    return Err(Error::Config(format!("critical_prior requires the critical zone, got {zone}")));
                }
                let upper = if self.gamma.beta > 0.0 {
                    (2.0 * self.gamma.beta + 1.0) / (2.0 * self.gamma.beta)
                } else {
                    f64::INFINITY
                };
                if !(1.0 < self.rho1 && self.rho1 < self.rho2 && self.rho2 < upper) {
                    return Err(Error::Config(format!(
                        "critical_prior requires 1 < rho1 < rho2 < (2 beta + 1)/(2 beta) = {upper}, got rho1 = {}, rho2 = {}",
                        self.rho1, self.rho2
                    )));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// `ceil(j_*) + 3` when `p >= 2` or the zone is dense, `ceil(j_+) + 3`
/// otherwise (and at least `ceil(rho2 j_*)` for the critical prior), capped
/// at [`DEFAULT_JMAX_CAP`].
pub fn default_jmax(spec: &SignalSpec) -> Result<usize> {
    let g = &spec.gamma;
    let zone = classify_zone(g);
    let js = j_star(g, spec.radius, spec.epsilon)?;
    let mut j = if g.p >= 2.0 || zone == Zone::Dense {
        js.ceil() + 3.0
    } else {
        j_plus(g, spec.radius, spec.epsilon)?.ceil() + 3.0
    };
    if spec.kind == SignalKind::CriticalPrior {
        j = j.max((spec.rho2 * js).ceil());
    }
    Ok((j.max(spec.j0 as f64) as usize).min(DEFAULT_JMAX_CAP))
}

fn level_radius(gamma: &HyperParams, radius: f64, j: usize) -> f64 {
    radius * 2f64.powf(-gamma.shell_exponent() * j as f64)
}

fn shell_level(spec: &SignalSpec, jmax: usize) -> Result<usize> {
    let g = &spec.gamma;
    let target = match spec.kind {
        SignalKind::ShellDense => j_star(g, spec.radius, spec.epsilon)?,
        SignalKind::ShellSparse => j_plus(g, spec.radius, spec.epsilon)?,
        _ => unreachable!("only shell kinds have a single level"),
    };
    let j = target.round().max(spec.j0 as f64) as usize;
    if j > jmax {
        return Err(Error::Config(format!("shell level {j} (from {target:.3}) exceeds jmax = {jmax}")));
    }
    Ok(j)
}

/// Single-level signals meeting `||theta_j||_p = C_j` exactly; also handles
/// `zero` and `besov_spread`.
pub fn make_shell_signal(spec: &SignalSpec) -> Result<MultiresSequence> {
    spec.validate()?;
    let g = &spec.gamma;
    let jmax = spec.resolved_jmax()?;
    let mut theta = MultiresSequence::zeros(spec.j0, jmax)?;
    match spec.kind {
        SignalKind::Zero => {}
        SignalKind::ShellDense => {
            let j = shell_level(spec, jmax)?;
            let n = (1usize << j) as f64;
            let mag = level_radius(g, spec.radius, j) * n.powf(-1.0 / g.p);
            theta.level_mut(j).unwrap().fill(mag);
        }
        SignalKind::ShellSparse => {
            let j = shell_level(spec, jmax)?;
            let n = 1usize << j;
            let c_j = level_radius(g, spec.radius, j);
            let eps_j = spec.epsilon * 2f64.powf(g.beta * j as f64);
            // n eta_j^p = (C_j / eps_j)^p
            let m = ((c_j / eps_j).powf(g.p).round() as usize).clamp(1, n);
            let mag = c_j * (m as f64).powf(-1.0 / g.p);
            theta.level_mut(j).unwrap()[..m].fill(mag);
        }
        SignalKind::BesovSpread => {
            let levels = (jmax - spec.j0 + 1) as f64;
            let share = if g.q.is_infinite() { 1.0 } else { levels.powf(-1.0 / g.q) };
            for j in spec.j0..=jmax {
                let n = (1usize << j) as f64;
                let mag = share * level_radius(g, spec.radius, j) * n.powf(-1.0 / g.p);
                theta.level_mut(j).unwrap().fill(mag);
            }
        }
        SignalKind::CriticalPrior => return make_critical_signal(spec),
    }
    Ok(theta)
}

/// Critical-zone construction: on each level of `(floor(rho1 j_*), ceil(rho2 j_*)]`,
/// `n_0j` spikes of size `delta_0j = c0 xi0 eps_j (log2(C/eps))^{1/2}` with
/// `n_0j = floor(c1 (C/eps)^p 2^{-2 beta j} J^{-p/q} (log2(C/eps))^{-p/2})`,
/// `J` the number of levels. `c1` (then `c0`) is halved from 1 until the
/// signal lies in the ball.
pub fn make_critical_signal(spec: &SignalSpec) -> Result<MultiresSequence> {
    if spec.kind != SignalKind::CriticalPrior {
        return Err(Error::Config("make_critical_signal needs kind critical_prior".into()));
    }
    spec.validate()?;
    let g = &spec.gamma;
    let jmax = spec.resolved_jmax()?;
    let js = j_star(g, spec.radius, spec.epsilon)?;
    let lo = ((spec.rho1 * js).floor() as usize + 1).max(spec.j0);
    let hi = (spec.rho2 * js).ceil() as usize;
    if hi > jmax {
        return Err(Error::Config(format!("critical levels reach {hi}, beyond jmax = {jmax}")));
    }
    if lo > hi {
        return Err(Error::Config(format!("critical level range ({lo}..={hi}) is empty")));
    }
    let ball = spec.ball()?;
    let snr = spec.radius / spec.epsilon;
    let log_snr = snr.log2();
    let count = (hi - lo + 1) as f64;
    let q_share = if g.q.is_infinite() { 1.0 } else { count.powf(-g.p / g.q) };

    // (level, count, magnitude) for given constants
    let blocks = |c0: f64, c1: f64| -> Vec<(usize, usize, f64)> {
        (lo..=hi)
            .filter_map(|j| {
                let jf = j as f64;
                let n0 = c1 * snr.powf(g.p) * 2f64.powf(-2.0 * g.beta * jf) * q_share * log_snr.powf(-g.p / 2.0);
                let n0 = (n0.floor() as usize).min(1usize << j);
                let delta = c0 * spec.xi0 * spec.epsilon * 2f64.powf(g.beta * jf) * log_snr.sqrt();
                (n0 > 0).then_some((j, n0, delta))
            })
            .collect()
    };
    let norm = |b: &[(usize, usize, f64)]| -> f64 {
        let shells = b.iter().map(|&(j, n0, d)| 2f64.powf(g.shell_exponent() * j as f64) * (n0 as f64).powf(1.0 / g.p) * d);
        if g.q.is_infinite() {
            shells.fold(0.0, f64::max)
        } else {
            shells.map(|v| v.powf(g.q)).sum::<f64>().powf(1.0 / g.q)
        }
    };

    let (mut c0, mut c1) = (1.0, 1.0);
    for _ in 0..400 {
        let b = blocks(c0, c1);
        if b.is_empty() {
            break;
        }
        if norm(&b) <= spec.radius {
            let mut theta = MultiresSequence::zeros(spec.j0, jmax)?;
            for (j, n0, d) in b {
                theta.level_mut(j).unwrap()[..n0].fill(d);
            }
            debug_assert!(membership(&theta, &ball));
            return Ok(theta);
        }
        if blocks(c0, c1 / 2.0).is_empty() {
            c0 /= 2.0;
        } else {
            c1 /= 2.0;
        }
    }
    Err(Error::Config("critical prior is infeasible: no level keeps n_0j >= 1 inside the ball".into()))
}

/// Generates the truth for any signal kind.
pub fn make_signal(spec: &SignalSpec) -> Result<MultiresSequence> {
    match spec.kind {
        SignalKind::CriticalPrior => make_critical_signal(spec),
        _ => make_shell_signal(spec),
    }
}

/// SplitMix64 finalizer, used to derive independent seeds.
pub fn mix_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fill_level(out: &mut [f64], cov: Covariance, scale: f64, rng: &mut ChaCha8Rng) {
    match cov {
        Covariance::Identity => {
            for v in out.iter_mut() {
                let w: f64 = StandardNormal.sample(rng);
                *v = scale * w;
            }
        }
        Covariance::Tridiagonal { rho } => {
            // lower bidiagonal Cholesky factor of the unit-diagonal tridiagonal
            // Toeplitz matrix: z_i = l_i w_{i-1} + d_i w_i
            let mut d_prev = 1.0;
            let mut w_prev: f64 = 0.0;
            for (i, v) in out.iter_mut().enumerate() {
                let w: f64 = StandardNormal.sample(rng);
                let z = if i == 0 {
                    w
                } else {
                    let l = rho / d_prev;
                    let d = (1.0 - l * l).sqrt();
                    d_prev = d;
                    l * w_prev + d * w
                };
                w_prev = w;
                *v = scale * z;
            }
        }
    }
}

/// `eps_j z_j` with `z_j ~ N(0, Sigma_j)` on levels `j0..=jmax`, drawn from
/// ChaCha stream `j` under `seed`.
pub fn sample_noise(noise: &NoiseSpec, j0: usize, jmax: usize, seed: u64) -> Result<MultiresSequence> {
    noise.validate()?;
    let mut out = MultiresSequence::zeros(j0, jmax)?;
    if noise.epsilon == 0.0 {
        return Ok(out);
    }
    for j in j0..=jmax {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(j as u64);
        fill_level(out.level_mut(j).unwrap(), noise.covariance, noise.level_scale(j), &mut rng);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McResult {
    pub schema_version: u32,
    pub replicates: usize,
    pub epsilon: f64,
    pub mean_sse: f64,
    pub stderr_sse: f64,
    /// Mean squared error per stored level, coarsest first.
    pub per_level_sse: Vec<f64>,
    pub j0: usize,
    pub jmax: usize,
    pub seed: u64,
    pub signal: SignalSpec,
    pub penalty: PenaltyConfig,
    pub noise: NoiseSpec,
}

impl McResult {
    pub const CSV_HEADER: &'static str = "epsilon,mean_sse,stderr,replicates";

    pub fn csv_row(&self) -> String {
        format!("{:.17e},{:.17e},{:.17e},{}", self.epsilon, self.mean_sse, self.stderr_sse, self.replicates)
    }
}

/// Monte Carlo estimate of `E ||theta_hat - theta||^2` at the fixed truth
/// generated from `spec`, fitting every stored level.
pub fn mc_risk(
    spec: &SignalSpec,
    cfg: &PenaltyConfig,
    noise: &NoiseSpec,
    replicates: usize,
    seed: u64,
) -> Result<McResult> {
    if replicates < 2 {
        return Err(validation(format!("replicates must be >= 2, got {replicates}")));
    }
    let truth = make_signal(spec)?;
    let j0 = truth.j0();
    let runs: Vec<Result<Vec<f64>>> = (0..replicates)
        .into_par_iter()
        .map(|i| {
            let z = sample_noise(noise, j0, truth.jmax(), mix_seed(seed, i as u64))?;
            let y = truth.add(&z)?;
            let fit = fit_multiscale_from(&y, cfg, noise, j0)?;
            per_level_sse(&fit.estimate, &truth)
        })
        .collect();

    let levels = truth.num_levels();
    let mut per_level = vec![0.0; levels];
    let mut totals = Vec::with_capacity(replicates);
    for run in runs {
        let sse = run?;
        for (acc, v) in per_level.iter_mut().zip(&sse) {
            *acc += v;
        }
        totals.push(sse.iter().sum::<f64>());
    }
    let nr = replicates as f64;
    per_level.iter_mut().for_each(|v| *v /= nr);
    let mean = totals.iter().sum::<f64>() / nr;
    let var = totals.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / (nr - 1.0);
    Ok(McResult {
        schema_version: crate::SCHEMA_VERSION,
        replicates,
        epsilon: noise.epsilon,
        mean_sse: mean,
        stderr_sse: (var / nr).sqrt(),
        per_level_sse: per_level,
        j0,
        jmax: truth.jmax(),
        seed,
        signal: *spec,
        penalty: *cfg,
        noise: *noise,
    })
}

/// Runs [`mc_risk`] at every `eps` in `grid` (signal placement and noise
/// level both set to `eps`), using seed `mix_seed(seed, i)` for the `i`-th
/// smallest value. Results are sorted by `eps`.
pub fn sweep(
    spec: &SignalSpec,
    cfg: &PenaltyConfig,
    noise: &NoiseSpec,
    grid: &[f64],
    replicates: usize,
    seed: u64,
) -> Result<Vec<McResult>> {
    let mut eps: Vec<f64> = grid.to_vec();
    eps.sort_by(f64::total_cmp);
    eps.iter()
        .enumerate()
        .map(|(i, &e)| {
            let spec_e = spec.with_epsilon(e);
            let noise_e = NoiseSpec { epsilon: e, ..*noise };
            mc_risk(&spec_e, cfg, &noise_e, replicates, mix_seed(seed, i as u64))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_hat: f64,
}

/// Least squares of `log2(mean_sse)` on `log2(eps)`; `r_hat = slope / 2`.
pub fn fit_rate_exponent(points: &[(f64, f64)]) -> Result<RateFit> {
    let mut distinct: Vec<f64> = points.iter().map(|p| p.0).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 4 {
        return Err(validation(format!("rate fit needs >= 4 distinct epsilon values, got {}", distinct.len())));
    }
    if distinct[0] <= 0.0 {
        return Err(validation("epsilon values must be > 0"));
    }
    if (distinct[distinct.len() - 1] / distinct[0]).log2() < 2.0 - 1e-12 {
        return Err(validation("epsilon values must span at least 2 octaves"));
    }
    if let Some(bad) = points.iter().find(|p| !(p.1 > 0.0)) {
        return Err(validation(format!("mean_sse must be > 0, got {} at epsilon = {}", bad.1, bad.0)));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.log2()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.log2()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    Ok(RateFit { slope, intercept: my - slope * mx, r_hat: slope / 2.0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

/// Right side of the oracle inequality for a fixed truth:
/// `D [2 sum_j xi1 M'_{n_j} eps_j^2 + sum_j R_j(theta_j, eps_j)]`, plus
/// `eps_j^2 tr Sigma_j` for levels below `start_level`.
pub fn oracle_bound(
    truth: &MultiresSequence,
    cfg: &PenaltyConfig,
    noise: &NoiseSpec,
    start_level: usize,
) -> Result<f64> {
    cfg.validate()?;
    noise.validate()?;
    let je = jeps(cfg, noise.epsilon)?;
    let s = cfg.log_weight();
    let mut complexity = 0.0;
    let mut ideal = 0.0;
    let mut passthrough = 0.0;
    for (j, theta_j) in truth.iter() {
        let eps_j = noise.level_scale(j);
        let n = theta_j.len();
        if j < start_level {
            passthrough += eps_j * eps_j * n as f64;
            continue;
        }
        let nu_j = nu_at(cfg.nu, je, j as f64);
        complexity += 2.0 * cfg.xi1 * ln_m_prime(s, (n as f64).ln(), nu_j).exp() * eps_j * eps_j;
        ideal += ideal_risk(theta_j, cfg, eps_j, nu_j)?;
    }
    Ok(cfg.oracle_constant() * (complexity + ideal) + passthrough)
}

/// Monte Carlo mean SSE against [`oracle_bound`].
pub fn oracle_inequality_check(
    spec: &SignalSpec,
    cfg: &PenaltyConfig,
    noise: &NoiseSpec,
    replicates: usize,
    seed: u64,
) -> Result<OracleCheck> {
    let mc = mc_risk(spec, cfg, noise, replicates, seed)?;
    let truth = make_signal(spec)?;
    let rhs = oracle_bound(&truth, cfg, noise, truth.j0())?;
    Ok(OracleCheck { lhs: mc.mean_sse, rhs, ratio: mc.mean_sse / rhs })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub instances: usize,
    pub mismatches: usize,
    pub max_n: usize,
    pub betas: Vec<f64>,
    pub nu: f64,
    pub seed: u64,
}

/// Compares [`select_k`] with the exhaustive [`subset_oracle`] on
/// `instances_per_n` standard normal vectors for every length `1..=max_n` and
/// every `beta` (`eps = 1`, `zeta = 2`, `xi1 = 1`). A mismatch is any
/// coordinate where the estimate differs from the projection onto the
/// oracle support.
pub fn oracle_equivalence_batch(
    max_n: usize,
    instances_per_n: usize,
    betas: &[f64],
    nu: f64,
    seed: u64,
) -> Result<EquivalenceReport> {
    let cells: Vec<(usize, f64)> = betas.iter().flat_map(|&b| (1..=max_n).map(move |n| (n, b))).collect();
    let counts: Vec<Result<usize>> = cells
        .par_iter()
        .enumerate()
        .map(|(idx, &(n, beta))| {
            let cfg = PenaltyConfig { zeta: 2.0, nu, beta, xi1: 1.0, jeps_scale: 1.0 };
            cfg.validate()?;
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, idx as u64));
            let mut y = vec![0.0; n];
            let mut bad = 0;
            for _ in 0..instances_per_n {
                for v in y.iter_mut() {
                    *v = StandardNormal.sample(&mut rng);
                }
                let fit = select_k(&y, &cfg, 1.0, nu)?;
                let (support, _) = subset_oracle(&y, &cfg, 1.0, nu)?;
                if fit.estimate != project(&y, &support) {
                    bad += 1;
                }
            }
            Ok(bad)
        })
        .collect();
    let mut mismatches = 0;
    for c in counts {
        mismatches += c?;
    }
    Ok(EquivalenceReport {
        instances: cells.len() * instances_per_n,
        mismatches,
        max_n,
        betas: betas.to_vec(),
        nu,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{besov_norm, lp_norm};

    fn g(alpha: f64, p: f64, q: f64, beta: f64) -> HyperParams {
        HyperParams::new(alpha, p, q, beta).unwrap()
    }

    fn white_cfg(beta: f64) -> (PenaltyConfig, NoiseSpec) {
        (PenaltyConfig { beta, ..PenaltyConfig::default() }, NoiseSpec::white(0.01, beta))
    }

    #[test]
    fn shell_dense_hits_radius() {
        let gm = g(1.0, 2.0, 2.0, 0.5);
        let spec = SignalSpec::new(SignalKind::ShellDense, gm, 1.0, 2f64.powi(-10));
        let theta = make_shell_signal(&spec).unwrap();
        let j = 5;
        let lvl = theta.level(j).unwrap();
        let c_j = 2f64.powf(-gm.shell_exponent() * j as f64);
        assert!((lp_norm(lvl, 2.0) - c_j).abs() <= 1e-14 * c_j);
        assert!((lvl[0] - c_j / (32f64).sqrt()).abs() <= 1e-15);
        assert!((besov_norm(&theta, &gm).unwrap() - 1.0).abs() < 1e-13);
        assert!(membership(&theta, &spec.ball().unwrap()));
        assert_eq!(theta.jmax(), 8);
    }

    #[test]
    fn shell_sparse_spikes() {
        let gm = g(0.75, 1.0, 1.0, 0.5);
        let eps = 2f64.powi(-12);
        let spec = SignalSpec::new(SignalKind::ShellSparse, gm, 1.0, eps);
        let theta = make_shell_signal(&spec).unwrap();
        let jp = j_plus(&gm, 1.0, eps).unwrap();
        let j = jp.round() as usize;
        let lvl = theta.level(j).unwrap();
        let m = lvl.iter().filter(|v| **v != 0.0).count();
        let c_j = 2f64.powf(-gm.shell_exponent() * j as f64);
        let eps_j = eps * 2f64.powf(0.5 * j as f64);
        assert_eq!(m, (c_j / eps_j).round().max(1.0) as usize);
        assert!((lp_norm(lvl, 1.0) - c_j).abs() <= 1e-13 * c_j);
        // total spike mass sits at eps_j (1 + log n_j)^{1/2} up to the level rounding
        let target = eps_j * (1.0 + j as f64 * std::f64::consts::LN_2).sqrt();
        let ratio = c_j / target;
        assert!(ratio > 0.5 && ratio < 2.0, "{ratio}");
        assert!(membership(&theta, &spec.ball().unwrap()));
    }

    #[test]
    fn spread_and_zero_in_ball() {
        let gm = g(0.75, 1.0, 2.0, 0.5);
        let spec = SignalSpec::new(SignalKind::BesovSpread, gm, 2.0, 2f64.powi(-8)).with_jmax(9);
        let theta = make_signal(&spec).unwrap();
        assert!((besov_norm(&theta, &gm).unwrap() - 2.0).abs() < 1e-12);
        assert!(membership(&theta, &spec.ball().unwrap()));
        let zero = make_signal(&SignalSpec { kind: SignalKind::Zero, ..spec }).unwrap();
        assert!(zero.levels().iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn shell_beyond_jmax_is_config_error() {
        let gm = g(1.0, 2.0, 2.0, 0.5);
        let spec = SignalSpec::new(SignalKind::ShellDense, gm, 1.0, 2f64.powi(-20)).with_jmax(4);
        assert!(matches!(make_shell_signal(&spec), Err(Error::Config(_))));
    }

    #[test]
    fn critical_prior_membership_and_energy() {
        let gm = g(1.0, 1.0, 2.0, 0.5);
        assert_eq!(classify_zone(&gm), Zone::Critical);
        let mut energies = Vec::new();
        for k in [16, 20, 24, 28] {
            let eps = 2f64.powi(-k);
            let spec = SignalSpec::new(SignalKind::CriticalPrior, gm, 1.0, eps).with_jmax(20);
            let theta = make_critical_signal(&spec).unwrap();
            assert!(membership(&theta, &spec.ball().unwrap()));
            let energy: f64 = theta.levels().iter().flatten().map(|v| v * v).sum();
            let snr: f64 = 1.0 / eps;
            let shape = eps * eps * snr.powf(gm.p) * snr.ln().powf((1.0 - gm.p / 2.0) + (1.0 - gm.p / gm.q));
            energies.push(energy / shape);
        }
        let (lo, hi) = energies.iter().fold((f64::MAX, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
        assert!(lo > 0.0 && hi / lo < 8.0, "{energies:?}");
    }

    #[test]
    fn critical_prior_single_level() {
        let gm = g(1.0, 1.0, 2.0, 0.5);
        let spec = SignalSpec { rho1: 1.2, rho2: 1.2001, ..SignalSpec::new(SignalKind::CriticalPrior, gm, 1.0, 2f64.powi(-20)) }
            .with_jmax(20);
        let theta = make_critical_signal(&spec).unwrap();
        let active = theta.iter().filter(|(_, l)| l.iter().any(|v| *v != 0.0)).count();
        assert_eq!(active, 1);
    }

    #[test]
    fn critical_prior_rejects_bad_rho() {
        let gm = g(1.0, 1.0, 2.0, 0.5);
        let spec = SignalSpec { rho1: 0.9, ..SignalSpec::new(SignalKind::CriticalPrior, gm, 1.0, 2f64.powi(-20)) };
        assert!(matches!(make_critical_signal(&spec), Err(Error::Config(_))));
    }

    #[test]
    fn white_noise_mean_near_zero() {
        let noise = NoiseSpec::white(1.0, 0.0);
        let reps = 10_000;
        let mean: f64 = (0..reps)
            .map(|i| sample_noise(&noise, 1, 1, mix_seed(3, i)).unwrap().level(1).unwrap()[0])
            .sum::<f64>()
            / reps as f64;
        assert!(mean.abs() < 4.0 / (reps as f64).sqrt(), "{mean}");
    }

    #[test]
    fn tridiagonal_lag_one_correlation() {
        let noise = NoiseSpec::tridiagonal(1.0, 0.0, 0.3);
        let z = sample_noise(&noise, 14, 14, 5).unwrap();
        let v = z.level(14).unwrap();
        let n = v.len() as f64;
        let var = v.iter().map(|x| x * x).sum::<f64>() / n;
        let lag = v.windows(2).map(|w| w[0] * w[1]).sum::<f64>() / (n - 1.0);
        let lag2 = v.windows(3).map(|w| w[0] * w[2]).sum::<f64>() / (n - 2.0);
        assert!((lag / var - 0.3).abs() < 0.02, "{}", lag / var);
        assert!((var - 1.0).abs() < 0.04, "{var}");
        assert!(lag2.abs() < 0.04, "{lag2}");
        assert!(sample_noise(&NoiseSpec::tridiagonal(1.0, 0.0, 0.5), 1, 3, 1).is_err());
    }

    #[test]
    fn zero_noise_is_zero() {
        let z = sample_noise(&NoiseSpec::white(0.0, 0.5), 1, 6, 9).unwrap();
        assert!(z.levels().iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn noise_levels_independent_of_range() {
        let noise = NoiseSpec::white(0.1, 0.5);
        let a = sample_noise(&noise, 1, 6, 42).unwrap();
        let b = sample_noise(&noise, 4, 8, 42).unwrap();
        assert_eq!(a.level(5), b.level(5));
        assert_ne!(a.level(5), a.level(6).map(|l| &l[..32]));
    }

    #[test]
    fn mc_zero_signal_zero_noise() {
        let gm = g(1.0, 2.0, 2.0, 0.0);
        let (cfg, _) = white_cfg(0.0);
        let spec = SignalSpec::new(SignalKind::Zero, gm, 1.0, 0.01).with_jmax(6);
        let noise = NoiseSpec::white(0.0, 0.0);
        let res = mc_risk(&spec, &cfg, &noise, 4, 1).unwrap();
        assert_eq!(res.mean_sse, 0.0);
        assert_eq!(res.stderr_sse, 0.0);
    }

    #[test]
    fn mc_zero_signal_under_complexity_term() {
        let gm = g(1.0, 2.0, 2.0, 0.0);
        let (cfg, noise) = white_cfg(0.0);
        let spec = SignalSpec::new(SignalKind::Zero, gm, 1.0, noise.epsilon).with_jmax(10);
        let res = mc_risk(&spec, &cfg, &noise, 50, 2).unwrap();
        let je = jeps(&cfg, noise.epsilon).unwrap();
        for (i, sse) in res.per_level_sse.iter().enumerate() {
            let j = res.j0 + i;
            let m = ln_m_prime(1.0, (j as f64) * std::f64::consts::LN_2, nu_at(cfg.nu, je, j as f64)).exp();
            let bound = cfg.oracle_constant() * 2.0 * m * cfg.xi1 * noise.epsilon.powi(2);
            assert!(*sse <= bound, "level {j}: {sse} > {bound}");
        }
    }

    #[test]
    fn mc_is_deterministic() {
        let gm = g(1.0, 2.0, 2.0, 0.5);
        let (cfg, noise) = white_cfg(0.5);
        let spec = SignalSpec::new(SignalKind::ShellDense, gm, 1.0, noise.epsilon);
        let a = mc_risk(&spec, &cfg, &noise, 8, 77).unwrap();
        let b = mc_risk(&spec, &cfg, &noise, 8, 77).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let za = sample_noise(&noise, 1, 4, mix_seed(77, 0)).unwrap();
        let zb = sample_noise(&noise, 1, 4, mix_seed(78, 0)).unwrap();
        assert_ne!(za, zb);
        assert!(mc_risk(&spec, &cfg, &noise, 1, 77).is_err());
    }

    #[test]
    fn mc_mean_stable_under_doubling() {
        let gm = g(1.0, 2.0, 2.0, 0.5);
        let (cfg, noise) = white_cfg(0.5);
        let spec = SignalSpec::new(SignalKind::ShellDense, gm, 1.0, noise.epsilon);
        let a = mc_risk(&spec, &cfg, &noise, 100, 5).unwrap();
        let b = mc_risk(&spec, &cfg, &noise, 200, 6).unwrap();
        let se = (a.stderr_sse.powi(2) + b.stderr_sse.powi(2)).sqrt();
        assert!((a.mean_sse - b.mean_sse).abs() <= 3.0 * se, "{} {} {se}", a.mean_sse, b.mean_sse);
    }

    #[test]
    fn rate_fit_exact_power_law() {
        let pts: Vec<(f64, f64)> = (4..10).map(|k| (2f64.powi(-k), 2f64.powi(-k).powf(0.8))).collect();
        let fit = fit_rate_exponent(&pts).unwrap();
        assert!((fit.r_hat - 0.4).abs() < 1e-12);
        assert!(fit.intercept.abs() < 1e-12);
        assert!(fit_rate_exponent(&pts[..3]).is_err());
        let narrow: Vec<(f64, f64)> = (0..4).map(|k| (1.0 + 0.1 * k as f64, 1.0)).collect();
        assert!(fit_rate_exponent(&narrow).is_err());
        let mut bad = pts.clone();
        bad[0].1 = 0.0;
        assert!(fit_rate_exponent(&bad).is_err());
    }

    #[test]
    fn oracle_constant_and_zero_signal_ratio() {
        let gm = g(1.0, 2.0, 2.0, 0.0);
        let (cfg, noise) = white_cfg(0.0);
        assert_eq!(cfg.oracle_constant(), 108.0);
        let spec = SignalSpec::new(SignalKind::Zero, gm, 1.0, noise.epsilon).with_jmax(8);
        let chk = oracle_inequality_check(&spec, &cfg, &noise, 20, 4).unwrap();
        assert!(chk.ratio <= 1.0, "{chk:?}");
    }

    #[test]
    fn equivalence_batch_small() {
        let rep = oracle_equivalence_batch(6, 50, &[0.0, 0.5], 40.0, 9).unwrap();
        assert_eq!(rep.instances, 600);
        assert_eq!(rep.mismatches, 0);
        assert!(oracle_equivalence_batch(21, 1, &[0.0], 40.0, 9).is_err());
    }

    #[test]
    fn sweep_sorted_and_echoing() {
        let gm = g(1.0, 2.0, 2.0, 0.5);
        let (cfg, noise) = white_cfg(0.5);
        let spec = SignalSpec::new(SignalKind::ShellDense, gm, 1.0, 0.1);
        let res = sweep(&spec, &cfg, &noise, &[2f64.powi(-4), 2f64.powi(-6), 2f64.powi(-5)], 3, 1).unwrap();
        let eps: Vec<f64> = res.iter().map(|r| r.epsilon).collect();
        assert_eq!(eps, vec![2f64.powi(-6), 2f64.powi(-5), 2f64.powi(-4)]);
        assert!(res.iter().all(|r| r.signal.epsilon == r.epsilon && r.noise.epsilon == r.epsilon));
        assert!(res[0].csv_row().split(',').count() == 4);
    }
}
