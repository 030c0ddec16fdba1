//! Penalized least-squares estimation: the monoscale order-statistic rule,
//! its exhaustive subset oracle, the ideal risk, and the level-by-level
//! multiscale estimator.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, validation, Error, Result};
use crate::model::{MultiresSequence, NoiseSpec};
use crate::penalty::{jeps, nu_at, penalty_table, threshold_t, PenaltyConfig};
use crate::serde_util::infinite_as_null;

/// Largest `n` accepted by [`subset_oracle`].
pub const SUBSET_ORACLE_MAX_N: usize = 20;

/// Result of penalized estimation on a single vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonoscaleFit {
    pub k_hat: usize,
    /// Data-scale threshold `eps * t_{k_hat}`; `+inf` (serialized as `null`)
    /// when nothing is kept.
    #[serde(with = "infinite_as_null")]
    pub threshold: f64,
    pub estimate: Vec<f64>,
    /// `sum_{i > k_hat} y_(i)^2 + eps^2 pen(k_hat)`.
    pub objective: f64,
}

impl MonoscaleFit {
    pub fn nonzeros(&self) -> usize {
        self.estimate.iter().filter(|x| **x != 0.0).count()
    }
}

fn check_inputs(y: &[f64], epsilon: f64) -> Result<()> {
    if y.is_empty() {
        return Err(validation("input vector must be non-empty"));
    }
    if let Some(x) = y.iter().find(|x| !x.is_finite()) {
        return Err(validation(format!("non-finite observation {x}")));
    }
    ensure_finite("epsilon", epsilon)?;
    if epsilon < 0.0 {
        return Err(validation(format!("epsilon must be >= 0, got {epsilon}")));
    }
    Ok(())
}

/// Minimizes `S(k) + eps^2 pen(k)` over `k = 0..=n` where `S(k)` is the sum
/// of squares of all but the `k` largest magnitudes. Returns the smallest
/// minimizer and the minimum.
fn scan_order_statistics(sq_desc: &[f64], pen: &[f64], eps2: f64) -> (usize, f64) {
    let n = sq_desc.len();
    // suffix[k] = sum_{i >= k} sq_desc[i], accumulated from the small end
    let mut suffix = vec![0.0; n + 1];
    for i in (0..n).rev() {
        suffix[i] = suffix[i + 1] + sq_desc[i];
    }
    let mut best = (0, suffix[0]);
    for k in 1..=n {
        let obj = suffix[k] + eps2 * pen[k];
        if obj < best.1 {
            best = (k, obj);
        }
    }
    best
}

fn squares_descending(y: &[f64]) -> Vec<f64> {
    let mut mags: Vec<f64> = y.iter().map(|v| v.abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    mags.into_iter().map(|m| m * m).collect()
}

/// Penalized least squares on one vector with noise scale `epsilon`:
/// selects `k_hat` over the order statistics of `|y|` and hard-thresholds at
/// `epsilon * t_{k_hat}`.
pub fn select_k(y: &[f64], cfg: &PenaltyConfig, epsilon: f64, nu_eff: f64) -> Result<MonoscaleFit> {
    check_inputs(y, epsilon)?;
    let n = y.len();
    let pen = penalty_table(cfg, n, nu_eff)?;
    let (k_hat, objective) = scan_order_statistics(&squares_descending(y), &pen, epsilon * epsilon);
    let threshold = if k_hat == 0 {
        f64::INFINITY
    } else {
        epsilon * threshold_t(cfg, n, k_hat, nu_eff)?
    };
    let estimate = y.iter().map(|&v| if v.abs() > threshold { v } else { 0.0 }).collect();
    Ok(MonoscaleFit { k_hat, threshold, estimate, objective })
}

/// `R(theta, eps) = min_k sum_{i > k} theta_(i)^2 + eps^2 pen(k)`.
pub fn ideal_risk(theta: &[f64], cfg: &PenaltyConfig, epsilon: f64, nu_eff: f64) -> Result<f64> {
    check_inputs(theta, epsilon)?;
    let pen = penalty_table(cfg, theta.len(), nu_eff)?;
    Ok(scan_order_statistics(&squares_descending(theta), &pen, epsilon * epsilon).1)
}

/// Exhaustive minimization of the complexity criterion
/// `C(J, y) = sum_{i not in J} y_i^2 + eps^2 pen(|J|)` over all `2^n`
/// supports. Returns the minimizing support (0-based, ascending) and the
/// minimum. Ties go to the smallest cardinality, then the lexicographically
/// smallest index list.
pub fn subset_oracle(
    y: &[f64],
    cfg: &PenaltyConfig,
    epsilon: f64,
    nu_eff: f64,
) -> Result<(Vec<usize>, f64)> {
    check_inputs(y, epsilon)?;
    let n = y.len();
    if n > SUBSET_ORACLE_MAX_N {
        return Err(Error::Size(format!(
            "subset oracle limited to n <= {SUBSET_ORACLE_MAX_N}, got {n}"
        )));
    }
    let pen = penalty_table(cfg, n, nu_eff)?;
    let eps2 = epsilon * epsilon;
    let full = (1usize << n) - 1;
    let sq: Vec<f64> = y.iter().map(|v| v * v).collect();

    // inside[mask] = sum_{i in mask} y_i^2, built by adding the lowest bit
    let mut inside = vec![0.0; full + 1];
    for mask in 1..=full {
        let low = mask.trailing_zeros() as usize;
        inside[mask] = inside[mask & (mask - 1)] + sq[low];
    }

    let mut best_mask = 0usize;
    let mut best_obj = inside[full];
    for mask in 1..=full {
        let obj = inside[full ^ mask] + eps2 * pen[mask.count_ones() as usize];
        if obj < best_obj || (obj == best_obj && support_precedes(mask, best_mask)) {
            best_mask = mask;
            best_obj = obj;
        }
    }
    let support = (0..n).filter(|i| best_mask >> i & 1 == 1).collect();
    Ok((support, best_obj))
}

fn support_precedes(a: usize, b: usize) -> bool {
    let (ca, cb) = (a.count_ones(), b.count_ones());
    if ca != cb {
        return ca < cb;
    }
    // lexicographic on ascending index lists: the first differing bit decides
    let diff = a ^ b;
    diff != 0 && a & (diff & diff.wrapping_neg()) != 0
}

/// `P_J y`.
pub fn project(y: &[f64], support: &[usize]) -> Vec<f64> {
    let mut out = vec![0.0; y.len()];
    for &i in support {
        out[i] = y[i];
    }
    out
}

/// Summary of the penalized fit at one level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelFit {
    pub j: usize,
    pub k_hat: usize,
    #[serde(with = "infinite_as_null")]
    pub threshold: f64,
    pub objective: f64,
    /// `eps_j`.
    pub noise_scale: f64,
    /// `nu_{n,j}`.
    pub nu_eff: f64,
}

/// Level-wise penalized estimate. Levels below `start_level` are copied from
/// the data.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultiscaleFit {
    pub schema_version: u32,
    #[serde(flatten)]
    pub estimate: MultiresSequence,
    pub start_level: usize,
    pub level_fits: Vec<LevelFit>,
}

impl MultiscaleFit {
    pub fn level_fit(&self, j: usize) -> Option<&LevelFit> {
        self.level_fits.iter().find(|f| f.j == j)
    }
}

/// The multiscale estimator starting at the coarsest stored level.
pub fn fit_multiscale(y: &MultiresSequence, cfg: &PenaltyConfig, noise: &NoiseSpec) -> Result<MultiscaleFit> {
    fit_multiscale_from(y, cfg, noise, y.j0())
}

/// Applies [`select_k`] at every level `j >= start_level` with noise scale
/// `eps_j = eps 2^{beta j}` and `nu_eff = nu_{n,j}`; levels below
/// `start_level` pass through unchanged.
pub fn fit_multiscale_from(
    y: &MultiresSequence,
    cfg: &PenaltyConfig,
    noise: &NoiseSpec,
    start_level: usize,
) -> Result<MultiscaleFit> {
    cfg.validate()?;
    noise.validate()?;
    check_consistent(cfg, noise)?;
    y.check_finite()?;
    let je = jeps(cfg, noise.epsilon)?;

    let results: Vec<Result<(Vec<f64>, Option<LevelFit>)>> = y
        .iter()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(j, lvl)| {
            if j < start_level {
                return Ok((lvl.to_vec(), None));
            }
            let eps_j = noise.level_scale(j);
            let nu_eff = nu_at(cfg.nu, je, j as f64);
            let fit = select_k(lvl, cfg, eps_j, nu_eff)?;
            let summary = LevelFit {
                j,
                k_hat: fit.k_hat,
                threshold: fit.threshold,
                objective: fit.objective,
                noise_scale: eps_j,
                nu_eff,
            };
            Ok((fit.estimate, Some(summary)))
        })
        .collect();

    let mut levels = Vec::with_capacity(results.len());
    let mut level_fits = Vec::new();
    for r in results {
        let (est, summary) = r?;
        levels.push(est);
        level_fits.extend(summary);
    }
    Ok(MultiscaleFit {
        schema_version: crate::SCHEMA_VERSION,
        estimate: MultiresSequence::new(y.j0(), levels)?,
        start_level,
        level_fits,
    })
}

pub(crate) fn check_consistent(cfg: &PenaltyConfig, noise: &NoiseSpec) -> Result<()> {
    if (cfg.beta - noise.beta).abs() > 1e-12 {
        return Err(validation(format!(
            "penalty beta = {} differs from noise beta = {}",
            cfg.beta, noise.beta
        )));
    }
    if cfg.xi1 < noise.xi1 {
        return Err(validation(format!(
            "penalty xi1 = {} is below the noise covariance bound xi1 = {}",
            cfg.xi1, noise.xi1
        )));
    }
    Ok(())
}

/// Per-level squared errors `||theta_hat_j - theta_j||^2`.
pub fn per_level_sse(estimate: &MultiresSequence, truth: &MultiresSequence) -> Result<Vec<f64>> {
    if !estimate.same_shape(truth) {
        return Err(validation(format!(
            "shape mismatch: fit covers levels {}..={}, truth covers {}..={}",
            estimate.j0(),
            estimate.jmax(),
            truth.j0(),
            truth.jmax()
        )));
    }
    Ok(estimate
        .levels()
        .iter()
        .zip(truth.levels())
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
        .collect())
}

/// `||theta_hat - theta||^2` over all stored levels, passthrough included.
pub fn empirical_risk(fit: &MultiscaleFit, truth: &MultiresSequence) -> Result<f64> {
    Ok(per_level_sse(&fit.estimate, truth)?.iter().sum())
}
