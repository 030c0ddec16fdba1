//! Closed-form risk theory: control functions for `l_p` balls, rate
//! exponents per zone, the critical indices `j_*` and `j_+`, shell risks
//! `R_j = eps_j^2 r_{n_j,p}(C_j / eps_j)` and the assembled upper bound, plus
//! the asymptotic `l_p`-ball minimax values used as lower-bound anchors.
//!
//! Level indices are real-valued throughout; integer levels only appear when
//! summing the upper bound over actual resolution levels.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, validation, Result};
use crate::model::{classify_zone, HyperParams, Zone};
use crate::penalty::{jeps, ln_m_prime, nu_at, PenaltyConfig};
use crate::serde_util::nonfinite_as_null;

const LN2: f64 = std::f64::consts::LN_2;

/// Constant in `sup_{l_{n,p}(C)} R(theta, eps) <= c (log nu) eps^2 r_{n,p}(C/eps)`,
/// per unit of `xi1 zeta (1 + 2 beta)`.
///
/// Fully dense vectors give the ratio `(1 + sqrt(2x))^2 / x` with
/// `x = (1 + 2 beta) log nu > 1`, whose supremum is `(1 + sqrt 2)^2`. No
/// vector on the calibration grid in `tests/ideal_risk_calibration.rs` did
/// worse (largest ratio 5.616).
pub const IDEAL_RISK_CONSTANT: f64 = (1.0 + std::f64::consts::SQRT_2) * (1.0 + std::f64::consts::SQRT_2);

/// `c` of the ideal-risk bound for a given penalty.
pub fn ideal_risk_constant(cfg: &PenaltyConfig) -> f64 {
    IDEAL_RISK_CONSTANT * cfg.xi1 * cfg.zeta * cfg.log_weight()
}

/// `r_{n,p}(C)`, evaluated branch by branch as written; `n` may be real
/// (`n >= 1`).
pub fn control_function(n: f64, p: f64, c: f64) -> Result<f64> {
    ensure_finite("C", c)?;
    if c < 0.0 {
        return Err(validation(format!("C must be >= 0, got {c}")));
    }
    if !(n >= 1.0 && n.is_finite()) {
        return Err(validation(format!("n must be >= 1, got {n}")));
    }
    if !(p > 0.0) {
        return Err(validation(format!("p must be > 0, got {p}")));
    }
    Ok(control_function_unchecked(n, p, c))
}

fn control_function_unchecked(n: f64, p: f64, c: f64) -> f64 {
    let dense_edge = n.powf(1.0 / p);
    if p < 2.0 {
        if c <= (1.0 + n.ln()).sqrt() {
            c * c
        } else if c <= dense_edge {
            let cp = c.powf(p);
            cp * (1.0 + (n / cp).ln()).powf(1.0 - p / 2.0)
        } else {
            n
        }
    } else if c <= dense_edge {
        n.powf(1.0 - 2.0 / p) * c * c
    } else {
        n
    }
}

/// The rate exponent `r` for an explicitly chosen zone.
pub fn rate_exponent_in_zone(gamma: &HyperParams, zone: Zone) -> Result<f64> {
    let HyperParams { alpha, p, beta, .. } = *gamma;
    match zone {
        Zone::Dense => Ok(2.0 * alpha / (2.0 * alpha + 2.0 * beta + 1.0)),
        Zone::Sparse => Ok((2.0 * alpha - 2.0 / p + 1.0) / (2.0 * alpha + 2.0 * beta - 2.0 / p + 1.0)),
        Zone::Critical => Ok(1.0 - p / 2.0),
        Zone::Invalid => Err(validation(format!("no rate exponent for invalid parameters {gamma:?}"))),
    }
}

/// The rate exponent `r` for the zone `gamma` falls in.
pub fn rate_exponent(gamma: &HyperParams) -> Result<f64> {
    let zone = classify_zone(gamma);
    if zone == Zone::Invalid {
        gamma.validate()?;
    }
    rate_exponent_in_zone(gamma, zone)
}

fn check_snr(c: f64, epsilon: f64) -> Result<()> {
    ensure_finite("C", c)?;
    ensure_finite("epsilon", epsilon)?;
    if !(epsilon > 0.0 && epsilon < c) {
        return Err(validation(format!("requires 0 < epsilon < C, got epsilon = {epsilon}, C = {c}")));
    }
    Ok(())
}

/// `j_* = log2(C / eps) / (alpha + beta + 1/2)`.
pub fn j_star(gamma: &HyperParams, c: f64, epsilon: f64) -> Result<f64> {
    check_snr(c, epsilon)?;
    Ok((c / epsilon).log2() / (gamma.alpha + gamma.beta + 0.5))
}

/// `delta = alpha + beta - 1/p + 1/2`.
pub fn sparse_decay(gamma: &HyperParams) -> f64 {
    gamma.alpha + gamma.beta - 1.0 / gamma.p + 0.5
}

/// Root of `2^{delta j} (1 + j log 2)^{1/2} = C / eps`, the sparse/highly
/// sparse boundary; only meaningful for `p < 2`.
pub fn j_plus(gamma: &HyperParams, c: f64, epsilon: f64) -> Result<f64> {
    if !(gamma.p < 2.0) {
        return Err(validation(format!("j_plus requires p < 2, got p = {}", gamma.p)));
    }
    if c == epsilon && c > 0.0 {
        return Ok(0.0);
    }
    check_snr(c, epsilon)?;
    let delta = sparse_decay(gamma);
    if !(delta > 0.0) {
        return Err(validation(format!("j_plus requires delta = alpha + beta - 1/p + 1/2 > 0, got {delta}")));
    }
    let target = (c / epsilon).ln();
    let f = |j: f64| delta * j * LN2 + 0.5 * (1.0 + j * LN2).ln() - target;
    // f(0) = -target < 0 and f(target / (delta ln 2)) >= 0
    let (mut lo, mut hi) = (0.0, target / (delta * LN2));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi.max(1.0) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `R_j = eps_j^2 r_{n_j,p}(C_j / eps_j)` with `n_j = 2^j` treated as real.
pub fn shell_risk(gamma: &HyperParams, c: f64, epsilon: f64, j: f64) -> f64 {
    let n = 2f64.powf(j);
    let eps_j = epsilon * 2f64.powf(gamma.beta * j);
    let c_j = c * 2f64.powf(-gamma.shell_exponent() * j);
    eps_j * eps_j * control_function_unchecked(n, gamma.p, c_j / eps_j)
}

/// Which branch of the control function level `j` falls in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShellRegime {
    LargeSignal,
    Sparse,
    HighlySparse,
    SmallSignal,
}

impl ShellRegime {
    pub fn label(&self) -> &'static str {
        match self {
            ShellRegime::LargeSignal => "large-signal",
            ShellRegime::Sparse => "sparse",
            ShellRegime::HighlySparse => "highly-sparse",
            ShellRegime::SmallSignal => "small-signal",
        }
    }
}

/// Critical indices and peak shell risks for one `(gamma, C, eps)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShellGeometry {
    pub j_star: f64,
    /// NaN when `p >= 2`.
    pub j_plus: f64,
    pub r_star: f64,
    /// NaN when `p >= 2`.
    pub r_plus: f64,
}

pub fn shell_geometry(gamma: &HyperParams, c: f64, epsilon: f64) -> Result<ShellGeometry> {
    let js = j_star(gamma, c, epsilon)?;
    let r_star = epsilon * epsilon * 2f64.powf((2.0 * gamma.beta + 1.0) * js);
    let (jp, r_plus) = if gamma.p < 2.0 {
        let jp = j_plus(gamma, c, epsilon)?;
        (jp, c * c * 2f64.powf(-2.0 * gamma.shell_exponent() * jp))
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(ShellGeometry { j_star: js, j_plus: jp, r_star, r_plus })
}

pub fn shell_regime(gamma: &HyperParams, geom: &ShellGeometry, j: f64) -> ShellRegime {
    if j <= geom.j_star {
        ShellRegime::LargeSignal
    } else if gamma.p >= 2.0 {
        ShellRegime::SmallSignal
    } else if j < geom.j_plus {
        ShellRegime::Sparse
    } else {
        ShellRegime::HighlySparse
    }
}

/// Piecewise closed form of the shell risk in terms of `R_*`, `R_+`, `j_*`,
/// `j_+`, `rho = alpha - (2 beta + 1)(1/p - 1/2)` and
/// `phi = p (alpha + beta + 1/2) log 2`.
pub fn shell_risk_closed_form(gamma: &HyperParams, geom: &ShellGeometry, j: f64) -> f64 {
    let HyperParams { alpha, p, beta, .. } = *gamma;
    let d = j - geom.j_star;
    match shell_regime(gamma, geom, j) {
        ShellRegime::LargeSignal => geom.r_star * 2f64.powf((2.0 * beta + 1.0) * d),
        ShellRegime::SmallSignal => geom.r_star * 2f64.powf(-2.0 * alpha * d),
        ShellRegime::Sparse => {
            let rho = alpha - gamma.zone_boundary();
            let phi = p * (alpha + beta + 0.5) * LN2;
            geom.r_star * 2f64.powf(-p * rho * d) * (1.0 + phi * d).powf(1.0 - p / 2.0)
        }
        ShellRegime::HighlySparse => {
            geom.r_plus * 2f64.powf(-2.0 * gamma.shell_exponent() * (j - geom.j_plus))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub j: f64,
    pub risk: f64,
    pub regime: ShellRegime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShellRiskProfile {
    #[serde(with = "nonfinite_as_null")]
    pub j_star: f64,
    #[serde(with = "nonfinite_as_null")]
    pub j_plus: f64,
    #[serde(rename = "R_star", with = "nonfinite_as_null")]
    pub r_star: f64,
    #[serde(rename = "R_plus", with = "nonfinite_as_null")]
    pub r_plus: f64,
    pub points: Vec<ProfilePoint>,
}

impl ShellRiskProfile {
    /// CSV with columns `j,R_j,zone_label`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("j,R_j,zone_label\n");
        for pt in &self.points {
            out.push_str(&format!("{:.4},{:.17e},{}\n", pt.j, pt.risk, pt.regime.label()));
        }
        out
    }
}

/// Shell risks on the grid `0, step, 2 step, ...` up to `j_end` inclusive.
pub fn shell_risk_profile(
    gamma: &HyperParams,
    c: f64,
    epsilon: f64,
    step: f64,
    j_end: f64,
) -> Result<ShellRiskProfile> {
    if !(step > 0.0) {
        return Err(validation("profile step must be > 0"));
    }
    let geom = shell_geometry(gamma, c, epsilon)?;
    let count = (j_end / step + 1e-9).floor().max(0.0) as usize;
    let points = (0..=count)
        .map(|i| {
            let j = i as f64 * step;
            ProfilePoint { j, risk: shell_risk(gamma, c, epsilon, j), regime: shell_regime(gamma, &geom, j) }
        })
        .collect();
    Ok(ShellRiskProfile {
        j_star: geom.j_star,
        j_plus: geom.j_plus,
        r_star: geom.r_star,
        r_plus: geom.r_plus,
        points,
    })
}

/// Default profile extent: 5 levels past the last critical index.
pub fn default_profile_end(geom: &ShellGeometry) -> f64 {
    if geom.j_plus.is_finite() {
        geom.j_plus + 5.0
    } else {
        geom.j_star + 5.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub gamma: HyperParams,
    pub radius: f64,
    pub epsilon: f64,
    pub zone: Zone,
    pub r: f64,
    pub rate_value: f64,
    pub j_star: f64,
    #[serde(with = "nonfinite_as_null")]
    pub j_plus: f64,
    #[serde(rename = "R_star")]
    pub r_star: f64,
    #[serde(rename = "R_plus", with = "nonfinite_as_null")]
    pub r_plus: f64,
}

/// `R(C, eps; gamma)` together with the shell geometry.
pub fn rate_control(gamma: &HyperParams, c: f64, epsilon: f64) -> Result<RateReport> {
    gamma.validate()?;
    rate_control_in_zone(gamma, classify_zone(gamma), c, epsilon)
}

pub fn rate_control_in_zone(gamma: &HyperParams, zone: Zone, c: f64, epsilon: f64) -> Result<RateReport> {
    check_snr(c, epsilon)?;
    let r = rate_exponent_in_zone(gamma, zone)?;
    let base = c.powf(2.0 * (1.0 - r)) * epsilon.powf(2.0 * r);
    let log_factor = 1.0 + (c / epsilon).ln();
    let rate_value = match zone {
        Zone::Dense => base,
        Zone::Sparse => base * log_factor.powf(r),
        Zone::Critical => base * log_factor.powf(r + (1.0 - gamma.p / gamma.q).max(0.0)),
        Zone::Invalid => unreachable!("rejected by rate_exponent_in_zone"),
    };
    let geom = shell_geometry(gamma, c, epsilon)?;
    Ok(RateReport {
        gamma: *gamma,
        radius: c,
        epsilon,
        zone,
        r,
        rate_value,
        j_star: geom.j_star,
        j_plus: geom.j_plus,
        r_star: geom.r_star,
        r_plus: geom.r_plus,
    })
}

/// Extra levels summed explicitly past `j_eps` before the `T_1` tail is
/// replaced by its leading-order integral.
const T1_EXPLICIT_LEVELS: usize = 2000;

/// `T_1 = 2 sum_{j >= j0} xi1 M'_{n_j} eps_j^2` with `nu_{n,j}` from the
/// schedule. Beyond `j_eps + 2000` the levels contribute
/// `~ 2 xi1 eps^2 nu_j^{-(1+2 beta)}`, which is integrated in closed form.
pub fn t1_sum(cfg: &PenaltyConfig, epsilon: f64, j0: usize) -> Result<f64> {
    cfg.validate()?;
    if !(epsilon > 0.0) {
        return Err(validation(format!("epsilon must be > 0, got {epsilon}")));
    }
    let je = jeps(cfg, epsilon)?;
    let s = cfg.log_weight();
    let last = j0.max(je.ceil() as usize + T1_EXPLICIT_LEVELS);
    let eps2 = epsilon * epsilon;
    let mut sum = 0.0;
    for j in j0..=last {
        let jf = j as f64;
        let nu_j = nu_at(cfg.nu, je, jf);
        let ln_term = ln_m_prime(s, jf * LN2, nu_j) + 2.0 * cfg.beta * jf * LN2;
        sum += 2.0 * cfg.xi1 * eps2 * ln_term.exp();
    }
    // sum_{j > last} (1 + j - j_eps)^{-2s} ~ int_{last + 1/2}^inf
    let x0 = 1.0 + last as f64 + 0.5 - je;
    let tail = 2.0 * cfg.xi1 * eps2 * cfg.nu.powf(-s) * x0.powf(1.0 - 2.0 * s) / (2.0 * s - 1.0);
    Ok(sum + tail)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskBound {
    /// Complexity remainder `2 sum_j xi_j M'_j eps_j^2`.
    pub t1: f64,
    /// `c sum_j log(nu_{n,j}) R_j`.
    pub t2: f64,
    /// Oracle constant `D`.
    pub d: f64,
    /// `D (T_1 + T_2)`.
    pub total: f64,
}

/// `D [T_1 + c sum_{j >= 1} log(nu_{n,j}) R_j]`, the implemented worst-case
/// bound over the Besov ball.
pub fn risk_upper_bound(gamma: &HyperParams, c: f64, epsilon: f64, cfg: &PenaltyConfig) -> Result<RiskBound> {
    gamma.validate()?;
    check_snr(c, epsilon)?;
    if gamma.p < 2.0 && sparse_decay(gamma) <= 0.0 {
        return Err(validation("shell risks do not decay: delta <= 0"));
    }
    let t1 = t1_sum(cfg, epsilon, 1)?;
    let je = jeps(cfg, epsilon)?;
    let geom = shell_geometry(gamma, c, epsilon)?;
    let peak = if geom.j_plus.is_finite() { geom.j_plus } else { geom.j_star };
    let ceiling = (peak + 200.0).ceil() as usize;

    let mut sum = 0.0;
    let mut prev = f64::NAN;
    for j in 1..=ceiling {
        let jf = j as f64;
        let term = nu_at(cfg.nu, je, jf).ln() * shell_risk(gamma, c, epsilon, jf);
        sum += term;
        if jf > peak + 1.0 {
            let ratio = term / prev;
            if ratio < 1.0 && term * ratio / (1.0 - ratio) < 1e-12 * sum {
                break;
            }
        }
        prev = term;
    }
    let t2 = ideal_risk_constant(cfg) * sum;
    let d = cfg.oracle_constant();
    Ok(RiskBound { t1, t2, d, total: d * (t1 + t2) })
}

/// `beta_p(eta)` from its small-`eta` asymptote (`eta^2` for `p >= 2`,
/// `eta^p (2 log eta^-p)^{1 - p/2}` for `p < 2`), held at its maximum past
/// the point where the asymptote turns over and capped at 1.
pub fn bayes_minimax_univariate(eta: f64, p: f64) -> f64 {
    if eta <= 0.0 {
        return 0.0;
    }
    if p >= 2.0 {
        return (eta * eta).min(1.0);
    }
    let asym = |e: f64| e.powf(p) * (2.0 * p * (1.0 / e).ln()).powf(1.0 - p / 2.0);
    let eta_peak = (-(1.0 / p - 0.5)).exp();
    asym(eta.min(eta_peak)).min(1.0)
}

/// Asymptotic minimax risk over `l_{n,p}(C)` at noise level `eps`:
/// `n eps^2 beta_p(eta_n)` with `eta_n = n^{-1/p} C/eps`, except for `p < 2`
/// with `delta_n = (2 log n)^{-1/2} C/eps <= 1`, where the sparse form
/// `lambda_n^2 eps^2 ([delta_n^p] + {delta_n^p}^{2/p})` applies.
/// These are order-of-magnitude anchors, not sharp values.
pub fn lp_minimax_lower(n: f64, p: f64, c: f64, epsilon: f64) -> Result<f64> {
    if !(n >= 2.0) {
        return Err(validation(format!("n must be >= 2, got {n}")));
    }
    if !(p > 0.0 && c >= 0.0 && epsilon > 0.0) {
        return Err(validation("requires p > 0, C >= 0, epsilon > 0"));
    }
    let snr = c / epsilon;
    let two_log_n = 2.0 * n.ln();
    let delta = snr / two_log_n.sqrt();
    if p < 2.0 && delta <= 1.0 {
        let dp = delta.powf(p);
        let whole = dp.floor();
        let frac = dp - whole;
        return Ok(two_log_n * epsilon * epsilon * (whole + frac.powf(2.0 / p)));
    }
    let eta = n.powf(-1.0 / p) * snr;
    Ok(n * epsilon * epsilon * bayes_minimax_univariate(eta, p))
}

/// The two sides of the dense/sparse comparison:
/// `alpha/(alpha + beta + 1/2) - (alpha - 1/p + 1/2)/(alpha + beta - 1/p + 1/2)`
/// and `(2 beta + 1)(1/p - 1/2) - alpha`.
pub fn identity_sides(gamma: &HyperParams) -> (f64, f64) {
    let r_prime = gamma.alpha / (gamma.alpha + gamma.beta + 0.5);
    let r_sparse = gamma.shell_exponent() / sparse_decay(gamma);
    (r_prime - r_sparse, gamma.zone_boundary() - gamma.alpha)
}

/// Whether `alpha/(alpha+beta+1/2) >= (alpha-1/p+1/2)/(alpha+beta-1/p+1/2)`
/// holds exactly when `alpha <= (2 beta + 1)(1/p - 1/2)`, with equality on
/// one side matching equality on the other (to 1e-12).
pub fn sparse_dense_identity_check(gamma: &HyperParams) -> Result<bool> {
    if !(gamma.p > 0.0 && gamma.p < 2.0) {
        return Err(validation(format!("identity check requires 0 < p < 2, got {}", gamma.p)));
    }
    if sparse_decay(gamma) <= 0.0 {
        return Err(validation("identity check requires alpha + beta - 1/p + 1/2 > 0"));
    }
    let sign = |x: f64| if x.abs() <= 1e-12 { 0 } else if x > 0.0 { 1 } else { -1 };
    let (lhs, rhs) = identity_sides(gamma);
    Ok(sign(lhs) == sign(rhs))
}
