//! The complexity penalty `pen(k) = xi1 zeta k (1 + sqrt(2 L_{n,k}))^2` with
//! `L_{n,k} = (1 + 2 beta) log(nu n / k)`, the thresholds it induces, the
//! level-dependent `nu` schedule and the complexity sum `M'_n`.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, gamma_ur};

use crate::error::{ensure_finite, validation, Error, Result};

/// Default `nu`: FDR control at level w = 0.05 via `nu = 2 / w`.
pub const DEFAULT_NU: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyConfig {
    #[serde(default = "default_zeta")]
    pub zeta: f64,
    #[serde(default = "default_nu")]
    pub nu: f64,
    #[serde(default)]
    pub beta: f64,
    #[serde(default = "default_xi1")]
    pub xi1: f64,
    /// Multiplier `K` in `j_eps = K log2(eps^-2)`.
    #[serde(default = "default_jeps_scale")]
    pub jeps_scale: f64,
}

fn default_zeta() -> f64 {
    2.0
}
fn default_nu() -> f64 {
    DEFAULT_NU
}
fn default_xi1() -> f64 {
    1.0
}
fn default_jeps_scale() -> f64 {
    1.0
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        Self { zeta: 2.0, nu: DEFAULT_NU, beta: 0.0, xi1: 1.0, jeps_scale: 1.0 }
    }
}

impl PenaltyConfig {
    pub fn new(zeta: f64, nu: f64, beta: f64, xi1: f64) -> Result<Self> {
        let cfg = Self { zeta, nu, beta, xi1, jeps_scale: 1.0 };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("zeta", self.zeta),
            ("nu", self.nu),
            ("beta", self.beta),
            ("xi1", self.xi1),
            ("jeps_scale", self.jeps_scale),
        ] {
            ensure_finite(name, v)?;
        }
        if self.zeta <= 1.0 {
            return Err(validation(format!("zeta must be > 1, got {}", self.zeta)));
        }
        if self.beta < 0.0 {
            return Err(validation(format!("beta must be >= 0, got {}", self.beta)));
        }
        if self.xi1 <= 0.0 {
            return Err(validation(format!("xi1 must be > 0, got {}", self.xi1)));
        }
        if self.jeps_scale < 1.0 {
            return Err(validation(format!("jeps_scale must be >= 1, got {}", self.jeps_scale)));
        }
        let floor = nu_floor(self.beta);
        if self.nu <= floor {
            return Err(validation(format!(
                "nu = {} must exceed e^(1/(1+2 beta)) = {floor}",
                self.nu
            )));
        }
        Ok(())
    }

    /// `1 + 2 beta`.
    pub fn log_weight(&self) -> f64 {
        1.0 + 2.0 * self.beta
    }

    /// Oracle-inequality constant `D = 2 zeta (zeta + 1)^3 / (zeta - 1)^3`.
    pub fn oracle_constant(&self) -> f64 {
        2.0 * self.zeta * (self.zeta + 1.0).powi(3) / (self.zeta - 1.0).powi(3)
    }
}

/// `e^{1/(1+2 beta)}`, the infimum of admissible `nu`.
pub fn nu_floor(beta: f64) -> f64 {
    (1.0 / (1.0 + 2.0 * beta)).exp()
}

fn check_nu_eff(nu_eff: f64) -> Result<()> {
    if !(nu_eff.is_finite() && nu_eff > 1.0) {
        return Err(validation(format!("effective nu must be finite and > 1, got {nu_eff}")));
    }
    Ok(())
}

fn check_k(n: usize, k: usize, allow_zero: bool) -> Result<()> {
    let lo = if allow_zero { 0 } else { 1 };
    if n == 0 || k < lo || k > n {
        return Err(validation(format!("k = {k} out of range {lo}..={n}")));
    }
    Ok(())
}

fn log_term_unchecked(cfg: &PenaltyConfig, n: f64, k: f64, nu_eff: f64) -> f64 {
    cfg.log_weight() * (nu_eff * n / k).ln()
}

fn lambda_unchecked(cfg: &PenaltyConfig, n: f64, k: f64, nu_eff: f64) -> f64 {
    (cfg.xi1 * cfg.zeta).sqrt() * (1.0 + (2.0 * log_term_unchecked(cfg, n, k, nu_eff)).sqrt())
}

fn pen_unchecked(cfg: &PenaltyConfig, n: f64, k: usize, nu_eff: f64) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let kf = k as f64;
    let s = 1.0 + (2.0 * log_term_unchecked(cfg, n, kf, nu_eff)).sqrt();
    cfg.xi1 * cfg.zeta * kf * s * s
}

/// `L_{n,k} = (1 + 2 beta) log(nu_eff n / k)`.
pub fn log_term(cfg: &PenaltyConfig, n: usize, k: usize, nu_eff: f64) -> Result<f64> {
    check_k(n, k, false)?;
    check_nu_eff(nu_eff)?;
    Ok(log_term_unchecked(cfg, n as f64, k as f64, nu_eff))
}

/// `pen(k)`, with `pen(0) = 0`.
pub fn pen(cfg: &PenaltyConfig, n: usize, k: usize, nu_eff: f64) -> Result<f64> {
    check_k(n, k, true)?;
    check_nu_eff(nu_eff)?;
    Ok(pen_unchecked(cfg, n as f64, k, nu_eff))
}

/// `lambda_{n,k} = sqrt(xi1 zeta) (1 + sqrt(2 L_{n,k}))`, so that `pen(k) = k lambda_{n,k}^2`.
pub fn threshold_lambda(cfg: &PenaltyConfig, n: usize, k: usize, nu_eff: f64) -> Result<f64> {
    check_k(n, k, false)?;
    check_nu_eff(nu_eff)?;
    Ok(lambda_unchecked(cfg, n as f64, k as f64, nu_eff))
}

/// `t_k = sqrt(pen(k) - pen(k-1))`, the hard threshold (in noise units) used
/// when `k` coordinates are kept.
pub fn threshold_t(cfg: &PenaltyConfig, n: usize, k: usize, nu_eff: f64) -> Result<f64> {
    check_k(n, k, false)?;
    check_nu_eff(nu_eff)?;
    let d = pen_unchecked(cfg, n as f64, k, nu_eff) - pen_unchecked(cfg, n as f64, k - 1, nu_eff);
    if d < 0.0 {
        return Err(Error::Numerical(format!("penalty increment negative at k = {k}: {d}")));
    }
    Ok(d.sqrt())
}

/// `[pen(0), pen(1), ..., pen(n)]`.
pub fn penalty_table(cfg: &PenaltyConfig, n: usize, nu_eff: f64) -> Result<Vec<f64>> {
    check_nu_eff(nu_eff)?;
    let nf = n as f64;
    Ok((0..=n).map(|k| pen_unchecked(cfg, nf, k, nu_eff)).collect())
}

/// `j_eps = K log2(eps^-2)`; infinite when `eps = 0`.
pub fn jeps(cfg: &PenaltyConfig, epsilon: f64) -> Result<f64> {
    ensure_finite("epsilon", epsilon)?;
    if !(0.0..1.0).contains(&epsilon) {
        return Err(validation(format!("nu schedule requires 0 <= epsilon < 1, got {epsilon}")));
    }
    if epsilon == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(cfg.jeps_scale * (-2.0 * epsilon.log2()))
}

/// `nu_{n,j}`: `nu` up to `j_eps`, then `nu (1 + (j - j_eps))^2`.
pub fn nu_schedule(cfg: &PenaltyConfig, epsilon: f64, j: f64) -> Result<f64> {
    let je = jeps(cfg, epsilon)?;
    Ok(nu_at(cfg.nu, je, j))
}

pub(crate) fn nu_at(nu: f64, jeps: f64, j: f64) -> f64 {
    if j <= jeps {
        nu
    } else {
        let g = 1.0 + (j - jeps);
        nu * g * g
    }
}

const LN_TAIL_RTOL: f64 = -39.0; // e^-39 ~ 1.2e-17

/// `M'_n = sum_{k=1}^n binom(n, k) exp(-k L_{n,k})`.
///
/// Terms are accumulated in log space. When `q = e / nu^{1+2 beta} < 1`
/// every term obeys `T_k <= q^k`, so the summation stops once
/// `q^{k+1} / (1 - q)` falls below `e^-39` of the partial sum; otherwise
/// all `n` terms are added.
pub fn m_prime(cfg: &PenaltyConfig, n: usize, nu_eff: f64) -> Result<f64> {
    if n == 0 {
        return Err(validation("m_prime requires n >= 1"));
    }
    check_nu_eff(nu_eff)?;
    Ok(ln_m_prime(cfg.log_weight(), (n as f64).ln(), nu_eff).exp())
}

/// `log M'_n` with `n = exp(ln_n)`, so that levels far beyond `usize` (or even
/// `f64`) range are summed the same way; only the leading terms matter there.
pub(crate) fn ln_m_prime(s: f64, ln_n: f64, nu_eff: f64) -> f64 {
    let inv_n = (-ln_n).exp();
    let ln_nu = nu_eff.ln();
    let ln_q = 1.0 - s * ln_nu;
    let truncate = ln_q < 0.0;
    let ln_one_minus_q = if truncate { (-(ln_q.exp_m1())).ln() } else { 0.0 };

    let mut ln_binom = 0.0;
    let mut acc_max = f64::NEG_INFINITY;
    let mut acc = 0.0; // sum of exp(term - acc_max)
    let mut k = 1.0_f64;
    while k.ln() <= ln_n + 1e-12 {
        // ln(n - k + 1) = ln n + ln(1 - (k - 1)/n)
        ln_binom += ln_n + (-(k - 1.0) * inv_n).ln_1p() - k.ln();
        let t = ln_binom - s * k * (ln_nu + ln_n - k.ln());
        if t > acc_max {
            acc = acc * (acc_max - t).exp() + 1.0;
            acc_max = t;
        } else {
            acc += (t - acc_max).exp();
        }
        if truncate {
            let ln_partial = acc_max + acc.ln();
            let ln_tail = (k + 1.0) * ln_q - ln_one_minus_q;
            if ln_tail < ln_partial + LN_TAIL_RTOL {
                break;
            }
        }
        k += 1.0;
    }
    acc_max + acc.ln()
}

/// Direct summation limit for the bound constant before switching to an
/// integral tail.
const BOUND_DIRECT_TERMS: usize = 2_000_000;

/// `C_beta = sum_{k>=1} k^{2 beta} e / sqrt(2 pi k) (e / nu^{1+2 beta})^{k-1}`,
/// the constant in `M'_n <= C_beta n^{-2 beta} nu^{-1}`.
pub fn m_prime_bound_constant(beta: f64, nu: f64) -> Result<f64> {
    ensure_finite("beta", beta)?;
    ensure_finite("nu", nu)?;
    if beta < 0.0 {
        return Err(validation(format!("beta must be >= 0, got {beta}")));
    }
    let s = 1.0 + 2.0 * beta;
    let lambda = s * nu.ln() - 1.0; // -ln q
    if !(lambda > 0.0) {
        return Err(validation(format!(
            "series diverges: nu = {nu} must exceed e^(1/(1+2 beta)) = {}",
            nu_floor(beta)
        )));
    }
    let m = 2.0 * beta - 0.5;
    let c0 = std::f64::consts::E / (2.0 * std::f64::consts::PI).sqrt();
    let term = |k: f64| c0 * (m * k.ln() - lambda * (k - 1.0)).exp();

    let mut sum = 0.0;
    let mut comp = 0.0; // Neumaier compensation
    let mut k = 1usize;
    loop {
        let kf = k as f64;
        let t = term(kf);
        let y = sum + t;
        comp += if sum.abs() >= t.abs() { (sum - y) + t } else { (t - y) + sum };
        sum = y;

        // for i > k the term ratio is at most ((k+2)/(k+1))^m q
        let ratio = (m.max(0.0) * ((kf + 2.0) / (kf + 1.0)).ln() - lambda).exp();
        if ratio < 1.0 {
            let tail = term(kf + 1.0) / (1.0 - ratio);
            if tail < 1e-16 * (sum + comp) {
                return Ok(sum + comp);
            }
        }
        if k >= BOUND_DIRECT_TERMS {
            // Euler-Maclaurin: sum_{i>K} f(i) = int_K^inf f - f(K)/2 - f'(K)/12 + ...
            let a = m + 1.0;
            let integral = c0 * lambda.exp() * lambda.powf(-a) * gamma_ur(a, lambda * kf) * gamma(a);
            let f_k = term(kf);
            let df_k = f_k * (m / kf - lambda);
            return Ok(sum + comp + integral - 0.5 * f_k - df_k / 12.0);
        }
        k += 1;
    }
}
