//! Domain types for the multiresolution sequence model
//! `y_jk = theta_jk + eps_j z_jk`, `eps_j = eps 2^(beta j)`, and the Besov
//! sequence balls the coefficients are assumed to live in.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, validation, Error, Result};

/// Tolerance on `|alpha - (2 beta + 1)(1/p - 1/2)|` below which a parameter
/// vector is classified as critical.
pub const CRITICAL_TOL: f64 = 1e-12;

/// Relative slack applied when testing `besov_norm <= radius`, so that signals
/// constructed to sit exactly on the sphere survive round-off.
pub const MEMBERSHIP_RTOL: f64 = 1e-12;

/// Largest level index a sequence may hold (n_j = 2^30 coordinates).
pub const MAX_LEVEL: usize = 30;

fn pos_part(x: f64) -> f64 {
    x.max(0.0)
}

/// Smoothness/integration/fine index of the Besov ball together with the
/// ill-posedness index of the operator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub alpha: f64,
    pub p: f64,
    pub q: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Zone {
    Dense,
    Sparse,
    Critical,
    Invalid,
}

impl std::fmt::Display for Zone {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Zone::Dense => "Dense",
            Zone::Sparse => "Sparse",
            Zone::Critical => "Critical",
            Zone::Invalid => "Invalid",
        };
        f.write_str(s)
    }
}

impl HyperParams {
    /// Checks only that the fields are finite and in range; use
    /// [`HyperParams::validate`] for the compactness and rate hypotheses.
    pub fn new(alpha: f64, p: f64, q: f64, beta: f64) -> Result<Self> {
        let g = Self { alpha, p, q, beta };
        g.check_ranges()?;
        Ok(g)
    }

    fn check_ranges(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("p", self.p), ("q", self.q), ("beta", self.beta)] {
            ensure_finite(name, v)?;
        }
        if self.alpha <= 0.0 {
            return Err(validation(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if self.p <= 0.0 {
            return Err(validation(format!("p must be > 0, got {}", self.p)));
        }
        if self.q <= 0.0 {
            return Err(validation(format!("q must be > 0, got {}", self.q)));
        }
        if self.beta < 0.0 {
            return Err(validation(format!("beta must be >= 0, got {}", self.beta)));
        }
        Ok(())
    }

    /// Compactness (`alpha > (1/p - 1/2)_+`) and, for `p < 2`, the rate
    /// hypothesis `alpha + beta > 1/p`.
    pub fn validate(&self) -> Result<()> {
        self.check_ranges()?;
        let floor = pos_part(1.0 / self.p - 0.5);
        if self.alpha <= floor {
            return Err(validation(format!(
                "alpha = {} violates compactness alpha > (1/p - 1/2)_+ = {}",
                self.alpha, floor
            )));
        }
        if self.p < 2.0 && self.alpha + self.beta <= 1.0 / self.p {
            return Err(validation(format!(
                "alpha + beta = {} must exceed 1/p = {} when p < 2",
                self.alpha + self.beta,
                1.0 / self.p
            )));
        }
        Ok(())
    }

    /// `a = alpha + 1/2 - 1/p`, the geometric decay exponent of shell radii.
    pub fn shell_exponent(&self) -> f64 {
        self.alpha + 0.5 - 1.0 / self.p
    }

    /// `(2 beta + 1)(1/p - 1/2)`, the dense/sparse boundary in alpha.
    pub fn zone_boundary(&self) -> f64 {
        (2.0 * self.beta + 1.0) * (1.0 / self.p - 0.5)
    }
}

/// Dense, Sparse, Critical, or Invalid when the compactness or rate
/// hypotheses fail.
pub fn classify_zone(gamma: &HyperParams) -> Zone {
    if gamma.validate().is_err() {
        return Zone::Invalid;
    }
    let boundary = gamma.zone_boundary();
    if gamma.p < 2.0 && (gamma.alpha - boundary).abs() <= CRITICAL_TOL {
        Zone::Critical
    } else if gamma.alpha > pos_part(boundary) {
        Zone::Dense
    } else if gamma.p < 2.0 {
        Zone::Sparse
    } else {
        Zone::Invalid
    }
}

/// Coefficients `theta_j`, `j = j0 ..= jmax`, with `theta_j` of length `2^j`.
/// Levels above `jmax` are implicitly zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSequence")]
pub struct MultiresSequence {
    j0: usize,
    levels: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
struct RawSequence {
    j0: usize,
    levels: Vec<Vec<f64>>,
}

impl TryFrom<RawSequence> for MultiresSequence {
    type Error = Error;
    fn try_from(raw: RawSequence) -> Result<Self> {
        MultiresSequence::new(raw.j0, raw.levels)
    }
}

impl MultiresSequence {
    pub fn new(j0: usize, levels: Vec<Vec<f64>>) -> Result<Self> {
        if j0 < 1 {
            return Err(validation("j0 must be >= 1"));
        }
        if levels.is_empty() {
            return Err(validation("sequence must hold at least one level"));
        }
        let jmax = j0 + levels.len() - 1;
        if jmax > MAX_LEVEL {
            return Err(validation(format!("jmax = {jmax} exceeds the supported maximum {MAX_LEVEL}")));
        }
        for (i, lvl) in levels.iter().enumerate() {
            let j = j0 + i;
            if lvl.len() != 1usize << j {
                return Err(validation(format!(
                    "level length mismatch at j = {j}: expected {}, got {}",
                    1usize << j,
                    lvl.len()
                )));
            }
        }
        Ok(Self { j0, levels })
    }

    pub fn zeros(j0: usize, jmax: usize) -> Result<Self> {
        if jmax < j0 {
            return Err(validation(format!("jmax = {jmax} < j0 = {j0}")));
        }
        Self::new(j0, (j0..=jmax).map(|j| vec![0.0; 1usize << j]).collect())
    }

    pub fn j0(&self) -> usize {
        self.j0
    }

    pub fn jmax(&self) -> usize {
        self.j0 + self.levels.len() - 1
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    /// Level `j`, or `None` outside `j0..=jmax`.
    pub fn level(&self, j: usize) -> Option<&[f64]> {
        j.checked_sub(self.j0).and_then(|i| self.levels.get(i)).map(Vec::as_slice)
    }

    pub fn level_mut(&mut self, j: usize) -> Option<&mut [f64]> {
        j.checked_sub(self.j0).and_then(move |i| self.levels.get_mut(i)).map(Vec::as_mut_slice)
    }

    /// `(j, theta_j)` pairs from coarse to fine.
    pub fn iter(&self) -> impl Iterator<Item = (usize, &[f64])> {
        self.levels.iter().enumerate().map(move |(i, l)| (self.j0 + i, l.as_slice()))
    }

    pub fn levels(&self) -> &[Vec<f64>] {
        &self.levels
    }

    pub fn into_levels(self) -> Vec<Vec<f64>> {
        self.levels
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.j0 == other.j0 && self.levels.len() == other.levels.len()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            j0: self.j0,
            levels: self.levels.iter().map(|l| l.iter().map(|x| c * x).collect()).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if !self.same_shape(other) {
            return Err(validation("cannot add sequences of different shape"));
        }
        Ok(Self {
            j0: self.j0,
            levels: self
                .levels
                .iter()
                .zip(&other.levels)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
                .collect(),
        })
    }

    pub fn check_finite(&self) -> Result<()> {
        for (j, lvl) in self.iter() {
            if let Some(x) = lvl.iter().find(|x| !x.is_finite()) {
                return Err(validation(format!("non-finite coefficient {x} at level {j}")));
            }
        }
        Ok(())
    }
}

/// The `l_p` (quasi-)norm `(sum |x_i|^p)^(1/p)`, evaluated on the rescaled
/// vector to avoid under/overflow.
pub fn lp_norm(x: &[f64], p: f64) -> f64 {
    let m = x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if m == 0.0 {
        return 0.0;
    }
    if p.is_infinite() {
        return m;
    }
    let s: f64 = x.iter().map(|v| (v.abs() / m).powf(p)).sum();
    m * s.powf(1.0 / p)
}

/// Besov sequence norm `( sum_j 2^{(alpha - 1/p + 1/2) q j} ||theta_j||_p^q )^{1/q}`
/// over the stored levels.
pub fn besov_norm(theta: &MultiresSequence, gamma: &HyperParams) -> Result<f64> {
    theta.check_finite()?;
    let a = gamma.shell_exponent();
    let weighted: Vec<f64> = theta
        .iter()
        .map(|(j, lvl)| 2f64.powf(a * j as f64) * lp_norm(lvl, gamma.p))
        .collect();
    Ok(lp_norm(&weighted, gamma.q))
}

/// A Besov ball `Theta^alpha_{p,q}(C)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BesovBall {
    pub gamma: HyperParams,
    pub radius: f64,
}

impl BesovBall {
    pub fn new(gamma: HyperParams, radius: f64) -> Result<Self> {
        ensure_finite("radius", radius)?;
        if radius <= 0.0 {
            return Err(validation(format!("radius must be > 0, got {radius}")));
        }
        Ok(Self { gamma, radius })
    }
}

/// `C_j = C 2^{-a j}` with `a = alpha + 1/2 - 1/p`; every member of the ball
/// satisfies `||theta_j||_p <= C_j`.
pub fn shell_radius(ball: &BesovBall, j: f64) -> f64 {
    ball.radius * 2f64.powf(-ball.gamma.shell_exponent() * j)
}

/// Whether `besov_norm(theta) <= C`, up to [`MEMBERSHIP_RTOL`].
pub fn membership(theta: &MultiresSequence, ball: &BesovBall) -> bool {
    match besov_norm(theta, &ball.gamma) {
        Ok(norm) => norm <= ball.radius * (1.0 + MEMBERSHIP_RTOL),
        Err(_) => false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Covariance {
    Identity,
    /// Stationary tridiagonal correlation: unit diagonal, `rho` on the first
    /// off-diagonals.
    Tridiagonal { rho: f64 },
}

/// Noise description: base scale, ill-posedness index and the per-level
/// covariance family with eigenvalue bounds `xi0 <= Sigma_j <= xi1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub epsilon: f64,
    pub beta: f64,
    #[serde(default = "default_covariance")]
    pub covariance: Covariance,
    #[serde(default = "one")]
    pub xi0: f64,
    #[serde(default = "one")]
    pub xi1: f64,
}

fn default_covariance() -> Covariance {
    Covariance::Identity
}

fn one() -> f64 {
    1.0
}

impl NoiseSpec {
    pub fn white(epsilon: f64, beta: f64) -> Self {
        Self { epsilon, beta, covariance: Covariance::Identity, xi0: 1.0, xi1: 1.0 }
    }

    /// Tridiagonal covariance with the tightest valid eigenvalue bounds
    /// `1 - 2|rho|` and `1 + 2|rho|`.
    pub fn tridiagonal(epsilon: f64, beta: f64, rho: f64) -> Self {
        Self {
            epsilon,
            beta,
            covariance: Covariance::Tridiagonal { rho },
            xi0: 1.0 - 2.0 * rho.abs(),
            xi1: 1.0 + 2.0 * rho.abs(),
        }
    }

    /// `epsilon = 0` is accepted and means a noiseless observation.
    pub fn validate(&self) -> Result<()> {
        ensure_finite("epsilon", self.epsilon)?;
        ensure_finite("beta", self.beta)?;
        if self.epsilon < 0.0 {
            return Err(validation(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        if self.beta < 0.0 {
            return Err(validation(format!("beta must be >= 0, got {}", self.beta)));
        }
        if !(self.xi0 > 0.0 && self.xi1 >= self.xi0) {
            return Err(validation(format!(
                "eigenvalue bounds must satisfy 0 < xi0 <= xi1, got xi0 = {}, xi1 = {}",
                self.xi0, self.xi1
            )));
        }
        let (lo, hi) = match self.covariance {
            Covariance::Identity => (1.0, 1.0),
            Covariance::Tridiagonal { rho } => {
                ensure_finite("rho", rho)?;
                if rho.abs() >= 0.5 {
                    return Err(validation(format!(
                        "tridiagonal covariance requires |rho| < 1/2, got {rho}"
                    )));
                }
                (1.0 - 2.0 * rho.abs(), 1.0 + 2.0 * rho.abs())
            }
        };
        if self.xi0 > lo || self.xi1 < hi {
            return Err(validation(format!(
                "reported bounds [{}, {}] do not contain the covariance spectrum [{lo}, {hi}]",
                self.xi0, self.xi1
            )));
        }
        Ok(())
    }

    /// `eps_j = eps 2^{beta j}`.
    pub fn level_scale(&self, j: usize) -> f64 {
        self.epsilon * 2f64.powf(self.beta * j as f64)
    }
}
