//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use wvdpen::model::{classify_zone, HyperParams, NoiseSpec, Zone};
use wvdpen::penalty::{jeps, m_prime, m_prime_bound_constant, nu_floor, pen, threshold_lambda, threshold_t, PenaltyConfig};
use wvdpen::rates::{
    j_plus, j_star, rate_exponent, rate_exponent_in_zone, shell_geometry, shell_risk, shell_risk_closed_form, t1_sum,
};
use wvdpen::simulate::{
    fit_rate_exponent, oracle_equivalence_batch, oracle_inequality_check, sweep, SignalKind, SignalSpec,
};

const LN2: f64 = std::f64::consts::LN_2;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn g(alpha: f64, p: f64, q: f64, beta: f64) -> HyperParams {
    HyperParams::new(alpha, p, q, beta).unwrap()
}

fn pcfg(beta: f64, nu: f64) -> PenaltyConfig {
    PenaltyConfig { zeta: 2.0, nu, beta, xi1: 1.0, jeps_scale: 1.0 }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

/// Presets covering every zone: two dense with p >= 2, one dense with p < 2,
/// two sparse, one critical.
fn presets() -> Vec<HyperParams> {
    vec![
        g(1.0, 2.0, 2.0, 0.5),
        g(2.0, 3.0, 2.0, 1.0),
        g(2.0, 1.0, 1.0, 0.4),
        g(0.6, 1.0, 1.0, 1.0),
        g(0.75, 1.0, 1.0, 0.5),
        g(1.0, 1.0, 2.0, 0.5),
    ]
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let rep = oracle_equivalence_batch(12, 1000, &[0.0, 0.5], 40.0, 1).unwrap();
    let el = secs(t.elapsed());
    outcome(
        rep.mismatches == 0 && el < 30.0,
        format!("exhaustive-oracle equivalence: {} mismatches in {} instances, {el:.2} s", rep.mismatches, rep.instances),
    )
}

/// Neumaier-compensated running sum.
#[derive(Default)]
struct Compensated {
    sum: f64,
    carry: f64,
}

impl Compensated {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        self.carry += if self.sum.abs() >= x.abs() { (self.sum - t) + x } else { (x - t) + self.sum };
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

fn criterion_2() -> Outcome {
    let t = Instant::now();
    let mut ns: Vec<usize> = (0..=14).map(|e| 1usize << e).collect();
    ns.extend([3, 7, 100, 1000, 12_345]);
    let nu = 40.0;
    let mut worst_pen = 0.0f64;
    let mut worst_sum = 0.0f64;
    let mut gap_ok = true;
    let mut worst_gap_ratio = 0.0f64;
    for beta in [0.0, 0.5, 1.0] {
        let cfg = pcfg(beta, nu);
        let s = 1.0 + 2.0 * beta;
        // (lambda_k - t_k) lambda_k <= lambda_k^2 - t_k^2
        //   = (k - 1)(lambda_{k-1}^2 - lambda_k^2) <= 2 xi1 zeta s (1 + 1/sqrt(2 s log nu))
        let gap_bound = 2.0 * cfg.xi1 * cfg.zeta * s * (1.0 + 1.0 / (2.0 * s * nu.ln()).sqrt());
        let per_n: Vec<(f64, f64, bool, f64)> = ns
            .par_iter()
            .map(|&n| {
                let (mut wp, mut ws, mut ok, mut wg) = (0.0f64, 0.0f64, true, 0.0f64);
                let mut t_sq = Compensated::default();
                for k in 1..=n {
                    let lam = (cfg.xi1 * cfg.zeta).sqrt() * (1.0 + (2.0 * s * (nu * n as f64 / k as f64).ln()).sqrt());
                    let pk = pen(&cfg, n, k, nu).unwrap();
                    wp = wp.max((pk - k as f64 * lam * lam).abs() / pk);
                    let tk = threshold_t(&cfg, n, k, nu).unwrap();
                    t_sq.add(tk * tk);
                    ws = ws.max((t_sq.value() - pk).abs() / pk);
                    let lib_lam = threshold_lambda(&cfg, n, k, nu).unwrap();
                    let gap = (lib_lam - tk) * lib_lam;
                    ok &= tk <= lib_lam * (1.0 + 1e-15) && gap <= gap_bound;
                    wg = wg.max(gap / gap_bound);
                }
                (wp, ws, ok, wg)
            })
            .collect();
        for (wp, ws, ok, wg) in per_n {
            worst_pen = worst_pen.max(wp);
            worst_sum = worst_sum.max(ws);
            gap_ok &= ok;
            worst_gap_ratio = worst_gap_ratio.max(wg);
        }
    }
    let el = secs(t.elapsed());
    outcome(
        worst_pen <= 1e-12 && worst_sum <= 1e-12 && gap_ok && el < 10.0,
        format!(
            "penalty identities: max rel err pen = k lambda^2 {worst_pen:.2e}, sum t^2 = pen {worst_sum:.2e}; \
             (lambda - t) lambda at {worst_gap_ratio:.3} of its bound; {el:.2} s"
        ),
    )
}

fn criterion_3() -> Outcome {
    let t = Instant::now();
    let mut violations = 0usize;
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for beta in [0.0, 0.25, 0.5, 1.0] {
        for nu in [nu_floor(beta) * 1.1, 10.0, 40.0] {
            let cfg = pcfg(beta, nu);
            let bound = m_prime_bound_constant(beta, nu).unwrap();
            let (v, w) = (1..=(1usize << 16))
                .into_par_iter()
                .map(|n| {
                    let lhs = m_prime(&cfg, n, nu).unwrap() * (n as f64).powf(2.0 * beta) * nu;
                    ((lhs > bound) as usize, lhs / bound)
                })
                .reduce(|| (0, 0.0), |a, b| (a.0 + b.0, a.1.max(b.1)));
            violations += v;
            worst = worst.max(w);
            checked += 1 << 16;
        }
    }
    let el = secs(t.elapsed());
    outcome(
        violations == 0 && el < 60.0,
        format!("M' bound: {violations} violations over {checked} cases, max lhs/bound {worst:.4}, {el:.2} s"),
    )
}

/// Closed forms of the shell risk, written out independently of the library.
fn closed_form(gm: &HyperParams, c: f64, eps: f64, js: f64, jp: f64, j: f64) -> f64 {
    let HyperParams { alpha, p, beta, .. } = *gm;
    let r_star = c.powf(2.0 * (1.0 - 2.0 * alpha / (2.0 * alpha + 2.0 * beta + 1.0)))
        * eps.powf(4.0 * alpha / (2.0 * alpha + 2.0 * beta + 1.0));
    if j <= js {
        return r_star * 2f64.powf((2.0 * beta + 1.0) * (j - js));
    }
    if p >= 2.0 {
        return r_star * 2f64.powf(-2.0 * alpha * (j - js));
    }
    if j < jp {
        let rho = alpha - (2.0 * beta + 1.0) * (1.0 / p - 0.5);
        let phi = p * (alpha + beta + 0.5) * LN2;
        return r_star * 2f64.powf(-p * rho * (j - js)) * (1.0 + phi * (j - js)).powf(1.0 - p / 2.0);
    }
    let a = alpha + 0.5 - 1.0 / p;
    c * c * 2f64.powf(-2.0 * a * jp) * 2f64.powf(-2.0 * a * (j - jp))
}

fn criterion_4() -> Outcome {
    let mut worst = 0.0f64;
    let mut worst_lib = 0.0f64;
    let mut points = 0usize;
    let mut peaks_ok = true;
    for gm in presets() {
        for (c, eps) in [(1.0, 2f64.powi(-10)), (3.0, 2f64.powi(-16)), (0.5, 2f64.powi(-24))] {
            let js = j_star(&gm, c, eps).unwrap();
            let jp = if gm.p < 2.0 { j_plus(&gm, c, eps).unwrap() } else { f64::NAN };
            let geom = shell_geometry(&gm, c, eps).unwrap();
            let end = if jp.is_finite() { jp + 5.0 } else { js + 5.0 };
            let mut i = 0usize;
            loop {
                let j = i as f64 * 0.1;
                if j > end + 1e-9 {
                    break;
                }
                i += 1;
                let near = |b: f64| b.is_finite() && (j - b).abs() < 1e-6;
                if near(js) || near(jp) {
                    continue;
                }
                let def = shell_risk(&gm, c, eps, j);
                let cf = closed_form(&gm, c, eps, js, jp, j);
                worst = worst.max((def - cf).abs() / cf);
                let lib = shell_risk_closed_form(&gm, &geom, j);
                worst_lib = worst_lib.max((def - lib).abs() / lib);
                points += 1;
            }
            let r_dense = 2.0 * gm.alpha / (2.0 * gm.alpha + 2.0 * gm.beta + 1.0);
            if classify_zone(&gm) == Zone::Dense {
                let want = c.powf(2.0 * (1.0 - r_dense)) * eps.powf(2.0 * r_dense);
                peaks_ok &= (geom.r_star - want).abs() <= 1e-12 * want;
            }
            if classify_zone(&gm) == Zone::Sparse {
                let r = rate_exponent(&gm).unwrap();
                let want = c.powf(2.0 * (1.0 - r)) * eps.powf(2.0 * r) * (1.0 + jp * LN2).powf(r);
                peaks_ok &= (geom.r_plus - want).abs() <= 1e-11 * want;
                let a = gm.alpha + 0.5 - 1.0 / gm.p;
                peaks_ok &= (geom.r_plus - c * c * 2f64.powf(-2.0 * a * jp)).abs() <= 1e-12 * geom.r_plus;
            }
        }
    }
    outcome(
        worst <= 1e-10 && worst_lib <= 1e-10 && peaks_ok,
        format!(
            "shell-risk closed forms: max rel err {worst:.2e} (library closed form {worst_lib:.2e}) over {points} points; \
             peak identities {}",
            if peaks_ok { "hold" } else { "FAIL" }
        ),
    )
}

fn criterion_5() -> Outcome {
    let mut dense_worst = 0.0f64;
    let mut sparse_worst = 0.0f64;
    for gm in presets() {
        let zone = classify_zone(&gm);
        for c in [1.0, 4.0] {
            for k in 8..=40 {
                let eps = c * 2f64.powi(-k);
                if gm.p < 2.0 && zone == Zone::Dense {
                    let geom = shell_geometry(&gm, c, eps).unwrap();
                    dense_worst = dense_worst.max(geom.r_plus / geom.r_star);
                }
                if zone == Zone::Sparse {
                    let js = j_star(&gm, c, eps).unwrap();
                    let jp = j_plus(&gm, c, eps).unwrap();
                    sparse_worst = sparse_worst.max(shell_risk(&gm, c, eps, js) / shell_risk(&gm, c, eps, jp));
                }
            }
        }
    }
    outcome(
        dense_worst <= 1.0 && sparse_worst <= 1.0,
        format!("ordering: max R+/R* (dense, p<2) {dense_worst:.4}, max R_j*/R_j+ (sparse) {sparse_worst:.4}"),
    )
}

fn criterion_6() -> Outcome {
    let t = Instant::now();
    let cases = [
        (SignalKind::ShellDense, g(1.0, 2.0, 2.0, 0.5)),
        (SignalKind::ShellSparse, g(0.75, 1.0, 1.0, 0.5)),
        (SignalKind::Zero, g(1.0, 2.0, 2.0, 0.5)),
    ];
    let mut worst = 0.0f64;
    let mut rows = Vec::new();
    for (i, (kind, gm)) in cases.iter().enumerate() {
        for (l, eps) in [2f64.powi(-6), 2f64.powi(-10)].into_iter().enumerate() {
            let spec = SignalSpec::new(*kind, *gm, 1.0, eps);
            let chk = oracle_inequality_check(&spec, &pcfg(gm.beta, 40.0), &NoiseSpec::white(eps, gm.beta), 200, (10 * i + l) as u64)
                .unwrap();
            worst = worst.max(chk.ratio);
            rows.push(format!("{kind:?}@2^{}={:.2e}", eps.log2(), chk.ratio));
        }
    }
    let el = secs(t.elapsed());
    let d = pcfg(0.0, 40.0).oracle_constant();
    outcome(
        worst <= 1.0 && d == 108.0 && el < 300.0,
        format!("oracle inequality (D = {d}): max ratio {worst:.3e} [{}], {el:.1} s", rows.join(", ")),
    )
}

fn rate_sweep(gm: HyperParams, kind: SignalKind, log_correct: bool, seed: u64) -> (f64, usize, f64) {
    let grid: Vec<f64> = (6..=12).map(|k| 2f64.powi(-k)).collect();
    let spec = SignalSpec::new(kind, gm, 1.0, grid[0]);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let t = Instant::now();
    let results = pool
        .install(|| sweep(&spec, &pcfg(gm.beta, 40.0), &NoiseSpec::white(grid[0], gm.beta), &grid, 100, seed))
        .unwrap();
    let el = secs(t.elapsed());
    let r = rate_exponent(&gm).unwrap();
    let pts: Vec<(f64, f64)> = results
        .iter()
        .map(|m| {
            let f = if log_correct { (1.0 + (1.0 / m.epsilon).ln()).powf(r) } else { 1.0 };
            (m.epsilon, m.mean_sse / f)
        })
        .collect();
    let jmax = results.iter().map(|m| m.jmax).max().unwrap();
    (fit_rate_exponent(&pts).unwrap().r_hat, jmax, el)
}

fn criterion_7() -> Outcome {
    let gm = g(1.0, 2.0, 2.0, 0.5);
    let (r_hat, jmax, el) = rate_sweep(gm, SignalKind::ShellDense, false, 7);
    let r = 2.0 * gm.alpha / (2.0 * gm.alpha + 2.0 * gm.beta + 1.0);
    let rel = (r_hat - r).abs() / r;
    outcome(
        rel <= 0.15 && jmax <= 16 && el < 600.0,
        format!("dense rate recovery: r_hat {r_hat:.4} vs r {r:.4} (rel err {rel:.3}), jmax {jmax}, {el:.1} s single-threaded"),
    )
}

fn criterion_8() -> Outcome {
    let gm = g(0.75, 1.0, 1.0, 0.5);
    let (r_hat, jmax, el) = rate_sweep(gm, SignalKind::ShellSparse, true, 8);
    let r = (2.0 * gm.alpha - 2.0 / gm.p + 1.0) / (2.0 * gm.alpha + 2.0 * gm.beta - 2.0 / gm.p + 1.0);
    let rel = (r_hat - r).abs() / r;
    let rel_quarter = (r_hat - 0.25).abs() / 0.25;
    outcome(
        rel <= 0.20,
        format!(
            "sparse rate recovery (log-corrected): r_hat {r_hat:.4} vs r {r:.4} (rel err {rel:.3}; vs 0.25: {rel_quarter:.3}), \
             jmax {jmax}, {el:.1} s"
        ),
    )
}

fn criterion_9() -> Outcome {
    let mut ok = true;
    let mut rows = Vec::new();
    for beta in [0.0, 0.5, 1.0] {
        let cfg = pcfg(beta, 40.0);
        let c_beta = m_prime_bound_constant(beta, cfg.nu).unwrap();
        let ratios: Vec<f64> = (4..=20)
            .map(|k| {
                let eps = 2f64.powi(-k);
                t1_sum(&cfg, eps, 1).unwrap() / (eps * eps * (eps.powi(-2)).log2())
            })
            .collect();
        // T1 <= 2 xi1 eps^2 C_beta / nu (j_eps + pi^2 / 6) level by level
        let bounded = (4..=20).zip(&ratios).all(|(k, &q)| {
            let je = jeps(&cfg, 2f64.powi(-k)).unwrap();
            q <= 2.0 * cfg.xi1 * c_beta / cfg.nu * (1.0 + std::f64::consts::PI.powi(2) / (6.0 * je))
        });
        let xs: Vec<f64> = (4..=20).map(|k| k as f64).collect();
        let mx = xs.iter().sum::<f64>() / xs.len() as f64;
        let my = ratios.iter().sum::<f64>() / ratios.len() as f64;
        let slope = xs.iter().zip(&ratios).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
            / xs.iter().map(|x| (x - mx) * (x - mx)).sum::<f64>();
        let first = ratios[0];
        let last = *ratios.last().unwrap();
        ok &= bounded && slope <= 0.0 && last <= first;
        rows.push(format!("beta {beta}: {first:.4e} -> {last:.4e}, slope {slope:.2e}, bounded {bounded}"));
    }
    outcome(ok, format!("T1 negligibility: {}", rows.join("; ")))
}

fn criterion_10() -> Outcome {
    let h = 1e-6;
    let mut worst = 0.0f64;
    let mut rows = Vec::new();
    for (p, beta) in [(1.0, 0.5), (1.0, 1.0), (1.5, 0.5), (0.5, 0.25)] {
        let boundary = (2.0 * beta + 1.0) * (1.0 / p - 0.5);
        let limit = 1.0 - p / 2.0;
        let dense = rate_exponent_in_zone(&g(boundary + h, p, 2.0, beta), Zone::Dense).unwrap();
        let sparse = rate_exponent_in_zone(&g(boundary - h, p, 2.0, beta), Zone::Sparse).unwrap();
        let (dd, ds) = ((dense - limit).abs(), (sparse - limit).abs());
        worst = worst.max(dd).max(ds);
        rows.push(format!("p {p} beta {beta}: {dd:.2e}/{ds:.2e}"));
    }
    outcome(
        worst <= 1e-9,
        format!("zone-boundary continuity at distance {h:.0e}: |r - (1 - p/2)| dense/sparse [{}]", rows.join(", ")),
    )
}

fn main() {
    let criteria: [(u32, fn() -> Outcome); 10] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
        (10, criterion_10),
    ];
    let filter: Option<u32> = std::env::args().skip(1).find_map(|a| a.parse().ok());
    let mut failed = Vec::new();
    for (id, run) in criteria {
        if filter.is_some_and(|f| f != id) {
            continue;
        }
        let res = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        println!("criterion {id:>2}: {} {}", if res.pass { "PASS" } else { "FAIL" }, res.detail);
        if !res.pass {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
