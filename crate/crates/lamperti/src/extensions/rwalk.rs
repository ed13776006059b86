//! Simple symmetric random walks on `Z^d`: the integral criterion for
//! beta-strong transience, Monte Carlo return-probability curves, and the
//! exact drift of the norm process.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::fit::{linear_fit, FitLine};
use crate::montecarlo::RngStreams;
use crate::{Error, Result};

const PRIMES: [u64; 8] = [2, 3, 5, 7, 11, 13, 17, 19];
/// Per-axis power of the warp concentrating quadrature points near the
/// characteristic function's peak at the origin.
const WARP_POWER: f64 = 3.0;

/// A genuinely d-dimensional simple symmetric lattice walk (period 2).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RWalkModel {
    pub d: usize,
}

impl RWalkModel {
    pub fn simple_symmetric(d: usize) -> Result<Self> {
        if d == 0 || d > 6 {
            return Err(Error::InvalidParameter(format!(
                "dimension must be in 1..=6, got {d}"
            )));
        }
        Ok(RWalkModel { d })
    }

    /// Characteristic function `phi(u) = (1/d) sum_j cos(u_j)`.
    pub fn char_fn(&self, u: &[f64]) -> f64 {
        debug_assert_eq!(u.len(), self.d);
        u.iter().map(|&x| x.cos()).sum::<f64>() / self.d as f64
    }

    pub fn period(&self) -> u64 {
        2
    }
}

/// `Re (1 - t phi(u))^-(1+beta)`; real and positive here since `|phi| <= 1`
/// and `t < 1` keep the base strictly positive.
pub fn chung_fuchs_integrand(model: &RWalkModel, beta: f64, t: f64, u: &[f64]) -> f64 {
    (1.0 - t * model.char_fn(u)).powf(-(1.0 + beta))
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    let bf = base as f64;
    while i > 0 {
        f /= bf;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// One quadrature value of the transience integral.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CfEstimate {
    pub t: f64,
    pub value: f64,
    pub stderr: f64,
    pub n_points: u64,
    pub n_shifts: u32,
}

/// Evaluate `int_{[-pi,pi]^d} Re (1 - t phi(u))^-(1+beta) du` by randomised
/// low-discrepancy quadrature. The constant part integrates exactly to
/// `(2 pi)^d` (so `t = 0` is exact); the rest is sampled under a per-axis
/// power warp that resolves the near-singular peak at the origin, with the
/// spread across independent random shifts reported as the standard error.
pub fn chung_fuchs_integral(
    model: &RWalkModel,
    beta: f64,
    t: f64,
    n_points: u64,
    n_shifts: u32,
    seed: u64,
) -> Result<CfEstimate> {
    if !(0.0..1.0).contains(&t) {
        return Err(Error::InvalidParameter(format!(
            "the criterion is the t -> 1 limit; need 0 <= t < 1, got {t}"
        )));
    }
    if !(beta > 0.0) {
        return Err(Error::InvalidParameter("beta must be positive".into()));
    }
    if n_points == 0 || n_shifts == 0 {
        return Err(Error::InvalidParameter("need points and shifts".into()));
    }
    let d = model.d;
    let volume = (2.0 * std::f64::consts::PI).powi(d as i32);
    let streams = RngStreams::new(seed);
    let shift_estimates: Vec<f64> = (0..n_shifts as u64)
        .into_par_iter()
        .map(|s| {
            let mut rng = streams.rng(s);
            let shift: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
            let mut acc = 0.0;
            let mut u = vec![0.0f64; d];
            for i in 0..n_points {
                let mut jac = 1.0;
                for j in 0..d {
                    let v = (radical_inverse(i + 1, PRIMES[j]) + shift[j]).fract();
                    let w = 2.0 * v - 1.0;
                    let aw = w.abs();
                    u[j] = std::f64::consts::PI * w.signum() * aw.powf(WARP_POWER);
                    jac *= 2.0 * std::f64::consts::PI * WARP_POWER * aw.powf(WARP_POWER - 1.0);
                }
                acc += (chung_fuchs_integrand(model, beta, t, &u) - 1.0) * jac;
            }
            acc / n_points as f64
        })
        .collect();
    let mean = shift_estimates.iter().sum::<f64>() / n_shifts as f64;
    let var = shift_estimates.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>()
        / (n_shifts as f64 * (n_shifts as f64 - 1.0).max(1.0));
    Ok(CfEstimate {
        t,
        value: volume + mean,
        stderr: var.sqrt(),
        n_points,
        n_shifts,
    })
}

/// The integral along a grid of `t` values approaching one.
pub fn chung_fuchs_profile(
    model: &RWalkModel,
    beta: f64,
    t_grid: &[f64],
    n_points: u64,
    n_shifts: u32,
    seed: u64,
) -> Result<Vec<CfEstimate>> {
    t_grid
        .iter()
        .enumerate()
        .map(|(i, &t)| chung_fuchs_integral(model, beta, t, n_points, n_shifts, seed + i as u64))
        .collect()
}

/// One time point of the return-probability curve (even times only; odd
/// times are exactly zero by parity and not estimated).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ReturnMassPoint {
    pub n: u64,
    pub hits: u64,
    pub phat: f64,
    pub stderr: f64,
    /// Below the statistical floor `phat * n_traj < 10`.
    pub low_stat: bool,
}

/// Decade-increment fit of the partial sums.
#[derive(Debug, Clone, Serialize)]
pub struct GrowthFit {
    pub exponent: f64,
    pub fit: FitLine,
}

/// Monte Carlo return-probability curve with its occupation partial sums.
#[derive(Debug, Clone, Serialize)]
pub struct ReturnMassReport {
    pub d: usize,
    pub beta: f64,
    pub n_max: u64,
    pub n_traj: u64,
    pub seed: u64,
    pub points: Vec<ReturnMassPoint>,
    /// `sum_{n <= N} n^beta phat(n)` at half-decade checkpoints.
    pub partial_sums: Vec<(u64, f64)>,
    /// Fit of the log decade increments of the partial sums against log N.
    pub growth: Option<GrowthFit>,
    /// Increment of the partial sum over its last decade relative to the
    /// total; small values mean the sum has saturated.
    pub last_decade_rel_increment: f64,
    /// Slope of `log phat(n)` against `log n` where counts clear the floor;
    /// the local-limit prediction is `-d/2`.
    pub llt_slope: Option<FitLine>,
}

/// Estimate `P(S_n = 0)` for even `n <= n_max` and the partial sums
/// `sum n^beta P^(S_n = 0)`, with a growth-exponent fit over decade
/// increments and the local-limit slope diagnostic.
pub fn rwalk_return_mass(
    model: &RWalkModel,
    beta: f64,
    n_max: u64,
    n_traj: u64,
    seed: u64,
) -> Result<ReturnMassReport> {
    if n_max < 10 || n_traj == 0 {
        return Err(Error::InvalidParameter("need n_max >= 10 and trajectories".into()));
    }
    let d = model.d;
    let streams = RngStreams::new(seed);
    let n_slots = (n_max / 2) as usize;
    const BATCH: u64 = 1024;
    let n_batches = n_traj.div_ceil(BATCH);
    let batch_hits: Vec<Vec<u64>> = (0..n_batches)
        .into_par_iter()
        .map(|bi| {
            let lo = bi * BATCH;
            let hi = (lo + BATCH).min(n_traj);
            let mut hits = vec![0u64; n_slots];
            let mut pos = vec![0i32; d];
            for t in lo..hi {
                let mut rng = streams.rng(t);
                pos.iter_mut().for_each(|p| *p = 0);
                let mut n = 0u64;
                while n < n_max {
                    n += 1;
                    let mv: usize = rng.random_range(0..2 * d);
                    let axis = mv >> 1;
                    pos[axis] += if mv & 1 == 0 { 1 } else { -1 };
                    if n & 1 == 0 {
                        if pos.iter().all(|&c| c == 0) {
                            hits[(n / 2 - 1) as usize] += 1;
                        }
                        // a walk whose L1 norm exceeds the remaining steps
                        // cannot return within the horizon
                        if n & 1023 == 0 {
                            let l1: i64 = pos.iter().map(|&c| (c as i64).abs()).sum();
                            if l1 as u64 > n_max - n {
                                break;
                            }
                        }
                    }
                }
            }
            hits
        })
        .collect();
    let mut hits = vec![0u64; n_slots];
    for bh in &batch_hits {
        for (a, b) in hits.iter_mut().zip(bh) {
            *a += b;
        }
    }
    let nf = n_traj as f64;
    let points: Vec<ReturnMassPoint> = hits
        .iter()
        .enumerate()
        .map(|(k, &h)| {
            let n = 2 * (k as u64 + 1);
            let p = h as f64 / nf;
            ReturnMassPoint {
                n,
                hits: h,
                phat: p,
                stderr: (p * (1.0 - p) / nf).sqrt(),
                low_stat: (h as f64) < 10.0,
            }
        })
        .collect();

    // partial sums at half-decade checkpoints
    let mut checkpoints = Vec::new();
    let mut v = 10.0f64;
    while (v as u64) <= n_max {
        checkpoints.push(v as u64);
        v *= 10f64.sqrt();
    }
    if checkpoints.last() != Some(&n_max) {
        checkpoints.push(n_max);
    }
    let mut partial_sums = Vec::with_capacity(checkpoints.len());
    let mut acc = 0.0;
    let mut ci = 0usize;
    for pt in &points {
        acc += (pt.n as f64).powf(beta) * pt.phat;
        while ci < checkpoints.len() && pt.n >= checkpoints[ci] {
            partial_sums.push((checkpoints[ci], acc));
            ci += 1;
        }
    }
    while ci < checkpoints.len() {
        partial_sums.push((checkpoints[ci], acc));
        ci += 1;
    }

    // decade increments of the partial sums
    let s_at = |n: u64| -> Option<f64> {
        partial_sums.iter().filter(|&&(m, _)| m <= n).map(|&(_, s)| s).next_back()
    };
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut hi = 100u64;
    while hi <= n_max {
        if let (Some(s1), Some(s0)) = (s_at(hi), s_at(hi / 10)) {
            let inc = s1 - s0;
            if inc > 0.0 {
                xs.push((hi as f64).ln());
                ys.push(inc.ln());
            }
        }
        hi *= 10;
    }
    let growth = linear_fit(&xs, &ys).map(|fit| GrowthFit { exponent: fit.slope, fit });
    let total = partial_sums.last().map(|&(_, s)| s).unwrap_or(0.0);
    let last_decade_rel_increment = match (s_at(n_max), s_at(n_max / 10)) {
        (Some(s1), Some(s0)) if total > 0.0 => (s1 - s0) / total,
        _ => f64::NAN,
    };

    // local-limit slope where statistics are sound
    let fit_pts: Vec<&ReturnMassPoint> =
        points.iter().filter(|p| p.hits >= 30 && p.n >= 10).collect();
    let llt_slope = if fit_pts.len() >= 4 {
        let xs: Vec<f64> = fit_pts.iter().map(|p| (p.n as f64).ln()).collect();
        let ys: Vec<f64> = fit_pts.iter().map(|p| p.phat.ln()).collect();
        linear_fit(&xs, &ys)
    } else {
        None
    };

    Ok(ReturnMassReport {
        d,
        beta,
        n_max,
        n_traj,
        seed,
        points,
        partial_sums,
        growth,
        last_decade_rel_increment,
        llt_slope,
    })
}

/// Exact one-step drift of the norm process averaged over a lattice shell.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct NormDriftRow {
    pub r_target: f64,
    pub n_points: u64,
    pub mean_radius: f64,
    /// `E[|S + Z| - |S|]` averaged over the shell, exact per point.
    pub drift: f64,
    /// `r * drift`; the limit is `(d-1)/(2d)`.
    pub drift_scaled: f64,
    pub predicted_drift_scaled: f64,
    /// `E[(|S + Z| - |S|)^2]`; the limit is `1/d`.
    pub second: f64,
    pub predicted_second: f64,
}

fn enumerate_shell(d: usize, r: f64, out: &mut Vec<Vec<i64>>) {
    let lo2 = (r - 0.5).max(0.0).powi(2);
    let hi2 = (r + 0.5).powi(2);
    let mut coords = vec![0i64; d];
    fn recurse(
        d: usize,
        j: usize,
        rem_hi: f64,
        coords: &mut Vec<i64>,
        lo2: f64,
        hi2: f64,
        out: &mut Vec<Vec<i64>>,
    ) {
        if j == d - 1 {
            // last coordinate ranges over the band
            let used: f64 = coords[..j].iter().map(|&c| (c * c) as f64).sum();
            let hi = (hi2 - used).max(0.0).sqrt().floor() as i64;
            for z in -hi..=hi {
                let norm2 = used + (z * z) as f64;
                if norm2 >= lo2 && norm2 < hi2 {
                    coords[j] = z;
                    out.push(coords.clone());
                }
            }
            return;
        }
        let used: f64 = coords[..j].iter().map(|&c| (c * c) as f64).sum();
        let hi = (rem_hi - used).max(0.0).sqrt().floor() as i64;
        for z in -hi..=hi {
            coords[j] = z;
            recurse(d, j + 1, rem_hi, coords, lo2, hi2, out);
        }
    }
    recurse(d, 0, hi2, &mut coords, lo2, hi2, out);
}

/// For each radius, average over lattice points `z` with `|z| ~ r` the exact
/// one-step change of the Euclidean norm over the 2d unit moves; shells
/// larger than `max_points` are subsampled deterministically from the seed.
pub fn norm_drift_check(
    model: &RWalkModel,
    radii: &[f64],
    max_points: u64,
    seed: u64,
) -> Result<Vec<NormDriftRow>> {
    if model.d > 4 {
        return Err(Error::InvalidParameter(
            "shell enumeration is supported for d <= 4".into(),
        ));
    }
    let d = model.d;
    let mut rows = Vec::with_capacity(radii.len());
    let streams = RngStreams::new(seed);
    for (ri, &r) in radii.iter().enumerate() {
        if r < 1.0 {
            return Err(Error::InvalidParameter("radii must be >= 1".into()));
        }
        let mut shell = Vec::new();
        enumerate_shell(d, r, &mut shell);
        if shell.is_empty() {
            return Err(Error::Degenerate(format!("empty lattice shell at r = {r}")));
        }
        if shell.len() as u64 > max_points {
            let mut rng = streams.rng(ri as u64);
            let keep = max_points as usize;
            // deterministic partial Fisher-Yates
            for i in 0..keep {
                let j = rng.random_range(i..shell.len());
                shell.swap(i, j);
            }
            shell.truncate(keep);
        }
        let mut drift = 0.0;
        let mut second = 0.0;
        let mut mean_radius = 0.0;
        for z in &shell {
            let norm: f64 = (z.iter().map(|&c| (c * c) as f64).sum::<f64>()).sqrt();
            mean_radius += norm;
            let mut d1 = 0.0;
            let mut d2 = 0.0;
            for j in 0..d {
                for s in [-1i64, 1] {
                    let mut n2 = 0.0;
                    for (jj, &c) in z.iter().enumerate() {
                        let c = if jj == j { c + s } else { c };
                        n2 += (c * c) as f64;
                    }
                    let delta = n2.sqrt() - norm;
                    d1 += delta;
                    d2 += delta * delta;
                }
            }
            drift += d1 / (2 * d) as f64;
            second += d2 / (2 * d) as f64;
        }
        let m = shell.len() as f64;
        drift /= m;
        second /= m;
        mean_radius /= m;
        rows.push(NormDriftRow {
            r_target: r,
            n_points: shell.len() as u64,
            mean_radius,
            drift,
            drift_scaled: mean_radius * drift,
            predicted_drift_scaled: (d as f64 - 1.0) / (2.0 * d as f64),
            second,
            predicted_second: 1.0 / d as f64,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;

    #[test]
    fn integral_is_exact_volume_at_t_zero() {
        for d in [1usize, 3, 5] {
            let m = RWalkModel::simple_symmetric(d).unwrap();
            let est = chung_fuchs_integral(&m, 1.0, 0.0, 4096, 4, 1).unwrap();
            let vol = (2.0 * std::f64::consts::PI).powi(d as i32);
            assert_eq!(est.value, vol, "d = {d}");
            assert_eq!(est.stderr, 0.0);
        }
        let m = RWalkModel::simple_symmetric(3).unwrap();
        assert!(chung_fuchs_integral(&m, 1.0, 1.0, 64, 2, 1).is_err());
    }

    #[test]
    fn integrand_agrees_with_complex_power_oracle() {
        use num::complex::Complex64;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for _ in 0..1000 {
            let d = rng.random_range(1..=5usize);
            let m = RWalkModel::simple_symmetric(d).unwrap();
            let u: Vec<f64> = (0..d)
                .map(|_| (rng.random::<f64>() - 0.5) * 2.0 * std::f64::consts::PI)
                .collect();
            let t: f64 = rng.random::<f64>() * 0.9999;
            let beta = 0.25 + 2.0 * rng.random::<f64>();
            let ours = chung_fuchs_integrand(&m, beta, t, &u);
            let base = Complex64::new(1.0 - t * m.char_fn(&u), 0.0);
            let oracle = base.powc(Complex64::new(-(1.0 + beta), 0.0)).re;
            assert!(ours > 0.0);
            assert!(
                (ours - oracle).abs() <= 1e-10 * oracle.abs().max(1.0),
                "{ours} vs {oracle}"
            );
        }
    }

    #[test]
    fn two_step_return_probability_is_one_over_2d() {
        for d in [1usize, 2, 3] {
            let m = RWalkModel::simple_symmetric(d).unwrap();
            let rep = rwalk_return_mass(&m, 1.0, 100, 200_000, 17).unwrap();
            let p2 = rep.points[0];
            assert_eq!(p2.n, 2);
            let expect = 1.0 / (2.0 * d as f64);
            assert!(
                (p2.phat - expect).abs() <= 4.0 * p2.stderr + 1e-12,
                "d={d}: {} vs {expect}",
                p2.phat
            );
        }
    }

    #[test]
    fn norm_drift_limits() {
        let m = RWalkModel::simple_symmetric(3).unwrap();
        let rows = norm_drift_check(&m, &[100.0], 1 << 20, 7).unwrap();
        let row = &rows[0];
        assert!(
            (row.drift_scaled - row.predicted_drift_scaled).abs()
                <= 0.05 * row.predicted_drift_scaled,
            "r drift = {}",
            row.drift_scaled
        );
        assert!(
            (row.second - row.predicted_second).abs() <= 0.05 * row.predicted_second,
            "second = {}",
            row.second
        );
        // one dimension: the drift term vanishes away from the origin
        let m1 = RWalkModel::simple_symmetric(1).unwrap();
        let rows = norm_drift_check(&m1, &[100.0], 1 << 20, 7).unwrap();
        assert!(rows[0].drift_scaled.abs() < 1e-12);
        assert!((rows[0].second - 1.0).abs() < 1e-12);
    }
}
