//! Reproducibly parallel trajectory simulation: excursion sampling,
//! conditional return-time and last-exit statistics, tail-exponent fitting,
//! the entrance-distribution coupling experiment, and the renewal-function
//! estimator.
//!
//! Determinism contract: every estimator is a pure function of its inputs and
//! master seed. Trajectory `i` draws from an independent ChaCha stream keyed
//! by `i`, work is split into fixed-size batches regardless of the worker
//! count, and batch results are folded sequentially in batch order, so thread
//! scheduling cannot perturb a single output bit.
//!
//! Censoring: trajectories are stopped at a time horizon and, where a level
//! cap is sound, at a level whose residual return probability is negligible
//! (the first crossing time of a level is the natural censoring witness).
//! Estimators never treat censored trajectories as returns; censoring counts
//! and the level in force are part of every report.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::fit::{geometric_edges, linear_fit, FitLine};
use crate::kernel::JumpKernel;
use crate::{Error, Result, State};

/// Trajectories per work item; fixed so that results do not depend on the
/// number of workers.
const BATCH: u64 = 4096;
/// Decade-increment ratio below one means the partial moment is saturating.
const SATURATION_RATIO: f64 = 1.0;
/// Minimum per-decade sample count for a decade pair to enter the
/// critical-exponent estimate.
const DECADE_MIN_COUNT: u64 = 100;
/// Attempts budgeted per requested entry in the coupling experiment.
const ATTEMPT_FACTOR: u64 = 12;
/// Escape level of the coupling experiment, as a multiple of `a + B`.
const ESCAPE_FACTOR: u64 = 20;

/// Per-trajectory RNG streams derived from one master seed.
#[derive(Debug, Clone, Copy)]
pub struct RngStreams {
    master: u64,
}

impl RngStreams {
    pub fn new(master: u64) -> Self {
        RngStreams { master }
    }

    /// The RNG of trajectory `index`; reproducible in isolation.
    pub fn rng(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        rng.set_stream(index);
        rng
    }
}

/// Inverse-CDF sampler compiled from a kernel on `[0, table_len)`.
pub struct StepSampler {
    b: usize,
    table_len: usize,
    kind: SamplerKind,
}

enum SamplerKind {
    /// Rows are exactly {-1, +1} away from 0 (state 0 jumps up surely):
    /// one threshold per state.
    TwoPoint { up: Vec<f64> },
    /// General rows padded to a fixed width of cumulative breakpoints.
    General { width: usize, cum: Vec<f64>, disp: Vec<i32> },
}

impl StepSampler {
    /// Compile rows for states `0..=max_state`. Callers size the table to
    /// their level cap plus the jump bound.
    pub fn new(kernel: &JumpKernel, max_state: State) -> Result<Self> {
        if let Some(m) = kernel.max_state() {
            if m < max_state {
                return Err(Error::WindowTooSmall(format!(
                    "table kernel defines states up to {m}, sampler needs {max_state}"
                )));
            }
        }
        let n = max_state as usize + 1;
        let b = kernel.max_jump() as usize;
        let mut two_point = true;
        let mut rows = Vec::with_capacity(n);
        let mut width = 0usize;
        for x in 0..n {
            let row = kernel.row(x as State);
            width = width.max(row.len());
            if x == 0 {
                two_point &= row == [(1, 1.0)];
            } else {
                two_point &= row.len() == 2 && row[0].0 == -1 && row[1].0 == 1;
            }
            rows.push(row);
        }
        let kind = if two_point {
            let up =
                rows.iter().map(|r| if r.len() == 1 { 1.0 } else { r[1].1 }).collect();
            SamplerKind::TwoPoint { up }
        } else {
            let mut cum = vec![2.0; n * width]; // sentinel above any draw
            let mut disp = vec![0i32; n * width];
            for (x, row) in rows.iter().enumerate() {
                let mut acc = 0.0;
                for (k, &(z, p)) in row.iter().enumerate() {
                    acc += p;
                    cum[x * width + k] = acc;
                    disp[x * width + k] = z as i32;
                }
                // guard the last breakpoint against rounding below 1
                let last = x * width + row.len() - 1;
                cum[last] = cum[last].max(1.0);
                for k in row.len()..width {
                    disp[x * width + k] = row.last().unwrap().0 as i32;
                }
            }
            SamplerKind::General { width, cum, disp }
        };
        Ok(StepSampler { b, table_len: n, kind })
    }

    pub fn max_jump(&self) -> usize {
        self.b
    }

    pub fn table_len(&self) -> usize {
        self.table_len
    }

    /// One transition from `x`; `x` must stay a jump below `table_len`.
    #[inline]
    pub fn step(&self, x: usize, rng: &mut ChaCha8Rng) -> usize {
        debug_assert!(x + self.b < self.table_len);
        match &self.kind {
            SamplerKind::TwoPoint { up } => {
                let u: f64 = rng.random();
                if u < up[x] {
                    x + 1
                } else {
                    x - 1
                }
            }
            SamplerKind::General { width, cum, disp } => {
                let u: f64 = rng.random();
                let base = x * width;
                let mut k = 0usize;
                while u >= cum[base + k] {
                    k += 1;
                }
                (x as i64 + disp[base + k] as i64) as usize
            }
        }
    }
}

/// Why observation of a trajectory stopped early.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CensorKind {
    /// The step horizon was reached.
    Time,
    /// The trajectory crossed the censor level; the residual probability of
    /// a return from there is bounded by the return probability at the level.
    Level,
}

/// Per-trajectory first-return, last-exit, and visit data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReturnRecord {
    pub x0: State,
    pub n_cap: u64,
    /// First hitting time of 0 (first return when starting there).
    pub tau: Option<u64>,
    /// Last observed visit time to 0 within the horizon; 0 if none.
    pub last_exit: u64,
    /// Visits to 0 during `[1, horizon]`.
    pub visits: u64,
    pub censored: Option<CensorKind>,
    /// Steps actually simulated.
    pub steps: u64,
}

/// Draw one trajectory from `x0`, stepping by inverse-CDF sampling of the
/// kernel rows, and record the first hit of 0, visits to 0, and the last
/// exit within the horizon. Deterministic in `(kernel, x0, seed, n_cap)`.
pub fn sample_excursion(
    kernel: &JumpKernel,
    x0: State,
    seed: u64,
    n_cap: u64,
) -> Result<ReturnRecord> {
    if n_cap == 0 {
        return Err(Error::InvalidParameter("n_cap must be >= 1".into()));
    }
    let mut rng = RngStreams::new(seed).rng(0);
    let mut x = x0;
    let mut rec = ReturnRecord {
        x0,
        n_cap,
        tau: None,
        last_exit: 0,
        visits: 0,
        censored: None,
        steps: 0,
    };
    for n in 1..=n_cap {
        let row = kernel.row(x);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut z = row.last().unwrap().0;
        for &(zz, p) in &row {
            acc += p;
            if u < acc {
                z = zz;
                break;
            }
        }
        x = (x as i64 + z) as State;
        rec.steps = n;
        if x == 0 {
            rec.visits += 1;
            rec.last_exit = n;
            if rec.tau.is_none() {
                rec.tau = Some(n);
            }
        }
    }
    // the return time is censored exactly when the horizon cut it off
    if rec.tau.is_none() {
        rec.censored = Some(CensorKind::Time);
    }
    Ok(rec)
}

pub(crate) fn run_batches<S, F>(n_traj: u64, make: F) -> Vec<S>
where
    S: Send,
    F: Fn(u64, u64) -> S + Sync,
{
    let n_batches = n_traj.div_ceil(BATCH);
    (0..n_batches)
        .into_par_iter()
        .map(|bi| {
            let lo = bi * BATCH;
            let hi = (lo + BATCH).min(n_traj);
            make(lo, hi)
        })
        .collect()
}

/// Level at which a first-return trajectory may be censored: far enough above
/// the diffusive scale of the tail-fit window that conditioned excursions
/// essentially never cross it, and high enough that the residual return
/// probability from it is negligible for a transient chain.
fn auto_level_cap(b: usize, n_cap: u64) -> usize {
    let diffusive = 3.2 * ((n_cap as f64) / 10.0).sqrt();
    (diffusive.ceil() as usize).max(128 * b)
}

#[derive(Clone)]
struct ExcBatch {
    returns: u64,
    censored_time: u64,
    censored_level: u64,
    sum_beta: Vec<f64>,
    sum_2beta: Vec<f64>,
    bin_count: Vec<u64>,
    bin_sum_beta: Vec<f64>, // beta-major: [beta][bin]
}

impl ExcBatch {
    fn new(n_beta: usize, n_bins: usize) -> Self {
        ExcBatch {
            returns: 0,
            censored_time: 0,
            censored_level: 0,
            sum_beta: vec![0.0; n_beta],
            sum_2beta: vec![0.0; n_beta],
            bin_count: vec![0; n_bins],
            bin_sum_beta: vec![0.0; n_beta * n_bins],
        }
    }

    fn merge(&mut self, other: &ExcBatch) {
        self.returns += other.returns;
        self.censored_time += other.censored_time;
        self.censored_level += other.censored_level;
        for (a, b) in self.sum_beta.iter_mut().zip(&other.sum_beta) {
            *a += b;
        }
        for (a, b) in self.sum_2beta.iter_mut().zip(&other.sum_2beta) {
            *a += b;
        }
        for (a, b) in self.bin_count.iter_mut().zip(&other.bin_count) {
            *a += b;
        }
        for (a, b) in self.bin_sum_beta.iter_mut().zip(&other.bin_sum_beta) {
            *a += b;
        }
    }
}

/// First-return simulation of trajectory indices `[lo, hi)`.
#[allow(clippy::too_many_arguments)]
fn first_return_batch(
    sampler: &StepSampler,
    streams: &RngStreams,
    x0: State,
    n_cap: u64,
    level: usize,
    betas: &[f64],
    edges: &[u64],
    lo: u64,
    hi: u64,
) -> ExcBatch {
    let mut st = ExcBatch::new(betas.len(), edges.len());
    for t in lo..hi {
        let mut rng = streams.rng(t);
        let mut x = x0 as usize;
        let mut n = 0u64;
        if x == 0 {
            // state 0 jumps up surely, so the first step cannot return
            x = sampler.step(0, &mut rng);
            n = 1;
        }
        let mut tau = 0u64;
        let mut outcome = 2u8; // 0 return, 1 level, 2 time
        while n < n_cap {
            n += 1;
            x = sampler.step(x, &mut rng);
            if x == 0 {
                tau = n;
                outcome = 0;
                break;
            }
            if x >= level {
                outcome = 1;
                break;
            }
        }
        match outcome {
            0 => {
                st.returns += 1;
                let tf = tau as f64;
                let bin = edges.partition_point(|&e| e < tau);
                st.bin_count[bin.min(edges.len() - 1)] += 1;
                for (bi, &beta) in betas.iter().enumerate() {
                    let v = tf.powf(beta);
                    st.sum_beta[bi] += v;
                    st.sum_2beta[bi] += v * v;
                    st.bin_sum_beta[bi * edges.len() + bin.min(edges.len() - 1)] += v;
                }
            }
            1 => st.censored_level += 1,
            _ => st.censored_time += 1,
        }
    }
    st
}

/// One point of the conditional survival curve.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SurvivalPoint {
    pub n: u64,
    pub survivors: u64,
    pub total_returns: u64,
}

/// Tail fit of the conditional return-time distribution.
#[derive(Debug, Clone, Serialize)]
pub struct TailFit {
    /// Estimated exponent of `P(tau > n | tau < inf) ~ n^-exponent`.
    pub exponent: f64,
    pub fit: FitLine,
    pub window: (u64, u64),
}

/// Aggregated excursion estimators for one `beta`.
#[derive(Debug, Clone, Serialize)]
pub struct MomentEstimate {
    pub x0: State,
    pub beta: f64,
    pub n_traj: u64,
    pub n_cap: u64,
    pub level_cap: u64,
    pub seed: u64,
    /// `E[tau^beta 1{tau < inf}]` estimate and its standard error.
    pub t_beta: f64,
    pub t_beta_se: f64,
    /// Return frequency `h^(x0)` with binomial standard error.
    pub return_freq: f64,
    pub return_freq_se: f64,
    pub returns: u64,
    pub censor_time_rate: f64,
    pub censor_level_rate: f64,
    pub survival: Vec<SurvivalPoint>,
    pub tail: Option<TailFit>,
}

/// Aggregate excursions started at `x0`: the moment `T^_beta`, the
/// conditional survival curve, a log-log tail fit over the top usable decade
/// (`n <= n_cap/10` with at least 200 survivors at the window top), and the
/// empirical return frequency. Errors when fewer than 100 returns were seen.
pub fn estimate_conditional_moments(
    kernel: &JumpKernel,
    x0: State,
    beta: f64,
    n_traj: u64,
    n_cap: u64,
    seed: u64,
) -> Result<MomentEstimate> {
    if n_traj < 1000 {
        return Err(Error::InvalidParameter("need n_traj >= 1000".into()));
    }
    if !(beta > 0.0) {
        return Err(Error::InvalidParameter("beta must be positive".into()));
    }
    let level = auto_level_cap(kernel.max_jump() as usize, n_cap).max(x0 as usize * 2 + 64);
    let sampler = StepSampler::new(kernel, (level + kernel.max_jump() as usize) as State)?;
    let streams = RngStreams::new(seed);
    let edges = geometric_edges(n_cap, 8);
    let betas = [beta];
    let batches = run_batches(n_traj, |lo, hi| {
        first_return_batch(&sampler, &streams, x0, n_cap, level, &betas, &edges, lo, hi)
    });
    let mut total = ExcBatch::new(1, edges.len());
    for b in &batches {
        total.merge(b);
    }
    if total.returns < 100 {
        return Err(Error::InsufficientData(format!(
            "only {} uncensored returns observed",
            total.returns
        )));
    }
    let nf = n_traj as f64;
    let t_beta = total.sum_beta[0] / nf;
    let var = (total.sum_2beta[0] / nf - t_beta * t_beta).max(0.0);
    let t_beta_se = (var / nf).sqrt();
    let p = total.returns as f64 / nf;
    let survival = survival_curve(&edges, &total.bin_count, total.returns, n_cap);
    let tail = fit_tail(&survival, n_cap);
    Ok(MomentEstimate {
        x0,
        beta,
        n_traj,
        n_cap,
        level_cap: level as u64,
        seed,
        t_beta,
        t_beta_se,
        return_freq: p,
        return_freq_se: (p * (1.0 - p) / nf).sqrt(),
        returns: total.returns,
        censor_time_rate: total.censored_time as f64 / nf,
        censor_level_rate: total.censored_level as f64 / nf,
        survival,
        tail,
    })
}

fn survival_curve(
    edges: &[u64],
    bin_count: &[u64],
    returns: u64,
    n_cap: u64,
) -> Vec<SurvivalPoint> {
    let mut out = Vec::new();
    let mut cum = 0u64;
    for (k, &e) in edges.iter().enumerate() {
        cum += bin_count[k];
        if e <= n_cap {
            out.push(SurvivalPoint { n: e, survivors: returns - cum, total_returns: returns });
        }
    }
    out
}

/// Least-squares tail exponent over the top usable decade: the window top is
/// the largest `n <= n_cap / 10` with at least 200 survivors, the bottom one
/// decade below.
fn fit_tail(survival: &[SurvivalPoint], n_cap: u64) -> Option<TailFit> {
    let top = survival
        .iter()
        .filter(|p| p.n <= n_cap / 10 && p.survivors >= 200)
        .map(|p| p.n)
        .max()?;
    let bottom = (top / 10).max(2);
    let pts: Vec<&SurvivalPoint> =
        survival.iter().filter(|p| p.n >= bottom && p.n <= top && p.survivors > 0).collect();
    if pts.len() < 4 {
        return None;
    }
    let xs: Vec<f64> = pts.iter().map(|p| (p.n as f64).ln()).collect();
    let ys: Vec<f64> =
        pts.iter().map(|p| (p.survivors as f64 / p.total_returns as f64).ln()).collect();
    let fit = linear_fit(&xs, &ys)?;
    Some(TailFit { exponent: -fit.slope, fit, window: (bottom, top) })
}

/// Saturation detection shared by every partial-moment scan in the crate.
/// Over a decade at `n` the increment of `E[tau^beta 1{tau <= n}]` scales
/// like `n^(beta - beta_crit)`, so a pair of consecutive decades yields the
/// ratio `10^(beta - beta_crit)`.
///
/// The verdict ratio is anchored at the latest decade holding at least
/// [`DECADE_MIN_COUNT`] samples and compares it with the following decade
/// (which may legitimately be almost empty: a collapsing increment is decisive
/// evidence of saturation even from few samples); when no following decade
/// fits under the horizon the preceding one is used.
pub(crate) fn decade_verdict(
    edges: &[u64],
    bin_count: &[u64],
    bin_sum: &[f64],
    fit_top: u64,
) -> Option<f64> {
    let mut decades: Vec<(u64, u64)> = Vec::new();
    let mut hi = 10u64;
    while hi <= fit_top {
        decades.push((hi / 10, hi));
        hi *= 10;
    }
    let slice = |lo: u64, hi: u64| -> (u64, f64) {
        let mut count = 0u64;
        let mut sum = 0.0;
        for (k, &e) in edges.iter().enumerate() {
            if e > lo && e <= hi {
                count += bin_count[k];
                sum += bin_sum[k];
            }
        }
        (count, sum)
    };
    let cells: Vec<(u64, f64)> = decades.iter().map(|&(lo, hi)| slice(lo, hi)).collect();

    let anchor = (0..decades.len())
        .rev()
        .find(|&w| decades[w].0 >= 10 && cells[w].0 >= DECADE_MIN_COUNT && cells[w].1 > 0.0);
    anchor.and_then(|d| {
        if d + 1 < decades.len() {
            Some(cells[d + 1].1 / cells[d].1)
        } else if d >= 1 && cells[d - 1].0 >= DECADE_MIN_COUNT && cells[d - 1].1 > 0.0 {
            Some(cells[d].1 / cells[d - 1].1)
        } else {
            None
        }
    })
}

/// Critical-exponent estimate from one partial-moment histogram. In log time
/// the density of `tau^beta d P(tau <= n)` scales like `n^(beta - beta_crit)`,
/// so the log-width-normalised bin sums regress on the log bin midpoints with
/// slope `beta - beta_crit`. Bins below 16 or with fewer than `min_count`
/// samples stay out.
pub(crate) fn bin_slope_estimate(
    beta: f64,
    edges: &[u64],
    bin_count: &[u64],
    bin_sum: &[f64],
    fit_top: u64,
    min_count: u64,
) -> Option<f64> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for k in 1..edges.len() {
        let lo = edges[k - 1];
        let hi = edges[k];
        if lo < 16 || hi > fit_top {
            continue;
        }
        if bin_count[k] < min_count || bin_sum[k] <= 0.0 {
            continue;
        }
        let log_width = (hi as f64 / lo as f64).ln();
        xs.push(0.5 * ((lo as f64).ln() + (hi as f64).ln()));
        ys.push((bin_sum[k] / log_width).ln());
    }
    if xs.len() < 4 {
        return None;
    }
    linear_fit(&xs, &ys).map(|f| beta - f.slope)
}

/// Verdict for one `beta` of the partial-moment growth scan.
#[derive(Debug, Clone, Serialize)]
pub struct BetaVerdict {
    pub beta: f64,
    /// Ratio of the last two usable decade increments of the partial moment;
    /// below one means saturation, above one power growth.
    pub decade_ratio: Option<f64>,
    pub saturating: Option<bool>,
}

/// One row of the empirical `T <= L <= U` triad.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TriadRow {
    pub beta: f64,
    pub t: f64,
    pub t_se: f64,
    pub l: f64,
    pub l_se: f64,
    pub u: f64,
    pub u_se: f64,
}

/// Output of the strong-transience scan.
#[derive(Debug, Clone, Serialize)]
pub struct EmpiricalClassification {
    pub x0: State,
    pub n_traj: u64,
    pub n_cap: u64,
    pub level_cap: u64,
    pub seed: u64,
    pub returns: u64,
    pub censor_time_rate: f64,
    pub censor_level_rate: f64,
    pub verdicts: Vec<BetaVerdict>,
    /// Median of the per-(beta, decade) critical-exponent estimates
    /// `beta - log10(decade ratio)`.
    pub beta_crit_hat: Option<f64>,
    /// Empirical `T <= L <= U` rows from full-horizon trajectories
    /// (a tenth of the budget).
    pub triad: Vec<TriadRow>,
    pub ordering_ok: bool,
}

/// Simulation budget of a Monte Carlo scan.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct McBudget {
    pub n_traj: u64,
    pub n_cap: u64,
}

/// Scan a grid of `beta` values: for each, decide from the partial moment
/// `E[tau^beta 1{tau <= n} | tau < inf]` whether the moment saturates or
/// grows like a power of `n`, and estimate the critical exponent from the
/// decade-increment ratios. Over a decade at `n` the increment of the partial
/// moment scales like `n^(beta - beta_crit)`, so each usable `(beta, decade)`
/// pair yields the estimate `beta - log10(ratio)`; the reported value is
/// their median. A tenth of the budget is re-run to the full horizon to
/// cross-check the empirical `T^ <= L^ <= U^` ordering on one set of
/// trajectories.
pub fn estimate_strong_transience(
    kernel: &JumpKernel,
    x0: State,
    beta_grid: &[f64],
    budget: McBudget,
    seed: u64,
) -> Result<EmpiricalClassification> {
    if beta_grid.is_empty() || beta_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter("beta grid must be increasing and non-empty".into()));
    }
    if beta_grid[0] <= 0.0 {
        return Err(Error::InvalidParameter("beta grid must be positive".into()));
    }
    let n_traj = budget.n_traj;
    let n_cap = budget.n_cap;
    if n_traj < 1000 {
        return Err(Error::InvalidParameter("need n_traj >= 1000".into()));
    }
    let level = auto_level_cap(kernel.max_jump() as usize, n_cap).max(x0 as usize * 2 + 64);
    let sampler = StepSampler::new(kernel, (level + kernel.max_jump() as usize) as State)?;
    let streams = RngStreams::new(seed);
    let edges = geometric_edges(n_cap, 8);
    let batches = run_batches(n_traj, |lo, hi| {
        first_return_batch(&sampler, &streams, x0, n_cap, level, beta_grid, &edges, lo, hi)
    });
    let mut total = ExcBatch::new(beta_grid.len(), edges.len());
    for b in &batches {
        total.merge(b);
    }
    if total.returns < 100 {
        return Err(Error::InsufficientData(format!(
            "only {} uncensored returns observed",
            total.returns
        )));
    }

    // decade increments of the partial moments from the binned sums
    let fit_top = n_cap / 10;
    let mut verdicts = Vec::with_capacity(beta_grid.len());
    let mut crit_estimates: Vec<f64> = Vec::new();
    for (bi, &beta) in beta_grid.iter().enumerate() {
        let sums = &total.bin_sum_beta[bi * edges.len()..(bi + 1) * edges.len()];
        let ratio = decade_verdict(&edges, &total.bin_count, sums, fit_top);
        if let Some(est) = bin_slope_estimate(beta, &edges, &total.bin_count, sums, fit_top, 25) {
            crit_estimates.push(est);
        }
        verdicts.push(BetaVerdict {
            beta,
            decade_ratio: ratio,
            saturating: ratio.map(|r| r < SATURATION_RATIO),
        });
    }
    let beta_crit_hat = if crit_estimates.is_empty() {
        None
    } else {
        crit_estimates.sort_by(f64::total_cmp);
        Some(crit_estimates[crit_estimates.len() / 2])
    };

    // full-horizon cross-check on a tenth of the budget, fresh streams
    let n2 = (n_traj / 10).max(1000);
    let triad_batches = run_batches(n2, |lo, hi| {
        full_horizon_batch(
            &sampler,
            &streams,
            x0,
            n_cap,
            level,
            beta_grid,
            n_traj + lo,
            n_traj + hi,
        )
    });
    let mut tri = TriadBatch::new(beta_grid.len());
    for b in &triad_batches {
        tri.merge(b);
    }
    let nf = n2 as f64;
    let mut triad = Vec::with_capacity(beta_grid.len());
    let mut ordering_ok = true;
    for (bi, &beta) in beta_grid.iter().enumerate() {
        let mean = |s: f64| s / nf;
        let se = |s: f64, s2: f64| (((s2 / nf - (s / nf) * (s / nf)).max(0.0)) / nf).sqrt();
        let row = TriadRow {
            beta,
            t: mean(tri.t[bi]),
            t_se: se(tri.t[bi], tri.t2[bi]),
            l: mean(tri.l[bi]),
            l_se: se(tri.l[bi], tri.l2[bi]),
            u: mean(tri.u[bi]),
            u_se: se(tri.u[bi], tri.u2[bi]),
        };
        // the triad is ordered trajectory by trajectory, so the means are too
        ordering_ok &= row.t <= row.l * (1.0 + 1e-12) && row.l <= row.u * (1.0 + 1e-12);
        triad.push(row);
    }

    Ok(EmpiricalClassification {
        x0,
        n_traj,
        n_cap,
        level_cap: level as u64,
        seed,
        returns: total.returns,
        censor_time_rate: total.censored_time as f64 / n_traj as f64,
        censor_level_rate: total.censored_level as f64 / n_traj as f64,
        verdicts,
        beta_crit_hat,
        triad,
        ordering_ok,
    })
}

#[derive(Clone)]
struct TriadBatch {
    t: Vec<f64>,
    t2: Vec<f64>,
    l: Vec<f64>,
    l2: Vec<f64>,
    u: Vec<f64>,
    u2: Vec<f64>,
}

impl TriadBatch {
    fn new(n: usize) -> Self {
        TriadBatch {
            t: vec![0.0; n],
            t2: vec![0.0; n],
            l: vec![0.0; n],
            l2: vec![0.0; n],
            u: vec![0.0; n],
            u2: vec![0.0; n],
        }
    }
    fn merge(&mut self, o: &TriadBatch) {
        let pairs = [
            (&mut self.t, &o.t),
            (&mut self.t2, &o.t2),
            (&mut self.l, &o.l),
            (&mut self.l2, &o.l2),
            (&mut self.u, &o.u),
            (&mut self.u2, &o.u2),
        ];
        for (dst, src) in pairs {
            for (a, b) in dst.iter_mut().zip(src) {
                *a += b;
            }
        }
    }
}

/// Full-horizon trajectories recording tau, the last exit, and every visit
/// time to 0, for the empirical `T <= L <= U` triad.
#[allow(clippy::too_many_arguments)]
fn full_horizon_batch(
    sampler: &StepSampler,
    streams: &RngStreams,
    x0: State,
    n_cap: u64,
    level: usize,
    betas: &[f64],
    lo: u64,
    hi: u64,
) -> TriadBatch {
    let mut st = TriadBatch::new(betas.len());
    let mut tv = vec![0.0f64; betas.len()];
    let mut uv = vec![0.0f64; betas.len()];
    for t in lo..hi {
        let mut rng = streams.rng(t);
        let mut x = x0 as usize;
        tv.iter_mut().for_each(|v| *v = 0.0);
        uv.iter_mut().for_each(|v| *v = 0.0);
        let mut last = 0u64;
        let mut first = true;
        let mut n = 0u64;
        if x == 0 {
            x = sampler.step(0, &mut rng);
            n = 1;
        }
        while n < n_cap {
            n += 1;
            x = sampler.step(x, &mut rng);
            if x == 0 {
                last = n;
                let nf = n as f64;
                for (bi, &beta) in betas.iter().enumerate() {
                    let v = nf.powf(beta);
                    uv[bi] += v;
                    if first {
                        tv[bi] = v;
                    }
                }
                first = false;
            } else if x >= level {
                break;
            }
        }
        let lf = last as f64;
        for (bi, &beta) in betas.iter().enumerate() {
            let lvb = if last > 0 { lf.powf(beta) } else { 0.0 };
            st.t[bi] += tv[bi];
            st.t2[bi] += tv[bi] * tv[bi];
            st.l[bi] += lvb;
            st.l2[bi] += lvb * lvb;
            st.u[bi] += uv[bi];
            st.u2[bi] += uv[bi] * uv[bi];
        }
    }
    st
}

/// One start of the coupling experiment.
#[derive(Debug, Clone, Serialize)]
pub struct CouplingRow {
    /// Separation `ell`; the start is `a + B + ell`.
    pub ell: u64,
    pub start: State,
    pub attempts: u64,
    pub entries: u64,
    /// Conditional entrance law over `I_a = [a, a+B]`.
    pub law: Vec<f64>,
    /// Total variation distance to the largest-separation law (the limit
    /// surrogate); zero for the reference row itself.
    pub tv_to_reference: f64,
    /// Distance to the previous (smaller) separation, when one exists.
    pub tv_consecutive: Option<f64>,
}

/// Empirical entrance laws, their distances, and the fitted decay rate.
#[derive(Debug, Clone, Serialize)]
pub struct CouplingTable {
    pub a: State,
    pub interval: (State, State),
    pub seed: u64,
    pub escape_level: State,
    pub rows: Vec<CouplingRow>,
    /// Fit of `log TV` against `ell` over the non-reference rows.
    pub fit: Option<FitLine>,
    /// Fitted decay rate (minus the slope).
    pub decay_rate: Option<f64>,
    /// False when some start collected fewer than half the requested entries.
    pub reliable: bool,
}

/// Simulate entries into `I_a = [a, a+B]` from the starts `a + B + ell` and
/// fit the exponential stabilisation of the entrance law; the law at the
/// largest separation stands in for the limit law. Each start is budgeted a
/// fixed multiple of the requested entries (a transient chain enters with
/// probability well below one); trajectories climbing past the escape level
/// count as non-entries, with a residual entry probability from there that is
/// a negligible, reported contamination.
pub fn coupling_experiment(
    kernel: &JumpKernel,
    a: State,
    separations: &[u64],
    n_entries: u64,
    seed: u64,
) -> Result<CouplingTable> {
    if separations.len() < 2 || separations.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter("need at least two increasing separations".into()));
    }
    if n_entries == 0 {
        return Err(Error::InvalidParameter("n_entries must be positive".into()));
    }
    let b = kernel.max_jump() as u64;
    let top = a + b;
    let escape = (ESCAPE_FACTOR * top.max(1)).max(top + separations.last().unwrap() * 4);
    let sampler = StepSampler::new(kernel, escape + b)?;
    let streams = RngStreams::new(seed);
    let attempts = n_entries * ATTEMPT_FACTOR;
    let interval_len = (b + 1) as usize;
    // generous per-attempt horizon; the escape level is the real stop
    let attempt_cap = 40 * escape * escape;

    let mut rows: Vec<CouplingRow> = Vec::with_capacity(separations.len());
    let mut stream_base = 0u64;
    for &ell in separations {
        let start = top + ell;
        let batches = run_batches(attempts, |lo, hi| {
            let mut counts = vec![0u64; interval_len];
            for t in lo..hi {
                let mut rng = streams.rng(stream_base + t);
                let mut x = start as usize;
                let mut n = 0u64;
                while n < attempt_cap {
                    n += 1;
                    x = sampler.step(x, &mut rng);
                    if x <= top as usize {
                        // bounded downward jumps cannot overshoot the interval
                        debug_assert!(x >= a as usize);
                        counts[x - a as usize] += 1;
                        break;
                    }
                    if x >= escape as usize {
                        break;
                    }
                }
            }
            counts
        });
        let mut counts = vec![0u64; interval_len];
        for bcounts in &batches {
            for (c, v) in counts.iter_mut().zip(bcounts) {
                *c += v;
            }
        }
        let entries: u64 = counts.iter().sum();
        let law: Vec<f64> = if entries > 0 {
            counts.iter().map(|&c| c as f64 / entries as f64).collect()
        } else {
            vec![0.0; interval_len]
        };
        rows.push(CouplingRow {
            ell,
            start,
            attempts,
            entries,
            law,
            tv_to_reference: 0.0,
            tv_consecutive: None,
        });
        stream_base += attempts;
    }

    let reference = rows.last().unwrap().law.clone();
    let tv =
        |p: &[f64], q: &[f64]| 0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>();
    for i in 0..rows.len() {
        rows[i].tv_to_reference = tv(&rows[i].law, &reference);
        if i > 0 {
            rows[i].tv_consecutive = Some(tv(&rows[i].law, &rows[i - 1].law));
        }
    }
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .take(rows.len() - 1)
        .filter(|r| r.tv_to_reference > 0.0)
        .map(|r| (r.ell as f64, r.tv_to_reference.ln()))
        .collect();
    let fit = if pts.len() >= 2 {
        let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
        linear_fit(&xs, &ys)
    } else {
        None
    };
    let reliable = rows.iter().all(|r| 2 * r.entries >= n_entries);
    Ok(CouplingTable {
        a,
        interval: (a, top),
        seed,
        escape_level: escape,
        rows,
        decay_rate: fit.map(|f| -f.slope),
        fit,
        reliable,
    })
}

/// One renewal-function estimate.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RenewalEstimate {
    pub x: State,
    /// Estimated expected total time spent in `[0, x]`.
    pub h_hat: f64,
    pub se: f64,
    /// `h_hat / x^2`; converges to `1/(2c - s^2)` for a transient chain.
    pub scaled: f64,
}

/// Renewal-function report.
#[derive(Debug, Clone, Serialize)]
pub struct RenewalReport {
    pub estimates: Vec<RenewalEstimate>,
    pub n_traj: u64,
    pub seed: u64,
    pub stop_level: State,
    pub n_cap: u64,
    pub censored: u64,
    /// Censoring above five percent flags the estimates.
    pub flagged: bool,
}

/// Estimate `H(x) = E sum_n 1{X_n <= x}` on a grid by running trajectories
/// from 0 until they exceed a safety multiple (ten) of the largest grid
/// point. Rejects kernels whose declared drift parameters are recurrent,
/// where the renewal function is infinite.
pub fn estimate_renewal_function(
    kernel: &JumpKernel,
    x_grid: &[State],
    n_traj: u64,
    seed: u64,
) -> Result<RenewalReport> {
    if x_grid.is_empty() || x_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter("x grid must be increasing and non-empty".into()));
    }
    if let Some((c, s2)) = kernel.lamperti_params() {
        if 2.0 * c <= s2 {
            return Err(Error::InvalidParameter(format!(
                "renewal function diverges for a recurrent kernel (2c = {} <= s^2 = {s2})",
                2.0 * c
            )));
        }
    }
    if n_traj == 0 {
        return Err(Error::InvalidParameter("n_traj must be positive".into()));
    }
    let x_max = *x_grid.last().unwrap() as usize;
    let stop = 10 * x_max.max(8);
    let n_cap = 50u64 * (stop as u64) * (stop as u64);
    let sampler = StepSampler::new(kernel, (stop + kernel.max_jump() as usize) as State)?;
    let streams = RngStreams::new(seed);
    let g = x_grid.len();

    struct RenBatch {
        sums: Vec<f64>,
        sq: Vec<f64>,
        censored: u64,
    }
    let batches = run_batches(n_traj, |lo, hi| {
        let mut st = RenBatch { sums: vec![0.0; g], sq: vec![0.0; g], censored: 0 };
        let mut occ = vec![0u64; x_max + 1];
        for t in lo..hi {
            let mut rng = streams.rng(t);
            occ.iter_mut().for_each(|v| *v = 0);
            let mut x = 0usize;
            occ[0] = 1; // time 0 counts
            let mut n = 0u64;
            let mut hit_cap = true;
            while n < n_cap {
                n += 1;
                x = sampler.step(x, &mut rng);
                if x <= x_max {
                    occ[x] += 1;
                } else if x >= stop {
                    hit_cap = false;
                    break;
                }
            }
            if hit_cap {
                st.censored += 1;
            }
            let mut acc = 0u64;
            let mut gi = 0usize;
            for (state, &cnt) in occ.iter().enumerate() {
                acc += cnt;
                while gi < g && x_grid[gi] == state as State {
                    st.sums[gi] += acc as f64;
                    st.sq[gi] += (acc as f64) * (acc as f64);
                    gi += 1;
                }
            }
        }
        st
    });
    let mut sums = vec![0.0; g];
    let mut sq = vec![0.0; g];
    let mut censored = 0u64;
    for b in &batches {
        for i in 0..g {
            sums[i] += b.sums[i];
            sq[i] += b.sq[i];
        }
        censored += b.censored;
    }
    let nf = n_traj as f64;
    let estimates: Vec<RenewalEstimate> = x_grid
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let mean = sums[i] / nf;
            let var = (sq[i] / nf - mean * mean).max(0.0);
            RenewalEstimate {
                x,
                h_hat: mean,
                se: (var / nf).sqrt(),
                scaled: mean / ((x as f64) * (x as f64)),
            }
        })
        .collect();
    Ok(RenewalReport {
        estimates,
        n_traj,
        seed,
        stop_level: stop as State,
        n_cap,
        censored,
        flagged: (censored as f64) > 0.05 * nf,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{Family, LampertiSpec};
    use crate::solver::solve_return_prob_bracket;

    fn nn(c: f64) -> JumpKernel {
        LampertiSpec::new(c, 1.0, Family::NearestNeighbour).unwrap().build_kernel().unwrap()
    }

    fn mj2() -> JumpKernel {
        LampertiSpec::new(2.0, 1.0, Family::MultiJump { max_jump: 2 })
            .unwrap()
            .build_kernel()
            .unwrap()
    }

    #[test]
    fn deterministic_kernels_force_the_obvious() {
        let down = JumpKernel::deterministic(-1).unwrap();
        let rec = sample_excursion(&down, 5, 1, 100).unwrap();
        assert_eq!(rec.tau, Some(5));
        let up = JumpKernel::deterministic(1).unwrap();
        let rec = sample_excursion(&up, 1, 1, 100).unwrap();
        assert_eq!(rec.tau, None);
        assert_eq!(rec.censored, Some(CensorKind::Time));
    }

    #[test]
    fn excursions_replay_bit_identically() {
        let k = nn(2.0);
        let a = sample_excursion(&k, 1, 42, 10_000).unwrap();
        let b = sample_excursion(&k, 1, 42, 10_000).unwrap();
        assert_eq!(a, b);
        if let Some(tau) = a.tau {
            assert!(a.last_exit >= tau && a.visits >= 1 && a.censored.is_none());
        }
    }

    #[test]
    fn return_frequency_matches_exact_bracket() {
        let k = nn(2.0);
        let est = estimate_conditional_moments(&k, 5, 1.0, 100_000, 20_000, 11).unwrap();
        let sol = solve_return_prob_bracket(&k, 10_000).unwrap();
        // exact h(5) = 3/(5*4*5*6) = 0.005
        let lo = sol.lower(5) - 4.0 * est.return_freq_se;
        let hi = sol.upper(5).unwrap() + 4.0 * est.return_freq_se;
        assert!(
            est.return_freq >= lo && est.return_freq <= hi,
            "h^ = {} not in [{lo}, {hi}]",
            est.return_freq
        );
        assert!(est.returns >= 100);
        assert!(est.t_beta > 0.0);
    }

    #[test]
    fn results_do_not_depend_on_worker_count() {
        let k = mj2();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let one =
            pool.install(|| estimate_conditional_moments(&k, 3, 1.0, 20_000, 10_000, 5).unwrap());
        let pool = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let four =
            pool.install(|| estimate_conditional_moments(&k, 3, 1.0, 20_000, 10_000, 5).unwrap());
        assert_eq!(one.t_beta.to_bits(), four.t_beta.to_bits());
        assert_eq!(one.returns, four.returns);
        assert_eq!(one.return_freq.to_bits(), four.return_freq.to_bits());
    }

    #[test]
    fn saturation_scan_brackets_the_critical_beta() {
        let k = nn(2.0);
        let grid: Vec<f64> = (1..=10).map(|i| 0.25 * i as f64).collect();
        let out = estimate_strong_transience(
            &k,
            1,
            &grid,
            McBudget { n_traj: 250_000, n_cap: 100_000 },
            7,
        )
        .unwrap();
        let bc = out.beta_crit_hat.expect("estimate exists");
        assert!((bc - 1.5).abs() < 0.35, "beta_crit_hat = {bc}");
        assert!(out.ordering_ok);
        // low betas saturate, high betas grow
        let low = out.verdicts.iter().find(|v| v.beta == 0.5).unwrap();
        assert_eq!(low.saturating, Some(true), "ratio {:?}", low.decade_ratio);
        let high = out.verdicts.iter().find(|v| v.beta == 2.5).unwrap();
        assert_eq!(high.saturating, Some(false), "ratio {:?}", high.decade_ratio);
    }

    #[test]
    fn coupling_tv_vanishes_for_skip_free_descent() {
        let k = nn(2.0);
        let table = coupling_experiment(&k, 20, &[4, 8, 16], 2_000, 3).unwrap();
        for row in &table.rows {
            assert!(row.tv_to_reference <= 1e-15, "law {:?}", row.law);
        }
        assert!(table.fit.is_none());
        assert!(table.reliable);
    }

    /// The empirical entrance laws must agree with the exact absorbing
    /// solves; this also certifies the escape-level contamination bound.
    #[test]
    fn coupling_laws_match_exact_entrance_solves() {
        use crate::solver::solve_interval_hitting;
        let k = mj2();
        let a = 20u64;
        let table = coupling_experiment(&k, a, &[3, 9], 6_000, 9).unwrap();
        let starts: Vec<u64> = table.rows.iter().map(|r| r.start).collect();
        let exact = solve_interval_hitting(&k, a, &starts, 2000).unwrap();
        for (row, ed) in table.rows.iter().zip(&exact) {
            for (slot, &(u, p_exact)) in ed.probs.iter().enumerate() {
                let p_mc = row.law[slot];
                let se = (p_exact * (1.0 - p_exact) / row.entries as f64).sqrt();
                assert!(
                    (p_mc - p_exact).abs() <= 5.0 * se + 1e-3,
                    "start {}: law({u}) = {p_mc} vs exact {p_exact}",
                    row.start
                );
            }
        }
        assert!(table.reliable);
    }

    #[test]
    fn renewal_estimates_are_monotone_and_near_the_limit() {
        let k = nn(2.0);
        let rep = estimate_renewal_function(&k, &[25, 50, 100], 400, 13).unwrap();
        let hs: Vec<f64> = rep.estimates.iter().map(|e| e.h_hat).collect();
        assert!(hs[0] <= hs[1] && hs[1] <= hs[2]);
        let scaled = rep.estimates.last().unwrap().scaled;
        assert!((scaled - 1.0 / 3.0).abs() < 0.12, "scaled = {scaled}");
        assert!(!rep.flagged, "censored {}", rep.censored);
        // recurrent kernel is rejected
        let sym = nn(0.0);
        assert!(estimate_renewal_function(&sym, &[10], 10, 1).is_err());
    }
}
