//! Bounded-jump Markov kernels on the non-negative integers and their
//! theoretical classification.
//!
//! A kernel assigns to each state `x` a probability vector over displacements
//! `z in {-min(x,B), ..., +B}`. The families here are calibrated so that the
//! increment moments satisfy `mu_1(x) = c/x` and `mu_2(x) = s^2` exactly for
//! all large `x`; near the origin each family applies a fixed small-state rule
//! that keeps the chain irreducible (only the asymptotics are constrained, so
//! any irreducible completion is admissible; the completion changes the
//! slowly-varying factor of the return probability by a constant, which is why
//! every report records it).

use std::io::BufRead;

use serde::Serialize;

use crate::{Error, Result, State};

/// Tolerance on row sums.
pub const ROW_SUM_TOL: f64 = 1e-12;
/// `|2c - (2*beta+1) s^2| <= BOUNDARY_TOL` is reported as the boundary case.
pub const BOUNDARY_TOL: f64 = 1e-9;

/// Up-step probability assigned to small states where `1/2 + c/(2x)` would
/// not be a valid probability (drift clamped toward +1 for `c > 0`).
pub const SMALL_STATE_UP: f64 = 0.75;

/// Kernel family of a [`LampertiSpec`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Family {
    /// Birth-death chain: `P(x -> x±1) = 1/2 ± c/(2x)` for `x > |c|`.
    NearestNeighbour,
    /// Jumps in `{-B, -1, 0, +1, +B}` with a `c/x` tilt on the `±1` atoms.
    MultiJump { max_jump: u32 },
}

/// Drift parameters of a Lamperti family together with the derived exponents.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LampertiSpec {
    pub c: f64,
    pub s2: f64,
    pub family: Family,
}

/// The four closed-form exponents attached to `(c, s^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriticalExponents {
    /// `(2c - s^2)/s^2`, the regular-variation index of the return probability.
    pub gamma_c: f64,
    /// `gamma_c / 2`, the largest `beta` with finite conditional return moments.
    pub beta_crit: f64,
    /// `(2c + s^2)/s^2`, the dimension of the comparable Bessel process.
    pub delta_bessel: f64,
    /// `(2c + s^2)/(2 s^2)`, the local-limit decay exponent of `P(X_n = 0)`.
    pub q_llt: f64,
}

impl LampertiSpec {
    /// A spec with validated parameters; recurrent parameter choices are
    /// allowed (`2c <= s^2`).
    pub fn new(c: f64, s2: f64, family: Family) -> Result<Self> {
        if !(s2 > 0.0) || !s2.is_finite() {
            return Err(Error::InvalidParameter(format!("s2 must be positive, got {s2}")));
        }
        if !c.is_finite() {
            return Err(Error::InvalidParameter("c must be finite".into()));
        }
        match family {
            Family::NearestNeighbour => {
                if (s2 - 1.0).abs() > ROW_SUM_TOL {
                    return Err(Error::InvalidParameter(format!(
                        "nearest-neighbour jumps have unit variance; got s2 = {s2}"
                    )));
                }
            }
            Family::MultiJump { max_jump } => {
                if max_jump < 2 {
                    return Err(Error::InvalidParameter(
                        "multi-jump family needs max_jump >= 2; use NearestNeighbour for B = 1"
                            .into(),
                    ));
                }
                let b = f64::from(max_jump);
                let nu1 = s2 / 200.0;
                let nu_b = (s2 / 2.0 - nu1) / (b * b);
                let nu0 = 1.0 - 2.0 * nu1 - 2.0 * nu_b;
                if nu0 < 0.0 || nu_b <= 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "s2 = {s2} too large for max_jump = {max_jump}: base law mass at 0 is {nu0}"
                    )));
                }
            }
        }
        Ok(LampertiSpec { c, s2, family })
    }

    /// Like [`LampertiSpec::new`] but rejects parameters outside the transient
    /// regime `2c > s^2`.
    pub fn transient(c: f64, s2: f64, family: Family) -> Result<Self> {
        let spec = Self::new(c, s2, family)?;
        if !spec.is_transient() {
            return Err(Error::InvalidParameter(format!(
                "transient family requires 2c > s^2; got 2c = {} <= s^2 = {s2}",
                2.0 * c
            )));
        }
        Ok(spec)
    }

    pub fn is_transient(&self) -> bool {
        2.0 * self.c > self.s2
    }

    pub fn gamma_c(&self) -> f64 {
        (2.0 * self.c - self.s2) / self.s2
    }

    pub fn exponents(&self) -> CriticalExponents {
        critical_exponents(self)
    }

    pub fn max_jump(&self) -> i64 {
        match self.family {
            Family::NearestNeighbour => 1,
            Family::MultiJump { max_jump } => i64::from(max_jump),
        }
    }

    pub fn build_kernel(&self) -> Result<JumpKernel> {
        build_lamperti_kernel(self)
    }
}

/// Derived exponents of `(c, s^2)`. They satisfy `delta_bessel = gamma_c + 2`
/// and `q_llt = beta_crit + 1` identically.
pub fn critical_exponents(spec: &LampertiSpec) -> CriticalExponents {
    let c = spec.c;
    let s2 = spec.s2;
    CriticalExponents {
        gamma_c: (2.0 * c - s2) / s2,
        beta_crit: (2.0 * c - s2) / (2.0 * s2),
        delta_bessel: (2.0 * c + s2) / s2,
        q_llt: (2.0 * c + s2) / (2.0 * s2),
    }
}

/// Verdict of the theoretical classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    StrongTransient,
    NotStrongTransient,
    Boundary,
    Recurrent,
    Transient,
}

/// Outcome of [`classify_theoretical`] with the inequality that decided it.
#[derive(Debug, Clone, Serialize)]
pub struct Classification {
    pub verdict: Verdict,
    pub beta: Option<f64>,
    /// Left side `2c` of the classifying inequality.
    pub lhs: f64,
    /// Right side `(2*beta + 1) s^2` (or `s^2` for the recurrence test).
    pub rhs: f64,
    pub rationale: String,
}

/// Classify `beta`-strong transience: strong transient iff
/// `2c > (2*beta+1) s^2`, with a declared tolerance for the boundary case and
/// a recurrence verdict when `2c <= s^2` (no `beta` classification there).
pub fn classify_theoretical(spec: &LampertiSpec, beta: f64) -> Result<Classification> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::InvalidParameter(format!("beta must be positive, got {beta}")));
    }
    let two_c = 2.0 * spec.c;
    if two_c <= spec.s2 {
        return Ok(Classification {
            verdict: Verdict::Recurrent,
            beta: None,
            lhs: two_c,
            rhs: spec.s2,
            rationale: format!("2c = {two_c} <= s^2 = {}: recurrent", spec.s2),
        });
    }
    let rhs = (2.0 * beta + 1.0) * spec.s2;
    let verdict = if (two_c - rhs).abs() <= BOUNDARY_TOL {
        Verdict::Boundary
    } else if two_c > rhs {
        Verdict::StrongTransient
    } else {
        Verdict::NotStrongTransient
    };
    let rel = match verdict {
        Verdict::StrongTransient => ">",
        Verdict::NotStrongTransient => "<",
        _ => "~",
    };
    Ok(Classification {
        verdict,
        beta: Some(beta),
        lhs: two_c,
        rhs,
        rationale: format!("2c = {two_c} {rel} (2*beta+1) s^2 = {rhs} at beta = {beta}"),
    })
}

#[derive(Debug, Clone)]
enum KernelFamily {
    NearestNeighbour {
        c: f64,
        /// States `1..=clamp_end` use the fixed small-state split.
        clamp_end: State,
    },
    MultiJump {
        c: f64,
        b: i64,
        /// Base symmetric probabilities for z = -B, -1, 0, +1, +B.
        nu_b: f64,
        nu_1: f64,
        nu_0: f64,
        /// Tilted rows apply for `x >= x_min`.
        x_min: State,
    },
    /// Jumps by a fixed step; at states where the step would go below zero
    /// the chain stays put. Test/diagnostic family.
    Deterministic { step: i64 },
    /// Explicit rows for states `0..rows.len()`.
    Table { max_jump: i64, rows: Vec<Vec<(i64, f64)>> },
}

/// A bounded-jump transition law on the non-negative integers.
#[derive(Debug, Clone)]
pub struct JumpKernel {
    family: KernelFamily,
    lamperti: Option<LampertiSpec>,
}

/// Construct the kernel of a Lamperti family.
///
/// Nearest neighbour: `P(x -> x±1) = 1/2 ± c/(2x)` for every `x > |c|`; for
/// `1 <= x <= |c|` the row is the fixed split `(SMALL_STATE_UP, 1-SMALL_STATE_UP)`
/// toward the drift direction, and state 0 jumps to 1 surely.
///
/// Multi-jump (`B >= 2`): base symmetric law with `nu(±1) = s^2/200`,
/// `nu(±B) = (s^2/2 - nu_1)/B^2`, rest at 0, tilted by `±c/(2Bx)` on the
/// `±B` atoms. The calibration is exact: `mu_1(x) = c/x` and `mu_2(x) = s^2`
/// for every `x >= x_min` (the tilt cancels in the second moment), with
/// `x_min = max(B, floor(c/(2B nu_B)) + 1)` keeping every entry positive;
/// below `x_min` the untilted base law applies with sub-zero mass folded onto
/// the lowest admissible displacement. The small `±1` mass makes state parity
/// a slow mode, so interval entrance laws stabilise at an observable
/// exponential rate instead of within a couple of lattice units.
pub fn build_lamperti_kernel(spec: &LampertiSpec) -> Result<JumpKernel> {
    let family = match spec.family {
        Family::NearestNeighbour => {
            let clamp_end = spec.c.abs().floor() as State;
            // Mandated states x > |c| always have c/(2x) < 1/2; anything else
            // is a construction bug, not an input error.
            let probe = clamp_end + 1;
            if probe > 0 && spec.c.abs() / (2.0 * probe as f64) >= 0.5 {
                return Err(Error::InvalidParameter(format!(
                    "probability overflow at mandated state {probe}"
                )));
            }
            KernelFamily::NearestNeighbour { c: spec.c, clamp_end }
        }
        Family::MultiJump { max_jump } => {
            let b = i64::from(max_jump);
            let bf = b as f64;
            let nu_1 = spec.s2 / 200.0;
            let nu_b = (spec.s2 / 2.0 - nu_1) / (bf * bf);
            let nu_0 = 1.0 - 2.0 * nu_b - 2.0 * nu_1;
            let x_tilt = (spec.c.abs() / (2.0 * bf * nu_b)).floor() as State + 1;
            let x_min = x_tilt.max(b as State);
            if spec.c.abs() / (2.0 * bf * x_min as f64) >= nu_b {
                return Err(Error::InvalidParameter(
                    "multi-jump tilt exceeds the base +-B mass at its first tilted state".into(),
                ));
            }
            KernelFamily::MultiJump { c: spec.c, b, nu_b, nu_1, nu_0, x_min }
        }
    };
    let kernel = JumpKernel { family, lamperti: Some(*spec) };
    kernel.validate(64)?;
    Ok(kernel)
}

impl JumpKernel {
    /// Kernel jumping by `step` deterministically (stays put where the step
    /// would leave the state space).
    pub fn deterministic(step: i64) -> Result<Self> {
        if step == 0 {
            return Err(Error::InvalidParameter("step must be non-zero".into()));
        }
        Ok(JumpKernel { family: KernelFamily::Deterministic { step }, lamperti: None })
    }

    /// Kernel from explicit rows `rows[x] = [(z, p), ...]`.
    pub fn from_rows(rows: Vec<Vec<(i64, f64)>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidParameter("no rows given".into()));
        }
        let max_jump = rows
            .iter()
            .flat_map(|r| r.iter().map(|&(z, _)| z.abs()))
            .max()
            .unwrap_or(0);
        if max_jump == 0 {
            return Err(Error::InvalidParameter("kernel never moves".into()));
        }
        let k = JumpKernel { family: KernelFamily::Table { max_jump, rows }, lamperti: None };
        let max = k.max_state().unwrap();
        k.validate(max)?;
        Ok(k)
    }

    /// Load a table kernel from CSV with header `state,displacement,prob`.
    pub fn from_csv<R: BufRead>(reader: R) -> Result<Self> {
        let mut rows: Vec<Vec<(i64, f64)>> = Vec::new();
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::InvalidParameter("empty kernel CSV".into()))?
            .map_err(|e| Error::InvalidParameter(format!("read error: {e}")))?;
        if header.trim() != "state,displacement,prob" {
            return Err(Error::InvalidParameter(format!(
                "kernel CSV header must be 'state,displacement,prob', got '{header}'"
            )));
        }
        for (lineno, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::InvalidParameter(format!("read error: {e}")))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split(',');
            let err = |what: &str| {
                Error::InvalidParameter(format!("kernel CSV line {}: {what}", lineno + 2))
            };
            let x: usize = parts
                .next()
                .ok_or_else(|| err("missing state"))?
                .trim()
                .parse()
                .map_err(|_| err("bad state"))?;
            let z: i64 = parts
                .next()
                .ok_or_else(|| err("missing displacement"))?
                .trim()
                .parse()
                .map_err(|_| err("bad displacement"))?;
            let p: f64 = parts
                .next()
                .ok_or_else(|| err("missing prob"))?
                .trim()
                .parse()
                .map_err(|_| err("bad prob"))?;
            if rows.len() <= x {
                rows.resize(x + 1, Vec::new());
            }
            rows[x].push((z, p));
        }
        for row in &mut rows {
            row.sort_by_key(|&(z, _)| z);
        }
        Self::from_rows(rows)
    }

    /// Bound `B` on `|X_{n+1} - X_n|`.
    pub fn max_jump(&self) -> i64 {
        match &self.family {
            KernelFamily::NearestNeighbour { .. } => 1,
            KernelFamily::MultiJump { b, .. } => *b,
            KernelFamily::Deterministic { step } => step.abs(),
            KernelFamily::Table { max_jump, .. } => *max_jump,
        }
    }

    /// Largest downward displacement that carries positive probability at any
    /// state (1 for a left-continuous kernel, 0 if the kernel never descends).
    pub fn max_down_jump(&self) -> i64 {
        match &self.family {
            KernelFamily::NearestNeighbour { .. } => 1,
            KernelFamily::MultiJump { b, .. } => *b,
            KernelFamily::Deterministic { step } => (-step).max(0),
            KernelFamily::Table { rows, .. } => rows
                .iter()
                .flat_map(|r| r.iter().filter(|&&(_, p)| p > 0.0).map(|&(z, _)| -z))
                .max()
                .unwrap_or(0)
                .max(0),
        }
    }

    /// Drift parameters `(c, s^2)` when the kernel was built from a family.
    pub fn lamperti_params(&self) -> Option<(f64, f64)> {
        self.lamperti.map(|s| (s.c, s.s2))
    }

    pub fn spec(&self) -> Option<&LampertiSpec> {
        self.lamperti.as_ref()
    }

    /// Largest state with a defined row, for table kernels.
    pub fn max_state(&self) -> Option<State> {
        match &self.family {
            KernelFamily::Table { rows, .. } => Some(rows.len() as State - 1),
            _ => None,
        }
    }

    /// The probability row at `x` as `(displacement, probability)` pairs in
    /// increasing displacement order. Entries with zero probability are kept
    /// out; rows always sum to one within [`ROW_SUM_TOL`].
    pub fn row(&self, x: State) -> Vec<(i64, f64)> {
        match &self.family {
            KernelFamily::NearestNeighbour { c, clamp_end } => {
                if x == 0 {
                    vec![(1, 1.0)]
                } else if x <= *clamp_end {
                    let up = if *c >= 0.0 { SMALL_STATE_UP } else { 1.0 - SMALL_STATE_UP };
                    vec![(-1, 1.0 - up), (1, up)]
                } else {
                    let tilt = c / (2.0 * x as f64);
                    vec![(-1, 0.5 - tilt), (1, 0.5 + tilt)]
                }
            }
            KernelFamily::MultiJump { c, b, nu_b, nu_1, nu_0, x_min } => {
                if x == 0 {
                    return vec![(1, 1.0)];
                }
                let mut row: Vec<(i64, f64)> = Vec::with_capacity(5);
                if x >= *x_min {
                    let tilt = c / (2.0 * *b as f64 * x as f64);
                    row.push((-*b, *nu_b - tilt));
                    row.push((-1, *nu_1));
                    if *nu_0 > 0.0 {
                        row.push((0, *nu_0));
                    }
                    row.push((1, *nu_1));
                    row.push((*b, *nu_b + tilt));
                } else {
                    // untilted base law; mass below -x folds onto -x
                    let floor = -(x as i64);
                    let mut fold = 0.0;
                    for &(z, p) in
                        &[(-*b, *nu_b), (-1, *nu_1), (0, *nu_0), (1, *nu_1), (*b, *nu_b)]
                    {
                        if p == 0.0 {
                            continue;
                        }
                        if z < floor {
                            fold += p;
                        } else {
                            row.push((z, p));
                        }
                    }
                    if fold > 0.0 {
                        if let Some(e) = row.iter_mut().find(|e| e.0 == floor) {
                            e.1 += fold;
                        } else {
                            row.push((floor, fold));
                        }
                    }
                    row.sort_by_key(|&(z, _)| z);
                }
                row.retain(|&(_, p)| p > 0.0);
                row
            }
            KernelFamily::Deterministic { step } => {
                if *step < 0 && x < step.unsigned_abs() {
                    vec![(0, 1.0)]
                } else {
                    vec![(*step, 1.0)]
                }
            }
            KernelFamily::Table { rows, .. } => rows
                .get(x as usize)
                .unwrap_or_else(|| panic!("table kernel has no row for state {x}"))
                .clone(),
        }
    }

    /// Check the row invariants (stochasticity, jump bound, no mass below 0)
    /// for every state up to `x_max`.
    pub fn validate(&self, x_max: State) -> Result<()> {
        let b = self.max_jump();
        for x in 0..=x_max {
            if let Some(m) = self.max_state() {
                if x > m {
                    break;
                }
            }
            let row = self.row(x);
            let mut sum = 0.0;
            for &(z, p) in &row {
                if !(p >= 0.0) || !p.is_finite() {
                    return Err(Error::KernelDefect(format!(
                        "negative or non-finite probability {p} at state {x}, displacement {z}"
                    )));
                }
                if z.abs() > b {
                    return Err(Error::KernelDefect(format!(
                        "displacement {z} at state {x} exceeds the jump bound {b}"
                    )));
                }
                if (x as i64) + z < 0 {
                    return Err(Error::KernelDefect(format!(
                        "mass below zero at state {x}, displacement {z}"
                    )));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::KernelDefect(format!(
                    "row at state {x} sums to {sum}"
                )));
            }
        }
        Ok(())
    }

    /// Human-readable description including the small-state rule in force.
    pub fn description(&self) -> String {
        match &self.family {
            KernelFamily::NearestNeighbour { c, clamp_end } => format!(
                "nearest-neighbour c={c}; states 1..={clamp_end} use the fixed split up={SMALL_STATE_UP}; state 0 jumps to 1"
            ),
            KernelFamily::MultiJump { c, b, x_min, .. } => format!(
                "multi-jump c={c} B={b}; tilted rows from x={x_min}; below that the untilted base law with folded boundary mass; state 0 jumps to 1"
            ),
            KernelFamily::Deterministic { step } => format!("deterministic step {step}"),
            KernelFamily::Table { rows, .. } => {
                format!("table kernel on states 0..={}", rows.len() - 1)
            }
        }
    }
}

/// Which law a moment was evaluated under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MomentTag {
    Raw,
    Conditioned,
}

/// One increment moment `mu_k(x)` (or its conditioned counterpart).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MomentProfile {
    pub x: State,
    pub k: u32,
    pub value: f64,
    pub tag: MomentTag,
}

impl JumpKernel {
    /// `mu_k(x) = sum_z z^k p(x, x+z)`, an exact finite sum.
    pub fn increment_moment(&self, x: State, k: u32) -> Result<MomentProfile> {
        if k == 0 {
            return Err(Error::InvalidParameter("moment order must be >= 1".into()));
        }
        let value = self
            .row(x)
            .iter()
            .map(|&(z, p)| (z as f64).powi(k as i32) * p)
            .sum();
        Ok(MomentProfile { x, k, value, tag: MomentTag::Raw })
    }
}

/// Certificate for the uniform irreducibility check on a finite window.
#[derive(Debug, Clone, Serialize)]
pub struct IrreducibilityCert {
    pub m: u32,
    pub epsilon: f64,
    /// States `0..=x_max` whose neighbourhoods were checked.
    pub x_max: State,
    pub pass: bool,
    /// Pairs `(i, j)` whose best n-step probability missed `epsilon`,
    /// with that probability.
    pub failures: Vec<(State, State, f64)>,
    /// Smallest `max_{n <= m} P_i(X_n = j)` over all checked pairs.
    pub min_prob: f64,
}

/// Check `max_{1 <= n <= m} P_i(X_n = j) >= epsilon` for every `i <= x_max`
/// and every `j >= 0` with `|j - i| <= B`, by exact vector-kernel iteration on
/// the window `[0, x_max + m*B]`. The certificate records the window; a
/// finite certificate plus the family's translation regularity is the
/// practical analogue of the assumption quantified over all states.
pub fn verify_uniform_irreducibility(
    kernel: &JumpKernel,
    m: u32,
    epsilon: f64,
    x_max: State,
) -> Result<IrreducibilityCert> {
    if m == 0 {
        return Err(Error::InvalidParameter("m must be >= 1".into()));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidParameter(format!("epsilon must be in (0,1), got {epsilon}")));
    }
    let b = kernel.max_jump() as State;
    if x_max < b {
        return Err(Error::WindowTooSmall(format!(
            "x_max = {x_max} is below the jump bound {b}"
        )));
    }
    let width = (x_max + m as State * b) as usize + 1;
    let mut failures = Vec::new();
    let mut min_prob = f64::INFINITY;
    let mut cur = vec![0.0f64; width];
    let mut next = vec![0.0f64; width];
    for i in 0..=x_max {
        cur.iter_mut().for_each(|v| *v = 0.0);
        cur[i as usize] = 1.0;
        let jlo = i.saturating_sub(b);
        let jhi = i + b;
        let mut best = vec![0.0f64; (jhi - jlo + 1) as usize];
        for _n in 1..=m {
            next.iter_mut().for_each(|v| *v = 0.0);
            for (x, &mass) in cur.iter().enumerate() {
                if mass == 0.0 {
                    continue;
                }
                for (z, p) in kernel.row(x as State) {
                    let y = x as i64 + z;
                    debug_assert!(y >= 0);
                    let y = y as usize;
                    if y < width {
                        next[y] += mass * p;
                    }
                    // mass leaving the window can only lower the recorded
                    // probabilities, so the certificate stays conservative
                }
            }
            std::mem::swap(&mut cur, &mut next);
            for j in jlo..=jhi {
                let v = cur[j as usize];
                let slot = (j - jlo) as usize;
                if v > best[slot] {
                    best[slot] = v;
                }
            }
        }
        for j in jlo..=jhi {
            let v = best[(j - jlo) as usize];
            min_prob = min_prob.min(v);
            if v < epsilon {
                failures.push((i, j, v));
            }
        }
    }
    Ok(IrreducibilityCert { m, epsilon, x_max, pass: failures.is_empty(), failures, min_prob })
}
