//! The Lyapunov family `f_{gamma,nu}(x) = x^-gamma * log^nu x` and its
//! one-step drift under a kernel.
//!
//! At `gamma = gamma_c` the leading drift term is
//! `-nu/(2 x^2 log x) * (gamma_c s^2 + o(1)) * f(x)`, so the drift sign is
//! eventually `-sign(nu)`: `nu > 0` yields a supermartingale outside a bounded
//! set and `nu < 0` a submartingale. The threshold scan below locates the
//! bounded set for a concrete kernel.

use serde::Serialize;

use crate::kernel::JumpKernel;
use crate::solver::HittingSolution;
use crate::{Error, Result, State};

/// Drifts smaller than this relative to `f(x)` count as zero in sign scans;
/// cancellation near the critical exponent produces numerically-zero drifts.
pub const SIGN_ZERO_TOL: f64 = 1e-18;

/// `f_{gamma,nu}` with the flat continuation below `e`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LyapunovFn {
    pub gamma: f64,
    pub nu: f64,
}

impl LyapunovFn {
    pub fn new(gamma: f64, nu: f64) -> Result<Self> {
        if gamma < 0.0 || !gamma.is_finite() || !nu.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "need gamma >= 0 and finite nu, got gamma={gamma}, nu={nu}"
            )));
        }
        Ok(LyapunovFn { gamma, nu })
    }

    /// `x^-gamma log^nu x` for `x >= e`, the constant `e^-gamma` below.
    /// Both branches agree at `x = e`.
    pub fn value(&self, x: f64) -> f64 {
        debug_assert!(x >= 0.0);
        if x >= std::f64::consts::E {
            x.powf(-self.gamma) * x.ln().powf(self.nu)
        } else {
            (-self.gamma).exp()
        }
    }
}

/// Function-call form of [`LyapunovFn::value`].
pub fn lyapunov_value(f: &LyapunovFn, x: f64) -> f64 {
    f.value(x)
}

/// Exact one-step drift `E[f(X_1) - f(X_0) | X_0 = x]` as a finite sum over
/// the kernel row.
pub fn drift(kernel: &JumpKernel, f: &LyapunovFn, x: State) -> f64 {
    let fx = f.value(x as f64);
    kernel
        .row(x)
        .iter()
        .map(|&(z, p)| p * (f.value((x as i64 + z) as f64) - fx))
        .sum()
}

/// Two-term asymptotic model for the drift of `f_{gamma,nu}` under a kernel
/// with `mu_1 ~ c/x`, `mu_2 ~ s^2`:
///
/// `-gamma/(2x^2) (2c - (gamma+1) s^2) f(x) + nu/(2 x^2 log x) (2c - (2gamma+1) s^2) f(x)`.
///
/// At `gamma = gamma_c` the first term vanishes and the second reduces to
/// `-nu gamma_c s^2 f(x) / (2 x^2 log x)`.
pub fn drift_leading_term(f: &LyapunovFn, c: f64, s2: f64, x: f64) -> f64 {
    let fx = f.value(x);
    let first = -f.gamma / (2.0 * x * x) * (2.0 * c - (f.gamma + 1.0) * s2) * fx;
    let second = f.nu / (2.0 * x * x * x.ln()) * (2.0 * c - (2.0 * f.gamma + 1.0) * s2) * fx;
    first + second
}

/// Sign pattern of a drift scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DriftSign {
    NonPositive,
    NonNegative,
    Mixed,
}

/// Grid scan of the drift with the detected uniform-sign threshold.
#[derive(Debug, Clone, Serialize)]
pub struct DriftReport {
    /// Rows `(x, drift, f(x), leading_term)`.
    pub rows: Vec<(State, f64, f64, f64)>,
    /// Least grid state from which the sign is uniform to the end of the grid.
    pub threshold: Option<State>,
    pub sign: DriftSign,
    /// Set when the scan cannot be asymptotically meaningful (nu = 0 at the
    /// critical exponent).
    pub flag: Option<String>,
}

/// Scan the geometric grid `x = ceil(e * 1.05^k)`, `x <= x_max`, and report
/// the least grid point beyond which the drift sign is uniform. Reports
/// honestly when no threshold exists in range.
pub fn find_drift_threshold(
    kernel: &JumpKernel,
    f: &LyapunovFn,
    x_max: State,
) -> Result<DriftReport> {
    if (x_max as f64) < std::f64::consts::E {
        return Err(Error::InvalidParameter("x_max must be at least e".into()));
    }
    let mut grid: Vec<State> = Vec::new();
    let mut v = std::f64::consts::E;
    loop {
        let x = v.ceil() as State;
        if x > x_max {
            break;
        }
        if grid.last() != Some(&x) {
            grid.push(x);
        }
        v *= 1.05;
    }
    let (c, s2) = kernel.lamperti_params().unwrap_or((f64::NAN, f64::NAN));
    let rows: Vec<(State, f64, f64, f64)> = grid
        .iter()
        .map(|&x| {
            let d = drift(kernel, f, x);
            let lead = drift_leading_term(f, c, s2, x as f64);
            (x, d, f.value(x as f64), lead)
        })
        .collect();

    // least index from which all drifts share one sign (zeros do not break a run)
    let uniform_from = |neg: bool| -> Option<usize> {
        let ok = |d: f64, fx: f64| {
            if d.abs() < SIGN_ZERO_TOL * fx.max(1e-300) {
                true
            } else if neg {
                d < 0.0
            } else {
                d > 0.0
            }
        };
        let mut from = None;
        for (i, &(_, d, fx, _)) in rows.iter().enumerate() {
            if ok(d, fx) {
                if from.is_none() {
                    from = Some(i);
                }
            } else {
                from = None;
            }
        }
        from
    };
    let neg_from = uniform_from(true);
    let pos_from = uniform_from(false);
    let (threshold, sign) = match (neg_from, pos_from) {
        (Some(i), Some(j)) => {
            // all-zero tail counts as non-positive
            let i = i.min(j);
            (Some(rows[i].0), DriftSign::NonPositive)
        }
        (Some(i), None) => (Some(rows[i].0), DriftSign::NonPositive),
        (None, Some(j)) => (Some(rows[j].0), DriftSign::NonNegative),
        (None, None) => (None, DriftSign::Mixed),
    };

    let flag = if f.nu == 0.0 && s2.is_finite() && (2.0 * c - (f.gamma + 1.0) * s2).abs() <= 1e-9 {
        Some("sign not asymptotically determined: nu = 0 at the critical exponent".into())
    } else {
        None
    };
    Ok(DriftReport { rows, threshold, sign, flag })
}

/// Least state `x0 <= x_hi` such that the exact drift of `f` is `<= tol` at
/// every integer state in `[x0, x_hi]`; errors if even the last state fails.
/// This is the verified ingredient of the certified return-probability upper
/// bound.
pub(crate) fn verified_nonpositive_from(
    kernel: &JumpKernel,
    f: &LyapunovFn,
    x_hi: State,
    tol: f64,
) -> Result<State> {
    let mut x0 = None;
    for x in (0..=x_hi).rev() {
        if drift(kernel, f, x) <= tol {
            x0 = Some(x);
        } else {
            break;
        }
    }
    x0.ok_or_else(|| {
        Error::Degenerate(format!("drift of f_({},{}) is positive at x = {x_hi}", f.gamma, f.nu))
    })
}

/// Per-state envelope flags for `x^-gamma log^-eps x <= h(x) <= x^-gamma log^eps x`.
#[derive(Debug, Clone, Serialize)]
pub struct EnvelopeReport {
    pub gamma: f64,
    pub epsilon: f64,
    /// Rows `(x, lower_ok, upper_ok)`.
    pub rows: Vec<(State, bool, bool)>,
    /// Least x in range from which both inequalities hold through the end.
    pub threshold: Option<State>,
}

/// Check both envelope inequalities on `x in [x_lo, x_hi]` against an exact
/// hitting solution.
pub fn envelope_check(
    h: &HittingSolution,
    gamma: f64,
    epsilon: f64,
    x_lo: State,
    x_hi: State,
) -> Result<EnvelopeReport> {
    if x_lo < 2 || x_hi <= x_lo {
        return Err(Error::InvalidParameter("need 2 <= x_lo < x_hi".into()));
    }
    if x_hi as usize >= h.len() {
        return Err(Error::UnreliableWindow(format!(
            "x_hi = {x_hi} beyond the solved window {}",
            h.len() - 1
        )));
    }
    let mut rows = Vec::with_capacity((x_hi - x_lo + 1) as usize);
    for x in x_lo..=x_hi {
        let xf = x as f64;
        let base = xf.powf(-gamma);
        let lo = base * xf.ln().powf(-epsilon);
        let hi = base * xf.ln().powf(epsilon);
        let hx = h.h(x);
        rows.push((x, lo <= hx, hx <= hi));
    }
    let mut threshold = None;
    for &(x, lo_ok, hi_ok) in rows.iter().rev() {
        if lo_ok && hi_ok {
            threshold = Some(x);
        } else {
            break;
        }
    }
    Ok(EnvelopeReport { gamma, epsilon, rows, threshold })
}
