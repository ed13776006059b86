//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured values (a failed assertion prints the failure instead).
//!
//! The Monte Carlo criteria run their full stated budgets, so this suite is
//! compute-heavy (tens of minutes on one core); run
//! `cargo test --test acceptance -- --nocapture --test-threads 1` to watch
//! progress. Every tolerance is pinned in code, here.

use std::time::Instant;

use lamperti::extensions::branching::{
    branching_extinction_experiment, branching_sqrt_moments, BranchingModel, MigrationLaw,
    OffspringLaw, TheoryStatus,
};
use lamperti::extensions::rwalk::{
    chung_fuchs_profile, norm_drift_check, rwalk_return_mass, RWalkModel,
};
use lamperti::montecarlo::{
    coupling_experiment, estimate_conditional_moments, estimate_renewal_function,
    estimate_strong_transience, McBudget,
};
use lamperti::solver::RatioOptions;
use lamperti::{
    build_conditioned_kernel, conditioning_identity_check, envelope_check, exact_first_moments,
    find_drift_threshold, lyapunov, ratio_diagnostics, solve_return_prob_bracket, Family,
    JumpKernel, LampertiSpec, LyapunovFn,
};

const SEED: u64 = 20_260_810;

fn spec(c: f64, s2: f64, family: Family) -> LampertiSpec {
    LampertiSpec::new(c, s2, family).unwrap()
}

fn nn(c: f64) -> JumpKernel {
    spec(c, 1.0, Family::NearestNeighbour).build_kernel().unwrap()
}

fn mj2(c: f64) -> JumpKernel {
    spec(c, 1.0, Family::MultiJump { max_jump: 2 }).build_kernel().unwrap()
}

/// Criterion 1: ratio expansion. Nearest neighbour c = 2 (gamma_c = 3),
/// exact solve at R = 1e5 with relative bracket width below 1e-3 on
/// [100, 2000]; |x (1 - h(x+1)/h(x)) - 3| <= 0.15 for all x in [500, 2000].
/// Runtime <= 10 s.
#[test]
fn criterion_01_ratio_expansion() {
    let t0 = Instant::now();
    let kernel = nn(2.0);
    let sp = spec(2.0, 1.0, Family::NearestNeighbour);
    let sol = solve_return_prob_bracket(&kernel, 100_000).unwrap();
    // the default options gate enforces bracket width / h < 1e-3 at the window
    let diag = ratio_diagnostics(&sol, &sp, 100, 2000, RatioOptions::default()).unwrap();
    let mut worst: f64 = 0.0;
    for row in diag.rows.iter().filter(|r| r.z == 1 && r.x >= 500) {
        worst = worst.max((row.gamma_est - 3.0).abs());
    }
    let dt = t0.elapsed().as_secs_f64();
    assert!(worst <= 0.15, "max |x(1 - ratio) - 3| = {worst}");
    assert!(dt <= 10.0, "runtime {dt:.2} s exceeds 10 s");
    println!("criterion 01 PASS: max ratio deviation {worst:.4e} on [500, 2000], {dt:.2} s");
}

/// Criterion 2: regular variation. Log-log slope of the same h over
/// [1e3, 1e4] (R = 1e5) inside [-3.1, -2.9]; h(x+1) < h(x) from the reported
/// monotonicity threshold through the window. Runtime <= 30 s.
///
/// The window end sits exactly at the (x/R)^gamma_c = 1e-3 reliability
/// frontier, so the fit runs under a 5e-2 bracket gate; the truncation
/// contribution to the slope there is about 4e-4, far below the tolerance.
#[test]
fn criterion_02_regular_variation() {
    let t0 = Instant::now();
    let kernel = nn(2.0);
    let sp = spec(2.0, 1.0, Family::NearestNeighbour);
    let sol = solve_return_prob_bracket(&kernel, 100_000).unwrap();
    let opts = RatioOptions { max_rel_width: 5e-2, ..RatioOptions::default() };
    let diag = ratio_diagnostics(&sol, &sp, 1000, 10_000, opts).unwrap();
    let slope = diag.slope.expect("slope fit").slope;
    assert!((-3.1..=-2.9).contains(&slope), "slope {slope}");
    let from = diag.monotone_from.expect("monotone threshold");
    for x in from..10_000 {
        assert!(sol.lower(x + 1) < sol.lower(x), "monotonicity broken at {x}");
    }
    let dt = t0.elapsed().as_secs_f64();
    assert!(dt <= 30.0, "runtime {dt:.2} s exceeds 30 s");
    println!("criterion 02 PASS: slope {slope:.4}, monotone from {from}, {dt:.2} s");
}

/// Criterion 3: conditioned moments. |x mu~_1(x) - (s^2 - c)| <= 0.05 and
/// |mu~_2(x) - s^2| <= 0.02 at x = 1e3 for c in {2, 1.5, 3} with exact h.
/// Runtime <= 1 min total.
#[test]
fn criterion_03_conditioned_moments() {
    let t0 = Instant::now();
    for c in [2.0, 1.5, 3.0] {
        let kernel = nn(c);
        let sol = solve_return_prob_bracket(&kernel, 100_000).unwrap();
        let ck = build_conditioned_kernel(&kernel, &sol, None).unwrap();
        let x = 1000u64;
        let m1 = ck.moment(x, 1).unwrap().value;
        let m2 = ck.moment(x, 2).unwrap().value;
        let d1 = (x as f64 * m1 - (1.0 - c)).abs();
        let d2 = (m2 - 1.0).abs();
        assert!(d1 <= 0.05, "c = {c}: |x mu~_1 - (s^2 - c)| = {d1}");
        assert!(d2 <= 0.02, "c = {c}: |mu~_2 - s^2| = {d2}");
        println!("criterion 03 [c = {c}]: x mu~_1 = {:.5}, mu~_2 = {:.5}", x as f64 * m1, m2);
    }
    let dt = t0.elapsed().as_secs_f64();
    assert!(dt <= 60.0, "runtime {dt:.2} s exceeds 60 s");
    println!("criterion 03 PASS: three drift transforms within tolerance, {dt:.2} s");
}

/// Criterion 4: strong-transience phase transition. Monte Carlo beta_crit
/// for c = 2 within [1.3, 1.7] (true 1.5) and for c = 1.2 within
/// [0.55, 0.85] (true 0.7); 1e6 trajectories, cap 1e6. The stated runtime
/// bound (10 minutes each on 8 workers) cannot be checked on this host; the
/// single-worker wall time is printed for extrapolation.
#[test]
fn criterion_04_phase_transition() {
    let grid: Vec<f64> = (1..=12).map(|i| 0.25 * i as f64).collect();
    let budget = McBudget { n_traj: 1_000_000, n_cap: 1_000_000 };
    for (c, lo, hi) in [(2.0, 1.3, 1.7), (1.2, 0.55, 0.85)] {
        let t0 = Instant::now();
        let kernel = nn(c);
        let out = estimate_strong_transience(&kernel, 1, &grid, budget, SEED).unwrap();
        let bc = out.beta_crit_hat.expect("critical-exponent estimate");
        let dt = t0.elapsed().as_secs_f64();
        assert!(
            (lo..=hi).contains(&bc),
            "c = {c}: beta_crit_hat = {bc} outside [{lo}, {hi}]"
        );
        assert!(out.ordering_ok, "c = {c}: empirical T <= L <= U ordering failed");
        println!(
            "criterion 04 [c = {c}] PASS: beta_crit^ = {bc:.3} in [{lo}, {hi}], \
             returns {}, wall {dt:.0} s on 1 worker",
            out.returns
        );
    }
}

/// Criterion 5: conditioning identity at beta = 1. Relative residual <= 1e-4
/// at R = 1e4 for x in {5, 25, 100}, c = 2; not larger at R = 1e5. The
/// identity is a change of measure and holds exactly under consistent
/// truncation, so the residual measures solver error at every radius; the
/// decrease clause is enforced up to a 1e-8 noise floor.
#[test]
fn criterion_05_conditioning_identity() {
    let kernel = nn(2.0);
    let h4 = lamperti::solve_return_prob(&kernel, 10_000, lamperti::BoundaryPolicy::Killed)
        .unwrap();
    let h5 = lamperti::solve_return_prob(&kernel, 100_000, lamperti::BoundaryPolicy::Killed)
        .unwrap();
    for x in [5u64, 25, 100] {
        let r4 = conditioning_identity_check(&kernel, &h4, x, 10_000).unwrap();
        assert!(r4.residual <= 1e-4, "x = {x}: residual {} at R = 1e4", r4.residual);
        let r5 = conditioning_identity_check(&kernel, &h5, x, 100_000).unwrap();
        assert!(r5.residual <= 1e-4, "x = {x}: residual {} at R = 1e5", r5.residual);
        assert!(
            r5.residual <= r4.residual.max(1e-8),
            "x = {x}: residual grew beyond the noise floor: {} -> {}",
            r4.residual,
            r5.residual
        );
        println!(
            "criterion 05 [x = {x}]: residual {:.3e} (R = 1e4) -> {:.3e} (R = 1e5)",
            r4.residual, r5.residual
        );
    }
    println!("criterion 05 PASS");
}

/// Criterion 6: first-moment inequality suite at beta = 1 (Jensen constants
/// equal one) with non-negative normalised slack >= -1e-9 on twenty (x, y)
/// pairs of the truncated c = 2 chain and of a multi-jump B = 2 chain.
#[test]
fn criterion_06_first_moment_suite() {
    let pairs: [(u64, u64); 20] = [
        (1, 1),
        (2, 5),
        (5, 2),
        (3, 8),
        (8, 3),
        (1, 10),
        (10, 1),
        (7, 7),
        (4, 12),
        (12, 4),
        (2, 2),
        (6, 14),
        (14, 6),
        (9, 18),
        (18, 9),
        (5, 5),
        (11, 3),
        (3, 11),
        (16, 8),
        (8, 16),
    ];
    for (name, kernel) in [("nearest-neighbour", nn(2.0)), ("multi-jump", mj2(2.0))] {
        let mut worst = f64::INFINITY;
        for &(x, y) in &pairs {
            let em = exact_first_moments(&kernel, 160, x, y).unwrap();
            let slacks = [
                em.checks.t_ineq,
                em.checks.order_tl,
                em.checks.order_lu,
                em.checks.ut_lower,
                em.checks.ut_upper,
            ];
            for s in slacks {
                worst = worst.min(s);
                assert!(s >= -1e-9, "{name} ({x},{y}): slack {s}");
            }
        }
        println!("criterion 06 [{name}]: worst slack {worst:.3e} over 20 pairs");
    }
    println!("criterion 06 PASS");
}

/// Criterion 7: Lyapunov dichotomy. With gamma = gamma_c and nu = ±1/2 the
/// drift scan finds finite thresholds with the predicted signs on both
/// kernel families; drift magnitude within 20% of the leading term at 1e4.
#[test]
fn criterion_07_lyapunov_dichotomy() {
    for (name, kernel) in [("nearest-neighbour", nn(2.0)), ("multi-jump", mj2(2.0))] {
        for nu in [0.5, -0.5] {
            let f = LyapunovFn::new(3.0, nu).unwrap();
            let report = find_drift_threshold(&kernel, &f, 100_000).unwrap();
            let threshold = report.threshold.expect("finite threshold");
            let expected = if nu > 0.0 {
                lamperti::lyapunov::DriftSign::NonPositive
            } else {
                lamperti::lyapunov::DriftSign::NonNegative
            };
            assert_eq!(report.sign, expected, "{name} nu = {nu}");
            let x = 10_000u64;
            let d = lyapunov::drift(&kernel, &f, x);
            let lead = lyapunov::drift_leading_term(&f, 2.0, 1.0, x as f64);
            let rel = (d - lead).abs() / lead.abs();
            assert!(rel <= 0.2, "{name} nu = {nu}: drift off leading term by {rel}");
            println!(
                "criterion 07 [{name}, nu = {nu}]: threshold {threshold}, \
                 drift/leading = {:.4}",
                d / lead
            );
        }
    }
    println!("criterion 07 PASS");
}

/// Criterion 8: coupling decay. Multi-jump B = 2, c = 2, a = 50: fitted TV
/// decay rate positive with fit R^2 >= 0.9 over separations {5, 10, 20, 40}
/// against the largest-separation law, 1e5 entries per start. The stated
/// five-minute bound presumes 8 workers; single-worker wall time is printed.
#[test]
fn criterion_08_coupling_decay() {
    let t0 = Instant::now();
    let kernel = mj2(2.0);
    let table = coupling_experiment(&kernel, 50, &[5, 10, 20, 40], 100_000, SEED).unwrap();
    let fit = table.fit.expect("decay fit");
    let rate = table.decay_rate.unwrap();
    let dt = t0.elapsed().as_secs_f64();
    assert!(rate > 0.0, "decay rate {rate}");
    assert!(fit.r2 >= 0.9, "fit R^2 = {}", fit.r2);
    assert!(table.reliable, "insufficient entries");
    for row in &table.rows {
        println!(
            "criterion 08: ell {:2} entries {} tv {:.4e}",
            row.ell, row.entries, row.tv_to_reference
        );
    }
    println!(
        "criterion 08 PASS: b^ = {rate:.4}, R^2 = {:.4}, wall {dt:.0} s on 1 worker",
        fit.r2
    );
}

/// Criterion 9: crude-bound envelope with eps = 1/2 on the c = 2 exact
/// solution; both inequalities hold from a reported threshold <= 500.
#[test]
fn criterion_09_crude_bound_envelope() {
    let kernel = nn(2.0);
    let sol = solve_return_prob_bracket(&kernel, 100_000).unwrap();
    let report = envelope_check(&sol, 3.0, 0.5, 3, 10_000).unwrap();
    let threshold = report.threshold.expect("envelope threshold");
    assert!(threshold <= 500, "threshold {threshold}");
    println!("criterion 09 PASS: both envelopes hold from x = {threshold}");
}

/// Criterion 10: multidimensional walks. Partial sums sum n P^(S_n = 0)
/// saturate for d = 5 and grow with exponent 0.5 ± 0.1 for d = 3
/// (n_max = 1e4, 1e6 trajectories); the integral probe saturates for
/// (d = 5, beta = 1) and keeps growing for (d = 4, beta = 1); and
/// P(S_2 = 0) = 1/(2d) within Monte Carlo confidence.
#[test]
fn criterion_10_multidimensional_walks() {
    let t0 = Instant::now();
    // d = 3: diverging partial sums with square-root growth
    let m3 = RWalkModel::simple_symmetric(3).unwrap();
    let r3 = rwalk_return_mass(&m3, 1.0, 10_000, 1_000_000, SEED).unwrap();
    let g3 = r3.growth.as_ref().expect("growth fit").exponent;
    assert!((g3 - 0.5).abs() <= 0.1, "d = 3 growth exponent {g3}");
    let p2 = &r3.points[0];
    assert!(
        (p2.phat - 1.0 / 6.0).abs() <= 4.0 * p2.stderr,
        "P(S_2 = 0) = {} vs 1/6",
        p2.phat
    );
    // d = 5: saturating partial sums
    let m5 = RWalkModel::simple_symmetric(5).unwrap();
    let r5 = rwalk_return_mass(&m5, 1.0, 10_000, 1_000_000, SEED).unwrap();
    assert!(
        r5.last_decade_rel_increment <= 0.05,
        "d = 5 last-decade increment {}",
        r5.last_decade_rel_increment
    );
    let p2 = &r5.points[0];
    assert!((p2.phat - 0.1).abs() <= 4.0 * p2.stderr, "P(S_2 = 0) = {} vs 1/10", p2.phat);
    // integral probe: saturation at d = 5, growth at d = 4
    let t_grid = [0.9, 0.99, 0.999, 0.9999];
    let prof5 = chung_fuchs_profile(&m5, 1.0, &t_grid, 16_384, 16, SEED).unwrap();
    let inc5: Vec<f64> = prof5.windows(2).map(|w| w[1].value - w[0].value).collect();
    assert!(
        inc5[2] <= 0.05 * prof5[3].value && inc5[2] < inc5[1] && inc5[1] < inc5[0],
        "d = 5 integral increments {inc5:?}"
    );
    let m4 = RWalkModel::simple_symmetric(4).unwrap();
    let prof4 = chung_fuchs_profile(&m4, 1.0, &t_grid, 16_384, 16, SEED).unwrap();
    let inc4: Vec<f64> = prof4.windows(2).map(|w| w[1].value - w[0].value).collect();
    assert!(
        inc4.iter().all(|&i| i > 0.0) && inc4[2] >= 0.5 * inc4[1] && inc4[2] >= 0.1 * prof4[3].value,
        "d = 4 integral increments {inc4:?}"
    );
    let dt = t0.elapsed().as_secs_f64();
    println!(
        "criterion 10 PASS: d3 exponent {g3:.3}, d5 rel increment {:.4}, \
         d5 increments {inc5:?}, d4 increments {inc4:?}, wall {dt:.0} s",
        r5.last_decade_rel_increment
    );
}

/// Criterion 11: norm drift of the simple walk. d = 3, r ~ 100,
/// exact enumeration: r E[d|S|] within 5% of 1/3 and E[(d|S|)^2] within 5%
/// of 1/3.
#[test]
fn criterion_11_norm_drift() {
    let m = RWalkModel::simple_symmetric(3).unwrap();
    let rows = norm_drift_check(&m, &[100.0], 1 << 20, SEED).unwrap();
    let row = &rows[0];
    let rel1 = (row.drift_scaled - 1.0 / 3.0).abs() / (1.0 / 3.0);
    let rel2 = (row.second - 1.0 / 3.0).abs() / (1.0 / 3.0);
    assert!(rel1 <= 0.05, "scaled drift {} off by {rel1}", row.drift_scaled);
    assert!(rel2 <= 0.05, "second moment {} off by {rel2}", row.second);
    println!(
        "criterion 11 PASS: r E[d|S|] = {:.5}, E[(d|S|)^2] = {:.5} over {} shell points",
        row.drift_scaled, row.second, row.n_points
    );
}

/// Criterion 12: branching reduction. Shifted-geometric offspring, theta = 1:
/// 8 x mu^_1 within 10% of 2 and 4 mu^_2 within 10% of 2 at w = 1e4 with 1e6
/// one-step samples; the extinction saturation test reproduces the proven
/// dichotomy at theta = 3 (saturates) vs theta = 1 (grows), labelled as
/// established for this offspring family.
#[test]
fn criterion_12_branching_reduction() {
    let two_point = |theta: f64| {
        let p_up = (theta + 5.0) / 10.0;
        BranchingModel::new(
            OffspringLaw::ShiftedGeometric,
            MigrationLaw::Custom { support: vec![-5, 5], probs: vec![1.0 - p_up, p_up] },
        )
        .unwrap()
    };
    let m1 = two_point(1.0);
    let sm = branching_sqrt_moments(&m1, 10_000, 1_000_000, SEED).unwrap();
    assert_eq!(sm.sqrt_bound_violations, 0);
    assert!((sm.scaled_mu1 - 2.0).abs() <= 0.2, "8x mu1 = {}", sm.scaled_mu1);
    assert!((sm.scaled_mu2 - 2.0).abs() <= 0.2, "4 mu2 = {}", sm.scaled_mu2);

    let budget = McBudget { n_traj: 30_000, n_cap: 100_000 };
    let sat = branching_extinction_experiment(&two_point(3.0), 5, 1.0, budget, SEED).unwrap();
    assert_eq!(sat.status, TheoryStatus::Established);
    assert!(sat.predicted_saturating);
    assert_eq!(sat.observed_saturating, Some(true), "theta 3 ratio {:?}", sat.decade_ratio);
    let grow = branching_extinction_experiment(&two_point(1.0), 5, 1.0, budget, SEED).unwrap();
    assert!(!grow.predicted_saturating);
    assert_eq!(grow.observed_saturating, Some(false), "theta 1 ratio {:?}", grow.decade_ratio);
    println!(
        "criterion 12 PASS: 8x mu1 = {:.4}, 4 mu2 = {:.4}; extinction ratios {:.3?} / {:.3?} \
         [ESTABLISHED for shifted-geometric offspring]",
        sm.scaled_mu1, sm.scaled_mu2, sat.decade_ratio, grow.decade_ratio
    );
}

/// Criterion 13: renewal constant. H^(x)/x^2 within 15% of 1/(2c - s^2) = 1/3
/// at x = 200 for c = 2.
#[test]
fn criterion_13_renewal_constant() {
    let kernel = nn(2.0);
    let rep = estimate_renewal_function(&kernel, &[50, 100, 200], 2000, SEED).unwrap();
    let last = rep.estimates.last().unwrap();
    let rel = (last.scaled - 1.0 / 3.0).abs() / (1.0 / 3.0);
    assert!(rel <= 0.15, "scaled H = {} off by {rel}", last.scaled);
    assert!(!rep.flagged, "censoring flagged: {}", rep.censored);
    println!("criterion 13 PASS: H^(200)/200^2 = {:.4} (limit 1/3)", last.scaled);
}

/// Criterion 14: reproducibility. Identical config and master seed give
/// bit-identical results regardless of the worker count (the CSV-byte check
/// at the binary level lives in the CLI crate's integration tests).
#[test]
fn criterion_14_reproducibility() {
    let kernel = mj2(2.0);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let est = estimate_conditional_moments(&kernel, 3, 1.0, 30_000, 20_000, SEED).unwrap();
            let tab = coupling_experiment(&kernel, 20, &[3, 6, 12], 5_000, SEED).unwrap();
            let ren = estimate_renewal_function(&kernel, &[20, 40], 200, SEED).unwrap();
            let mut sig = Vec::new();
            sig.extend(est.t_beta.to_bits().to_le_bytes());
            sig.extend(est.returns.to_le_bytes());
            for row in &tab.rows {
                sig.extend(row.entries.to_le_bytes());
                for &p in &row.law {
                    sig.extend(p.to_bits().to_le_bytes());
                }
            }
            for e in &ren.estimates {
                sig.extend(e.h_hat.to_bits().to_le_bytes());
            }
            sig
        })
    };
    let one = run(1);
    let four = run(4);
    assert_eq!(one, four, "results depend on the worker count");
    println!("criterion 14 PASS: bit-identical across worker counts");
}
