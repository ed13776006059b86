//! Subcommand implementations.

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use serde::Serialize;

use lamperti::extensions::branching::{
    branching_extinction_experiment, branching_sqrt_moments, simulate_branching, BranchingModel,
    MigrationLaw, OffspringLaw, TheoryStatus,
};
use lamperti::extensions::rwalk::{chung_fuchs_profile, rwalk_return_mass, RWalkModel};
use lamperti::montecarlo::{
    coupling_experiment, estimate_conditional_moments, estimate_renewal_function,
    estimate_strong_transience, McBudget,
};
use lamperti::solver::RatioOptions;
use lamperti::{
    build_conditioned_kernel, classify_theoretical, find_drift_threshold, ratio_diagnostics,
    solve_return_prob, solve_return_prob_bracket, BoundaryPolicy, Family, JumpKernel, LampertiSpec,
    LyapunovFn,
};

use crate::artifact::{fmt, RunWriter, TOOL_VERSION};
use crate::config::{Config, Resolver};

/// Usage errors exit 2, compute failures exit 1.
pub enum CmdError {
    Usage(anyhow::Error),
    Compute(anyhow::Error),
}

type CmdResult = std::result::Result<(), CmdError>;

fn usage<T>(r: Result<T>) -> std::result::Result<T, CmdError> {
    r.map_err(CmdError::Usage)
}

fn compute<T>(r: Result<T>) -> std::result::Result<T, CmdError> {
    r.map_err(CmdError::Compute)
}

pub struct Ctx {
    pub file_cfg: Config,
    pub out_dir: PathBuf,
    pub seed_flag: Option<u64>,
}

/// One theoretical-vs-empirical comparison row; `report` collates these.
#[derive(Debug, Serialize)]
struct Comparison {
    quantity: String,
    theoretical: f64,
    empirical: f64,
    tolerance: f64,
    agree: bool,
}

impl Comparison {
    fn new(quantity: &str, theoretical: f64, empirical: f64, tolerance: f64) -> Self {
        Comparison {
            quantity: quantity.to_string(),
            theoretical,
            empirical,
            tolerance,
            agree: (theoretical - empirical).abs() <= tolerance,
        }
    }
}

#[derive(Debug, Serialize)]
struct Summary {
    experiment: String,
    tool_version: String,
    config_hash: String,
    seed: u64,
    comparisons: Vec<Comparison>,
    details: BTreeMap<String, serde_json::Value>,
}

impl Summary {
    fn new(experiment: &str, config_hash: &str, seed: u64) -> Self {
        Summary {
            experiment: experiment.to_string(),
            tool_version: TOOL_VERSION.to_string(),
            config_hash: config_hash.to_string(),
            seed,
            comparisons: Vec::new(),
            details: BTreeMap::new(),
        }
    }

    fn detail<T: Serialize>(&mut self, key: &str, value: &T) {
        self.details.insert(key.to_string(), serde_json::to_value(value).unwrap());
    }
}

fn parse_family(name: &str, max_jump: u64) -> Result<Family> {
    match name {
        "nn" | "nearest-neighbour" => Ok(Family::NearestNeighbour),
        "mj" | "multi-jump" => Ok(Family::MultiJump { max_jump: max_jump as u32 }),
        other => bail!("unknown family '{other}' (expected nn or mj)"),
    }
}

struct KernelSetup {
    kernel: JumpKernel,
    spec: Option<LampertiSpec>,
}

/// Kernel parameters shared by most subcommands.
fn resolve_kernel(
    r: &mut Resolver,
    c_flag: Option<f64>,
    s2_flag: Option<f64>,
    family_flag: Option<String>,
    max_jump_flag: Option<u64>,
    kernel_csv: Option<String>,
) -> Result<KernelSetup> {
    let csv = r.string("kernel_csv", kernel_csv, "");
    if !csv.is_empty() {
        let file = std::fs::File::open(&csv).with_context(|| format!("opening {csv}"))?;
        let kernel = JumpKernel::from_csv(std::io::BufReader::new(file))?;
        return Ok(KernelSetup { kernel, spec: None });
    }
    let c = r.f64("c", c_flag, 2.0)?;
    let s2 = r.f64("s2", s2_flag, 1.0)?;
    let family = r.string("family", family_flag, "nn");
    let max_jump = r.u64("max_jump", max_jump_flag, 2)?;
    let family = parse_family(&family, max_jump)?;
    let spec = LampertiSpec::new(c, s2, family)?;
    Ok(KernelSetup { kernel: spec.build_kernel()?, spec: Some(spec) })
}

#[derive(Args)]
pub struct SolveHArgs {
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    s2: Option<f64>,
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    max_jump: Option<u64>,
    /// Load a table kernel from CSV (header `state,displacement,prob`).
    #[arg(long)]
    kernel_csv: Option<String>,
    #[arg(long)]
    radius: Option<u64>,
    /// Compute the certified bracket (upper bound column).
    #[arg(long)]
    bracket: bool,
    #[arg(long)]
    x_lo: Option<u64>,
    #[arg(long)]
    x_hi: Option<u64>,
    /// Largest relative bracket width accepted in the diagnostics window.
    #[arg(long)]
    gate: Option<f64>,
}

pub fn solve_h(ctx: &Ctx, a: SolveHArgs) -> CmdResult {
    let mut r = Resolver::new(&ctx.file_cfg, "solve-h");
    let setup = usage(resolve_kernel(&mut r, a.c, a.s2, a.family, a.max_jump, a.kernel_csv))?;
    let radius = usage(r.u64("radius", a.radius, 100_000))? as usize;
    let bracket = usage(r.bool("bracket", a.bracket, true))?;
    let x_lo = usage(r.u64("x_lo", a.x_lo, 100))?;
    let x_hi = usage(r.u64("x_hi", a.x_hi, 2000))?;
    let gate = usage(r.f64("gate", a.gate, 1e-3))?;
    let seed = usage(r.u64("seed", ctx.seed_flag, 1))?;
    if x_lo < 2 || x_hi <= x_lo || x_hi as usize >= radius {
        return Err(CmdError::Usage(anyhow!("need 2 <= x_lo < x_hi < radius")));
    }

    let hash = r.effective.hash();
    let mut w = compute(RunWriter::new(&ctx.out_dir, "solve_h", &hash, seed))?;
    let sol = if bracket && setup.spec.is_some() {
        compute(solve_return_prob_bracket(&setup.kernel, radius).map_err(Into::into))?
    } else {
        compute(
            solve_return_prob(&setup.kernel, radius, BoundaryPolicy::Killed).map_err(Into::into),
        )?
    };

    let mut summary = Summary::new("solve_h", &hash, seed);
    let mut rows = Vec::new();
    if let Some(spec) = &setup.spec {
        if sol.upper(0).is_some() {
            let opts = RatioOptions { max_rel_width: gate, ..RatioOptions::default() };
            let diag =
                compute(ratio_diagnostics(&sol, spec, x_lo, x_hi, opts).map_err(Into::into))?;
            for row in diag.rows.iter().filter(|r| r.z == 1) {
                rows.push(format!(
                    "{},{},{},{},{},{}",
                    row.x,
                    fmt(sol.lower(row.x)),
                    fmt(sol.upper(row.x).unwrap_or(f64::NAN)),
                    fmt(row.ratio),
                    fmt(row.predicted),
                    fmt(row.residual_times_x)
                ));
            }
            let gamma_c = spec.gamma_c();
            if let Some(slope) = &diag.slope {
                summary
                    .comparisons
                    .push(Comparison::new("log_log_slope", -gamma_c, slope.slope, 0.1));
            }
            if let Some(g) = sol.gamma_fit {
                summary.comparisons.push(Comparison::new("gamma_fit", gamma_c, -g, 0.1));
            }
            let mid = diag.rows.iter().filter(|r| r.z == 1 && r.x >= x_hi / 2).last();
            if let Some(row) = mid {
                summary
                    .comparisons
                    .push(Comparison::new("ratio_gamma_estimate", gamma_c, row.gamma_est, 0.15));
            }
            summary.detail("envelope_threshold", &diag.envelope.threshold);
            summary.detail("monotone_from", &diag.monotone_from);
        }
    }
    if rows.is_empty() {
        for x in x_lo..=x_hi {
            rows.push(format!(
                "{},{},{},{},{},{}",
                x,
                fmt(sol.lower(x)),
                fmt(sol.upper(x).unwrap_or(f64::NAN)),
                f64::NAN,
                f64::NAN,
                f64::NAN
            ));
        }
    }
    summary.detail("radius", &radius);
    summary.detail("harmonicity_residual", &sol.harmonicity_residual);
    summary.detail("tail_bound", &sol.tail_bound);
    summary.detail("degenerate", &sol.degenerate);
    summary.detail("kernel", &setup.kernel.description());
    compute(w.csv(
        "solve_h_table.csv",
        "x,h_killed,h_reflected,ratio_z1,predicted,residual_times_x",
        &rows,
    ))?;
    compute(w.json("solve_h_summary.json", &summary))?;
    compute(w.commit().map(|_| ()))?;
    println!("solve-h: radius {radius}, h(1) in [{}, {:?}]", sol.lower(1), sol.upper(1));
    Ok(())
}

#[derive(Args)]
pub struct TransformArgs {
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    s2: Option<f64>,
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    max_jump: Option<u64>,
    /// State at which the conditioned moments are reported.
    #[arg(long)]
    x: Option<u64>,
    #[arg(long)]
    radius: Option<u64>,
}

pub fn transform(ctx: &Ctx, a: TransformArgs) -> CmdResult {
    let mut r = Resolver::new(&ctx.file_cfg, "transform");
    let setup = usage(resolve_kernel(&mut r, a.c, a.s2, a.family, a.max_jump, None))?;
    let spec = usage(setup.spec.ok_or_else(|| anyhow!("transform needs drift parameters")))?;
    let x = usage(r.u64("x", a.x, 1000))?;
    let radius = usage(r.u64("radius", a.radius, (x * 20).max(10_000)))? as usize;
    let seed = usage(r.u64("seed", ctx.seed_flag, 1))?;
    if (x as usize) * 2 >= radius {
        return Err(CmdError::Usage(anyhow!("radius must exceed 2x")));
    }

    let hash = r.effective.hash();
    let mut w = compute(RunWriter::new(&ctx.out_dir, "transform", &hash, seed))?;
    let sol = compute(solve_return_prob_bracket(&setup.kernel, radius).map_err(Into::into))?;
    let ck = compute(build_conditioned_kernel(&setup.kernel, &sol, None).map_err(Into::into))?;
    let mut rows = Vec::new();
    let mut grid: Vec<u64> = lamperti::geometric_edges(x, 8);
    grid.retain(|&g| g >= 2);
    let mut at_x = (0.0, 0.0);
    for &g in &grid {
        let m1 = compute(ck.moment(g, 1).map_err(Into::into))?.value;
        let m2 = compute(ck.moment(g, 2).map_err(Into::into))?.value;
        if g == x {
            at_x = (m1, m2);
        }
        rows.push(format!(
            "{g},{},{},{},{}",
            fmt(m1),
            fmt(m2),
            fmt(g as f64 * m1),
            fmt(ck.row_defect[g as usize])
        ));
    }
    let mut summary = Summary::new("transform", &hash, seed);
    let (m1, m2) = at_x;
    summary.comparisons.push(Comparison::new(
        "x_mu1_conditioned",
        spec.s2 - spec.c,
        x as f64 * m1,
        0.05,
    ));
    summary.comparisons.push(Comparison::new("mu2_conditioned", spec.s2, m2, 0.02));
    summary.comparisons.push(Comparison::new(
        "sign_flip_2x_mu1_minus_mu2",
        spec.s2 - 2.0 * spec.c,
        2.0 * x as f64 * m1 - m2,
        0.1,
    ));
    summary.detail("max_row_defect", &ck.max_defect);
    summary.detail("radius", &radius);
    compute(w.csv("transform_moments.csv", "x,mu1,mu2,x_mu1,row_defect", &rows))?;
    compute(w.json("transform_summary.json", &summary))?;
    compute(w.commit().map(|_| ()))?;
    println!(
        "transform: x mu~_1({x}) = {:.6} (limit {}), mu~_2 = {:.6} (limit {})",
        x as f64 * m1,
        spec.s2 - spec.c,
        m2,
        spec.s2
    );
    Ok(())
}

#[derive(Args)]
pub struct LyapunovArgs {
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    s2: Option<f64>,
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    max_jump: Option<u64>,
    /// Exponent gamma; defaults to the critical exponent of (c, s2).
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long)]
    x_max: Option<u64>,
}

pub fn lyapunov(ctx: &Ctx, a: LyapunovArgs) -> CmdResult {
    let mut r = Resolver::new(&ctx.file_cfg, "lyapunov");
    let setup = usage(resolve_kernel(&mut r, a.c, a.s2, a.family, a.max_jump, None))?;
    let spec = usage(setup.spec.ok_or_else(|| anyhow!("lyapunov needs drift parameters")))?;
    let gamma = usage(r.f64("gamma", a.gamma, spec.gamma_c()))?;
    let nu = usage(r.f64("nu", a.nu, 0.5))?;
    let x_max = usage(r.u64("x_max", a.x_max, 100_000))?;
    let seed = usage(r.u64("seed", ctx.seed_flag, 1))?;
    let f = usage(LyapunovFn::new(gamma, nu).map_err(Into::into))?;

    let hash = r.effective.hash();
    let mut w = compute(RunWriter::new(&ctx.out_dir, "lyapunov", &hash, seed))?;
    let report = compute(find_drift_threshold(&setup.kernel, &f, x_max).map_err(Into::into))?;
    let rows: Vec<String> = report
        .rows
        .iter()
        .map(|&(x, d, fx, lead)| format!("{x},{},{},{}", fmt(d), fmt(fx), fmt(lead)))
        .collect();
    let mut summary = Summary::new("lyapunov", &hash, seed);
    if let Some(&(x, d, _, lead)) = report.rows.iter().rev().find(|&&(x, ..)| x >= x_max / 2) {
        if lead != 0.0 {
            summary.comparisons.push(Comparison::new(
                &format!("drift_vs_leading_term_at_{x}"),
                1.0,
                d / lead,
                0.2,
            ));
        }
    }
    summary.detail("threshold", &report.threshold);
    summary.detail("sign", &report.sign);
    summary.detail("flag", &report.flag);
    summary.detail("gamma", &gamma);
    summary.detail("nu", &nu);
    compute(w.csv("lyapunov_drift.csv", "x,drift,f_value,leading_term", &rows))?;
    compute(w.json("lyapunov_summary.json", &summary))?;
    compute(w.commit().map(|_| ()))?;
    println!("lyapunov: threshold {:?}, sign {:?}", report.threshold, report.sign);
    Ok(())
}

#[derive(Args)]
pub struct SimulateArgs {
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    s2: Option<f64>,
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    max_jump: Option<u64>,
    #[arg(long)]
    x0: Option<u64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Comma-separated beta grid for the crossover scan.
    #[arg(long)]
    beta_grid: Option<String>,
    #[arg(long)]
    n_traj: Option<u64>,
    #[arg(long)]
    n_cap: Option<u64>,
}

pub fn simulate(ctx: &Ctx, a: SimulateArgs) -> CmdResult {
    let mut r = Resolver::new(&ctx.file_cfg, "simulate");
    let setup = usage(resolve_kernel(&mut r, a.c, a.s2, a.family, a.max_jump, None))?;
    let x0 = usage(r.u64("x0", a.x0, 1))?;
    let beta = usage(r.f64("beta", a.beta, 1.0))?;
    let grid = usage(r.f64_list(
        "beta_grid",
        a.beta_grid,
        "0.25,0.5,0.75,1,1.25,1.5,1.75,2,2.25,2.5,2.75,3",
    ))?;
    let n_traj = usage(r.u64("n_traj", a.n_traj, 100_000))?;
    let n_cap = usage(r.u64("n_cap", a.n_cap, 1_000_000))?;
    let seed = usage(r.u64("seed", ctx.seed_flag, 1))?;

    let hash = r.effective.hash();
    let mut w = compute(RunWriter::new(&ctx.out_dir, "simulate", &hash, seed))?;
    let est = compute(
        estimate_conditional_moments(&setup.kernel, x0, beta, n_traj, n_cap, seed)
            .map_err(Into::into),
    )?;
    let scan = compute(
        estimate_strong_transience(
            &setup.kernel,
            x0,
            &grid,
            McBudget { n_traj, n_cap },
            seed.wrapping_add(1),
        )
        .map_err(Into::into),
    )?;

    let survival_rows: Vec<String> = est
        .survival
        .iter()
        .map(|p| format!("{},{},{}", p.n, p.survivors, p.total_returns))
        .collect();
    let moment_rows: Vec<String> = scan
        .triad
        .iter()
        .map(|t| {
            format!(
                "{},{},{},{},{}",
                fmt(t.beta),
                fmt(t.t),
                fmt(t.l),
                fmt(t.u),
                fmt(t.t_se.max(t.l_se).max(t.u_se))
            )
        })
        .collect();

    let mut summary = Summary::new("simulate", &hash, seed);
    if let Some(spec) = &setup.spec {
        if spec.is_transient() {
            let e = spec.exponents();
            if let Some(bc) = scan.beta_crit_hat {
                summary.comparisons.push(Comparison::new("beta_crit", e.beta_crit, bc, 0.2));
            }
            if let Some(tail) = &est.tail {
                summary
                    .comparisons
                    .push(Comparison::new("tail_exponent", e.beta_crit, tail.exponent, 0.15));
            }
        }
    }
    summary.detail("t_beta", &est.t_beta);
    summary.detail("t_beta_se", &est.t_beta_se);
    summary.detail("return_freq", &est.return_freq);
    summary.detail("return_freq_se", &est.return_freq_se);
    summary.detail("returns", &est.returns);
    summary.detail("censor_time_rate", &est.censor_time_rate);
    summary.detail("censor_level_rate", &est.censor_level_rate);
    summary.detail("level_cap", &est.level_cap);
    summary.detail("beta_crit_hat", &scan.beta_crit_hat);
    summary.detail("ordering_ok", &scan.ordering_ok);
    summary.detail("verdicts", &scan.verdicts);
    compute(w.csv("simulate_survival.csv", "n,survivors,total_returns", &survival_rows))?;
    compute(w.csv("simulate_moments.csv", "beta,T,L,U,stderr", &moment_rows))?;
    compute(w.json("simulate_summary.json", &summary))?;
    compute(w.commit().map(|_| ()))?;
    println!(
        "simulate: h^({x0}) = {:.6} +- {:.6}, beta_crit^ = {:?}",
        est.return_freq, est.return_freq_se, scan.beta_crit_hat
    );
    Ok(())
}

#[derive(Args)]
pub struct CouplingArgs {
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    s2: Option<f64>,
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    max_jump: Option<u64>,
    #[arg(long)]
    a: Option<u64>,
    /// Comma-separated separations; the largest is the limit surrogate.
    #[arg(long)]
    separations: Option<String>,
    #[arg(long)]
    entries: Option<u64>,
}

pub fn coupling(ctx: &Ctx, args: CouplingArgs) -> CmdResult {
    let mut r = Resolver::new(&ctx.file_cfg, "coupling");
    let family = args.family.or_else(|| Some("mj".to_string()));
    let setup = usage(resolve_kernel(&mut r, args.c, args.s2, family, args.max_jump, None))?;
    let a = usage(r.u64("a", args.a, 50))?;
    let seps = usage(r.u64_list("separations", args.separations, "5,10,20,40"))?;
    let entries = usage(r.u64("entries", args.entries, 100_000))?;
    let seed = usage(r.u64("seed", ctx.seed_flag, 1))?;

    let hash = r.effective.hash();
    let mut w = compute(RunWriter::new(&ctx.out_dir, "coupling", &hash, seed))?;
    let table =
        compute(coupling_experiment(&setup.kernel, a, &seps, entries, seed).map_err(Into::into))?;
    let rows: Vec<String> = table
        .rows
        .iter()
        .map(|row| {
            let fitted = table
                .fit
                .map(|f| (f.intercept + f.slope * row.ell as f64).exp())
                .unwrap_or(f64::NAN);
            format!("{},{},{}", row.ell, fmt(row.tv_to_reference), fmt(fitted))
        })
        .collect();
    let mut summary = Summary::new("coupling", &hash, seed);
    if let Some(rate) = table.decay_rate {
        // exponential stabilisation predicts a positive decay rate
        summary.comparisons.push(Comparison::new("decay_rate_positive", 1.0, (rate > 0.0) as i32 as f64, 0.5));
    }
    summary.detail("decay_rate", &table.decay_rate);
    summary.detail("fit", &table.fit);
    summary.detail("reliable", &table.reliable);
    summary.detail("escape_level", &table.escape_level);
    summary.detail("rows", &table.rows);
    compute(w.csv("coupling_table.csv", "ell,tv,fit", &rows))?;
    compute(w.json("coupling_summary.json", &summary))?;
    compute(w.commit().map(|_| ()))?;
    println!(
        "coupling: decay rate {:?}, r2 {:?}",
        table.decay_rate,
        table.fit.map(|f| f.r2)
    );
    Ok(())
}

#[derive(Args)]
pub struct RenewalArgs {
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    s2: Option<f64>,
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    max_jump: Option<u64>,
    #[arg(long)]
    x_grid: Option<String>,
    #[arg(long)]
    n_traj: Option<u64>,
}

pub fn renewal(ctx: &Ctx, a: RenewalArgs) -> CmdResult {
    let mut r = Resolver::new(&ctx.file_cfg, "renewal");
    let setup = usage(resolve_kernel(&mut r, a.c, a.s2, a.family, a.max_jump, None))?;
    let grid = usage(r.u64_list("x_grid", a.x_grid, "25,50,100,200"))?;
    let n_traj = usage(r.u64("n_traj", a.n_traj, 2000))?;
    let seed = usage(r.u64("seed", ctx.seed_flag, 1))?;

    let hash = r.effective.hash();
    let mut w = compute(RunWriter::new(&ctx.out_dir, "renewal", &hash, seed))?;
    let rep =
        compute(estimate_renewal_function(&setup.kernel, &grid, n_traj, seed).map_err(Into::into))?;
    let rows: Vec<String> = rep
        .estimates
        .iter()
        .map(|e| format!("{},{},{},{}", e.x, fmt(e.h_hat), fmt(e.scaled), fmt(e.se)))
        .collect();
    let mut summary = Summary::new("renewal", &hash, seed);
    if let Some(spec) = &setup.spec {
        let limit = 1.0 / (2.0 * spec.c - spec.s2);
        let last = rep.estimates.last().unwrap();
        summary.comparisons.push(Comparison::new("renewal_constant", limit, last.scaled, 0.15 * limit));
    }
    summary.detail("censored", &rep.censored);
    summary.detail("flagged", &rep.flagged);
    summary.detail("stop_level", &rep.stop_level);
    compute(w.csv("renewal.csv", "x,h_hat,scaled,se", &rows))?;
    compute(w.json("renewal_summary.json", &summary))?;
    compute(w.commit().map(|_| ()))?;
    println!("renewal: scaled H at x = {} is {:.4}", grid.last().unwrap(), rep.estimates.last().unwrap().scaled);
    Ok(())
}

#[derive(Args)]
pub struct RwalkArgs {
    #[arg(long)]
    d: Option<u64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    n_max: Option<u64>,
    #[arg(long)]
    n_traj: Option<u64>,
}

pub fn rwalk(ctx: &Ctx, a: RwalkArgs) -> CmdResult {
    let mut r = Resolver::new(&ctx.file_cfg, "rwalk");
    let d = usage(r.u64("d", a.d, 3))? as usize;
    let beta = usage(r.f64("beta", a.beta, 1.0))?;
    let n_max = usage(r.u64("n_max", a.n_max, 10_000))?;
    let n_traj = usage(r.u64("n_traj", a.n_traj, 1_000_000))?;
    let seed = usage(r.u64("seed", ctx.seed_flag, 1))?;
    let model = usage(RWalkModel::simple_symmetric(d).map_err(Into::into))?;

    let hash = r.effective.hash();
    let mut w = compute(RunWriter::new(&ctx.out_dir, "rwalk", &hash, seed))?;
    let rep = compute(rwalk_return_mass(&model, beta, n_max, n_traj, seed).map_err(Into::into))?;
    let rows: Vec<String> = rep
        .points
        .iter()
        .map(|p| format!("{},{},{}", p.n, fmt(p.phat), fmt(p.stderr)))
        .collect();
    let mut summary = Summary::new("rwalk", &hash, seed);
    let p2 = &rep.points[0];
    summary.comparisons.push(Comparison::new(
        "p_s2_zero",
        1.0 / (2.0 * d as f64),
        p2.phat,
        4.0 * p2.stderr + 1e-12,
    ));
    if let Some(fit) = &rep.llt_slope {
        summary.comparisons.push(Comparison::new("llt_slope", -(d as f64) / 2.0, fit.slope, 0.2));
    }
    summary.detail("growth", &rep.growth);
    summary.detail("last_decade_rel_increment", &rep.last_decade_rel_increment);
    summary.detail("partial_sums", &rep.partial_sums);
    compute(w.csv("rwalk_return_mass.csv", "n,phat,stderr", &rows))?;
    compute(w.json("rwalk_summary.json", &summary))?;
    compute(w.commit().map(|_| ()))?;
    println!(
        "rwalk: d = {d}, growth exponent {:?}, last-decade increment {:.4}",
        rep.growth.as_ref().map(|g| g.exponent),
        rep.last_decade_rel_increment
    );
    Ok(())
}

#[derive(Args)]
pub struct ChungFuchsArgs {
    #[arg(long)]
    d: Option<u64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    t_grid: Option<String>,
    #[arg(long)]
    points: Option<u64>,
    #[arg(long)]
    shifts: Option<u64>,
}

pub fn chung_fuchs(ctx: &Ctx, a: ChungFuchsArgs) -> CmdResult {
    let mut r = Resolver::new(&ctx.file_cfg, "chung-fuchs");
    let d = usage(r.u64("d", a.d, 5))? as usize;
    let beta = usage(r.f64("beta", a.beta, 1.0))?;
    let t_grid = usage(r.f64_list("t_grid", a.t_grid, "0.9,0.99,0.999,0.9999"))?;
    let points = usage(r.u64("points", a.points, 16_384))?;
    let shifts = usage(r.u64("shifts", a.shifts, 16))? as u32;
    let seed = usage(r.u64("seed", ctx.seed_flag, 1))?;
    let model = usage(RWalkModel::simple_symmetric(d).map_err(Into::into))?;

    let hash = r.effective.hash();
    let mut w = compute(RunWriter::new(&ctx.out_dir, "chung_fuchs", &hash, seed))?;
    let profile =
        compute(chung_fuchs_profile(&model, beta, &t_grid, points, shifts, seed).map_err(Into::into))?;
    let rows: Vec<String> = profile
        .iter()
        .map(|e| format!("{},{},{}", fmt(e.t), fmt(e.value), fmt(e.stderr)))
        .collect();
    let mut summary = Summary::new("chung_fuchs", &hash, seed);
    let increments: Vec<f64> = profile.windows(2).map(|w| w[1].value - w[0].value).collect();
    let last_rel = increments.last().map(|i| i / profile.last().unwrap().value);
    summary.detail("d", &d);
    summary.detail("beta", &beta);
    summary.detail("values", &profile);
    summary.detail("increments", &increments);
    summary.detail("last_rel_increment", &last_rel);
    // strong transience iff the t -> 1 limit stays bounded: d > 2 beta + 2
    summary.detail("predicted_saturating", &(d as f64 > 2.0 * beta + 2.0));
    compute(w.csv("chung_fuchs.csv", "t,integral,stderr", &rows))?;
    compute(w.json("chung_fuchs_summary.json", &summary))?;
    compute(w.commit().map(|_| ()))?;
    println!("chung-fuchs: d = {d}, values {:?}", profile.iter().map(|e| e.value).collect::<Vec<_>>());
    Ok(())
}

#[derive(Args)]
pub struct BranchingArgs {
    /// Offspring family: shifted-geometric, poisson, or deterministic.
    #[arg(long)]
    offspring: Option<String>,
    #[arg(long)]
    theta: Option<f64>,
    /// Migration law: two-point (on +-spread) or constant.
    #[arg(long)]
    migration: Option<String>,
    #[arg(long)]
    spread: Option<u64>,
    /// moments, extinction, or simulate.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    w: Option<u64>,
    #[arg(long)]
    n_samples: Option<u64>,
    #[arg(long)]
    w0: Option<u64>,
    #[arg(long)]
    horizon: Option<u64>,
    #[arg(long)]
    n_traj: Option<u64>,
    #[arg(long)]
    beta: Option<f64>,
}

fn build_branching(r: &mut Resolver, a: &BranchingArgs) -> Result<BranchingModel> {
    let offspring = r.string("offspring", a.offspring.clone(), "shifted-geometric");
    let offspring = match offspring.as_str() {
        "shifted-geometric" => OffspringLaw::ShiftedGeometric,
        "poisson" => OffspringLaw::PoissonUnit,
        "deterministic" => OffspringLaw::DeterministicOne,
        other => bail!("unknown offspring family '{other}'"),
    };
    let theta = r.f64("theta", a.theta, 1.0)?;
    let migration = r.string("migration", a.migration.clone(), "two-point");
    let spread = r.u64("spread", a.spread, 5)? as i64;
    let migration = match migration.as_str() {
        "constant" => {
            if theta.fract() != 0.0 {
                bail!("constant migration needs an integer theta");
            }
            MigrationLaw::Constant(theta as i64)
        }
        "two-point" => {
            if theta.abs() > spread as f64 {
                bail!("two-point migration needs |theta| <= spread");
            }
            let p_up = (theta + spread as f64) / (2.0 * spread as f64);
            MigrationLaw::Custom { support: vec![-spread, spread], probs: vec![1.0 - p_up, p_up] }
        }
        other => bail!("unknown migration law '{other}'"),
    };
    Ok(BranchingModel::new(offspring, migration)?)
}

pub fn branching(ctx: &Ctx, a: BranchingArgs) -> CmdResult {
    let mut r = Resolver::new(&ctx.file_cfg, "branching");
    let model = usage(build_branching(&mut r, &a))?;
    let mode = r.string("mode", a.mode.clone(), "moments");
    let seed = usage(r.u64("seed", ctx.seed_flag, 1))?;
    match mode.as_str() {
        "moments" => {
            let w_pop = usage(r.u64("w", a.w, 10_000))?;
            let n_samples = usage(r.u64("n_samples", a.n_samples, 1_000_000))?;
            let hash = r.effective.hash();
            let mut wtr = compute(RunWriter::new(&ctx.out_dir, "branching_moments", &hash, seed))?;
            let sm =
                compute(branching_sqrt_moments(&model, w_pop, n_samples, seed).map_err(Into::into))?;
            let rows = vec![format!(
                "{},{},{},{},{},{},{},{}",
                sm.w,
                fmt(sm.x),
                fmt(sm.mu1),
                fmt(sm.mu1_se),
                fmt(sm.mu2),
                fmt(sm.mu2_se),
                fmt(sm.scaled_mu1),
                fmt(sm.scaled_mu2)
            )];
            let mut summary = Summary::new("branching_moments", &hash, seed);
            summary.comparisons.push(Comparison::new(
                "scaled_mu1_8x",
                sm.predicted_scaled_mu1,
                sm.scaled_mu1,
                0.1 * sm.predicted_scaled_mu1.abs().max(0.1),
            ));
            summary.comparisons.push(Comparison::new(
                "scaled_mu2_4",
                sm.predicted_scaled_mu2,
                sm.scaled_mu2,
                0.1 * sm.predicted_scaled_mu2.abs().max(0.1),
            ));
            summary.detail("sqrt_bound_violations", &sm.sqrt_bound_violations);
            summary.detail("theta", &model.theta());
            summary.detail("sigma2", &model.sigma2());
            compute(wtr.csv(
                "branching_moments.csv",
                "w,x,mu1,mu1_se,mu2,mu2_se,scaled_mu1,scaled_mu2",
                &rows,
            ))?;
            compute(wtr.json("branching_moments_summary.json", &summary))?;
            compute(wtr.commit().map(|_| ()))?;
            println!(
                "branching moments: 8x mu1 = {:.4} (limit {}), 4 mu2 = {:.4} (limit {})",
                sm.scaled_mu1, sm.predicted_scaled_mu1, sm.scaled_mu2, sm.predicted_scaled_mu2
            );
        }
        "extinction" => {
            let w0 = usage(r.u64("w0", a.w0, 10))?;
            let horizon = usage(r.u64("horizon", a.horizon, 100_000))?;
            let n_traj = usage(r.u64("n_traj", a.n_traj, 10_000))?;
            let beta = usage(r.f64("beta", a.beta, 1.0))?;
            let hash = r.effective.hash();
            let mut wtr =
                compute(RunWriter::new(&ctx.out_dir, "branching_extinction", &hash, seed))?;
            let cls = compute(
                branching_extinction_experiment(
                    &model,
                    w0,
                    beta,
                    McBudget { n_traj, n_cap: horizon },
                    seed,
                )
                .map_err(Into::into),
            )?;
            let label = match cls.status {
                TheoryStatus::Established => "ESTABLISHED",
                TheoryStatus::Conjectured => "CONJECTURED",
            };
            let mut summary = Summary::new("branching_extinction", &hash, seed);
            if let Some(obs) = cls.observed_saturating {
                summary.comparisons.push(Comparison::new(
                    "saturation_matches_threshold",
                    cls.predicted_saturating as i32 as f64,
                    obs as i32 as f64,
                    0.5,
                ));
            }
            summary.detail("status", &label);
            summary.detail("classification", &cls);
            compute(wtr.json("branching_extinction_summary.json", &summary))?;
            compute(wtr.commit().map(|_| ()))?;
            println!(
                "branching extinction [{label}]: predicted saturating = {}, observed = {:?} (ratio {:?})",
                cls.predicted_saturating, cls.observed_saturating, cls.decade_ratio
            );
        }
        "simulate" => {
            let w0 = usage(r.u64("w0", a.w0, 10))?;
            let horizon = usage(r.u64("horizon", a.horizon, 1000))?;
            let hash = r.effective.hash();
            let mut wtr = compute(RunWriter::new(&ctx.out_dir, "branching_path", &hash, seed))?;
            let path = compute(simulate_branching(&model, w0, horizon, seed).map_err(Into::into))?;
            let rows: Vec<String> =
                path.path.iter().enumerate().map(|(n, &wv)| format!("{n},{wv}")).collect();
            let mut summary = Summary::new("branching_path", &hash, seed);
            summary.detail("extinction", &path.extinction);
            summary.detail("final_w", &path.final_w);
            summary.detail("overflow", &path.overflow);
            compute(wtr.csv("branching_path.csv", "n,w", &rows))?;
            compute(wtr.json("branching_path_summary.json", &summary))?;
            compute(wtr.commit().map(|_| ()))?;
            println!("branching path: extinction {:?}, final W = {}", path.extinction, path.final_w);
        }
        other => return Err(CmdError::Usage(anyhow!("unknown mode '{other}'"))),
    }
    Ok(())
}

#[derive(Args)]
pub struct ClassifyArgs {
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    s2: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
}

pub fn classify(ctx: &Ctx, a: ClassifyArgs) -> CmdResult {
    let mut r = Resolver::new(&ctx.file_cfg, "classify");
    let c = usage(r.f64("c", a.c, 2.0))?;
    let s2 = usage(r.f64("s2", a.s2, 1.0))?;
    let beta = usage(r.f64("beta", a.beta, 1.0))?;
    let seed = usage(r.u64("seed", ctx.seed_flag, 1))?;
    let spec = usage(LampertiSpec::new(c, s2, Family::NearestNeighbour).map_err(Into::into))?;
    let cls = usage(classify_theoretical(&spec, beta).map_err(Into::into))?;

    let hash = r.effective.hash();
    let mut w = compute(RunWriter::new(&ctx.out_dir, "classify", &hash, seed))?;
    let mut summary = Summary::new("classify", &hash, seed);
    summary.detail("verdict", &cls.verdict);
    summary.detail("rationale", &cls.rationale);
    summary.detail("lhs", &cls.lhs);
    summary.detail("rhs", &cls.rhs);
    summary.detail("exponents", &spec.exponents());
    compute(w.json("classify_summary.json", &summary))?;
    compute(w.commit().map(|_| ()))?;
    println!("{}", serde_json::to_string_pretty(&cls).unwrap());
    Ok(())
}

#[derive(Args)]
pub struct ReportArgs {
    /// Directory holding *_summary.json files (default: the output dir).
    #[arg(long)]
    dir: Option<PathBuf>,
}

pub fn report(ctx: &Ctx, a: ReportArgs) -> CmdResult {
    let dir = a.dir.unwrap_or_else(|| ctx.out_dir.clone());
    let mut entries: Vec<PathBuf> = compute(
        std::fs::read_dir(&dir)
            .with_context(|| format!("reading {}", dir.display()))
            .map(|rd| {
                rd.filter_map(|e| e.ok())
                    .map(|e| e.path())
                    .filter(|p| {
                        p.file_name()
                            .and_then(|n| n.to_str())
                            .is_some_and(|n| n.ends_with("_summary.json"))
                    })
                    .collect()
            }),
    )?;
    entries.sort();
    if entries.is_empty() {
        return Err(CmdError::Usage(anyhow!("no *_summary.json files in {}", dir.display())));
    }
    let mut rows = Vec::new();
    let mut version: Option<String> = None;
    let mut hash_all = String::new();
    for path in &entries {
        let text = compute(
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display())),
        )?;
        let v: serde_json::Value = compute(serde_json::from_str(&text).map_err(Into::into))?;
        let tv = v["tool_version"].as_str().unwrap_or("?").to_string();
        match &version {
            None => version = Some(tv),
            Some(prev) if *prev != tv => {
                return Err(CmdError::Compute(anyhow!(
                    "refusing to mix artifacts from tool versions {prev} and {tv}"
                )))
            }
            _ => {}
        }
        let experiment = v["experiment"].as_str().unwrap_or("?").to_string();
        hash_all.push_str(v["config_hash"].as_str().unwrap_or(""));
        if let Some(comps) = v["comparisons"].as_array() {
            for cmp in comps {
                rows.push(format!(
                    "{},{},{},{},{}",
                    experiment,
                    cmp["quantity"].as_str().unwrap_or("?"),
                    cmp["theoretical"],
                    cmp["empirical"],
                    if cmp["agree"].as_bool().unwrap_or(false) { "yes" } else { "no" }
                ));
            }
        }
    }
    let mut cfg = Config::default();
    cfg.set("report", "inputs", &hash_all);
    let hash = cfg.hash();
    let seed = ctx.seed_flag.unwrap_or(1);
    let mut w = compute(RunWriter::new(&ctx.out_dir, "report", &hash, seed))?;
    compute(w.csv("report.csv", "experiment,quantity,theoretical,empirical,agree", &rows))?;
    compute(w.commit().map(|_| ()))?;
    println!("report: {} comparison rows from {} summaries", rows.len(), entries.len());
    for row in &rows {
        println!("  {row}");
    }
    Ok(())
}
