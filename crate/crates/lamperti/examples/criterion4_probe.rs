//! Development probe: full-budget strong-transience scan (criterion-scale).
//! Run: cargo run --release -p lamperti --example criterion4_probe [c] [n_traj]

use lamperti::montecarlo::{estimate_strong_transience, McBudget};
use lamperti::{Family, LampertiSpec};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let c: f64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(2.0);
    let n_traj: u64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(1_000_000);
    let spec = LampertiSpec::new(c, 1.0, Family::NearestNeighbour).unwrap();
    let kernel = spec.build_kernel().unwrap();
    let grid: Vec<f64> = (1..=12).map(|i| 0.25 * i as f64).collect();
    let t0 = std::time::Instant::now();
    let out = estimate_strong_transience(
        &kernel,
        1,
        &grid,
        McBudget { n_traj, n_cap: 1_000_000 },
        20_260_810,
    )
    .unwrap();
    let dt = t0.elapsed().as_secs_f64();
    println!(
        "c = {c}: beta_crit_hat = {:?} (true {}), returns = {}, censor time/level = {:.4}/{:.4}",
        out.beta_crit_hat,
        spec.exponents().beta_crit,
        out.returns,
        out.censor_time_rate,
        out.censor_level_rate
    );
    println!("ordering_ok = {}, level_cap = {}, wall = {dt:.1} s", out.ordering_ok, out.level_cap);
    for v in &out.verdicts {
        println!("  beta {:5}: ratio {:?} saturating {:?}", v.beta, v.decade_ratio, v.saturating);
    }
}
