//! Development probe: exact conditional return-time distribution of the
//! nearest-neighbour chain on a killed window, pushed through the same
//! binning, tail-fit, and decade estimators as the Monte Carlo path.
//! Run with: cargo run --release -p lamperti --example exact_tail_probe [c] [x0]

use lamperti::{geometric_edges, linear_fit, Family, LampertiSpec};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let c: f64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(2.0);
    let x0: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(1);
    let radius = 4000usize;
    let n_max = 1_000_000u64;
    let spec = LampertiSpec::new(c, 1.0, Family::NearestNeighbour).unwrap();
    let kernel = spec.build_kernel().unwrap();
    let beta_crit = spec.exponents().beta_crit;

    // absorbed mass at 0 per step on the killed window
    let rows: Vec<Vec<(i64, f64)>> = (0..radius).map(|x| kernel.row(x as u64)).collect();
    let mut cur = vec![0.0f64; radius];
    let mut next = vec![0.0f64; radius];
    cur[x0] = 1.0;
    let mut absorbed = Vec::with_capacity(n_max as usize);
    for _n in 1..=n_max {
        next.iter_mut().for_each(|v| *v = 0.0);
        let mut a = 0.0;
        for x in 1..radius {
            let m = cur[x];
            if m == 0.0 {
                continue;
            }
            for &(z, p) in &rows[x] {
                let j = x as i64 + z;
                if j == 0 {
                    a += m * p;
                } else if (j as usize) < radius {
                    next[j as usize] += m * p;
                }
            }
        }
        absorbed.push(a);
        std::mem::swap(&mut cur, &mut next);
        if cur.iter().sum::<f64>() < 1e-280 && a < 1e-280 {
            break;
        }
    }
    let h: f64 = absorbed.iter().sum();
    println!("c = {c}, x0 = {x0}: h = {h:.12}, beta_crit = {beta_crit}");

    // survival-curve tail fit over the same windows the MC estimator would use
    let mut tail_mass = vec![0.0f64; absorbed.len() + 1];
    for k in (0..absorbed.len()).rev() {
        tail_mass[k] = tail_mass[k + 1] + absorbed[k];
    }
    let survival = |n: u64| -> f64 {
        if (n as usize) < tail_mass.len() {
            tail_mass[n as usize] / h
        } else {
            0.0
        }
    };
    for top in [50u64, 118, 300, 1000, 3000, 10000] {
        let bottom = (top / 10).max(2);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        let mut n = bottom;
        while n <= top {
            let s = survival(n);
            if s > 0.0 {
                xs.push((n as f64).ln());
                ys.push(s.ln());
            }
            n = ((n as f64) * 1.08).ceil() as u64;
        }
        if let Some(fit) = linear_fit(&xs, &ys) {
            println!(
                "  survival fit window [{bottom}, {top}]: exponent {:.4} (bias {:+.4})",
                -fit.slope,
                -fit.slope - beta_crit
            );
        }
    }

    // curvature-corrected survival fit: ln S = A - beta ln n + kappa / n
    for top in [50u64, 118, 300, 1000] {
        let bottom = (top / 10).max(2);
        let mut pts = Vec::new();
        let mut n = bottom;
        while n <= top {
            let s = survival(n);
            if s > 0.0 {
                pts.push((n as f64, s.ln()));
            }
            n = ((n as f64) * 1.08).ceil() as u64;
        }
        // 3x3 normal equations for (A, -beta, kappa)
        let m = pts.len() as f64;
        let (mut sx, mut su, mut sy) = (0.0, 0.0, 0.0);
        let (mut sxx, mut sxu, mut suu, mut sxy, mut suy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for &(n, y) in &pts {
            let x = n.ln();
            let u = 1.0 / n;
            sx += x;
            su += u;
            sy += y;
            sxx += x * x;
            sxu += x * u;
            suu += u * u;
            sxy += x * y;
            suy += u * y;
        }
        // solve [[m, sx, su], [sx, sxx, sxu], [su, sxu, suu]] (a, b, k) = (sy, sxy, suy)
        let det = m * (sxx * suu - sxu * sxu) - sx * (sx * suu - sxu * su)
            + su * (sx * sxu - sxx * su);
        let b = (m * (sxy * suu - sxu * suy) - sx * (sy * suu - su * suy)
            + su * (sy * sxu - su * sxy))
            / det;
        println!(
            "  corrected survival fit [{bottom}, {top}]: exponent {:.4} (bias {:+.4})",
            -b,
            -b - beta_crit
        );
    }

    // decade / bin-slope estimators on exact bin sums, per beta
    let edges = geometric_edges(n_max, 8);
    for beta in [0.75, 1.0, 1.25, 1.5, 1.75, 2.0, 2.25] {
        let mut bin_sum = vec![0.0f64; edges.len()];
        let mut bin_count = vec![0u64; edges.len()];
        for (k, &a) in absorbed.iter().enumerate() {
            let tau = (k + 1) as u64;
            let bin = edges.partition_point(|&e| e < tau).min(edges.len() - 1);
            bin_sum[bin] += (tau as f64).powf(beta) * a;
            // pseudo-counts as if 10^6 trajectories were drawn
            bin_count[bin] += (a * 1e6) as u64;
        }
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for k in 1..edges.len() {
            let lo = edges[k - 1];
            let hi = edges[k];
            if lo < 16 || hi > n_max / 10 || bin_count[k] < 25 || bin_sum[k] <= 0.0 {
                continue;
            }
            let log_width = (hi as f64 / lo as f64).ln();
            xs.push(0.5 * ((lo as f64).ln() + (hi as f64).ln()));
            ys.push((bin_sum[k] / log_width).ln());
        }
        if let Some(fit) = linear_fit(&xs, &ys) {
            println!(
                "  bin-slope at beta {beta}: beta_crit estimate {:.4} over {} bins (bias {:+.4})",
                beta - fit.slope,
                xs.len(),
                beta - fit.slope - beta_crit
            );
        }
    }
}
