//! Development probe: exact TV decay of entrance laws for candidate B = 2
//! base laws {±2: nu2 ∓/± tilt, ±1: delta, 0: rest} with the drift tilt on
//! the ±2 atoms. Scans the parity-break mass delta.
//! Run: cargo run --release -p lamperti --example coupling_law_scan

use lamperti::{solve_interval_hitting, JumpKernel};

fn build(c: f64, s2: f64, delta: f64, n: usize) -> JumpKernel {
    let nu2 = (s2 / 2.0 - delta) / 4.0;
    let nu0 = 1.0 - 2.0 * (nu2 + delta);
    let rows: Vec<Vec<(i64, f64)>> = (0..n)
        .map(|x| {
            if x == 0 {
                return vec![(1, 1.0)];
            }
            let tilt = c / (4.0 * x as f64);
            if x >= 2 && tilt < nu2 {
                vec![
                    (-2, nu2 - tilt),
                    (-1, delta),
                    (0, nu0),
                    (1, delta),
                    (2, nu2 + tilt),
                ]
            } else if x >= 2 {
                vec![(-2, nu2), (-1, delta), (0, nu0), (1, delta), (2, nu2)]
            } else {
                // x = 1: fold the -2 mass onto -1
                vec![(-1, delta + nu2), (0, nu0), (1, delta), (2, nu2)]
            }
        })
        .collect();
    JumpKernel::from_rows(rows).unwrap()
}

fn main() {
    for delta in [0.05, 0.02, 0.01, 0.005] {
        let kernel = build(2.0, 1.0, delta, 4000);
        let a = 50u64;
        let seps = [5u64, 10, 20, 40];
        let mut starts: Vec<u64> = seps.iter().map(|&l| a + 2 + l).collect();
        starts.push(a + 2 + 300);
        let eds = solve_interval_hitting(&kernel, a, &starts, 4000).unwrap();
        let reference = eds.last().unwrap();
        print!("delta = {delta}: ref {:?};", reference.probs);
        let mut prev: Option<(u64, f64)> = None;
        for (i, &l) in seps.iter().enumerate() {
            let tv = eds[i].tv_distance(reference);
            print!("  TV({l}) = {tv:.4e} g = {:.3}", eds[i].reach_prob);
            if let Some((l0, tv0)) = prev {
                if tv > 0.0 {
                    print!(" [rate {:.3}]", (tv0 / tv).ln() / (l - l0) as f64);
                }
            }
            prev = Some((l, tv));
        }
        println!();
    }
}
