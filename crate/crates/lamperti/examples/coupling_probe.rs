//! Development probe: exact entrance-law total-variation decay for the
//! multi-jump family, to size the coupling experiment.
//! Run: cargo run --release -p lamperti --example coupling_probe

use lamperti::{solve_interval_hitting, Family, LampertiSpec};

fn main() {
    let spec = LampertiSpec::new(2.0, 1.0, Family::MultiJump { max_jump: 2 }).unwrap();
    let kernel = spec.build_kernel().unwrap();
    let a = 50u64;
    let b = 2u64;
    let seps = [1u64, 2, 3, 5, 8, 10, 15, 20, 30, 40];
    let starts: Vec<u64> = seps.iter().map(|&l| a + b + l).collect();
    let mut all = starts.clone();
    all.push(a + b + 200); // limit surrogate far away
    let eds = solve_interval_hitting(&kernel, a, &all, 4000).unwrap();
    let reference = eds.last().unwrap();
    println!("reference law (ell = 200): {:?}", reference.probs);
    println!("ell, tv_to_ref, reach_prob");
    for (i, &l) in seps.iter().enumerate() {
        let tv = eds[i].tv_distance(reference);
        println!("{l:4} {:.6e} {:.4}", tv, eds[i].reach_prob);
    }
    // local decay rates between consecutive probes
    for w in 1..seps.len() {
        let tv0 = eds[w - 1].tv_distance(reference);
        let tv1 = eds[w].tv_distance(reference);
        if tv0 > 0.0 && tv1 > 0.0 {
            let rate = (tv0 / tv1).ln() / (seps[w] - seps[w - 1]) as f64;
            println!("rate over [{}, {}]: {:.4}", seps[w - 1], seps[w], rate);
        }
    }
}
