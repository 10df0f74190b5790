use std::f64::consts::PI;

use bayescub::kernel::bernoulli_poly;
use bayescub::lattice::{node_block, GeneratingVector, LatticeConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Squared worst-case error in the Korobov space of smoothness 1 with product weights.
fn weighted_error2(gv: Vec<u64>, log2n: u32, weight: impl Fn(usize) -> f64) -> f64 {
    let cfg = LatticeConfig::unshifted(gv, log2n).unwrap();
    let nodes = node_block(0, 1 << log2n, &cfg).unwrap();
    let sum: f64 = nodes
        .iter()
        .map(|x| {
            x.iter()
                .enumerate()
                .map(|(j, &t)| 1.0 + weight(j) * 2.0 * PI * PI * bernoulli_poly(2, t).unwrap())
                .product::<f64>()
        })
        .sum();
    sum / nodes.len() as f64 - 1.0
}

fn worst_case_error2(gv: Vec<u64>, log2n: u32) -> f64 {
    weighted_error2(gv, log2n, |_| 1.0)
}

fn decaying(j: usize) -> f64 {
    1.0 / ((j + 1) * (j + 1)) as f64
}

#[test]
fn default_vector_beats_typical_random_vectors() {
    let gv = GeneratingVector::default();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for &(d, log2n) in &[(2usize, 10u32), (4, 12), (4, 16), (8, 12), (13, 14)] {
        let ours = weighted_error2(gv.truncate(d).unwrap(), log2n, decaying);
        let mut random: Vec<f64> = (0..40)
            .map(|_| {
                let v = (0..d)
                    .map(|_| 2 * rng.random_range(0..(1u64 << (log2n - 1))) + 1)
                    .collect();
                weighted_error2(v, log2n, decaying)
            })
            .collect();
        random.sort_by(f64::total_cmp);
        assert!(
            ours <= random[19],
            "d = {d}, n = 2^{log2n}: {ours:e} vs {:e}",
            random[19]
        );
    }
}

#[test]
fn default_vector_error_decays_with_n() {
    let gv = GeneratingVector::default().truncate(4).unwrap();
    let errs: Vec<f64> = (8..=16)
        .step_by(2)
        .map(|m| worst_case_error2(gv.clone(), m))
        .collect();
    for w in errs.windows(2) {
        // at least the Monte Carlo rate n^-1 for the squared error over a 4x step
        assert!(w[1] < w[0] / 4.0, "{errs:?}");
    }
}
