//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::f64::consts::PI;
use std::time::Instant;

use bayescub::dense::{
    dense_estimators, dense_gcv_objective, dense_mle_objective, dense_theta_objectives, gram_eigenvalues,
    DensePosterior, DoubleDouble,
};
use bayescub::domain::{keister_true, MVN_REFERENCE, OPTION_REFERENCE};
use bayescub::engine::{fast_context, fast_step};
use bayescub::fbt::{fbt, fft_radix2, Direction, FbtState};
use bayescub::inference::{
    gcv_objective, gcv_objective_of, mle_objective, mle_objective_of, FastContext, FastEstimates,
};
use bayescub::kernel::kernel_eval;
use bayescub::lattice::{lattice_permutation, node_block};
use bayescub::{Criterion, CubatureOptions, GeneratingVector, KernelSpec, LatticeConfig, NodeSet, Quantile};
use bayescub_cli::{compare, run_one, sweep, RunSpec, SweepConfig, SweepRun};
use num_complex::Complex64;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs()
    }
}

// Random shifts on a 2^-30 grid keep every node coordinate exact, so the
// dense oracle sees exactly the same lattice as the fast path.
fn shifted_nodes(d: usize, n: usize, rng: &mut ChaCha8Rng) -> NodeSet {
    let gv = GeneratingVector::default().truncate(d).unwrap();
    let shift = (0..d)
        .map(|_| rng.random_range(0..1u64 << 30) as f64 / (1u64 << 30) as f64)
        .collect();
    let cfg = LatticeConfig::new(gv, shift, n.trailing_zeros().max(1)).unwrap();
    node_block(0, n, &cfg).unwrap()
}

// A smooth periodic part plus a non-periodic quadratic, with random coefficients.
fn test_data(nodes: &NodeSet, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let d = nodes.dim();
    let amp: Vec<f64> = (0..d).map(|_| rng.random_range(0.1..0.9)).collect();
    let phase: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
    let bend = rng.random_range(-1.0..1.0);
    nodes
        .iter()
        .map(|x| {
            let wave: f64 = x
                .iter()
                .enumerate()
                .map(|(j, &t)| 1.0 + amp[j] * (2.0 * PI * t + phase[j]).sin())
                .product();
            wave + bend * x.iter().map(|t| t * t).sum::<f64>()
        })
        .collect()
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp()
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let q = Quantile::default();
    let (mut worst, mut worst_case, mut cases) = (0.0f64, String::new(), 0);
    for d in 1..=3 {
        for &n in &[8usize, 16, 32, 64, 256] {
            for r in 1..=2u32 {
                for _ in 0..5 {
                    let eta = log_uniform(&mut rng, 1e-3, 1e2);
                    let nodes = shifted_nodes(d, n, &mut rng);
                    let y = test_data(&nodes, &mut rng);
                    let spec = KernelSpec::bernoulli(r, eta).unwrap();
                    let fast = FastEstimates::from_state(&FbtState::compute(&spec, &nodes, &y).unwrap(), &q)
                        .unwrap();
                    let post = DensePosterior::<DoubleDouble>::new(&spec, &nodes, 0.0).unwrap();
                    let dense = dense_estimators(&post, &y, &q).unwrap();
                    let ctx = FastContext::new(r, &nodes, &y).unwrap();
                    let (dm, dg) = dense_theta_objectives::<DoubleDouble>(&spec, &nodes, &y).unwrap();
                    let ln_n = (n as f64).ln();
                    let pairs = [
                        ("m_hat", fast.m_hat, dense.m_mle),
                        ("m_hat gcv", fast.m_hat, dense.m_gcv),
                        ("s2_mle", fast.s2_mle, dense.s2_mle),
                        ("s2_gcv", fast.s2_gcv, dense.s2_gcv),
                        ("sigma2_full", fast.sigma2_full, dense.sigma2_full),
                        ("err_mle", fast.err_mle, dense.err_mle),
                        ("err_full", fast.err_full, dense.err_full),
                        ("err_gcv", fast.err_gcv, dense.err_gcv),
                        ("mu_hat", fast.mu_hat, dense.mu_mle),
                        ("mle objective", mle_objective(eta, &ctx).unwrap(), dm + ln_n),
                        ("gcv objective", gcv_objective(eta, &ctx).unwrap(), dg + ln_n),
                    ];
                    for (name, a, b) in pairs {
                        let e = rel(a, b);
                        if !(e <= worst) {
                            worst = if e.is_nan() { f64::INFINITY } else { e };
                            worst_case = format!("{name} at d={d} n={n} r={r} eta={eta:.3e}");
                        }
                    }
                    cases += 1;
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-8 && secs < 30.0,
        format!("{cases} cases, worst relative deviation {worst:.2e} ({worst_case}), {secs:.1} s"),
    )
}

fn eigenvalue_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut worst, mut cases) = (0.0f64, 0);
    for d in 1..=3 {
        for &n in &[2usize, 4, 8, 16, 32, 64, 128, 256] {
            for r in 1..=2u32 {
                for _ in 0..2 {
                    let eta = log_uniform(&mut rng, 1e-3, 1e2);
                    let spec = KernelSpec::bernoulli(r, eta).unwrap();
                    let nodes = shifted_nodes(d, n, &mut rng);
                    let mut fast = FbtState::compute(&spec, &nodes, &vec![0.0; n]).unwrap().lambda;
                    fast.sort_by(f64::total_cmp);
                    let dense = gram_eigenvalues(&spec, &nodes).unwrap();
                    let e = fast
                        .iter()
                        .zip(&dense)
                        .map(|(a, b)| rel(*a, *b))
                        .fold(0.0, f64::max);
                    worst = worst.max(if e.is_nan() { f64::INFINITY } else { e });
                    cases += 1;
                }
            }
        }
    }
    outcome(
        worst <= 1e-8,
        format!("{cases} spectra, worst relative deviation {worst:.2e}"),
    )
}

// Neumaier-compensated mean.
fn accurate_mean(y: &[f64]) -> f64 {
    let (mut sum, mut carry) = (0.0f64, 0.0f64);
    for &v in y {
        let t = sum + v;
        carry += if sum.abs() >= v.abs() {
            (sum - t) + v
        } else {
            (v - t) + sum
        };
        sum = t;
    }
    (sum + carry) / y.len() as f64
}

fn sample_mean_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for k in 0..100 {
        let d = 1 + k % 3;
        let n = 1usize << rng.random_range(1..=12);
        let gv = GeneratingVector::default().truncate(d).unwrap();
        let kernel_nodes = node_block(0, n, &LatticeConfig::unshifted(gv, 12).unwrap()).unwrap();
        let offset = rng.random_range(-10.0..10.0);
        let y: Vec<f64> = (0..n).map(|_| offset + rng.random_range(-1.0..1.0)).collect();
        let criterion = Criterion::ALL[k % 3];
        let opts = CubatureOptions::new(1e-3)
            .criterion(criterion)
            .order(1 + (k % 2) as u32)
            .unwrap();
        let step = fast_step(&fast_context(&kernel_nodes, &y, &opts).unwrap(), &opts, None).unwrap();
        worst = worst.max(rel(step.mu_hat, accurate_mean(&y)));
    }
    outcome(
        worst <= 1e-14,
        format!("100 data vectors, worst relative deviation {worst:.2e}"),
    )
}

fn cancellation_safety() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut cases, mut ring_bad, mut naive_bad, mut smallest) = (0, 0, 0, f64::INFINITY);
    for &eta in &[1e-6, 1e-4] {
        for d in 1..=3 {
            for r in 1..=2u32 {
                for &n in &[16usize, 256, 4096] {
                    let spec = KernelSpec::bernoulli(r, eta).unwrap();
                    let nodes = shifted_nodes(d, n, &mut rng);
                    let state = FbtState::compute(&spec, &nodes, &vec![0.0; n]).unwrap();
                    let ring = state.ring_ratio();
                    let first = nodes.point(0);
                    let lambda_1: f64 = nodes.iter().map(|x| kernel_eval(&spec, x, first).unwrap()).sum();
                    let naive = 1.0 - n as f64 / lambda_1;
                    if !(ring > 0.0) {
                        ring_bad += 1;
                    }
                    if naive <= 0.0 {
                        naive_bad += 1;
                    }
                    smallest = smallest.min(ring);
                    cases += 1;
                }
            }
        }
    }
    outcome(
        ring_bad == 0 && naive_bad > 0,
        format!(
            "{cases} cases, ring factor positive in {} (smallest {smallest:.2e}), naive 1 - n/lambda_1 <= 0 in {naive_bad}",
            cases - ring_bad
        ),
    )
}

struct SweepSummary {
    line: String,
    pass: bool,
}

fn run_sweep(cfg: &SweepConfig, runs_out: &mut Vec<SweepRun>) -> (f64, Vec<f64>) {
    let runs = sweep(cfg).expect("sweep runs");
    let ok = runs.iter().filter(|r| r.record.succeeded() == Some(true)).count();
    let times = runs.iter().map(|r| r.record.time_s.unwrap_or(0.0)).collect();
    let rate = ok as f64 / runs.len() as f64;
    runs_out.extend(runs);
    (rate, times)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn benchmark_sweeps(
    integrand: &str,
    tol: (f64, f64),
    replicates: usize,
    seed: u64,
    all: &mut Vec<SweepRun>,
) -> Vec<(Criterion, f64, f64)> {
    Criterion::ALL
        .iter()
        .map(|&criterion| {
            let mut base = RunSpec::new(integrand, tol.0);
            base.criterion = criterion;
            base.seed = seed;
            let cfg = SweepConfig {
                base,
                replicates,
                tol_lo: tol.0,
                tol_hi: tol.1,
            };
            let (rate, times) = run_sweep(&cfg, all);
            (criterion, rate, median(times))
        })
        .collect()
}

fn rates(results: &[(Criterion, f64, f64)]) -> String {
    results
        .iter()
        .map(|(c, rate, t)| format!("{c} {:.0}% (median {t:.3} s)", rate * 100.0))
        .collect::<Vec<_>>()
        .join(", ")
}

fn keister_suite(all: &mut Vec<SweepRun>) -> SweepSummary {
    let start = Instant::now();
    let results = benchmark_sweeps("keister", (1e-3, 1e-3), 100, 6, all);
    let secs = start.elapsed().as_secs_f64();
    SweepSummary {
        pass: results.iter().all(|r| r.1 >= 0.9) && secs < 120.0,
        line: format!(
            "d=4 eps=1e-3 true value {:.10}: {}; {secs:.1} s",
            keister_true(4),
            rates(&results)
        ),
    }
}

fn mvn_suite(all: &mut Vec<SweepRun>) -> SweepSummary {
    let results = benchmark_sweeps("mvn", (1e-5, 1e-2), 100, 7, all);
    SweepSummary {
        pass: results.iter().all(|r| r.1 >= 0.9 && r.2 < 1.0),
        line: format!("reference {MVN_REFERENCE}: {}", rates(&results)),
    }
}

fn option_suite(all: &mut Vec<SweepRun>) -> SweepSummary {
    let results = benchmark_sweeps("option", (1e-2, 1e-2), 50, 8, all);
    let mut graceful = 0;
    let mut unconverged = 0;
    let mut total = 0;
    for &eps in &[1e-4, 1e-5] {
        for seed in 0..3 {
            let mut spec = RunSpec::new("option", eps);
            spec.seed = seed;
            total += 1;
            if let Ok((record, res)) = run_one(&spec) {
                let sane = record.mu_hat.is_finite() && res.half_width.is_finite();
                let consistent = if res.converged {
                    res.half_width <= eps
                } else {
                    res.n_used == spec.n_max && res.half_width > eps
                };
                if sane && consistent {
                    graceful += 1;
                }
                if !res.converged {
                    unconverged += 1;
                }
            }
        }
    }
    SweepSummary {
        pass: results.iter().all(|r| r.1 >= 0.9) && graceful == total,
        line: format!(
            "reference {OPTION_REFERENCE}: {}; eps <= 1e-4: {graceful}/{total} graceful, {unconverged} stopped at n_max",
            rates(&results)
        ),
    }
}

fn width_ordering(all: &[SweepRun]) -> Outcome {
    let fitted: Vec<&SweepRun> = all.iter().filter(|r| !r.degenerate).collect();
    let bad = fitted.iter().filter(|r| !(r.widths.full > r.widths.mle)).count();
    let min_ratio = fitted
        .iter()
        .map(|r| r.widths.full / r.widths.mle)
        .fold(f64::INFINITY, f64::min);
    outcome(
        bad == 0 && !fitted.is_empty(),
        format!(
            "{} fitted sweep runs, {bad} violations, smallest err_full/err_MLE {min_ratio:.6}",
            fitted.len()
        ),
    )
}

fn scaling_contract() -> Outcome {
    let spec = RunSpec::new("mvn", 1e-3);
    let matern = KernelSpec::matern(1.0).unwrap();
    let small = compare(&spec, &[1 << 10], Some(matern), 3).unwrap();
    let fast = compare(&spec, &[1 << 13, 1 << 16], None, 3).unwrap();
    let growth = fast[1].fast_s / fast[0].fast_s;
    let contrast = small[0].ratio().unwrap();
    outcome(
        growth <= 16.0 && contrast >= 10.0 && fast[1].fast_s < 5.0,
        format!(
            "fast 2^16/2^13 = {growth:.2} ({:.4} s at 2^16); generic/fast at 2^10 = {contrast:.0}",
            fast[1].fast_s
        ),
    )
}

fn property_suites() -> Outcome {
    let mut failures = Vec::new();
    let mut check = |name: &str, result: Result<(), String>| {
        if let Err(e) = result {
            failures.push(format!("{name}: {e}"));
        }
    };

    check("permutation bijectivity", {
        (0..=20).try_for_each(|bits| {
            let n = 1usize << bits;
            let p = lattice_permutation(n).map_err(|e| e.to_string())?;
            let mut seen = vec![false; n];
            for &i in &p {
                if i >= n || seen[i] {
                    return Err(format!("n = {n} repeats {i}"));
                }
                seen[i] = true;
            }
            Ok(())
        })
    });

    let mut runner = TestRunner::new(Config {
        cases: 64,
        failure_persistence: None,
        ..Config::default()
    });
    check(
        "parseval",
        runner
            .run(
                &(0u32..11).prop_flat_map(|b| prop::collection::vec(-1.0f64..1.0, 1 << b)),
                |b| {
                    let lhs: f64 = fbt(&b).unwrap().iter().map(|z| z.norm_sqr()).sum();
                    let rhs = b.len() as f64 * b.iter().map(|v| v * v).sum::<f64>();
                    prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1e-300));
                    Ok(())
                },
            )
            .map_err(|e| e.to_string()),
    );
    check(
        "dft round trip",
        runner
            .run(
                &(0u32..10).prop_flat_map(|b| prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1 << b)),
                |v| {
                    let z: Vec<Complex64> = v.iter().map(|&(a, b)| Complex64::new(a, b)).collect();
                    let fwd = fft_radix2(&z, Direction::Forward).unwrap();
                    let back = fft_radix2(&fwd, Direction::Inverse).unwrap();
                    for (u, w) in z.iter().zip(&back) {
                        prop_assert!((u - w).norm() <= 1e-11 * (1.0 + u.norm()));
                    }
                    Ok(())
                },
            )
            .map_err(|e| e.to_string()),
    );
    check(
        "shift invariance",
        runner
            .run(
                &(
                    1u32..=2,
                    1e-3f64..1e2,
                    prop::collection::vec((0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0), 1..=4),
                ),
                |(r, eta, coords)| {
                    let spec = KernelSpec::bernoulli(r, eta).unwrap();
                    let t: Vec<f64> = coords.iter().map(|c| c.0).collect();
                    let x: Vec<f64> = coords.iter().map(|c| c.1).collect();
                    let moved = |p: &[f64]| -> Vec<f64> {
                        p.iter().zip(&coords).map(|(a, c)| (a + c.2).fract()).collect()
                    };
                    let base = kernel_eval(&spec, &t, &x).unwrap();
                    let shifted = kernel_eval(&spec, &moved(&t), &moved(&x)).unwrap();
                    prop_assert!((base - shifted).abs() <= 1e-10 * base.abs().max(1.0));
                    Ok(())
                },
            )
            .map_err(|e| e.to_string()),
    );
    check(
        "scale invariance",
        runner
            .run(
                &(1u32..=2, 1e-2f64..10.0, 1e-3f64..1e3, 0.5f64..20.0),
                |(r, eta, b, theta)| {
                    let mut rng = ChaCha8Rng::seed_from_u64(eta.to_bits());
                    let nodes = shifted_nodes(2, 32, &mut rng);
                    let y = test_data(&nodes, &mut rng);
                    let base =
                        FbtState::compute(&KernelSpec::bernoulli(r, eta).unwrap(), &nodes, &y).unwrap();
                    let mut scaled = base.clone();
                    scaled.lambda.iter_mut().for_each(|l| *l *= b);
                    let close = |u: f64, v: f64, tol: f64| (u - v).abs() <= tol * v.abs().max(1.0);
                    prop_assert!(close(
                        mle_objective_of(&scaled).unwrap(),
                        mle_objective_of(&base).unwrap(),
                        1e-9
                    ));
                    prop_assert!(close(
                        gcv_objective_of(&scaled).unwrap(),
                        gcv_objective_of(&base).unwrap(),
                        1e-9
                    ));

                    let spec = KernelSpec::matern(theta).unwrap();
                    let p0 = DensePosterior::<f64>::new(&spec, &nodes, 0.0).unwrap();
                    let factor = b.sqrt();
                    let gram = p0.gram().iter().map(|v| v * factor).collect();
                    let c = p0.c_vec().iter().map(|v| v * factor).collect();
                    let p1 = DensePosterior::from_parts(gram, c, p0.c0() * factor, theta, 0.0).unwrap();
                    let q = Quantile::default();
                    let (e0, e1) = (
                        dense_estimators(&p0, &y, &q).unwrap(),
                        dense_estimators(&p1, &y, &q).unwrap(),
                    );
                    for (u, v) in [
                        (e1.err_mle, e0.err_mle),
                        (e1.err_full, e0.err_full),
                        (e1.err_gcv, e0.err_gcv),
                    ] {
                        prop_assert!(rel(u, v) < 1e-6);
                    }
                    prop_assert!(close(
                        dense_mle_objective(&p1, &y).unwrap(),
                        dense_mle_objective(&p0, &y).unwrap(),
                        1e-8
                    ));
                    prop_assert!(close(
                        dense_gcv_objective(&p1, &y).unwrap(),
                        dense_gcv_objective(&p0, &y).unwrap(),
                        1e-8
                    ));
                    Ok(())
                },
            )
            .map_err(|e| e.to_string()),
    );
    let detail = if failures.is_empty() {
        "permutation bijectivity to 2^20, Parseval, DFT round trip, shift invariance, scale invariance"
            .to_string()
    } else {
        failures.join("; ")
    };
    outcome(failures.is_empty(), detail)
}

fn report(id: u32, name: &str, o: &Outcome) -> bool {
    println!(
        "criterion {id:>2} {name}: {} ({})",
        if o.pass { "PASS" } else { "FAIL" },
        o.detail
    );
    o.pass
}

fn main() {
    let mut all_pass = true;
    all_pass &= report(1, "oracle equivalence", &oracle_equivalence());
    all_pass &= report(2, "eigenvalue identity", &eigenvalue_identity());
    all_pass &= report(3, "sample-mean identity", &sample_mean_identity());
    all_pass &= report(4, "cancellation safety", &cancellation_safety());

    let mut runs = Vec::new();
    let keister = keister_suite(&mut runs);
    let mvn = mvn_suite(&mut runs);
    let option = option_suite(&mut runs);
    all_pass &= report(5, "width ordering", &width_ordering(&runs));
    all_pass &= report(6, "keister benchmark", &outcome(keister.pass, keister.line));
    all_pass &= report(7, "mvn benchmark", &outcome(mvn.pass, mvn.line));
    all_pass &= report(8, "option benchmark", &outcome(option.pass, option.line));

    all_pass &= report(9, "scaling contract", &scaling_contract());
    all_pass &= report(10, "property suites", &property_suites());

    if !all_pass {
        std::process::exit(1);
    }
}
