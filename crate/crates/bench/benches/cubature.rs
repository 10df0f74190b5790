use bayescub::domain::{built_in, periodize};
use bayescub::engine::{fast_context, fast_step, generic_step};
use bayescub::fbt::FftPlan;
use bayescub::lattice::node_block;
use bayescub::{integrate, CubatureOptions, GeneratingVector, KernelSpec, LatticeConfig, NodeSet};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

fn mvn_data(n: usize) -> (NodeSet, NodeSet, Vec<f64>, CubatureOptions) {
    let b = built_in("mvn", None).unwrap();
    let opts = CubatureOptions::new(1e-3)
        .order(b.order)
        .unwrap()
        .transform(b.transform);
    let gv = GeneratingVector::default().truncate(b.integrand.dim()).unwrap();
    let cfg = LatticeConfig::new(gv, vec![0.3, 0.7], n.trailing_zeros()).unwrap();
    let nodes = node_block(0, n, &cfg).unwrap();
    let kernel_nodes = node_block(0, n, &cfg.without_shift()).unwrap();
    let f = periodize(&b.integrand, b.transform);
    let y = nodes.iter().map(|x| f.eval(x)).collect();
    (nodes, kernel_nodes, y, opts)
}

fn transform(c: &mut Criterion) {
    let mut group = c.benchmark_group("fbt");
    for bits in [10u32, 13, 16, 20] {
        let n = 1usize << bits;
        let plan = FftPlan::new(n).unwrap();
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        group.throughput(Throughput::Elements(n as u64));
        group.bench_with_input(BenchmarkId::from_parameter(n), &b, |bench, b| {
            bench.iter(|| plan.fbt(b).unwrap())
        });
    }
    group.finish();
}

fn fit(c: &mut Criterion) {
    let mut group = c.benchmark_group("fit");
    group.sample_size(10);
    for bits in [10u32, 13, 16] {
        let n = 1usize << bits;
        let (_, kernel_nodes, y, opts) = mvn_data(n);
        group.bench_function(BenchmarkId::new("fast", n), |bench| {
            bench.iter(|| fast_step(&fast_context(&kernel_nodes, &y, &opts).unwrap(), &opts, None).unwrap())
        });
    }
    for bits in [8u32, 10] {
        let n = 1usize << bits;
        let (nodes, _, y, opts) = mvn_data(n);
        let generic = opts.kernel(KernelSpec::matern(1.0).unwrap());
        group.bench_function(BenchmarkId::new("generic", n), |bench| {
            bench.iter(|| generic_step(&nodes, &y, &generic).unwrap())
        });
    }
    group.finish();
}

fn end_to_end(c: &mut Criterion) {
    let mut group = c.benchmark_group("integrate");
    group.sample_size(10);
    for (name, eps) in [("mvn", 1e-5), ("keister", 1e-3), ("option", 1e-2)] {
        let b = built_in(name, None).unwrap();
        let opts = CubatureOptions::new(eps)
            .order(b.order)
            .unwrap()
            .transform(b.transform);
        group.bench_function(name, |bench| {
            bench.iter(|| integrate(&b.integrand, &opts).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, transform, fit, end_to_end);
criterion_main!(benches);
