use std::io::Write;
use std::time::{Duration, Instant};

use bayescub::domain::periodize;
use bayescub::engine::{fast_context, fast_step, generic_step, GENERIC_MAX_N};
use bayescub::lattice::node_block;
use bayescub::{Error, KernelSpec, LatticeConfig, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::record::fmt_float;
use crate::run::RunSpec;

pub const COMPARE_HEADER: [&str; 6] = ["integrand", "d", "n", "fast_s", "generic_s", "ratio"];

/// Wall time of one fit plus width evaluation on each path at a fixed `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareRecord {
    pub integrand: String,
    pub dim: usize,
    pub n: usize,
    pub fast_s: f64,
    /// `None` when `n` is too large for dense algebra.
    pub generic_s: Option<f64>,
}

impl CompareRecord {
    pub fn ratio(&self) -> Option<f64> {
        self.generic_s.map(|g| g / self.fast_s)
    }
}

fn best_of<T>(repeats: usize, mut f: impl FnMut() -> Result<T>) -> Result<Duration> {
    let mut best = Duration::MAX;
    for _ in 0..repeats.max(1) {
        let t = Instant::now();
        f()?;
        best = best.min(t.elapsed());
    }
    Ok(best)
}

/// Times both paths on the same shifted lattice data. The fast path uses
/// the spec's Bernoulli kernel; the generic path fits `generic_kernel`, and
/// is skipped when that is `None` or `n` exceeds the dense limit. Each
/// timing is the best of `repeats`.
pub fn compare(
    spec: &RunSpec,
    n_list: &[usize],
    generic_kernel: Option<KernelSpec>,
    repeats: usize,
) -> Result<Vec<CompareRecord>> {
    if let Some(&n) = n_list.iter().find(|&&n| n < 2 || !n.is_power_of_two()) {
        return Err(Error::InvalidArgument(format!(
            "sample size {n} is not a power of two >= 2"
        )));
    }
    let Some(&n_big) = n_list.iter().max() else {
        return Ok(Vec::new());
    };
    let (b, opts) = spec.resolve()?;
    let generic_opts = generic_kernel.map(|k| opts.clone().kernel(k));

    let d = b.integrand.dim();
    let gv = opts.generating_vector.truncate(d)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let cfg = LatticeConfig::random_shift(gv, n_big.trailing_zeros(), &mut rng)?;
    let nodes = node_block(0, n_big, &cfg)?;
    let kernel_nodes = node_block(0, n_big, &cfg.without_shift())?;
    let f = periodize(&b.integrand, opts.transform);
    let y: Vec<f64> = nodes.iter().map(|x| f.eval(x)).collect();

    n_list
        .iter()
        .map(|&n| {
            let (kn, yn) = (kernel_nodes.prefix(n), &y[..n]);
            let fast = best_of(repeats, || fast_step(&fast_context(&kn, yn, &opts)?, &opts, None))?;
            let generic = match &generic_opts {
                Some(g) if n <= GENERIC_MAX_N => {
                    let sn = nodes.prefix(n);
                    Some(best_of(repeats, || generic_step(&sn, yn, g))?.as_secs_f64())
                }
                _ => None,
            };
            Ok(CompareRecord {
                integrand: b.integrand.name().to_string(),
                dim: d,
                n,
                fast_s: fast.as_secs_f64(),
                generic_s: generic,
            })
        })
        .collect()
}

pub fn write_compare_csv<W: Write>(out: W, records: &[CompareRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::InvalidArgument(format!("cannot write CSV: {e}"));
    w.write_record(COMPARE_HEADER).map_err(io)?;
    for r in records {
        w.write_record([
            r.integrand.clone(),
            r.dim.to_string(),
            r.n.to_string(),
            fmt_float(r.fast_s),
            r.generic_s.map(fmt_float).unwrap_or_default(),
            r.ratio().map(fmt_float).unwrap_or_default(),
        ])
        .map_err(io)?;
    }
    w.flush()
        .map_err(|e| Error::InvalidArgument(format!("cannot write CSV: {e}")))
}
