use std::time::Instant;

use bayescub::domain::{built_in, BuiltIn};
use bayescub::engine::CriterionWidths;
use bayescub::{
    integrate, Criterion, CubatureOptions, CubatureResult, Error, GeneratingVector, Result, Transform,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::record::RunRecord;

/// Everything needed to run one built-in integration.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub integrand: String,
    pub dim: Option<usize>,
    pub tolerance: f64,
    pub criterion: Criterion,
    /// Kernel order; the integrand's default when `None`.
    pub order: Option<u32>,
    /// Periodizing transform; the integrand's default when `None`.
    pub transform: Option<Transform>,
    pub seed: u64,
    pub n0: usize,
    pub n_max: usize,
    pub generating_vector: GeneratingVector,
    /// Store wall times in the records.
    pub record_time: bool,
}

impl RunSpec {
    pub fn new(integrand: &str, tolerance: f64) -> Self {
        let defaults = CubatureOptions::new(tolerance);
        Self {
            integrand: integrand.to_string(),
            dim: None,
            tolerance,
            criterion: defaults.criterion,
            order: None,
            transform: None,
            seed: 0,
            n0: defaults.n0,
            n_max: defaults.n_max,
            generating_vector: defaults.generating_vector,
            record_time: true,
        }
    }

    /// The integrand and the engine options for this spec.
    pub fn resolve(&self) -> Result<(BuiltIn, CubatureOptions)> {
        let b = built_in(&self.integrand, self.dim)?;
        let opts = CubatureOptions::new(self.tolerance)
            .criterion(self.criterion)
            .order(self.order.unwrap_or(b.order))?
            .transform(self.transform.unwrap_or(b.transform))
            .sample_sizes(self.n0, self.n_max)
            .seed(self.seed)
            .generating_vector(self.generating_vector.clone());
        opts.validate()?;
        if b.integrand.dim() > opts.generating_vector.max_dimension() {
            return Err(Error::InvalidArgument(format!(
                "dimension {} exceeds the generating vector's {}",
                b.integrand.dim(),
                opts.generating_vector.max_dimension()
            )));
        }
        Ok((b, opts))
    }
}

fn execute(b: &BuiltIn, opts: &CubatureOptions, record_time: bool) -> Result<(RunRecord, CubatureResult)> {
    let start = Instant::now();
    let res = integrate(&b.integrand, opts)?;
    let elapsed = start.elapsed().as_secs_f64();
    let record = RunRecord {
        integrand: b.integrand.name().to_string(),
        dim: b.integrand.dim(),
        eps: opts.tolerance,
        criterion: opts.criterion,
        transform: opts.transform,
        order: opts.kernel.order().unwrap_or(0),
        seed: opts.seed,
        mu_hat: res.mu_hat,
        err_ratio: b
            .integrand
            .true_value()
            .map(|mu| (mu - res.mu_hat).abs() / opts.tolerance),
        n: res.n_used,
        half_width: res.half_width,
        time_s: record_time.then_some(elapsed),
        converged: res.converged,
    };
    Ok((record, res))
}

pub fn run_one(spec: &RunSpec) -> Result<(RunRecord, CubatureResult)> {
    let (b, opts) = spec.resolve()?;
    execute(&b, &opts, spec.record_time)
}

/// A sweep of `replicates` runs with log-uniform tolerances in
/// `[tol_lo, tol_hi]`. `base.seed` seeds the tolerance and shift draws;
/// `base.tolerance` is ignored.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub base: RunSpec,
    pub replicates: usize,
    pub tol_lo: f64,
    pub tol_hi: f64,
}

#[derive(Debug, Clone)]
pub struct SweepRun {
    pub record: RunRecord,
    /// Half-widths under every criterion at the accepted sample size.
    pub widths: CriterionWidths,
    pub degenerate: bool,
}

impl SweepConfig {
    /// The `(tolerance, seed)` pair of every replicate, in order.
    pub fn draws(&self) -> Result<Vec<(f64, u64)>> {
        let (lo, hi) = (self.tol_lo, self.tol_hi);
        if !(lo > 0.0 && lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::InvalidArgument(format!(
                "tolerance range [{lo}, {hi}] must satisfy 0 < lo <= hi"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.base.seed);
        Ok((0..self.replicates)
            .map(|_| {
                let u: f64 = rng.random();
                let eps = (lo.ln() + u * (hi.ln() - lo.ln())).exp().clamp(lo, hi);
                (eps, rng.random::<u64>())
            })
            .collect())
    }
}

/// Runs the replicates on the rayon pool; results keep replicate order.
pub fn sweep(cfg: &SweepConfig) -> Result<Vec<SweepRun>> {
    let draws = cfg.draws()?;
    let mut probe = cfg.base.clone();
    probe.tolerance = cfg.tol_lo;
    let (b, opts) = probe.resolve()?;
    draws
        .into_par_iter()
        .map(|(eps, seed)| {
            let mut o = opts.clone().seed(seed);
            o.tolerance = eps;
            let (record, res) = execute(&b, &o, cfg.base.record_time)?;
            Ok(SweepRun {
                record,
                widths: res.widths,
                degenerate: res.fit.degenerate,
            })
        })
        .collect()
}
