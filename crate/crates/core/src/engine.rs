//! Automatic cubature loops: the fast lattice path and the generic dense path.

use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dense::{dense_estimators, dense_gcv_objective, dense_mle_objective, DensePosterior};
use crate::domain::{periodize, IntegrandDef, Transform};
use crate::error::{Error, Result};
use crate::fbt::Precision;
use crate::inference::{
    fit_with_state, golden_section, Criterion, FastContext, FastEstimates, FitResult, OptimizerSettings,
    Quantile, SearchInterval,
};
use crate::kernel::{KernelFamily, KernelSpec};
use crate::lattice::{node_block, GeneratingVector, LatticeConfig, NodeSet, MAX_LOG2N};

/// Largest sample size accepted by [`integrate_generic`].
pub const GENERIC_MAX_N: usize = 1 << 13;

/// Settings shared by both cubature loops.
#[derive(Debug, Clone)]
pub struct CubatureOptions {
    pub tolerance: f64,
    pub criterion: Criterion,
    /// Family and order of the covariance kernel; its scale is the starting
    /// point only and is re-estimated at every sample size.
    pub kernel: KernelSpec,
    pub transform: Transform,
    pub n0: usize,
    pub n_max: usize,
    pub seed: u64,
    pub quantile: Quantile,
    pub search: SearchInterval,
    pub generating_vector: GeneratingVector,
    /// `None` picks [`Precision::auto`] at each sample size.
    pub precision: Option<Precision>,
    pub optimizer: OptimizerSettings,
}

impl CubatureOptions {
    /// Defaults: empirical Bayes, Bernoulli kernel of order 2, no transform,
    /// `n0 = 2^8`, `n_max = 2^20`, seed 0.
    pub fn new(tolerance: f64) -> Self {
        Self {
            tolerance,
            criterion: Criterion::EmpiricalBayes,
            kernel: KernelSpec::bernoulli(2, 1.0).expect("valid default kernel"),
            transform: Transform::None,
            n0: 1 << 8,
            n_max: 1 << 20,
            seed: 0,
            quantile: Quantile::default(),
            search: SearchInterval::default(),
            generating_vector: GeneratingVector::default(),
            precision: None,
            optimizer: OptimizerSettings::default(),
        }
    }

    pub fn criterion(mut self, criterion: Criterion) -> Self {
        self.criterion = criterion;
        self
    }

    pub fn kernel(mut self, kernel: KernelSpec) -> Self {
        self.kernel = kernel;
        self
    }

    /// Bernoulli kernel of the given order.
    pub fn order(mut self, order: u32) -> Result<Self> {
        self.kernel = KernelSpec::bernoulli(order, 1.0)?;
        Ok(self)
    }

    pub fn transform(mut self, transform: Transform) -> Self {
        self.transform = transform;
        self
    }

    pub fn sample_sizes(mut self, n0: usize, n_max: usize) -> Self {
        self.n0 = n0;
        self.n_max = n_max;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn quantile(mut self, quantile: Quantile) -> Self {
        self.quantile = quantile;
        self
    }

    pub fn search(mut self, search: SearchInterval) -> Self {
        self.search = search;
        self
    }

    pub fn generating_vector(mut self, gv: GeneratingVector) -> Self {
        self.generating_vector = gv;
        self
    }

    pub fn precision(mut self, precision: Precision) -> Self {
        self.precision = Some(precision);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "tolerance must be positive and finite, got {}",
                self.tolerance
            )));
        }
        for (name, n) in [("n0", self.n0), ("n_max", self.n_max)] {
            if !n.is_power_of_two() || n < 2 {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be a power of two >= 2, got {n}"
                )));
            }
        }
        if self.n0 > self.n_max {
            return Err(Error::InvalidArgument(format!(
                "n0 = {} exceeds n_max = {}",
                self.n0, self.n_max
            )));
        }
        if self.n_max > 1usize << MAX_LOG2N {
            return Err(Error::InvalidArgument(format!(
                "n_max = {} exceeds 2^{MAX_LOG2N}",
                self.n_max
            )));
        }
        Ok(())
    }
}

/// Half-widths under each stopping criterion at the fitted scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriterionWidths {
    pub mle: f64,
    pub full: f64,
    pub gcv: f64,
}

impl CriterionWidths {
    pub fn get(&self, criterion: Criterion) -> f64 {
        match criterion {
            Criterion::EmpiricalBayes => self.mle,
            Criterion::FullBayes => self.full,
            Criterion::Gcv => self.gcv,
        }
    }
}

/// Accumulated wall time per phase.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PhaseTimes {
    /// Node generation and integrand evaluation.
    pub sampling: Duration,
    /// Scale search and width evaluation.
    pub fitting: Duration,
    /// Data transform and kernel factor setup.
    pub transform: Duration,
}

impl PhaseTimes {
    pub fn total(&self) -> Duration {
        self.sampling + self.fitting + self.transform
    }
}

/// One pass of the doubling loop.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub n: usize,
    pub scale: f64,
    pub estimate: f64,
    pub half_width: f64,
    pub fit_time: Duration,
    pub transform_time: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CubatureResult {
    pub mu_hat: f64,
    pub n_used: usize,
    pub half_width: f64,
    pub converged: bool,
    /// The fit that produced the reported width.
    pub fit: FitResult,
    pub widths: CriterionWidths,
    pub wall_times: PhaseTimes,
    pub history: Vec<IterationRecord>,
}

struct Sampler {
    f: IntegrandDef,
    cfg: LatticeConfig,
    nodes: NodeSet,
    values: Vec<f64>,
}

impl Sampler {
    fn new(f: &IntegrandDef, opts: &CubatureOptions) -> Result<Self> {
        let d = f.dim();
        if d == 0 {
            return Err(Error::InvalidArgument(
                "integrand dimension must be positive".into(),
            ));
        }
        let gv = opts.generating_vector.truncate(d)?;
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let max_log2n = opts.n_max.trailing_zeros().max(1);
        let cfg = LatticeConfig::random_shift(gv, max_log2n, &mut rng)?;
        Ok(Self {
            f: periodize(f, opts.transform),
            cfg,
            nodes: NodeSet::empty(d),
            values: Vec::new(),
        })
    }

    // Evaluates the integrand on nodes n_prev+1..=n, keeping earlier values.
    fn extend(&mut self, n_prev: usize, n: usize) -> Result<()> {
        let block = node_block(n_prev, n, &self.cfg)?;
        self.values.reserve(block.len());
        for (k, x) in block.iter().enumerate() {
            let v = self.f.eval(x);
            if !v.is_finite() {
                return Err(Error::IntegrandFailure {
                    index: n_prev + k + 1,
                    value: v,
                });
            }
            self.values.push(v);
        }
        self.nodes.extend(&block)
    }
}

/// Fast automatic cubature with a Bernoulli kernel on a shifted lattice.
///
/// Samples `n0, 2 n0, ...` nodes until the credible half-width for
/// `opts.criterion` is at most `opts.tolerance` or `opts.n_max` is passed.
/// The estimate is the sample mean at the last size whose width was
/// computed. If the width never drops below the tolerance the best-effort
/// result is returned with `converged = false`.
pub fn integrate(f: &IntegrandDef, opts: &CubatureOptions) -> Result<CubatureResult> {
    opts.validate()?;
    bernoulli_order(opts)?;
    let mut sampler = Sampler::new(f, opts)?;
    let unshifted = sampler.cfg.without_shift();
    let mut times = PhaseTimes::default();
    let mut history = Vec::new();

    let mut n = opts.n0;
    let mut n_prev = 0;
    let mut err = f64::INFINITY;
    let mut warm = None;
    let mut last = None;
    while err > opts.tolerance && n <= opts.n_max {
        let t = Instant::now();
        sampler.extend(n_prev, n)?;
        times.sampling += t.elapsed();

        let t = Instant::now();
        let kernel_nodes = node_block(0, n, &unshifted)?;
        let context = fast_context(&kernel_nodes, &sampler.values, opts)?;
        let transform_time = t.elapsed();
        times.transform += transform_time;

        let t = Instant::now();
        let step = fast_step(&context, opts, warm)?;
        let fit_time = t.elapsed();
        times.fitting += fit_time;

        err = step.widths.get(opts.criterion);
        warm = Some(step.fit.eta_hat);
        history.push(IterationRecord {
            n,
            scale: step.fit.eta_hat,
            estimate: step.mu_hat,
            half_width: err,
            fit_time,
            transform_time,
        });
        last = Some(step);
        n_prev = n;
        n = 2 * n_prev;
    }
    Ok(finish(last, n_prev, err, opts, times, history))
}

fn finish(
    last: Option<FitStep>,
    n_used: usize,
    err: f64,
    opts: &CubatureOptions,
    wall_times: PhaseTimes,
    history: Vec<IterationRecord>,
) -> CubatureResult {
    let step = last.expect("the loop runs at least once");
    CubatureResult {
        mu_hat: step.mu_hat,
        n_used,
        half_width: err,
        converged: err <= opts.tolerance,
        fit: step.fit,
        widths: step.widths,
        wall_times,
        history,
    }
}

/// Result of one scale fit and width evaluation at a fixed sample size.
#[derive(Debug, Clone, PartialEq)]
pub struct FitStep {
    pub fit: FitResult,
    pub mu_hat: f64,
    pub widths: CriterionWidths,
}

fn bernoulli_order(opts: &CubatureOptions) -> Result<u32> {
    match opts.kernel.family() {
        KernelFamily::ShiftInvariantBernoulli { order } => Ok(order),
        _ => Err(Error::InvalidKernel(
            "the fast path needs a shift-invariant Bernoulli kernel".into(),
        )),
    }
}

/// Transforms `y` and prepares the kernel factors. `kernel_nodes` are the
/// unshifted lattice nodes in sequence order.
pub fn fast_context(kernel_nodes: &NodeSet, y: &[f64], opts: &CubatureOptions) -> Result<FastContext> {
    let order = bernoulli_order(opts)?;
    let precision = opts.precision.unwrap_or_else(|| Precision::auto(y.len()));
    FastContext::with_precision(order, kernel_nodes, y, precision)
}

/// Fits the kernel scale on the fast path and evaluates every width.
pub fn fast_step(context: &FastContext, opts: &CubatureOptions, warm_start: Option<f64>) -> Result<FitStep> {
    let (fit, state) = fit_with_state(opts.criterion, context, opts.search, warm_start, opts.optimizer)?;
    let est = FastEstimates::from_state(&state, &opts.quantile)?;
    Ok(FitStep {
        fit,
        mu_hat: est.mu_hat,
        widths: CriterionWidths {
            mle: est.err_mle,
            full: est.err_full,
            gcv: est.err_gcv,
        },
    })
}

/// Generic automatic cubature with dense linear algebra, for any kernel
/// whose mean integrals are available (e.g. Matérn).
///
/// Each scale evaluation factorizes the `n x n` Gram matrix, so `n_max` is
/// capped at [`GENERIC_MAX_N`]. Scales whose Gram matrix is numerically
/// singular are skipped by the search.
pub fn integrate_generic(f: &IntegrandDef, opts: &CubatureOptions) -> Result<CubatureResult> {
    opts.validate()?;
    if opts.n_max > GENERIC_MAX_N {
        return Err(Error::InvalidArgument(format!(
            "the dense path supports n_max <= {GENERIC_MAX_N}, got {}",
            opts.n_max
        )));
    }
    let mut sampler = Sampler::new(f, opts)?;
    let mut times = PhaseTimes::default();
    let mut history = Vec::new();

    let mut n = opts.n0;
    let mut n_prev = 0;
    let mut err = f64::INFINITY;
    let mut last = None;
    while err > opts.tolerance && n <= opts.n_max {
        let t = Instant::now();
        sampler.extend(n_prev, n)?;
        times.sampling += t.elapsed();

        let t = Instant::now();
        let step = generic_step(&sampler.nodes, &sampler.values, opts)?;
        let fit_time = t.elapsed();
        times.fitting += fit_time;

        err = step.widths.get(opts.criterion);
        history.push(IterationRecord {
            n,
            scale: step.fit.eta_hat,
            estimate: step.mu_hat,
            half_width: err,
            fit_time,
            transform_time: Duration::ZERO,
        });
        last = Some(step);
        n_prev = n;
        n = 2 * n_prev;
    }
    Ok(finish(last, n_prev, err, opts, times, history))
}

/// Fits the kernel scale with dense linear algebra on arbitrary nodes and
/// evaluates every width.
pub fn generic_step(nodes: &NodeSet, y: &[f64], opts: &CubatureOptions) -> Result<FitStep> {
    let n = y.len();
    let spec = opts.kernel;
    let mean = y.iter().sum::<f64>() / n as f64;
    let spread = y.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
    let degenerate = spread <= 1e-14 * mean.abs();
    let gcv = opts.criterion == Criterion::Gcv;

    let mut feasible = false;
    let objective = |u: f64| -> Result<f64> {
        let posterior = match DensePosterior::<f64>::new(&spec.with_scale(u.exp())?, nodes, 0.0) {
            Ok(p) => p,
            Err(Error::CholeskyFailure { .. }) => return Ok(f64::INFINITY),
            Err(e) => return Err(e),
        };
        let value = if gcv {
            dense_gcv_objective(&posterior, y)
        } else {
            dense_mle_objective(&posterior, y)
        };
        match value {
            Ok(v) if v.is_finite() => {
                feasible = true;
                Ok(v)
            }
            Ok(_) | Err(Error::DegenerateData) => Ok(f64::INFINITY),
            Err(e) => Err(e),
        }
    };

    let search = opts.search;
    let (scale, value, iterations) = if degenerate {
        ((search.lo() * search.hi()).sqrt(), f64::NEG_INFINITY, 0)
    } else {
        let m = golden_section(
            objective,
            search.lo().ln(),
            search.hi().ln(),
            opts.optimizer.rel_tol.ln_1p(),
            opts.optimizer.max_iter,
        )?;
        if !feasible {
            return Err(Error::CholeskyFailure { n, param: m.x.exp() });
        }
        (m.x.exp(), m.value, m.iterations)
    };

    let posterior = DensePosterior::<f64>::new(&spec.with_scale(scale)?, nodes, 0.0)?;
    let est = dense_estimators(&posterior, y, &opts.quantile)?;
    let (m_hat, mu_hat) = if gcv {
        (est.m_gcv, est.mu_gcv)
    } else {
        (est.m_mle, est.mu_mle)
    };
    let s2_hat = match opts.criterion {
        Criterion::EmpiricalBayes => est.s2_mle,
        Criterion::FullBayes => est.sigma2_full,
        Criterion::Gcv => est.s2_gcv,
    };
    let widths = if degenerate {
        CriterionWidths {
            mle: 0.0,
            full: 0.0,
            gcv: 0.0,
        }
    } else {
        CriterionWidths {
            mle: est.err_mle,
            full: est.err_full,
            gcv: est.err_gcv,
        }
    };
    let fit = FitResult {
        eta_hat: scale,
        m_hat,
        s2_hat: if degenerate { 0.0 } else { s2_hat },
        objective_value: value,
        criterion: opts.criterion,
        at_boundary: !degenerate && search.near_boundary(scale),
        degenerate,
        iterations,
    };
    Ok(FitStep {
        fit,
        mu_hat: if degenerate { mean } else { mu_hat },
        widths,
    })
}
