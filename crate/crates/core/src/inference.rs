//! Hyperparameter fitting and credible-interval widths on the fast path.
//!
//! Everything here is a function of the transformed data `ỹ` and the Gram
//! eigenvalues `λ`. With the unit-integral Bernoulli kernel the posterior
//! mean is `ỹ_1 / n`, the sample mean, for every criterion.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fbt::{spectrum_at, FbtState, FftPlan, Precision, Spectrum};
use crate::kernel::RingFactors;
use crate::lattice::NodeSet;
use crate::special::norm_cdf;

pub use crate::special::student_t_quantile;

/// Tail power below this fraction of the total counts as constant data.
const DEGENERATE_RATIO: f64 = 1e-28;

/// Rule used to choose the kernel scale and form the credible interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Criterion {
    /// Empirical Bayes: maximum likelihood for the scale and `s^2`.
    EmpiricalBayes,
    /// Full Bayes with a noninformative prior on the mean and variance; the
    /// scale still comes from maximum likelihood.
    FullBayes,
    /// Generalized cross-validation.
    Gcv,
}

impl Criterion {
    pub const ALL: [Criterion; 3] = [Criterion::EmpiricalBayes, Criterion::FullBayes, Criterion::Gcv];

    pub fn name(&self) -> &'static str {
        match self {
            Criterion::EmpiricalBayes => "mle",
            Criterion::FullBayes => "full",
            Criterion::Gcv => "gcv",
        }
    }

    fn uses_gcv_objective(&self) -> bool {
        matches!(self, Criterion::Gcv)
    }
}

impl std::fmt::Display for Criterion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mle" | "eb" | "empirical" => Ok(Criterion::EmpiricalBayes),
            "full" | "fb" => Ok(Criterion::FullBayes),
            "gcv" => Ok(Criterion::Gcv),
            other => Err(Error::InvalidArgument(format!("unknown criterion '{other}'"))),
        }
    }
}

/// Interval multipliers. `z` scales the normal-theory widths; the full-Bayes
/// width uses the Student-t quantile at the same two-sided level `Φ(z)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantile {
    z: f64,
}

impl Default for Quantile {
    fn default() -> Self {
        Self { z: 2.58 }
    }
}

impl Quantile {
    pub fn new(z: f64) -> Result<Self> {
        if !(z.is_finite() && z > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "quantile multiplier must be positive, got {z}"
            )));
        }
        Ok(Self { z })
    }

    pub fn normal(&self) -> f64 {
        self.z
    }

    /// One-sided probability matching `z`, about 0.995 for the default.
    pub fn level(&self) -> f64 {
        norm_cdf(self.z)
    }

    /// Student-t multiplier with `nu` degrees of freedom.
    pub fn student(&self, nu: f64) -> Result<f64> {
        student_t_quantile(nu, self.level())
    }
}

/// Data and precomputed kernel factors for evaluating objectives at many
/// scales. Each evaluation costs one `O(n d)` column build and one FFT.
#[derive(Debug, Clone)]
pub struct FastContext {
    ring: RingFactors,
    plan: FftPlan,
    y_tilde: Vec<Complex64>,
    power: Vec<f64>,
    degenerate: bool,
}

impl FastContext {
    /// `nodes` and `y` must be in van der Corput order with power-of-two
    /// length. Uses [`Precision::auto`].
    pub fn new(order: u32, nodes: &NodeSet, y: &[f64]) -> Result<Self> {
        Self::with_precision(order, nodes, y, Precision::auto(y.len()))
    }

    /// Only differences `nodes[i] - nodes[0]` matter, so the nodes of the
    /// unshifted lattice give an exactly representable kernel column.
    pub fn with_precision(order: u32, nodes: &NodeSet, y: &[f64], precision: Precision) -> Result<Self> {
        if nodes.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: nodes.len(),
                got: y.len(),
            });
        }
        if y.len() < 2 {
            return Err(Error::InvalidArgument("at least two samples are required".into()));
        }
        let plan = FftPlan::with_precision(y.len(), precision)?;
        let y_tilde = plan.fbt(y)?;
        let ring = match precision {
            Precision::Double => RingFactors::new(order, nodes)?,
            Precision::Extended => RingFactors::extended(order, nodes)?,
        };
        Ok(Self::from_parts(ring, plan, y_tilde))
    }

    fn from_parts(ring: RingFactors, plan: FftPlan, y_tilde: Vec<Complex64>) -> Self {
        let power: Vec<f64> = y_tilde.iter().map(|z| z.norm_sqr()).collect();
        let degenerate = is_degenerate(&power);
        Self {
            ring,
            plan,
            y_tilde,
            power,
            degenerate,
        }
    }

    pub fn n(&self) -> usize {
        self.y_tilde.len()
    }

    pub fn order(&self) -> u32 {
        self.ring.order()
    }

    pub fn precision(&self) -> Precision {
        self.plan.precision()
    }

    pub fn y_tilde(&self) -> &[Complex64] {
        &self.y_tilde
    }

    /// True when the data carry no variation beyond the mean.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    pub fn spectrum(&self, eta: f64) -> Result<Spectrum> {
        check_eta(eta)?;
        spectrum_at(&self.ring, eta, &self.plan)
    }

    pub fn state(&self, eta: f64) -> Result<FbtState> {
        FbtState::new(self.y_tilde.clone(), self.spectrum(eta)?, eta)
    }
}

fn check_eta(eta: f64) -> Result<()> {
    if eta.is_finite() && eta > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidKernel(format!("eta must be positive, got {eta}")))
    }
}

fn is_degenerate(power: &[f64]) -> bool {
    let tail: f64 = power[1..].iter().sum();
    let total = tail + power[0];
    !(tail > DEGENERATE_RATIO * total)
}

fn weighted_tail(power: &[f64], lambda: &[f64], exponent: i32) -> f64 {
    power[1..]
        .iter()
        .zip(&lambda[1..])
        .map(|(p, l)| p / l.powi(exponent))
        .sum()
}

fn reciprocal_sum(lambda: &[f64]) -> f64 {
    lambda.iter().map(|l| 1.0 / l).sum()
}

fn mle_value(power: &[f64], lambda: &[f64]) -> f64 {
    let n = lambda.len() as f64;
    let log_det: f64 = lambda.iter().map(|l| l.ln()).sum();
    weighted_tail(power, lambda, 1).ln() + log_det / n
}

fn gcv_value(power: &[f64], lambda: &[f64]) -> f64 {
    weighted_tail(power, lambda, 2).ln() - 2.0 * reciprocal_sum(lambda).ln()
}

/// `ln Σ_{i≥2} |ỹ_i|²/λ_i + (1/n) Σ ln λ_i` at scale `eta`.
pub fn mle_objective(eta: f64, context: &FastContext) -> Result<f64> {
    if context.degenerate {
        return Err(Error::DegenerateData);
    }
    Ok(mle_value(&context.power, &context.spectrum(eta)?.lambda))
}

/// `ln Σ_{i≥2} |ỹ_i|²/λ_i² − 2 ln Σ 1/λ_i` at scale `eta`.
pub fn gcv_objective(eta: f64, context: &FastContext) -> Result<f64> {
    if context.degenerate {
        return Err(Error::DegenerateData);
    }
    Ok(gcv_value(&context.power, &context.spectrum(eta)?.lambda))
}

/// Likelihood objective from an already-built state.
pub fn mle_objective_of(state: &FbtState) -> Result<f64> {
    let power: Vec<f64> = state.y_tilde.iter().map(|z| z.norm_sqr()).collect();
    if is_degenerate(&power) {
        return Err(Error::DegenerateData);
    }
    Ok(mle_value(&power, &state.lambda))
}

/// Cross-validation objective from an already-built state.
pub fn gcv_objective_of(state: &FbtState) -> Result<f64> {
    let power: Vec<f64> = state.y_tilde.iter().map(|z| z.norm_sqr()).collect();
    if is_degenerate(&power) {
        return Err(Error::DegenerateData);
    }
    Ok(gcv_value(&power, &state.lambda))
}

/// Bounds for the kernel scale search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchInterval {
    lo: f64,
    hi: f64,
}

impl Default for SearchInterval {
    fn default() -> Self {
        Self { lo: 1e-3, hi: 1e2 }
    }
}

impl SearchInterval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "search interval needs 0 < lo < hi, got [{lo}, {hi}]"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn contains(&self, eta: f64) -> bool {
        eta >= self.lo && eta <= self.hi
    }

    /// `[center / factor, center * factor]` clipped to `self`.
    pub fn around(&self, center: f64, factor: f64) -> Self {
        let lo = (center / factor).max(self.lo);
        let hi = (center * factor).min(self.hi);
        if hi > lo {
            Self { lo, hi }
        } else {
            *self
        }
    }

    /// Whether `eta` lies within 1% of either endpoint.
    pub fn near_boundary(&self, eta: f64) -> bool {
        eta <= self.lo * 1.01 || eta >= self.hi / 1.01
    }
}

/// Settings for the golden-section search over `ln eta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerSettings {
    /// Stop once the bracket spans at most this relative change in eta.
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            rel_tol: 1e-2,
            max_iter: 50,
        }
    }
}

/// Outcome of a bounded scalar minimization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Minimum {
    pub x: f64,
    pub value: f64,
    pub iterations: usize,
}

/// Golden-section minimization of `f` on `[a, b]`, stopping when the bracket
/// is no wider than `tol` or after `max_iter` reductions.
pub fn golden_section<F>(mut f: F, a: f64, b: f64, tol: f64, max_iter: usize) -> Result<Minimum>
where
    F: FnMut(f64) -> Result<f64>,
{
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (a, b);
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    let mut iterations = 0;
    while b - a > tol && iterations < max_iter {
        iterations += 1;
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2)?;
        }
    }
    let (x, value) = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
    Ok(Minimum { x, value, iterations })
}

/// Fitted kernel scale and the resulting variance estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub eta_hat: f64,
    /// Posterior mean parameter `ỹ_1 / n`.
    pub m_hat: f64,
    /// `s²_MLE`, `σ̂²_full` or `s²_GCV` depending on the criterion.
    pub s2_hat: f64,
    pub objective_value: f64,
    pub criterion: Criterion,
    /// The minimizer sits within 1% of a search endpoint.
    pub at_boundary: bool,
    /// Constant data: the objective is undefined and the width is zero.
    pub degenerate: bool,
    pub iterations: usize,
}

/// Fits the kernel scale by the criterion's objective over `search`.
pub fn fit(criterion: Criterion, context: &FastContext, search: SearchInterval) -> Result<FitResult> {
    Ok(fit_with_state(criterion, context, search, None, OptimizerSettings::default())?.0)
}

/// As [`fit`], also returning the state at the fitted scale.
///
/// With `warm_start` the search first covers one decade either side of the
/// previous estimate and falls back to `search` if the minimizer lands on an
/// edge of that local window that is not an edge of `search`.
pub fn fit_with_state(
    criterion: Criterion,
    context: &FastContext,
    search: SearchInterval,
    warm_start: Option<f64>,
    settings: OptimizerSettings,
) -> Result<(FitResult, FbtState)> {
    let n = context.n() as f64;
    let m_hat = context.y_tilde[0].re / n;
    if context.degenerate {
        let eta = warm_start
            .filter(|&e| search.contains(e))
            .unwrap_or_else(|| (search.lo * search.hi).sqrt());
        let state = context.state(eta)?;
        let result = FitResult {
            eta_hat: eta,
            m_hat,
            s2_hat: 0.0,
            objective_value: f64::NEG_INFINITY,
            criterion,
            at_boundary: false,
            degenerate: true,
            iterations: 0,
        };
        return Ok((result, state));
    }

    let objective = |u: f64| -> Result<f64> {
        let eta = u.exp();
        if criterion.uses_gcv_objective() {
            gcv_objective(eta, context)
        } else {
            mle_objective(eta, context)
        }
    };
    let tol = settings.rel_tol.ln_1p();
    let run = |iv: SearchInterval| golden_section(objective, iv.lo.ln(), iv.hi.ln(), tol, settings.max_iter);

    let mut best = None;
    let mut iterations = 0;
    if let Some(prev) = warm_start.filter(|&e| search.contains(e)) {
        let local = search.around(prev, 10.0);
        let m = run(local)?;
        iterations += m.iterations;
        let eta = m.x.exp();
        let hits_local_edge = (local.near_boundary(eta))
            && !((eta <= local.lo * 1.01 && local.lo == search.lo)
                || (eta >= local.hi / 1.01 && local.hi == search.hi));
        if !hits_local_edge {
            best = Some(m);
        }
    }
    let m = match best {
        Some(m) => m,
        None => {
            let m = run(search)?;
            iterations += m.iterations;
            m
        }
    };

    let eta_hat = m.x.exp();
    let state = context.state(eta_hat)?;
    let est = FastEstimates::from_state(&state, &Quantile::default())?;
    let s2_hat = match criterion {
        Criterion::EmpiricalBayes => est.s2_mle,
        Criterion::FullBayes => est.sigma2_full,
        Criterion::Gcv => est.s2_gcv,
    };
    let result = FitResult {
        eta_hat,
        m_hat,
        s2_hat,
        objective_value: m.value,
        criterion,
        at_boundary: search.near_boundary(eta_hat),
        degenerate: false,
        iterations,
    };
    Ok((result, state))
}

/// Every closed-form posterior quantity available from one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FastEstimates {
    pub m_hat: f64,
    /// Posterior mean of the integral; identical to `m_hat`.
    pub mu_hat: f64,
    pub s2_mle: f64,
    pub s2_gcv: f64,
    pub sigma2_full: f64,
    pub err_mle: f64,
    pub err_full: f64,
    pub err_gcv: f64,
}

impl FastEstimates {
    pub fn from_state(state: &FbtState, quantile: &Quantile) -> Result<Self> {
        let n = state.n;
        if n < 2 {
            return Err(Error::InvalidArgument("at least two samples are required".into()));
        }
        let nf = n as f64;
        let power: Vec<f64> = state.y_tilde.iter().map(|z| z.norm_sqr()).collect();
        let tail1 = weighted_tail(&power, &state.lambda, 1);
        let tail2 = weighted_tail(&power, &state.lambda, 2);
        let recip = reciprocal_sum(&state.lambda);
        let ring = state.lambda_ring_1;
        let ratio = state.ring_ratio();
        let m_hat = state.y_tilde[0].re / nf;
        let z = quantile.normal();
        let t = quantile.student(nf - 1.0)?;
        Ok(Self {
            m_hat,
            mu_hat: m_hat,
            s2_mle: tail1 / (nf * nf),
            s2_gcv: tail2 / recip / nf,
            sigma2_full: ring * tail1 / (nf * nf * (nf - 1.0)),
            err_mle: z / nf * (ratio * tail1).sqrt(),
            err_full: t / nf * (ring / (nf - 1.0) * tail1).sqrt(),
            err_gcv: z / nf * (ratio * tail2 / (recip / nf)).sqrt(),
        })
    }

    pub fn half_width(&self, criterion: Criterion) -> f64 {
        match criterion {
            Criterion::EmpiricalBayes => self.err_mle,
            Criterion::FullBayes => self.err_full,
            Criterion::Gcv => self.err_gcv,
        }
    }
}

/// Credible-interval half-width for `criterion` at the state's scale.
pub fn credible_half_width(criterion: Criterion, state: &FbtState, quantile: &Quantile) -> Result<f64> {
    Ok(FastEstimates::from_state(state, quantile)?.half_width(criterion))
}
