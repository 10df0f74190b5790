//! Periodizing transforms and the benchmark integrands.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
pub use crate::special::{norm_cdf, norm_inv_cdf};

/// Callback signature of an integrand on the unit cube.
pub type IntegrandFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// An integrand on `[0,1]^dim` with an optional known integral.
#[derive(Clone)]
pub struct IntegrandDef {
    name: String,
    dim: usize,
    func: Arc<IntegrandFn>,
    true_value: Option<f64>,
}

impl IntegrandDef {
    pub fn new<F>(name: impl Into<String>, dim: usize, func: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            dim,
            func: Arc::new(func),
            true_value: None,
        }
    }

    pub fn with_true_value(mut self, value: f64) -> Self {
        self.true_value = Some(value);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn true_value(&self) -> Option<f64> {
        self.true_value
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.func)(x)
    }
}

impl fmt::Debug for IntegrandDef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("IntegrandDef")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("true_value", &self.true_value)
            .finish()
    }
}

/// Periodizing variable transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Transform {
    #[default]
    None,
    Baker,
    SidiC1,
    SidiC2,
}

impl Transform {
    pub const ALL: [Transform; 4] = [
        Transform::None,
        Transform::Baker,
        Transform::SidiC1,
        Transform::SidiC2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Transform::None => "none",
            Transform::Baker => "baker",
            Transform::SidiC1 => "sidi1",
            Transform::SidiC2 => "sidi2",
        }
    }

    /// Maps one coordinate, returning the new coordinate and its weight.
    #[inline]
    pub fn apply(self, x: f64) -> (f64, f64) {
        match self {
            Transform::None => (x, 1.0),
            Transform::Baker => (baker(x), 1.0),
            Transform::SidiC1 => sidi_c1(x),
            Transform::SidiC2 => sidi_c2(x),
        }
    }
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Transform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" | "identity" => Ok(Transform::None),
            "baker" | "tent" => Ok(Transform::Baker),
            "sidi1" | "sidi-c1" | "c1" => Ok(Transform::SidiC1),
            "sidi2" | "sidi-c2" | "c2" => Ok(Transform::SidiC2),
            other => Err(Error::InvalidArgument(format!(
                "unknown transform '{other}' (expected none, baker, sidi1 or sidi2)"
            ))),
        }
    }
}

/// Tent map `1 - |2x - 1|`.
#[inline]
pub fn baker(x: f64) -> f64 {
    1.0 - (2.0 * x - 1.0).abs()
}

/// Sidi's C¹ transform and its derivative.
#[inline]
pub fn sidi_c1(x: f64) -> (f64, f64) {
    let t = 2.0 * PI * x;
    let value = if t < 0.25 {
        // t - sin t by its series; the direct difference cancels near 0
        let t2 = t * t;
        let series = t
            * t2
            * (1.0 / 6.0
                - t2 * (1.0 / 120.0 - t2 * (1.0 / 5040.0 - t2 * (1.0 / 362_880.0 - t2 / 39_916_800.0))));
        series / (2.0 * PI)
    } else {
        x - t.sin() / (2.0 * PI)
    };
    let s = (PI * x).sin();
    (value, 2.0 * s * s)
}

/// Sidi's C² transform and its derivative.
#[inline]
pub fn sidi_c2(x: f64) -> (f64, f64) {
    let half = (0.5 * PI * x).sin();
    let h2 = half * half;
    let value = h2 * h2 * (2.0 + (PI * x).cos());
    let s = (PI * x).sin();
    (value, 0.75 * PI * s * s * s)
}

/// Composes `f` with a coordinatewise transform so the integral is unchanged.
pub fn periodize(f: &IntegrandDef, kind: Transform) -> IntegrandDef {
    if kind == Transform::None {
        return f.clone();
    }
    let inner = f.clone();
    let dim = f.dim();
    let mut out = IntegrandDef::new(format!("{}+{}", f.name(), kind), dim, move |x: &[f64]| {
        with_buffer(x.len(), |buf| {
            let mut weight = 1.0;
            for (b, &xi) in buf.iter_mut().zip(x) {
                let (v, w) = kind.apply(xi);
                *b = v;
                weight *= w;
            }
            if weight == 0.0 {
                return 0.0;
            }
            inner.eval(buf) * weight
        })
    });
    out.true_value = f.true_value();
    out
}

const STACK_DIM: usize = 32;

#[inline]
fn with_buffer<T>(len: usize, body: impl FnOnce(&mut [f64]) -> T) -> T {
    if len <= STACK_DIM {
        let mut buf = [0.0; STACK_DIM];
        body(&mut buf[..len])
    } else {
        let mut buf = vec![0.0; len];
        body(&mut buf)
    }
}

// Keeps the inverse CDF finite at the cube boundary.
#[inline]
fn inv_cdf_interior(p: f64) -> f64 {
    norm_inv_cdf(p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0))
}

/// Gaussian box probability `P(a < X < b)` with `X ~ N(0, L Lᵀ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MvnProblem {
    lower: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl MvnProblem {
    /// `factor` is the lower-triangular Cholesky factor, row-major.
    pub fn new(a: Vec<f64>, b: Vec<f64>, factor: Vec<Vec<f64>>) -> Result<Self> {
        let d = a.len();
        if d == 0 {
            return Err(Error::InvalidArgument("empty bound vectors".into()));
        }
        if b.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: b.len(),
            });
        }
        if factor.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: factor.len(),
            });
        }
        for (j, (&lo, &hi)) in a.iter().zip(&b).enumerate() {
            if lo.is_nan() || hi.is_nan() || lo >= hi {
                return Err(Error::InvalidArgument(format!(
                    "bound {j}: need a < b, got ({lo}, {hi})"
                )));
            }
        }
        let mut lower = vec![0.0; d * d];
        for (j, row) in factor.iter().enumerate() {
            if row.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: row.len(),
                });
            }
            for (k, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::InvalidArgument(format!(
                        "factor entry ({j}, {k}) is not finite"
                    )));
                }
                if k > j && v != 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "factor must be lower triangular, entry ({j}, {k}) = {v}"
                    )));
                }
                lower[j * d + k] = v;
            }
            if !(row[j] > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "factor diagonal entry {j} must be positive, got {}",
                    row[j]
                )));
            }
        }
        Ok(Self { lower, a, b })
    }

    /// The three-dimensional benchmark: bounds (-6,-2,-2) to (5,2,1).
    pub fn benchmark() -> Self {
        Self::new(
            vec![-6.0, -2.0, -2.0],
            vec![5.0, 2.0, 1.0],
            vec![vec![4.0, 0.0, 0.0], vec![1.0, 1.0, 0.0], vec![1.0, 0.5, 0.25]],
        )
        .expect("benchmark problem is valid")
    }

    /// Dimension of the Gaussian vector.
    pub fn dim(&self) -> usize {
        self.a.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    /// Evaluates the sequential conditioning product at `x` in `[0,1]^(dim-1)`.
    pub fn genz_value(&self, x: &[f64]) -> f64 {
        let d = self.dim();
        with_buffer(d, |w| {
            let mut prod = 1.0;
            for j in 0..d {
                let row = &self.lower[j * d..j * d + j];
                let s: f64 = row.iter().zip(w.iter()).map(|(l, wk)| l * wk).sum();
                let ljj = self.lower[j * d + j];
                let lo = bound_cdf(self.a[j], s, ljj);
                let hi = bound_cdf(self.b[j], s, ljj);
                let width = hi - lo;
                if width <= 0.0 {
                    return 0.0;
                }
                prod *= width;
                if j + 1 < d {
                    w[j] = inv_cdf_interior(lo + x[j] * width);
                }
            }
            prod
        })
    }
}

#[inline]
fn bound_cdf(bound: f64, shift: f64, scale: f64) -> f64 {
    if bound == f64::NEG_INFINITY {
        0.0
    } else if bound == f64::INFINITY {
        1.0
    } else {
        norm_cdf((bound - shift) / scale)
    }
}

/// Genz's sequential transformation of a Gaussian box probability to `[0,1]^(d'-1)`.
pub fn genz_mvn(problem: MvnProblem) -> IntegrandDef {
    let dim = problem.dim() - 1;
    IntegrandDef::new("mvn", dim, move |x: &[f64]| problem.genz_value(x))
}

/// The integrand on `[0,1]^d` whose integral equals `∫ cos‖t‖ exp(-‖t‖²) dt` over `ℝ^d`.
pub fn keister(d: usize) -> IntegrandDef {
    let scale = PI.powf(0.5 * d as f64);
    IntegrandDef::new("keister", d, move |x: &[f64]| {
        let r2: f64 = x
            .iter()
            .map(|&xi| {
                let z = inv_cdf_interior(xi);
                z * z
            })
            .sum();
        scale * (r2.sqrt() * FRAC_1_SQRT_2).cos()
    })
    .with_true_value(keister_true(d))
}

/// Exact Keister integral by the radial moment recursion.
pub fn keister_true(d: usize) -> f64 {
    assert!(d >= 1, "dimension must be positive");
    // radial moments of cos and sin against exp(-r²)
    let mut ic = vec![0.0; d + 1];
    let mut is = vec![0.0; d + 1];
    ic[1] = PI.sqrt() / (2.0 * 0.25f64.exp());
    is[1] = 0.424_436_383_502_022_5;
    if d >= 2 {
        ic[2] = (1.0 - is[1]) / 2.0;
        is[2] = ic[1] / 2.0;
    }
    for j in 3..=d {
        let k = (j - 2) as f64;
        ic[j] = (k * ic[j - 2] - is[j - 1]) / 2.0;
        is[j] = (k * is[j - 2] + ic[j - 1]) / 2.0;
    }
    let half = 0.5 * d as f64;
    2.0 * PI.powf(half) * ic[d] / gamma(half)
}

/// Arithmetic-average Asian call under geometric Brownian motion.
#[derive(Debug, Clone, PartialEq)]
pub struct OptionProblem {
    pub maturity: f64,
    pub steps: usize,
    pub spot: f64,
    pub rate: f64,
    pub volatility: f64,
    pub strike: f64,
    factor: Vec<f64>,
}

impl OptionProblem {
    pub fn new(
        maturity: f64,
        steps: usize,
        spot: f64,
        rate: f64,
        volatility: f64,
        strike: f64,
    ) -> Result<Self> {
        let finite = [maturity, spot, rate, volatility, strike]
            .iter()
            .all(|v| v.is_finite());
        if !finite || maturity <= 0.0 || spot <= 0.0 || volatility < 0.0 || strike < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "option parameters out of range: T={maturity}, S0={spot}, R={rate}, \
                 sigma={volatility}, K={strike}"
            )));
        }
        if steps == 0 {
            return Err(Error::InvalidArgument("need at least one time step".into()));
        }
        let factor = pca_factor(&brownian_covariance(maturity, steps));
        Ok(Self {
            maturity,
            steps,
            spot,
            rate,
            volatility,
            strike,
            factor,
        })
    }

    /// Benchmark parameters: T = 1/4, S0 = 100, R = 0.05, sigma = 0.5, K = 100.
    pub fn benchmark(steps: usize) -> Result<Self> {
        Self::new(0.25, steps, 100.0, 0.05, 0.5, 100.0)
    }

    /// Row-major factor `L` with `L Lᵀ = Σ`.
    pub fn factor(&self) -> &[f64] {
        &self.factor
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        brownian_covariance(self.maturity, self.steps)
    }

    /// Discounted payoff for a standard normal vector `w` driving the path `L w`.
    pub fn payoff(&self, w: &[f64]) -> f64 {
        let d = self.steps;
        let dt = self.maturity / d as f64;
        let drift = self.rate - 0.5 * self.volatility * self.volatility;
        let mut total = 0.0;
        for j in 0..d {
            let row = &self.factor[j * d..(j + 1) * d];
            let z: f64 = row.iter().zip(w).map(|(l, wk)| l * wk).sum();
            total += (drift * (j + 1) as f64 * dt + self.volatility * z).exp();
        }
        let average = self.spot * total / d as f64;
        (average - self.strike).max(0.0) * (-self.rate * self.maturity).exp()
    }
}

fn brownian_covariance(maturity: f64, steps: usize) -> DMatrix<f64> {
    let dt = maturity / steps as f64;
    DMatrix::from_fn(steps, steps, |j, k| dt * (j.min(k) + 1) as f64)
}

// Eigenvectors scaled by root eigenvalues, largest first, each column signed
// so its first nonzero entry is positive.
fn pca_factor(cov: &DMatrix<f64>) -> Vec<f64> {
    let d = cov.nrows();
    let eig = SymmetricEigen::new(cov.clone());
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut factor = vec![0.0; d * d];
    for (col, &k) in order.iter().enumerate() {
        let v = eig.eigenvectors.column(k);
        let sign = v.iter().find(|x| x.abs() > 1e-12).map_or(1.0, |x| x.signum());
        let root = eig.eigenvalues[k].max(0.0).sqrt();
        for j in 0..d {
            factor[j * d + col] = sign * v[j] * root;
        }
    }
    factor
}

/// The option payoff as an integrand on `[0,1]^steps`.
pub fn asian_option(problem: OptionProblem) -> IntegrandDef {
    let d = problem.steps;
    IntegrandDef::new("option", d, move |x: &[f64]| {
        with_buffer(x.len(), |w| {
            for (wk, &xk) in w.iter_mut().zip(x) {
                *wk = inv_cdf_interior(xk);
            }
            problem.payoff(w)
        })
    })
}

/// Frozen high-sample-size estimate of the benchmark Gaussian probability.
pub const MVN_REFERENCE: f64 = 0.676_337_324_357_921_6;

/// Frozen high-sample-size estimate of the benchmark option price with 13 steps.
pub const OPTION_REFERENCE: f64 = 6.369_737_647_451_658;

/// Names accepted by [`built_in`].
pub const BUILT_IN_NAMES: [&str; 3] = ["mvn", "keister", "option"];

/// A registered benchmark with its customary transform and kernel order.
#[derive(Debug, Clone)]
pub struct BuiltIn {
    pub integrand: IntegrandDef,
    pub transform: Transform,
    pub order: u32,
}

/// Looks up a benchmark integrand by name. `dim` overrides the default dimension.
pub fn built_in(name: &str, dim: Option<usize>) -> Result<BuiltIn> {
    match name {
        "mvn" => {
            let problem = MvnProblem::benchmark();
            let native = problem.dim() - 1;
            if let Some(d) = dim {
                if d != native {
                    return Err(Error::InvalidArgument(format!(
                        "the mvn benchmark is {native}-dimensional, got --dim {d}"
                    )));
                }
            }
            let integrand = genz_mvn(problem).with_true_value(MVN_REFERENCE);
            Ok(BuiltIn {
                integrand,
                transform: Transform::SidiC2,
                order: 2,
            })
        }
        "keister" => {
            let d = dim.unwrap_or(4);
            if d == 0 {
                return Err(Error::InvalidArgument("dimension must be positive".into()));
            }
            Ok(BuiltIn {
                integrand: keister(d),
                transform: Transform::SidiC1,
                order: 2,
            })
        }
        "option" => {
            let d = dim.unwrap_or(13);
            let mut integrand = asian_option(OptionProblem::benchmark(d)?);
            if d == 13 {
                integrand = integrand.with_true_value(OPTION_REFERENCE);
            }
            Ok(BuiltIn {
                integrand,
                transform: Transform::Baker,
                order: 1,
            })
        }
        other => Err(Error::InvalidArgument(format!(
            "unknown integrand '{other}' (expected one of {})",
            BUILT_IN_NAMES.join(", ")
        ))),
    }
}
