//! Covariance kernels.
//!
//! Two families are provided:
//!
//! * the shift-invariant product kernel
//!   `C(t, x) = prod_l [1 - (-1)^r eta B_2r(frac(t_l - x_l))]` built from even
//!   Bernoulli polynomials, which pairs with lattice nodes for the fast path;
//! * the Matérn (smoothness 3/2) product kernel
//!   `prod_l exp(-theta |t_l - x_l|) (1 + theta |t_l - x_l|)`, used by the
//!   generic dense path.
//!
//! The Bernoulli kernel integrates to one in each argument, so the posterior
//! mean weights reduce to the sample mean. Its centered part `C - 1` is
//! evaluated through a product recursion that never subtracts one, which keeps
//! full relative accuracy when `eta` is small.

use twofloat::TwoFloat;

use crate::error::{Error, Result};
use crate::lattice::NodeSet;

/// Which covariance family a [`KernelSpec`] belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFamily {
    /// Bernoulli-polynomial shift-invariant kernel of order `r` (degree `2r`).
    ShiftInvariantBernoulli {
        order: u32,
    },
    Matern,
}

/// A kernel family together with its scale hyperparameter (`eta` for the
/// Bernoulli family, `theta` for Matérn).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    family: KernelFamily,
    scale: f64,
}

impl KernelSpec {
    pub fn bernoulli(order: u32, eta: f64) -> Result<Self> {
        if !(1..=2).contains(&order) {
            return Err(Error::InvalidKernel(format!(
                "Bernoulli kernel order must be 1 or 2, got {order}"
            )));
        }
        check_scale("eta", eta)?;
        Ok(Self {
            family: KernelFamily::ShiftInvariantBernoulli { order },
            scale: eta,
        })
    }

    pub fn matern(theta: f64) -> Result<Self> {
        check_scale("theta", theta)?;
        Ok(Self {
            family: KernelFamily::Matern,
            scale: theta,
        })
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    /// `eta` or `theta`.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Bernoulli order `r`, if this is a shift-invariant kernel.
    pub fn order(&self) -> Option<u32> {
        match self.family {
            KernelFamily::ShiftInvariantBernoulli { order } => Some(order),
            KernelFamily::Matern => None,
        }
    }

    pub fn is_shift_invariant(&self) -> bool {
        self.order().is_some()
    }

    /// Same family with a different scale.
    pub fn with_scale(&self, scale: f64) -> Result<Self> {
        check_scale("kernel scale", scale)?;
        Ok(Self {
            family: self.family,
            scale,
        })
    }
}

fn check_scale(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidKernel(format!("{name} must be positive, got {v}")))
    }
}

/// Bernoulli polynomial `B_2(x)` or `B_4(x)`.
pub fn bernoulli_poly(degree: u32, x: f64) -> Result<f64> {
    match degree {
        2 => Ok(b2(x)),
        4 => Ok(b4(x)),
        d => Err(Error::UnsupportedDegree(d)),
    }
}

#[inline]
fn b2(x: f64) -> f64 {
    x * x - x + 1.0 / 6.0
}

#[inline]
fn b4(x: f64) -> f64 {
    let x2 = x * x;
    x2 * (x2 - 2.0 * x + 1.0) - 1.0 / 30.0
}

/// `frac(t - x)` for `t, x` in `[0, 1]`.
#[inline]
pub(crate) fn wrap_difference(t: f64, x: f64) -> f64 {
    let u = t - x;
    if u < 0.0 {
        u + 1.0
    } else {
        u
    }
}

/// One-dimensional factor of the centered Bernoulli kernel,
/// `-(-1)^r B_2r(u)` (without the `eta` scale).
#[inline]
pub(crate) fn ring_factor(order: u32, u: f64) -> f64 {
    if order == 1 {
        b2(u)
    } else {
        -b4(u)
    }
}

/// [`ring_factor`] in double-double arithmetic.
pub(crate) fn ring_factor_dd(order: u32, u: f64) -> TwoFloat {
    let u = TwoFloat::from(u);
    // x^2 - x, exact in f64 whenever u lies on a 2^-26 grid
    let w = u * u - u;
    if order == 1 {
        w + TwoFloat::from(1.0) / 6.0
    } else {
        TwoFloat::from(1.0) / 30.0 - w * w
    }
}

#[inline]
fn matern_1d(theta: f64, dist: f64) -> f64 {
    let v = theta * dist;
    (-v).exp() * (1.0 + v)
}

fn check_dims(t: &[f64], x: &[f64]) -> Result<()> {
    if t.len() != x.len() || t.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: t.len(),
            got: x.len(),
        });
    }
    Ok(())
}

/// Evaluates the kernel at a pair of points.
pub fn kernel_eval(spec: &KernelSpec, t: &[f64], x: &[f64]) -> Result<f64> {
    check_dims(t, x)?;
    Ok(match spec.family {
        KernelFamily::ShiftInvariantBernoulli { order } => t
            .iter()
            .zip(x)
            .map(|(&tl, &xl)| 1.0 + spec.scale * ring_factor(order, wrap_difference(tl, xl)))
            .product(),
        KernelFamily::Matern => t
            .iter()
            .zip(x)
            .map(|(&tl, &xl)| matern_1d(spec.scale, (tl - xl).abs()))
            .product(),
    })
}

/// Centered kernel `C(t, x) - 1` for the Bernoulli family, accumulated as
/// `acc <- acc (1 + c_l) + c_l` over dimensions.
pub fn centered_kernel_eval(spec: &KernelSpec, t: &[f64], x: &[f64]) -> Result<f64> {
    check_dims(t, x)?;
    let order = spec
        .order()
        .ok_or_else(|| Error::InvalidKernel("centered form requires a shift-invariant kernel".into()))?;
    Ok(centered_product(t.iter().zip(x).map(|(&tl, &xl)| {
        spec.scale * ring_factor(order, wrap_difference(tl, xl))
    })))
}

#[inline]
fn centered_product(mut factors: impl Iterator<Item = f64>) -> f64 {
    let Some(mut acc) = factors.next() else {
        return 0.0;
    };
    for c in factors {
        acc = acc * (1.0 + c) + c;
    }
    acc
}

/// First column of the centered Gram matrix, `C(x_i, x_1) - 1`.
pub fn centered_first_column(spec: &KernelSpec, nodes: &NodeSet) -> Result<Vec<f64>> {
    let order = spec.order().ok_or_else(|| {
        Error::InvalidKernel("centered first column requires a shift-invariant kernel".into())
    })?;
    Ok(RingFactors::new(order, nodes)?.column(spec.scale))
}

/// Per-dimension Bernoulli factors `-(-1)^r B_2r(frac(x_il - x_1l))` of the
/// first Gram column. They do not depend on `eta`, so an `eta` search can
/// reuse them and pay only `O(n d)` multiplications per candidate.
///
/// The extended variant also keeps the factors in double-double so that the
/// column, and in particular its sum, can be formed without the cancellation
/// that limits `f64` at small `eta`.
#[derive(Debug, Clone)]
pub struct RingFactors {
    order: u32,
    dim: usize,
    factors: Vec<f64>,
    factors_dd: Option<Vec<TwoFloat>>,
}

impl RingFactors {
    pub fn new(order: u32, nodes: &NodeSet) -> Result<Self> {
        Self::build(order, nodes, false)
    }

    /// As [`RingFactors::new`], with double-double factors as well.
    pub fn extended(order: u32, nodes: &NodeSet) -> Result<Self> {
        Self::build(order, nodes, true)
    }

    fn build(order: u32, nodes: &NodeSet, extended: bool) -> Result<Self> {
        if !(1..=2).contains(&order) {
            return Err(Error::InvalidKernel(format!("unsupported order {order}")));
        }
        if nodes.is_empty() {
            return Err(Error::InvalidArgument("empty node set".into()));
        }
        let first = nodes.point(0);
        let diffs: Vec<f64> = nodes
            .iter()
            .flat_map(|p| p.iter().zip(first).map(|(&t, &x)| wrap_difference(t, x)))
            .collect();
        let factors = diffs.iter().map(|&u| ring_factor(order, u)).collect();
        let factors_dd = extended.then(|| diffs.iter().map(|&u| ring_factor_dd(order, u)).collect());
        Ok(Self {
            order,
            dim: nodes.dim(),
            factors,
            factors_dd,
        })
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn len(&self) -> usize {
        self.factors.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn is_extended(&self) -> bool {
        self.factors_dd.is_some()
    }

    /// Centered first column at scale `eta`.
    pub fn column(&self, eta: f64) -> Vec<f64> {
        self.factors
            .chunks_exact(self.dim)
            .map(|row| centered_product(row.iter().map(|&b| eta * b)))
            .collect()
    }

    /// Centered first column in double-double, if the factors were kept.
    pub fn column_extended(&self, eta: f64) -> Option<Vec<TwoFloat>> {
        let eta = TwoFloat::from(eta);
        let one = TwoFloat::from(1.0);
        self.factors_dd.as_ref().map(|f| {
            f.chunks_exact(self.dim)
                .map(|row| {
                    let mut acc = eta * row[0];
                    for &b in &row[1..] {
                        let c = eta * b;
                        acc = acc * (one + c) + c;
                    }
                    acc
                })
                .collect()
        })
    }
}

/// Kernel mean integrals `c0 = ∫∫ C` and `c(x) = ∫ C(t, x) dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelMeans {
    spec: KernelSpec,
    c0: f64,
}

impl KernelMeans {
    pub fn c0(&self) -> f64 {
        self.c0
    }

    /// `c(x)`.
    pub fn c(&self, x: &[f64]) -> f64 {
        match self.spec.family {
            KernelFamily::ShiftInvariantBernoulli { .. } => 1.0,
            KernelFamily::Matern => x.iter().map(|&xl| matern_mean_1d(self.spec.scale, xl)).product(),
        }
    }
}

/// Closed-form kernel mean integrals for `spec` over `[0,1]^d`.
///
/// The Bernoulli family has `c0 = 1` and `c = 1` because every `B_2r`
/// integrates to zero over a period. For Matérn the one-dimensional integrals
/// follow from the antiderivative `-(2 + theta u) exp(-theta u) / theta` of
/// `exp(-theta u) (1 + theta u)`.
pub fn kernel_mean_integrals(spec: &KernelSpec, dim: usize) -> KernelMeans {
    let c0 = match spec.family {
        KernelFamily::ShiftInvariantBernoulli { .. } => 1.0,
        KernelFamily::Matern => matern_c0_1d(spec.scale).powi(dim as i32),
    };
    KernelMeans { spec: *spec, c0 }
}

/// `∫_0^a exp(-theta u)(1 + theta u) du`.
fn matern_partial(theta: f64, a: f64) -> f64 {
    let v = theta * a;
    // 2 - exp(-v)(2 + v), rearranged to avoid cancellation for small v
    (-2.0 * (-v).exp_m1() - v * (-v).exp()) / theta
}

fn matern_mean_1d(theta: f64, x: f64) -> f64 {
    matern_partial(theta, x) + matern_partial(theta, 1.0 - x)
}

fn matern_c0_1d(theta: f64) -> f64 {
    // 2 ∫_0^1 G(a) da with G = matern_partial
    let inner = (-3.0 * (-theta).exp_m1() - theta * (-theta).exp()) / theta;
    2.0 / theta * (2.0 - inner)
}
