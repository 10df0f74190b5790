//! Dense Bayesian cubature through a Cholesky factor of the Gram matrix.
//!
//! This path works with any kernel whose mean integrals are known and costs
//! `O(n^3)` per kernel parameter. It also serves as the reference for the fast
//! path: instantiated with [`DoubleDouble`] and the Bernoulli kernel, the Gram
//! matrix is stored as `1 + C̊` without rounding the small centered part away.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use nalgebra::{DMatrix, SymmetricEigen};
use twofloat::TwoFloat;

use crate::error::{Error, Result};
use crate::inference::Quantile;
use crate::kernel::{
    kernel_eval, kernel_mean_integrals, ring_factor, ring_factor_dd, wrap_difference, KernelSpec,
};
use crate::lattice::NodeSet;

/// Real arithmetic used by the dense algebra.
pub trait Scalar:
    Copy
    + Debug
    + PartialOrd
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn sqrt(self) -> Self;
    /// Centered Bernoulli factor at `u`, evaluated in this precision.
    fn ring_factor(order: u32, u: f64) -> Self;

    fn zero() -> Self {
        Self::from_f64(0.0)
    }

    fn one() -> Self {
        Self::from_f64(1.0)
    }

    fn abs(self) -> Self {
        if self < Self::zero() {
            -self
        } else {
            self
        }
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }

    fn to_f64(self) -> f64 {
        self
    }

    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }

    fn ring_factor(order: u32, u: f64) -> Self {
        ring_factor(order, u)
    }
}

/// Double-double scalar.
///
/// Wraps [`TwoFloat`] for its addition, multiplication and square root, and
/// replaces its division, whose correction step loses the low word.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct DoubleDouble(pub TwoFloat);

impl Add for DoubleDouble {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self(self.0 + o.0)
    }
}

impl Sub for DoubleDouble {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self(self.0 - o.0)
    }
}

impl Mul for DoubleDouble {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Self(self.0 * o.0)
    }
}

impl Neg for DoubleDouble {
    type Output = Self;
    fn neg(self) -> Self {
        Self(-self.0)
    }
}

impl Div for DoubleDouble {
    type Output = Self;
    /// Three-term long division.
    fn div(self, o: Self) -> Self {
        let (a, b) = (self.0, o.0);
        let q1 = a.hi() / b.hi();
        let r = a - b * q1;
        let q2 = r.hi() / b.hi();
        let r = r - b * q2;
        let q3 = r.hi() / b.hi();
        Self(TwoFloat::from(q1) + q2 + q3)
    }
}

impl Scalar for DoubleDouble {
    fn from_f64(v: f64) -> Self {
        Self(TwoFloat::from(v))
    }

    fn to_f64(self) -> f64 {
        self.0.hi() + self.0.lo()
    }

    fn sqrt(self) -> Self {
        Self(self.0.sqrt())
    }

    fn ring_factor(order: u32, u: f64) -> Self {
        Self(ring_factor_dd(order, u))
    }
}

fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter().zip(b).fold(S::zero(), |acc, (&x, &y)| acc + x * y)
}

fn total<S: Scalar>(a: &[S]) -> S {
    a.iter().fold(S::zero(), |acc, &x| acc + x)
}

/// Builds the Gram matrix (row-major) for `spec` on `nodes`.
///
/// Shift-invariant kernels are assembled as `1 + C̊(x_i, x_j)` with the
/// centered part evaluated entirely in `S`.
pub fn gram_matrix<S: Scalar>(spec: &KernelSpec, nodes: &NodeSet) -> Result<Vec<S>> {
    let n = nodes.len();
    let mut gram = vec![S::zero(); n * n];
    let eta = S::from_f64(spec.scale());
    for i in 0..n {
        for j in 0..=i {
            let v = if let Some(order) = spec.order() {
                let mut acc = S::zero();
                for (&t, &x) in nodes.point(i).iter().zip(nodes.point(j)) {
                    let c = eta * S::ring_factor(order, wrap_difference(t, x));
                    acc = acc * (S::one() + c) + c;
                }
                S::one() + acc
            } else {
                S::from_f64(kernel_eval(spec, nodes.point(i), nodes.point(j))?)
            };
            gram[i * n + j] = v;
            gram[j * n + i] = v;
        }
    }
    Ok(gram)
}

/// A factorized Gram matrix together with the kernel mean integrals.
#[derive(Debug, Clone)]
pub struct DensePosterior<S: Scalar> {
    n: usize,
    gram: Vec<S>,
    chol: Vec<S>,
    c_vec: Vec<S>,
    c0: S,
    logdet: f64,
    param: f64,
}

impl<S: Scalar> DensePosterior<S> {
    /// Factorizes the Gram matrix of `spec` on `nodes`, adding `jitter` to
    /// the diagonal.
    pub fn new(spec: &KernelSpec, nodes: &NodeSet, jitter: f64) -> Result<Self> {
        let means = kernel_mean_integrals(spec, nodes.dim());
        let c_vec = nodes.iter().map(|x| S::from_f64(means.c(x))).collect();
        let gram = gram_matrix(spec, nodes)?;
        Self::from_parts(gram, c_vec, S::from_f64(means.c0()), spec.scale(), jitter)
    }

    /// From an explicit row-major Gram matrix. `param` is only used in
    /// error reports.
    pub fn from_parts(mut gram: Vec<S>, c_vec: Vec<S>, c0: S, param: f64, jitter: f64) -> Result<Self> {
        let n = c_vec.len();
        if gram.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                got: gram.len(),
            });
        }
        if n == 0 {
            return Err(Error::InvalidArgument("empty Gram matrix".into()));
        }
        if jitter != 0.0 {
            for i in 0..n {
                gram[i * n + i] = gram[i * n + i] + S::from_f64(jitter);
            }
        }
        let chol = cholesky(&gram, n).ok_or(Error::CholeskyFailure { n, param })?;
        let logdet = 2.0 * (0..n).map(|i| chol[i * n + i].to_f64().ln()).sum::<f64>();
        Ok(Self {
            n,
            gram,
            chol,
            c_vec,
            c0,
            logdet,
            param,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn gram(&self) -> &[S] {
        &self.gram
    }

    pub fn c_vec(&self) -> &[S] {
        &self.c_vec
    }

    pub fn c0(&self) -> S {
        self.c0
    }

    /// `ln det C`.
    pub fn logdet(&self) -> f64 {
        self.logdet
    }

    pub fn param(&self) -> f64 {
        self.param
    }

    /// Lower Cholesky factor, row-major.
    pub fn factor(&self) -> &[S] {
        &self.chol
    }

    /// `L^{-1} b`.
    pub fn forward(&self, b: &[S]) -> Vec<S> {
        let n = self.n;
        let mut x = b.to_vec();
        for i in 0..n {
            let row = &self.chol[i * n..i * n + i];
            x[i] = (x[i] - dot(row, &x[..i])) / self.chol[i * n + i];
        }
        x
    }

    /// `L^{-T} b`.
    pub fn backward(&self, b: &[S]) -> Vec<S> {
        let n = self.n;
        let mut x = b.to_vec();
        for i in (0..n).rev() {
            x[i] = x[i] / self.chol[i * n + i];
            let xi = x[i];
            for (xk, &l) in x[..i].iter_mut().zip(&self.chol[i * n..i * n + i]) {
                *xk = *xk - l * xi;
            }
        }
        x
    }

    /// `C b`.
    pub fn gram_times(&self, b: &[S]) -> Vec<S> {
        self.gram.chunks_exact(self.n).map(|row| dot(row, b)).collect()
    }

    /// `C^{-1} b`.
    pub fn solve(&self, b: &[S]) -> Vec<S> {
        self.backward(&self.forward(b))
    }

    /// `trace(C^{-1}) = ||L^{-1}||_F^2`.
    pub fn trace_inverse(&self) -> S {
        let n = self.n;
        let mut acc = S::zero();
        let mut col = vec![S::zero(); n];
        for j in 0..n {
            col.iter_mut().for_each(|v| *v = S::zero());
            col[j] = S::one() / self.chol[j * n + j];
            acc = acc + col[j] * col[j];
            for i in j + 1..n {
                let row = &self.chol[i * n + j..i * n + i];
                let s = dot(row, &col[j..i]);
                col[i] = -s / self.chol[i * n + i];
                acc = acc + col[i] * col[i];
            }
        }
        acc
    }

    fn check_data(&self, y: &[f64]) -> Result<Vec<S>> {
        if y.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: y.len(),
            });
        }
        Ok(y.iter().map(|&v| S::from_f64(v)).collect())
    }
}

/// In-place style lower Cholesky factor of a row-major SPD matrix.
fn cholesky<S: Scalar>(a: &[S], n: usize) -> Option<Vec<S>> {
    let mut l = vec![S::zero(); n * n];
    for i in 0..n {
        for j in 0..=i {
            let s = dot(&l[i * n..i * n + j], &l[j * n..j * n + j]);
            let v = a[i * n + j] - s;
            if i == j {
                if !(v > S::zero()) {
                    return None;
                }
                l[i * n + i] = v.sqrt();
            } else {
                l[i * n + j] = v / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// All posterior quantities of the dense path, in `f64`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DenseEstimates {
    pub m_mle: f64,
    pub m_gcv: f64,
    pub s2_mle: f64,
    pub sigma2_full: f64,
    pub s2_gcv: f64,
    pub mu_mle: f64,
    pub mu_gcv: f64,
    /// `c0 - c^T C^{-1} c`.
    pub posterior_var_factor: f64,
    pub err_mle: f64,
    pub err_full: f64,
    pub err_gcv: f64,
}

/// Evaluates every estimator from the factorized posterior and data `y`.
pub fn dense_estimators<S: Scalar>(
    posterior: &DensePosterior<S>,
    y: &[f64],
    quantile: &Quantile,
) -> Result<DenseEstimates> {
    let n = posterior.n;
    let ys = posterior.check_data(y)?;
    let ones = vec![S::one(); n];
    let a = posterior.solve(&ones);
    let b = posterior.solve(&ys);
    let g = posterior.solve(&posterior.c_vec);
    let one_a = total(&a);
    let one_b = total(&b);
    let c_b = dot(&posterior.c_vec, &b);
    // Forms stationary in the solve error: first-order errors in a and g
    // cancel, which matters when these nearly cancel against c0 or 1.
    let ca = posterior.gram_times(&a);
    let cg = posterior.gram_times(&g);
    let v = posterior.c0 - S::from_f64(2.0) * dot(&posterior.c_vec, &g) + dot(&g, &cg);
    let c_a = dot(&posterior.c_vec, &a) + total(&g) - dot(&g, &ca);
    let one_g = c_a;
    let m_mle = one_b / one_a;
    let a_b = dot(&a, &b);
    let a_a = dot(&a, &a);
    let m_gcv = a_b / a_a;
    let quad = dot(&ys, &b) - one_b * one_b / one_a;
    let quad_gcv = dot(&b, &b) - a_b * a_b / a_a;
    let trace_inv = posterior.trace_inverse();
    let nf = S::from_f64(n as f64);
    let s2_mle = quad / nf;
    let s2_gcv = quad_gcv / trace_inv;
    let free = S::one() - c_a;
    let sigma2_full = if n > 1 {
        quad / S::from_f64(n as f64 - 1.0) * (free * free / one_a + v)
    } else {
        S::zero()
    };
    let weight = S::one() - one_g;
    let mu_mle = weight * m_mle + c_b;
    let mu_gcv = weight * m_gcv + c_b;
    let z = quantile.normal();
    let t = if n > 1 {
        quantile.student(n as f64 - 1.0)?
    } else {
        f64::NAN
    };
    let vf = v.to_f64().max(0.0);
    Ok(DenseEstimates {
        m_mle: m_mle.to_f64(),
        m_gcv: m_gcv.to_f64(),
        s2_mle: s2_mle.to_f64(),
        sigma2_full: sigma2_full.to_f64(),
        s2_gcv: s2_gcv.to_f64(),
        mu_mle: mu_mle.to_f64(),
        mu_gcv: mu_gcv.to_f64(),
        posterior_var_factor: v.to_f64(),
        err_mle: z * (s2_mle.to_f64().max(0.0) * vf).sqrt(),
        err_full: t * sigma2_full.to_f64().max(0.0).sqrt(),
        err_gcv: z * (s2_gcv.to_f64().max(0.0) * vf).sqrt(),
    })
}

/// Likelihood objective `ln(y^T [C^{-1} - C^{-1}11^T C^{-1}/(1^T C^{-1} 1)] y) + ln det(C) / n`.
pub fn dense_mle_objective<S: Scalar>(posterior: &DensePosterior<S>, y: &[f64]) -> Result<f64> {
    let ys = posterior.check_data(y)?;
    let ones = vec![S::one(); posterior.n];
    let a = posterior.solve(&ones);
    let b = posterior.solve(&ys);
    let one_b = total(&b);
    let quad = dot(&ys, &b) - one_b * one_b / total(&a);
    let q = quad.to_f64();
    if posterior.n < 2 || !(q > 0.0) {
        return Err(Error::DegenerateData);
    }
    Ok(q.ln() + posterior.logdet / posterior.n as f64)
}

/// Cross-validation objective `ln(y^T [C^{-2} - C^{-2}11^T C^{-2}/(1^T C^{-2} 1)] y) - 2 ln trace(C^{-1})`.
pub fn dense_gcv_objective<S: Scalar>(posterior: &DensePosterior<S>, y: &[f64]) -> Result<f64> {
    let ys = posterior.check_data(y)?;
    let ones = vec![S::one(); posterior.n];
    let a = posterior.solve(&ones);
    let b = posterior.solve(&ys);
    let a_b = dot(&a, &b);
    let quad = dot(&b, &b) - a_b * a_b / dot(&a, &a);
    let q = quad.to_f64();
    if posterior.n < 2 || !(q > 0.0) {
        return Err(Error::DegenerateData);
    }
    Ok(q.ln() - 2.0 * posterior.trace_inverse().to_f64().ln())
}

/// Both objectives for `spec` on `(nodes, y)`, computed in `S`.
pub fn dense_theta_objectives<S: Scalar>(
    spec: &KernelSpec,
    nodes: &NodeSet,
    y: &[f64],
) -> Result<(f64, f64)> {
    let posterior = DensePosterior::<S>::new(spec, nodes, 0.0)?;
    Ok((
        dense_mle_objective(&posterior, y)?,
        dense_gcv_objective(&posterior, y)?,
    ))
}

/// Eigenvalues, ascending, of a symmetric row-major matrix, with relative
/// accuracy limited by the precision of `S` rather than by `f64`.
///
/// A double-precision eigenbasis `Q` reduces the matrix to `Q^T A Q`, which
/// is nearly diagonal; cyclic Jacobi in `S` then finishes the job. `Q` is
/// orthogonal to working precision, so the congruence changes each
/// eigenvalue by a relative `O(eps)` at most.
pub fn symmetric_eigenvalues<S: Scalar>(a: &[S], n: usize) -> Result<Vec<f64>> {
    if a.len() != n * n {
        return Err(Error::DimensionMismatch {
            expected: n * n,
            got: a.len(),
        });
    }
    let approx = DMatrix::from_fn(n, n, |i, j| a[i * n + j].to_f64());
    let q = SymmetricEigen::new(approx).eigenvectors;
    let qs: Vec<S> = (0..n * n).map(|k| S::from_f64(q[(k / n, k % n)])).collect();
    // t = A Q, b = Q^T t
    let mut t = vec![S::zero(); n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            for j in 0..n {
                t[i * n + j] = t[i * n + j] + aik * qs[k * n + j];
            }
        }
    }
    let mut b = vec![S::zero(); n * n];
    for k in 0..n {
        for i in 0..n {
            let qki = qs[k * n + i];
            for j in 0..n {
                b[i * n + j] = b[i * n + j] + qki * t[k * n + j];
            }
        }
    }
    for i in 0..n {
        for j in 0..i {
            let m = (b[i * n + j] + b[j * n + i]) / S::from_f64(2.0);
            b[i * n + j] = m;
            b[j * n + i] = m;
        }
    }
    jacobi_in_place(&mut b, n);
    let mut ev: Vec<f64> = (0..n).map(|i| b[i * n + i].to_f64()).collect();
    ev.sort_by(|x, y| x.total_cmp(y));
    Ok(ev)
}

fn jacobi_in_place<S: Scalar>(b: &mut [S], n: usize) {
    let two = S::from_f64(2.0);
    for _sweep in 0..30 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let bpq = b[p * n + q];
                let bpp = b[p * n + p];
                let bqq = b[q * n + q];
                let scale = (bpp * bqq).abs().sqrt();
                if bpq.abs() <= S::from_f64(1e-33) * scale || bpq == S::zero() {
                    continue;
                }
                rotated = true;
                let theta = (bqq - bpp) / (two * bpq);
                let root = (theta * theta + S::one()).sqrt();
                let t = if theta < S::zero() {
                    -S::one() / (-theta + root)
                } else {
                    S::one() / (theta + root)
                };
                let c = S::one() / (t * t + S::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let bkp = b[k * n + p];
                    let bkq = b[k * n + q];
                    b[k * n + p] = c * bkp - s * bkq;
                    b[k * n + q] = s * bkp + c * bkq;
                }
                for k in 0..n {
                    let bpk = b[p * n + k];
                    let bqk = b[q * n + k];
                    b[p * n + k] = c * bpk - s * bqk;
                    b[q * n + k] = s * bpk + c * bqk;
                }
                b[p * n + q] = S::zero();
                b[q * n + p] = S::zero();
            }
        }
        if !rotated {
            break;
        }
    }
}

/// Eigenvalues, ascending, of the Gram matrix of `spec` on `nodes`,
/// computed in double-double arithmetic.
pub fn gram_eigenvalues(spec: &KernelSpec, nodes: &NodeSet) -> Result<Vec<f64>> {
    let gram = gram_matrix::<DoubleDouble>(spec, nodes)?;
    symmetric_eigenvalues(&gram, nodes.len())
}
