//! The fast Bayesian transform.
//!
//! With lattice nodes in van der Corput order and a shift-invariant kernel,
//! the Gram matrix is `C = P K P^T` for a circulant `K` and the bit-reversal
//! permutation `P`. Its eigenvector matrix `V` satisfies `V^H b = W^H P^T b`
//! with `W^H` the forward DFT, so every posterior quantity is available from
//! one FFT of the data and one FFT of the first Gram column.
//!
//! A decimation-in-time radix-2 FFT expects bit-reversed input. Data that
//! arrives in van der Corput order already is bit-reversed relative to the
//! natural lattice order, so [`fbt`] skips the permutation pass entirely.

use std::f64::consts::PI;

use num_complex::Complex64;
use twofloat::TwoFloat;

use crate::error::{Error, Result};
use crate::kernel::{KernelSpec, RingFactors};
use crate::lattice::{log2_exact, reverse_low_bits, NodeSet};

/// Relative bound on `max |Im λ| / max |Re λ|` before eigenvalues are
/// rejected as non-real.
pub const IMAGINARY_RESIDUE_TOL: f64 = 1e-8;

/// Eigenvalues below `-CLAMP_MARGIN * floor` are treated as genuinely
/// negative rather than as roundoff around zero.
const CLAMP_MARGIN: f64 = 1e3;

/// Arithmetic used for the transforms.
///
/// `Extended` carries double-double through the kernel column and both
/// FFTs. It is about an order of magnitude slower and resolves eigenvalues
/// far below `f64` roundoff of the column, which matters at small `eta`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    Double,
    Extended,
}

impl Precision {
    /// Largest `n` for which [`Precision::auto`] chooses `Extended`.
    pub const EXTENDED_LIMIT: usize = 1 << 12;

    pub fn auto(n: usize) -> Self {
        if n <= Self::EXTENDED_LIMIT {
            Precision::Extended
        } else {
            Precision::Double
        }
    }

    fn unit_roundoff(self) -> f64 {
        match self {
            Precision::Double => f64::EPSILON,
            Precision::Extended => (-104f64).exp2(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct DdComplex {
    re: TwoFloat,
    im: TwoFloat,
}

impl DdComplex {
    fn real(re: TwoFloat) -> Self {
        Self {
            re,
            im: TwoFloat::from(0.0),
        }
    }

    fn add(self, o: Self) -> Self {
        Self {
            re: self.re + o.re,
            im: self.im + o.im,
        }
    }

    fn sub(self, o: Self) -> Self {
        Self {
            re: self.re - o.re,
            im: self.im - o.im,
        }
    }

    fn mul(self, o: Self) -> Self {
        Self {
            re: self.re * o.re - self.im * o.im,
            im: self.re * o.im + self.im * o.re,
        }
    }

    fn to_c64(self) -> Complex64 {
        Complex64::new(dd_to_f64(self.re), dd_to_f64(self.im))
    }
}

fn dd_to_f64(v: TwoFloat) -> f64 {
    v.hi() + v.lo()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// `sum_j b_j exp(-2 pi i j k / n)`, unnormalized.
    Forward,
    /// `(1/n) sum_j b_j exp(+2 pi i j k / n)`.
    Inverse,
}

// sin and cos of 2 pi t for dyadic t in [0, 1/2), reduced to an angle of
// at most pi/4 and summed as Taylor series in double-double.
fn dd_sin_cos_turns(t: f64) -> (TwoFloat, TwoFloat) {
    let series = |g: f64| {
        let x = twofloat::consts::PI * TwoFloat::from(2.0 * g);
        let x2 = x * x;
        let mut sin = x;
        let mut cos = TwoFloat::from(1.0);
        let mut term_s = x;
        let mut term_c = TwoFloat::from(1.0);
        for k in 1..30 {
            let k = k as f64;
            term_s = -(term_s * x2) / ((2.0 * k) * (2.0 * k + 1.0));
            term_c = -(term_c * x2) / ((2.0 * k - 1.0) * (2.0 * k));
            sin += term_s;
            cos += term_c;
            if term_c.hi().abs() < 1e-34 {
                break;
            }
        }
        (sin, cos)
    };
    if t <= 0.125 {
        series(t)
    } else if t <= 0.25 {
        let (s, c) = series(0.25 - t);
        (c, s)
    } else if t <= 0.375 {
        let (s, c) = series(t - 0.25);
        (c, -s)
    } else {
        let (s, c) = series(0.5 - t);
        (s, -c)
    }
}

/// Precomputed twiddle factors for a power-of-two length.
#[derive(Debug, Clone)]
pub struct FftPlan {
    n: usize,
    bits: u32,
    precision: Precision,
    twiddles: Vec<Complex64>,
    twiddles_dd: Vec<DdComplex>,
}

impl FftPlan {
    pub fn new(n: usize) -> Result<Self> {
        Self::with_precision(n, Precision::Double)
    }

    pub fn with_precision(n: usize, precision: Precision) -> Result<Self> {
        let bits = log2_exact(n)?;
        let twiddles = (0..n / 2)
            .map(|k| {
                let (s, c) = (-2.0 * PI * k as f64 / n as f64).sin_cos();
                Complex64::new(c, s)
            })
            .collect();
        let twiddles_dd = match precision {
            Precision::Double => Vec::new(),
            Precision::Extended => (0..n / 2)
                .map(|k| {
                    let (s, c) = dd_sin_cos_turns(k as f64 / n as f64);
                    DdComplex { re: c, im: -s }
                })
                .collect(),
        };
        Ok(Self {
            n,
            bits,
            precision,
            twiddles,
            twiddles_dd,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: len,
            });
        }
        Ok(())
    }

    /// Butterflies of an in-place DIT transform whose input is already in
    /// bit-reversed order; output is in natural order.
    fn butterflies(&self, a: &mut [Complex64], dir: Direction) {
        let n = self.n;
        let mut half = 1;
        while half < n {
            let stride = n / (2 * half);
            for block in a.chunks_exact_mut(2 * half) {
                let (lo, hi) = block.split_at_mut(half);
                for (j, (u, v)) in lo.iter_mut().zip(hi.iter_mut()).enumerate() {
                    let w = self.twiddles[j * stride];
                    let w = match dir {
                        Direction::Forward => w,
                        Direction::Inverse => w.conj(),
                    };
                    let t = *v * w;
                    *v = *u - t;
                    *u += t;
                }
            }
            half *= 2;
        }
        if dir == Direction::Inverse {
            let scale = 1.0 / n as f64;
            a.iter_mut().for_each(|z| *z *= scale);
        }
    }

    /// Forward butterflies in double-double.
    fn butterflies_dd(&self, a: &mut [DdComplex]) {
        let n = self.n;
        let mut half = 1;
        while half < n {
            let stride = n / (2 * half);
            for block in a.chunks_exact_mut(2 * half) {
                let (lo, hi) = block.split_at_mut(half);
                for (j, (u, v)) in lo.iter_mut().zip(hi.iter_mut()).enumerate() {
                    let t = v.mul(self.twiddles_dd[j * stride]);
                    *v = u.sub(t);
                    *u = u.add(t);
                }
            }
            half *= 2;
        }
    }

    fn fbt_dd(&self, b: &[TwoFloat]) -> Result<Vec<DdComplex>> {
        self.check_len(b.len())?;
        if self.precision != Precision::Extended {
            return Err(Error::InvalidArgument(
                "double-double transform needs an extended plan".into(),
            ));
        }
        let mut a: Vec<DdComplex> = b.iter().map(|&v| DdComplex::real(v)).collect();
        self.butterflies_dd(&mut a);
        Ok(a)
    }

    /// DFT of data given in natural order.
    pub fn transform(&self, data: &[Complex64], dir: Direction) -> Result<Vec<Complex64>> {
        self.check_len(data.len())?;
        let mut a: Vec<Complex64> = (0..self.n as u64)
            .map(|i| data[reverse_low_bits(i, self.bits) as usize])
            .collect();
        self.butterflies(&mut a, dir);
        Ok(a)
    }

    /// `W^H P^T b` for real `b` in van der Corput order.
    pub fn fbt(&self, b: &[f64]) -> Result<Vec<Complex64>> {
        self.check_len(b.len())?;
        if self.precision == Precision::Extended {
            let bd: Vec<TwoFloat> = b.iter().map(|&v| TwoFloat::from(v)).collect();
            return Ok(self.fbt_dd(&bd)?.into_iter().map(DdComplex::to_c64).collect());
        }
        let mut a: Vec<Complex64> = b.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.butterflies(&mut a, Direction::Forward);
        // the zero-frequency entry is a plain sum; redo it with compensation
        a[0] = Complex64::new(compensated_sum(b), 0.0);
        Ok(a)
    }
}

/// Neumaier-compensated sum.
pub(crate) fn compensated_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for &v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Radix-2 DFT of a power-of-two length vector in natural order.
pub fn fft_radix2(b: &[Complex64], dir: Direction) -> Result<Vec<Complex64>> {
    FftPlan::new(b.len())?.transform(b, dir)
}

/// Fast Bayesian transform of a real vector given in van der Corput order.
///
/// The first entry equals the sum of `b`.
pub fn fbt(b: &[f64]) -> Result<Vec<Complex64>> {
    FftPlan::new(b.len())?.fbt(b)
}

/// Eigenvalues of a lattice Gram matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// `lambda[0] = n + lambda_ring_1`, the rest shared with the centered kernel.
    pub lambda: Vec<f64>,
    /// Top eigenvalue of the centered Gram matrix, `lambda_1 - n`.
    pub lambda_ring_1: f64,
    /// How many eigenvalues were lifted to the roundoff floor.
    pub clamped: usize,
}

impl Spectrum {
    /// `lambda_ring_1 / lambda_1`, free of cancellation.
    pub fn ring_ratio(&self) -> f64 {
        self.lambda_ring_1 / (self.lambda_ring_1 + self.lambda.len() as f64)
    }
}

/// Eigenvalues from the centered first column `C(x_i, x_1) - 1`.
///
/// Real parts below the roundoff floor `eps * sum |col|` are lifted to that
/// floor; values below `-1e3` times the floor mean the kernel is not positive
/// definite and are reported as an error.
pub fn spectrum_from_ring_column(col: &[f64], plan: &FftPlan) -> Result<Spectrum> {
    if plan.precision == Precision::Extended {
        let cd: Vec<TwoFloat> = col.iter().map(|&v| TwoFloat::from(v)).collect();
        return spectrum_from_ring_column_extended(&cd, plan);
    }
    let transformed = plan.fbt(col)?;
    let re: Vec<f64> = transformed.iter().map(|z| z.re).collect();
    let max_im = transformed.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    let floor = f64::EPSILON * col.iter().map(|c| c.abs()).sum::<f64>();
    let (mut lambda, clamped) = lift_to_floor(re, max_im, floor)?;
    let lambda_ring_1 = lambda[0];
    lambda[0] += col.len() as f64;
    Ok(Spectrum {
        lambda,
        lambda_ring_1,
        clamped,
    })
}

/// As [`spectrum_from_ring_column`] for a double-double column and an
/// extended plan.
pub fn spectrum_from_ring_column_extended(col: &[TwoFloat], plan: &FftPlan) -> Result<Spectrum> {
    let transformed = plan.fbt_dd(col)?;
    let re: Vec<f64> = transformed.iter().map(|z| dd_to_f64(z.re)).collect();
    let max_im = transformed
        .iter()
        .map(|z| dd_to_f64(z.im).abs())
        .fold(0.0, f64::max);
    let floor = Precision::Extended.unit_roundoff() * col.iter().map(|&c| dd_to_f64(c).abs()).sum::<f64>();
    let ring = re[0];
    let (mut lambda, clamped) = lift_to_floor(re, max_im, floor)?;
    let lambda_ring_1 = lambda[0];
    let n = TwoFloat::from(col.len() as f64);
    lambda[0] = if lambda_ring_1 == ring {
        dd_to_f64(transformed[0].re + n)
    } else {
        dd_to_f64(TwoFloat::from(lambda_ring_1) + n)
    };
    Ok(Spectrum {
        lambda,
        lambda_ring_1,
        clamped,
    })
}

/// Validates transformed real parts and lifts roundoff-level values to `floor`.
fn lift_to_floor(re: Vec<f64>, max_im: f64, floor: f64) -> Result<(Vec<f64>, usize)> {
    let max_re = re.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if max_re > 0.0 && max_im > IMAGINARY_RESIDUE_TOL * max_re {
        return Err(Error::ImaginaryResidue {
            ratio: max_im / max_re,
        });
    }
    let mut clamped = 0;
    let mut lambda = re;
    for (i, v) in lambda.iter_mut().enumerate() {
        if !(*v > -CLAMP_MARGIN * floor) || (floor == 0.0 && *v <= 0.0) {
            return Err(Error::NonPositiveEigenvalue { index: i, value: *v });
        }
        if *v < floor {
            clamped += 1;
            *v = floor;
        }
    }
    Ok((lambda, clamped))
}

fn ring_factors(spec: &KernelSpec, nodes: &NodeSet, precision: Precision) -> Result<RingFactors> {
    let order = spec
        .order()
        .ok_or_else(|| Error::InvalidKernel("the fast transform requires a shift-invariant kernel".into()))?;
    match precision {
        Precision::Double => RingFactors::new(order, nodes),
        Precision::Extended => RingFactors::extended(order, nodes),
    }
}

/// Spectrum of `ring` at scale `eta`, in the plan's precision.
pub fn spectrum_at(ring: &RingFactors, eta: f64, plan: &FftPlan) -> Result<Spectrum> {
    match (plan.precision, ring.column_extended(eta)) {
        (Precision::Extended, Some(col)) => spectrum_from_ring_column_extended(&col, plan),
        _ => spectrum_from_ring_column(&ring.column(eta), plan),
    }
}

/// Eigenvalues of the Gram matrix of a shift-invariant kernel on the first
/// `n` lattice nodes, using [`Precision::auto`].
pub fn eigenvalues(spec: &KernelSpec, nodes: &NodeSet) -> Result<Spectrum> {
    eigenvalues_with(spec, nodes, Precision::auto(nodes.len()))
}

pub fn eigenvalues_with(spec: &KernelSpec, nodes: &NodeSet, precision: Precision) -> Result<Spectrum> {
    let plan = FftPlan::with_precision(nodes.len(), precision)?;
    spectrum_at(&ring_factors(spec, nodes, precision)?, spec.scale(), &plan)
}

/// Transformed data and eigenvalues at one kernel scale.
#[derive(Debug, Clone, PartialEq)]
pub struct FbtState {
    pub n: usize,
    /// `V^H y`; the first entry is real and equals `sum y`.
    pub y_tilde: Vec<Complex64>,
    pub lambda: Vec<f64>,
    pub lambda_ring_1: f64,
    pub eta: f64,
}

impl FbtState {
    pub fn new(y_tilde: Vec<Complex64>, spectrum: Spectrum, eta: f64) -> Result<Self> {
        if y_tilde.len() != spectrum.lambda.len() {
            return Err(Error::DimensionMismatch {
                expected: spectrum.lambda.len(),
                got: y_tilde.len(),
            });
        }
        Ok(Self {
            n: y_tilde.len(),
            y_tilde,
            lambda: spectrum.lambda,
            lambda_ring_1: spectrum.lambda_ring_1,
            eta,
        })
    }

    /// Builds the state directly from nodes, data and kernel.
    pub fn compute(spec: &KernelSpec, nodes: &NodeSet, y: &[f64]) -> Result<Self> {
        if nodes.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: nodes.len(),
                got: y.len(),
            });
        }
        let precision = Precision::auto(y.len());
        let plan = FftPlan::with_precision(y.len(), precision)?;
        let spectrum = spectrum_at(&ring_factors(spec, nodes, precision)?, spec.scale(), &plan)?;
        Self::new(plan.fbt(y)?, spectrum, spec.scale())
    }

    pub fn ring_ratio(&self) -> f64 {
        self.lambda_ring_1 / (self.lambda_ring_1 + self.n as f64)
    }
}
