//! Shifted extensible rank-1 lattice sequences in van der Corput order.
//!
//! Node `i` (1-based) is `frac(h * phi(i - 1) + shift)`, where `phi` is the
//! base-2 radical inverse. Because `phi` is computed by integer bit reversal
//! the unshifted coordinates are exact dyadic rationals, so the first `2^k`
//! nodes of the sequence form a rank-1 lattice for every `k`.

use std::path::Path;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};

/// Largest supported `log2` of the sample size.
pub const MAX_LOG2N: u32 = 26;

const DEFAULT_VECTOR: &str = include_str!("../data/exod2_base2_m20.txt");

/// Radical inverse of `i` in base 2.
///
/// Exact for `i < 2^53`: the reversed word has at most 53 significant bits.
pub fn van_der_corput(i: u64) -> f64 {
    i.reverse_bits() as f64 * (-64f64).exp2()
}

/// Reverses the low `bits` bits of `i`.
#[inline]
pub(crate) fn reverse_low_bits(i: u64, bits: u32) -> u64 {
    if bits == 0 {
        0
    } else {
        i.reverse_bits() >> (64 - bits)
    }
}

/// Returns `k` if `n == 2^k`.
pub(crate) fn log2_exact(n: usize) -> Result<u32> {
    if n.is_power_of_two() {
        Ok(n.trailing_zeros())
    } else {
        Err(Error::NotPowerOfTwo(n))
    }
}

/// The permutation `p[i] = n * phi(i)` taking van der Corput order to natural
/// lattice order. For `n = 2^k` this is the `k`-bit reversal permutation.
pub fn lattice_permutation(n: usize) -> Result<Vec<usize>> {
    let bits = log2_exact(n)?;
    if bits > MAX_LOG2N {
        return Err(Error::InvalidArgument(format!(
            "permutation size 2^{bits} exceeds 2^{MAX_LOG2N}"
        )));
    }
    Ok((0..n as u64)
        .map(|i| reverse_low_bits(i, bits) as usize)
        .collect())
}

/// An integer generating vector together with the dimension it supports.
///
/// The text format is line 1 = maximum dimension, followed by one odd
/// positive integer per line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratingVector {
    entries: Vec<u64>,
}

impl GeneratingVector {
    pub fn new(entries: Vec<u64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::GeneratingVector("vector is empty".into()));
        }
        if let Some((k, &h)) = entries.iter().enumerate().find(|(_, &h)| h % 2 == 0) {
            return Err(Error::GeneratingVector(format!(
                "entry {} = {h} is not an odd positive integer",
                k + 1
            )));
        }
        Ok(Self { entries })
    }

    /// Reads a generating vector file.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::GeneratingVector(format!("cannot read {}: {e}", path.display())))?;
        text.parse()
    }

    pub fn max_dimension(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[u64] {
        &self.entries
    }

    /// The first `d` components.
    pub fn truncate(&self, d: usize) -> Result<Vec<u64>> {
        if d == 0 || d > self.entries.len() {
            return Err(Error::InvalidLattice(format!(
                "dimension {d} not supported by a generating vector of length {}",
                self.entries.len()
            )));
        }
        Ok(self.entries[..d].to_vec())
    }
}

impl Default for GeneratingVector {
    fn default() -> Self {
        DEFAULT_VECTOR
            .parse()
            .expect("embedded generating vector is well formed")
    }
}

impl FromStr for GeneratingVector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut lines = s.lines().map(str::trim).filter(|l| !l.is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::GeneratingVector("missing dimension header".into()))?;
        let d_max: usize = header
            .parse()
            .map_err(|_| Error::GeneratingVector(format!("bad dimension header {header:?}")))?;
        let entries = lines
            .map(|l| {
                l.parse::<u64>()
                    .map_err(|_| Error::GeneratingVector(format!("bad entry {l:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if entries.len() != d_max {
            return Err(Error::GeneratingVector(format!(
                "header announces {d_max} entries but file has {}",
                entries.len()
            )));
        }
        Self::new(entries)
    }
}

/// Parameters of a shifted extensible lattice sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeConfig {
    generating_vector: Vec<u64>,
    shift: Vec<f64>,
    max_log2n: u32,
}

impl LatticeConfig {
    pub fn new(generating_vector: Vec<u64>, shift: Vec<f64>, max_log2n: u32) -> Result<Self> {
        let d = generating_vector.len();
        if d == 0 {
            return Err(Error::InvalidLattice("dimension must be at least 1".into()));
        }
        if shift.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: shift.len(),
            });
        }
        if let Some(&h) = generating_vector.iter().find(|&&h| h % 2 == 0) {
            return Err(Error::InvalidLattice(format!(
                "generating vector entry {h} is not an odd positive integer"
            )));
        }
        if let Some(&s) = shift.iter().find(|s| !(0.0..1.0).contains(*s)) {
            return Err(Error::InvalidLattice(format!(
                "shift component {s} not in [0, 1)"
            )));
        }
        if !(1..=MAX_LOG2N).contains(&max_log2n) {
            return Err(Error::InvalidLattice(format!(
                "max_log2n = {max_log2n} outside [1, {MAX_LOG2N}]"
            )));
        }
        Ok(Self {
            generating_vector,
            shift,
            max_log2n,
        })
    }

    /// Zero-shift lattice.
    pub fn unshifted(generating_vector: Vec<u64>, max_log2n: u32) -> Result<Self> {
        let d = generating_vector.len();
        Self::new(generating_vector, vec![0.0; d], max_log2n)
    }

    /// Lattice with a uniform random shift drawn from `rng`.
    pub fn random_shift<R: Rng + ?Sized>(
        generating_vector: Vec<u64>,
        max_log2n: u32,
        rng: &mut R,
    ) -> Result<Self> {
        let shift = (0..generating_vector.len())
            .map(|_| rng.random::<f64>())
            .collect();
        Self::new(generating_vector, shift, max_log2n)
    }

    /// The same lattice with a zero shift.
    pub fn without_shift(&self) -> LatticeConfig {
        LatticeConfig {
            shift: vec![0.0; self.shift.len()],
            ..self.clone()
        }
    }

    pub fn dimension(&self) -> usize {
        self.generating_vector.len()
    }

    pub fn generating_vector(&self) -> &[u64] {
        &self.generating_vector
    }

    pub fn shift(&self) -> &[f64] {
        &self.shift
    }

    pub fn max_log2n(&self) -> u32 {
        self.max_log2n
    }

    pub fn max_points(&self) -> u64 {
        1u64 << self.max_log2n
    }

    fn write_node(&self, index0: u64, out: &mut Vec<f64>) {
        let bits = self.max_log2n;
        let mask = (1u64 << bits) - 1;
        let scale = (-(bits as f64)).exp2();
        let rev = reverse_low_bits(index0, bits);
        for (&h, &s) in self.generating_vector.iter().zip(&self.shift) {
            // h * phi mod 1, computed exactly on the 2^-bits grid
            let k = h.wrapping_mul(rev) & mask;
            let mut x = k as f64 * scale + s;
            if x >= 1.0 {
                x -= 1.0;
            }
            out.push(x);
        }
    }
}

/// Node `i` (1-based) of the sequence.
pub fn node(i: u64, cfg: &LatticeConfig) -> Result<Vec<f64>> {
    if i == 0 || i > cfg.max_points() {
        return Err(Error::IndexOutOfRange {
            index: i,
            max: cfg.max_points(),
        });
    }
    let mut out = Vec::with_capacity(cfg.dimension());
    cfg.write_node(i - 1, &mut out);
    Ok(out)
}

/// Nodes `n_prev + 1 ..= n` in sequence order.
///
/// `n` must be a power of two and `n_prev` either zero or a smaller power of
/// two, so that consecutive blocks concatenate to the first `n` nodes.
pub fn node_block(n_prev: usize, n: usize, cfg: &LatticeConfig) -> Result<NodeSet> {
    log2_exact(n)?;
    if n_prev != 0 {
        log2_exact(n_prev)?;
    }
    if n_prev >= n {
        return Err(Error::InvalidArgument(format!(
            "block start {n_prev} must precede block end {n}"
        )));
    }
    if n as u64 > cfg.max_points() {
        return Err(Error::IndexOutOfRange {
            index: n as u64,
            max: cfg.max_points(),
        });
    }
    let d = cfg.dimension();
    let mut coords = Vec::with_capacity((n - n_prev) * d);
    for i in n_prev as u64..n as u64 {
        cfg.write_node(i, &mut coords);
    }
    Ok(NodeSet { dim: d, coords })
}

/// A list of points in `[0,1)^d`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSet {
    dim: usize,
    coords: Vec<f64>,
}

impl NodeSet {
    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            coords: Vec::new(),
        }
    }

    pub fn from_rows(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 || coords.len() % dim != 0 {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: coords.len(),
            });
        }
        Ok(Self { dim, coords })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.coords
    }

    /// Appends a later block of the same sequence.
    pub fn extend(&mut self, block: &NodeSet) -> Result<()> {
        if block.dim != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: block.dim,
            });
        }
        self.coords.extend_from_slice(&block.coords);
        Ok(())
    }

    /// The first `n` points.
    pub fn prefix(&self, n: usize) -> NodeSet {
        NodeSet {
            dim: self.dim,
            coords: self.coords[..n * self.dim].to_vec(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(d: usize, m: u32) -> LatticeConfig {
        LatticeConfig::unshifted(vec![1; d], m).unwrap()
    }

    #[test]
    fn radical_inverse_table() {
        let expected = [0.0, 0.5, 0.25, 0.75, 0.125, 0.625, 0.375, 0.875];
        for (i, &e) in expected.iter().enumerate() {
            assert_eq!(van_der_corput(i as u64), e);
        }
    }

    #[test]
    fn radical_inverse_large_index_is_exact() {
        let i = (1u64 << 52) + 1;
        assert_eq!(van_der_corput(i), 0.5 + (-53f64).exp2());
    }

    #[test]
    fn first_node_is_the_shift() {
        let cfg = LatticeConfig::new(vec![1, 3], vec![0.25, 0.5], 10).unwrap();
        assert_eq!(node(1, &cfg).unwrap(), vec![0.25, 0.5]);
        assert_eq!(node(1, &unit(2, 4)).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn second_node_examples() {
        assert_eq!(node(2, &unit(1, 4)).unwrap(), vec![0.5]);
        let shifted = LatticeConfig::new(vec![1], vec![0.3], 4).unwrap();
        assert!((node(2, &shifted).unwrap()[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn node_index_out_of_range() {
        let cfg = unit(1, 3);
        assert!(matches!(node(0, &cfg), Err(Error::IndexOutOfRange { .. })));
        assert!(matches!(node(9, &cfg), Err(Error::IndexOutOfRange { .. })));
        assert!(node(8, &cfg).is_ok());
    }

    #[test]
    fn blocks() {
        let cfg = unit(1, 4);
        assert_eq!(node_block(0, 2, &cfg).unwrap().as_flat(), &[0.0, 0.5]);
        assert_eq!(node_block(2, 4, &cfg).unwrap().as_flat(), &[0.25, 0.75]);
        let two = node_block(0, 4, &unit(2, 4)).unwrap();
        assert_eq!(two.len(), 4);
        assert!(two.iter().all(|p| p[0] == p[1]));
    }

    #[test]
    fn block_errors() {
        let cfg = unit(1, 4);
        assert_eq!(node_block(0, 6, &cfg), Err(Error::NotPowerOfTwo(6)));
        assert_eq!(node_block(3, 8, &cfg), Err(Error::NotPowerOfTwo(3)));
        assert!(node_block(4, 4, &cfg).is_err());
        assert!(matches!(
            node_block(0, 32, &cfg),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn permutation_examples() {
        assert_eq!(lattice_permutation(4).unwrap(), vec![0, 2, 1, 3]);
        assert_eq!(lattice_permutation(8).unwrap(), vec![0, 4, 2, 6, 1, 5, 3, 7]);
        assert_eq!(lattice_permutation(1).unwrap(), vec![0]);
        assert_eq!(lattice_permutation(12), Err(Error::NotPowerOfTwo(12)));
    }

    #[test]
    fn config_validation() {
        assert!(LatticeConfig::unshifted(vec![], 4).is_err());
        assert!(LatticeConfig::unshifted(vec![2], 4).is_err());
        assert!(LatticeConfig::new(vec![1], vec![1.0], 4).is_err());
        assert!(LatticeConfig::new(vec![1], vec![-0.1], 4).is_err());
        assert!(LatticeConfig::unshifted(vec![1], 0).is_err());
        assert!(LatticeConfig::unshifted(vec![1], 27).is_err());
        assert!(LatticeConfig::new(vec![1, 3], vec![0.0], 4).is_err());
    }

    #[test]
    fn generating_vector_parsing() {
        let gv: GeneratingVector = "3\n1\n5\n7\n".parse().unwrap();
        assert_eq!(gv.entries(), &[1, 5, 7]);
        assert_eq!(gv.truncate(2).unwrap(), vec![1, 5]);
        assert!(gv.truncate(4).is_err());
        assert!("2\n1\n".parse::<GeneratingVector>().is_err());
        assert!("2\n1\n4\n".parse::<GeneratingVector>().is_err());
        assert!("x\n1\n".parse::<GeneratingVector>().is_err());
        assert!("".parse::<GeneratingVector>().is_err());
    }

    #[test]
    fn embedded_vector_supports_twenty_dimensions() {
        let gv = GeneratingVector::default();
        assert_eq!(gv.max_dimension(), 20);
        assert_eq!(gv.entries()[0], 1);
        assert!(gv.entries().iter().all(|h| h % 2 == 1));
    }
}
