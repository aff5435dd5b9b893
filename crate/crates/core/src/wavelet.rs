//! Haar wavelet transform over frequency vectors, top-k coefficient
//! selection, and reconstruction error.
//!
//! Coefficients use the orthonormal Haar basis: the first basis vector is
//! `[1, ..., 1]/sqrt(u)`, and for `j = 0 .. log2(u)-1`, `k = 0 .. 2^j - 1`
//! the basis vector with index `i = 2^j + k + 1` is `-1` on the left half and
//! `+1` on the right half of its block of `u/2^j` positions, scaled by
//! `1/sqrt(u/2^j)`. Coefficient `i` is the dot product of the signal with
//! basis vector `i`. The transform is orthonormal, so signal energy equals
//! coefficient energy and keeping the `k` coefficients of largest magnitude
//! minimizes the reconstruction error among all k-term representations.

use std::collections::{BTreeMap, HashSet};

use crate::error::{Error, Result};

/// Coefficients with magnitude below this are treated as exact zeros by the
/// sparse transform; float cancellation noise otherwise leaks "non-zero"
/// coefficients that the dense transform reports as 0.
pub const SPARSE_ZERO_EPS: f64 = 1e-12;

/// Smallest power of two that is >= `u` (and >= 2). Domains that are not a
/// power of two are zero-padded up to this size before transforming.
pub fn padded_domain(u: u32) -> u32 {
    u.next_power_of_two().max(2)
}

fn check_domain(u: u32) -> Result<()> {
    if u >= 2 && u.is_power_of_two() {
        Ok(())
    } else {
        Err(Error::DomainNotPowerOfTwo(u))
    }
}

/// Dense frequency vector over key domain `[1, u]`, `u` a power of two.
///
/// `count(x)` is the number of occurrences of key `x` in the dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrequencyVector {
    counts: Vec<u64>,
}

impl FrequencyVector {
    /// All-zero vector over domain `[1, u]`.
    pub fn zero(u: u32) -> Result<Self> {
        check_domain(u)?;
        Ok(Self { counts: vec![0; u as usize] })
    }

    pub fn from_counts(counts: Vec<u64>) -> Result<Self> {
        check_domain(counts.len() as u32)?;
        Ok(Self { counts })
    }

    /// Tallies keys into a frequency vector; every key must lie in `[1, u]`.
    pub fn from_keys<I: IntoIterator<Item = u32>>(keys: I, u: u32) -> Result<Self> {
        let mut v = Self::zero(u)?;
        for key in keys {
            v.add_key(key)?;
        }
        Ok(v)
    }

    pub fn add_key(&mut self, key: u32) -> Result<()> {
        if key == 0 || key as usize > self.counts.len() {
            return Err(Error::KeyOutOfRange { key, u: self.u() });
        }
        self.counts[key as usize - 1] += 1;
        Ok(())
    }

    pub fn u(&self) -> u32 {
        self.counts.len() as u32
    }

    /// Count of key `x` (1-based).
    pub fn count(&self, x: u32) -> u64 {
        self.counts[x as usize - 1]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Total number of records tallied.
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Squared L2 norm of the signal.
    pub fn energy(&self) -> f64 {
        self.counts.iter().map(|&c| (c as f64) * (c as f64)).sum()
    }

    /// Non-zero `(key, count)` entries in ascending key order.
    pub fn nonzero_entries(&self) -> Vec<(u32, u64)> {
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(idx, &c)| (idx as u32 + 1, c))
            .collect()
    }

    /// Entrywise sum; both vectors must share the same domain.
    pub fn add_assign(&mut self, other: &FrequencyVector) -> Result<()> {
        if self.counts.len() != other.counts.len() {
            return Err(Error::LengthMismatch {
                expected: self.counts.len(),
                got: other.counts.len(),
            });
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }
}

/// Dense wavelet coefficients `w_1 .. w_u` in coefficient-index order.
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffSet {
    coeffs: Vec<f64>,
}

impl CoeffSet {
    pub fn from_coeffs(coeffs: Vec<f64>) -> Result<Self> {
        check_domain(coeffs.len() as u32)?;
        Ok(Self { coeffs })
    }

    pub fn zero(u: u32) -> Result<Self> {
        check_domain(u)?;
        Ok(Self { coeffs: vec![0.0; u as usize] })
    }

    pub fn u(&self) -> u32 {
        self.coeffs.len() as u32
    }

    /// Coefficient `w_i` (1-based index).
    pub fn get(&self, i: u32) -> f64 {
        self.coeffs[i as usize - 1]
    }

    pub fn set(&mut self, i: u32, w: f64) {
        self.coeffs[i as usize - 1] = w;
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Squared L2 norm of the coefficients.
    pub fn energy(&self) -> f64 {
        self.coeffs.iter().map(|w| w * w).sum()
    }
}

/// One selected coefficient: 1-based index and signed value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TopKEntry {
    pub index: u32,
    pub value: f64,
}

/// The k coefficients of largest magnitude, ordered by magnitude descending
/// with ties broken by the smaller index.
#[derive(Debug, Clone, PartialEq)]
pub struct TopK {
    pub entries: Vec<TopKEntry>,
}

impl TopK {
    pub fn indices(&self) -> Vec<u32> {
        self.entries.iter().map(|e| e.index).collect()
    }

    /// Dense coefficient set with the retained entries and zeros elsewhere.
    pub fn to_dense(&self, u: u32) -> Result<CoeffSet> {
        let mut c = CoeffSet::zero(u)?;
        for e in &self.entries {
            c.set(e.index, e.value);
        }
        Ok(c)
    }
}

/// Deterministic ordering for coefficient selection: larger magnitude first,
/// ties broken by smaller index.
pub fn magnitude_order(a: &(u32, f64), b: &(u32, f64)) -> std::cmp::Ordering {
    b.1.abs()
        .total_cmp(&a.1.abs())
        .then_with(|| a.0.cmp(&b.0))
}

fn top_k_of(mut candidates: Vec<(u32, f64)>, k: usize) -> TopK {
    candidates.sort_unstable_by(magnitude_order);
    candidates.truncate(k);
    TopK {
        entries: candidates
            .into_iter()
            .map(|(index, value)| TopKEntry { index, value })
            .collect(),
    }
}

/// Top-k over a dense coefficient set; all `u` coefficients (including exact
/// zeros) are candidates, so the result always has `min(k, u)` entries.
pub fn select_top_k(c: &CoeffSet, k: usize) -> TopK {
    let candidates = c
        .coeffs
        .iter()
        .enumerate()
        .map(|(idx, &w)| (idx as u32 + 1, w))
        .collect();
    top_k_of(candidates, k)
}

/// Top-k over a sparse coefficient list; only the listed entries are
/// candidates, so fewer than `k` entries may be returned.
pub fn select_top_k_sparse(entries: &[(u32, f64)], k: usize) -> TopK {
    top_k_of(entries.to_vec(), k)
}

/// Full Haar transform of a real-valued signal whose length is a power of
/// two. This is the workhorse behind [`haar_transform_dense`]; it also
/// transforms estimated (non-integer) frequency vectors.
pub fn haar_forward(signal: &[f64]) -> Result<Vec<f64>> {
    let u = signal.len();
    check_domain(u as u32)?;
    let levels = u.trailing_zeros();
    let mut out = vec![0.0; u];
    let mut averages = signal.to_vec();
    // Pairwise averaging and differencing, leaves to root. The detail at
    // level j is scaled by sqrt(u / 2^j) to make the basis orthonormal.
    for j in (0..levels).rev() {
        let nodes = 1usize << j;
        let scale = ((u >> j) as f64).sqrt();
        let mut next = vec![0.0; nodes];
        for k in 0..nodes {
            let a = averages[2 * k];
            let b = averages[2 * k + 1];
            next[k] = (a + b) / 2.0;
            out[nodes + k] = (b - a) / 2.0 * scale;
        }
        averages = next;
    }
    out[0] = averages[0] * (u as f64).sqrt();
    Ok(out)
}

/// Inverse of [`haar_forward`]: reconstructs the signal from all `u`
/// coefficients (exactly, up to float rounding).
pub fn haar_inverse(coeffs: &[f64]) -> Result<Vec<f64>> {
    let u = coeffs.len();
    check_domain(u as u32)?;
    let levels = u.trailing_zeros();
    let mut values = vec![coeffs[0] / (u as f64).sqrt()];
    for j in 0..levels {
        let nodes = 1usize << j;
        let scale = ((u >> j) as f64).sqrt();
        let mut next = vec![0.0; nodes * 2];
        for k in 0..nodes {
            let d = coeffs[nodes + k] / scale;
            next[2 * k] = values[k] - d;
            next[2 * k + 1] = values[k] + d;
        }
        values = next;
    }
    Ok(values)
}

/// Haar transform of a dense frequency vector.
pub fn haar_transform_dense(v: &FrequencyVector) -> Result<CoeffSet> {
    let signal: Vec<f64> = v.counts.iter().map(|&c| c as f64).collect();
    Ok(CoeffSet { coeffs: haar_forward(&signal)? })
}

/// Sparse Haar transform of `(key, count)` entries over domain `[1, u]`.
///
/// Each key contributes only to the `log2(u) + 1` coefficients on its
/// root-to-leaf path, so this runs in `O(|entries| * log u)` instead of
/// `O(u)`. Returns the non-zero coefficients in ascending index order;
/// values agree with [`haar_transform_dense`] on the densified input.
pub fn haar_transform_sparse(entries: &[(u32, u64)], u: u32) -> Result<Vec<(u32, f64)>> {
    check_domain(u)?;
    let levels = u.trailing_zeros();
    let mut seen = HashSet::with_capacity(entries.len());
    let mut acc: BTreeMap<u32, f64> = BTreeMap::new();
    for &(key, count) in entries {
        if key == 0 || key > u {
            return Err(Error::KeyOutOfRange { key, u });
        }
        if !seen.insert(key) {
            return Err(Error::DuplicateKey(key));
        }
        let c = count as f64;
        let pos = key - 1;
        *acc.entry(1).or_insert(0.0) += c / (u as f64).sqrt();
        for j in 0..levels {
            let block = u >> j; // support width of level-j basis vectors
            let k = pos / block;
            let sign = if pos % block < block / 2 { -1.0 } else { 1.0 };
            let i = (1 << j) + k + 1;
            *acc.entry(i).or_insert(0.0) += sign * c / (block as f64).sqrt();
        }
    }
    Ok(acc
        .into_iter()
        .filter(|&(_, w)| w.abs() >= SPARSE_ZERO_EPS)
        .collect())
}

/// Reconstructs the (real-valued) frequency vector from a coefficient set.
/// Exact round trip with [`haar_transform_dense`]; lossy if coefficients
/// were truncated to a top-k subset.
pub fn inverse_transform(c: &CoeffSet) -> Result<Vec<f64>> {
    haar_inverse(&c.coeffs)
}

/// Reconstruction from a k-term representation over domain `[1, u]`.
pub fn reconstruct_from_topk(topk: &TopK, u: u32) -> Result<Vec<f64>> {
    inverse_transform(&topk.to_dense(u)?)
}

/// Sum of squared error between a frequency vector and a reconstruction of
/// the same length.
pub fn compute_sse(v: &FrequencyVector, r: &[f64]) -> Result<f64> {
    if r.len() != v.counts.len() {
        return Err(Error::LengthMismatch { expected: v.counts.len(), got: r.len() });
    }
    Ok(v.counts
        .iter()
        .zip(r)
        .map(|(&c, &x)| {
            let d = c as f64 - x;
            d * d
        })
        .sum())
}

/// Square grid of counts over the two-dimensional domain `[1, u]^2`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grid2D {
    u: u32,
    cells: Vec<u64>, // row-major, u * u
}

impl Grid2D {
    pub fn zero(u: u32) -> Result<Self> {
        check_domain(u)?;
        Ok(Self { u, cells: vec![0; (u as usize) * (u as usize)] })
    }

    pub fn from_cells(u: u32, cells: Vec<u64>) -> Result<Self> {
        check_domain(u)?;
        if cells.len() != (u as usize) * (u as usize) {
            return Err(Error::LengthMismatch {
                expected: (u as usize) * (u as usize),
                got: cells.len(),
            });
        }
        Ok(Self { u, cells })
    }

    pub fn u(&self) -> u32 {
        self.u
    }

    pub fn get(&self, x: u32, y: u32) -> u64 {
        self.cells[(y as usize - 1) * self.u as usize + (x as usize - 1)]
    }

    pub fn set(&mut self, x: u32, y: u32, c: u64) {
        self.cells[(y as usize - 1) * self.u as usize + (x as usize - 1)] = c;
    }
}

/// Two-dimensional Haar coefficients, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Coeffs2D {
    pub u: u32,
    pub coeffs: Vec<f64>,
}

/// 2D Haar transform: a 1D transform of every row, then a 1D transform of
/// every column of the row results. Linear in the input grid.
pub fn haar_transform_2d(g: &Grid2D) -> Result<Coeffs2D> {
    let u = g.u as usize;
    let mut rows = vec![0.0; u * u];
    let mut row_buf = vec![0.0; u];
    for y in 0..u {
        for x in 0..u {
            row_buf[x] = g.cells[y * u + x] as f64;
        }
        let t = haar_forward(&row_buf)?;
        rows[y * u..(y + 1) * u].copy_from_slice(&t);
    }
    let mut out = vec![0.0; u * u];
    let mut col_buf = vec![0.0; u];
    for x in 0..u {
        for y in 0..u {
            col_buf[y] = rows[y * u + x];
        }
        let t = haar_forward(&col_buf)?;
        for y in 0..u {
            out[y * u + x] = t[y];
        }
    }
    Ok(Coeffs2D { u: g.u, coeffs: out })
}
