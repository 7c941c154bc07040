//! Stacked block vectors, π-weighted norms and the spectral-norm kernel.
//!
//! Every induced norm in the crate goes through the same route: conjugate
//! the operator by `D = diag(√π) ⊗ I_d` and take the Euclidean operator norm
//! of the result. The Euclidean norm itself is computed from the largest
//! eigenvalue of `MᵀM`, obtained by Householder tridiagonalization followed
//! by Sturm-sequence bisection.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default relative accuracy of [`spectral_norm`].
pub const SPECTRAL_TOL: f64 = 1e-10;

/// An element of `R^{nd}` stored as `n` contiguous blocks of length `d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StackedVector {
    n: usize,
    d: usize,
    data: Vec<f64>,
}

impl StackedVector {
    pub fn zeros(n: usize, d: usize) -> Self {
        Self {
            n,
            d,
            data: vec![0.0; n * d],
        }
    }

    pub fn from_vec(n: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * d {
            return Err(Error::DimensionMismatch {
                expected: n * d,
                found: data.len(),
            });
        }
        Ok(Self { n, d, data })
    }

    pub fn from_blocks<B: AsRef<[f64]>>(blocks: &[B]) -> Result<Self> {
        let n = blocks.len();
        let d = blocks.first().map_or(0, |b| b.as_ref().len());
        let mut data = Vec::with_capacity(n * d);
        for b in blocks {
            let b = b.as_ref();
            if b.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: b.len(),
                });
            }
            data.extend_from_slice(b);
        }
        Ok(Self { n, d, data })
    }

    /// `w_k = c_k · v` for every block.
    pub fn outer(coeffs: &[f64], v: &[f64]) -> Self {
        let d = v.len();
        let mut data = Vec::with_capacity(coeffs.len() * d);
        for &c in coeffs {
            data.extend(v.iter().map(|x| c * x));
        }
        Self {
            n: coeffs.len(),
            d,
            data,
        }
    }

    #[inline]
    pub fn blocks(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn block_dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn block(&self, k: usize) -> &[f64] {
        &self.data[k * self.d..(k + 1) * self.d]
    }

    #[inline]
    pub fn block_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.data[k * self.d..(k + 1) * self.d]
    }

    pub fn iter_blocks(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.d.max(1)).take(self.n)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn same_shape(&self, other: &Self) -> Result<()> {
        if self.n != other.n || self.d != other.d {
            return Err(Error::DimensionMismatch {
                expected: self.n * self.d,
                found: other.n * other.d,
            });
        }
        Ok(())
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.same_shape(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Self { data, ..*self })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.same_shape(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Self { data, ..*self })
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            data: self.data.iter().map(|x| c * x).collect(),
            ..*self
        }
    }

    /// Plain Euclidean norm on `R^{nd}`.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Block average `(1/n) Σ_k w_k`.
    pub fn block_mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.d];
        for b in self.iter_blocks() {
            for (m, x) in mean.iter_mut().zip(b) {
                *m += x;
            }
        }
        let inv = 1.0 / self.n as f64;
        mean.iter_mut().for_each(|m| *m *= inv);
        mean
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// `(Σ_j ‖w_j‖² / π_j)^{1/2}`.
pub fn pi_norm(w: &StackedVector, pi: &[f64]) -> Result<f64> {
    if w.blocks() != pi.len() {
        return Err(Error::DimensionMismatch {
            expected: pi.len(),
            found: w.blocks(),
        });
    }
    let s: f64 = w
        .iter_blocks()
        .zip(pi)
        .map(|(b, p)| b.iter().map(|x| x * x).sum::<f64>() / p)
        .sum();
    Ok(s.sqrt())
}

/// π-weighted norm of an `n`-vector, `(Σ_j v_j² / π_j)^{1/2}`.
pub fn pi_norm_scalar(v: &[f64], pi: &[f64]) -> Result<f64> {
    if v.len() != pi.len() {
        return Err(Error::DimensionMismatch {
            expected: pi.len(),
            found: v.len(),
        });
    }
    Ok(v.iter().zip(pi).map(|(x, p)| x * x / p).sum::<f64>().sqrt())
}

/// An `nd × nd` operator described block-wise; block `(i, j)` maps block `j`
/// of the input into block `i` of the output.
#[derive(Clone, Debug)]
pub struct BlockOperator {
    n: usize,
    d: usize,
    blocks: Vec<DMatrix<f64>>,
}

impl BlockOperator {
    pub fn new(n: usize, d: usize, blocks: Vec<DMatrix<f64>>) -> Result<Self> {
        if blocks.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                found: blocks.len(),
            });
        }
        if let Some(b) = blocks.iter().find(|b| b.nrows() != d || b.ncols() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: b.nrows().max(b.ncols()),
            });
        }
        Ok(Self { n, d, blocks })
    }

    /// `A ⊗ I_d` for an `n × n` matrix `A`.
    pub fn kron_identity(a: &DMatrix<f64>, d: usize) -> Self {
        let n = a.nrows();
        let blocks = (0..n * n)
            .map(|idx| DMatrix::identity(d, d) * a[(idx / n, idx % n)])
            .collect();
        Self { n, d, blocks }
    }

    pub fn blocks(&self) -> usize {
        self.n
    }

    pub fn block_dim(&self) -> usize {
        self.d
    }

    pub fn block(&self, i: usize, j: usize) -> &DMatrix<f64> {
        &self.blocks[i * self.n + j]
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let (n, d) = (self.n, self.d);
        DMatrix::from_fn(n * d, n * d, |r, c| self.block(r / d, c / d)[(r % d, c % d)])
    }
}

/// Block `k` of the result is `Σ_j M[k][j] · w_j`.
pub fn apply_block_operator(m: &BlockOperator, w: &StackedVector) -> Result<StackedVector> {
    if m.n != w.blocks() || m.d != w.block_dim() {
        return Err(Error::DimensionMismatch {
            expected: m.n * m.d,
            found: w.blocks() * w.block_dim(),
        });
    }
    let mut out = StackedVector::zeros(m.n, m.d);
    for k in 0..m.n {
        let dst = out.block_mut(k);
        for j in 0..m.n {
            let blk = m.block(k, j);
            let src = w.block(j);
            for r in 0..m.d {
                let mut acc = 0.0;
                for c in 0..m.d {
                    acc += blk[(r, c)] * src[c];
                }
                dst[r] += acc;
            }
        }
    }
    Ok(out)
}

/// Largest singular value of `m`.
///
/// Forms the Gram matrix `MᵀM`, reduces it to tridiagonal form and bisects
/// on the Sturm count for its top eigenvalue. `tol` bounds the relative
/// width of the final bisection bracket.
pub fn spectral_norm(m: &DMatrix<f64>, tol: f64) -> Result<f64> {
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    if m.is_empty() {
        return Ok(0.0);
    }
    let gram = m.transpose() * m;
    let (_, top) = symmetric_extremes(&gram, tol)?;
    Ok(top.max(0.0).sqrt())
}

/// Smallest and largest eigenvalue of a symmetric matrix.
///
/// Only the lower triangle is read.
pub fn symmetric_extremes(a: &DMatrix<f64>, tol: f64) -> Result<(f64, f64)> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: a.ncols(),
        });
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    if n == 0 {
        return Ok((0.0, 0.0));
    }
    let tri = Tridiagonal::from_symmetric(a);
    Ok((tri.eigenvalue_bisect(0, tol), tri.eigenvalue_bisect(n - 1, tol)))
}

/// Symmetric tridiagonal matrix: `diag[0..n]`, `off[0..n-1]`.
struct Tridiagonal {
    diag: Vec<f64>,
    off: Vec<f64>,
}

impl Tridiagonal {
    fn from_symmetric(a: &DMatrix<f64>) -> Self {
        let n = a.nrows();
        // Row-major copy of the symmetrized lower triangle.
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                m[i * n + j] = a[(i, j)];
                m[j * n + i] = a[(i, j)];
            }
        }
        let mut off = vec![0.0; n.saturating_sub(1)];
        let mut v = vec![0.0; n];
        let mut p = vec![0.0; n];
        for k in 0..n.saturating_sub(2) {
            let lo = k + 1;
            let xnorm = (lo..n).map(|i| m[i * n + k].powi(2)).sum::<f64>().sqrt();
            if xnorm == 0.0 {
                off[k] = 0.0;
                continue;
            }
            let x0 = m[lo * n + k];
            let alpha = if x0 >= 0.0 { -xnorm } else { xnorm };
            for i in lo..n {
                v[i] = m[i * n + k];
            }
            v[lo] -= alpha;
            let vnorm = (lo..n).map(|i| v[i] * v[i]).sum::<f64>().sqrt();
            if vnorm == 0.0 {
                off[k] = x0;
                continue;
            }
            for vi in &mut v[lo..n] {
                *vi /= vnorm;
            }
            // p = A v on the trailing block, w = p - (vᵀp) v, A -= 2(v wᵀ + w vᵀ).
            for i in lo..n {
                let row = &m[i * n + lo..i * n + n];
                p[i] = row.iter().zip(&v[lo..n]).map(|(a, b)| a * b).sum();
            }
            let kappa: f64 = (lo..n).map(|i| v[i] * p[i]).sum();
            for i in lo..n {
                p[i] -= kappa * v[i];
            }
            for i in lo..n {
                let (vi, pi) = (v[i], p[i]);
                let row = &mut m[i * n + lo..i * n + n];
                for (jj, a) in row.iter_mut().enumerate() {
                    let j = lo + jj;
                    *a -= 2.0 * (vi * p[j] + pi * v[j]);
                }
            }
            off[k] = alpha;
            for i in lo..n {
                m[i * n + k] = 0.0;
                m[k * n + i] = 0.0;
            }
        }
        if n >= 2 {
            off[n - 2] = m[(n - 1) * n + (n - 2)];
        }
        let diag = (0..n).map(|i| m[i * n + i]).collect();
        Self { diag, off }
    }

    /// Number of eigenvalues strictly below `x`.
    fn sturm_count(&self, x: f64) -> usize {
        let mut count = 0;
        let mut q = 1.0;
        for i in 0..self.diag.len() {
            let e2 = if i == 0 { 0.0 } else { self.off[i - 1].powi(2) };
            q = self.diag[i] - x - if i == 0 { 0.0 } else { e2 / q };
            if q == 0.0 {
                q = -f64::EPSILON * (x.abs() + 1.0);
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// The `k`-th smallest eigenvalue (0-based).
    fn eigenvalue_bisect(&self, k: usize, tol: f64) -> f64 {
        let n = self.diag.len();
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..n {
            let r = if i > 0 { self.off[i - 1].abs() } else { 0.0 }
                + if i + 1 < n { self.off[i].abs() } else { 0.0 };
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        let scale = lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE);
        lo -= 2.0 * f64::EPSILON * scale;
        hi += 2.0 * f64::EPSILON * scale;
        let width = tol.max(2.0 * f64::EPSILON) * scale;
        // Invariant: count(lo) <= k < count(hi).
        for _ in 0..2048 {
            if hi - lo <= width {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.sturm_count(mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// `D⁻¹ M D` with `D = diag(√π) ⊗ I_d`, for a dense `nd × nd` matrix.
pub fn pi_similarity(m: &DMatrix<f64>, pi: &[f64], d: usize) -> Result<DMatrix<f64>> {
    let nd = pi.len() * d;
    if m.nrows() != nd || m.ncols() != nd {
        return Err(Error::DimensionMismatch {
            expected: nd,
            found: m.nrows(),
        });
    }
    let sq: Vec<f64> = pi.iter().map(|p| p.sqrt()).collect();
    Ok(DMatrix::from_fn(nd, nd, |r, c| {
        m[(r, c)] * sq[c / d] / sq[r / d]
    }))
}

/// Operator norm of an `n × n` matrix in the π-weighted norm.
pub fn induced_pi_norm(m: &DMatrix<f64>, pi: &[f64]) -> Result<f64> {
    spectral_norm(&pi_similarity(m, pi, 1)?, SPECTRAL_TOL)
}

/// Operator norm of a block operator in the `π ⊗ 1_d` norm.
pub fn induced_pi_norm_blocks(m: &BlockOperator, pi: &[f64]) -> Result<f64> {
    induced_pi_norm_blocks_tol(m, pi, SPECTRAL_TOL)
}

pub fn induced_pi_norm_blocks_tol(m: &BlockOperator, pi: &[f64], tol: f64) -> Result<f64> {
    if m.blocks() != pi.len() {
        return Err(Error::DimensionMismatch {
            expected: pi.len(),
            found: m.blocks(),
        });
    }
    spectral_norm(&pi_similarity(&m.to_dense(), pi, m.block_dim())?, tol)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn dvec(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}
