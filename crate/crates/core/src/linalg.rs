//! Dense kernels for dictionaries made of concatenated orthogonal blocks.
//!
//! A [`BlockDictionary`] stores `A = [Φ₁, …, Φ_p]` as `p` square `m × m`
//! orthogonal matrices and never materializes the `m × pm` product unless
//! asked to ([`BlockDictionary::to_dense`]). Global column `j` lives in block
//! `j / m` at local column `j % m`. All indices are 0-based.

use faer::prelude::*;
use faer::{Col, Mat};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::seed::rng_from_seed;

/// Maximum entry of `|ΦᵀΦ − I|` accepted for a block.
pub const ORTHOGONALITY_TOL: f64 = 1e-10;
/// Relative threshold on `|diag(R)|` below which a column submatrix is
/// treated as rank deficient.
pub const RANK_TOL: f64 = 1e-12;
/// Bound on `‖A_Λᵀ(y − Ax)‖∞ / ‖y‖₂` guaranteed by restricted least squares.
pub const NORMAL_EQUATION_TOL: f64 = 1e-9;

/// Sorted, duplicate-free set of global column indices.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IndexSet(Vec<usize>);

impl IndexSet {
    pub fn empty() -> Self {
        Self(Vec::new())
    }

    /// Builds a set from arbitrary indices, sorting and removing duplicates.
    pub fn new(mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        Self(indices)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.0.binary_search(&index).is_ok()
    }

    pub fn union(&self, other: &IndexSet) -> IndexSet {
        let mut out = Vec::with_capacity(self.len() + other.len());
        let (mut a, mut b) = (self.0.iter().peekable(), other.0.iter().peekable());
        loop {
            match (a.peek(), b.peek()) {
                (Some(&&x), Some(&&y)) => {
                    if x < y {
                        out.push(x);
                        a.next();
                    } else if y < x {
                        out.push(y);
                        b.next();
                    } else {
                        out.push(x);
                        a.next();
                        b.next();
                    }
                }
                (Some(&&x), None) => {
                    out.push(x);
                    a.next();
                }
                (None, Some(&&y)) => {
                    out.push(y);
                    b.next();
                }
                (None, None) => break,
            }
        }
        IndexSet(out)
    }

    /// `{0, …, n−1}` minus this set.
    pub fn complement(&self, n: usize) -> IndexSet {
        IndexSet((0..n).filter(|&i| !self.contains(i)).collect())
    }

    pub fn into_vec(self) -> Vec<usize> {
        self.0
    }
}

impl FromIterator<usize> for IndexSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        IndexSet::new(iter.into_iter().collect())
    }
}

// ---------------------------------------------------------------------------
// Vector helpers

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let (ca, ra) = a.split_at(a.len() - a.len() % 4);
    let (cb, rb) = b.split_at(ca.len());
    for (x, y) in ca.chunks_exact(4).zip(cb.chunks_exact(4)) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub fn norm2(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn max_abs(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

pub fn count_nonzeros(x: &[f64]) -> usize {
    x.iter().filter(|v| **v != 0.0).count()
}

pub fn support(x: &[f64]) -> IndexSet {
    IndexSet(
        x.iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, _)| i)
            .collect(),
    )
}

/// Copy of `x` with every entry outside `set` zeroed.
pub fn restrict(x: &[f64], set: &IndexSet) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for i in set.iter() {
        out[i] = x[i];
    }
    out
}

pub fn all_finite(x: &[f64]) -> bool {
    x.iter().all(|v| v.is_finite())
}

// ---------------------------------------------------------------------------
// Thresholding

/// Indices of the `k` largest-magnitude entries of `x`, ties broken towards
/// the smaller index, returned in ascending order.
pub fn top_k_indices(x: &[f64], k: usize) -> Result<IndexSet> {
    if k > x.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot select {k} entries from a vector of length {}",
            x.len()
        )));
    }
    if k == 0 {
        return Ok(IndexSet::empty());
    }
    let mut order: Vec<usize> = (0..x.len()).collect();
    // Total order on (−|x_i|, i): no two keys compare equal.
    let by_magnitude = |&a: &usize, &b: &usize| {
        x[b].abs()
            .total_cmp(&x[a].abs())
            .then_with(|| a.cmp(&b))
    };
    if k < order.len() {
        order.select_nth_unstable_by(k - 1, by_magnitude);
        order.truncate(k);
    }
    order.sort_unstable();
    Ok(IndexSet(order))
}

/// Best `k`-term approximation `H_k(x)`.
pub fn hard_threshold(x: &[f64], k: usize) -> Result<Vec<f64>> {
    Ok(restrict(x, &top_k_indices(x, k)?))
}

// ---------------------------------------------------------------------------
// Dictionary

/// `A = [Φ₁, …, Φ_p]` with each `Φᵢ` an orthogonal `m × m` matrix.
#[derive(Clone, Debug)]
pub struct BlockDictionary {
    blocks: Vec<Mat<f64>>,
    m: usize,
}

impl BlockDictionary {
    /// Validates shapes (`p ≥ 2`, `m ≥ 2`, all blocks square and equal) and
    /// orthogonality of every block.
    pub fn new(blocks: Vec<Mat<f64>>) -> Result<Self> {
        if blocks.len() < 2 {
            return Err(Error::InvalidDimension(format!(
                "need at least 2 blocks, got {}",
                blocks.len()
            )));
        }
        let m = blocks[0].nrows();
        if m < 2 {
            return Err(Error::InvalidDimension(format!("block dimension {m} < 2")));
        }
        for (i, b) in blocks.iter().enumerate() {
            if b.nrows() != m || b.ncols() != m {
                return Err(Error::InvalidDimension(format!(
                    "block {i} is {}x{}, expected {m}x{m}",
                    b.nrows(),
                    b.ncols()
                )));
            }
            if b.col_iter().any(|c| c.iter().any(|v| !v.is_finite())) {
                return Err(Error::Format(format!("block {i} has non-finite entries")));
            }
            let dev = orthogonality_defect(b.as_ref());
            if dev > ORTHOGONALITY_TOL {
                return Err(Error::InvalidArgument(format!(
                    "block {i} is not orthogonal: max|ΦᵀΦ − I| = {dev:e}"
                )));
            }
        }
        Ok(Self { blocks, m })
    }

    /// `p` blocks from [`make_orthogonal_block`] with the given seeds.
    pub fn from_block_seeds(seeds: &[u64], m: usize) -> Result<Self> {
        let blocks = seeds
            .iter()
            .map(|&s| make_orthogonal_block(s, m))
            .collect::<Result<Vec<_>>>()?;
        Self::new(blocks)
    }

    /// Block dimension.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Number of blocks.
    pub fn p(&self) -> usize {
        self.blocks.len()
    }

    /// Total number of columns, `p·m`.
    pub fn n(&self) -> usize {
        self.m * self.blocks.len()
    }

    pub fn block(&self, i: usize) -> &Mat<f64> {
        &self.blocks[i]
    }

    pub fn blocks(&self) -> &[Mat<f64>] {
        &self.blocks
    }

    /// Global column `j` as a contiguous slice.
    pub fn column(&self, j: usize) -> &[f64] {
        self.blocks[j / self.m].col_as_slice(j % self.m)
    }

    /// `Φᵢ v` accumulated into `out`; zero entries of `v` are skipped.
    fn block_apply_into(&self, i: usize, v: &[f64], out: &mut [f64]) {
        let block = &self.blocks[i];
        for (j, &vj) in v.iter().enumerate() {
            if vj != 0.0 {
                axpy(vj, block.col_as_slice(j), out);
            }
        }
    }

    /// `Φᵢ v` for a length-`m` vector.
    pub fn block_apply(&self, i: usize, v: &[f64]) -> Result<Vec<f64>> {
        check_len(v.len(), self.m)?;
        let mut out = vec![0.0; self.m];
        self.block_apply_into(i, v, &mut out);
        Ok(out)
    }

    /// `Φᵢᵀ v` for a length-`m` vector.
    pub fn block_adjoint(&self, i: usize, v: &[f64]) -> Result<Vec<f64>> {
        check_len(v.len(), self.m)?;
        let block = &self.blocks[i];
        Ok((0..self.m).map(|j| dot(block.col_as_slice(j), v)).collect())
    }

    /// `Ax = Σᵢ Φᵢ xᵢ` in `O(p·m²)` without forming `A`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(x.len(), self.n())?;
        let mut out = vec![0.0; self.m];
        for (i, xi) in x.chunks_exact(self.m).enumerate() {
            self.block_apply_into(i, xi, &mut out);
        }
        Ok(out)
    }

    /// `Aᵀv = (Φ₁ᵀv, …, Φ_pᵀv)`.
    pub fn adjoint(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len(v.len(), self.m)?;
        let mut out = Vec::with_capacity(self.n());
        for block in &self.blocks {
            out.extend((0..self.m).map(|j| dot(block.col_as_slice(j), v)));
        }
        Ok(out)
    }

    /// `y − Ax`
    pub fn residual(&self, y: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        check_len(y.len(), self.m)?;
        let ax = self.apply(x)?;
        Ok(sub(y, &ax))
    }

    /// Columns of `A` indexed by `set`, as an `m × |set|` matrix.
    pub fn gather_columns(&self, set: &IndexSet) -> Mat<f64> {
        let mut a = Mat::<f64>::zeros(self.m, set.len());
        for (c, j) in set.iter().enumerate() {
            a.col_as_slice_mut(c).copy_from_slice(self.column(j));
        }
        a
    }

    /// The explicit `m × pm` matrix.
    pub fn to_dense(&self) -> Mat<f64> {
        Mat::from_fn(self.m, self.n(), |r, c| {
            self.blocks[c / self.m][(r, c % self.m)]
        })
    }
}

/// `max |BᵀB − I|` over all entries.
pub fn orthogonality_defect(block: MatRef<'_, f64>) -> f64 {
    let gram = block.transpose() * block;
    let mut worst = 0.0f64;
    for j in 0..gram.ncols() {
        for i in 0..gram.nrows() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((gram[(i, j)] - target).abs());
        }
    }
    worst
}

/// Orthogonal `m × m` matrix: the `Q` factor of a seeded standard-Gaussian
/// matrix, with column signs flipped so that every diagonal entry of `R` is
/// positive. Gaussian entries are drawn in column-major order.
pub fn make_orthogonal_block(seed: u64, m: usize) -> Result<Mat<f64>> {
    if m < 2 {
        return Err(Error::InvalidDimension(format!("block dimension {m} < 2")));
    }
    let mut rng = rng_from_seed(seed);
    let draws: Vec<f64> = (0..m * m).map(|_| StandardNormal.sample(&mut rng)).collect();
    let gaussian = Mat::from_fn(m, m, |i, j| draws[j * m + i]);
    let qr = gaussian.qr();
    let mut q = qr.compute_thin_Q();
    let r = qr.thin_R();
    for j in 0..m {
        if r[(j, j)] < 0.0 {
            for v in q.col_as_slice_mut(j) {
                *v = -*v;
            }
        }
    }
    Ok(q)
}

/// Largest absolute normalized inner product between distinct columns of `A`.
///
/// Columns inside one block are orthogonal, so only the cross products
/// `ΦᵢᵀΦⱼ` (`i < j`) are examined.
pub fn mutual_coherence(dict: &BlockDictionary) -> f64 {
    let m = dict.m();
    let norms: Vec<Vec<f64>> = dict
        .blocks()
        .iter()
        .map(|b| (0..m).map(|j| norm2(b.col_as_slice(j))).collect())
        .collect();
    let mut mu = 0.0f64;
    for i in 0..dict.p() {
        for j in (i + 1)..dict.p() {
            let cross = dict.block(i).transpose() * dict.block(j);
            for c in 0..m {
                for r in 0..m {
                    let v = cross[(r, c)].abs() / (norms[i][r] * norms[j][c]);
                    mu = mu.max(v);
                }
            }
        }
    }
    mu.min(1.0)
}

// ---------------------------------------------------------------------------
// Restricted least squares

/// Least-squares coefficients of `y` against the columns of `a`.
///
/// Full-rank tall systems go through Householder QR; anything rank deficient
/// (or wider than tall) falls back to the minimum-norm solution from a thin SVD.
fn column_least_squares(a: &Mat<f64>, y: &[f64]) -> Result<Vec<f64>> {
    let (m, s) = a.shape();
    if s == 0 {
        return Ok(Vec::new());
    }
    let rhs = Col::from_fn(m, |i| y[i]);
    if s <= m {
        let qr = a.qr();
        let r = qr.thin_R();
        let diag_max = (0..s).fold(0.0f64, |acc, i| acc.max(r[(i, i)].abs()));
        let full_rank = diag_max > 0.0 && (0..s).all(|i| r[(i, i)].abs() >= RANK_TOL * diag_max);
        if full_rank {
            let sol = qr.solve_lstsq(&rhs);
            let out: Vec<f64> = sol.iter().copied().collect();
            if all_finite(&out) {
                return Ok(out);
            }
        }
    }
    minimum_norm_least_squares(a, &rhs)
}

fn minimum_norm_least_squares(a: &Mat<f64>, rhs: &Col<f64>) -> Result<Vec<f64>> {
    let svd = a
        .thin_svd()
        .map_err(|e| Error::Numerical(format!("SVD did not converge: {e:?}")))?;
    let (u, v) = (svd.U(), svd.V());
    let sigma: Vec<f64> = svd.S().column_vector().iter().copied().collect();
    let sigma_max = sigma.iter().fold(0.0f64, |acc, s| acc.max(*s));
    let mut out = vec![0.0; a.ncols()];
    if sigma_max == 0.0 {
        return Ok(out);
    }
    for (k, &s) in sigma.iter().enumerate() {
        if s <= RANK_TOL * sigma_max {
            continue;
        }
        let coeff = (0..u.nrows()).map(|i| u[(i, k)] * rhs[i]).sum::<f64>() / s;
        for (j, o) in out.iter_mut().enumerate() {
            *o += coeff * v[(j, k)];
        }
    }
    if !all_finite(&out) {
        return Err(Error::Numerical("non-finite least-squares solution".into()));
    }
    Ok(out)
}

/// Length-`pm` minimizer of `‖y − Ax‖₂` over vectors supported on `support`.
/// Wider-than-`m` supports are rejected.
pub fn restricted_least_squares(
    dict: &BlockDictionary,
    y: &[f64],
    support: &IndexSet,
) -> Result<Vec<f64>> {
    if support.len() > dict.m() {
        return Err(Error::OverWideSupport {
            size: support.len(),
            m: dict.m(),
        });
    }
    least_squares_on_support(dict, y, support)
}

/// Same as [`restricted_least_squares`] but accepts supports wider than `m`,
/// returning the minimum-norm solution of the underdetermined system.
pub fn least_squares_on_support(
    dict: &BlockDictionary,
    y: &[f64],
    support: &IndexSet,
) -> Result<Vec<f64>> {
    check_len(y.len(), dict.m())?;
    if let Some(&last) = support.as_slice().last() {
        if last >= dict.n() {
            return Err(Error::InvalidArgument(format!(
                "index {last} out of range for {} columns",
                dict.n()
            )));
        }
    }
    let mut x = vec![0.0; dict.n()];
    if support.is_empty() {
        return Ok(x);
    }
    let a = dict.gather_columns(support);
    let coeffs = column_least_squares(&a, y)?;
    for (j, c) in support.iter().zip(coeffs) {
        x[j] = c;
    }
    Ok(x)
}
