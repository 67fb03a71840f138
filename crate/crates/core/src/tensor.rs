//! Dense 4-way probability tables and the matrix machinery the quartet test
//! runs on: the three pairwise unfoldings, Kronecker and Khatri-Rao
//! products, and singular-value summaries.
//!
//! States are 0-based in the Rust API. A tensor over `n` states per axis is
//! stored with the first axis varying fastest, so the 1-based index law
//! "row `x1 + n(x2 - 1)`, column `x3 + n(x4 - 1)`" becomes
//! `row = x1 + n * x2`, `col = x3 + n * x4` here.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Dense real matrix used throughout the crate.
pub type Matrix = DMatrix<f64>;

const SVD_EPS: f64 = 1e-15;
const SVD_MAX_ITER: usize = 10_000;

/// Default relative tolerance for [`numerical_rank`].
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

/// One of the three ways to split four variables into two pairs.
#[allow(non_camel_case_types)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum QuartetRelation {
    /// {{1,2},{3,4}}
    P12_34,
    /// {{1,3},{2,4}}
    P13_24,
    /// {{1,4},{2,3}}
    P14_23,
}

impl QuartetRelation {
    pub const ALL: [QuartetRelation; 3] = [
        QuartetRelation::P12_34,
        QuartetRelation::P13_24,
        QuartetRelation::P14_23,
    ];

    pub fn index(self) -> usize {
        match self {
            QuartetRelation::P12_34 => 0,
            QuartetRelation::P13_24 => 1,
            QuartetRelation::P14_23 => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// The two pairs of 0-based positions, first pair always contains position 0.
    pub fn pairs(self) -> [[usize; 2]; 2] {
        match self {
            QuartetRelation::P12_34 => [[0, 1], [2, 3]],
            QuartetRelation::P13_24 => [[0, 2], [1, 3]],
            QuartetRelation::P14_23 => [[0, 3], [1, 2]],
        }
    }

    /// The relation that pairs position 0 with `partner` (1, 2 or 3).
    pub fn pairing_with_first(partner: usize) -> Option<Self> {
        match partner {
            1 => Some(QuartetRelation::P12_34),
            2 => Some(QuartetRelation::P13_24),
            3 => Some(QuartetRelation::P14_23),
            _ => None,
        }
    }

    /// Position paired with position 0.
    pub fn partner_of_first(self) -> usize {
        self.pairs()[0][1]
    }

    /// Relation seen after relabeling: the variable at position `p` moves to
    /// position `perm[p]`.
    pub fn permuted(self, perm: [usize; 4]) -> Self {
        let [[a, b], _] = self.pairs();
        let (a, b) = (perm[a], perm[b]);
        let partner = if a == 0 {
            b
        } else if b == 0 {
            a
        } else {
            // the pair not containing 0 was {a, b}; 0 pairs with the remaining one
            (1..4).find(|&p| p != a && p != b).unwrap()
        };
        Self::pairing_with_first(partner).unwrap()
    }

    pub fn label(self) -> &'static str {
        match self {
            QuartetRelation::P12_34 => "{{1,2},{3,4}}",
            QuartetRelation::P13_24 => "{{1,3},{2,4}}",
            QuartetRelation::P14_23 => "{{1,4},{2,3}}",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorKind {
    Exact,
    Empirical,
}

/// Joint probability table over four variables with `n` states each.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTensor4 {
    n: usize,
    kind: TensorKind,
    data: Vec<f64>,
}

impl JointTensor4 {
    /// Build from a flat buffer laid out with axis 1 fastest.
    pub fn from_vec(n: usize, kind: TensorKind, data: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("tensor needs at least one state per axis"));
        }
        if data.len() != n.pow(4) {
            return Err(Error::invalid(format!(
                "expected {} entries, got {}",
                n.pow(4),
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid(
                "tensor entries must be finite and nonnegative",
            ));
        }
        let total: f64 = data.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "tensor entries sum to {total}, not 1"
            )));
        }
        Ok(Self { n, kind, data })
    }

    pub fn from_fn<F>(n: usize, kind: TensorKind, mut f: F) -> Result<Self>
    where
        F: FnMut(usize, usize, usize, usize) -> f64,
    {
        let mut data = Vec::with_capacity(n.pow(4));
        for x4 in 0..n {
            for x3 in 0..n {
                for x2 in 0..n {
                    for x1 in 0..n {
                        data.push(f(x1, x2, x3, x4));
                    }
                }
            }
        }
        Self::from_vec(n, kind, data)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> TensorKind {
        self.kind
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    fn offset(&self, x: [usize; 4]) -> usize {
        let n = self.n;
        x[0] + n * (x[1] + n * (x[2] + n * x[3]))
    }

    pub fn get(&self, x1: usize, x2: usize, x3: usize, x4: usize) -> f64 {
        self.data[self.offset([x1, x2, x3, x4])]
    }

    /// Reorder axes: axis `a` of the result is axis `axes[a]` of `self`.
    pub fn permute_axes(&self, axes: [usize; 4]) -> JointTensor4 {
        let n = self.n;
        let mut data = vec![0.0; self.data.len()];
        let mut idx = [0usize; 4];
        for (pos, slot) in data.iter_mut().enumerate() {
            let mut rem = pos;
            let mut y = [0usize; 4];
            for v in y.iter_mut() {
                *v = rem % n;
                rem /= n;
            }
            for a in 0..4 {
                idx[axes[a]] = y[a];
            }
            *slot = self.data[self.offset(idx)];
        }
        JointTensor4 {
            n,
            kind: self.kind,
            data,
        }
    }

    /// Sum out axes 3 and 4, leaving P(x1, x2) as an `n x n` matrix.
    pub fn marginal_12(&self) -> Matrix {
        let n = self.n;
        let mut m = Matrix::zeros(n, n);
        for (pos, v) in self.data.iter().enumerate() {
            m[(pos % n, (pos / n) % n)] += v;
        }
        m
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Axes placed on the rows (first two) and columns (last two) for each grouping.
fn grouping_axes(grouping: QuartetRelation) -> [usize; 4] {
    match grouping {
        QuartetRelation::P12_34 => [0, 1, 2, 3],
        QuartetRelation::P13_24 => [0, 2, 1, 3],
        QuartetRelation::P14_23 => [0, 3, 1, 2],
    }
}

/// Matricize `p` according to `grouping` (unfoldings A, B and C).
pub fn unfold(p: &JointTensor4, grouping: QuartetRelation) -> Matrix {
    let n = p.n;
    let [r0, r1, c0, c1] = grouping_axes(grouping);
    let mut m = Matrix::zeros(n * n, n * n);
    for (pos, &v) in p.data.iter().enumerate() {
        let mut rem = pos;
        let mut x = [0usize; 4];
        for slot in x.iter_mut() {
            *slot = rem % n;
            rem /= n;
        }
        m[(x[r0] + n * x[r1], x[c0] + n * x[c1])] = v;
    }
    m
}

/// Inverse of [`unfold`].
pub fn refold(m: &Matrix, grouping: QuartetRelation, kind: TensorKind) -> Result<JointTensor4> {
    let n2 = m.nrows();
    let n = (n2 as f64).sqrt().round() as usize;
    if n * n != n2 || m.ncols() != n2 {
        return Err(Error::invalid("refold needs an n^2 x n^2 matrix"));
    }
    let [r0, r1, c0, c1] = grouping_axes(grouping);
    let mut data = vec![0.0; n.pow(4)];
    for col in 0..n2 {
        for row in 0..n2 {
            let mut x = [0usize; 4];
            x[r0] = row % n;
            x[r1] = row / n;
            x[c0] = col % n;
            x[c1] = col / n;
            data[x[0] + n * (x[1] + n * (x[2] + n * x[3]))] = m[(row, col)];
        }
    }
    JointTensor4::from_vec(n, kind, data)
}

/// Singular values and the two norms derived from them.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSummary {
    /// Sorted nonincreasing.
    pub singular_values: Vec<f64>,
    pub nuclear_norm: f64,
    pub frobenius_norm: f64,
}

/// Full singular value set of `m`.
pub fn singular_values(m: &Matrix) -> Result<Vec<f64>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("matrix has non-finite entries"));
    }
    if m.is_empty() {
        return Ok(Vec::new());
    }
    let svd = m
        .clone()
        .try_svd(false, false, SVD_EPS, SVD_MAX_ITER)
        .ok_or_else(|| Error::numerical("singular value decomposition did not converge"))?;
    let mut sv: Vec<f64> = svd.singular_values.iter().map(|s| s.abs()).collect();
    if sv.iter().any(|s| !s.is_finite()) {
        return Err(Error::numerical(
            "singular value decomposition produced non-finite values",
        ));
    }
    sv.sort_by(|a, b| b.total_cmp(a));
    Ok(sv)
}

pub fn spectral(m: &Matrix) -> Result<SpectralSummary> {
    let singular_values = singular_values(m)?;
    let nuclear_norm = singular_values.iter().sum();
    Ok(SpectralSummary {
        singular_values,
        nuclear_norm,
        frobenius_norm: m.norm(),
    })
}

pub fn nuclear_norm(m: &Matrix) -> Result<f64> {
    Ok(singular_values(m)?.iter().sum())
}

/// Number of singular values above `tol * sigma_1`; zero for the zero matrix.
pub fn numerical_rank(m: &Matrix, tol: f64) -> Result<usize> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::invalid("rank tolerance must be positive"));
    }
    let sv = singular_values(m)?;
    let Some(&top) = sv.first() else {
        return Ok(0);
    };
    if top == 0.0 {
        return Ok(0);
    }
    Ok(sv.iter().filter(|&&s| s > tol * top).count())
}

pub fn kronecker(a: &Matrix, b: &Matrix) -> Matrix {
    a.kronecker(b)
}

/// Column-wise Kronecker product.
pub fn khatri_rao(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.ncols() != b.ncols() {
        return Err(Error::invalid(format!(
            "khatri-rao needs equal column counts, got {} and {}",
            a.ncols(),
            b.ncols()
        )));
    }
    let (ra, rb) = (a.nrows(), b.nrows());
    Ok(Matrix::from_fn(ra * rb, a.ncols(), |r, c| {
        a[(r / rb, c)] * b[(r % rb, c)]
    }))
}

/// Stack the columns of `m` into a single column (`M(:)`).
pub fn vec_columns(m: &Matrix) -> Matrix {
    Matrix::from_column_slice(m.len(), 1, m.as_slice())
}
