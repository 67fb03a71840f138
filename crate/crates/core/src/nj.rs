//! Neighbor joining over the log-determinant additive distance.

use crate::error::{Error, Result};
use crate::model::SampleSet;
use crate::tensor::{singular_values, Matrix};
use crate::tree::{LatentTree, NodeId};

/// Value substituted for infinite distances inside neighbor joining.
pub const INFINITE_SENTINEL: f64 = 1e12;

const MARGINAL_TOL: f64 = 1e-9;
const SINGULAR_REL_TOL: f64 = 1e-12;

/// `½ log det diag P_i − log |det P_ij| + ½ log det diag P_j`, or `+inf`
/// when the joint table is singular.
pub fn additive_distance(p_ij: &Matrix, p_i: &[f64], p_j: &[f64]) -> Result<f64> {
    let n = p_ij.nrows();
    if p_ij.ncols() != n || p_i.len() != n || p_j.len() != n {
        return Err(Error::invalid(
            "additive distance needs a square table and matching marginals",
        ));
    }
    for a in 0..n {
        let row: f64 = p_ij.row(a).sum();
        let col: f64 = p_ij.column(a).sum();
        if (row - p_i[a]).abs() > MARGINAL_TOL || (col - p_j[a]).abs() > MARGINAL_TOL {
            return Err(Error::invalid(
                "marginals are inconsistent with the joint table",
            ));
        }
    }
    if p_i.iter().chain(p_j).any(|&p| p <= 0.0) {
        return Ok(f64::INFINITY);
    }
    let sv = singular_values(p_ij)?;
    let top = sv.first().copied().unwrap_or(0.0);
    if top <= 0.0 || sv.iter().any(|&s| s <= SINGULAR_REL_TOL * top) {
        return Ok(f64::INFINITY);
    }
    let log_abs_det: f64 = sv.iter().map(|s| s.ln()).sum();
    let half_i: f64 = 0.5 * p_i.iter().map(|p| p.ln()).sum::<f64>();
    let half_j: f64 = 0.5 * p_j.iter().map(|p| p.ln()).sum::<f64>();
    Ok(half_i - log_abs_det + half_j)
}

/// Distance from a joint table alone, marginals taken as its row and column sums.
pub fn table_distance(p_ij: &Matrix) -> Result<f64> {
    let p_i: Vec<f64> = p_ij.row_iter().map(|r| r.sum()).collect();
    let p_j: Vec<f64> = p_ij.column_iter().map(|c| c.sum()).collect();
    additive_distance(p_ij, &p_i, &p_j)
}

/// Symmetric pairwise distances with a zero diagonal; entries may be `+inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    data: Matrix,
}

impl DistanceMatrix {
    pub fn new(data: Matrix) -> Result<Self> {
        let d = data.nrows();
        if data.ncols() != d {
            return Err(Error::invalid("distance matrix must be square"));
        }
        for i in 0..d {
            if data[(i, i)] != 0.0 {
                return Err(Error::invalid("distance matrix diagonal must be zero"));
            }
            for j in 0..i {
                let (a, b) = (data[(i, j)], data[(j, i)]);
                if a.is_nan() || b.is_nan() {
                    return Err(Error::numerical("distance matrix has NaN entries"));
                }
                let same = a == b || (a - b).abs() <= 1e-9;
                if !same {
                    return Err(Error::invalid("distance matrix is not symmetric"));
                }
            }
        }
        Ok(Self { data })
    }

    /// Fill the upper triangle from `f(i, j)` for `i < j` and mirror it.
    pub fn from_fn<F>(d: usize, mut f: F) -> Result<Self>
    where
        F: FnMut(usize, usize) -> Result<f64>,
    {
        let mut data = Matrix::zeros(d, d);
        for i in 0..d {
            for j in i + 1..d {
                let v = f(i, j)?;
                data[(i, j)] = v;
                data[(j, i)] = v;
            }
        }
        Self::new(data)
    }

    /// Empirical distances between all sample columns.
    pub fn from_samples(samples: &SampleSet) -> Result<Self> {
        Self::from_fn(samples.d(), |i, j| {
            table_distance(&samples.empirical_pairwise(i, j)?)
        })
    }

    /// Population distances between the leaves of a parameterized tree.
    pub fn from_model(tree: &LatentTree) -> Result<Self> {
        let l = tree.leaves().to_vec();
        Self::from_fn(l.len(), |i, j| {
            table_distance(&tree.pairwise_distribution(l[i], l[j])?)
        })
    }

    pub fn d(&self) -> usize {
        self.data.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[(i, j)]
    }

    pub fn matrix(&self) -> &Matrix {
        &self.data
    }

    pub fn infinite_count(&self) -> usize {
        (0..self.d())
            .flat_map(|i| (i + 1..self.d()).map(move |j| (i, j)))
            .filter(|&(i, j)| self.data[(i, j)].is_infinite())
            .count()
    }
}

/// Saitou-Nei neighbor joining; returns the topology only. Infinite
/// distances are replaced by [`INFINITE_SENTINEL`]; ties go to the first
/// pair in scan order.
pub fn neighbor_join(dist: &DistanceMatrix, names: &[String]) -> Result<LatentTree> {
    let d = dist.d();
    if names.len() != d {
        return Err(Error::invalid("one name per distance row is required"));
    }
    if d < 4 {
        return Err(Error::UnsupportedSize(format!(
            "neighbor joining needs at least 4 variables, got {d}"
        )));
    }
    let mut tree = LatentTree::new();
    let mut active: Vec<NodeId> = names.iter().map(|n| tree.add_leaf(n.clone())).collect();
    if tree.leaf_count() != d {
        return Err(Error::invalid("duplicate variable names"));
    }

    // distances indexed by node id, grown as hidden nodes appear
    let cap = 2 * d;
    let mut w = Matrix::zeros(cap, cap);
    for i in 0..d {
        for j in 0..d {
            let v = dist.get(i, j);
            if v.is_nan() || v == f64::NEG_INFINITY {
                return Err(Error::numerical("distance matrix has invalid entries"));
            }
            w[(i, j)] = if v.is_infinite() {
                INFINITE_SENTINEL
            } else {
                v
            };
        }
    }

    while active.len() > 3 {
        let r = active.len();
        let sums: Vec<f64> = active
            .iter()
            .map(|&a| active.iter().map(|&b| w[(a, b)]).sum())
            .collect();
        let mut best: Option<(f64, usize, usize)> = None;
        for x in 0..r {
            for y in x + 1..r {
                let q = (r as f64 - 2.0) * w[(active[x], active[y])] - sums[x] - sums[y];
                if best.is_none_or(|(b, _, _)| q < b) {
                    best = Some((q, x, y));
                }
            }
        }
        let (_, x, y) = best.expect("at least one pair");
        let (a, b) = (active[x], active[y]);
        let u = tree.add_hidden("");
        tree.add_edge(u, a)?;
        tree.add_edge(u, b)?;
        let dab = w[(a, b)];
        for &k in &active {
            if k != a && k != b {
                let v = 0.5 * (w[(a, k)] + w[(b, k)] - dab);
                w[(u, k)] = v;
                w[(k, u)] = v;
            }
        }
        active.remove(y);
        active.remove(x);
        active.push(u);
    }
    let c = tree.add_hidden("");
    for &a in &active {
        tree.add_edge(c, a)?;
    }
    tree.validate()?;
    Ok(tree)
}
