//! Quartet resolvers: the nuclear-norm test, the top-k singular value
//! product test, and a topology oracle.

use crate::error::{Error, Result};
use crate::model::SampleSet;
use crate::tensor::{nuclear_norm, singular_values, unfold, JointTensor4, Matrix, QuartetRelation};
use crate::tree::{LatentTree, NodeId};

/// Relative score gap below which two relations count as tied.
pub const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct QuartetVerdict {
    pub relation: QuartetRelation,
    /// Per-relation statistic, indexed by [`QuartetRelation::index`].
    pub scores: [f64; 3],
    /// Smallest gap between the winner and the other two scores.
    pub margin: f64,
    pub tie: bool,
}

impl QuartetVerdict {
    /// Pick the best score (`lower_wins` for nuclear norms). Within the tie
    /// tolerance the lowest index wins and the tie flag is set.
    fn decide(scores: [f64; 3], lower_wins: bool) -> Self {
        let key = |s: f64| if lower_wins { s } else { -s };
        let best = scores
            .iter()
            .copied()
            .map(key)
            .fold(f64::INFINITY, f64::min);
        let scale = scores.iter().fold(0.0f64, |a, s| a.max(s.abs()));
        let tol = TIE_TOL * scale;
        let tied: Vec<usize> = (0..3).filter(|&i| key(scores[i]) - best <= tol).collect();
        let winner = tied[0];
        let margin = (0..3)
            .filter(|&i| i != winner)
            .map(|i| key(scores[i]) - key(scores[winner]))
            .fold(f64::INFINITY, f64::min)
            .max(0.0);
        QuartetVerdict {
            relation: QuartetRelation::from_index(winner).unwrap(),
            scores,
            margin,
            tie: tied.len() > 1,
        }
    }
}

/// Nuclear norms of the three unfoldings; the smallest wins.
pub fn resolve_nuclear(p: &JointTensor4) -> Result<QuartetVerdict> {
    let mut scores = [0.0; 3];
    for rel in QuartetRelation::ALL {
        scores[rel.index()] = nuclear_norm(&unfold(p, rel))?;
    }
    Ok(QuartetVerdict::decide(scores, true))
}

/// The six pairwise tables among four variables, `P(X_a, X_b)` for `a < b`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseTables {
    tables: [Matrix; 6],
}

const PAIR_ORDER: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

impl PairwiseTables {
    pub fn from_fn<F>(mut f: F) -> Result<Self>
    where
        F: FnMut(usize, usize) -> Result<Matrix>,
    {
        let t = [f(0, 1)?, f(0, 2)?, f(0, 3)?, f(1, 2)?, f(1, 3)?, f(2, 3)?];
        Ok(Self { tables: t })
    }

    /// `P(X_a, X_b)` with rows indexed by `a`.
    pub fn get(&self, a: usize, b: usize) -> Matrix {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let pos = PAIR_ORDER
            .iter()
            .position(|&p| p == (lo, hi))
            .expect("valid pair");
        if a < b {
            self.tables[pos].clone()
        } else {
            self.tables[pos].transpose()
        }
    }

    fn min_dim(&self) -> usize {
        self.tables
            .iter()
            .map(|t| t.nrows().min(t.ncols()))
            .min()
            .unwrap_or(0)
    }
}

/// Top-`k` singular value products of the within-pair tables; the largest wins.
pub fn resolve_spectral_k(pairs: &PairwiseTables, k: usize) -> Result<QuartetVerdict> {
    let n = pairs.min_dim();
    if k == 0 || k > n {
        return Err(Error::invalid(format!(
            "spectral@{k} needs 1 <= k <= n = {n}"
        )));
    }
    let top_product = |a: usize, b: usize| -> Result<f64> {
        Ok(singular_values(&pairs.get(a, b))?.iter().take(k).product())
    };
    let mut scores = [0.0; 3];
    for rel in QuartetRelation::ALL {
        let [[a, b], [c, d]] = rel.pairs();
        scores[rel.index()] = top_product(a, b)? * top_product(c, d)?;
    }
    Ok(QuartetVerdict::decide(scores, false))
}

/// Relation induced by the tree topology.
pub fn resolve_oracle(tree: &LatentTree, leaves: [NodeId; 4]) -> Result<QuartetRelation> {
    tree.quartet_topology(leaves)
}

/// Something that can hand out quartet tensors and pairwise tables for
/// variables addressed by index.
pub trait QuartetSource {
    fn quartet_tensor(&self, q: [usize; 4]) -> Result<JointTensor4>;
    fn pairwise(&self, i: usize, j: usize) -> Result<Matrix>;

    fn pairwise_tables(&self, q: [usize; 4]) -> Result<PairwiseTables> {
        PairwiseTables::from_fn(|a, b| self.pairwise(q[a], q[b]))
    }
}

impl QuartetSource for SampleSet {
    fn quartet_tensor(&self, q: [usize; 4]) -> Result<JointTensor4> {
        self.empirical_quartet_tensor(q)
    }

    fn pairwise(&self, i: usize, j: usize) -> Result<Matrix> {
        self.empirical_pairwise(i, j)
    }
}

/// Population tables of a parameterized tree; variable `i` is `leaves()[i]`.
impl QuartetSource for LatentTree {
    fn quartet_tensor(&self, q: [usize; 4]) -> Result<JointTensor4> {
        let l = self.leaves();
        if q.iter().any(|&i| i >= l.len()) {
            return Err(Error::invalid("variable index out of range"));
        }
        self.exact_quartet_distribution([l[q[0]], l[q[1]], l[q[2]], l[q[3]]])
    }

    fn pairwise(&self, i: usize, j: usize) -> Result<Matrix> {
        let l = self.leaves();
        if i >= l.len() || j >= l.len() {
            return Err(Error::invalid("variable index out of range"));
        }
        self.pairwise_distribution(l[i], l[j])
    }
}
