#![allow(dead_code)]

use std::collections::{BTreeSet, VecDeque};

use latent_quartet::{Cpt, LatentTree, Matrix, NodeId, QuartetRelation};
use rand::Rng;

/// Column-stochastic table with entries drawn from U(0.05, 1) before normalizing.
pub fn random_cpt(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
    let mut m = Matrix::from_fn(rows, cols, |_, _| rng.gen_range(0.05..1.0));
    for mut c in m.column_iter_mut() {
        let s = c.sum();
        c /= s;
    }
    m
}

pub fn random_distribution(k: usize, rng: &mut impl Rng) -> Vec<f64> {
    random_cpt(k, 1, rng).iter().copied().collect()
}

/// Components of a single-edge quartet model `((X1,X2)H,(X3,X4)G)`.
pub struct QuartetParts {
    pub p_h: Vec<f64>,
    pub g_given_h: Matrix,
    pub leaf: [Matrix; 4],
}

impl QuartetParts {
    pub fn random(k_h: usize, k_g: usize, n: usize, rng: &mut impl Rng) -> Self {
        QuartetParts {
            p_h: random_distribution(k_h, rng),
            g_given_h: random_cpt(k_g, k_h, rng),
            leaf: [
                random_cpt(n, k_h, rng),
                random_cpt(n, k_h, rng),
                random_cpt(n, k_g, rng),
                random_cpt(n, k_g, rng),
            ],
        }
    }

    /// Joint of the two hidden variables, rows indexed by H.
    pub fn p_hg(&self) -> Matrix {
        let (kg, kh) = self.g_given_h.shape();
        Matrix::from_fn(kh, kg, |h, g| self.p_h[h] * self.g_given_h[(g, h)])
    }

    /// Replace `P(G|H)` with the independent table carrying the same `P_G`.
    pub fn make_independent(&mut self) {
        let pg = &self.g_given_h * nalgebra::DVector::from_column_slice(&self.p_h);
        let (kg, kh) = self.g_given_h.shape();
        self.g_given_h = Matrix::from_fn(kg, kh, |g, _| pg[g]);
    }

    pub fn tree(&self) -> LatentTree {
        let mut t = LatentTree::quartet_tree(["X1", "X2", "X3", "X4"], QuartetRelation::P12_34);
        let mut cpts: Vec<Option<Cpt>> = vec![None; 6];
        cpts[0] = Some(Cpt::new(self.leaf[0].clone()).unwrap());
        cpts[1] = Some(Cpt::new(self.leaf[1].clone()).unwrap());
        cpts[2] = Some(Cpt::new(self.leaf[2].clone()).unwrap());
        cpts[3] = Some(Cpt::new(self.leaf[3].clone()).unwrap());
        cpts[5] = Some(Cpt::new(self.g_given_h.clone()).unwrap());
        t.parameterize(4, self.p_h.clone(), cpts).unwrap();
        t
    }
}

pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    let mut out = Matrix::zeros(ra * rb, ca * cb);
    for i in 0..ra {
        for k in 0..ca {
            for j in 0..rb {
                for l in 0..cb {
                    out[(i * rb + j, k * cb + l)] = a[(i, k)] * b[(j, l)];
                }
            }
        }
    }
    out
}

/// Column-wise Kronecker product.
pub fn khatri_rao(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.ncols(), b.ncols());
    let (ra, rb) = (a.nrows(), b.nrows());
    let mut out = Matrix::zeros(ra * rb, a.ncols());
    for c in 0..a.ncols() {
        for i in 0..ra {
            for j in 0..rb {
                out[(i * rb + j, c)] = a[(i, c)] * b[(j, c)];
            }
        }
    }
    out
}

pub fn diag_of_vec(m: &Matrix) -> Matrix {
    let v: Vec<f64> = m.as_slice().to_vec();
    Matrix::from_diagonal(&nalgebra::DVector::from_vec(v))
}

/// Singular values by one-sided Jacobi rotations, sorted nonincreasing.
pub fn jacobi_singular_values(m: &Matrix) -> Vec<f64> {
    let mut a = if m.nrows() >= m.ncols() {
        m.clone()
    } else {
        m.transpose()
    };
    let cols = a.ncols();
    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for p in 0..cols {
            for q in p + 1..cols {
                let alpha: f64 = a.column(p).norm_squared();
                let beta: f64 = a.column(q).norm_squared();
                let gamma: f64 = a.column(p).dot(&a.column(q));
                if gamma.abs() <= 1e-300 {
                    continue;
                }
                off = off.max(gamma.abs() / (alpha * beta).sqrt().max(1e-300));
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for r in 0..a.nrows() {
                    let x = a[(r, p)];
                    let y = a[(r, q)];
                    a[(r, p)] = c * x - s * y;
                    a[(r, q)] = s * x + c * y;
                }
            }
        }
        if off < 1e-15 {
            break;
        }
    }
    let mut sv: Vec<f64> = (0..cols).map(|c| a.column(c).norm()).collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    sv
}

pub fn caterpillar(names: &[String]) -> LatentTree {
    let d = names.len();
    let mut t = LatentTree::new();
    let leaves: Vec<NodeId> = names.iter().map(|n| t.add_leaf(n.clone())).collect();
    let hidden: Vec<NodeId> = (0..d - 2).map(|_| t.add_hidden("")).collect();
    t.add_edge(leaves[0], hidden[0]).unwrap();
    for i in 0..d - 2 {
        t.add_edge(leaves[i + 1], hidden[i]).unwrap();
        if i + 1 < d - 2 {
            t.add_edge(hidden[i], hidden[i + 1]).unwrap();
        }
    }
    t.add_edge(leaves[d - 1], hidden[d - 3]).unwrap();
    t
}

/// Perfectly balanced tree over a power-of-two leaf count, cherries in
/// input order.
pub fn balanced(names: &[String]) -> LatentTree {
    let mut t = LatentTree::new();
    let mut level: Vec<NodeId> = names.iter().map(|n| t.add_leaf(n.clone())).collect();
    while level.len() > 2 {
        let mut next = Vec::new();
        for pair in level.chunks(2) {
            let h = t.add_hidden("");
            t.add_edge(h, pair[0]).unwrap();
            t.add_edge(h, pair[1]).unwrap();
            next.push(h);
        }
        level = next;
    }
    t.add_edge(level[0], level[1]).unwrap();
    t
}

pub fn names(d: usize) -> Vec<String> {
    (1..=d).map(|i| format!("X{i}")).collect()
}

/// Splits found by deleting each internal edge and flood-filling one side,
/// oriented away from the smallest leaf name.
pub fn brute_force_splits(t: &LatentTree) -> BTreeSet<Vec<String>> {
    let all: BTreeSet<String> = t.leaf_names().into_iter().collect();
    let anchor = all.iter().next().unwrap().clone();
    let mut out = BTreeSet::new();
    for (u, v) in t.edges() {
        let mut seen = vec![false; t.node_count()];
        seen[u] = true;
        seen[v] = true;
        let mut queue = VecDeque::from([v]);
        let mut side = BTreeSet::new();
        while let Some(x) = queue.pop_front() {
            if t.is_leaf(x) {
                side.insert(t.node(x).name.clone());
            }
            for &y in t.neighbors(x) {
                if !seen[y] {
                    seen[y] = true;
                    queue.push_back(y);
                }
            }
        }
        if side.len() < 2 || all.len() - side.len() < 2 {
            continue;
        }
        if side.contains(&anchor) {
            side = all.difference(&side).cloned().collect();
        }
        out.insert(side.into_iter().collect());
    }
    out
}

/// Rename leaves by a permutation of their names.
pub fn relabel(t: &LatentTree, perm: &[usize]) -> LatentTree {
    let names = t.leaf_names();
    let mut out = LatentTree::new();
    let mut map = vec![0; t.node_count()];
    for (i, &l) in t.leaves().iter().enumerate() {
        map[l] = out.add_leaf(names[perm[i]].clone());
    }
    for v in 0..t.node_count() {
        if !t.is_leaf(v) {
            map[v] = out.add_hidden("");
        }
    }
    for (u, v) in t.edges() {
        out.add_edge(map[u], map[v]).unwrap();
    }
    out
}
