//! Synthetic latent tree models, recovery diagnostics and the Monte-Carlo
//! benchmark harness.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::builder::build_tree;
use crate::error::{Error, Result};
use crate::metrics::robinson_foulds;
use crate::model::{Cpt, SampleSet};
use crate::nj::{neighbor_join, DistanceMatrix};
use crate::quartet::{resolve_nuclear, resolve_spectral_k, QuartetSource};
use crate::tensor::{spectral, unfold, JointTensor4, Matrix, QuartetRelation, TensorKind};
use crate::tree::{LatentTree, NodeId};

/// Mix `(seed, a, b)` into an independent 64-bit seed.
pub fn derive_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z =
        seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn leaf_names(d: usize) -> Vec<String> {
    (1..=d).map(|i| format!("X{i}")).collect()
}

/// Random binary topology over `d` leaves named `X1..Xd` (node ids `0..d`),
/// built by recursively splitting a shuffled group at fraction `beta`.
pub fn random_topology(d: usize, beta: f64, seed: u64) -> Result<LatentTree> {
    if d < 4 {
        return Err(Error::UnsupportedSize(format!(
            "topology needs at least 4 leaves, got {d}"
        )));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::invalid(format!(
            "split fraction must lie in (0, 1), got {beta}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..d).collect();
    order.shuffle(&mut rng);

    let mut edges: Vec<(usize, usize)> = Vec::new();
    let mut next_hidden = d;
    fn split(
        group: &[usize],
        beta: f64,
        edges: &mut Vec<(usize, usize)>,
        next: &mut usize,
    ) -> usize {
        if group.len() == 1 {
            return group[0];
        }
        let g = group.len();
        let s = match g {
            2 | 3 => 1,
            _ => ((beta * g as f64).round() as usize).clamp(2, g - 2),
        };
        let h = *next;
        *next += 1;
        let left = split(&group[..s], beta, edges, next);
        let right = split(&group[s..], beta, edges, next);
        edges.push((h, left));
        edges.push((h, right));
        h
    }
    let s = ((beta * d as f64).round() as usize).clamp(2, d - 2);
    let left = split(&order[..s], beta, &mut edges, &mut next_hidden);
    let right = split(&order[s..], beta, &mut edges, &mut next_hidden);
    // the top-level root would have degree 2, so its two parts are joined directly
    edges.push((left, right));

    let mut tree = LatentTree::new();
    for name in leaf_names(d) {
        tree.add_leaf(name);
    }
    for _ in d..next_hidden {
        tree.add_hidden("");
    }
    for (u, v) in edges {
        tree.add_edge(u, v)?;
    }
    tree.validate()?;
    Ok(tree)
}

/// Normalize `base + u` column by column with `u_i ~ U[0, mu]`.
fn perturb(base: Matrix, mu: f64, rng: &mut impl Rng) -> Result<Cpt> {
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(Error::invalid(format!(
            "perturbation level must be >= 0, got {mu}"
        )));
    }
    let mut m = base;
    if mu > 0.0 {
        for mut col in m.column_iter_mut() {
            for v in col.iter_mut() {
                *v += rng.gen_range(0.0..mu);
            }
            let s: f64 = col.sum();
            col /= s;
        }
    }
    Cpt::new(m)
}

/// Identity base: column `j` is the unit vector `e_(j mod rows)`.
pub fn identity_base(rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |i, j| if i == j % rows { 1.0 } else { 0.0 })
}

/// Independence base: every column uniform.
pub fn independent_base(rows: usize, cols: usize) -> Matrix {
    Matrix::from_element(rows, cols, 1.0 / rows as f64)
}

/// Perturbed identity CPT.
pub fn perturbed_cpt(rows: usize, cols: usize, mu: f64, seed: u64) -> Result<Cpt> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    perturbed_cpt_with_rng(rows, cols, mu, &mut rng)
}

pub fn perturbed_cpt_with_rng(
    rows: usize,
    cols: usize,
    mu: f64,
    rng: &mut impl Rng,
) -> Result<Cpt> {
    if rows == 0 || cols == 0 {
        return Err(Error::invalid("CPT needs at least one row and column"));
    }
    perturb(identity_base(rows, cols), mu, rng)
}

/// Perturbed independence CPT.
pub fn perturbed_independent_cpt(
    rows: usize,
    cols: usize,
    mu: f64,
    rng: &mut impl Rng,
) -> Result<Cpt> {
    if rows == 0 || cols == 0 {
        return Err(Error::invalid("CPT needs at least one row and column"));
    }
    perturb(independent_base(rows, cols), mu, rng)
}

/// Perturbed uniform distribution over `k` states.
fn perturbed_uniform(k: usize, mu: f64, rng: &mut impl Rng) -> Result<Vec<f64>> {
    Ok(perturb(independent_base(k, 1), mu, rng)?
        .matrix()
        .iter()
        .copied()
        .collect())
}

/// Parameterize `topology` rooted at its lowest hidden node: hidden edges get
/// perturbed independence tables, leaf edges perturbed identity tables.
pub fn parameterize_tree(
    topology: &LatentTree,
    hidden_states: &[usize],
    n: usize,
    mu_leaf: f64,
    mu_hidden: f64,
    rng: &mut impl Rng,
) -> Result<LatentTree> {
    let mut tree = topology.topology();
    let count = tree.node_count();
    if hidden_states.len() != count {
        return Err(Error::invalid("one state count per node is required"));
    }
    let root = tree
        .default_root()
        .ok_or_else(|| Error::invalid("tree has no hidden node"))?;
    let states: Vec<usize> = (0..count)
        .map(|v| if tree.is_leaf(v) { n } else { hidden_states[v] })
        .collect();
    let parents = tree.parents_from(root);
    let root_marginal = perturbed_uniform(states[root], mu_hidden, rng)?;
    let mut cpts: Vec<Option<Cpt>> = vec![None; count];
    for v in tree.bfs_order(root).into_iter().skip(1) {
        let p = parents[v].expect("non-root");
        cpts[v] = Some(if tree.is_leaf(v) {
            perturbed_cpt_with_rng(n, states[p], mu_leaf, rng)?
        } else {
            perturbed_independent_cpt(states[v], states[p], mu_hidden, rng)?
        });
    }
    tree.parameterize(root, root_marginal, cpts)?;
    Ok(tree)
}

/// Single-edge quartet model `((X1,X2)H,(X3,X4)G)` with `P(X|H)` identity-based.
pub fn quartet_model(
    k_h: usize,
    k_g: usize,
    n: usize,
    mu_leaf: f64,
    mu_hidden: f64,
    rng: &mut impl Rng,
) -> Result<LatentTree> {
    let t = LatentTree::quartet_tree(["X1", "X2", "X3", "X4"], QuartetRelation::P12_34);
    // hidden ids: 4 joins X1,X2 and 5 joins X3,X4
    let states = [n, n, n, n, k_h, k_g];
    parameterize_tree(&t, &states, n, mu_leaf, mu_hidden, rng)
}

/// Random tree model: one hidden cardinality `k` shared by all hidden nodes.
pub fn tree_model(
    topology: &LatentTree,
    k: usize,
    n: usize,
    mu_leaf: f64,
    mu_hidden: f64,
    rng: &mut impl Rng,
) -> Result<LatentTree> {
    let states = vec![k; topology.node_count()];
    parameterize_tree(topology, &states, n, mu_leaf, mu_hidden, rng)
}

/// Identifiability and sample-complexity quantities of a parameterized model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryDiagnostics {
    /// Smallest excess nuclear norm of the wrong unfoldings under the
    /// independent surrogate, over all quartets.
    pub theta_min: f64,
    /// Smallest entry of any hidden marginal.
    pub gamma_min: f64,
    /// Smallest nuclear-norm gap of the true unfolding, clamped at 0.
    pub alpha_min: f64,
    /// Unclamped version of `alpha_min`.
    pub alpha_raw: f64,
    /// Largest Frobenius norm of `P_HG - P_H P_G^T` over hidden-hidden edges.
    pub delta: f64,
    pub k: usize,
    pub d: usize,
    pub c: f64,
    pub lemma2_ok: bool,
    pub a3_ok: bool,
    pub a4_ok: bool,
}

impl RecoveryDiagnostics {
    pub fn threshold(&self) -> f64 {
        let k = self.k as f64;
        self.theta_min / (k * k + k)
    }

    /// Single-quartet success bound `1 - 8 exp(-m alpha^2 / 32)`.
    pub fn lemma3_bound(&self, m: usize) -> f64 {
        1.0 - 8.0 * (-(m as f64) * self.alpha_min.powi(2) / 32.0).exp()
    }

    /// Whole-tree success bound `1 - 8 c d log2(d) exp(-m alpha^2 / 32)`.
    pub fn tree_bound(&self, m: usize) -> f64 {
        let d = self.d as f64;
        1.0 - 8.0 * self.c * d * d.log2() * (-(m as f64) * self.alpha_min.powi(2) / 32.0).exp()
    }
}

/// `theta` for a quartet whose true pairs have joint tables `p12` and `p34`,
/// from pairwise norms alone.
pub fn theta_closed_form(p12: &Matrix, p34: &Matrix) -> Result<f64> {
    let a = spectral(p12)?;
    let b = spectral(p34)?;
    Ok(a.nuclear_norm * b.nuclear_norm - a.frobenius_norm * b.frobenius_norm)
}

/// `theta` from the unfoldings of the surrogate tensor `P12 (x) P34`.
pub fn theta_from_unfoldings(p12: &Matrix, p34: &Matrix) -> Result<f64> {
    let n = p12.nrows();
    if p12.ncols() != n || p34.shape() != (n, n) {
        return Err(Error::invalid("pairwise tables must be n x n"));
    }
    let t = JointTensor4::from_fn(n, TensorKind::Exact, |a, b, c, d| p12[(a, b)] * p34[(c, d)])?;
    let norms: Vec<f64> = QuartetRelation::ALL
        .iter()
        .map(|&g| spectral(&unfold(&t, g)).map(|s| s.nuclear_norm))
        .collect::<Result<_>>()?;
    Ok(norms[1].min(norms[2]) - norms[0])
}

/// Quartet re-expressed so that its true pairing is `{{1,2},{3,4}}`.
fn canonical_quartet(tree: &LatentTree, q: [NodeId; 4]) -> Result<[NodeId; 4]> {
    let [[a, b], [c, d]] = tree.quartet_topology(q)?.pairs();
    Ok([q[a], q[b], q[c], q[d]])
}

fn four_subsets(d: usize) -> Vec<[usize; 4]> {
    let mut out = Vec::new();
    for a in 0..d {
        for b in a + 1..d {
            for c in b + 1..d {
                for e in c + 1..d {
                    out.push([a, b, c, e]);
                }
            }
        }
    }
    out
}

/// Diagnostics over every quartet of a parameterized tree. `c` is the
/// call-count constant used by [`RecoveryDiagnostics::tree_bound`].
pub fn diagnostics(tree: &LatentTree, c: f64) -> Result<RecoveryDiagnostics> {
    let params = tree.parameters().ok_or(Error::Unparameterized)?;
    let leaves = tree.leaves().to_vec();
    let d = leaves.len();
    if d < 4 {
        return Err(Error::UnsupportedSize(format!(
            "diagnostics need at least 4 leaves, got {d}"
        )));
    }
    let hidden = tree.hidden();
    let k = hidden.iter().map(|&h| params.states(h)).max().unwrap_or(0);
    let gamma_min = hidden
        .iter()
        .flat_map(|&h| params.marginal(h).iter().copied())
        .fold(f64::INFINITY, f64::min);

    let mut delta = 0.0f64;
    let mut a3_ok = true;
    for (u, v) in tree.edges() {
        if tree.is_leaf(u) || tree.is_leaf(v) {
            continue;
        }
        let joint = tree.joint(u, v)?;
        let pu = params.marginal(u);
        let pv = params.marginal(v);
        let dm = Matrix::from_fn(joint.nrows(), joint.ncols(), |a, b| {
            joint[(a, b)] - pu[a] * pv[b]
        });
        let row_ok = dm.row_iter().all(|r| r.sum().abs() <= 1e-10);
        let col_ok = dm.column_iter().all(|c| c.sum().abs() <= 1e-10);
        a3_ok &= row_ok && col_ok;
        delta = delta.max(dm.norm());
    }

    let mut pair_cache: HashMap<(NodeId, NodeId), Matrix> = HashMap::new();
    for i in 0..d {
        for j in 0..d {
            if i != j {
                pair_cache.insert(
                    (leaves[i], leaves[j]),
                    tree.pairwise_distribution(leaves[i], leaves[j])?,
                );
            }
        }
    }
    let per_quartet: Vec<(f64, f64)> = four_subsets(d)
        .par_iter()
        .map(|idx| -> Result<(f64, f64)> {
            let q = canonical_quartet(
                tree,
                [
                    leaves[idx[0]],
                    leaves[idx[1]],
                    leaves[idx[2]],
                    leaves[idx[3]],
                ],
            )?;
            let theta = theta_closed_form(&pair_cache[&(q[0], q[1])], &pair_cache[&(q[2], q[3])])?;
            let p = tree.exact_quartet_distribution(q)?;
            let v = resolve_nuclear(&p)?;
            let alpha = (v.scores[1] - v.scores[0]).min(v.scores[2] - v.scores[0]);
            Ok((theta, alpha))
        })
        .collect::<Result<_>>()?;
    let theta_min = per_quartet
        .iter()
        .map(|p| p.0)
        .fold(f64::INFINITY, f64::min)
        .max(0.0);
    let alpha_raw = per_quartet
        .iter()
        .map(|p| p.1)
        .fold(f64::INFINITY, f64::min);

    let kf = k as f64;
    let threshold = theta_min / (kf * kf + kf);
    Ok(RecoveryDiagnostics {
        theta_min,
        gamma_min,
        alpha_min: alpha_raw.max(0.0),
        alpha_raw,
        delta,
        k,
        d,
        c,
        lemma2_ok: delta <= threshold,
        a3_ok,
        a4_ok: a3_ok && delta <= threshold.min(gamma_min),
    })
}

/// Quartet resolver or tree reconstruction method used in benchmarks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// Nuclear-norm quartet test.
    Tensor,
    /// Top-k singular value product quartet test.
    Spectral(usize),
    /// Neighbor joining on additive distances (tree benchmarks only).
    Nj,
    /// True topology.
    Oracle,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Tensor => write!(f, "tensor"),
            Method::Spectral(k) => write!(f, "spectral@{k}"),
            Method::Nj => write!(f, "nj"),
            Method::Oracle => write!(f, "oracle"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "tensor" => Ok(Method::Tensor),
            "nj" => Ok(Method::Nj),
            "oracle" => Ok(Method::Oracle),
            _ => {
                let k = s
                    .strip_prefix("spectral@")
                    .ok_or_else(|| Error::invalid(format!("unknown method '{s}'")))?;
                let k: usize = k
                    .parse()
                    .map_err(|_| Error::invalid(format!("bad k in method '{s}'")))?;
                if k == 0 {
                    return Err(Error::invalid("spectral@k needs k >= 1"));
                }
                Ok(Method::Spectral(k))
            }
        }
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Parse a comma-separated method list.
pub fn parse_methods(s: &str) -> Result<Vec<Method>> {
    s.split(',')
        .filter(|x| !x.trim().is_empty())
        .map(str::parse)
        .collect()
}

fn check_methods(methods: &[Method], n: usize, allow_nj: bool) -> Result<()> {
    if methods.is_empty() {
        return Err(Error::invalid("at least one method is required"));
    }
    for m in methods {
        match *m {
            Method::Spectral(k) if k > n => {
                return Err(Error::invalid(format!("{m} needs k <= n = {n}")));
            }
            Method::Nj if !allow_nj => {
                return Err(Error::invalid("nj is not a quartet resolver"));
            }
            _ => {}
        }
    }
    Ok(())
}

fn check_grid(grid: &[usize], trials: usize) -> Result<()> {
    if grid.is_empty() || grid.contains(&0) {
        return Err(Error::invalid(
            "sample grid must be nonempty with positive sizes",
        ));
    }
    if trials == 0 {
        return Err(Error::invalid("trials must be positive"));
    }
    Ok(())
}

fn check_mu(mu: f64) -> Result<()> {
    if mu >= 0.0 && mu.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "perturbation level must be >= 0, got {mu}"
        )))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuartetExperimentConfig {
    pub k_h: usize,
    pub k_g: usize,
    pub n: usize,
    pub mu: f64,
    pub sample_grid: Vec<usize>,
    pub trials: usize,
    pub methods: Vec<Method>,
    pub seed: u64,
    /// Record wall-clock time per row; off keeps tables byte-reproducible.
    #[serde(default)]
    pub timing: bool,
}

impl QuartetExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        for k in [self.k_h, self.k_g] {
            if k < 2 || k > self.n {
                return Err(Error::invalid(format!(
                    "hidden cardinality {k} must satisfy 2 <= k <= n = {}",
                    self.n
                )));
            }
        }
        check_mu(self.mu)?;
        check_grid(&self.sample_grid, self.trials)?;
        check_methods(&self.methods, self.n, false)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeExperimentConfig {
    pub d: usize,
    pub beta: f64,
    pub k_lo: usize,
    pub k_hi: usize,
    pub n: usize,
    /// Perturbation of leaf tables.
    pub mu: f64,
    /// Perturbation of hidden-hidden tables.
    pub mu_hidden: f64,
    pub sample_grid: Vec<usize>,
    pub trials: usize,
    pub methods: Vec<Method>,
    pub seed: u64,
    #[serde(default)]
    pub timing: bool,
}

impl TreeExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d < 4 {
            return Err(Error::UnsupportedSize(format!(
                "d must be >= 4, got {}",
                self.d
            )));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::invalid("beta must lie in (0, 1)"));
        }
        if self.k_lo < 2 || self.k_lo > self.k_hi || self.k_hi > self.n {
            return Err(Error::invalid(format!(
                "hidden range [{}, {}] must satisfy 2 <= k_lo <= k_hi <= n = {}",
                self.k_lo, self.k_hi, self.n
            )));
        }
        check_mu(self.mu)?;
        check_mu(self.mu_hidden)?;
        check_grid(&self.sample_grid, self.trials)?;
        check_methods(&self.methods, self.n, true)
    }
}

/// One benchmark outcome.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub method: String,
    pub m: usize,
    pub trial: usize,
    /// 0/1 success for quartets, RF distance for trees.
    pub outcome: u64,
    pub elapsed_ms: u64,
    #[serde(skip)]
    pub failed: bool,
}

/// Mean and standard error per `(method, m)` cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub method: String,
    pub m: usize,
    pub trials: usize,
    pub mean: f64,
    pub std_err: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    /// CSV with columns `method,m,trial,outcome,elapsed_ms`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for r in &self.rows {
            wr.serialize(r).map_err(csv_err)?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Summary cells in first-appearance order.
    pub fn summary(&self) -> Vec<SummaryRow> {
        let mut keys: Vec<(String, usize)> = Vec::new();
        let mut groups: HashMap<(String, usize), Vec<&ResultRow>> = HashMap::new();
        for r in &self.rows {
            let key = (r.method.clone(), r.m);
            if !groups.contains_key(&key) {
                keys.push(key.clone());
            }
            groups.entry(key).or_default().push(r);
        }
        keys.into_iter()
            .map(|key| {
                let rows = &groups[&key];
                let t = rows.len();
                let mean = rows.iter().map(|r| r.outcome as f64).sum::<f64>() / t as f64;
                let var = if t > 1 {
                    rows.iter()
                        .map(|r| (r.outcome as f64 - mean).powi(2))
                        .sum::<f64>()
                        / (t - 1) as f64
                } else {
                    0.0
                };
                SummaryRow {
                    method: key.0,
                    m: key.1,
                    trials: t,
                    mean,
                    std_err: (var / t as f64).sqrt(),
                    failures: rows.iter().filter(|r| r.failed).count(),
                }
            })
            .collect()
    }

    pub fn mean(&self, method: &str, m: usize) -> Option<f64> {
        self.summary()
            .into_iter()
            .find(|s| s.method == method && s.m == m)
            .map(|s| s.mean)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

/// Arrange per-trial rows as method-major, then grid order, then trial.
fn assemble(per_trial: Vec<Vec<ResultRow>>, methods: &[Method], grid: &[usize]) -> ResultTable {
    let mut rows: Vec<ResultRow> = per_trial.into_iter().flatten().collect();
    let mi = |name: &str| {
        methods
            .iter()
            .position(|m| m.to_string() == name)
            .unwrap_or(usize::MAX)
    };
    let gi = |m: usize| grid.iter().position(|&g| g == m).unwrap_or(usize::MAX);
    rows.sort_by_key(|r| (mi(&r.method), gi(r.m), r.trial));
    ResultTable { rows }
}

fn timed<T>(timing: bool, f: impl FnOnce() -> T) -> (T, u64) {
    if timing {
        let t0 = Instant::now();
        let out = f();
        (out, t0.elapsed().as_millis() as u64)
    } else {
        (f(), 0)
    }
}

/// Single-edge quartet recovery rates. Each trial draws a fresh model and a
/// random presentation order of the four variables.
pub fn run_quartet_experiment(cfg: &QuartetExperimentConfig) -> Result<ResultTable> {
    cfg.validate()?;
    let per_trial: Vec<Vec<ResultRow>> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| quartet_trial(cfg, trial))
        .collect::<Result<_>>()?;
    Ok(assemble(per_trial, &cfg.methods, &cfg.sample_grid))
}

fn quartet_trial(cfg: &QuartetExperimentConfig, trial: usize) -> Result<Vec<ResultRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, trial as u64, 0));
    let model = quartet_model(cfg.k_h, cfg.k_g, cfg.n, cfg.mu, cfg.mu, &mut rng)?;
    let mut q = [0usize, 1, 2, 3];
    q.shuffle(&mut rng);
    let l = model.leaves();
    let truth = model.quartet_topology([l[q[0]], l[q[1]], l[q[2]], l[q[3]]])?;

    let mut rows = Vec::new();
    for (gi, &m) in cfg.sample_grid.iter().enumerate() {
        let samples = model.sample(m, derive_seed(cfg.seed, trial as u64, 1 + gi as u64))?;
        for method in &cfg.methods {
            let (verdict, ms) = timed(cfg.timing, || -> Result<QuartetRelation> {
                match *method {
                    Method::Tensor => Ok(resolve_nuclear(&samples.quartet_tensor(q)?)?.relation),
                    Method::Spectral(k) => {
                        Ok(resolve_spectral_k(&samples.pairwise_tables(q)?, k)?.relation)
                    }
                    Method::Oracle => Ok(truth),
                    Method::Nj => Err(Error::invalid("nj is not a quartet resolver")),
                }
            });
            let (outcome, failed) = match verdict {
                Ok(r) => (u64::from(r == truth), false),
                Err(_) => (0, true),
            };
            rows.push(ResultRow {
                method: method.to_string(),
                m,
                trial,
                outcome,
                elapsed_ms: ms,
                failed,
            });
        }
    }
    Ok(rows)
}

/// Quartet resolver backed by samples for the given method.
pub fn sample_resolver(
    samples: &SampleSet,
    method: Method,
) -> Result<impl Fn([usize; 4]) -> Result<QuartetRelation> + '_> {
    match method {
        Method::Tensor | Method::Spectral(_) => {}
        _ => {
            return Err(Error::invalid(format!(
                "{method} is not a sample-based quartet resolver"
            )))
        }
    }
    Ok(move |q: [usize; 4]| match method {
        Method::Spectral(k) => Ok(resolve_spectral_k(&samples.pairwise_tables(q)?, k)?.relation),
        _ => Ok(resolve_nuclear(&samples.quartet_tensor(q)?)?.relation),
    })
}

/// Reconstruct a tree from samples with `method`; `truth` backs the oracle.
pub fn reconstruct(
    samples: &SampleSet,
    method: Method,
    seed: u64,
    truth: Option<&LatentTree>,
) -> Result<LatentTree> {
    let names = samples.names().to_vec();
    match method {
        Method::Nj => neighbor_join(&DistanceMatrix::from_samples(samples)?, &names),
        Method::Oracle => {
            let truth = truth.ok_or_else(|| Error::invalid("oracle needs the true tree"))?;
            let ids: Vec<NodeId> = names
                .iter()
                .map(|n| {
                    truth
                        .leaf_by_name(n)
                        .ok_or_else(|| Error::invalid(format!("unknown leaf {n}")))
                })
                .collect::<Result<_>>()?;
            Ok(build_tree(&names, seed, |q| {
                truth.quartet_topology([ids[q[0]], ids[q[1]], ids[q[2]], ids[q[3]]])
            })?
            .0)
        }
        _ => Ok(build_tree(&names, seed, sample_resolver(samples, method)?)?.0),
    }
}

/// Whole-tree recovery measured by Robinson-Foulds distance.
pub fn run_tree_experiment(cfg: &TreeExperimentConfig) -> Result<ResultTable> {
    cfg.validate()?;
    let per_trial: Vec<Vec<ResultRow>> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| tree_trial(cfg, trial))
        .collect::<Result<_>>()?;
    Ok(assemble(per_trial, &cfg.methods, &cfg.sample_grid))
}

fn tree_trial(cfg: &TreeExperimentConfig, trial: usize) -> Result<Vec<ResultRow>> {
    let t = trial as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, t, 0));
    let topology = random_topology(cfg.d, cfg.beta, rng.gen())?;
    let k = rng.gen_range(cfg.k_lo..=cfg.k_hi);
    let model = tree_model(&topology, k, cfg.n, cfg.mu, cfg.mu_hidden, &mut rng)?;
    let worst = 2 * (cfg.d as u64 - 3);

    let mut rows = Vec::new();
    for (gi, &m) in cfg.sample_grid.iter().enumerate() {
        let samples = model.sample(m, derive_seed(cfg.seed, t, 1 + gi as u64))?;
        let build_seed = derive_seed(cfg.seed, t, 10_000 + gi as u64);
        for &method in &cfg.methods {
            let (res, ms) = timed(cfg.timing, || {
                reconstruct(&samples, method, build_seed, Some(&model))
                    .and_then(|tree| robinson_foulds(&tree, &model))
            });
            let (outcome, failed) = match res {
                Ok(rf) => (rf as u64, false),
                Err(_) => (worst, true),
            };
            rows.push(ResultRow {
                method: method.to_string(),
                m,
                trial,
                outcome,
                elapsed_ms: ms,
                failed,
            });
        }
    }
    Ok(rows)
}
