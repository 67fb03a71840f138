//! Parameterized latent trees: CPTs oriented away from a root, exact
//! marginals by path elimination, and ancestral sampling.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{JointTensor4, Matrix, TensorKind};
use crate::tree::{LatentTree, NodeId};

const STOCHASTIC_TOL: f64 = 1e-9;

/// Column-stochastic conditional table: rows are child states, columns
/// parent states.
#[derive(Debug, Clone, PartialEq)]
pub struct Cpt(Matrix);

impl Cpt {
    pub fn new(m: Matrix) -> Result<Self> {
        if m.nrows() == 0 || m.ncols() == 0 {
            return Err(Error::invalid("empty CPT"));
        }
        if m.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("CPT entries must be finite and nonnegative"));
        }
        for (j, col) in m.column_iter().enumerate() {
            let s: f64 = col.sum();
            if (s - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::invalid(format!("CPT column {j} sums to {s}")));
            }
        }
        Ok(Cpt(m))
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn child_states(&self) -> usize {
        self.0.nrows()
    }

    pub fn parent_states(&self) -> usize {
        self.0.ncols()
    }

    pub fn has_full_column_rank(&self) -> bool {
        crate::tensor::numerical_rank(&self.0, crate::tensor::DEFAULT_RANK_TOL)
            .map(|r| r == self.0.ncols())
            .unwrap_or(false)
    }
}

/// CPTs for every non-root node plus the root marginal, with node
/// marginals precomputed.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    root: NodeId,
    states: Vec<usize>,
    parent: Vec<Option<NodeId>>,
    root_marginal: Vec<f64>,
    cpts: Vec<Option<Cpt>>,
    marginals: Vec<Vec<f64>>,
}

impl Parameters {
    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn states(&self, v: NodeId) -> usize {
        self.states[v]
    }

    pub fn parent(&self, v: NodeId) -> Option<NodeId> {
        self.parent[v]
    }

    pub fn root_marginal(&self) -> &[f64] {
        &self.root_marginal
    }

    pub fn cpt(&self, v: NodeId) -> Option<&Cpt> {
        self.cpts[v].as_ref()
    }

    pub fn marginal(&self, v: NodeId) -> &[f64] {
        &self.marginals[v]
    }
}

impl LatentTree {
    /// Attach CPTs. `cpts[v]` must be `Some` for every node except `root`
    /// and map the parent's states (columns) to `v`'s states (rows).
    pub fn parameterize(
        &mut self,
        root: NodeId,
        root_marginal: Vec<f64>,
        cpts: Vec<Option<Cpt>>,
    ) -> Result<()> {
        self.validate()?;
        let n = self.node_count();
        if root >= n {
            return Err(Error::invalid("root out of range"));
        }
        if cpts.len() != n {
            return Err(Error::invalid(format!(
                "need {n} CPT slots, got {}",
                cpts.len()
            )));
        }
        if root_marginal.iter().any(|v| !v.is_finite() || *v < 0.0)
            || (root_marginal.iter().sum::<f64>() - 1.0).abs() > STOCHASTIC_TOL
        {
            return Err(Error::invalid("root marginal must be a probability vector"));
        }
        let parent = self.parents_from(root);
        let mut states = vec![0usize; n];
        states[root] = root_marginal.len();
        for v in 0..n {
            match (&cpts[v], v == root) {
                (Some(_), true) => {
                    return Err(Error::invalid("root must not carry a CPT"));
                }
                (None, false) => {
                    return Err(Error::invalid(format!(
                        "missing CPT for node {}",
                        self.node(v).name
                    )));
                }
                (Some(c), false) => states[v] = c.child_states(),
                (None, true) => {}
            }
        }
        for v in 0..n {
            if let (Some(c), Some(p)) = (&cpts[v], parent[v]) {
                if c.parent_states() != states[p] {
                    return Err(Error::invalid(format!(
                        "CPT of {} has {} columns but parent {} has {} states",
                        self.node(v).name,
                        c.parent_states(),
                        self.node(p).name,
                        states[p]
                    )));
                }
            }
        }
        let mut marginals = vec![Vec::new(); n];
        marginals[root] = root_marginal.clone();
        for v in self.bfs_order(root).into_iter().skip(1) {
            let p = parent[v].expect("non-root has parent");
            let cpt = cpts[v].as_ref().unwrap().matrix();
            let pm = nalgebra::DVector::from_column_slice(&marginals[p]);
            marginals[v] = (cpt * pm).iter().copied().collect();
        }
        self.set_parameters(Parameters {
            root,
            states,
            parent,
            root_marginal,
            cpts,
            marginals,
        });
        Ok(())
    }

    fn params_or_err(&self) -> Result<&Parameters> {
        self.parameters().ok_or(Error::Unparameterized)
    }

    /// P(X_i) for node `v`.
    pub fn marginal(&self, v: NodeId) -> Result<Vec<f64>> {
        Ok(self.params_or_err()?.marginal(v).to_vec())
    }

    /// `P(to | from)` for adjacent nodes, rows indexed by `to`'s states.
    pub fn transition(&self, from: NodeId, to: NodeId) -> Result<Matrix> {
        let p = self.params_or_err()?;
        if !self.has_edge(from, to) {
            return Err(Error::invalid(format!("no edge {from}-{to}")));
        }
        if p.parent[to] == Some(from) {
            return Ok(p.cpts[to].as_ref().unwrap().matrix().clone());
        }
        // `to` is the parent: invert with Bayes' rule
        let cpt = p.cpts[from].as_ref().unwrap().matrix();
        let pf = &p.marginals[from];
        let pt = &p.marginals[to];
        Ok(Matrix::from_fn(p.states[to], p.states[from], |st, sf| {
            if pf[sf] > 0.0 {
                cpt[(sf, st)] * pt[st] / pf[sf]
            } else {
                pt[st]
            }
        }))
    }

    /// `P(end | start)` along the unique path; rows are `end`'s states.
    pub fn path_transition(&self, start: NodeId, end: NodeId) -> Result<Matrix> {
        let p = self.params_or_err()?;
        let path = self.path(start, end);
        let mut acc = Matrix::identity(p.states[start], p.states[start]);
        for w in path.windows(2) {
            acc = self.transition(w[0], w[1])? * acc;
        }
        Ok(acc)
    }

    /// Joint table `P(u, v)` with rows indexed by `u`.
    pub fn joint(&self, u: NodeId, v: NodeId) -> Result<Matrix> {
        let p = self.params_or_err()?;
        let t = self.path_transition(u, v)?;
        let pu = &p.marginals[u];
        Ok(Matrix::from_fn(p.states[u], p.states[v], |a, b| {
            t[(b, a)] * pu[a]
        }))
    }

    /// Exact `P(X_i, X_j)` for two distinct nodes.
    pub fn pairwise_distribution(&self, i: NodeId, j: NodeId) -> Result<Matrix> {
        if i == j {
            return Err(Error::invalid(
                "pairwise distribution needs two distinct nodes",
            ));
        }
        self.joint(i, j)
    }

    /// Exact joint over four distinct leaves, axes in the given order.
    ///
    /// Each leaf's chain to its branch point and the chain between the two
    /// branch points are collapsed into single transitions, then the
    /// single-edge quartet formula is applied.
    pub fn exact_quartet_distribution(&self, q: [NodeId; 4]) -> Result<JointTensor4> {
        let p = self.params_or_err()?;
        let rel = self.quartet_topology(q)?;
        let n = p.states[q[0]];
        if q.iter().any(|&l| p.states[l] != n) {
            return Err(Error::invalid("quartet leaves must share a state count"));
        }
        let [[a, b], [c, d]] = rel.pairs();
        let h = self.median(q[a], q[b], q[c]);
        let g = self.median(q[c], q[d], q[a]);
        let ea = self.path_transition(h, q[a])?;
        let eb = self.path_transition(h, q[b])?;
        let ec = self.path_transition(g, q[c])?;
        let ed = self.path_transition(g, q[d])?;
        let hg = self.joint(h, g)?;
        let (kh, kg) = (hg.nrows(), hg.ncols());

        // left[xa, xb, g] = sum_h P(xa|h) P(xb|h) P(h, g)
        let mut left = vec![0.0; n * n * kg];
        for gi in 0..kg {
            for hi in 0..kh {
                let w = hg[(hi, gi)];
                if w == 0.0 {
                    continue;
                }
                for xb in 0..n {
                    let wb = w * eb[(xb, hi)];
                    for xa in 0..n {
                        left[xa + n * (xb + n * gi)] += ea[(xa, hi)] * wb;
                    }
                }
            }
        }
        // full[xa, xb, xc, xd]
        let mut full = vec![0.0; n.pow(4)];
        for gi in 0..kg {
            for xd in 0..n {
                for xc in 0..n {
                    let w = ec[(xc, gi)] * ed[(xd, gi)];
                    if w == 0.0 {
                        continue;
                    }
                    let base = n * n * (xc + n * xd);
                    let lbase = n * n * gi;
                    for ab in 0..n * n {
                        full[base + ab] += left[lbase + ab] * w;
                    }
                }
            }
        }
        // move axes (a, b, c, d) back to input positions
        let mut pos_of = [0usize; 4];
        for (axis, &slot) in [a, b, c, d].iter().enumerate() {
            pos_of[slot] = axis;
        }
        let staged = JointTensor4::from_vec(n, TensorKind::Exact, full)?;
        Ok(staged.permute_axes(pos_of))
    }

    /// Same parameters expressed with a different root.
    pub fn rerooted(&self, root: NodeId) -> Result<LatentTree> {
        let p = self.params_or_err()?;
        let parent = self.parents_from(root);
        let mut cpts = vec![None; self.node_count()];
        for (v, slot) in cpts.iter_mut().enumerate() {
            if let Some(u) = parent[v] {
                *slot = Some(Cpt::new(self.transition(u, v)?)?);
            }
        }
        let mut out = self.topology();
        out.parameterize(root, p.marginals[root].clone(), cpts)?;
        Ok(out)
    }

    /// Draw `m` i.i.d. samples of the observed leaves.
    pub fn sample(&self, m: usize, seed: u64) -> Result<SampleSet> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_with_rng(m, &mut rng)
    }

    pub fn sample_with_rng<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Result<SampleSet> {
        let p = self.params_or_err()?;
        if m == 0 {
            return Err(Error::invalid("sample count must be at least 1"));
        }
        let order = self.bfs_order(p.root);
        let cumulative: Vec<Option<Vec<Vec<f64>>>> = p
            .cpts
            .iter()
            .map(|c| {
                c.as_ref().map(|c| {
                    c.matrix()
                        .column_iter()
                        .map(|col| cumsum(col.iter().copied()))
                        .collect()
                })
            })
            .collect();
        let root_cum = cumsum(p.root_marginal.iter().copied());
        let leaves = self.leaves();
        let d = leaves.len();
        let mut data = Vec::with_capacity(m * d);
        let mut state = vec![0usize; self.node_count()];
        for _ in 0..m {
            state[p.root] = draw(&root_cum, rng);
            for &v in &order[1..] {
                let par = p.parent[v].unwrap();
                let cols = cumulative[v].as_ref().unwrap();
                state[v] = draw(&cols[state[par]], rng);
            }
            data.extend(leaves.iter().map(|&l| state[l]));
        }
        Ok(SampleSet {
            names: self.leaf_names(),
            states: leaves.iter().map(|&l| p.states[l]).collect(),
            data,
        })
    }
}

fn cumsum(it: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    it.map(|v| {
        acc += v;
        acc
    })
    .collect()
}

fn draw<R: Rng + ?Sized>(cum: &[f64], rng: &mut R) -> usize {
    let total = *cum.last().unwrap();
    let u = rng.gen::<f64>() * total;
    cum.iter().position(|&c| u < c).unwrap_or(cum.len() - 1)
}

/// `m` rows of observations over `d` discrete variables (0-based states).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleSet {
    names: Vec<String>,
    states: Vec<usize>,
    data: Vec<usize>,
}

impl SampleSet {
    /// Rows of 0-based states; per-variable state counts are taken from
    /// `states` or, when `None`, inferred as one past the largest value seen.
    pub fn new(
        names: Vec<String>,
        rows: Vec<Vec<usize>>,
        states: Option<Vec<usize>>,
    ) -> Result<Self> {
        let d = names.len();
        if rows.is_empty() {
            return Err(Error::invalid("sample set needs at least one row"));
        }
        let mut data = Vec::with_capacity(rows.len() * d);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != d {
                return Err(Error::invalid(format!(
                    "row {i} has {} values, expected {d}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        let states = match states {
            Some(s) => {
                if s.len() != d {
                    return Err(Error::invalid("state count per variable has wrong length"));
                }
                for r in &rows {
                    for (j, &x) in r.iter().enumerate() {
                        if x >= s[j] {
                            return Err(Error::invalid(format!(
                                "state {} out of range for {}",
                                x + 1,
                                names[j]
                            )));
                        }
                    }
                }
                s
            }
            None => (0..d)
                .map(|j| rows.iter().map(|r| r[j]).max().unwrap() + 1)
                .collect(),
        };
        Ok(Self {
            names,
            states,
            data,
        })
    }

    pub fn m(&self) -> usize {
        if self.names.is_empty() {
            0
        } else {
            self.data.len() / self.names.len()
        }
    }

    pub fn d(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn states(&self) -> &[usize] {
        &self.states
    }

    pub fn row(&self, i: usize) -> &[usize] {
        let d = self.d();
        &self.data[i * d..(i + 1) * d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[usize]> {
        self.data.chunks(self.d().max(1))
    }

    /// Keep only the listed columns, in the given order.
    pub fn select(&self, cols: &[usize]) -> Result<SampleSet> {
        if cols.iter().any(|&c| c >= self.d()) {
            return Err(Error::invalid("column index out of range"));
        }
        let rows = self
            .rows()
            .map(|r| cols.iter().map(|&c| r[c]).collect())
            .collect();
        SampleSet::new(
            cols.iter().map(|&c| self.names[c].clone()).collect(),
            rows,
            Some(cols.iter().map(|&c| self.states[c]).collect()),
        )
    }

    /// Raw relative frequencies over four distinct columns. The tensor uses
    /// the largest state count among the four.
    pub fn empirical_quartet_tensor(&self, idx: [usize; 4]) -> Result<JointTensor4> {
        for i in 0..4 {
            if idx[i] >= self.d() {
                return Err(Error::invalid(format!(
                    "variable index {} out of range",
                    idx[i]
                )));
            }
            if idx[..i].contains(&idx[i]) {
                return Err(Error::invalid("quartet indices must be distinct"));
            }
        }
        let n = idx.iter().map(|&i| self.states[i]).max().unwrap();
        let mut counts = vec![0u64; n.pow(4)];
        for r in self.rows() {
            let x = [r[idx[0]], r[idx[1]], r[idx[2]], r[idx[3]]];
            if x.iter().any(|&s| s >= n) {
                return Err(Error::invalid("state out of range"));
            }
            counts[x[0] + n * (x[1] + n * (x[2] + n * x[3]))] += 1;
        }
        let m = self.m() as f64;
        JointTensor4::from_vec(
            n,
            TensorKind::Empirical,
            counts.into_iter().map(|c| c as f64 / m).collect(),
        )
    }

    /// Empirical `P(X_i, X_j)`, padded to the larger state count.
    pub fn empirical_pairwise(&self, i: usize, j: usize) -> Result<Matrix> {
        if i >= self.d() || j >= self.d() || i == j {
            return Err(Error::invalid(
                "pairwise needs two distinct in-range variables",
            ));
        }
        let n = self.states[i].max(self.states[j]);
        let mut p = Matrix::zeros(n, n);
        for r in self.rows() {
            p[(r[i], r[j])] += 1.0;
        }
        Ok(p / self.m() as f64)
    }

    /// Empirical `P(X_i)` with `n` entries.
    pub fn empirical_marginal(&self, i: usize, n: usize) -> Result<Vec<f64>> {
        if i >= self.d() || n < self.states[i] {
            return Err(Error::invalid("marginal index or size out of range"));
        }
        let mut p = vec![0.0; n];
        for r in self.rows() {
            p[r[i]] += 1.0;
        }
        let m = self.m() as f64;
        Ok(p.into_iter().map(|c| c / m).collect())
    }

    /// CSV with a header of variable names and 1-based integer states.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
        wr.write_record(&self.names).map_err(csv_err)?;
        for r in self.rows() {
            wr.write_record(r.iter().map(|x| (x + 1).to_string()))
                .map_err(csv_err)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<SampleSet> {
        let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
        let headers = rd
            .headers()
            .map_err(|e| Error::Data {
                line: 1,
                message: e.to_string(),
            })?
            .clone();
        let names: Vec<String> = headers.iter().map(|h| h.trim().to_string()).collect();
        if names.iter().any(String::is_empty) {
            return Err(Error::Data {
                line: 1,
                message: "empty variable name in header".into(),
            });
        }
        let mut rows = Vec::new();
        for rec in rd.records() {
            let rec = rec.map_err(|e| Error::Data {
                line: e.position().map(|p| p.line() as usize).unwrap_or(0),
                message: e.to_string(),
            })?;
            let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
            let mut row = Vec::with_capacity(names.len());
            for (j, field) in rec.iter().enumerate() {
                let v: usize = field.trim().parse().map_err(|_| Error::Data {
                    line,
                    message: format!(
                        "column {}: '{}' is not a positive integer state",
                        names[j], field
                    ),
                })?;
                if v == 0 {
                    return Err(Error::Data {
                        line,
                        message: format!("column {}: states are 1-based", names[j]),
                    });
                }
                row.push(v - 1);
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::Data {
                line: 2,
                message: "no sample rows".into(),
            });
        }
        SampleSet::new(names, rows, None)
    }
}
