//! Unrooted latent tree topology: observed leaves of degree 1 and hidden
//! nodes of degree 3.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::model::Parameters;
use crate::tensor::QuartetRelation;

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Observed,
    Hidden,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub name: String,
    pub kind: NodeKind,
}

/// Tree over observed and hidden nodes, optionally carrying CPTs.
///
/// Observed variables are ordered by insertion; `leaves()[i]` is the node
/// for variable `i`.
#[derive(Debug, Clone, Default)]
pub struct LatentTree {
    nodes: Vec<Node>,
    adj: Vec<Vec<NodeId>>,
    leaves: Vec<NodeId>,
    params: Option<Parameters>,
}

impl LatentTree {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_leaf(&mut self, name: impl Into<String>) -> NodeId {
        let id = self.push(name.into(), NodeKind::Observed);
        self.leaves.push(id);
        id
    }

    /// Adds a hidden node; an empty name is replaced by `H<id>`.
    pub fn add_hidden(&mut self, name: impl Into<String>) -> NodeId {
        let mut name = name.into();
        if name.is_empty() {
            name = format!("H{}", self.nodes.len());
        }
        self.push(name, NodeKind::Hidden)
    }

    fn push(&mut self, name: String, kind: NodeKind) -> NodeId {
        self.params = None;
        self.nodes.push(Node { name, kind });
        self.adj.push(Vec::new());
        self.nodes.len() - 1
    }

    pub fn add_edge(&mut self, u: NodeId, v: NodeId) -> Result<()> {
        if u >= self.nodes.len() || v >= self.nodes.len() || u == v {
            return Err(Error::invalid(format!("bad edge {u}-{v}")));
        }
        if self.adj[u].contains(&v) {
            return Err(Error::invalid(format!("duplicate edge {u}-{v}")));
        }
        self.params = None;
        self.adj[u].push(v);
        self.adj[v].push(u);
        Ok(())
    }

    fn remove_edge(&mut self, u: NodeId, v: NodeId) -> Result<()> {
        let before = self.adj[u].len();
        self.adj[u].retain(|&x| x != v);
        self.adj[v].retain(|&x| x != u);
        if self.adj[u].len() == before {
            return Err(Error::invalid(format!("no edge {u}-{v}")));
        }
        self.params = None;
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn is_leaf(&self, id: NodeId) -> bool {
        self.nodes[id].kind == NodeKind::Observed
    }

    pub fn neighbors(&self, id: NodeId) -> &[NodeId] {
        &self.adj[id]
    }

    pub fn degree(&self, id: NodeId) -> usize {
        self.adj[id].len()
    }

    /// Observed nodes in variable order.
    pub fn leaves(&self) -> &[NodeId] {
        &self.leaves
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves.len()
    }

    pub fn hidden(&self) -> Vec<NodeId> {
        (0..self.nodes.len())
            .filter(|&v| !self.is_leaf(v))
            .collect()
    }

    pub fn leaf_names(&self) -> Vec<String> {
        self.leaves
            .iter()
            .map(|&l| self.nodes[l].name.clone())
            .collect()
    }

    pub fn leaf_by_name(&self, name: &str) -> Option<NodeId> {
        self.leaves
            .iter()
            .copied()
            .find(|&l| self.nodes[l].name == name)
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Undirected edges as `(u, v)` with `u < v`, sorted.
    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        let mut out: Vec<_> = self
            .adj
            .iter()
            .enumerate()
            .flat_map(|(u, ns)| ns.iter().filter(move |&&v| u < v).map(move |&v| (u, v)))
            .collect();
        out.sort_unstable();
        out
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        u < self.adj.len() && self.adj[u].contains(&v)
    }

    /// Checks connectivity, acyclicity and the degree rules
    /// (leaves degree 1, hidden nodes degree 3).
    pub fn validate(&self) -> Result<()> {
        let n = self.nodes.len();
        if n == 0 {
            return Err(Error::invalid("empty tree"));
        }
        if self.edge_count() != n - 1 {
            return Err(Error::invalid(format!(
                "{} nodes need {} edges, found {}",
                n,
                n - 1,
                self.edge_count()
            )));
        }
        let seen = self.bfs_order(0);
        if seen.len() != n {
            return Err(Error::invalid("tree is not connected"));
        }
        if self.leaves.len() >= 3 {
            for v in 0..n {
                let want = if self.is_leaf(v) { 1 } else { 3 };
                if self.degree(v) != want {
                    return Err(Error::invalid(format!(
                        "node {} ({}) has degree {}, expected {}",
                        v,
                        self.nodes[v].name,
                        self.degree(v),
                        want
                    )));
                }
            }
        }
        let mut names: Vec<&str> = self
            .leaves
            .iter()
            .map(|&l| self.nodes[l].name.as_str())
            .collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("duplicate leaf names"));
        }
        Ok(())
    }

    /// Breadth-first order of the component containing `start`.
    pub fn bfs_order(&self, start: NodeId) -> Vec<NodeId> {
        let mut seen = vec![false; self.nodes.len()];
        let mut order = Vec::with_capacity(self.nodes.len());
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(u) = queue.pop_front() {
            order.push(u);
            for &v in &self.adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        order
    }

    /// Parent pointers for the tree rooted at `root`.
    pub fn parents_from(&self, root: NodeId) -> Vec<Option<NodeId>> {
        let mut parent = vec![None; self.nodes.len()];
        let mut seen = vec![false; self.nodes.len()];
        let mut queue = VecDeque::from([root]);
        seen[root] = true;
        while let Some(u) = queue.pop_front() {
            for &v in &self.adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    parent[v] = Some(u);
                    queue.push_back(v);
                }
            }
        }
        parent
    }

    /// Node sequence from `u` to `v`, both inclusive.
    pub fn path(&self, u: NodeId, v: NodeId) -> Vec<NodeId> {
        let parent = self.parents_from(u);
        let mut out = vec![v];
        let mut cur = v;
        while let Some(p) = parent[cur] {
            out.push(p);
            cur = p;
        }
        out.reverse();
        out
    }

    /// Nodes reachable from `start` without crossing the edge back to `from`.
    pub fn branch_nodes(&self, from: NodeId, start: NodeId) -> Vec<NodeId> {
        let mut out = vec![start];
        let mut stack = vec![(start, from)];
        while let Some((u, p)) = stack.pop() {
            for &v in &self.adj[u] {
                if v != p {
                    out.push(v);
                    stack.push((v, u));
                }
            }
        }
        out
    }

    /// Leaves in the branch entered through `start` when coming from `from`.
    pub fn branch_leaves(&self, from: NodeId, start: NodeId) -> Vec<NodeId> {
        let mut leaves: Vec<NodeId> = self
            .branch_nodes(from, start)
            .into_iter()
            .filter(|&v| self.is_leaf(v))
            .collect();
        leaves.sort_unstable();
        leaves
    }

    /// The node shared by the three paths between `a`, `b` and `c`.
    pub fn median(&self, a: NodeId, b: NodeId, c: NodeId) -> NodeId {
        let pab = self.path(a, b);
        let on_ac = self.path(a, c);
        let on_bc = self.path(b, c);
        *pab.iter()
            .find(|v| on_ac.contains(v) && on_bc.contains(v))
            .expect("paths in a tree always meet")
    }

    /// Quartet relation induced by the topology on four distinct leaves:
    /// the pairing whose two connecting paths share no node.
    pub fn quartet_topology(&self, q: [NodeId; 4]) -> Result<QuartetRelation> {
        for i in 0..4 {
            if q[i] >= self.nodes.len() || !self.is_leaf(q[i]) {
                return Err(Error::invalid(format!("node {} is not a leaf", q[i])));
            }
            for j in 0..i {
                if q[i] == q[j] {
                    return Err(Error::invalid("quartet leaves must be distinct"));
                }
            }
        }
        let mut found = None;
        for rel in QuartetRelation::ALL {
            let [[a, b], [c, d]] = rel.pairs();
            let left = self.path(q[a], q[b]);
            let right = self.path(q[c], q[d]);
            if left.iter().all(|v| !right.contains(v)) {
                if found.is_some() {
                    return Err(Error::invalid("quartet relation is ambiguous"));
                }
                found = Some(rel);
            }
        }
        found.ok_or_else(|| Error::invalid("no internal edge separates the quartet"))
    }

    /// Subdivides edge `(u, v)` with a new hidden node and hangs a new leaf
    /// named `name` from it. Returns `(hidden, leaf)`.
    pub fn subdivide_with_leaf(
        &mut self,
        u: NodeId,
        v: NodeId,
        name: impl Into<String>,
    ) -> Result<(NodeId, NodeId)> {
        let name = name.into();
        if self.leaf_by_name(&name).is_some() {
            return Err(Error::invalid(format!("leaf {name} already in tree")));
        }
        if !self.has_edge(u, v) {
            return Err(Error::invalid(format!("no edge {u}-{v}")));
        }
        self.remove_edge(u, v)?;
        let h = self.add_hidden("");
        let leaf = self.add_leaf(name);
        self.add_edge(u, h)?;
        self.add_edge(h, v)?;
        self.add_edge(h, leaf)?;
        Ok((h, leaf))
    }

    /// Removes a leaf and contracts its hidden neighbour. Node ids are
    /// compacted; remaining nodes keep their relative order.
    pub fn remove_leaf(&self, name: &str) -> Result<LatentTree> {
        let leaf = self
            .leaf_by_name(name)
            .ok_or_else(|| Error::invalid(format!("no leaf named {name}")))?;
        let &[h] = self.adj[leaf].as_slice() else {
            return Err(Error::invalid("leaf must have exactly one neighbour"));
        };
        if self.is_leaf(h) || self.degree(h) != 3 {
            return Err(Error::invalid(
                "leaf's neighbour is not a degree-3 hidden node",
            ));
        }
        let others: Vec<NodeId> = self.adj[h].iter().copied().filter(|&x| x != leaf).collect();

        let mut map = vec![usize::MAX; self.nodes.len()];
        let mut out = LatentTree::new();
        for v in 0..self.nodes.len() {
            if v == leaf || v == h {
                continue;
            }
            out.nodes.push(self.nodes[v].clone());
            out.adj.push(Vec::new());
            map[v] = out.nodes.len() - 1;
        }
        out.leaves = self
            .leaves
            .iter()
            .filter(|&&l| l != leaf)
            .map(|&l| map[l])
            .collect();
        for (u, v) in self.edges() {
            if u == leaf || v == leaf || u == h || v == h {
                continue;
            }
            out.add_edge(map[u], map[v])?;
        }
        out.add_edge(map[others[0]], map[others[1]])?;
        Ok(out)
    }

    pub fn parameters(&self) -> Option<&Parameters> {
        self.params.as_ref()
    }

    pub fn is_parameterized(&self) -> bool {
        self.params.is_some()
    }

    pub(crate) fn set_parameters(&mut self, params: Parameters) {
        self.params = Some(params);
    }

    /// Copy of the topology without parameters.
    pub fn topology(&self) -> LatentTree {
        LatentTree {
            params: None,
            ..self.clone()
        }
    }

    /// Lowest-id hidden node.
    pub fn default_root(&self) -> Option<NodeId> {
        (0..self.nodes.len()).find(|&v| !self.is_leaf(v))
    }

    /// Longest path (in edges) between two hidden nodes.
    pub fn hidden_diameter(&self) -> usize {
        let hidden = self.hidden();
        let mut best = 0;
        for &h in &hidden {
            let dist = self.distances_from(h);
            for &g in &hidden {
                best = best.max(dist[g]);
            }
        }
        best
    }

    /// Edge-count distances from `start` to every node.
    pub fn distances_from(&self, start: NodeId) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.nodes.len()];
        dist[start] = 0;
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            for &v in &self.adj[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// The 4-leaf tree for a resolved quartet: `names[p]` and `names[q]` share
    /// one hidden node for the first pair of `rel`, the other pair the second.
    pub fn quartet_tree(names: [&str; 4], rel: QuartetRelation) -> LatentTree {
        let mut t = LatentTree::new();
        let leaves: Vec<NodeId> = names.iter().map(|n| t.add_leaf(*n)).collect();
        let [[a, b], [c, d]] = rel.pairs();
        let h = t.add_hidden("");
        let g = t.add_hidden("");
        for (x, y) in [
            (h, leaves[a]),
            (h, leaves[b]),
            (g, leaves[c]),
            (g, leaves[d]),
            (h, g),
        ] {
            t.add_edge(x, y).expect("fresh nodes");
        }
        t
    }
}
