//! Incremental divide-and-conquer tree construction from quartet queries.
//!
//! Each new variable is placed by repeatedly splitting the set of candidate
//! attachment edges at its most balanced hidden node and asking one quartet
//! question per split, so an insertion into a tree with `i` leaves costs
//! `O(log i)` queries.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::QuartetRelation;
use crate::tree::{LatentTree, NodeId};

/// Bookkeeping for one build.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BuildTrace {
    pub quartet_test_count: usize,
    /// Quartet queries spent on each insertion after the initial quartet.
    pub insertion_depths: Vec<usize>,
    /// Every query in order: variable indices and the answer.
    pub verdicts: Vec<([usize; 4], QuartetRelation)>,
}

/// Hidden node whose largest branch holds the fewest leaves; ties go to the
/// lowest id.
pub fn choose_balanced_root(tree: &LatentTree) -> Result<NodeId> {
    let mut best: Option<(usize, NodeId)> = None;
    for h in tree.hidden() {
        let worst = tree
            .neighbors(h)
            .iter()
            .map(|&nb| tree.branch_leaves(h, nb).len())
            .max()
            .unwrap_or(0);
        if best.is_none_or(|(w, _)| worst < w) {
            best = Some((worst, h));
        }
    }
    best.map(|(_, h)| h)
        .ok_or_else(|| Error::invalid("tree has no hidden node"))
}

/// Subdivide `edge` with a fresh hidden node carrying leaf `name`.
pub fn insert_leaf(tree: &LatentTree, edge: (NodeId, NodeId), name: &str) -> Result<LatentTree> {
    let mut out = tree.clone();
    out.subdivide_with_leaf(edge.0, edge.1, name)?;
    Ok(out)
}

type Edge = (NodeId, NodeId);

fn norm_edge(u: NodeId, v: NodeId) -> Edge {
    if u < v {
        (u, v)
    } else {
        (v, u)
    }
}

/// Region edges reachable through `nb` when leaving `w`, including `(w, nb)`.
fn region_branch(
    tree: &LatentTree,
    region: &BTreeSet<Edge>,
    w: NodeId,
    nb: NodeId,
) -> BTreeSet<Edge> {
    let mut out = BTreeSet::new();
    if !region.contains(&norm_edge(w, nb)) {
        return out;
    }
    out.insert(norm_edge(w, nb));
    let mut stack = vec![(nb, w)];
    while let Some((u, from)) = stack.pop() {
        for &v in tree.neighbors(u) {
            if v != from && region.contains(&norm_edge(u, v)) {
                out.insert(norm_edge(u, v));
                stack.push((v, u));
            }
        }
    }
    out
}

/// Build a binary latent tree over `names` using `resolver`, which answers
/// quartet queries over variable indices (positions in `names`). Variables
/// are inserted in the given order; `seed` drives the choice of
/// representative leaves.
pub fn build_tree<F>(
    names: &[String],
    seed: u64,
    mut resolver: F,
) -> Result<(LatentTree, BuildTrace)>
where
    F: FnMut([usize; 4]) -> Result<QuartetRelation>,
{
    let d = names.len();
    if d < 4 {
        return Err(Error::UnsupportedSize(format!(
            "tree building needs at least 4 variables, got {d}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trace = BuildTrace::default();
    let mut ask = |q: [usize; 4], trace: &mut BuildTrace| -> Result<QuartetRelation> {
        let r = resolver(q)?;
        trace.quartet_test_count += 1;
        trace.verdicts.push((q, r));
        Ok(r)
    };

    let first = ask([0, 1, 2, 3], &mut trace)?;
    let mut tree = LatentTree::quartet_tree([&names[0], &names[1], &names[2], &names[3]], first);
    // node id -> variable index
    let mut var_of: Vec<Option<usize>> = vec![None; tree.node_count()];
    for (i, &l) in tree.leaves().iter().enumerate() {
        var_of[l] = Some(i);
    }

    for x in 4..d {
        let mut region: BTreeSet<Edge> = tree.edges().into_iter().collect();
        let mut depth = 0;
        while region.len() > 1 {
            let (w, dirs) = region_centroid(&tree, &region)?;
            let mut q = [x, 0, 0, 0];
            for (j, &nb) in dirs.iter().enumerate() {
                let leaves = tree.branch_leaves(w, nb);
                let pick = leaves[rng.gen_range(0..leaves.len())];
                q[j + 1] = var_of[pick].expect("leaf has a variable");
            }
            let rel = ask(q, &mut trace)?;
            depth += 1;
            let j = rel.partner_of_first() - 1;
            region = region_branch(&tree, &region, w, dirs[j]);
        }
        let &(u, v) = region.iter().next().expect("region keeps one edge");
        let (_, leaf) = tree.subdivide_with_leaf(u, v, names[x].clone())?;
        var_of.resize(tree.node_count(), None);
        var_of[leaf] = Some(x);
        trace.insertion_depths.push(depth);
    }
    Ok((tree, trace))
}

/// Hidden node with all three edges in `region` minimizing the largest
/// region branch; returns it with its neighbours in ascending id order.
fn region_centroid(tree: &LatentTree, region: &BTreeSet<Edge>) -> Result<(NodeId, [NodeId; 3])> {
    let mut best: Option<(usize, NodeId, [NodeId; 3])> = None;
    for w in tree.hidden() {
        let nbs = tree.neighbors(w);
        if nbs.len() != 3 || !nbs.iter().all(|&nb| region.contains(&norm_edge(w, nb))) {
            continue;
        }
        let mut dirs = [nbs[0], nbs[1], nbs[2]];
        dirs.sort_unstable();
        let worst = dirs
            .iter()
            .map(|&nb| region_branch(tree, region, w, nb).len())
            .max()
            .unwrap();
        if best.is_none_or(|(b, _, _)| worst < b) {
            best = Some((worst, w, dirs));
        }
    }
    best.map(|(_, w, dirs)| (w, dirs))
        .ok_or_else(|| Error::invalid("candidate region has no internal hidden node"))
}
