//! Leaf bipartitions and the Robinson-Foulds distance.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::tree::LatentTree;

/// One side of a split, as sorted leaf names.
pub type Split = Vec<String>;

/// Nontrivial splits, each stored as the side that does not hold the
/// lexicographically smallest leaf name.
pub type BipartitionSet = BTreeSet<Split>;

/// One canonical split per hidden-hidden edge.
pub fn bipartitions(tree: &LatentTree) -> BipartitionSet {
    let anchor = tree.leaf_names().into_iter().min();
    let mut out = BipartitionSet::new();
    let total = tree.leaf_count();
    for (u, v) in tree.edges() {
        if tree.is_leaf(u) || tree.is_leaf(v) {
            continue;
        }
        let mut side: Vec<String> = tree
            .branch_leaves(u, v)
            .into_iter()
            .map(|l| tree.node(l).name.clone())
            .collect();
        side.sort();
        if side.len() < 2 || total - side.len() < 2 {
            continue;
        }
        if anchor
            .as_ref()
            .is_some_and(|a| side.binary_search(a).is_ok())
        {
            let mine: BTreeSet<&String> = side.iter().collect();
            let mut other: Vec<String> = tree
                .leaf_names()
                .into_iter()
                .filter(|n| !mine.contains(n))
                .collect();
            other.sort();
            side = other;
        }
        out.insert(side);
    }
    out
}

/// Number of splits found in exactly one of the two trees.
pub fn robinson_foulds(a: &LatentTree, b: &LatentTree) -> Result<usize> {
    let la: BTreeSet<String> = a.leaf_names().into_iter().collect();
    let lb: BTreeSet<String> = b.leaf_names().into_iter().collect();
    if la != lb {
        return Err(Error::invalid("trees have different leaf sets"));
    }
    let sa = bipartitions(a);
    let sb = bipartitions(b);
    Ok(sa.difference(&sb).count() + sb.difference(&sa).count())
}
