//! Plain-text format for parameterized latent trees.
//!
//! ```text
//! # comment
//! node X1 observed 3
//! node H hidden 2
//! edge X1 H
//! root H
//! 0.4 0.6
//! cpt X1 H
//! 0.8 0.1
//! 0.1 0.1
//! 0.1 0.8
//! ```
//!
//! `root` is followed by one line with the root marginal. `cpt <child>
//! <parent>` is followed by one line per child state, each holding one
//! probability per parent state. Every non-root node needs a CPT whose
//! parent is its neighbour toward the root.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::Cpt;
use crate::tensor::Matrix;
use crate::tree::{LatentTree, NodeId};

fn data_err(line: usize, message: impl Into<String>) -> Error {
    Error::Data {
        line,
        message: message.into(),
    }
}

fn numbers(line: usize, text: &str) -> Result<Vec<f64>> {
    text.split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| data_err(line, format!("'{t}' is not a number")))
        })
        .collect()
}

struct PendingCpt {
    line: usize,
    child: NodeId,
    parent: NodeId,
    rows: Vec<Vec<f64>>,
}

pub fn parse_model(text: &str) -> Result<LatentTree> {
    let mut tree = LatentTree::new();
    let mut ids: HashMap<String, NodeId> = HashMap::new();
    let mut states: Vec<usize> = Vec::new();
    let mut root: Option<(usize, NodeId)> = None;
    let mut root_marginal: Option<Vec<f64>> = None;
    let mut cpts: Vec<PendingCpt> = Vec::new();

    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty())
        .collect();
    let lookup = |ids: &HashMap<String, NodeId>, line: usize, name: &str| {
        ids.get(name)
            .copied()
            .ok_or_else(|| data_err(line, format!("unknown node '{name}'")))
    };

    let mut i = 0;
    while i < lines.len() {
        let (ln, l) = lines[i];
        let tok: Vec<&str> = l.split_whitespace().collect();
        i += 1;
        match tok[0] {
            "node" => {
                let [_, name, kind, k] = tok[..] else {
                    return Err(data_err(
                        ln,
                        "expected: node <name> observed|hidden <states>",
                    ));
                };
                if ids.contains_key(name) {
                    return Err(data_err(ln, format!("duplicate node '{name}'")));
                }
                let k: usize = k
                    .parse()
                    .ok()
                    .filter(|&k| k > 0)
                    .ok_or_else(|| data_err(ln, "state count must be a positive integer"))?;
                let id = match kind {
                    "observed" => tree.add_leaf(name),
                    "hidden" => tree.add_hidden(name),
                    _ => return Err(data_err(ln, format!("unknown node kind '{kind}'"))),
                };
                ids.insert(name.to_string(), id);
                states.push(k);
            }
            "edge" => {
                let [_, a, b] = tok[..] else {
                    return Err(data_err(ln, "expected: edge <a> <b>"));
                };
                let (a, b) = (lookup(&ids, ln, a)?, lookup(&ids, ln, b)?);
                tree.add_edge(a, b)
                    .map_err(|e| data_err(ln, e.to_string()))?;
            }
            "root" => {
                let [_, name] = tok[..] else {
                    return Err(data_err(ln, "expected: root <name>"));
                };
                if root.is_some() {
                    return Err(data_err(ln, "root given twice"));
                }
                root = Some((ln, lookup(&ids, ln, name)?));
                let (ml, m) = *lines
                    .get(i)
                    .ok_or_else(|| data_err(ln, "missing root marginal"))?;
                root_marginal = Some(numbers(ml, m)?);
                i += 1;
            }
            "cpt" => {
                let [_, child, parent] = tok[..] else {
                    return Err(data_err(ln, "expected: cpt <child> <parent>"));
                };
                let child = lookup(&ids, ln, child)?;
                let parent = lookup(&ids, ln, parent)?;
                let mut rows = Vec::new();
                for _ in 0..states[child] {
                    let (rl, r) = *lines
                        .get(i)
                        .ok_or_else(|| data_err(ln, "CPT has too few rows"))?;
                    let row = numbers(rl, r)?;
                    if row.len() != states[parent] {
                        return Err(data_err(
                            rl,
                            format!("expected {} entries, got {}", states[parent], row.len()),
                        ));
                    }
                    rows.push(row);
                    i += 1;
                }
                cpts.push(PendingCpt {
                    line: ln,
                    child,
                    parent,
                    rows,
                });
            }
            other => return Err(data_err(ln, format!("unknown directive '{other}'"))),
        }
    }

    let last = lines.last().map(|l| l.0).unwrap_or(0);
    let (root_line, root) = root.ok_or_else(|| data_err(last, "no root given"))?;
    let marginal = root_marginal.unwrap_or_default();
    if marginal.len() != states[root] {
        return Err(data_err(
            root_line + 1,
            "root marginal length does not match its states",
        ));
    }
    tree.validate().map_err(|e| data_err(last, e.to_string()))?;
    let parents = tree.parents_from(root);
    let mut slots: Vec<Option<Cpt>> = vec![None; tree.node_count()];
    for c in cpts {
        if parents[c.child] != Some(c.parent) {
            return Err(data_err(
                c.line,
                "CPT parent is not the node's neighbour toward the root",
            ));
        }
        if slots[c.child].is_some() {
            return Err(data_err(c.line, "duplicate CPT"));
        }
        let m = Matrix::from_fn(c.rows.len(), states[c.parent], |a, b| c.rows[a][b]);
        slots[c.child] = Some(Cpt::new(m).map_err(|e| data_err(c.line, e.to_string()))?);
    }
    tree.parameterize(root, marginal, slots)
        .map_err(|e| data_err(last, e.to_string()))?;
    Ok(tree)
}

/// Serialize a parameterized tree in the format read by [`parse_model`].
pub fn write_model(tree: &LatentTree) -> Result<String> {
    let p = tree.parameters().ok_or(Error::Unparameterized)?;
    let name = |v: NodeId| tree.node(v).name.clone();
    let mut out = String::new();
    for v in 0..tree.node_count() {
        let kind = if tree.is_leaf(v) {
            "observed"
        } else {
            "hidden"
        };
        writeln!(out, "node {} {kind} {}", name(v), p.states(v)).unwrap();
    }
    for (u, v) in tree.edges() {
        writeln!(out, "edge {} {}", name(u), name(v)).unwrap();
    }
    let row = |vals: &mut dyn Iterator<Item = f64>| {
        vals.map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ")
    };
    writeln!(out, "root {}", name(p.root())).unwrap();
    writeln!(out, "{}", row(&mut p.root_marginal().iter().copied())).unwrap();
    for v in tree.bfs_order(p.root()).into_iter().skip(1) {
        let parent = p.parent(v).expect("non-root");
        let m = p.cpt(v).expect("non-root").matrix();
        writeln!(out, "cpt {} {}", name(v), name(parent)).unwrap();
        for r in m.row_iter() {
            writeln!(out, "{}", row(&mut r.iter().copied())).unwrap();
        }
    }
    Ok(out)
}
