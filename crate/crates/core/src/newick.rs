//! Newick reading and writing for unrooted binary latent trees.
//!
//! Output is rooted at the balanced hidden node, children ordered by their
//! smallest leaf name, hidden nodes labeled `H1`, `H2`, ... in preorder.
//! Input accepts branch lengths, quoted labels and bracket comments;
//! degree-2 nodes (including a bifurcating root) are suppressed.

use crate::builder::choose_balanced_root;
use crate::error::{Error, Result};
use crate::tree::{LatentTree, NodeId};

fn quote(name: &str) -> String {
    let plain = !name.is_empty()
        && name
            .chars()
            .all(|c| !c.is_whitespace() && !"()[]':;,".contains(c));
    if plain {
        name.to_string()
    } else {
        format!("'{}'", name.replace('\'', "''"))
    }
}

pub fn to_newick(tree: &LatentTree) -> Result<String> {
    tree.validate()?;
    let leaves = tree.leaves();
    match leaves.len() {
        0 => return Err(Error::invalid("empty tree")),
        1 => return Ok(format!("{};", quote(&tree.node(leaves[0]).name))),
        2 => {
            let mut names = tree.leaf_names();
            names.sort();
            return Ok(format!("({},{});", quote(&names[0]), quote(&names[1])));
        }
        _ => {}
    }
    let root = choose_balanced_root(tree)?;
    let mut counter = 0;
    let mut out = String::new();
    write_node(tree, root, None, &mut counter, &mut out);
    out.push(';');
    Ok(out)
}

fn smallest_leaf(tree: &LatentTree, from: NodeId, start: NodeId) -> String {
    tree.branch_leaves(from, start)
        .into_iter()
        .map(|l| tree.node(l).name.clone())
        .min()
        .unwrap_or_default()
}

fn write_node(
    tree: &LatentTree,
    v: NodeId,
    parent: Option<NodeId>,
    counter: &mut usize,
    out: &mut String,
) {
    if tree.is_leaf(v) {
        out.push_str(&quote(&tree.node(v).name));
        return;
    }
    *counter += 1;
    let label = format!("H{counter}");
    let mut kids: Vec<(String, NodeId)> = tree
        .neighbors(v)
        .iter()
        .filter(|&&c| Some(c) != parent)
        .map(|&c| (smallest_leaf(tree, v, c), c))
        .collect();
    kids.sort();
    out.push('(');
    for (i, (_, c)) in kids.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        write_node(tree, *c, Some(v), counter, out);
    }
    out.push(')');
    out.push_str(&label);
}

struct PNode {
    label: String,
    children: Vec<PNode>,
    offset: usize,
}

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            offset: self.pos,
            message: msg.into(),
        }
    }

    fn skip_ws(&mut self) -> Result<()> {
        loop {
            while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.peek() == Some(b'[') {
                match self.s[self.pos..].iter().position(|&c| c == b']') {
                    Some(end) => self.pos += end + 1,
                    None => return Err(self.err("unterminated comment")),
                }
            } else {
                return Ok(());
            }
        }
    }

    fn peek(&self) -> Option<u8> {
        self.s.get(self.pos).copied()
    }

    fn subtree(&mut self) -> Result<PNode> {
        self.skip_ws()?;
        let offset = self.pos;
        let mut children = Vec::new();
        if self.peek() == Some(b'(') {
            self.pos += 1;
            loop {
                children.push(self.subtree()?);
                self.skip_ws()?;
                match self.peek() {
                    Some(b',') => self.pos += 1,
                    Some(b')') => {
                        self.pos += 1;
                        break;
                    }
                    Some(c) => {
                        return Err(self.err(format!("expected ',' or ')', found '{}'", c as char)))
                    }
                    None => return Err(self.err("unexpected end of input")),
                }
            }
        }
        let label = self.label()?;
        self.skip_ws()?;
        if self.peek() == Some(b':') {
            self.pos += 1;
            self.skip_ws()?;
            let start = self.pos;
            while self
                .peek()
                .is_some_and(|c| c.is_ascii_digit() || b"+-.eE".contains(&c))
            {
                self.pos += 1;
            }
            let text = std::str::from_utf8(&self.s[start..self.pos]).unwrap_or("");
            if text.parse::<f64>().is_err() {
                self.pos = start;
                return Err(self.err("malformed branch length"));
            }
        }
        Ok(PNode {
            label,
            children,
            offset,
        })
    }

    fn label(&mut self) -> Result<String> {
        self.skip_ws()?;
        if self.peek() == Some(b'\'') {
            self.pos += 1;
            let mut bytes = Vec::new();
            loop {
                match self.peek() {
                    None => return Err(self.err("unterminated quoted label")),
                    Some(b'\'') => {
                        if self.s.get(self.pos + 1) == Some(&b'\'') {
                            bytes.push(b'\'');
                            self.pos += 2;
                        } else {
                            self.pos += 1;
                            break;
                        }
                    }
                    Some(c) => {
                        bytes.push(c);
                        self.pos += 1;
                    }
                }
            }
            return String::from_utf8(bytes).map_err(|_| self.err("label is not UTF-8"));
        }
        let start = self.pos;
        while self
            .peek()
            .is_some_and(|c| !c.is_ascii_whitespace() && !b"()[]':;,".contains(&c))
        {
            self.pos += 1;
        }
        String::from_utf8(self.s[start..self.pos].to_vec())
            .map_err(|_| self.err("label is not UTF-8"))
    }
}

/// Parse a single Newick tree into an unrooted latent tree. Leaves are
/// numbered in order of appearance.
pub fn from_newick(text: &str) -> Result<LatentTree> {
    let mut p = Parser {
        s: text.as_bytes(),
        pos: 0,
    };
    let root = p.subtree()?;
    p.skip_ws()?;
    if p.peek() != Some(b';') {
        return Err(p.err("expected ';'"));
    }
    p.pos += 1;
    p.skip_ws()?;
    if p.pos != p.s.len() {
        return Err(p.err("trailing characters after ';'"));
    }

    // flatten into a general graph
    let mut labels: Vec<(String, bool)> = Vec::new();
    let mut edges: Vec<(usize, usize)> = Vec::new();
    let mut stack: Vec<(&PNode, Option<usize>)> = vec![(&root, None)];
    while let Some((node, parent)) = stack.pop() {
        let leaf = node.children.is_empty();
        if leaf && node.label.is_empty() {
            return Err(Error::Parse {
                offset: node.offset,
                message: "unlabeled leaf".into(),
            });
        }
        let id = labels.len();
        labels.push((node.label.clone(), leaf));
        if let Some(par) = parent {
            edges.push((par, id));
        }
        for c in node.children.iter().rev() {
            stack.push((c, Some(id)));
        }
    }

    let count = labels.len();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); count];
    for &(u, v) in &edges {
        adj[u].push(v);
        adj[v].push(u);
    }
    let mut alive = vec![true; count];
    loop {
        let mut changed = false;
        for v in 0..count {
            if !alive[v] || labels[v].1 {
                continue;
            }
            match adj[v].len() {
                0 | 1 => {
                    let nb = adj[v].clone();
                    for u in nb {
                        adj[u].retain(|&x| x != v);
                    }
                    adj[v].clear();
                    alive[v] = false;
                    changed = true;
                }
                2 => {
                    let (a, b) = (adj[v][0], adj[v][1]);
                    adj[a].retain(|&x| x != v);
                    adj[b].retain(|&x| x != v);
                    adj[a].push(b);
                    adj[b].push(a);
                    adj[v].clear();
                    alive[v] = false;
                    changed = true;
                }
                3 => {}
                deg => {
                    return Err(Error::invalid(format!(
                        "node {} has degree {deg}; only binary trees are supported",
                        labels[v].0
                    )))
                }
            }
        }
        if !changed {
            break;
        }
    }

    let mut tree = LatentTree::new();
    let mut map = vec![usize::MAX; count];
    for v in 0..count {
        if alive[v] && labels[v].1 {
            if tree.leaf_by_name(&labels[v].0).is_some() {
                return Err(Error::invalid(format!("duplicate leaf {}", labels[v].0)));
            }
            map[v] = tree.add_leaf(labels[v].0.clone());
        }
    }
    for v in 0..count {
        if alive[v] && !labels[v].1 {
            map[v] = tree.add_hidden(labels[v].0.clone());
        }
    }
    for v in 0..count {
        for &u in &adj[v] {
            if v < u {
                tree.add_edge(map[v], map[u])?;
            }
        }
    }
    tree.validate()?;
    Ok(tree)
}
