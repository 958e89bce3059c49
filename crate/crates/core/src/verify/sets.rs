use std::collections::BTreeSet;

use super::{RelaxConfig, TreeEvals};
use crate::error::Result;
use crate::prob::cosine_sim;
use crate::tree::{DraftTree, NodeId};

/// Interchangeable sibling pairs per level and convergent parent/child pairs
/// per consecutive level pair.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimilaritySets {
    /// `inter[l - 1]`: unordered sibling pairs `(a, b)`, `a < b`, at level `l`.
    pub inter: Vec<BTreeSet<(NodeId, NodeId)>>,
    /// `conv[l - 1]`: pairs `(a, b)` with `a` at level `l` and `b` a child of `a`.
    pub conv: Vec<BTreeSet<(NodeId, NodeId)>>,
}

impl SimilaritySets {
    pub fn empty(depth: usize) -> Self {
        Self { inter: vec![BTreeSet::new(); depth], conv: vec![BTreeSet::new(); depth] }
    }

    pub fn is_interchangeable(&self, level: usize, a: NodeId, b: NodeId) -> bool {
        let key = if a < b { (a, b) } else { (b, a) };
        self.inter.get(level - 1).is_some_and(|s| s.contains(&key))
    }

    /// Siblings of `node` (at `level`) that share its set membership.
    pub fn partners(&self, level: usize, node: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.inter[level - 1].iter().filter_map(move |&(a, b)| {
            if a == node {
                Some(b)
            } else if b == node {
                Some(a)
            } else {
                None
            }
        })
    }

    /// Children of `node` (at `level`) whose features converge with it.
    pub fn convergent_children(&self, level: usize, node: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.conv[level - 1].range((node, NodeId(0))..=(node, NodeId(usize::MAX))).map(|&(_, b)| b)
    }

    pub fn inter_len(&self) -> usize {
        self.inter.iter().map(BTreeSet::len).sum()
    }

    pub fn conv_len(&self) -> usize {
        self.conv.iter().map(BTreeSet::len).sum()
    }
}

/// Builds both sets from the per-node target features.
///
/// Sibling pairs enter `I` when their cosine is `>= tau_pos`; a node and
/// each of its children enter `C` when their cosine is `>= tau_seq`.
pub fn build_sets(tree: &DraftTree, evals: &TreeEvals, cfg: &RelaxConfig) -> Result<SimilaritySets> {
    let mut sets = SimilaritySets::empty(tree.depth);
    let groups = std::iter::once(None).chain((0..tree.nodes.len()).map(|i| Some(NodeId(i))));
    for parent in groups {
        let siblings = tree.children_of(parent);
        if siblings.is_empty() {
            continue;
        }
        let level = tree.node(siblings[0]).level;
        if cfg.enable_i {
            for (i, &a) in siblings.iter().enumerate() {
                for &b in &siblings[i + 1..] {
                    if cosine_sim(&evals.node(a).feature, &evals.node(b).feature)? >= cfg.tau_pos {
                        sets.inter[level - 1].insert((a.min(b), a.max(b)));
                    }
                }
            }
        }
        if cfg.enable_c {
            if let Some(p) = parent {
                let plevel = tree.node(p).level;
                for &b in siblings {
                    if cosine_sim(&evals.node(p).feature, &evals.node(b).feature)? >= cfg.tau_seq {
                        sets.conv[plevel - 1].insert((p, b));
                    }
                }
            }
        }
    }
    Ok(sets)
}
