//! Static tree masks and draft-tree sampling.
//!
//! Level `l` of a draft tree holds, for every node at level `l - 1` (or the
//! prefix, for `l = 1`), `widths[l - 1]` distinct candidate tokens drafted
//! from that node's context. Nodes live in one arena addressed by [`NodeId`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{position_for, Drafter};
use crate::prob::{GridPos, ProbDist, TokenId};
use crate::rng::RngStream;

pub const DEFAULT_NODE_CAP: usize = 256;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct TreeMask {
    widths: Vec<usize>,
}

impl TreeMask {
    pub fn new(widths: Vec<usize>) -> Result<Self> {
        Self::with_cap(widths, DEFAULT_NODE_CAP)
    }

    pub fn with_cap(widths: Vec<usize>, cap: usize) -> Result<Self> {
        if widths.is_empty() {
            return Err(Error::config("tree mask needs depth >= 1"));
        }
        if widths.contains(&0) {
            return Err(Error::config("tree widths must all be >= 1"));
        }
        let mask = Self { widths };
        let nodes = mask.node_count();
        if nodes > cap {
            return Err(Error::config(format!("tree mask has {nodes} nodes, cap is {cap}")));
        }
        Ok(mask)
    }

    /// Chain of `depth` single candidates (plain speculative sampling).
    pub fn chain(depth: usize) -> Result<Self> {
        Self::new(vec![1; depth])
    }

    pub fn depth(&self) -> usize {
        self.widths.len()
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn max_width(&self) -> usize {
        self.widths.iter().copied().max().unwrap_or(1)
    }

    pub fn is_chain(&self) -> bool {
        self.widths.iter().all(|&w| w == 1)
    }

    /// `sum_l prod_{m <= l} w_m`, saturating.
    pub fn node_count(&self) -> usize {
        let mut level = 1usize;
        let mut total = 0usize;
        for &w in &self.widths {
            level = level.saturating_mul(w);
            total = total.saturating_add(level);
        }
        total
    }

    /// First `depth` levels of this mask.
    pub fn truncated(&self, depth: usize) -> TreeMask {
        TreeMask { widths: self.widths[..depth.clamp(1, self.depth())].to_vec() }
    }
}

impl Default for TreeMask {
    fn default() -> Self {
        Self { widths: vec![4, 2, 2, 1, 1] }
    }
}

impl TryFrom<Vec<usize>> for TreeMask {
    type Error = Error;
    fn try_from(widths: Vec<usize>) -> Result<Self> {
        Self::new(widths)
    }
}

impl From<TreeMask> for Vec<usize> {
    fn from(m: TreeMask) -> Self {
        m.widths
    }
}

impl FromStr for TreeMask {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let widths = s
            .split(',')
            .map(|w| w.trim().parse::<usize>().map_err(|_| Error::config(format!("bad tree width '{w}' in '{s}'"))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(widths)
    }
}

impl fmt::Display for TreeMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.widths.iter().map(|w| w.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

/// How sibling candidates are chosen from the drafter distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateMode {
    /// Highest-probability tokens, descending.
    #[default]
    TopW,
    /// Sequential draws without replacement, kept in draw order.
    Sampled,
}

impl FromStr for CandidateMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "top_w" | "top-w" | "topw" => Ok(Self::TopW),
            "sampled" => Ok(Self::Sampled),
            other => Err(Error::config(format!("unknown candidate mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone)]
pub struct DraftNode {
    pub token: TokenId,
    /// Drafter probability of `token` under the parent's context.
    pub drafter_prob: f64,
    pub parent: Option<NodeId>,
    /// 1-based level.
    pub level: usize,
    pub children: Vec<NodeId>,
    /// Drafter distribution for this node's children (expanded nodes only).
    pub child_dist: Option<ProbDist>,
}

#[derive(Debug, Clone)]
pub struct DraftTree {
    pub prefix: Vec<TokenId>,
    /// Flat sequence index of level 1.
    pub start_index: usize,
    pub side: usize,
    pub depth: usize,
    /// Drafter distribution at level 1.
    pub root_dist: ProbDist,
    pub roots: Vec<NodeId>,
    pub nodes: Vec<DraftNode>,
}

impl DraftTree {
    pub fn node(&self, id: NodeId) -> &DraftNode {
        &self.nodes[id.0]
    }

    /// Children of `parent`, or the level-1 candidates for `None`.
    pub fn children_of(&self, parent: Option<NodeId>) -> &[NodeId] {
        match parent {
            Some(id) => &self.nodes[id.0].children,
            None => &self.roots,
        }
    }

    /// Drafter distribution the children of `parent` were drawn from.
    pub fn draft_dist_of(&self, parent: Option<NodeId>) -> Option<&ProbDist> {
        match parent {
            Some(id) => self.nodes[id.0].child_dist.as_ref(),
            None => Some(&self.root_dist),
        }
    }

    pub fn level(&self, level: usize) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.iter().enumerate().filter(move |(_, n)| n.level == level).map(|(i, _)| NodeId(i))
    }

    /// Root-to-node path ending at `id`.
    pub fn path_to(&self, id: NodeId) -> Vec<NodeId> {
        let mut path = vec![id];
        let mut cur = self.nodes[id.0].parent;
        while let Some(p) = cur {
            path.push(p);
            cur = self.nodes[p.0].parent;
        }
        path.reverse();
        path
    }

    /// Prefix followed by the tokens on the path to `id`.
    pub fn context_of(&self, id: NodeId) -> Vec<TokenId> {
        let mut ctx = self.prefix.clone();
        ctx.extend(self.path_to(id).into_iter().map(|n| self.nodes[n.0].token));
        ctx
    }

    /// Grid position of the tokens at `level`.
    pub fn position_of_level(&self, level: usize) -> GridPos {
        position_for(self.start_index + level - 1, self.side)
    }
}

fn choose_candidates(
    dist: &ProbDist,
    width: usize,
    level: usize,
    mode: CandidateMode,
    rng: &mut RngStream,
) -> Result<Vec<TokenId>> {
    let vocab = dist.len();
    let exhausted = || Error::VocabExhausted { level, width, vocab };
    if width > vocab {
        return Err(exhausted());
    }
    let chosen = match mode {
        CandidateMode::TopW => dist.ranked().into_iter().take(width).collect::<Vec<_>>(),
        CandidateMode::Sampled => {
            let mut remaining = dist.clone();
            let mut out = Vec::with_capacity(width);
            for i in 0..width {
                let t = remaining.sample_with(rng.next_uniform());
                out.push(t);
                if i + 1 < width {
                    remaining = remaining.without(&[t]).ok_or_else(exhausted)?;
                }
            }
            out
        }
    };
    if chosen.iter().any(|&t| dist.prob(t) <= 0.0) {
        return Err(exhausted());
    }
    Ok(chosen)
}

/// Drafts a tree following `mask` from the context `prefix`, whose next token
/// sits at flat index `start_index` of a `side x side` grid.
///
/// Returns the tree and the number of drafter passes (one per level).
pub fn sample_draft_tree(
    drafter: &dyn Drafter,
    prefix: &[TokenId],
    start_index: usize,
    side: usize,
    mask: &TreeMask,
    mode: CandidateMode,
    rng: &mut RngStream,
) -> Result<(DraftTree, usize)> {
    let root_dist = crate::model::drafter_eval(drafter, prefix, position_for(start_index, side))?;
    let mut tree = DraftTree {
        prefix: prefix.to_vec(),
        start_index,
        side,
        depth: mask.depth(),
        root_dist,
        roots: Vec::new(),
        nodes: Vec::new(),
    };

    let mut frontier: Vec<Option<NodeId>> = vec![None];
    for (li, &width) in mask.widths().iter().enumerate() {
        let level = li + 1;
        let mut next = Vec::with_capacity(frontier.len() * width);
        for parent in frontier {
            if let Some(pid) = parent {
                let ctx = tree.context_of(pid);
                let dist = drafter.draft_dist(&ctx, tree.position_of_level(level))?;
                tree.nodes[pid.0].child_dist = Some(dist);
            }
            let dist = tree.draft_dist_of(parent).expect("expanded above").clone();
            for token in choose_candidates(&dist, width, level, mode, rng)? {
                let id = NodeId(tree.nodes.len());
                tree.nodes.push(DraftNode {
                    token,
                    drafter_prob: dist.prob(token),
                    parent,
                    level,
                    children: Vec::new(),
                    child_dist: None,
                });
                match parent {
                    Some(pid) => tree.nodes[pid.0].children.push(id),
                    None => tree.roots.push(id),
                }
                next.push(Some(id));
            }
        }
        frontier = next;
    }
    Ok((tree, mask.depth()))
}

/// Prefix followed by the tokens of `accepted`, which must be a root-to-node
/// path.
pub fn flatten_accepted_path(tree: &DraftTree, accepted: &[NodeId]) -> Result<Vec<TokenId>> {
    let mut parent = None;
    let mut out = tree.prefix.clone();
    for &id in accepted {
        let node = tree.nodes.get(id.0).ok_or(Error::NotAPath)?;
        if node.parent != parent {
            return Err(Error::NotAPath);
        }
        out.push(node.token);
        parent = Some(id);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LinearDrafterSpec, TabularModelSpec, TargetAsDrafter, TargetModel, START_PAD};
    use std::sync::Arc;

    fn fixed_drafter(p: Vec<f64>) -> TargetAsDrafter {
        let v = p.len();
        let mut rows = vec![(vec![START_PAD], p.clone())];
        rows.extend((0..v as i64).map(|t| (vec![t], p.clone())));
        let m: Arc<dyn TargetModel> = Arc::new(TabularModelSpec::from_rows(v, 1, rows).build().unwrap());
        TargetAsDrafter(m)
    }

    #[test]
    fn mask_parsing_and_counts() {
        let m: TreeMask = "4,2,2,1,1".parse().unwrap();
        assert_eq!(m, TreeMask::default());
        assert_eq!(m.node_count(), 4 + 8 + 16 + 16 + 16);
        assert_eq!(m.max_width(), 4);
        assert_eq!(m.to_string(), "4,2,2,1,1");
        assert!("4,0".parse::<TreeMask>().is_err());
        assert!("".parse::<TreeMask>().is_err());
        assert!(TreeMask::new(vec![16, 16, 2]).is_err());
        assert_eq!(m.truncated(2).widths(), &[4, 2]);
    }

    #[test]
    fn top_two_of_drafter() {
        let d = fixed_drafter(vec![0.5, 0.3, 0.2]);
        let mask = TreeMask::new(vec![2]).unwrap();
        let (tree, passes) =
            sample_draft_tree(&d, &[], 0, 2, &mask, CandidateMode::TopW, &mut RngStream::new(0)).unwrap();
        assert_eq!(passes, 1);
        let toks: Vec<_> = tree.roots.iter().map(|&i| (tree.node(i).token, tree.node(i).drafter_prob)).collect();
        assert_eq!(toks, vec![(TokenId(0), 0.5), (TokenId(1), 0.3)]);
    }

    #[test]
    fn width_one_is_greedy_chain() {
        let d = fixed_drafter(vec![0.2, 0.7, 0.1]);
        let mask = TreeMask::chain(2).unwrap();
        let (tree, _) =
            sample_draft_tree(&d, &[TokenId(0)], 1, 2, &mask, CandidateMode::TopW, &mut RngStream::new(0)).unwrap();
        assert_eq!(tree.nodes.len(), 2);
        assert_eq!(tree.nodes[1].parent, Some(NodeId(0)));
        assert_eq!(flatten_accepted_path(&tree, &[NodeId(0), NodeId(1)]).unwrap(), vec![TokenId(0), TokenId(1), TokenId(1)]);
    }

    #[test]
    fn vocab_exhausted() {
        let d = fixed_drafter(vec![0.5, 0.5]);
        let mask = TreeMask::new(vec![3]).unwrap();
        let err = sample_draft_tree(&d, &[], 0, 2, &mask, CandidateMode::TopW, &mut RngStream::new(0)).unwrap_err();
        assert!(matches!(err, Error::VocabExhausted { width: 3, vocab: 2, .. }));
    }

    #[test]
    fn flatten_paths() {
        let d = fixed_drafter(vec![0.4, 0.3, 0.3]);
        let mask = TreeMask::new(vec![2, 2]).unwrap();
        let mut tree =
            sample_draft_tree(&d, &[], 0, 2, &mask, CandidateMode::TopW, &mut RngStream::new(0)).unwrap().0;
        tree.prefix = vec![TokenId(5)];
        assert_eq!(flatten_accepted_path(&tree, &[]).unwrap(), vec![TokenId(5)]);
        let child = tree.node(tree.roots[1]).children[0];
        assert_eq!(
            flatten_accepted_path(&tree, &[tree.roots[1], child]).unwrap(),
            vec![TokenId(5), TokenId(1), tree.node(child).token]
        );
        // Siblings are not ancestor-linked.
        assert!(matches!(flatten_accepted_path(&tree, &[tree.roots[0], tree.roots[1]]), Err(Error::NotAPath)));
        // A level-2 node without its parent.
        assert!(matches!(flatten_accepted_path(&tree, &[child]), Err(Error::NotAPath)));
    }

    #[test]
    fn sampled_siblings_distinct_and_replayable() {
        let d = LinearDrafterSpec::zeros(6, 4).build().unwrap();
        let mask = TreeMask::new(vec![4, 3, 2]).unwrap();
        let run = |seed| {
            let (t, _) = sample_draft_tree(&d, &[TokenId(1)], 1, 4, &mask, CandidateMode::Sampled, &mut RngStream::new(seed)).unwrap();
            t.nodes.iter().map(|n| n.token).collect::<Vec<_>>()
        };
        assert_eq!(run(3), run(3));
        let (tree, _) =
            sample_draft_tree(&d, &[TokenId(1)], 1, 4, &mask, CandidateMode::Sampled, &mut RngStream::new(3)).unwrap();
        for parent in std::iter::once(None).chain((0..tree.nodes.len()).map(|i| Some(NodeId(i)))) {
            let mut toks: Vec<_> = tree.children_of(parent).iter().map(|&c| tree.node(c).token).collect();
            let n = toks.len();
            toks.sort();
            toks.dedup();
            assert_eq!(toks.len(), n);
        }
        assert_eq!(tree.level(3).count(), 24);
    }
}
