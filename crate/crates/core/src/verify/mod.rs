//! Draft-tree verification.
//!
//! Both verifiers walk the tree level by level. At each level the children of
//! the last accepted node (or of the prefix) are tried in order; candidate `x`
//! is accepted when `r < min(1, q(x) / p(x))` with a fresh uniform `r`. If
//! every candidate at a level is rejected, a correction token is sampled and
//! the walk stops.
//!
//! The relaxed verifier replaces `q(x)` with `q^R(x)`: the candidate's
//! target mass plus the mass of its interchangeable siblings and then of its
//! convergent children, each set admitted only while the per-call TVD budget
//! allows. The budget starts at zero once per call and is charged whether or
//! not the candidate is then accepted.

mod relax;
mod sets;

use serde::{Deserialize, Serialize};

pub use relax::{relax_q, RelaxedDist};
pub use sets::{build_sets, SimilaritySets};

use crate::error::{Error, Result};
use crate::model::{target_eval, TargetEval, TargetModel};
use crate::prob::{residual_or_target, ProbDist, TokenId};
use crate::rng::{RngStream, UniformSource};
use crate::tree::{DraftTree, NodeId};

/// How siblings after the first are judged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SiblingMode {
    /// Every sibling faces the same `q` and `p` with its own draw.
    #[default]
    Literal,
    /// After each rejection `q <- norm([q - p]+)` and the rejected token is
    /// removed from `p` (recursive rejection sampling). Target-exact when
    /// siblings are drawn without replacement and relaxation is off.
    ResidualAdjusted,
}

impl std::str::FromStr for SiblingMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "literal" => Ok(Self::Literal),
            "residual_adjusted" | "residual-adjusted" => Ok(Self::ResidualAdjusted),
            other => Err(Error::config(format!("unknown sibling mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct RelaxConfig {
    pub tau_pos: f64,
    pub tau_seq: f64,
    pub delta: f64,
    #[serde(rename = "enableI")]
    pub enable_i: bool,
    #[serde(rename = "enableC")]
    pub enable_c: bool,
    pub sibling_mode: SiblingMode,
}

impl Default for RelaxConfig {
    fn default() -> Self {
        Self { tau_pos: 0.85, tau_seq: 0.5, delta: 0.5, enable_i: true, enable_c: true, sibling_mode: SiblingMode::Literal }
    }
}

impl RelaxConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, t) in [("tau_pos", self.tau_pos), ("tau_seq", self.tau_seq)] {
            if !(0.0..=1.01).contains(&t) {
                return Err(Error::config(format!("{name} = {t} outside [0, 1.01]")));
            }
        }
        if !(0.0..=1.0).contains(&self.delta) {
            return Err(Error::config(format!("TVD budget {} outside [0, 1]", self.delta)));
        }
        Ok(())
    }
}

/// Target evaluations for a draft tree: `root` scores level 1, and the entry
/// for node `n` carries `n`'s feature and the distribution for its children.
#[derive(Debug, Clone)]
pub struct TreeEvals {
    pub root: TargetEval,
    pub nodes: Vec<TargetEval>,
}

impl TreeEvals {
    pub fn node(&self, id: NodeId) -> &TargetEval {
        &self.nodes[id.0]
    }

    /// Distribution scoring the children of `parent`.
    pub fn dist_for(&self, parent: Option<NodeId>) -> &ProbDist {
        match parent {
            Some(id) => &self.nodes[id.0].dist,
            None => &self.root.dist,
        }
    }
}

/// One target pass over the whole tree.
pub fn evaluate_tree(target: &dyn TargetModel, tree: &DraftTree) -> Result<TreeEvals> {
    let root = target_eval(target, &tree.prefix, tree.position_of_level(1))?;
    let nodes = (0..tree.nodes.len())
        .map(|i| {
            let id = NodeId(i);
            let level = tree.node(id).level;
            target_eval(target, &tree.context_of(id), tree.position_of_level(level + 1))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TreeEvals { root, nodes })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Accept,
    Reject,
}

/// Audit record for one accept/reject decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DecisionRecord {
    pub level: usize,
    pub sibling: usize,
    pub token: TokenId,
    /// Unrelaxed target probability of the candidate.
    pub q: f64,
    pub p: f64,
    pub added_mass_i: f64,
    pub added_mass_c: f64,
    pub r: f64,
    pub decision: Decision,
    /// Budget remaining after this decision's relaxation.
    pub budget_left: f64,
}

#[derive(Debug, Clone, Default)]
pub struct VerifyOutcome {
    pub accepted_nodes: Vec<NodeId>,
    pub accepted_tokens: Vec<TokenId>,
    pub correction_token: Option<TokenId>,
    pub alpha: usize,
    pub tvd_consumed: f64,
    pub trace: Vec<DecisionRecord>,
    /// Every relaxation computed during the call.
    pub relaxations: Vec<RelaxedDist>,
}

/// Relaxation inputs for one verify call.
struct Relaxation<'a> {
    cfg: &'a RelaxConfig,
    sets: SimilaritySets,
}

fn run(
    tree: &DraftTree,
    evals: &TreeEvals,
    relaxation: Option<Relaxation<'_>>,
    sibling_mode: SiblingMode,
    rng: &mut impl UniformSource,
) -> Result<VerifyOutcome> {
    let mut out = VerifyOutcome::default();
    let mut used = 0.0;
    let mut parent: Option<NodeId> = None;

    for level in 1..=tree.depth {
        let candidates = tree.children_of(parent);
        if candidates.is_empty() {
            break;
        }
        let q = evals.dist_for(parent);
        let p = tree.draft_dist_of(parent).expect("non-leaf nodes carry a draft distribution");
        let mut q_cur = q.clone();
        let mut p_cur = p.clone();
        let mut accepted = None;

        for (sibling, &cand) in candidates.iter().enumerate() {
            let node = tree.node(cand);
            let r = rng.next_uniform();
            let (q_base, p_x) = match sibling_mode {
                SiblingMode::Literal => (q, node.drafter_prob),
                SiblingMode::ResidualAdjusted => (&q_cur, p_cur.prob(node.token)),
            };

            let (q_x, added_i, added_c) = match &relaxation {
                Some(rel) => {
                    let partners: Vec<TokenId> = rel.sets.partners(level, cand).map(|b| tree.node(b).token).collect();
                    let mut convergent: Vec<TokenId> = rel
                        .sets
                        .convergent_children(level, cand)
                        .map(|b| tree.node(b).token)
                        .filter(|t| *t != node.token && !partners.contains(t))
                        .collect();
                    convergent.sort();
                    convergent.dedup();
                    let (relaxed, ai, ac) =
                        relax::relax_tokens(q_base, node.token, &partners, &convergent, rel.cfg.delta - used);
                    used += ai + ac;
                    let q_x = relaxed.boosted_prob();
                    out.relaxations.push(relaxed);
                    (q_x, ai, ac)
                }
                None => (q_base.prob(node.token), 0.0, 0.0),
            };

            let accept = p_x > 0.0 && r < (q_x / p_x).min(1.0);
            out.trace.push(DecisionRecord {
                level,
                sibling,
                token: node.token,
                q: q_base.prob(node.token),
                p: p_x,
                added_mass_i: added_i,
                added_mass_c: added_c,
                r,
                decision: if accept { Decision::Accept } else { Decision::Reject },
                budget_left: relaxation.as_ref().map_or(0.0, |rel| rel.cfg.delta - used),
            });
            if accept {
                accepted = Some(cand);
                break;
            }
            if sibling_mode == SiblingMode::ResidualAdjusted {
                q_cur = residual_or_target(&q_cur, &p_cur)?;
                match p_cur.without(&[node.token]) {
                    Some(next) => p_cur = next,
                    None => break,
                }
            }
        }

        match accepted {
            Some(id) => {
                out.accepted_nodes.push(id);
                out.accepted_tokens.push(tree.node(id).token);
                parent = Some(id);
            }
            None => {
                let correction = match sibling_mode {
                    SiblingMode::Literal => residual_or_target(q, p)?,
                    SiblingMode::ResidualAdjusted => q_cur,
                };
                out.correction_token = Some(correction.sample_with(rng.next_uniform()));
                break;
            }
        }
    }

    out.alpha = out.accepted_tokens.len();
    out.tvd_consumed = used;
    Ok(out)
}

/// Exact speculative acceptance.
pub fn verify_vanilla(
    tree: &DraftTree,
    evals: &TreeEvals,
    sibling_mode: SiblingMode,
    rng: &mut impl UniformSource,
) -> Result<VerifyOutcome> {
    run(tree, evals, None, sibling_mode, rng)
}

/// Relaxed acceptance under `cfg`'s thresholds and TVD budget. Corrections
/// are drawn from the unrelaxed residual.
pub fn verify_cascade(
    tree: &DraftTree,
    evals: &TreeEvals,
    cfg: &RelaxConfig,
    rng: &mut impl UniformSource,
) -> Result<VerifyOutcome> {
    let sets = build_sets(tree, evals, cfg)?;
    run(tree, evals, Some(Relaxation { cfg, sets }), cfg.sibling_mode, rng)
}

/// Interchangeable verification strategy.
pub trait Verifier: Send + Sync {
    fn name(&self) -> &'static str;
    fn verify(&self, tree: &DraftTree, evals: &TreeEvals, rng: &mut RngStream) -> Result<VerifyOutcome>;
}

#[derive(Debug, Clone, Default)]
pub struct VanillaVerifier {
    pub sibling_mode: SiblingMode,
}

impl Verifier for VanillaVerifier {
    fn name(&self) -> &'static str {
        "vanilla"
    }

    fn verify(&self, tree: &DraftTree, evals: &TreeEvals, rng: &mut RngStream) -> Result<VerifyOutcome> {
        verify_vanilla(tree, evals, self.sibling_mode, rng)
    }
}

#[derive(Debug, Clone, Default)]
pub struct CascadeVerifier {
    pub cfg: RelaxConfig,
}

impl Verifier for CascadeVerifier {
    fn name(&self) -> &'static str {
        "cascade"
    }

    fn verify(&self, tree: &DraftTree, evals: &TreeEvals, rng: &mut RngStream) -> Result<VerifyOutcome> {
        verify_cascade(tree, evals, &self.cfg, rng)
    }
}
