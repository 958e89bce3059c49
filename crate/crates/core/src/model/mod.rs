//! Target and drafter abstractions plus the concrete desk-scale families.
//!
//! A [`TargetModel`] returns, for a prefix and the grid position being
//! predicted, both the next-token distribution `q` and the hidden feature
//! that relaxation compares. A [`Drafter`] only returns `p`.

mod drafter;
mod gridworld;
mod spec;
mod tabular;

use std::sync::Arc;

pub use drafter::{LinearDrafter, LinearDrafterSpec, TargetAsDrafter};
pub use gridworld::{GridWorld, GridWorldSpec};
pub use spec::{load_model_spec, save_model_spec, ModelSpec, FORMAT_VERSION};
pub use tabular::{all_windows, FeatureRow, TableRow, TabularModel, TabularModelSpec, START_PAD};

use crate::error::{Error, Result};
use crate::prob::{FeatureVec, GridPos, ProbDist, TokenId, PROB_TOL};

/// Target-model output for one context: next-token distribution and feature.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetEval {
    pub dist: ProbDist,
    pub feature: FeatureVec,
}

pub trait TargetModel: Send + Sync {
    fn vocab(&self) -> usize;
    fn feature_dim(&self) -> usize;
    /// Grid side for position-aware models; `None` when positions are ignored.
    fn grid_side(&self) -> Option<usize>;
    fn eval(&self, prefix: &[TokenId], pos: GridPos) -> Result<TargetEval>;
}

pub trait Drafter: Send + Sync {
    fn vocab(&self) -> usize;
    fn grid_side(&self) -> Option<usize>;
    fn draft_dist(&self, prefix: &[TokenId], pos: GridPos) -> Result<ProbDist>;
}

fn check_prefix(prefix: &[TokenId], vocab: usize) -> Result<()> {
    match prefix.iter().find(|t| t.0 >= vocab) {
        Some(t) => Err(Error::TokenOutOfRange { token: t.0, vocab }),
        None => Ok(()),
    }
}

/// Evaluates the target after validating the prefix against its vocabulary.
pub fn target_eval(model: &dyn TargetModel, prefix: &[TokenId], pos: GridPos) -> Result<TargetEval> {
    check_prefix(prefix, model.vocab())?;
    model.eval(prefix, pos)
}

pub fn drafter_eval(drafter: &dyn Drafter, prefix: &[TokenId], pos: GridPos) -> Result<ProbDist> {
    check_prefix(prefix, drafter.vocab())?;
    drafter.draft_dist(prefix, pos)
}

/// Side of the square layout used to assign grid positions to a sequence of
/// `len` tokens when neither model fixes one.
pub fn layout_side(target: Option<usize>, drafter: Option<usize>, len: usize) -> Result<usize> {
    let side = match (target, drafter) {
        (Some(a), Some(b)) if a != b => {
            return Err(Error::config(format!("target grid side {a} != drafter grid side {b}")))
        }
        (Some(a), _) | (None, Some(a)) => a,
        (None, None) => (len.max(1) as f64).sqrt().ceil() as usize,
    };
    if side * side < len {
        return Err(Error::config(format!("sequence length {len} exceeds the {side}x{side} grid")));
    }
    Ok(side)
}

/// Grid position for flat sequence index `index`, clamped to the final cell.
///
/// Nodes at the last sequence position still need a feature (for the
/// similarity sets) even though no token follows them.
pub fn position_for(index: usize, side: usize) -> GridPos {
    GridPos::from_flat(index.min(side * side - 1), side)
}

/// Exact distribution over all length-`len` sequences, indexed in base-`V`
/// (first token most significant).
#[derive(Debug, Clone)]
pub struct SequenceDistribution {
    pub vocab: usize,
    pub len: usize,
    pub probs: Vec<f64>,
}

impl SequenceDistribution {
    pub fn index_of(&self, seq: &[TokenId]) -> usize {
        debug_assert_eq!(seq.len(), self.len);
        seq.iter().fold(0, |acc, t| acc * self.vocab + t.0)
    }

    pub fn sequence_at(&self, mut index: usize) -> Vec<TokenId> {
        let mut seq = vec![TokenId(0); self.len];
        for slot in seq.iter_mut().rev() {
            *slot = TokenId(index % self.vocab);
            index /= self.vocab;
        }
        seq
    }

    pub fn get(&self, seq: &[TokenId]) -> f64 {
        self.probs[self.index_of(seq)]
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }
}

pub const ENUMERATION_LIMIT: usize = 1_000_000;

/// Chain-rule enumeration of the target's distribution over sequences of
/// length `len`.
pub fn enumerate_ar_distribution(model: &dyn TargetModel, len: usize) -> Result<SequenceDistribution> {
    let vocab = model.vocab();
    let count = u32::try_from(len)
        .ok()
        .and_then(|l| vocab.checked_pow(l))
        .filter(|&c| c <= ENUMERATION_LIMIT)
        .ok_or(Error::TooLarge { vocab, len })?;
    let side = layout_side(model.grid_side(), None, len)?;

    let mut probs = vec![0.0; count];
    let mut prefix = Vec::with_capacity(len);
    expand(model, side, len, 1.0, &mut prefix, &mut probs, 0)?;

    let out = SequenceDistribution { vocab, len, probs };
    debug_assert!((out.total() - 1.0).abs() <= PROB_TOL * count as f64);
    Ok(out)
}

fn expand(
    model: &dyn TargetModel,
    side: usize,
    len: usize,
    mass: f64,
    prefix: &mut Vec<TokenId>,
    probs: &mut [f64],
    index: usize,
) -> Result<()> {
    if prefix.len() == len {
        probs[index] = mass;
        return Ok(());
    }
    let eval = model.eval(prefix, GridPos::from_flat(prefix.len(), side))?;
    for (t, &q) in eval.dist.as_slice().iter().enumerate() {
        prefix.push(TokenId(t));
        expand(model, side, len, mass * q, prefix, probs, index * model.vocab() + t)?;
        prefix.pop();
    }
    Ok(())
}

/// Shared handle types used by the decoding and harness layers.
pub type SharedTarget = Arc<dyn TargetModel>;
pub type SharedDrafter = Arc<dyn Drafter>;
