use serde::{Deserialize, Serialize};

use super::{Drafter, SharedTarget};
use crate::error::{Error, Result};
use crate::prob::{GridPos, ProbDist, TokenId};

pub const FEATURIZER: &str = "last_token_row_col";

/// Softmax-linear drafter over the context `[onehot(last token); onehot(row);
/// onehot(col)]`, so `d = V + 2N`. `weights` is `V x d`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearDrafterSpec {
    #[serde(rename = "V")]
    pub vocab: usize,
    #[serde(rename = "N")]
    pub side: usize,
    pub d: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub featurizer: String,
}

impl LinearDrafterSpec {
    pub fn zeros(vocab: usize, side: usize) -> Self {
        let d = vocab + 2 * side;
        Self { vocab, side, d, weights: vec![0.0; vocab * d], bias: vec![0.0; vocab], featurizer: FEATURIZER.into() }
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab == 0 || self.side == 0 {
            return Err(Error::config("linear drafter needs V, N >= 1"));
        }
        if self.featurizer != FEATURIZER {
            return Err(Error::config(format!("unknown featurizer '{}'", self.featurizer)));
        }
        if self.d != self.vocab + 2 * self.side {
            return Err(Error::config(format!("d = {} but V + 2N = {}", self.d, self.vocab + 2 * self.side)));
        }
        if self.weights.len() != self.vocab * self.d {
            return Err(Error::LengthMismatch { left: self.weights.len(), right: self.vocab * self.d });
        }
        if self.bias.len() != self.vocab {
            return Err(Error::LengthMismatch { left: self.bias.len(), right: self.vocab });
        }
        if self.weights.iter().chain(&self.bias).any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("drafter parameters".into()));
        }
        Ok(())
    }

    /// Indices of the non-zero (unit) context entries for `(prefix, pos)`.
    pub fn active_context(&self, prefix: &[TokenId], pos: GridPos) -> Result<Vec<usize>> {
        if pos.row >= self.side || pos.col >= self.side {
            return Err(Error::PositionOutOfRange { pos: pos.row * self.side + pos.col, side: self.side });
        }
        let mut idx = Vec::with_capacity(3);
        if let Some(last) = prefix.last() {
            if last.0 >= self.vocab {
                return Err(Error::TokenOutOfRange { token: last.0, vocab: self.vocab });
            }
            idx.push(last.0);
        }
        idx.push(self.vocab + pos.row);
        idx.push(self.vocab + self.side + pos.col);
        Ok(idx)
    }

    pub fn logits_for(&self, active: &[usize]) -> Vec<f64> {
        (0..self.vocab)
            .map(|v| {
                let row = &self.weights[v * self.d..(v + 1) * self.d];
                self.bias[v] + active.iter().map(|&j| row[j]).sum::<f64>()
            })
            .collect()
    }

    pub fn build(self) -> Result<LinearDrafter> {
        self.validate()?;
        Ok(LinearDrafter { spec: self })
    }
}

#[derive(Debug, Clone)]
pub struct LinearDrafter {
    spec: LinearDrafterSpec,
}

impl LinearDrafter {
    pub fn spec(&self) -> &LinearDrafterSpec {
        &self.spec
    }

    pub fn into_spec(self) -> LinearDrafterSpec {
        self.spec
    }
}

impl Drafter for LinearDrafter {
    fn vocab(&self) -> usize {
        self.spec.vocab
    }

    fn grid_side(&self) -> Option<usize> {
        Some(self.spec.side)
    }

    fn draft_dist(&self, prefix: &[TokenId], pos: GridPos) -> Result<ProbDist> {
        let active = self.spec.active_context(prefix, pos)?;
        ProbDist::softmax(&self.spec.logits_for(&active))
    }
}

/// Uses a target model's own distribution as the draft distribution.
#[derive(Clone)]
pub struct TargetAsDrafter(pub SharedTarget);

impl Drafter for TargetAsDrafter {
    fn vocab(&self) -> usize {
        self.0.vocab()
    }

    fn grid_side(&self) -> Option<usize> {
        self.0.grid_side()
    }

    fn draft_dist(&self, prefix: &[TokenId], pos: GridPos) -> Result<ProbDist> {
        Ok(self.0.eval(prefix, pos)?.dist)
    }
}
