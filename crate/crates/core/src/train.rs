//! Drafter distillation with convergence-reweighted soft cross-entropy.
//!
//! Positions whose target feature lines up with the next position's feature
//! get soft-CE weight `c`, all others weight 1. A hard CE term against the
//! token the target actually sampled is added with weight `hardCEWeight`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decode::{ArStrategy, DecodeStrategy};
use crate::error::{Error, Result};
use crate::model::{layout_side, position_for, target_eval, LinearDrafterSpec, TargetModel};
use crate::prob::{cosine_sim, FeatureVec, GridPos, ProbDist, TokenId};
use crate::rng::{derive_seed, RngStream};

/// Floor applied to drafter probabilities inside logarithms.
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct TrainConfig {
    pub c: f64,
    pub tau_seq_train: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    #[serde(rename = "hardCEWeight")]
    pub hard_ce_weight: f64,
    pub seed: u64,
    /// Number of target rollouts used as training data.
    pub sequences: usize,
    /// Rollout length; defaults to the full grid.
    pub sequence_len: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            c: 2.0,
            tau_seq_train: 0.5,
            learning_rate: 0.5,
            epochs: 200,
            hard_ce_weight: 1.0,
            seed: 0,
            sequences: 8,
            sequence_len: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c >= 1.0 && self.c.is_finite()) {
            return Err(Error::config(format!("c = {} must be >= 1", self.c)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(format!("learning rate {} must be > 0", self.learning_rate)));
        }
        if !(self.hard_ce_weight >= 0.0 && self.hard_ce_weight.is_finite()) {
            return Err(Error::config("hardCEWeight must be finite and >= 0"));
        }
        if self.sequences == 0 {
            return Err(Error::config("need at least one training sequence"));
        }
        Ok(())
    }
}

/// One position of a target rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    pub prefix: Vec<TokenId>,
    pub target_dist: ProbDist,
    pub target_feature: FeatureVec,
    pub ground_truth: TokenId,
    pub pos: GridPos,
}

/// Soft-CE weights for one rollout ordered by position: `c` where the
/// feature at `k` has cosine `>= tau` with the feature at `k + 1`, else 1.
/// The final position has no successor and always gets 1.
pub fn mark_convergent(samples: &[TrainSample], c: f64, tau_seq_train: f64) -> Result<Vec<f64>> {
    let mut w = Vec::with_capacity(samples.len());
    for pair in samples.windows(2) {
        let cos = cosine_sim(&pair[0].target_feature, &pair[1].target_feature)?;
        w.push(if cos >= tau_seq_train { c } else { 1.0 });
    }
    if !samples.is_empty() {
        w.push(1.0);
    }
    Ok(w)
}

/// Rolls the target out from the empty prefix and records every position.
pub fn rollout_samples(target: &dyn TargetModel, len: usize, side: usize, seed: u64) -> Result<Vec<TrainSample>> {
    let seq = ArStrategy.decode(target, None, len, &mut RngStream::new(seed), &mut ())?.tokens;
    (0..len)
        .map(|k| {
            let pos = position_for(k, side);
            let eval = target_eval(target, &seq[..k], pos)?;
            Ok(TrainSample {
                prefix: seq[..k].to_vec(),
                target_dist: eval.dist,
                target_feature: eval.feature,
                ground_truth: seq[k],
                pos,
            })
        })
        .collect()
}

/// Training data for `cfg`: per-rollout samples and their weights,
/// concatenated in rollout order. Depends only on `cfg.seed`,
/// `cfg.sequences` and the rollout length.
pub fn training_set(target: &dyn TargetModel, cfg: &TrainConfig) -> Result<(Vec<TrainSample>, Vec<f64>, usize)> {
    let (len, side) = rollout_shape(target, cfg)?;
    let rollouts = (0..cfg.sequences as u64)
        .into_par_iter()
        .map(|i| rollout_samples(target, len, side, derive_seed(cfg.seed, i)))
        .collect::<Result<Vec<_>>>()?;
    let mut samples = Vec::with_capacity(len * cfg.sequences);
    let mut weights = Vec::with_capacity(len * cfg.sequences);
    for r in rollouts {
        weights.extend(mark_convergent(&r, cfg.c, cfg.tau_seq_train)?);
        samples.extend(r);
    }
    Ok((samples, weights, side))
}

fn rollout_shape(target: &dyn TargetModel, cfg: &TrainConfig) -> Result<(usize, usize)> {
    let len = match (cfg.sequence_len, target.grid_side()) {
        (Some(l), _) => l,
        (None, Some(side)) => side * side,
        (None, None) => return Err(Error::config("sequence length is required for models without a grid")),
    };
    if len == 0 {
        return Err(Error::config("sequence length must be positive"));
    }
    Ok((len, layout_side(target.grid_side(), None, len)?))
}

/// Mean weighted loss over `batch` and its gradient with respect to the
/// drafter parameters, laid out as `weights` followed by `bias`.
pub fn loss_and_grad(
    drafter: &LinearDrafterSpec,
    batch: &[TrainSample],
    weights: &[f64],
    hard_ce_weight: f64,
) -> Result<(f64, Vec<f64>)> {
    if batch.len() != weights.len() {
        return Err(Error::LengthMismatch { left: batch.len(), right: weights.len() });
    }
    if batch.is_empty() {
        return Ok((0.0, vec![0.0; drafter.param_count()]));
    }
    let (v, d) = (drafter.vocab, drafter.d);
    let mut grad = vec![0.0; drafter.param_count()];
    let mut loss = 0.0;
    for (s, &w) in batch.iter().zip(weights) {
        if s.target_dist.len() != v {
            return Err(Error::LengthMismatch { left: s.target_dist.len(), right: v });
        }
        let active = drafter.active_context(&s.prefix, s.pos)?;
        let p = ProbDist::softmax(&drafter.logits_for(&active))?;
        let q = s.target_dist.as_slice();
        let soft: f64 = q.iter().zip(p.as_slice()).map(|(qi, pi)| -qi * pi.max(LOG_FLOOR).ln()).sum();
        let hard = -p.prob(s.ground_truth).max(LOG_FLOOR).ln();
        loss += w * soft + hard_ce_weight * hard;

        for (tok, &pt) in p.as_slice().iter().enumerate() {
            let gt = if tok == s.ground_truth.0 { 1.0 } else { 0.0 };
            let g = w * (pt - q[tok]) + hard_ce_weight * (pt - gt);
            for &a in &active {
                grad[tok * d + a] += g;
            }
            grad[v * d + tok] += g;
        }
    }
    let n = batch.len() as f64;
    if !loss.is_finite() {
        return Err(Error::NonFinite("training loss".into()));
    }
    grad.iter_mut().for_each(|g| *g /= n);
    Ok((loss / n, grad))
}

/// Full-batch gradient descent in place. Returns the loss before each step
/// followed by the final loss.
pub fn fit(
    drafter: &mut LinearDrafterSpec,
    samples: &[TrainSample],
    weights: &[f64],
    cfg: &TrainConfig,
) -> Result<Vec<f64>> {
    let mut history = Vec::with_capacity(cfg.epochs + 1);
    let split = drafter.weights.len();
    for _ in 0..cfg.epochs {
        let (loss, grad) = loss_and_grad(drafter, samples, weights, cfg.hard_ce_weight)?;
        history.push(loss);
        for (w, g) in drafter.weights.iter_mut().zip(&grad[..split]) {
            *w -= cfg.learning_rate * g;
        }
        for (b, g) in drafter.bias.iter_mut().zip(&grad[split..]) {
            *b -= cfg.learning_rate * g;
        }
    }
    history.push(loss_and_grad(drafter, samples, weights, cfg.hard_ce_weight)?.0);
    Ok(history)
}

/// Trains a linear drafter from zero initialization on target rollouts.
pub fn train_drafter(target: &dyn TargetModel, cfg: &TrainConfig) -> Result<LinearDrafterSpec> {
    cfg.validate()?;
    let (samples, weights, side) = training_set(target, cfg)?;
    let mut drafter = LinearDrafterSpec::zeros(target.vocab(), side);
    fit(&mut drafter, &samples, &weights, cfg)?;
    Ok(drafter)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{GridWorld, GridWorldSpec};

    fn sample(q: &[f64], f: &[f64], gt: usize) -> TrainSample {
        TrainSample {
            prefix: vec![],
            target_dist: ProbDist::new(q.to_vec()).unwrap(),
            target_feature: FeatureVec(f.to_vec()),
            ground_truth: TokenId(gt),
            pos: GridPos::new(0, 0),
        }
    }

    fn grid() -> GridWorld {
        GridWorldSpec::desk_default().build().unwrap()
    }

    #[test]
    fn identical_features_are_all_convergent() {
        let s = vec![sample(&[0.5, 0.5], &[1.0, 2.0], 0); 4];
        assert_eq!(mark_convergent(&s, 2.0, 0.5).unwrap(), vec![2.0, 2.0, 2.0, 1.0]);
        assert_eq!(mark_convergent(&s, 2.0, 1.01).unwrap(), vec![1.0; 4]);
        assert!(mark_convergent(&[], 2.0, 0.5).unwrap().is_empty());
    }

    #[test]
    fn zero_feature_is_an_error() {
        let s = vec![sample(&[0.5, 0.5], &[0.0, 0.0], 0), sample(&[0.5, 0.5], &[1.0, 0.0], 0)];
        assert!(matches!(mark_convergent(&s, 2.0, 0.5), Err(Error::ZeroNormFeature)));
    }

    #[test]
    fn weights_drop_at_region_boundaries() {
        let g = grid();
        let s = rollout_samples(&g, 64, 8, 11).unwrap();
        let w = mark_convergent(&s, 2.0, 0.5).unwrap();
        for k in 0..63 {
            let crosses = g.region_at(s[k].pos).unwrap() != g.region_at(s[k + 1].pos).unwrap();
            assert_eq!(w[k] == 1.0, crosses, "position {k}");
        }
        assert_eq!(w[63], 1.0);
    }

    #[test]
    fn soft_term_single_position() {
        // V = 2, q = [1, 0], zero drafter gives p = [0.5, 0.5].
        let d = LinearDrafterSpec::zeros(2, 1);
        let (loss, _) = loss_and_grad(&d, &[sample(&[1.0, 0.0], &[1.0], 0)], &[2.0], 0.0).unwrap();
        assert!((loss - 2.0 * std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn soft_gradient_vanishes_at_target() {
        let d = LinearDrafterSpec::zeros(2, 1);
        let (_, grad) = loss_and_grad(&d, &[sample(&[0.5, 0.5], &[1.0], 0)], &[3.0], 0.0).unwrap();
        assert!(grad.iter().all(|g| g.abs() < 1e-15));
    }

    #[test]
    fn zero_epochs_is_uniform() {
        let cfg = TrainConfig { epochs: 0, sequences: 1, ..TrainConfig::default() };
        assert_eq!(train_drafter(&grid(), &cfg).unwrap(), LinearDrafterSpec::zeros(32, 8));
    }

    #[test]
    fn c_changes_weights_not_data() {
        let g = grid();
        let base = TrainConfig { epochs: 5, sequences: 2, ..TrainConfig::default() };
        let one = TrainConfig { c: 1.0, ..base.clone() };
        let (s2, w2, _) = training_set(&g, &base).unwrap();
        let (s1, w1, _) = training_set(&g, &one).unwrap();
        assert_eq!(s1, s2);
        assert_ne!(w1, w2);
        assert_ne!(train_drafter(&g, &base).unwrap(), train_drafter(&g, &one).unwrap());
    }

    #[test]
    fn loss_non_increasing_with_small_steps() {
        let cfg = TrainConfig { learning_rate: 1e-2, epochs: 50, ..TrainConfig::default() };
        let g = grid();
        let (s, w, side) = training_set(&g, &cfg).unwrap();
        let mut d = LinearDrafterSpec::zeros(32, side);
        let hist = fit(&mut d, &s, &w, &cfg).unwrap();
        assert!(hist.windows(2).all(|p| p[1] <= p[0]), "{hist:?}");
    }

    #[test]
    fn scaling_weights_scales_soft_loss_and_gradient() {
        let g = grid();
        let s = rollout_samples(&g, 20, 8, 3).unwrap();
        let mut d = LinearDrafterSpec::zeros(32, 8);
        let mut rng = RngStream::new(9);
        d.weights.iter_mut().for_each(|w| *w = rng.next_uniform() - 0.5);
        let w = mark_convergent(&s, 2.0, 0.5).unwrap();
        let w3: Vec<f64> = w.iter().map(|x| 3.0 * x).collect();
        let (l1, g1) = loss_and_grad(&d, &s, &w, 0.0).unwrap();
        let (l3, g3) = loss_and_grad(&d, &s, &w3, 0.0).unwrap();
        assert!((l3 - 3.0 * l1).abs() < 1e-12 * l3.abs());
        for (a, b) in g1.iter().zip(&g3) {
            assert!((b - 3.0 * a).abs() < 1e-12);
        }
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { c: 0.5, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { learning_rate: 0.0, ..TrainConfig::default() }.validate().is_err());
    }
}
