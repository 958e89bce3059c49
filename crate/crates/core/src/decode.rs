//! Full-sequence decoding: autoregressive baseline and draft/verify cycles.
//!
//! Decoding modes are [`DecodeStrategy`] trait objects looked up by name in a
//! [`StrategyRegistry`], so new verifiers plug in without touching callers.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::harness::Metrics;
use crate::model::{layout_side, position_for, target_eval, Drafter, TargetModel};
use crate::prob::TokenId;
use crate::rng::RngStream;
use crate::tree::{sample_draft_tree, CandidateMode, DraftTree, TreeMask};
use crate::verify::{evaluate_tree, CascadeVerifier, RelaxConfig, VanillaVerifier, Verifier, VerifyOutcome};

/// Drafter cost relative to one target pass.
pub const DEFAULT_KAPPA: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeParams {
    pub mask: TreeMask,
    pub candidate_mode: CandidateMode,
    pub relax: RelaxConfig,
    pub kappa: f64,
}

impl Default for DecodeParams {
    fn default() -> Self {
        Self {
            mask: TreeMask::default(),
            candidate_mode: CandidateMode::TopW,
            relax: RelaxConfig::default(),
            kappa: DEFAULT_KAPPA,
        }
    }
}

/// Raw counters of one decoded sequence.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DecodeStats {
    pub tokens_emitted: usize,
    pub verify_calls: usize,
    pub accepted_drafts: usize,
    pub target_calls: usize,
    pub drafter_calls: usize,
    pub tvd_consumed: f64,
    pub max_call_tvd: f64,
}

impl DecodeStats {
    pub fn metrics(&self, kappa: f64) -> Metrics {
        Metrics::from_stats(self, kappa)
    }
}

#[derive(Debug, Clone)]
pub struct Decoded {
    pub tokens: Vec<TokenId>,
    pub stats: DecodeStats,
}

/// Receives every verify call as it happens.
pub trait DecodeObserver {
    fn on_verify(&mut self, _call: usize, _tree: &DraftTree, _outcome: &VerifyOutcome) -> Result<()> {
        Ok(())
    }
}

impl DecodeObserver for () {}

impl<F: FnMut(usize, &DraftTree, &VerifyOutcome) -> Result<()>> DecodeObserver for F {
    fn on_verify(&mut self, call: usize, tree: &DraftTree, outcome: &VerifyOutcome) -> Result<()> {
        self(call, tree, outcome)
    }
}

pub trait DecodeStrategy: Send + Sync {
    fn name(&self) -> &str;
    fn needs_drafter(&self) -> bool;
    fn decode(
        &self,
        target: &dyn TargetModel,
        drafter: Option<&dyn Drafter>,
        len: usize,
        rng: &mut RngStream,
        observer: &mut dyn DecodeObserver,
    ) -> Result<Decoded>;
}

/// Samples every token directly from the target.
#[derive(Debug, Clone, Default)]
pub struct ArStrategy;

impl DecodeStrategy for ArStrategy {
    fn name(&self) -> &str {
        "ar"
    }

    fn needs_drafter(&self) -> bool {
        false
    }

    fn decode(
        &self,
        target: &dyn TargetModel,
        _drafter: Option<&dyn Drafter>,
        len: usize,
        rng: &mut RngStream,
        _observer: &mut dyn DecodeObserver,
    ) -> Result<Decoded> {
        let side = layout_side(target.grid_side(), None, len)?;
        let mut tokens = Vec::with_capacity(len);
        for i in 0..len {
            let eval = target_eval(target, &tokens, position_for(i, side))?;
            tokens.push(eval.dist.sample_with(rng.next_uniform()));
        }
        let stats = DecodeStats { tokens_emitted: len, target_calls: len, ..DecodeStats::default() };
        Ok(Decoded { tokens, stats })
    }
}

/// Draft a tree, score it with one target pass, verify, repeat.
pub struct SpeculativeStrategy {
    pub mask: TreeMask,
    pub candidate_mode: CandidateMode,
    pub verifier: Box<dyn Verifier>,
}

impl DecodeStrategy for SpeculativeStrategy {
    fn name(&self) -> &str {
        self.verifier.name()
    }

    fn needs_drafter(&self) -> bool {
        true
    }

    fn decode(
        &self,
        target: &dyn TargetModel,
        drafter: Option<&dyn Drafter>,
        len: usize,
        rng: &mut RngStream,
        observer: &mut dyn DecodeObserver,
    ) -> Result<Decoded> {
        let drafter = drafter.ok_or_else(|| Error::config(format!("mode '{}' needs a drafter", self.name())))?;
        if drafter.vocab() != target.vocab() {
            return Err(Error::config(format!(
                "drafter vocabulary {} != target vocabulary {}",
                drafter.vocab(),
                target.vocab()
            )));
        }
        let side = layout_side(target.grid_side(), drafter.grid_side(), len)?;
        let mut tokens: Vec<TokenId> = Vec::with_capacity(len);
        let mut stats = DecodeStats::default();

        while tokens.len() < len {
            let depth = self.mask.depth().min(len - tokens.len());
            let mask = self.mask.truncated(depth);
            let (tree, passes) =
                sample_draft_tree(drafter, &tokens, tokens.len(), side, &mask, self.candidate_mode, rng)?;
            let evals = evaluate_tree(target, &tree)?;
            let out = self.verifier.verify(&tree, &evals, rng)?;
            observer.on_verify(stats.verify_calls, &tree, &out)?;

            stats.verify_calls += 1;
            stats.target_calls += 1;
            stats.drafter_calls += passes;
            stats.accepted_drafts += out.alpha;
            stats.tvd_consumed += out.tvd_consumed;
            stats.max_call_tvd = stats.max_call_tvd.max(out.tvd_consumed);
            tokens.extend_from_slice(&out.accepted_tokens);
            tokens.extend(out.correction_token);
        }
        stats.tokens_emitted = tokens.len();
        Ok(Decoded { tokens, stats })
    }
}

type Factory = Box<dyn Fn(&DecodeParams) -> Result<Box<dyn DecodeStrategy>> + Send + Sync>;

/// Named decoding strategies.
pub struct StrategyRegistry {
    factories: BTreeMap<String, Factory>,
}

impl StrategyRegistry {
    pub fn empty() -> Self {
        Self { factories: BTreeMap::new() }
    }

    pub fn register(
        &mut self,
        name: &str,
        factory: impl Fn(&DecodeParams) -> Result<Box<dyn DecodeStrategy>> + Send + Sync + 'static,
    ) {
        self.factories.insert(name.to_string(), Box::new(factory));
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    pub fn build(&self, name: &str, params: &DecodeParams) -> Result<Box<dyn DecodeStrategy>> {
        let factory = self.factories.get(name).ok_or_else(|| Error::UnknownMode(name.to_string()))?;
        factory(params)
    }
}

impl Default for StrategyRegistry {
    /// `ar`, `vanilla` and `cascade`.
    fn default() -> Self {
        let mut reg = Self::empty();
        reg.register("ar", |_| Ok(Box::new(ArStrategy)));
        reg.register("vanilla", |p| {
            Ok(Box::new(SpeculativeStrategy {
                mask: p.mask.clone(),
                candidate_mode: p.candidate_mode,
                verifier: Box::new(VanillaVerifier { sibling_mode: p.relax.sibling_mode }),
            }))
        });
        reg.register("cascade", |p| {
            p.relax.validate()?;
            Ok(Box::new(SpeculativeStrategy {
                mask: p.mask.clone(),
                candidate_mode: p.candidate_mode,
                verifier: Box::new(CascadeVerifier { cfg: p.relax.clone() }),
            }))
        });
        reg
    }
}

/// Decodes `len` tokens with the named mode from the default registry.
pub fn decode_sequence(
    target: &dyn TargetModel,
    drafter: Option<&dyn Drafter>,
    mode: &str,
    params: &DecodeParams,
    len: usize,
    rng: &mut RngStream,
) -> Result<(Vec<TokenId>, Metrics)> {
    let strategy = StrategyRegistry::default().build(mode, params)?;
    let decoded = strategy.decode(target, drafter, len, rng, &mut ())?;
    Ok((decoded.tokens, decoded.stats.metrics(params.kappa)))
}
