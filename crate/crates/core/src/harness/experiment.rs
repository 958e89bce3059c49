use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::heatmap::export_similarity_heatmap;
use super::metrics::{write_jsonl, Metrics, MetricsRecord, RecordKind, TraceRecord};
use crate::decode::{DecodeParams, DecodeStats, StrategyRegistry};
use crate::error::{Error, Result};
use crate::model::{load_model_spec, Drafter, TargetModel};
use crate::prob::TokenId;
use crate::rng::RngStream;
use crate::tree::{CandidateMode, TreeMask};
use crate::verify::RelaxConfig;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Outputs {
    pub metrics: Option<PathBuf>,
    pub trace: Option<PathBuf>,
    pub heatmap: Option<PathBuf>,
}

/// A fully resolved decoding experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ExperimentConfig {
    pub model: PathBuf,
    pub drafter: Option<PathBuf>,
    pub mode: String,
    pub tree: TreeMask,
    pub candidate_mode: CandidateMode,
    pub relax: RelaxConfig,
    pub kappa: f64,
    pub seeds: Vec<u64>,
    /// Sequence length; defaults to the model's full grid.
    pub len: Option<usize>,
    pub outputs: Outputs,
}

impl ExperimentConfig {
    pub fn params(&self) -> DecodeParams {
        DecodeParams {
            mask: self.tree.clone(),
            candidate_mode: self.candidate_mode,
            relax: self.relax.clone(),
            kappa: self.kappa,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::config("seed list is empty"));
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(Error::config(format!("kappa = {} must be finite and >= 0", self.kappa)));
        }
        self.relax.validate()?;
        for p in std::iter::once(&self.model).chain(&self.drafter) {
            if !p.is_file() {
                return Err(Error::config(format!("model file {} does not exist", p.display())));
            }
        }
        Ok(())
    }
}

/// Result of decoding one seed.
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub tokens: Vec<TokenId>,
    pub stats: DecodeStats,
    pub metrics: Metrics,
    pub trace: Vec<TraceRecord>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub runs: Vec<SeedRun>,
    pub aggregate: Metrics,
}

impl ExperimentResult {
    pub fn records(&self, mode: &str) -> Vec<MetricsRecord> {
        let mut out: Vec<MetricsRecord> = self
            .runs
            .iter()
            .map(|r| MetricsRecord {
                record: RecordKind::Seed,
                mode: mode.to_string(),
                seed: Some(r.seed),
                seeds: None,
                metrics: r.metrics,
            })
            .collect();
        out.push(MetricsRecord {
            record: RecordKind::Aggregate,
            mode: mode.to_string(),
            seed: None,
            seeds: Some(self.runs.len() as u64),
            metrics: self.aggregate,
        });
        out
    }
}

/// Decodes one sequence per seed, in parallel, and returns the runs in seed
/// list order. Each seed owns its own stream.
pub fn run_seeds(
    target: &dyn TargetModel,
    drafter: Option<&dyn Drafter>,
    mode: &str,
    params: &DecodeParams,
    seeds: &[u64],
    len: usize,
    keep_trace: bool,
) -> Result<ExperimentResult> {
    if seeds.is_empty() {
        return Err(Error::config("seed list is empty"));
    }
    let strategy = StrategyRegistry::default().build(mode, params)?;
    let runs = seeds
        .par_iter()
        .map(|&seed| {
            let mut trace = Vec::new();
            let mut observer = |call: usize, _: &crate::tree::DraftTree, out: &crate::verify::VerifyOutcome| {
                if keep_trace {
                    trace.extend(out.trace.iter().map(|d| TraceRecord { seed, call, decision: d.clone() }));
                }
                Ok(())
            };
            let decoded = strategy.decode(target, drafter, len, &mut RngStream::new(seed), &mut observer)?;
            Ok(SeedRun {
                seed,
                tokens: decoded.tokens,
                stats: decoded.stats,
                metrics: decoded.stats.metrics(params.kappa),
                trace,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let aggregate = Metrics::aggregate(&runs.iter().map(|r| r.metrics).collect::<Vec<_>>()).expect("seeds non-empty");
    Ok(ExperimentResult { runs, aggregate })
}

/// Loads the models, decodes every seed and writes the requested outputs.
///
/// The heatmap covers every row of the first seed's sequence.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let target = load_model_spec(&cfg.model)?.into_target()?;
    let drafter = match &cfg.drafter {
        Some(p) => Some(load_model_spec(p)?.into_drafter()?),
        None => None,
    };
    let len = match (cfg.len, target.grid_side()) {
        (Some(l), _) => l,
        (None, Some(side)) => side * side,
        (None, None) => return Err(Error::config("--len is required for models without a grid")),
    };
    let result = run_seeds(
        target.as_ref(),
        drafter.as_deref(),
        &cfg.mode,
        &cfg.params(),
        &cfg.seeds,
        len,
        cfg.outputs.trace.is_some(),
    )?;

    if let Some(path) = &cfg.outputs.metrics {
        write_jsonl(path, &result.records(&cfg.mode))?;
    }
    if let Some(path) = &cfg.outputs.trace {
        let trace: Vec<&TraceRecord> = result.runs.iter().flat_map(|r| &r.trace).collect();
        write_jsonl(path, &trace)?;
    }
    if let Some(path) = &cfg.outputs.heatmap {
        let first = &result.runs[0];
        let side = crate::model::layout_side(target.grid_side(), None, first.tokens.len())?;
        let rows = first.tokens.len().div_ceil(side);
        export_similarity_heatmap(target.as_ref(), &first.tokens, 0..rows)?.write_csv(path)?;
    }
    Ok(result)
}
