use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::decode::DecodeStats;
use crate::error::{Error, Result};
use crate::verify::DecisionRecord;

/// Per-sequence (or aggregated) decoding metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Metrics {
    pub mean_alpha: f64,
    pub target_calls: u64,
    pub drafter_calls: u64,
    pub speedup_proxy: f64,
    #[serde(rename = "accumulatedTVD")]
    pub accumulated_tvd: f64,
    #[serde(rename = "perTokenTVD")]
    pub per_token_tvd: f64,
    pub tokens_emitted: u64,
}

impl Metrics {
    /// `speedupProxy = tokens / (targetCalls + kappa * drafterCalls)`, which
    /// is already relative to autoregressive decoding (one target call per
    /// token). Runs without verify calls report `meanAlpha = 1`.
    pub fn from_stats(s: &DecodeStats, kappa: f64) -> Self {
        let tokens = s.tokens_emitted as f64;
        let cost = s.target_calls as f64 + kappa * s.drafter_calls as f64;
        Self {
            mean_alpha: if s.verify_calls == 0 { 1.0 } else { s.accepted_drafts as f64 / s.verify_calls as f64 },
            target_calls: s.target_calls as u64,
            drafter_calls: s.drafter_calls as u64,
            speedup_proxy: if cost > 0.0 { tokens / cost } else { 1.0 },
            accumulated_tvd: s.tvd_consumed,
            per_token_tvd: if s.tokens_emitted == 0 { 0.0 } else { s.tvd_consumed / tokens },
            tokens_emitted: s.tokens_emitted as u64,
        }
    }

    /// Real-valued fields averaged over runs, counts summed.
    pub fn aggregate(runs: &[Metrics]) -> Option<Metrics> {
        if runs.is_empty() {
            return None;
        }
        let n = runs.len() as f64;
        let mean = |f: fn(&Metrics) -> f64| runs.iter().map(f).sum::<f64>() / n;
        let sum = |f: fn(&Metrics) -> u64| runs.iter().map(f).sum::<u64>();
        Some(Metrics {
            mean_alpha: mean(|m| m.mean_alpha),
            target_calls: sum(|m| m.target_calls),
            drafter_calls: sum(|m| m.drafter_calls),
            speedup_proxy: mean(|m| m.speedup_proxy),
            accumulated_tvd: mean(|m| m.accumulated_tvd),
            per_token_tvd: mean(|m| m.per_token_tvd),
            tokens_emitted: sum(|m| m.tokens_emitted),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    Seed,
    Aggregate,
}

/// One line of a metrics JSONL file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MetricsRecord {
    pub record: RecordKind,
    pub mode: String,
    /// Seed of a per-seed record.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Number of seeds behind an aggregate record.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<u64>,
    #[serde(flatten)]
    pub metrics: Metrics,
}

/// One line of a trace JSONL file: a single accept/reject decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TraceRecord {
    pub seed: u64,
    pub call: usize,
    #[serde(flatten)]
    pub decision: DecisionRecord,
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines().filter(|l| !l.trim().is_empty()).map(|l| Ok(serde_json::from_str(l)?)).collect()
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn ar_like_stats() {
        let s = DecodeStats { tokens_emitted: 10, target_calls: 10, ..DecodeStats::default() };
        let m = Metrics::from_stats(&s, 0.1);
        assert_eq!((m.mean_alpha, m.speedup_proxy, m.per_token_tvd), (1.0, 1.0, 0.0));
    }

    #[test]
    fn speculative_stats() {
        let s = DecodeStats {
            tokens_emitted: 12,
            verify_calls: 4,
            accepted_drafts: 8,
            target_calls: 4,
            drafter_calls: 20,
            tvd_consumed: 0.6,
            max_call_tvd: 0.3,
        };
        let m = Metrics::from_stats(&s, 0.1);
        assert_eq!(m.mean_alpha, 2.0);
        assert_eq!(m.speedup_proxy, 2.0);
        assert!((m.per_token_tvd - 0.05).abs() < 1e-15);
    }

    #[test]
    fn aggregate_means_and_sums() {
        let a = Metrics::from_stats(&DecodeStats { tokens_emitted: 4, target_calls: 4, ..Default::default() }, 0.1);
        let mut b = a;
        b.mean_alpha = 3.0;
        let agg = Metrics::aggregate(&[a, b]).unwrap();
        assert_eq!(agg.mean_alpha, 2.0);
        assert_eq!(agg.tokens_emitted, 8);
        assert!(Metrics::aggregate(&[]).is_none());
    }

    fn metrics() -> impl Strategy<Value = Metrics> {
        (any::<f64>(), any::<u64>(), any::<u64>(), any::<f64>(), any::<f64>(), any::<f64>(), any::<u64>()).prop_map(
            |(a, t, d, s, acc, per, n)| Metrics {
                mean_alpha: a,
                target_calls: t,
                drafter_calls: d,
                speedup_proxy: s,
                accumulated_tvd: acc,
                per_token_tvd: per,
                tokens_emitted: n,
            },
        )
    }

    proptest! {
        #[test]
        fn record_round_trip(m in metrics(), seed in proptest::option::of(any::<u64>())) {
            prop_assume!([m.mean_alpha, m.speedup_proxy, m.accumulated_tvd, m.per_token_tvd].iter().all(|x| x.is_finite()));
            let rec = MetricsRecord {
                record: if seed.is_some() { RecordKind::Seed } else { RecordKind::Aggregate },
                mode: "cascade".into(),
                seed,
                seeds: seed.is_none().then_some(3),
                metrics: m,
            };
            let line = serde_json::to_string(&rec).unwrap();
            let back: MetricsRecord = serde_json::from_str(&line).unwrap();
            prop_assert_eq!(back, rec);
        }
    }
}
