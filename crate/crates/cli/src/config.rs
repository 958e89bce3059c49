//! Config-file layer: every flag may also come from a JSON file, and flags
//! given on the command line win.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Deserialize;

/// Seed list as written by users: `"0..199"` (inclusive), `"1,5,9"`, `"7"`
/// or a JSON array.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum SeedSpec {
    List(Vec<u64>),
    Text(String),
}

impl SeedSpec {
    pub fn resolve(&self) -> Result<Vec<u64>> {
        match self {
            SeedSpec::List(v) => Ok(v.clone()),
            SeedSpec::Text(s) => parse_seeds(s),
        }
    }
}

pub fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once("..") {
            Some((a, b)) => {
                let a: u64 = a.trim().parse().with_context(|| format!("bad seed range start in '{part}'"))?;
                let b: u64 =
                    b.trim_start_matches('=').trim().parse().with_context(|| format!("bad seed range end in '{part}'"))?;
                if b < a {
                    bail!("empty seed range '{part}'");
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse().with_context(|| format!("bad seed '{part}'"))?),
        }
    }
    if out.is_empty() {
        bail!("no seeds in '{text}'");
    }
    Ok(out)
}

pub fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
        }
    }
}

/// `decode` settings as they may appear in a config file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct DecodeFile {
    pub model: Option<PathBuf>,
    pub drafter: Option<PathBuf>,
    pub mode: Option<String>,
    pub tree: Option<String>,
    pub tau_pos: Option<f64>,
    pub tau_seq: Option<f64>,
    pub tvd_budget: Option<f64>,
    pub enable_i: Option<bool>,
    pub enable_c: Option<bool>,
    pub sibling_mode: Option<String>,
    pub candidate_mode: Option<String>,
    pub kappa: Option<f64>,
    pub seeds: Option<SeedSpec>,
    pub len: Option<usize>,
    pub out: Option<PathBuf>,
    pub trace: Option<PathBuf>,
    pub heatmap: Option<PathBuf>,
}

/// `train` settings as they may appear in a config file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct TrainFile {
    pub model: Option<PathBuf>,
    pub c: Option<f64>,
    pub tau_seq_train: Option<f64>,
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub seed: Option<u64>,
    pub sequences: Option<usize>,
    pub hard_ce_weight: Option<f64>,
    pub len: Option<usize>,
    pub out: Option<PathBuf>,
}

/// `oracle` settings as they may appear in a config file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct OracleFile {
    pub model: Option<PathBuf>,
    pub drafter: Option<PathBuf>,
    pub mode: Option<String>,
    pub tree: Option<String>,
    pub tau_pos: Option<f64>,
    pub tau_seq: Option<f64>,
    pub tvd_budget: Option<f64>,
    pub sibling_mode: Option<String>,
    pub candidate_mode: Option<String>,
    pub len: Option<usize>,
    pub samples: Option<u64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_ranges_are_inclusive() {
        assert_eq!(parse_seeds("0..199").unwrap().len(), 200);
        assert_eq!(parse_seeds("3..=5").unwrap(), vec![3, 4, 5]);
        assert_eq!(parse_seeds("1, 4,9").unwrap(), vec![1, 4, 9]);
        assert_eq!(parse_seeds("0..2,7").unwrap(), vec![0, 1, 2, 7]);
        assert!(parse_seeds("5..2").is_err());
        assert!(parse_seeds("").is_err());
        assert!(parse_seeds("x").is_err());
    }

    #[test]
    fn seeds_from_json() {
        let f: DecodeFile = serde_json::from_str(r#"{"seeds": [1, 2]}"#).unwrap();
        assert_eq!(f.seeds.unwrap().resolve().unwrap(), vec![1, 2]);
        let f: DecodeFile = serde_json::from_str(r#"{"seeds": "0..3", "tauPos": 0.9}"#).unwrap();
        assert_eq!(f.seeds.unwrap().resolve().unwrap(), vec![0, 1, 2, 3]);
        assert_eq!(f.tau_pos, Some(0.9));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<DecodeFile>(r#"{"tau_pos": 0.9}"#).is_err());
    }
}
