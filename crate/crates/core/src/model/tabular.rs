use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{TargetEval, TargetModel};
use crate::error::{Error, Result};
use crate::prob::{FeatureVec, GridPos, ProbDist, TokenId};
use crate::rng::RngStream;

/// Window entry standing for "before the first token".
pub const START_PAD: i64 = -1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub window: Vec<i64>,
    pub dist: ProbDist,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub window: Vec<i64>,
    pub feature: FeatureVec,
}

/// Order-`k` Markov target stored as explicit lookup tables. Windows shorter
/// than `k` are left-padded with [`START_PAD`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularModelSpec {
    #[serde(rename = "V")]
    pub vocab: usize,
    pub k: usize,
    pub table: Vec<TableRow>,
    #[serde(rename = "featureTable")]
    pub feature_table: Vec<FeatureRow>,
    pub h: usize,
}

/// Every window the model can be asked about: `m` leading pads followed by
/// `k - m` tokens, for `m` in `0..=k`.
pub fn all_windows(vocab: usize, k: usize) -> Vec<Vec<i64>> {
    let mut out = Vec::new();
    for pads in (0..=k).rev() {
        let free = k - pads;
        let count = vocab.pow(free as u32);
        for mut idx in 0..count {
            let mut w = vec![START_PAD; k];
            for slot in w[pads..].iter_mut().rev() {
                *slot = (idx % vocab) as i64;
                idx /= vocab;
            }
            out.push(w);
        }
    }
    out
}

impl TabularModelSpec {
    /// Builds a spec from explicit rows; features are drawn deterministically
    /// (seed 0, `h = 4`) so that distinct windows get distinct features.
    pub fn from_rows(vocab: usize, k: usize, rows: Vec<(Vec<i64>, Vec<f64>)>) -> Self {
        let h = 4;
        let mut rng = RngStream::new(0);
        let table = rows
            .iter()
            .map(|(w, m)| TableRow { window: w.clone(), dist: ProbDist::new(m.clone()).expect("valid row") })
            .collect();
        let feature_table = rows
            .into_iter()
            .map(|(window, _)| FeatureRow { window, feature: random_feature(&mut rng, h) })
            .collect();
        Self { vocab, k, table, feature_table, h }
    }

    /// Random fixture: every row drawn from a seeded stream with entries
    /// bounded away from zero, features uniform in `[-1, 1]^h`.
    pub fn random(vocab: usize, k: usize, h: usize, seed: u64) -> Self {
        let mut rng = RngStream::new(seed);
        let windows = all_windows(vocab, k);
        let table = windows
            .iter()
            .map(|w| {
                let weights: Vec<f64> = (0..vocab).map(|_| 0.05 + rng.next_uniform()).collect();
                TableRow { window: w.clone(), dist: ProbDist::from_weights(weights).expect("positive weights") }
            })
            .collect();
        let feature_table = windows
            .into_iter()
            .map(|window| FeatureRow { window, feature: random_feature(&mut rng, h) })
            .collect();
        Self { vocab, k, table, feature_table, h }
    }

    pub fn build(self) -> Result<TabularModel> {
        if self.vocab == 0 || self.k == 0 || self.h == 0 {
            return Err(Error::config("tabular model needs V, k, h >= 1"));
        }
        let mut dist_index = HashMap::new();
        for (i, row) in self.table.iter().enumerate() {
            if row.dist.len() != self.vocab {
                return Err(Error::LengthMismatch { left: row.dist.len(), right: self.vocab });
            }
            dist_index.insert(row.window.clone(), i);
        }
        let mut feature_index = HashMap::new();
        for (i, row) in self.feature_table.iter().enumerate() {
            if row.feature.dim() != self.h {
                return Err(Error::LengthMismatch { left: row.feature.dim(), right: self.h });
            }
            row.feature.normalized()?;
            feature_index.insert(row.window.clone(), i);
        }
        for w in all_windows(self.vocab, self.k) {
            if !dist_index.contains_key(&w) || !feature_index.contains_key(&w) {
                return Err(Error::UnknownWindow(w));
            }
        }
        Ok(TabularModel { spec: self, dist_index, feature_index })
    }
}

fn random_feature(rng: &mut RngStream, h: usize) -> FeatureVec {
    loop {
        let v: Vec<f64> = (0..h).map(|_| 2.0 * rng.next_uniform() - 1.0).collect();
        let f = FeatureVec(v);
        if f.norm() > 1e-3 {
            return f;
        }
    }
}

#[derive(Debug, Clone)]
pub struct TabularModel {
    spec: TabularModelSpec,
    dist_index: HashMap<Vec<i64>, usize>,
    feature_index: HashMap<Vec<i64>, usize>,
}

impl TabularModel {
    pub fn spec(&self) -> &TabularModelSpec {
        &self.spec
    }

    fn window(&self, prefix: &[TokenId]) -> Vec<i64> {
        let k = self.spec.k;
        let mut w = vec![START_PAD; k];
        let take = prefix.len().min(k);
        for (slot, t) in w[k - take..].iter_mut().zip(&prefix[prefix.len() - take..]) {
            *slot = t.0 as i64;
        }
        w
    }
}

impl TargetModel for TabularModel {
    fn vocab(&self) -> usize {
        self.spec.vocab
    }

    fn feature_dim(&self) -> usize {
        self.spec.h
    }

    fn grid_side(&self) -> Option<usize> {
        None
    }

    fn eval(&self, prefix: &[TokenId], _pos: GridPos) -> Result<TargetEval> {
        let w = self.window(prefix);
        let (Some(&di), Some(&fi)) = (self.dist_index.get(&w), self.feature_index.get(&w)) else {
            return Err(Error::UnknownWindow(w));
        };
        Ok(TargetEval {
            dist: self.spec.table[di].dist.clone(),
            feature: self.spec.feature_table[fi].feature.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn windows_cover_padding_prefixes() {
        let w = all_windows(2, 2);
        assert_eq!(w.len(), 1 + 2 + 4);
        assert_eq!(w[0], vec![START_PAD, START_PAD]);
        assert!(w.contains(&vec![START_PAD, 1]));
        assert!(w.contains(&vec![1, 0]));
    }

    #[test]
    fn table_lookup() {
        let m = TabularModelSpec::from_rows(
            2,
            1,
            vec![(vec![START_PAD], vec![0.5, 0.5]), (vec![0], vec![0.9, 0.1]), (vec![1], vec![0.2, 0.8])],
        )
        .build()
        .unwrap();
        let e = m.eval(&[TokenId(0)], GridPos::new(0, 1)).unwrap();
        assert_eq!(e.dist.as_slice(), &[0.9, 0.1]);
        let e = m.eval(&[TokenId(1), TokenId(0)], GridPos::new(1, 0)).unwrap();
        assert_eq!(e.dist.as_slice(), &[0.9, 0.1]);
        let e = m.eval(&[], GridPos::new(0, 0)).unwrap();
        assert_eq!(e.dist.as_slice(), &[0.5, 0.5]);
    }

    #[test]
    fn missing_window_is_rejected_at_build() {
        let spec = TabularModelSpec::from_rows(2, 1, vec![(vec![START_PAD], vec![0.5, 0.5]), (vec![0], vec![0.9, 0.1])]);
        assert!(matches!(spec.build(), Err(Error::UnknownWindow(w)) if w == vec![1]));
    }

    #[test]
    fn random_is_deterministic_and_complete() {
        let a = TabularModelSpec::random(3, 2, 4, 11);
        let b = TabularModelSpec::random(3, 2, 4, 11);
        assert_eq!(a, b);
        assert_eq!(a.table.len(), 1 + 3 + 9);
        a.build().unwrap();
    }
}
