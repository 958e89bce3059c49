//! Grid-world target with redundancy built in.
//!
//! Tokens are partitioned into clusters and grid cells into regions. At a
//! cell, `q` spreads `inClusterMass` uniformly over the cluster preferred by
//! the cell's region and the remainder uniformly over every other token. The
//! feature at a cell is `normalize(u_region + beta * v_cluster(last token))`,
//! so same-cluster tokens are interchangeable and a region's consecutive cells
//! converge in feature space.

use serde::{Deserialize, Serialize};

use super::{TargetEval, TargetModel};
use crate::error::{Error, Result};
use crate::prob::{FeatureVec, GridPos, ProbDist, TokenId, PROB_TOL};
use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridWorldSpec {
    #[serde(rename = "N")]
    pub side: usize,
    #[serde(rename = "V")]
    pub vocab: usize,
    /// Cluster of each token, length `V`.
    pub clusters: Vec<usize>,
    /// Region of each cell, row-major, length `N * N`.
    pub regions: Vec<usize>,
    #[serde(rename = "regionAnchors")]
    pub region_anchors: Vec<FeatureVec>,
    #[serde(rename = "clusterAnchors")]
    pub cluster_anchors: Vec<FeatureVec>,
    #[serde(rename = "inClusterMass", default = "default_in_cluster_mass")]
    pub in_cluster_mass: f64,
    #[serde(rename = "featureMix", default = "default_feature_mix")]
    pub feature_mix: f64,
    pub h: usize,
    /// Magnitude of the optional per-prefix feature perturbation (0 = off).
    #[serde(rename = "featureJitter", default, skip_serializing_if = "is_zero")]
    pub feature_jitter: f64,
}

fn default_in_cluster_mass() -> f64 {
    0.8
}

fn default_feature_mix() -> f64 {
    0.2
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

fn basis(h: usize, axis: usize, scale: f64) -> FeatureVec {
    let mut v = vec![0.0; h];
    v[axis] = scale;
    FeatureVec(v)
}

impl GridWorldSpec {
    /// 8x8 grid, 32 tokens in 4 contiguous clusters, 3 row-band regions
    /// (rows 0-2, 3-5, 6-7), 8-dim features.
    ///
    /// Region anchors are orthonormal; cluster anchors are orthogonal to them
    /// and to each other with norm 3, which puts same-region features of
    /// different clusters at cosine 1/1.36 and cross-region features at or
    /// below 0.36/1.36.
    pub fn desk_default() -> Self {
        let (side, vocab, clusters, regions, h) = (8, 32, 4, 3, 8);
        let region_of_row = |row: usize| match row {
            0..=2 => 0,
            3..=5 => 1,
            _ => 2,
        };
        Self {
            side,
            vocab,
            clusters: (0..vocab).map(|t| t / (vocab / clusters)).collect(),
            regions: (0..side * side).map(|i| region_of_row(i / side)).collect(),
            region_anchors: (0..regions).map(|r| basis(h, r, 1.0)).collect(),
            cluster_anchors: (0..clusters).map(|c| basis(h, regions + c, 3.0)).collect(),
            in_cluster_mass: default_in_cluster_mass(),
            feature_mix: default_feature_mix(),
            h,
            feature_jitter: 0.0,
        }
    }

    pub fn build(self) -> Result<GridWorld> {
        let n_clusters = self.cluster_anchors.len();
        let n_regions = self.region_anchors.len();
        if self.side == 0 || self.vocab == 0 || n_clusters == 0 || n_regions == 0 {
            return Err(Error::config("grid world needs N, V, K, R >= 1"));
        }
        if self.clusters.len() != self.vocab {
            return Err(Error::LengthMismatch { left: self.clusters.len(), right: self.vocab });
        }
        if self.regions.len() != self.side * self.side {
            return Err(Error::LengthMismatch { left: self.regions.len(), right: self.side * self.side });
        }
        let mut cluster_sizes = vec![0usize; n_clusters];
        for &c in &self.clusters {
            if c >= n_clusters {
                return Err(Error::config(format!("cluster id {c} >= K = {n_clusters}")));
            }
            cluster_sizes[c] += 1;
        }
        if let Some(c) = cluster_sizes.iter().position(|&s| s == 0 || s == self.vocab) {
            return Err(Error::config(format!("cluster {c} must be non-empty and leave tokens outside it")));
        }
        if let Some(r) = self.regions.iter().find(|&&r| r >= n_regions) {
            return Err(Error::config(format!("region id {r} >= R = {n_regions}")));
        }
        if !(self.in_cluster_mass > 0.0 && self.in_cluster_mass < 1.0) {
            return Err(Error::config("inClusterMass must lie in (0, 1)"));
        }
        if !self.feature_mix.is_finite() || !(0.0..=0.05).contains(&self.feature_jitter) {
            return Err(Error::config("featureMix must be finite and featureJitter in [0, 0.05]"));
        }
        for a in self.region_anchors.iter().chain(&self.cluster_anchors) {
            if a.dim() != self.h {
                return Err(Error::LengthMismatch { left: a.dim(), right: self.h });
            }
            FeatureVec::new(a.0.clone())?;
        }
        for u in &self.region_anchors {
            if (u.norm() - 1.0).abs() > PROB_TOL {
                return Err(Error::config("region anchors must be unit vectors"));
            }
        }

        let region_dists = (0..n_regions)
            .map(|r| {
                let preferred = r % n_clusters;
                let inside = cluster_sizes[preferred] as f64;
                let outside = (self.vocab - cluster_sizes[preferred]) as f64;
                let mass = self
                    .clusters
                    .iter()
                    .map(|&c| {
                        if c == preferred {
                            self.in_cluster_mass / inside
                        } else {
                            (1.0 - self.in_cluster_mass) / outside
                        }
                    })
                    .collect();
                ProbDist::new(mass)
            })
            .collect::<Result<Vec<_>>>()?;

        Ok(GridWorld { spec: self, region_dists })
    }
}

#[derive(Debug, Clone)]
pub struct GridWorld {
    spec: GridWorldSpec,
    region_dists: Vec<ProbDist>,
}

impl GridWorld {
    pub fn spec(&self) -> &GridWorldSpec {
        &self.spec
    }

    pub fn region_at(&self, pos: GridPos) -> Result<usize> {
        let side = self.spec.side;
        if pos.row >= side || pos.col >= side {
            return Err(Error::PositionOutOfRange { pos: pos.row * side + pos.col, side });
        }
        Ok(self.spec.regions[pos.flatten(side)])
    }

    /// Cluster preferred by region `r`.
    pub fn preferred_cluster(&self, region: usize) -> usize {
        region % self.spec.cluster_anchors.len()
    }

    pub fn cluster_of(&self, token: TokenId) -> usize {
        self.spec.clusters[token.0]
    }

    fn feature(&self, region: usize, prefix: &[TokenId]) -> Result<FeatureVec> {
        let mut v = self.spec.region_anchors[region].0.clone();
        if let Some(&last) = prefix.last() {
            let anchor = &self.spec.cluster_anchors[self.cluster_of(last)];
            for (x, a) in v.iter_mut().zip(&anchor.0) {
                *x += self.spec.feature_mix * a;
            }
        }
        let mut f = FeatureVec(v).normalized()?;
        if self.spec.feature_jitter > 0.0 {
            let mut rng = RngStream::new(prefix_hash(prefix));
            let noise: Vec<f64> = (0..self.spec.h).map(|_| 2.0 * rng.next_uniform() - 1.0).collect();
            let norm = noise.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            let scale = self.spec.feature_jitter * rng.next_uniform() / norm;
            for (x, n) in f.0.iter_mut().zip(noise) {
                *x += scale * n;
            }
            f = f.normalized()?;
        }
        Ok(f)
    }
}

/// FNV-1a over token ids.
fn prefix_hash(prefix: &[TokenId]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for t in prefix {
        for b in (t.0 as u64).to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

impl TargetModel for GridWorld {
    fn vocab(&self) -> usize {
        self.spec.vocab
    }

    fn feature_dim(&self) -> usize {
        self.spec.h
    }

    fn grid_side(&self) -> Option<usize> {
        Some(self.spec.side)
    }

    fn eval(&self, prefix: &[TokenId], pos: GridPos) -> Result<TargetEval> {
        let region = self.region_at(pos)?;
        Ok(TargetEval { dist: self.region_dists[region].clone(), feature: self.feature(region, prefix)? })
    }
}
