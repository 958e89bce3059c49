//! Value types shared by every other module: tokens, distributions, feature
//! vectors and grid positions, plus the exact distribution utilities used by
//! verification (cosine similarity, total variation, residual correction).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance for every probability comparison.
pub const PROB_TOL: f64 = 1e-9;

/// Norms at or below this are treated as zero by [`cosine_sim`].
pub const MIN_FEATURE_NORM: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenId(pub usize);

impl TokenId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

impl std::fmt::Display for TokenId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Normalized probability mass over a finite vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ProbDist {
    mass: Vec<f64>,
}

impl ProbDist {
    /// Validates that `mass` is non-negative, finite, and sums to 1 within
    /// [`PROB_TOL`].
    pub fn new(mass: Vec<f64>) -> Result<Self> {
        if mass.is_empty() {
            return Err(Error::InvalidDistribution("empty vocabulary".into()));
        }
        let mut total = 0.0;
        for (i, &m) in mass.iter().enumerate() {
            if !m.is_finite() || m < 0.0 {
                return Err(Error::InvalidDistribution(format!("entry {i} = {m}")));
            }
            total += m;
        }
        if (total - 1.0).abs() > PROB_TOL {
            return Err(Error::InvalidDistribution(format!("mass sums to {total}")));
        }
        Ok(Self { mass })
    }

    /// Normalizes non-negative weights. Fails if they sum to zero.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidDistribution("weights must be finite and >= 0".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidDistribution("weights sum to zero".into()));
        }
        Ok(Self { mass: weights.into_iter().map(|w| w / total).collect() })
    }

    pub fn uniform(vocab: usize) -> Self {
        assert!(vocab > 0, "uniform distribution over empty vocabulary");
        Self { mass: vec![1.0 / vocab as f64; vocab] }
    }

    /// Numerically stable softmax of `logits`.
    pub fn softmax(logits: &[f64]) -> Result<Self> {
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::NonFinite("softmax logits".into()));
        }
        let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
        Self::from_weights(exps)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.mass.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    #[inline]
    pub fn prob(&self, token: TokenId) -> f64 {
        self.mass[token.0]
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.mass
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.mass
    }

    /// Inverse-CDF sampling from a uniform draw `r` in `[0, 1)`.
    ///
    /// If rounding leaves `r` above the final cumulative sum, the last token
    /// with positive mass is returned.
    pub fn sample_with(&self, r: f64) -> TokenId {
        let mut cum = 0.0;
        let mut last_positive = 0;
        for (i, &m) in self.mass.iter().enumerate() {
            if m > 0.0 {
                last_positive = i;
                cum += m;
                if r < cum {
                    return TokenId(i);
                }
            }
        }
        TokenId(last_positive)
    }

    /// Tokens ordered by descending probability; ties broken by lower index.
    pub fn ranked(&self) -> Vec<TokenId> {
        let mut idx: Vec<usize> = (0..self.mass.len()).collect();
        idx.sort_by(|&a, &b| self.mass[b].total_cmp(&self.mass[a]).then(a.cmp(&b)));
        idx.into_iter().map(TokenId).collect()
    }

    /// Copy of this distribution with `tokens` zeroed and the rest
    /// renormalized. Returns `None` when no mass remains.
    pub fn without(&self, tokens: &[TokenId]) -> Option<ProbDist> {
        let mut mass = self.mass.clone();
        for t in tokens {
            mass[t.0] = 0.0;
        }
        ProbDist::from_weights(mass).ok()
    }

    pub fn approx_eq(&self, other: &ProbDist, tol: f64) -> bool {
        self.len() == other.len()
            && self.mass.iter().zip(&other.mass).all(|(a, b)| (a - b).abs() <= tol)
    }
}

impl<'de> Deserialize<'de> for ProbDist {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let mass = Vec::<f64>::deserialize(d)?;
        ProbDist::new(mass).map_err(serde::de::Error::custom)
    }
}

/// Hidden-state feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVec(pub Vec<f64>);

impl FeatureVec {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature vector".into()));
        }
        Ok(Self(values))
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn normalized(&self) -> Result<FeatureVec> {
        let n = self.norm();
        if n <= MIN_FEATURE_NORM {
            return Err(Error::ZeroNormFeature);
        }
        Ok(FeatureVec(self.0.iter().map(|v| v / n).collect()))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Cell of the `side x side` generation grid; row-major flattening.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridPos {
    pub row: usize,
    pub col: usize,
}

impl GridPos {
    pub fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }

    pub fn from_flat(index: usize, side: usize) -> Self {
        debug_assert!(side > 0);
        Self { row: index / side, col: index % side }
    }

    #[inline]
    pub fn flatten(self, side: usize) -> usize {
        self.row * side + self.col
    }
}

/// Cosine similarity clamped to `[-1, 1]`.
pub fn cosine_sim(a: &FeatureVec, b: &FeatureVec) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::LengthMismatch { left: a.dim(), right: b.dim() });
    }
    let (na, nb) = (a.norm(), b.norm());
    if na <= MIN_FEATURE_NORM || nb <= MIN_FEATURE_NORM {
        return Err(Error::ZeroNormFeature);
    }
    let dot: f64 = a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Total variation distance, `0.5 * sum |a_i - b_i|`.
pub fn tvd(a: &ProbDist, b: &ProbDist) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { left: a.len(), right: b.len() });
    }
    Ok(0.5 * a.mass.iter().zip(&b.mass).map(|(x, y)| (x - y).abs()).sum::<f64>())
}

/// Normalized positive part of `q - p`, the correction distribution sampled
/// after a rejection.
pub fn residual_dist(q: &ProbDist, p: &ProbDist) -> Result<ProbDist> {
    if q.len() != p.len() {
        return Err(Error::LengthMismatch { left: q.len(), right: p.len() });
    }
    let excess: Vec<f64> = q.mass.iter().zip(&p.mass).map(|(a, b)| (a - b).max(0.0)).collect();
    let total: f64 = excess.iter().sum();
    // Differences below the comparison tolerance are rounding noise.
    if total <= PROB_TOL {
        return Err(Error::DegenerateResidual);
    }
    Ok(ProbDist { mass: excess.into_iter().map(|e| e / total).collect() })
}

/// `residual_dist`, falling back to `q` itself when the residual is empty.
pub fn residual_or_target(q: &ProbDist, p: &ProbDist) -> Result<ProbDist> {
    match residual_dist(q, p) {
        Err(Error::DegenerateResidual) => Ok(q.clone()),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn d(v: &[f64]) -> ProbDist {
        ProbDist::new(v.to_vec()).unwrap()
    }

    fn f(v: &[f64]) -> FeatureVec {
        FeatureVec(v.to_vec())
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_sim(&f(&[1.0, 0.0]), &f(&[1.0, 0.0])).unwrap(), 1.0);
        assert_eq!(cosine_sim(&f(&[1.0, 0.0]), &f(&[0.0, 1.0])).unwrap(), 0.0);
        let c = cosine_sim(&f(&[3.0, 4.0]), &f(&[4.0, 3.0])).unwrap();
        assert!((c - 24.0 / 25.0).abs() < 1e-15);
    }

    #[test]
    fn cosine_rejects_zero_norm() {
        assert!(matches!(cosine_sim(&f(&[0.0, 0.0]), &f(&[1.0, 0.0])), Err(Error::ZeroNormFeature)));
        assert!(matches!(cosine_sim(&f(&[1.0, 0.0]), &f(&[1e-13, 0.0])), Err(Error::ZeroNormFeature)));
    }

    #[test]
    fn tvd_examples() {
        assert_eq!(tvd(&d(&[1.0, 0.0]), &d(&[1.0, 0.0])).unwrap(), 0.0);
        assert_eq!(tvd(&d(&[1.0, 0.0]), &d(&[0.0, 1.0])).unwrap(), 1.0);
        assert!((tvd(&d(&[0.4, 0.6]), &d(&[0.6, 0.4])).unwrap() - 0.2).abs() < 1e-15);
        assert!(matches!(
            tvd(&d(&[1.0]), &d(&[0.5, 0.5])),
            Err(Error::LengthMismatch { left: 1, right: 2 })
        ));
    }

    #[test]
    fn residual_examples() {
        let r = residual_dist(&d(&[0.5, 0.3, 0.2]), &d(&[0.2, 0.5, 0.3])).unwrap();
        assert!(r.approx_eq(&d(&[1.0, 0.0, 0.0]), 1e-12));
        let r = residual_dist(&d(&[0.9, 0.1]), &d(&[0.5, 0.5])).unwrap();
        assert!(r.approx_eq(&d(&[1.0, 0.0]), 1e-12));
        assert!(matches!(
            residual_dist(&d(&[0.5, 0.5]), &d(&[0.5, 0.5])),
            Err(Error::DegenerateResidual)
        ));
        let fallback = residual_or_target(&d(&[0.5, 0.5]), &d(&[0.5, 0.5])).unwrap();
        assert_eq!(fallback, d(&[0.5, 0.5]));
    }

    #[test]
    fn prob_dist_validation() {
        assert!(ProbDist::new(vec![0.5, 0.6]).is_err());
        assert!(ProbDist::new(vec![-0.1, 1.1]).is_err());
        assert!(ProbDist::new(vec![]).is_err());
        assert!(ProbDist::new(vec![0.5, 0.5 + 5e-10]).is_ok());
        assert!(serde_json::from_str::<ProbDist>("[0.2, 0.2]").is_err());
    }

    #[test]
    fn sample_with_inverts_cdf() {
        let p = d(&[0.25, 0.0, 0.75]);
        assert_eq!(p.sample_with(0.0), TokenId(0));
        assert_eq!(p.sample_with(0.2499), TokenId(0));
        assert_eq!(p.sample_with(0.25), TokenId(2));
        assert_eq!(p.sample_with(0.999_999_999_999), TokenId(2));
    }

    #[test]
    fn ranked_breaks_ties_by_index() {
        let p = d(&[0.2, 0.4, 0.2, 0.2]);
        assert_eq!(p.ranked(), vec![TokenId(1), TokenId(0), TokenId(2), TokenId(3)]);
    }

    #[test]
    fn grid_flatten_bijection() {
        let side = 5;
        for i in 0..side * side {
            let g = GridPos::from_flat(i, side);
            assert!(g.row < side && g.col < side);
            assert_eq!(g.flatten(side), i);
        }
    }

    fn dist_strategy(len: usize) -> impl Strategy<Value = ProbDist> {
        prop::collection::vec(0.01f64..1.0, len).prop_map(|w| ProbDist::from_weights(w).unwrap())
    }

    fn feature_strategy(len: usize) -> impl Strategy<Value = FeatureVec> {
        prop::collection::vec(-5.0f64..5.0, len)
            .prop_filter("non-zero", |v| v.iter().map(|x| x * x).sum::<f64>() > 1e-6)
            .prop_map(FeatureVec)
    }

    proptest! {
        #[test]
        fn cosine_symmetric_and_scale_invariant(a in feature_strategy(6), b in feature_strategy(6), k in 0.01f64..100.0) {
            let ab = cosine_sim(&a, &b).unwrap();
            let ba = cosine_sim(&b, &a).unwrap();
            prop_assert_eq!(ab, ba);
            prop_assert!((-1.0..=1.0).contains(&ab));
            let scaled = FeatureVec(a.0.iter().map(|v| v * k).collect());
            prop_assert!((cosine_sim(&a, &scaled).unwrap() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn tvd_is_a_metric(a in dist_strategy(5), b in dist_strategy(5), c in dist_strategy(5)) {
            let ab = tvd(&a, &b).unwrap();
            prop_assert!((0.0..=1.0 + 1e-12).contains(&ab));
            prop_assert_eq!(ab, tvd(&b, &a).unwrap());
            prop_assert_eq!(tvd(&a, &a).unwrap(), 0.0);
            let ac = tvd(&a, &c).unwrap();
            let cb = tvd(&c, &b).unwrap();
            prop_assert!(ab <= ac + cb + 1e-12);
        }

        #[test]
        fn residual_is_valid_when_distinct(q in dist_strategy(4), p in dist_strategy(4)) {
            prop_assume!(tvd(&q, &p).unwrap() > 1e-6);
            let r = residual_dist(&q, &p).unwrap();
            prop_assert!(ProbDist::new(r.as_slice().to_vec()).is_ok());
            for i in 0..4 {
                if q.as_slice()[i] <= p.as_slice()[i] {
                    prop_assert_eq!(r.as_slice()[i], 0.0);
                }
            }
        }
    }
}
