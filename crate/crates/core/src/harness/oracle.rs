use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decode::{DecodeParams, StrategyRegistry};
use crate::error::{Error, Result};
use crate::model::{enumerate_ar_distribution, Drafter, TargetModel, ENUMERATION_LIMIT};
use crate::rng::{derive_seed, RngStream};

/// Empirical-vs-exact sequence distribution comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct McReport {
    pub tvd_to_oracle: f64,
    /// `3 * sqrt(V^L / M)`, further capped by the caller's limit if any.
    pub threshold: f64,
    pub pass: bool,
    pub samples: u64,
}

/// `M` seeded decodes of length `len`, binned by full sequence and compared
/// in total variation against exact enumeration of the target.
///
/// Decode `i` uses the stream seeded with `derive_seed(base_seed, i)`.
#[allow(clippy::too_many_arguments)]
pub fn mc_distribution_test(
    target: &dyn TargetModel,
    drafter: Option<&dyn Drafter>,
    mode: &str,
    params: &DecodeParams,
    samples: u64,
    len: usize,
    base_seed: u64,
    cap: Option<f64>,
) -> Result<McReport> {
    if samples == 0 {
        return Err(Error::config("need at least one sample"));
    }
    let exact = enumerate_ar_distribution(target, len)?;
    let cells = exact.probs.len();
    debug_assert!(cells <= ENUMERATION_LIMIT);
    let strategy = StrategyRegistry::default().build(mode, params)?;

    let counts = (0..samples)
        .into_par_iter()
        .try_fold(
            || vec![0u64; cells],
            |mut acc, i| {
                let mut rng = RngStream::new(derive_seed(base_seed, i));
                let tokens = strategy.decode(target, drafter, len, &mut rng, &mut ())?.tokens;
                acc[exact.index_of(&tokens)] += 1;
                Ok::<_, Error>(acc)
            },
        )
        .try_reduce(
            || vec![0u64; cells],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                Ok(a)
            },
        )?;

    let m = samples as f64;
    let tvd = 0.5 * counts.iter().zip(&exact.probs).map(|(&c, &p)| (c as f64 / m - p).abs()).sum::<f64>();
    let bound = 3.0 * (cells as f64 / m).sqrt();
    let threshold = cap.map_or(bound, |c| bound.min(c));
    Ok(McReport { tvd_to_oracle: tvd, threshold, pass: tvd <= threshold, samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TabularModelSpec;

    #[test]
    fn ar_sampling_matches_enumeration() {
        let m = TabularModelSpec::random(2, 1, 2, 3).build().unwrap();
        let r = mc_distribution_test(&m, None, "ar", &DecodeParams::default(), 100_000, 2, 0, Some(0.01)).unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn enumeration_guard() {
        let m = TabularModelSpec::random(4, 1, 2, 3).build().unwrap();
        let r = mc_distribution_test(&m, None, "ar", &DecodeParams::default(), 10, 11, 0, None);
        assert!(matches!(r, Err(Error::TooLarge { .. })));
    }
}
