use std::fmt::Write as _;
use std::ops::Range;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{layout_side, position_for, target_eval, TargetModel};
use crate::prob::{cosine_sim, FeatureVec, TokenId};

/// Pairwise cosine similarity between the target features of a run of
/// consecutive sequence positions.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    /// Flat sequence positions, in order.
    pub positions: Vec<usize>,
    /// `values[i][j]` is the cosine between positions `i` and `j`.
    pub values: Vec<Vec<f64>>,
}

impl Heatmap {
    /// Header `pos,<p0>,<p1>,...` then one line per position.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("pos");
        for p in &self.positions {
            let _ = write!(out, ",{p}");
        }
        out.push('\n');
        for (p, row) in self.positions.iter().zip(&self.values) {
            let _ = write!(out, "{p}");
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    /// Mean of `values[i][j]` over `i != j` pairs selected by `keep`.
    pub fn mean_where(&self, keep: impl Fn(usize, usize) -> bool) -> Option<f64> {
        let mut sum = 0.0;
        let mut n = 0usize;
        for (i, &a) in self.positions.iter().enumerate() {
            for (j, &b) in self.positions.iter().enumerate() {
                if i != j && keep(a, b) {
                    sum += self.values[i][j];
                    n += 1;
                }
            }
        }
        (n > 0).then(|| sum / n as f64)
    }
}

/// Target feature at every position: the state after reading `seq[..t]`
/// at the grid cell of `t`.
pub fn position_features(model: &dyn TargetModel, seq: &[TokenId], positions: &[usize]) -> Result<Vec<FeatureVec>> {
    let side = layout_side(model.grid_side(), None, seq.len().max(1))?;
    positions
        .iter()
        .map(|&t| Ok(target_eval(model, &seq[..t], position_for(t, side))?.feature))
        .collect()
}

/// Cosine matrix over the positions in grid rows `rows` of `seq`.
pub fn export_similarity_heatmap(model: &dyn TargetModel, seq: &[TokenId], rows: Range<usize>) -> Result<Heatmap> {
    let side = layout_side(model.grid_side(), None, seq.len().max(1))?;
    let out_of_range = || Error::RowOutOfRange { start: rows.start, end: rows.end, side };
    if rows.start > rows.end || rows.end > side {
        return Err(out_of_range());
    }
    let first = rows.start * side;
    let last = (rows.end * side).min(seq.len());
    if rows.is_empty() {
        return Ok(Heatmap { positions: vec![], values: vec![] });
    }
    if first >= seq.len() {
        return Err(out_of_range());
    }
    let positions: Vec<usize> = (first..last).collect();
    let feats = position_features(model, seq, &positions)?;
    let values = feats
        .iter()
        .map(|a| feats.iter().map(|b| cosine_sim(a, b)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    Ok(Heatmap { positions, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{GridWorldSpec, TabularModelSpec};

    #[test]
    fn single_feature_is_all_ones() {
        let mut spec = TabularModelSpec::random(2, 1, 3, 0);
        for row in &mut spec.feature_table {
            row.feature = FeatureVec(vec![1.0, 2.0, 3.0]);
        }
        let m = spec.build().unwrap();
        let seq = vec![TokenId(0); 9];
        let hm = export_similarity_heatmap(&m, &seq, 0..3).unwrap();
        assert_eq!(hm.positions.len(), 9);
        assert!(hm.values.iter().flatten().all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn empty_rows_give_header_only() {
        let g = GridWorldSpec::desk_default().build().unwrap();
        let seq = vec![TokenId(0); 64];
        assert_eq!(export_similarity_heatmap(&g, &seq, 2..2).unwrap().to_csv(), "pos\n");
    }

    #[test]
    fn rows_past_grid_are_rejected() {
        let g = GridWorldSpec::desk_default().build().unwrap();
        let seq = vec![TokenId(0); 64];
        assert!(matches!(export_similarity_heatmap(&g, &seq, 6..9), Err(Error::RowOutOfRange { .. })));
        let short = vec![TokenId(0); 10];
        assert!(matches!(export_similarity_heatmap(&g, &short, 3..4), Err(Error::RowOutOfRange { .. })));
    }

    #[test]
    fn csv_layout() {
        let hm = Heatmap { positions: vec![4, 5], values: vec![vec![1.0, 0.5], vec![0.5, 1.0]] };
        assert_eq!(hm.to_csv(), "pos,4,5\n4,1,0.5\n5,0.5,1\n");
    }
}
