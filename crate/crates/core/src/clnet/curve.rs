use super::{csi_similarity, ClnetModel};
use crate::channel_sim::Dataset;
use crate::error::{Error, Result};
use crate::numerics::rng::{index, stream};
use super::sampling::distance;

/// Vectors compared by [`similarity_curve`].
#[derive(Debug, Clone, Copy)]
pub enum SimilarityMode<'a> {
    /// `1/‖ỹ_i − ỹ_j‖` on the received signals.
    Raw,
    /// `γ` on learned features.
    Features(&'a ClnetModel),
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveConfig {
    /// Half-open distance bins `[lo, hi)`, meters.
    pub bins: Vec<[f64; 2]>,
    /// Pairs kept per bin; bins with more candidate pairs are subsampled.
    pub max_pairs_per_bin: usize,
    pub seed: u64,
}

impl Default for CurveConfig {
    fn default() -> Self {
        CurveConfig {
            bins: vec![
                [0.0, 2.0],
                [2.0, 5.0],
                [5.0, 10.0],
                [10.0, 20.0],
                [20.0, 40.0],
                [40.0, 80.0],
                [80.0, 150.0],
            ],
            max_pairs_per_bin: 2000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct CurveBin {
    pub lo: f64,
    pub hi: f64,
    pub pairs: usize,
    /// Mean standardized similarity; `None` for a bin without pairs.
    pub mean: Option<f64>,
}

/// Mean z-scored similarity per distance bin.
pub fn similarity_curve(data: &Dataset, mode: SimilarityMode<'_>, config: &CurveConfig) -> Result<Vec<CurveBin>> {
    let vectors: Vec<Vec<f64>> = match mode {
        SimilarityMode::Raw => (0..data.len()).map(|i| data.y_real(i)).collect(),
        SimilarityMode::Features(model) => {
            let idx: Vec<usize> = (0..data.len()).collect();
            let f = model.extract_batch(&data.inputs(&idx))?;
            (0..data.len()).map(|i| f.row(i).to_vec()).collect()
        }
    };
    similarity_curve_from_vectors(&data.positions, &vectors, config)
}

/// Curve over explicit vectors: every pair falls into at most one bin by
/// position distance, oversized bins are subsampled without replacement,
/// `γ` is z-scored over all kept pairs (zero variance maps to 0) and
/// averaged per bin.
pub fn similarity_curve_from_vectors(
    positions: &[[f64; 2]],
    vectors: &[Vec<f64>],
    config: &CurveConfig,
) -> Result<Vec<CurveBin>> {
    if positions.len() != vectors.len() {
        return Err(Error::Dimension(format!(
            "{} positions but {} vectors",
            positions.len(),
            vectors.len()
        )));
    }
    let nb = config.bins.len();
    let mut candidates: Vec<Vec<(usize, usize)>> = vec![Vec::new(); nb];
    for i in 0..positions.len() {
        for j in i + 1..positions.len() {
            let d = distance(positions[i], positions[j]);
            if let Some(b) = config.bins.iter().position(|[lo, hi]| d >= *lo && d < *hi) {
                candidates[b].push((i, j));
            }
        }
    }
    let mut kept: Vec<Vec<(usize, usize)>> = Vec::with_capacity(nb);
    for (b, mut c) in candidates.into_iter().enumerate() {
        if c.len() > config.max_pairs_per_bin {
            let mut rng = stream(config.seed, "curve/pairs", b as u64);
            for k in 0..config.max_pairs_per_bin {
                let r = k + index(&mut rng, c.len() - k);
                c.swap(k, r);
            }
            c.truncate(config.max_pairs_per_bin);
        }
        kept.push(c);
    }
    let values: Vec<Vec<f64>> = kept
        .iter()
        .map(|c| c.iter().map(|&(i, j)| csi_similarity(&vectors[i], &vectors[j])).collect())
        .collect();
    let all: Vec<f64> = values.iter().flatten().copied().collect();
    let n = all.len() as f64;
    let mean = all.iter().sum::<f64>() / n;
    let sd = (all.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
    Ok(config
        .bins
        .iter()
        .zip(&values)
        .map(|(&[lo, hi], v)| CurveBin {
            lo,
            hi,
            pairs: v.len(),
            mean: (!v.is_empty()).then(|| {
                if sd > 0.0 && sd.is_finite() {
                    v.iter().map(|x| (x - mean) / sd).sum::<f64>() / v.len() as f64
                } else {
                    0.0
                }
            }),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_features_standardize_to_zero() {
        let pos: Vec<[f64; 2]> = (0..10).map(|k| [k as f64 * 3.0, 0.0]).collect();
        let v = vec![vec![1.0, 2.0]; 10];
        let c = similarity_curve_from_vectors(&pos, &v, &CurveConfig::default()).unwrap();
        for b in &c {
            if let Some(m) = b.mean {
                assert_eq!(m, 0.0);
            }
        }
        assert!(c[0].pairs == 0 && c[0].mean.is_none());
    }
}
