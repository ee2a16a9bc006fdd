use std::collections::BTreeMap;

use ndarray::Array2;

use super::FeatureSet;
use crate::error::{Error, Result};

/// Standard deviations below `sqrt(VARIANCE_FLOOR)` are clamped.
pub const VARIANCE_FLOOR: f64 = 1e-8;

/// A side group whose dimension had (near) zero variance and was only
/// mean-shifted.
#[derive(Debug, Clone, PartialEq)]
pub struct CmvnWarning {
    pub side: String,
    pub dim: usize,
    pub variance: f64,
}

impl std::fmt::Display for CmvnWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "side {:?} dim {} has variance {:e}; mean-shifted only",
            self.side, self.dim, self.variance
        )
    }
}

/// Per-side mean and variance normalization (population variance).
pub fn apply_cmvn(fs: &FeatureSet) -> Result<(FeatureSet, Vec<CmvnWarning>)> {
    let dim = fs.dim();
    let mut groups: BTreeMap<&str, (usize, Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for utt in fs.utterances() {
        let entry = groups
            .entry(fs.side_of(&utt.id))
            .or_insert_with(|| (0, vec![0.0; dim], vec![0.0; dim]));
        entry.0 += utt.n_frames();
        for row in utt.features.rows() {
            for (d, &x) in row.iter().enumerate() {
                entry.1[d] += x;
            }
        }
    }
    for (side, (n, sum, _)) in groups.iter_mut() {
        if *n < 2 {
            return Err(Error::Invalid(format!(
                "side {side:?} has {n} frame(s); CMVN needs at least 2"
            )));
        }
        let n = *n as f64;
        sum.iter_mut().for_each(|s| *s /= n);
    }
    // second pass on centred values keeps the variance numerically stable
    for utt in fs.utterances() {
        let (_, mean, sq) = groups.get_mut(fs.side_of(&utt.id)).expect("group exists");
        for row in utt.features.rows() {
            for (d, &x) in row.iter().enumerate() {
                let c = x - mean[d];
                sq[d] += c * c;
            }
        }
    }
    let mut warnings = Vec::new();
    let mut scales: BTreeMap<&str, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for (side, (n, mean, sq)) in groups {
        let mut inv_std = Vec::with_capacity(dim);
        for (d, s) in sq.iter().enumerate() {
            let var = s / n as f64;
            if var < VARIANCE_FLOOR {
                log::warn!("CMVN: side {side:?} dim {d} has variance {var:e}; mean-shift only");
                warnings.push(CmvnWarning {
                    side: side.to_string(),
                    dim: d,
                    variance: var,
                });
                inv_std.push(1.0);
            } else {
                inv_std.push(1.0 / var.sqrt());
            }
        }
        scales.insert(side, (mean, inv_std));
    }
    let out = fs.map_features(|utt| {
        let (mean, inv_std) = &scales[fs.side_of(&utt.id)];
        let mut m: Array2<f64> = utt.features.clone();
        for mut row in m.rows_mut() {
            for (d, x) in row.iter_mut().enumerate() {
                *x = (*x - mean[d]) * inv_std[d];
            }
        }
        m
    })?;
    Ok((out, warnings))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Utterance;
    use ndarray::array;

    fn single(m: Array2<f64>) -> FeatureSet {
        FeatureSet::new(vec![Utterance::new("u", m)], 0.01).unwrap()
    }

    #[test]
    fn two_frames_unit_variance() {
        let (out, w) = apply_cmvn(&single(array![[1.0], [3.0]])).unwrap();
        assert!(w.is_empty());
        assert_eq!(out.utterances()[0].features, array![[-1.0], [1.0]]);
    }

    #[test]
    fn constant_dimension_is_mean_shifted_with_warning() {
        let (out, w) = apply_cmvn(&single(array![[5.0], [5.0], [5.0]])).unwrap();
        assert_eq!(out.utterances()[0].features, array![[0.0], [0.0], [0.0]]);
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].dim, 0);
    }

    #[test]
    fn sides_are_normalized_independently() {
        let fs = FeatureSet::new(
            vec![
                Utterance::new("a1", array![[0.0], [2.0]]),
                Utterance::new("a2", array![[4.0]]),
                Utterance::new("b1", array![[10.0], [30.0]]),
            ],
            0.01,
        )
        .unwrap()
        .with_sides(BTreeMap::from([
            ("a1".into(), "A".into()),
            ("a2".into(), "A".into()),
            ("b1".into(), "B".into()),
        ]))
        .unwrap();
        let (out, _) = apply_cmvn(&fs).unwrap();
        // side A: mean 2, variance 8/3
        let s = (8.0f64 / 3.0).sqrt();
        let a1 = &out.get("a1").unwrap().features;
        let a2 = &out.get("a2").unwrap().features;
        assert!((a1[[0, 0]] + 2.0 / s).abs() < 1e-12);
        assert!(a1[[1, 0]].abs() < 1e-12);
        assert!((a2[[0, 0]] - 2.0 / s).abs() < 1e-12);
        assert_eq!(out.get("b1").unwrap().features, array![[-1.0], [1.0]]);
        // pooling both sides into one group gives a different result
        let (pooled, _) = apply_cmvn(&fs.clone().with_sides(BTreeMap::from([
            ("a1".into(), "X".into()),
            ("a2".into(), "X".into()),
            ("b1".into(), "X".into()),
        ]))
        .unwrap())
        .unwrap();
        assert!((pooled.get("b1").unwrap().features[[0, 0]] + 1.0).abs() > 0.1);
    }

    #[test]
    fn side_with_one_frame_is_rejected() {
        assert!(apply_cmvn(&single(array![[1.0, 2.0]])).is_err());
    }

    #[test]
    fn idempotent() {
        let fs = single(array![[1.0, 7.0], [2.0, -3.0], [9.0, 0.5], [4.0, 4.0]]);
        let (once, _) = apply_cmvn(&fs).unwrap();
        let (twice, _) = apply_cmvn(&once).unwrap();
        for (a, b) in once.utterances()[0]
            .features
            .iter()
            .zip(twice.utterances()[0].features.iter())
        {
            assert!((a - b).abs() < 1e-6);
        }
    }
}
