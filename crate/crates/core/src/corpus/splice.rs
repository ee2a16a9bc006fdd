use ndarray::{s, Array2};

use super::FeatureSet;
use crate::error::Result;

/// Stacks `context` frames on each side of every frame. Rows outside the
/// utterance are replaced by the first or last row.
pub fn splice_frames(frames: &Array2<f64>, context: usize) -> Array2<f64> {
    let (n, dim) = frames.dim();
    let width = 2 * context + 1;
    let mut out = Array2::zeros((n, width * dim));
    if n == 0 {
        return out;
    }
    for t in 0..n {
        for k in 0..width {
            let src = (t + k).saturating_sub(context).min(n - 1);
            out.slice_mut(s![t, k * dim..(k + 1) * dim])
                .assign(&frames.row(src));
        }
    }
    out
}

pub fn splice_features(fs: &FeatureSet, context: usize) -> Result<FeatureSet> {
    fs.map_features(|u| splice_frames(&u.features, context))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn zero_context_is_identity() {
        let m = array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]];
        assert_eq!(splice_frames(&m, 0), m);
    }

    #[test]
    fn edge_replication() {
        let m = array![[1.0], [2.0]];
        assert_eq!(splice_frames(&m, 1), array![[1.0, 1.0, 2.0], [1.0, 2.0, 2.0]]);
    }

    #[test]
    fn wide_context_matches_scripted_construction() {
        let m = array![[0.0, 0.5], [1.0, 1.5], [2.0, 2.5]];
        let out = splice_frames(&m, 5);
        assert_eq!(out.dim(), (3, 22));
        // oracle: explicit clamp of every offset in -5..=5
        for t in 0..3i64 {
            let mut expect = Vec::new();
            for off in -5i64..=5 {
                let r = (t + off).clamp(0, 2) as usize;
                expect.extend(m.row(r).iter().copied());
            }
            assert_eq!(out.row(t as usize).to_vec(), expect);
        }
        // middle row: f0 x5, f1, f2 x5
        let mid = out.row(1).to_vec();
        assert_eq!(&mid[8..10], &[0.0, 0.5]);
        assert_eq!(&mid[10..12], &[1.0, 1.5]);
        assert_eq!(&mid[12..14], &[2.0, 2.5]);
        assert_eq!(&mid[20..22], &[2.0, 2.5]);
    }

    #[test]
    fn empty_matrix() {
        let m = Array2::<f64>::zeros((0, 3));
        assert_eq!(splice_frames(&m, 2).dim(), (0, 15));
    }

    proptest! {
        #[test]
        fn row_count_preserved(n in 0usize..20, dim in 1usize..4, context in 0usize..7) {
            let m = Array2::from_shape_fn((n, dim), |(i, j)| (i * 7 + j) as f64);
            let out = splice_frames(&m, context);
            prop_assert_eq!(out.nrows(), n);
            prop_assert_eq!(out.ncols(), (2 * context + 1) * dim);
            // centre block is the original frame
            for t in 0..n {
                let centre = out.slice(s![t, context * dim..(context + 1) * dim]).to_owned();
                prop_assert_eq!(centre, m.row(t).to_owned());
            }
        }
    }
}
