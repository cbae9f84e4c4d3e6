//! Dynamic time warping between MFCC sequences.
//!
//! The cumulative cost obeys `D(i, j) = d(i, j) + min(D(i-1, j-1), D(i-1, j), D(i, j-1))`
//! with `D(1, 1) = d(1, 1)` and cumulative sums along the first row and
//! column. There is no warping window.

use alloc::string::String;
use alloc::vec;

use serde::{Deserialize, Serialize};

use crate::audio::FeatureSequence;
use crate::datamodel::SubjectId;
use crate::error::{Error, Result};
use crate::score::{pairwise_scores, ScoreMatrix};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DtwOptions {
    /// Divide the accumulated cost by the length of the optimal warping path.
    pub normalize: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DtwResult {
    pub distance: f64,
    pub path_length: usize,
    pub normalized: bool,
}

/// Euclidean distance between two frames.
pub fn local_distance(e: &[f64], t: &[f64]) -> Result<f64> {
    if e.len() != t.len() {
        return Err(Error::DimensionMismatch {
            expected: e.len(),
            found: t.len(),
        });
    }
    Ok(euclidean(e, t))
}

#[inline]
fn euclidean(e: &[f64], t: &[f64]) -> f64 {
    let sq: f64 = e.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum();
    libm::sqrt(sq)
}

pub fn dtw_distance(e: &FeatureSequence, t: &FeatureSequence, opts: DtwOptions) -> Result<DtwResult> {
    if e.dim() != t.dim() {
        return Err(Error::DimensionMismatch {
            expected: e.dim(),
            found: t.dim(),
        });
    }
    let (n, m) = (e.n_frames(), t.n_frames());
    let (ef, tf) = (e.frames(), t.frames());

    // rolling rows of cost and path length, index 0 is the virtual border
    let mut prev = vec![f64::INFINITY; m + 1];
    let mut cur = vec![f64::INFINITY; m + 1];
    let mut prev_len = vec![0usize; m + 1];
    let mut cur_len = vec![0usize; m + 1];
    prev[0] = 0.0;
    for i in 1..=n {
        cur[0] = f64::INFINITY;
        let ei = ef.row(i - 1);
        for j in 1..=m {
            let d = euclidean(ei, tf.row(j - 1));
            // ties prefer the diagonal, then the vertical step
            let (mut best, mut len) = (prev[j - 1], prev_len[j - 1]);
            if prev[j] < best {
                best = prev[j];
                len = prev_len[j];
            }
            if cur[j - 1] < best {
                best = cur[j - 1];
                len = cur_len[j - 1];
            }
            cur[j] = best + d;
            cur_len[j] = len + 1;
        }
        core::mem::swap(&mut prev, &mut cur);
        core::mem::swap(&mut prev_len, &mut cur_len);
        prev[0] = f64::INFINITY;
    }
    let total = prev[m];
    let path_length = prev_len[m];
    let distance = if opts.normalize {
        total / path_length as f64
    } else {
        total
    };
    Ok(DtwResult {
        distance,
        path_length,
        normalized: opts.normalize,
    })
}

/// DTW score matrix; several gallery takes of one subject reduce by minimum.
pub fn pairwise_dtw_scores(
    probes: &[(String, &FeatureSequence)],
    gallery: &[(SubjectId, &FeatureSequence)],
    opts: DtwOptions,
) -> Result<ScoreMatrix> {
    pairwise_scores(probes, gallery, |p, g| Ok(dtw_distance(p, g, opts)?.distance))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;
    use alloc::string::ToString;

    fn seq(v: &[f64]) -> FeatureSequence {
        FeatureSequence::from_scalars(v).unwrap()
    }

    /// Exhaustive minimum over every monotone warping path.
    fn brute_force_scalar(e: &[f64], t: &[f64]) -> f64 {
        fn walk(e: &[f64], t: &[f64], i: usize, j: usize, acc: f64, best: &mut f64) {
            let acc = acc + libm::sqrt((e[i] - t[j]) * (e[i] - t[j]));
            if i + 1 == e.len() && j + 1 == t.len() {
                if acc < *best {
                    *best = acc;
                }
                return;
            }
            if i + 1 < e.len() && j + 1 < t.len() {
                walk(e, t, i + 1, j + 1, acc, best);
            }
            if i + 1 < e.len() {
                walk(e, t, i + 1, j, acc, best);
            }
            if j + 1 < t.len() {
                walk(e, t, i, j + 1, acc, best);
            }
        }
        let mut best = f64::INFINITY;
        walk(e, t, 0, 0, 0.0, &mut best);
        best
    }

    #[test]
    fn local_distance_cases() {
        assert_eq!(local_distance(&[1.0], &[3.0]).unwrap(), 2.0);
        assert_eq!(local_distance(&[0.5, 2.0], &[0.5, 2.0]).unwrap(), 0.0);
        assert_eq!(local_distance(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 5.0);
        assert!(local_distance(&[0.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn worked_example() {
        let r = dtw_distance(&seq(&[1.0, 2.0, 3.0]), &seq(&[1.0, 3.0]), DtwOptions::default()).unwrap();
        assert_eq!(r.distance, 1.0);
        assert_eq!(brute_force_scalar(&[1.0, 2.0, 3.0], &[1.0, 3.0]), 1.0);
        assert_eq!(r.path_length, 3);
    }

    #[test]
    fn identical_and_single_frame() {
        let a = seq(&[0.3, -1.0, 2.0, 2.0]);
        assert_eq!(dtw_distance(&a, &a, DtwOptions::default()).unwrap().distance, 0.0);
        let x = FeatureSequence::from_frames(Matrix::from_rows(&[[0.0, 0.0]]).unwrap()).unwrap();
        let y = FeatureSequence::from_frames(Matrix::from_rows(&[[3.0, 4.0]]).unwrap()).unwrap();
        assert_eq!(dtw_distance(&x, &y, DtwOptions::default()).unwrap().distance, 5.0);
    }

    #[test]
    fn normalization_divides_by_path() {
        let a = seq(&[0.0, 1.0, 2.0, 5.0]);
        let b = seq(&[1.0, 1.0, 4.0]);
        let raw = dtw_distance(&a, &b, DtwOptions::default()).unwrap();
        let norm = dtw_distance(&a, &b, DtwOptions { normalize: true }).unwrap();
        assert!(norm.normalized);
        assert!(raw.path_length >= 4);
        assert_eq!(norm.distance, raw.distance / raw.path_length as f64);
    }

    #[test]
    fn dimension_mismatch() {
        let x = FeatureSequence::from_frames(Matrix::from_rows(&[[0.0, 0.0]]).unwrap()).unwrap();
        assert!(matches!(
            dtw_distance(&x, &seq(&[1.0]), DtwOptions::default()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn score_matrix_min_over_takes() {
        let g1a = seq(&[0.0, 1.0, 2.0]);
        let g1b = seq(&[5.0, 5.0]);
        let g2 = seq(&[2.0, 2.0, 2.0]);
        let g3 = seq(&[9.0]);
        let p1 = seq(&[5.0, 5.0]);
        let p2 = seq(&[0.0, 2.0]);
        let s = |x: &str| SubjectId::new(x).unwrap();
        let gallery = [(s("a"), &g1a), (s("b"), &g2), (s("a"), &g1b), (s("c"), &g3)];
        let probes = [("p1".to_string(), &p1), ("p2".to_string(), &p2)];
        let m = pairwise_dtw_scores(&probes, &gallery, DtwOptions::default()).unwrap();
        assert_eq!((m.n_probes(), m.n_subjects()), (2, 3));
        assert_eq!(m.get(0, 0), 0.0);
        for (p, (_, probe)) in probes.iter().enumerate() {
            for (c, subj) in m.subject_ids().iter().enumerate() {
                let expect = gallery
                    .iter()
                    .filter(|(g, _)| g == subj)
                    .map(|(_, g)| dtw_distance(probe, g, DtwOptions::default()).unwrap().distance)
                    .fold(f64::INFINITY, f64::min);
                assert_eq!(m.get(p, c), expect);
            }
        }
    }
}
