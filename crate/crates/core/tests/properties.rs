use std::collections::BTreeMap;

use proptest::prelude::*;
use twinfuse_core::audio::{frame_count, FeatureSequence};
use twinfuse_core::datamodel::SubjectId;
use twinfuse_core::dtw::{dtw_distance, DtwOptions};
use twinfuse_core::embeddings::{pca_fit, pca_project, pca_reconstruct, PcaDim};
use twinfuse_core::eval::{cmc_auc, cmc_curve, probe_ranks, summarize};
use twinfuse_core::fusion::{tanh_normalize, weighted_fuse};
use twinfuse_core::hog::{hog_descriptor, GrayImage, HogConfig};
use twinfuse_core::{Matrix, ScoreMatrix};

/// Minimum cost over every monotone warping path, by exhaustive recursion.
fn enumerate_paths(a: &[f64], b: &[f64]) -> f64 {
    fn go(a: &[f64], b: &[f64], i: usize, j: usize, acc: f64) -> f64 {
        let acc = acc + (a[i] - b[j]).abs();
        if i + 1 == a.len() && j + 1 == b.len() {
            return acc;
        }
        let mut best = f64::INFINITY;
        if i + 1 < a.len() && j + 1 < b.len() {
            best = best.min(go(a, b, i + 1, j + 1, acc));
        }
        if i + 1 < a.len() {
            best = best.min(go(a, b, i + 1, j, acc));
        }
        if j + 1 < b.len() {
            best = best.min(go(a, b, i, j + 1, acc));
        }
        best
    }
    go(a, b, 0, 0, 0.0)
}

/// Rank by sorting the row ascending; the true subject goes after every
/// equal score.
fn sorted_rank(row: &[f64], truth: usize) -> usize {
    let mut order: Vec<usize> = (0..row.len()).collect();
    order.sort_by(|&x, &y| {
        row[x]
            .partial_cmp(&row[y])
            .unwrap()
            .then_with(|| (x == truth).cmp(&(y == truth)))
    });
    order.iter().position(|&c| c == truth).unwrap() + 1
}

fn subjects(n: usize) -> Vec<SubjectId> {
    (0..n).map(|i| SubjectId::new(format!("s{i:02}")).unwrap()).collect()
}

fn score_matrix(rows: usize, cols: usize, values: Vec<f64>) -> ScoreMatrix {
    ScoreMatrix::new(
        (0..rows).map(|i| format!("p{i:02}")).collect(),
        subjects(cols),
        Matrix::from_vec(rows, cols, values).unwrap(),
        false,
    )
    .unwrap()
}

fn matrix_strategy(rows: usize, cols: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-50.0f64..50.0, rows * cols)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn dtw_matches_exhaustive_paths(
        a in prop::collection::vec(0u8..3, 1..=6),
        b in prop::collection::vec(0u8..3, 1..=6),
    ) {
        let a: Vec<f64> = a.into_iter().map(f64::from).collect();
        let b: Vec<f64> = b.into_iter().map(f64::from).collect();
        let sa = FeatureSequence::from_scalars(&a).unwrap();
        let sb = FeatureSequence::from_scalars(&b).unwrap();
        let d = dtw_distance(&sa, &sb, DtwOptions::default()).unwrap().distance;
        prop_assert_eq!(d.to_bits(), enumerate_paths(&a, &b).to_bits());
        let back = dtw_distance(&sb, &sa, DtwOptions::default()).unwrap().distance;
        prop_assert_eq!(d.to_bits(), back.to_bits());
    }

    #[test]
    fn dtw_normalized_bounds(
        a in prop::collection::vec(-3.0f64..3.0, 1..12),
        b in prop::collection::vec(-3.0f64..3.0, 1..12),
    ) {
        let sa = FeatureSequence::from_scalars(&a).unwrap();
        let sb = FeatureSequence::from_scalars(&b).unwrap();
        let raw = dtw_distance(&sa, &sb, DtwOptions::default()).unwrap();
        let r = dtw_distance(&sa, &sb, DtwOptions { normalize: true }).unwrap();
        prop_assert!(r.normalized && !raw.normalized);
        prop_assert!(r.path_length >= a.len().max(b.len()));
        prop_assert!(r.path_length <= a.len() + b.len() - 1);
        prop_assert!((r.distance * r.path_length as f64 - raw.distance).abs() < 1e-9);
    }

    #[test]
    fn tanh_preserves_row_order(values in matrix_strategy(6, 7)) {
        let raw = score_matrix(6, 7, values);
        let n = tanh_normalize(&raw).unwrap();
        for v in n.values().as_slice() {
            prop_assert!(*v > 0.0 && *v < 1.0);
        }
        for r in 0..6 {
            let a = raw.values().row(r);
            let b = n.values().row(r);
            for i in 0..7 {
                for j in 0..7 {
                    if a[i] < a[j] {
                        prop_assert!(b[i] < b[j]);
                    }
                }
            }
        }
    }

    #[test]
    fn fusing_copies_is_identity(values in matrix_strategy(4, 5), w in prop::collection::vec(0.0f64..1.0, 3)) {
        let n = tanh_normalize(&score_matrix(4, 5, values)).unwrap();
        let total: f64 = w.iter().sum();
        prop_assume!(total > 1e-3);
        let mut w: Vec<f64> = w.iter().map(|x| x / total).collect();
        let drift: f64 = 1.0 - w.iter().sum::<f64>();
        w[0] += drift;
        prop_assume!(w[0] >= 0.0);
        let f = weighted_fuse(&[&n, &n, &n], &w).unwrap();
        for (x, y) in f.values().as_slice().iter().zip(n.values().as_slice()) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn ranks_match_sorting_oracle(values in prop::collection::vec(0u8..6, 100), truth in prop::collection::vec(0usize..10, 10)) {
        let m = score_matrix(10, 10, values.into_iter().map(f64::from).collect());
        let ids = subjects(10);
        let t: BTreeMap<String, SubjectId> = truth
            .iter()
            .enumerate()
            .map(|(p, &s)| (format!("p{p:02}"), ids[s].clone()))
            .collect();
        let ranks = probe_ranks(&m, &t).unwrap();
        for (p, r) in ranks.iter().enumerate() {
            prop_assert_eq!(r.rank, sorted_rank(m.values().row(p), truth[p]));
        }
        let c = cmc_curve(&ranks, 10).unwrap();
        prop_assert!(c.rates.windows(2).all(|w| w[0] <= w[1]));
        prop_assert_eq!(*c.rates.last().unwrap(), 1.0);
        let s = summarize(&c);
        prop_assert!(s.rank1 <= s.rank2 && s.rank2 <= s.rank5);
        let auc = cmc_auc(&c);
        prop_assert!(auc >= s.rank1 && auc <= 1.0);
    }

    #[test]
    fn frame_count_formula(len in 1usize..5000, frame in 1usize..600, hop_frac in 0.05f64..1.0) {
        let hop = ((frame as f64 * hop_frac) as usize).max(1);
        prop_assume!(len >= frame);
        let n = frame_count(len, frame, hop);
        prop_assert!((n - 1) * hop + frame <= len);
        prop_assert!(n * hop + frame > len);
    }

    #[test]
    fn hog_ignores_brightness_shift(pixels in prop::collection::vec(0.0f64..0.5, 16 * 24), shift in 0.0f64..0.5) {
        let cfg = HogConfig { resize: None, ..HogConfig::default() };
        let a = GrayImage::new(16, 24, pixels.clone()).unwrap();
        let b = GrayImage::new(16, 24, pixels.iter().map(|p| p + shift).collect()).unwrap();
        let da = hog_descriptor(&a, &cfg).unwrap();
        let db = hog_descriptor(&b, &cfg).unwrap();
        for (x, y) in da.iter().zip(&db) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn full_rank_pca_round_trip(data in prop::collection::vec(-5.0f64..5.0, 8 * 4)) {
        let rows: Vec<&[f64]> = data.chunks(4).collect();
        let model = match pca_fit(&rows, PcaDim::Fixed(4)) {
            Ok(m) => m,
            // random data can be rank deficient only on a null set
            Err(_) => return Ok(()),
        };
        for r in &rows {
            let back = pca_reconstruct(&model, &pca_project(&model, r).unwrap()).unwrap();
            for (x, y) in back.iter().zip(r.iter()) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }
    }
}
