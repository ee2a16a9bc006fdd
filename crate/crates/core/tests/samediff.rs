use std::collections::BTreeMap;

use aud_core::corpus::{FeatureSet, LabeledSpan, ReferenceTranscript, Utterance, WordSegment};
use aud_core::eval::samediff::{
    average_precision, dtw_distance, extract_word_segments, same_different_eval, symmetric_kl,
    ScoredPair,
};
use ndarray::{array, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn word_filters() {
    let mut map = BTreeMap::new();
    map.insert(
        "u".to_string(),
        vec![
            LabeledSpan::new("cat", 0, 80),
            LabeledSpan::new("recycling", 80, 120),
            LabeledSpan::new("Recycling", 120, 190),
        ],
    );
    let words = ReferenceTranscript::from_map(map).unwrap();
    let segs = extract_word_segments(&words, 0.5, 6, 0.01);
    assert_eq!(
        segs,
        vec![WordSegment {
            utterance_id: "u".into(),
            start: 120,
            end: 190,
            word_type: "recycling".into()
        }]
    );
}

#[test]
fn symmetric_kl_with_floor() {
    let f = 1e-10;
    let got = symmetric_kl(&[1.0, 0.0], &[0.0, 1.0], f).unwrap();
    // floored and renormalized: p = (1, f)/(1+f), q reversed
    let (hi, lo) = (1.0 / (1.0 + f), f / (1.0 + f));
    let want = 2.0 * (hi - lo) * (hi.ln() - lo.ln());
    assert!(got.is_finite() && got > 40.0);
    assert!((got - want).abs() < 1e-9 * want);
}

fn random_posteriorgram<R: Rng>(rng: &mut R, n: usize, k: usize) -> Array2<f64> {
    let mut m = Array2::from_shape_fn((n, k), |_| rng.random_range(0.0..1.0f64).powi(3));
    for mut row in m.rows_mut() {
        let s = row.sum();
        row /= s;
    }
    m
}

/// Brute-force DTW: over every monotone path, the minimum accumulated cost
/// (shorter path on ties), divided by its node count.
fn dtw_oracle(a: &Array2<f64>, b: &Array2<f64>, floor: f64) -> f64 {
    fn walk(i: usize, j: usize, a: &Array2<f64>, b: &Array2<f64>, floor: f64, cost: f64, nodes: usize, best: &mut (f64, usize)) {
        let cost = cost + symmetric_kl(&a.row(i).to_vec(), &b.row(j).to_vec(), floor).unwrap();
        let nodes = nodes + 1;
        if i + 1 == a.nrows() && j + 1 == b.nrows() {
            if cost < best.0 || (cost == best.0 && nodes < best.1) {
                *best = (cost, nodes);
            }
            return;
        }
        if i + 1 < a.nrows() {
            walk(i + 1, j, a, b, floor, cost, nodes, best);
        }
        if j + 1 < b.nrows() {
            walk(i, j + 1, a, b, floor, cost, nodes, best);
        }
        if i + 1 < a.nrows() && j + 1 < b.nrows() {
            walk(i + 1, j + 1, a, b, floor, cost, nodes, best);
        }
    }
    let mut best = (f64::INFINITY, usize::MAX);
    walk(0, 0, a, b, floor, 0.0, 0, &mut best);
    best.0 / best.1 as f64
}

#[test]
fn dtw_matches_path_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..200 {
        let (na, nb) = (rng.random_range(1..=4), rng.random_range(1..=4));
        let a = random_posteriorgram(&mut rng, na, 3);
        let b = random_posteriorgram(&mut rng, nb, 3);
        let got = dtw_distance(a.view(), b.view(), 1e-8, None).unwrap();
        let want = dtw_oracle(&a, &b, 1e-8);
        assert!((got - want).abs() <= 1e-12, "{got} vs {want}");
    }
    let a = array![[0.2, 0.8]];
    let b = array![[0.6, 0.4]];
    let d = dtw_distance(a.view(), b.view(), 1e-8, None).unwrap();
    assert_eq!(d, symmetric_kl(&[0.2, 0.8], &[0.6, 0.4], 1e-8).unwrap());
}

#[test]
fn dtw_is_symmetric_and_zero_on_self() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..1000 {
        let (na, nb) = (rng.random_range(1..=12), rng.random_range(1..=12));
        let a = random_posteriorgram(&mut rng, na, 6);
        let b = random_posteriorgram(&mut rng, nb, 6);
        let ab = dtw_distance(a.view(), b.view(), 1e-8, None).unwrap();
        let ba = dtw_distance(b.view(), a.view(), 1e-8, None).unwrap();
        assert_eq!(ab, ba);
        assert_eq!(dtw_distance(a.view(), a.view(), 1e-8, None).unwrap(), 0.0);
        let banded = dtw_distance(a.view(), b.view(), 1e-8, Some(3)).unwrap();
        assert!(banded >= 0.0 && banded.is_finite());
        assert_eq!(dtw_distance(a.view(), b.view(), 1e-8, Some(12)).unwrap(), ab);
    }
    let a = random_posteriorgram(&mut rng, 3, 4);
    let b = random_posteriorgram(&mut rng, 3, 5);
    assert!(dtw_distance(a.view(), b.view(), 1e-8, None).is_err());
}

fn pair(id: usize, d: f64, same: bool) -> ScoredPair {
    ScoredPair {
        a: format!("s{id:05}"),
        b: "t".into(),
        distance: d,
        same,
    }
}

#[test]
fn average_precision_fixtures() {
    let perfect: Vec<_> = (0..10).map(|i| pair(i, i as f64, i < 4)).collect();
    assert_eq!(average_precision(&perfect).unwrap(), 1.0);
    let last: Vec<_> = (0..7).map(|i| pair(i, i as f64, i == 6)).collect();
    assert!((average_precision(&last).unwrap() - 1.0 / 7.0).abs() < 1e-15);
    let ranks = vec![pair(0, 0.1, false), pair(1, 0.2, true), pair(2, 0.3, true), pair(3, 0.4, false)];
    assert!((average_precision(&ranks).unwrap() - 0.583_333_333_333_333_3).abs() < 1e-12);
    let squashed: Vec<_> = ranks
        .iter()
        .map(|p| ScoredPair {
            distance: (3.0 * p.distance).exp(),
            ..p.clone()
        })
        .collect();
    assert_eq!(average_precision(&squashed).unwrap(), average_precision(&ranks).unwrap());
}

#[test]
fn random_scores_give_base_rate() {
    let (n_pos, n_neg) = (5000, 45000);
    let mut aps = Vec::new();
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pairs: Vec<_> = (0..n_pos + n_neg)
            .map(|i| pair(i, rng.random_range(0.0..1.0), i < n_pos))
            .collect();
        aps.push(average_precision(&pairs).unwrap());
    }
    let mean = aps.iter().sum::<f64>() / 20.0;
    let sd = (aps.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / 19.0).sqrt();
    let base = n_pos as f64 / (n_pos + n_neg) as f64;
    assert!((mean - base).abs() <= 3.0 * sd / 20f64.sqrt(), "{mean} vs {base}");
}

#[test]
fn evaluation_over_segments() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let utts = (0..3)
        .map(|i| Utterance::new(format!("u{i}"), random_posteriorgram(&mut rng, 30, 4)))
        .collect();
    let pg = FeatureSet::new(utts, 0.01).unwrap();
    let seg = |u: usize, s: usize, e: usize, w: &str| WordSegment {
        utterance_id: format!("u{u}"),
        start: s,
        end: e,
        word_type: w.into(),
    };
    let mut segs = vec![
        seg(0, 0, 10, "alpha"),
        seg(1, 5, 12, "alpha"),
        seg(2, 3, 20, "bravo"),
        seg(0, 12, 18, "bravo"),
        seg(1, 14, 29, "charlie"),
    ];
    let report = same_different_eval(&segs, &pg, 1e-8, None).unwrap();
    assert_eq!(report.n_pairs(), 10);
    assert_eq!(report.n_same, 2);
    segs.shuffle(&mut rng);
    let shuffled = same_different_eval(&segs, &pg, 1e-8, None).unwrap();
    assert_eq!(shuffled.average_precision, report.average_precision);
    assert_eq!(shuffled.pairs, report.pairs);
    assert_eq!(report.pair_lines().count(), 10);

    // identical copies of one word: distance 0, AP 1
    let twin = FeatureSet::new(
        vec![Utterance::new("a", array![[0.5, 0.5], [0.1, 0.9]]), Utterance::new("b", array![[0.5, 0.5], [0.1, 0.9]])],
        0.01,
    )
    .unwrap();
    let one = vec![
        WordSegment { utterance_id: "a".into(), start: 0, end: 2, word_type: "w".into() },
        WordSegment { utterance_id: "b".into(), start: 0, end: 2, word_type: "w".into() },
    ];
    let r = same_different_eval(&one, &twin, 1e-8, None).unwrap();
    assert_eq!(r.average_precision, 1.0);
    assert_eq!(r.pairs[0].distance, 0.0);

    segs.push(seg(2, 25, 31, "delta"));
    assert!(same_different_eval(&segs, &pg, 1e-8, None).is_err());
}
