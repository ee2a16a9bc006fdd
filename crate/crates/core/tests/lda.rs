mod common;

use aud_core::corpus::synth::{synth_corpus, SynthSpec};
use aud_core::corpus::{FeatureSet, Utterance};
use aud_core::inference::{e_step, train_vb, train_vb_with};
use aud_core::lda::{apply_lda, estimate_lda, second_pass, transfer_stats, LdaTransform, SecondPassConfig};
use aud_core::model::{init_model, ModelConfig};
use aud_core::Error;
use common::{labelled, within_scatter};
use ndarray::{array, Array1, Array2};

#[test]
fn one_dimensional_two_class() {
    let (fs, labels) = labelled(&[vec![-1.0], vec![1.0]], 400, 0.5, 1);
    let t = estimate_lda(&fs, &labels, 1, 0.0).unwrap();
    let sw = within_scatter(&fs, &labels)[[0, 0]];
    assert!((t.projection[[0, 0]] - 1.0 / sw.sqrt()).abs() < 1e-9);
    let proj = apply_lda(&t, &fs).unwrap();
    let mean_of = |i: usize| proj.utterances()[i].features.mean().unwrap();
    assert!(mean_of(0) < 0.0 && mean_of(1) < 0.0);
    assert!(mean_of(2) > 0.0 && mean_of(3) > 0.0);
}

#[test]
fn recovers_informative_axis() {
    let means = vec![vec![-1.0, 0.0, 0.0], vec![0.0, 0.0, 0.0], vec![1.0, 0.0, 0.0]];
    let (fs, labels) = labelled(&means, 300, 0.01, 2);
    let t = estimate_lda(&fs, &labels, 2, 1e-4).unwrap();
    let row = t.projection.row(0);
    let cos = row[0].abs() / row.dot(&row).sqrt();
    assert!(cos >= 0.99, "cos {cos}");
    assert!(t.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
    assert!(t.eigenvalues.iter().all(|&e| e >= 0.0));
    assert_eq!(t.class_count, 3);
}

#[test]
fn projection_whitens_within_class_scatter() {
    let means = vec![vec![0.0, 1.0, 2.0, 0.0], vec![1.0, -1.0, 0.0, 0.5], vec![2.0, 0.0, 1.0, 1.0], vec![-1.0, 0.5, 0.0, -2.0]];
    let (fs, labels) = labelled(&means, 200, 0.7, 3);
    for ridge in [0.0, 1e-4, 0.1] {
        let t = estimate_lda(&fs, &labels, 3, ridge).unwrap();
        let mut sw = within_scatter(&fs, &labels);
        let shift = ridge * sw.diag().sum() / 4.0;
        for i in 0..4 {
            sw[[i, i]] += shift;
        }
        let w = t.projection.dot(&sw).dot(&t.projection.t());
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((w[[i, j]] - want).abs() < 1e-6, "ridge {ridge}: {w}");
            }
        }
    }
    // recomputed scatter of the projected data
    let t = estimate_lda(&fs, &labels, 3, 0.0).unwrap();
    let sw = within_scatter(&apply_lda(&t, &fs).unwrap(), &labels);
    for i in 0..3 {
        for j in 0..3 {
            assert!((sw[[i, j]] - if i == j { 1.0 } else { 0.0 }).abs() < 1e-6);
        }
    }
}

#[test]
fn invariant_under_invertible_recoding() {
    let means = vec![vec![0.0, 1.0, 2.0], vec![1.0, -1.0, 0.0], vec![2.0, 0.0, 1.0], vec![-1.0, 0.5, 0.0]];
    let (fs, labels) = labelled(&means, 150, 0.6, 4);
    let a = array![[2.0, 0.3, -1.0], [0.5, 1.0, 0.2], [-0.4, 0.7, 3.0]];
    let b = Array1::from(vec![5.0, -3.0, 0.25]);
    let recoded = fs.map_features(|u| u.features.dot(&a.t()) + &b).unwrap();
    let p1 = apply_lda(&estimate_lda(&fs, &labels, 3, 0.0).unwrap(), &fs).unwrap();
    let p2 = apply_lda(&estimate_lda(&recoded, &labels, 3, 0.0).unwrap(), &recoded).unwrap();
    for d in 0..3 {
        let x1 = &p1.utterances()[0].features;
        let x2 = &p2.utterances()[0].features;
        let sign = if (x1[[0, d]] * x2[[0, d]]) < 0.0 { -1.0 } else { 1.0 };
        for (u1, u2) in p1.utterances().iter().zip(p2.utterances()) {
            for t in 0..u1.n_frames() {
                let (v1, v2) = (u1.features[[t, d]], sign * u2.features[[t, d]]);
                assert!((v1 - v2).abs() < 1e-5, "dim {d}: {v1} vs {v2}");
            }
        }
    }
}

#[test]
fn apply_is_affine() {
    let t = LdaTransform {
        input_mean: vec![1.0, 2.0],
        projection: array![[1.0, 0.5]],
        class_count: 2,
        eigenvalues: vec![1.0],
        context: 0,
    };
    let fs = FeatureSet::new(vec![Utterance::new("a", array![[1.0, 2.0], [3.0, 2.0]])], 0.01).unwrap();
    let out = apply_lda(&t, &fs).unwrap();
    assert_eq!(out.utterances()[0].features, array![[0.0], [2.0]]);

    let ident = LdaTransform {
        input_mean: vec![0.0; 2],
        projection: Array2::eye(2),
        class_count: 3,
        eigenvalues: vec![1.0, 1.0],
        context: 0,
    };
    assert_eq!(apply_lda(&ident, &fs).unwrap(), fs);

    let lin = LdaTransform {
        input_mean: vec![0.0; 2],
        projection: array![[0.3, -1.2], [2.0, 0.7]],
        class_count: 3,
        eigenvalues: vec![2.0, 1.0],
        context: 0,
    };
    let x = array![[0.2, -0.4]];
    let y = array![[1.5, 3.0]];
    let (alpha, beta) = (0.7, -2.5);
    let one = |m: Array2<f64>| {
        let f = FeatureSet::new(vec![Utterance::new("a", m)], 0.01).unwrap();
        apply_lda(&lin, &f).unwrap().utterances()[0].features.clone()
    };
    let combined = one(&x * alpha + &y * beta);
    let separate = one(x) * alpha + one(y) * beta;
    assert!((combined - separate).iter().all(|v| v.abs() < 1e-10));
    let wide = FeatureSet::new(vec![Utterance::new("a", Array2::zeros((1, 3)))], 0.01).unwrap();
    assert!(apply_lda(&lin, &wide).is_err());
}

#[test]
fn degenerate_inputs_fail_cleanly() {
    let (fs, labels) = labelled(&[vec![0.0, 1.0]], 50, 1.0, 5);
    assert!(matches!(estimate_lda(&fs, &labels, 1, 1e-4), Err(Error::Invalid(_))));

    let (fs, labels) = labelled(&[vec![0.0, 0.0], vec![1.0, 1.0]], 50, 1.0, 6);
    assert!(estimate_lda(&fs, &labels, 2, 1e-4).is_err());
    assert!(estimate_lda(&fs, &labels[..1], 1, 1e-4).is_err());
    // a duplicated dimension makes the scatter singular without a ridge
    let dup = fs
        .map_features(|u| ndarray::concatenate![ndarray::Axis(1), u.features, u.features.slice(ndarray::s![.., ..1])])
        .unwrap();
    match estimate_lda(&dup, &labels, 1, 0.0) {
        Err(Error::NotPositiveDefinite { pivot, .. }) => assert_eq!(pivot, 2),
        other => panic!("expected a pivot failure, got {other:?}"),
    }
    assert!(estimate_lda(&dup, &labels, 1, 1e-4).is_ok());
}

fn synth_fixture() -> (FeatureSet, aud_core::model::PhoneLoopModel) {
    let spec = SynthSpec {
        n_true_units: 4,
        dim: 4,
        n_utterances: 12,
        ..SynthSpec::default()
    };
    let fs = synth_corpus(&spec, 9).unwrap().features;
    let cfg = ModelConfig::from_features(&fs, 8, 3, 2).unwrap();
    let model = train_vb(init_model(cfg, 1).unwrap(), &fs, 5).unwrap().model;
    (fs, model)
}

#[test]
fn transferred_statistics() {
    let (fs, model) = synth_fixture();
    let same = transfer_stats(&model, &fs, &fs).unwrap();
    assert_eq!(same, e_step(&model, &fs).unwrap());

    let doubled = fs.map_features(|u| &u.features * 2.0).unwrap();
    let st = transfer_stats(&model, &fs, &doubled).unwrap();
    assert_eq!(st.occupancy, same.occupancy);
    assert_eq!(st.transitions, same.transitions);
    assert!((&st.s1 - &(&same.s1 * 2.0)).iter().all(|v| v.abs() < 1e-9));
    assert!((&st.s2 - &(&same.s2 * 4.0)).iter().all(|v| v.abs() < 1e-8));

    let shorter = fs
        .map_features(|u| u.features.slice(ndarray::s![..u.n_frames() - 1, ..]).to_owned())
        .unwrap();
    assert!(transfer_stats(&model, &fs, &shorter).is_err());
}

#[test]
fn seeded_second_pass_starts_higher() {
    let (fs, model) = synth_fixture();
    let cfg = SecondPassConfig {
        context: 2,
        dim_out: 6,
        n_iters: 3,
        ..SecondPassConfig::default()
    };
    let sp = second_pass(&model, &fs, &fs, &cfg, |_, _, _| {}).unwrap();
    assert_eq!(sp.lda.context, 2);
    assert_eq!(sp.features.dim(), sp.lda.dim_out());
    let mcfg = ModelConfig::from_features(&sp.features, 8, 3, 2).unwrap();
    let fresh = train_vb_with(init_model(mcfg, 0).unwrap(), &sp.features, None, 1, |_, _, _| {}).unwrap();
    assert!(sp.report.elbo[0] > fresh.elbo[0], "{} vs {}", sp.report.elbo[0], fresh.elbo[0]);
    for w in sp.report.elbo.windows(2) {
        assert!(w[1] >= w[0] - 1e-6 * w[0].abs());
    }
}
