use aud_core::corpus::apply_cmvn;
use aud_core::corpus::synth::{synth_corpus, SynthSpec};
use aud_core::decode::{posteriorgram, viterbi_tokenize, PosteriorLevel};
use aud_core::inference::train_vb;
use aud_core::lda::{second_pass, SecondPassConfig};
use aud_core::model::{init_model, ModelConfig};
use aud_core::persist::{lda_from_str, lda_to_string, load_lda, load_model, model_from_str, model_to_string, save_lda, save_model};
use aud_core::{Error, ErrorKind};

fn small_spec() -> SynthSpec {
    SynthSpec {
        n_true_units: 4,
        n_utterances: 12,
        n_topics: 0,
        docs_per_topic: 0,
        ..SynthSpec::default()
    }
}

#[test]
fn model_round_trip_decodes_identically() {
    let corpus = synth_corpus(&small_spec(), 3).unwrap();
    let fs = apply_cmvn(&corpus.features).unwrap().0;
    let cfg = ModelConfig::from_features(&fs, 6, 3, 2).unwrap();
    let model = train_vb(init_model(cfg, 1).unwrap(), &fs, 3).unwrap().model;

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    save_model(&model, &path).unwrap();
    let loaded = load_model(&path).unwrap();
    assert_eq!(loaded, model);
    assert_eq!(viterbi_tokenize(&loaded, &fs).unwrap(), viterbi_tokenize(&model, &fs).unwrap());
    let a = posteriorgram(&model, &fs, PosteriorLevel::Unit).unwrap();
    let b = posteriorgram(&loaded, &fs, PosteriorLevel::Unit).unwrap();
    for (x, y) in a.frames.utterances().iter().zip(b.frames.utterances()) {
        assert_eq!(x.features, y.features);
    }
    // saving again gives the same bytes
    assert_eq!(model_to_string(&loaded), std::fs::read_to_string(&path).unwrap());
}

#[test]
fn bad_model_files() {
    let corpus = synth_corpus(&small_spec(), 0).unwrap();
    let cfg = ModelConfig::from_features(&corpus.features, 3, 2, 1).unwrap();
    let text = model_to_string(&init_model(cfg, 0).unwrap());

    let bumped = text.replacen("\"version\": 1", "\"version\": 2", 1);
    assert!(matches!(
        model_from_str(&bumped),
        Err(Error::Version { found: 2, expected: 1, .. })
    ));
    let truncated = &text[..text.len() / 2];
    assert!(matches!(model_from_str(truncated), Err(Error::Corrupt { .. })));
    let negative = text.replacen("\"kappa\": 1.0", "\"kappa\": -1.0", 1);
    assert!(matches!(model_from_str(&negative), Err(Error::Corrupt { .. })));
    // an LDA file is not a model
    assert!(matches!(
        model_from_str(&text.replacen("phone-loop-model", "lda-transform", 1)),
        Err(Error::Corrupt { .. })
    ));

    let err = load_model(std::path::Path::new("/nonexistent/model.json")).unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Io);
    assert!(err.to_string().contains("/nonexistent/model.json"));
}

#[test]
fn lda_round_trip() {
    let corpus = synth_corpus(&small_spec(), 2).unwrap();
    let fs = apply_cmvn(&corpus.features).unwrap().0;
    let cfg = ModelConfig::from_features(&fs, 6, 3, 1).unwrap();
    let model = train_vb(init_model(cfg, 0).unwrap(), &fs, 2).unwrap().model;
    let sp = second_pass(
        &model,
        &fs,
        &corpus.features,
        &SecondPassConfig { dim_out: 8, n_iters: 1, ..Default::default() },
        |_, _, _| {},
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("lda.json");
    save_lda(&sp.lda, &path).unwrap();
    assert_eq!(load_lda(&path).unwrap(), sp.lda);
    let text = lda_to_string(&sp.lda);
    assert!(matches!(lda_from_str(&text[..40]), Err(Error::Corrupt { .. })));
    assert!(matches!(
        lda_from_str(&text.replacen("\"version\": 1", "\"version\": 7", 1)),
        Err(Error::Version { found: 7, .. })
    ));
}
