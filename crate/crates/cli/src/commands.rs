use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use aud_core::corpus::synth::{synth_corpus, SynthSpec};
use aud_core::corpus::{
    apply_cmvn, read_documents, read_transcript, read_word_segments, write_documents, write_transcript,
    write_word_segments, FeatureSet,
};
use aud_core::decode::{posteriorgram, unit_inventory, viterbi_tokenize, PosteriorLevel, Tokenization};
use aud_core::eval::docs::{
    bcubed_f1, cross_validate, mean_std, ngram_tfidf, purity, repeated_bisection_cluster, DocVector, SvmConfig,
};
use aud_core::eval::nmi::{align_tokens, nmi};
use aud_core::eval::samediff::{extract_word_segments, same_different_eval, DEFAULT_FLOOR};
use aud_core::inference::{train_vb_with, TrainReport};
use aud_core::lda::{
    estimate_self_lda, project_features, train_second_model, DEFAULT_CONTEXT, DEFAULT_DIM_OUT, DEFAULT_RIDGE,
};
use aud_core::model::{init_model, ModelConfig, PhoneLoopModel};
use aud_core::persist::{load_lda, load_model, save_lda, save_model, FORMAT_VERSION};
use clap::Args;

use crate::failure::{Failure, Stage};
use crate::manifest::{load_features, save_features, Settings};

pub type Report = Vec<(String, String)>;

pub struct Context {
    pub settings: Settings,
    pub seed: u64,
}

fn kv(key: &str, value: impl ToString) -> (String, String) {
    (key.to_string(), value.to_string())
}

fn fmt6(x: f64) -> String {
    format!("{x:.6}")
}

/// Options shared by every subcommand that reads a feature archive.
#[derive(Args, Debug, Clone)]
pub struct FeatureArgs {
    /// FEAT1 feature archive
    #[arg(long)]
    features: Option<PathBuf>,
    /// Per-side CMVN of the input features [default: true]
    #[arg(long)]
    cmvn: Option<bool>,
    /// Frame period in seconds, overriding the archive's sidecar [default: 0.01]
    #[arg(long)]
    frame_period_s: Option<f64>,
}

impl FeatureArgs {
    fn cmvn(&self, s: &Settings) -> Result<bool, Failure> {
        s.or(self.cmvn, "cmvn", true)
    }

    fn load_path(&self, s: &Settings, path: &Path) -> Result<FeatureSet, Failure> {
        let fs = load_features(path, s.opt(self.frame_period_s, "frame_period_s")?)?;
        if !self.cmvn(s)? {
            return Ok(fs);
        }
        // warnings are logged by apply_cmvn itself
        Ok(apply_cmvn(&fs).stage("cmvn")?.0)
    }

    fn load(&self, s: &Settings) -> Result<FeatureSet, Failure> {
        self.load_path(s, &s.req_path(self.features.clone(), "features")?)
    }
}

fn feature_summary(fs: &FeatureSet) -> Report {
    vec![
        kv("utterances", fs.len()),
        kv("frames", fs.total_frames()),
        kv("dim", fs.dim()),
    ]
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Output directory
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Number of true units [default: 8]
    #[arg(long)]
    units: Option<usize>,
    /// States per true unit [default: 3]
    #[arg(long)]
    synth_states: Option<usize>,
    /// Feature dimension [default: 13]
    #[arg(long)]
    dim: Option<usize>,
    /// Number of utterances [default: 50]
    #[arg(long)]
    utterances: Option<usize>,
    /// Distance scale between state means in noise units [default: 5]
    #[arg(long)]
    separation: Option<f64>,
    /// Mean frames per state [default: 3]
    #[arg(long)]
    frames_per_state: Option<f64>,
    /// Number of topics; 0 disables documents [default: 2]
    #[arg(long)]
    topics: Option<usize>,
    /// Documents per topic [default: 5]
    #[arg(long)]
    docs_per_topic: Option<usize>,
    /// Lexicon size [default: 12]
    #[arg(long)]
    word_types: Option<usize>,
    /// Words per utterance [default: 4]
    #[arg(long)]
    words_per_utterance: Option<usize>,
    /// Probability that a word comes from the document's topic [default: 0.9]
    #[arg(long)]
    topic_purity: Option<f64>,
    /// Frame period in seconds [default: 0.01]
    #[arg(long)]
    frame_period_s: Option<f64>,
}

pub fn synth(a: SynthArgs, ctx: &Context) -> Result<Report, Failure> {
    let s = &ctx.settings;
    let d = SynthSpec::default();
    let spec = SynthSpec {
        n_true_units: s.or(a.units, "units", d.n_true_units)?,
        states_per_unit: s.or(a.synth_states, "synth_states", d.states_per_unit)?,
        dim: s.or(a.dim, "dim", d.dim)?,
        n_utterances: s.or(a.utterances, "utterances", d.n_utterances)?,
        mean_frames_per_state: s.or(a.frames_per_state, "frames_per_state", d.mean_frames_per_state)?,
        separation: s.or(a.separation, "separation", d.separation)?,
        n_topics: s.or(a.topics, "topics", d.n_topics)?,
        docs_per_topic: s.or(a.docs_per_topic, "docs_per_topic", d.docs_per_topic)?,
        n_word_types: s.or(a.word_types, "word_types", d.n_word_types)?,
        words_per_utterance: s.or(a.words_per_utterance, "words_per_utterance", d.words_per_utterance)?,
        topic_purity: s.or(a.topic_purity, "topic_purity", d.topic_purity)?,
        frame_period_s: s.or(a.frame_period_s, "frame_period_s", d.frame_period_s)?,
        ..d
    };
    let out = s.req_path(a.out_dir, "out_dir")?;
    let corpus = synth_corpus(&spec, ctx.seed).stage("synth")?;
    std::fs::create_dir_all(&out).map_err(|e| Failure::io("synth", &out, e))?;
    save_features(&out.join("feats.ark"), &corpus.features)?;
    write_transcript(out.join("phones.txt"), &corpus.phones).stage("write phones")?;
    write_transcript(out.join("words.txt"), &corpus.words).stage("write words")?;
    write_word_segments(out.join("segments.txt"), &corpus.segments).stage("write segments")?;
    write_documents(out.join("documents.txt"), &corpus.documents).stage("write documents")?;
    log::info!("synthetic corpus written to {}", out.display());
    let mut r = feature_summary(&corpus.features);
    r.push(kv("segments", corpus.segments.len()));
    r.push(kv("documents", corpus.documents.len()));
    Ok(r)
}

/// Writes `iter<TAB>elbo<TAB>seconds` lines as training progresses.
struct TrainingLog {
    out: Option<BufWriter<File>>,
    path: Option<PathBuf>,
    error: Option<std::io::Error>,
}

impl TrainingLog {
    fn open(path: Option<PathBuf>) -> Result<Self, Failure> {
        let out = match &path {
            Some(p) => Some(BufWriter::new(File::create(p).map_err(|e| Failure::io("training log", p, e))?)),
            None => None,
        };
        Ok(TrainingLog { out, path, error: None })
    }

    fn record(&mut self, iter: usize, elbo: f64, secs: f64) {
        if let (Some(out), None) = (&mut self.out, &self.error) {
            if let Err(e) = writeln!(out, "{iter}\t{elbo}\t{secs:.3}").and_then(|_| out.flush()) {
                self.error = Some(e);
            }
        }
    }

    fn finish(self) -> Result<(), Failure> {
        match (self.error, self.path) {
            (Some(e), Some(p)) => Err(Failure::io("training log", &p, e)),
            _ => Ok(()),
        }
    }
}

fn training_report(r: &TrainReport) -> Report {
    let monotone = r.elbo.windows(2).all(|w| w[1] >= w[0] - 1e-6 * w[0].abs());
    vec![
        kv("iterations", r.elbo.len()),
        kv("elbo_initial", fmt6(r.elbo[0])),
        kv("elbo_final", fmt6(*r.elbo.last().unwrap())),
        kv("elbo_monotone", monotone),
    ]
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    features: FeatureArgs,
    /// Output model file
    #[arg(long)]
    model: Option<PathBuf>,
    /// Training log file (`iter<TAB>elbo<TAB>seconds` lines)
    #[arg(long)]
    log: Option<PathBuf>,
    /// Truncation level T (maximum number of units) [default: 200]
    #[arg(long)]
    truncation: Option<usize>,
    /// HMM states per unit [default: 3]
    #[arg(long)]
    states: Option<usize>,
    /// Gaussians per state [default: 2]
    #[arg(long)]
    gaussians: Option<usize>,
    /// VB iterations [default: 10]
    #[arg(long)]
    iters: Option<usize>,
    /// Stick-breaking concentration [default: 1]
    #[arg(long)]
    gamma: Option<f64>,
    /// Dirichlet prior pseudo-count per outcome [default: 1]
    #[arg(long)]
    dirichlet_weight: Option<f64>,
}

pub fn train(a: TrainArgs, ctx: &Context) -> Result<Report, Failure> {
    let s = &ctx.settings;
    let out = s.req_path(a.model, "model")?;
    let t = s.or(a.truncation, "truncation", 200usize)?;
    let states = s.or(a.states, "states", 3usize)?;
    let m = s.or(a.gaussians, "gaussians", 2usize)?;
    let iters = s.or(a.iters, "iters", 10usize)?;
    if iters == 0 {
        return Err(Failure::usage("--iters must be at least 1"));
    }
    let gamma = s.or(a.gamma, "gamma", 1.0)?;
    let dir_w = s.or(a.dirichlet_weight, "dirichlet_weight", 1.0)?;
    let fs = a.features.load(s)?;
    let cfg = ModelConfig::from_features(&fs, t, states, m).stage("model config")?;
    let cfg = ModelConfig {
        stick_concentration: gamma,
        dirichlet_prior_weight: dir_w,
        ..cfg
    };
    let model = init_model(cfg, ctx.seed).stage("model config")?;
    let mut log = TrainingLog::open(s.path(a.log, "log"))?;
    let report = train_vb_with(model, &fs, None, iters, |i, e, t| log.record(i, e, t)).stage("train")?;
    log.finish()?;
    save_model(&report.model, &out).stage("save model")?;
    let mut r = feature_summary(&fs);
    r.extend([kv("truncation", t), kv("states_per_unit", states), kv("gaussians_per_state", m)]);
    r.extend(training_report(&report));
    Ok(r)
}

#[derive(Args, Debug)]
pub struct DecodeArgs {
    #[command(flatten)]
    features: FeatureArgs,
    /// Model file
    #[arg(long)]
    model: Option<PathBuf>,
    /// Output unit transcript (`utt<TAB>start<TAB>end<TAB>u<id>`)
    #[arg(long)]
    tokens: Option<PathBuf>,
    /// Optional state-level transcript (`u<id>_s<state>` labels)
    #[arg(long)]
    state_tokens: Option<PathBuf>,
}

fn load_model_checked(path: &Path, fs: &FeatureSet) -> Result<PhoneLoopModel, Failure> {
    let model = load_model(path).stage("load model")?;
    if model.config.dim != fs.dim() {
        return Err(Failure::invalid(
            "load model",
            format!("model dim {} does not match feature dim {}", model.config.dim, fs.dim()),
        ));
    }
    Ok(model)
}

pub fn decode(a: DecodeArgs, ctx: &Context) -> Result<Report, Failure> {
    let s = &ctx.settings;
    let model_path = s.req_path(a.model, "model")?;
    let out = s.req_path(a.tokens, "tokens")?;
    let fs = a.features.load(s)?;
    let model = load_model_checked(&model_path, &fs)?;
    let tok = viterbi_tokenize(&model, &fs).stage("decode")?;
    write_transcript(&out, &tok.unit_transcript()).stage("write tokens")?;
    if let Some(p) = s.path(a.state_tokens, "state_tokens") {
        write_transcript(&p, &tok.state_transcript()).stage("write state tokens")?;
    }
    let (units_used, counts) = unit_inventory(&tok);
    Ok(vec![
        kv("utterances", tok.len()),
        kv("tokens", counts.values().sum::<usize>()),
        kv("units_used", units_used),
    ])
}

#[derive(Args, Debug)]
pub struct PostgramArgs {
    #[command(flatten)]
    features: FeatureArgs,
    /// Model file
    #[arg(long)]
    model: Option<PathBuf>,
    /// Output posteriorgram archive
    #[arg(long)]
    postgram: Option<PathBuf>,
    /// `unit` or `state` [default: unit]
    #[arg(long)]
    level: Option<PosteriorLevel>,
}

pub fn postgram(a: PostgramArgs, ctx: &Context) -> Result<Report, Failure> {
    let s = &ctx.settings;
    let model_path = s.req_path(a.model, "model")?;
    let out = s.req_path(a.postgram, "postgram")?;
    let level = s.or(a.level, "level", PosteriorLevel::Unit)?;
    let fs = a.features.load(s)?;
    let model = load_model_checked(&model_path, &fs)?;
    let pg = posteriorgram(&model, &fs, level).stage("posteriorgram")?;
    save_features(&out, &pg.frames)?;
    Ok(feature_summary(&pg.frames))
}

/// LDA options shared by `lda-estimate` and `second-pass`.
#[derive(Args, Debug)]
pub struct LdaArgs {
    /// Features to splice and project [default: the training features]
    #[arg(long)]
    lda_features: Option<PathBuf>,
    /// Splicing context on each side [default: 5]
    #[arg(long)]
    context: Option<usize>,
    /// LDA output dimension [default: 40]
    #[arg(long)]
    lda_dim: Option<usize>,
    /// Ridge added to the within-class scatter, relative to its mean diagonal [default: 1e-4]
    #[arg(long)]
    ridge: Option<f64>,
}

struct LdaInputs {
    model: PhoneLoopModel,
    fs: FeatureSet,
    raw: FeatureSet,
    context: usize,
    dim_out: usize,
    ridge: f64,
}

fn lda_inputs(features: &FeatureArgs, lda: LdaArgs, model: Option<PathBuf>, s: &Settings) -> Result<LdaInputs, Failure> {
    let model_path = s.req_path(model, "model")?;
    let context = s.or(lda.context, "context", DEFAULT_CONTEXT)?;
    let dim_out = s.or(lda.lda_dim, "lda_dim", DEFAULT_DIM_OUT)?;
    let ridge = s.or(lda.ridge, "ridge", DEFAULT_RIDGE)?;
    let fs = features.load(s)?;
    let raw = match s.path(lda.lda_features, "lda_features") {
        Some(p) => features.load_path(s, &p)?,
        None => fs.clone(),
    };
    let model = load_model_checked(&model_path, &fs)?;
    Ok(LdaInputs {
        model,
        fs,
        raw,
        context,
        dim_out,
        ridge,
    })
}

#[derive(Args, Debug)]
pub struct LdaEstimateArgs {
    #[command(flatten)]
    features: FeatureArgs,
    #[command(flatten)]
    lda_opts: LdaArgs,
    /// First-pass model file
    #[arg(long)]
    model: Option<PathBuf>,
    /// Output LDA transform
    #[arg(long)]
    lda: Option<PathBuf>,
}

pub fn lda_estimate(a: LdaEstimateArgs, ctx: &Context) -> Result<Report, Failure> {
    let s = &ctx.settings;
    let out = s.req_path(a.lda, "lda")?;
    let i = lda_inputs(&a.features, a.lda_opts, a.model, s)?;
    let lda = estimate_self_lda(&i.model, &i.fs, &i.raw, i.context, i.dim_out, i.ridge).stage("lda-estimate")?;
    save_lda(&lda, &out).stage("save lda")?;
    Ok(vec![
        kv("dim_in", lda.dim_in()),
        kv("dim_out", lda.dim_out()),
        kv("classes", lda.class_count),
        kv("context", lda.context),
        kv("eigenvalue_max", fmt6(lda.eigenvalues.first().copied().unwrap_or(0.0))),
        kv("eigenvalue_min", fmt6(lda.eigenvalues.last().copied().unwrap_or(0.0))),
    ])
}

#[derive(Args, Debug)]
pub struct LdaApplyArgs {
    #[command(flatten)]
    features: FeatureArgs,
    /// LDA transform file
    #[arg(long)]
    lda: Option<PathBuf>,
    /// Output archive of projected features
    #[arg(long)]
    projected: Option<PathBuf>,
}

pub fn lda_apply(a: LdaApplyArgs, ctx: &Context) -> Result<Report, Failure> {
    let s = &ctx.settings;
    let lda_path = s.req_path(a.lda, "lda")?;
    let out = s.req_path(a.projected, "projected")?;
    let lda = load_lda(&lda_path).stage("load lda")?;
    let raw = a.features.load(s)?;
    let cmvn = a.features.cmvn(s)?;
    let projected = project_features(&lda, &raw, cmvn).stage("lda-apply")?;
    save_features(&out, &projected)?;
    Ok(feature_summary(&projected))
}

#[derive(Args, Debug)]
pub struct SecondPassArgs {
    #[command(flatten)]
    features: FeatureArgs,
    #[command(flatten)]
    lda_opts: LdaArgs,
    /// First-pass model file
    #[arg(long)]
    model: Option<PathBuf>,
    /// Output second-pass model
    #[arg(long)]
    second_model: Option<PathBuf>,
    /// Optional output LDA transform
    #[arg(long)]
    lda: Option<PathBuf>,
    /// Optional output archive of projected features
    #[arg(long)]
    projected: Option<PathBuf>,
    /// Training log file for the second pass
    #[arg(long)]
    log: Option<PathBuf>,
    /// VB iterations [default: 10]
    #[arg(long)]
    iters: Option<usize>,
}

pub fn second_pass(a: SecondPassArgs, ctx: &Context) -> Result<Report, Failure> {
    let s = &ctx.settings;
    let out = s.req_path(a.second_model, "second_model")?;
    let iters = s.or(a.iters, "iters", 10usize)?;
    if iters == 0 {
        return Err(Failure::usage("--iters must be at least 1"));
    }
    let cmvn = a.features.cmvn(s)?;
    let i = lda_inputs(&a.features, a.lda_opts, a.model, s)?;
    let lda = estimate_self_lda(&i.model, &i.fs, &i.raw, i.context, i.dim_out, i.ridge).stage("lda-estimate")?;
    if let Some(p) = s.path(a.lda, "lda") {
        save_lda(&lda, &p).stage("save lda")?;
    }
    let projected = project_features(&lda, &i.raw, cmvn).stage("lda-apply")?;
    if let Some(p) = s.path(a.projected, "projected") {
        save_features(&p, &projected)?;
    }
    let mut log = TrainingLog::open(s.path(a.log, "log"))?;
    let report = train_second_model(&i.model, &i.fs, &projected, iters, ctx.seed, |it, e, t| log.record(it, e, t))
        .stage("train")?;
    log.finish()?;
    save_model(&report.model, &out).stage("save model")?;
    let mut r = vec![kv("dim_in", lda.dim_in()), kv("dim_out", lda.dim_out()), kv("classes", lda.class_count)];
    r.extend(training_report(&report));
    Ok(r)
}

fn read_tokens(s: &Settings, flag: Option<PathBuf>) -> Result<Tokenization, Failure> {
    let path = s.req_path(flag, "tokens")?;
    let tr = read_transcript(&path).stage("load tokens")?;
    Tokenization::from_unit_transcript(&tr).stage("load tokens")
}

#[derive(Args, Debug)]
pub struct EvalNmiArgs {
    /// Decoded unit transcript
    #[arg(long)]
    tokens: Option<PathBuf>,
    /// Reference phone transcript
    #[arg(long)]
    reference: Option<PathBuf>,
}

pub fn eval_nmi(a: EvalNmiArgs, ctx: &Context) -> Result<Report, Failure> {
    let s = &ctx.settings;
    let tok = read_tokens(s, a.tokens)?;
    let ref_path = s.req_path(a.reference, "reference")?;
    let reference = read_transcript(&ref_path).stage("load reference")?;
    let pairs = align_tokens(&tok, &reference).stage("align")?;
    let r = nmi(&pairs).stage("nmi")?;
    Ok(r.to_report().into_iter().map(|(k, v)| (k.to_string(), v)).collect())
}

#[derive(Args, Debug)]
pub struct EvalSamediffArgs {
    /// Posteriorgram archive
    #[arg(long)]
    postgram: Option<PathBuf>,
    /// Word segments (`utt<TAB>start<TAB>end<TAB>type`), used as given
    #[arg(long)]
    segments: Option<PathBuf>,
    /// Word transcript to extract segments from, as an alternative to --segments
    #[arg(long)]
    words: Option<PathBuf>,
    /// Minimum word duration in seconds when extracting [default: 0.5]
    #[arg(long)]
    min_duration_s: Option<f64>,
    /// Minimum word length in characters when extracting [default: 6]
    #[arg(long)]
    min_chars: Option<usize>,
    /// Posterior floor before the KL divergence [default: 1e-8]
    #[arg(long)]
    floor: Option<f64>,
    /// Optional Sakoe-Chiba band width in frames
    #[arg(long)]
    band: Option<usize>,
    /// Optional output of every scored pair
    #[arg(long)]
    pairs: Option<PathBuf>,
    /// Frame period in seconds, overriding the archive's sidecar
    #[arg(long)]
    frame_period_s: Option<f64>,
}

pub fn eval_samediff(a: EvalSamediffArgs, ctx: &Context) -> Result<Report, Failure> {
    let s = &ctx.settings;
    let pg_path = s.req_path(a.postgram, "postgram")?;
    let pg = load_features(&pg_path, s.opt(a.frame_period_s, "frame_period_s")?)?;
    let floor = s.or(a.floor, "floor", DEFAULT_FLOOR)?;
    let band = s.opt(a.band, "band")?;
    let segments = match (s.path(a.segments, "segments"), s.path(a.words, "words")) {
        (Some(p), _) => read_word_segments(&p).stage("load segments")?,
        (None, Some(p)) => {
            let words = read_transcript(&p).stage("load words")?;
            let min_dur = s.or(a.min_duration_s, "min_duration_s", 0.5)?;
            let min_chars = s.or(a.min_chars, "min_chars", 6usize)?;
            extract_word_segments(&words, min_dur, min_chars, pg.frame_period_s())
        }
        (None, None) => return Err(Failure::usage("missing --segments or --words")),
    };
    let report = same_different_eval(&segments, &pg, floor, band).stage("same-different")?;
    if let Some(p) = s.path(a.pairs, "pairs") {
        let text: String = report.pair_lines().map(|l| l + "\n").collect();
        std::fs::write(&p, text).map_err(|e| Failure::io("write pairs", &p, e))?;
    }
    let mut r: Report = vec![kv("segments", segments.len())];
    r.extend(report.to_report().into_iter().map(|(k, v)| (k.to_string(), v)));
    Ok(r)
}

/// Options shared by the document subcommands.
#[derive(Args, Debug)]
pub struct DocArgs {
    /// Decoded unit transcript
    #[arg(long)]
    tokens: Option<PathBuf>,
    /// Document list (`doc<TAB>topic<TAB>utt1,utt2,...`)
    #[arg(long)]
    documents: Option<PathBuf>,
    /// Smallest n-gram order [default: 1]
    #[arg(long)]
    ngram_min: Option<usize>,
    /// Largest n-gram order [default: 3]
    #[arg(long)]
    ngram_max: Option<usize>,
}

fn doc_vectors(a: DocArgs, s: &Settings) -> Result<(Vec<DocVector>, usize), Failure> {
    let tok = read_tokens(s, a.tokens)?;
    let doc_path = s.req_path(a.documents, "documents")?;
    let docs = read_documents(&doc_path).stage("load documents")?;
    let lo = s.or(a.ngram_min, "ngram_min", 1usize)?;
    let hi = s.or(a.ngram_max, "ngram_max", 3usize)?;
    let (vectors, vocab) = ngram_tfidf(&docs, &tok, lo, hi).stage("tfidf")?;
    Ok((vectors, vocab.len()))
}

fn topic_labels(vectors: &[DocVector]) -> Option<Vec<String>> {
    vectors.iter().map(|v| v.label.clone()).collect()
}

#[derive(Args, Debug)]
pub struct DocClassifyArgs {
    #[command(flatten)]
    docs: DocArgs,
    /// Cross-validation folds [default: 10]
    #[arg(long)]
    folds: Option<usize>,
    /// SGD epochs [default: 20]
    #[arg(long)]
    epochs: Option<usize>,
    /// L1 regularization strength [default: 1e-4]
    #[arg(long)]
    lambda: Option<f64>,
    /// Initial learning rate [default: 0.5]
    #[arg(long)]
    eta0: Option<f64>,
}

pub fn doc_classify(a: DocClassifyArgs, ctx: &Context) -> Result<Report, Failure> {
    let s = &ctx.settings;
    let d = SvmConfig::default();
    let cfg = SvmConfig {
        epochs: s.or(a.epochs, "epochs", d.epochs)?,
        lambda_l1: s.or(a.lambda, "lambda", d.lambda_l1)?,
        eta0: s.or(a.eta0, "eta0", d.eta0)?,
        seed: ctx.seed,
    };
    let folds = s.or(a.folds, "folds", 10usize)?;
    let (vectors, vocab) = doc_vectors(a.docs, s)?;
    let labels = topic_labels(&vectors)
        .ok_or_else(|| Failure::invalid("doc-classify", "every document needs a topic label"))?;
    let cv = cross_validate(&vectors, &labels, folds, &cfg).stage("doc-classify")?;
    let classes: BTreeSet<&String> = labels.iter().collect();
    Ok(vec![
        kv("documents", vectors.len()),
        kv("classes", classes.len()),
        kv("vocabulary", vocab),
        kv("folds", folds),
        kv("accuracy_mean", fmt6(cv.mean)),
        kv("accuracy_std", fmt6(cv.std)),
    ])
}

#[derive(Args, Debug)]
pub struct DocClusterArgs {
    #[command(flatten)]
    docs: DocArgs,
    /// Number of clusters [default: number of topics]
    #[arg(long)]
    clusters: Option<usize>,
    /// Random initializations [default: 10]
    #[arg(long)]
    n_init: Option<usize>,
    /// Optional output of the best run's `doc<TAB>cluster` assignments
    #[arg(long)]
    assignments: Option<PathBuf>,
}

pub fn doc_cluster(a: DocClusterArgs, ctx: &Context) -> Result<Report, Failure> {
    let s = &ctx.settings;
    let n_init = s.or(a.n_init, "n_init", 10usize)?;
    let k_flag = s.opt(a.clusters, "clusters")?;
    let assignments_out = s.path(a.assignments, "assignments");
    let (vectors, vocab) = doc_vectors(a.docs, s)?;
    let labels = topic_labels(&vectors);
    let k = match (k_flag, &labels) {
        (Some(k), _) => k,
        (None, Some(l)) => l.iter().collect::<BTreeSet<_>>().len(),
        (None, None) => return Err(Failure::usage("missing --clusters (documents carry no topics)")),
    };
    let result = repeated_bisection_cluster(&vectors, k, n_init, ctx.seed).stage("doc-cluster")?;
    if let Some(p) = assignments_out {
        let text: String = vectors
            .iter()
            .zip(&result.best.assignments)
            .map(|(v, c)| format!("{}\t{c}\n", v.doc_id))
            .collect();
        std::fs::write(&p, text).map_err(|e| Failure::io("write assignments", &p, e))?;
    }
    let mut r = vec![
        kv("documents", vectors.len()),
        kv("vocabulary", vocab),
        kv("clusters", k),
        kv("n_init", n_init),
        kv("i2_best", fmt6(result.best.i2)),
    ];
    if let Some(labels) = labels {
        let mut pur = Vec::new();
        let mut b3 = Vec::new();
        for run in &result.runs {
            pur.push(purity(&run.assignments, &labels).stage("doc-cluster")?);
            b3.push(bcubed_f1(&run.assignments, &labels).stage("doc-cluster")?);
        }
        let (pm, ps) = mean_std(&pur);
        let (bm, bs) = mean_std(&b3);
        r.extend([
            kv("purity_mean", fmt6(pm)),
            kv("purity_std", fmt6(ps)),
            kv("b3f1_mean", fmt6(bm)),
            kv("b3f1_std", fmt6(bs)),
        ]);
    }
    Ok(r)
}

#[derive(Args, Debug)]
pub struct ModelInfoArgs {
    /// Model file
    #[arg(long)]
    model: Option<PathBuf>,
}

pub fn model_info(a: ModelInfoArgs, ctx: &Context) -> Result<Report, Failure> {
    let path = ctx.settings.req_path(a.model, "model")?;
    let model = load_model(&path).stage("load model")?;
    let c = &model.config;
    let weights: Vec<f64> = model.expected_log_weights().into_iter().map(f64::exp).collect();
    let active = weights.iter().filter(|&&w| w >= 0.01).count();
    let max_w = weights.iter().copied().fold(0.0, f64::max);
    Ok(vec![
        kv("format_version", FORMAT_VERSION),
        kv("truncation", c.truncation),
        kv("states_per_unit", c.states_per_unit),
        kv("gaussians_per_state", c.gaussians_per_state),
        kv("dim", c.dim),
        kv("stick_concentration", c.stick_concentration),
        kv("dirichlet_prior_weight", c.dirichlet_prior_weight),
        kv("active_units", active),
        kv("max_unit_weight", fmt6(max_w)),
    ])
}
