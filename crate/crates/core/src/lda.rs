//! Self-trained LDA: first-pass Viterbi state labels serve as classes for a
//! Fisher discriminant over spliced features, and the first-pass posteriors
//! seed the statistics of a second-pass model trained in the projected space.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{apply_cmvn, splice_features, FeatureSet};
use crate::decode::{viterbi_tokenize, Tokenization};
use crate::error::{Error, Result};
use crate::inference::{accumulate_with, forward_backward, id_order, train_vb_with, SufficientStats, TrainReport};
use crate::model::{init_model, ModelConfig, PhoneLoopModel};

pub const DEFAULT_RIDGE: f64 = 1e-4;
pub const DEFAULT_DIM_OUT: usize = 40;
pub const DEFAULT_CONTEXT: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaTransform {
    pub input_mean: Vec<f64>,
    /// `dim_out x dim_in`, rows ordered by descending eigenvalue.
    pub projection: Array2<f64>,
    pub class_count: usize,
    pub eigenvalues: Vec<f64>,
    /// Splicing context the transform was estimated on.
    pub context: usize,
}

impl LdaTransform {
    pub fn dim_in(&self) -> usize {
        self.projection.ncols()
    }

    pub fn dim_out(&self) -> usize {
        self.projection.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_mean.len() != self.dim_in() || self.eigenvalues.len() != self.dim_out() {
            return Err(Error::Shape(format!(
                "LDA transform: mean {} / eigenvalues {} do not match a {}x{} projection",
                self.input_mean.len(),
                self.eigenvalues.len(),
                self.dim_out(),
                self.dim_in()
            )));
        }
        let finite = self.projection.iter().chain(&self.input_mean).chain(&self.eigenvalues);
        if finite.clone().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("LDA transform".into()));
        }
        Ok(())
    }
}

/// Flat state class `(unit - 1) * S + (state - 1)` per frame, per utterance in
/// feature-set order.
pub fn state_labels(tok: &Tokenization, fs: &FeatureSet, states_per_unit: usize) -> Result<Vec<Vec<usize>>> {
    fs.utterances()
        .iter()
        .map(|utt| {
            let u = tok
                .get(&utt.id)
                .ok_or_else(|| Error::Invalid(format!("no tokenization for utterance {:?}", utt.id)))?;
            if u.states.len() != utt.n_frames() {
                return Err(Error::Shape(format!(
                    "utterance {:?}: {} state labels for {} frames",
                    utt.id,
                    u.states.len(),
                    utt.n_frames()
                )));
            }
            Ok(u.states
                .iter()
                .map(|s| (s.unit - 1) * states_per_unit + (s.state - 1))
                .collect())
        })
        .collect()
}

/// Lower Cholesky factor; fails with the index and value of the first
/// non-positive pivot.
pub fn cholesky(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let mut l = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) {
            return Err(Error::NotPositiveDefinite { pivot: j, value: d });
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

struct Scatter {
    n: f64,
    within: Array2<f64>,
    between: Array2<f64>,
    mean: Array1<f64>,
}

fn scatter(fs: &FeatureSet, labels: &[Vec<usize>], n_classes: usize) -> Scatter {
    let dim = fs.dim();
    let mut counts = vec![0.0; n_classes];
    let mut sums = Array2::<f64>::zeros((n_classes, dim));
    for (utt, lab) in fs.utterances().iter().zip(labels) {
        for (x, &c) in utt.features.rows().into_iter().zip(lab) {
            counts[c] += 1.0;
            sums.row_mut(c).scaled_add(1.0, &x);
        }
    }
    let n: f64 = counts.iter().sum();
    let mean = sums.sum_axis(Axis(0)) / n;
    let mut class_means = sums;
    for (mut row, &c) in class_means.rows_mut().into_iter().zip(&counts) {
        if c > 0.0 {
            row /= c;
        }
    }
    // per-utterance partial scatters, merged in a fixed order
    let partial: Vec<Array2<f64>> = fs
        .utterances()
        .par_iter()
        .zip(labels.par_iter())
        .map(|(utt, lab)| {
            let mut centred = utt.features.clone();
            for (mut row, &c) in centred.rows_mut().into_iter().zip(lab) {
                row -= &class_means.row(c);
            }
            centred.t().dot(&centred)
        })
        .collect();
    let mut within = Array2::zeros((dim, dim));
    for p in &partial {
        within += p;
    }
    within /= n;
    let mut between = Array2::zeros((dim, dim));
    for (c, &nc) in counts.iter().enumerate() {
        if nc > 0.0 {
            let d = &class_means.row(c) - &mean;
            let outer = d.view().insert_axis(Axis(1)).dot(&d.view().insert_axis(Axis(0)));
            between.scaled_add(nc / n, &outer);
        }
    }
    Scatter {
        n,
        within,
        between,
        mean,
    }
}

fn to_dmatrix(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

/// Fisher LDA from frame labels. `labels[i][t]` is the class of frame `t` of
/// utterance `i`. The within-class scatter is regularized by
/// `ridge * trace(S_w) / dim_in` on the diagonal; the projection rows `p`
/// satisfy `p S_w p^T = I` for that regularized scatter.
pub fn estimate_lda(spliced: &FeatureSet, labels: &[Vec<usize>], dim_out: usize, ridge: f64) -> Result<LdaTransform> {
    if labels.len() != spliced.len() {
        return Err(Error::Shape(format!(
            "{} label sequences for {} utterances",
            labels.len(),
            spliced.len()
        )));
    }
    for (utt, lab) in spliced.utterances().iter().zip(labels) {
        if lab.len() != utt.n_frames() {
            return Err(Error::Shape(format!(
                "utterance {:?}: {} labels for {} frames",
                utt.id,
                lab.len(),
                utt.n_frames()
            )));
        }
    }
    if !(ridge >= 0.0) || !ridge.is_finite() {
        return Err(Error::Invalid(format!("ridge must be non-negative, got {ridge}")));
    }
    let n_classes = labels.iter().flatten().max().map_or(0, |m| m + 1);
    let mut seen = vec![false; n_classes];
    labels.iter().flatten().for_each(|&c| seen[c] = true);
    let class_count = seen.iter().filter(|&&s| s).count();
    if class_count < 2 {
        return Err(Error::Invalid(format!(
            "LDA needs at least 2 classes, found {class_count}"
        )));
    }
    let dim_in = spliced.dim();
    let max_out = dim_in.min(class_count - 1);
    if dim_out == 0 || dim_out > max_out {
        return Err(Error::Invalid(format!(
            "dim_out {dim_out} must be in 1..={max_out} (dim_in {dim_in}, {class_count} classes)"
        )));
    }

    let sc = scatter(spliced, labels, n_classes);
    log::debug!("LDA scatter over {} frames, {class_count} classes", sc.n);
    let mut sw = to_dmatrix(&sc.within);
    let shift = ridge * sw.trace() / dim_in as f64;
    for i in 0..dim_in {
        sw[(i, i)] += shift;
    }
    let sb = to_dmatrix(&sc.between);
    let l = cholesky(&sw)?;
    let l_inv = l
        .clone()
        .solve_lower_triangular(&DMatrix::identity(dim_in, dim_in))
        .ok_or_else(|| Error::Invalid("singular Cholesky factor".into()))?;
    let mut whitened = &l_inv * sb * l_inv.transpose();
    // enforce exact symmetry before the eigensolver
    whitened = (&whitened + whitened.transpose()) * 0.5;
    let eig = SymmetricEigen::new(whitened);
    let mut order: Vec<usize> = (0..dim_in).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let mut projection = Array2::zeros((dim_out, dim_in));
    let mut eigenvalues = Vec::with_capacity(dim_out);
    for (r, &k) in order.iter().take(dim_out).enumerate() {
        // p = L^-T u, so that p^T S_w p = u^T u = 1
        let u = eig.eigenvectors.column(k);
        let p = l_inv.transpose() * u;
        let pivot = (0..dim_in)
            .max_by(|&a, &b| p[a].abs().total_cmp(&p[b].abs()).then(b.cmp(&a)))
            .unwrap();
        let sign = if p[pivot] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..dim_in {
            projection[[r, j]] = sign * p[j];
        }
        eigenvalues.push(eig.eigenvalues[k].max(0.0));
    }
    let t = LdaTransform {
        input_mean: sc.mean.to_vec(),
        projection,
        class_count,
        eigenvalues,
        context: 0,
    };
    t.validate()?;
    Ok(t)
}

pub fn apply_lda(t: &LdaTransform, spliced: &FeatureSet) -> Result<FeatureSet> {
    if !spliced.is_empty() && spliced.dim() != t.dim_in() {
        return Err(Error::DimMismatch {
            expected: t.dim_in(),
            found: spliced.dim(),
        });
    }
    let mean = Array1::from(t.input_mean.clone());
    let pt = t.projection.t();
    spliced.map_features(|u| (&u.features - &mean).dot(&pt))
}

/// First-pass latent posteriors (computed on `fs_first`) paired with the
/// frames of `fs_second`. Discrete counts are those of a normal E-step;
/// Gaussian moments live in the second feature space.
pub fn transfer_stats(first: &PhoneLoopModel, fs_first: &FeatureSet, fs_second: &FeatureSet) -> Result<SufficientStats> {
    let cfg = &first.config;
    if fs_first.is_empty() {
        return Err(Error::Invalid("empty feature set".into()));
    }
    if fs_first.dim() != cfg.dim {
        return Err(Error::DimMismatch {
            expected: cfg.dim,
            found: fs_first.dim(),
        });
    }
    if fs_first.len() != fs_second.len() {
        return Err(Error::Shape(format!(
            "{} first-pass utterances but {} second-pass",
            fs_first.len(),
            fs_second.len()
        )));
    }
    let view = first.unified_view();
    let terms = first.emission_terms();
    let per_utt: Vec<Result<SufficientStats>> = id_order(fs_first)
        .par_iter()
        .map(|&i| {
            let a = &fs_first.utterances()[i];
            let b = fs_second
                .get(&a.id)
                .ok_or_else(|| Error::Invalid(format!("utterance {:?} missing from second feature set", a.id)))?;
            if a.n_frames() != b.n_frames() {
                return Err(Error::Shape(format!(
                    "utterance {:?}: {} frames vs {} frames",
                    a.id,
                    a.n_frames(),
                    b.n_frames()
                )));
            }
            let fb = forward_backward(&view, &terms.frame_loglik(&a.features)?)?;
            accumulate_with(
                cfg.truncation,
                cfg.states_per_unit,
                &fb.comp_post,
                &fb.transitions,
                fb.log_evidence,
                &b.features,
            )
        })
        .collect();
    let mut total = SufficientStats::zeros(cfg.truncation, cfg.states_per_unit, cfg.gaussians_per_state, fs_second.dim());
    for st in per_utt {
        total.merge_into(&st?)?;
    }
    Ok(total)
}

#[derive(Debug, Clone)]
pub struct SecondPassConfig {
    pub context: usize,
    pub dim_out: usize,
    pub ridge: f64,
    pub n_iters: usize,
    pub seed: u64,
    /// Re-apply per-side CMVN to the projected features.
    pub cmvn: bool,
}

impl Default for SecondPassConfig {
    fn default() -> Self {
        SecondPassConfig {
            context: DEFAULT_CONTEXT,
            dim_out: DEFAULT_DIM_OUT,
            ridge: DEFAULT_RIDGE,
            n_iters: 10,
            seed: 0,
            cmvn: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SecondPass {
    pub lda: LdaTransform,
    pub features: FeatureSet,
    pub report: TrainReport,
}

/// LDA self-training: tokenize `fs_first` with the first-pass model and use
/// its state labels as classes for an LDA on spliced `raw` features.
/// `dim_out` is clamped to what the observed classes support.
pub fn estimate_self_lda(
    first: &PhoneLoopModel,
    fs_first: &FeatureSet,
    raw: &FeatureSet,
    context: usize,
    dim_out: usize,
    ridge: f64,
) -> Result<LdaTransform> {
    let tok = viterbi_tokenize(first, fs_first)?;
    let labels = state_labels(&tok, raw, first.config.states_per_unit)?;
    let spliced = splice_features(raw, context)?;
    let mut classes: Vec<usize> = labels.iter().flatten().copied().collect();
    classes.sort_unstable();
    classes.dedup();
    let max_out = spliced.dim().min(classes.len().saturating_sub(1));
    let clamped = dim_out.min(max_out);
    if clamped < dim_out {
        log::warn!(
            "LDA output dimension reduced from {dim_out} to {clamped} ({} classes observed)",
            classes.len()
        );
    }
    let mut lda = estimate_lda(&spliced, &labels, clamped, ridge)?;
    lda.context = context;
    Ok(lda)
}

/// Splices `raw` with the transform's context, projects it, and optionally
/// re-applies per-side CMVN.
pub fn project_features(lda: &LdaTransform, raw: &FeatureSet, cmvn: bool) -> Result<FeatureSet> {
    let projected = apply_lda(lda, &splice_features(raw, lda.context)?)?;
    if !cmvn {
        return Ok(projected);
    }
    Ok(apply_cmvn(&projected)?.0)
}

/// Trains the second-pass model on projected features, seeded by the
/// first-pass posteriors. Priors are re-derived from the projected data;
/// the stick concentration and Dirichlet weight carry over.
pub fn train_second_model<F>(
    first: &PhoneLoopModel,
    fs_first: &FeatureSet,
    projected: &FeatureSet,
    n_iters: usize,
    seed: u64,
    observer: F,
) -> Result<TrainReport>
where
    F: FnMut(usize, f64, f64),
{
    let stats = transfer_stats(first, fs_first, projected)?;
    let c = &first.config;
    let model_cfg = ModelConfig::from_features(projected, c.truncation, c.states_per_unit, c.gaussians_per_state)?;
    let model_cfg = ModelConfig {
        stick_concentration: c.stick_concentration,
        dirichlet_prior_weight: c.dirichlet_prior_weight,
        ..model_cfg
    };
    let model = init_model(model_cfg, seed)?;
    train_vb_with(model, projected, Some(&stats), n_iters, observer)
}

/// The full second pass: [`estimate_self_lda`], [`project_features`] and
/// [`train_second_model`].
pub fn second_pass<F>(
    first: &PhoneLoopModel,
    fs_first: &FeatureSet,
    raw: &FeatureSet,
    cfg: &SecondPassConfig,
    observer: F,
) -> Result<SecondPass>
where
    F: FnMut(usize, f64, f64),
{
    let lda = estimate_self_lda(first, fs_first, raw, cfg.context, cfg.dim_out, cfg.ridge)?;
    let features = project_features(&lda, raw, cfg.cmvn)?;
    let report = train_second_model(first, fs_first, &features, cfg.n_iters, cfg.seed, observer)?;
    Ok(SecondPass { lda, features, report })
}
