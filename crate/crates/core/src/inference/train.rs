use std::time::Instant;

use rayon::prelude::*;

use super::fb::forward_backward;
use super::stats::{accumulate_stats, SufficientStats};
use super::update::{elbo, m_step};
use crate::corpus::FeatureSet;
use crate::error::{Error, Result};
use crate::model::PhoneLoopModel;

#[derive(Debug, Clone)]
pub struct TrainReport {
    /// ELBO of each iteration, computed at its E-step.
    pub elbo: Vec<f64>,
    pub seconds: Vec<f64>,
    pub model: PhoneLoopModel,
}

/// Utterance indices in id order, the fixed order of every reduction.
pub(crate) fn id_order(fs: &FeatureSet) -> Vec<usize> {
    let mut order: Vec<usize> = (0..fs.len()).collect();
    order.sort_by(|&a, &b| fs.utterances()[a].id.cmp(&fs.utterances()[b].id));
    order
}

/// Runs forward-backward on every utterance in parallel and merges the
/// per-utterance statistics in utterance-id order.
pub fn e_step(model: &PhoneLoopModel, fs: &FeatureSet) -> Result<SufficientStats> {
    let cfg = &model.config;
    if fs.is_empty() {
        return Err(Error::Invalid("empty feature set".into()));
    }
    if fs.dim() != cfg.dim {
        return Err(Error::DimMismatch {
            expected: cfg.dim,
            found: fs.dim(),
        });
    }
    let view = model.unified_view();
    let terms = model.emission_terms();
    let order = id_order(fs);
    let per_utt: Vec<Result<SufficientStats>> = order
        .par_iter()
        .map(|&i| {
            let utt = &fs.utterances()[i];
            let ll = terms.frame_loglik(&utt.features)?;
            let fb = forward_backward(&view, &ll).map_err(|e| match e {
                Error::NonFinite(what) => Error::NonFinite(format!("{what} in utterance {:?}", utt.id)),
                other => other,
            })?;
            accumulate_stats(&fb, cfg.truncation, cfg.states_per_unit, &utt.features)
        })
        .collect();
    let mut total = SufficientStats::zeros(cfg.truncation, cfg.states_per_unit, cfg.gaussians_per_state, cfg.dim);
    for stats in per_utt {
        total.merge_into(&stats?)?;
    }
    Ok(total)
}

/// VB training. When `initial_stats` is given, the model posteriors are
/// first updated from those statistics before the regular iterations start.
/// `observer` receives `(iteration, elbo, seconds)` after each iteration.
pub fn train_vb_with<F>(
    model: PhoneLoopModel,
    fs: &FeatureSet,
    initial_stats: Option<&SufficientStats>,
    n_iters: usize,
    mut observer: F,
) -> Result<TrainReport>
where
    F: FnMut(usize, f64, f64),
{
    if n_iters == 0 {
        return Err(Error::Invalid("n_iters must be at least 1".into()));
    }
    let mut model = match initial_stats {
        Some(st) => m_step(&model, st)?,
        None => model,
    };
    let mut report = TrainReport {
        elbo: Vec::with_capacity(n_iters),
        seconds: Vec::with_capacity(n_iters),
        model: model.clone(),
    };
    for iter in 0..n_iters {
        let start = Instant::now();
        let stats = e_step(&model, fs)?;
        let bound = elbo(&model, stats.log_evidence);
        if !bound.is_finite() {
            return Err(Error::NonFinite(format!("ELBO at iteration {}", iter + 1)));
        }
        model = m_step(&model, &stats)?;
        let secs = start.elapsed().as_secs_f64();
        log::info!("iteration {}: elbo {bound:.6} ({secs:.2}s)", iter + 1);
        observer(iter + 1, bound, secs);
        report.elbo.push(bound);
        report.seconds.push(secs);
    }
    report.model = model;
    Ok(report)
}

pub fn train_vb(model: PhoneLoopModel, fs: &FeatureSet, n_iters: usize) -> Result<TrainReport> {
    train_vb_with(model, fs, None, n_iters, |_, _, _| {})
}
