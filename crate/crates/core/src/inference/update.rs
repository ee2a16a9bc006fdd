use super::stats::SufficientStats;
use crate::error::{Error, Result};
use crate::model::{PhoneLoopModel, ADVANCE, SELF_LOOP};

/// Conjugate posterior updates from accumulated statistics. Every posterior
/// is recomputed from its prior, so applying zero statistics returns the
/// priors.
pub fn m_step(model: &PhoneLoopModel, stats: &SufficientStats) -> Result<PhoneLoopModel> {
    let cfg = &model.config;
    if stats.n_units != cfg.truncation
        || stats.states_per_unit != cfg.states_per_unit
        || stats.components_per_state != cfg.gaussians_per_state
        || stats.dim() != cfg.dim
    {
        return Err(Error::Shape(format!(
            "stats shape ({}, {}, {}, {}) does not match model ({}, {}, {}, {})",
            stats.n_units,
            stats.states_per_unit,
            stats.components_per_state,
            stats.dim(),
            cfg.truncation,
            cfg.states_per_unit,
            cfg.gaussians_per_state,
            cfg.dim
        )));
    }
    let tr = &stats.transitions;
    let counts = tr
        .entry
        .iter()
        .chain(&tr.self_loop)
        .chain(&tr.advance)
        .chain(&stats.occupancy);
    if let Some(v) = counts.clone().find(|v| !(**v >= 0.0)) {
        return Err(Error::Invalid(format!("negative expected count {v}")));
    }

    let mut out = model.clone();
    let t_units = cfg.truncation;
    let mut tail = 0.0;
    let mut tail_after = vec![0.0; t_units];
    for t in (0..t_units).rev() {
        tail_after[t] = tail;
        tail += tr.entry[t];
    }
    for t in 0..t_units - 1 {
        out.sticks[t] = [1.0 + tr.entry[t], cfg.stick_concentration + tail_after[t]];
    }

    let w = cfg.dirichlet_prior_weight;
    for (i, trans) in out.transitions.iter_mut().enumerate() {
        trans[SELF_LOOP] = w + tr.self_loop[i];
        trans[ADVANCE] = w + tr.advance[i];
    }
    let m = cfg.gaussians_per_state;
    for (i, weights) in out.weights.iter_mut().enumerate() {
        for (k, wk) in weights.iter_mut().enumerate() {
            *wk = w + stats.occupancy[i * m + k];
        }
    }

    let p = &cfg.normal_gamma_prior;
    for (c, g) in out.gaussians.iter_mut().enumerate() {
        let n = stats.occupancy[c];
        g.kappa = p.kappa + n;
        g.shape = p.shape + 0.5 * n;
        for d in 0..cfg.dim {
            if n > 0.0 {
                let s1 = stats.s1[[c, d]];
                let mean_x = s1 / n;
                let scatter = (stats.s2[[c, d]] - s1 * mean_x).max(0.0);
                let shift = mean_x - p.mean[d];
                g.mean[d] = (p.kappa * p.mean[d] + s1) / g.kappa;
                g.rate[d] = p.rate[d] + 0.5 * scatter + p.kappa * n * shift * shift / (2.0 * g.kappa);
            } else {
                g.mean[d] = p.mean[d];
                g.rate[d] = p.rate[d];
            }
        }
    }
    Ok(out)
}

/// Evidence lower bound: expected-parameter log-evidence minus the KL
/// divergence of every parameter posterior from its prior.
pub fn elbo(model: &PhoneLoopModel, log_evidence: f64) -> f64 {
    log_evidence - model.kl_terms().total()
}
