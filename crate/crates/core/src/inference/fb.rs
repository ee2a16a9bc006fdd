use ndarray::Array2;

use crate::error::{Error, Result};
use crate::math::{log_add, log_sum_exp};
use crate::model::UnifiedHmmView;

/// Expected transition counts of one or more utterances.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionStats {
    /// Expected number of times each unit is entered (initial entry included).
    pub entry: Vec<f64>,
    pub self_loop: Vec<f64>,
    /// Expected advances; for a final state these are unit exits, including
    /// the exit that ends the utterance.
    pub advance: Vec<f64>,
}

impl TransitionStats {
    pub fn zeros(n_units: usize, n_states: usize) -> Self {
        TransitionStats {
            entry: vec![0.0; n_units],
            self_loop: vec![0.0; n_states],
            advance: vec![0.0; n_states],
        }
    }
}

#[derive(Debug, Clone)]
pub struct FbResult {
    /// `n x (T*S)` state posteriors.
    pub state_post: Array2<f64>,
    /// `n x (T*S*M)` component posteriors.
    pub comp_post: Array2<f64>,
    pub transitions: TransitionStats,
    pub log_evidence: f64,
}

/// Per-state emission scores: log-sum-exp over each state's components.
pub(crate) fn state_emissions(view: &UnifiedHmmView, frame_logliks: &Array2<f64>) -> Array2<f64> {
    let m = view.components_per_state;
    let (n, _) = frame_logliks.dim();
    let mut e = Array2::zeros((n, view.n_states()));
    for t in 0..n {
        let row = frame_logliks.row(t);
        let row = row.as_slice().expect("standard layout");
        for i in 0..view.n_states() {
            e[[t, i]] = log_sum_exp(&row[i * m..(i + 1) * m]);
        }
    }
    e
}

pub(crate) fn check_inputs(view: &UnifiedHmmView, frame_logliks: &Array2<f64>) -> Result<()> {
    let (n, c) = frame_logliks.dim();
    if n == 0 {
        return Err(Error::Invalid("cannot run forward-backward on zero frames".into()));
    }
    if c != view.n_components() {
        return Err(Error::Shape(format!(
            "frame log-likelihoods have {c} columns, model has {} components",
            view.n_components()
        )));
    }
    if frame_logliks.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("frame log-likelihood".into()));
    }
    Ok(())
}

/// Log-space forward-backward over the unified phone-loop HMM.
pub fn forward_backward(view: &UnifiedHmmView, frame_logliks: &Array2<f64>) -> Result<FbResult> {
    check_inputs(view, frame_logliks)?;
    let n = frame_logliks.nrows();
    let (n_units, s_per) = (view.n_units, view.states_per_unit);
    let n_states = view.n_states();
    let last = s_per - 1;
    let e = state_emissions(view, frame_logliks);
    let neg = f64::NEG_INFINITY;

    // exit[t]: log mass of leaving some unit after frame t
    let mut alpha = Array2::from_elem((n, n_states), neg);
    let mut exit = vec![neg; n];
    for u in 0..n_units {
        alpha[[0, u * s_per]] = view.log_entry[u] + e[[0, u * s_per]];
    }
    for t in 0..n {
        if t > 0 {
            for u in 0..n_units {
                for s in 0..s_per {
                    let i = u * s_per + s;
                    let stay = alpha[[t - 1, i]] + view.log_self[i];
                    let arrive = if s == 0 {
                        exit[t - 1] + view.log_entry[u]
                    } else {
                        alpha[[t - 1, i - 1]] + view.log_advance[i - 1]
                    };
                    alpha[[t, i]] = log_add(stay, arrive) + e[[t, i]];
                }
            }
        }
        let mut x = neg;
        for u in 0..n_units {
            let f = u * s_per + last;
            x = log_add(x, alpha[[t, f]] + view.log_advance[f]);
        }
        exit[t] = x;
    }
    let log_z = exit[n - 1];
    if !log_z.is_finite() {
        return Err(Error::NonFinite("log-evidence".into()));
    }

    // reenter[t]: log mass of entering a unit at frame t and completing the rest
    let mut beta = Array2::from_elem((n, n_states), neg);
    let mut reenter = vec![neg; n];
    for u in 0..n_units {
        let f = u * s_per + last;
        beta[[n - 1, f]] = view.log_advance[f];
    }
    for t in (0..n - 1).rev() {
        let mut r = neg;
        for u in 0..n_units {
            let i = u * s_per;
            r = log_add(r, view.log_entry[u] + e[[t + 1, i]] + beta[[t + 1, i]]);
        }
        reenter[t + 1] = r;
        for u in 0..n_units {
            for s in 0..s_per {
                let i = u * s_per + s;
                let stay = view.log_self[i] + e[[t + 1, i]] + beta[[t + 1, i]];
                let next = if s == last {
                    view.log_advance[i] + r
                } else {
                    view.log_advance[i] + e[[t + 1, i + 1]] + beta[[t + 1, i + 1]]
                };
                beta[[t, i]] = log_add(stay, next);
            }
        }
    }

    let mut state_post = Array2::zeros((n, n_states));
    for t in 0..n {
        for i in 0..n_states {
            state_post[[t, i]] = (alpha[[t, i]] + beta[[t, i]] - log_z).exp();
        }
    }

    let m = view.components_per_state;
    let mut comp_post = Array2::zeros((n, view.n_components()));
    for t in 0..n {
        for i in 0..n_states {
            let g = state_post[[t, i]];
            for k in 0..m {
                let c = i * m + k;
                comp_post[[t, c]] = g * (frame_logliks[[t, c]] - e[[t, i]]).exp();
            }
        }
    }

    let mut tr = TransitionStats::zeros(n_units, n_states);
    for u in 0..n_units {
        tr.entry[u] = state_post[[0, u * s_per]];
        let f = u * s_per + last;
        tr.advance[f] = (alpha[[n - 1, f]] + view.log_advance[f] - log_z).exp();
    }
    for t in 0..n - 1 {
        for u in 0..n_units {
            let first = u * s_per;
            tr.entry[u] += (exit[t] + view.log_entry[u] + e[[t + 1, first]] + beta[[t + 1, first]]
                - log_z)
                .exp();
            for s in 0..s_per {
                let i = first + s;
                let a = alpha[[t, i]];
                tr.self_loop[i] +=
                    (a + view.log_self[i] + e[[t + 1, i]] + beta[[t + 1, i]] - log_z).exp();
                let next = if s == last {
                    reenter[t + 1]
                } else {
                    e[[t + 1, i + 1]] + beta[[t + 1, i + 1]]
                };
                tr.advance[i] += (a + view.log_advance[i] + next - log_z).exp();
            }
        }
    }

    Ok(FbResult {
        state_post,
        comp_post,
        transitions: tr,
        log_evidence: log_z,
    })
}
