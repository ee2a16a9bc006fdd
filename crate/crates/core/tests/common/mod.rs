//! Independent oracles shared by the integration tests and the acceptance
//! harness: exhaustive path enumeration over tiny unified HMMs and the exact
//! marginal likelihood of small phone loops.

#![allow(dead_code)]

use aud_core::corpus::{FeatureSet, Utterance};
use aud_core::math::log_sum_exp;
use aud_core::model::UnifiedHmmView;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use statrs::function::gamma::ln_gamma;

pub struct TinyCase {
    pub view: UnifiedHmmView,
    pub ll: Array2<f64>,
}

fn random_simplex_logs<R: Rng>(rng: &mut R, k: usize, mass: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|r| (mass * r / total).ln()).collect()
}

/// Random view with `T*S <= 6`, up to two components per state and at most six
/// frames, never fewer than the states in a unit. Entry and transition terms are sub-normalized like expected-log
/// parameters.
pub fn random_case<R: Rng>(rng: &mut R) -> TinyCase {
    let t = rng.random_range(1..=6usize);
    let s = rng.random_range(1..=6 / t);
    let m = rng.random_range(1..=2usize);
    let n = rng.random_range(s..=6usize);
    let mass = rng.random_range(0.6..1.0);
    let log_entry = random_simplex_logs(rng, t, mass);
    let mut log_self = Vec::new();
    let mut log_adv = Vec::new();
    for _ in 0..t * s {
        let mass = rng.random_range(0.6..1.0);
        let l = random_simplex_logs(rng, 2, mass);
        log_self.push(l[0]);
        log_adv.push(l[1]);
    }
    let view = UnifiedHmmView::new(t, s, m, log_entry, log_self, log_adv).unwrap();
    let ll = Array2::from_shape_fn((n, t * s * m), |_| rng.random_range(-4.0..1.0));
    TinyCase { view, ll }
}

/// Dyadic-valued case with one component per state: path scores add exactly,
/// so many paths tie and the tie-break rule is exercised.
pub fn quantized_case<R: Rng>(rng: &mut R) -> TinyCase {
    let t = rng.random_range(1..=6usize);
    let s = rng.random_range(1..=6 / t);
    let n = rng.random_range(s..=6usize);
    let pick = |rng: &mut R| -0.5 * rng.random_range(1..=2) as f64;
    let log_entry = (0..t).map(|_| pick(rng)).collect();
    let log_self = (0..t * s).map(|_| pick(rng)).collect();
    let log_adv = (0..t * s).map(|_| pick(rng)).collect();
    let view = UnifiedHmmView::new(t, s, 1, log_entry, log_self, log_adv).unwrap();
    let ll = Array2::from_shape_fn((n, t * s), |_| -(rng.random_range(1..=2) as f64));
    TinyCase { view, ll }
}

#[derive(Debug, Clone)]
pub struct EnumPath {
    pub states: Vec<usize>,
    pub entries: Vec<bool>,
    pub score: f64,
}

fn emission(view: &UnifiedHmmView, ll: &Array2<f64>, t: usize, i: usize) -> f64 {
    let m = view.components_per_state;
    let row: Vec<f64> = (0..m).map(|k| ll[[t, i * m + k]]).collect();
    log_sum_exp(&row)
}

/// Every complete path through the loop: starts in the first state of some
/// unit, ends by exiting a final state. Scores are accumulated frame by frame
/// in the same association order as a forward recursion.
pub fn enumerate_paths(view: &UnifiedHmmView, ll: &Array2<f64>) -> Vec<EnumPath> {
    let n = ll.nrows();
    let s_per = view.states_per_unit;
    let mut out = Vec::new();
    let mut stack: Vec<EnumPath> = (0..view.n_units)
        .map(|u| {
            let i = u * s_per;
            EnumPath {
                states: vec![i],
                entries: vec![true],
                score: view.log_entry[u] + emission(view, ll, 0, i),
            }
        })
        .collect();
    while let Some(p) = stack.pop() {
        let t = p.states.len();
        let i = *p.states.last().unwrap();
        let last = i % s_per == s_per - 1;
        if t == n {
            if last {
                let mut done = p.clone();
                done.score = p.score + view.log_advance[i];
                out.push(done);
            }
            continue;
        }
        let mut push = |next: usize, entered: bool, score: f64| {
            let mut q = p.clone();
            q.states.push(next);
            q.entries.push(entered);
            q.score = score + emission(view, ll, t, next);
            stack.push(q);
        };
        push(i, false, p.score + view.log_self[i]);
        if last {
            for u in 0..view.n_units {
                push(u * s_per, true, (p.score + view.log_advance[i]) + view.log_entry[u]);
            }
        } else {
            push(i + 1, false, p.score + view.log_advance[i]);
        }
    }
    out
}

pub struct EnumPosteriors {
    pub log_evidence: f64,
    pub gamma: Array2<f64>,
    pub comp: Array2<f64>,
    pub entry: Vec<f64>,
    pub self_loop: Vec<f64>,
    pub advance: Vec<f64>,
}

fn lse(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub fn enumerate_posteriors(view: &UnifiedHmmView, ll: &Array2<f64>) -> EnumPosteriors {
    let paths = enumerate_paths(view, ll);
    let n = ll.nrows();
    let n_states = view.n_states();
    let m = view.components_per_state;
    let log_z = lse(paths.iter().map(|p| p.score));
    let mut gamma = Array2::zeros((n, n_states));
    let mut comp = Array2::zeros((n, n_states * m));
    let mut entry = vec![0.0; view.n_units];
    let mut self_loop = vec![0.0; n_states];
    let mut advance = vec![0.0; n_states];
    for p in &paths {
        let w = (p.score - log_z).exp();
        for t in 0..n {
            let i = p.states[t];
            gamma[[t, i]] += w;
            let local = lse((0..m).map(|k| ll[[t, i * m + k]]));
            for k in 0..m {
                comp[[t, i * m + k]] += w * (ll[[t, i * m + k]] - local).exp();
            }
            if p.entries[t] {
                entry[i / view.states_per_unit] += w;
            }
            if t + 1 < n {
                if p.states[t + 1] == i && !p.entries[t + 1] {
                    self_loop[i] += w;
                } else {
                    advance[i] += w;
                }
            } else {
                advance[i] += w;
            }
        }
    }
    EnumPosteriors {
        log_evidence: log_z,
        gamma,
        comp,
        entry,
        self_loop,
        advance,
    }
}

/// Tie-break key: walking backward from the last frame, the state at each
/// frame, then whether the following frame was a fresh entry (a self-loop
/// sorts before an exit and re-entry of the same state).
fn tie_key(p: &EnumPath) -> Vec<(usize, bool)> {
    let n = p.states.len();
    let mut key = vec![(p.states[n - 1], false)];
    for t in (1..n).rev() {
        key.push((p.states[t - 1], p.entries[t]));
    }
    key
}

pub fn viterbi_oracle(view: &UnifiedHmmView, ll: &Array2<f64>) -> EnumPath {
    let paths = enumerate_paths(view, ll);
    let best = paths.iter().map(|p| p.score).fold(f64::NEG_INFINITY, f64::max);
    paths
        .into_iter()
        .filter(|p| p.score == best)
        .min_by(|a, b| tie_key(a).cmp(&tie_key(b)))
        .unwrap()
}

/// Log marginal likelihood of a Normal-Gamma model for the observations of
/// one dimension.
pub fn normal_gamma_log_marginal(xs: &[f64], m0: f64, k0: f64, a0: f64, b0: f64) -> f64 {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / n;
    let ss: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
    let kn = k0 + n;
    let an = a0 + n / 2.0;
    let bn = b0 + 0.5 * ss + k0 * n * (mean - m0).powi(2) / (2.0 * kn);
    ln_gamma(an) - ln_gamma(a0) + a0 * b0.ln() - an * bn.ln() + 0.5 * (k0 / kn).ln()
        - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
}

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Exact log marginal likelihood of frames under a two-unit, single-state,
/// single-Gaussian phone loop with the given priors, summing over every unit
/// path with all parameters integrated out.
pub fn exact_log_marginal_t2(
    frames: &Array2<f64>,
    gamma: f64,
    dir_w: f64,
    m0: &[f64],
    k0: f64,
    a0: f64,
    b0: &[f64],
) -> f64 {
    let n = frames.nrows();
    let dim = frames.ncols();
    let mut terms = Vec::new();
    // a path is a unit per frame plus, between equal neighbours, whether the
    // unit was left and re-entered
    let n_paths = 2usize.pow(n as u32) * 2usize.pow(n.saturating_sub(1) as u32);
    for code in 0..n_paths {
        let units: Vec<usize> = (0..n).map(|t| (code >> t) & 1).collect();
        let breaks: Vec<bool> = (0..n - 1).map(|t| (code >> (n + t)) & 1 == 1).collect();
        let mut valid = true;
        let mut entries = [0.0f64; 2];
        let mut self_c = [0.0f64; 2];
        let mut adv_c = [0.0f64; 2];
        entries[units[0]] += 1.0;
        for t in 0..n - 1 {
            let (a, b) = (units[t], units[t + 1]);
            if a != b && !breaks[t] {
                valid = false;
                break;
            }
            if breaks[t] {
                adv_c[a] += 1.0;
                entries[b] += 1.0;
            } else {
                self_c[a] += 1.0;
            }
        }
        if !valid {
            continue;
        }
        adv_c[units[n - 1]] += 1.0;
        let mut lp = ln_beta(1.0 + entries[0], gamma + entries[1]) - ln_beta(1.0, gamma);
        for u in 0..2 {
            lp += ln_beta(dir_w + self_c[u], dir_w + adv_c[u]) - ln_beta(dir_w, dir_w);
            for d in 0..dim {
                let xs: Vec<f64> = (0..n).filter(|&t| units[t] == u).map(|t| frames[[t, d]]).collect();
                lp += normal_gamma_log_marginal(&xs, m0[d], k0, a0, b0[d]);
            }
        }
        terms.push(lp);
    }
    lse(terms.into_iter())
}

pub fn assert_close(a: f64, b: f64, tol: f64, what: &str) {
    assert!((a - b).abs() <= tol, "{what}: {a} vs {b} (tol {tol})");
}

/// Frames of `classes.len()` Gaussian classes with the given means and a
/// shared isotropic noise level, split into a few utterances.
pub fn labelled(means: &[Vec<f64>], per_class: usize, noise: f64, seed: u64) -> (FeatureSet, Vec<Vec<usize>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, noise).unwrap();
    let dim = means[0].len();
    let mut utts = Vec::new();
    let mut labels = Vec::new();
    for (c, mean) in means.iter().enumerate() {
        for part in 0..2 {
            let n = per_class / 2 + part * (per_class % 2);
            let x = Array2::from_shape_fn((n, dim), |(_, d)| mean[d] + normal.sample(&mut rng));
            utts.push(Utterance::new(format!("c{c}_{part}"), x));
            labels.push(vec![c; n]);
        }
    }
    (FeatureSet::new(utts, 0.01).unwrap(), labels)
}

pub fn within_scatter(fs: &FeatureSet, labels: &[Vec<usize>]) -> Array2<f64> {
    let dim = fs.dim();
    let n_classes = labels.iter().flatten().max().unwrap() + 1;
    let mut sums = Array2::<f64>::zeros((n_classes, dim));
    let mut counts = vec![0.0; n_classes];
    for (u, lab) in fs.utterances().iter().zip(labels) {
        for (t, &c) in lab.iter().enumerate() {
            counts[c] += 1.0;
            for d in 0..dim {
                sums[[c, d]] += u.features[[t, d]];
            }
        }
    }
    let mut sw = Array2::<f64>::zeros((dim, dim));
    let n: f64 = counts.iter().sum();
    for (u, lab) in fs.utterances().iter().zip(labels) {
        for (t, &c) in lab.iter().enumerate() {
            for i in 0..dim {
                for j in 0..dim {
                    let di = u.features[[t, i]] - sums[[c, i]] / counts[c];
                    let dj = u.features[[t, j]] - sums[[c, j]] / counts[c];
                    sw[[i, j]] += di * dj / n;
                }
            }
        }
    }
    sw
}
