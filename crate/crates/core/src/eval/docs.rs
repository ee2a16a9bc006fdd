//! Spoken-document tasks on bags of unit n-grams: topic classification with a
//! one-vs-rest linear SVM trained by SGD under an L1 penalty, and clustering
//! by repeated bisection with spherical 2-means.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::hash::Hash;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::corpus::DocumentSet;
use crate::decode::Tokenization;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DocVector {
    pub doc_id: String,
    /// `(feature id, weight)` sorted by id; zero weights are dropped.
    pub features: Vec<(usize, f64)>,
    pub label: Option<String>,
}

impl DocVector {
    pub fn norm(&self) -> f64 {
        self.features.iter().map(|(_, w)| w * w).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.features.is_empty()
    }

    fn dot_dense(&self, dense: &[f64]) -> f64 {
        self.features
            .iter()
            .filter(|(j, _)| *j < dense.len())
            .map(|&(j, w)| w * dense[j])
            .sum()
    }
}

/// Unit n-gram vocabulary, ids assigned in lexicographic n-gram order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    pub ngrams: Vec<Vec<usize>>,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.ngrams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ngrams.is_empty()
    }
}

/// TF-IDF over unit n-grams of orders `n_lo..=n_hi`. N-grams never span an
/// utterance boundary; `idf = ln(N_docs / df)` without smoothing.
pub fn ngram_tfidf(
    docs: &DocumentSet,
    tok: &Tokenization,
    n_lo: usize,
    n_hi: usize,
) -> Result<(Vec<DocVector>, Vocabulary)> {
    if n_lo == 0 || n_lo > n_hi {
        return Err(Error::Invalid(format!("invalid n-gram range {n_lo}..={n_hi}")));
    }
    let by_id = tok.by_id();
    let counts: Vec<BTreeMap<Vec<usize>, f64>> = docs
        .documents()
        .par_iter()
        .map(|doc| {
            let mut c = BTreeMap::new();
            for utt in &doc.utterance_ids {
                let u = by_id.get(utt.as_str()).ok_or_else(|| {
                    Error::Invalid(format!("document {:?}: utterance {utt:?} has no tokenization", doc.id))
                })?;
                let units: Vec<usize> = u.units().collect();
                for n in n_lo..=n_hi {
                    for w in units.windows(n) {
                        *c.entry(w.to_vec()).or_insert(0.0) += 1.0;
                    }
                }
            }
            Ok(c)
        })
        .collect::<Result<_>>()?;
    let mut df: BTreeMap<&Vec<usize>, usize> = BTreeMap::new();
    for c in &counts {
        for g in c.keys() {
            *df.entry(g).or_insert(0) += 1;
        }
    }
    let ids: BTreeMap<&Vec<usize>, usize> = df.keys().enumerate().map(|(i, g)| (*g, i)).collect();
    let n_docs = docs.len() as f64;
    let mut vectors = Vec::with_capacity(docs.len());
    for (doc, c) in docs.documents().iter().zip(&counts) {
        let mut features: Vec<(usize, f64)> = c
            .iter()
            .map(|(g, tf)| (ids[g], tf * (n_docs / df[g] as f64).ln()))
            .filter(|(_, w)| *w > 0.0)
            .collect();
        let norm = features.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
        if norm > 0.0 {
            features.iter_mut().for_each(|(_, w)| *w /= norm);
        } else {
            log::warn!("document {:?} has an all-zero TF-IDF vector", doc.id);
        }
        vectors.push(DocVector {
            doc_id: doc.id.clone(),
            features,
            label: doc.topic.clone(),
        });
    }
    let vocab = Vocabulary {
        ngrams: df.keys().map(|g| (*g).clone()).collect(),
    };
    Ok((vectors, vocab))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmConfig {
    pub epochs: usize,
    pub lambda_l1: f64,
    pub eta0: f64,
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            epochs: 20,
            lambda_l1: 1e-4,
            eta0: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSvmModel {
    /// Sorted class names.
    pub classes: Vec<String>,
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl LinearSvmModel {
    pub fn scores(&self, x: &DocVector) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(w, b)| x.dot_dense(w) + b)
            .collect()
    }

    /// Highest-scoring class; ties go to the lexicographically first class.
    pub fn predict(&self, x: &DocVector) -> &str {
        let scores = self.scores(x);
        let mut best = 0;
        for (c, &s) in scores.iter().enumerate() {
            if s > scores[best] {
                best = c;
            }
        }
        &self.classes[best]
    }
}

/// Per-weight state of the cumulative L1 penalty.
struct L1Weights {
    w: Vec<f64>,
    /// Penalty actually applied to each weight so far.
    q: Vec<f64>,
}

impl L1Weights {
    fn new(n: usize) -> Self {
        L1Weights {
            w: vec![0.0; n],
            q: vec![0.0; n],
        }
    }

    /// Clips weight `j` toward zero by its outstanding share of the total
    /// penalty `u`.
    fn penalize(&mut self, j: usize, u: f64) {
        let z = self.w[j];
        if z > 0.0 {
            self.w[j] = (z - (u + self.q[j])).max(0.0);
        } else if z < 0.0 {
            self.w[j] = (z + (u - self.q[j])).min(0.0);
        }
        self.q[j] += self.w[j] - z;
    }
}

/// Objective `mean hinge + lambda * |w|_1` of a binary problem; the bias is
/// stored as the last weight.
fn binary_objective(w: &[f64], xs: &[DocVector], ys: &[f64], lambda: f64) -> f64 {
    let dim = w.len() - 1;
    let hinge: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (1.0 - y * (x.dot_dense(&w[..dim]) + w[dim])).max(0.0))
        .sum();
    hinge / xs.len() as f64 + lambda * w.iter().map(|v| v.abs()).sum::<f64>()
}

fn train_binary(xs: &[DocVector], ys: &[f64], dim: usize, orders: &[Vec<usize>], cfg: &SvmConfig) -> (Vec<f64>, Vec<f64>) {
    // bias is the last coordinate, an always-present feature of value 1
    let mut state = L1Weights::new(dim + 1);
    let mut u = 0.0;
    let mut t = 0usize;
    let mut trace = Vec::with_capacity(orders.len());
    for order in orders {
        for &i in order {
            let eta = cfg.eta0 / (1.0 + cfg.eta0 * cfg.lambda_l1 * t as f64);
            t += 1;
            u += eta * cfg.lambda_l1;
            let x = &xs[i];
            let margin = ys[i] * (x.dot_dense(&state.w[..dim]) + state.w[dim]);
            if margin < 1.0 {
                for &(j, v) in &x.features {
                    if j < dim {
                        state.w[j] += eta * ys[i] * v;
                    }
                }
                state.w[dim] += eta * ys[i];
            }
            for &(j, _) in &x.features {
                if j < dim {
                    state.penalize(j, u);
                }
            }
            state.penalize(dim, u);
        }
        // settle the outstanding penalty of weights not touched recently
        for j in 0..=dim {
            state.penalize(j, u);
        }
        trace.push(binary_objective(&state.w, xs, ys, cfg.lambda_l1));
    }
    (state.w, trace)
}

/// Trains the model and returns, per class, the objective after each epoch.
pub fn train_svm_sgd_traced(
    vectors: &[DocVector],
    labels: &[String],
    cfg: &SvmConfig,
) -> Result<(LinearSvmModel, Vec<Vec<f64>>)> {
    if vectors.len() != labels.len() {
        return Err(Error::Shape(format!("{} vectors but {} labels", vectors.len(), labels.len())));
    }
    let classes: Vec<String> = labels.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    if classes.len() < 2 {
        return Err(Error::Invalid(format!(
            "classification needs at least 2 classes, found {}",
            classes.len()
        )));
    }
    if cfg.epochs == 0 || !(cfg.eta0 > 0.0) || !(cfg.lambda_l1 >= 0.0) {
        return Err(Error::Invalid("SVM needs epochs >= 1, eta0 > 0 and lambda >= 0".into()));
    }
    let dim = vectors
        .iter()
        .flat_map(|v| v.features.iter().map(|(j, _)| j + 1))
        .max()
        .unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let orders: Vec<Vec<usize>> = (0..cfg.epochs)
        .map(|_| {
            let mut o: Vec<usize> = (0..vectors.len()).collect();
            o.shuffle(&mut rng);
            o
        })
        .collect();
    let per_class: Vec<(Vec<f64>, Vec<f64>)> = classes
        .par_iter()
        .map(|c| {
            let ys: Vec<f64> = labels.iter().map(|l| if l == c { 1.0 } else { -1.0 }).collect();
            train_binary(vectors, &ys, dim, &orders, cfg)
        })
        .collect();
    let mut weights = Vec::with_capacity(classes.len());
    let mut bias = Vec::with_capacity(classes.len());
    let mut traces = Vec::with_capacity(classes.len());
    for (mut w, trace) in per_class {
        bias.push(w.pop().unwrap());
        weights.push(w);
        traces.push(trace);
    }
    Ok((LinearSvmModel { classes, weights, bias }, traces))
}

pub fn train_svm_sgd(vectors: &[DocVector], labels: &[String], cfg: &SvmConfig) -> Result<LinearSvmModel> {
    train_svm_sgd_traced(vectors, labels, cfg).map(|(m, _)| m)
}

pub fn accuracy(model: &LinearSvmModel, vectors: &[DocVector], labels: &[String]) -> f64 {
    let correct = vectors
        .iter()
        .zip(labels)
        .filter(|(v, l)| model.predict(v) == l.as_str())
        .count();
    correct as f64 / vectors.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    pub fold_accuracy: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation over folds.
    pub std: f64,
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Stratified fold ids: members of each class are shuffled and dealt round
/// robin, continuing across classes so fold sizes stay balanced.
pub fn stratified_folds(labels: &[String], folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::Invalid(format!("need at least 2 folds, got {folds}")));
    }
    let mut by_class: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of = vec![0; labels.len()];
    let mut next = 0;
    for (class, mut members) in by_class {
        if members.len() < folds {
            return Err(Error::Invalid(format!(
                "class {class:?} has {} members, fewer than {folds} folds",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        for i in members {
            fold_of[i] = next % folds;
            next += 1;
        }
    }
    Ok(fold_of)
}

pub fn cross_validate(vectors: &[DocVector], labels: &[String], folds: usize, cfg: &SvmConfig) -> Result<CvReport> {
    if vectors.len() != labels.len() {
        return Err(Error::Shape(format!("{} vectors but {} labels", vectors.len(), labels.len())));
    }
    let fold_of = stratified_folds(labels, folds, cfg.seed)?;
    let fold_accuracy = (0..folds)
        .into_par_iter()
        .map(|f| {
            let split = |held: bool| -> (Vec<DocVector>, Vec<String>) {
                (0..vectors.len())
                    .filter(|&i| (fold_of[i] == f) == held)
                    .map(|i| (vectors[i].clone(), labels[i].clone()))
                    .unzip()
            };
            let (train_x, train_y) = split(false);
            let (test_x, test_y) = split(true);
            let model = train_svm_sgd(&train_x, &train_y, cfg)?;
            Ok(accuracy(&model, &test_x, &test_y))
        })
        .collect::<Result<Vec<f64>>>()?;
    let (mean, std) = mean_std(&fold_accuracy);
    Ok(CvReport {
        fold_accuracy,
        mean,
        std,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterRun {
    pub assignments: Vec<usize>,
    pub i2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterResult {
    pub best: ClusterRun,
    /// Every restart in seed order.
    pub runs: Vec<ClusterRun>,
}

struct Composite {
    sum: Vec<f64>,
    norm2: f64,
}

impl Composite {
    fn of(members: &[usize], vectors: &[DocVector], dim: usize) -> Self {
        let mut sum = vec![0.0; dim];
        for &i in members {
            for &(j, w) in &vectors[i].features {
                sum[j] += w;
            }
        }
        let norm2 = sum.iter().map(|v| v * v).sum();
        Composite { sum, norm2 }
    }

    fn norm(&self) -> f64 {
        self.norm2.sqrt()
    }

    fn add(&mut self, x: &DocVector, sign: f64) {
        for &(j, w) in &x.features {
            let old = self.sum[j];
            self.sum[j] += sign * w;
            self.norm2 += self.sum[j] * self.sum[j] - old * old;
        }
        self.norm2 = self.norm2.max(0.0);
    }
}

fn i2_of(members: &[Vec<usize>], vectors: &[DocVector], dim: usize) -> f64 {
    members.iter().map(|m| Composite::of(m, vectors, dim).norm()).sum()
}

/// Two-way spherical k-means on `members`; returns the two sides.
fn bisect<R: Rng>(members: &[usize], vectors: &[DocVector], dim: usize, rng: &mut R) -> (Vec<usize>, Vec<usize>) {
    let a = rng.random_range(0..members.len());
    let mut b = rng.random_range(0..members.len() - 1);
    if b >= a {
        b += 1;
    }
    let mut centroids = [
        Composite::of(&[members[a]], vectors, dim),
        Composite::of(&[members[b]], vectors, dim),
    ];
    let mut side = vec![0u8; members.len()];
    for iter in 0..100 {
        let norms = [centroids[0].norm().max(1e-300), centroids[1].norm().max(1e-300)];
        let mut changed = false;
        for (k, &i) in members.iter().enumerate() {
            let s0 = vectors[i].dot_dense(&centroids[0].sum) / norms[0];
            let s1 = vectors[i].dot_dense(&centroids[1].sum) / norms[1];
            let new = u8::from(s1 > s0);
            changed |= new != side[k];
            side[k] = new;
        }
        // keep both sides non-empty: move the member least similar to the
        // populated side
        for empty in 0..2u8 {
            if side.iter().all(|&s| s != empty) {
                let full = 1 - empty as usize;
                let k = (0..members.len())
                    .min_by(|&x, &y| {
                        let sx = vectors[members[x]].dot_dense(&centroids[full].sum);
                        let sy = vectors[members[y]].dot_dense(&centroids[full].sum);
                        sx.total_cmp(&sy).then(y.cmp(&x))
                    })
                    .unwrap();
                side[k] = empty;
                changed = true;
            }
        }
        let split = |s: u8| -> Vec<usize> {
            members.iter().zip(&side).filter(|(_, &x)| x == s).map(|(&i, _)| i).collect()
        };
        centroids = [Composite::of(&split(0), vectors, dim), Composite::of(&split(1), vectors, dim)];
        if !changed && iter > 0 {
            break;
        }
    }
    let split = |s: u8| -> Vec<usize> {
        members.iter().zip(&side).filter(|(_, &x)| x == s).map(|(&i, _)| i).collect()
    };
    (split(0), split(1))
}

/// Greedy single-document moves that increase I2, until none helps.
fn refine<R: Rng>(clusters: &mut [Vec<usize>], vectors: &[DocVector], dim: usize, rng: &mut R) {
    let k = clusters.len();
    let mut assign = vec![0usize; vectors.len()];
    for (c, m) in clusters.iter().enumerate() {
        for &i in m {
            assign[i] = c;
        }
    }
    let mut comps: Vec<Composite> = clusters.iter().map(|m| Composite::of(m, vectors, dim)).collect();
    let mut sizes: Vec<usize> = clusters.iter().map(Vec::len).collect();
    let mut order: Vec<usize> = (0..vectors.len()).collect();
    for _ in 0..100 {
        order.shuffle(rng);
        let mut moved = false;
        for &i in &order {
            let from = assign[i];
            if sizes[from] == 1 {
                continue;
            }
            let x = &vectors[i];
            let x2: f64 = x.features.iter().map(|(_, w)| w * w).sum();
            let dots: Vec<f64> = comps.iter().map(|c| x.dot_dense(&c.sum)).collect();
            let from_after = (comps[from].norm2 - 2.0 * dots[from] + x2).max(0.0).sqrt();
            let mut best = (1e-12, from);
            for to in 0..k {
                if to == from {
                    continue;
                }
                let to_after = (comps[to].norm2 + 2.0 * dots[to] + x2).max(0.0).sqrt();
                let gain = from_after + to_after - comps[from].norm() - comps[to].norm();
                if gain > best.0 {
                    best = (gain, to);
                }
            }
            if best.1 != from {
                let to = best.1;
                comps[from].add(x, -1.0);
                comps[to].add(x, 1.0);
                sizes[from] -= 1;
                sizes[to] += 1;
                assign[i] = to;
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
    for m in clusters.iter_mut() {
        m.clear();
    }
    for (i, &c) in assign.iter().enumerate() {
        clusters[c].push(i);
    }
}

/// One restart: `k - 1` bisections, each applied to the cluster whose trial
/// split gains the most I2, then greedy refinement.
pub fn repeated_bisection_single<R: Rng>(vectors: &[DocVector], k: usize, rng: &mut R) -> Result<ClusterRun> {
    if k < 2 {
        return Err(Error::Invalid(format!("need at least 2 clusters, got {k}")));
    }
    if k > vectors.len() {
        return Err(Error::Invalid(format!("{k} clusters for {} documents", vectors.len())));
    }
    let dim = vectors
        .iter()
        .flat_map(|v| v.features.iter().map(|(j, _)| j + 1))
        .max()
        .unwrap_or(0);
    let mut clusters: Vec<Vec<usize>> = vec![(0..vectors.len()).collect()];
    // cached trial split and its gain per cluster
    let mut trials: Vec<Option<(f64, Vec<usize>, Vec<usize>)>> = vec![None];
    while clusters.len() < k {
        for (c, members) in clusters.iter().enumerate() {
            if trials[c].is_none() && members.len() >= 2 {
                let (a, b) = bisect(members, vectors, dim, rng);
                let gain = Composite::of(&a, vectors, dim).norm() + Composite::of(&b, vectors, dim).norm()
                    - Composite::of(members, vectors, dim).norm();
                trials[c] = Some((gain, a, b));
            }
        }
        let mut pick: Option<usize> = None;
        for (c, t) in trials.iter().enumerate() {
            if let Some((gain, _, _)) = t {
                if pick.is_none_or(|p| *gain > trials[p].as_ref().unwrap().0) {
                    pick = Some(c);
                }
            }
        }
        let c = pick.expect("k <= #docs leaves a splittable cluster");
        let (_, a, b) = trials[c].take().unwrap();
        clusters[c] = a;
        clusters.push(b);
        trials.push(None);
    }
    refine(&mut clusters, vectors, dim, rng);
    let i2 = i2_of(&clusters, vectors, dim);
    let mut assignments = vec![0; vectors.len()];
    for (c, m) in clusters.iter().enumerate() {
        for &i in m {
            assignments[i] = c;
        }
    }
    Ok(ClusterRun { assignments, i2 })
}

/// Best of `n_init` seeded restarts by I2; restarts run in parallel, each on
/// its own random stream.
pub fn repeated_bisection_cluster(vectors: &[DocVector], k: usize, n_init: usize, seed: u64) -> Result<ClusterResult> {
    if n_init == 0 {
        return Err(Error::Invalid("n_init must be at least 1".into()));
    }
    let runs = (0..n_init as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i);
            repeated_bisection_single(vectors, k, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (i, r) in runs.iter().enumerate() {
        if r.i2 > runs[best].i2 {
            best = i;
        }
    }
    Ok(ClusterResult {
        best: runs[best].clone(),
        runs,
    })
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b || a == 0 {
        return Err(Error::Shape(format!("{a} assignments for {b} labels")));
    }
    Ok(())
}

pub fn purity<C: Eq + Hash, L: Eq + Hash>(assignments: &[C], labels: &[L]) -> Result<f64> {
    check_lengths(assignments.len(), labels.len())?;
    let mut table: HashMap<&C, HashMap<&L, usize>> = HashMap::new();
    for (c, l) in assignments.iter().zip(labels) {
        *table.entry(c).or_default().entry(l).or_insert(0) += 1;
    }
    let majority: usize = table.values().map(|m| m.values().max().copied().unwrap_or(0)).sum();
    Ok(majority as f64 / labels.len() as f64)
}

pub fn bcubed_f1<C: Eq + Hash, L: Eq + Hash>(assignments: &[C], labels: &[L]) -> Result<f64> {
    check_lengths(assignments.len(), labels.len())?;
    let mut cluster_size: HashMap<&C, f64> = HashMap::new();
    let mut label_size: HashMap<&L, f64> = HashMap::new();
    let mut joint: HashMap<(&C, &L), f64> = HashMap::new();
    for (c, l) in assignments.iter().zip(labels) {
        *cluster_size.entry(c).or_insert(0.0) += 1.0;
        *label_size.entry(l).or_insert(0.0) += 1.0;
        *joint.entry((c, l)).or_insert(0.0) += 1.0;
    }
    let n = labels.len() as f64;
    let (mut p, mut r) = (0.0, 0.0);
    for (c, l) in assignments.iter().zip(labels) {
        let both = joint[&(c, l)];
        p += both / cluster_size[c];
        r += both / label_size[l];
    }
    let (p, r) = (p / n, r / n);
    Ok(2.0 * p * r / (p + r))
}
