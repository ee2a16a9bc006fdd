//! Same-different evaluation: every pair of word segments is scored by a
//! length-normalized DTW distance over posteriorgram frames with symmetric KL
//! as the local cost, and pairs are ranked to compute average precision.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;

use crate::corpus::{FeatureSet, ReferenceTranscript, WordSegment};
use crate::error::{Error, Result};

pub const DEFAULT_FLOOR: f64 = 1e-8;

/// Word tokens long enough in time and in characters; the word type is the
/// lowercased label.
pub fn extract_word_segments(
    words: &ReferenceTranscript,
    min_dur_s: f64,
    min_chars: usize,
    frame_period_s: f64,
) -> Vec<WordSegment> {
    let mut out = Vec::new();
    for (utt, spans) in words.iter() {
        for s in spans {
            let dur = (s.end - s.start) as f64 * frame_period_s;
            if dur >= min_dur_s && s.label.chars().count() >= min_chars {
                out.push(WordSegment {
                    utterance_id: utt.to_string(),
                    start: s.start,
                    end: s.end,
                    word_type: s.label.to_lowercase(),
                });
            }
        }
    }
    out
}

/// Floors every entry and renormalizes, returning the vector and its logs.
fn prepare_row(p: &[f64], floor: f64) -> (Vec<f64>, Vec<f64>) {
    let floored: Vec<f64> = p.iter().map(|&v| v.max(floor)).collect();
    let total: f64 = floored.iter().sum();
    let norm: Vec<f64> = floored.iter().map(|v| v / total).collect();
    let logs = norm.iter().map(|v| v.ln()).collect();
    (norm, logs)
}

/// `KL(p||q) + KL(q||p) = sum_i (p_i - q_i)(ln p_i - ln q_i)`, which is
/// exactly symmetric in floating point.
fn skl(p: &[f64], lp: &[f64], q: &[f64], lq: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..p.len() {
        s += (p[i] - q[i]) * (lp[i] - lq[i]);
    }
    s.max(0.0)
}

pub fn symmetric_kl(p: &[f64], q: &[f64], floor: f64) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Shape(format!("vectors of length {} and {}", p.len(), q.len())));
    }
    if !(floor > 0.0) {
        return Err(Error::Invalid(format!("posterior floor must be positive, got {floor}")));
    }
    let (p, lp) = prepare_row(p, floor);
    let (q, lq) = prepare_row(q, floor);
    Ok(skl(&p, &lp, &q, &lq))
}

/// A posteriorgram segment with floored, renormalized rows and their logs.
#[derive(Debug, Clone)]
pub struct PreparedSegment {
    probs: Array2<f64>,
    logs: Array2<f64>,
}

impl PreparedSegment {
    pub fn new(frames: ArrayView2<f64>, floor: f64) -> Self {
        let mut probs = Array2::zeros(frames.dim());
        let mut logs = Array2::zeros(frames.dim());
        for (t, row) in frames.rows().into_iter().enumerate() {
            let (p, l) = prepare_row(&row.to_vec(), floor);
            probs.row_mut(t).assign(&ndarray::Array1::from(p));
            logs.row_mut(t).assign(&ndarray::Array1::from(l));
        }
        PreparedSegment { probs, logs }
    }

    pub fn len(&self) -> usize {
        self.probs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.nrows() == 0
    }

    fn cost(&self, i: usize, other: &PreparedSegment, j: usize) -> f64 {
        let p = self.probs.row(i);
        let lp = self.logs.row(i);
        let q = other.probs.row(j);
        let lq = other.logs.row(j);
        skl(
            p.as_slice().unwrap(),
            lp.as_slice().unwrap(),
            q.as_slice().unwrap(),
            lq.as_slice().unwrap(),
        )
    }
}

/// DTW with steps (1,0), (0,1), (1,1). The path minimizing accumulated cost
/// is chosen, ties going to the shorter path; the result is its cost divided
/// by its number of nodes. `band` limits `|i - j|`, widened to at least the
/// length difference.
pub fn dtw_prepared(a: &PreparedSegment, b: &PreparedSegment, band: Option<usize>) -> Result<f64> {
    let (na, nb) = (a.len(), b.len());
    if na == 0 || nb == 0 {
        return Err(Error::Invalid("DTW on an empty segment".into()));
    }
    if a.probs.ncols() != b.probs.ncols() {
        return Err(Error::Shape(format!(
            "posteriorgram widths {} and {}",
            a.probs.ncols(),
            b.probs.ncols()
        )));
    }
    let width = band.map(|w| w.max(na.abs_diff(nb)));
    let inf = (f64::INFINITY, usize::MAX);
    // rolling rows of (accumulated cost, node count)
    let mut prev = vec![inf; nb];
    let mut cur = vec![inf; nb];
    let better = |x: (f64, usize), y: (f64, usize)| match x.0.total_cmp(&y.0) {
        Ordering::Less => true,
        Ordering::Equal => x.1 < y.1,
        Ordering::Greater => false,
    };
    for i in 0..na {
        for j in 0..nb {
            if width.is_some_and(|w| i.abs_diff(j) > w) {
                cur[j] = inf;
                continue;
            }
            let best = if i == 0 && j == 0 {
                (0.0, 0)
            } else {
                let mut best = inf;
                for cand in [
                    if i > 0 { prev[j] } else { inf },
                    if j > 0 { cur[j - 1] } else { inf },
                    if i > 0 && j > 0 { prev[j - 1] } else { inf },
                ] {
                    if better(cand, best) {
                        best = cand;
                    }
                }
                best
            };
            cur[j] = (best.0 + a.cost(i, b, j), best.1 + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let (cost, nodes) = prev[nb - 1];
    Ok(cost / nodes as f64)
}

pub fn dtw_distance(a: ArrayView2<f64>, b: ArrayView2<f64>, floor: f64, band: Option<usize>) -> Result<f64> {
    if a.ncols() != b.ncols() {
        return Err(Error::Shape(format!("posteriorgram widths {} and {}", a.ncols(), b.ncols())));
    }
    dtw_prepared(&PreparedSegment::new(a, floor), &PreparedSegment::new(b, floor), band)
}

/// Canonical segment id `utt:start-end`.
pub fn segment_id(s: &WordSegment) -> String {
    format!("{}:{}-{}", s.utterance_id, s.start, s.end)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPair {
    pub a: String,
    pub b: String,
    pub distance: f64,
    pub same: bool,
}

/// Average precision of ranking pairs by ascending distance, ties ordered by
/// the `(a, b)` id pair.
pub fn average_precision(pairs: &[ScoredPair]) -> Result<f64> {
    let n_pos = pairs.iter().filter(|p| p.same).count();
    if n_pos == 0 {
        return Err(Error::Invalid("average precision needs at least one same-type pair".into()));
    }
    if let Some(p) = pairs.iter().find(|p| !p.distance.is_finite()) {
        return Err(Error::NonFinite(format!("distance of pair {} / {}", p.a, p.b)));
    }
    let mut order: Vec<&ScoredPair> = pairs.iter().collect();
    order.sort_by(|x, y| {
        x.distance
            .total_cmp(&y.distance)
            .then_with(|| (&x.a, &x.b).cmp(&(&y.a, &y.b)))
    });
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (k, p) in order.iter().enumerate() {
        if p.same {
            hits += 1;
            sum += hits as f64 / (k + 1) as f64;
        }
    }
    Ok(sum / n_pos as f64)
}

#[derive(Debug, Clone)]
pub struct SameDiffReport {
    pub average_precision: f64,
    pub n_same: usize,
    pub n_diff: usize,
    pub pairs: Vec<ScoredPair>,
}

impl SameDiffReport {
    pub fn n_pairs(&self) -> usize {
        self.n_same + self.n_diff
    }

    pub fn to_report(&self) -> Vec<(&'static str, String)> {
        vec![
            ("ap", format!("{:.6}", self.average_precision)),
            ("n_same", self.n_same.to_string()),
            ("n_diff", self.n_diff.to_string()),
            ("n_pairs", self.n_pairs().to_string()),
        ]
    }

    /// `idA<TAB>idB<TAB>distance<TAB>same|diff` lines.
    pub fn pair_lines(&self) -> impl Iterator<Item = String> + '_ {
        self.pairs.iter().map(|p| {
            format!(
                "{}\t{}\t{}\t{}",
                p.a,
                p.b,
                p.distance,
                if p.same { "same" } else { "diff" }
            )
        })
    }
}

/// Scores all unordered segment pairs in parallel. Segments are put in
/// canonical order first, so the result does not depend on input order.
pub fn same_different_eval(
    segments: &[WordSegment],
    postgrams: &FeatureSet,
    floor: f64,
    band: Option<usize>,
) -> Result<SameDiffReport> {
    let mut segs: Vec<&WordSegment> = segments.iter().collect();
    segs.sort();
    let mut seen = BTreeMap::new();
    for s in &segs {
        let utt = postgrams
            .get(&s.utterance_id)
            .ok_or_else(|| Error::Invalid(format!("no posteriorgram for utterance {:?}", s.utterance_id)))?;
        if s.start >= s.end || s.end > utt.n_frames() {
            return Err(Error::Invalid(format!(
                "segment {} outside utterance of {} frames",
                segment_id(s),
                utt.n_frames()
            )));
        }
        if seen.insert(segment_id(s), ()).is_some() {
            return Err(Error::Invalid(format!("duplicate segment {}", segment_id(s))));
        }
    }
    let prepared: Vec<PreparedSegment> = segs
        .par_iter()
        .map(|s| {
            let utt = postgrams.get(&s.utterance_id).unwrap();
            PreparedSegment::new(utt.features.slice(ndarray::s![s.start..s.end, ..]), floor)
        })
        .collect();
    let ids: Vec<String> = segs.iter().map(|s| segment_id(s)).collect();
    let pairs: Vec<ScoredPair> = (0..segs.len())
        .into_par_iter()
        .map(|i| {
            (i + 1..segs.len())
                .map(|j| {
                    Ok(ScoredPair {
                        a: ids[i].clone(),
                        b: ids[j].clone(),
                        distance: dtw_prepared(&prepared[i], &prepared[j], band)?,
                        same: segs[i].word_type == segs[j].word_type,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let ap = average_precision(&pairs)?;
    let n_same = pairs.iter().filter(|p| p.same).count();
    Ok(SameDiffReport {
        average_precision: ap,
        n_same,
        n_diff: pairs.len() - n_same,
        pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kl_hand_value() {
        let d = symmetric_kl(&[0.5, 0.5], &[0.25, 0.75], 1e-12).unwrap();
        assert!((d - 0.2747).abs() < 1e-4);
        assert_eq!(symmetric_kl(&[0.2, 0.8], &[0.2, 0.8], 1e-8).unwrap(), 0.0);
        assert!(symmetric_kl(&[1.0], &[0.5, 0.5], 1e-8).is_err());
    }

    #[test]
    fn rank_fixture() {
        let mk = |d: f64, same: bool| ScoredPair {
            a: format!("{d}"),
            b: "x".into(),
            distance: d,
            same,
        };
        let pairs = vec![mk(1.0, false), mk(2.0, true), mk(3.0, true), mk(4.0, false)];
        let ap = average_precision(&pairs).unwrap();
        assert!((ap - (0.5 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
        assert!(average_precision(&[mk(1.0, false)]).is_err());
    }
}
