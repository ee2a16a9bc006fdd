//! 1-best tokenization by Viterbi decoding and per-frame posteriorgrams by
//! forward-backward, both over the expected log parameters of a trained
//! phone loop.
//!
//! Ties in Viterbi are resolved toward the predecessor with the lower
//! `(unit, state)` index, and a self-loop wins over exiting and re-entering
//! the same single-state unit. The final state is chosen the same way. The
//! result is the optimal path whose reversed state sequence is
//! lexicographically smallest.

use std::collections::BTreeMap;

use ndarray::{Array2, Axis};
use rayon::prelude::*;

use crate::corpus::{FeatureSet, LabeledSpan, ReferenceTranscript, Utterance};
use crate::error::{Error, Result};
use crate::inference::{check_inputs, forward_backward, state_emissions};
use crate::model::{PhoneLoopModel, UnifiedHmmView};

/// A unit token spanning frames `[start, end)`. Unit ids are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Token {
    pub unit: usize,
    pub start: usize,
    pub end: usize,
}

/// Per-frame HMM state label, both indices 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StateLabel {
    pub unit: usize,
    pub state: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UtteranceTokens {
    pub utterance_id: String,
    pub tokens: Vec<Token>,
    /// Per-frame state labels; empty when the tokenization was read from a
    /// unit-level transcript.
    pub states: Vec<StateLabel>,
}

impl UtteranceTokens {
    pub fn units(&self) -> impl Iterator<Item = usize> + '_ {
        self.tokens.iter().map(|t| t.unit)
    }

    /// Per-frame unit ids reconstructed from the token spans.
    pub fn frame_units(&self) -> Vec<usize> {
        self.tokens
            .iter()
            .flat_map(|t| std::iter::repeat_n(t.unit, t.end - t.start))
            .collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Tokenization {
    utterances: Vec<UtteranceTokens>,
}

impl Tokenization {
    pub fn new(utterances: Vec<UtteranceTokens>) -> Self {
        Tokenization { utterances }
    }

    pub fn utterances(&self) -> &[UtteranceTokens] {
        &self.utterances
    }

    pub fn get(&self, utt_id: &str) -> Option<&UtteranceTokens> {
        self.utterances.iter().find(|u| u.utterance_id == utt_id)
    }

    pub fn by_id(&self) -> BTreeMap<&str, &UtteranceTokens> {
        self.utterances
            .iter()
            .map(|u| (u.utterance_id.as_str(), u))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    /// Unit tokens as a transcript with labels `u<id>`.
    pub fn unit_transcript(&self) -> ReferenceTranscript {
        let mut map = BTreeMap::new();
        for u in &self.utterances {
            let spans = u
                .tokens
                .iter()
                .map(|t| LabeledSpan::new(format!("u{}", t.unit), t.start, t.end))
                .collect();
            map.insert(u.utterance_id.clone(), spans);
        }
        ReferenceTranscript::from_map(map).expect("tokens tile their utterances")
    }

    /// Runs of identical state labels as `u<id>_s<state>` spans. A run is
    /// also split where a new token starts.
    pub fn state_transcript(&self) -> ReferenceTranscript {
        let mut map = BTreeMap::new();
        for u in &self.utterances {
            let mut spans: Vec<LabeledSpan> = Vec::new();
            for tok in &u.tokens {
                let mut start = tok.start;
                for t in tok.start + 1..=tok.end {
                    if t == tok.end || u.states[t] != u.states[start] {
                        let s = u.states[start];
                        spans.push(LabeledSpan::new(format!("u{}_s{}", s.unit, s.state), start, t));
                        start = t;
                    }
                }
            }
            map.insert(u.utterance_id.clone(), spans);
        }
        ReferenceTranscript::from_map(map).expect("state runs tile their utterances")
    }

    /// Reads a unit-level transcript (`u<id>` labels). State labels are left
    /// empty.
    pub fn from_unit_transcript(transcript: &ReferenceTranscript) -> Result<Self> {
        let mut utterances = Vec::with_capacity(transcript.len());
        for (utt, spans) in transcript.iter() {
            let tokens = spans
                .iter()
                .map(|s| {
                    let unit = s
                        .label
                        .strip_prefix('u')
                        .and_then(|v| v.parse::<usize>().ok())
                        .filter(|&v| v >= 1)
                        .ok_or_else(|| {
                            Error::Invalid(format!("{utt}: token label {:?} is not u<id>", s.label))
                        })?;
                    Ok(Token {
                        unit,
                        start: s.start,
                        end: s.end,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            utterances.push(UtteranceTokens {
                utterance_id: utt.to_string(),
                tokens,
                states: Vec::new(),
            });
        }
        Ok(Tokenization { utterances })
    }
}

/// Best path through the unified HMM. `states` holds flat 0-based state
/// indices and `entries[t]` marks frames where a unit is entered.
#[derive(Debug, Clone, PartialEq)]
pub struct ViterbiPath {
    pub states: Vec<usize>,
    pub entries: Vec<bool>,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Back {
    Start,
    Stay,
    Advance,
    Enter(usize),
}

pub fn viterbi_path(view: &UnifiedHmmView, frame_logliks: &Array2<f64>) -> Result<ViterbiPath> {
    check_inputs(view, frame_logliks)?;
    let n = frame_logliks.nrows();
    let (n_units, s_per) = (view.n_units, view.states_per_unit);
    let n_states = view.n_states();
    let last = s_per - 1;
    let e = state_emissions(view, frame_logliks);
    let neg = f64::NEG_INFINITY;

    let mut delta = Array2::from_elem((n, n_states), neg);
    let mut back = vec![Back::Start; n * n_states];
    for u in 0..n_units {
        delta[[0, u * s_per]] = view.log_entry[u] + e[[0, u * s_per]];
    }
    let best_exit = |delta: &Array2<f64>, t: usize| {
        let mut best = (neg, usize::MAX);
        for u in 0..n_units {
            let f = u * s_per + last;
            let v = delta[[t, f]] + view.log_advance[f];
            if v > best.0 || best.1 == usize::MAX {
                best = (v, u);
            }
        }
        best
    };
    for t in 1..n {
        let (exit, exit_unit) = best_exit(&delta, t - 1);
        for u in 0..n_units {
            for s in 0..s_per {
                let i = u * s_per + s;
                let stay = delta[[t - 1, i]] + view.log_self[i];
                let (best, how) = if s > 0 {
                    let adv = delta[[t - 1, i - 1]] + view.log_advance[i - 1];
                    // predecessor (u, s-1) sorts before (u, s)
                    if adv >= stay {
                        (adv, Back::Advance)
                    } else {
                        (stay, Back::Stay)
                    }
                } else {
                    let enter = exit + view.log_entry[u];
                    let enter_first = (exit_unit, last) < (u, 0);
                    if enter > stay || (enter == stay && enter_first) {
                        (enter, Back::Enter(exit_unit))
                    } else {
                        (stay, Back::Stay)
                    }
                };
                delta[[t, i]] = best + e[[t, i]];
                back[t * n_states + i] = how;
            }
        }
    }
    let (score, end_unit) = best_exit(&delta, n - 1);
    if !score.is_finite() {
        return Err(Error::NonFinite("Viterbi score".into()));
    }
    let mut states = vec![0; n];
    let mut entries = vec![false; n];
    let mut cur = end_unit * s_per + last;
    for t in (0..n).rev() {
        states[t] = cur;
        match back[t * n_states + cur] {
            Back::Start => entries[t] = true,
            Back::Stay => {}
            Back::Advance => cur -= 1,
            Back::Enter(from) => {
                entries[t] = true;
                cur = from * s_per + last;
            }
        }
    }
    Ok(ViterbiPath {
        states,
        entries,
        score,
    })
}

/// Converts a path into 1-based tokens and state labels.
pub fn path_to_tokens(
    utterance_id: &str,
    path: &ViterbiPath,
    states_per_unit: usize,
) -> UtteranceTokens {
    let n = path.states.len();
    let states: Vec<StateLabel> = path
        .states
        .iter()
        .map(|&i| StateLabel {
            unit: i / states_per_unit + 1,
            state: i % states_per_unit + 1,
        })
        .collect();
    let mut tokens = Vec::new();
    let mut start = 0;
    for t in 1..=n {
        if t == n || path.entries[t] {
            tokens.push(Token {
                unit: states[start].unit,
                start,
                end: t,
            });
            start = t;
        }
    }
    UtteranceTokens {
        utterance_id: utterance_id.to_string(),
        tokens,
        states,
    }
}

fn check_dim(model: &PhoneLoopModel, fs: &FeatureSet) -> Result<()> {
    if !fs.is_empty() && fs.dim() != model.config.dim {
        return Err(Error::DimMismatch {
            expected: model.config.dim,
            found: fs.dim(),
        });
    }
    Ok(())
}

pub fn viterbi_tokenize(model: &PhoneLoopModel, fs: &FeatureSet) -> Result<Tokenization> {
    check_dim(model, fs)?;
    let view = model.unified_view();
    let terms = model.emission_terms();
    let utterances = fs
        .utterances()
        .par_iter()
        .map(|utt| {
            let ll = terms.frame_loglik(&utt.features)?;
            let path = viterbi_path(&view, &ll)?;
            Ok(path_to_tokens(&utt.id, &path, model.config.states_per_unit))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Tokenization { utterances })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PosteriorLevel {
    Unit,
    State,
}

impl std::str::FromStr for PosteriorLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unit" => Ok(PosteriorLevel::Unit),
            "state" => Ok(PosteriorLevel::State),
            other => Err(Error::Invalid(format!("unknown posterior level {other:?}"))),
        }
    }
}

/// Per-frame posteriors for every utterance, stored as a feature set so that
/// it can be written as a FEAT1 archive.
#[derive(Debug, Clone, PartialEq)]
pub struct Posteriorgram {
    pub level: PosteriorLevel,
    pub frames: FeatureSet,
}

pub fn posteriorgram(
    model: &PhoneLoopModel,
    fs: &FeatureSet,
    level: PosteriorLevel,
) -> Result<Posteriorgram> {
    check_dim(model, fs)?;
    let view = model.unified_view();
    let terms = model.emission_terms();
    let s_per = model.config.states_per_unit;
    let utterances = fs
        .utterances()
        .par_iter()
        .map(|utt| {
            let ll = terms.frame_loglik(&utt.features)?;
            let fb = forward_backward(&view, &ll)?;
            let mut post = match level {
                PosteriorLevel::State => fb.state_post,
                PosteriorLevel::Unit => {
                    let (n, _) = fb.state_post.dim();
                    let mut p = Array2::zeros((n, model.config.truncation));
                    for (t, row) in fb.state_post.rows().into_iter().enumerate() {
                        for (i, v) in row.iter().enumerate() {
                            p[[t, i / s_per]] += v;
                        }
                    }
                    p
                }
            };
            for mut row in post.axis_iter_mut(Axis(0)) {
                let total: f64 = row.sum();
                row.mapv_inplace(|v| v / total);
            }
            Ok(Utterance::new(utt.id.clone(), post))
        })
        .collect::<Result<Vec<_>>>()?;
    let frames = FeatureSet::new(utterances, fs.frame_period_s())?.with_sides(fs.side_map().clone())?;
    Ok(Posteriorgram { level, frames })
}

/// Number of distinct units used and the token count of each.
pub fn unit_inventory(tok: &Tokenization) -> (usize, BTreeMap<usize, usize>) {
    let mut hist = BTreeMap::new();
    for u in tok.utterances() {
        for unit in u.units() {
            *hist.entry(unit).or_insert(0) += 1;
        }
    }
    (hist.len(), hist)
}
