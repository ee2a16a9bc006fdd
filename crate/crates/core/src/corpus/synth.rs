//! Synthetic corpora drawn from a known phone loop.
//!
//! Every unit is a left-to-right chain of diagonal Gaussian states with unit
//! variance. Words are fixed unit sequences from a small lexicon; each
//! document has a topic that skews which words its utterances use. Random
//! single-unit fillers between words keep unit co-occurrence from being
//! fully determined by the lexicon.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{
    Document, DocumentSet, FeatureSet, LabeledSpan, ReferenceTranscript, Utterance, WordSegment,
    DEFAULT_FRAME_PERIOD_S,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n_true_units: usize,
    pub states_per_unit: usize,
    pub dim: usize,
    pub n_utterances: usize,
    pub mean_frames_per_state: f64,
    /// Standard deviation of the state means around the origin, in units of
    /// the (unit) emission standard deviation.
    pub separation: f64,
    pub n_topics: usize,
    pub docs_per_topic: usize,
    pub n_word_types: usize,
    pub units_per_word: usize,
    pub words_per_utterance: usize,
    /// Probability that a word is drawn from its document topic's own words.
    pub topic_purity: f64,
    /// Probability of a random filler unit after each word.
    pub filler_prob: f64,
    pub frame_period_s: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_true_units: 8,
            states_per_unit: 3,
            dim: 13,
            n_utterances: 50,
            mean_frames_per_state: 3.0,
            separation: 5.0,
            n_topics: 2,
            docs_per_topic: 5,
            n_word_types: 12,
            units_per_word: 4,
            words_per_utterance: 4,
            topic_purity: 0.9,
            filler_prob: 0.5,
            frame_period_s: DEFAULT_FRAME_PERIOD_S,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Invalid(format!("synth spec: {m}")));
        if self.n_true_units < 2 {
            return fail("n_true_units must be at least 2");
        }
        if self.states_per_unit == 0 || self.dim == 0 || self.n_utterances == 0 {
            return fail("states_per_unit, dim and n_utterances must be positive");
        }
        if !(self.mean_frames_per_state >= 1.0) {
            return fail("mean_frames_per_state must be at least 1");
        }
        if !(self.separation > 0.0) {
            return fail("separation must be positive");
        }
        if self.n_word_types == 0 || self.units_per_word == 0 || self.words_per_utterance == 0 {
            return fail("lexicon and utterance lengths must be positive");
        }
        if !(0.0..=1.0).contains(&self.topic_purity) || !(0.0..=1.0).contains(&self.filler_prob) {
            return fail("probabilities must lie in [0, 1]");
        }
        if self.n_topics > 0 {
            if self.docs_per_topic == 0 {
                return fail("docs_per_topic must be positive when topics are requested");
            }
            if self.n_utterances < self.n_topics * self.docs_per_topic {
                return fail("need at least one utterance per document");
            }
        }
        if !(self.frame_period_s > 0.0) {
            return fail("frame period must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub features: FeatureSet,
    /// True unit spans, labelled `p<unit>` (1-based).
    pub phones: ReferenceTranscript,
    /// Word spans with their word type labels.
    pub words: ReferenceTranscript,
    pub segments: Vec<WordSegment>,
    pub documents: DocumentSet,
    /// Emission means, indexed `unit * states_per_unit + state`.
    pub state_means: Vec<Array1<f64>>,
    /// Unit sequence of each lexicon word (0-based unit ids).
    pub lexicon: Vec<Vec<usize>>,
}

pub fn word_type_name(i: usize) -> String {
    format!("wordtype{i:02}")
}

fn geometric_duration(rng: &mut ChaCha8Rng, mean: f64) -> usize {
    let p = 1.0 / mean;
    let mut d = 1;
    while rng.random::<f64>() >= p {
        d += 1;
    }
    d
}

fn pick_unit_avoiding(rng: &mut ChaCha8Rng, n: usize, avoid: Option<usize>) -> usize {
    loop {
        let u = rng.random_range(0..n);
        if Some(u) != avoid {
            return u;
        }
    }
}

pub fn synth_corpus(spec: &SynthSpec, seed: u64) -> Result<SynthCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_states = spec.n_true_units * spec.states_per_unit;
    let state_means: Vec<Array1<f64>> = (0..n_states)
        .map(|_| {
            Array1::from_shape_fn(spec.dim, |_| {
                spec.separation * rng.sample::<f64, _>(StandardNormal)
            })
        })
        .collect();

    let lexicon: Vec<Vec<usize>> = (0..spec.n_word_types)
        .map(|_| {
            let mut units = Vec::with_capacity(spec.units_per_word);
            for _ in 0..spec.units_per_word {
                let u = pick_unit_avoiding(&mut rng, spec.n_true_units, units.last().copied());
                units.push(u);
            }
            units
        })
        .collect();

    let n_docs = spec.n_topics * spec.docs_per_topic;
    let doc_of = |utt: usize| (n_docs > 0).then(|| utt % n_docs);
    // document d has topic d / docs_per_topic
    let topic_of_doc = |d: usize| d / spec.docs_per_topic.max(1);
    let topic_words: Vec<Vec<usize>> = (0..spec.n_topics.max(1))
        .map(|k| {
            (0..spec.n_word_types)
                .filter(|w| spec.n_topics == 0 || w % spec.n_topics == k)
                .collect()
        })
        .collect();

    let mut utterances = Vec::with_capacity(spec.n_utterances);
    let mut phones = BTreeMap::new();
    let mut words = BTreeMap::new();
    let mut segments = Vec::new();
    let mut sides = BTreeMap::new();
    let mut doc_utts: Vec<Vec<String>> = vec![Vec::new(); n_docs];

    for i in 0..spec.n_utterances {
        let utt_id = format!("utt{i:04}");
        let topic = doc_of(i).map(topic_of_doc);
        // unit sequence with word boundaries
        let mut units: Vec<usize> = Vec::new();
        let mut word_spans: Vec<(usize, usize, usize)> = Vec::new(); // (word, first unit, end unit)
        for _ in 0..spec.words_per_utterance {
            let own = match topic {
                Some(k) if !topic_words[k].is_empty() => {
                    rng.random::<f64>() < spec.topic_purity
                }
                _ => false,
            };
            let w = if own {
                let pool = &topic_words[topic.unwrap()];
                pool[rng.random_range(0..pool.len())]
            } else {
                rng.random_range(0..spec.n_word_types)
            };
            let first = units.len();
            units.extend_from_slice(&lexicon[w]);
            word_spans.push((w, first, units.len()));
            if rng.random::<f64>() < spec.filler_prob {
                let u = pick_unit_avoiding(&mut rng, spec.n_true_units, units.last().copied());
                units.push(u);
            }
        }

        let mut unit_bounds = Vec::with_capacity(units.len() + 1);
        let mut rows: Vec<f64> = Vec::new();
        let mut n_frames = 0;
        unit_bounds.push(0);
        for &u in &units {
            for s in 0..spec.states_per_unit {
                let mean = &state_means[u * spec.states_per_unit + s];
                for _ in 0..geometric_duration(&mut rng, spec.mean_frames_per_state) {
                    rows.extend(mean.iter().map(|m| m + rng.sample::<f64, _>(StandardNormal)));
                    n_frames += 1;
                }
            }
            unit_bounds.push(n_frames);
        }
        let features = Array2::from_shape_vec((n_frames, spec.dim), rows).expect("row-major");

        let phone_spans = units
            .iter()
            .enumerate()
            .map(|(k, &u)| LabeledSpan::new(format!("p{}", u + 1), unit_bounds[k], unit_bounds[k + 1]))
            .collect();
        let word_labels: Vec<LabeledSpan> = word_spans
            .iter()
            .map(|&(w, a, b)| LabeledSpan::new(word_type_name(w), unit_bounds[a], unit_bounds[b]))
            .collect();
        for span in &word_labels {
            segments.push(WordSegment {
                utterance_id: utt_id.clone(),
                start: span.start,
                end: span.end,
                word_type: span.label.clone(),
            });
        }
        phones.insert(utt_id.clone(), phone_spans);
        words.insert(utt_id.clone(), word_labels);
        if let Some(d) = doc_of(i) {
            sides.insert(utt_id.clone(), format!("doc{d:03}"));
            doc_utts[d].push(utt_id.clone());
        }
        utterances.push(Utterance::new(utt_id, features));
    }

    let documents = DocumentSet::new(
        doc_utts
            .into_iter()
            .enumerate()
            .map(|(d, utterance_ids)| Document {
                id: format!("doc{d:03}"),
                topic: Some(format!("topic{}", topic_of_doc(d))),
                utterance_ids,
            })
            .collect(),
    )?;
    let features = FeatureSet::new(utterances, spec.frame_period_s)?.with_sides(sides)?;
    Ok(SynthCorpus {
        features,
        phones: ReferenceTranscript::from_map(phones)?,
        words: ReferenceTranscript::from_map(words)?,
        segments,
        documents,
        state_means,
        lexicon,
    })
}
