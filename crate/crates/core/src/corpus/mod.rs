//! Feature sets, transcripts, word segments and document lists, together with
//! the feature-level transforms (CMVN, splicing) and a synthetic corpus
//! generator with known ground truth.

mod archive;
mod cmvn;
mod splice;
pub mod synth;
mod text;

use std::collections::{BTreeMap, HashMap};

use ndarray::Array2;

use crate::error::{Error, Result};

pub use archive::{decode_archive, encode_archive, read_feature_archive, write_feature_archive};
pub use cmvn::{apply_cmvn, CmvnWarning, VARIANCE_FLOOR};
pub use splice::{splice_features, splice_frames};
pub use text::{
    read_documents, read_sides, read_transcript, read_word_segments, write_documents,
    write_sides, write_transcript, write_word_segments,
};

/// Frame shift assumed when no frame period is supplied.
pub const DEFAULT_FRAME_PERIOD_S: f64 = 0.010;

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    /// frames × dim
    pub features: Array2<f64>,
}

impl Utterance {
    pub fn new(id: impl Into<String>, features: Array2<f64>) -> Self {
        Utterance {
            id: id.into(),
            features,
        }
    }

    pub fn n_frames(&self) -> usize {
        self.features.nrows()
    }
}

/// An ordered collection of utterances sharing one feature dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    utterances: Vec<Utterance>,
    frame_period_s: f64,
    side_of: BTreeMap<String, String>,
    index: HashMap<String, usize>,
}

impl FeatureSet {
    pub fn new(utterances: Vec<Utterance>, frame_period_s: f64) -> Result<Self> {
        if !(frame_period_s > 0.0 && frame_period_s.is_finite()) {
            return Err(Error::Invalid(format!(
                "frame period must be positive, got {frame_period_s}"
            )));
        }
        let mut index = HashMap::with_capacity(utterances.len());
        let dim = utterances.first().map(|u| u.features.ncols());
        for (i, utt) in utterances.iter().enumerate() {
            if utt.n_frames() == 0 {
                return Err(Error::Invalid(format!("utterance {:?} has no frames", utt.id)));
            }
            if let Some(dim) = dim {
                if utt.features.ncols() != dim {
                    return Err(Error::DimMismatch {
                        expected: dim,
                        found: utt.features.ncols(),
                    });
                }
            }
            if index.insert(utt.id.clone(), i).is_some() {
                return Err(Error::Invalid(format!("duplicate utterance id {:?}", utt.id)));
            }
        }
        Ok(FeatureSet {
            utterances,
            frame_period_s,
            side_of: BTreeMap::new(),
            index,
        })
    }

    /// Attaches a side (CMVN grouping) map. Utterances missing from the map
    /// form their own group.
    pub fn with_sides(mut self, side_of: BTreeMap<String, String>) -> Result<Self> {
        for id in side_of.keys() {
            if !self.index.contains_key(id) {
                return Err(Error::Invalid(format!(
                    "side map references unknown utterance {id:?}"
                )));
            }
        }
        self.side_of = side_of;
        Ok(self)
    }

    pub fn utterances(&self) -> &[Utterance] {
        &self.utterances
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    /// Feature dimension; zero for an empty set.
    pub fn dim(&self) -> usize {
        self.utterances.first().map_or(0, |u| u.features.ncols())
    }

    pub fn frame_period_s(&self) -> f64 {
        self.frame_period_s
    }

    pub fn side_map(&self) -> &BTreeMap<String, String> {
        &self.side_of
    }

    pub fn side_of<'a>(&'a self, utt_id: &'a str) -> &'a str {
        self.side_of.get(utt_id).map_or(utt_id, String::as_str)
    }

    pub fn get(&self, utt_id: &str) -> Option<&Utterance> {
        self.index.get(utt_id).map(|&i| &self.utterances[i])
    }

    pub fn position(&self, utt_id: &str) -> Option<usize> {
        self.index.get(utt_id).copied()
    }

    pub fn total_frames(&self) -> usize {
        self.utterances.iter().map(Utterance::n_frames).sum()
    }

    /// Builds a new set with the same ids, sides and frame period by mapping
    /// every feature matrix.
    pub fn map_features<F>(&self, mut f: F) -> Result<FeatureSet>
    where
        F: FnMut(&Utterance) -> Array2<f64>,
    {
        let utterances = self
            .utterances
            .iter()
            .map(|u| Utterance::new(u.id.clone(), f(u)))
            .collect();
        FeatureSet::new(utterances, self.frame_period_s)?.with_sides(self.side_of.clone())
    }

    /// Global per-dimension mean and population variance over all frames.
    pub fn global_mean_var(&self) -> (Vec<f64>, Vec<f64>) {
        let dim = self.dim();
        let mut sum = vec![0.0; dim];
        let mut sq = vec![0.0; dim];
        let n = self.total_frames() as f64;
        for utt in &self.utterances {
            for row in utt.features.rows() {
                for (d, &x) in row.iter().enumerate() {
                    sum[d] += x;
                    sq[d] += x * x;
                }
            }
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let var = sq
            .iter()
            .zip(&mean)
            .map(|(s, m)| (s / n - m * m).max(0.0))
            .collect();
        (mean, var)
    }
}

/// One labelled span of frames `[start, end)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledSpan {
    pub label: String,
    pub start: usize,
    pub end: usize,
}

impl LabeledSpan {
    pub fn new(label: impl Into<String>, start: usize, end: usize) -> Self {
        LabeledSpan {
            label: label.into(),
            start,
            end,
        }
    }
}

/// Per-utterance, time-ordered, non-overlapping labelled spans.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReferenceTranscript {
    tokens: BTreeMap<String, Vec<LabeledSpan>>,
}

impl ReferenceTranscript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_map(tokens: BTreeMap<String, Vec<LabeledSpan>>) -> Result<Self> {
        let mut t = ReferenceTranscript::new();
        for (utt, spans) in tokens {
            t.insert(utt, spans)?;
        }
        Ok(t)
    }

    pub fn insert(&mut self, utt_id: impl Into<String>, spans: Vec<LabeledSpan>) -> Result<()> {
        let utt_id = utt_id.into();
        let mut prev_end = 0;
        for span in &spans {
            if span.start >= span.end {
                return Err(Error::Invalid(format!(
                    "{utt_id}: empty span [{}, {}) for {:?}",
                    span.start, span.end, span.label
                )));
            }
            if span.start < prev_end {
                return Err(Error::Invalid(format!(
                    "{utt_id}: span [{}, {}) overlaps or precedes the previous span",
                    span.start, span.end
                )));
            }
            prev_end = span.end;
        }
        self.tokens.insert(utt_id, spans);
        Ok(())
    }

    pub fn get(&self, utt_id: &str) -> Option<&[LabeledSpan]> {
        self.tokens.get(utt_id).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[LabeledSpan])> {
        self.tokens.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct WordSegment {
    pub utterance_id: String,
    pub start: usize,
    pub end: usize,
    pub word_type: String,
}

impl WordSegment {
    pub fn n_frames(&self) -> usize {
        self.end - self.start
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub topic: Option<String>,
    pub utterance_ids: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DocumentSet {
    documents: Vec<Document>,
}

impl DocumentSet {
    pub fn new(documents: Vec<Document>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for doc in &documents {
            if !seen.insert(doc.id.as_str()) {
                return Err(Error::Invalid(format!("duplicate document id {:?}", doc.id)));
            }
        }
        Ok(DocumentSet { documents })
    }

    /// Checks that every referenced utterance exists in `fs`.
    pub fn validate_against(&self, fs: &FeatureSet) -> Result<()> {
        for doc in &self.documents {
            for utt in &doc.utterance_ids {
                if fs.get(utt).is_none() {
                    return Err(Error::Invalid(format!(
                        "document {:?} references unknown utterance {utt:?}",
                        doc.id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }
}
