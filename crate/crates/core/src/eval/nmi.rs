//! Normalized mutual information between discovered units and reference
//! phones. Every hypothesis token is aligned to the reference token whose
//! center frame is closest, and the aligned (phone, unit) pairs are counted
//! once per token.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use crate::corpus::ReferenceTranscript;
use crate::decode::Tokenization;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignedPair {
    pub utterance_id: String,
    pub ref_label: String,
    pub hyp_unit: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AlignedPairs {
    pub pairs: Vec<AlignedPair>,
    /// Contingency counts keyed by `(ref_label, hyp_unit)`.
    pub counts: BTreeMap<(String, usize), usize>,
}

impl AlignedPairs {
    pub fn from_pairs(pairs: Vec<AlignedPair>) -> Self {
        let mut counts = BTreeMap::new();
        for p in &pairs {
            *counts.entry((p.ref_label.clone(), p.hyp_unit)).or_insert(0) += 1;
        }
        AlignedPairs { pairs, counts }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Dense table with rows ordered by reference label and columns by unit.
    pub fn table(&self) -> Vec<Vec<f64>> {
        let refs: BTreeSet<&String> = self.counts.keys().map(|(r, _)| r).collect();
        let hyps: BTreeSet<usize> = self.counts.keys().map(|(_, h)| *h).collect();
        let col: BTreeMap<usize, usize> = hyps.iter().enumerate().map(|(j, h)| (*h, j)).collect();
        let row: BTreeMap<&String, usize> = refs.iter().enumerate().map(|(i, r)| (*r, i)).collect();
        let mut table = vec![vec![0.0; hyps.len()]; refs.len()];
        for ((r, h), c) in &self.counts {
            table[row[r]][col[h]] = *c as f64;
        }
        table
    }
}

/// `2 * center` so that half-frame centers compare exactly.
fn doubled_center(start: usize, end: usize) -> usize {
    start + end
}

pub fn align_tokens(hyp: &Tokenization, reference: &ReferenceTranscript) -> Result<AlignedPairs> {
    let per_utt = hyp
        .utterances()
        .par_iter()
        .map(|u| {
            let refs = reference
                .get(&u.utterance_id)
                .filter(|r| !r.is_empty())
                .ok_or_else(|| {
                    Error::Invalid(format!("utterance {:?} has no reference transcript", u.utterance_id))
                })?;
            let centers: Vec<usize> = refs.iter().map(|r| doubled_center(r.start, r.end)).collect();
            let pairs = u
                .tokens
                .iter()
                .map(|tok| {
                    let c = doubled_center(tok.start, tok.end);
                    let after = centers.partition_point(|&rc| rc < c);
                    let best = if after == 0 {
                        0
                    } else if after == centers.len() {
                        after - 1
                    } else if c - centers[after - 1] <= centers[after] - c {
                        after - 1
                    } else {
                        after
                    };
                    AlignedPair {
                        utterance_id: u.utterance_id.clone(),
                        ref_label: refs[best].label.clone(),
                        hyp_unit: tok.unit,
                    }
                })
                .collect::<Vec<_>>();
            Ok(pairs)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AlignedPairs::from_pairs(per_utt.into_iter().flatten().collect()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NmiReport {
    pub mi: f64,
    pub h_ref: f64,
    pub h_hyp: f64,
    pub nmi: f64,
    pub n_pairs: usize,
    pub n_hyp_units: usize,
    pub n_ref_labels: usize,
}

fn entropy(marginal: &[f64], total: f64) -> f64 {
    marginal
        .iter()
        .filter(|&&c| c > 0.0)
        .map(|&c| {
            let p = c / total;
            -p * p.ln()
        })
        .sum()
}

/// Plug-in mutual information of a contingency table with reference labels
/// as rows, normalized by the reference entropy.
pub fn nmi_from_table(table: &[Vec<f64>]) -> Result<NmiReport> {
    let n_cols = table.first().map_or(0, Vec::len);
    if table.iter().any(|r| r.len() != n_cols) {
        return Err(Error::Shape("ragged contingency table".into()));
    }
    if table.iter().flatten().any(|&c| !(c >= 0.0) || !c.is_finite()) {
        return Err(Error::Invalid("contingency counts must be finite and non-negative".into()));
    }
    let total: f64 = table.iter().flatten().sum();
    if total <= 0.0 {
        return Err(Error::Invalid("no aligned pairs".into()));
    }
    let rows: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<f64> = (0..n_cols).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let h_ref = entropy(&rows, total);
    let n_ref_labels = rows.iter().filter(|&&c| c > 0.0).count();
    if n_ref_labels < 2 {
        return Err(Error::Invalid(
            "a single reference label has zero entropy; NMI is undefined".into(),
        ));
    }
    // MI = H(ref) - H(ref | hyp); a deterministic hyp -> ref map gives a
    // conditional entropy of exactly zero and a constant hyp gives exactly H(ref)
    let mut h_cond = 0.0;
    for (j, &cj) in cols.iter().enumerate() {
        if cj > 0.0 {
            let column: Vec<f64> = table.iter().map(|r| r[j]).collect();
            h_cond += cj / total * entropy(&column, cj);
        }
    }
    let mi = (h_ref - h_cond).max(0.0);
    Ok(NmiReport {
        mi,
        h_ref,
        h_hyp: entropy(&cols, total),
        nmi: (mi / h_ref).clamp(0.0, 1.0),
        n_pairs: total.round() as usize,
        n_hyp_units: cols.iter().filter(|&&c| c > 0.0).count(),
        n_ref_labels,
    })
}

pub fn nmi(pairs: &AlignedPairs) -> Result<NmiReport> {
    if pairs.is_empty() {
        return Err(Error::Invalid("no aligned pairs".into()));
    }
    let mut report = nmi_from_table(&pairs.table())?;
    report.n_pairs = pairs.len();
    Ok(report)
}

impl NmiReport {
    pub fn to_report(&self) -> Vec<(&'static str, String)> {
        vec![
            ("mi", format!("{:.6}", self.mi)),
            ("h_ref", format!("{:.6}", self.h_ref)),
            ("h_hyp", format!("{:.6}", self.h_hyp)),
            ("nmi", format!("{:.6}", self.nmi)),
            ("nmi_percent", format!("{:.2}", 100.0 * self.nmi)),
            ("n_pairs", self.n_pairs.to_string()),
            ("n_hyp_units", self.n_hyp_units.to_string()),
            ("n_ref_labels", self.n_ref_labels.to_string()),
        ]
    }
}
