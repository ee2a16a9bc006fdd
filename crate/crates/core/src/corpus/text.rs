//! Tab-separated text formats for transcripts, word segments, document lists
//! and side maps.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{Document, DocumentSet, LabeledSpan, ReferenceTranscript, WordSegment};
use crate::error::{Error, Result};

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|(i, l)| (i + 1, l.to_string()))
        .collect())
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn parse_span_line(path: &Path, line: usize, text: &str) -> Result<(String, LabeledSpan)> {
    let fields: Vec<&str> = text.split('\t').collect();
    if fields.len() != 4 {
        return Err(parse_err(
            path,
            line,
            format!("expected 4 tab-separated fields, found {}", fields.len()),
        ));
    }
    let frame = |s: &str, what: &str| {
        s.trim()
            .parse::<usize>()
            .map_err(|_| parse_err(path, line, format!("bad {what} frame {s:?}")))
    };
    let start = frame(fields[1], "start")?;
    let end = frame(fields[2], "end")?;
    if start >= end {
        return Err(parse_err(path, line, format!("start {start} >= end {end}")));
    }
    Ok((fields[0].to_string(), LabeledSpan::new(fields[3], start, end)))
}

/// Reads `utt<TAB>start<TAB>end<TAB>label` lines. Spans are sorted by start
/// within each utterance before validation.
pub fn read_transcript(path: impl AsRef<Path>) -> Result<ReferenceTranscript> {
    let path = path.as_ref();
    let mut map: BTreeMap<String, Vec<LabeledSpan>> = BTreeMap::new();
    for (line, text) in read_lines(path)? {
        let (utt, span) = parse_span_line(path, line, &text)?;
        map.entry(utt).or_default().push(span);
    }
    for spans in map.values_mut() {
        spans.sort_by_key(|s| (s.start, s.end));
    }
    ReferenceTranscript::from_map(map).map_err(|e| parse_err(path, 0, e.to_string()))
}

pub fn write_transcript(path: impl AsRef<Path>, transcript: &ReferenceTranscript) -> Result<()> {
    let mut out = String::new();
    for (utt, spans) in transcript.iter() {
        for s in spans {
            writeln!(out, "{utt}\t{}\t{}\t{}", s.start, s.end, s.label).unwrap();
        }
    }
    let path = path.as_ref();
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_word_segments(path: impl AsRef<Path>) -> Result<Vec<WordSegment>> {
    let path = path.as_ref();
    read_lines(path)?
        .into_iter()
        .map(|(line, text)| {
            let (utt, span) = parse_span_line(path, line, &text)?;
            Ok(WordSegment {
                utterance_id: utt,
                start: span.start,
                end: span.end,
                word_type: span.label,
            })
        })
        .collect()
}

pub fn write_word_segments(path: impl AsRef<Path>, segments: &[WordSegment]) -> Result<()> {
    let mut out = String::new();
    for s in segments {
        writeln!(out, "{}\t{}\t{}\t{}", s.utterance_id, s.start, s.end, s.word_type).unwrap();
    }
    let path = path.as_ref();
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads `doc_id<TAB>topic_or_-<TAB>utt1,utt2,...` lines.
pub fn read_documents(path: impl AsRef<Path>) -> Result<DocumentSet> {
    let path = path.as_ref();
    let mut docs = Vec::new();
    for (line, text) in read_lines(path)? {
        let fields: Vec<&str> = text.split('\t').collect();
        if fields.len() != 3 {
            return Err(parse_err(
                path,
                line,
                format!("expected 3 tab-separated fields, found {}", fields.len()),
            ));
        }
        let topic = match fields[1] {
            "-" => None,
            t => Some(t.to_string()),
        };
        let utterance_ids = fields[2]
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(String::from)
            .collect();
        docs.push(Document {
            id: fields[0].to_string(),
            topic,
            utterance_ids,
        });
    }
    DocumentSet::new(docs).map_err(|e| parse_err(path, 0, e.to_string()))
}

pub fn write_documents(path: impl AsRef<Path>, docs: &DocumentSet) -> Result<()> {
    let mut out = String::new();
    for d in docs.documents() {
        writeln!(
            out,
            "{}\t{}\t{}",
            d.id,
            d.topic.as_deref().unwrap_or("-"),
            d.utterance_ids.join(",")
        )
        .unwrap();
    }
    let path = path.as_ref();
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads `utt_id<TAB>side_id` lines.
pub fn read_sides(path: impl AsRef<Path>) -> Result<BTreeMap<String, String>> {
    let path = path.as_ref();
    let mut map = BTreeMap::new();
    for (line, text) in read_lines(path)? {
        let (utt, side) = text
            .split_once('\t')
            .ok_or_else(|| parse_err(path, line, "expected utt_id<TAB>side_id"))?;
        if map.insert(utt.to_string(), side.trim().to_string()).is_some() {
            return Err(parse_err(path, line, format!("duplicate utterance {utt:?}")));
        }
    }
    Ok(map)
}

pub fn write_sides(path: impl AsRef<Path>, sides: &BTreeMap<String, String>) -> Result<()> {
    let mut out = String::new();
    for (utt, side) in sides {
        writeln!(out, "{utt}\t{side}").unwrap();
    }
    let path = path.as_ref();
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
