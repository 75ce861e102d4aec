//! The sourced datum and dot-path addressing into its content.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::{Canonical, CanonicalDoc};

/// A record as served by a source (X), or a filtered derivative (X′).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataRecord {
    pub source_id: String,
    pub subject_id: String,
    pub content: CanonicalDoc,
    pub content_type: String,
    /// Unix seconds; the source's timestamp for this record.
    pub fetched_at: i64,
}

impl Canonical for DataRecord {}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PathError {
    #[error("empty path")]
    Empty,
    #[error("empty segment in path {0:?}")]
    EmptySegment(String),
}

/// Dot-separated object keys with non-negative array indices. A segment is
/// read as an index when the value it addresses is an array, and as a key
/// otherwise. No wildcards.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ContentPath {
    raw: String,
    segments: Vec<String>,
}

impl ContentPath {
    pub fn parse(raw: &str) -> Result<Self, PathError> {
        if raw.is_empty() {
            return Err(PathError::Empty);
        }
        let segments: Vec<String> = raw.split('.').map(str::to_string).collect();
        if segments.iter().any(String::is_empty) {
            return Err(PathError::EmptySegment(raw.to_string()));
        }
        Ok(ContentPath {
            raw: raw.to_string(),
            segments,
        })
    }

    pub fn as_str(&self) -> &str {
        &self.raw
    }

    pub fn segments(&self) -> &[String] {
        &self.segments
    }

    pub fn get<'a>(&self, doc: &'a CanonicalDoc) -> Option<&'a CanonicalDoc> {
        self.segments
            .iter()
            .try_fold(doc, |node, seg| step(node, seg))
    }

    pub fn get_mut<'a>(&self, doc: &'a mut CanonicalDoc) -> Option<&'a mut CanonicalDoc> {
        let mut node = doc;
        for seg in &self.segments {
            node = match node {
                CanonicalDoc::Object(map) => map.get_mut(seg)?,
                CanonicalDoc::Array(items) => items.get_mut(parse_index(seg)?)?,
                _ => return None,
            };
        }
        Some(node)
    }

    /// Writes `value` at this path inside `target`, creating objects along
    /// the way. Array segments create arrays padded with nulls. Returns false
    /// when an existing scalar blocks the path.
    pub fn insert(&self, target: &mut CanonicalDoc, value: CanonicalDoc, shape: &CanonicalDoc) -> bool {
        insert_at(target, &self.segments, value, shape)
    }
}

impl std::fmt::Display for ContentPath {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.raw)
    }
}

fn parse_index(seg: &str) -> Option<usize> {
    if seg.is_empty() || (seg.len() > 1 && seg.starts_with('0')) {
        return None;
    }
    if !seg.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    seg.parse().ok()
}

fn step<'a>(node: &'a CanonicalDoc, seg: &str) -> Option<&'a CanonicalDoc> {
    match node {
        CanonicalDoc::Object(map) => map.get(seg),
        CanonicalDoc::Array(items) => items.get(parse_index(seg)?),
        _ => None,
    }
}

// `shape` is the source document at the same depth; it decides whether a
// segment creates an object or an array.
fn insert_at(target: &mut CanonicalDoc, segs: &[String], value: CanonicalDoc, shape: &CanonicalDoc) -> bool {
    let Some((head, rest)) = segs.split_first() else {
        *target = value;
        return true;
    };
    let child_shape = step(shape, head).cloned().unwrap_or_default();
    match shape {
        CanonicalDoc::Array(_) => {
            let Some(idx) = parse_index(head) else { return false };
            if matches!(target, CanonicalDoc::Null) {
                *target = CanonicalDoc::Array(Vec::new());
            }
            let CanonicalDoc::Array(items) = target else { return false };
            if items.len() <= idx {
                items.resize(idx + 1, CanonicalDoc::Null);
            }
            insert_at(&mut items[idx], rest, value, &child_shape)
        }
        _ => {
            if matches!(target, CanonicalDoc::Null) {
                *target = CanonicalDoc::object();
            }
            let CanonicalDoc::Object(map) = target else { return false };
            let slot = map.entry(head.clone()).or_insert(CanonicalDoc::Null);
            insert_at(slot, rest, value, &child_shape)
        }
    }
}
