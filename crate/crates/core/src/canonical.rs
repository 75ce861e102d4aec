//! Canonical document model and its deterministic text encoding.
//!
//! The encoding is a strict JSON subset: object keys sorted bytewise, no
//! insignificant whitespace, signed 64-bit integers only, UTF-8 strings with a
//! fixed escape set. Any byte string accepted by [`decode`] re-encodes to
//! itself; anything else is rejected.

use std::collections::BTreeMap;
use std::fmt;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::crypto::{digest, Digest};

const MAX_DEPTH: usize = 128;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CanonicalError {
    #[error("non-canonical value: {0}")]
    NonCanonicalValue(String),
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("input is valid but not in canonical form")]
    NotCanonical,
    #[error("schema error: {0}")]
    Schema(String),
}

/// A canonical document tree. Floats are unrepresentable.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub enum CanonicalDoc {
    #[default]
    Null,
    Bool(bool),
    Int(i64),
    Str(String),
    Array(Vec<CanonicalDoc>),
    Object(BTreeMap<String, CanonicalDoc>),
}

impl CanonicalDoc {
    pub fn object() -> Self {
        CanonicalDoc::Object(BTreeMap::new())
    }

    pub fn as_object(&self) -> Option<&BTreeMap<String, CanonicalDoc>> {
        match self {
            CanonicalDoc::Object(map) => Some(map),
            _ => None,
        }
    }

    pub fn as_array(&self) -> Option<&[CanonicalDoc]> {
        match self {
            CanonicalDoc::Array(items) => Some(items),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            CanonicalDoc::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            CanonicalDoc::Int(v) => Some(*v),
            _ => None,
        }
    }

    pub fn get(&self, key: &str) -> Option<&CanonicalDoc> {
        self.as_object().and_then(|m| m.get(key))
    }

    /// Builder-style insert for object documents. Panics on non-objects.
    pub fn with(mut self, key: impl Into<String>, value: impl Into<CanonicalDoc>) -> Self {
        match &mut self {
            CanonicalDoc::Object(map) => {
                map.insert(key.into(), value.into());
            }
            other => panic!("with() on non-object document {other:?}"),
        }
        self
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            CanonicalDoc::Null => "null",
            CanonicalDoc::Bool(_) => "bool",
            CanonicalDoc::Int(_) => "int",
            CanonicalDoc::Str(_) => "string",
            CanonicalDoc::Array(_) => "array",
            CanonicalDoc::Object(_) => "object",
        }
    }

    /// Visits every string leaf (object keys excluded).
    pub fn string_leaves(&self) -> Vec<&str> {
        let mut out = Vec::new();
        fn walk<'a>(doc: &'a CanonicalDoc, out: &mut Vec<&'a str>) {
            match doc {
                CanonicalDoc::Str(s) => out.push(s),
                CanonicalDoc::Array(items) => items.iter().for_each(|i| walk(i, out)),
                CanonicalDoc::Object(map) => map.values().for_each(|v| walk(v, out)),
                _ => {}
            }
        }
        walk(self, &mut out);
        out
    }
}

impl From<i64> for CanonicalDoc {
    fn from(v: i64) -> Self {
        CanonicalDoc::Int(v)
    }
}

impl From<bool> for CanonicalDoc {
    fn from(v: bool) -> Self {
        CanonicalDoc::Bool(v)
    }
}

impl From<&str> for CanonicalDoc {
    fn from(v: &str) -> Self {
        CanonicalDoc::Str(v.to_string())
    }
}

impl From<String> for CanonicalDoc {
    fn from(v: String) -> Self {
        CanonicalDoc::Str(v)
    }
}

impl<T: Into<CanonicalDoc>> From<Vec<T>> for CanonicalDoc {
    fn from(v: Vec<T>) -> Self {
        CanonicalDoc::Array(v.into_iter().map(Into::into).collect())
    }
}

impl fmt::Display for CanonicalDoc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let bytes = encode(self);
        f.write_str(std::str::from_utf8(&bytes).expect("canonical encoding is UTF-8"))
    }
}

/// Encodes a document. Total: every `CanonicalDoc` has exactly one encoding.
pub fn encode(doc: &CanonicalDoc) -> Vec<u8> {
    let mut out = Vec::with_capacity(64);
    write_value(doc, &mut out);
    out
}

fn write_value(doc: &CanonicalDoc, out: &mut Vec<u8>) {
    match doc {
        CanonicalDoc::Null => out.extend_from_slice(b"null"),
        CanonicalDoc::Bool(true) => out.extend_from_slice(b"true"),
        CanonicalDoc::Bool(false) => out.extend_from_slice(b"false"),
        CanonicalDoc::Int(v) => out.extend_from_slice(v.to_string().as_bytes()),
        CanonicalDoc::Str(s) => write_string(s, out),
        CanonicalDoc::Array(items) => {
            out.push(b'[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_value(item, out);
            }
            out.push(b']');
        }
        CanonicalDoc::Object(map) => {
            out.push(b'{');
            // BTreeMap<String, _> iterates in bytewise key order.
            for (i, (k, v)) in map.iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_string(k, out);
                out.push(b':');
                write_value(v, out);
            }
            out.push(b'}');
        }
    }
}

fn write_string(s: &str, out: &mut Vec<u8>) {
    out.push(b'"');
    for ch in s.chars() {
        match ch {
            '"' => out.extend_from_slice(b"\\\""),
            '\\' => out.extend_from_slice(b"\\\\"),
            '\u{08}' => out.extend_from_slice(b"\\b"),
            '\u{0c}' => out.extend_from_slice(b"\\f"),
            '\n' => out.extend_from_slice(b"\\n"),
            '\r' => out.extend_from_slice(b"\\r"),
            '\t' => out.extend_from_slice(b"\\t"),
            c if (c as u32) < 0x20 => {
                out.extend_from_slice(format!("\\u{:04x}", c as u32).as_bytes());
            }
            c => {
                let mut buf = [0u8; 4];
                out.extend_from_slice(c.encode_utf8(&mut buf).as_bytes());
            }
        }
    }
    out.push(b'"');
}

/// Decodes canonical bytes. Rejects floats, duplicate keys, invalid UTF-8 and
/// any input whose re-encoding differs from the input.
pub fn decode(bytes: &[u8]) -> Result<CanonicalDoc, CanonicalError> {
    let mut parser = Parser { bytes, pos: 0 };
    let doc = parser.value(0)?;
    if parser.pos != bytes.len() {
        return Err(parser.err("trailing bytes"));
    }
    if encode(&doc) != bytes {
        return Err(CanonicalError::NotCanonical);
    }
    Ok(doc)
}

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn err(&self, message: &str) -> CanonicalError {
        CanonicalError::Parse {
            offset: self.pos,
            message: message.to_string(),
        }
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn expect(&mut self, lit: &[u8]) -> Result<(), CanonicalError> {
        if self.bytes[self.pos..].starts_with(lit) {
            self.pos += lit.len();
            Ok(())
        } else {
            Err(self.err("unexpected token"))
        }
    }

    fn value(&mut self, depth: usize) -> Result<CanonicalDoc, CanonicalError> {
        if depth > MAX_DEPTH {
            return Err(self.err("nesting too deep"));
        }
        match self.peek() {
            Some(b'n') => self.expect(b"null").map(|_| CanonicalDoc::Null),
            Some(b't') => self.expect(b"true").map(|_| CanonicalDoc::Bool(true)),
            Some(b'f') => self.expect(b"false").map(|_| CanonicalDoc::Bool(false)),
            Some(b'"') => self.string().map(CanonicalDoc::Str),
            Some(b'[') => {
                self.pos += 1;
                let mut items = Vec::new();
                if self.peek() == Some(b']') {
                    self.pos += 1;
                    return Ok(CanonicalDoc::Array(items));
                }
                loop {
                    items.push(self.value(depth + 1)?);
                    match self.peek() {
                        Some(b',') => self.pos += 1,
                        Some(b']') => {
                            self.pos += 1;
                            return Ok(CanonicalDoc::Array(items));
                        }
                        _ => return Err(self.err("expected ',' or ']'")),
                    }
                }
            }
            Some(b'{') => {
                self.pos += 1;
                let mut map = BTreeMap::new();
                if self.peek() == Some(b'}') {
                    self.pos += 1;
                    return Ok(CanonicalDoc::Object(map));
                }
                loop {
                    if self.peek() != Some(b'"') {
                        return Err(self.err("expected object key"));
                    }
                    let key = self.string()?;
                    self.expect(b":")?;
                    let value = self.value(depth + 1)?;
                    if map.insert(key.clone(), value).is_some() {
                        return Err(CanonicalError::NonCanonicalValue(format!(
                            "duplicate key {key:?}"
                        )));
                    }
                    match self.peek() {
                        Some(b',') => self.pos += 1,
                        Some(b'}') => {
                            self.pos += 1;
                            return Ok(CanonicalDoc::Object(map));
                        }
                        _ => return Err(self.err("expected ',' or '}'")),
                    }
                }
            }
            Some(b'-' | b'0'..=b'9') => self.number(),
            Some(_) => Err(self.err("unexpected byte")),
            None => Err(self.err("unexpected end of input")),
        }
    }

    fn number(&mut self) -> Result<CanonicalDoc, CanonicalError> {
        let start = self.pos;
        if self.peek() == Some(b'-') {
            self.pos += 1;
        }
        while matches!(self.peek(), Some(b'0'..=b'9')) {
            self.pos += 1;
        }
        if matches!(self.peek(), Some(b'.' | b'e' | b'E')) {
            return Err(CanonicalError::NonCanonicalValue(
                "floating-point number".to_string(),
            ));
        }
        let text = std::str::from_utf8(&self.bytes[start..self.pos]).expect("ascii digits");
        text.parse::<i64>()
            .map(CanonicalDoc::Int)
            .map_err(|_| self.err("integer out of range"))
    }

    fn string(&mut self) -> Result<String, CanonicalError> {
        self.pos += 1; // opening quote
        let mut buf: Vec<u8> = Vec::new();
        loop {
            let b = self.peek().ok_or_else(|| self.err("unterminated string"))?;
            match b {
                b'"' => {
                    self.pos += 1;
                    return String::from_utf8(buf).map_err(|_| {
                        CanonicalError::NonCanonicalValue("invalid UTF-8".to_string())
                    });
                }
                b'\\' => {
                    self.pos += 1;
                    let esc = self.peek().ok_or_else(|| self.err("bad escape"))?;
                    self.pos += 1;
                    let ch = match esc {
                        b'"' => '"',
                        b'\\' => '\\',
                        b'/' => '/',
                        b'b' => '\u{08}',
                        b'f' => '\u{0c}',
                        b'n' => '\n',
                        b'r' => '\r',
                        b't' => '\t',
                        b'u' => self.unicode_escape()?,
                        _ => return Err(self.err("bad escape")),
                    };
                    let mut tmp = [0u8; 4];
                    buf.extend_from_slice(ch.encode_utf8(&mut tmp).as_bytes());
                }
                _ => {
                    buf.push(b);
                    self.pos += 1;
                }
            }
        }
    }

    fn hex4(&mut self) -> Result<u32, CanonicalError> {
        let chunk = self
            .bytes
            .get(self.pos..self.pos + 4)
            .ok_or_else(|| self.err("short \\u escape"))?;
        let text = std::str::from_utf8(chunk).map_err(|_| self.err("bad \\u escape"))?;
        let v = u32::from_str_radix(text, 16).map_err(|_| self.err("bad \\u escape"))?;
        self.pos += 4;
        Ok(v)
    }

    fn unicode_escape(&mut self) -> Result<char, CanonicalError> {
        let hi = self.hex4()?;
        let code = if (0xD800..0xDC00).contains(&hi) {
            self.expect(b"\\u")?;
            let lo = self.hex4()?;
            if !(0xDC00..0xE000).contains(&lo) {
                return Err(self.err("unpaired surrogate"));
            }
            0x10000 + ((hi - 0xD800) << 10) + (lo - 0xDC00)
        } else {
            hi
        };
        char::from_u32(code).ok_or_else(|| self.err("invalid code point"))
    }
}

impl TryFrom<serde_json::Value> for CanonicalDoc {
    type Error = CanonicalError;

    fn try_from(value: serde_json::Value) -> Result<Self, Self::Error> {
        use serde_json::Value as J;
        Ok(match value {
            J::Null => CanonicalDoc::Null,
            J::Bool(b) => CanonicalDoc::Bool(b),
            J::Number(n) => match n.as_i64() {
                Some(v) => CanonicalDoc::Int(v),
                None if n.is_f64() => {
                    return Err(CanonicalError::NonCanonicalValue(format!("float {n}")))
                }
                None => {
                    return Err(CanonicalError::NonCanonicalValue(format!(
                        "integer {n} exceeds signed 64-bit range"
                    )))
                }
            },
            J::String(s) => CanonicalDoc::Str(s),
            J::Array(items) => CanonicalDoc::Array(
                items
                    .into_iter()
                    .map(CanonicalDoc::try_from)
                    .collect::<Result<_, _>>()?,
            ),
            J::Object(map) => CanonicalDoc::Object(
                map.into_iter()
                    .map(|(k, v)| Ok((k, CanonicalDoc::try_from(v)?)))
                    .collect::<Result<_, CanonicalError>>()?,
            ),
        })
    }
}

impl From<&CanonicalDoc> for serde_json::Value {
    fn from(doc: &CanonicalDoc) -> Self {
        use serde_json::Value as J;
        match doc {
            CanonicalDoc::Null => J::Null,
            CanonicalDoc::Bool(b) => J::Bool(*b),
            CanonicalDoc::Int(v) => J::Number((*v).into()),
            CanonicalDoc::Str(s) => J::String(s.clone()),
            CanonicalDoc::Array(items) => J::Array(items.iter().map(Into::into).collect()),
            CanonicalDoc::Object(map) => {
                J::Object(map.iter().map(|(k, v)| (k.clone(), v.into())).collect())
            }
        }
    }
}

impl Serialize for CanonicalDoc {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::{SerializeMap, SerializeSeq};
        match self {
            CanonicalDoc::Null => serializer.serialize_unit(),
            CanonicalDoc::Bool(b) => serializer.serialize_bool(*b),
            CanonicalDoc::Int(v) => serializer.serialize_i64(*v),
            CanonicalDoc::Str(s) => serializer.serialize_str(s),
            CanonicalDoc::Array(items) => {
                let mut seq = serializer.serialize_seq(Some(items.len()))?;
                for item in items {
                    seq.serialize_element(item)?;
                }
                seq.end()
            }
            CanonicalDoc::Object(map) => {
                let mut m = serializer.serialize_map(Some(map.len()))?;
                for (k, v) in map {
                    m.serialize_entry(k, v)?;
                }
                m.end()
            }
        }
    }
}

impl<'de> Deserialize<'de> for CanonicalDoc {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let value = serde_json::Value::deserialize(deserializer)?;
        CanonicalDoc::try_from(value).map_err(serde::de::Error::custom)
    }
}

/// Converts any serializable value into a canonical document.
pub fn to_doc<T: Serialize>(value: &T) -> Result<CanonicalDoc, CanonicalError> {
    let json = serde_json::to_value(value).map_err(|e| CanonicalError::Schema(e.to_string()))?;
    CanonicalDoc::try_from(json)
}

pub fn from_doc<T: DeserializeOwned>(doc: &CanonicalDoc) -> Result<T, CanonicalError> {
    serde_json::from_value(serde_json::Value::from(doc))
        .map_err(|e| CanonicalError::Schema(e.to_string()))
}

/// Types with a canonical binary form (for digesting and signing) and a
/// pretty JSON export. Both are views of the same serde structure.
///
/// Implementors must not contain floats or unsigned integers above
/// `i64::MAX`; encoding panics otherwise.
pub trait Canonical: Serialize + DeserializeOwned {
    fn to_canonical_doc(&self) -> CanonicalDoc {
        to_doc(self).expect("type contains only canonical-representable values")
    }

    fn canonical_bytes(&self) -> Vec<u8> {
        encode(&self.to_canonical_doc())
    }

    fn canonical_digest(&self) -> Digest {
        digest(&self.canonical_bytes())
    }

    /// Strict decode: the bytes must be exactly the canonical encoding of
    /// the resulting value.
    fn from_canonical_bytes(bytes: &[u8]) -> Result<Self, CanonicalError> {
        let doc = decode(bytes)?;
        let value: Self = from_doc(&doc)?;
        if value.canonical_bytes() != bytes {
            return Err(CanonicalError::NotCanonical);
        }
        Ok(value)
    }

    fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    fn from_json(text: &str) -> Result<Self, CanonicalError> {
        serde_json::from_str(text).map_err(|e| CanonicalError::Schema(e.to_string()))
    }
}

impl Canonical for CanonicalDoc {}

/// Encodes a serializable value, surfacing representability errors.
pub fn canonical_encode<T: Serialize>(value: &T) -> Result<Vec<u8>, CanonicalError> {
    Ok(encode(&to_doc(value)?))
}
