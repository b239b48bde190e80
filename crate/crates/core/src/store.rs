//! Flat storage for every trainable scalar in a model.
//!
//! Network weights, biases, activation parameters and unknown physical
//! coefficients all live in one indexable vector, grouped into named
//! segments. Optimizers see the flat view; everything else addresses its own
//! segment by name.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub name: String,
    pub start: usize,
    pub len: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParameterStore {
    values: Vec<f64>,
    segments: Vec<Segment>,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Append a named segment, returning its index range.
    pub fn push_segment(&mut self, name: impl Into<String>, values: &[f64]) -> std::ops::Range<usize> {
        let start = self.values.len();
        self.values.extend_from_slice(values);
        self.segments.push(Segment { name: name.into(), start, len: values.len() });
        start..start + values.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn set_all(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.values.len());
        self.values.copy_from_slice(values);
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn segment_range(&self, name: &str) -> Option<std::ops::Range<usize>> {
        self.segments.iter().find(|s| s.name == name).map(|s| s.start..s.start + s.len)
    }

    pub fn segment(&self, name: &str) -> Option<&[f64]> {
        self.segment_range(name).map(|r| &self.values[r])
    }

    pub fn segment_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        self.segment_range(name).map(|r| &mut self.values[r])
    }

    pub fn get(&self, idx: usize) -> f64 {
        self.values[idx]
    }

    pub fn set(&mut self, idx: usize, v: f64) {
        self.values[idx] = v;
    }

    /// Serialize to the versioned checkpoint text format: a header naming the
    /// config hash and each segment, then one value per line. `f64` values
    /// round-trip exactly through the shortest decimal representation.
    pub fn to_checkpoint(&self, config_hash: &str) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# checkpoint v1");
        let _ = writeln!(out, "# config_hash={config_hash}");
        let _ = writeln!(out, "# segments={}", self.segments.len());
        for s in &self.segments {
            let _ = writeln!(out, "# segment {} {} {}", s.name, s.start, s.len);
        }
        for v in &self.values {
            let _ = writeln!(out, "{v}");
        }
        out
    }

    pub fn from_checkpoint(text: &str) -> Result<(ParameterStore, String)> {
        let mut lines = text.lines();
        let head = lines.next().unwrap_or_default();
        if head.trim() != "# checkpoint v1" {
            return Err(Error::config(format!("unknown checkpoint header: {head:?}")));
        }
        let mut hash = String::new();
        let mut segments = Vec::new();
        let mut values = Vec::new();
        for line in lines {
            if let Some(rest) = line.strip_prefix("# config_hash=") {
                hash = rest.trim().to_string();
            } else if let Some(rest) = line.strip_prefix("# segment ") {
                let mut it = rest.split_whitespace();
                let name = it.next().ok_or_else(|| Error::config("segment line missing name"))?;
                let start: usize = it
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::config("segment line missing start"))?;
                let len: usize = it
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::config("segment line missing len"))?;
                segments.push(Segment { name: name.to_string(), start, len });
            } else if line.starts_with('#') || line.trim().is_empty() {
                continue;
            } else {
                let v: f64 = line
                    .trim()
                    .parse()
                    .map_err(|_| Error::config(format!("bad checkpoint value: {line:?}")))?;
                values.push(v);
            }
        }
        let expected: usize = segments.iter().map(|s| s.len).sum();
        if expected != values.len() {
            return Err(Error::config(format!(
                "checkpoint value count {} does not match segment table {}",
                values.len(),
                expected
            )));
        }
        Ok((ParameterStore { values, segments }, hash))
    }

    pub fn save(&self, path: &Path, config_hash: &str) -> Result<()> {
        std::fs::write(path, self.to_checkpoint(config_hash))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<(ParameterStore, String)> {
        let text = std::fs::read_to_string(path)?;
        Self::from_checkpoint(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segments_are_addressable() {
        let mut s = ParameterStore::new();
        let r1 = s.push_segment("w0", &[1.0, 2.0]);
        let r2 = s.push_segment("b0", &[3.0]);
        assert_eq!(r1, 0..2);
        assert_eq!(r2, 2..3);
        assert_eq!(s.segment("b0"), Some(&[3.0][..]));
        assert_eq!(s.len(), 3);
    }

    #[test]
    fn checkpoint_roundtrip_is_bit_exact() {
        let mut s = ParameterStore::new();
        s.push_segment("w0", &[std::f64::consts::PI, -1.0 / 3.0, 1e-300]);
        s.push_segment("act0", &[f64::MIN_POSITIVE, 0.1 + 0.2]);
        let text = s.to_checkpoint("abc123");
        let (s2, hash) = ParameterStore::from_checkpoint(&text).unwrap();
        assert_eq!(hash, "abc123");
        assert_eq!(s.segments(), s2.segments());
        for (a, b) in s.values().iter().zip(s2.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn corrupt_checkpoint_is_rejected() {
        assert!(ParameterStore::from_checkpoint("garbage").is_err());
        let mut s = ParameterStore::new();
        s.push_segment("w0", &[1.0]);
        let text = s.to_checkpoint("h") + "0.5\n";
        assert!(ParameterStore::from_checkpoint(&text).is_err());
    }
}
