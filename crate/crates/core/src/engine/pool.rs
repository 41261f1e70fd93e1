use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::types::Candidate;

/// Scored generations grouped by input. Each bucket keeps distinct outputs
/// in token order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Datapool {
    buckets: BTreeMap<String, Vec<Candidate>>,
    /// Outer iterations completed.
    pub iteration: u32,
}

impl Datapool {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a candidate unless its output is already in the bucket.
    pub fn insert(&mut self, c: Candidate) -> bool {
        let bucket = self.buckets.entry(c.input_id.clone()).or_default();
        match bucket.binary_search_by(|b| b.output.cmp(&c.output)) {
            Ok(_) => false,
            Err(at) => {
                bucket.insert(at, c);
                true
            }
        }
    }

    /// Sorts by `(input_id, output)` then inserts, so the result does not
    /// depend on the order the delta was produced in. Returns how many
    /// candidates were new.
    pub fn merge(&mut self, mut delta: Vec<Candidate>) -> usize {
        delta.sort_by(|a, b| (&a.input_id, &a.output).cmp(&(&b.input_id, &b.output)));
        delta.into_iter().filter(|c| self.insert(c.clone())).count()
    }

    pub fn bucket(&self, input_id: &str) -> &[Candidate] {
        self.buckets.get(input_id).map_or(&[], Vec::as_slice)
    }

    pub fn input_ids(&self) -> impl Iterator<Item = &str> {
        self.buckets.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Candidate> {
        self.buckets.values().flatten()
    }

    pub fn len(&self) -> usize {
        self.buckets.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn mean_value(&self) -> f64 {
        let n = self.len();
        if n == 0 {
            return 0.0;
        }
        self.iter().map(|c| c.value).sum::<f64>() / n as f64
    }

    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for c in self.iter() {
            s.push_str(&serde_json::to_string(c).expect("plain record"));
            s.push('\n');
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_jsonl().as_bytes()).map_err(|e| Error::io(path, e))
    }

    /// Reads candidates from JSONL; a record with a value outside `[0, 1]`
    /// is rejected.
    pub fn read_candidates(path: &Path) -> Result<Vec<Candidate>> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut out = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |reason: String| Error::Format {
                path: path.to_owned(),
                line: i + 1,
                reason,
            };
            let c: Candidate = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
            if !(0.0..=1.0).contains(&c.value) {
                return Err(bad(format!("value {} outside [0, 1]", c.value)));
            }
            out.push(c);
        }
        Ok(out)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut pool = Datapool::new();
        for c in Self::read_candidates(path)? {
            pool.iteration = pool.iteration.max(c.iteration);
            pool.insert(c);
        }
        Ok(pool)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seq::tokenize;
    use crate::types::Origin;
    use proptest::prelude::*;

    fn cand(id: &str, out: &str, value: f64) -> Candidate {
        Candidate {
            input_id: id.into(),
            output: tokenize(out),
            value,
            feedback: None,
            origin: Origin::BaseGenerator,
            iteration: 0,
        }
    }

    #[test]
    fn dedupes_by_output() {
        let mut p = Datapool::new();
        assert!(p.insert(cand("x", "a b", 0.0)));
        assert!(!p.insert(cand("x", "a b", 1.0)));
        assert!(p.insert(cand("y", "a b", 0.0)));
        assert_eq!(p.len(), 2);
        assert_eq!(p.bucket("x")[0].value, 0.0);
    }

    #[test]
    fn jsonl_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let mut p = Datapool::new();
        p.merge(vec![cand("b", "z", 0.5), cand("a", "y", 1.0), cand("a", "x", 0.0)]);
        let path = dir.path().join("pool.jsonl");
        p.write(&path).unwrap();
        assert_eq!(Datapool::read(&path).unwrap(), p);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(r#"{"input_id":"a","output":"x","#));
    }

    #[test]
    fn rejects_out_of_range_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(
            &path,
            r#"{"input_id":"a","output":"x","value":1.5,"feedback":null,"origin":"external"}"#,
        )
        .unwrap();
        assert!(matches!(Datapool::read(&path), Err(Error::Format { line: 1, .. })));
    }

    proptest! {
        #[test]
        fn merge_is_order_independent(items in proptest::collection::vec((0u8..3, 0u8..5), 0..30)) {
            let cands: Vec<Candidate> = items
                .iter()
                .map(|(i, o)| cand(&format!("x{i}"), &format!("o{o}"), f64::from(*o) / 4.0))
                .collect();
            let mut a = Datapool::new();
            a.merge(cands.clone());
            let mut b = Datapool::new();
            b.merge(cands.into_iter().rev().collect());
            prop_assert_eq!(a.to_jsonl(), b.to_jsonl());
            let before = a.len();
            let again: Vec<Candidate> = a.iter().cloned().collect();
            prop_assert_eq!(a.merge(again), 0);
            prop_assert_eq!(a.len(), before);
        }
    }
}
