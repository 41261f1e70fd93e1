//! Value-improving pairs, hypothesis/correction similarity and the weighted
//! pair sampler.

use std::collections::HashSet;

use rand::Rng;

use crate::error::{Error, Result};
use crate::seq::TokenSeq;
use crate::types::Candidate;

/// A hypothesis and a strictly better output for the same input.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueImprovingPair {
    pub input_id: String,
    pub hypothesis: Candidate,
    pub correction: Candidate,
}

impl ValueImprovingPair {
    pub fn delta(&self) -> f64 {
        self.correction.value - self.hypothesis.value
    }
}

/// Token-level Levenshtein distance.
pub fn levenshtein(a: &[String], b: &[String]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ta) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, tb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ta != tb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `1 − lev(y, y′) / max(|y|, |y′|)`, and 1 for two empty sequences.
pub fn similarity(y: &TokenSeq, y2: &TokenSeq) -> f64 {
    let longest = y.len().max(y2.len());
    if longest == 0 {
        return 1.0;
    }
    1.0 - levenshtein(y.tokens(), y2.tokens()) as f64 / longest as f64
}

/// `exp(α·Δv + β·s)`.
pub fn pair_weight(pair: &ValueImprovingPair, alpha: f64, beta: f64) -> f64 {
    let s = similarity(&pair.hypothesis.output, &pair.correction.output);
    (alpha * pair.delta() + beta * s).exp()
}

/// Drops candidates whose output repeats an earlier one.
pub fn dedupe(pool_x: &[Candidate]) -> Vec<&Candidate> {
    let mut seen = HashSet::new();
    pool_x.iter().filter(|c| seen.insert(&c.output)).collect()
}

/// Every ordered pair `(y, y′)` of distinct outputs with `v(y) < v(y′)`.
pub fn form_pairs(pool_x: &[Candidate]) -> Vec<ValueImprovingPair> {
    let unique = dedupe(pool_x);
    let mut out = Vec::new();
    for h in &unique {
        for c in &unique {
            if h.value < c.value {
                out.push(ValueImprovingPair {
                    input_id: h.input_id.clone(),
                    hypothesis: (*h).clone(),
                    correction: (*c).clone(),
                });
            }
        }
    }
    out
}

/// Which ordered pairs of a bucket count as training pairs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PairRule {
    /// Strictly increasing value.
    ValueImproving,
    /// Any two distinct outputs, regardless of value.
    AnyDistinct,
}

impl PairRule {
    fn admits(self, h: &Candidate, c: &Candidate) -> bool {
        match self {
            PairRule::ValueImproving => h.value < c.value,
            PairRule::AnyDistinct => h.output != c.output,
        }
    }
}

/// The corrections available to one hypothesis, as indices into the
/// bucket the index was built from.
#[derive(Clone, Debug, PartialEq)]
pub struct HypothesisGroup {
    pub hypothesis: usize,
    pub corrections: Vec<usize>,
    pub deltas: Vec<f64>,
    pub similarities: Vec<f64>,
}

impl HypothesisGroup {
    /// Correction probabilities `w / Z(y)` with `w = exp(α·Δv + β·s)`.
    pub fn probabilities(&self, alpha: f64, beta: f64) -> Vec<f64> {
        let logits: Vec<f64> = self
            .deltas
            .iter()
            .zip(&self.similarities)
            .map(|(d, s)| alpha * d + beta * s)
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / z).collect()
    }
}

/// Pairs of one input grouped by hypothesis.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PairIndex {
    pub groups: Vec<HypothesisGroup>,
}

impl PairIndex {
    /// Indexes the pairs of a bucket whose outputs are already distinct.
    pub fn build(bucket: &[Candidate], rule: PairRule) -> Self {
        let mut groups = Vec::new();
        for (hi, h) in bucket.iter().enumerate() {
            let mut g = HypothesisGroup {
                hypothesis: hi,
                corrections: Vec::new(),
                deltas: Vec::new(),
                similarities: Vec::new(),
            };
            for (ci, c) in bucket.iter().enumerate() {
                if hi != ci && rule.admits(h, c) {
                    g.corrections.push(ci);
                    g.deltas.push(c.value - h.value);
                    g.similarities.push(similarity(&h.output, &c.output));
                }
            }
            if !g.corrections.is_empty() {
                groups.push(g);
            }
        }
        PairIndex { groups }
    }

    pub fn pair_count(&self) -> usize {
        self.groups.iter().map(|g| g.corrections.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    /// Two-stage draw: a hypothesis uniformly among those with at least one
    /// correction, then a correction with probability `w / Z(y)`.
    pub fn sample<R: Rng + ?Sized>(&self, alpha: f64, beta: f64, rng: &mut R) -> Result<(usize, usize)> {
        if self.groups.is_empty() {
            return Err(Error::EmptyPairSet);
        }
        let g = &self.groups[rng.gen_range(0..self.groups.len())];
        let probs = g.probabilities(alpha, beta);
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (k, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return Ok((g.hypothesis, g.corrections[k]));
            }
        }
        Ok((g.hypothesis, *g.corrections.last().expect("non-empty group")))
    }

    /// The `k`-th pair in group order; used for uniform draws over pairs.
    pub fn nth(&self, mut k: usize) -> Option<(usize, usize)> {
        for g in &self.groups {
            if k < g.corrections.len() {
                return Some((g.hypothesis, g.corrections[k]));
            }
            k -= g.corrections.len();
        }
        None
    }

    /// Exact probability of each `(hypothesis, correction)` under
    /// [`PairIndex::sample`].
    pub fn distribution(&self, alpha: f64, beta: f64) -> Vec<((usize, usize), f64)> {
        let ng = self.groups.len() as f64;
        let mut out = Vec::new();
        for g in &self.groups {
            for (k, p) in g.probabilities(alpha, beta).into_iter().enumerate() {
                out.push(((g.hypothesis, g.corrections[k]), p / ng));
            }
        }
        out
    }
}

/// Samples one value-improving pair from the pairs of a single input.
pub fn sample_pair<R: Rng + ?Sized>(
    pairs: &[ValueImprovingPair],
    alpha: f64,
    beta: f64,
    rng: &mut R,
) -> Result<ValueImprovingPair> {
    let mut bucket: Vec<Candidate> = Vec::new();
    let index_of = |c: &Candidate, bucket: &mut Vec<Candidate>| match bucket
        .iter()
        .position(|b| b.output == c.output)
    {
        Some(i) => i,
        None => {
            bucket.push(c.clone());
            bucket.len() - 1
        }
    };
    let mut edges = Vec::with_capacity(pairs.len());
    for p in pairs {
        let h = index_of(&p.hypothesis, &mut bucket);
        let c = index_of(&p.correction, &mut bucket);
        edges.push((h, c));
    }
    let mut groups: Vec<HypothesisGroup> = Vec::new();
    for (p, &(h, c)) in pairs.iter().zip(&edges) {
        let g = match groups.iter_mut().position(|g| g.hypothesis == h) {
            Some(i) => &mut groups[i],
            None => {
                groups.push(HypothesisGroup {
                    hypothesis: h,
                    corrections: Vec::new(),
                    deltas: Vec::new(),
                    similarities: Vec::new(),
                });
                groups.last_mut().unwrap()
            }
        };
        g.corrections.push(c);
        g.deltas.push(p.delta());
        g.similarities.push(similarity(&p.hypothesis.output, &p.correction.output));
    }
    let (h, c) = PairIndex { groups }.sample(alpha, beta, rng)?;
    let hypothesis = bucket[h].clone();
    let correction = bucket[c].clone();
    Ok(ValueImprovingPair {
        input_id: hypothesis.input_id.clone(),
        hypothesis,
        correction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::seq::tokenize;
    use crate::types::Origin;
    use proptest::prelude::*;

    fn cand(out: &str, value: f64) -> Candidate {
        Candidate {
            input_id: "x".into(),
            output: tokenize(out),
            value,
            feedback: None,
            origin: Origin::BaseGenerator,
            iteration: 0,
        }
    }

    #[test]
    fn similarity_examples() {
        let y = tokenize("a b c");
        assert_eq!(similarity(&y, &y), 1.0);
        assert!((similarity(&y, &tokenize("a b d")) - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(similarity(&tokenize("a b"), &tokenize("c d")), 0.0);
        assert_eq!(similarity(&TokenSeq::new(), &TokenSeq::new()), 1.0);
        assert_eq!(similarity(&TokenSeq::new(), &tokenize("a")), 0.0);
    }

    #[test]
    fn pair_examples() {
        let pool = [cand("y1", 0.0), cand("y2", 1.0), cand("y3", 1.0)];
        let pairs = form_pairs(&pool);
        let names: Vec<(String, String)> = pairs
            .iter()
            .map(|p| (p.hypothesis.output.detokenize(), p.correction.output.detokenize()))
            .collect();
        assert_eq!(names, [("y1".into(), "y2".into()), ("y1".into(), "y3".into())]);

        assert_eq!(form_pairs(&[cand("a", 0.0), cand("b", 0.5), cand("c", 1.0)]).len(), 3);
        assert!(form_pairs(&[cand("a", 0.3), cand("b", 0.3)]).is_empty());
        // duplicates count once
        assert_eq!(form_pairs(&[cand("a", 0.0), cand("a", 0.0), cand("b", 1.0)]).len(), 1);
    }

    #[test]
    fn weight_examples() {
        let p = |dv: f64, out2: &str| ValueImprovingPair {
            input_id: "x".into(),
            hypothesis: cand("a b", 0.0),
            correction: cand(out2, dv),
        };
        // similarity("a b", "a c") = 0.5
        assert!((pair_weight(&p(1.0, "a c"), 1.0, 1.0) - 1.5f64.exp()).abs() < 1e-12);
        assert!((pair_weight(&p(0.5, "a c"), 1.0, 1.0) - 1.0f64.exp()).abs() < 1e-12);
        assert_eq!(pair_weight(&p(0.7, "z"), 0.0, 0.0), 1.0);
    }

    #[test]
    fn worked_sampling_example() {
        let bucket = [cand("a b", 0.0), cand("a c", 1.0), cand("d b", 0.5)];
        let idx = PairIndex::build(&bucket, PairRule::ValueImproving);
        let hyp0 = idx.groups.iter().find(|g| g.hypothesis == 0).unwrap();
        let probs = hyp0.probabilities(1.0, 1.0);
        let expect = 1.5f64.exp() / (1.5f64.exp() + 1.0f64.exp());
        assert!((probs[0] - expect).abs() < 1e-12);
    }

    #[test]
    fn large_alpha_picks_best_correction() {
        let bucket = [cand("h", 0.0), cand("c1", 0.4), cand("c2", 0.9)];
        let idx = PairIndex::build(&bucket, PairRule::ValueImproving);
        let g = idx.groups.iter().find(|g| g.hypothesis == 0).unwrap();
        let probs = g.probabilities(1e4, 1.0);
        let best = g.corrections.iter().position(|&c| c == 2).unwrap();
        assert!(probs[best] > 1.0 - 1e-12);
    }

    #[test]
    fn zero_weights_are_uniform() {
        let bucket = [cand("h", 0.0), cand("c1", 0.4), cand("c2", 0.9), cand("c3", 1.0)];
        let idx = PairIndex::build(&bucket, PairRule::ValueImproving);
        let g = idx.groups.iter().find(|g| g.hypothesis == 0).unwrap();
        for p in g.probabilities(0.0, 0.0) {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn any_distinct_rule_ignores_value() {
        let bucket = [cand("a", 1.0), cand("b", 0.0), cand("c", 0.0)];
        assert_eq!(PairIndex::build(&bucket, PairRule::AnyDistinct).pair_count(), 6);
        assert_eq!(PairIndex::build(&bucket, PairRule::ValueImproving).pair_count(), 2);
    }

    #[test]
    fn empty_pair_set_errors() {
        let mut rng = stream(1, &[]);
        assert!(matches!(
            PairIndex::default().sample(1.0, 1.0, &mut rng),
            Err(Error::EmptyPairSet)
        ));
        assert!(sample_pair(&[], 1.0, 1.0, &mut rng).is_err());
    }

    #[test]
    fn sample_pair_returns_a_member() {
        let pool = [cand("a", 0.0), cand("b", 0.5), cand("c", 1.0)];
        let pairs = form_pairs(&pool);
        let mut rng = stream(3, &[]);
        for _ in 0..50 {
            let p = sample_pair(&pairs, 10.0, 1.0, &mut rng).unwrap();
            assert!(pairs.contains(&p));
        }
    }

    fn arb_bucket() -> impl Strategy<Value = Vec<Candidate>> {
        proptest::collection::vec(0u8..5, 1..12).prop_map(|vals| {
            vals.iter()
                .enumerate()
                .map(|(i, v)| cand(&format!("t{i} u{}", i % 3), f64::from(*v) / 4.0))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn similarity_symmetric_and_identity(a in proptest::collection::vec("[abc]", 0..6), b in proptest::collection::vec("[abc]", 0..6)) {
            let a = TokenSeq::from_tokens(a);
            let b = TokenSeq::from_tokens(b);
            prop_assert_eq!(similarity(&a, &b), similarity(&b, &a));
            prop_assert_eq!(similarity(&a, &b) == 1.0, a == b);
            prop_assert!((0.0..=1.0).contains(&similarity(&a, &b)));
        }

        #[test]
        fn scaling_one_hypothesis_keeps_its_conditional(bucket in arb_bucket(), shift in -5.0f64..5.0) {
            let idx = PairIndex::build(&bucket, PairRule::ValueImproving);
            for g in &idx.groups {
                let base = g.probabilities(2.0, 1.0);
                // a constant factor on every weight is an additive shift of every logit
                let mut shifted = g.clone();
                for d in &mut shifted.deltas {
                    *d += shift / 2.0;
                }
                for (p, q) in base.iter().zip(shifted.probabilities(2.0, 1.0)) {
                    prop_assert!((p - q).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn index_matches_form_pairs(bucket in arb_bucket()) {
            let idx = PairIndex::build(&bucket, PairRule::ValueImproving);
            prop_assert_eq!(idx.pair_count(), form_pairs(&bucket).len());
            let total: f64 = idx.distribution(3.0, 1.0).iter().map(|(_, p)| p).sum();
            if !idx.is_empty() {
                prop_assert!((total - 1.0).abs() < 1e-9);
            }
        }
    }
}
