use std::collections::BTreeSet;

use crate::rng::fnv1a;
use crate::seq::{segments, TokenSeq};

/// Feature families of the log-linear corrector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureKind {
    Bias,
    Unigram,
    Bigram,
    Trigram,
    Prompt,
    Current,
    Feedback,
}

impl FeatureKind {
    fn tag(self) -> u8 {
        match self {
            FeatureKind::Bias => b'b',
            FeatureKind::Unigram => b'1',
            FeatureKind::Bigram => b'2',
            FeatureKind::Trigram => b'3',
            FeatureKind::Prompt => b'x',
            FeatureKind::Current => b'y',
            FeatureKind::Feedback => b'f',
        }
    }
}

/// Stable 64-bit id of `(kind, content)`.
pub fn feature_id(kind: FeatureKind, parts: &[&str]) -> u64 {
    let mut bytes = vec![kind.tag()];
    for p in parts {
        bytes.push(0x1f);
        bytes.extend_from_slice(p.as_bytes());
    }
    fnv1a(&bytes)
}

/// Features that depend only on the context: bias plus the token bags of the
/// prompt, current-hypothesis and feedback segments. Sorted, no duplicates.
pub fn context_features(context: &TokenSeq) -> Vec<u64> {
    let seg = segments(context);
    let mut out = BTreeSet::new();
    out.insert(feature_id(FeatureKind::Bias, &[]));
    for t in seg.prompt {
        out.insert(feature_id(FeatureKind::Prompt, &[t]));
    }
    for t in seg.current {
        out.insert(feature_id(FeatureKind::Current, &[t]));
    }
    for t in seg.feedback.unwrap_or_default() {
        out.insert(feature_id(FeatureKind::Feedback, &[t]));
    }
    out.into_iter().collect()
}

/// Unigram, bigram and trigram of the prefix tail, as far as the prefix
/// reaches.
pub fn prefix_features<S: AsRef<str>>(prefix: &[S]) -> Vec<u64> {
    let n = prefix.len();
    let kinds = [FeatureKind::Unigram, FeatureKind::Bigram, FeatureKind::Trigram];
    let mut out = Vec::with_capacity(3);
    for (order, kind) in kinds.into_iter().enumerate() {
        let order = order + 1;
        if n < order {
            break;
        }
        let parts: Vec<&str> = prefix[n - order..].iter().map(AsRef::as_ref).collect();
        out.push(feature_id(kind, &parts));
    }
    out
}

/// All active features for predicting the token after `prefix`.
pub fn features(context: &TokenSeq, prefix: &TokenSeq) -> BTreeSet<u64> {
    let mut out: BTreeSet<u64> = context_features(context).into_iter().collect();
    out.extend(prefix_features(prefix.tokens()));
    out
}
