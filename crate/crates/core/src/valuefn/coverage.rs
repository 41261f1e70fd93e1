use crate::seq::TokenSeq;

const SUFFIXES: [&str; 4] = ["ing", "ed", "es", "s"];
const MIN_STEM_CHARS: usize = 3;

/// Lowercased word plus each single-suffix-stripped stem of at least three
/// characters.
fn forms(word: &str) -> Vec<String> {
    let lower = word.to_lowercase();
    let mut out = vec![lower.clone()];
    for suffix in SUFFIXES {
        if let Some(stem) = lower.strip_suffix(suffix) {
            if stem.chars().count() >= MIN_STEM_CHARS {
                out.push(stem.to_owned());
            }
        }
    }
    out
}

/// A constraint matches a token when they share a normalized form
/// ("reading" matches "read", "catches" matches "catch").
pub fn constraint_matches(constraint: &str, token: &str) -> bool {
    let c = forms(constraint);
    forms(token).iter().any(|f| c.contains(f))
}

/// Constraints with no matching token, in input order.
pub fn missing_constraints<'a>(constraints: &'a [String], text: &TokenSeq) -> Vec<&'a str> {
    let token_forms: Vec<Vec<String>> = text.iter().map(|t| forms(t)).collect();
    constraints
        .iter()
        .filter(|c| {
            let cf = forms(c);
            !token_forms.iter().any(|tf| tf.iter().any(|f| cf.contains(f)))
        })
        .map(String::as_str)
        .collect()
}

/// Matched constraints over all constraints; 1.0 for an empty set.
pub fn coverage_value(constraints: &[String], text: &TokenSeq) -> f64 {
    if constraints.is_empty() {
        return 1.0;
    }
    let missing = missing_constraints(constraints, text).len();
    (constraints.len() - missing) as f64 / constraints.len() as f64
}

/// `"adding constraint word: w1, w2"` for the missing constraints, or
/// nothing when all are present.
pub fn constraint_feedback(constraints: &[String], text: &TokenSeq) -> Option<String> {
    let missing = missing_constraints(constraints, text);
    if missing.is_empty() {
        None
    } else {
        Some(format!("adding constraint word: {}", missing.join(", ")))
    }
}
