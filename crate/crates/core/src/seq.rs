//! Token sequences, reserved markers and the corrector input format.
//!
//! Text is split on whitespace; `(`, `)` and `=` are always split into
//! their own tokens and `.`, `,`, `?`, `!` are split off the end of a
//! chunk. Case is preserved. A token that spells one of the reserved
//! markers is escaped with a leading backslash so that user text can never
//! inject structure into a formatted corrector input.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub const MARK_SC: &str = "[SC]";
pub const MARK_CURR: &str = "[CURR]";
pub const MARK_FEEDBACK: &str = "[FEEDBACK]";
pub const MARK_START: &str = "[START]";
pub const MARK_END: &str = "[END]";

pub const MARKERS: [&str; 5] = [MARK_SC, MARK_CURR, MARK_FEEDBACK, MARK_START, MARK_END];

const SPLIT_ANYWHERE: [char; 3] = ['(', ')', '='];
const SPLIT_TRAILING: [char; 4] = ['.', ',', '?', '!'];

pub fn is_marker(token: &str) -> bool {
    MARKERS.contains(&token)
}

/// Ordered list of whitespace-free tokens.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TokenSeq(Vec<String>);

impl TokenSeq {
    pub fn new() -> Self {
        TokenSeq(Vec::new())
    }

    /// Builds a sequence from already-split tokens.
    ///
    /// Tokens must be non-empty and whitespace free; this is checked in
    /// debug builds only.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let tokens: Vec<String> = tokens.into_iter().map(Into::into).collect();
        debug_assert!(tokens
            .iter()
            .all(|t| !t.is_empty() && !t.chars().any(char::is_whitespace)));
        TokenSeq(tokens)
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn push(&mut self, token: impl Into<String>) {
        self.0.push(token.into());
    }

    pub fn extend_from(&mut self, other: &TokenSeq) {
        self.0.extend(other.0.iter().cloned());
    }

    pub fn iter(&self) -> std::slice::Iter<'_, String> {
        self.0.iter()
    }

    pub fn into_inner(self) -> Vec<String> {
        self.0
    }

    /// Space-joined text form.
    pub fn detokenize(&self) -> String {
        self.0.join(" ")
    }
}

impl fmt::Display for TokenSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.detokenize())
    }
}

impl<'a> IntoIterator for &'a TokenSeq {
    type Item = &'a String;
    type IntoIter = std::slice::Iter<'a, String>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

// Serialized as the space-joined string; tokens never contain whitespace so
// splitting restores the exact sequence.
impl Serialize for TokenSeq {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.detokenize())
    }
}

impl<'de> Deserialize<'de> for TokenSeq {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Ok(TokenSeq(s.split_whitespace().map(str::to_owned).collect()))
    }
}

fn escape(token: String) -> String {
    if is_marker(&token) {
        format!("\\{token}")
    } else {
        token
    }
}

fn split_chunk(chunk: &str, out: &mut Vec<String>) {
    let mut current = String::new();
    for ch in chunk.chars() {
        if SPLIT_ANYWHERE.contains(&ch) {
            if !current.is_empty() {
                push_with_trailing(std::mem::take(&mut current), out);
            }
            out.push(ch.to_string());
        } else {
            current.push(ch);
        }
    }
    if !current.is_empty() {
        push_with_trailing(current, out);
    }
}

fn push_with_trailing(piece: String, out: &mut Vec<String>) {
    let body = piece.trim_end_matches(&SPLIT_TRAILING[..]);
    let tail: Vec<char> = piece[body.len()..].chars().collect();
    if !body.is_empty() {
        out.push(escape(body.to_owned()));
    }
    out.extend(tail.into_iter().map(|c| c.to_string()));
}

/// Splits text into tokens; empty text yields an empty sequence.
pub fn tokenize(text: &str) -> TokenSeq {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        split_chunk(chunk, &mut out);
    }
    TokenSeq(out)
}

/// Builds `[SC] x [CURR] y [FEEDBACK] f [START]`; the feedback segment is
/// omitted when there is no feedback. The training target is whatever
/// follows `[START]`, terminated by `[END]`.
pub fn format_corrector_input(x: &TokenSeq, y: &TokenSeq, feedback: Option<&str>) -> TokenSeq {
    let fb = feedback.map(tokenize);
    let extra = fb.as_ref().map_or(0, |f| f.len() + 1);
    let mut out = Vec::with_capacity(x.len() + y.len() + 3 + extra);
    out.push(MARK_SC.to_owned());
    out.extend(x.iter().cloned().map(escape));
    out.push(MARK_CURR.to_owned());
    out.extend(y.iter().cloned().map(escape));
    if let Some(fb) = fb {
        out.push(MARK_FEEDBACK.to_owned());
        out.extend(fb.0);
    }
    out.push(MARK_START.to_owned());
    TokenSeq(out)
}

/// Segments of a formatted corrector input.
#[derive(Debug, Default, Clone, Copy)]
pub struct Segments<'a> {
    pub prompt: &'a [String],
    pub current: &'a [String],
    pub feedback: Option<&'a [String]>,
}

/// Splits a context produced by [`format_corrector_input`] back into its
/// segments. Missing markers yield empty segments.
pub fn segments(context: &TokenSeq) -> Segments<'_> {
    let toks = context.tokens();
    let find = |m: &str| toks.iter().position(|t| t == m);
    let sc = find(MARK_SC);
    let curr = find(MARK_CURR);
    let fb = find(MARK_FEEDBACK);
    let start = find(MARK_START).unwrap_or(toks.len());

    let slice = |from: Option<usize>, to: usize| match from {
        Some(i) if i < to => &toks[i + 1..to],
        _ => &toks[0..0],
    };
    let curr_end = fb.unwrap_or(start);
    let sc_end = curr.unwrap_or(curr_end);
    Segments {
        prompt: slice(sc, sc_end),
        current: slice(curr, curr_end),
        feedback: fb.map(|i| slice(Some(i), start)),
    }
}
