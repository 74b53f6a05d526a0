//! Inline coreference markup.
//!
//! The canonical grammar is
//!
//! ```text
//! annotated := (text | mention)*
//! mention   := '[' (text | mention)* ': ' INT ']'
//! INT       := [1-9][0-9]*
//! ```
//!
//! e.g. `[[her: 2] father: 1] smiled.` Offsets on [`Mention`] are character
//! (not byte) offsets into the clean text, i.e. the string with every
//! annotation delimiter and cluster id removed.

use std::cmp::Reverse;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const OPEN: char = '[';
pub const CLOSE: char = ']';
pub const ID_DELIMITER: &str = ": ";

/// One bracketed span.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Mention {
    /// Inclusive character offset into the clean text.
    pub start: usize,
    /// Exclusive character offset into the clean text.
    pub end: usize,
    pub cluster_id: u32,
}

impl Mention {
    pub fn new(start: usize, end: usize, cluster_id: u32) -> Self {
        Mention { start, end, cluster_id }
    }

    pub fn span(&self) -> (usize, usize) {
        (self.start, self.end)
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start >= self.end
    }

    fn contains(&self, other: &Mention) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    fn disjoint(&self, other: &Mention) -> bool {
        self.end <= other.start || other.end <= self.start
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MarkupError {
    #[error("mention {start}..{end} is out of bounds for text of {len} characters")]
    OutOfBounds { start: usize, end: usize, len: usize },
    #[error("mention {start}..{end} is empty")]
    EmptyMention { start: usize, end: usize },
    #[error("mention {start}..{end} has cluster id 0; ids must be positive")]
    ZeroClusterId { start: usize, end: usize },
    #[error("mentions {first:?} and {second:?} cross")]
    CrossingSpans {
        first: (usize, usize),
        second: (usize, usize),
    },
    #[error("clean text contains a markup delimiter at character {position}")]
    DelimiterInText { position: usize },
}

/// Clean text plus its well-nested mentions.
///
/// Mentions are kept sorted by start, then by decreasing length. Mentions
/// sharing a span keep their nesting order, outermost first.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct AnnotatedSentence {
    clean_text: String,
    mentions: Vec<Mention>,
}

impl AnnotatedSentence {
    /// Builds a sentence, sorting the mentions into canonical order.
    ///
    /// The sort is stable, so mentions with identical spans keep the order
    /// they were given in (outermost first).
    pub fn new(clean_text: impl Into<String>, mut mentions: Vec<Mention>) -> Result<Self, MarkupError> {
        let clean_text = clean_text.into();
        if let Some(position) = clean_text.chars().position(|c| c == OPEN || c == CLOSE) {
            return Err(MarkupError::DelimiterInText { position });
        }
        let len = clean_text.chars().count();
        for m in &mentions {
            if m.end > len || m.start > m.end {
                return Err(MarkupError::OutOfBounds {
                    start: m.start,
                    end: m.end,
                    len,
                });
            }
            if m.is_empty() {
                return Err(MarkupError::EmptyMention {
                    start: m.start,
                    end: m.end,
                });
            }
            if m.cluster_id == 0 {
                return Err(MarkupError::ZeroClusterId {
                    start: m.start,
                    end: m.end,
                });
            }
        }
        mentions.sort_by_key(|m| (m.start, Reverse(m.end)));
        check_nesting(&mentions)?;
        Ok(AnnotatedSentence { clean_text, mentions })
    }

    /// A sentence with no mentions.
    pub fn plain(clean_text: impl Into<String>) -> Result<Self, MarkupError> {
        Self::new(clean_text, Vec::new())
    }

    pub fn clean_text(&self) -> &str {
        &self.clean_text
    }

    pub fn mentions(&self) -> &[Mention] {
        &self.mentions
    }

    pub fn char_len(&self) -> usize {
        self.clean_text.chars().count()
    }

    /// The text covered by `mention`.
    pub fn surface(&self, mention: &Mention) -> &str {
        char_slice(&self.clean_text, mention.start, mention.end)
    }

    pub fn has_duplicate_spans(&self) -> bool {
        self.mentions.windows(2).any(|w| w[0].span() == w[1].span())
    }

    /// Distinct cluster ids in order of first appearance.
    pub fn cluster_ids(&self) -> Vec<u32> {
        let mut ids = Vec::new();
        for m in &self.mentions {
            if !ids.contains(&m.cluster_id) {
                ids.push(m.cluster_id);
            }
        }
        ids
    }
}

fn check_nesting(sorted: &[Mention]) -> Result<(), MarkupError> {
    let mut stack: Vec<&Mention> = Vec::new();
    for m in sorted {
        while let Some(top) = stack.last() {
            if top.disjoint(m) {
                stack.pop();
            } else {
                break;
            }
        }
        if let Some(top) = stack.last() {
            if !top.contains(m) {
                return Err(MarkupError::CrossingSpans {
                    first: top.span(),
                    second: m.span(),
                });
            }
        }
        stack.push(m);
    }
    Ok(())
}

/// Slices `text` by character offsets.
pub fn char_slice(text: &str, start: usize, end: usize) -> &str {
    let mut indices = text.char_indices().map(|(i, _)| i).chain(std::iter::once(text.len()));
    let from = indices.by_ref().nth(start).unwrap_or(text.len());
    if end <= start {
        return &text[from..from];
    }
    let to = indices.nth(end - start - 1).unwrap_or(text.len());
    &text[from..to]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DiagnosticKind {
    EmptyInput,
    UnbalancedOpen,
    UnbalancedClose,
    MissingClusterId,
    NonIntegerClusterId,
    EmptyMention,
    CrossingSpans,
    DuplicateSpan,
    TrailingGarbage,
}

impl fmt::Display for DiagnosticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// A single parse issue. `position` is a character offset into the raw input.
#[derive(Clone, Debug, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("{kind} at character {position}: {message}")]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub position: usize,
    pub message: String,
}

impl Diagnostic {
    fn new(kind: DiagnosticKind, position: usize, message: impl Into<String>) -> Self {
        Diagnostic {
            kind,
            position,
            message: message.into(),
        }
    }
}

/// Issues found by [`parse_lenient`]. Empty iff the input is strict-clean.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseDiagnostics {
    pub issues: Vec<Diagnostic>,
}

impl ParseDiagnostics {
    pub fn is_empty(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn len(&self) -> usize {
        self.issues.len()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Diagnostic> {
        self.issues.iter()
    }

    pub fn has(&self, kind: DiagnosticKind) -> bool {
        self.issues.iter().any(|d| d.kind == kind)
    }
}

/// Parses a sentence in the canonical grammar, rejecting on the first issue.
pub fn parse_strict(annotated: &str) -> Result<AnnotatedSentence, Diagnostic> {
    let mut parser = Parser::new(Mode::Strict);
    parser.run(annotated)?;
    Ok(parser.finish().0)
}

/// Best-effort parse of arbitrary (model-generated) text. Never fails.
///
/// Offending delimiters are dropped one at a time and recorded; text that
/// is not markup is always kept.
pub fn parse_lenient(generated: &str) -> (AnnotatedSentence, ParseDiagnostics) {
    let mut parser = Parser::new(Mode::Lenient);
    parser.run(generated).expect("lenient parsing does not report errors");
    parser.finish()
}

/// Renders a sentence back into the inline markup.
pub fn serialize(sentence: &AnnotatedSentence) -> String {
    let mut out = String::with_capacity(sentence.clean_text.len() + sentence.mentions.len() * 6);
    let mut open: Vec<&Mention> = Vec::new();
    let mut next = sentence.mentions.iter().peekable();
    let mut chars = sentence.clean_text.chars();
    let len = sentence.char_len();
    for pos in 0..=len {
        while open.last().is_some_and(|m| m.end == pos) {
            let m = open.pop().expect("checked above");
            out.push_str(ID_DELIMITER);
            out.push_str(&m.cluster_id.to_string());
            out.push(CLOSE);
        }
        while next.peek().is_some_and(|m| m.start == pos) {
            open.push(next.next().expect("checked above"));
            out.push(OPEN);
        }
        if let Some(c) = chars.next() {
            out.push(c);
        }
    }
    out
}

/// Removes all annotation syntax recognised by [`parse_lenient`].
pub fn strip(generated: &str) -> String {
    parse_lenient(generated).0.clean_text
}

/// Collapses mentions sharing a span into the outermost one, so
/// `[[he: 1]: 2]` becomes `[he: 2]`.
pub fn simplify_duplicates(sentence: &AnnotatedSentence) -> AnnotatedSentence {
    let mut mentions: Vec<Mention> = Vec::with_capacity(sentence.mentions.len());
    for m in &sentence.mentions {
        if mentions.last().is_some_and(|prev| prev.span() == m.span()) {
            continue;
        }
        mentions.push(*m);
    }
    AnnotatedSentence {
        clean_text: sentence.clean_text.clone(),
        mentions,
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Mode {
    Strict,
    Lenient,
}

struct Frame {
    /// Character position of the `[` in the input.
    open_at: usize,
    /// Clean-text offset where the mention body starts.
    body_start: usize,
    /// Clean-text offset after the last mention closed inside this frame;
    /// the cluster id must come after it.
    tail_start: usize,
    depth: usize,
}

struct Parser {
    mode: Mode,
    clean: Vec<char>,
    stack: Vec<Frame>,
    mentions: Vec<(Mention, usize)>,
    diagnostics: Vec<Diagnostic>,
    /// End of the longest input prefix that was balanced and issue-free.
    balanced_prefix: usize,
}

enum IdTail {
    /// Canonical `: INT` suffix starting at the given clean offset.
    Canonical(usize, u32),
    /// Repairable suffix in lenient mode.
    Repaired(usize, u32, Diagnostic),
    Invalid(Diagnostic),
}

impl Parser {
    fn new(mode: Mode) -> Self {
        Parser {
            mode,
            clean: Vec::new(),
            stack: Vec::new(),
            mentions: Vec::new(),
            diagnostics: Vec::new(),
            balanced_prefix: 0,
        }
    }

    fn report(&mut self, diagnostic: Diagnostic) -> Result<(), Diagnostic> {
        match self.mode {
            Mode::Strict => Err(diagnostic),
            Mode::Lenient => {
                self.diagnostics.push(diagnostic);
                Ok(())
            }
        }
    }

    fn run(&mut self, input: &str) -> Result<(), Diagnostic> {
        if input.is_empty() {
            return self.report(Diagnostic::new(DiagnosticKind::EmptyInput, 0, "input is empty"));
        }
        let mut pos = 0;
        for c in input.chars() {
            match c {
                OPEN => self.stack.push(Frame {
                    open_at: pos,
                    body_start: self.clean.len(),
                    tail_start: self.clean.len(),
                    depth: self.stack.len(),
                }),
                CLOSE => self.close(pos)?,
                _ => self.clean.push(c),
            }
            pos += 1;
            if self.stack.is_empty() && self.diagnostics.is_empty() {
                self.balanced_prefix = pos;
            }
        }
        while let Some(frame) = self.stack.pop() {
            let open_at = frame.open_at;
            let diagnostic = Diagnostic::new(
                DiagnosticKind::UnbalancedOpen,
                open_at,
                "'[' is never closed; delimiter dropped",
            );
            if self.mode == Mode::Strict {
                // Report the earliest unclosed bracket.
                let first = self.stack.first().map_or(open_at, |f| f.open_at);
                return Err(Diagnostic {
                    position: first,
                    ..diagnostic
                });
            }
            self.diagnostics.push(diagnostic);
            self.inherit_tail(frame.tail_start);
        }
        if !self.diagnostics.is_empty() && self.balanced_prefix > 0 {
            let issues = self.diagnostics.len();
            self.diagnostics.push(Diagnostic::new(
                DiagnosticKind::TrailingGarbage,
                self.balanced_prefix,
                format!(
                    "{issues} issue(s) after a balanced prefix of {} characters",
                    self.balanced_prefix
                ),
            ));
        }
        Ok(())
    }

    fn inherit_tail(&mut self, tail: usize) {
        if let Some(parent) = self.stack.last_mut() {
            parent.tail_start = parent.tail_start.max(tail);
        }
    }

    fn close(&mut self, pos: usize) -> Result<(), Diagnostic> {
        let Some(frame) = self.stack.pop() else {
            return self.report(Diagnostic::new(
                DiagnosticKind::UnbalancedClose,
                pos,
                "']' without a matching '['; delimiter dropped",
            ));
        };
        let (id_at, cluster_id) = match self.id_tail(&frame, pos) {
            IdTail::Canonical(at, id) => (at, id),
            IdTail::Repaired(at, id, diagnostic) => {
                self.report(diagnostic)?;
                (at, id)
            }
            IdTail::Invalid(diagnostic) => {
                self.report(diagnostic)?;
                self.inherit_tail(frame.tail_start);
                return Ok(());
            }
        };
        self.clean.truncate(id_at);
        if id_at == frame.body_start {
            self.report(Diagnostic::new(
                DiagnosticKind::EmptyMention,
                frame.open_at,
                "mention has an empty body; markup dropped",
            ))?;
            self.inherit_tail(frame.tail_start);
            return Ok(());
        }
        let mention = Mention::new(frame.body_start, id_at, cluster_id);
        self.mentions.push((mention, frame.depth));
        self.inherit_tail(id_at);
        Ok(())
    }

    fn id_tail(&self, frame: &Frame, pos: usize) -> IdTail {
        let tail = &self.clean[frame.tail_start..];
        let canonical = find_last(tail, &[':', ' ']);
        if let Some(at) = canonical {
            if let Some(id) = parse_int(&tail[at + 2..]) {
                return IdTail::Canonical(frame.tail_start + at, id);
            }
        }
        if self.mode == Mode::Strict {
            return IdTail::Invalid(match canonical {
                None => Diagnostic::new(
                    DiagnosticKind::MissingClusterId,
                    pos,
                    "mention has no ': ' cluster id delimiter",
                ),
                Some(_) => Diagnostic::new(
                    DiagnosticKind::NonIntegerClusterId,
                    pos,
                    "cluster id is not a positive integer",
                ),
            });
        }
        // Lenient: accept deviant spacing around the last top-level colon.
        let kind = if canonical.is_some() {
            DiagnosticKind::NonIntegerClusterId
        } else {
            DiagnosticKind::MissingClusterId
        };
        if let Some(colon) = tail.iter().rposition(|&c| c == ':') {
            let rest: String = tail[colon + 1..].iter().collect();
            let trimmed = rest.trim();
            if !trimmed.is_empty() && trimmed.chars().all(|c| c.is_ascii_digit()) {
                if let Ok(id) = trimmed.parse::<u32>() {
                    if id > 0 {
                        return IdTail::Repaired(
                            frame.tail_start + colon,
                            id,
                            Diagnostic::new(
                                kind,
                                pos,
                                format!(
                                    "non-canonical cluster id suffix {:?}; accepted as {id}",
                                    format!(":{rest}")
                                ),
                            ),
                        );
                    }
                }
            }
        }
        IdTail::Invalid(Diagnostic::new(
            kind,
            pos,
            "mention has no usable cluster id; brackets dropped",
        ))
    }

    fn finish(self) -> (AnnotatedSentence, ParseDiagnostics) {
        let mut mentions = self.mentions;
        // Outer mentions first when spans coincide.
        mentions.sort_by_key(|(m, depth)| (m.start, Reverse(m.end), *depth));
        let sentence = AnnotatedSentence {
            clean_text: self.clean.into_iter().collect(),
            mentions: mentions.into_iter().map(|(m, _)| m).collect(),
        };
        (
            sentence,
            ParseDiagnostics {
                issues: self.diagnostics,
            },
        )
    }
}

fn find_last(haystack: &[char], needle: &[char]) -> Option<usize> {
    if haystack.len() < needle.len() {
        return None;
    }
    (0..=haystack.len() - needle.len())
        .rev()
        .find(|&i| &haystack[i..i + needle.len()] == needle)
}

/// `[1-9][0-9]*`, fitting in a u32.
fn parse_int(chars: &[char]) -> Option<u32> {
    match chars.first() {
        Some('1'..='9') => {}
        _ => return None,
    }
    if !chars.iter().all(|c| c.is_ascii_digit()) {
        return None;
    }
    chars.iter().collect::<String>().parse().ok()
}
