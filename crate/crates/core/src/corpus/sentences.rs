//! Rule-based sentence segmentation.
//!
//! A sentence ends at `.`, `!` or `?` when the terminator is followed by
//! whitespace and the next non-whitespace character is an uppercase letter or
//! a digit. A period does not end a sentence when the word it closes is one of
//! [`ABBREVIATIONS`] (compared case-insensitively, leading brackets ignored).
//! The title of an abstract is always its own segment.
//!
//! Offsets are character offsets, not byte offsets, matching the annotation
//! files.

use super::AbstractRecord;

/// Words that, followed by a period, never end a sentence.
pub const ABBREVIATIONS: &[&str] = &[
    "al", "approx", "ca", "cf", "dr", "e.g", "eq", "fig", "figs", "i.e", "mr", "mrs", "ms", "no",
    "nos", "prof", "ref", "refs", "resp", "sp", "spp", "st", "var", "viz", "vol", "vs",
];

/// Half-open character range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start >= self.end
    }

    pub fn contains(&self, other: &Span) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }
}

/// Splits a document into sentence spans over [`AbstractRecord::text`].
pub fn split_sentences(doc: &AbstractRecord) -> Vec<Span> {
    let chars: Vec<char> = doc.text().chars().collect();
    let title_len = doc.title.chars().count();
    let mut spans = split_range(&chars, 0, title_len.min(chars.len()));
    if title_len < chars.len() {
        spans.extend(split_range(&chars, title_len + 1, chars.len()));
    }
    spans
}

/// Splits free text into sentence spans.
pub fn split_text(text: &str) -> Vec<Span> {
    let chars: Vec<char> = text.chars().collect();
    split_range(&chars, 0, chars.len())
}

fn split_range(chars: &[char], start: usize, end: usize) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut sentence_start = start;
    let mut i = start;
    while i < end {
        if matches!(chars[i], '.' | '!' | '?') && i + 1 < end && chars[i + 1].is_whitespace() {
            let mut next = i + 1;
            while next < end && chars[next].is_whitespace() {
                next += 1;
            }
            let opens_sentence =
                next < end && (chars[next].is_uppercase() || chars[next].is_ascii_digit());
            if opens_sentence && !(chars[i] == '.' && closes_abbreviation(chars, sentence_start, i))
            {
                push_trimmed(chars, sentence_start, i + 1, &mut spans);
                sentence_start = next;
                i = next;
                continue;
            }
        }
        i += 1;
    }
    push_trimmed(chars, sentence_start, end, &mut spans);
    spans
}

fn closes_abbreviation(chars: &[char], floor: usize, period: usize) -> bool {
    let mut word_start = period;
    while word_start > floor && !chars[word_start - 1].is_whitespace() {
        word_start -= 1;
    }
    let word: String = chars[word_start..period]
        .iter()
        .skip_while(|c| matches!(c, '(' | '[' | '{' | '"' | '\''))
        .flat_map(|c| c.to_lowercase())
        .collect();
    ABBREVIATIONS.contains(&word.as_str())
}

fn push_trimmed(chars: &[char], mut start: usize, mut end: usize, spans: &mut Vec<Span>) {
    while start < end && chars[start].is_whitespace() {
        start += 1;
    }
    while end > start && chars[end - 1].is_whitespace() {
        end -= 1;
    }
    if start < end {
        spans.push(Span::new(start, end));
    }
}
