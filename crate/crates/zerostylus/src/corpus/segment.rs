//! Lossless period-based segmentation.
//!
//! Paragraphs are split on blank lines (a whitespace run containing at least
//! two newlines). Sentences are split on terminal punctuation (`.`, `!`, `?`)
//! followed by whitespace, with an optional abbreviation exception list.
//! Semicolons and colons are treated as non-terminal. Every separator is
//! recorded so reassembly reproduces the input byte-for-byte.

use std::collections::BTreeSet;

use super::{CorpusError, Paragraph, RawDocument, SegmentedDocument, SentenceUnit};

/// Splitting configuration. The abbreviation list suppresses a sentence
/// boundary when the whitespace-delimited token ending at the period matches
/// an entry exactly (e.g. `"e.g."`). Empty by default.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SegmentationRules {
    pub abbreviations: BTreeSet<String>,
}

impl SegmentationRules {
    pub fn with_abbreviations<I, S>(abbrevs: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            abbreviations: abbrevs.into_iter().map(Into::into).collect(),
        }
    }
}

const TERMINALS: [char; 3] = ['.', '!', '?'];

/// Split a document into paragraphs and sentence units.
pub fn segment(doc: &RawDocument, rules: &SegmentationRules) -> Result<SegmentedDocument, CorpusError> {
    if doc.body.trim().is_empty() {
        return Err(CorpusError::EmptyDocument {
            doc_id: doc.doc_id.clone(),
        });
    }

    let chars: Vec<(usize, char)> = doc.body.char_indices().collect();
    let n = chars.len();
    let byte_at = |idx: usize| -> usize {
        if idx < n {
            chars[idx].0
        } else {
            doc.body.len()
        }
    };

    let mut i = 0;
    while i < n && chars[i].1.is_whitespace() {
        i += 1;
    }
    let leading = doc.body[..byte_at(i)].to_string();

    let mut paragraphs = Vec::new();
    while i < n {
        let (content_end, sep_end) = paragraph_bounds(&chars, i);
        let sentences = split_sentences(doc, &chars, i, content_end, rules, paragraphs.len());
        let separator_after = doc.body[byte_at(content_end)..byte_at(sep_end)].to_string();
        paragraphs.push(Paragraph {
            para_id: format!("{}#p{}", doc.doc_id, paragraphs.len()),
            sentences,
            separator_after,
        });
        i = sep_end;
    }

    let segmented = SegmentedDocument {
        doc_id: doc.doc_id.clone(),
        leading,
        paragraphs,
    };
    debug_assert_eq!(segmented.reconstruct(), doc.body);
    Ok(segmented)
}

/// Find the end of the paragraph starting at `start` (a non-whitespace
/// index). Returns `(content_end, sep_end)`: the paragraph content occupies
/// `[start, content_end)` and its trailing separator `[content_end, sep_end)`.
fn paragraph_bounds(chars: &[(usize, char)], start: usize) -> (usize, usize) {
    let n = chars.len();
    let mut j = start;
    loop {
        while j < n && !chars[j].1.is_whitespace() {
            j += 1;
        }
        if j == n {
            return (n, n);
        }
        let run_start = j;
        let mut newlines = 0;
        while j < n && chars[j].1.is_whitespace() {
            if chars[j].1 == '\n' {
                newlines += 1;
            }
            j += 1;
        }
        if j == n || newlines >= 2 {
            return (run_start, j);
        }
        // Intra-paragraph whitespace; keep scanning.
    }
}

/// Split paragraph content `[start, end)` into sentence units. `end` always
/// follows a non-whitespace character.
fn split_sentences(
    doc: &RawDocument,
    chars: &[(usize, char)],
    start: usize,
    end: usize,
    rules: &SegmentationRules,
    para_ordinal: usize,
) -> Vec<SentenceUnit> {
    let byte_at = |idx: usize| -> usize {
        if idx < chars.len() {
            chars[idx].0
        } else {
            doc.body.len()
        }
    };
    let mut sentences = Vec::new();
    let mut push_sentence = |s: usize, e: usize, sep_e: usize| {
        let span = (byte_at(s), byte_at(e));
        sentences.push(SentenceUnit {
            sent_id: format!(
                "{}#p{}#s{}",
                doc.doc_id,
                para_ordinal,
                sentences.len()
            ),
            text: doc.body[span.0..span.1].to_string(),
            char_span: span,
            separator_after: doc.body[span.1..byte_at(sep_e)].to_string(),
        });
    };

    let mut sent_start = start;
    let mut t = start;
    while t < end {
        let c = chars[t].1;
        if TERMINALS.contains(&c)
            && t + 1 < end
            && chars[t + 1].1.is_whitespace()
            && !is_abbreviation(doc, chars, start, t, rules)
        {
            let mut u = t + 1;
            while u < end && chars[u].1.is_whitespace() {
                u += 1;
            }
            push_sentence(sent_start, t + 1, u);
            sent_start = u;
            t = u;
        } else {
            t += 1;
        }
    }
    if sent_start < end {
        push_sentence(sent_start, end, end);
    }
    sentences
}

/// True when the whitespace-delimited token ending at (and including) the
/// period at `dot_idx` matches an abbreviation exactly.
fn is_abbreviation(
    doc: &RawDocument,
    chars: &[(usize, char)],
    para_start: usize,
    dot_idx: usize,
    rules: &SegmentationRules,
) -> bool {
    if rules.abbreviations.is_empty() || chars[dot_idx].1 != '.' {
        return false;
    }
    let mut tok_start = dot_idx;
    while tok_start > para_start && !chars[tok_start - 1].1.is_whitespace() {
        tok_start -= 1;
    }
    let token = &doc.body[chars[tok_start].0..chars[dot_idx].0 + '.'.len_utf8()];
    rules.abbreviations.contains(token)
}
