//! Word tokenization shared by the extractors, scorers and perturbation code.
//!
//! A word is a maximal run of alphanumeric characters. Offsets are kept both
//! in characters (the unit used on the wire and in [`crate::Entity`] spans)
//! and in bytes (for slicing).

/// Negation cues recognised as standalone casefolded tokens.
pub const NEGATION_CUES: [&str; 3] = ["no", "not", "without"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Word<'a> {
    pub text: &'a str,
    pub char_start: usize,
    pub char_end: usize,
    pub byte_start: usize,
    pub byte_end: usize,
}

impl Word<'_> {
    pub fn folded(&self) -> String {
        self.text.to_lowercase()
    }
}

pub fn words(text: &str) -> Vec<Word<'_>> {
    let mut out = Vec::new();
    let mut current: Option<(usize, usize)> = None;
    let mut char_idx = 0;
    for (byte_idx, c) in text.char_indices() {
        if c.is_alphanumeric() {
            if current.is_none() {
                current = Some((byte_idx, char_idx));
            }
        } else if let Some((bs, cs)) = current.take() {
            out.push(Word {
                text: &text[bs..byte_idx],
                char_start: cs,
                char_end: char_idx,
                byte_start: bs,
                byte_end: byte_idx,
            });
        }
        char_idx += 1;
    }
    if let Some((bs, cs)) = current {
        out.push(Word {
            text: &text[bs..],
            char_start: cs,
            char_end: char_idx,
            byte_start: bs,
            byte_end: text.len(),
        });
    }
    out
}

/// Casefolded word tokens.
pub fn folded_words(text: &str) -> Vec<String> {
    words(text).iter().map(Word::folded).collect()
}

pub fn is_negation_cue(folded: &str) -> bool {
    NEGATION_CUES.contains(&folded)
}

/// Byte offset of a character offset, or `None` past the end.
pub fn byte_offset(text: &str, char_offset: usize) -> Option<usize> {
    if char_offset == 0 {
        return Some(0);
    }
    let mut count = 0;
    for (b, _) in text.char_indices() {
        if count == char_offset {
            return Some(b);
        }
        count += 1;
    }
    (count == char_offset).then_some(text.len())
}

/// Slice by character offsets.
pub fn char_slice(text: &str, start: usize, end: usize) -> Option<&str> {
    let bs = byte_offset(text, start)?;
    let be = byte_offset(text, end)?;
    (bs <= be).then(|| &text[bs..be])
}
