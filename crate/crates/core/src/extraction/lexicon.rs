use std::collections::HashSet;

use thiserror::Error;

use super::{normalize_entity, Entity, EntitySet};
use crate::text::{self, Word};

const BUILTIN: &str = include_str!("../../data/radiology_lexicon.txt");

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LexiconError {
    #[error("lexicon is empty")]
    Empty,
    #[error("lexicon line {line}: {source}")]
    Term {
        line: usize,
        #[source]
        source: super::NormalizeError,
    },
}

/// A set of normalized phrases matched greedily, longest first, on word
/// boundaries.
#[derive(Debug, Clone)]
pub struct Lexicon {
    terms: HashSet<String>,
    /// Longest phrase length in words; bounds the match window.
    max_words: usize,
}

impl Lexicon {
    pub fn new<I, S>(phrases: I) -> Result<Self, LexiconError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut terms = HashSet::new();
        for (i, phrase) in phrases.into_iter().enumerate() {
            let term = normalize_entity(phrase.as_ref())
                .map_err(|source| LexiconError::Term { line: i + 1, source })?;
            terms.insert(term);
        }
        if terms.is_empty() {
            return Err(LexiconError::Empty);
        }
        let max_words = terms.iter().map(|t| text::words(t).len().max(1)).max().unwrap_or(1);
        Ok(Self { terms, max_words })
    }

    /// Parses a lexicon file: one phrase per line, `#` starts a comment line,
    /// blank lines ignored.
    pub fn parse(source: &str) -> Result<Self, LexiconError> {
        let mut phrases = Vec::new();
        for (i, line) in source.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let term = normalize_entity(line)
                .map_err(|source| LexiconError::Term { line: i + 1, source })?;
            phrases.push(term);
        }
        Self::new(phrases)
    }

    /// The bundled radiology term list.
    pub fn builtin() -> Self {
        Self::parse(BUILTIN).expect("bundled lexicon is valid")
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn contains(&self, normalized: &str) -> bool {
        self.terms.contains(normalized)
    }

    /// Left-to-right greedy longest match. A candidate is a run of whole
    /// words whose normalized text is a lexicon term, so matches never
    /// start or end inside a word.
    pub fn extract(&self, source: &str) -> EntitySet {
        let words = text::words(source);
        let mut entities = Vec::new();
        let mut i = 0;
        while i < words.len() {
            match self.longest_at(source, &words[i..]) {
                Some((n, entity)) => {
                    entities.push(entity);
                    i += n;
                }
                None => i += 1,
            }
        }
        EntitySet::new(entities)
    }

    fn longest_at(&self, source: &str, words: &[Word<'_>]) -> Option<(usize, Entity)> {
        let first = &words[0];
        for n in (1..=self.max_words.min(words.len())).rev() {
            let last = &words[n - 1];
            let surface = &source[first.byte_start..last.byte_end];
            let Ok(normalized) = normalize_entity(surface) else { continue };
            if self.terms.contains(&normalized) {
                return Some((
                    n,
                    Entity {
                        surface: surface.to_string(),
                        normalized,
                        start: first.char_start,
                        end: last.char_end,
                        label: None,
                    },
                ));
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lex(terms: &[&str]) -> Lexicon {
        Lexicon::new(terms).unwrap()
    }

    #[test]
    fn longest_match_wins() {
        let set = lex(&["back muscle spasm", "spasm"]).extract("No back muscle spasm.");
        assert_eq!(set.len(), 1);
        let e = &set.entities()[0];
        assert_eq!(e.normalized, "back muscle spasm");
        assert_eq!((e.start, e.end), (3, 20));
    }

    #[test]
    fn repeated_mentions_keep_spans_and_collapse() {
        let set = lex(&["effusion"]).extract("pleural effusion; effusion persists");
        let spans: Vec<_> = set.entities().iter().map(|e| (e.start, e.end)).collect();
        assert_eq!(spans, [(8, 16), (18, 26)]);
        assert_eq!(set.distinct().iter().collect::<Vec<_>>(), ["effusion"]);
    }

    #[test]
    fn requires_word_boundaries() {
        assert!(lex(&["ct"]).extract("doctor").is_empty());
        assert_eq!(lex(&["ct"]).extract("CT head.").len(), 1);
    }

    #[test]
    fn internal_punctuation_must_match() {
        let l = lex(&["back muscle spasm"]);
        assert!(l.extract("back, muscle spasm").is_empty());
        assert_eq!(l.extract("Back\n  muscle spasm").len(), 1);
    }

    #[test]
    fn surface_keeps_original_casing() {
        let set = lex(&["pleural effusion"]).extract("Small Pleural  Effusion");
        assert_eq!(set.entities()[0].surface, "Pleural  Effusion");
        assert_eq!(set.entities()[0].normalized, "pleural effusion");
    }

    #[test]
    fn empty_lexicon_rejected() {
        assert_eq!(Lexicon::parse("# nothing\n\n").unwrap_err(), LexiconError::Empty);
        assert!(matches!(Lexicon::parse("ok\n...\n"), Err(LexiconError::Term { line: 2, .. })));
    }

    #[test]
    fn builtin_lexicon_loads() {
        let l = Lexicon::builtin();
        assert!(l.contains("pleural effusion"));
        assert!(l.contains("back muscle spasm"));
    }

    proptest! {
        #[test]
        fn spans_sorted_disjoint_and_in_bounds(
            words in prop::collection::vec(
                prop::sample::select(vec!["effusion", "pleural", "no", "small", "spasm", "muscle", "back", "CT", ",", "."]),
                0..30,
            )
        ) {
            let source = words.join(" ");
            let l = lex(&["pleural effusion", "effusion", "back muscle spasm", "spasm", "ct", "small pleural effusion"]);
            let set = l.extract(&source);
            let n = source.chars().count();
            for pair in set.entities().windows(2) {
                prop_assert!(pair[0].end <= pair[1].start);
            }
            for e in set.entities() {
                prop_assert!(e.start < e.end && e.end <= n);
                prop_assert_eq!(crate::text::char_slice(&source, e.start, e.end).unwrap(), e.surface.as_str());
            }
            prop_assert!(set.distinct().len() <= set.len());
        }
    }
}
