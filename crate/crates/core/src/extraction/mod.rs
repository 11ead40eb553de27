//! Entity extraction: a built-in lexicon matcher and a client for external
//! NER workers speaking the line-delimited JSON protocol.

mod lexicon;
pub mod worker;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use lexicon::{Lexicon, LexiconError};
pub use worker::{WorkerConnection, WorkerError, WorkerPool};

/// One entity mention. `start`/`end` are character offsets into the source
/// text, end exclusive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub surface: String,
    pub normalized: String,
    pub start: usize,
    pub end: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

/// Entity mentions of one text, sorted by span start, plus the set of
/// distinct normalized forms used for scoring.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntitySet {
    entities: Vec<Entity>,
    distinct: BTreeSet<String>,
}

impl EntitySet {
    pub fn new(mut entities: Vec<Entity>) -> Self {
        entities.sort_by_key(|e| (e.start, e.end));
        let distinct = entities.iter().map(|e| e.normalized.clone()).collect();
        Self { entities, distinct }
    }

    /// Builds a set from bare normalized forms, without source spans.
    /// Useful where only the distinct forms matter.
    pub fn from_terms<I, S>(terms: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let distinct = terms.into_iter().map(Into::into).collect();
        Self { entities: Vec::new(), distinct }
    }

    pub fn entities(&self) -> &[Entity] {
        &self.entities
    }

    pub fn distinct(&self) -> &BTreeSet<String> {
        &self.distinct
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty() && self.distinct.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NormalizeError {
    #[error("degenerate entity {0:?}")]
    Degenerate(String),
}

/// Canonical form of an entity mention: casefolded, internal whitespace
/// collapsed to single spaces, leading and trailing punctuation stripped.
pub fn normalize_entity(raw: &str) -> Result<String, NormalizeError> {
    let folded = raw.to_lowercase();
    let collapsed = folded.split_whitespace().collect::<Vec<_>>().join(" ");
    let trimmed = collapsed.trim_matches(|c: char| !c.is_alphanumeric());
    if trimmed.is_empty() {
        Err(NormalizeError::Degenerate(raw.to_string()))
    } else {
        Ok(trimmed.to_string())
    }
}

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error(transparent)]
    Worker(#[from] WorkerError),
}

/// Anything that turns a report text into an [`EntitySet`].
pub trait Extractor: Send + Sync {
    fn extract(&self, text: &str) -> Result<EntitySet, ExtractError>;
}

impl Extractor for Lexicon {
    fn extract(&self, text: &str) -> Result<EntitySet, ExtractError> {
        Ok(self.extract(text))
    }
}

impl Extractor for WorkerPool {
    fn extract(&self, text: &str) -> Result<EntitySet, ExtractError> {
        Ok(self.extract(text)?)
    }
}

/// Every word that is not a negation cue, as a single-word entity. Used where
/// no lexicon is available to pick perturbation sites.
pub fn word_entities(text: &str) -> EntitySet {
    let entities = crate::text::words(text)
        .into_iter()
        .filter(|w| !crate::text::is_negation_cue(&w.folded()))
        .map(|w| Entity {
            surface: w.text.to_string(),
            normalized: w.folded(),
            start: w.char_start,
            end: w.char_end,
            label: None,
        })
        .collect();
    EntitySet::new(entities)
}
