//! Deterministic stand-in for a hosted model.
//!
//! Rules:
//! - context judgment: "different" iff exactly one report has a negation cue
//!   (`no`, `not`, `without`) among the three words right before some
//!   mention of the entity, otherwise "same";
//! - direct score: ten times the word-for-word overlap, one decimal;
//! - explanation: fixed template over the score and the number of bundled
//!   lexicon terms both reports mention;
//! - negation variant: the rule-based injector at the first non-cue word.

use std::sync::OnceLock;

use super::{Completion, Judgment, LlmError, Request};
use crate::extraction::{word_entities, Lexicon};
use crate::text;

const CUE_WINDOW: usize = 3;

pub const MOCK_REASONING: &str = "Mock backend: score reflects shared vocabulary between the two reports.";

#[derive(Debug, Clone, Copy, Default)]
pub struct MockBackend;

impl Completion for MockBackend {
    fn complete(&self, request: &Request<'_>) -> Result<String, LlmError> {
        Ok(match *request {
            Request::Raw(prompt) => format!("Mock reply to a {}-character prompt.", prompt.chars().count()),
            Request::EntityContext { entity, report1, report2 } => match mock_judgment(entity, report1, report2) {
                Judgment::Same => "same".to_string(),
                Judgment::Different => "different".to_string(),
            },
            Request::DirectScore { report1, report2 } => {
                let overlap = crate::scoring::word_for_word(report1, report2).unwrap_or(0.0);
                let score = (overlap * 100.0).round() / 10.0;
                format!("Score: {score:.1}, Reasoning: {MOCK_REASONING}")
            }
            Request::Explain { score, report1, report2 } => {
                let k = shared_lexicon_terms(report1, report2);
                format!(
                    "Reports share {k} matched findings in the bundled vocabulary. \
                     The similarity score of {score:.2} reflects how much of the final report's \
                     technical content the preliminary report reproduces in the same context."
                )
            }
            Request::Negation { report } => {
                let sites = word_entities(report);
                match crate::perturb::inject_negation_rule(report, &sites, 0) {
                    Ok(record) => record.perturbed,
                    Err(_) => report.to_string(),
                }
            }
        })
    }
}

/// The mock's context rule, exposed so callers can use it without going
/// through a gateway.
pub fn mock_judgment(entity: &str, report1: &str, report2: &str) -> Judgment {
    if negated_mention(report1, entity) != negated_mention(report2, entity) {
        Judgment::Different
    } else {
        Judgment::Same
    }
}

/// Word-index positions where the entity's words occur in `report`.
fn occurrences(report_words: &[String], entity_words: &[String]) -> Vec<usize> {
    if entity_words.is_empty() || entity_words.len() > report_words.len() {
        return Vec::new();
    }
    report_words
        .windows(entity_words.len())
        .enumerate()
        .filter(|(_, w)| *w == entity_words)
        .map(|(i, _)| i)
        .collect()
}

/// Whether the entity occurs as a run of whole words in `report`.
pub(crate) fn mentions(report: &str, entity: &str) -> bool {
    !occurrences(&text::folded_words(report), &text::folded_words(entity)).is_empty()
}

fn negated_mention(report: &str, entity: &str) -> bool {
    let words = text::folded_words(report);
    occurrences(&words, &text::folded_words(entity))
        .into_iter()
        .any(|i| words[i.saturating_sub(CUE_WINDOW)..i].iter().any(|w| text::is_negation_cue(w)))
}

fn shared_lexicon_terms(a: &str, b: &str) -> usize {
    static LEXICON: OnceLock<Lexicon> = OnceLock::new();
    let lexicon = LEXICON.get_or_init(Lexicon::builtin);
    let a = lexicon.extract(a);
    let b = lexicon.extract(b);
    a.distinct().intersection(b.distinct()).count()
}
