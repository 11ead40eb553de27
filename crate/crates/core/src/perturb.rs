//! Single-negation variants of reports, either rule-based or generated by a
//! model and checked by a token diff.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extraction::EntitySet;
use crate::llm::{LlmError, LlmGateway, Request};
use crate::text::{self, Word};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationKind {
    NegationAdded,
    NegationRemoved,
}

/// A report and a copy differing by one negation. `site` is the character
/// span of the negation word: in `perturbed` when it was added, in
/// `original` when it was removed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerturbationRecord {
    pub original: String,
    pub perturbed: String,
    pub site: (usize, usize),
    pub kind: PerturbationKind,
}

#[derive(Debug, Error)]
pub enum PerturbError {
    #[error("entity index {index} out of range ({count} entities)")]
    IndexOutOfRange { index: usize, count: usize },
    #[error("entity span ({0}, {1}) is outside the report")]
    BadSpan(usize, usize),
    #[error("report is empty")]
    EmptyReport,
    #[error("generated variant rejected after {attempts} attempts: {reason}")]
    Verification { attempts: u32, reason: String },
    #[error(transparent)]
    Llm(#[from] LlmError),
}

fn at_sentence_start(before: &str) -> bool {
    let trimmed = before.trim_end();
    trimmed.is_empty()
        || trimmed.ends_with(['.', '!', '?', ':'])
        || before[trimmed.len()..].contains('\n')
}

fn upper_first(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Lowercases a leading capital unless the word looks like an acronym.
fn lower_first(s: &str) -> String {
    let mut chars = s.chars();
    match (chars.next(), chars.next()) {
        (Some(c), second) if c.is_uppercase() && !second.is_some_and(char::is_uppercase) => {
            c.to_lowercase().chain(s[c.len_utf8()..].chars()).collect()
        }
        _ => s.to_string(),
    }
}

/// Flips negation at the `index`-th entity mention: removes a directly
/// preceding "no", or inserts one. Sentence-initial casing is preserved.
pub fn inject_negation_rule(
    report: &str,
    entities: &EntitySet,
    index: usize,
) -> Result<PerturbationRecord, PerturbError> {
    let count = entities.entities().len();
    let entity = entities.entities().get(index).ok_or(PerturbError::IndexOutOfRange { index, count })?;
    let start = text::byte_offset(report, entity.start).ok_or(PerturbError::BadSpan(entity.start, entity.end))?;
    if text::byte_offset(report, entity.end).is_none() || entity.start >= entity.end {
        return Err(PerturbError::BadSpan(entity.start, entity.end));
    }

    let words = text::words(report);
    let preceding: Option<&Word<'_>> = words.iter().take_while(|w| w.byte_end <= start).last();
    let (head, tail) = report.split_at(start);

    if let Some(no) = preceding {
        let gap = &report[no.byte_end..start];
        if no.folded() == "no" && !gap.is_empty() && gap.chars().all(char::is_whitespace) {
            let capitalised = no.text.starts_with('N');
            let rest = if capitalised { upper_first(tail) } else { tail.to_string() };
            return Ok(PerturbationRecord {
                original: report.to_string(),
                perturbed: format!("{}{}", &report[..no.byte_start], rest),
                site: (no.char_start, no.char_end),
                kind: PerturbationKind::NegationRemoved,
            });
        }
    }

    let perturbed = if at_sentence_start(head) {
        format!("{head}No {}", lower_first(tail))
    } else {
        format!("{head}no {tail}")
    };
    Ok(PerturbationRecord {
        original: report.to_string(),
        perturbed,
        site: (entity.start, entity.start + 2),
        kind: PerturbationKind::NegationAdded,
    })
}

/// Result of comparing a report with a candidate single-negation variant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeCheck {
    pub ok: bool,
    /// Character span of the negation word in the longer of the two texts.
    pub site: Option<(usize, usize)>,
    pub kind: Option<PerturbationKind>,
    pub reason: Option<String>,
}

impl ChangeCheck {
    fn reject(reason: &str) -> Self {
        Self { ok: false, site: None, kind: None, reason: Some(reason.to_string()) }
    }
}

/// Accepts exactly one inserted or deleted negation word (`no`, `not`,
/// `without`) with every other word unchanged. Case and punctuation are
/// ignored.
pub fn verify_single_change(original: &str, perturbed: &str) -> ChangeCheck {
    let a = text::words(original);
    let b = text::words(perturbed);
    let fa: Vec<String> = a.iter().map(Word::folded).collect();
    let fb: Vec<String> = b.iter().map(Word::folded).collect();

    if fa == fb {
        return ChangeCheck::reject("no change");
    }
    let (longer, shorter, longer_words, kind) = if fb.len() > fa.len() {
        (&fb, &fa, &b, PerturbationKind::NegationAdded)
    } else {
        (&fa, &fb, &a, PerturbationKind::NegationRemoved)
    };
    match longer.len() - shorter.len() {
        0 => return ChangeCheck::reject("extra edit"),
        1 => {}
        _ => return ChangeCheck::reject("multiple changes"),
    }
    let i = longer.iter().zip(shorter.iter()).position(|(x, y)| x != y).unwrap_or(shorter.len());
    if longer[i + 1..] != shorter[i..] {
        return ChangeCheck::reject("extra edit");
    }
    if !text::is_negation_cue(&longer[i]) {
        return ChangeCheck::reject("not a negation change");
    }
    let w = &longer_words[i];
    ChangeCheck { ok: true, site: Some((w.char_start, w.char_end)), kind: Some(kind), reason: None }
}

/// Asks the model for a single-negation variant, retrying when the reply
/// fails [`verify_single_change`].
pub fn generate_negation_llm(llm: &LlmGateway, report: &str) -> Result<PerturbationRecord, PerturbError> {
    if report.trim().is_empty() {
        return Err(PerturbError::EmptyReport);
    }
    let attempts = llm.config().max_retries + 1;
    let mut reason = String::new();
    for _ in 0..attempts {
        let reply = llm.complete(&Request::Negation { report })?;
        let perturbed = reply.trim();
        let check = verify_single_change(report, perturbed);
        if let (true, Some(site), Some(kind)) = (check.ok, check.site, check.kind) {
            return Ok(PerturbationRecord { original: report.to_string(), perturbed: perturbed.to_string(), site, kind });
        }
        reason = check.reason.unwrap_or_default();
        log::debug!("rejected negation variant ({reason}): {perturbed:?}");
    }
    Err(PerturbError::Verification { attempts, reason })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extraction::{word_entities, Lexicon};
    use crate::llm::{Completion, LlmConfig};
    use proptest::prelude::*;

    fn lexicon() -> Lexicon {
        Lexicon::new(["back muscle spasm", "fracture", "effusion", "ct"]).unwrap()
    }

    #[test]
    fn adds_negation_at_sentence_start() {
        let text = "Back muscle spasm noted.";
        let r = inject_negation_rule(text, &lexicon().extract(text), 0).unwrap();
        assert_eq!(r.perturbed, "No back muscle spasm noted.");
        assert_eq!(r.kind, PerturbationKind::NegationAdded);
        assert_eq!(text::char_slice(&r.perturbed, r.site.0, r.site.1), Some("No"));
    }

    #[test]
    fn removes_existing_negation() {
        let text = "No fracture.";
        let r = inject_negation_rule(text, &lexicon().extract(text), 0).unwrap();
        assert_eq!(r.perturbed, "Fracture.");
        assert_eq!(r.kind, PerturbationKind::NegationRemoved);
        assert_eq!(r.site, (0, 2));
    }

    #[test]
    fn mid_sentence_and_acronyms() {
        let text = "Small effusion. CT shows fracture.";
        let set = lexicon().extract(text);
        assert_eq!(inject_negation_rule(text, &set, 0).unwrap().perturbed, "Small no effusion. CT shows fracture.");
        assert_eq!(inject_negation_rule(text, &set, 1).unwrap().perturbed, "Small effusion. No CT shows fracture.");
        assert_eq!(inject_negation_rule(text, &set, 2).unwrap().perturbed, "Small effusion. CT shows no fracture.");
    }

    #[test]
    fn index_out_of_range() {
        let text = "Effusion.";
        assert!(matches!(
            inject_negation_rule(text, &lexicon().extract(text), 1),
            Err(PerturbError::IndexOutOfRange { index: 1, count: 1 })
        ));
    }

    #[test]
    fn injecting_twice_restores_the_original() {
        for text in ["Back muscle spasm noted.", "There is a fracture.", "No effusion. CT head normal."] {
            let lex = lexicon();
            let once = inject_negation_rule(text, &lex.extract(text), 0).unwrap();
            let twice = inject_negation_rule(&once.perturbed, &lex.extract(&once.perturbed), 0).unwrap();
            assert_eq!(twice.perturbed, text);
        }
    }

    #[test]
    fn verify_cases() {
        assert_eq!(verify_single_change("Effusion.", "Effusion.").reason.as_deref(), Some("no change"));
        let ok = verify_single_change("Left effusion.", "Left no effusion.");
        assert!(ok.ok);
        assert_eq!(ok.site, Some((5, 7)));
        assert_eq!(ok.kind, Some(PerturbationKind::NegationAdded));
        assert!(verify_single_change("No fracture.", "Fracture.").ok);
        assert!(verify_single_change("Fracture seen.", "Fracture not seen.").ok);
        let extra = verify_single_change("Left effusion, mild oedema.", "Left no effusion, severe oedema.");
        assert_eq!(extra.reason.as_deref(), Some("extra edit"));
        let many = verify_single_change("Effusion, fracture.", "No effusion, no fracture.");
        assert_eq!(many.reason.as_deref(), Some("multiple changes"));
        let other = verify_single_change("Effusion.", "Large effusion.");
        assert_eq!(other.reason.as_deref(), Some("not a negation change"));
    }

    #[test]
    fn mock_generator_matches_rule() {
        let llm = LlmGateway::mock();
        for text in ["Back muscle spasm noted.", "No fracture of the femur.", "The lungs are clear."] {
            let generated = generate_negation_llm(&llm, text).unwrap();
            let rule = inject_negation_rule(text, &word_entities(text), 0).unwrap();
            assert_eq!(generated, rule);
        }
    }

    #[test]
    fn bad_model_output_is_retried_then_rejected() {
        struct TwoChanges;
        impl Completion for TwoChanges {
            fn complete(&self, _: &Request<'_>) -> Result<String, LlmError> {
                Ok("No effusion. No fracture.".into())
            }
        }
        let llm = LlmGateway::with_backend(LlmConfig::mock(), Box::new(TwoChanges));
        let err = generate_negation_llm(&llm, "Effusion. Fracture.").unwrap_err();
        assert!(matches!(&err, PerturbError::Verification { attempts: 4, reason } if reason == "multiple changes"));
    }

    proptest! {
        #[test]
        fn rule_output_always_verifies(
            words in prop::collection::vec(prop::sample::select(vec!["effusion", "fracture", "no", "small", "left", "seen", "."]), 1..20),
            index in 0usize..10,
        ) {
            let text = words.join(" ");
            let set = lexicon().extract(&text);
            prop_assume!(index < set.len());
            let a = inject_negation_rule(&text, &set, index).unwrap();
            let b = inject_negation_rule(&text, &set, index).unwrap();
            prop_assert_eq!(&a, &b);
            let check = verify_single_change(&a.original, &a.perturbed);
            prop_assert!(check.ok, "{:?} -> {:?}: {:?}", a.original, a.perturbed, check.reason);
            prop_assert_eq!(check.site, Some(a.site));
            prop_assert_eq!(check.kind, Some(a.kind));
        }
    }
}
