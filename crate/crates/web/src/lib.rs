//! WebAssembly entry points for the demo page in `www/`. Everything runs
//! locally with the bundled lexicon and the deterministic mock judge; no
//! network access is involved.
//!
//! Each export returns a JSON string. The `*_json` functions hold the logic
//! and are what the native tests exercise.

use std::sync::OnceLock;

use entscore::llm::mock_judgment;
use entscore::perturb::inject_negation_rule;
use entscore::report::render_texts;
use entscore::scoring::{classify_entities, esas_score, ner_cosine_score, word_for_word, TrigramCosine};
use entscore::{Judgment, Lexicon, LlmError, Weights};
use serde_json::json;
use wasm_bindgen::prelude::*;

fn lexicon() -> &'static Lexicon {
    static LEXICON: OnceLock<Lexicon> = OnceLock::new();
    LEXICON.get_or_init(Lexicon::builtin)
}

fn mock_judge(entity: &str, final_text: &str, prelim_text: &str) -> Result<Judgment, LlmError> {
    Ok(mock_judgment(entity, final_text, prelim_text))
}

/// Entity classification, weighted agreement score and highlighted panels.
pub fn compare_json(
    final_text: &str,
    prelim_text: &str,
    missing: f64,
    mismatch: f64,
    surplus: f64,
) -> Result<String, String> {
    let weights = Weights::new(mismatch, missing, surplus).map_err(|e| e.to_string())?;
    let lex = lexicon();
    let final_entities = lex.extract(final_text);
    let prelim_entities = lex.extract(prelim_text);
    let cls = classify_entities(&final_entities, &prelim_entities, &mock_judge, final_text, prelim_text, 1)
        .map_err(|e| e.to_string())?;
    let score = esas_score(&cls, &weights);
    let doc = render_texts("demo", final_text, prelim_text, &final_entities, &prelim_entities, &cls)
        .map_err(|e| e.to_string())?;
    Ok(json!({
        "score01": score.score,
        "score10": score.score * 10.0,
        "empty": score.empty_reports,
        "counts": cls.counts(),
        "classification": cls,
        "html": doc.body,
    })
    .to_string())
}

/// The three reference scores on the 0-10 scale. Word overlap is `null`
/// when the final report has no words.
pub fn baselines_json(final_text: &str, prelim_text: &str) -> String {
    let lex = lexicon();
    let wfw = word_for_word(final_text, prelim_text).ok();
    let cosine = ner_cosine_score(&lex.extract(final_text), &lex.extract(prelim_text), &TrigramCosine);
    json!({
        "word_for_word": wfw.map(|s| s * 10.0),
        "ner_cosine": cosine.score * 10.0,
        "mock_direct": wfw.map(|s| (s * 100.0).round() / 10.0),
    })
    .to_string()
}

/// Flips negation at the `index`-th lexicon entity of `report`.
pub fn negate_json(report: &str, index: usize) -> Result<String, String> {
    let entities = lexicon().extract(report);
    let record = inject_negation_rule(report, &entities, index).map_err(|e| e.to_string())?;
    Ok(json!({
        "perturbed": record.perturbed,
        "site": [record.site.0, record.site.1],
        "kind": record.kind,
        "entities": entities.len(),
    })
    .to_string())
}

#[wasm_bindgen]
pub fn compare(final_text: &str, prelim_text: &str, missing: f64, mismatch: f64, surplus: f64) -> Result<String, JsError> {
    compare_json(final_text, prelim_text, missing, mismatch, surplus).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn baselines(final_text: &str, prelim_text: &str) -> String {
    baselines_json(final_text, prelim_text)
}

#[wasm_bindgen]
pub fn negate(report: &str, index: usize) -> Result<String, JsError> {
    negate_json(report, index).map_err(|e| JsError::new(&e))
}
