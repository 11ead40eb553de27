//! Entity-aware similarity scoring for pairs of radiology reports.
//!
//! A preliminary and a final report are reduced to sets of clinical
//! entities. Shared entities are checked for consistent context by a
//! language model, and the resulting matched / mismatched / missing /
//! surplus counts are combined into a weighted agreement score in [0, 1].
//!
//! ```
//! use entscore::{llama_entscore, Lexicon, LlmGateway, Report, ReportPair, Weights};
//!
//! let pair = ReportPair {
//!     id: "demo".into(),
//!     modality: Default::default(),
//!     preliminary: Report::findings("No back muscle spasm. Lumbar spine unremarkable.").unwrap(),
//!     final_report: Report::findings("Back muscle spasm. Lumbar spine unremarkable.").unwrap(),
//!     ground_truth_score: None,
//! };
//! let llm = LlmGateway::mock();
//! let result = llama_entscore(&pair, &Lexicon::builtin(), &llm, Weights::default(), None).unwrap();
//! assert!((result.score01.unwrap() - 0.4).abs() < 1e-12);
//! ```

pub mod eval;
pub mod extraction;
pub mod llm;
pub mod model;
pub mod perturb;
pub mod report;
pub mod scoring;
pub mod text;

pub use extraction::{normalize_entity, word_entities, Entity, EntitySet, ExtractError, Extractor, Lexicon};
pub use llm::{Judgment, LlmConfig, LlmError, LlmGateway};
pub use model::{parse_corpus, write_corpus, Modality, Report, ReportPair, SectionSelector, Side};
pub use scoring::{
    classify_entities, esas_from_counts, esas_score, llama_entscore, ner_cosine_score, word_for_word, Classification,
    Method, ScoreResult, Weights,
};

/// The bundled synthetic corpus: identical pairs and single-negation pairs
/// built from the bundled vocabulary.
pub const SYNTHETIC_CORPUS: &str = include_str!("../data/synthetic_corpus.jsonl");

pub fn synthetic_corpus() -> Vec<ReportPair> {
    parse_corpus(SYNTHETIC_CORPUS.as_bytes()).expect("bundled corpus is valid")
}
