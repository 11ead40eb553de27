//! Similarity scores: the word-overlap baseline, NER-cosine, and the
//! context-aware entity agreement score with its pipeline.

mod baseline;
mod esas;
mod ner_cosine;
mod pipeline;

use thiserror::Error;

pub use baseline::{trigram_cosine, word_for_word, SimilarityProvider, TrigramCosine};
pub use esas::{
    classify_entities, esas_from_counts, esas_score, Category, CategoryCounts, Classification, ClassifyError,
    ContextJudge, EsasScore, Weights, WeightsError,
};
pub use ner_cosine::{ner_cosine_score, BestMatch, NerCosineBreakdown};
pub use pipeline::{
    llama_entscore, score_direct_llm, score_ner_cosine, score_word_for_word, texts, EntScoreOutcome, EntScorer,
    Method, PipelineError, ScoreFlag, ScoreResult,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScoreError {
    #[error("final report contains no words")]
    NoWords,
}
