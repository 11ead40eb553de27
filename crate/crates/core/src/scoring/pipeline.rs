use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    classify_entities, esas_score, ner_cosine_score, word_for_word, Classification, ClassifyError, ContextJudge,
    NerCosineBreakdown, ScoreError, SimilarityProvider, Weights,
};
use crate::extraction::{EntitySet, ExtractError, Extractor};
use crate::llm::{LlmError, LlmGateway};
use crate::model::{pair_text, ReportPair, SectionError, SectionSelector, Side};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    WordForWord,
    DirectLlm,
    NerCosine,
    LlamaEntScore,
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "wfw" | "word-for-word" => Ok(Self::WordForWord),
            "llm" | "direct" => Ok(Self::DirectLlm),
            "cosine" | "ner-cosine" => Ok(Self::NerCosine),
            "entscore" | "llama-entscore" => Ok(Self::LlamaEntScore),
            other => Err(format!("unknown method {other:?} (wfw|llm|cosine|entscore)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreFlag {
    /// The final report yielded no entities.
    EmptyFinal,
    /// Neither report yielded entities.
    EmptyReports,
}

/// Outcome of one scoring method on one pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResult {
    pub method: Method,
    /// Score on the unit scale; absent for the direct LLM score.
    pub score01: Option<f64>,
    /// Score on the 0-10 scale, `10 × score01` when the latter is present.
    pub score10: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classification: Option<Classification>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ner_cosine: Option<NerCosineBreakdown>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Weights>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reasoning: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<ScoreFlag>,
}

impl ScoreResult {
    fn unit(method: Method, score01: f64) -> Self {
        Self {
            method,
            score01: Some(score01),
            score10: 10.0 * score01,
            classification: None,
            ner_cosine: None,
            weights: None,
            reasoning: None,
            explanation: None,
            flags: Vec::new(),
        }
    }
}

fn side_label(side: Side) -> &'static str {
    match side {
        Side::Final => "final",
        Side::Preliminary => "preliminary",
    }
}

/// A pipeline failure tagged with the stage that produced it.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("section selection ({}): {source}", side_label(*.side))]
    Section { side: Side, source: SectionError },
    #[error("extraction ({}): {source}", side_label(*.side))]
    Extraction { side: Side, source: ExtractError },
    #[error("classification: {0}")]
    Classification(#[from] ClassifyError),
    #[error("explanation: {0}")]
    Explanation(#[source] LlmError),
    #[error("direct scoring: {0}")]
    Direct(#[source] LlmError),
    #[error("scoring: {0}")]
    Score(#[from] ScoreError),
}

impl PipelineError {
    /// Whether the failure came from an external backend (model or NER
    /// worker) rather than from the input.
    pub fn is_backend(&self) -> bool {
        match self {
            Self::Extraction { .. } | Self::Explanation(_) | Self::Direct(_) => true,
            Self::Classification(e) => !matches!(e.source, LlmError::Precondition(_)),
            Self::Section { .. } | Self::Score(_) => false,
        }
    }
}

/// The comparison texts of a pair, final first.
pub fn texts(pair: &ReportPair, section: SectionSelector) -> Result<(String, String), PipelineError> {
    let get = |side| pair_text(pair, side, section).map_err(|source| PipelineError::Section { side, source });
    Ok((get(Side::Final)?, get(Side::Preliminary)?))
}

fn extract(extractor: &dyn Extractor, text: &str, side: Side) -> Result<EntitySet, PipelineError> {
    extractor.extract(text).map_err(|source| PipelineError::Extraction { side, source })
}

pub fn score_word_for_word(pair: &ReportPair, section: SectionSelector) -> Result<ScoreResult, PipelineError> {
    let (final_text, prelim_text) = texts(pair, section)?;
    Ok(ScoreResult::unit(Method::WordForWord, word_for_word(&final_text, &prelim_text)?))
}

pub fn score_direct_llm(
    pair: &ReportPair,
    llm: &LlmGateway,
    section: SectionSelector,
) -> Result<ScoreResult, PipelineError> {
    let (final_text, prelim_text) = texts(pair, section)?;
    let direct = llm.direct_similarity(&final_text, &prelim_text).map_err(PipelineError::Direct)?;
    Ok(ScoreResult {
        method: Method::DirectLlm,
        score01: None,
        score10: direct.score,
        reasoning: Some(direct.reasoning),
        ..ScoreResult::unit(Method::DirectLlm, 0.0)
    })
}

pub fn score_ner_cosine(
    pair: &ReportPair,
    extractor: &dyn Extractor,
    sim: &dyn SimilarityProvider,
    section: SectionSelector,
) -> Result<ScoreResult, PipelineError> {
    let (final_text, prelim_text) = texts(pair, section)?;
    let f = extract(extractor, &final_text, Side::Final)?;
    let p = extract(extractor, &prelim_text, Side::Preliminary)?;
    let breakdown = ner_cosine_score(&f, &p, sim);
    let mut result = ScoreResult::unit(Method::NerCosine, breakdown.score);
    if breakdown.empty_final {
        log::warn!("pair {:?}: no entities in the final report, cosine score defaults to 1.0", pair.id);
        result.flags.push(ScoreFlag::EmptyFinal);
    }
    result.ner_cosine = Some(breakdown);
    Ok(result)
}

/// Everything the entity-agreement pipeline produced for one pair.
#[derive(Debug, Clone)]
pub struct EntScoreOutcome {
    pub result: ScoreResult,
    pub final_text: String,
    pub prelim_text: String,
    pub final_entities: EntitySet,
    pub prelim_entities: EntitySet,
}

/// Extraction, context judgment, weighted agreement score and optional
/// explanation, wired together.
pub struct EntScorer<'a> {
    pub extractor: &'a dyn Extractor,
    pub judge: &'a dyn ContextJudge,
    /// When set, the score is explained by this model.
    pub explainer: Option<&'a LlmGateway>,
    pub weights: Weights,
    pub section: SectionSelector,
    pub concurrency: usize,
}

impl EntScorer<'_> {
    pub fn run(&self, pair: &ReportPair) -> Result<EntScoreOutcome, PipelineError> {
        let (final_text, prelim_text) = texts(pair, self.section)?;
        let final_entities = extract(self.extractor, &final_text, Side::Final)?;
        let prelim_entities = extract(self.extractor, &prelim_text, Side::Preliminary)?;
        let cls = classify_entities(
            &final_entities,
            &prelim_entities,
            self.judge,
            &final_text,
            &prelim_text,
            self.concurrency,
        )?;
        let esas = esas_score(&cls, &self.weights);
        let mut result = ScoreResult::unit(Method::LlamaEntScore, esas.score);
        if esas.empty_reports {
            log::warn!("pair {:?}: no entities in either report, score defaults to 1.0", pair.id);
            result.flags.push(ScoreFlag::EmptyReports);
        }
        if let Some(llm) = self.explainer {
            let rounded = (esas.score * 100.0).round() / 100.0;
            let text = llm.explain_score(rounded, &final_text, &prelim_text).map_err(PipelineError::Explanation)?;
            result.explanation = Some(text);
        }
        result.classification = Some(cls);
        result.weights = Some(self.weights);
        Ok(EntScoreOutcome { result, final_text, prelim_text, final_entities, prelim_entities })
    }
}

/// Scores a pair with the entity-agreement pipeline over both sections.
pub fn llama_entscore(
    pair: &ReportPair,
    extractor: &dyn Extractor,
    judge: &dyn ContextJudge,
    weights: Weights,
    explainer: Option<&LlmGateway>,
) -> Result<ScoreResult, PipelineError> {
    let scorer = EntScorer { extractor, judge, explainer, weights, section: SectionSelector::Both, concurrency: 1 };
    Ok(scorer.run(pair)?.result)
}
