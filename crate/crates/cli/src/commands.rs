use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use anyhow::{anyhow, Context};
use entscore::eval::{confusion_csv, evaluate, histogram_csv, histogram_svg, EvalSummary, Prediction};
use entscore::perturb::{generate_negation_llm, inject_negation_rule, PerturbError};
use entscore::report::{render_comparison_report, render_entity_html};
use entscore::scoring::{
    score_direct_llm, score_ner_cosine, score_word_for_word, CategoryCounts, EntScoreOutcome, EntScorer, Method,
    PipelineError, ScoreResult, TrigramCosine,
};
use entscore::{parse_corpus, write_corpus, Extractor, LlmGateway, Report, ReportPair, SectionSelector, Weights};
use serde::Serialize;

use crate::config::{BuildError, EngineConfig, Overrides};
use crate::{Cli, Cmd, PerturbMode};

/// Share of pairs allowed to fail before `evaluate` fails as a whole.
const MAX_ERROR_FRACTION: f64 = 0.10;

#[derive(Debug)]
pub enum Failure {
    Input(anyhow::Error),
    Backend(anyhow::Error),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Self::Input(_) => 1,
            Self::Backend(_) => 2,
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            Self::Input(e) | Self::Backend(e) => e,
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Self::Input(e)
    }
}

impl From<BuildError> for Failure {
    fn from(e: BuildError) -> Self {
        match e {
            BuildError::Input(e) => Self::Input(e),
            BuildError::Backend(e) => Self::Backend(e),
        }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        if e.is_backend() {
            Self::Backend(e.into())
        } else {
            Self::Input(e.into())
        }
    }
}

type CmdResult<T = ()> = Result<T, Failure>;

pub fn run(cli: Cli) -> CmdResult {
    let g = cli.global;
    let flags = Overrides {
        extractor: g.extractor,
        llm: g.llm,
        weights: g.weights,
        section: g.section,
        concurrency: g.concurrency,
        seed: g.seed,
    };
    let cfg = EngineConfig::load(g.config.as_deref(), &flags)?;
    log::debug!("resolved config: {cfg:?}");

    match cli.command {
        Cmd::Extract { corpus, pair_id, text, out } => extract(&cfg, corpus, pair_id, text, out),
        Cmd::Compare { corpus, pair_id, method, explain, out } => compare(&cfg, &corpus, &pair_id, method, explain, out),
        Cmd::Evaluate { corpus, method, out } => evaluate_corpus(&cfg, &corpus, method, &out),
        Cmd::Perturb { input, mode, index, with_identical, out } => perturb(&cfg, &input, mode, index, with_identical, out),
        Cmd::Visualize { corpus, pair_id, full, explain, out } => visualize(&cfg, &corpus, &pair_id, full || explain, explain, out),
    }
}

fn load_corpus(path: &Path) -> CmdResult<Vec<ReportPair>> {
    let bytes = std::fs::read(path).with_context(|| format!("reading corpus {}", path.display()))?;
    Ok(parse_corpus(&bytes).with_context(|| format!("corpus {}", path.display()))?)
}

fn find_pair(pairs: Vec<ReportPair>, id: &str) -> CmdResult<ReportPair> {
    pairs.into_iter().find(|p| p.id == id).ok_or_else(|| Failure::Input(anyhow!("no pair with id {id:?}")))
}

fn write_output(out: Option<&Path>, content: &str) -> CmdResult {
    match out {
        Some(path) => std::fs::write(path, content).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{content}"),
    }
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("output types serialize");
    s.push('\n');
    s
}

fn gateway(cfg: &EngineConfig) -> CmdResult<LlmGateway> {
    Ok(LlmGateway::new(cfg.llm.clone()).context("LLM configuration")?)
}

fn needs_extractor(method: Method) -> bool {
    matches!(method, Method::NerCosine | Method::LlamaEntScore)
}

fn section_name(s: SectionSelector) -> String {
    s.to_string()
}

// ----------------------------------------------------------------- extract

#[derive(Serialize)]
struct ExtractRow<'a> {
    id: &'a str,
    side: &'static str,
    entities: &'a [entscore::Entity],
}

fn extract(
    cfg: &EngineConfig,
    corpus: Option<PathBuf>,
    pair_id: Option<String>,
    text: Option<String>,
    out: Option<PathBuf>,
) -> CmdResult {
    let extractor = cfg.build_extractor()?;
    if let Some(text) = text {
        let set = extractor.extract(&text).map_err(|e| Failure::Backend(e.into()))?;
        return write_output(out.as_deref(), &to_json(&serde_json::json!({ "entities": set.entities() })));
    }
    let corpus = corpus.ok_or_else(|| Failure::Input(anyhow!("give --corpus or --text")))?;
    let mut pairs = load_corpus(&corpus)?;
    if let Some(id) = pair_id {
        pairs = vec![find_pair(pairs, &id)?];
    }
    let mut lines = String::new();
    for pair in &pairs {
        for (side, name) in [(entscore::Side::Preliminary, "preliminary"), (entscore::Side::Final, "final")] {
            let text = pair
                .report(side)
                .text(cfg.section)
                .with_context(|| format!("pair {:?}, {name} report", pair.id))?;
            let set = extractor
                .extract(&text)
                .with_context(|| format!("pair {:?}, {name} report", pair.id))
                .map_err(Failure::Backend)?;
            let row = ExtractRow { id: &pair.id, side: name, entities: set.entities() };
            lines.push_str(&serde_json::to_string(&row).expect("entities serialize"));
            lines.push('\n');
        }
    }
    write_output(out.as_deref(), &lines)
}

// ----------------------------------------------------------------- scoring

struct Scorers<'a> {
    cfg: &'a EngineConfig,
    extractor: Option<&'a dyn Extractor>,
    llm: &'a LlmGateway,
}

impl Scorers<'_> {
    fn entscorer(&self, explain: bool, concurrency: usize) -> EntScorer<'_> {
        EntScorer {
            extractor: self.extractor.expect("extractor built for entity methods"),
            judge: self.llm,
            explainer: explain.then_some(self.llm),
            weights: self.cfg.weights,
            section: self.cfg.section,
            concurrency,
        }
    }

    fn score(&self, method: Method, pair: &ReportPair, explain: bool, concurrency: usize) -> Result<ScoreResult, PipelineError> {
        let section = self.cfg.section;
        match method {
            Method::WordForWord => score_word_for_word(pair, section),
            Method::DirectLlm => score_direct_llm(pair, self.llm, section),
            Method::NerCosine => {
                score_ner_cosine(pair, self.extractor.expect("extractor built"), &TrigramCosine, section)
            }
            Method::LlamaEntScore => Ok(self.entscorer(explain, concurrency).run(pair)?.result),
        }
    }

    fn outcome(&self, pair: &ReportPair, explain: bool) -> Result<EntScoreOutcome, PipelineError> {
        self.entscorer(explain, self.cfg.concurrency).run(pair)
    }
}

#[derive(Serialize)]
struct CompareOutput<'a> {
    id: &'a str,
    section: String,
    result: &'a ScoreResult,
}

fn compare(
    cfg: &EngineConfig,
    corpus: &Path,
    pair_id: &str,
    method: Method,
    explain: bool,
    out: Option<PathBuf>,
) -> CmdResult {
    let pair = find_pair(load_corpus(corpus)?, pair_id)?;
    let llm = gateway(cfg)?;
    let extractor = if needs_extractor(method) { Some(cfg.build_extractor()?) } else { None };
    let scorers = Scorers { cfg, extractor: extractor.as_deref(), llm: &llm };
    let result = scorers.score(method, &pair, explain, cfg.concurrency)?;
    let output = CompareOutput { id: &pair.id, section: section_name(cfg.section), result: &result };
    write_output(out.as_deref(), &to_json(&output))
}

// ---------------------------------------------------------------- evaluate

#[derive(Serialize)]
struct PairRow {
    id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    score01: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    score10: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ground_truth: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    counts: Option<CategoryCounts>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Serialize)]
struct EvaluationReport {
    method: Method,
    section: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    weights: Option<Weights>,
    pairs_total: usize,
    pairs_failed: usize,
    /// False when too many pairs failed and the run was abandoned.
    complete: bool,
    summary: Option<EvalSummary>,
    pairs: Vec<PairRow>,
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    out.with_extension(suffix)
}

fn evaluate_corpus(cfg: &EngineConfig, corpus: &Path, method: Method, out: &Path) -> CmdResult {
    let pairs = load_corpus(corpus)?;
    if pairs.is_empty() {
        return Err(Failure::Input(anyhow!("corpus {} is empty", corpus.display())));
    }
    let llm = gateway(cfg)?;
    let extractor = if needs_extractor(method) { Some(cfg.build_extractor()?) } else { None };
    let scorers = Scorers { cfg, extractor: extractor.as_deref(), llm: &llm };

    // Pairs run in parallel; results land in corpus order.
    let slots: Vec<Mutex<Option<Result<ScoreResult, PipelineError>>>> = pairs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = cfg.concurrency.min(pairs.len());
    thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(pair) = pairs.get(i) else { break };
                let result = scorers.score(method, pair, false, 1);
                *slots[i].lock().unwrap() = Some(result);
            });
        }
    });

    let mut rows = Vec::with_capacity(pairs.len());
    let mut preds = Vec::new();
    let mut truths = Vec::new();
    let mut failed = 0;
    let mut backend_failures = 0;
    for (pair, slot) in pairs.iter().zip(slots) {
        let result = slot.into_inner().unwrap().expect("every pair scored");
        let mut row = PairRow {
            id: pair.id.clone(),
            score01: None,
            score10: None,
            ground_truth: pair.ground_truth_score,
            counts: None,
            error: None,
        };
        match result {
            Ok(r) => {
                row.score01 = r.score01;
                row.score10 = Some(r.score10);
                row.counts = r.classification.as_ref().map(|c| c.counts());
                if let Some(truth) = pair.ground_truth_score {
                    preds.push(Prediction::ten(r.score10));
                    truths.push(truth);
                }
            }
            Err(e) => {
                log::warn!("pair {:?}: {e}", pair.id);
                failed += 1;
                if e.is_backend() {
                    backend_failures += 1;
                }
                row.error = Some(e.to_string());
            }
        }
        rows.push(row);
    }

    let too_many = failed as f64 > MAX_ERROR_FRACTION * pairs.len() as f64;
    let summary = if preds.is_empty() { None } else { Some(evaluate(&preds, &truths).context("evaluation")?) };
    let report = EvaluationReport {
        method,
        section: section_name(cfg.section),
        weights: (method == Method::LlamaEntScore).then_some(cfg.weights),
        pairs_total: pairs.len(),
        pairs_failed: failed,
        complete: !too_many,
        summary,
        pairs: rows,
    };
    write_output(Some(out), &to_json(&report))?;
    if let Some(s) = &report.summary {
        write_output(Some(&sibling(out, "confusion.csv")), &confusion_csv(&s.confusion))?;
        write_output(Some(&sibling(out, "histogram.csv")), &histogram_csv(&s.predicted_histogram, &s.truth_histogram))?;
        let title = format!("Score distribution: {method:?}");
        write_output(
            Some(&sibling(out, "histogram.svg")),
            &histogram_svg(&title, &s.predicted_histogram, &s.truth_histogram),
        )?;
    }

    if too_many {
        let err = anyhow!("{failed} of {} pairs failed; partial results written to {}", pairs.len(), out.display());
        return Err(if backend_failures > 0 { Failure::Backend(err) } else { Failure::Input(err) });
    }
    if report.summary.is_none() {
        return Err(Failure::Input(anyhow!("no scored pair has a ground-truth score")));
    }
    if failed > 0 {
        log::warn!("{failed} of {} pairs failed and were skipped", pairs.len());
    }
    Ok(())
}

// ----------------------------------------------------------------- perturb

fn perturb(
    cfg: &EngineConfig,
    input: &Path,
    mode: PerturbMode,
    index: usize,
    with_identical: bool,
    out: Option<PathBuf>,
) -> CmdResult {
    let pairs = load_corpus(input)?;
    let llm = gateway(cfg)?;
    let extractor = match mode {
        PerturbMode::Rule => Some(cfg.build_extractor()?),
        PerturbMode::Llm => None,
    };

    let mut produced = Vec::new();
    let mut skipped = 0;
    let mut backend_error = None;
    for pair in &pairs {
        let report = &pair.final_report;
        let use_findings = match cfg.section {
            SectionSelector::FindingsOnly => true,
            SectionSelector::ImpressionOnly => false,
            SectionSelector::Both => report.findings_text().is_some(),
        };
        let section = if use_findings { report.findings_text() } else { report.impression_text() };
        let Some(text) = section else {
            log::warn!("pair {:?}: selected section is absent, skipped", pair.id);
            skipped += 1;
            continue;
        };

        let record = match (mode, extractor.as_deref()) {
            (PerturbMode::Rule, Some(extractor)) => match extractor.extract(text) {
                Ok(set) => inject_negation_rule(text, &set, index),
                Err(e) => {
                    backend_error.get_or_insert_with(|| format!("pair {:?}: {e}", pair.id));
                    skipped += 1;
                    continue;
                }
            },
            _ => generate_negation_llm(&llm, text),
        };
        let record = match record {
            Ok(record) => record,
            Err(PerturbError::Llm(e)) => {
                log::warn!("pair {:?}: {e}", pair.id);
                backend_error.get_or_insert_with(|| format!("pair {:?}: {e}", pair.id));
                skipped += 1;
                continue;
            }
            Err(e) => {
                log::warn!("pair {:?}: {e}, skipped", pair.id);
                skipped += 1;
                continue;
            }
        };

        let (findings, impression) = if use_findings {
            (Some(record.perturbed.clone()), report.impression_text().map(str::to_string))
        } else {
            (report.findings_text().map(str::to_string), Some(record.perturbed.clone()))
        };
        let preliminary = Report::new(findings, impression).context("building perturbed report")?;
        if with_identical {
            produced.push(ReportPair {
                id: format!("{}-same", pair.id),
                modality: pair.modality,
                preliminary: report.clone(),
                final_report: report.clone(),
                ground_truth_score: None,
            });
        }
        produced.push(ReportPair {
            id: format!("{}-neg", pair.id),
            modality: pair.modality,
            preliminary,
            final_report: report.clone(),
            ground_truth_score: None,
        });
    }

    if produced.is_empty() && backend_error.is_none() {
        return Err(Failure::Input(anyhow!("no pair could be perturbed ({skipped} skipped)")));
    }
    write_output(out.as_deref(), &write_corpus(&produced))?;
    if let Some(err) = backend_error {
        return Err(Failure::Backend(anyhow!("backend failure, {skipped} pairs skipped; first: {err}")));
    }
    if skipped > 0 {
        log::warn!("{skipped} of {} pairs skipped", pairs.len());
    }
    Ok(())
}

// --------------------------------------------------------------- visualize

fn visualize(
    cfg: &EngineConfig,
    corpus: &Path,
    pair_id: &str,
    full: bool,
    explain: bool,
    out: Option<PathBuf>,
) -> CmdResult {
    let pair = find_pair(load_corpus(corpus)?, pair_id)?;
    let llm = gateway(cfg)?;
    let extractor = cfg.build_extractor()?;
    let scorers = Scorers { cfg, extractor: Some(extractor.as_ref()), llm: &llm };
    let outcome = scorers.outcome(&pair, explain)?;
    let cls = outcome.result.classification.as_ref().expect("entity scorer classifies");
    let doc = render_entity_html(&pair, cfg.section, &outcome.final_entities, &outcome.prelim_entities, cls)
        .context("rendering")?;
    let html = if full {
        render_comparison_report(&outcome.result, &doc, None).context("rendering")?
    } else {
        doc.html
    };
    write_output(out.as_deref(), &html)
}
