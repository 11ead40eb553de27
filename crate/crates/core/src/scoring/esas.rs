//! Four-way entity classification and the weighted agreement score.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extraction::EntitySet;
use crate::llm::{Judgment, LlmError, LlmGateway};

/// Penalty weights for the three disagreement categories.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub mismatch: f64,
    pub missing: f64,
    pub surplus: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self { mismatch: 1.5, missing: 2.0, surplus: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WeightsError {
    #[error("weight `{0}` must be a finite number > 0, got {1}")]
    NotPositive(&'static str, f64),
    #[error("unknown weight key {0:?} (missing|mismatch|surplus)")]
    UnknownKey(String),
    #[error("malformed weight entry {0:?}, expected key=value")]
    Malformed(String),
}

impl Weights {
    pub fn new(mismatch: f64, missing: f64, surplus: f64) -> Result<Self, WeightsError> {
        let w = Self { mismatch, missing, surplus };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), WeightsError> {
        for (name, v) in [("mismatch", self.mismatch), ("missing", self.missing), ("surplus", self.surplus)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(WeightsError::NotPositive(name, v));
            }
        }
        Ok(())
    }

    /// Applies `key=value` overrides such as `missing=2,surplus=0.5` on top
    /// of `self`.
    pub fn with_overrides(mut self, spec: &str) -> Result<Self, WeightsError> {
        for entry in spec.split(',').map(str::trim).filter(|e| !e.is_empty()) {
            let (key, value) = entry.split_once('=').ok_or_else(|| WeightsError::Malformed(entry.into()))?;
            let value: f64 = value.trim().parse().map_err(|_| WeightsError::Malformed(entry.into()))?;
            match key.trim() {
                "missing" => self.missing = value,
                "mismatch" => self.mismatch = value,
                "surplus" => self.surplus = value,
                other => return Err(WeightsError::UnknownKey(other.into())),
            }
        }
        self.validate()?;
        Ok(self)
    }
}

impl FromStr for Weights {
    type Err = WeightsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Weights::default().with_overrides(s)
    }
}

impl fmt::Display for Weights {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "missing={},mismatch={},surplus={}", self.missing, self.mismatch, self.surplus)
    }
}

/// Partition of the distinct entities of both reports.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Classification {
    /// Shared, same context.
    pub matched: BTreeSet<String>,
    /// Shared, different context.
    pub mismatched: BTreeSet<String>,
    /// Final report only.
    pub missing: BTreeSet<String>,
    /// Preliminary report only.
    pub surplus: BTreeSet<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CategoryCounts {
    pub matched: usize,
    pub mismatched: usize,
    pub missing: usize,
    pub surplus: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Matched,
    Mismatched,
    Missing,
    Surplus,
}

impl Category {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Matched => "matched",
            Self::Mismatched => "mismatched",
            Self::Missing => "missing",
            Self::Surplus => "surplus",
        }
    }
}

impl Classification {
    pub fn counts(&self) -> CategoryCounts {
        CategoryCounts {
            matched: self.matched.len(),
            mismatched: self.mismatched.len(),
            missing: self.missing.len(),
            surplus: self.surplus.len(),
        }
    }

    pub fn category_of(&self, normalized: &str) -> Option<Category> {
        if self.matched.contains(normalized) {
            Some(Category::Matched)
        } else if self.mismatched.contains(normalized) {
            Some(Category::Mismatched)
        } else if self.missing.contains(normalized) {
            Some(Category::Missing)
        } else if self.surplus.contains(normalized) {
            Some(Category::Surplus)
        } else {
            None
        }
    }
}

/// Decides whether a shared entity is used in the same context in both
/// reports.
pub trait ContextJudge: Sync {
    fn judge(&self, entity: &str, final_text: &str, prelim_text: &str) -> Result<Judgment, LlmError>;
}

impl ContextJudge for LlmGateway {
    fn judge(&self, entity: &str, final_text: &str, prelim_text: &str) -> Result<Judgment, LlmError> {
        self.judge_entity_context(entity, final_text, prelim_text).map(|j| j.value)
    }
}

impl<F> ContextJudge for F
where
    F: Fn(&str, &str, &str) -> Result<Judgment, LlmError> + Sync,
{
    fn judge(&self, entity: &str, final_text: &str, prelim_text: &str) -> Result<Judgment, LlmError> {
        self(entity, final_text, prelim_text)
    }
}

#[derive(Debug, Error)]
#[error("context judgment for {entity:?} failed: {source}")]
pub struct ClassifyError {
    pub entity: String,
    #[source]
    pub source: LlmError,
}

/// Splits the distinct entities into the four categories. The judge is
/// called once per shared entity; up to `concurrency` calls run at once.
pub fn classify_entities(
    final_set: &EntitySet,
    prelim_set: &EntitySet,
    judge: &dyn ContextJudge,
    final_text: &str,
    prelim_text: &str,
    concurrency: usize,
) -> Result<Classification, ClassifyError> {
    let final_d = final_set.distinct();
    let prelim_d = prelim_set.distinct();
    let shared: Vec<&String> = final_d.intersection(prelim_d).collect();

    let judge_one = |entity: &str| {
        judge
            .judge(entity, final_text, prelim_text)
            .map_err(|source| ClassifyError { entity: entity.to_string(), source })
    };

    let verdicts: Vec<Result<Judgment, ClassifyError>> = if concurrency <= 1 || shared.len() <= 1 {
        shared.iter().map(|e| judge_one(e)).collect()
    } else {
        let next = AtomicUsize::new(0);
        let mut slots: Vec<Option<Result<Judgment, ClassifyError>>> = (0..shared.len()).map(|_| None).collect();
        std::thread::scope(|s| {
            let workers: Vec<_> = (0..concurrency.min(shared.len()))
                .map(|_| {
                    s.spawn(|| {
                        let mut done = Vec::new();
                        loop {
                            let i = next.fetch_add(1, Ordering::Relaxed);
                            let Some(entity) = shared.get(i) else { break done };
                            done.push((i, judge_one(entity)));
                        }
                    })
                })
                .collect();
            for w in workers {
                for (i, r) in w.join().expect("judge worker panicked") {
                    slots[i] = Some(r);
                }
            }
        });
        slots.into_iter().map(|r| r.expect("every shared entity judged")).collect()
    };

    let mut cls = Classification {
        missing: final_d.difference(prelim_d).cloned().collect(),
        surplus: prelim_d.difference(final_d).cloned().collect(),
        ..Classification::default()
    };
    for (entity, verdict) in shared.into_iter().zip(verdicts) {
        match verdict? {
            Judgment::Same => cls.matched.insert(entity.clone()),
            Judgment::Different => cls.mismatched.insert(entity.clone()),
        };
    }
    Ok(cls)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EsasScore {
    pub score: f64,
    /// No entities in either report; `score` is then 1.0.
    pub empty_reports: bool,
}

/// `matched / (matched + Σ weight·count)` over mismatched, missing and
/// surplus entities.
pub fn esas_from_counts(counts: CategoryCounts, w: &Weights) -> EsasScore {
    let CategoryCounts { matched, mismatched, missing, surplus } = counts;
    if matched + mismatched + missing + surplus == 0 {
        return EsasScore { score: 1.0, empty_reports: true };
    }
    if matched == 0 {
        return EsasScore { score: 0.0, empty_reports: false };
    }
    let m = matched as f64;
    let penalty = w.mismatch * mismatched as f64 + w.missing * missing as f64 + w.surplus * surplus as f64;
    EsasScore { score: m / (m + penalty), empty_reports: false }
}

pub fn esas_score(cls: &Classification, w: &Weights) -> EsasScore {
    esas_from_counts(cls.counts(), w)
}
