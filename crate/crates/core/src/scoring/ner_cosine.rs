use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::SimilarityProvider;
use crate::extraction::EntitySet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestMatch {
    pub similarity: f64,
    /// Closest unmatched preliminary entity; `None` when there are none.
    pub partner: Option<String>,
}

/// NER-cosine score with its ingredients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NerCosineBreakdown {
    /// Distinct final entities found verbatim in the preliminary report.
    pub matched: usize,
    /// Best similarity for each unmatched final entity.
    pub per_entity_best: BTreeMap<String, BestMatch>,
    /// Distinct final entities.
    pub total: usize,
    pub score: f64,
    /// Set when the final report has no entities; `score` is then 1.0.
    pub empty_final: bool,
}

/// `(matched + Σ best similarity of each unmatched final entity) / total`,
/// where the best similarity is taken over the unmatched preliminary
/// entities (0 if there are none). Ties go to the lexicographically smallest
/// preliminary entity.
pub fn ner_cosine_score(
    final_set: &EntitySet,
    prelim_set: &EntitySet,
    sim: &dyn SimilarityProvider,
) -> NerCosineBreakdown {
    let final_d = final_set.distinct();
    let prelim_d = prelim_set.distinct();
    let total = final_d.len();
    let matched = final_d.intersection(prelim_d).count();
    let prelim_unmatched: Vec<&String> = prelim_d.difference(final_d).collect();

    let per_entity_best: BTreeMap<String, BestMatch> = final_d
        .difference(prelim_d)
        .map(|f| {
            let mut best = BestMatch { similarity: 0.0, partner: None };
            for p in &prelim_unmatched {
                let s = sim.similarity(f, p);
                if best.partner.is_none() || s > best.similarity {
                    best = BestMatch { similarity: s, partner: Some((*p).clone()) };
                }
            }
            (f.clone(), best)
        })
        .collect();

    if total == 0 {
        return NerCosineBreakdown { matched, per_entity_best, total, score: 1.0, empty_final: true };
    }
    let mut sum = matched as f64;
    for best in per_entity_best.values() {
        sum += best.similarity;
    }
    NerCosineBreakdown { matched, per_entity_best, total, score: sum / total as f64, empty_final: false }
}
