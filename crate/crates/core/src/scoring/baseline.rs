use std::collections::{HashMap, HashSet};

use super::ScoreError;
use crate::text;

/// Share of the final report's distinct words that also appear in the
/// preliminary report. Words are casefolded alphanumeric runs.
pub fn word_for_word(final_text: &str, prelim_text: &str) -> Result<f64, ScoreError> {
    let final_types: HashSet<String> = text::folded_words(final_text).into_iter().collect();
    if final_types.is_empty() {
        return Err(ScoreError::NoWords);
    }
    let prelim_types: HashSet<String> = text::folded_words(prelim_text).into_iter().collect();
    let shared = final_types.intersection(&prelim_types).count();
    Ok(shared as f64 / final_types.len() as f64)
}

/// Pluggable similarity between two normalized entities, in `[0, 1]`.
pub trait SimilarityProvider: Send + Sync {
    fn similarity(&self, a: &str, b: &str) -> f64;
}

impl<F> SimilarityProvider for F
where
    F: Fn(&str, &str) -> f64 + Send + Sync,
{
    fn similarity(&self, a: &str, b: &str) -> f64 {
        self(a, b)
    }
}

/// Cosine similarity of character-trigram count vectors, each string padded
/// with one space on both sides.
#[derive(Debug, Clone, Copy, Default)]
pub struct TrigramCosine;

impl SimilarityProvider for TrigramCosine {
    fn similarity(&self, a: &str, b: &str) -> f64 {
        trigram_cosine(a, b)
    }
}

fn trigram_counts(s: &str) -> HashMap<[char; 3], u32> {
    let padded: Vec<char> = std::iter::once(' ').chain(s.chars()).chain(std::iter::once(' ')).collect();
    let mut counts = HashMap::new();
    for w in padded.windows(3) {
        *counts.entry([w[0], w[1], w[2]]).or_insert(0) += 1;
    }
    counts
}

pub fn trigram_cosine(a: &str, b: &str) -> f64 {
    if a == b {
        return 1.0;
    }
    let ca = trigram_counts(a);
    let cb = trigram_counts(b);
    let dot: f64 = ca.iter().filter_map(|(g, &x)| cb.get(g).map(|&y| f64::from(x) * f64::from(y))).sum();
    let norm = |c: &HashMap<[char; 3], u32>| c.values().map(|&x| f64::from(x).powi(2)).sum::<f64>().sqrt();
    let denom = norm(&ca) * norm(&cb);
    if denom == 0.0 {
        return 0.0;
    }
    // Distinct strings never score a full 1.0, even with proportional counts.
    (dot / denom).clamp(0.0, 1.0 - f64::EPSILON)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent route: list every trigram as a string, count by linear
    /// scan, and sum over the union of trigram kinds.
    fn oracle(a: &str, b: &str) -> f64 {
        fn grams(s: &str) -> Vec<String> {
            let p: Vec<char> = format!(" {s} ").chars().collect();
            (0..p.len() - 2).map(|i| p[i..i + 3].iter().collect()).collect()
        }
        let (ga, gb) = (grams(a), grams(b));
        let mut kinds: Vec<String> = ga.iter().chain(gb.iter()).cloned().collect();
        kinds.sort();
        kinds.dedup();
        let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
        for k in &kinds {
            let x = ga.iter().filter(|g| *g == k).count() as f64;
            let y = gb.iter().filter(|g| *g == k).count() as f64;
            dot += x * y;
            na += x * x;
            nb += y * y;
        }
        dot / (na.sqrt() * nb.sqrt())
    }

    #[test]
    fn identity_and_orthogonality() {
        assert_eq!(trigram_cosine("effusion", "effusion"), 1.0);
        assert_eq!(trigram_cosine("abc", "xyz"), 0.0);
    }

    #[test]
    fn pleural_effusion_against_effusion() {
        // " pleural effusion " has 16 trigrams, all distinct; " effusion " has 8,
        // all of which occur in the first. cos = 8 / sqrt(16 * 8) = 1/sqrt(2).
        let expected = oracle("pleural effusion", "effusion");
        assert!((expected - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert!((trigram_cosine("pleural effusion", "effusion") - expected).abs() < 1e-12);
    }

    #[test]
    fn word_for_word_examples() {
        assert_eq!(word_for_word("Mild oedema.", "mild OEDEMA").unwrap(), 1.0);
        assert_eq!(word_for_word("effusion", "fracture").unwrap(), 0.0);
        assert!((word_for_word("no acute fracture", "acute fracture seen").unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(word_for_word("...", "x"), Err(ScoreError::NoWords));
    }

    proptest! {
        #[test]
        fn trigram_matches_oracle_and_is_symmetric(a in "[a-e ]{1,12}", b in "[a-e ]{1,12}") {
            let s = trigram_cosine(&a, &b);
            prop_assert!((0.0..=1.0).contains(&s));
            prop_assert_eq!(s, trigram_cosine(&b, &a));
            if a != b {
                prop_assert!(s < 1.0);
                prop_assert!((s - oracle(&a, &b)).abs() < 1e-9);
            }
        }

        #[test]
        fn word_for_word_ignores_order_and_case(
            words in prop::collection::vec("[a-d]{1,4}", 1..10),
            other in prop::collection::vec("[a-d]{1,4}", 0..10),
        ) {
            let base = word_for_word(&words.join(" "), &other.join(" ")).unwrap();
            let mut shuffled = words.clone();
            shuffled.reverse();
            let upper = other.join(" ").to_uppercase();
            prop_assert_eq!(base, word_for_word(&shuffled.join(" "), &upper).unwrap());
        }
    }
}
