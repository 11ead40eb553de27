//! Agreement between predicted scores and 0-10 ground truth.
//!
//! Scores are mapped to integer classes 0..=10 with half-up rounding (unit
//! scores are scaled by ten first). Precision, recall and F1 are
//! macro-averaged over the classes that occur in the ground truth; a class
//! that is never predicted has precision 0.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const CLASSES: usize = 11;

/// Absorbs representation error such as `0.95 * 10 = 9.499999…`.
const ROUNDING_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    /// Scores in `[0, 1]`.
    Unit,
    /// Scores in `[0, 10]`.
    Ten,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub score: f64,
    pub scale: Scale,
}

impl Prediction {
    pub fn unit(score: f64) -> Self {
        Self { score, scale: Scale::Unit }
    }

    pub fn ten(score: f64) -> Self {
        Self { score, scale: Scale::Ten }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("score {score} outside the {scale:?} range")]
    OutOfRange { score: f64, scale: Scale },
    #[error("{preds} predictions but {truths} ground-truth scores")]
    LengthMismatch { preds: usize, truths: usize },
    #[error("nothing to evaluate")]
    Empty,
}

pub fn round_to_class(score: f64, scale: Scale) -> Result<usize, EvalError> {
    let max = match scale {
        Scale::Unit => 1.0,
        Scale::Ten => 10.0,
    };
    if !(0.0..=max).contains(&score) {
        return Err(EvalError::OutOfRange { score, scale });
    }
    let x = if scale == Scale::Unit { score * 10.0 } else { score };
    Ok(((x + 0.5 + ROUNDING_SLACK).floor() as usize).min(CLASSES - 1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: usize,
    pub support: usize,
    pub predicted: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub n: usize,
    pub accuracy: f64,
    pub accuracy_pm1: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// `confusion[truth][predicted]`.
    pub confusion: [[usize; CLASSES]; CLASSES],
    pub predicted_histogram: [usize; CLASSES],
    pub truth_histogram: [usize; CLASSES],
    /// Metrics for every class present in the ground truth.
    pub per_class: Vec<ClassMetrics>,
}

/// Per-class and macro-averaged precision/recall/F1 from a confusion matrix.
pub fn macro_prf(confusion: &[[usize; CLASSES]; CLASSES]) -> (Vec<ClassMetrics>, f64, f64, f64) {
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let per_class: Vec<ClassMetrics> = (0..CLASSES)
        .filter_map(|c| {
            let support: usize = confusion[c].iter().sum();
            if support == 0 {
                return None;
            }
            let predicted: usize = confusion.iter().map(|row| row[c]).sum();
            let tp = confusion[c][c];
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
            Some(ClassMetrics { class: c, support, predicted, precision, recall, f1 })
        })
        .collect();
    let k = per_class.len() as f64;
    let mean = |f: fn(&ClassMetrics) -> f64| if k == 0.0 { 0.0 } else { per_class.iter().map(f).sum::<f64>() / k };
    let (p, r, f) = (mean(|m| m.precision), mean(|m| m.recall), mean(|m| m.f1));
    (per_class, p, r, f)
}

pub fn evaluate(preds: &[Prediction], truths: &[f64]) -> Result<EvalSummary, EvalError> {
    if preds.len() != truths.len() {
        return Err(EvalError::LengthMismatch { preds: preds.len(), truths: truths.len() });
    }
    if preds.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut confusion = [[0usize; CLASSES]; CLASSES];
    let mut exact = 0;
    let mut within_one = 0;
    for (pred, &truth) in preds.iter().zip(truths) {
        let p = round_to_class(pred.score, pred.scale)?;
        let t = round_to_class(truth, Scale::Ten)?;
        confusion[t][p] += 1;
        exact += usize::from(p == t);
        within_one += usize::from(p.abs_diff(t) <= 1);
    }
    let n = preds.len();
    let mut predicted_histogram = [0; CLASSES];
    let mut truth_histogram = [0; CLASSES];
    for t in 0..CLASSES {
        for p in 0..CLASSES {
            truth_histogram[t] += confusion[t][p];
            predicted_histogram[p] += confusion[t][p];
        }
    }
    let (per_class, precision, recall, f1) = macro_prf(&confusion);
    Ok(EvalSummary {
        n,
        accuracy: exact as f64 / n as f64,
        accuracy_pm1: within_one as f64 / n as f64,
        precision,
        recall,
        f1,
        confusion,
        predicted_histogram,
        truth_histogram,
        per_class,
    })
}

/// Count of scores per rounded class.
pub fn score_distribution(scores: &[Prediction]) -> Result<[usize; CLASSES], EvalError> {
    if scores.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut hist = [0; CLASSES];
    for s in scores {
        hist[round_to_class(s.score, s.scale)?] += 1;
    }
    Ok(hist)
}

/// Confusion matrix as CSV, one row per ground-truth class.
pub fn confusion_csv(confusion: &[[usize; CLASSES]; CLASSES]) -> String {
    let mut out = String::from("truth\\predicted");
    for c in 0..CLASSES {
        let _ = write!(out, ",{c}");
    }
    out.push('\n');
    for (t, row) in confusion.iter().enumerate() {
        let _ = write!(out, "{t}");
        for v in row {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

pub fn histogram_csv(predicted: &[usize; CLASSES], truth: &[usize; CLASSES]) -> String {
    let mut out = String::from("class,predicted,truth\n");
    for c in 0..CLASSES {
        let _ = writeln!(out, "{c},{},{}", predicted[c], truth[c]);
    }
    out
}

/// Grouped bar chart of predicted vs. ground-truth class counts.
pub fn histogram_svg(title: &str, predicted: &[usize; CLASSES], truth: &[usize; CLASSES]) -> String {
    const W: usize = 560;
    const H: usize = 260;
    const LEFT: usize = 40;
    const BOTTOM: usize = 30;
    const TOP: usize = 30;
    let max = predicted.iter().chain(truth).copied().max().unwrap_or(0).max(1);
    let slot = (W - LEFT - 10) / CLASSES;
    let bar = slot / 2 - 2;
    let plot_h = H - TOP - BOTTOM;
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" font-family=\"sans-serif\" font-size=\"11\">\n\
         <text x=\"{LEFT}\" y=\"18\" font-size=\"13\">{}</text>\n",
        crate::report::escape(title)
    );
    for c in 0..CLASSES {
        let x = LEFT + c * slot;
        for (k, (count, color)) in [(predicted[c], "#4e79a7"), (truth[c], "#bab0ac")].into_iter().enumerate() {
            let h = count * plot_h / max;
            let _ = writeln!(
                out,
                "<rect x=\"{}\" y=\"{}\" width=\"{bar}\" height=\"{h}\" fill=\"{color}\"><title>{count}</title></rect>",
                x + k * (bar + 2),
                TOP + plot_h - h
            );
        }
        let _ = writeln!(out, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{c}</text>", x + bar, H - 10);
    }
    let _ = writeln!(
        out,
        "<line x1=\"{LEFT}\" y1=\"{0}\" x2=\"{1}\" y2=\"{0}\" stroke=\"#333\"/>\n\
         <text x=\"{2}\" y=\"18\" fill=\"#4e79a7\">predicted</text>\n\
         <text x=\"{3}\" y=\"18\" fill=\"#888\">ground truth</text>\n</svg>",
        TOP + plot_h,
        W - 10,
        W - 170,
        W - 95
    );
    out
}
