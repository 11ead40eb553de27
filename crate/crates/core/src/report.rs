//! Self-contained HTML documents: side-by-side entity highlighting and the
//! combined comparison report.

use std::fmt::Write as _;

use thiserror::Error;

use crate::extraction::EntitySet;
use crate::model::{pair_text, ReportPair, SectionError, SectionSelector, Side};
use crate::scoring::{Category, Classification, Method, ScoreFlag, ScoreResult};
use crate::text;

/// Highlight colours per category: green, yellow, red, blue.
pub const LEGEND: [(Category, &str); 4] = [
    (Category::Matched, "#9be29b"),
    (Category::Mismatched, "#ffe066"),
    (Category::Missing, "#ff9a9a"),
    (Category::Surplus, "#9cc7ff"),
];

pub fn color(category: Category) -> &'static str {
    LEGEND.iter().find(|(c, _)| *c == category).map(|(_, col)| *col).expect("every category has a colour")
}

pub fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RenderError {
    #[error("entity span ({start}, {end}) is outside the {side} text ({len} characters)")]
    SpanOutOfBounds { side: &'static str, start: usize, end: usize, len: usize },
    #[error("entity spans overlap at character {at} in the {side} text")]
    Overlap { side: &'static str, at: usize },
    #[error("entity {entity:?} in the {side} text is not classified consistently")]
    Unclassified { side: &'static str, entity: String },
    #[error(transparent)]
    Section(#[from] SectionError),
    #[error("comparison reports are only produced for the entity-agreement method, got {0:?}")]
    WrongMethod(Method),
}

/// A rendered entity visualisation: a full document plus the embeddable
/// body fragment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VisualizationDoc {
    pub html: String,
    pub body: String,
    /// Highlighted spans in the document.
    pub span_count: usize,
}

fn highlight(
    source: &str,
    entities: &EntitySet,
    cls: &Classification,
    side: Side,
) -> Result<(String, usize), RenderError> {
    let side_name = match side {
        Side::Final => "final",
        Side::Preliminary => "preliminary",
    };
    let len = source.chars().count();
    let mut out = String::new();
    let mut cursor = 0;
    for e in entities.entities() {
        if e.start >= e.end || e.end > len {
            return Err(RenderError::SpanOutOfBounds { side: side_name, start: e.start, end: e.end, len });
        }
        if e.start < cursor {
            return Err(RenderError::Overlap { side: side_name, at: e.start });
        }
        let category = cls.category_of(&e.normalized).filter(|c| match side {
            Side::Final => *c != Category::Surplus,
            Side::Preliminary => *c != Category::Missing,
        });
        let Some(category) = category else {
            return Err(RenderError::Unclassified { side: side_name, entity: e.normalized.clone() });
        };
        let name = category.as_str();
        out.push_str(&escape(text::char_slice(source, cursor, e.start).expect("bounds checked")));
        let _ = write!(
            out,
            "<span class=\"ent ent-{name}\" data-category=\"{name}\" title=\"{name}: {}\" style=\"background-color:{};border-radius:3px;padding:0 2px;\">{}</span>",
            escape(&e.normalized),
            color(category),
            escape(text::char_slice(source, e.start, e.end).expect("bounds checked")),
        );
        cursor = e.end;
    }
    out.push_str(&escape(text::char_slice(source, cursor, len).expect("bounds checked")));
    Ok((out, entities.entities().len()))
}

fn legend_html() -> String {
    let mut out = String::from("<div class=\"legend\" style=\"margin-bottom:0.8em;\">");
    for (category, col) in LEGEND {
        let _ = write!(
            out,
            "<span class=\"legend-item\" style=\"background-color:{col};border-radius:3px;padding:0 6px;margin-right:0.6em;\">{}</span>",
            category.as_str()
        );
    }
    out.push_str("</div>");
    out
}

fn panel(title: &str, class: &str, content: &str) -> String {
    format!(
        "<div class=\"panel {class}\" style=\"flex:1;border:1px solid #ccc;border-radius:4px;padding:0.8em;\">\
         <h3 style=\"margin-top:0;\">{title}</h3>\
         <div class=\"report-text\" style=\"white-space:pre-wrap;line-height:1.6;\">{content}</div></div>"
    )
}

fn document(title: &str, body: &str) -> String {
    format!(
        "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\"/>\n<title>{}</title>\n</head>\n\
         <body style=\"font-family:sans-serif;margin:1.5em;max-width:70em;\">\n{body}\n</body>\n</html>\n",
        escape(title)
    )
}

/// Highlights each entity mention with its category colour, preliminary
/// report on the left and final on the right. Entity spans refer to the
/// texts selected by `section`.
pub fn render_entity_html(
    pair: &ReportPair,
    section: SectionSelector,
    final_entities: &EntitySet,
    prelim_entities: &EntitySet,
    cls: &Classification,
) -> Result<VisualizationDoc, RenderError> {
    let final_text = pair_text(pair, Side::Final, section)?;
    let prelim_text = pair_text(pair, Side::Preliminary, section)?;
    render_texts(&pair.id, &final_text, &prelim_text, final_entities, prelim_entities, cls)
}

/// Same as [`render_entity_html`] for bare texts.
pub fn render_texts(
    id: &str,
    final_text: &str,
    prelim_text: &str,
    final_entities: &EntitySet,
    prelim_entities: &EntitySet,
    cls: &Classification,
) -> Result<VisualizationDoc, RenderError> {
    let (prelim_html, n_prelim) = highlight(prelim_text, prelim_entities, cls, Side::Preliminary)?;
    let (final_html, n_final) = highlight(final_text, final_entities, cls, Side::Final)?;
    let body = format!(
        "<section class=\"entity-comparison\">\n{}\n<div class=\"panels\" style=\"display:flex;gap:1.5em;\">\n{}\n{}\n</div>\n</section>",
        legend_html(),
        panel("Preliminary report", "preliminary", &prelim_html),
        panel("Final report", "final", &final_html),
    );
    let html = document(&format!("Entity comparison: {id}"), &body);
    Ok(VisualizationDoc { html, body, span_count: n_prelim + n_final })
}

/// One document with both score scales, category counts, weights, the
/// entity visualisation and, when available, the explanation.
pub fn render_comparison_report(
    result: &ScoreResult,
    doc: &VisualizationDoc,
    explanation: Option<&str>,
) -> Result<String, RenderError> {
    if result.method != Method::LlamaEntScore {
        return Err(RenderError::WrongMethod(result.method));
    }
    let score01 = result.score01.unwrap_or(result.score10 / 10.0);
    let mut body = String::from("<h1>Report comparison</h1>\n");
    let _ = writeln!(
        body,
        "<p class=\"score\">Similarity score: <strong>{score01:.2}</strong> ({:.1}/10)</p>",
        result.score10
    );
    if result.flags.contains(&ScoreFlag::EmptyReports) {
        body.push_str("<p class=\"warning\">No entities were recognised in either report.</p>\n");
    }
    if let Some(cls) = &result.classification {
        let counts = cls.counts();
        body.push_str("<table class=\"counts\" style=\"border-collapse:collapse;margin-bottom:1em;\">\n<tr><th style=\"text-align:left;padding-right:1em;\">Category</th><th>Entities</th></tr>\n");
        for (category, n) in [
            (Category::Matched, counts.matched),
            (Category::Mismatched, counts.mismatched),
            (Category::Missing, counts.missing),
            (Category::Surplus, counts.surplus),
        ] {
            let _ = writeln!(
                body,
                "<tr><td style=\"padding-right:1em;\"><span style=\"background-color:{};padding:0 6px;\">{}</span></td><td>{n}</td></tr>",
                color(category),
                category.as_str()
            );
        }
        body.push_str("</table>\n");
    }
    if let Some(w) = &result.weights {
        let _ = writeln!(
            body,
            "<p class=\"weights\">Weights: missing = {}, mismatch = {}, surplus = {}</p>",
            w.missing, w.mismatch, w.surplus
        );
    }
    body.push_str(&doc.body);
    body.push('\n');
    if let Some(text) = explanation.or(result.explanation.as_deref()) {
        let _ = write!(
            body,
            "<section class=\"explanation\">\n<h2>Explanation</h2>\n<p style=\"white-space:pre-wrap;\">{}</p>\n</section>\n",
            escape(text)
        );
    }
    Ok(document("Report comparison", &body))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extraction::Lexicon;
    use crate::model::Report;
    use crate::scoring::{classify_entities, Weights};

    fn pair(final_text: &str, prelim: &str) -> ReportPair {
        ReportPair {
            id: "v<1>".into(),
            modality: Default::default(),
            preliminary: Report::findings(prelim).unwrap(),
            final_report: Report::findings(final_text).unwrap(),
            ground_truth_score: None,
        }
    }

    #[test]
    fn no_entities_gives_plain_escaped_panels() {
        let p = pair("a < b", "x & y");
        let empty = EntitySet::default();
        let doc = render_entity_html(&p, SectionSelector::Both, &empty, &empty, &Classification::default()).unwrap();
        assert_eq!(doc.span_count, 0);
        assert!(doc.body.contains("a &lt; b"));
        assert!(doc.body.contains("x &amp; y"));
        assert!(!doc.body.contains("class=\"ent "));
        assert!(doc.html.contains("<title>Entity comparison: v&lt;1&gt;</title>"));
    }

    #[test]
    fn one_matched_entity_is_green_in_both_panels() {
        let lex = Lexicon::new(["effusion"]).unwrap();
        let (f, pr) = ("Small effusion.", "Effusion noted.");
        let (fs, ps) = (lex.extract(f), lex.extract(pr));
        let judge = |_: &str, _: &str, _: &str| -> Result<crate::llm::Judgment, crate::llm::LlmError> {
            Ok(crate::llm::Judgment::Same)
        };
        let cls = classify_entities(&fs, &ps, &judge, f, pr, 1).unwrap();
        let doc = render_entity_html(&pair(f, pr), SectionSelector::Both, &fs, &ps, &cls).unwrap();
        assert_eq!(doc.span_count, 2);
        assert_eq!(doc.body.matches("ent-matched").count(), 2);
        assert_eq!(doc.body.matches(color(Category::Matched)).count(), 3); // two spans + legend
    }

    #[test]
    fn rejects_inconsistent_inputs() {
        let lex = Lexicon::new(["effusion"]).unwrap();
        let fs = lex.extract("effusion");
        let err = render_texts("x", "effusion", "", &fs, &EntitySet::default(), &Classification::default());
        assert!(matches!(err, Err(RenderError::Unclassified { side: "final", .. })));
        let err = render_texts("x", "eff", "", &fs, &EntitySet::default(), &Classification::default());
        assert!(matches!(err, Err(RenderError::SpanOutOfBounds { .. })));
    }

    #[test]
    fn comparison_report_scales_and_optional_explanation() {
        let mut cls = Classification::default();
        cls.matched.insert("effusion".into());
        let result = ScoreResult {
            method: Method::LlamaEntScore,
            score01: Some(0.63),
            score10: 6.3,
            classification: Some(cls),
            ner_cosine: None,
            weights: Some(Weights::default()),
            reasoning: None,
            explanation: None,
            flags: vec![],
        };
        let doc = VisualizationDoc { html: String::new(), body: "<div>viz</div>".into(), span_count: 0 };
        let plain = render_comparison_report(&result, &doc, None).unwrap();
        assert!(plain.contains("0.63"));
        assert!(plain.contains("6.3/10"));
        assert!(plain.contains("missing = 2, mismatch = 1.5, surplus = 1"));
        assert!(!plain.contains("Explanation"));
        let explained = render_comparison_report(&result, &doc, Some("Both mention <effusion>.")).unwrap();
        assert!(explained.contains("<h2>Explanation</h2>"));
        assert!(explained.contains("&lt;effusion&gt;"));

        let wfw = ScoreResult { method: Method::WordForWord, ..result };
        assert!(matches!(render_comparison_report(&wfw, &doc, None), Err(RenderError::WrongMethod(_))));
    }
}
