//! Prompt templates. These strings are sent verbatim; golden tests pin them.
//! Report 1 is always the final report and Report 2 the preliminary one.

/// Asks whether a shared entity is used in the same or a different context.
pub fn entity_context(entity: &str, report1: &str, report2: &str) -> String {
    format!(
        "Can you say whether the entity: '{entity}' is used in the same context or different context in these two texts?\n\
         Text1: '{report1}'\n\
         Text2: '{report2}'\n\
         Please reply with a single-word answer: either 'same' or 'different'."
    )
}

/// Asks for an explanation anchored on an already computed score.
/// The score is rendered with two decimals.
pub fn explain_score(score: f64, report1: &str, report2: &str) -> String {
    format!(
        "These two reports have a similarity score of {score:.2}. Report 1 is the final report, and Report 2 is the preliminary report.\n\
         Can you give a reason for the similarity score? Focus on technical details rather than structure or style.\n\
         Report 1: {report1}\n\
         Report 2: {report2}"
    )
}

/// Asks the model itself for a 0-10 similarity score.
pub fn direct_similarity(report1: &str, report2: &str) -> String {
    format!(
        "Please provide a similarity score out of 10 for these two reports. Focus on technical content rather than style or phrasing.\n\
         Score: <score>, Reasoning: <reasoning>\n\
         Report 1: {report1}, Report 2: {report2}"
    )
}

/// Asks for a copy of the report with exactly one negation flipped.
pub fn negation_variant(report: &str) -> String {
    format!(
        "Generate a report identical to this one but with one negation change, e.g., \u{201c}broken arm\u{201d} becomes \u{201c}no broken arm\u{201d}. Please only make one change from the original report.\n\
         Report: {report}\n\
         Please only output the report, no other text."
    )
}
