//! Report pairs and the newline-delimited corpus format.
//!
//! Each corpus line is one JSON object:
//!
//! ```text
//! {"id": "p1", "modality": "MRI",
//!  "preliminary": {"findings": "...", "impression": "..."},
//!  "final": {"findings": "...", "impression": null},
//!  "ground_truth_score": 8.5}
//! ```
//!
//! `findings`/`impression` may be absent or `null`, but a report needs at
//! least one non-blank section. `ground_truth_score` is optional and lies in
//! `[0, 10]`.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Imaging modality of the study the reports describe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Modality {
    #[serde(rename = "MRI")]
    Mri,
    #[serde(rename = "CT")]
    Ct,
    Ultrasound,
    #[default]
    Unknown,
}

/// One radiology report split into its two conventional sections.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Report {
    #[serde(skip_serializing_if = "Option::is_none")]
    findings: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    impression: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReportError {
    #[error("report has no non-empty section")]
    Empty,
    #[error("control character U+{0:04X} in {1}")]
    ControlCharacter(u32, &'static str),
}

impl Report {
    /// Builds a report. Blank sections are dropped; at least one section must
    /// survive. Control characters other than newline and tab are rejected.
    pub fn new(findings: Option<String>, impression: Option<String>) -> Result<Self, ReportError> {
        let findings = check_section(findings, "findings")?;
        let impression = check_section(impression, "impression")?;
        if findings.is_none() && impression.is_none() {
            return Err(ReportError::Empty);
        }
        Ok(Self { findings, impression })
    }

    /// Report with only a findings section.
    pub fn findings(text: impl Into<String>) -> Result<Self, ReportError> {
        Self::new(Some(text.into()), None)
    }

    /// Report with only an impression section.
    pub fn impression(text: impl Into<String>) -> Result<Self, ReportError> {
        Self::new(None, Some(text.into()))
    }

    pub fn findings_text(&self) -> Option<&str> {
        self.findings.as_deref()
    }

    pub fn impression_text(&self) -> Option<&str> {
        self.impression.as_deref()
    }

    /// The text a selector picks out of this report.
    pub fn text(&self, selector: SectionSelector) -> Result<String, SectionError> {
        match selector {
            SectionSelector::FindingsOnly => self
                .findings
                .clone()
                .ok_or(SectionError::Absent("findings")),
            SectionSelector::ImpressionOnly => self
                .impression
                .clone()
                .ok_or(SectionError::Absent("impression")),
            SectionSelector::Both => Ok(match (&self.findings, &self.impression) {
                (Some(f), Some(i)) => format!("{f}\n\n{i}"),
                (Some(f), None) => f.clone(),
                (None, Some(i)) => i.clone(),
                (None, None) => unreachable!("report invariant: one section present"),
            }),
        }
    }
}

fn check_section(text: Option<String>, name: &'static str) -> Result<Option<String>, ReportError> {
    let Some(text) = text else { return Ok(None) };
    if let Some(c) = text.chars().find(|c| c.is_control() && *c != '\n' && *c != '\t') {
        return Err(ReportError::ControlCharacter(c as u32, name));
    }
    if text.trim().is_empty() {
        Ok(None)
    } else {
        Ok(Some(text))
    }
}

#[derive(Deserialize)]
struct RawReport {
    #[serde(default)]
    findings: Option<String>,
    #[serde(default)]
    impression: Option<String>,
}

impl<'de> Deserialize<'de> for Report {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = RawReport::deserialize(d)?;
        Report::new(raw.findings, raw.impression).map_err(serde::de::Error::custom)
    }
}

/// A preliminary report and the final report produced from it on review.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportPair {
    pub id: String,
    #[serde(default)]
    pub modality: Modality,
    pub preliminary: Report,
    #[serde(rename = "final")]
    pub final_report: Report,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth_score: Option<f64>,
}

impl ReportPair {
    pub fn report(&self, side: Side) -> &Report {
        match side {
            Side::Preliminary => &self.preliminary,
            Side::Final => &self.final_report,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Preliminary,
    Final,
}

/// Which report sections feed the comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum SectionSelector {
    FindingsOnly,
    ImpressionOnly,
    /// Findings, a blank line, then impression.
    #[default]
    Both,
}

impl std::str::FromStr for SectionSelector {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "findings" | "findings-only" | "findingsonly" => Ok(Self::FindingsOnly),
            "impression" | "impression-only" | "impressiononly" => Ok(Self::ImpressionOnly),
            "both" => Ok(Self::Both),
            other => Err(format!("unknown section selector {other:?} (findings|impression|both)")),
        }
    }
}

impl fmt::Display for SectionSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::FindingsOnly => "findings",
            Self::ImpressionOnly => "impression",
            Self::Both => "both",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SectionError {
    #[error("selected section `{0}` is absent")]
    Absent(&'static str),
}

/// The comparison text for one side of a pair.
pub fn pair_text(pair: &ReportPair, side: Side, selector: SectionSelector) -> Result<String, SectionError> {
    pair.report(side).text(selector)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CorpusError {
    #[error("invalid UTF-8 at line {line}")]
    Encoding { line: usize },
    #[error("malformed record, line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("duplicate id {id:?}, line {line}")]
    DuplicateId { line: usize, id: String },
    #[error("score out of range, line {line}: {score}")]
    ScoreOutOfRange { line: usize, score: f64 },
}

impl CorpusError {
    pub fn line(&self) -> usize {
        match self {
            Self::Encoding { line }
            | Self::Malformed { line, .. }
            | Self::DuplicateId { line, .. }
            | Self::ScoreOutOfRange { line, .. } => *line,
        }
    }
}

/// Parses a newline-delimited corpus. Blank lines are skipped; line numbers
/// in errors are 1-based.
pub fn parse_corpus(bytes: &[u8]) -> Result<Vec<ReportPair>, CorpusError> {
    let mut pairs = Vec::new();
    let mut seen = HashSet::new();
    for (idx, raw) in bytes.split(|b| *b == b'\n').enumerate() {
        let line = idx + 1;
        let text = std::str::from_utf8(raw).map_err(|_| CorpusError::Encoding { line })?;
        let text = text.strip_suffix('\r').unwrap_or(text);
        if text.trim().is_empty() {
            continue;
        }
        let pair: ReportPair = serde_json::from_str(text).map_err(|e| CorpusError::Malformed {
            line,
            message: e.to_string(),
        })?;
        if pair.id.is_empty() {
            return Err(CorpusError::Malformed { line, message: "empty `id`".into() });
        }
        if let Some(score) = pair.ground_truth_score {
            if !(0.0..=10.0).contains(&score) {
                return Err(CorpusError::ScoreOutOfRange { line, score });
            }
        }
        if !seen.insert(pair.id.clone()) {
            return Err(CorpusError::DuplicateId { line, id: pair.id });
        }
        pairs.push(pair);
    }
    Ok(pairs)
}

/// Serializes pairs back into the corpus format, one record per line.
pub fn write_corpus(pairs: &[ReportPair]) -> String {
    let mut out = String::new();
    for pair in pairs {
        out.push_str(&serde_json::to_string(pair).expect("report pairs always serialize"));
        out.push('\n');
    }
    out
}
