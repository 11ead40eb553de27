use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::text;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Judgment {
    Same,
    Different,
}

/// Reads a context judgment out of a free-text reply. The reply must contain
/// the standalone word "same" or "different" (any case), but not both.
pub fn parse_judgment(reply: &str) -> Option<Judgment> {
    let mut same = false;
    let mut different = false;
    for w in text::words(reply) {
        match w.folded().as_str() {
            "same" => same = true,
            "different" => different = true,
            _ => {}
        }
    }
    match (same, different) {
        (true, false) => Some(Judgment::Same),
        (false, true) => Some(Judgment::Different),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScoreParse {
    Parsed { score: f64, reasoning: String },
    MissingScore,
}

fn score_marker() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)score\s*:").unwrap())
}

fn number() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"-?\d+(?:\.\d+)?").unwrap())
}

fn reasoning_marker() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)reasoning\s*:").unwrap())
}

/// Reads `Score: <n>` and `Reasoning: <text>` from a reply; either marker
/// may appear anywhere. Without a reasoning marker, the reasoning is the
/// reply minus the score clause. Range checking is left to the caller.
pub fn parse_direct_score(reply: &str) -> ScoreParse {
    let Some(marker) = score_marker().find(reply) else {
        return ScoreParse::MissingScore;
    };
    let Some(num) = number().find_at(reply, marker.end()) else {
        return ScoreParse::MissingScore;
    };
    let score: f64 = num.as_str().parse().expect("regex admits only decimals");
    let reasoning = match reasoning_marker().find(reply) {
        Some(r) if r.start() >= num.end() => reply[r.end()..].trim().to_string(),
        Some(r) if r.end() <= marker.start() => reply[r.end()..marker.start()].trim().to_string(),
        _ => format!("{}{}", &reply[..marker.start()], &reply[num.end()..]).trim().to_string(),
    };
    ScoreParse::Parsed { score, reasoning }
}
