//! Rule-based PII detection and the leakage metric.

mod leak;
mod rules;

use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::{PiiCategory, PiiUnit};

pub use leak::{catastrophic, exposed_ids, leakage, surface_in, Leakage, RemoteExposure, CATASTROPHIC_THRESHOLD};

#[derive(Debug, thiserror::Error)]
pub enum PiiError {
    #[error("rule {index} ({category:?}): invalid pattern: {source}")]
    Pattern {
        index: usize,
        category: PiiCategory,
        #[source]
        source: regex::Error,
    },
    #[error("rule {index} ({category:?}): gazetteer has no entries")]
    EmptyGazetteer { index: usize, category: PiiCategory },
    #[error("rule set has no rule for category {0:?}")]
    MissingCategory(PiiCategory),
    #[error("rule file: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{0} is undefined for an empty list")]
    EmptyStatistic(&'static str),
    #[error("leak fraction {0} outside [0, 1]")]
    OutOfRange(f64),
}

/// One detector rule as stored in JSON.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Rule {
    Regex { category: PiiCategory, pattern: String },
    Gazetteer { category: PiiCategory, entries: Vec<String> },
}

impl Rule {
    pub fn category(&self) -> PiiCategory {
        match self {
            Rule::Regex { category, .. } | Rule::Gazetteer { category, .. } => *category,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RuleFile {
    version: String,
    rules: Vec<Rule>,
}

/// Compiled rule set. Earlier rules win ties between equally long matches.
#[derive(Debug, Clone)]
pub struct DetectorRuleSet {
    version: String,
    rules: Vec<Rule>,
    compiled: Vec<(PiiCategory, Regex)>,
}

/// A detected PII span, in character offsets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Detection {
    pub span: (usize, usize),
    pub category: PiiCategory,
    pub surface: String,
}

fn gazetteer_pattern(entries: &[String]) -> String {
    let mut sorted: Vec<&String> = entries.iter().collect();
    sorted.sort_by(|a, b| b.chars().count().cmp(&a.chars().count()).then(a.cmp(b)));
    let alts: Vec<String> = sorted
        .iter()
        .map(|e| {
            let word = |c: Option<char>| c.is_some_and(|c| c.is_alphanumeric() || c == '_');
            let lead = if word(e.chars().next()) { r"\b" } else { "" };
            let tail = if word(e.chars().last()) { r"\b" } else { "" };
            format!("{lead}{}{tail}", regex::escape(e))
        })
        .collect();
    format!("(?i)(?:{})", alts.join("|"))
}

impl DetectorRuleSet {
    pub fn new(version: impl Into<String>, rules: Vec<Rule>) -> Result<Self, PiiError> {
        let mut compiled = Vec::with_capacity(rules.len());
        for (index, r) in rules.iter().enumerate() {
            let category = r.category();
            let pattern = match r {
                Rule::Regex { pattern, .. } => pattern.clone(),
                Rule::Gazetteer { entries, .. } => {
                    if entries.iter().all(|e| e.trim().is_empty()) {
                        return Err(PiiError::EmptyGazetteer { index, category });
                    }
                    let kept: Vec<String> = entries.iter().filter(|e| !e.trim().is_empty()).cloned().collect();
                    gazetteer_pattern(&kept)
                }
            };
            let re = Regex::new(&pattern).map_err(|source| PiiError::Pattern {
                index,
                category,
                source,
            })?;
            compiled.push((category, re));
        }
        for c in PiiCategory::ALL {
            if !rules.iter().any(|r| r.category() == c) {
                return Err(PiiError::MissingCategory(c));
            }
        }
        Ok(DetectorRuleSet {
            version: version.into(),
            rules,
            compiled,
        })
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn from_json(s: &str) -> Result<Self, PiiError> {
        let f: RuleFile = serde_json::from_str(s)?;
        Self::new(f.version, f.rules)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&RuleFile {
            version: self.version.clone(),
            rules: self.rules.clone(),
        })
        .expect("rule set serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PiiError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Built-in rules covering every category.
    pub fn default_rules() -> Self {
        Self::new(rules::DEFAULT_VERSION, rules::default_rules()).expect("built-in rules compile")
    }

    /// Non-overlapping detections: leftmost first, then longest, then rule order.
    pub fn detect(&self, text: &str) -> Vec<Detection> {
        if text.is_empty() {
            return Vec::new();
        }
        let mut byte_to_char = vec![0usize; text.len() + 1];
        let mut count = 0;
        for (b, _) in text.char_indices() {
            byte_to_char[b] = count;
            count += 1;
        }
        byte_to_char[text.len()] = count;

        let mut cands: Vec<(usize, usize, usize, PiiCategory, usize, usize)> = Vec::new();
        for (ri, (cat, re)) in self.compiled.iter().enumerate() {
            for m in re.find_iter(text) {
                if m.start() < m.end() {
                    cands.push((m.start(), m.end(), ri, *cat, byte_to_char[m.start()], byte_to_char[m.end()]));
                }
            }
        }
        cands.sort_by(|a, b| a.0.cmp(&b.0).then((b.1 - b.0).cmp(&(a.1 - a.0))).then(a.2.cmp(&b.2)));
        let mut out = Vec::new();
        let mut taken_until = 0;
        for (bs, be, _, cat, cs, ce) in cands {
            if bs < taken_until {
                continue;
            }
            taken_until = be;
            out.push(Detection {
                span: (cs, ce),
                category: cat,
                surface: text[bs..be].to_string(),
            });
        }
        out
    }

    pub fn contains_pii(&self, text: &str) -> bool {
        self.compiled.iter().any(|(_, re)| re.is_match(text))
    }

    /// Detections as PII units with ids `d0, d1, …`; none marked task-critical.
    pub fn detect_units(&self, text: &str) -> Vec<PiiUnit> {
        self.detect(text)
            .into_iter()
            .enumerate()
            .map(|(i, d)| PiiUnit {
                id: format!("d{i}"),
                surface: d.surface,
                category: d.category,
                task_critical: false,
                span: d.span,
            })
            .collect()
    }
}

impl Default for DetectorRuleSet {
    fn default() -> Self {
        Self::default_rules()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mrn_with_suffix() {
        let d = DetectorRuleSet::default_rules().detect("MRN: JH-48920-C");
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].category, PiiCategory::MedicalRecordNumber);
        assert_eq!(d[0].surface, "JH-48920-C");
    }

    #[test]
    fn empty_text() {
        assert!(DetectorRuleSet::default_rules().detect("").is_empty());
    }

    #[test]
    fn longest_then_leftmost() {
        let rs = DetectorRuleSet::new(
            "t",
            PiiCategory::ALL
                .iter()
                .map(|&c| Rule::Gazetteer { category: c, entries: vec![format!("zz{}", c.key())] })
                .chain([
                    Rule::Regex { category: PiiCategory::Date, pattern: r"\d{2}/\d{2}".into() },
                    Rule::Regex { category: PiiCategory::DateOfBirth, pattern: r"\d{2}/\d{2}/\d{4}".into() },
                ])
                .collect(),
        )
        .unwrap();
        let d = rs.detect("on 01/02/1990 and 03/04");
        assert_eq!(d.len(), 2);
        assert_eq!((d[0].category, d[0].span), (PiiCategory::DateOfBirth, (3, 13)));
        assert_eq!((d[1].category, d[1].span), (PiiCategory::Date, (18, 23)));
    }

    #[test]
    fn char_offsets_after_multibyte() {
        let d = DetectorRuleSet::default_rules().detect("Café — call 215-555-0199.");
        assert_eq!(d.len(), 1);
        let chars: Vec<char> = "Café — call 215-555-0199.".chars().collect();
        let got: String = chars[d[0].span.0..d[0].span.1].iter().collect();
        assert_eq!(got, "215-555-0199");
    }

    #[test]
    fn json_round_trip_and_errors() {
        let rs = DetectorRuleSet::default_rules();
        let back = DetectorRuleSet::from_json(&rs.to_json()).unwrap();
        assert_eq!(back.rules(), rs.rules());
        assert_eq!(back.version(), rs.version());
        let missing = r#"{"version":"x","rules":[{"kind":"regex","category":"phone","pattern":"\\d+"}]}"#;
        assert!(matches!(DetectorRuleSet::from_json(missing), Err(PiiError::MissingCategory(_))));
        let bad = r#"{"version":"x","rules":[{"kind":"regex","category":"phone","pattern":"("}]}"#;
        assert!(matches!(DetectorRuleSet::from_json(bad), Err(PiiError::Pattern { index: 0, .. })));
    }

    #[test]
    fn every_category_has_a_default_rule() {
        let rs = DetectorRuleSet::default_rules();
        for c in PiiCategory::ALL {
            assert!(rs.rules().iter().any(|r| r.category() == c));
        }
    }
}
