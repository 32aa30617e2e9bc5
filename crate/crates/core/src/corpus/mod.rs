//! Annotated queries, the JSONL corpus format and the synthetic generator.

mod generate;
mod io;
mod lint;
pub(crate) mod templates;
pub(crate) mod vocab;

use serde::{Deserialize, Serialize};

pub use generate::{generate_corpus, generate_split, GenerationProfile};
pub use templates::Family;
pub use io::{load_corpus, read_corpus, save_corpus, write_corpus, CORPUS_VERSION};
pub use lint::{lint_instance, Violation, ViolationKind};

/// PII taxonomy used for injection templates and detector rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PiiCategory {
    PersonName,
    DateOfBirth,
    MedicalRecordNumber,
    Phone,
    Email,
    ClinicianName,
    FacilityName,
    Department,
    Insurance,
    Pharmacy,
    Date,
    Time,
    StreetAddress,
    CityState,
    TravelId,
    Workplace,
    Vehicle,
}

impl PiiCategory {
    pub const ALL: [PiiCategory; 17] = [
        PiiCategory::PersonName,
        PiiCategory::DateOfBirth,
        PiiCategory::MedicalRecordNumber,
        PiiCategory::Phone,
        PiiCategory::Email,
        PiiCategory::ClinicianName,
        PiiCategory::FacilityName,
        PiiCategory::Department,
        PiiCategory::Insurance,
        PiiCategory::Pharmacy,
        PiiCategory::Date,
        PiiCategory::Time,
        PiiCategory::StreetAddress,
        PiiCategory::CityState,
        PiiCategory::TravelId,
        PiiCategory::Workplace,
        PiiCategory::Vehicle,
    ];

    /// Slot key used in templates and the serialized name.
    pub fn key(self) -> &'static str {
        match self {
            PiiCategory::PersonName => "person_name",
            PiiCategory::DateOfBirth => "date_of_birth",
            PiiCategory::MedicalRecordNumber => "medical_record_number",
            PiiCategory::Phone => "phone",
            PiiCategory::Email => "email",
            PiiCategory::ClinicianName => "clinician_name",
            PiiCategory::FacilityName => "facility_name",
            PiiCategory::Department => "department",
            PiiCategory::Insurance => "insurance",
            PiiCategory::Pharmacy => "pharmacy",
            PiiCategory::Date => "date",
            PiiCategory::Time => "time",
            PiiCategory::StreetAddress => "street_address",
            PiiCategory::CityState => "city_state",
            PiiCategory::TravelId => "travel_id",
            PiiCategory::Workplace => "workplace",
            PiiCategory::Vehicle => "vehicle",
        }
    }

    pub fn from_key(key: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.key() == key)
    }

    /// Categories that describe a single fact about the patient; two different
    /// surfaces in one query contradict each other.
    pub fn single_valued(self) -> bool {
        matches!(
            self,
            PiiCategory::PersonName
                | PiiCategory::DateOfBirth
                | PiiCategory::MedicalRecordNumber
                | PiiCategory::Insurance
                | PiiCategory::StreetAddress
                | PiiCategory::Workplace
        )
    }
}

/// One PII occurrence in a query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PiiUnit {
    pub id: String,
    pub surface: String,
    pub category: PiiCategory,
    pub task_critical: bool,
    /// Half-open character offsets into the query text.
    pub span: (usize, usize),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryMeta {
    pub seed: u64,
    pub template: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub id: String,
    pub text: String,
    pub pii: Vec<PiiUnit>,
    pub domain_tag: String,
    pub meta: QueryMeta,
}

/// Simulation ground truth aligned with the canonical chunking.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimAnnotation {
    /// One value in `[0, 1]` per chunk.
    pub difficulty: Vec<f64>,
    /// `(dependent, source)` chunk index pairs.
    pub dependencies: Vec<(usize, usize)>,
}

/// A query with its simulation annotation; one JSONL line.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedQuery {
    pub query: Query,
    pub sim: SimAnnotation,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorpusSplit {
    pub train: Vec<AnnotatedQuery>,
    pub test: Vec<AnnotatedQuery>,
    pub seed: u64,
}

impl CorpusSplit {
    pub fn len(&self) -> usize {
        self.train.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.train.is_empty() && self.test.is_empty()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("invalid generation profile: {0}")]
    Config(String),
    #[error("line {line}: malformed record at `{field}`: {detail}")]
    Malformed {
        line: usize,
        field: String,
        detail: String,
    },
    #[error("line {line}: unsupported schema version {version}")]
    Version { line: usize, version: u32 },
    #[error("query `{id}`: {detail}")]
    Validation { id: String, detail: String },
    #[error("duplicate query id `{0}`")]
    DuplicateId(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn char_len(s: &str) -> usize {
    s.chars().count()
}

/// Substring by character offsets; `None` when out of range.
pub(crate) fn char_slice(s: &str, start: usize, end: usize) -> Option<String> {
    if start > end {
        return None;
    }
    let n = char_len(s);
    if end > n {
        return None;
    }
    Some(s.chars().skip(start).take(end - start).collect())
}

impl Query {
    /// Checks span soundness, id uniqueness, ordering and non-overlap.
    pub fn validate(&self) -> Result<(), CorpusError> {
        let bad = |detail: String| CorpusError::Validation {
            id: self.id.clone(),
            detail,
        };
        if self.text.trim().is_empty() {
            return Err(bad("empty text".into()));
        }
        let n = char_len(&self.text);
        let mut ids = std::collections::HashSet::new();
        let mut prev_end = 0;
        for (i, u) in self.pii.iter().enumerate() {
            let (s, e) = u.span;
            if s >= e || e > n {
                return Err(bad(format!(
                    "PII `{}` span [{s}, {e}) outside text of length {n}",
                    u.id
                )));
            }
            let got = char_slice(&self.text, s, e).unwrap_or_default();
            if got != u.surface {
                return Err(bad(format!(
                    "PII `{}` surface {:?} does not match text {:?} at [{s}, {e})",
                    u.id, u.surface, got
                )));
            }
            if !ids.insert(u.id.as_str()) {
                return Err(bad(format!("duplicate PII id `{}`", u.id)));
            }
            if i > 0 && s < prev_end {
                return Err(bad(format!(
                    "PII `{}` overlaps or is out of order with its predecessor",
                    u.id
                )));
            }
            prev_end = e;
        }
        Ok(())
    }
}
