use super::Rule;
use crate::corpus::vocab::{
    AIRLINES, CITIES, DEPARTMENTS, FACILITIES, FIRST_NAMES, INSURERS, MONTHS, PHARMACY_CHAINS, WORKPLACES,
};
use crate::corpus::PiiCategory as C;

pub(super) const DEFAULT_VERSION: &str = "default-2";

const STATES: &str = "AL|AK|AZ|AR|CA|CO|CT|DE|FL|GA|HI|ID|IL|IN|IA|KS|KY|LA|ME|MD|MA|MI|MN|MS|MO|MT|NE|NV|NH|NJ|NM|NY|NC|ND|OH|OK|OR|PA|RI|SC|SD|TN|TX|UT|VT|VA|WA|WV|WI|WY|DC";
const STREET_TYPES: &str = r"Street|St|Avenue|Ave|Road|Rd|Lane|Ln|Drive|Dr|Court|Ct|Boulevard|Blvd|Way|Place|Pl";

fn alt(items: impl IntoIterator<Item = String>) -> String {
    items.into_iter().map(|s| regex::escape(&s)).collect::<Vec<_>>().join("|")
}

fn regex(category: C, pattern: impl Into<String>) -> Rule {
    Rule::Regex {
        category,
        pattern: pattern.into(),
    }
}

fn gazetteer(category: C, entries: &[&str]) -> Rule {
    Rule::Gazetteer {
        category,
        entries: entries.iter().map(|s| s.to_string()).collect(),
    }
}

pub(super) fn default_rules() -> Vec<Rule> {
    let months = alt(MONTHS.iter().map(|m| m.to_string()));
    let short_months = "Jan|Feb|Mar|Apr|Jun|Jul|Aug|Sep|Sept|Oct|Nov|Dec";
    let insurers: Vec<String> = INSURERS
        .iter()
        .map(|s| s.split_whitespace().next().unwrap_or(s).to_string())
        .chain(["Blue Cross", "Medicare", "Medicaid", "Kaiser Permanente"].map(String::from))
        .collect();
    let airlines = alt(AIRLINES.iter().map(|(n, _)| n.to_string()));
    let codes = alt(AIRLINES.iter().map(|(_, c)| c.to_string()).chain(["WN".to_string(), "NK".to_string()]));
    vec![
        regex(C::ClinicianName, r"\bDr\.?\s+[A-Z][a-z]+(?:\s+[A-Z][a-zA-Z'-]+)?"),
        regex(
            C::PersonName,
            format!(r"\b(?:{})\s+[A-Z][a-zA-Z'-]+\b", alt(FIRST_NAMES.iter().map(|s| s.to_string()))),
        ),
        regex(C::DateOfBirth, r"\b\d{1,2}/\d{1,2}/(?:19|20)\d{2}\b"),
        regex(C::MedicalRecordNumber, r"\b[A-Z]{2}-\d{5}(?:-[A-Z])?\b"),
        regex(C::Phone, r"(?:\(\d{3}\)\s?|\b\d{3}[-.\s])\d{3}[-.]\d{4}\b"),
        regex(C::Email, r"\b[A-Za-z0-9._%+-]+@[A-Za-z0-9.-]+\.[A-Za-z]{2,}\b"),
        gazetteer(C::FacilityName, FACILITIES),
        regex(
            C::FacilityName,
            r"\b(?:[A-Z][a-z']+\s+){1,3}(?:Hospital|Medical Center|Health Center|Urgent Care|Medical Group|Family Clinic)\b",
        ),
        gazetteer(C::Department, DEPARTMENTS),
        regex(
            C::Insurance,
            format!(r"\b(?:{})[A-Za-z0-9 ]*?#\s?\d{{3}}-\d{{3}}-\d{{3}}", alt(insurers.iter().cloned())),
        ),
        gazetteer(C::Insurance, &INSURERS.iter().copied().collect::<Vec<_>>()),
        regex(
            C::Pharmacy,
            format!(
                r"\b(?:{})(?:\s+on\s+[A-Z][a-z]+\s+(?:{STREET_TYPES})\b)?",
                alt(PHARMACY_CHAINS.iter().map(|s| s.to_string()))
            ),
        ),
        regex(
            C::Date,
            format!(r"\b(?:{months}|(?:{short_months})\.?)\s+\d{{1,2}}(?:st|nd|rd|th)?\b(?:,\s+\d{{4}}\b)?"),
        ),
        regex(C::Date, r"\b\d{1,2}/\d{1,2}\b"),
        regex(C::Time, r"\b\d{1,2}:\d{2}(?:\s?[AaPp]\.?[Mm]\.?)?"),
        regex(C::StreetAddress, format!(r"\b\d{{2,5}}\s+(?:[A-Z][a-z]+\s+){{1,2}}(?:{STREET_TYPES})\b")),
        gazetteer(C::CityState, CITIES),
        regex(C::CityState, format!(r"\b[A-Z][a-z]+(?:\s[A-Z][a-z]+)?,\s(?:{STATES})\b")),
        regex(C::TravelId, format!(r"\b(?:(?:{airlines})\s+)?(?:{codes})\s?\d{{2,4}}\b")),
        gazetteer(C::Workplace, WORKPLACES),
        regex(C::Vehicle, r"\b[A-Z]{3}-\d{4}\b"),
    ]
}
