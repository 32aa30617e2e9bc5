//! Fixed lists and value grammars for injected PII and filler words.

use rand::seq::SliceRandom;
use rand::Rng;

use super::PiiCategory;

/// Year the generated ages are measured against.
pub(crate) const REFERENCE_YEAR: i32 = 2024;

pub(crate) const FIRST_NAMES: &[&str] = &[
    "Carol", "Marisol", "Yevgenia", "Priyanka", "Odalys", "Henrietta", "Rosalind", "Teodora",
    "Ingrid", "Lucinda", "Farida", "Beatriz", "Gwendolyn", "Oksana", "Nadezhda", "Philippa",
    "Soledad", "Ximena", "Anneliese", "Dolores", "Margarethe", "Thuy", "Adaeze", "Ifeoma",
    "Kalinda", "Leocadia", "Mirela", "Noriko", "Ottilie", "Perpetua", "Radhika", "Siobhan",
    "Tamsin", "Ulrike", "Valentina", "Wilhelmina", "Yolanda", "Zofia", "Bronwyn", "Cosima",
];

pub(crate) const LAST_NAMES: &[&str] = &[
    "Mendez", "Okonkwo", "Abernathy", "Vasquez", "Lindqvist", "Petrosyan", "Nakashima",
    "Fairweather", "Castellanos", "Dragomir", "Eriksen", "Fitzgerald", "Grabowski", "Haddad",
    "Iwasaki", "Jankowski", "Kowalczyk", "Lombardi", "Marchetti", "Nwachukwu", "Ostrowski",
    "Pellegrino", "Quiroga", "Rasmussen", "Szabo", "Thibodeaux", "Uchenna", "Valdivia",
    "Wojcik", "Yamamoto", "Zelenko", "Brannigan", "Costanza", "Delacroix", "Esposito",
];

pub(crate) const CLINICIAN_FIRST: &[&str] = &[
    "Anya", "Benedikt", "Cheng", "Dmitri", "Esperanza", "Florian", "Gideon", "Hyun", "Isadora",
    "Jovan", "Kwame", "Lorenzo", "Matthias", "Nkechi", "Orlando", "Pradeep", "Rutger", "Sunita",
];

pub(crate) const CLINICIAN_LAST: &[&str] = &[
    "Sharma", "Albrecht", "Whitfield", "Oyelaran", "Barrientos", "Kaczmarek", "Holloway",
    "Ferreira", "Gustafsson", "Mbeki", "Novak", "Ramaswamy", "Stavros", "Tremblay", "Villanueva",
];

pub(crate) const FACILITIES: &[&str] = &[
    "Jefferson Health", "Penn Medicine Radnor", "Mercy General Hospital", "St. Luke's Medical Center",
    "Palo Alto Medical Foundation", "Riverside Community Hospital", "Lakeview Family Clinic",
    "Northgate Urgent Care", "Cedar Hollow Health Center", "Bayfront Regional Hospital",
    "Summit Ridge Medical Group", "Willowbrook Clinic", "Harborview Medical Center",
    "Maple Grove Hospital", "Silver Creek Health",
];

pub(crate) const DEPARTMENTS: &[&str] = &[
    "Radiology Department", "Cardiology Clinic", "Pulmonology Unit", "Emergency Department",
    "Endocrinology Clinic", "Infectious Disease Clinic", "Rheumatology Clinic", "Neurology Unit",
    "Dermatology Clinic", "Oncology Infusion Center",
];

pub(crate) const INSURERS: &[&str] = &[
    "Aetna Choice POS II", "Cigna Open Access Plus", "UnitedHealthcare Choice Plus",
    "Humana Gold Plus HMO", "Anthem Blue Access PPO", "Kaiser Permanente Silver 70",
    "Highmark Blue Shield PPO",
];

pub(crate) const PHARMACY_CHAINS: &[&str] = &[
    "CVS", "Walgreens", "Rite Aid", "Costco Pharmacy", "Kroger Pharmacy", "Giant Eagle Pharmacy",
];

pub(crate) const STREETS: &[&str] = &[
    "Chestnut", "Walnut", "Larchmont", "Ridgewood", "Hawthorne", "Sycamore", "Brookhaven",
    "Kingsbridge", "Alder", "Fenwick", "Marigold", "Wexford",
];

pub(crate) const STREET_SUFFIXES: &[&str] = &["Street", "Avenue", "Road", "Lane", "Drive", "Court"];

pub(crate) const CITIES: &[&str] = &[
    "Philadelphia, PA", "Ann Arbor, MI", "Boise, ID", "Tucson, AZ", "Savannah, GA", "Duluth, MN",
    "Spokane, WA", "Albuquerque, NM", "Chattanooga, TN", "Burlington, VT", "Fresno, CA",
    "Lexington, KY", "Omaha, NE", "Providence, RI",
];

pub(crate) const AIRLINES: &[(&str, &str)] = &[
    ("United Flight", "UA"),
    ("Delta Flight", "DL"),
    ("American Flight", "AA"),
    ("Alaska Flight", "AS"),
    ("JetBlue Flight", "B6"),
];

pub(crate) const WORKPLACES: &[&str] = &[
    "Comcast Center", "Boeing Renton Plant", "Amazon Fulfillment Center BWI2",
    "Hershey Chocolate Factory", "Tyson Foods Plant", "Lockheed Martin Marietta",
    "Sunrise Senior Living", "Gundersen Lumber Mill", "Northside Elementary School",
    "Port of Tacoma Terminal 7",
];

pub(crate) const AREA_CODES: &[&str] = &["215", "267", "734", "208", "520", "912", "218", "509", "505", "423"];

pub(crate) const EMAIL_DOMAINS: &[&str] = &["emailservice.com", "mailbox.net", "postmail.org", "inboxly.com"];

pub(crate) const MONTHS: &[&str] = &[
    "January", "February", "March", "April", "May", "June", "July", "August", "September",
    "October", "November", "December",
];

pub(crate) const RELATIONS: &[&str] = &["mother", "sister", "aunt", "grandmother", "wife", "daughter"];
pub(crate) const SYMPTOMS: &[&str] = &[
    "night sweats", "a dry cough", "shortness of breath", "joint pain", "dizziness",
    "chest tightness", "headaches", "fatigue", "a rash on her arms", "stomach cramps",
];
pub(crate) const CONDITIONS: &[&str] = &[
    "pneumonia", "bronchitis", "asthma", "type 2 diabetes", "hypertension", "lupus",
    "a thyroid problem", "heart failure", "an ulcer", "shingles",
];
pub(crate) const DRUGS: &[&str] = &[
    "metformin", "lisinopril", "warfarin", "levothyroxine", "prednisone", "atorvastatin",
    "amlodipine", "sertraline", "omeprazole", "albuterol",
];
pub(crate) const TESTS: &[&str] = &[
    "chest CT scan", "stress test", "blood panel", "MRI", "ultrasound", "colonoscopy",
    "bone density scan", "sleep study",
];

fn pick<'a, R: Rng>(rng: &mut R, list: &[&'a str]) -> &'a str {
    list.choose(rng).copied().expect("non-empty list")
}

fn ordinal(day: u32) -> String {
    let suffix = match (day % 10, day % 100) {
        (1, x) if x != 11 => "st",
        (2, x) if x != 12 => "nd",
        (3, x) if x != 13 => "rd",
        _ => "th",
    };
    format!("{day}{suffix}")
}

fn upper_letter<R: Rng>(rng: &mut R) -> char {
    (b'A' + rng.gen_range(0..26u8)) as char
}

/// Per-query facts shared across slots so values stay mutually consistent.
#[derive(Debug, Clone)]
pub(crate) struct Persona {
    pub age: u32,
    pub birth_year: i32,
}

impl Persona {
    pub fn draw<R: Rng>(rng: &mut R) -> Self {
        let age = rng.gen_range(24..=88);
        let birth_year = REFERENCE_YEAR - age as i32 - rng.gen_range(0..=1);
        Persona { age, birth_year }
    }
}

/// Draws a surface for `category` from its grammar.
pub(crate) fn draw_value<R: Rng>(rng: &mut R, category: PiiCategory, persona: &Persona) -> String {
    match category {
        PiiCategory::PersonName => format!("{} {}", pick(rng, FIRST_NAMES), pick(rng, LAST_NAMES)),
        PiiCategory::DateOfBirth => format!(
            "{:02}/{:02}/{}",
            rng.gen_range(1..=12),
            rng.gen_range(1..=28),
            persona.birth_year
        ),
        PiiCategory::MedicalRecordNumber => format!(
            "{}{}-{:05}",
            upper_letter(rng),
            upper_letter(rng),
            rng.gen_range(0..100_000)
        ),
        PiiCategory::Phone => format!(
            "{}-555-{:04}",
            pick(rng, AREA_CODES),
            rng.gen_range(100..10_000)
        ),
        PiiCategory::Email => format!(
            "{}.{}{}@{}",
            pick(rng, FIRST_NAMES).to_lowercase(),
            pick(rng, LAST_NAMES).to_lowercase(),
            rng.gen_range(10..100),
            pick(rng, EMAIL_DOMAINS)
        ),
        PiiCategory::ClinicianName => {
            format!("Dr. {} {}", pick(rng, CLINICIAN_FIRST), pick(rng, CLINICIAN_LAST))
        }
        PiiCategory::FacilityName => pick(rng, FACILITIES).to_string(),
        PiiCategory::Department => pick(rng, DEPARTMENTS).to_string(),
        PiiCategory::Insurance => format!(
            "{} #{:03}-{:03}-{:03}",
            pick(rng, INSURERS),
            rng.gen_range(100..1000),
            rng.gen_range(0..1000),
            rng.gen_range(0..1000)
        ),
        PiiCategory::Pharmacy => format!("{} on {} {}", pick(rng, PHARMACY_CHAINS), pick(rng, STREETS), pick(rng, STREET_SUFFIXES)),
        PiiCategory::Date => format!("{} {}", pick(rng, MONTHS), ordinal(rng.gen_range(1..=28))),
        PiiCategory::Time => format!(
            "{}:{:02} {}",
            rng.gen_range(1..=12),
            rng.gen_range(0..4) * 15,
            if rng.gen_bool(0.5) { "AM" } else { "PM" }
        ),
        PiiCategory::StreetAddress => format!(
            "{} {} {}",
            rng.gen_range(100..10_000),
            pick(rng, STREETS),
            pick(rng, STREET_SUFFIXES)
        ),
        PiiCategory::CityState => pick(rng, CITIES).to_string(),
        PiiCategory::TravelId => {
            let (name, code) = *AIRLINES.choose(rng).expect("non-empty");
            format!("{name} {code}{}", rng.gen_range(100..10_000))
        }
        PiiCategory::Workplace => pick(rng, WORKPLACES).to_string(),
        PiiCategory::Vehicle => format!(
            "{}{}{}-{:04}",
            upper_letter(rng),
            upper_letter(rng),
            upper_letter(rng),
            rng.gen_range(0..10_000)
        ),
    }
}

/// Draws a word for a non-PII filler slot; `None` for unknown slot names.
pub(crate) fn draw_filler<R: Rng>(rng: &mut R, slot: &str, persona: &Persona) -> Option<String> {
    Some(match slot {
        "rel" => pick(rng, RELATIONS).to_string(),
        "age" => persona.age.to_string(),
        "days" => rng.gen_range(2..=14).to_string(),
        "symptom" => pick(rng, SYMPTOMS).to_string(),
        "condition" => pick(rng, CONDITIONS).to_string(),
        "drug" => pick(rng, DRUGS).to_string(),
        "test" => pick(rng, TESTS).to_string(),
        _ => return None,
    })
}
