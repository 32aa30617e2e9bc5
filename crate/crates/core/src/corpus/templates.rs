//! Sentence templates for the synthetic medical corpus.
//!
//! Slots are written `{key}`. PII slots use [`PiiCategory::key`]; anything
//! else is a filler slot resolved by the vocabulary.

use serde::{Deserialize, Serialize};

use super::PiiCategory;

/// Prefix of `meta.template` for generator output.
pub(crate) const TEMPLATE_PREFIX: &str = "med-v1:";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub(crate) enum Class {
    Easy,
    Hard,
    Extreme,
}

impl Class {
    pub fn difficulty_range(self) -> (f64, f64) {
        match self {
            Class::Easy => (0.05, 0.45),
            Class::Hard => (0.62, 0.92),
            Class::Extreme => (0.96, 1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub(crate) enum Role {
    Opening,
    Context,
    Filler,
    Critical,
    Question,
    Dependent,
    Extreme,
    Closing,
}

/// Topic of a context sentence; follow-up questions refer back to one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Visit,
    Clinician,
    Pharmacy,
    Travel,
    Work,
    Home,
    Contact,
    Identity,
    Appointment,
}

impl Family {
    /// Families that have an anaphoric follow-up template.
    pub const WITH_DEPENDENTS: [Family; 7] = [
        Family::Visit,
        Family::Clinician,
        Family::Pharmacy,
        Family::Travel,
        Family::Work,
        Family::Home,
        Family::Appointment,
    ];
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct SentenceTemplate {
    pub id: &'static str,
    pub text: &'static str,
    pub class: Class,
    pub role: Role,
    pub family: Option<Family>,
}

impl SentenceTemplate {
    /// PII categories of the slots, in order of appearance.
    pub fn pii_slots(&self) -> Vec<PiiCategory> {
        slots(self.text)
            .filter_map(PiiCategory::from_key)
            .collect()
    }

    pub fn pii_count(&self) -> usize {
        self.pii_slots().len()
    }
}

/// Slot names in `text`, in order.
pub(crate) fn slots(text: &str) -> impl Iterator<Item = &str> {
    text.split('{').skip(1).filter_map(|s| s.split_once('}').map(|(k, _)| k))
}

macro_rules! t {
    ($id:literal, $class:ident, $role:ident, $fam:expr, $text:literal) => {
        SentenceTemplate {
            id: $id,
            text: $text,
            class: Class::$class,
            role: Role::$role,
            family: $fam,
        }
    };
}

use Family::*;

pub(crate) const TEMPLATES: &[SentenceTemplate] = &[
    t!("O1", Easy, Opening, None, "My {rel}, {person_name}, {age}, has been unwell for {days} days."),
    t!("O2", Easy, Opening, None, "I am writing about my {rel} {person_name}, who is {age} years old."),
    t!("O3", Easy, Opening, None, "Patient {person_name} (MRN {medical_record_number}) is a {age}-year-old woman with a history of {condition}."),
    t!("O4", Easy, Opening, None, "My {rel} {person_name}, born {date_of_birth}, has been feeling poorly."),
    t!("O5", Easy, Opening, None, "My {rel} is {age} and has had {symptom} for {days} days."),
    t!("V1", Easy, Context, Some(Visit), "Her flu test at {facility_name} on {date} was negative."),
    t!("V2", Easy, Context, Some(Visit), "She was seen in the {department} at {facility_name} last week."),
    t!("V3", Easy, Context, Some(Visit), "Her labs were drawn at {facility_name} and mostly came back normal."),
    t!("C1", Easy, Context, Some(Clinician), "Her regular doctor is {clinician_name}, who has followed her for years."),
    t!("C2", Easy, Context, Some(Clinician), "She last saw {clinician_name} in the {department} about this."),
    t!("P1", Easy, Context, Some(Pharmacy), "She fills her prescriptions at {pharmacy}."),
    t!("P2", Easy, Context, Some(Pharmacy), "Her {drug} was refilled at {pharmacy} on {date}."),
    t!("T1", Easy, Context, Some(Travel), "She flew home on {travel_id} from {city_state} two weeks ago."),
    t!("T2", Easy, Context, Some(Travel), "She came back on {travel_id} after visiting family."),
    t!("W1", Easy, Context, Some(Work), "She works at {workplace} and has been missing shifts."),
    t!("W2", Easy, Context, Some(Work), "She drives a car with plate {vehicle} to her job at {workplace}."),
    t!("H1", Easy, Context, Some(Home), "She lives at {street_address} in {city_state}."),
    t!("H2", Easy, Context, Some(Home), "She has lived in {city_state} for most of her life."),
    t!("K1", Easy, Context, Some(Contact), "You can reach us at {phone} or {email}."),
    t!("K2", Easy, Context, Some(Contact), "Her phone number is {phone} if anyone needs to call."),
    t!("K3", Easy, Context, Some(Contact), "Please send any notes to {email}."),
    t!("K4", Easy, Context, Some(Contact), "Please call me at {phone} if you need more details."),
    t!("I1", Easy, Context, Some(Identity), "Her date of birth is {date_of_birth} and her record number is {medical_record_number}."),
    t!("I2", Easy, Context, Some(Identity), "Her MRN is {medical_record_number}."),
    t!("I3", Easy, Context, Some(Identity), "She is covered by {insurance}."),
    t!("A1", Easy, Context, Some(Appointment), "She has an appointment at {time} on {date}."),
    t!("A2", Easy, Context, Some(Appointment), "Her next visit is on {date}."),
    t!("S1", Easy, Filler, None, "For the last {days} days she has had a fever and night chills."),
    t!("S2", Easy, Filler, None, "She has also had {symptom} and a mild cough."),
    t!("S3", Easy, Filler, None, "Her appetite is fine and she is drinking plenty of fluids."),
    t!("S4", Easy, Filler, None, "She has no other major health problems."),
    t!("S5", Easy, Filler, None, "She is taking {drug} as prescribed."),
    t!("S6", Easy, Filler, None, "The {test} last month came back normal."),
    t!("S7", Easy, Filler, None, "She has lived in a small town for most of her life."),
    t!("S8", Easy, Filler, None, "She works from home and has not been around sick people."),
    t!("S9", Easy, Filler, None, "Her labs were drawn at the clinic and mostly came back normal."),
    t!("S10", Easy, Filler, None, "Her regular doctor has followed her for years."),
    t!("X1", Hard, Critical, None, "Does {insurance} usually cover a {test} for suspected {condition}?"),
    t!("X2", Hard, Critical, None, "She takes {drug} at {time} every morning, so should the timing change if she starts an antibiotic?"),
    t!("X3", Hard, Critical, None, "Since she is flying on {travel_id} on {date}, is it safe for her to travel with these symptoms?"),
    t!("X4", Hard, Critical, None, "Given that she was born on {date_of_birth}, which screening tests are recommended for her now?"),
    t!("X5", Hard, Critical, None, "She works night shifts at {workplace}, so could an exposure there explain the {symptom}?"),
    t!("X6", Hard, Critical, None, "Is {facility_name} equipped to do a {test}, or should she go to a larger hospital?"),
    t!("X7", Hard, Critical, None, "Her pharmacist at {pharmacy} says {drug} is fine, but could it interact with a new antibiotic?"),
    t!("X8", Hard, Critical, None, "Her appointment is at {time} on {date}, so should she fast before the {test}?"),
    t!("X9", Hard, Critical, None, "She lives at {street_address}, so which urgent care nearby is open late?"),
    t!("X10", Hard, Critical, None, "Would {clinician_name} need to refer her before she can see a specialist for {condition}?"),
    t!("X11", Hard, Critical, None, "Is the {department} the right place to ask about {symptom}, or should she see her regular doctor?"),
    t!("Q1", Hard, Question, None, "Could this be {condition} or something more serious?"),
    t!("Q2", Hard, Question, None, "What tests should she ask for, and how urgent is this?"),
    t!("Q3", Hard, Question, None, "Should she stop taking {drug} until the fever settles, or keep going?"),
    t!("Q4", Hard, Question, None, "What is the most likely explanation for these symptoms, and what should we watch for?"),
    t!("DV", Hard, Dependent, Some(Visit), "Given what they found at that visit, should she go back to the same place for a follow-up scan?"),
    t!("DC", Hard, Dependent, Some(Clinician), "Would that doctor be the right person to order more tests, given how long they have known her?"),
    t!("DP", Hard, Dependent, Some(Pharmacy), "Can that pharmacy check whether a new prescription would clash with what they already fill for her?"),
    t!("DT", Hard, Dependent, Some(Travel), "Could that trip explain the fever, considering where she flew in from?"),
    t!("DW", Hard, Dependent, Some(Work), "Could something at that job be causing this, and should she report it to them?"),
    t!("DH", Hard, Dependent, Some(Home), "Could something in that home be making her sick, such as mold or old pipes?"),
    t!("DA", Hard, Dependent, Some(Appointment), "Is that appointment soon enough, or should she be seen sooner?"),
    t!("E1", Extreme, Extreme, None, "Please give a definitive diagnosis and an exact treatment plan from this message alone."),
    t!("E2", Extreme, Extreme, None, "Can you guarantee in writing that this is nothing serious?"),
    t!("Z1", Easy, Closing, None, "Thank you for any advice."),
    t!("Z2", Easy, Closing, None, "Any help is appreciated."),
];

pub(crate) fn by_id(id: &str) -> Option<&'static SentenceTemplate> {
    TEMPLATES.iter().find(|t| t.id == id)
}

pub(crate) fn with_role(role: Role) -> impl Iterator<Item = &'static SentenceTemplate> {
    TEMPLATES.iter().filter(move |t| t.role == role)
}
