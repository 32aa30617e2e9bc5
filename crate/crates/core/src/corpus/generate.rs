use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::lint::lint_instance;
use super::templates::{self, Family, Role, SentenceTemplate, TEMPLATE_PREFIX};
use super::vocab::{draw_filler, draw_value, Persona};
use super::{
    char_len, AnnotatedQuery, CorpusError, CorpusSplit, PiiCategory, PiiUnit, Query, QueryMeta,
    SimAnnotation,
};
use crate::chunker::segment;

const MAX_ATTEMPTS: usize = 256;

/// Knobs for the synthetic corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationProfile {
    /// Target mean number of PII units per query.
    pub pii_density: f64,
    /// Target mean number of sentences per query.
    pub mean_chunks: f64,
    pub max_chunks: usize,
    /// Target share of PII units that sit in a question needing them.
    pub task_critical_fraction: f64,
    /// Probability that a query has an anaphoric follow-up needing an earlier sentence.
    pub dependency_rate: f64,
    /// Probability of a sentence no model can handle.
    pub extreme_rate: f64,
    /// Relative weight of each family when picking a dependency source.
    pub source_weights: BTreeMap<Family, f64>,
    pub domain_tag: String,
}

impl Default for GenerationProfile {
    fn default() -> Self {
        Self::medical()
    }
}

impl GenerationProfile {
    /// Default PII-dense medical profile.
    pub fn medical() -> Self {
        GenerationProfile {
            pii_density: 4.6,
            mean_chunks: 8.0,
            max_chunks: 12,
            task_critical_fraction: 0.25,
            dependency_rate: 0.2,
            extreme_rate: 0.03,
            source_weights: Family::WITH_DEPENDENTS.iter().map(|&f| (f, 1.0)).collect(),
            domain_tag: "medical".into(),
        }
    }

    /// Many follow-up questions that refer back to earlier sentences.
    pub fn dependency_heavy() -> Self {
        GenerationProfile {
            dependency_rate: 0.6,
            ..Self::medical()
        }
    }

    /// Dense PII, most of it needed by hard questions, so answering well
    /// means exposing nearly everything.
    pub fn high_risk() -> Self {
        GenerationProfile {
            pii_density: 6.5,
            mean_chunks: 9.0,
            task_critical_fraction: 0.85,
            dependency_rate: 0.0,
            ..Self::medical()
        }
    }

    /// Largest PII count a single query can carry under the templates.
    pub fn achievable_density(&self) -> f64 {
        let families = 9usize;
        let slots = self.max_chunks.saturating_sub(3).min(families);
        (2 + 2 + 2 * slots) as f64
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let cfg = |m: String| Err(CorpusError::Config(m));
        if !self.pii_density.is_finite() || self.pii_density < 1.0 {
            return cfg(format!(
                "pii_density {} must be at least 1 (every query carries PII)",
                self.pii_density
            ));
        }
        if self.pii_density + 1.0 > self.achievable_density() {
            return cfg(format!(
                "pii_density {} exceeds what the templates can place in {} chunks ({})",
                self.pii_density,
                self.max_chunks,
                self.achievable_density() - 1.0
            ));
        }
        if !(4..=20).contains(&self.max_chunks) {
            return cfg(format!("max_chunks {} outside [4, 20]", self.max_chunks));
        }
        if !(3.0..=self.max_chunks as f64).contains(&self.mean_chunks) {
            return cfg(format!("mean_chunks {} outside [3, max_chunks]", self.mean_chunks));
        }
        for (name, p) in [
            ("task_critical_fraction", self.task_critical_fraction),
            ("dependency_rate", self.dependency_rate),
            ("extreme_rate", self.extreme_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return cfg(format!("{name} {p} outside [0, 1]"));
            }
        }
        if self.dependency_rate > 0.0 {
            let ok = self.source_weights.values().all(|w| w.is_finite() && *w >= 0.0)
                && self
                    .source_weights
                    .iter()
                    .any(|(f, w)| *w > 0.0 && Family::WITH_DEPENDENTS.contains(f));
            if !ok {
                return cfg("source_weights need a positive weight on a family with follow-ups".into());
            }
        }
        Ok(())
    }
}

/// SplitMix64 step; decorrelates per-query seeds.
fn mix(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct Plan {
    opening: &'static SentenceTemplate,
    middle: Vec<&'static SentenceTemplate>,
    tail: Vec<&'static SentenceTemplate>,
    closing: Option<&'static SentenceTemplate>,
    source: Option<&'static SentenceTemplate>,
    dependent: Option<&'static SentenceTemplate>,
}

fn conflicts(t: &SentenceTemplate, used: &HashSet<PiiCategory>) -> bool {
    t.pii_slots().iter().any(|c| c.single_valued() && used.contains(c))
}

fn claim(t: &SentenceTemplate, used: &mut HashSet<PiiCategory>) {
    used.extend(t.pii_slots().into_iter().filter(|c| c.single_valued()));
}

fn draw_budget<R: Rng>(rng: &mut R, density: f64) -> usize {
    let base = density.floor();
    let mut k = base as i64 + i64::from(rng.gen_bool(density - base));
    if base >= 2.0 {
        k += match rng.gen_range(0..4) {
            0 => -1,
            3 => 1,
            _ => 0,
        };
    }
    k.max(1) as usize
}

/// `floor(x)` plus a Bernoulli draw on the fractional part.
fn draw_budget_exact<R: Rng>(rng: &mut R, x: f64) -> usize {
    let base = x.floor();
    base as usize + usize::from(rng.gen_bool((x - base).clamp(0.0, 1.0)))
}

fn plan_query<R: Rng>(rng: &mut R, p: &GenerationProfile) -> Option<Plan> {
    let budget = draw_budget(rng, p.pii_density);
    let mut remaining = budget;
    let mut used_cats = HashSet::new();
    let mut used_families = HashSet::new();
    let mut tail = Vec::new();

    let crit_target = draw_budget_exact(rng, p.task_critical_fraction * budget as f64);
    let mut crit = 0;
    while crit < crit_target {
        let ok: Vec<_> = templates::with_role(Role::Critical)
            .filter(|t| {
                t.pii_count() <= remaining
                    && crit + t.pii_count() <= crit_target
                    && !tail.iter().any(|u: &&SentenceTemplate| u.id == t.id)
                    && !conflicts(t, &used_cats)
            })
            .collect();
        let Some(t) = ok.choose(rng).copied() else {
            break;
        };
        remaining -= t.pii_count();
        crit += t.pii_count();
        claim(t, &mut used_cats);
        tail.push(t);
    }

    let mut source = None;
    let mut dependent = None;
    if rng.gen_bool(p.dependency_rate) {
        let eligible: Vec<(Family, f64)> = Family::WITH_DEPENDENTS
            .iter()
            .filter_map(|&f| {
                let w = p.source_weights.get(&f).copied().unwrap_or(0.0);
                let has = templates::with_role(Role::Context).any(|t| {
                    t.family == Some(f) && (1..=remaining).contains(&t.pii_count()) && !conflicts(t, &used_cats)
                });
                (w > 0.0 && has).then_some((f, w))
            })
            .collect();
        if let Ok(&(fam, _)) = eligible.choose_weighted(rng, |e| e.1) {
            let srcs: Vec<_> = templates::with_role(Role::Context)
                .filter(|t| t.family == Some(fam) && (1..=remaining).contains(&t.pii_count()) && !conflicts(t, &used_cats))
                .collect();
            let s = *srcs.choose(rng)?;
            let d = templates::with_role(Role::Dependent).find(|t| t.family == Some(fam))?;
            remaining -= s.pii_count();
            claim(s, &mut used_cats);
            used_families.insert(fam);
            source = Some(s);
            dependent = Some(d);
            tail.push(d);
        }
    }

    let openings: Vec<_> = templates::with_role(Role::Opening)
        .filter(|t| t.pii_count() <= remaining && !conflicts(t, &used_cats))
        .collect();
    let with_pii: Vec<_> = openings.iter().copied().filter(|t| t.pii_count() > 0).collect();
    let opening = if !with_pii.is_empty() && rng.gen_bool(0.9) {
        *with_pii.choose(rng)?
    } else {
        *openings.iter().find(|t| t.pii_count() == 0)?
    };
    remaining -= opening.pii_count();
    claim(opening, &mut used_cats);

    let mut middle: Vec<&'static SentenceTemplate> = source.into_iter().collect();
    while remaining > 0 {
        let ok: Vec<_> = templates::with_role(Role::Context)
            .filter(|t| {
                let fam = t.family.expect("context templates have a family");
                t.pii_count() > 0
                    && t.pii_count() <= remaining
                    && !used_families.contains(&fam)
                    && !conflicts(t, &used_cats)
            })
            .collect();
        let Some(t) = ok.choose(rng).copied() else {
            break;
        };
        remaining -= t.pii_count();
        claim(t, &mut used_cats);
        used_families.insert(t.family.expect("context family"));
        middle.push(t);
    }
    if remaining > 0 {
        return None;
    }

    let has_critical = tail.iter().any(|t| t.role == Role::Critical);
    if !has_critical || rng.gen_bool(0.7) {
        tail.push(*templates::with_role(Role::Question).collect::<Vec<_>>().choose(rng)?);
    }
    if rng.gen_bool(p.extreme_rate) {
        tail.push(*templates::with_role(Role::Extreme).collect::<Vec<_>>().choose(rng)?);
    }
    let closing = if rng.gen_bool(0.5) {
        Some(*templates::with_role(Role::Closing).collect::<Vec<_>>().choose(rng)?)
    } else {
        None
    };

    let structural = 1 + middle.len() + tail.len() + usize::from(closing.is_some());
    if structural > p.max_chunks {
        return None;
    }
    let jitter = rng.gen_range(-2i64..=2);
    let target = ((p.mean_chunks.round() as i64 + jitter).max(1) as usize).min(p.max_chunks);
    let mut fillers: Vec<_> = templates::with_role(Role::Filler).collect();
    fillers.shuffle(rng);
    middle.extend(fillers.into_iter().take(target.saturating_sub(structural)));
    middle.shuffle(rng);
    tail.shuffle(rng);

    Some(Plan {
        opening,
        middle,
        tail,
        closing,
        source,
        dependent,
    })
}

struct Rendered {
    text: String,
    units: Vec<(PiiCategory, bool, usize, usize)>,
}

fn render<R: Rng>(
    rng: &mut R,
    t: &SentenceTemplate,
    persona: &Persona,
    surfaces: &mut HashSet<String>,
) -> Option<Rendered> {
    let mut text = String::new();
    let mut units = Vec::new();
    let mut rest = t.text;
    while let Some(open) = rest.find('{') {
        text.push_str(&rest[..open]);
        let close = open + rest[open..].find('}')?;
        let key = &rest[open + 1..close];
        if let Some(cat) = PiiCategory::from_key(key) {
            let value = (0..16)
                .map(|_| draw_value(rng, cat, persona))
                .find(|v| !surfaces.contains(&v.to_lowercase()))?;
            surfaces.insert(value.to_lowercase());
            let start = char_len(&text);
            text.push_str(&value);
            units.push((cat, t.role == Role::Critical, start, char_len(&text)));
        } else {
            text.push_str(&draw_filler(rng, key, persona)?);
        }
        rest = &rest[close + 1..];
    }
    text.push_str(rest);
    Some(Rendered { text, units })
}

fn build_query<R: Rng>(rng: &mut R, p: &GenerationProfile, id: &str, seed: u64) -> Option<AnnotatedQuery> {
    let plan = plan_query(rng, p)?;
    let mut order: Vec<&'static SentenceTemplate> = vec![plan.opening];
    order.extend(plan.middle.iter().copied());
    order.extend(plan.tail.iter().copied());
    order.extend(plan.closing);

    let persona = Persona::draw(rng);
    let mut surfaces = HashSet::new();
    let mut text = String::new();
    let mut pii = Vec::new();
    let mut difficulty = Vec::with_capacity(order.len());
    let mut spans = Vec::with_capacity(order.len());
    for t in &order {
        let r = render(rng, t, &persona, &mut surfaces)?;
        if !text.is_empty() {
            text.push(' ');
        }
        let offset = char_len(&text);
        for (category, critical, s, e) in r.units {
            let surface: String = r.text.chars().skip(s).take(e - s).collect();
            pii.push(PiiUnit {
                id: format!("p{}", pii.len()),
                surface,
                category,
                task_critical: critical,
                span: (offset + s, offset + e),
            });
        }
        text.push_str(&r.text);
        spans.push((offset, char_len(&text)));
        let (lo, hi) = t.class.difficulty_range();
        difficulty.push(rng.gen_range(lo..=hi));
    }

    let chunks = segment(&text).ok()?;
    if chunks.iter().map(|c| c.span).ne(spans.iter().copied()) {
        return None;
    }
    let mut dependencies = Vec::new();
    if let (Some(s), Some(d)) = (plan.source, plan.dependent) {
        let si = order.iter().position(|t| std::ptr::eq(*t, s))?;
        let di = order.iter().position(|t| std::ptr::eq(*t, d))?;
        dependencies.push((di, si));
    }
    let template = format!(
        "{TEMPLATE_PREFIX}{}",
        order.iter().map(|t| t.id).collect::<Vec<_>>().join("+")
    );
    let q = AnnotatedQuery {
        query: Query {
            id: id.to_string(),
            text,
            pii,
            domain_tag: p.domain_tag.clone(),
            meta: QueryMeta { seed, template },
        },
        sim: SimAnnotation {
            difficulty,
            dependencies,
        },
    };
    (lint_instance(&q.query, &q.sim).is_empty() && !q.query.pii.is_empty()).then_some(q)
}

/// Deterministic corpus of `n` annotated queries.
///
/// Query `i` is drawn from its own ChaCha8 stream seeded by mixing `seed`
/// and `i`; that sub-seed is stored in `meta.seed`.
pub fn generate_corpus(seed: u64, n: usize, profile: &GenerationProfile) -> Result<Vec<AnnotatedQuery>, CorpusError> {
    if n == 0 {
        return Err(CorpusError::Config("n must be at least 1".into()));
    }
    profile.validate()?;
    (0..n)
        .map(|i| {
            let sub = mix(seed, i as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(sub);
            let id = format!("q{i:05}");
            (0..MAX_ATTEMPTS)
                .find_map(|_| build_query(&mut rng, profile, &id, sub))
                .ok_or_else(|| {
                    CorpusError::Config(format!("could not build a valid query for `{id}` under this profile"))
                })
        })
        .collect()
}

/// Generates `n` queries and splits them; the test part has
/// `floor(n * test_ratio)` queries.
pub fn generate_split(
    seed: u64,
    n: usize,
    test_ratio: f64,
    profile: &GenerationProfile,
) -> Result<CorpusSplit, CorpusError> {
    if !(0.0..1.0).contains(&test_ratio) {
        return Err(CorpusError::Config(format!("test_ratio {test_ratio} outside [0, 1)")));
    }
    let mut all = generate_corpus(seed, n, profile)?;
    let n_test = (n as f64 * test_ratio + 1e-9).floor() as usize;
    let test = all.split_off(n - n_test);
    Ok(CorpusSplit { train: all, test, seed })
}
