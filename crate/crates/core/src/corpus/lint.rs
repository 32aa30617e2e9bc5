use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::templates::{self, Role, TEMPLATE_PREFIX};
use super::vocab::REFERENCE_YEAR;
use super::{PiiCategory, Query, SimAnnotation};
use crate::chunker::{attach_pii, normalize_whitespace, segment};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    /// Contradictory facts within one query.
    Consistency,
    /// A PII value does not fit the template slot it fills.
    Coherence,
    /// Spans, chunks and annotation disagree.
    Alignment,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}: {}", self.kind, self.message)
    }
}

fn age_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r", (\d{1,3}),|(\d{1,3})-year-old|(\d{1,3}) years old|is (\d{1,3}) and").expect("valid regex")
    })
}

fn has_cycle(n: usize, edges: &[(usize, usize)]) -> bool {
    let mut adj = vec![Vec::new(); n];
    for &(d, s) in edges {
        adj[d].push(s);
    }
    // 0 = unseen, 1 = on stack, 2 = done
    let mut state = vec![0u8; n];
    fn visit(v: usize, adj: &[Vec<usize>], state: &mut [u8]) -> bool {
        state[v] = 1;
        for &w in &adj[v] {
            if state[w] == 1 || (state[w] == 0 && visit(w, adj, state)) {
                return true;
            }
        }
        state[v] = 2;
        false
    }
    (0..n).any(|v| state[v] == 0 && visit(v, &adj, &mut state))
}

/// Machine-checkable quality rules for one annotated query.
///
/// Never fails; every problem found comes back as a [`Violation`].
pub fn lint_instance(q: &Query, ann: &SimAnnotation) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |kind, message: String| out.push(Violation { kind, message });

    if let Err(e) = q.validate() {
        push(ViolationKind::Alignment, e.to_string());
        return out;
    }
    let chunks = match segment(&q.text).and_then(|c| attach_pii(c, &q.pii)) {
        Ok(c) => c,
        Err(e) => {
            push(ViolationKind::Alignment, e.to_string());
            return out;
        }
    };
    let n = chunks.len();

    if ann.difficulty.len() != n {
        push(
            ViolationKind::Alignment,
            format!("difficulty has {} entries but the text has {n} chunks", ann.difficulty.len()),
        );
    }
    for (i, d) in ann.difficulty.iter().enumerate() {
        if !(0.0..=1.0).contains(d) {
            push(ViolationKind::Alignment, format!("difficulty[{i}] = {d} outside [0, 1]"));
        }
    }
    let mut edges_ok = true;
    for &(d, s) in &ann.dependencies {
        if d >= n || s >= n {
            push(ViolationKind::Alignment, format!("dependency ({d}, {s}) out of range for {n} chunks"));
            edges_ok = false;
        } else if d == s {
            push(ViolationKind::Alignment, format!("chunk {d} depends on itself"));
            edges_ok = false;
        }
    }
    if edges_ok && has_cycle(n, &ann.dependencies) {
        push(ViolationKind::Alignment, "dependency graph has a cycle".into());
    }

    let mut by_cat: BTreeMap<PiiCategory, BTreeSet<String>> = BTreeMap::new();
    for u in &q.pii {
        if u.category.single_valued() {
            by_cat
                .entry(u.category)
                .or_default()
                .insert(normalize_whitespace(&u.surface).to_lowercase());
        }
    }
    for (cat, surfaces) in by_cat.iter().filter(|(_, s)| s.len() > 1) {
        push(
            ViolationKind::Consistency,
            format!("{} different {} values in one query", surfaces.len(), cat.key()),
        );
    }

    if let Some(dob) = q.pii.iter().find(|u| u.category == PiiCategory::DateOfBirth) {
        let year = dob.surface.rsplit('/').next().and_then(|y| y.parse::<i32>().ok());
        if let Some(year) = year {
            for caps in age_pattern().captures_iter(&q.text) {
                let age = caps
                    .iter()
                    .skip(1)
                    .flatten()
                    .next()
                    .and_then(|m| m.as_str().parse::<i32>().ok());
                if let Some(age) = age {
                    let expected = REFERENCE_YEAR - year;
                    if age != expected && age != expected - 1 {
                        push(
                            ViolationKind::Consistency,
                            format!("stated age {age} contradicts date of birth {}", dob.surface),
                        );
                    }
                }
            }
        }
    }

    let lowered: Vec<String> = chunks
        .iter()
        .map(|c| normalize_whitespace(&c.text).to_lowercase())
        .collect();
    for u in &q.pii {
        let needle = normalize_whitespace(&u.surface).to_lowercase();
        for (i, c) in chunks.iter().enumerate() {
            if !c.pii_ids.contains(&u.id) && lowered[i].contains(&needle) {
                push(
                    ViolationKind::Consistency,
                    format!("surface of `{}` also appears in chunk {i}", u.id),
                );
            }
        }
    }

    if let Some(ids) = q.meta.template.strip_prefix(TEMPLATE_PREFIX) {
        let ids: Vec<&str> = ids.split('+').collect();
        if ids.len() != n {
            push(
                ViolationKind::Alignment,
                format!("template lists {} sentences but the text has {n} chunks", ids.len()),
            );
        } else {
            let units: BTreeMap<&str, &super::PiiUnit> = q.pii.iter().map(|u| (u.id.as_str(), u)).collect();
            for (i, (id, chunk)) in ids.iter().zip(&chunks).enumerate() {
                let Some(t) = templates::by_id(id) else {
                    push(ViolationKind::Coherence, format!("unknown sentence template `{id}` at chunk {i}"));
                    continue;
                };
                let got: Vec<PiiCategory> = chunk.pii_ids.iter().map(|p| units[p.as_str()].category).collect();
                if got != t.pii_slots() {
                    push(
                        ViolationKind::Coherence,
                        format!("chunk {i} carries {:?} but template `{id}` has slots {:?}", got, t.pii_slots()),
                    );
                }
                let critical = t.role == Role::Critical;
                for p in &chunk.pii_ids {
                    if units[p.as_str()].task_critical != critical {
                        push(
                            ViolationKind::Coherence,
                            format!("`{p}` task_critical flag does not match template `{id}`"),
                        );
                    }
                }
            }
        }
    }
    out
}
