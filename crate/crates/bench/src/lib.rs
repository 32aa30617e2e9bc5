//! Shared fixtures for the benchmarks.

use privpad_core::corpus::{generate_corpus, AnnotatedQuery, GenerationProfile};

/// A fixed slice of the default corpus.
pub fn sample_queries(n: usize) -> Vec<AnnotatedQuery> {
    generate_corpus(7, n, &GenerationProfile::medical()).expect("default profile generates")
}

/// The query with the most chunks among `qs`.
pub fn longest(qs: &[AnnotatedQuery]) -> &AnnotatedQuery {
    qs.iter().max_by_key(|q| q.sim.difficulty.len()).expect("non-empty")
}
