use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AnnotatedQuery, CorpusError, CorpusSplit, PiiUnit, Query, QueryMeta, SimAnnotation};

pub const CORPUS_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum SplitTag {
    Train,
    Test,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    version: u32,
    id: String,
    text: String,
    domain_tag: String,
    pii: Vec<PiiUnit>,
    sim: SimAnnotation,
    meta: QueryMeta,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    split: Option<SplitTag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    split_seed: Option<u64>,
}

fn to_record(q: &AnnotatedQuery, split: SplitTag, seed: u64) -> Record {
    Record {
        version: CORPUS_VERSION,
        id: q.query.id.clone(),
        text: q.query.text.clone(),
        domain_tag: q.query.domain_tag.clone(),
        pii: q.query.pii.clone(),
        sim: q.sim.clone(),
        meta: q.query.meta.clone(),
        split: Some(split),
        split_seed: Some(seed),
    }
}

/// Writes one JSON object per line, train before test.
pub fn write_corpus<W: Write>(split: &CorpusSplit, mut w: W) -> Result<(), CorpusError> {
    let tagged = split
        .train
        .iter()
        .map(|q| (q, SplitTag::Train))
        .chain(split.test.iter().map(|q| (q, SplitTag::Test)));
    for (q, tag) in tagged {
        let line = serde_json::to_string(&to_record(q, tag, split.seed)).map_err(std::io::Error::other)?;
        w.write_all(line.as_bytes())?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_corpus(split: &CorpusSplit, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    write_corpus(split, BufWriter::new(File::create(path)?))
}

/// Reads a JSONL corpus. Lines without a `split` tag go to `train`.
pub fn read_corpus<R: Read>(r: R) -> Result<CorpusSplit, CorpusError> {
    let mut out = CorpusSplit::default();
    let mut seen = HashSet::new();
    let mut seed = None;
    for (i, line) in BufReader::new(r).lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |field: String, detail: String| CorpusError::Malformed {
            line: line_no,
            field,
            detail,
        };
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| malformed("<line>".into(), e.to_string()))?;
        match value.get("version").map(|v| v.as_u64()) {
            None => return Err(malformed("version".into(), "missing field".into())),
            Some(Some(v)) if v == u64::from(CORPUS_VERSION) => {}
            Some(Some(v)) => {
                return Err(CorpusError::Version {
                    line: line_no,
                    version: v as u32,
                })
            }
            Some(None) => return Err(malformed("version".into(), "expected an unsigned integer".into())),
        }
        let rec: Record = serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            malformed(path, e.into_inner().to_string())
        })?;
        let aq = AnnotatedQuery {
            query: Query {
                id: rec.id,
                text: rec.text,
                pii: rec.pii,
                domain_tag: rec.domain_tag,
                meta: rec.meta,
            },
            sim: rec.sim,
        };
        aq.query.validate()?;
        if !seen.insert(aq.query.id.clone()) {
            return Err(CorpusError::DuplicateId(aq.query.id));
        }
        if seed.is_none() {
            seed = rec.split_seed;
        }
        match rec.split {
            Some(SplitTag::Test) => out.test.push(aq),
            _ => out.train.push(aq),
        }
    }
    out.seed = seed.unwrap_or(0);
    Ok(out)
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<CorpusSplit, CorpusError> {
    read_corpus(File::open(path)?)
}
