//! Exact cosine-similarity retrieval over stored defect cases.
//!
//! File layout: an 8-byte header (`FAVIDX` + u16 version) followed by records
//! `[u32 len][u32 crc32][payload]`, all little-endian. A payload is
//! `[u32 meta_len][meta JSON][u32 dim][dim × f64]`. Later records replace
//! earlier ones with the same `case_id`. A torn final record is dropped on open.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classes::{DefectClass, Severity};

const MAGIC: &[u8; 6] = b"FAVIDX";
const VERSION: u16 = 1;
const HEADER_LEN: u64 = 8;
pub const DEFAULT_TOP_K: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DefectCase {
    pub case_id: String,
    #[serde(skip)]
    pub embedding: Vec<f64>,
    pub defect_class: DefectClass,
    pub severity: Severity,
    pub root_cause_narrative: String,
    pub equipment_id: String,
    pub timestamp_ms: i64,
    /// Root-cause mechanism key, when known.
    #[serde(default)]
    pub mechanism: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScoredCase {
    pub case: DefectCase,
    pub similarity: f64,
}

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("embedding has {got} dimensions, index holds {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("embedding contains non-finite values")]
    NonFinite,
    #[error("empty case id")]
    EmptyId,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("index file {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("index file {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },
}

/// Cosine similarity; zero-norm inputs score 0.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na.sqrt() * nb.sqrt())
    }
}

/// Similarities are compared at 1e-9 resolution so that rounding noise between
/// collinear embeddings does not override the case-id tie-break.
fn rank_key(similarity: f64) -> i64 {
    (similarity * 1e9).round() as i64
}

fn rank(a: &ScoredCase, b: &ScoredCase) -> Ordering {
    rank_key(b.similarity)
        .cmp(&rank_key(a.similarity))
        .then_with(|| a.case.case_id.cmp(&b.case.case_id))
}

/// Merge ranked result lists into one top-k list.
pub fn merge_ranked(lists: impl IntoIterator<Item = Vec<ScoredCase>>, k: usize) -> Vec<ScoredCase> {
    let mut all: Vec<ScoredCase> = lists.into_iter().flatten().collect();
    all.sort_by(rank);
    all.truncate(k);
    all
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IndexStats {
    pub cases: usize,
    pub dimension: Option<usize>,
    pub log_records: usize,
    pub per_class: BTreeMap<DefectClass, usize>,
}

struct Inner {
    cases: BTreeMap<String, DefectCase>,
    dim: Option<usize>,
    log: Option<BufWriter<File>>,
    log_records: usize,
}

pub struct VectorIndex {
    inner: RwLock<Inner>,
    path: Option<PathBuf>,
}

impl std::fmt::Debug for VectorIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("VectorIndex")
            .field("path", &self.path)
            .field("len", &self.len())
            .finish()
    }
}

fn encode_record(case: &DefectCase) -> Vec<u8> {
    let meta = serde_json::to_vec(case).expect("case metadata serializes");
    let mut payload = Vec::with_capacity(8 + meta.len() + case.embedding.len() * 8);
    payload.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    payload.extend_from_slice(&meta);
    payload.extend_from_slice(&(case.embedding.len() as u32).to_le_bytes());
    for v in &case.embedding {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    let mut rec = Vec::with_capacity(payload.len() + 8);
    rec.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    rec.extend_from_slice(&crc32fast::hash(&payload).to_le_bytes());
    rec.extend_from_slice(&payload);
    rec
}

fn decode_payload(payload: &[u8]) -> Option<DefectCase> {
    let meta_len = u32::from_le_bytes(payload.get(..4)?.try_into().ok()?) as usize;
    let meta = payload.get(4..4 + meta_len)?;
    let mut case: DefectCase = serde_json::from_slice(meta).ok()?;
    let rest = payload.get(4 + meta_len..)?;
    let dim = u32::from_le_bytes(rest.get(..4)?.try_into().ok()?) as usize;
    let floats = rest.get(4..)?;
    if floats.len() != dim * 8 {
        return None;
    }
    case.embedding = floats
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Some(case)
}

fn header() -> [u8; 8] {
    let mut h = [0u8; 8];
    h[..6].copy_from_slice(MAGIC);
    h[6..].copy_from_slice(&VERSION.to_le_bytes());
    h
}

impl Default for VectorIndex {
    fn default() -> Self {
        Self::in_memory()
    }
}

impl VectorIndex {
    pub fn in_memory() -> Self {
        VectorIndex {
            inner: RwLock::new(Inner {
                cases: BTreeMap::new(),
                dim: None,
                log: None,
                log_records: 0,
            }),
            path: None,
        }
    }

    /// Open or create a persistent index.
    pub fn open(path: &Path) -> Result<Self, IndexError> {
        let io = |source| IndexError::Io {
            path: path.to_path_buf(),
            source,
        };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(io)?;
        }
        let mut cases = BTreeMap::new();
        let mut log_records = 0;
        let mut dim = None;
        if path.exists() {
            let mut bytes = Vec::new();
            File::open(path).map_err(io)?.read_to_end(&mut bytes).map_err(io)?;
            if bytes.len() < HEADER_LEN as usize || bytes[..8] != header() {
                return Err(IndexError::Corrupt {
                    path: path.to_path_buf(),
                    reason: "bad header".into(),
                });
            }
            let mut pos = HEADER_LEN as usize;
            while pos + 8 <= bytes.len() {
                let len = u32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
                let crc = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap());
                let Some(payload) = bytes.get(pos + 8..pos + 8 + len) else {
                    break;
                };
                if crc32fast::hash(payload) != crc {
                    break;
                }
                let Some(case) = decode_payload(payload) else { break };
                dim.get_or_insert(case.embedding.len());
                cases.insert(case.case_id.clone(), case);
                log_records += 1;
                pos += 8 + len;
            }
            if pos != bytes.len() {
                tracing::warn!(path = %path.display(), dropped = bytes.len() - pos, "dropping torn index tail");
                let f = OpenOptions::new().write(true).open(path).map_err(io)?;
                f.set_len(pos as u64).map_err(io)?;
            }
        } else {
            std::fs::write(path, header()).map_err(io)?;
        }
        let file = OpenOptions::new().append(true).open(path).map_err(io)?;
        Ok(VectorIndex {
            inner: RwLock::new(Inner {
                cases,
                dim,
                log: Some(BufWriter::new(file)),
                log_records,
            }),
            path: Some(path.to_path_buf()),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.inner.read().expect("index lock").cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dimension(&self) -> Option<usize> {
        self.inner.read().expect("index lock").dim
    }

    pub fn get(&self, case_id: &str) -> Option<DefectCase> {
        self.inner.read().expect("index lock").cases.get(case_id).cloned()
    }

    pub fn cases(&self) -> Vec<DefectCase> {
        self.inner.read().expect("index lock").cases.values().cloned().collect()
    }

    fn io_error(&self, source: std::io::Error) -> IndexError {
        IndexError::Io {
            path: self.path.clone().unwrap_or_default(),
            source,
        }
    }

    /// Insert or replace a case. The first insert fixes the dimension.
    pub fn upsert(&self, case: DefectCase) -> Result<(), IndexError> {
        if case.case_id.is_empty() {
            return Err(IndexError::EmptyId);
        }
        if case.embedding.iter().any(|v| !v.is_finite()) {
            return Err(IndexError::NonFinite);
        }
        let mut inner = self.inner.write().expect("index lock");
        if let Some(expected) = inner.dim {
            if expected != case.embedding.len() {
                return Err(IndexError::DimensionMismatch {
                    expected,
                    got: case.embedding.len(),
                });
            }
        }
        if let Some(log) = inner.log.as_mut() {
            log.write_all(&encode_record(&case))
                .and_then(|_| log.flush())
                .map_err(|e| self.io_error(e))?;
            inner.log_records += 1;
        }
        inner.dim.get_or_insert(case.embedding.len());
        inner.cases.insert(case.case_id.clone(), case);
        let live = inner.cases.len();
        if inner.log.is_some() && inner.log_records > 2 * live + 64 {
            self.compact_locked(&mut inner)?;
        }
        Ok(())
    }

    /// Exact top-k by cosine similarity, ties (within 1e-9) broken by ascending
    /// case id.
    pub fn query_top_k(&self, embedding: &[f64], k: usize) -> Result<Vec<ScoredCase>, IndexError> {
        if k == 0 {
            return Err(IndexError::InvalidK);
        }
        if embedding.iter().any(|v| !v.is_finite()) {
            return Err(IndexError::NonFinite);
        }
        let inner = self.inner.read().expect("index lock");
        if let Some(expected) = inner.dim {
            if expected != embedding.len() {
                return Err(IndexError::DimensionMismatch {
                    expected,
                    got: embedding.len(),
                });
            }
        }
        let mut scored: Vec<ScoredCase> = inner
            .cases
            .values()
            .map(|c| ScoredCase {
                similarity: cosine(embedding, &c.embedding),
                case: c.clone(),
            })
            .collect();
        drop(inner);
        scored.sort_by(rank);
        scored.truncate(k);
        Ok(scored)
    }

    pub fn stats(&self) -> IndexStats {
        let inner = self.inner.read().expect("index lock");
        let mut per_class = BTreeMap::new();
        for c in inner.cases.values() {
            *per_class.entry(c.defect_class).or_insert(0) += 1;
        }
        IndexStats {
            cases: inner.cases.len(),
            dimension: inner.dim,
            log_records: inner.log_records,
            per_class,
        }
    }

    /// Rewrite the log with one record per live case.
    pub fn compact(&self) -> Result<(), IndexError> {
        let mut inner = self.inner.write().expect("index lock");
        self.compact_locked(&mut inner)
    }

    fn compact_locked(&self, inner: &mut Inner) -> Result<(), IndexError> {
        let Some(path) = &self.path else { return Ok(()) };
        let tmp = path.with_extension("compact.tmp");
        let write = || -> std::io::Result<()> {
            let mut w = BufWriter::new(File::create(&tmp)?);
            w.write_all(&header())?;
            for c in inner.cases.values() {
                w.write_all(&encode_record(c))?;
            }
            w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
            std::fs::rename(&tmp, path)
        };
        write().map_err(|e| self.io_error(e))?;
        let file = OpenOptions::new()
            .append(true)
            .open(path)
            .map_err(|e| self.io_error(e))?;
        inner.log = Some(BufWriter::new(file));
        inner.log_records = inner.cases.len();
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn case(id: &str, e: Vec<f64>) -> DefectCase {
        DefectCase {
            case_id: id.into(),
            embedding: e,
            defect_class: DefectClass::Scratch,
            severity: Severity::Minor,
            root_cause_narrative: String::new(),
            equipment_id: "EQ".into(),
            timestamp_ms: 0,
            mechanism: None,
        }
    }

    #[test]
    fn zero_and_orthogonal() {
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 2.0]), 0.0);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 3.0]), 0.0);
    }

    #[test]
    fn dimension_is_fixed_by_first_insert() {
        let idx = VectorIndex::in_memory();
        idx.upsert(case("a", vec![1.0, 2.0])).unwrap();
        assert!(matches!(
            idx.upsert(case("b", vec![1.0])),
            Err(IndexError::DimensionMismatch { .. })
        ));
        assert!(idx.query_top_k(&[1.0, 0.0], 0).is_err());
    }
}
