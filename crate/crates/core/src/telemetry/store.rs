//! Append-only telemetry log.
//!
//! One file per equipment per UTC day at `<root>/<equipment>/<YYYY-MM-DD>.tlog`.
//! Each file starts with `FATLOG` + u16 version (little-endian) followed by
//! records `[u32 len][u32 crc32][SECS-II item]`. The item layout is
//! [`TelemetryEvent::to_record`]. The in-memory index is rebuilt on open and a
//! torn final record is discarded.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use chrono::{DateTime, Utc};
use fa_secs::{decode_item, encode_item};
use thiserror::Error;

use super::event::TelemetryEvent;

const MAGIC: &[u8; 6] = b"FATLOG";
const VERSION: u16 = 1;
const HEADER: [u8; 8] = {
    let mut h = [0u8; 8];
    let mut i = 0;
    while i < 6 {
        h[i] = MAGIC[i];
        i += 1;
    }
    let v = VERSION.to_le_bytes();
    h[6] = v[0];
    h[7] = v[1];
    h
};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("telemetry i/o on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: not a telemetry log")]
    BadHeader { path: PathBuf },
    #[error("timestamp {0} is negative")]
    NegativeTimestamp(i64),
    #[error("invalid equipment id {0:?}")]
    BadEquipmentId(String),
    #[error("encoding failed: {0}")]
    Encode(String),
}

type Key = (i64, u64);

pub struct TelemetryLog {
    root: PathBuf,
    index: RwLock<HashMap<String, BTreeMap<Key, TelemetryEvent>>>,
    writer: Mutex<Writer>,
}

struct Writer {
    next_seq: u64,
    files: HashMap<PathBuf, BufWriter<File>>,
}

impl std::fmt::Debug for TelemetryLog {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TelemetryLog").field("root", &self.root).finish()
    }
}

fn valid_equipment_id(id: &str) -> bool {
    !id.is_empty()
        && id != "."
        && id != ".."
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

fn day_of(ts_ms: i64) -> String {
    DateTime::<Utc>::from_timestamp_millis(ts_ms)
        .map(|d| d.format("%Y-%m-%d").to_string())
        .unwrap_or_else(|| "invalid".into())
}

impl TelemetryLog {
    /// Open the log rooted at `root`, creating it if needed.
    pub fn open(root: &Path) -> Result<Self, StoreError> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| StoreError::Io { path, source }
        };
        std::fs::create_dir_all(root).map_err(io(root))?;
        let mut index: HashMap<String, BTreeMap<Key, TelemetryEvent>> = HashMap::new();
        let mut seq = 0u64;

        let mut dirs: Vec<PathBuf> = std::fs::read_dir(root)
            .map_err(io(root))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect();
        dirs.sort();
        for dir in dirs {
            let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
                .map_err(io(&dir))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "tlog"))
                .collect();
            files.sort();
            for file in files {
                for ev in read_file(&file)? {
                    index
                        .entry(ev.equipment_id.clone())
                        .or_default()
                        .insert((ev.timestamp_ms, seq), ev);
                    seq += 1;
                }
            }
        }
        Ok(TelemetryLog {
            root: root.to_path_buf(),
            index: RwLock::new(index),
            writer: Mutex::new(Writer {
                next_seq: seq,
                files: HashMap::new(),
            }),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn append(&self, event: TelemetryEvent) -> Result<(), StoreError> {
        if event.timestamp_ms < 0 {
            return Err(StoreError::NegativeTimestamp(event.timestamp_ms));
        }
        if !valid_equipment_id(&event.equipment_id) {
            return Err(StoreError::BadEquipmentId(event.equipment_id));
        }
        let payload = encode_item(&event.to_record()).map_err(|e| StoreError::Encode(e.to_string()))?;
        let dir = self.root.join(&event.equipment_id);
        let path = dir.join(format!("{}.tlog", day_of(event.timestamp_ms)));
        let io = |source| StoreError::Io {
            path: path.clone(),
            source,
        };

        let mut w = self.writer.lock().expect("telemetry writer lock");
        if !w.files.contains_key(&path) {
            std::fs::create_dir_all(&dir).map_err(io)?;
            let fresh = !path.exists();
            let mut f = OpenOptions::new().create(true).append(true).open(&path).map_err(io)?;
            if fresh {
                f.write_all(&HEADER).map_err(io)?;
            }
            w.files.insert(path.clone(), BufWriter::new(f));
        }
        let file = w.files.get_mut(&path).expect("inserted above");
        let mut rec = Vec::with_capacity(payload.len() + 8);
        rec.extend_from_slice(&(payload.len() as u32).to_le_bytes());
        rec.extend_from_slice(&crc32fast::hash(&payload).to_le_bytes());
        rec.extend_from_slice(&payload);
        file.write_all(&rec).and_then(|_| file.flush()).map_err(io)?;
        let seq = w.next_seq;
        w.next_seq += 1;

        self.index
            .write()
            .expect("telemetry index lock")
            .entry(event.equipment_id.clone())
            .or_default()
            .insert((event.timestamp_ms, seq), event);
        Ok(())
    }

    /// Events of one equipment with `start <= timestamp <= end`, oldest first.
    /// Equal timestamps keep append order.
    pub fn query_window(&self, equipment_id: &str, start_ms: i64, end_ms: i64) -> Vec<TelemetryEvent> {
        if start_ms > end_ms {
            return Vec::new();
        }
        let index = self.index.read().expect("telemetry index lock");
        index
            .get(equipment_id)
            .map(|events| {
                events
                    .range((start_ms, 0)..=(end_ms, u64::MAX))
                    .map(|(_, e)| e.clone())
                    .collect()
            })
            .unwrap_or_default()
    }

    pub fn equipment_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self
            .index
            .read()
            .expect("telemetry index lock")
            .keys()
            .cloned()
            .collect();
        ids.sort();
        ids
    }

    pub fn len(&self) -> usize {
        self.index
            .read()
            .expect("telemetry index lock")
            .values()
            .map(BTreeMap::len)
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn read_file(path: &Path) -> Result<Vec<TelemetryEvent>, StoreError> {
    let io = |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut bytes = Vec::new();
    File::open(path).map_err(io)?.read_to_end(&mut bytes).map_err(io)?;
    if bytes.len() < HEADER.len() || bytes[..HEADER.len()] != HEADER {
        return Err(StoreError::BadHeader {
            path: path.to_path_buf(),
        });
    }
    let mut events = Vec::new();
    let mut pos = HEADER.len();
    while pos + 8 <= bytes.len() {
        let len = u32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
        let crc = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap());
        let Some(payload) = bytes.get(pos + 8..pos + 8 + len) else {
            break;
        };
        if crc32fast::hash(payload) != crc {
            break;
        }
        let Some(ev) = decode_item(payload)
            .ok()
            .and_then(|(item, _)| TelemetryEvent::from_record(&item))
        else {
            break;
        };
        events.push(ev);
        pos += 8 + len;
    }
    if pos != bytes.len() {
        tracing::warn!(path = %path.display(), dropped = bytes.len() - pos, "dropping torn telemetry tail");
        let f = OpenOptions::new().write(true).open(path).map_err(io)?;
        f.set_len(pos as u64).map_err(io)?;
    }
    Ok(events)
}
