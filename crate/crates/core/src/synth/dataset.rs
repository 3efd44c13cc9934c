//! Labeled dataset writer: one PNG plus one JSONL annotation per sample and a
//! manifest holding the train/val split.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::severity::sample_severity;
use super::{render, GeneratorParams};
use crate::analytics::spatial_stats;
use crate::classes::{DefectClass, Modality, Severity, Source};
use crate::narrative::{class_defaults, description_context, Narrator, TemplateNarrator, SECTION_DESCRIPTION};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const ANNOTATIONS_FILE: &str = "annotations.jsonl";
pub const IMAGE_DIR: &str = "images";
const MANIFEST_VERSION: u32 = 1;
const WAFERS_PER_LOT: usize = 25;
const HUMAN_PROMPT: &str =
    "<image>\nIdentify the defect pattern on this wafer map and give a failure-analysis summary.";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("corrupt manifest: {0}")]
    CorruptManifest(String),
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub train: usize,
    pub val: usize,
}

impl ClassCounts {
    pub fn total(&self) -> usize {
        self.train + self.val
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSpec {
    pub name: String,
    pub counts: Vec<(DefectClass, ClassCounts)>,
}

impl DatasetSpec {
    /// The three procedurally synthesized classes.
    pub fn paper_synthetic() -> Self {
        Self::from_table("paper-synthetic", &FULL_TABLE[..3])
    }

    /// All nine classes with the reference train/val counts.
    pub fn full_nine_class() -> Self {
        Self::from_table("full-9class", &FULL_TABLE)
    }

    pub fn preset(name: &str) -> Result<Self, DatasetError> {
        match name {
            "paper-synthetic" => Ok(Self::paper_synthetic()),
            "full-9class" => Ok(Self::full_nine_class()),
            other => Err(DatasetError::UnknownPreset(other.to_string())),
        }
    }

    /// Per-class totals split proportionally into `val_total` validation samples.
    pub fn custom(name: &str, totals: &[(DefectClass, usize)], val_total: usize) -> Self {
        let sizes: Vec<usize> = totals.iter().map(|t| t.1).collect();
        let val = stratified_split(&sizes, val_total);
        DatasetSpec {
            name: name.to_string(),
            counts: totals
                .iter()
                .zip(val)
                .map(|(&(c, n), v)| (c, ClassCounts { train: n - v, val: v }))
                .collect(),
        }
    }

    fn from_table(name: &str, rows: &[(DefectClass, usize, usize)]) -> Self {
        DatasetSpec {
            name: name.to_string(),
            counts: rows
                .iter()
                .map(|&(c, train, val)| (c, ClassCounts { train, val }))
                .collect(),
        }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().map(|(_, c)| c.total()).sum()
    }
}

const FULL_TABLE: [(DefectClass, usize, usize); 9] = [
    (DefectClass::Scratch, 94, 18),
    (DefectClass::ParticleContamination, 96, 10),
    (DefectClass::EdgeCrack, 84, 16),
    (DefectClass::CenterCluster, 93, 13),
    (DefectClass::LocalCluster, 79, 21),
    (DefectClass::RingPattern, 71, 23),
    (DefectClass::RandomDefects, 93, 13),
    (DefectClass::NearFullWafer, 77, 17),
    (DefectClass::NoDefect, 103, 9),
];

/// Largest-remainder allocation of `val_total` across groups in proportion to
/// their sizes. Ties in the remainder go to the lower index.
pub fn stratified_split(sizes: &[usize], val_total: usize) -> Vec<usize> {
    let n: usize = sizes.iter().sum();
    if n == 0 {
        return vec![0; sizes.len()];
    }
    let val_total = val_total.min(n);
    let mut alloc: Vec<usize> = sizes.iter().map(|&s| s * val_total / n).collect();
    let mut rest: Vec<(usize, usize)> = sizes
        .iter()
        .enumerate()
        .map(|(i, &s)| ((s * val_total) % n, i))
        .collect();
    rest.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let missing = val_total - alloc.iter().sum::<usize>();
    for &(_, i) in rest.iter().take(missing) {
        alloc[i] += 1;
    }
    alloc
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub from: String,
    pub value: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub id: String,
    pub image: String,
    pub defect_class: DefectClass,
    pub modality: Modality,
    pub severity: Severity,
    pub description: String,
    pub equipment_id: String,
    pub lot_id: String,
    pub wafer_id: String,
    pub source: Source,
    pub split: Split,
    pub seed: u64,
    pub conversations: Vec<Turn>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub preset: String,
    pub seed: u64,
    pub total: usize,
    pub classes: IndexMap<String, ClassCounts>,
    pub annotations: String,
    pub train: Vec<String>,
    pub val: Vec<String>,
}

fn equipment_area(class: DefectClass) -> &'static str {
    use DefectClass::*;
    match class {
        Scratch => "INSP",
        ParticleContamination | RandomDefects => "CLN",
        EdgeCrack => "DICE",
        CenterCluster => "CVD",
        LocalCluster | RingPattern => "ETCH",
        NearFullWafer => "WET",
        NoDefect => "LITHO",
    }
}

/// `EQ-<area>-<nn>` for a class and sample seed.
pub fn equipment_id(class: DefectClass, seed: u64) -> String {
    format!("EQ-{}-{:02}", equipment_area(class), seed % 12 + 1)
}

/// Lot and wafer id for the `index`-th sample of a dataset.
pub fn lot_and_wafer(index: usize) -> (String, String) {
    (
        format!("LOT-2024-{:03}", index / WAFERS_PER_LOT + 1),
        format!("W{:02}", index % WAFERS_PER_LOT + 1),
    )
}

/// One sample of a dataset plan, before rendering.
#[derive(Clone, Debug, PartialEq)]
pub struct Planned {
    pub class: DefectClass,
    pub id: String,
    pub seed: u64,
    pub split: Split,
    pub global: usize,
}

/// Per-sample classes, seeds and splits that `write_dataset` would use.
pub fn plan(spec: &DatasetSpec, seed: u64) -> Vec<Planned> {
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(spec.total());
    for &(class, counts) in &spec.counts {
        let seeds: Vec<u64> = (0..counts.total()).map(|_| master.random()).collect();
        let mut order: Vec<usize> = (0..counts.total()).collect();
        order.shuffle(&mut master);
        let mut split = vec![Split::Train; counts.total()];
        for &i in order.iter().take(counts.val) {
            split[i] = Split::Val;
        }
        for (i, s) in seeds.into_iter().enumerate() {
            out.push(Planned {
                class,
                id: format!("{}_{:04}", class.name(), i),
                seed: s,
                split: split[i],
                global: out.len(),
            });
        }
    }
    out
}

fn build_record(p: &Planned, params: &GeneratorParams, out_dir: &Path) -> Result<AnnotationRecord, DatasetError> {
    let map = render(p.class, params, p.seed);
    let image = format!("{IMAGE_DIR}/{}.png", p.id);
    let path = out_dir.join(&image);
    map.save_png(&path).map_err(|e| DatasetError::Io {
        path: path.clone(),
        source: std::io::Error::other(e.to_string()),
    })?;

    let stats = spatial_stats(&map);
    let (mechanism, action) = class_defaults(p.class);
    let ctx = description_context(p.class, &map, &stats, mechanism, action);
    let description = TemplateNarrator
        .narrate(SECTION_DESCRIPTION, &ctx)
        .expect("template context is complete");
    let severity = sample_severity(p.class, p.seed);
    let (lot_id, wafer_id) = lot_and_wafer(p.global);
    let answer = format!(
        "Defect class: {}. Severity: {}. {}",
        p.class.name(),
        severity.name(),
        description
    );
    Ok(AnnotationRecord {
        id: p.id.clone(),
        image,
        defect_class: p.class,
        modality: Modality::WaferMap,
        severity,
        description,
        equipment_id: equipment_id(p.class, p.seed),
        lot_id,
        wafer_id,
        source: Source::Synthetic,
        split: p.split,
        seed: p.seed,
        conversations: vec![
            Turn {
                from: "human".into(),
                value: HUMAN_PROMPT.into(),
            },
            Turn {
                from: "assistant".into(),
                value: answer,
            },
        ],
    })
}

/// Render every sample and write images, annotations and the manifest. An
/// empty spec writes nothing.
pub fn write_dataset(
    spec: &DatasetSpec,
    params: &GeneratorParams,
    seed: u64,
    out_dir: &Path,
) -> Result<Manifest, DatasetError> {
    let planned = plan(spec, seed);
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        preset: spec.name.clone(),
        seed,
        total: planned.len(),
        classes: spec.counts.iter().map(|(c, n)| (c.name().to_string(), *n)).collect(),
        annotations: ANNOTATIONS_FILE.to_string(),
        train: planned
            .iter()
            .filter(|p| p.split == Split::Train)
            .map(|p| p.id.clone())
            .collect(),
        val: planned
            .iter()
            .filter(|p| p.split == Split::Val)
            .map(|p| p.id.clone())
            .collect(),
    };
    if planned.is_empty() {
        return Ok(manifest);
    }

    let images = out_dir.join(IMAGE_DIR);
    std::fs::create_dir_all(&images).map_err(io_err(&images))?;
    let records: Vec<AnnotationRecord> = planned
        .par_iter()
        .map(|p| build_record(p, params, out_dir))
        .collect::<Result<_, _>>()?;

    let ann_path = out_dir.join(ANNOTATIONS_FILE);
    let mut w = BufWriter::new(std::fs::File::create(&ann_path).map_err(io_err(&ann_path))?);
    for r in &records {
        let line = serde_json::to_string(r).expect("record serializes");
        writeln!(w, "{line}").map_err(io_err(&ann_path))?;
    }
    w.flush().map_err(io_err(&ann_path))?;

    let man_path = out_dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&man_path, text).map_err(io_err(&man_path))?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, DatasetError> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
    serde_json::from_str(&text).map_err(|e| DatasetError::CorruptManifest(e.to_string()))
}

pub fn read_annotations(dir: &Path) -> Result<Vec<AnnotationRecord>, DatasetError> {
    let manifest = read_manifest(dir)?;
    let path = dir.join(&manifest.annotations);
    let file = std::fs::File::open(&path).map_err(io_err(&path))?;
    BufReader::new(file)
        .lines()
        .enumerate()
        .map(|(i, line)| {
            let line = line.map_err(io_err(&path))?;
            serde_json::from_str(&line)
                .map_err(|e| DatasetError::CorruptManifest(format!("annotation line {}: {e}", i + 1)))
        })
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct DatasetStats {
    pub total: usize,
    pub per_class: BTreeMap<DefectClass, ClassCounts>,
    pub per_severity: BTreeMap<Severity, usize>,
    pub per_source: BTreeMap<Source, usize>,
}

impl DatasetStats {
    pub fn from_records(records: &[AnnotationRecord]) -> Self {
        let mut s = DatasetStats {
            total: records.len(),
            ..Default::default()
        };
        for r in records {
            let c = s
                .per_class
                .entry(r.defect_class)
                .or_insert(ClassCounts { train: 0, val: 0 });
            match r.split {
                Split::Train => c.train += 1,
                Split::Val => c.val += 1,
            }
            *s.per_severity.entry(r.severity).or_default() += 1;
            *s.per_source.entry(r.source).or_default() += 1;
        }
        s
    }
}

/// Count what is on disk and cross-check it against the manifest.
pub fn dataset_stats(dir: &Path) -> Result<DatasetStats, DatasetError> {
    let manifest = read_manifest(dir)?;
    let records = read_annotations(dir)?;
    let stats = DatasetStats::from_records(&records);
    if stats.total != manifest.total {
        return Err(DatasetError::CorruptManifest(format!(
            "manifest lists {} samples, annotations hold {}",
            manifest.total, stats.total
        )));
    }
    for (name, counts) in &manifest.classes {
        let class: DefectClass = name
            .parse()
            .map_err(|e: crate::classes::UnknownClass| DatasetError::CorruptManifest(e.to_string()))?;
        let found = stats
            .per_class
            .get(&class)
            .copied()
            .unwrap_or(ClassCounts { train: 0, val: 0 });
        if found != *counts {
            return Err(DatasetError::CorruptManifest(format!(
                "class {name}: manifest {counts:?}, annotations {found:?}"
            )));
        }
    }
    Ok(stats)
}

impl DatasetStats {
    pub fn to_spec_counts(&self) -> Vec<(DefectClass, ClassCounts)> {
        self.per_class.iter().map(|(c, n)| (*c, *n)).collect()
    }
}
