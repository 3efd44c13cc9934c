//! Feature sets drawn from generated datasets, in memory or on disk.

use std::path::Path;

use rayon::prelude::*;

use super::eval::{evaluate, EvalReport};
use super::features::extract_features;
use super::mlp::{train, MlpError, MlpModel, TrainConfig, TrainReport};
use crate::classes::DefectClass;
use crate::synth::dataset::{plan, read_annotations, DatasetError, Split};
use crate::synth::{render, DatasetSpec, GeneratorParams};
use crate::wafer::{MapError, WaferMap};

#[derive(Clone, Debug, Default)]
pub struct FeatureSet {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl FeatureSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn push(&mut self, f: Vec<f64>, label: usize) {
        self.features.push(f);
        self.labels.push(label);
    }
}

pub fn class_names() -> Vec<String> {
    DefectClass::ALL.iter().map(|c| c.name().to_string()).collect()
}

fn split_sets(rows: Vec<(Vec<f64>, usize, Split)>) -> (FeatureSet, FeatureSet) {
    let mut train = FeatureSet::default();
    let mut val = FeatureSet::default();
    for (f, l, s) in rows {
        match s {
            Split::Train => train.push(f, l),
            Split::Val => val.push(f, l),
        }
    }
    (train, val)
}

/// Render the dataset `spec` would produce with `seed` and featurize it
/// without touching the filesystem. Returns (train, val).
pub fn synthetic_features(spec: &DatasetSpec, params: &GeneratorParams, seed: u64) -> (FeatureSet, FeatureSet) {
    let rows = plan(spec, seed)
        .par_iter()
        .map(|p| {
            (
                extract_features(&render(p.class, params, p.seed)),
                p.class.index(),
                p.split,
            )
        })
        .collect();
    split_sets(rows)
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("{image}: {source}")]
    Image { image: String, source: MapError },
}

/// Load and featurize every image listed in a generated dataset directory.
pub fn dataset_features(dir: &Path) -> Result<(FeatureSet, FeatureSet), LoadError> {
    let records = read_annotations(dir)?;
    let rows = records
        .par_iter()
        .map(|r| {
            let map = WaferMap::load(&dir.join(&r.image)).map_err(|source| LoadError::Image {
                image: r.image.clone(),
                source,
            })?;
            Ok((extract_features(&map), r.defect_class.index(), r.split))
        })
        .collect::<Result<Vec<_>, LoadError>>()?;
    Ok(split_sets(rows))
}

#[derive(Clone, Debug)]
pub struct TrainedClassifier {
    pub model: MlpModel,
    pub report: TrainReport,
    pub validation: EvalReport,
}

pub fn fit(train_set: &FeatureSet, val_set: &FeatureSet, config: &TrainConfig) -> Result<TrainedClassifier, MlpError> {
    let (model, report) = train(&train_set.features, &train_set.labels, &class_names(), config)?;
    let validation = evaluate(&model, &val_set.features, &val_set.labels)?;
    Ok(TrainedClassifier {
        model,
        report,
        validation,
    })
}

/// Train on the full nine-class synthetic preset rendered in memory.
pub fn train_default(seed: u64) -> Result<TrainedClassifier, MlpError> {
    let (tr, va) = synthetic_features(&DatasetSpec::full_nine_class(), &GeneratorParams::default(), seed);
    fit(&tr, &va, &TrainConfig::default())
}
