//! Procedural wafer-map renderer.
//!
//! Every generator is a pure function of `(class, params, seed)`. The
//! geometry actually drawn is returned alongside the map so tests can check
//! the output against the generator's own shape.

pub mod dataset;
mod generators;
pub mod severity;

use std::ops::RangeInclusive;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::classes::DefectClass;
use crate::wafer::WaferMap;

pub use dataset::{dataset_stats, write_dataset, DatasetSpec, Manifest};
pub use generators::render_class;
pub use severity::{sample_severity, severity_distribution};

/// Parameter ranges for every class. Radii are normalized to the wafer radius.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorParams {
    pub scratch_width_die: RangeInclusive<f64>,
    pub scratch_span_fraction: RangeInclusive<f64>,
    pub particle_events: RangeInclusive<f64>,
    pub particle_footprint_die: RangeInclusive<usize>,
    /// Spatial frequency of the intensity field, in cycles per wafer diameter.
    pub particle_field_frequency: RangeInclusive<f64>,
    /// Exponent applied to the normalized field; larger values concentrate events.
    pub particle_field_contrast: f64,
    pub edge_depth_fraction: RangeInclusive<f64>,
    pub edge_arc_degrees: RangeInclusive<f64>,
    pub edge_fill: f64,
    pub center_sigma: RangeInclusive<f64>,
    pub center_cutoff: f64,
    pub local_center_radius: RangeInclusive<f64>,
    pub local_sigma: RangeInclusive<f64>,
    pub ring_radius: RangeInclusive<f64>,
    pub ring_width: RangeInclusive<f64>,
    pub ring_fill: RangeInclusive<f64>,
    pub blob_peak: RangeInclusive<f64>,
    pub random_density: RangeInclusive<f64>,
    pub near_full_density: RangeInclusive<f64>,
    /// Background failures as a fraction of on-wafer die.
    pub background_fraction: RangeInclusive<f64>,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        GeneratorParams {
            scratch_width_die: 1.0..=3.0,
            scratch_span_fraction: 0.6..=0.9,
            particle_events: 150.0..=400.0,
            particle_footprint_die: 2..=6,
            particle_field_frequency: 0.5..=2.0,
            particle_field_contrast: 4.0,
            edge_depth_fraction: 0.08..=0.12,
            edge_arc_degrees: 20.0..=90.0,
            edge_fill: 0.85,
            center_sigma: 0.08..=0.18,
            center_cutoff: 0.24,
            local_center_radius: 0.3..=0.75,
            local_sigma: 0.05..=0.12,
            ring_radius: 0.55..=0.80,
            ring_width: 0.05..=0.12,
            ring_fill: 0.6..=1.0,
            blob_peak: 0.7..=1.0,
            random_density: 0.02..=0.08,
            near_full_density: 0.6..=0.9,
            background_fraction: 0.0..=0.01,
        }
    }
}

/// The shape a generator drew, in die units relative to the wafer center
/// unless noted.
#[derive(Clone, Debug, PartialEq)]
pub enum Geometry {
    Band {
        angle: f64,
        offset: f64,
        half_length: f64,
        width: f64,
    },
    Poisson {
        events: usize,
    },
    EdgeArc {
        /// Normalized inner radius of the damaged zone.
        inner_radius: f64,
        start_angle: f64,
        extent: f64,
    },
    Blob {
        cx: f64,
        cy: f64,
        sigma: f64,
        cutoff: f64,
    },
    Annulus {
        /// Normalized inner and outer radius.
        inner: f64,
        outer: f64,
    },
    Uniform {
        density: f64,
    },
    Clean,
}

#[derive(Clone, Debug)]
pub struct Rendered {
    pub map: WaferMap,
    pub geometry: Geometry,
    /// Failures placed by the pattern itself.
    pub signal_cells: usize,
    pub background_cells: usize,
}

pub fn render(class: DefectClass, params: &GeneratorParams, seed: u64) -> WaferMap {
    render_with_geometry(class, params, seed).map
}

pub fn render_with_geometry(class: DefectClass, params: &GeneratorParams, seed: u64) -> Rendered {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    render_class(class, params, &mut rng)
}
