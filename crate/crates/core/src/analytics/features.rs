use super::spatial::{spatial_stats, SpatialStats, ANGULAR_BINS, RADIAL_BINS};
use crate::wafer::WaferMap;

pub const FEATURE_DIM: usize = RADIAL_BINS + ANGULAR_BINS + 4;

/// `[radial(16), angular(36), density, largest component, linearity, edge band]`.
pub fn features_from_stats(s: &SpatialStats) -> Vec<f64> {
    let mut v = Vec::with_capacity(FEATURE_DIM);
    v.extend_from_slice(&s.radial_hist);
    v.extend_from_slice(&s.angular_hist);
    v.extend([
        s.defect_density,
        s.largest_component_fraction,
        s.linearity,
        s.edge_band_density,
    ]);
    v
}

pub fn extract_features(map: &WaferMap) -> Vec<f64> {
    features_from_stats(&spatial_stats(map))
}
