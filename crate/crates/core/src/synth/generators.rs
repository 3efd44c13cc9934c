use std::f64::consts::{PI, TAU};
use std::sync::OnceLock;

use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use super::{GeneratorParams, Geometry, Rendered};
use crate::classes::DefectClass;
use crate::wafer::{cell_offset, normalized_radius, on_wafer, WaferMap, EDGE_BAND, GRID, RADIUS};

/// Scratch endpoints are kept this far inside the rim, in die.
const SCRATCH_RIM: f64 = 126.0;
/// Background cap as a fraction of the pattern's own failures.
const BLOB_BACKGROUND_CAP: f64 = 0.05;

fn on_wafer_cells() -> &'static [(usize, usize)] {
    static CELLS: OnceLock<Vec<(usize, usize)>> = OnceLock::new();
    CELLS.get_or_init(|| {
        (0..GRID)
            .flat_map(|r| (0..GRID).map(move |c| (r, c)))
            .filter(|&(r, c)| on_wafer(r, c))
            .collect()
    })
}

fn uniform(rng: &mut ChaCha8Rng, range: &std::ops::RangeInclusive<f64>) -> f64 {
    let (lo, hi) = (*range.start(), *range.end());
    if hi <= lo {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

pub fn render_class(class: DefectClass, params: &GeneratorParams, rng: &mut ChaCha8Rng) -> Rendered {
    let mut map = WaferMap::all_pass();
    let geometry = match class {
        DefectClass::Scratch => scratch(&mut map, params, rng),
        DefectClass::ParticleContamination => particles(&mut map, params, rng),
        DefectClass::EdgeCrack => edge_crack(&mut map, params, rng),
        DefectClass::CenterCluster => {
            let sigma = uniform(rng, &params.center_sigma) * RADIUS;
            let peak = uniform(rng, &params.blob_peak);
            blob(&mut map, rng, 0.0, 0.0, sigma, params.center_cutoff * RADIUS, peak)
        }
        DefectClass::LocalCluster => {
            let rho = uniform(rng, &params.local_center_radius) * RADIUS;
            let theta = rng.random_range(0.0..TAU);
            let sigma = uniform(rng, &params.local_sigma) * RADIUS;
            let peak = uniform(rng, &params.blob_peak);
            blob(
                &mut map,
                rng,
                rho * theta.cos(),
                rho * theta.sin(),
                sigma,
                2.5 * sigma,
                peak,
            )
        }
        DefectClass::RingPattern => ring(&mut map, params, rng),
        DefectClass::RandomDefects => {
            let density = uniform(rng, &params.random_density);
            exact_uniform(&mut map, rng, density);
            Geometry::Uniform { density }
        }
        DefectClass::NearFullWafer => {
            let density = uniform(rng, &params.near_full_density);
            exact_uniform(&mut map, rng, density);
            Geometry::Uniform { density }
        }
        DefectClass::NoDefect => Geometry::Clean,
    };
    let signal_cells = map.fail_count();

    let fraction = uniform(rng, &params.background_fraction);
    let wanted = (fraction * on_wafer_cells().len() as f64).round() as usize;
    let background_cells = match class {
        // A few far-off die are enough to tilt a least-squares line fit.
        DefectClass::Scratch | DefectClass::RandomDefects | DefectClass::NearFullWafer => 0,
        DefectClass::NoDefect | DefectClass::ParticleContamination => background(&mut map, rng, wanted, |_, _| true),
        DefectClass::EdgeCrack => {
            let cap = (BLOB_BACKGROUND_CAP * signal_cells as f64).floor() as usize;
            background(&mut map, rng, wanted.min(cap), |r, c| {
                normalized_radius(r, c) >= EDGE_BAND
            })
        }
        DefectClass::CenterCluster | DefectClass::LocalCluster | DefectClass::RingPattern => {
            let cap = (BLOB_BACKGROUND_CAP * signal_cells as f64).floor() as usize;
            background(&mut map, rng, wanted.min(cap), |_, _| true)
        }
    };

    Rendered {
        map,
        geometry,
        signal_cells,
        background_cells,
    }
}

/// Fail up to `count` random passing die accepted by `allow`; returns how many
/// were placed.
fn background(map: &mut WaferMap, rng: &mut ChaCha8Rng, count: usize, allow: impl Fn(usize, usize) -> bool) -> usize {
    let cells = on_wafer_cells();
    let mut placed = 0;
    let mut attempts = 0;
    while placed < count && attempts < count * 50 + 100 {
        attempts += 1;
        let (r, c) = cells[rng.random_range(0..cells.len())];
        if allow(r, c) && !map.is_fail(r, c) {
            map.fail(r, c);
            placed += 1;
        }
    }
    placed
}

fn exact_uniform(map: &mut WaferMap, rng: &mut ChaCha8Rng, density: f64) {
    let cells = on_wafer_cells();
    let count = (density * cells.len() as f64).round() as usize;
    for i in index::sample(rng, cells.len(), count.min(cells.len())) {
        let (r, c) = cells[i];
        map.fail(r, c);
    }
}

fn scratch(map: &mut WaferMap, params: &GeneratorParams, rng: &mut ChaCha8Rng) -> Geometry {
    let angle = rng.random_range(0.0..PI);
    let span = uniform(rng, &params.scratch_span_fraction);
    let width = uniform(rng, &params.scratch_width_die);
    let half_length = span * RADIUS;
    let max_offset = (SCRATCH_RIM * SCRATCH_RIM - half_length * half_length).max(0.0).sqrt();
    let offset = rng.random_range(-max_offset..=max_offset);
    let (ux, uy) = (angle.cos(), angle.sin());
    let (nx, ny) = (-uy, ux);
    for r in 0..GRID {
        for c in 0..GRID {
            let (x, y) = cell_offset(r, c);
            let d = x * nx + y * ny - offset;
            let a = x * ux + y * uy;
            if d.abs() <= width / 2.0 && a.abs() <= half_length {
                map.fail(r, c);
            }
        }
    }
    Geometry::Band {
        angle,
        offset,
        half_length,
        width,
    }
}

fn particles(map: &mut WaferMap, params: &GeneratorParams, rng: &mut ChaCha8Rng) -> Geometry {
    let waves: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| {
            let freq = uniform(rng, &params.particle_field_frequency);
            let k = TAU * freq / (2.0 * RADIUS);
            let dir = rng.random_range(0.0..TAU);
            (k * dir.cos(), k * dir.sin(), rng.random_range(0.0..TAU))
        })
        .collect();
    let contrast = params.particle_field_contrast;
    let intensity = |x: f64, y: f64| -> f64 {
        let s: f64 = waves.iter().map(|(kx, ky, ph)| (kx * x + ky * y + ph).cos()).sum();
        ((3.0 + s) / 6.0).powf(contrast)
    };

    // Inhomogeneous Poisson process by thinning: draw the event count, then
    // accept uniform candidates with probability equal to the field.
    let expected = uniform(rng, &params.particle_events);
    let target = Poisson::new(expected).map(|p| p.sample(rng) as usize).unwrap_or(0);
    let cells = on_wafer_cells();
    let mut events = 0;
    let mut attempts = 0;
    while events < target && attempts < target * 1000 {
        attempts += 1;
        let (r, c) = cells[rng.random_range(0..cells.len())];
        let (x, y) = cell_offset(r, c);
        if rng.random::<f64>() >= intensity(x, y) {
            continue;
        }
        events += 1;
        let size = rng.random_range(params.particle_footprint_die.clone());
        let (mut pr, mut pc) = (r as i64, c as i64);
        map.fail(r, c);
        for _ in 1..size {
            pr += rng.random_range(-1..=1);
            pc += rng.random_range(-1..=1);
            if (0..GRID as i64).contains(&pr) && (0..GRID as i64).contains(&pc) {
                map.fail(pr as usize, pc as usize);
            }
        }
    }
    Geometry::Poisson { events }
}

fn edge_crack(map: &mut WaferMap, params: &GeneratorParams, rng: &mut ChaCha8Rng) -> Geometry {
    let depth = uniform(rng, &params.edge_depth_fraction);
    let inner_radius = 1.0 - depth;
    let extent = uniform(rng, &params.edge_arc_degrees).to_radians();
    let start_angle = rng.random_range(0.0..TAU);
    let (f1, f2) = (rng.random_range(1.0..4.0), rng.random_range(4.0..9.0));
    let (p1, p2) = (rng.random_range(0.0..TAU), rng.random_range(0.0..TAU));
    for r in 0..GRID {
        for c in 0..GRID {
            let rho = normalized_radius(r, c);
            if !(inner_radius..1.0).contains(&rho) {
                continue;
            }
            let (x, y) = cell_offset(r, c);
            let along = (y.atan2(x) - start_angle).rem_euclid(TAU);
            if along > extent {
                continue;
            }
            let t = along / extent;
            let jag = 0.5 + 0.25 * (TAU * f1 * t + p1).sin() + 0.25 * (TAU * f2 * t + p2).sin();
            let local_inner = 1.0 - depth * (0.35 + 0.65 * jag);
            if rho >= local_inner && rng.random::<f64>() < params.edge_fill {
                map.fail(r, c);
            }
        }
    }
    Geometry::EdgeArc {
        inner_radius,
        start_angle,
        extent,
    }
}

fn blob(map: &mut WaferMap, rng: &mut ChaCha8Rng, cx: f64, cy: f64, sigma: f64, cutoff: f64, peak: f64) -> Geometry {
    for &(r, c) in on_wafer_cells() {
        let (x, y) = cell_offset(r, c);
        let d2 = (x - cx).powi(2) + (y - cy).powi(2);
        if d2 > cutoff * cutoff {
            continue;
        }
        if rng.random::<f64>() < peak * (-d2 / (2.0 * sigma * sigma)).exp() {
            map.fail(r, c);
        }
    }
    Geometry::Blob { cx, cy, sigma, cutoff }
}

fn ring(map: &mut WaferMap, params: &GeneratorParams, rng: &mut ChaCha8Rng) -> Geometry {
    let center = uniform(rng, &params.ring_radius);
    let width = uniform(rng, &params.ring_width);
    let fill = uniform(rng, &params.ring_fill);
    let (inner, outer) = (center - width / 2.0, center + width / 2.0);
    for &(r, c) in on_wafer_cells() {
        let rho = normalized_radius(r, c);
        if (inner..=outer).contains(&rho) && rng.random::<f64>() < fill {
            map.fail(r, c);
        }
    }
    Geometry::Annulus { inner, outer }
}
