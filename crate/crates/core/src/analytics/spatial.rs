use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::wafer::{cell_offset, normalized_radius, Cell, WaferMap, EDGE_BAND, GRID};

pub const RADIAL_BINS: usize = 16;
pub const ANGULAR_BINS: usize = 36;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpatialStats {
    pub defect_density: f64,
    pub radial_hist: Vec<f64>,
    pub angular_hist: Vec<f64>,
    pub largest_component_fraction: f64,
    pub linearity: f64,
    pub edge_band_density: f64,
}

/// Principal-axis fit of a point set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrincipalAxis {
    pub cx: f64,
    pub cy: f64,
    /// Direction of the major axis in radians.
    pub angle: f64,
    pub major_variance: f64,
    pub minor_variance: f64,
}

pub fn principal_axis(points: &[(f64, f64)]) -> Option<PrincipalAxis> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let cx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let cy = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for &(x, y) in points {
        let (dx, dy) = (x - cx, y - cy);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    let (sxx, syy, sxy) = (sxx / n, syy / n, sxy / n);
    let mean = (sxx + syy) / 2.0;
    let spread = (((sxx - syy) / 2.0).powi(2) + sxy * sxy).sqrt();
    Some(PrincipalAxis {
        cx,
        cy,
        angle: 0.5 * (2.0 * sxy).atan2(sxx - syy),
        major_variance: mean + spread,
        minor_variance: (mean - spread).max(0.0),
    })
}

pub fn spatial_stats(map: &WaferMap) -> SpatialStats {
    let mut radial = [(0usize, 0usize); RADIAL_BINS];
    let mut angular = [(0usize, 0usize); ANGULAR_BINS];
    let (mut on, mut fail, mut edge_on, mut edge_fail) = (0usize, 0usize, 0usize, 0usize);
    let mut points = Vec::new();

    for r in 0..GRID {
        for c in 0..GRID {
            let cell = map.get(r, c);
            if cell == Cell::OffWafer {
                continue;
            }
            let is_fail = cell == Cell::Fail;
            let rho = normalized_radius(r, c);
            let (x, y) = cell_offset(r, c);
            let rb = ((rho * RADIAL_BINS as f64) as usize).min(RADIAL_BINS - 1);
            let theta = y.atan2(x).rem_euclid(TAU);
            let ab = ((theta / TAU * ANGULAR_BINS as f64) as usize).min(ANGULAR_BINS - 1);
            on += 1;
            radial[rb].0 += 1;
            angular[ab].0 += 1;
            if rho > EDGE_BAND {
                edge_on += 1;
            }
            if is_fail {
                fail += 1;
                radial[rb].1 += 1;
                angular[ab].1 += 1;
                if rho > EDGE_BAND {
                    edge_fail += 1;
                }
                points.push((x, y));
            }
        }
    }

    let ratio = |f: usize, n: usize| if n == 0 { 0.0 } else { f as f64 / n as f64 };
    let linearity = principal_axis(&points)
        .filter(|a| a.major_variance > 0.0)
        .map(|a| 1.0 - (a.minor_variance / a.major_variance).sqrt())
        .unwrap_or(0.0);

    SpatialStats {
        defect_density: ratio(fail, on),
        radial_hist: radial.iter().map(|&(n, f)| ratio(f, n)).collect(),
        angular_hist: angular.iter().map(|&(n, f)| ratio(f, n)).collect(),
        largest_component_fraction: ratio(largest_component(map), fail),
        linearity: linearity.clamp(0.0, 1.0),
        edge_band_density: ratio(edge_fail, edge_on),
    }
}

/// Size of the largest 8-connected group of failed die.
pub fn largest_component(map: &WaferMap) -> usize {
    let mut seen = vec![false; GRID * GRID];
    let mut stack = Vec::new();
    let mut best = 0;
    for start in 0..GRID * GRID {
        if seen[start] || map.cells()[start] != Cell::Fail {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut size = 0;
        while let Some(i) = stack.pop() {
            size += 1;
            let (r, c) = ((i / GRID) as i64, (i % GRID) as i64);
            for dr in -1..=1 {
                for dc in -1..=1 {
                    let (nr, nc) = (r + dr, c + dc);
                    if nr < 0 || nc < 0 || nr >= GRID as i64 || nc >= GRID as i64 {
                        continue;
                    }
                    let j = nr as usize * GRID + nc as usize;
                    if !seen[j] && map.cells()[j] == Cell::Fail {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        best = best.max(size);
    }
    best
}
