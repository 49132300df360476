//! Detected elements scored against ground truth.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::geom::Vec2;
use crate::ifc::BuildingElements;
use crate::synth::GroundTruth;
use crate::wall::Wall;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchTolerances {
    /// Largest distance between corresponding axis endpoints.
    pub wall_endpoint: f64,
    pub wall_thickness: f64,
    /// Width, height and sill of openings.
    pub opening_dim: f64,
    pub slab_z: f64,
    pub slab_thickness: f64,
    /// Relative area error of zones.
    pub zone_area: f64,
    pub zone_centroid: f64,
}

impl MatchTolerances {
    pub fn from_config(c: &Config) -> MatchTolerances {
        let cell = c.calibration.cell_size();
        let bin = 2.0 * c.input.pc_resolution;
        MatchTolerances {
            wall_endpoint: 2.0 * cell,
            wall_thickness: 0.02,
            opening_dim: 2.0 * bin,
            slab_z: c.calibration.z_step,
            slab_thickness: c.calibration.z_step,
            zone_area: 0.02,
            zone_centroid: 0.25,
        }
    }
}

impl Default for MatchTolerances {
    fn default() -> Self {
        Self::from_config(&Config::default())
    }
}

/// One accepted detected/truth pair with its errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub detected: usize,
    pub truth: usize,
    pub distance: f64,
    pub errors: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub detected: usize,
    pub truth: usize,
    pub pairs: Vec<MatchedPair>,
    pub unmatched_detected: Vec<usize>,
    pub unmatched_truth: Vec<usize>,
}

impl ClassScore {
    pub fn matched(&self) -> usize {
        self.pairs.len()
    }

    /// 1 when nothing was detected.
    pub fn precision(&self) -> f64 {
        if self.detected == 0 {
            1.0
        } else {
            self.matched() as f64 / self.detected as f64
        }
    }

    /// 1 when there is nothing to find.
    pub fn recall(&self) -> f64 {
        if self.truth == 0 {
            1.0
        } else {
            self.matched() as f64 / self.truth as f64
        }
    }

    /// Largest absolute value of a named error across pairs.
    pub fn max_error(&self, name: &str) -> f64 {
        self.pairs
            .iter()
            .filter_map(|p| p.errors.get(name))
            .fold(0.0, |a, &b| a.max(b.abs()))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreCard {
    pub storeys: (usize, usize),
    pub slabs: ClassScore,
    pub walls: ClassScore,
    pub openings: ClassScore,
    pub zones: ClassScore,
}

/// Candidate pair: center distance plus named errors, or `None` when the
/// pair is outside tolerance.
pub type PairTest<'a> = dyn Fn(usize, usize) -> Option<(f64, BTreeMap<String, f64>)> + 'a;

/// Greedy assignment: admissible pairs are taken in increasing distance,
/// ties broken by index.
pub fn greedy_match(n_detected: usize, n_truth: usize, test: &PairTest<'_>) -> ClassScore {
    let mut cand = Vec::new();
    for i in 0..n_detected {
        for j in 0..n_truth {
            if let Some((d, errors)) = test(i, j) {
                cand.push((d, i, j, errors));
            }
        }
    }
    cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_d = vec![false; n_detected];
    let mut used_t = vec![false; n_truth];
    let mut pairs = Vec::new();
    for (d, i, j, errors) in cand {
        if used_d[i] || used_t[j] {
            continue;
        }
        used_d[i] = true;
        used_t[j] = true;
        pairs.push(MatchedPair {
            detected: i,
            truth: j,
            distance: d,
            errors,
        });
    }
    pairs.sort_by_key(|p| p.truth);
    ClassScore {
        detected: n_detected,
        truth: n_truth,
        pairs,
        unmatched_detected: (0..n_detected).filter(|&i| !used_d[i]).collect(),
        unmatched_truth: (0..n_truth).filter(|&j| !used_t[j]).collect(),
    }
}

fn errs(items: &[(&str, f64)]) -> BTreeMap<String, f64> {
    items.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

/// Endpoint distance with the better of the two orientations.
fn endpoint_error(a: &Wall, b: &Wall) -> f64 {
    let same = a.axis_start.distance(b.axis_start).max(a.axis_end.distance(b.axis_end));
    let flip = a.axis_start.distance(b.axis_end).max(a.axis_end.distance(b.axis_start));
    same.min(flip)
}

fn level(e: &BuildingElements, s: usize) -> f64 {
    e.storeys.iter().find(|l| l.index == s).map_or(0.0, |l| l.elevation)
}

fn host(e: &BuildingElements, r: usize) -> Option<&Wall> {
    e.walls.iter().find(|w| w.id == r)
}

fn midpoint(w: &Wall) -> Vec2 {
    (w.axis_start + w.axis_end) * 0.5
}

pub fn compare_elements(det: &BuildingElements, truth: &BuildingElements, tol: &MatchTolerances) -> ScoreCard {
    let slabs = greedy_match(det.slabs.len(), truth.slabs.len(), &|i, j| {
        let (a, b) = (&det.slabs[i], &truth.slabs[j]);
        let dz = a.z_bottom - b.z_bottom;
        let dt = a.thickness - b.thickness;
        (dz.abs() <= tol.slab_z && dt.abs() <= tol.slab_thickness)
            .then(|| (dz.abs(), errs(&[("z_bottom", dz), ("thickness", dt)])))
    });
    let walls = greedy_match(det.walls.len(), truth.walls.len(), &|i, j| {
        let (a, b) = (&det.walls[i], &truth.walls[j]);
        if a.storey_index != b.storey_index {
            return None;
        }
        let e = endpoint_error(a, b);
        let dt = a.thickness - b.thickness;
        (e <= tol.wall_endpoint && dt.abs() <= tol.wall_thickness).then(|| {
            (
                midpoint(a).distance(midpoint(b)),
                errs(&[("endpoint", e), ("thickness", dt), ("length", a.length() - b.length())]),
            )
        })
    });
    let openings = greedy_match(det.openings.len(), truth.openings.len(), &|i, j| {
        let (a, b) = (&det.openings[i], &truth.openings[j]);
        let (wa, wb) = (host(det, a.wall_ref)?, host(truth, b.wall_ref)?);
        if a.kind != b.kind || wa.storey_index != wb.storey_index {
            return None;
        }
        let ca = a.center(wa, level(det, wa.storey_index));
        let cb = b.center(wb, level(truth, wb.storey_index));
        let d = ((ca[0] - cb[0]).powi(2) + (ca[1] - cb[1]).powi(2) + (ca[2] - cb[2]).powi(2)).sqrt();
        let (dw, dh, ds) = (a.width - b.width, a.height - b.height, a.sill - b.sill);
        let ok = [dw, dh, ds].iter().all(|e| e.abs() <= tol.opening_dim) && d <= 2.0 * tol.opening_dim;
        ok.then(|| (d, errs(&[("width", dw), ("height", dh), ("sill", ds), ("center", d)])))
    });
    let zones = greedy_match(det.zones.len(), truth.zones.len(), &|i, j| {
        let (a, b) = (&det.zones[i], &truth.zones[j]);
        if a.storey_index != b.storey_index || b.area <= 0.0 {
            return None;
        }
        let d = a.boundary.centroid().distance(b.boundary.centroid());
        let rel = (a.area - b.area) / b.area;
        (d <= tol.zone_centroid && rel.abs() <= tol.zone_area).then(|| (d, errs(&[("area_rel", rel), ("centroid", d)])))
    });
    ScoreCard {
        storeys: (det.storeys.len(), truth.storeys.len()),
        slabs,
        walls,
        openings,
        zones,
    }
}

pub fn compare_to_truth(det: &BuildingElements, truth: &GroundTruth, tol: &MatchTolerances) -> ScoreCard {
    compare_elements(det, &truth.elements(), tol)
}
