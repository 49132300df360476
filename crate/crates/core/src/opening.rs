//! Rectangular doors and windows from gaps in wall-local point histograms.

use serde::{Deserialize, Serialize};

use crate::cloud_io::Point3;
use crate::error::Result;
use crate::raster::Histogram1D;
use crate::wall::Wall;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpeningKind {
    Door,
    Window,
}

impl OpeningKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OpeningKind::Door => "door",
            OpeningKind::Window => "window",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Opening {
    /// `Wall::id` of the host wall.
    pub wall_ref: usize,
    /// Distance along the axis from `axis_start` to the near jamb.
    pub x_offset: f64,
    pub width: f64,
    /// Height of the bottom edge above the storey floor.
    pub sill: f64,
    pub height: f64,
    pub kind: OpeningKind,
}

impl Opening {
    /// World position of the void center.
    pub fn center(&self, wall: &Wall, z_floor: f64) -> [f64; 3] {
        let d = (wall.axis_end - wall.axis_start).normalized();
        let c = wall.axis_start + d * (self.x_offset + self.width / 2.0);
        [c.x, c.y, z_floor + self.sill + self.height / 2.0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpeningHeuristics {
    pub door_max_sill: f64,
    pub min_width: f64,
    pub max_width: f64,
    pub min_height: f64,
    pub aspect_min: f64,
    pub aspect_max: f64,
    pub tenth_max_rank: usize,
    pub gap_fraction: f64,
}

impl Default for OpeningHeuristics {
    fn default() -> Self {
        crate::config::CalibrationParams::default().heuristics()
    }
}

/// Wall-local `(u, v)`: distance along the axis from `axis_start` and height
/// above `z_floor`, for points within `thickness / 2 + cell_size` of the axis
/// and inside its extent.
pub fn localize_points(points: &[Point3], wall: &Wall, z_floor: f64, cell_size: f64) -> Vec<(f64, f64)> {
    let axis = wall.axis();
    let len = axis.length();
    if len <= 0.0 {
        return Vec::new();
    }
    let band = wall.thickness / 2.0 + cell_size;
    let d = axis.direction();
    points
        .iter()
        .filter_map(|p| {
            let r = crate::geom::Vec2::new(p[0] - axis.a.x, p[1] - axis.a.y);
            let u = d.dot(r);
            if u < 0.0 || u > len || d.cross(r).abs() > band {
                return None;
            }
            Some((u, p[2] - z_floor))
        })
        .collect()
}

/// Bin index ranges `[start, end)` whose count is below `fraction` of the
/// `rank`-th largest bin.
pub fn gap_bins(hist: &Histogram1D, rank: usize, fraction: f64) -> Vec<(usize, usize)> {
    let n = hist.len();
    if n == 0 {
        return Vec::new();
    }
    if hist.total() == 0 {
        return vec![(0, n)];
    }
    let mut sorted = hist.counts.clone();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    let reference = sorted[rank.max(1).min(n) - 1] as f64;
    let level = fraction * reference;
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        if (hist.counts[i] as f64) < level {
            let s = i;
            while i < n && (hist.counts[i] as f64) < level {
                i += 1;
            }
            out.push((s, i));
        } else {
            i += 1;
        }
    }
    out
}

/// Gaps of [`gap_bins`] in metres.
pub fn detect_gaps(hist: &Histogram1D, rank: usize, fraction: f64) -> Vec<(f64, f64)> {
    gap_bins(hist, rank, fraction)
        .into_iter()
        .map(|(s, e)| (hist.bin_start(s), hist.bin_start(e)))
        .collect()
}

/// Everything computed for one wall, kept for previews.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WallOpenings {
    pub wall_ref: usize,
    pub u_histogram: Histogram1D,
    pub candidates: Vec<(f64, f64)>,
    pub openings: Vec<Opening>,
}

fn bins_for(extent: f64, bin: f64) -> usize {
    ((extent / bin).ceil() as usize).max(1)
}

/// Gap edges pulled onto the outermost points of the bordering dense bins.
/// The first and last gap bins are often partly filled, so with at least
/// two gap bins they are searched too.
fn refined_edges(values: &[f64], hist: &Histogram1D, s: usize, e: usize) -> (f64, f64) {
    let mut lo = hist.bin_start(s);
    let mut hi = hist.bin_start(e);
    let inner = usize::from(e - s >= 2);
    if s > 0 {
        let (a, b) = (hist.bin_start(s - 1), hist.bin_start(s + inner));
        if let Some(m) = values.iter().copied().filter(|&x| x >= a && x < b).reduce(f64::max) {
            lo = m;
        }
    }
    if e < hist.len() {
        let (a, b) = (hist.bin_start(e - inner), hist.bin_start(e + 1));
        if let Some(m) = values.iter().copied().filter(|&x| x >= a && x < b).reduce(f64::min) {
            hi = m;
        }
    }
    (lo, hi.max(lo))
}

/// Jamb positions from the points beside the void rows `(v0, v1)`, searched
/// within two bins of the coarse edges.
fn jambs(local: &[(f64, f64)], u0: f64, u1: f64, v0: f64, v1: f64, bin: f64) -> (f64, f64) {
    let mid = 0.5 * (u0 + u1);
    let rows = local.iter().filter(|p| p.1 > v0 && p.1 < v1);
    let left = rows
        .clone()
        .map(|p| p.0)
        .filter(|&u| u >= u0 - 2.0 * bin && u < mid)
        .reduce(f64::max);
    let right = rows
        .map(|p| p.0)
        .filter(|&u| u > mid && u <= u1 + 2.0 * bin)
        .reduce(f64::min);
    (left.unwrap_or(u0), right.unwrap_or(u1))
}

/// u-histogram gaps, then for each the longest v-gap, filtered by the size,
/// aspect and position rules.
pub fn detect_openings(
    local: &[(f64, f64)],
    wall: &Wall,
    h: &OpeningHeuristics,
    bin: f64,
    max_wall_thickness: f64,
) -> Result<WallOpenings> {
    let len = wall.length();
    let height = wall.height;
    let mut uh = Histogram1D::with_range(0.0, bin, bins_for(len, bin))?;
    uh.add_clamped(local.iter().map(|p| p.0));

    // merge gaps separated by fewer than two bins
    let mut gaps: Vec<(usize, usize)> = Vec::new();
    for g in gap_bins(&uh, h.tenth_max_rank, h.gap_fraction) {
        match gaps.last_mut() {
            Some(last) if g.0 - last.1 < 2 => last.1 = g.1,
            _ => gaps.push(g),
        }
    }

    let edge_zone = max_wall_thickness / 2.0;
    let mut candidates = Vec::new();
    let mut openings = Vec::new();
    for (s, e) in gaps {
        let (u0, u1) = (uh.bin_start(s).max(0.0), uh.bin_start(e).min(len));
        if u0 < edge_zone || u1 > len - edge_zone {
            continue;
        }
        candidates.push((u0, u1));
        // partly filled jamb bins stay out of the vertical profile
        let (a, b) = if e - s > 2 { (u0 + bin, u1 - bin) } else { (u0, u1) };
        let vs: Vec<f64> = local
            .iter()
            .filter(|p| p.0 > a && p.0 < b)
            .map(|p| p.1)
            .collect();
        let mut vh = Histogram1D::with_range(0.0, bin, bins_for(height, bin))?;
        vh.add_clamped(vs.iter().copied());
        let best = gap_bins(&vh, h.tenth_max_rank, h.gap_fraction)
            .into_iter()
            .max_by_key(|&(a, b)| (b - a, usize::MAX - a));
        let Some((vs0, vs1)) = best else { continue };
        let (v0, v1) = refined_edges(&vs, &vh, vs0, vs1);
        let (sill, top) = (v0.max(0.0), v1.min(height));
        let (u0, u1) = jambs(local, u0, u1, sill + bin, top - bin, bin);
        let (width, oh) = (u1 - u0, top - sill);
        if width < h.min_width || width > h.max_width || oh < h.min_height {
            continue;
        }
        let aspect = oh / width;
        if aspect < h.aspect_min || aspect > h.aspect_max {
            continue;
        }
        openings.push(Opening {
            wall_ref: wall.id,
            x_offset: u0,
            width,
            sill,
            height: oh,
            kind: if sill <= h.door_max_sill {
                OpeningKind::Door
            } else {
                OpeningKind::Window
            },
        });
    }
    Ok(WallOpenings {
        wall_ref: wall.id,
        u_histogram: uh,
        candidates,
        openings,
    })
}
