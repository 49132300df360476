//! Wall faces from a high horizontal slice, paired into volumetric walls.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{line_angle_deg, line_intersection, Polyline2D, Segment2D, Vec2};
use crate::raster::{
    binarize, close_cells, explode, histogram_2d_padded, merge_collinear_with, simplify,
    trace_contours, BinaryMask, DensityGrid,
};
use crate::slab::Storey;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurfaceSide {
    Real,
    Virtual,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WallSurface {
    pub segment: Segment2D,
    pub side: SurfaceSide,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Wall {
    /// Position in the building-wide wall list.
    pub id: usize,
    pub axis_start: Vec2,
    pub axis_end: Vec2,
    pub thickness: f64,
    pub height: f64,
    pub storey_index: usize,
    pub surfaces: (WallSurface, WallSurface),
    pub exterior: bool,
}

impl Wall {
    /// Wall whose two real faces sit at half the thickness on either side of
    /// the axis.
    pub fn from_axis(id: usize, start: Vec2, end: Vec2, thickness: f64, height: f64, storey_index: usize) -> Wall {
        let n = (end - start).normalized().perp() * (thickness / 2.0);
        let face = |o: Vec2| WallSurface {
            segment: Segment2D::new(start + o, end + o),
            side: SurfaceSide::Real,
        };
        Wall {
            id,
            axis_start: start,
            axis_end: end,
            thickness,
            height,
            storey_index,
            surfaces: (face(n), face(-n)),
            exterior: false,
        }
    }

    pub fn axis(&self) -> Segment2D {
        Segment2D::new(self.axis_start, self.axis_end)
    }

    pub fn length(&self) -> f64 {
        self.axis_start.distance(self.axis_end)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WallParams {
    pub cell_size: f64,
    pub threshold: f64,
    pub kernel_cells: usize,
    pub epsilon: f64,
    pub angle_tolerance: f64,
    pub min_wall_length: f64,
    pub min_thickness: f64,
    pub max_thickness: f64,
    pub exterior_thickness: f64,
    pub min_overlap_fraction: f64,
    pub z_section: [f64; 2],
}

/// Intermediate products of surface detection, kept for previews.
#[derive(Debug, Clone)]
pub struct SurfaceDetection {
    pub grid: DensityGrid,
    pub mask: BinaryMask,
    pub contours: Vec<Polyline2D>,
    pub raw_segments: Vec<Segment2D>,
    pub surfaces: Vec<WallSurface>,
}

/// Plan coordinates of storey points whose height above the floor lies within
/// `[lo * height, hi * height]`.
pub fn extract_slice(storey: &Storey, z_bounds: [f64; 2]) -> Result<Vec<Vec2>> {
    let [lo, hi] = z_bounds;
    if !(0.0 <= lo && lo < hi && hi <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "z_section_boundaries must satisfy 0 <= lo < hi <= 1, got [{lo}, {hi}]"
        )));
    }
    let z0 = storey.z_floor_top + lo * storey.height;
    let z1 = storey.z_floor_top + hi * storey.height;
    let out: Vec<Vec2> = storey
        .points
        .points()
        .iter()
        .filter(|p| p[2] >= z0 && p[2] <= z1)
        .map(|p| Vec2::new(p[0], p[1]))
        .collect();
    if out.is_empty() {
        return Err(Error::EmptySlice);
    }
    Ok(out)
}

/// Raster, close, trace, simplify, explode, merge, refit and length-filter.
pub fn detect_surfaces(points: &[Vec2], p: &WallParams) -> Result<SurfaceDetection> {
    let half = p.kernel_cells / 2;
    let grid = histogram_2d_padded(points, p.cell_size, half + 2)?;
    let mask = close_cells(&binarize(&grid, p.threshold)?, half);
    let contours: Vec<Polyline2D> = trace_contours(&mask)
        .iter()
        .map(|c| simplify(&c.to_world(&mask), p.epsilon))
        .collect();
    let raw_segments: Vec<Segment2D> = contours.iter().flat_map(explode).collect();
    let merged = merge_collinear_with(
        &raw_segments,
        p.angle_tolerance,
        p.min_thickness / 2.0,
        p.max_thickness,
    );
    // refitted pieces of one face line up much better than raster fragments,
    // so a second merge catches what the first one missed
    let refit: Vec<Segment2D> = merged.iter().map(|s| refine_segment(s, points, p)).collect();
    let surfaces = merge_collinear_with(&refit, p.angle_tolerance, p.min_thickness / 2.0, p.max_thickness)
        .iter()
        .map(|s| refine_segment(s, points, p))
        .filter(|s| s.length() >= p.min_wall_length)
        .map(|segment| WallSurface {
            segment,
            side: SurfaceSide::Real,
        })
        .collect();
    Ok(SurfaceDetection {
        grid,
        mask,
        contours,
        raw_segments,
        surfaces,
    })
}

/// Total-least-squares refit of a face line to nearby slice points. Points
/// close to the segment ends are left out so that perpendicular faces do not
/// tilt the fit.
fn refine_segment(seg: &Segment2D, points: &[Vec2], p: &WallParams) -> Segment2D {
    let mut cur = *seg;
    for band in [2.0 * p.epsilon, 3.0 * p.cell_size] {
        let len = cur.length();
        let margin = (p.max_thickness / 2.0).min(len / 4.0);
        let sel: Vec<Vec2> = points
            .iter()
            .copied()
            .filter(|&q| {
                let t = cur.project(q);
                t > margin && t < len - margin && cur.signed_offset(q).abs() < band
            })
            .collect();
        let Some((c, d)) = fit_line(&sel) else { break };
        let d = if d.dot(cur.direction()) < 0.0 { -d } else { d };
        let onto = |x: Vec2| c + d * d.dot(x - c);
        cur = Segment2D::new(onto(cur.a), onto(cur.b));
    }
    cur
}

/// Centroid and principal direction, or `None` for too few points.
pub(crate) fn fit_line(pts: &[Vec2]) -> Option<(Vec2, Vec2)> {
    if pts.len() < 8 {
        return None;
    }
    let n = pts.len() as f64;
    let c = pts.iter().fold(Vec2::default(), |a, &q| a + q) * (1.0 / n);
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for &q in pts {
        let r = q - c;
        sxx += r.x * r.x;
        sxy += r.x * r.y;
        syy += r.y * r.y;
    }
    let theta = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    Some((c, Vec2::new(theta.cos(), theta.sin())))
}

fn canonical(s: &Segment2D) -> Segment2D {
    if (s.a.x, s.a.y) <= (s.b.x, s.b.y) {
        *s
    } else {
        s.reversed()
    }
}

fn seg_key(s: &Segment2D) -> [f64; 4] {
    [s.a.x, s.a.y, s.b.x, s.b.y]
}

fn cmp_keys(a: &[f64], b: &[f64]) -> Ordering {
    a.partial_cmp(b).unwrap_or(Ordering::Equal)
}

/// Perpendicular offset and projected overlap of `s` relative to `r`.
fn offset_and_overlap(r: &Segment2D, s: &Segment2D) -> (f64, f64) {
    let off = 0.5 * (r.signed_offset(s.a) + r.signed_offset(s.b));
    let (p, q) = (r.project(s.a), r.project(s.b));
    let lo = p.min(q).max(0.0);
    let hi = p.max(q).min(r.length());
    (off.abs(), (hi - lo).max(0.0))
}

/// Pairs parallel faces into walls; leftover faces become exterior walls with
/// a virtual face on their emptier side. `points` is the slice used for that
/// side test. Returned walls have `id` 0 and `height` 0; callers fill both.
pub fn pair_surfaces(
    surfaces: &[WallSurface],
    points: &[Vec2],
    p: &WallParams,
    storey_index: usize,
) -> Vec<Wall> {
    let mut segs: Vec<Segment2D> = surfaces.iter().map(|s| canonical(&s.segment)).collect();
    segs.sort_by(|a, b| cmp_keys(&seg_key(a), &seg_key(b)));

    let mut cands = Vec::new();
    for i in 0..segs.len() {
        for j in i + 1..segs.len() {
            let (a, b) = (&segs[i], &segs[j]);
            if line_angle_deg(a.direction(), b.direction()) >= p.angle_tolerance {
                continue;
            }
            let (r, s) = if a.length() >= b.length() { (a, b) } else { (b, a) };
            let (off, overlap) = offset_and_overlap(r, s);
            if off < p.min_thickness || off > p.max_thickness {
                continue;
            }
            if overlap < p.min_overlap_fraction * s.length() || overlap <= 0.0 {
                continue;
            }
            cands.push((overlap, i, j));
        }
    }
    cands.sort_by(|x, y| {
        y.0.partial_cmp(&x.0)
            .unwrap_or(Ordering::Equal)
            .then_with(|| (x.1, x.2).cmp(&(y.1, y.2)))
    });

    let mut used = vec![false; segs.len()];
    let mut walls = Vec::new();
    for (_, i, j) in cands {
        if used[i] || used[j] {
            continue;
        }
        used[i] = true;
        used[j] = true;
        walls.push(wall_from_pair(&segs[i], &segs[j], storey_index));
    }
    for (i, s) in segs.iter().enumerate() {
        if !used[i] {
            walls.push(exterior_wall(s, points, p, storey_index));
        }
    }
    walls
}

fn wall_from_pair(a: &Segment2D, b: &Segment2D, storey_index: usize) -> Wall {
    let (r, s) = if a.length() >= b.length() { (a, b) } else { (b, a) };
    let d = r.direction();
    let sd = if s.direction().dot(d) < 0.0 { -s.direction() } else { s.direction() };
    let dir = (d + sd).normalized();
    let normal = dir.perp();
    // offsets of both face lines along the common normal, measured at the overlap middle
    let (p0, p1) = (r.project(s.a), r.project(s.b));
    let mid_t = 0.5 * (p0.min(p1).max(0.0) + p0.max(p1).min(r.length()));
    let mr = r.a + d * mid_t;
    let ms = line_intersection(mr, normal, s.a, s.b - s.a).unwrap_or(s.midpoint());
    let thickness = (ms - mr).dot(normal).abs();
    let origin = (mr + ms) * 0.5;
    let ts = [r.a, r.b, s.a, s.b].map(|q| dir.dot(q - origin));
    let lo = ts.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ts.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Wall {
        id: 0,
        axis_start: origin + dir * lo,
        axis_end: origin + dir * hi,
        thickness,
        height: 0.0,
        storey_index,
        surfaces: (
            WallSurface {
                segment: *a,
                side: SurfaceSide::Real,
            },
            WallSurface {
                segment: *b,
                side: SurfaceSide::Real,
            },
        ),
        exterior: false,
    }
}

/// +1 when the left side of `s` (positive offset) is exterior, else -1.
fn exterior_sign(s: &Segment2D, points: &[Vec2], p: &WallParams) -> f64 {
    let near = (3.0 * p.cell_size).max(p.min_thickness / 2.0);
    let len = s.length();
    let count = |depth: f64| {
        let (mut left, mut right) = (0usize, 0usize);
        for &q in points {
            let t = s.project(q);
            if t < 0.0 || t > len {
                continue;
            }
            let o = s.signed_offset(q);
            if o.abs() <= near || o.abs() > depth {
                continue;
            }
            if o > 0.0 {
                left += 1;
            } else {
                right += 1;
            }
        }
        (left, right)
    };
    for depth in [1.0, f64::INFINITY] {
        let (l, r) = count(depth);
        if l != r {
            return if l < r { 1.0 } else { -1.0 };
        }
    }
    // no density difference: point away from the slice centroid
    if points.is_empty() {
        return 1.0;
    }
    let n = points.len() as f64;
    let c = points.iter().fold(Vec2::default(), |a, &q| a + q) * (1.0 / n);
    if s.signed_offset(c) > 0.0 {
        -1.0
    } else {
        1.0
    }
}

fn exterior_wall(s: &Segment2D, points: &[Vec2], p: &WallParams, storey_index: usize) -> Wall {
    let sign = exterior_sign(s, points, p);
    let n = s.direction().perp() * sign;
    let t = p.exterior_thickness;
    let virt = Segment2D::new(s.a + n * t, s.b + n * t);
    Wall {
        id: 0,
        axis_start: s.a + n * (t / 2.0),
        axis_end: s.b + n * (t / 2.0),
        thickness: t,
        height: 0.0,
        storey_index,
        surfaces: (
            WallSurface {
                segment: *s,
                side: SurfaceSide::Real,
            },
            WallSurface {
                segment: virt,
                side: SurfaceSide::Virtual,
            },
        ),
        exterior: true,
    }
}

/// Moves axis endpoints that lie within `max_wall_thickness / 2` of another
/// (extended) axis onto the intersection of the two lines. Lines never move,
/// so repeated snapping converges and corners coincide exactly.
pub fn snap_axes(walls: &[Wall], max_wall_thickness: f64) -> Vec<Wall> {
    let reach = max_wall_thickness / 2.0;
    let mut out = walls.to_vec();
    // supporting lines stay those of the input
    let lines: Vec<(Vec2, Vec2)> = walls
        .iter()
        .map(|w| (w.axis_start, (w.axis_end - w.axis_start).normalized()))
        .collect();
    for _ in 0..16 {
        let mut changed = false;
        for i in 0..out.len() {
            for end in 0..2 {
                let e = if end == 0 { out[i].axis_start } else { out[i].axis_end };
                let mut best: Option<(f64, Vec2)> = None;
                for j in 0..out.len() {
                    if j == i {
                        continue;
                    }
                    let (q, e_dir) = lines[j];
                    let other = Segment2D::new(out[j].axis_start, out[j].axis_end);
                    let len = other.length();
                    let t = e_dir.dot(e - q);
                    let t0 = e_dir.dot(other.a - q);
                    let t1 = t0 + len;
                    let off = e_dir.cross(e - q).abs();
                    if off > reach || t < t0 - reach || t > t1 + reach {
                        continue;
                    }
                    let (pi, di) = lines[i];
                    let Some(x) = line_intersection(pi, di, q, e_dir) else {
                        continue;
                    };
                    let moved = x.distance(e);
                    if moved > max_wall_thickness {
                        continue;
                    }
                    let better = match best {
                        None => true,
                        Some((m, bx)) => {
                            moved < m - 1e-12
                                || ((moved - m).abs() <= 1e-12 && (x.x, x.y) < (bx.x, bx.y))
                        }
                    };
                    if better {
                        best = Some((moved, x));
                    }
                }
                if let Some((moved, x)) = best {
                    if moved > 1e-9 {
                        if end == 0 {
                            out[i].axis_start = x;
                        } else {
                            out[i].axis_end = x;
                        }
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    out
}

/// Surfaces and walls of one storey.
#[derive(Debug, Clone)]
pub struct StoreyWalls {
    pub storey_index: usize,
    pub slice: Vec<Vec2>,
    pub detection: SurfaceDetection,
    pub walls: Vec<Wall>,
}

/// Full wall detection for one storey; walls are snapped and sized to the
/// storey height. Ids are left at 0.
pub fn detect_walls(storey: &Storey, p: &WallParams) -> Result<StoreyWalls> {
    let slice = extract_slice(storey, p.z_section)?;
    let detection = detect_surfaces(&slice, p)?;
    let paired = pair_surfaces(&detection.surfaces, &slice, p, storey.index);
    let mut walls = snap_axes(&paired, p.max_thickness);
    walls.retain(|w| w.length() >= p.min_wall_length);
    for w in &mut walls {
        w.height = storey.height;
    }
    walls.sort_by(|a, b| {
        cmp_keys(
            &seg_key(&canonical(&a.axis())),
            &seg_key(&canonical(&b.axis())),
        )
    });
    Ok(StoreyWalls {
        storey_index: storey.index,
        slice,
        detection,
        walls,
    })
}
