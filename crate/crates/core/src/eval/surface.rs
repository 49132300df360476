//! Planar faces of a model and point-to-surface distances.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud_io::Point3;
use crate::error::{Error, Result};
use crate::geom::{Polygon2D, Vec2};
use crate::ifc::geometry::{dot, normalize, read_geometry, sub, Extrusion, Frame, Profile, V3};
use crate::ifc::{BuildOptions, BuildingElements, IfcModel, ParsedStep};

const EPS: f64 = 1e-9;

/// Face outline in its own (s, t) coordinates.
#[derive(Debug, Clone, PartialEq)]
pub enum FaceShape {
    /// `[s0, s1] x [t0, t1]` minus rectangular holes `[s0, s1, t0, t1]`.
    Rect { s: [f64; 2], t: [f64; 2], holes: Vec<[f64; 4]> },
    Poly(Polygon2D),
}

/// Planar face; `e1`, `e2` and `normal` are orthonormal.
#[derive(Debug, Clone, PartialEq)]
pub struct Face {
    pub product: u32,
    pub origin: V3,
    pub e1: V3,
    pub e2: V3,
    pub normal: V3,
    pub shape: FaceShape,
    pub lo: V3,
    pub hi: V3,
    rim: Vec<(Vec2, Vec2)>,
}

fn rect_dist2(p: Vec2, s: [f64; 2], t: [f64; 2]) -> f64 {
    let dx = (s[0] - p.x).max(0.0).max(p.x - s[1]);
    let dy = (t[0] - p.y).max(0.0).max(p.y - t[1]);
    dx * dx + dy * dy
}

fn seg_dist2(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let d = b - a;
    let l2 = d.dot(d);
    let u = if l2 > 0.0 { ((p - a).dot(d) / l2).clamp(0.0, 1.0) } else { 0.0 };
    let q = a + d * u - p;
    q.dot(q)
}

/// `[a0, a1]` minus the given intervals.
fn subtract(a: [f64; 2], cuts: &mut [[f64; 2]]) -> Vec<[f64; 2]> {
    cuts.sort_by(|x, y| x[0].total_cmp(&y[0]));
    let mut out = Vec::new();
    let mut at = a[0];
    for c in cuts.iter() {
        if c[0] > at + EPS {
            out.push([at, c[0].min(a[1])]);
        }
        at = at.max(c[1]);
    }
    if a[1] > at + EPS {
        out.push([at, a[1]]);
    }
    out
}

/// Boundary of a rectangle with holes: border parts outside holes plus hole
/// sides inside the rectangle.
fn rim(s: [f64; 2], t: [f64; 2], holes: &[[f64; 4]]) -> Vec<(Vec2, Vec2)> {
    let mut out = Vec::new();
    let on = |h: &[f64; 4], side: usize| match side {
        0 => h[2] <= t[0] + EPS,
        1 => h[1] >= s[1] - EPS,
        2 => h[3] >= t[1] - EPS,
        _ => h[0] <= s[0] + EPS,
    };
    for side in 0..4 {
        let horizontal = side % 2 == 0;
        let mut cuts: Vec<[f64; 2]> = holes
            .iter()
            .filter(|h| on(h, side))
            .map(|h| if horizontal { [h[0], h[1]] } else { [h[2], h[3]] })
            .collect();
        let c = [t[0], s[1], t[1], s[0]][side];
        for [a, b] in subtract(if horizontal { s } else { t }, &mut cuts) {
            out.push(if horizontal {
                (Vec2::new(a, c), Vec2::new(b, c))
            } else {
                (Vec2::new(c, a), Vec2::new(c, b))
            });
        }
    }
    for h in holes {
        let c = [
            Vec2::new(h[0], h[2]),
            Vec2::new(h[1], h[2]),
            Vec2::new(h[1], h[3]),
            Vec2::new(h[0], h[3]),
        ];
        for k in 0..4 {
            if !on(h, k) {
                out.push((c[k], c[(k + 1) % 4]));
            }
        }
    }
    out
}

impl FaceShape {
    /// Squared in-plane distance from `p` to the face region.
    fn dist2(&self, p: Vec2, rim: &[(Vec2, Vec2)]) -> f64 {
        match self {
            FaceShape::Poly(poly) => {
                if poly.contains(p) {
                    0.0
                } else {
                    poly.edges().map(|(a, b)| seg_dist2(p, a, b)).fold(f64::INFINITY, f64::min)
                }
            }
            FaceShape::Rect { s, t, holes } => {
                if holes.is_empty() {
                    return rect_dist2(p, *s, *t);
                }
                let inside = rect_dist2(p, *s, *t) == 0.0
                    && !holes.iter().any(|h| p.x > h[0] && p.x < h[1] && p.y > h[2] && p.y < h[3]);
                if inside {
                    0.0
                } else {
                    rim.iter()
                        .map(|&(a, b)| seg_dist2(p, a, b))
                        .fold(f64::INFINITY, f64::min)
                }
            }
        }
    }

    fn corners(&self) -> Vec<Vec2> {
        match self {
            FaceShape::Poly(p) => p.vertices.clone(),
            FaceShape::Rect { s, t, .. } => vec![
                Vec2::new(s[0], t[0]),
                Vec2::new(s[1], t[0]),
                Vec2::new(s[1], t[1]),
                Vec2::new(s[0], t[1]),
            ],
        }
    }
}

impl Face {
    fn new(product: u32, origin: V3, e1: V3, e2: V3, shape: FaceShape) -> Face {
        let normal = crate::ifc::geometry::cross(e1, e2);
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for c in shape.corners() {
            for k in 0..3 {
                let w = origin[k] + e1[k] * c.x + e2[k] * c.y;
                lo[k] = lo[k].min(w);
                hi[k] = hi[k].max(w);
            }
        }
        let rim = match &shape {
            FaceShape::Rect { s, t, holes } if !holes.is_empty() => rim(*s, *t, holes),
            _ => Vec::new(),
        };
        Face {
            product,
            origin,
            e1,
            e2,
            normal,
            shape,
            lo,
            hi,
            rim,
        }
    }

    pub fn distance(&self, p: Point3) -> f64 {
        self.distance2(p).sqrt()
    }

    fn distance2(&self, p: Point3) -> f64 {
        let r = sub(p, self.origin);
        let h = dot(r, self.normal);
        h * h + self.shape.dist2(Vec2::new(dot(r, self.e1), dot(r, self.e2)), &self.rim)
    }

    /// Lower bound from the bounding box.
    fn bound2(&self, p: Point3) -> f64 {
        let mut d = 0.0;
        for k in 0..3 {
            let e = (self.lo[k] - p[k]).max(0.0).max(p[k] - self.hi[k]);
            d += e * e;
        }
        d
    }
}

/// Axis-aligned box in some frame: `lo..hi` per axis.
#[derive(Debug, Clone, Copy)]
struct LocalBox {
    lo: V3,
    hi: V3,
}

fn axis(f: &Frame, k: usize) -> V3 {
    [f.x, f.y, f.z][k]
}

fn unit(k: usize) -> V3 {
    let mut u = [0.0; 3];
    u[k] = 1.0;
    u
}

/// Frame with its origin at the lower corner of a rectangular extrusion,
/// plus the box size.
fn box_frame(e: &Extrusion) -> Option<(Frame, V3)> {
    let Profile::Rect { center, x_dir, xdim, ydim } = e.profile else { return None };
    if (e.direction[2] - 1.0).abs() > 1e-9 {
        return None;
    }
    let y_dir = x_dir.perp();
    let corner = center - x_dir * (xdim / 2.0) - y_dir * (ydim / 2.0);
    let f = Frame {
        origin: e.frame.apply([corner.x, corner.y, 0.0]),
        x: e.frame.apply_dir([x_dir.x, x_dir.y, 0.0]),
        y: e.frame.apply_dir([y_dir.x, y_dir.y, 0.0]),
        z: e.frame.z,
    };
    Some((f, [xdim, ydim, e.depth]))
}

/// The void box in host coordinates when its axes line up with the host's.
fn void_in(host: &Frame, e: &Extrusion) -> Option<LocalBox> {
    let (f, size) = box_frame(e)?;
    for k in 0..3 {
        let a = axis(&f, k);
        let aligned = (0..3).any(|j| (dot(a, axis(host, j)).abs() - 1.0).abs() < 1e-9);
        if !aligned {
            return None;
        }
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for c in 0..8 {
        let p = [
            if c & 1 == 0 { 0.0 } else { size[0] },
            if c & 2 == 0 { 0.0 } else { size[1] },
            if c & 4 == 0 { 0.0 } else { size[2] },
        ];
        let q = host.local(f.apply(p));
        for k in 0..3 {
            lo[k] = lo[k].min(q[k]);
            hi[k] = hi[k].max(q[k]);
        }
    }
    Some(LocalBox { lo, hi })
}

/// Faces of a box minus aligned box voids, including the void reveals.
fn box_faces(product: u32, f: &Frame, size: V3, voids: &[LocalBox], out: &mut Vec<Face>) {
    let host = LocalBox { lo: [0.0; 3], hi: size };
    let mut emit = |a: usize, c: f64, s: [f64; 2], t: [f64; 2], holes: Vec<[f64; 4]>| {
        let (b, d) = ((a + 1) % 3, (a + 2) % 3);
        let mut o = [0.0; 3];
        o[a] = c;
        out.push(Face::new(
            product,
            f.apply(o),
            f.apply_dir(unit(b)),
            f.apply_dir(unit(d)),
            FaceShape::Rect { s, t, holes },
        ));
    };
    for a in 0..3 {
        let (b, d) = ((a + 1) % 3, (a + 2) % 3);
        for c in [0.0, size[a]] {
            let s = [0.0, size[b]];
            let t = [0.0, size[d]];
            let mut holes = Vec::new();
            let mut covered = false;
            for v in voids {
                if v.lo[a] > c + EPS || v.hi[a] < c - EPS {
                    continue;
                }
                let h = [v.lo[b].max(s[0]), v.hi[b].min(s[1]), v.lo[d].max(t[0]), v.hi[d].min(t[1])];
                if h[1] - h[0] > EPS && h[3] - h[2] > EPS {
                    covered |= h[0] <= s[0] + EPS && h[1] >= s[1] - EPS && h[2] <= t[0] + EPS && h[3] >= t[1] - EPS;
                    holes.push(h);
                }
            }
            if !covered {
                emit(a, c, s, t, holes);
            }
        }
    }
    for v in voids {
        for a in 0..3 {
            let (b, d) = ((a + 1) % 3, (a + 2) % 3);
            for c in [v.lo[a], v.hi[a]] {
                if c <= host.lo[a] + EPS || c >= host.hi[a] - EPS {
                    continue;
                }
                let s = [v.lo[b].max(0.0), v.hi[b].min(size[b])];
                let t = [v.lo[d].max(0.0), v.hi[d].min(size[d])];
                if s[1] - s[0] > EPS && t[1] - t[0] > EPS {
                    emit(a, c, s, t, Vec::new());
                }
            }
        }
    }
}

fn prism_faces(product: u32, f: &Frame, poly: &Polygon2D, depth: f64, out: &mut Vec<Face>) {
    for z in [0.0, depth] {
        out.push(Face::new(product, f.apply([0.0, 0.0, z]), f.x, f.y, FaceShape::Poly(poly.clone())));
    }
    for (p, q) in poly.edges() {
        let len = p.distance(q);
        if len <= EPS {
            continue;
        }
        let d = (q - p) * (1.0 / len);
        out.push(Face::new(
            product,
            f.apply([p.x, p.y, 0.0]),
            normalize(f.apply_dir([d.x, d.y, 0.0])),
            f.z,
            FaceShape::Rect {
                s: [0.0, len],
                t: [0.0, depth],
                holes: Vec::new(),
            },
        ));
    }
}

/// Physical surfaces of a model: walls and slabs with openings cut out.
#[derive(Debug, Clone, Default)]
pub struct ModelSurfaces {
    pub faces: Vec<Face>,
    /// Voids that could not be subtracted exactly and were ignored.
    pub skipped_voids: usize,
}

impl ModelSurfaces {
    pub fn from_parsed(p: &ParsedStep) -> Result<ModelSurfaces> {
        let g = read_geometry(p)?;
        let mut out = ModelSurfaces::default();
        for e in g.extrusions.iter().filter(|e| e.product_type == "IFCWALL" || e.product_type == "IFCSLAB") {
            let void_ext: Vec<&Extrusion> = g
                .voids
                .iter()
                .filter(|(h, _)| *h == e.product)
                .flat_map(|(_, o)| g.extrusions.iter().filter(move |x| x.product == *o))
                .collect();
            if let Some((f, size)) = box_frame(e) {
                let mut voids = Vec::new();
                for v in void_ext {
                    match void_in(&f, v) {
                        Some(b) => voids.push(b),
                        None => out.skipped_voids += 1,
                    }
                }
                box_faces(e.product, &f, size, &voids, &mut out.faces);
                continue;
            }
            if (e.direction[2] - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidInput(format!("#{}: oblique extrusion", e.product)));
            }
            out.skipped_voids += void_ext.len();
            let poly = match &e.profile {
                Profile::Poly(v) => Polygon2D::new(v.clone()),
                Profile::Rect { .. } => unreachable!("rectangles are boxes"),
            };
            prism_faces(e.product, &e.frame, &poly, e.depth, &mut out.faces);
        }
        Ok(out)
    }

    pub fn from_model(m: &IfcModel) -> Result<ModelSurfaces> {
        Self::from_parsed(&ParsedStep::from_model(m))
    }

    pub fn from_elements(e: &BuildingElements) -> Result<ModelSurfaces> {
        Self::from_model(&e.build(&Default::default(), &BuildOptions::default())?)
    }

    /// Distance to the nearest face.
    pub fn distance(&self, p: Point3) -> f64 {
        self.nearest(p, 0).1.sqrt()
    }

    /// (face index, squared distance), trying `hint` first.
    fn nearest(&self, p: Point3, hint: usize) -> (usize, f64) {
        let mut best = (hint, self.faces[hint].distance2(p));
        for (k, f) in self.faces.iter().enumerate() {
            if k == hint || f.bound2(p) >= best.1 {
                continue;
            }
            let d = f.distance2(p);
            if d < best.1 {
                best = (k, d);
            }
        }
        best
    }
}

/// Distribution of absolute point-to-model distances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationStats {
    #[serde(skip)]
    pub distances: Vec<f64>,
    pub count: usize,
    pub mean: f64,
    pub p50: f64,
    pub p95: f64,
    pub p99: f64,
    pub max: f64,
}

/// Nearest-rank percentile of sorted values, `q` in [0, 1].
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

impl DeviationStats {
    pub fn from_distances(distances: Vec<f64>) -> DeviationStats {
        let mut s = distances.clone();
        s.sort_by(f64::total_cmp);
        let n = s.len();
        DeviationStats {
            count: n,
            mean: if n == 0 { 0.0 } else { s.iter().sum::<f64>() / n as f64 },
            p50: percentile(&s, 0.50),
            p95: percentile(&s, 0.95),
            p99: percentile(&s, 0.99),
            max: s.last().copied().unwrap_or(0.0),
            distances,
        }
    }

    pub fn count_over(&self, threshold: f64) -> usize {
        self.distances.iter().filter(|&&d| d > threshold).count()
    }
}

/// Per-point distance to the nearest model surface.
pub fn deviation(points: &[Point3], model: &ModelSurfaces) -> Result<DeviationStats> {
    if model.faces.is_empty() {
        return Err(Error::EmptyModel);
    }
    let distances: Vec<f64> = points
        .par_chunks(4096)
        .flat_map_iter(|chunk| {
            let mut hint = 0;
            chunk
                .iter()
                .map(|&p| {
                    let (k, d2) = model.nearest(p, hint);
                    hint = k;
                    d2.sqrt()
                })
                .collect::<Vec<_>>()
        })
        .collect();
    Ok(DeviationStats::from_distances(distances))
}
