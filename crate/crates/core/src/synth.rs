//! Synthetic buildings with exact ground truth.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::cloud_io::{Point3, PointCloud};
use crate::error::{Error, Result};
use crate::geom::{line_intersection, Polygon2D, Vec2};
use crate::ifc::{BuildingElements, StoreyLevel};
use crate::opening::{Opening, OpeningKind};
use crate::slab::{Slab, SlabSource};
use crate::wall::Wall;
use crate::zone::Zone;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WallSpec {
    pub id: String,
    pub start: Vec2,
    pub end: Vec2,
    pub thickness: f64,
    #[serde(default)]
    pub exterior: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoomSpec {
    /// Axis-level outline; every edge must lie on a wall axis.
    pub outline: Vec<Vec2>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpeningSpec {
    pub wall: String,
    pub x_offset: f64,
    pub width: f64,
    pub sill: f64,
    pub height: f64,
    pub kind: OpeningKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoreySpec {
    pub height: f64,
    /// Thickness of the slab above this storey.
    pub slab_thickness: f64,
    pub walls: Vec<WallSpec>,
    pub rooms: Vec<RoomSpec>,
    #[serde(default)]
    pub openings: Vec<OpeningSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuildingSpec {
    pub point_spacing: f64,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
    pub base_slab_thickness: f64,
    pub storeys: Vec<StoreySpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSlab {
    pub z_bottom: f64,
    pub thickness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthWall {
    pub id: String,
    pub storey_index: usize,
    pub start: Vec2,
    pub end: Vec2,
    pub thickness: f64,
    pub height: f64,
    pub exterior: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthOpening {
    pub storey_index: usize,
    pub wall: String,
    pub x_offset: f64,
    pub width: f64,
    pub sill: f64,
    pub height: f64,
    pub kind: OpeningKind,
    /// World position of the void center.
    pub center: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthZone {
    pub storey_index: usize,
    pub boundary: Polygon2D,
    pub area: f64,
    pub height: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub slabs: Vec<TruthSlab>,
    /// Floor elevation of each storey.
    pub storey_floors: Vec<f64>,
    pub walls: Vec<TruthWall>,
    pub openings: Vec<TruthOpening>,
    pub zones: Vec<TruthZone>,
}

impl BuildingSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: BuildingSpec = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if !(self.point_spacing > 0.0) {
            return bad("point_spacing must be positive".into());
        }
        if !(self.noise_sigma >= 0.0) {
            return bad("noise_sigma must be non-negative".into());
        }
        if !(self.base_slab_thickness > 0.0) {
            return bad("base_slab_thickness must be positive".into());
        }
        if self.storeys.is_empty() {
            return bad("at least one storey is required".into());
        }
        for (si, st) in self.storeys.iter().enumerate() {
            if !(st.height > 0.0 && st.slab_thickness > 0.0) {
                return bad(format!("storey {si}: height and slab_thickness must be positive"));
            }
            for w in &st.walls {
                if !(w.thickness > 0.0) || w.start.distance(w.end) <= 0.0 {
                    return bad(format!("storey {si}: wall {} is degenerate", w.id));
                }
            }
            for (ri, r) in st.rooms.iter().enumerate() {
                room_inset(r, &st.walls)
                    .map_err(|m| Error::InvalidInput(format!("storey {si} room {ri}: {m}")))?;
            }
            for o in &st.openings {
                let Some(w) = st.walls.iter().find(|w| w.id == o.wall) else {
                    return bad(format!("storey {si}: opening on unknown wall {}", o.wall));
                };
                let len = w.start.distance(w.end);
                let fits = o.width > 0.0
                    && o.height > 0.0
                    && o.x_offset >= 0.0
                    && o.sill >= 0.0
                    && o.x_offset + o.width <= len
                    && o.sill + o.height <= st.height;
                if !fits {
                    return bad(format!("storey {si}: opening on wall {} does not fit", o.wall));
                }
            }
        }
        Ok(())
    }
}

fn wall_for_edge<'a>(p: Vec2, q: Vec2, walls: &'a [WallSpec]) -> Option<&'a WallSpec> {
    walls.iter().find(|w| {
        let d = (w.end - w.start).normalized();
        let len = w.start.distance(w.end);
        [p, q].iter().all(|&x| {
            let t = d.dot(x - w.start);
            d.cross(x - w.start).abs() < 1e-6 && t > -1e-6 && t < len + 1e-6
        })
    })
}

/// Inner-face outline of a room: every edge moved inward by half its wall's
/// thickness, corners at the offset-line intersections.
fn room_inset(room: &RoomSpec, walls: &[WallSpec]) -> std::result::Result<Polygon2D, String> {
    let poly = Polygon2D::new(room.outline.clone()).to_ccw();
    let n = poly.len();
    if n < 3 || poly.area() <= 0.0 {
        return Err("outline is degenerate".into());
    }
    let mut lines = Vec::with_capacity(n);
    for i in 0..n {
        let (p, q) = (poly.vertices[i], poly.vertices[(i + 1) % n]);
        let w = wall_for_edge(p, q, walls).ok_or_else(|| format!("edge {i} lies on no wall"))?;
        let d = (q - p).normalized();
        lines.push((p + d.perp() * (w.thickness / 2.0), d));
    }
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let (a, da) = lines[(i + n - 1) % n];
        let (b, db) = lines[i];
        let x = line_intersection(a, da, b, db).ok_or_else(|| format!("edges at vertex {i} are parallel"))?;
        out.push(x);
    }
    let inset = Polygon2D::new(out);
    if inset.signed_area() <= 0.0 {
        return Err("walls are thicker than the room".into());
    }
    Ok(inset)
}

struct Sampler {
    rng: ChaCha8Rng,
    noise: Option<Normal<f64>>,
    spacing: f64,
    out: Vec<Point3>,
}

impl Sampler {
    fn push(&mut self, p: Point3) {
        let mut p = p;
        if let Some(n) = &self.noise {
            for c in p.iter_mut() {
                *c += n.sample(&mut self.rng);
            }
        }
        self.out.push(p);
    }

    /// Jittered grid over a horizontal polygon at height `z`.
    fn horizontal(&mut self, poly: &Polygon2D, z: f64) {
        let s = self.spacing;
        let (mut lo, mut hi) = (poly.vertices[0], poly.vertices[0]);
        for v in &poly.vertices {
            lo = Vec2::new(lo.x.min(v.x), lo.y.min(v.y));
            hi = Vec2::new(hi.x.max(v.x), hi.y.max(v.y));
        }
        let nx = ((hi.x - lo.x) / s).ceil() as usize;
        let ny = ((hi.y - lo.y) / s).ceil() as usize;
        for j in 0..ny {
            for i in 0..nx {
                let x = lo.x + (i as f64 + self.rng.random::<f64>()) * s;
                let y = lo.y + (j as f64 + self.rng.random::<f64>()) * s;
                if poly.contains(Vec2::new(x, y)) {
                    self.push([x, y, z]);
                }
            }
        }
    }

    /// Jittered grid over a vertical rectangle from `a` to `b`, heights
    /// `z0..z1`; `void` receives (u from `a`, height above `z0`).
    fn vertical(&mut self, a: Vec2, b: Vec2, z0: f64, z1: f64, void: &dyn Fn(Vec2, f64) -> bool) {
        let s = self.spacing;
        let len = a.distance(b);
        let d = (b - a).normalized();
        let nu = (len / s).ceil() as usize;
        let nv = ((z1 - z0) / s).ceil() as usize;
        for j in 0..nv {
            for i in 0..nu {
                let u = (i as f64 + self.rng.random::<f64>()) * s;
                let v = (j as f64 + self.rng.random::<f64>()) * s;
                if u > len || v > z1 - z0 {
                    continue;
                }
                let xy = a + d * u;
                if void(xy, v) {
                    continue;
                }
                self.push([xy.x, xy.y, z0 + v]);
            }
        }
    }
}

/// Samples floors, ceilings and inner wall faces; openings stay empty. Outer
/// faces of exterior walls are not sampled.
pub fn generate(spec: &BuildingSpec) -> Result<(PointCloud, GroundTruth)> {
    spec.validate()?;
    let noise = if spec.noise_sigma > 0.0 {
        Some(Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::InvalidInput(e.to_string()))?)
    } else {
        None
    };
    let mut smp = Sampler {
        rng: ChaCha8Rng::seed_from_u64(spec.seed),
        noise,
        spacing: spec.point_spacing,
        out: Vec::new(),
    };
    let mut truth = GroundTruth::default();
    truth.slabs.push(TruthSlab {
        z_bottom: -spec.base_slab_thickness,
        thickness: spec.base_slab_thickness,
    });
    let mut z = 0.0;
    for (si, st) in spec.storeys.iter().enumerate() {
        let (z0, z1) = (z, z + st.height);
        truth.storey_floors.push(z0);
        for w in &st.walls {
            truth.walls.push(TruthWall {
                id: w.id.clone(),
                storey_index: si,
                start: w.start,
                end: w.end,
                thickness: w.thickness,
                height: st.height,
                exterior: w.exterior,
            });
        }
        for o in &st.openings {
            let w = st.walls.iter().find(|w| w.id == o.wall).expect("validated");
            let d = (w.end - w.start).normalized();
            let c = w.start + d * (o.x_offset + o.width / 2.0);
            truth.openings.push(TruthOpening {
                storey_index: si,
                wall: o.wall.clone(),
                x_offset: o.x_offset,
                width: o.width,
                sill: o.sill,
                height: o.height,
                kind: o.kind,
                center: [c.x, c.y, z0 + o.sill + o.height / 2.0],
            });
        }
        for room in &st.rooms {
            let inset = room_inset(room, &st.walls).map_err(Error::InvalidInput)?;
            smp.horizontal(&inset, z0);
            smp.horizontal(&inset, z1);
            let n = inset.len();
            let axis = Polygon2D::new(room.outline.clone()).to_ccw();
            for i in 0..n {
                let (a, b) = (inset.vertices[i], inset.vertices[(i + 1) % n]);
                let w = wall_for_edge(axis.vertices[i], axis.vertices[(i + 1) % n], &st.walls)
                    .expect("validated");
                let wd = (w.end - w.start).normalized();
                let voids: Vec<&OpeningSpec> = st.openings.iter().filter(|o| o.wall == w.id).collect();
                let is_void = |xy: Vec2, v: f64| {
                    let u = wd.dot(xy - w.start);
                    voids.iter().any(|o| {
                        u >= o.x_offset && u <= o.x_offset + o.width && v >= o.sill && v <= o.sill + o.height
                    })
                };
                smp.vertical(a, b, z0, z1, &is_void);
            }
            truth.zones.push(TruthZone {
                storey_index: si,
                area: inset.area(),
                boundary: inset,
                height: st.height,
            });
        }
        truth.slabs.push(TruthSlab {
            z_bottom: z1,
            thickness: st.slab_thickness,
        });
        z = z1 + st.slab_thickness;
    }
    Ok((PointCloud::new(smp.out)?, truth))
}

fn v(x: f64, y: f64) -> Vec2 {
    Vec2::new(x, y)
}

fn wall(id: &str, a: Vec2, b: Vec2, exterior: bool) -> WallSpec {
    WallSpec {
        id: id.into(),
        start: a,
        end: b,
        thickness: 0.3,
        exterior,
    }
}

fn two_storeys(walls: Vec<WallSpec>, rooms: Vec<RoomSpec>, openings: Vec<OpeningSpec>) -> BuildingSpec {
    let storey = StoreySpec {
        height: 2.7,
        slab_thickness: 0.3,
        walls,
        rooms,
        openings,
    };
    BuildingSpec {
        point_spacing: 0.02,
        noise_sigma: 0.0,
        seed: 1,
        base_slab_thickness: 0.3,
        storeys: vec![storey.clone(), storey],
    }
}

fn door_and_window(window_wall: &str) -> Vec<OpeningSpec> {
    vec![
        OpeningSpec {
            wall: "interior".into(),
            x_offset: 2.0,
            width: 0.9,
            sill: 0.0,
            height: 2.0,
            kind: OpeningKind::Door,
        },
        OpeningSpec {
            wall: window_wall.into(),
            x_offset: 1.5,
            width: 1.2,
            sill: 0.9,
            height: 1.2,
            kind: OpeningKind::Window,
        },
    ]
}

/// Two storeys of two 5 x 6 m rooms (axis level), 0.3 m walls, one door and
/// one window per storey.
pub fn orthogonal_two_storey() -> BuildingSpec {
    let walls = vec![
        wall("south", v(0.0, 0.0), v(10.0, 0.0), true),
        wall("east", v(10.0, 0.0), v(10.0, 6.0), true),
        wall("north", v(10.0, 6.0), v(0.0, 6.0), true),
        wall("west", v(0.0, 6.0), v(0.0, 0.0), true),
        wall("interior", v(5.0, 0.0), v(5.0, 6.0), false),
    ];
    let rooms = vec![
        RoomSpec {
            outline: vec![v(0.0, 0.0), v(5.0, 0.0), v(5.0, 6.0), v(0.0, 6.0)],
        },
        RoomSpec {
            outline: vec![v(5.0, 0.0), v(10.0, 0.0), v(10.0, 6.0), v(5.0, 6.0)],
        },
    ];
    two_storeys(walls, rooms, door_and_window("south"))
}

/// Like [`orthogonal_two_storey`] with the east room replaced by a wing whose
/// long walls run at -30 degrees.
pub fn wing_two_storey() -> BuildingSpec {
    let (c, s) = (5.0 * 30f64.to_radians().cos(), 5.0 * 30f64.to_radians().sin());
    let (p1, p2) = (v(5.0 + c, -s), v(5.0 + c, 6.0 - s));
    let walls = vec![
        wall("south_a", v(0.0, 0.0), v(5.0, 0.0), true),
        wall("south_b", v(5.0, 0.0), p1, true),
        wall("east", p1, p2, true),
        wall("north_b", p2, v(5.0, 6.0), true),
        wall("north_a", v(5.0, 6.0), v(0.0, 6.0), true),
        wall("west", v(0.0, 6.0), v(0.0, 0.0), true),
        wall("interior", v(5.0, 0.0), v(5.0, 6.0), false),
    ];
    let rooms = vec![
        RoomSpec {
            outline: vec![v(0.0, 0.0), v(5.0, 0.0), v(5.0, 6.0), v(0.0, 6.0)],
        },
        RoomSpec {
            outline: vec![v(5.0, 0.0), p1, p2, v(5.0, 6.0)],
        },
    ];
    two_storeys(walls, rooms, door_and_window("south_a"))
}

/// A `nx` by `ny` grid of `room` sized cells on every storey, for load tests.
pub fn grid_building(nx: usize, ny: usize, room: f64, storeys: usize, spacing: f64) -> BuildingSpec {
    let (wx, wy) = (nx as f64 * room, ny as f64 * room);
    let mut walls = Vec::new();
    for j in 0..=ny {
        let y = j as f64 * room;
        let ext = j == 0 || j == ny;
        walls.push(wall(&format!("h{j}"), v(0.0, y), v(wx, y), ext));
    }
    for i in 0..=nx {
        let x = i as f64 * room;
        let ext = i == 0 || i == nx;
        walls.push(wall(&format!("v{i}"), v(x, 0.0), v(x, wy), ext));
    }
    let mut rooms = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            let (x, y) = (i as f64 * room, j as f64 * room);
            rooms.push(RoomSpec {
                outline: vec![v(x, y), v(x + room, y), v(x + room, y + room), v(x, y + room)],
            });
        }
    }
    let storey = StoreySpec {
        height: 2.7,
        slab_thickness: 0.3,
        walls,
        rooms,
        openings: Vec::new(),
    };
    BuildingSpec {
        point_spacing: spacing,
        noise_sigma: 0.0,
        seed: 7,
        base_slab_thickness: 0.3,
        storeys: vec![storey; storeys],
    }
}

impl GroundTruth {
    /// Records a perfect detector would return. Slab footprints are the
    /// outer bounding box of the walls.
    pub fn elements(&self) -> BuildingElements {
        let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for w in &self.walls {
            let h = w.thickness / 2.0;
            for p in [w.start, w.end] {
                lo = Vec2::new(lo.x.min(p.x - h), lo.y.min(p.y - h));
                hi = Vec2::new(hi.x.max(p.x + h), hi.y.max(p.y + h));
            }
        }
        if !lo.is_finite() {
            lo = Vec2::new(0.0, 0.0);
            hi = Vec2::new(1.0, 1.0);
        }
        let footprint = Polygon2D::rect(lo, hi);
        let slabs = self
            .slabs
            .iter()
            .map(|s| Slab {
                footprint: footprint.clone(),
                z_bottom: s.z_bottom,
                thickness: s.thickness,
                source: SlabSource::Paired,
            })
            .collect();
        let storeys = self
            .storey_floors
            .iter()
            .enumerate()
            .map(|(i, &z)| StoreyLevel {
                index: i,
                elevation: z,
                height: self.slabs.get(i + 1).map_or(0.0, |s| s.z_bottom - z),
            })
            .collect();
        let walls: Vec<Wall> = self
            .walls
            .iter()
            .enumerate()
            .map(|(k, t)| {
                let mut w = Wall::from_axis(k, t.start, t.end, t.thickness, t.height, t.storey_index);
                w.exterior = t.exterior;
                w
            })
            .collect();
        let openings = self
            .openings
            .iter()
            .map(|o| Opening {
                wall_ref: self
                    .walls
                    .iter()
                    .position(|w| w.id == o.wall && w.storey_index == o.storey_index)
                    .expect("opening host exists"),
                x_offset: o.x_offset,
                width: o.width,
                sill: o.sill,
                height: o.height,
                kind: o.kind,
            })
            .collect();
        let mut zones = Vec::new();
        for (s, _) in self.storey_floors.iter().enumerate() {
            let mut zs: Vec<&TruthZone> = self.zones.iter().filter(|z| z.storey_index == s).collect();
            zs.sort_by(|a, b| b.area.total_cmp(&a.area));
            for (n, z) in zs.into_iter().enumerate() {
                zones.push(Zone {
                    boundary: z.boundary.clone(),
                    storey_index: s,
                    area: z.area,
                    height: z.height,
                    name: format!("Zone {}.{}", s, n + 1),
                });
            }
        }
        BuildingElements {
            slabs,
            storeys,
            walls,
            openings,
            zones,
        }
    }
}
