//! Extruded solids read back from a parsed file.

use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::ifc::model::Value;
use crate::ifc::step::ParsedStep;

pub type V3 = [f64; 3];

pub fn add(a: V3, b: V3) -> V3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn sub(a: V3, b: V3) -> V3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn scale(a: V3, s: f64) -> V3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn dot(a: V3, b: V3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross(a: V3, b: V3) -> V3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn normalize(a: V3) -> V3 {
    let n = dot(a, a).sqrt();
    if n == 0.0 {
        a
    } else {
        scale(a, 1.0 / n)
    }
}

/// Right-handed orthonormal frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub origin: V3,
    pub x: V3,
    pub y: V3,
    pub z: V3,
}

impl Frame {
    pub const IDENTITY: Frame = Frame {
        origin: [0.0; 3],
        x: [1.0, 0.0, 0.0],
        y: [0.0, 1.0, 0.0],
        z: [0.0, 0.0, 1.0],
    };

    pub fn from_axes(origin: V3, z: V3, x: V3) -> Frame {
        let z = normalize(z);
        let x = normalize(sub(x, scale(z, dot(x, z))));
        Frame {
            origin,
            x,
            y: cross(z, x),
            z,
        }
    }

    /// Local coordinates to world.
    pub fn apply(&self, p: V3) -> V3 {
        add(
            self.origin,
            add(add(scale(self.x, p[0]), scale(self.y, p[1])), scale(self.z, p[2])),
        )
    }

    pub fn apply_dir(&self, d: V3) -> V3 {
        add(add(scale(self.x, d[0]), scale(self.y, d[1])), scale(self.z, d[2]))
    }

    /// World coordinates to local.
    pub fn local(&self, p: V3) -> V3 {
        let r = sub(p, self.origin);
        [dot(r, self.x), dot(r, self.y), dot(r, self.z)]
    }

    /// `self` then `inner`, i.e. `inner` expressed in `self`.
    pub fn then(&self, inner: &Frame) -> Frame {
        Frame {
            origin: self.apply(inner.origin),
            x: self.apply_dir(inner.x),
            y: self.apply_dir(inner.y),
            z: self.apply_dir(inner.z),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    /// Centered rectangle after its 2D placement.
    Rect { center: Vec2, x_dir: Vec2, xdim: f64, ydim: f64 },
    Poly(Vec<Vec2>),
}

/// Vertical or general prism: `profile` in the frame's xy plane, swept
/// along `direction` (frame coordinates) by `depth`.
#[derive(Debug, Clone, PartialEq)]
pub struct Extrusion {
    pub product: u32,
    pub product_type: String,
    pub frame: Frame,
    pub profile: Profile,
    pub direction: V3,
    pub depth: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModelGeometry {
    pub extrusions: Vec<Extrusion>,
    /// (host product, opening product)
    pub voids: Vec<(u32, u32)>,
}

impl ModelGeometry {
    pub fn of_type<'a>(&'a self, ty: &'a str) -> impl Iterator<Item = &'a Extrusion> + 'a {
        self.extrusions.iter().filter(move |e| e.product_type == ty)
    }
}

fn bad(id: u32, what: &str) -> Error {
    Error::InvalidInput(format!("#{id}: {what}"))
}

struct Reader<'a> {
    p: &'a ParsedStep,
}

impl Reader<'_> {
    fn entity(&self, id: u32, ty: &str) -> Result<&crate::ifc::model::Entity> {
        let e = self.p.get(id).ok_or_else(|| bad(id, "missing entity"))?;
        if e.ty != ty {
            return Err(bad(id, &format!("expected {ty}, found {}", e.ty)));
        }
        Ok(e)
    }

    fn coords(&self, v: &Value, what: &str) -> Result<Vec<f64>> {
        let id = v.as_ref_id().ok_or_else(|| bad(0, what))?;
        let e = self.p.get(id).ok_or_else(|| bad(id, "missing entity"))?;
        if e.ty != "IFCCARTESIANPOINT" && e.ty != "IFCDIRECTION" {
            return Err(bad(id, what));
        }
        e.arg(0)
            .as_list()
            .ok_or_else(|| bad(id, what))?
            .iter()
            .map(|x| x.as_f64().ok_or_else(|| bad(id, what)))
            .collect()
    }

    fn v3(&self, v: &Value, default: V3) -> Result<V3> {
        if matches!(v, Value::Unset) {
            return Ok(default);
        }
        let c = self.coords(v, "bad 3D point")?;
        Ok([
            c.first().copied().unwrap_or(0.0),
            c.get(1).copied().unwrap_or(0.0),
            c.get(2).copied().unwrap_or(0.0),
        ])
    }

    fn v2(&self, v: &Value, default: Vec2) -> Result<Vec2> {
        if matches!(v, Value::Unset) {
            return Ok(default);
        }
        let c = self.coords(v, "bad 2D point")?;
        Ok(Vec2::new(c.first().copied().unwrap_or(0.0), c.get(1).copied().unwrap_or(0.0)))
    }

    fn axis3d(&self, id: u32) -> Result<Frame> {
        let e = self.entity(id, "IFCAXIS2PLACEMENT3D")?;
        let o = self.v3(e.arg(0), [0.0; 3])?;
        let z = self.v3(e.arg(1), [0.0, 0.0, 1.0])?;
        let x = self.v3(e.arg(2), [1.0, 0.0, 0.0])?;
        Ok(Frame::from_axes(o, z, x))
    }

    fn placement(&self, id: u32, depth: usize) -> Result<Frame> {
        if depth > 64 {
            return Err(bad(id, "placement chain too deep"));
        }
        let e = self.entity(id, "IFCLOCALPLACEMENT")?;
        let local = self.axis3d(e.arg(1).as_ref_id().ok_or_else(|| bad(id, "missing relative placement"))?)?;
        match e.arg(0).as_ref_id() {
            Some(parent) => Ok(self.placement(parent, depth + 1)?.then(&local)),
            None => Ok(local),
        }
    }

    fn profile(&self, id: u32) -> Result<Profile> {
        let e = self.p.get(id).ok_or_else(|| bad(id, "missing profile"))?;
        match e.ty.as_str() {
            "IFCRECTANGLEPROFILEDEF" => {
                let (center, x_dir) = match e.arg(2).as_ref_id() {
                    Some(pos) => {
                        let a = self.entity(pos, "IFCAXIS2PLACEMENT2D")?;
                        (self.v2(a.arg(0), Vec2::new(0.0, 0.0))?, self.v2(a.arg(1), Vec2::new(1.0, 0.0))?.normalized())
                    }
                    None => (Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0)),
                };
                Ok(Profile::Rect {
                    center,
                    x_dir,
                    xdim: e.arg(3).as_f64().ok_or_else(|| bad(id, "bad XDim"))?,
                    ydim: e.arg(4).as_f64().ok_or_else(|| bad(id, "bad YDim"))?,
                })
            }
            "IFCARBITRARYCLOSEDPROFILEDEF" => {
                let pl = self.entity(e.arg(2).as_ref_id().ok_or_else(|| bad(id, "missing curve"))?, "IFCPOLYLINE")?;
                let mut pts = pl
                    .arg(0)
                    .as_list()
                    .ok_or_else(|| bad(id, "bad polyline"))?
                    .iter()
                    .map(|v| self.v2(v, Vec2::new(0.0, 0.0)))
                    .collect::<Result<Vec<_>>>()?;
                if pts.len() > 1 && pts.first() == pts.last() {
                    pts.pop();
                }
                Ok(Profile::Poly(pts))
            }
            other => Err(bad(id, &format!("unsupported profile {other}"))),
        }
    }

    fn solid(&self, id: u32) -> Result<(Frame, Profile, V3, f64)> {
        let e = self.entity(id, "IFCEXTRUDEDAREASOLID")?;
        let prof = self.profile(e.arg(0).as_ref_id().ok_or_else(|| bad(id, "missing profile"))?)?;
        let pos = match e.arg(1).as_ref_id() {
            Some(a) => self.axis3d(a)?,
            None => Frame::IDENTITY,
        };
        let dir = normalize(self.v3(e.arg(2), [0.0, 0.0, 1.0])?);
        let depth = e.arg(3).as_f64().ok_or_else(|| bad(id, "bad depth"))?;
        Ok((pos, prof, dir, depth))
    }
}

const SHAPED: [&str; 4] = ["IFCWALL", "IFCSLAB", "IFCOPENINGELEMENT", "IFCSPACE"];

/// Body extrusions of walls, slabs, openings and spaces in world frames.
pub fn read_geometry(p: &ParsedStep) -> Result<ModelGeometry> {
    let r = Reader { p };
    let mut out = ModelGeometry::default();
    for (&id, e) in &p.entities {
        if e.ty == "IFCRELVOIDSELEMENT" {
            if let (Some(h), Some(o)) = (e.arg(4).as_ref_id(), e.arg(5).as_ref_id()) {
                out.voids.push((h, o));
            }
            continue;
        }
        if !SHAPED.contains(&e.ty.as_str()) {
            continue;
        }
        let (Some(pl), Some(shape)) = (e.arg(5).as_ref_id(), e.arg(6).as_ref_id()) else { continue };
        let frame = r.placement(pl, 0)?;
        let pds = r.entity(shape, "IFCPRODUCTDEFINITIONSHAPE")?;
        for rep in pds.arg(2).as_list().unwrap_or(&[]).iter().filter_map(|v| v.as_ref_id()) {
            let rep_e = r.entity(rep, "IFCSHAPEREPRESENTATION")?;
            if rep_e.arg(1).as_str() != Some("Body") {
                continue;
            }
            for item in rep_e.arg(3).as_list().unwrap_or(&[]).iter().filter_map(|v| v.as_ref_id()) {
                let (pos, profile, direction, depth) = r.solid(item)?;
                out.extrusions.push(Extrusion {
                    product: id,
                    product_type: e.ty.clone(),
                    frame: frame.then(&pos),
                    profile,
                    direction,
                    depth,
                });
            }
        }
    }
    Ok(out)
}

/// Axis endpoints, thickness and height of a rectangular wall extrusion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WallBox {
    pub product: u32,
    pub start: V3,
    pub end: V3,
    pub thickness: f64,
    pub height: f64,
}

pub fn wall_box(e: &Extrusion) -> Option<WallBox> {
    let Profile::Rect { center, x_dir, xdim, ydim } = e.profile else { return None };
    let a = center - x_dir * (xdim / 2.0);
    let b = center + x_dir * (xdim / 2.0);
    Some(WallBox {
        product: e.product,
        start: e.frame.apply([a.x, a.y, 0.0]),
        end: e.frame.apply([b.x, b.y, 0.0]),
        thickness: ydim,
        height: e.depth * e.direction[2],
    })
}
