//! Detected elements to an IFC4 entity graph.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::config::ProjectMeta;
use crate::error::{Error, Result};
use crate::geom::Polygon2D;
use crate::ifc::model::{GuidMode, GuidSource, IfcModel, Value};
use crate::ifc::step::default_header;
use crate::opening::{Opening, OpeningKind};
use crate::slab::{Slab, Storey};
use crate::wall::Wall;
use crate::zone::Zone;

/// Extra depth on each side of an opening box so it cuts cleanly through
/// its wall.
pub const OPENING_OVERCUT: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoreyLevel {
    pub index: usize,
    /// Top of the floor slab.
    pub elevation: f64,
    pub height: f64,
}

impl From<&Storey> for StoreyLevel {
    fn from(s: &Storey) -> Self {
        StoreyLevel {
            index: s.index,
            elevation: s.z_floor_top,
            height: s.height,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildOptions {
    pub guids: GuidMode,
    /// Zero timestamps in the header and owner history.
    pub deterministic: bool,
    pub file_name: String,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            guids: GuidMode::Seeded(0),
            deterministic: true,
            file_name: "model.ifc".into(),
        }
    }
}

/// Everything one building model is made from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BuildingElements {
    pub slabs: Vec<Slab>,
    pub storeys: Vec<StoreyLevel>,
    pub walls: Vec<Wall>,
    pub openings: Vec<Opening>,
    pub zones: Vec<Zone>,
}

impl BuildingElements {
    pub fn element_count(&self) -> usize {
        self.slabs.len() + self.walls.len() + self.openings.len() + self.zones.len()
    }

    pub fn build(&self, meta: &ProjectMeta, opts: &BuildOptions) -> Result<IfcModel> {
        build_model(&self.slabs, &self.storeys, &self.walls, &self.openings, &self.zones, meta, opts)
    }
}

/// Degrees to the IFC compound angle (degrees, minutes, seconds, millionths).
pub fn compound_angle(deg: f64) -> [i64; 4] {
    let sign = if deg < 0.0 { -1 } else { 1 };
    let micro = (deg.abs() * 3600.0 * 1e6).round() as i64;
    let d = micro / 3_600_000_000;
    let m = (micro / 60_000_000) % 60;
    let s = (micro / 1_000_000) % 60;
    let f = micro % 1_000_000;
    [sign * d, sign * m, sign * s, sign * f]
}

/// UTC `YYYY-MM-DDThh:mm:ss` for seconds since the epoch.
pub fn iso_timestamp(secs: i64) -> String {
    let days = secs.div_euclid(86_400);
    let rem = secs.rem_euclid(86_400);
    // civil-from-days
    let z = days + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z.rem_euclid(146_097);
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let day = doy - (153 * mp + 2) / 5 + 1;
    let month = if mp < 10 { mp + 3 } else { mp - 9 };
    let year = yoe + era * 400 + i64::from(month <= 2);
    format!(
        "{year:04}-{month:02}-{day:02}T{:02}:{:02}:{:02}",
        rem / 3600,
        (rem / 60) % 60,
        rem % 60
    )
}

fn now_secs() -> i64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs() as i64)
        .unwrap_or(0)
}

struct Builder {
    m: IfcModel,
    g: GuidSource,
    oh: u32,
    z: u32,
    identity: u32,
    body: u32,
    axis_ctx: u32,
}

impl Builder {
    fn point3(&mut self, x: f64, y: f64, z: f64) -> u32 {
        self.m.add("IFCCARTESIANPOINT", vec![Value::reals(&[x, y, z])])
    }

    fn point2(&mut self, x: f64, y: f64) -> u32 {
        self.m.add("IFCCARTESIANPOINT", vec![Value::reals(&[x, y])])
    }

    fn guid(&mut self, kind: &str) -> Value {
        Value::Str(self.g.next(kind))
    }

    fn placement(&mut self, rel: Option<u32>, origin: [f64; 3], x_dir: Option<[f64; 2]>) -> u32 {
        let p = self.point3(origin[0], origin[1], origin[2]);
        let (z, x) = match x_dir {
            Some([dx, dy]) => {
                let x = self.m.add("IFCDIRECTION", vec![Value::reals(&[dx, dy, 0.0])]);
                (Value::Ref(self.z), Value::Ref(x))
            }
            None => (Value::Unset, Value::Unset),
        };
        let ax = self.m.add("IFCAXIS2PLACEMENT3D", vec![Value::Ref(p), z, x]);
        self.m.add(
            "IFCLOCALPLACEMENT",
            vec![rel.map_or(Value::Unset, Value::Ref), Value::Ref(ax)],
        )
    }

    fn polyline(&mut self, poly: &Polygon2D) -> u32 {
        let mut pts: Vec<u32> = poly.vertices.iter().map(|v| self.point2(v.x, v.y)).collect();
        pts.push(pts[0]);
        self.m.add("IFCPOLYLINE", vec![Value::refs(&pts)])
    }

    fn rectangle(&mut self, cx: f64, xdim: f64, ydim: f64) -> u32 {
        let c = self.point2(cx, 0.0);
        let pos = self.m.add("IFCAXIS2PLACEMENT2D", vec![Value::Ref(c), Value::Unset]);
        self.m.add(
            "IFCRECTANGLEPROFILEDEF",
            vec![Value::en("AREA"), Value::Unset, Value::Ref(pos), Value::Real(xdim), Value::Real(ydim)],
        )
    }

    fn arbitrary(&mut self, poly: &Polygon2D) -> u32 {
        let pl = self.polyline(poly);
        self.m.add(
            "IFCARBITRARYCLOSEDPROFILEDEF",
            vec![Value::en("AREA"), Value::Unset, Value::Ref(pl)],
        )
    }

    /// Body representation extruding `profile` along +z by `depth`, plus an
    /// optional 2D axis curve.
    fn shape(&mut self, profile: u32, depth: f64, axis_len: Option<f64>) -> u32 {
        let solid = self.m.add(
            "IFCEXTRUDEDAREASOLID",
            vec![Value::Ref(profile), Value::Ref(self.identity), Value::Ref(self.z), Value::Real(depth)],
        );
        let body = self.m.add(
            "IFCSHAPEREPRESENTATION",
            vec![Value::Ref(self.body), Value::str("Body"), Value::str("SweptSolid"), Value::refs(&[solid])],
        );
        let mut reps = Vec::new();
        if let Some(len) = axis_len {
            let a = self.point2(0.0, 0.0);
            let b = self.point2(len, 0.0);
            let line = self.m.add("IFCPOLYLINE", vec![Value::refs(&[a, b])]);
            reps.push(self.m.add(
                "IFCSHAPEREPRESENTATION",
                vec![Value::Ref(self.axis_ctx), Value::str("Axis"), Value::str("Curve2D"), Value::refs(&[line])],
            ));
        }
        reps.push(body);
        self.m.add("IFCPRODUCTDEFINITIONSHAPE", vec![Value::Unset, Value::Unset, Value::refs(&reps)])
    }

    fn rel(&mut self, ty: &str, kind: &str, args: Vec<Value>) -> u32 {
        let mut all = vec![self.guid(kind), Value::Ref(self.oh), Value::Unset, Value::Unset];
        all.extend(args);
        self.m.add(ty, all)
    }
}

/// Entity graph for one building. Walls are referenced by `Wall::id`.
pub fn build_model(
    slabs: &[Slab],
    storeys: &[StoreyLevel],
    walls: &[Wall],
    openings: &[Opening],
    zones: &[Zone],
    meta: &ProjectMeta,
    opts: &BuildOptions,
) -> Result<IfcModel> {
    let wall_by_id: BTreeMap<usize, usize> = walls.iter().enumerate().map(|(k, w)| (w.id, k)).collect();
    for o in openings {
        if !wall_by_id.contains_key(&o.wall_ref) {
            return Err(Error::UnknownWall(o.wall_ref.to_string()));
        }
    }
    for z in zones {
        if z.boundary.len() < 3 || !z.boundary.is_simple() {
            return Err(Error::DegenerateZone(z.name.clone()));
        }
    }
    let level_of = |i: usize| -> Result<usize> {
        storeys
            .iter()
            .position(|s| s.index == i)
            .ok_or_else(|| Error::InvalidInput(format!("element refers to unknown storey {i}")))
    };
    if storeys.is_empty() && !(slabs.is_empty() && walls.is_empty() && zones.is_empty()) {
        return Err(Error::InvalidInput("elements need at least one storey".into()));
    }

    let secs = if opts.deterministic { 0 } else { now_secs() };
    let author = [meta.author_name.as_str(), meta.author_surname.as_str()]
        .iter()
        .filter(|s| !s.is_empty())
        .copied()
        .collect::<Vec<_>>()
        .join(" ");
    let header = default_header(&opts.file_name, &iso_timestamp(secs), &author, &meta.organization);
    let mut m = IfcModel::new(header, meta.clone());

    let person = m.add(
        "IFCPERSON",
        vec![
            if meta.author_surname.is_empty() && meta.author_name.is_empty() {
                Value::str("unknown")
            } else {
                Value::Unset
            },
            Value::opt_str(&meta.author_surname),
            Value::opt_str(&meta.author_name),
            Value::Unset,
            Value::Unset,
            Value::Unset,
            Value::Unset,
            Value::Unset,
        ],
    );
    let org_name = if meta.organization.is_empty() { "Unknown" } else { &meta.organization };
    let org = m.add(
        "IFCORGANIZATION",
        vec![Value::Unset, Value::str(org_name), Value::Unset, Value::Unset, Value::Unset],
    );
    let pao = m.add("IFCPERSONANDORGANIZATION", vec![Value::Ref(person), Value::Ref(org), Value::Unset]);
    let app = m.add(
        "IFCAPPLICATION",
        vec![
            Value::Ref(org),
            Value::str(env!("CARGO_PKG_VERSION")),
            Value::str("pointbim"),
            Value::str("pointbim"),
        ],
    );
    let oh = m.add(
        "IFCOWNERHISTORY",
        vec![
            Value::Ref(pao),
            Value::Ref(app),
            Value::Unset,
            Value::en("ADDED"),
            Value::Unset,
            Value::Unset,
            Value::Unset,
            Value::Int(secs),
        ],
    );
    let si = |m: &mut IfcModel, kind: &str, name: &str| {
        m.add("IFCSIUNIT", vec![Value::Derived, Value::en(kind), Value::Unset, Value::en(name)])
    };
    let length = si(&mut m, "LENGTHUNIT", "METRE");
    let area = si(&mut m, "AREAUNIT", "SQUARE_METRE");
    let volume = si(&mut m, "VOLUMEUNIT", "CUBIC_METRE");
    let radian = si(&mut m, "PLANEANGLEUNIT", "RADIAN");
    let dims = m.add("IFCDIMENSIONALEXPONENTS", (0..7).map(|_| Value::Int(0)).collect());
    let factor = m.add(
        "IFCMEASUREWITHUNIT",
        vec![
            Value::Typed("IFCPLANEANGLEMEASURE".into(), Box::new(Value::Real(std::f64::consts::PI / 180.0))),
            Value::Ref(radian),
        ],
    );
    let degree = m.add(
        "IFCCONVERSIONBASEDUNIT",
        vec![Value::Ref(dims), Value::en("PLANEANGLEUNIT"), Value::str("DEGREE"), Value::Ref(factor)],
    );
    let units = m.add("IFCUNITASSIGNMENT", vec![Value::refs(&[length, area, volume, degree])]);

    let origin = m.add("IFCCARTESIANPOINT", vec![Value::reals(&[0.0, 0.0, 0.0])]);
    let z = m.add("IFCDIRECTION", vec![Value::reals(&[0.0, 0.0, 1.0])]);
    let x = m.add("IFCDIRECTION", vec![Value::reals(&[1.0, 0.0, 0.0])]);
    let identity = m.add("IFCAXIS2PLACEMENT3D", vec![Value::Ref(origin), Value::Ref(z), Value::Ref(x)]);
    let ctx = m.add(
        "IFCGEOMETRICREPRESENTATIONCONTEXT",
        vec![
            Value::Unset,
            Value::str("Model"),
            Value::Int(3),
            Value::Real(1e-5),
            Value::Ref(identity),
            Value::Unset,
        ],
    );
    let sub = |m: &mut IfcModel, id: &str| {
        m.add(
            "IFCGEOMETRICREPRESENTATIONSUBCONTEXT",
            vec![
                Value::str(id),
                Value::str("Model"),
                Value::Derived,
                Value::Derived,
                Value::Derived,
                Value::Derived,
                Value::Ref(ctx),
                Value::Unset,
                Value::en("MODEL_VIEW"),
                Value::Unset,
            ],
        )
    };
    let body = sub(&mut m, "Body");
    let axis_ctx = sub(&mut m, "Axis");

    let mut b = Builder {
        m,
        g: GuidSource::new(opts.guids),
        oh,
        z,
        identity,
        body,
        axis_ctx,
    };

    let project = {
        let g = b.guid("project");
        b.m.add(
            "IFCPROJECT",
            vec![
                g,
                Value::Ref(oh),
                Value::str(&meta.project_name),
                Value::opt_str(&meta.version),
                Value::Unset,
                Value::opt_str(&meta.long_name),
                Value::opt_str(&meta.building_phase),
                Value::refs(&[ctx]),
                Value::Ref(units),
            ],
        )
    };
    let site_pl = b.m.add("IFCLOCALPLACEMENT", vec![Value::Unset, Value::Ref(identity)]);
    let angle = |d: f64| Value::List(compound_angle(d).iter().map(|&v| Value::Int(v)).collect());
    let site = {
        let g = b.guid("site");
        b.m.add(
            "IFCSITE",
            vec![
                g,
                Value::Ref(oh),
                Value::str("Site"),
                Value::Unset,
                Value::Unset,
                Value::Ref(site_pl),
                Value::Unset,
                Value::Unset,
                Value::en("ELEMENT"),
                angle(meta.site_latitude),
                angle(meta.site_longitude),
                Value::Real(meta.site_elevation),
                Value::Unset,
                Value::Unset,
            ],
        )
    };
    let building_pl = b.m.add("IFCLOCALPLACEMENT", vec![Value::Ref(site_pl), Value::Ref(identity)]);
    let building = {
        let g = b.guid("building");
        b.m.add(
            "IFCBUILDING",
            vec![
                g,
                Value::Ref(oh),
                Value::str(&meta.building_name),
                Value::Unset,
                Value::opt_str(&meta.building_type),
                Value::Ref(building_pl),
                Value::Unset,
                Value::Unset,
                Value::en("ELEMENT"),
                Value::Unset,
                Value::Unset,
                Value::Unset,
            ],
        )
    };
    b.rel("IFCRELAGGREGATES", "aggregates", vec![Value::Ref(project), Value::refs(&[site])]);
    b.rel("IFCRELAGGREGATES", "aggregates", vec![Value::Ref(site), Value::refs(&[building])]);

    let mut storey_ids = Vec::new();
    let mut storey_pls = Vec::new();
    for s in storeys {
        let pl = b.placement(Some(building_pl), [0.0, 0.0, s.elevation], None);
        let g = b.guid("storey");
        let id = b.m.add(
            "IFCBUILDINGSTOREY",
            vec![
                g,
                Value::Ref(oh),
                Value::str(format!("Storey {}", s.index)),
                Value::Unset,
                Value::Unset,
                Value::Ref(pl),
                Value::Unset,
                Value::Unset,
                Value::en("ELEMENT"),
                Value::Real(s.elevation),
            ],
        );
        storey_ids.push(id);
        storey_pls.push(pl);
    }
    if !storey_ids.is_empty() {
        b.rel("IFCRELAGGREGATES", "aggregates", vec![Value::Ref(building), Value::refs(&storey_ids)]);
    }

    let mut contained: Vec<Vec<u32>> = vec![Vec::new(); storeys.len()];
    let mut material_users = Vec::new();

    for (i, s) in slabs.iter().enumerate() {
        let k = i.min(storeys.len() - 1);
        let rel_z = s.z_bottom - storeys[k].elevation;
        let pl = b.placement(Some(storey_pls[k]), [0.0, 0.0, rel_z], None);
        let prof = b.arbitrary(&s.footprint);
        let shape = b.shape(prof, s.thickness, None);
        let g = b.guid("slab");
        let kind = if i + 1 == slabs.len() && slabs.len() > 1 { "ROOF" } else { "FLOOR" };
        let id = b.m.add(
            "IFCSLAB",
            vec![
                g,
                Value::Ref(oh),
                Value::str(format!("Slab {i}")),
                Value::Unset,
                Value::Unset,
                Value::Ref(pl),
                Value::Ref(shape),
                Value::Unset,
                Value::en(kind),
            ],
        );
        contained[k].push(id);
        material_users.push(id);
    }

    let mut wall_ids = BTreeMap::new();
    let mut wall_pls = BTreeMap::new();
    for w in walls {
        let k = level_of(w.storey_index)?;
        let d = (w.axis_end - w.axis_start).normalized();
        let len = w.length();
        let pl = b.placement(Some(storey_pls[k]), [w.axis_start.x, w.axis_start.y, 0.0], Some([d.x, d.y]));
        let prof = b.rectangle(len / 2.0, len, w.thickness);
        let shape = b.shape(prof, w.height, Some(len));
        let g = b.guid("wall");
        let id = b.m.add(
            "IFCWALL",
            vec![
                g,
                Value::Ref(oh),
                Value::str(format!("Wall {}", w.id)),
                Value::str(if w.exterior { "exterior" } else { "interior" }),
                Value::Unset,
                Value::Ref(pl),
                Value::Ref(shape),
                Value::Unset,
                Value::en("STANDARD"),
            ],
        );
        contained[k].push(id);
        material_users.push(id);
        wall_ids.insert(w.id, id);
        wall_pls.insert(w.id, pl);
    }

    for (n, o) in openings.iter().enumerate() {
        let w = &walls[wall_by_id[&o.wall_ref]];
        let pl = b.placement(Some(wall_pls[&o.wall_ref]), [o.x_offset, 0.0, o.sill], None);
        let prof = b.rectangle(o.width / 2.0, o.width, w.thickness + 2.0 * OPENING_OVERCUT);
        let shape = b.shape(prof, o.height, None);
        let g = b.guid("opening");
        let label = match o.kind {
            OpeningKind::Door => "Door",
            OpeningKind::Window => "Window",
        };
        let id = b.m.add(
            "IFCOPENINGELEMENT",
            vec![
                g,
                Value::Ref(oh),
                Value::str(format!("{label} {n}")),
                Value::Unset,
                Value::str(label),
                Value::Ref(pl),
                Value::Ref(shape),
                Value::Unset,
                Value::en("OPENING"),
            ],
        );
        b.rel("IFCRELVOIDSELEMENT", "voids", vec![Value::Ref(wall_ids[&o.wall_ref]), Value::Ref(id)]);
    }

    let mut spaces: Vec<Vec<u32>> = vec![Vec::new(); storeys.len()];
    for z in zones {
        let k = level_of(z.storey_index)?;
        let pl = b.placement(Some(storey_pls[k]), [0.0, 0.0, 0.0], None);
        let prof = b.arbitrary(&z.boundary);
        let shape = b.shape(prof, z.height, None);
        let g = b.guid("space");
        let id = b.m.add(
            "IFCSPACE",
            vec![
                g,
                Value::Ref(oh),
                Value::str(&z.name),
                Value::Unset,
                Value::Unset,
                Value::Ref(pl),
                Value::Ref(shape),
                Value::Unset,
                Value::en("ELEMENT"),
                Value::en("INTERNAL"),
                Value::Unset,
            ],
        );
        spaces[k].push(id);
    }

    for k in 0..storeys.len() {
        if !contained[k].is_empty() {
            let ids = std::mem::take(&mut contained[k]);
            b.rel(
                "IFCRELCONTAINEDINSPATIALSTRUCTURE",
                "contains",
                vec![Value::refs(&ids), Value::Ref(storey_ids[k])],
            );
        }
        if !spaces[k].is_empty() {
            let ids = std::mem::take(&mut spaces[k]);
            b.rel("IFCRELAGGREGATES", "aggregates", vec![Value::Ref(storey_ids[k]), Value::refs(&ids)]);
        }
    }
    if !material_users.is_empty() {
        let mat = b.m.add("IFCMATERIAL", vec![Value::str(&meta.material), Value::Unset, Value::Unset]);
        b.rel(
            "IFCRELASSOCIATESMATERIAL",
            "material",
            vec![Value::refs(&material_users), Value::Ref(mat)],
        );
    }
    Ok(b.m)
}
