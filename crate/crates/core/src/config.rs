//! Pipeline parameters: `[input]` and `[calibration]` sections of a TOML file.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::opening::OpeningHeuristics;

/// One rejected parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl FieldError {
    fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        FieldError {
            field: field.into(),
            message: message.into(),
        }
    }
}

/// Project, site, building and author fields written into the IFC file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectMeta {
    pub project_name: String,
    pub long_name: String,
    pub version: String,
    pub author_name: String,
    pub author_surname: String,
    pub organization: String,
    pub building_name: String,
    pub building_type: String,
    pub building_phase: String,
    pub site_latitude: f64,
    pub site_longitude: f64,
    pub site_elevation: f64,
    pub material: String,
}

impl Default for ProjectMeta {
    fn default() -> Self {
        InputParams::default().meta()
    }
}

/// Survey and building parameters known before processing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputParams {
    pub pc_resolution: f64,
    pub bfs_thickness: f64,
    pub tfs_thickness: f64,
    pub min_wall_length: f64,
    pub min_wall_thickness: f64,
    pub max_wall_thickness: f64,
    pub exterior_walls_thickness: f64,
    pub snapping_distance: f64,
    pub material_for_objects: String,
    pub ifc_site_latitude: f64,
    pub ifc_site_longitude: f64,
    pub ifc_site_elevation: f64,
    pub ifc_project_name: String,
    pub ifc_project_long_name: String,
    pub ifc_project_version: String,
    pub ifc_author_name: String,
    pub ifc_author_surname: String,
    pub ifc_author_organization: String,
    pub ifc_building_name: String,
    pub ifc_building_type: String,
    pub ifc_building_phase: String,
}

impl Default for InputParams {
    fn default() -> Self {
        InputParams {
            pc_resolution: 0.02,
            bfs_thickness: 0.3,
            tfs_thickness: 0.3,
            min_wall_length: 0.5,
            min_wall_thickness: 0.1,
            max_wall_thickness: 0.6,
            exterior_walls_thickness: 0.3,
            snapping_distance: 0.3,
            material_for_objects: "Concrete".into(),
            ifc_site_latitude: 0.0,
            ifc_site_longitude: 0.0,
            ifc_site_elevation: 0.0,
            ifc_project_name: "Project".into(),
            ifc_project_long_name: String::new(),
            ifc_project_version: "1.0".into(),
            ifc_author_name: String::new(),
            ifc_author_surname: String::new(),
            ifc_author_organization: String::new(),
            ifc_building_name: "Building".into(),
            ifc_building_type: String::new(),
            ifc_building_phase: String::new(),
        }
    }
}

impl InputParams {
    pub fn meta(&self) -> ProjectMeta {
        ProjectMeta {
            project_name: self.ifc_project_name.clone(),
            long_name: self.ifc_project_long_name.clone(),
            version: self.ifc_project_version.clone(),
            author_name: self.ifc_author_name.clone(),
            author_surname: self.ifc_author_surname.clone(),
            organization: self.ifc_author_organization.clone(),
            building_name: self.ifc_building_name.clone(),
            building_type: self.ifc_building_type.clone(),
            building_phase: self.ifc_building_phase.clone(),
            site_latitude: self.ifc_site_latitude,
            site_longitude: self.ifc_site_longitude,
            site_elevation: self.ifc_site_elevation,
            material: self.material_for_objects.clone(),
        }
    }

    pub fn validate(&self) -> std::result::Result<(), Vec<FieldError>> {
        let mut errs = Vec::new();
        let mut positive = |name: &str, v: f64| {
            if !(v > 0.0 && v.is_finite()) {
                errs.push(FieldError::new(name, format!("must be positive, got {v}")));
            }
        };
        positive("pc_resolution", self.pc_resolution);
        positive("bfs_thickness", self.bfs_thickness);
        positive("tfs_thickness", self.tfs_thickness);
        positive("min_wall_length", self.min_wall_length);
        positive("min_wall_thickness", self.min_wall_thickness);
        positive("max_wall_thickness", self.max_wall_thickness);
        positive("exterior_walls_thickness", self.exterior_walls_thickness);
        if self.min_wall_thickness >= self.max_wall_thickness {
            errs.push(FieldError::new(
                "max_wall_thickness",
                "must exceed min_wall_thickness",
            ));
        }
        if !(self.snapping_distance >= 0.0 && self.snapping_distance.is_finite()) {
            errs.push(FieldError::new("snapping_distance", "must be non-negative"));
        }
        if !(-90.0..=90.0).contains(&self.ifc_site_latitude) {
            errs.push(FieldError::new("ifc_site_latitude", "must be within [-90, 90]"));
        }
        if !(-180.0..=180.0).contains(&self.ifc_site_longitude) {
            errs.push(FieldError::new("ifc_site_longitude", "must be within [-180, 180]"));
        }
        if !self.ifc_site_elevation.is_finite() {
            errs.push(FieldError::new("ifc_site_elevation", "must be finite"));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(errs)
        }
    }
}

/// Tunable algorithm parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationParams {
    /// Keep every n-th row when reading XYZ with row skipping.
    pub dilution_factor: usize,
    /// Raster cell size in millimetres.
    pub grid_coefficient: f64,
    pub z_step: f64,
    pub max_n_points_array: f64,
    pub dilation_meters: f64,
    pub erosion_meters: f64,
    pub smoothing_factor: f64,
    pub safety_margin: f64,
    pub z_section_boundaries: [f64; 2],
    pub threshold: f64,
    #[serde(alias = "square")]
    pub kernel_cells: usize,
    pub epsilon: f64,
    pub angle_tolerance: f64,
    pub max10: usize,
    pub gap_fraction: f64,
    pub min_overlap_fraction: f64,
    pub openings: OpeningLimits,
}

impl Default for CalibrationParams {
    fn default() -> Self {
        CalibrationParams {
            dilution_factor: 10,
            grid_coefficient: 5.0,
            z_step: 0.05,
            max_n_points_array: 0.5,
            dilation_meters: 1.0,
            erosion_meters: 1.0,
            smoothing_factor: 0.0005,
            safety_margin: 0.1,
            z_section_boundaries: [0.9, 1.0],
            threshold: 0.01,
            kernel_cells: 5,
            epsilon: 0.02,
            angle_tolerance: 3.0,
            max10: 10,
            gap_fraction: 0.7,
            min_overlap_fraction: 0.5,
            openings: OpeningLimits::default(),
        }
    }
}

/// Size and sill limits used to accept and classify openings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OpeningLimits {
    pub door_max_sill: f64,
    pub min_width: f64,
    pub max_width: f64,
    pub min_height: f64,
    pub aspect_min: f64,
    pub aspect_max: f64,
}

impl Default for OpeningLimits {
    fn default() -> Self {
        OpeningLimits {
            door_max_sill: 0.1,
            min_width: 0.5,
            max_width: 3.0,
            min_height: 0.5,
            aspect_min: 0.3,
            aspect_max: 4.0,
        }
    }
}

impl CalibrationParams {
    /// Raster cell size in metres.
    pub fn cell_size(&self) -> f64 {
        self.grid_coefficient / 1000.0
    }

    pub fn heuristics(&self) -> OpeningHeuristics {
        let o = &self.openings;
        OpeningHeuristics {
            door_max_sill: o.door_max_sill,
            min_width: o.min_width,
            max_width: o.max_width,
            min_height: o.min_height,
            aspect_min: o.aspect_min,
            aspect_max: o.aspect_max,
            tenth_max_rank: self.max10,
            gap_fraction: self.gap_fraction,
        }
    }

    pub fn validate(&self) -> std::result::Result<(), Vec<FieldError>> {
        let mut errs = Vec::new();
        let mut check = |name: &str, ok: bool, msg: &str| {
            if !ok {
                errs.push(FieldError::new(name, msg));
            }
        };
        let pos = |v: f64| v > 0.0 && v.is_finite();
        let nonneg = |v: f64| v >= 0.0 && v.is_finite();
        let frac = |v: f64| (0.0..=1.0).contains(&v);

        check("dilution_factor", self.dilution_factor >= 1, "must be at least 1");
        check("grid_coefficient", pos(self.grid_coefficient), "must be positive");
        check("z_step", pos(self.z_step), "must be positive");
        check(
            "max_n_points_array",
            self.max_n_points_array > 0.0 && self.max_n_points_array <= 1.0,
            "must be within (0, 1]",
        );
        check("dilation_meters", nonneg(self.dilation_meters), "must be non-negative");
        check("erosion_meters", nonneg(self.erosion_meters), "must be non-negative");
        check("smoothing_factor", nonneg(self.smoothing_factor), "must be non-negative");
        check("safety_margin", nonneg(self.safety_margin), "must be non-negative");
        let [lo, hi] = self.z_section_boundaries;
        check(
            "z_section_boundaries",
            frac(lo) && frac(hi) && lo < hi,
            "must satisfy 0 <= lo < hi <= 1",
        );
        check("threshold", frac(self.threshold), "must be within [0, 1]");
        check("kernel_cells", self.kernel_cells >= 1, "must be at least 1");
        check("epsilon", nonneg(self.epsilon), "must be non-negative");
        check(
            "angle_tolerance",
            (0.0..90.0).contains(&self.angle_tolerance),
            "must be within [0, 90)",
        );
        check("max10", self.max10 >= 1, "must be at least 1");
        check(
            "gap_fraction",
            self.gap_fraction > 0.0 && self.gap_fraction <= 1.0,
            "must be within (0, 1]",
        );
        check(
            "min_overlap_fraction",
            self.min_overlap_fraction > 0.0 && self.min_overlap_fraction <= 1.0,
            "must be within (0, 1]",
        );
        let o = &self.openings;
        check("openings.door_max_sill", nonneg(o.door_max_sill), "must be non-negative");
        check("openings.min_width", pos(o.min_width), "must be positive");
        check(
            "openings.max_width",
            pos(o.max_width) && o.max_width > o.min_width,
            "must be positive and exceed min_width",
        );
        check("openings.min_height", pos(o.min_height), "must be positive");
        check("openings.aspect_min", pos(o.aspect_min), "must be positive");
        check(
            "openings.aspect_max",
            pos(o.aspect_max) && o.aspect_max > o.aspect_min,
            "must be positive and exceed aspect_min",
        );
        if errs.is_empty() {
            Ok(())
        } else {
            Err(errs)
        }
    }

    /// Applies a JSON object of changed fields; nested `openings` merges too.
    pub fn merged(&self, patch: &serde_json::Value) -> std::result::Result<Self, Vec<FieldError>> {
        merge_patch(self, patch)
    }
}

/// Whole config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub input: InputParams,
    pub calibration: CalibrationParams,
    /// Renames generated zone names, e.g. `"Zone 0.1" = "Kitchen"`.
    pub zone_names: BTreeMap<String, String>,
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Config> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Config> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Config::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if let Err(e) = self.input.validate() {
            errs.extend(e);
        }
        if let Err(e) = self.calibration.validate() {
            errs.extend(e);
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Params(errs))
        }
    }
}

impl Config {
    /// Applies a JSON patch. Keys `input`, `calibration` and `zone_names`
    /// hold nested objects; any other key is looked up first among the
    /// calibration and then among the input parameters. The result is
    /// validated.
    pub fn merged(&self, patch: &serde_json::Value) -> std::result::Result<Config, Vec<FieldError>> {
        let serde_json::Value::Object(changes) = patch else {
            return Err(vec![FieldError::new("", "expected a JSON object")]);
        };
        let cal_keys = serde_json::to_value(&self.calibration).expect("params serialize");
        let in_keys = serde_json::to_value(&self.input).expect("params serialize");
        let mut cal = serde_json::Map::new();
        let mut inp = serde_json::Map::new();
        let mut out = self.clone();
        let mut errs = Vec::new();
        for (k, v) in changes {
            let key = if k == "square" { "kernel_cells" } else { k.as_str() };
            match key {
                "calibration" | "input" => match v {
                    serde_json::Value::Object(m) => {
                        let dest = if key == "input" { &mut inp } else { &mut cal };
                        dest.extend(m.iter().map(|(a, b)| (a.clone(), b.clone())));
                    }
                    _ => errs.push(FieldError::new(key, "expected an object")),
                },
                "zone_names" => match serde_json::from_value::<BTreeMap<String, String>>(v.clone()) {
                    Ok(m) => out.zone_names = m,
                    Err(_) => errs.push(FieldError::new(key, "expected a table of strings")),
                },
                _ if cal_keys.get(key).is_some() => {
                    cal.insert(key.to_string(), v.clone());
                }
                _ if in_keys.get(key).is_some() => {
                    inp.insert(key.to_string(), v.clone());
                }
                _ => errs.push(FieldError::new(key, "unknown parameter")),
            }
        }
        match self.calibration.merged(&serde_json::Value::Object(cal)) {
            Ok(c) => out.calibration = c,
            Err(e) => errs.extend(e),
        }
        match self.input.merged(&serde_json::Value::Object(inp)) {
            Ok(i) => out.input = i,
            Err(e) => errs.extend(e),
        }
        if errs.is_empty() {
            match out.validate() {
                Err(Error::Params(e)) => errs = e,
                Err(e) => errs.push(FieldError::new("", e.to_string())),
                Ok(()) => {}
            }
        }
        if errs.is_empty() {
            Ok(out)
        } else {
            Err(errs)
        }
    }
}

impl InputParams {
    pub fn merged(&self, patch: &serde_json::Value) -> std::result::Result<Self, Vec<FieldError>> {
        merge_patch(self, patch)
    }
}

fn merge_patch<T>(base: &T, patch: &serde_json::Value) -> std::result::Result<T, Vec<FieldError>>
where
    T: Serialize + serde::de::DeserializeOwned,
{
    let serde_json::Value::Object(changes) = patch else {
        return Err(vec![FieldError::new("", "expected a JSON object")]);
    };
    let mut value = serde_json::to_value(base).expect("params serialize");
    let mut errs = Vec::new();
    apply(&mut value, changes, "", &mut errs);
    if !errs.is_empty() {
        return Err(errs);
    }
    serde_json::from_value(value).map_err(|e| vec![FieldError::new("", e.to_string())])
}

fn apply(
    target: &mut serde_json::Value,
    changes: &serde_json::Map<String, serde_json::Value>,
    prefix: &str,
    errs: &mut Vec<FieldError>,
) {
    let serde_json::Value::Object(obj) = target else {
        return;
    };
    for (k, v) in changes {
        let key = if k == "square" { "kernel_cells" } else { k.as_str() };
        let name = format!("{prefix}{key}");
        let Some(slot) = obj.get_mut(key) else {
            errs.push(FieldError::new(name, "unknown parameter"));
            continue;
        };
        match (slot.is_object(), v) {
            (true, serde_json::Value::Object(inner)) => {
                apply(slot, inner, &format!("{name}."), errs);
            }
            (true, _) => errs.push(FieldError::new(name, "expected an object")),
            (false, _) => {
                if same_kind(slot, v) {
                    *slot = v.clone();
                } else {
                    errs.push(FieldError::new(name, format!("wrong type: {v}")));
                }
            }
        }
    }
}

fn same_kind(old: &serde_json::Value, new: &serde_json::Value) -> bool {
    use serde_json::Value as V;
    match (old, new) {
        (V::Number(a), V::Number(b)) => {
            // integer fields reject fractions and negatives
            !(a.is_u64() && !b.is_u64())
        }
        (V::String(_), V::String(_)) | (V::Bool(_), V::Bool(_)) => true,
        (V::Array(a), V::Array(b)) => {
            a.len() == b.len() && a.iter().zip(b).all(|(x, y)| same_kind(x, y))
        }
        _ => false,
    }
}
