//! Interactive calibration session: stages run one at a time against a
//! loaded cloud, results cached by the parameters they depend on.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::cloud_io::{dilute_spatial, Aabb, PointCloud};
use crate::config::Config;
use crate::error::{Error, Result};
use crate::ifc::{to_step_string, BuildingElements};
use crate::opening::localize_points;
use crate::pipeline::{
    run_openings, run_slabs, run_walls, run_zones, Dilution, ElementCounts, OpeningStage, RunOptions,
    SlabStage, WallStage, ZoneStage,
};
use crate::preview;
use crate::slab::z_histogram;

/// Cached results kept per stage.
const CACHE_DEPTH: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Slabs,
    Walls,
    Openings,
    Zones,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::Slabs, Stage::Walls, Stage::Openings, Stage::Zones];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Slabs => "slabs",
            Stage::Walls => "walls",
            Stage::Openings => "openings",
            Stage::Zones => "zones",
        }
    }

    /// Stage whose result this one consumes directly.
    pub fn upstream(self) -> Option<Stage> {
        match self {
            Stage::Slabs => None,
            Stage::Walls => Some(Stage::Slabs),
            Stage::Openings | Stage::Zones => Some(Stage::Walls),
        }
    }

    /// Parameter names (calibration, input) the stage reads.
    fn params(self) -> (&'static [&'static str], &'static [&'static str]) {
        match self {
            Stage::Slabs => (
                &[
                    "dilution_factor",
                    "grid_coefficient",
                    "z_step",
                    "max_n_points_array",
                    "dilation_meters",
                    "erosion_meters",
                    "smoothing_factor",
                    "safety_margin",
                ],
                &["bfs_thickness", "tfs_thickness"],
            ),
            Stage::Walls => (
                &[
                    "grid_coefficient",
                    "threshold",
                    "kernel_cells",
                    "epsilon",
                    "angle_tolerance",
                    "min_overlap_fraction",
                    "z_section_boundaries",
                ],
                &[
                    "min_wall_length",
                    "min_wall_thickness",
                    "max_wall_thickness",
                    "exterior_walls_thickness",
                ],
            ),
            Stage::Openings => (
                &["grid_coefficient", "max10", "gap_fraction", "openings"],
                &["pc_resolution", "max_wall_thickness"],
            ),
            Stage::Zones => (&[], &["snapping_distance"]),
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Stage> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::UnknownStage(s.to_string()))
    }
}

/// Cache key of `stage` under `c`: hash of the parameters it reads, chained
/// with the key of its upstream stage.
pub fn stage_key(stage: Stage, c: &Config) -> String {
    let cal = serde_json::to_value(&c.calibration).expect("params serialize");
    let inp = serde_json::to_value(&c.input).expect("params serialize");
    let (ck, ik) = stage.params();
    let mut subset = BTreeMap::new();
    for k in ck {
        subset.insert(format!("calibration.{k}"), cal[*k].clone());
    }
    for k in ik {
        subset.insert(format!("input.{k}"), inp[*k].clone());
    }
    if stage == Stage::Zones {
        subset.insert("zone_names".to_string(), json!(c.zone_names));
    }
    let mut h = Sha256::new();
    h.update(stage.as_str());
    h.update(serde_json::to_string(&subset).expect("subset serializes"));
    if let Some(up) = stage.upstream() {
        h.update(stage_key(up, c));
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

struct Cache<T> {
    entries: VecDeque<(String, Arc<T>)>,
    ever_run: bool,
}

impl<T> Default for Cache<T> {
    fn default() -> Self {
        Cache {
            entries: VecDeque::new(),
            ever_run: false,
        }
    }
}

impl<T> Cache<T> {
    fn get(&self, key: &str) -> Option<Arc<T>> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.clone())
    }

    /// Inserts and returns the evicted key, if any.
    fn insert(&mut self, key: String, v: Arc<T>) -> Option<String> {
        self.ever_run = true;
        self.entries.push_front((key, v));
        if self.entries.len() > CACHE_DEPTH {
            self.entries.pop_back().map(|(k, _)| k)
        } else {
            None
        }
    }
}

/// Reply to a stage run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: Stage,
    pub key: String,
    pub cached: bool,
    pub elapsed_ms: f64,
    pub previews: Vec<String>,
    pub warnings: Vec<String>,
    pub result: Value,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageStatus {
    pub stage: Stage,
    /// `fresh`, `stale` or `not_run`.
    pub status: String,
    pub key: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionInfo {
    pub source: String,
    pub points: usize,
    pub bounds: Option<Aabb>,
    pub dilution: Dilution,
    pub params: Config,
    pub stages: Vec<StageStatus>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExportResult {
    pub ifc: String,
    pub counts: ElementCounts,
    pub warnings: Vec<String>,
    /// Parameters used, as a config file.
    pub config: String,
}

pub struct Session {
    cloud: Arc<PointCloud>,
    source: String,
    dilution: Dilution,
    config: Config,
    slabs: Cache<SlabStage>,
    walls: Cache<WallStage>,
    openings: Cache<OpeningStage>,
    zones: Cache<ZoneStage>,
    previews: BTreeMap<String, Vec<u8>>,
    /// Preview ids per (stage, key).
    preview_ids: BTreeMap<(Stage, String), Vec<String>>,
}

fn millis(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

impl Session {
    pub fn new(cloud: PointCloud, source: impl Into<String>, config: Config, dilution: Dilution) -> Result<Session> {
        config.validate()?;
        let cloud = match dilution {
            Dilution::None => cloud,
            Dilution::Spatial(d) => dilute_spatial(&cloud, d)?.0,
        };
        Ok(Session {
            cloud: Arc::new(cloud),
            source: source.into(),
            dilution,
            config,
            slabs: Cache::default(),
            walls: Cache::default(),
            openings: Cache::default(),
            zones: Cache::default(),
            previews: BTreeMap::new(),
            preview_ids: BTreeMap::new(),
        })
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn cloud(&self) -> &PointCloud {
        &self.cloud
    }

    /// Applies a parameter patch; nothing changes when it is rejected.
    pub fn update_params(&mut self, patch: &Value) -> Result<&Config> {
        self.config = self.config.merged(patch).map_err(Error::Params)?;
        Ok(&self.config)
    }

    fn has(&self, stage: Stage, key: &str) -> bool {
        match stage {
            Stage::Slabs => self.slabs.get(key).is_some(),
            Stage::Walls => self.walls.get(key).is_some(),
            Stage::Openings => self.openings.get(key).is_some(),
            Stage::Zones => self.zones.get(key).is_some(),
        }
    }

    fn ever_run(&self, stage: Stage) -> bool {
        match stage {
            Stage::Slabs => self.slabs.ever_run,
            Stage::Walls => self.walls.ever_run,
            Stage::Openings => self.openings.ever_run,
            Stage::Zones => self.zones.ever_run,
        }
    }

    pub fn status(&self, stage: Stage) -> StageStatus {
        let key = stage_key(stage, &self.config);
        let status = if self.has(stage, &key) {
            "fresh"
        } else if self.ever_run(stage) {
            "stale"
        } else {
            "not_run"
        };
        StageStatus {
            stage,
            status: status.to_string(),
            key,
        }
    }

    pub fn info(&self) -> SessionInfo {
        SessionInfo {
            source: self.source.clone(),
            points: self.cloud.count(),
            bounds: self.cloud.bounds(),
            dilution: self.dilution,
            params: self.config.clone(),
            stages: Stage::ALL.into_iter().map(|s| self.status(s)).collect(),
        }
    }

    pub fn preview(&self, id: &str) -> Option<&[u8]> {
        self.previews.get(id).map(Vec::as_slice)
    }

    /// Upstream result under the current parameters, or a prerequisite error.
    fn require(&self, stage: Stage) -> Result<()> {
        let Some(up) = stage.upstream() else {
            return Ok(());
        };
        if self.has(up, &stage_key(up, &self.config)) {
            return Ok(());
        }
        Err(Error::Prerequisite {
            stage: stage.as_str(),
            needs: up.as_str(),
            reason: if self.ever_run(up) {
                "parameters changed since it ran; run it again"
            } else {
                "it has not been run"
            },
        })
    }

    /// Runs one stage. Upstream stages must already have run with the
    /// current parameters.
    pub fn run_stage(&mut self, stage: Stage) -> Result<StageReport> {
        self.require(stage)?;
        let t = Instant::now();
        let c = self.config.clone();
        let key = stage_key(stage, &c);
        let cached = self.has(stage, &key);
        let slabs_key = stage_key(Stage::Slabs, &c);
        let walls_key = stage_key(Stage::Walls, &c);
        let (result, warnings) = match stage {
            Stage::Slabs => {
                let r = match self.slabs.get(&key) {
                    Some(r) => r,
                    None => {
                        let r = Arc::new(run_slabs(&self.cloud, &c).map_err(|e| e.in_stage("slabs"))?);
                        self.store_previews(stage, &key, self.render_slabs(&r)?);
                        if let Some(old) = self.slabs.insert(key.clone(), r.clone()) {
                            self.drop_previews(stage, &old);
                        }
                        r
                    }
                };
                (slab_summary(&r), Vec::new())
            }
            Stage::Walls => {
                let r = match self.walls.get(&key) {
                    Some(r) => r,
                    None => {
                        let s = self.slabs.get(&slabs_key).expect("checked by require");
                        let r = Arc::new(run_walls(&s, &c).map_err(|e| e.in_stage("walls"))?);
                        self.store_previews(stage, &key, render_walls(&r)?);
                        if let Some(old) = self.walls.insert(key.clone(), r.clone()) {
                            self.drop_previews(stage, &old);
                        }
                        r
                    }
                };
                (json!({ "walls": r.walls }), r.warnings.clone())
            }
            Stage::Openings => {
                let r = match self.openings.get(&key) {
                    Some(r) => r,
                    None => {
                        let s = self.slabs.get(&slabs_key).expect("checked by require");
                        let w = self.walls.get(&walls_key).expect("checked by require");
                        let r = Arc::new(run_openings(&s, &w, &c).map_err(|e| e.in_stage("openings"))?);
                        self.store_previews(stage, &key, render_openings(&s, &w, &r, &c)?);
                        if let Some(old) = self.openings.insert(key.clone(), r.clone()) {
                            self.drop_previews(stage, &old);
                        }
                        r
                    }
                };
                (json!({ "openings": r.openings }), Vec::new())
            }
            Stage::Zones => {
                let r = match self.zones.get(&key) {
                    Some(r) => r,
                    None => {
                        let s = self.slabs.get(&slabs_key).expect("checked by require");
                        let w = self.walls.get(&walls_key).expect("checked by require");
                        let r = Arc::new(run_zones(&s, &w, &c).map_err(|e| e.in_stage("zones"))?);
                        self.store_previews(stage, &key, render_zones(&w, &r)?);
                        if let Some(old) = self.zones.insert(key.clone(), r.clone()) {
                            self.drop_previews(stage, &old);
                        }
                        r
                    }
                };
                let zones: Vec<Value> = r
                    .zones
                    .iter()
                    .map(|z| json!({"name": z.name, "storey": z.storey_index, "area": z.area, "height": z.height, "boundary": z.boundary}))
                    .collect();
                (json!({ "zones": zones }), r.warnings.clone())
            }
        };
        Ok(StageReport {
            stage,
            previews: self.preview_ids.get(&(stage, key.clone())).cloned().unwrap_or_default(),
            key,
            cached,
            elapsed_ms: millis(t),
            warnings,
            result,
        })
    }

    fn store_previews(&mut self, stage: Stage, key: &str, images: Vec<(String, Vec<u8>)>) {
        let mut ids = Vec::new();
        for (name, png) in images {
            let id = format!("{stage}-{}-{name}", &key[..12]);
            self.previews.insert(id.clone(), png);
            ids.push(id);
        }
        self.preview_ids.insert((stage, key.to_string()), ids);
    }

    fn drop_previews(&mut self, stage: Stage, key: &str) {
        for id in self.preview_ids.remove(&(stage, key.to_string())).unwrap_or_default() {
            self.previews.remove(&id);
        }
    }

    fn render_slabs(&self, r: &SlabStage) -> Result<Vec<(String, Vec<u8>)>> {
        let thinned = self.cloud.every_nth(self.config.calibration.dilution_factor);
        let hist = z_histogram(&thinned, self.config.calibration.z_step)?;
        Ok(vec![
            ("histogram".to_string(), preview::slab_histogram(&hist, &r.candidates)?),
            ("footprint".to_string(), preview::slab_footprints(thinned.points(), &r.slabs)?),
        ])
    }

    /// Runs whatever is missing and writes the model to a string.
    pub fn export(&mut self, opts: &RunOptions) -> Result<ExportResult> {
        let mut warnings = Vec::new();
        for s in Stage::ALL {
            warnings.extend(self.run_stage(s)?.warnings);
        }
        let c = &self.config;
        let slabs = self.slabs.get(&stage_key(Stage::Slabs, c)).expect("just ran");
        let walls = self.walls.get(&stage_key(Stage::Walls, c)).expect("just ran");
        let openings = self.openings.get(&stage_key(Stage::Openings, c)).expect("just ran");
        let zones = self.zones.get(&stage_key(Stage::Zones, c)).expect("just ran");
        let elements = BuildingElements {
            slabs: slabs.slabs.clone(),
            storeys: slabs.levels(),
            walls: walls.walls.clone(),
            openings: openings.openings.clone(),
            zones: zones.zones.clone(),
        };
        let model = elements
            .build(&c.input.meta(), &opts.build_options("model.ifc"))
            .map_err(|e| e.in_stage("ifc"))?;
        Ok(ExportResult {
            ifc: to_step_string(&model),
            counts: ElementCounts::of(&elements, &model),
            warnings,
            config: c.to_toml_string(),
        })
    }
}

fn slab_summary(r: &SlabStage) -> Value {
    let candidates: Vec<Value> = r
        .candidates
        .iter()
        .map(|s| json!({"z_low": s.z_low, "z_high": s.z_high, "z": s.z, "points": s.point_count}))
        .collect();
    let slabs: Vec<Value> = r
        .slabs
        .iter()
        .map(|s| json!({"z_bottom": s.z_bottom, "thickness": s.thickness, "area": s.footprint.area(), "source": s.source}))
        .collect();
    let storeys: Vec<Value> = r
        .storeys
        .iter()
        .map(|s| {
            json!({"index": s.index, "z_floor_top": s.z_floor_top, "z_ceiling_bottom": s.z_ceiling_bottom,
                   "height": s.height, "points": s.points.count()})
        })
        .collect();
    json!({ "candidates": candidates, "slabs": slabs, "storeys": storeys })
}

fn render_walls(r: &WallStage) -> Result<Vec<(String, Vec<u8>)>> {
    r.storeys
        .iter()
        .map(|sw| Ok((format!("storey{}", sw.storey_index), preview::storey_walls(sw)?)))
        .collect()
}

fn render_openings(s: &SlabStage, w: &WallStage, r: &OpeningStage, c: &Config) -> Result<Vec<(String, Vec<u8>)>> {
    let cell = c.calibration.cell_size();
    let mut out = Vec::new();
    for wo in &r.walls {
        let Some(wall) = w.walls.iter().find(|x| x.id == wo.wall_ref) else {
            continue;
        };
        let Some(st) = s.storeys.iter().find(|x| x.index == wall.storey_index) else {
            continue;
        };
        let local = localize_points(st.points.points(), wall, st.z_floor_top, cell);
        out.push((format!("wall{}", wall.id), preview::wall_openings(&local, wall, wo)?));
    }
    Ok(out)
}

fn render_zones(w: &WallStage, r: &ZoneStage) -> Result<Vec<(String, Vec<u8>)>> {
    r.storeys
        .iter()
        .map(|z| {
            let walls: Vec<_> = w.walls.iter().filter(|x| x.storey_index == z.storey_index).cloned().collect();
            Ok((format!("storey{}", z.storey_index), preview::storey_zones(z, &walls)?))
        })
        .collect()
}
