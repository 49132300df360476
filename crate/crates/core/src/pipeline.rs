//! Full reconstruction run: load, slabs, storeys, walls, openings, zones, IFC.

use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cloud_io::{dilute_spatial, load_cloud, PointCloud};
use crate::config::Config;
use crate::error::{Error, Result};
use crate::ifc::{self, BuildOptions, BuildingElements, GuidMode, IfcModel, StoreyLevel};
use crate::opening::{detect_openings, localize_points, Opening, OpeningKind, WallOpenings};
use crate::slab::{detect_slabs, split_to_storeys, Slab, SlabParams, Storey, SurfaceCandidate};
use crate::wall::{detect_walls, StoreyWalls, Wall, WallParams};
use crate::zone::{detect_zones, StoreyZones, Zone};

pub fn slab_params(c: &Config) -> SlabParams {
    SlabParams {
        z_step: c.calibration.z_step,
        ratio: c.calibration.max_n_points_array,
        bfs_thickness: c.input.bfs_thickness,
        tfs_thickness: c.input.tfs_thickness,
        cell_size: c.calibration.cell_size(),
        dilation_m: c.calibration.dilation_meters,
        erosion_m: c.calibration.erosion_meters,
        smoothing_eps: c.calibration.smoothing_factor,
    }
}

pub fn wall_params(c: &Config) -> WallParams {
    WallParams {
        cell_size: c.calibration.cell_size(),
        threshold: c.calibration.threshold,
        kernel_cells: c.calibration.kernel_cells,
        epsilon: c.calibration.epsilon,
        angle_tolerance: c.calibration.angle_tolerance,
        min_wall_length: c.input.min_wall_length,
        min_thickness: c.input.min_wall_thickness,
        max_thickness: c.input.max_wall_thickness,
        exterior_thickness: c.input.exterior_walls_thickness,
        min_overlap_fraction: c.calibration.min_overlap_fraction,
        z_section: c.calibration.z_section_boundaries,
    }
}

/// Histogram bin along and across walls for opening search.
pub fn opening_bin(c: &Config) -> f64 {
    2.0 * c.input.pc_resolution
}

#[derive(Debug, Clone)]
pub struct SlabStage {
    pub candidates: Vec<SurfaceCandidate>,
    pub slabs: Vec<Slab>,
    pub storeys: Vec<Storey>,
}

impl SlabStage {
    pub fn levels(&self) -> Vec<StoreyLevel> {
        self.storeys.iter().map(StoreyLevel::from).collect()
    }
}

#[derive(Debug, Clone)]
pub struct WallStage {
    pub storeys: Vec<StoreyWalls>,
    /// All walls, ids equal to positions.
    pub walls: Vec<Wall>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct OpeningStage {
    pub walls: Vec<WallOpenings>,
    pub openings: Vec<Opening>,
}

#[derive(Debug, Clone)]
pub struct ZoneStage {
    pub storeys: Vec<StoreyZones>,
    pub zones: Vec<Zone>,
    pub warnings: Vec<String>,
}

/// Slabs from a row-subsampled copy (every `dilution_factor`-th point), then
/// storeys from the full cloud.
pub fn run_slabs(cloud: &PointCloud, c: &Config) -> Result<SlabStage> {
    let thinned = cloud.every_nth(c.calibration.dilution_factor);
    let (candidates, slabs) = detect_slabs(&thinned, &slab_params(c))?;
    let storeys = split_to_storeys(cloud, &slabs, c.calibration.safety_margin)?;
    Ok(SlabStage {
        candidates,
        slabs,
        storeys,
    })
}

pub fn run_walls(slabs: &SlabStage, c: &Config) -> Result<WallStage> {
    let p = wall_params(c);
    let per: Vec<Result<StoreyWalls>> = slabs.storeys.par_iter().map(|s| detect_walls(s, &p)).collect();
    let mut storeys = Vec::new();
    let mut walls = Vec::new();
    let mut warnings = Vec::new();
    for (s, r) in slabs.storeys.iter().zip(per) {
        let mut sw = match r {
            Ok(sw) => sw,
            Err(Error::EmptySlice) => {
                warnings.push(format!("storey {}: no points in the wall slice", s.index));
                continue;
            }
            Err(e) => return Err(e),
        };
        if sw.walls.is_empty() {
            warnings.push(format!("storey {}: no walls found", s.index));
        }
        for w in &mut sw.walls {
            w.id = walls.len();
            walls.push(w.clone());
        }
        storeys.push(sw);
    }
    Ok(WallStage {
        storeys,
        walls,
        warnings,
    })
}

pub fn run_openings(slabs: &SlabStage, walls: &WallStage, c: &Config) -> Result<OpeningStage> {
    let h = c.calibration.heuristics();
    let bin = opening_bin(c);
    let cell = c.calibration.cell_size();
    let per: Vec<WallOpenings> = walls
        .walls
        .par_iter()
        .map(|w| {
            let st = slabs
                .storeys
                .iter()
                .find(|s| s.index == w.storey_index)
                .ok_or_else(|| Error::InvalidInput(format!("wall {} has no storey", w.id)))?;
            let local = localize_points(st.points.points(), w, st.z_floor_top, cell);
            detect_openings(&local, w, &h, bin, c.input.max_wall_thickness)
        })
        .collect::<Result<_>>()?;
    let openings = per.iter().flat_map(|r| r.openings.iter().cloned()).collect();
    Ok(OpeningStage { walls: per, openings })
}

pub fn run_zones(slabs: &SlabStage, walls: &WallStage, c: &Config) -> Result<ZoneStage> {
    let mut storeys = Vec::new();
    let mut zones = Vec::new();
    let mut warnings = Vec::new();
    for s in &slabs.storeys {
        let ws: Vec<Wall> = walls.walls.iter().filter(|w| w.storey_index == s.index).cloned().collect();
        let z = detect_zones(&ws, s.index, s.height, c.input.snapping_distance, &c.zone_names)?;
        zones.extend(z.zones.iter().cloned());
        warnings.extend(z.warnings.iter().cloned());
        storeys.push(z);
    }
    Ok(ZoneStage {
        storeys,
        zones,
        warnings,
    })
}

/// How the cloud is thinned before anything else.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "d_min")]
pub enum Dilution {
    None,
    /// Minimum point distance in metres.
    Spatial(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub dilution: Dilution,
    pub seed: Option<u64>,
    /// Zero timestamps; GUIDs seeded with `seed` or 0.
    pub deterministic: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            dilution: Dilution::None,
            seed: None,
            deterministic: true,
        }
    }
}

impl RunOptions {
    pub fn build_options(&self, file_name: &str) -> BuildOptions {
        let guids = match (self.seed, self.deterministic) {
            (Some(s), _) => GuidMode::Seeded(s),
            (None, true) => GuidMode::Seeded(0),
            (None, false) => GuidMode::Random,
        };
        BuildOptions {
            guids,
            deterministic: self.deterministic,
            file_name: file_name.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElementCounts {
    pub slabs: usize,
    pub storeys: usize,
    pub walls: usize,
    pub openings: usize,
    pub doors: usize,
    pub windows: usize,
    pub zones: usize,
    /// Slabs, walls, openings and spaces.
    pub elements: usize,
    pub ifc_entities: usize,
}

impl ElementCounts {
    pub fn of(e: &BuildingElements, m: &IfcModel) -> ElementCounts {
        let kind = |k| e.openings.iter().filter(|o| o.kind == k).count();
        ElementCounts {
            slabs: e.slabs.len(),
            storeys: e.storeys.len(),
            walls: e.walls.len(),
            openings: e.openings.len(),
            doors: kind(OpeningKind::Door),
            windows: kind(OpeningKind::Window),
            zones: e.zones.len(),
            elements: ifc::element_count(m),
            ifc_entities: m.entities.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputInfo {
    pub path: String,
    pub sha256: String,
    pub points: usize,
    /// After spatial dilution.
    pub points_used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub input: InputInfo,
    pub output: String,
    pub params: Config,
    pub options: RunOptions,
    pub timings: Vec<StageTiming>,
    pub total_ms: f64,
    pub points_per_minute: f64,
    pub counts: ElementCounts,
    pub warnings: Vec<String>,
}

impl RunManifest {
    /// Copy with every timing-dependent field zeroed.
    pub fn without_timings(&self) -> RunManifest {
        let mut m = self.clone();
        for t in &mut m.timings {
            t.ms = 0.0;
        }
        m.total_ms = 0.0;
        m.points_per_minute = 0.0;
        m
    }

    pub fn stage_ms(&self, stage: &str) -> Option<f64> {
        self.timings.iter().find(|t| t.stage == stage).map(|t| t.ms)
    }
}

/// Lower-case hex SHA-256 of a file.
pub fn file_sha256(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let mut f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// `model.ifc` -> `model.manifest.json`.
pub fn manifest_path(ifc_path: &Path) -> PathBuf {
    ifc_path.with_extension("manifest.json")
}

struct Clock {
    timings: Vec<StageTiming>,
}

impl Clock {
    fn time<T>(&mut self, stage: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let t = Instant::now();
        let r = f().map_err(|e| e.in_stage(stage));
        self.timings.push(StageTiming {
            stage: stage.to_string(),
            ms: t.elapsed().as_secs_f64() * 1e3,
        });
        log::debug!("stage {stage}: {:.1} ms", t.elapsed().as_secs_f64() * 1e3);
        r
    }
}

/// Everything one reconstruction produced.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub slabs: SlabStage,
    pub walls: WallStage,
    pub openings: OpeningStage,
    pub zones: ZoneStage,
    pub elements: BuildingElements,
    pub warnings: Vec<String>,
}

fn reconstruct_timed(cloud: &PointCloud, c: &Config, clock: &mut Clock) -> Result<Reconstruction> {
    let slabs = clock.time("slabs", || run_slabs(cloud, c))?;
    let walls = clock.time("walls", || run_walls(&slabs, c))?;
    let openings = clock.time("openings", || run_openings(&slabs, &walls, c))?;
    let zones = clock.time("zones", || run_zones(&slabs, &walls, c))?;
    let elements = BuildingElements {
        slabs: slabs.slabs.clone(),
        storeys: slabs.levels(),
        walls: walls.walls.clone(),
        openings: openings.openings.clone(),
        zones: zones.zones.clone(),
    };
    let mut warnings = walls.warnings.clone();
    warnings.extend(zones.warnings.iter().cloned());
    Ok(Reconstruction {
        slabs,
        walls,
        openings,
        zones,
        elements,
        warnings,
    })
}

/// All detection stages on an in-memory cloud.
pub fn reconstruct(cloud: &PointCloud, c: &Config) -> Result<Reconstruction> {
    reconstruct_timed(cloud, c, &mut Clock { timings: Vec::new() })
}

/// Reads `cloud_path`, reconstructs, writes the IFC file to `out` and the
/// manifest beside it.
pub fn run_pipeline(cloud_path: &Path, c: &Config, out: &Path, opts: &RunOptions) -> Result<RunManifest> {
    c.validate()?;
    let start = Instant::now();
    let mut clock = Clock { timings: Vec::new() };
    let (cloud, sha) = clock.time("load", || Ok((load_cloud(cloud_path)?, file_sha256(cloud_path)?)))?;
    let points = cloud.count();
    let cloud = match opts.dilution {
        Dilution::None => cloud,
        Dilution::Spatial(d) => clock.time("dilution", || Ok(dilute_spatial(&cloud, d)?.0))?,
    };
    let rec = reconstruct_timed(&cloud, c, &mut clock)?;
    let file_name = out.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let model = clock.time("ifc", || {
        let m = rec.elements.build(&c.input.meta(), &opts.build_options(&file_name))?;
        ifc::write_step(&m, out)?;
        Ok(m)
    })?;
    let total_ms = start.elapsed().as_secs_f64() * 1e3;
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        input: InputInfo {
            path: cloud_path.display().to_string(),
            sha256: sha,
            points,
            points_used: cloud.count(),
        },
        output: out.display().to_string(),
        params: c.clone(),
        options: opts.clone(),
        timings: clock.timings,
        total_ms,
        points_per_minute: if total_ms > 0.0 { points as f64 / (total_ms / 60_000.0) } else { 0.0 },
        counts: ElementCounts::of(&rec.elements, &model),
        warnings: rec.warnings,
    };
    let mpath = manifest_path(out);
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&mpath, json + "\n").map_err(|e| Error::io(&mpath, e))?;
    for w in &manifest.warnings {
        log::warn!("{w}");
    }
    Ok(manifest)
}
