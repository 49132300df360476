//! Subcommands of the `pointbim` binary.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use pointbim::calibration::Session;
use pointbim::cloud_io::{load_cloud, write_xyz};
use pointbim::config::Config;
use pointbim::error::{Error, Result};
use pointbim::eval::{deviation, write_deviation_csv, write_heatmap_png, ModelSurfaces};
use pointbim::ifc::parse_step;
use pointbim::pipeline::{run_pipeline, Dilution, RunOptions};
use pointbim::synth::{self, BuildingSpec};

#[derive(Debug, Parser)]
#[command(name = "pointbim", version, about = "Point cloud to IFC reconstruction")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Reconstruct a cloud and write an IFC file plus a run manifest.
    Convert {
        cloud: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Seed for GUIDs; implies reproducible output.
        #[arg(long)]
        seed: Option<u64>,
        /// Zero timestamps and derive GUIDs from the seed (0 if none).
        #[arg(long)]
        deterministic: bool,
        #[command(flatten)]
        dilution: DilutionArgs,
    },
    /// Serve the calibration API on 127.0.0.1.
    Calibrate {
        cloud: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[command(flatten)]
        dilution: DilutionArgs,
    },
    /// Generate a synthetic cloud from a TOML building spec, or from one of
    /// the built-in buildings `orthogonal` and `wing`.
    Synth {
        spec: String,
        #[arg(long)]
        out: PathBuf,
        /// Where to write the ground truth JSON; defaults beside the cloud.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Distance from every cloud point to the model surfaces.
    Eval {
        cloud: PathBuf,
        ifc: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Plan heat map PNG.
        #[arg(long)]
        png: Option<PathBuf>,
        /// Heat map pixel size in metres.
        #[arg(long, default_value_t = 0.05)]
        pixel: f64,
    },
}

/// Spatial thinning before reconstruction; one of the two must be given.
#[derive(Debug, Clone, Args)]
#[group(required = true, multiple = false)]
pub struct DilutionArgs {
    /// Keep points at least this far apart (metres).
    #[arg(long)]
    pub d_min: Option<f64>,
    /// Use every point.
    #[arg(long)]
    pub no_spatial_dilution: bool,
}

impl DilutionArgs {
    pub fn dilution(&self) -> Dilution {
        match self.d_min {
            Some(d) => Dilution::Spatial(d),
            None => Dilution::None,
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<Config> {
    match path {
        Some(p) => Config::load(p),
        None => Ok(Config::default()),
    }
}

pub fn convert(
    cloud: &Path,
    config: Option<&Path>,
    out: &Path,
    seed: Option<u64>,
    deterministic: bool,
    dilution: Dilution,
) -> Result<()> {
    let cfg = load_config(config)?;
    let opts = RunOptions {
        dilution,
        seed,
        deterministic: deterministic || seed.is_some(),
    };
    let m = run_pipeline(cloud, &cfg, out, &opts)?;
    println!(
        "{}: {} walls, {} openings, {} zones, {} storeys in {:.1} s ({:.0} points/min)",
        out.display(),
        m.counts.walls,
        m.counts.openings,
        m.counts.zones,
        m.counts.storeys,
        m.total_ms / 1e3,
        m.points_per_minute
    );
    Ok(())
}

pub fn synth_cloud(spec: &str, out: &Path, truth: Option<&Path>) -> Result<()> {
    let spec = match spec {
        "orthogonal" => synth::orthogonal_two_storey(),
        "wing" => synth::wing_two_storey(),
        path => BuildingSpec::load(path)?,
    };
    let (cloud, gt) = synth::generate(&spec)?;
    write_xyz(&cloud, out)?;
    let tpath = truth.map(Path::to_path_buf).unwrap_or_else(|| out.with_extension("truth.json"));
    let text = serde_json::to_string_pretty(&gt).expect("truth serializes");
    std::fs::write(&tpath, text + "\n").map_err(|e| Error::io(&tpath, e))?;
    println!("{}: {} points; truth in {}", out.display(), cloud.count(), tpath.display());
    Ok(())
}

pub fn eval(cloud: &Path, ifc: &Path, out: &Path, png: Option<&Path>, pixel: f64) -> Result<()> {
    let cloud = load_cloud(cloud)?;
    let text = std::fs::read_to_string(ifc).map_err(|e| Error::io(ifc, e))?;
    let parsed = parse_step(&text).map_err(|e| Error::InvalidInput(format!("{}: {e}", ifc.display())))?;
    let model = ModelSurfaces::from_parsed(&parsed)?;
    let stats = deviation(cloud.points(), &model)?;
    write_deviation_csv(cloud.points(), &stats.distances, out)?;
    if let Some(p) = png {
        write_heatmap_png(cloud.points(), &stats.distances, pixel, p)?;
    }
    let summary = json!({ "stats": stats, "skipped_voids": model.skipped_voids });
    println!("{}", serde_json::to_string_pretty(&summary).expect("stats serialize"));
    Ok(())
}

pub fn calibrate(cloud: &Path, config: Option<&Path>, port: u16, dilution: Dilution) -> Result<()> {
    let cfg = load_config(config)?;
    let pc = load_cloud(cloud)?;
    let session = Session::new(pc, cloud.display().to_string(), cfg, dilution)?;
    let rt = tokio::runtime::Runtime::new().map_err(|e| Error::InvalidInput(format!("runtime: {e}")))?;
    rt.block_on(crate::server::serve(session, port))
        .map_err(|e| Error::InvalidInput(format!("server: {e}")))
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Convert {
            cloud,
            config,
            out,
            seed,
            deterministic,
            dilution,
        } => convert(&cloud, config.as_deref(), &out, seed, deterministic, dilution.dilution()),
        Command::Calibrate {
            cloud,
            config,
            port,
            dilution,
        } => calibrate(&cloud, config.as_deref(), port, dilution.dilution()),
        Command::Synth { spec, out, truth } => synth_cloud(&spec, &out, truth.as_deref()),
        Command::Eval {
            cloud,
            ifc,
            out,
            png,
            pixel,
        } => eval(&cloud, &ifc, &out, png.as_deref(), pixel),
    }
}
