//! Python bindings. Results cross the boundary as JSON text.

use std::path::Path;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use pointbim::cloud_io::{load_cloud, write_xyz};
use pointbim::config::Config;
use pointbim::eval::{deviation, ModelSurfaces};
use pointbim::ifc::{parse_step, validate_step_str};
use pointbim::pipeline::{run_pipeline, Dilution, RunOptions};
use pointbim::synth::{self, BuildingSpec};
use pointbim::Error;

fn py_err(e: Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn convert_impl(
    cloud: &str,
    out: &str,
    config: Option<&str>,
    d_min: Option<f64>,
    seed: Option<u64>,
    deterministic: bool,
) -> pointbim::Result<String> {
    let cfg = match config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let opts = RunOptions {
        dilution: d_min.map_or(Dilution::None, Dilution::Spatial),
        seed,
        deterministic,
    };
    let m = run_pipeline(Path::new(cloud), &cfg, Path::new(out), &opts)?;
    Ok(serde_json::to_string(&m).expect("manifest serializes"))
}

fn synth_impl(spec: &str, out: &str) -> pointbim::Result<String> {
    let spec = match spec {
        "orthogonal" => synth::orthogonal_two_storey(),
        "wing" => synth::wing_two_storey(),
        path => BuildingSpec::load(path)?,
    };
    let (cloud, truth) = synth::generate(&spec)?;
    write_xyz(&cloud, out)?;
    Ok(serde_json::to_string(&truth).expect("truth serializes"))
}

fn evaluate_impl(cloud: &str, ifc: &str) -> pointbim::Result<String> {
    let cloud = load_cloud(cloud)?;
    let text = std::fs::read_to_string(ifc).map_err(|e| Error::io(ifc, e))?;
    let parsed = parse_step(&text).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let stats = deviation(cloud.points(), &ModelSurfaces::from_parsed(&parsed)?)?;
    Ok(serde_json::to_string(&stats).expect("stats serialize"))
}

fn validate_impl(ifc: &str) -> pointbim::Result<(bool, Vec<String>)> {
    let text = std::fs::read_to_string(ifc).map_err(|e| Error::io(ifc, e))?;
    let r = validate_step_str(&text);
    Ok((r.is_valid(), r.violations.iter().map(|v| format!("{}: {}", v.kind, v.message)).collect()))
}

/// Reconstructs `cloud` into the IFC file `out`; returns the run manifest.
/// Spatial dilution is applied only when `d_min` is given.
#[pyfunction]
#[pyo3(signature = (cloud, out, config=None, d_min=None, seed=None, deterministic=true))]
fn convert(
    cloud: &str,
    out: &str,
    config: Option<&str>,
    d_min: Option<f64>,
    seed: Option<u64>,
    deterministic: bool,
) -> PyResult<String> {
    convert_impl(cloud, out, config, d_min, seed, deterministic).map_err(py_err)
}

/// Writes a synthetic cloud; `spec` is `orthogonal`, `wing` or a TOML path.
/// Returns the ground truth.
#[pyfunction]
fn synth_cloud(spec: &str, out: &str) -> PyResult<String> {
    synth_impl(spec, out).map_err(py_err)
}

/// Point-to-model distance statistics.
#[pyfunction]
fn evaluate(cloud: &str, ifc: &str) -> PyResult<String> {
    evaluate_impl(cloud, ifc).map_err(py_err)
}

#[pyfunction]
fn validate_ifc(ifc: &str) -> PyResult<(bool, Vec<String>)> {
    validate_impl(ifc).map_err(py_err)
}

#[pyfunction]
fn default_config() -> String {
    Config::default().to_toml_string()
}

#[pymodule]
fn pointbim_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(convert, m)?)?;
    m.add_function(wrap_pyfunction!(synth_cloud, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(validate_ifc, m)?)?;
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn helpers_round_trip() {
        let dir = std::env::temp_dir().join(format!("pointbim-py-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let xyz = dir.join("o.xyz");
        let ifc = dir.join("o.ifc");
        let (xyz_s, ifc_s) = (xyz.to_str().unwrap(), ifc.to_str().unwrap());
        let truth: serde_json::Value = serde_json::from_str(&synth_impl("orthogonal", xyz_s).unwrap()).unwrap();
        assert_eq!(truth["walls"].as_array().unwrap().len(), 10);
        let m: serde_json::Value =
            serde_json::from_str(&convert_impl(xyz_s, ifc_s, None, None, Some(1), true).unwrap()).unwrap();
        assert_eq!(m["counts"]["walls"], 10);
        let (ok, v) = validate_impl(ifc_s).unwrap();
        assert!(ok, "{v:?}");
        let s: serde_json::Value = serde_json::from_str(&evaluate_impl(xyz_s, ifc_s).unwrap()).unwrap();
        assert!(s["p95"].as_f64().unwrap() < 0.01);
        assert!(synth_impl("nowhere.toml", xyz_s).is_err());
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
