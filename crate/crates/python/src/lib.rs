//! Python bindings: scenario runs, motion estimation, resolution curves and
//! point-cloud metrics.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use cylsar::container::{load_cube, save_cube, sha256_file, Provenance};
use cylsar::egomotion::{analyse_motion, MotionEstimate, MotionOptions};
use cylsar::pointcloud::{chamfer as cd, modified_hausdorff as mhd, Dims, PointCloud};
use cylsar::resolution::{analytic_beamwidth, fov_sweep, Propagation};
use cylsar::scenario::{run_pipeline, MotionSource, Scenario};
use cylsar::scene::RadiationPattern;
use cylsar::{special, Error, Vec3};

fn to_py(e: Error) -> PyErr {
    match e.exit_code() {
        4 => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

#[pyfunction]
fn bessel_j0(x: f64) -> f64 {
    special::bessel_j0(x)
}

/// Closed-form half-power azimuth beamwidth in degrees.
#[pyfunction]
#[pyo3(signature = (radius_m = 0.08, wavelength_m = 0.0038))]
fn beamwidth_deg(radius_m: f64, wavelength_m: f64) -> f64 {
    analytic_beamwidth(radius_m, wavelength_m).to_degrees()
}

/// `[(fov_deg, beamwidth_deg), ...]` for the windowed aperture.
#[pyfunction]
#[pyo3(signature = (fovs_deg, pattern = "cosine", round_trip = false, radius_m = 0.08, wavelength_m = 0.0038))]
fn fov_sweep_deg(
    py: Python<'_>,
    fovs_deg: Vec<f64>,
    pattern: &str,
    round_trip: bool,
    radius_m: f64,
    wavelength_m: f64,
) -> PyResult<Vec<(f64, f64)>> {
    let pattern = match pattern {
        "cosine" => RadiationPattern::default(),
        "omni" => RadiationPattern::omni(),
        other => return Err(PyValueError::new_err(format!("unknown pattern '{other}'"))),
    };
    let prop = if round_trip { Propagation::RoundTrip } else { Propagation::OneWay };
    let fovs: Vec<f64> = fovs_deg.iter().map(|d| d.to_radians()).collect();
    let rows = py
        .detach(|| fov_sweep(radius_m, wavelength_m, &pattern, &fovs, prop))
        .map_err(to_py)?;
    Ok(rows.into_iter().map(|(f, w)| (f.to_degrees(), w.to_degrees())).collect())
}

/// Simulates a scenario file into a cube file; returns the cube's SHA-256.
#[pyfunction]
fn simulate(py: Python<'_>, scenario: PathBuf, out: PathBuf) -> PyResult<String> {
    py.detach(|| {
        let s = Scenario::load(&scenario)?;
        let cube = s.simulate()?;
        let mut prov = Provenance::new(&s.cfg, s.seed);
        prov.scenario_sha256 = Some(sha256_file(&scenario)?);
        save_cube(&out, &cube, &prov)?;
        sha256_file(&out)
    })
    .map_err(to_py)
}

fn estimate_dict(py: Python<'_>, e: &MotionEstimate) -> PyResult<Py<PyAny>> {
    let d = pyo3::types::PyDict::new(py);
    d.set_item("speed_m_s", e.speed_m_s)?;
    d.set_item("heading_rad", e.heading_rad)?;
    d.set_item("inliers", e.inlier_count)?;
    d.set_item("peaks", e.peak_count)?;
    d.set_item("residual_rms_hz", e.residual_rms_hz)?;
    d.set_item("degenerate", e.degenerate)?;
    d.set_item("low_confidence", e.low_confidence)?;
    Ok(d.into_any().unbind())
}

/// Speed and heading estimated from a cube file.
#[pyfunction]
#[pyo3(signature = (cube, seed = None))]
fn estimate_motion(py: Python<'_>, cube: PathBuf, seed: Option<u64>) -> PyResult<Py<PyAny>> {
    let e = py
        .detach(|| {
            let cube = load_cube(&cube)?;
            let mut opts = MotionOptions::for_config(&cube.cfg);
            opts.ransac.seed = seed.unwrap_or(cube.seed);
            analyse_motion(&cube, &opts).map(|a| a.estimate)
        })
        .map_err(to_py)?;
    estimate_dict(py, &e)
}

/// Runs the full pipeline on a scenario file and returns its text report.
#[pyfunction]
#[pyo3(signature = (scenario, motion_source = "estimated"))]
fn pipeline(py: Python<'_>, scenario: PathBuf, motion_source: &str) -> PyResult<String> {
    let source = match motion_source {
        "estimated" => MotionSource::Estimated,
        "ground-truth" => MotionSource::GroundTruth,
        "none" => MotionSource::Zero,
        other => return Err(PyValueError::new_err(format!("unknown motion source '{other}'"))),
    };
    py.detach(|| {
        let s = Scenario::load(&scenario)?;
        Ok(run_pipeline(&s, source)?.report(&s))
    })
    .map_err(to_py)
}

fn cloud(points: &[(f64, f64, f64)]) -> PyResult<PointCloud> {
    let pos: Vec<Vec3> = points.iter().map(|&(x, y, z)| Vec3::new(x, y, z)).collect();
    PointCloud::from_positions(&pos).map_err(to_py)
}

fn dims(planar: bool) -> Dims {
    if planar {
        Dims::D2
    } else {
        Dims::D3
    }
}

#[pyfunction]
#[pyo3(signature = (a, b, planar = false))]
fn chamfer(a: Vec<(f64, f64, f64)>, b: Vec<(f64, f64, f64)>, planar: bool) -> PyResult<f64> {
    cd(&cloud(&a)?, &cloud(&b)?, dims(planar)).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (a, b, planar = false))]
fn modified_hausdorff(a: Vec<(f64, f64, f64)>, b: Vec<(f64, f64, f64)>, planar: bool) -> PyResult<f64> {
    mhd(&cloud(&a)?, &cloud(&b)?, dims(planar)).map_err(to_py)
}

/// Points of an ASCII PLY as `(x, y, z, intensity)` tuples.
#[pyfunction]
fn load_ply(path: PathBuf) -> PyResult<Vec<(f64, f64, f64, f64)>> {
    let c = PointCloud::load_ply(&path).map_err(to_py)?;
    Ok(c.points.iter().map(|p| (p.x, p.y, p.z, p.intensity)).collect())
}

#[pymodule]
fn cylsar_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(bessel_j0, m)?)?;
    m.add_function(wrap_pyfunction!(beamwidth_deg, m)?)?;
    m.add_function(wrap_pyfunction!(fov_sweep_deg, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_motion, m)?)?;
    m.add_function(wrap_pyfunction!(pipeline, m)?)?;
    m.add_function(wrap_pyfunction!(chamfer, m)?)?;
    m.add_function(wrap_pyfunction!(modified_hausdorff, m)?)?;
    m.add_function(wrap_pyfunction!(load_ply, m)?)?;
    Ok(())
}
