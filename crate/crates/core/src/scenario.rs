//! Scenario files and the end-to-end pipeline.
//!
//! A scenario is a TOML document:
//!
//! ```toml
//! schema = "cylsar-scenario/1"
//! seed = 7                 # required
//! noise_std = 0.05
//! outputs = ["cube", "heatmap", "pointcloud", "report"]
//!
//! [radar]                  # optional, RadarConfig keys in SI units / radians
//! chirps_per_rotation = 1200
//!
//! [trajectory]
//! speed_m_s = 0.4
//! heading_deg = 30
//!
//! [pattern]                # optional
//! model = "cosine_power"   # or "omni"
//! beamwidth_deg = 30
//! cutoff_deg = 90
//!
//! [grid]                   # optional, angles in degrees
//! azimuth_bins = 512
//!
//! [cfar]                   # optional, CfarParams keys
//! pfa = 1e-4
//!
//! [[reflector]]
//! range_m = 2.0
//! azimuth_deg = 40
//! elevation_deg = 0
//! amplitude = 1.0
//! ```

use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::egomotion::{analyse_motion, MotionAnalysis, MotionEstimate, MotionOptions};
use crate::imaging::{beamform_fast, Heatmap3D, ImagingGrid, ImagingOptions};
use crate::pointcloud::{cfar_extract_with, chamfer, modified_hausdorff, CfarParams, Dims, PointCloud};
use crate::radar::RadarConfig;
use crate::scene::{simulate, PatternModel, RadiationPattern, RawCube, Reflector, Trajectory};
use crate::{Error, Result};

pub const SCENARIO_SCHEMA: &str = "cylsar-scenario/1";

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    schema: String,
    seed: u64,
    #[serde(default)]
    noise_std: f64,
    #[serde(default)]
    outputs: Vec<String>,
    #[serde(default)]
    radar: RadarConfig,
    #[serde(default)]
    trajectory: TrajectoryFile,
    #[serde(default)]
    pattern: PatternFile,
    #[serde(default)]
    grid: GridFile,
    #[serde(default)]
    cfar: Option<CfarParams>,
    #[serde(default)]
    reflector: Vec<ReflectorFile>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct TrajectoryFile {
    #[serde(default)]
    speed_m_s: f64,
    #[serde(default)]
    heading_deg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
struct PatternFile {
    model: PatternModel,
    beamwidth_deg: f64,
    cutoff_deg: f64,
}

impl Default for PatternFile {
    fn default() -> Self {
        PatternFile {
            model: PatternModel::CosinePower,
            beamwidth_deg: 30.0,
            cutoff_deg: 90.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
struct GridFile {
    azimuth_bins: usize,
    elevation_bins: usize,
    range_bins: usize,
    azimuth_min_deg: f64,
    azimuth_max_deg: f64,
    elevation_min_deg: f64,
    elevation_max_deg: f64,
}

impl Default for GridFile {
    fn default() -> Self {
        let g = ImagingGrid::default();
        GridFile {
            azimuth_bins: g.azimuth_bins,
            elevation_bins: g.elevation_bins,
            range_bins: g.range_bins,
            azimuth_min_deg: g.azimuth_min_rad.to_degrees(),
            azimuth_max_deg: g.azimuth_max_rad.to_degrees(),
            elevation_min_deg: g.elevation_min_rad.to_degrees(),
            elevation_max_deg: g.elevation_max_rad.to_degrees(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct ReflectorFile {
    range_m: f64,
    azimuth_deg: f64,
    #[serde(default)]
    elevation_deg: f64,
    #[serde(default = "one")]
    amplitude: f64,
}

fn one() -> f64 {
    1.0
}

/// Artifacts a scenario asks the CLI to write.
pub const KNOWN_OUTPUTS: [&str; 6] = ["cube", "heatmap", "pointcloud", "range_image", "report", "spectrograms"];

/// A validated scenario with all angles in radians.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub cfg: RadarConfig,
    pub scene: Vec<Reflector>,
    pub trajectory: Trajectory,
    pub pattern: RadiationPattern,
    pub noise_std: f64,
    pub seed: u64,
    pub grid: ImagingGrid,
    pub cfar: CfarParams,
    pub outputs: Vec<String>,
}

impl Scenario {
    /// Parses and validates a scenario document. Syntax and schema errors
    /// carry the TOML line and column.
    pub fn from_toml(text: &str) -> Result<Self> {
        let f: ScenarioFile =
            toml::from_str(text).map_err(|e| Error::Format(format!("scenario: {e}")))?;
        if f.schema != SCENARIO_SCHEMA {
            return Err(Error::Format(format!(
                "scenario: schema '{}' is not '{SCENARIO_SCHEMA}'",
                f.schema
            )));
        }
        for o in &f.outputs {
            if !KNOWN_OUTPUTS.contains(&o.as_str()) {
                return Err(Error::Format(format!(
                    "scenario: unknown output '{o}', expected one of {KNOWN_OUTPUTS:?}"
                )));
            }
        }
        let pattern = match f.pattern.model {
            PatternModel::Omni => RadiationPattern {
                fov_cutoff_rad: f.pattern.cutoff_deg.to_radians(),
                ..RadiationPattern::omni()
            },
            PatternModel::CosinePower => {
                let bw = f.pattern.beamwidth_deg;
                if !(bw > 0.0 && bw < 180.0) {
                    return Err(Error::InvalidConfig(format!(
                        "pattern beamwidth_deg must be in (0, 180), got {bw}"
                    )));
                }
                RadiationPattern::cosine_power_for_beamwidth(
                    bw.to_radians(),
                    f.pattern.cutoff_deg.to_radians(),
                )
            }
        };
        let g = f.grid;
        let s = Scenario {
            cfg: f.radar,
            scene: f
                .reflector
                .iter()
                .map(|r| {
                    Reflector::new(
                        r.range_m,
                        r.azimuth_deg.to_radians(),
                        r.elevation_deg.to_radians(),
                        r.amplitude,
                    )
                })
                .collect(),
            trajectory: Trajectory::new(f.trajectory.speed_m_s, f.trajectory.heading_deg.to_radians()),
            pattern,
            noise_std: f.noise_std,
            seed: f.seed,
            grid: ImagingGrid {
                azimuth_bins: g.azimuth_bins,
                elevation_bins: g.elevation_bins,
                range_bins: g.range_bins,
                azimuth_min_rad: g.azimuth_min_deg.to_radians(),
                azimuth_max_rad: if g.azimuth_max_deg == 360.0 {
                    g.azimuth_min_deg.to_radians() + TAU
                } else {
                    g.azimuth_max_deg.to_radians()
                },
                elevation_min_rad: g.elevation_min_deg.to_radians(),
                elevation_max_rad: g.elevation_max_deg.to_radians(),
            },
            cfar: f.cfar.unwrap_or_else(CfarParams::scene),
            outputs: f.outputs,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Scenario::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.cfg.validate()?;
        self.pattern.validate()?;
        self.grid.validate()?;
        self.cfar.validate()?;
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::InvalidConfig(format!("noise_std must be >= 0, got {}", self.noise_std)));
        }
        if self.grid.range_bins > self.cfg.samples_per_chirp {
            return Err(Error::InvalidConfig(format!(
                "grid has {} range bins but chirps have {} samples",
                self.grid.range_bins, self.cfg.samples_per_chirp
            )));
        }
        Ok(())
    }

    pub fn wants(&self, output: &str) -> bool {
        self.outputs.iter().any(|o| o == output)
    }

    /// Simulated cube at storage precision, so in-memory and reloaded cubes
    /// give identical downstream results.
    pub fn simulate(&self) -> Result<RawCube> {
        let mut cube = simulate(&self.scene, &self.trajectory, &self.cfg, &self.pattern, self.noise_std, self.seed)?;
        cube.round_to_f32();
        Ok(cube)
    }

    /// Reflector positions as the reference cloud.
    pub fn truth_cloud(&self) -> Result<PointCloud> {
        PointCloud::new(
            self.scene
                .iter()
                .map(|r| crate::pointcloud::Point::from_vec3(r.position(), r.amplitude))
                .collect(),
        )
    }

    pub fn motion_options(&self) -> MotionOptions {
        let mut o = MotionOptions::for_config(&self.cfg);
        o.ransac.seed = self.seed;
        o
    }
}

/// Where the imaging stage takes its motion from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MotionSource {
    #[default]
    Estimated,
    GroundTruth,
    /// No compensation.
    Zero,
}

/// Cloud metrics against the reference cloud.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CloudMetrics {
    pub chamfer_3d_m: f64,
    pub hausdorff_3d_m: f64,
    pub chamfer_2d_m: f64,
    pub hausdorff_2d_m: f64,
}

impl CloudMetrics {
    pub fn between(pred: &PointCloud, truth: &PointCloud) -> Result<Self> {
        Ok(CloudMetrics {
            chamfer_3d_m: chamfer(pred, truth, Dims::D3)?,
            hausdorff_3d_m: modified_hausdorff(pred, truth, Dims::D3)?,
            chamfer_2d_m: chamfer(pred, truth, Dims::D2)?,
            hausdorff_2d_m: modified_hausdorff(pred, truth, Dims::D2)?,
        })
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub cube: RawCube,
    /// Present when the motion was estimated.
    pub motion: Option<MotionAnalysis>,
    pub imaging_motion: Trajectory,
    pub heatmap: Heatmap3D,
    pub cloud: PointCloud,
    pub metrics: CloudMetrics,
}

impl PipelineOutput {
    /// Structured `key=value` report, one quantity per line.
    pub fn report(&self, scenario: &Scenario) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "schema={SCENARIO_SCHEMA}");
        let _ = writeln!(s, "seed={}", scenario.seed);
        let _ = writeln!(s, "true_speed_m_s={:.6}", scenario.trajectory.speed_m_s);
        let _ = writeln!(s, "true_heading_rad={:.6}", scenario.trajectory.heading_rad);
        if let Some(m) = &self.motion {
            let _ = writeln!(s, "motion {}", m.estimate.to_record());
        }
        let _ = writeln!(s, "imaging_speed_m_s={:.6}", self.imaging_motion.speed_m_s);
        let _ = writeln!(s, "imaging_heading_rad={:.6}", self.imaging_motion.heading_rad);
        let _ = writeln!(s, "heatmap_max={:.6e}", self.heatmap.max());
        let _ = writeln!(s, "points={}", self.cloud.len());
        let _ = writeln!(s, "reference_points={}", scenario.scene.len());
        let _ = writeln!(s, "chamfer_3d_m={:.6}", self.metrics.chamfer_3d_m);
        let _ = writeln!(s, "hausdorff_3d_m={:.6}", self.metrics.hausdorff_3d_m);
        let _ = writeln!(s, "chamfer_2d_m={:.6}", self.metrics.chamfer_2d_m);
        let _ = writeln!(s, "hausdorff_2d_m={:.6}", self.metrics.hausdorff_2d_m);
        s
    }
}

/// Imaging, detection and scoring of an existing cube with a given motion.
pub fn image_and_score(
    scenario: &Scenario,
    cube: &RawCube,
    motion: &Trajectory,
) -> Result<(Heatmap3D, PointCloud, CloudMetrics)> {
    let mut heatmap = beamform_fast(cube, &scenario.grid, motion, &ImagingOptions::default())
        .map_err(|e| e.at_stage("image"))?;
    heatmap.round_to_f32();
    let cloud = cfar_extract_with(&heatmap, &scenario.cfar).map_err(|e| e.at_stage("pointcloud"))?;
    let truth = scenario.truth_cloud().map_err(|e| e.at_stage("metrics"))?;
    let metrics = CloudMetrics::between(&cloud, &truth).map_err(|e| e.at_stage("metrics"))?;
    Ok((heatmap, cloud, metrics))
}

/// simulate → estimate motion → factored beamforming → CFAR → metrics.
pub fn run_pipeline(scenario: &Scenario, source: MotionSource) -> Result<PipelineOutput> {
    let cube = scenario.simulate().map_err(|e| e.at_stage("simulate"))?;
    let (motion, imaging_motion) = match source {
        MotionSource::Estimated => {
            let a = analyse_motion(&cube, &scenario.motion_options()).map_err(|e| e.at_stage("motion"))?;
            let t = a.estimate.trajectory();
            (Some(a), t)
        }
        MotionSource::GroundTruth => (None, scenario.trajectory),
        MotionSource::Zero => (None, Trajectory::stationary()),
    };
    let (heatmap, cloud, metrics) = image_and_score(scenario, &cube, &imaging_motion)?;
    Ok(PipelineOutput {
        cube,
        motion,
        imaging_motion,
        heatmap,
        cloud,
        metrics,
    })
}

/// Motion estimate alone, for a cube already in hand.
pub fn estimate_for(scenario: &Scenario, cube: &RawCube) -> Result<MotionEstimate> {
    Ok(analyse_motion(cube, &scenario.motion_options())
        .map_err(|e| e.at_stage("motion"))?
        .estimate)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub dv_m_s: f64,
    pub dtheta_rad: f64,
    pub points: usize,
    pub chamfer_m: f64,
    pub hausdorff_m: f64,
}

/// Images the scenario with ground-truth motion perturbed by every
/// `(Δv, Δθ_v)` pair and scores each cloud. Perturbed speeds are clamped
/// at zero.
pub fn sweep_motion_error(scenario: &Scenario, dvs: &[f64], dthetas: &[f64]) -> Result<Vec<SweepRow>> {
    let cube = scenario.simulate().map_err(|e| e.at_stage("simulate"))?;
    let mut rows = Vec::with_capacity(dvs.len() * dthetas.len());
    for &dv in dvs {
        for &dth in dthetas {
            let motion = Trajectory::new(
                (scenario.trajectory.speed_m_s + dv).max(0.0),
                scenario.trajectory.heading_rad + dth,
            );
            let (_, cloud, m) = image_and_score(scenario, &cube, &motion)?;
            rows.push(SweepRow {
                dv_m_s: dv,
                dtheta_rad: dth,
                points: cloud.len(),
                chamfer_m: m.chamfer_3d_m,
                hausdorff_m: m.hausdorff_3d_m,
            });
        }
    }
    Ok(rows)
}

pub fn sweep_to_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("dv_m_s,dtheta_rad,points,chamfer_m,hausdorff_m\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{:.6},{:.6},{},{:.6},{:.6}",
            r.dv_m_s, r.dtheta_rad, r.points, r.chamfer_m, r.hausdorff_m
        );
    }
    s
}
