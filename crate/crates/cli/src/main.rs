use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};

use cylsar::container::{
    load_cube, load_heatmap, read_sidecar, save_cube, save_heatmap, sha256_file, write_sidecar, Provenance,
};
use cylsar::egomotion::{analyse_motion, MotionEstimate, MotionOptions};
use cylsar::imaging::{beamform_compensated, beamform_fast, ImagingGrid, ImagingOptions};
use cylsar::pointcloud::{
    cfar_extract_with, range_image_mae, CfarParams, PeakFilter, PointCloud, RangeImage,
};
use cylsar::resolution::{
    analytic_beamwidth, beam_shape_numeric_with, fov_sweep, minimum_resolved_separation, theta_grid,
    Propagation, DEFAULT_NODES_PER_TURN,
};
use cylsar::scenario::{run_pipeline, sweep_motion_error, sweep_to_csv, CloudMetrics, MotionSource, Scenario};
use cylsar::scene::{RadiationPattern, Trajectory};
use cylsar::{Error, RadarConfig};

#[derive(Debug, Parser)]
#[command(name = "cylsar", version, about = "Rotating-radar cylindrical aperture imaging")]
struct Cli {
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate the raw IF cube of a scenario.
    Simulate {
        scenario: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Estimate platform speed and heading from a cube.
    Motion {
        cube: PathBuf,
        /// Write the estimate record here instead of stdout.
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Directory for per-gate spectrogram CSVs.
        #[arg(long)]
        spectrograms: Option<PathBuf>,
        /// RANSAC seed; defaults to the seed stored in the cube.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 8)]
        gates: usize,
    },
    /// Beamform a cube into an azimuth × elevation × range heatmap.
    Image {
        cube: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        #[command(flatten)]
        motion: MotionArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, value_enum, default_value_t = Method::Fast)]
        method: Method,
        /// Also write the peak-range image (PGM, or CSV by extension).
        #[arg(long)]
        range_image: Option<PathBuf>,
    },
    /// Run CFAR on a heatmap and write a PLY point cloud.
    Pointcloud {
        heatmap: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2)]
        guard: usize,
        #[arg(long, default_value_t = 8)]
        train: usize,
        #[arg(long, default_value_t = 1e-4)]
        pfa: f64,
        #[arg(long, value_enum, default_value_t = PeakArg::Local3d)]
        peak_filter: PeakArg,
        #[arg(long, default_value_t = 0.25)]
        min_relative: f64,
    },
    /// Compare a point cloud (PLY) or range image (PGM/CSV) with a reference.
    Metrics {
        pred: PathBuf,
        /// Reference file of the same kind as `pred`.
        #[arg(long, required_unless_present = "scenario", conflicts_with = "scenario")]
        truth: Option<PathBuf>,
        /// Use the reflectors of this scenario as the reference cloud.
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Range-image mask; non-zero pixels are excluded.
        #[arg(long)]
        mask: Option<PathBuf>,
    },
    /// simulate → motion → image → pointcloud → metrics in one go.
    Pipeline {
        scenario: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, value_enum, default_value_t = SourceArg::Estimated)]
        motion_source: SourceArg,
        /// Shorthand for `--motion-source none`.
        #[arg(long, conflicts_with = "motion_source")]
        no_compensation: bool,
    },
    /// Chamfer distance of clouds imaged with perturbed motion, as CSV.
    SweepMotionError {
        scenario: PathBuf,
        /// Speed errors in mm/s.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "0,2,4,8.48,16,32")]
        dv_mm_s: Vec<f64>,
        /// Heading errors in degrees.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "0")]
        dtheta_deg: Vec<f64>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Azimuth beamwidth of the rotating aperture, as CSV.
    Resolution {
        /// Summation windows in degrees, each in (0, 360].
        #[arg(long, value_delimiter = ',', value_parser = parse_fov_deg, default_value = "30,60,90,180")]
        fov_deg: Vec<f64>,
        #[arg(long, value_enum, default_value_t = PatternArg::Cosine)]
        pattern: PatternArg,
        #[arg(long, default_value_t = 30.0)]
        beamwidth_deg: f64,
        #[arg(long, value_enum, default_value_t = PropagationArg::OneWay)]
        propagation: PropagationArg,
        #[arg(long, default_value_t = 0.08)]
        radius_m: f64,
        #[arg(long, default_value_t = 0.0038)]
        wavelength_m: f64,
        /// Directory for the normalized beam curve of each window.
        #[arg(long)]
        curves: Option<PathBuf>,
        /// Also bisect the smallest separation two imaged reflectors resolve at.
        #[arg(long)]
        two_point: bool,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
#[group(skip)]
#[command(group(ArgGroup::new("motion_source").required(true).multiple(false)))]
struct MotionArgs {
    /// Motion record written by `cylsar motion`.
    #[arg(long, group = "motion_source")]
    motion: Option<PathBuf>,
    /// Platform speed in m/s; pairs with `--heading-deg`.
    #[arg(long, group = "motion_source", requires = "heading_deg")]
    speed: Option<f64>,
    #[arg(long, requires = "speed", allow_hyphen_values = true)]
    heading_deg: Option<f64>,
    /// Image as if the platform were static.
    #[arg(long, group = "motion_source")]
    no_compensation: bool,
}

#[derive(Debug, Args)]
struct GridArgs {
    #[arg(long, default_value_t = 512)]
    azimuth_bins: usize,
    #[arg(long, default_value_t = 64)]
    elevation_bins: usize,
    /// Defaults to min(256, samples per chirp).
    #[arg(long)]
    range_bins: Option<usize>,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    azimuth_min_deg: f64,
    #[arg(long, default_value_t = 360.0, allow_hyphen_values = true)]
    azimuth_max_deg: f64,
    #[arg(long, default_value_t = -45.0, allow_hyphen_values = true)]
    elevation_min_deg: f64,
    #[arg(long, default_value_t = 45.0, allow_hyphen_values = true)]
    elevation_max_deg: f64,
}

impl GridArgs {
    fn grid(&self, cfg: &RadarConfig) -> ImagingGrid {
        ImagingGrid {
            azimuth_bins: self.azimuth_bins,
            elevation_bins: self.elevation_bins,
            range_bins: self.range_bins.unwrap_or(cfg.samples_per_chirp.min(256)),
            azimuth_min_rad: self.azimuth_min_deg.to_radians(),
            azimuth_max_rad: self.azimuth_max_deg.to_radians(),
            elevation_min_rad: self.elevation_min_deg.to_radians(),
            elevation_max_rad: self.elevation_max_deg.to_radians(),
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Method {
    Fast,
    Compensated,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PeakArg {
    None,
    Range,
    Local3d,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SourceArg {
    Estimated,
    GroundTruth,
    None,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PatternArg {
    Cosine,
    Omni,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PropagationArg {
    OneWay,
    RoundTrip,
}

fn parse_fov_deg(s: &str) -> Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("'{s}' is not a number"))?;
    if v > 0.0 && v <= 360.0 {
        Ok(v)
    } else {
        Err(format!("FOV window must be in (0, 360] degrees, got {v}"))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
    {
        eprintln!("error: thread pool: {e}");
        return ExitCode::from(3);
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(command: Command) -> cylsar::Result<()> {
    match command {
        Command::Simulate { scenario, out } => {
            let s = Scenario::load(&scenario)?;
            let cube = s.simulate()?;
            save_cube(&out, &cube, &scenario_provenance(&s, &scenario)?)
        }
        Command::Motion {
            cube,
            out,
            spectrograms,
            seed,
            gates,
        } => {
            let cube = load_cube(&cube)?;
            let mut opts = MotionOptions::for_config(&cube.cfg);
            opts.ransac.seed = seed.unwrap_or(cube.seed);
            opts.gates = gates;
            let a = analyse_motion(&cube, &opts)?;
            if let Some(dir) = spectrograms {
                write_spectrograms(&dir, &a)?;
            }
            emit(out.as_deref(), &format!("{}\n", a.estimate.to_record()))
        }
        Command::Image {
            cube: path,
            out,
            motion,
            grid,
            method,
            range_image,
        } => {
            let cube = load_cube(&path)?;
            let traj = motion.trajectory()?;
            let grid = grid.grid(&cube.cfg);
            let opts = ImagingOptions::default();
            let mut heat = match method {
                Method::Fast => beamform_fast(&cube, &grid, &traj, &opts)?,
                Method::Compensated => beamform_compensated(&cube, &grid, &traj, &opts)?,
            };
            heat.round_to_f32();
            let prov = read_sidecar(&path)?.unwrap_or_else(|| Provenance::new(&cube.cfg, cube.seed));
            save_heatmap(&out, &heat, &prov)?;
            if let Some(p) = range_image {
                write_range_image(&p, &heat.peak_range_image(), &prov)?;
            }
            Ok(())
        }
        Command::Pointcloud {
            heatmap,
            out,
            guard,
            train,
            pfa,
            peak_filter,
            min_relative,
        } => {
            let heat = load_heatmap(&heatmap)?;
            let params = CfarParams {
                guard,
                train,
                pfa,
                peak_filter: match peak_filter {
                    PeakArg::None => PeakFilter::None,
                    PeakArg::Range => PeakFilter::Range,
                    PeakArg::Local3d => PeakFilter::Local3d,
                },
                min_relative,
                ..CfarParams::default()
            };
            let cloud = cfar_extract_with(&heat, &params)?;
            cloud.save_ply(&out)?;
            if let Some(prov) = read_sidecar(&heatmap)? {
                write_sidecar(&out, &prov)?;
            }
            Ok(())
        }
        Command::Metrics {
            pred,
            truth,
            scenario,
            mask,
        } => metrics(&pred, truth.as_deref(), scenario.as_deref(), mask.as_deref()),
        Command::Pipeline {
            scenario,
            out_dir,
            motion_source,
            no_compensation,
        } => {
            let source = if no_compensation {
                MotionSource::Zero
            } else {
                match motion_source {
                    SourceArg::Estimated => MotionSource::Estimated,
                    SourceArg::GroundTruth => MotionSource::GroundTruth,
                    SourceArg::None => MotionSource::Zero,
                }
            };
            pipeline(&scenario, &out_dir, source)
        }
        Command::SweepMotionError {
            scenario,
            dv_mm_s,
            dtheta_deg,
            out,
        } => {
            let s = Scenario::load(&scenario)?;
            let dvs: Vec<f64> = dv_mm_s.iter().map(|v| v / 1000.0).collect();
            let dths: Vec<f64> = dtheta_deg.iter().map(|d| d.to_radians()).collect();
            let rows = sweep_motion_error(&s, &dvs, &dths)?;
            let csv = sweep_to_csv(&rows);
            if let Some(p) = &out {
                write_sidecar(p, &scenario_provenance(&s, &scenario)?)?;
            }
            emit(out.as_deref(), &csv)
        }
        Command::Resolution {
            fov_deg,
            pattern,
            beamwidth_deg,
            propagation,
            radius_m,
            wavelength_m,
            curves,
            two_point,
            out,
        } => {
            let pattern = match pattern {
                PatternArg::Omni => RadiationPattern::omni(),
                PatternArg::Cosine => {
                    if !(beamwidth_deg > 0.0 && beamwidth_deg < 180.0) {
                        return Err(Error::InvalidConfig(format!(
                            "beamwidth_deg must be in (0, 180), got {beamwidth_deg}"
                        )));
                    }
                    RadiationPattern::cosine_power_for_beamwidth(
                        beamwidth_deg.to_radians(),
                        std::f64::consts::FRAC_PI_2,
                    )
                }
            };
            let propagation = match propagation {
                PropagationArg::OneWay => Propagation::OneWay,
                PropagationArg::RoundTrip => Propagation::RoundTrip,
            };
            resolution(
                &fov_deg,
                &pattern,
                propagation,
                radius_m,
                wavelength_m,
                curves.as_deref(),
                two_point,
                out.as_deref(),
            )
        }
    }
}

impl MotionArgs {
    fn trajectory(&self) -> cylsar::Result<Trajectory> {
        if let Some(p) = &self.motion {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            let line = text
                .lines()
                .find(|l| !l.trim().is_empty())
                .ok_or_else(|| Error::Format(format!("{}: empty motion record", p.display())))?;
            return Ok(MotionEstimate::from_record(line)?.trajectory());
        }
        match (self.speed, self.heading_deg) {
            (Some(v), Some(h)) => Ok(Trajectory::new(v, h.to_radians())),
            _ => Ok(Trajectory::stationary()),
        }
    }
}

fn scenario_provenance(s: &Scenario, path: &Path) -> cylsar::Result<Provenance> {
    let mut prov = Provenance::new(&s.cfg, s.seed);
    prov.scenario_sha256 = Some(sha256_file(path)?);
    Ok(prov)
}

fn emit(out: Option<&Path>, text: &str) -> cylsar::Result<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn write_text(path: &Path, text: &str, prov: &Provenance) -> cylsar::Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))?;
    write_sidecar(path, prov)
}

fn write_range_image(path: &Path, img: &RangeImage, prov: &Provenance) -> cylsar::Result<()> {
    let text = if path.extension().is_some_and(|e| e == "csv") {
        img.to_csv()
    } else {
        img.to_pgm()
    };
    write_text(path, &text, prov)
}

fn write_spectrograms(dir: &Path, a: &cylsar::egomotion::MotionAnalysis) -> cylsar::Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for spec in &a.spectrograms {
        let p = dir.join(format!("gate_{:04}.csv", spec.range_bin));
        fs::write(&p, spec.to_csv()).map_err(|e| Error::io(&p, e))?;
    }
    let mut lines = String::from("range_bin,intercept_hz,peak_tc_s,peak_f_hz,peak_power\n");
    for l in &a.lines {
        let _ = writeln!(
            lines,
            "{},{:.4},{:.6},{:.4},{:.6e}",
            l.range_bin, l.intercept_hz, l.peak_tc_s, l.peak_f_hz, l.peak_power
        );
    }
    let p = dir.join("peaks.csv");
    fs::write(&p, lines).map_err(|e| Error::io(&p, e))
}

fn is_range_image(p: &Path) -> bool {
    p.extension().is_some_and(|e| e == "pgm" || e == "csv")
}

fn load_range_image(p: &Path) -> cylsar::Result<RangeImage> {
    let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
    if p.extension().is_some_and(|e| e == "csv") {
        RangeImage::from_csv(&text)
    } else {
        RangeImage::from_pgm(&text)
    }
}

fn metrics(pred: &Path, truth: Option<&Path>, scenario: Option<&Path>, mask: Option<&Path>) -> cylsar::Result<()> {
    if is_range_image(pred) {
        let truth = truth.ok_or_else(|| {
            Error::InvalidInput("range-image metrics need --truth with a range image".into())
        })?;
        let p = load_range_image(pred)?;
        let t = load_range_image(truth)?;
        let m = mask.map(load_range_image).transpose()?;
        let excluded: Option<Vec<bool>> = m.map(|m| m.data.iter().map(|&v| v != 0.0).collect());
        let mae = range_image_mae(&p, &t, excluded.as_deref())?;
        println!("range_mae_m={mae:.6}");
        return Ok(());
    }
    let cloud = PointCloud::load_ply(pred)?;
    let reference = match (truth, scenario) {
        (Some(t), _) => PointCloud::load_ply(t)?,
        (None, Some(s)) => Scenario::load(s)?.truth_cloud()?,
        (None, None) => unreachable!("clap requires one of --truth and --scenario"),
    };
    let m = CloudMetrics::between(&cloud, &reference)?;
    println!("points={}", cloud.len());
    println!("reference_points={}", reference.len());
    println!("chamfer_3d_m={:.6}", m.chamfer_3d_m);
    println!("hausdorff_3d_m={:.6}", m.hausdorff_3d_m);
    println!("chamfer_2d_m={:.6}", m.chamfer_2d_m);
    println!("hausdorff_2d_m={:.6}", m.hausdorff_2d_m);
    Ok(())
}

fn pipeline(scenario_path: &Path, out_dir: &Path, source: MotionSource) -> cylsar::Result<()> {
    let s = Scenario::load(scenario_path)?;
    let prov = scenario_provenance(&s, scenario_path)?;
    let out = run_pipeline(&s, source)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    if s.wants("cube") {
        save_cube(&out_dir.join("cube.bin"), &out.cube, &prov)?;
    }
    if s.wants("heatmap") {
        save_heatmap(&out_dir.join("heatmap.bin"), &out.heatmap, &prov)?;
    }
    if s.wants("pointcloud") {
        let p = out_dir.join("cloud.ply");
        out.cloud.save_ply(&p)?;
        write_sidecar(&p, &prov)?;
    }
    if s.wants("range_image") {
        let img = out.heatmap.peak_range_image();
        write_range_image(&out_dir.join("range_image.pgm"), &img, &prov)?;
        write_range_image(&out_dir.join("range_image.csv"), &img, &prov)?;
    }
    if s.wants("spectrograms") {
        if let Some(a) = &out.motion {
            write_spectrograms(&out_dir.join("spectrograms"), a)?;
        }
    }
    let report = out.report(&s);
    if s.wants("report") {
        write_text(&out_dir.join("report.txt"), &report, &prov)?;
    }
    print!("{report}");
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn resolution(
    fovs_deg: &[f64],
    pattern: &RadiationPattern,
    propagation: Propagation,
    r: f64,
    lambda: f64,
    curves: Option<&Path>,
    two_point: bool,
    out: Option<&Path>,
) -> cylsar::Result<()> {
    let fovs: Vec<f64> = fovs_deg.iter().map(|d| d.to_radians()).collect();
    let widths = fov_sweep(r, lambda, pattern, &fovs, propagation)?;
    let mut csv = String::from("fov_deg,beamwidth_deg\n");
    for (fov, w) in &widths {
        let _ = writeln!(csv, "{:.3},{:.6}", fov.to_degrees(), w.to_degrees());
    }
    let _ = writeln!(csv, "# closed_form_deg={:.6}", analytic_beamwidth(r, lambda).to_degrees());
    if two_point {
        let cfg = RadarConfig {
            rotation_radius_m: r,
            wavelength_m: lambda,
            ..RadarConfig::default()
        };
        let sep = minimum_resolved_separation(&cfg, 0.1f64.to_radians(), 10f64.to_radians(), 0.01f64.to_radians())?;
        let _ = writeln!(csv, "# two_point_min_separation_deg={:.4}", sep.to_degrees());
    }
    if let Some(dir) = curves {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (fov, w) in &widths {
            let thetas = theta_grid((4.0 * w).min(std::f64::consts::FRAC_PI_2), 801);
            let curve = beam_shape_numeric_with(r, lambda, *fov, pattern, &thetas, propagation, DEFAULT_NODES_PER_TURN)?;
            let p = dir.join(format!("beam_fov{:.0}.csv", fov.to_degrees()));
            fs::write(&p, curve.to_csv()).map_err(|e| Error::io(&p, e))?;
        }
    }
    emit(out, &csv)
}
