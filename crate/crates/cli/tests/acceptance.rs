//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the process exits non-zero if any fails.

use std::f64::consts::{FRAC_PI_2, TAU};
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use cylsar::container::sha256_file;
use cylsar::egomotion::{
    analyse_motion, heading_error, linearized_ridge_hz, pooled_spectrogram, range_spectra, select_gates,
    MotionOptions, SpectrogramParams,
};
use cylsar::geometry::wrap_pi;
use cylsar::imaging::{beamform_compensated, beamform_fast, Heatmap3D, ImagingGrid, ImagingOptions};
use cylsar::pointcloud::{cfar_detect, chamfer, modified_hausdorff, CfarParams, Dims, PeakFilter, Point, PointCloud};
use cylsar::radar::antenna_position;
use cylsar::resolution::{
    analytic_beamwidth, analytic_curve, beam_shape_analytic, beam_shape_numeric_with, beamwidth_3db, fov_sweep,
    minimum_resolved_separation, theta_grid, Propagation, DEFAULT_NODES_PER_TURN,
};
use cylsar::scenario::{run_pipeline, MotionSource, Scenario};
use cylsar::scene::{approx_distance, exact_distance, simulate, RadiationPattern, RawCube, Reflector, Trajectory};
use cylsar::{Complex, RadarConfig};

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: String) -> Self {
        Outcome { pass, detail }
    }
}

type Check = fn() -> Outcome;

fn main() -> ExitCode {
    let criteria: [(&str, &str, Duration, Check); 9] = [
        ("C1", "closed-form beamwidth", Duration::from_secs(1), c1_closed_form),
        ("C2", "numeric beam shape and FOV sweep", Duration::from_secs(10), c2_numeric_beam),
        ("C3", "factored beamforming identity and speed-up", Duration::from_secs(300), c3_fast_identity),
        ("C4", "motion estimation accuracy", Duration::from_secs(600), c4_motion),
        ("C5", "motion distortion and localization", Duration::from_secs(120), c5_distortion),
        ("C6", "distance model and ridge linearization", Duration::from_secs(30), c6_far_field),
        ("C7", "two-point resolution", Duration::from_secs(120), c7_two_point),
        ("C8", "metric and CFAR oracles", Duration::from_secs(60), c8_oracles),
        ("C9", "pipeline determinism across threads", Duration::from_secs(300), c9_determinism),
    ];
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (id, name, budget, check) in criteria {
        if !only.is_empty() && !only.iter().any(|o| o == id) {
            continue;
        }
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|e| {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                Outcome::new(false, format!("panicked: {msg}"))
            });
        let elapsed = start.elapsed();
        let in_time = elapsed <= budget;
        let pass = outcome.pass && in_time;
        if !pass {
            failed += 1;
        }
        println!(
            "{id} {:<44} {}  {} [{:.1}s / {}s{}]",
            name,
            if pass { "PASS" } else { "FAIL" },
            outcome.detail,
            elapsed.as_secs_f64(),
            budget.as_secs(),
            if in_time { "" } else { ", over budget" }
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}

fn c1_closed_form() -> Outcome {
    let (r, lambda) = (0.08, 0.0038);
    let thetas = theta_grid(3f64.to_radians(), 6001);
    let curve = analytic_curve(r, lambda, &thetas).unwrap();
    let w = beamwidth_3db(&curve).unwrap().to_degrees();
    let closed = analytic_beamwidth(r, lambda).to_degrees();
    let pass = (0.93..=1.01).contains(&w) && (w - closed).abs() < 1e-3;
    Outcome::new(pass, format!("width {w:.4}° (closed form {closed:.4}°, window [0.93°, 1.01°])"))
}

fn c2_numeric_beam() -> Outcome {
    let (r, lambda) = (0.08, 0.0038);
    let thetas = theta_grid(5f64.to_radians(), 1001);
    let numeric = beam_shape_numeric_with(
        r,
        lambda,
        TAU,
        &RadiationPattern::omni(),
        &thetas,
        Propagation::OneWay,
        DEFAULT_NODES_PER_TURN,
    )
    .unwrap();
    let peak = beam_shape_analytic(0.0, r, lambda).powi(2);
    let analytic: Vec<f64> = thetas.iter().map(|&t| beam_shape_analytic(t, r, lambda).powi(2) / peak).collect();
    let nmax = numeric.response.iter().cloned().fold(0.0, f64::max);
    let rms = (numeric
        .response
        .iter()
        .zip(&analytic)
        .map(|(n, a)| (n / nmax - a).powi(2))
        .sum::<f64>()
        / thetas.len() as f64)
        .sqrt();
    let fovs: Vec<f64> = [30.0f64, 60.0, 90.0, 180.0].iter().map(|d| d.to_radians()).collect();
    let sweep = fov_sweep(r, lambda, &RadiationPattern::default(), &fovs, Propagation::OneWay).unwrap();
    let widths: Vec<f64> = sweep.iter().map(|s| s.1.to_degrees()).collect();
    let monotone = widths.windows(2).all(|w| w[1] < w[0]);
    Outcome::new(
        rms <= 0.005 && monotone,
        format!(
            "rms {:.3}% (≤ 0.5%), widths {:?}° narrowing={monotone}",
            rms * 100.0,
            widths.iter().map(|w| (w * 1000.0).round() / 1000.0).collect::<Vec<_>>()
        ),
    )
}

fn random_cube(cfg: &RadarConfig, rng: &mut ChaCha8Rng) -> RawCube {
    let n = cfg.num_antennas() * cfg.chirps_per_rotation * cfg.samples_per_chirp;
    let samples = (0..n)
        .map(|_| Complex::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    RawCube::from_samples(cfg, 0, samples).unwrap()
}

fn c3_fast_identity() -> Outcome {
    let cfg = RadarConfig::default();
    let opts = ImagingOptions::default();
    let small = ImagingGrid {
        azimuth_bins: 24,
        elevation_bins: 3,
        range_bins: 64,
        ..ImagingGrid::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let cube = random_cube(&cfg, &mut rng);
        let traj = Trajectory::new(rng.random_range(0.0..0.6), rng.random_range(0.0..TAU));
        let f = beamform_fast(&cube, &small, &traj, &opts).unwrap();
        let c = beamform_compensated(&cube, &small, &traj, &opts).unwrap();
        for (a, b) in f.magnitudes().iter().zip(c.magnitudes()) {
            if *b > 0.0 {
                worst = worst.max((a - b).abs() / b);
            }
        }
    }

    let scene = [Reflector::new(3.0, 1.0, 0.1, 1.0), Reflector::new(5.0, 4.0, -0.2, 0.7)];
    let traj = Trajectory::new(0.3, 0.5);
    let cube = simulate(&scene, &traj, &cfg, &RadiationPattern::default(), 0.05, 1).unwrap();
    let grid = ImagingGrid::default();
    let t = Instant::now();
    let f = beamform_fast(&cube, &grid, &traj, &opts).unwrap();
    let t_fast = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let c = beamform_compensated(&cube, &grid, &traj, &opts).unwrap();
    let t_full = t.elapsed().as_secs_f64();
    let m = c.max();
    let default_dev = f
        .magnitudes()
        .iter()
        .zip(c.magnitudes())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
        / m;
    let ratio = t_full / t_fast;
    let half_a = cfg.num_antennas() as f64 / 2.0;
    Outcome::new(
        worst <= 1e-6 && default_dev <= 1e-6 && ratio > half_a,
        format!(
            "max rel dev {worst:.1e} over 50 random cubes, {default_dev:.1e} on default grid; speed-up {ratio:.2}× (> {half_a})"
        ),
    )
}

fn c4_motion() -> Outcome {
    let cfg = RadarConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let trials = 100;
    let (mut speed_err, mut heading_err) = (0.0, 0.0);
    for trial in 0..trials {
        let count = rng.random_range(5..=15);
        let scene: Vec<Reflector> = (0..count)
            .map(|_| {
                Reflector::new(
                    rng.random_range(1.0..8.0),
                    rng.random_range(0.0..TAU),
                    0.0,
                    rng.random_range(0.5..1.0),
                )
            })
            .collect();
        let v = rng.random_range(0.05..0.6);
        let h = rng.random_range(0.0..TAU);
        let cube = simulate(&scene, &Trajectory::new(v, h), &cfg, &RadiationPattern::default(), 0.1, trial).unwrap();
        let mut opts = MotionOptions::for_config(&cfg);
        opts.ransac.seed = trial;
        let e = analyse_motion(&cube, &opts).unwrap().estimate;
        speed_err += (e.speed_m_s - v).abs();
        heading_err += heading_error(e.heading_rad, h).to_degrees();
    }
    let v_mae = speed_err / trials as f64 * 1000.0;
    let h_mae = heading_err / trials as f64;
    Outcome::new(
        v_mae <= 10.0 && h_mae <= 2.0,
        format!("speed MAE {v_mae:.2} mm/s (≤ 10), heading MAE {h_mae:.3}° (≤ 2) over {trials} trials"),
    )
}

const MOVING_SCENE: &str = r#"
schema = "cylsar-scenario/1"
seed = 11
noise_std = 0.05
[trajectory]
speed_m_s = 0.4
heading_deg = 35
[grid]
azimuth_bins = 512
elevation_bins = 8
range_bins = 160
elevation_min_deg = -10
elevation_max_deg = 10
[[reflector]]
range_m = 2.0
azimuth_deg = 20
[[reflector]]
range_m = 3.1
azimuth_deg = 95
[[reflector]]
range_m = 4.2
azimuth_deg = 160
[[reflector]]
range_m = 2.6
azimuth_deg = 220
[[reflector]]
range_m = 3.6
azimuth_deg = 290
[[reflector]]
range_m = 5.0
azimuth_deg = 330
"#;

fn c5_distortion() -> Outcome {
    let s = Scenario::from_toml(MOVING_SCENE).unwrap();
    let with = run_pipeline(&s, MotionSource::Estimated).unwrap().metrics.chamfer_3d_m;
    let without = run_pipeline(&s, MotionSource::Zero).unwrap().metrics.chamfer_3d_m;
    let ratio = without / with;

    // one reflector gives a single Doppler peak, too few to estimate two
    // motion parameters, so these are imaged with the true motion
    let cfg = &s.cfg;
    let dr = cfg.range_resolution_m();
    let mut worst_az = 0;
    let mut worst_range: f64 = 0.0;
    let mut per_reflector = Vec::new();
    for (n, refl) in s.scene.iter().enumerate() {
        let single = Scenario {
            scene: vec![*refl],
            seed: s.seed + n as u64,
            ..s.clone()
        };
        let out = run_pipeline(&single, MotionSource::GroundTruth).unwrap();
        let heat = &out.heatmap;
        let (i, _, k) = heat.argmax();
        let true_i = heat.grid.azimuth_index(refl.azimuth_rad);
        let az_err = heat.grid.azimuth_bin_distance(i, true_i);
        per_reflector.push(az_err.to_string());
        worst_az = worst_az.max(az_err);
        worst_range = worst_range.max((heat.range_of(k) - refl.range_m).abs());
    }
    let localized = worst_az <= 1 && worst_range <= dr;
    Outcome::new(
        ratio >= 2.0 && localized,
        format!(
            "CD {:.1} mm compensated vs {:.1} mm not ({ratio:.2}×, ≥ 2); single-reflector worst error {worst_az} azimuth bin(s) (≤ 1; per reflector [{}]), {:.1} mm range (≤ {:.1})",
            with * 1000.0,
            without * 1000.0,
            per_reflector.join(", "),
            worst_range * 1000.0,
            dr * 1000.0
        ),
    )
}

fn c6_far_field() -> Outcome {
    let cfg = RadarConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let limit = cfg.wavelength_m / 8.0;
    let mut worst_dist: f64 = 0.0;
    let mut over = 0;
    for _ in 0..10_000 {
        let refl = Reflector::planar(rng.random_range(1.0..cfg.max_range_m), rng.random_range(0.0..TAU));
        let t = rng.random_range(0.0..cfg.rotation_period_s());
        let vt = rng.random_range(0.0..=0.3);
        let speed = if t > 0.0 { vt / t } else { 0.0 };
        let traj = Trajectory::new(speed, rng.random_range(0.0..TAU));
        let pos = antenna_position(&cfg, 0, t).unwrap() + traj.displacement(t);
        let err = (approx_distance(&refl, &cfg, &traj, t) - exact_distance(&refl, pos)).abs();
        if err >= limit {
            over += 1;
        }
        worst_dist = worst_dist.max(err);
    }
    let distance_ok = over == 0;

    // ridge frequency against the linearized prediction, one reflector per
    // configuration, omni pattern so every column within ±30° carries signal
    let omni = RadiationPattern::omni();
    let params = SpectrogramParams::for_config(&cfg);
    let w = cfg.angular_speed_rad_s;
    let mut worst_scaled: f64 = 0.0;
    let mut worst_slow: f64 = 0.0;
    let mut worst_pointwise: f64 = 0.0;
    for _ in 0..20 {
        let th = rng.random_range(0.0..TAU);
        let v = rng.random_range(0.0..0.6);
        let h = rng.random_range(0.0..TAU);
        let range = rng.random_range(1.5..6.0);
        let cube = simulate(&[Reflector::planar(range, th)], &Trajectory::new(v, h), &cfg, &omni, 0.0, 0).unwrap();
        let spectra = range_spectra(&cube, 0).unwrap();
        let gate = select_gates(&spectra, &cfg, 1, 0.5, 0)[0];
        let span = 2;
        let bins: Vec<Vec<Complex>> = (gate.saturating_sub(span)..=(gate + span).min(spectra[0].len() - 1))
            .map(|b| spectra.iter().map(|row| row[b]).collect())
            .collect();
        let slices: Vec<&[Complex]> = bins.iter().map(|b| b.as_slice()).collect();
        let sp = pooled_spectrogram(&slices, &cfg, gate, &params).unwrap();
        let mut pairs = Vec::new();
        for c in 0..sp.columns() {
            let t = sp.times[c];
            if wrap_pi(w * t - th).abs() >= 30f64.to_radians() {
                continue;
            }
            let col = sp.column(c);
            let nfft = sp.nfft;
            let k = (0..nfft).max_by(|&a, &b| col[a].total_cmp(&col[b])).unwrap();
            let (l, m, r) = (col[(k + nfft - 1) % nfft].ln(), col[k].ln(), col[(k + 1) % nfft].ln());
            let offset = 0.5 * (l - r) / (l - 2.0 * m + r);
            let measured = sp.freqs[k] + offset * sp.bin_width_hz();
            pairs.push((measured, linearized_ridge_hz(&cfg, t, th, v, h)));
        }
        let excursion = pairs.iter().map(|p| p.1.abs()).fold(0.0, f64::max);
        for (measured, predicted) in pairs {
            let scaled = (measured - predicted).abs() / excursion;
            worst_scaled = worst_scaled.max(scaled);
            if v <= 0.1 {
                worst_slow = worst_slow.max(scaled);
            }
            worst_pointwise = worst_pointwise.max((measured - predicted).abs() / predicted.abs());
        }
    }
    let ridge_ok = worst_scaled <= 0.05;
    Outcome::new(
        distance_ok && ridge_ok,
        format!(
            "distance: worst {:.2} mm, {over}/10000 ≥ λ/8 = {:.3} mm; ridge: worst error {:.2}% of the window's frequency excursion (≤ 5%; {:.2}% for v ≤ 0.1 m/s), pointwise {:.1}%",
            worst_dist * 1000.0,
            limit * 1000.0,
            worst_scaled * 100.0,
            worst_slow * 100.0,
            worst_pointwise * 100.0
        ),
    )
}

fn c7_two_point() -> Outcome {
    let cfg = RadarConfig::default();
    let measured = minimum_resolved_separation(
        &cfg,
        0.2f64.to_radians(),
        8f64.to_radians(),
        0.01f64.to_radians(),
    )
    .unwrap();
    let simulated = fov_sweep(
        cfg.rotation_radius_m,
        cfg.wavelength_m,
        &RadiationPattern::default(),
        &[FRAC_PI_2],
        Propagation::OneWay,
    )
    .unwrap()[0]
        .1;
    let rel = measured / simulated - 1.0;
    Outcome::new(
        rel.abs() <= 0.2,
        format!(
            "separation {:.3}° vs FOV-90° beamwidth {:.3}° ({:+.1}%, within ±20%)",
            measured.to_degrees(),
            simulated.to_degrees(),
            rel * 100.0
        ),
    )
}

fn brute_directed(a: &[Point], b: &[Point]) -> f64 {
    let mut sum = 0.0;
    for p in a {
        let mut best = f64::INFINITY;
        for q in b {
            let (dx, dy, dz) = (p.x - q.x, p.y - q.y, p.z - q.z);
            best = best.min((dx * dx + dy * dy + dz * dz).sqrt());
        }
        sum += best;
    }
    sum / a.len() as f64
}

fn c8_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut mismatches = 0;
    for _ in 0..100 {
        let mut cloud = || {
            let pts = (0..50)
                .map(|_| {
                    Point::new(
                        rng.random_range(-5.0..5.0),
                        rng.random_range(-5.0..5.0),
                        rng.random_range(-2.0..2.0),
                        1.0,
                    )
                })
                .collect();
            PointCloud::new(pts).unwrap()
        };
        let (a, b) = (cloud(), cloud());
        let ab = brute_directed(&a.points, &b.points);
        let ba = brute_directed(&b.points, &a.points);
        if chamfer(&a, &b, Dims::D3).unwrap() != 0.5 * (ab + ba)
            || modified_hausdorff(&a, &b, Dims::D3).unwrap() != ab.max(ba)
        {
            mismatches += 1;
        }
    }

    let grid = ImagingGrid {
        azimuth_bins: 256,
        elevation_bins: 16,
        range_bins: 256,
        ..ImagingGrid::default()
    };
    let cells = grid.azimuth_bins * grid.elevation_bins * grid.range_bins;
    let magnitudes: Vec<f64> = (0..cells).map(|_| Exp1.sample(&mut rng)).map(|p: f64| p.sqrt()).collect();
    let heat = Heatmap3D::from_magnitudes(grid, 0.0375, magnitudes).unwrap();
    let params = CfarParams {
        pfa: 1e-3,
        peak_filter: PeakFilter::None,
        min_relative: 0.0,
        ..CfarParams::default()
    };
    let detections = cfar_detect(&heat, &params).unwrap().len() as f64;
    let reach = params.guard + params.train;
    let tested = (grid.azimuth_bins * grid.elevation_bins * (grid.range_bins - 2 * reach)) as f64;
    let expected = tested * params.pfa;
    let sigma = (tested * params.pfa * (1.0 - params.pfa)).sqrt();
    let z = (detections - expected) / sigma;
    Outcome::new(
        mismatches == 0 && z.abs() <= 3.0,
        format!(
            "{mismatches}/100 metric mismatches; CFAR {detections} false alarms vs {expected:.0} expected (z = {z:+.2}, |z| ≤ 3)"
        ),
    )
}

fn golden_scenario() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/golden.toml")
}

fn c9_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut digests: Vec<(String, Vec<(String, String)>)> = Vec::new();
    for threads in ["1", "4", "0"] {
        let out = dir.path().join(format!("t{threads}"));
        let o = Command::new(env!("CARGO_BIN_EXE_cylsar"))
            .args(["--threads", threads, "pipeline"])
            .arg(golden_scenario())
            .arg("--out-dir")
            .arg(&out)
            .output()
            .unwrap();
        if !o.status.success() {
            return Outcome::new(false, format!("pipeline failed: {}", String::from_utf8_lossy(&o.stderr)));
        }
        let mut files: Vec<(String, String)> = fs::read_dir(&out)
            .unwrap()
            .map(|e| e.unwrap().path())
            .filter(|p| p.is_file())
            .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), sha256_file(&p).unwrap()))
            .collect();
        files.sort();
        digests.push((String::from_utf8_lossy(&o.stdout).into_owned(), files));
    }
    let identical = digests.windows(2).all(|w| w[0] == w[1]);
    let count = digests[0].1.len();
    Outcome::new(
        identical && count > 0,
        format!("{count} output files and report identical across 1, 4 and all threads: {identical}"),
    )
}
