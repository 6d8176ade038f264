//! Azimuth beam shape of the cylindrical aperture.
//!
//! The closed form is `2π J0((4πr/λ) sin(θs/2))`, whose half-power full
//! width is `4·asin(x0·λ/(4πr)) ≈ 0.36 λ/r` with `J0(x0)² = 1/2`. The numeric
//! path integrates the same aperture sum with the antenna angle limited to
//! a FOV window and weighted by a radiation pattern.

use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::imaging::{beamform_static, ImagingGrid, ImagingOptions};
use crate::radar::RadarConfig;
use crate::scene::{simulate, RadiationPattern, Reflector, Trajectory};
use crate::special::{bessel_j0, j0_half_power_argument};
use crate::{Complex, Error, Result};

/// Simpson nodes per full turn used by [`beam_shape_numeric`].
pub const DEFAULT_NODES_PER_TURN: usize = 8192;

/// Range of the two-point experiment, metres from the rotation centre.
pub const TWO_POINT_RANGE_M: f64 = 1.0;

/// Phase convention of the aperture integral.
///
/// `OneWay` uses `2πr(…)/λ`, which reproduces the closed form above exactly.
/// `RoundTrip` uses `4πr(…)/λ`, the monostatic phase the beamformers apply;
/// its beam is half as wide.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Propagation {
    #[default]
    OneWay,
    RoundTrip,
}

impl Propagation {
    fn factor(self) -> f64 {
        match self {
            Propagation::OneWay => 1.0,
            Propagation::RoundTrip => 2.0,
        }
    }
}

/// Power response over steering offsets, normalized to a peak of 1.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamCurve {
    pub thetas: Vec<f64>,
    pub response: Vec<f64>,
}

impl BeamCurve {
    /// Normalizes `response` to its maximum.
    pub fn new(thetas: Vec<f64>, response: Vec<f64>) -> Result<Self> {
        if thetas.len() != response.len() || thetas.len() < 3 {
            return Err(Error::DimensionMismatch(format!(
                "beam curve needs >= 3 matching samples, got {} thetas and {} values",
                thetas.len(),
                response.len()
            )));
        }
        if thetas.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput("beam curve thetas must increase".into()));
        }
        let peak = response.iter().copied().fold(0.0, f64::max);
        let response = if peak > 0.0 {
            response.iter().map(|v| v / peak).collect()
        } else {
            response
        };
        Ok(BeamCurve { thetas, response })
    }

    pub fn step(&self) -> f64 {
        (self.thetas[self.thetas.len() - 1] - self.thetas[0]) / (self.thetas.len() - 1) as f64
    }

    /// True when the sampling step exceeds a twentieth of the 3-dB width,
    /// or when no width can be measured.
    pub fn grid_is_coarse(&self) -> bool {
        match beamwidth_3db(self) {
            Ok(w) => self.step() > w / 20.0,
            Err(_) => true,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("theta_rad,response\n");
        for (t, v) in self.thetas.iter().zip(&self.response) {
            let _ = writeln!(s, "{t:.9},{v:.12e}");
        }
        s
    }
}

/// `count` evenly spaced offsets over `[-half_extent, half_extent]`.
pub fn theta_grid(half_extent_rad: f64, count: usize) -> Vec<f64> {
    let count = count.max(2);
    (0..count)
        .map(|i| -half_extent_rad + 2.0 * half_extent_rad * i as f64 / (count - 1) as f64)
        .collect()
}

/// Closed-form aperture response `2π J0((4πr/λ) sin(θs/2))`.
pub fn beam_shape_analytic(theta_s: f64, r: f64, lambda: f64) -> f64 {
    TAU * bessel_j0(4.0 * PI * r / lambda * (theta_s / 2.0).sin())
}

/// Power curve of the closed form on a theta grid.
pub fn analytic_curve(r: f64, lambda: f64, thetas: &[f64]) -> Result<BeamCurve> {
    let response = thetas
        .iter()
        .map(|&t| beam_shape_analytic(t, r, lambda).powi(2))
        .collect();
    BeamCurve::new(thetas.to_vec(), response)
}

/// Half-power full width of the closed form, `4·asin(x0·λ/(4πr))`.
pub fn analytic_beamwidth(r: f64, lambda: f64) -> f64 {
    4.0 * (j0_half_power_argument() * lambda / (4.0 * PI * r)).asin()
}

/// FOV-windowed aperture integral with the one-way phase convention.
pub fn beam_shape_numeric(
    r: f64,
    lambda: f64,
    fov_window_rad: f64,
    pattern: &RadiationPattern,
    thetas: &[f64],
) -> Result<BeamCurve> {
    beam_shape_numeric_with(
        r,
        lambda,
        fov_window_rad,
        pattern,
        thetas,
        Propagation::OneWay,
        DEFAULT_NODES_PER_TURN,
    )
}

/// `E(θs) = ∫_{−w/2}^{w/2} g(θ − θs) exp{j·p·2πr(cos θ − cos(θs − θ))/λ} dθ`
/// by composite Simpson, returned as normalized `|E|²`.
pub fn beam_shape_numeric_with(
    r: f64,
    lambda: f64,
    fov_window_rad: f64,
    pattern: &RadiationPattern,
    thetas: &[f64],
    propagation: Propagation,
    nodes_per_turn: usize,
) -> Result<BeamCurve> {
    if !(fov_window_rad > 0.0 && fov_window_rad <= TAU + 1e-12) {
        return Err(Error::InvalidInput(format!(
            "FOV window must be in (0, 2π], got {fov_window_rad}"
        )));
    }
    if !(r >= 0.0 && lambda > 0.0) {
        return Err(Error::InvalidInput(format!("need r >= 0 and λ > 0, got {r}, {lambda}")));
    }
    pattern.validate()?;
    let mut intervals = ((nodes_per_turn as f64 * fov_window_rad / TAU).ceil() as usize).max(2);
    intervals += intervals % 2;
    let h = fov_window_rad / intervals as f64;
    let start = -fov_window_rad / 2.0;
    let k = propagation.factor() * TAU * r / lambda;
    let response = thetas
        .par_iter()
        .map(|&ts| {
            let mut acc = Complex::new(0.0, 0.0);
            for i in 0..=intervals {
                let th = start + i as f64 * h;
                let w = if i == 0 || i == intervals {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                let g = pattern.gain(th - ts);
                if g != 0.0 {
                    acc += Complex::from_polar(w * g, k * (th.cos() - (ts - th).cos()));
                }
            }
            (acc * (h / 3.0)).norm_sqr()
        })
        .collect();
    BeamCurve::new(thetas.to_vec(), response)
}

/// Width between the half-power crossings bracketing the global maximum,
/// linearly interpolated.
pub fn beamwidth_3db(curve: &BeamCurve) -> Result<f64> {
    let (t, v) = (&curve.thetas, &curve.response);
    let peak = v
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |b, (i, &x)| if x > b.1 { (i, x) } else { b });
    let (ip, vmax) = peak;
    if !(vmax > 0.0) {
        return Err(Error::Numerical("beam curve has no positive peak".into()));
    }
    let half = 0.5 * vmax;
    let cross = |i: usize, j: usize| t[i] + (half - v[i]) * (t[j] - t[i]) / (v[j] - v[i]);
    let left = (1..=ip).rev().find(|&i| v[i - 1] < half).map(|i| cross(i - 1, i));
    let right = (ip..v.len() - 1).find(|&i| v[i + 1] < half).map(|i| cross(i, i + 1));
    match (left, right) {
        (Some(l), Some(r)) => Ok(r - l),
        _ => Err(Error::Numerical(
            "no half-power crossing within the curve extent".into(),
        )),
    }
}

/// Half-power width of the windowed numeric curve for each FOV, sampled
/// finely enough around the main lobe.
pub fn fov_sweep(
    r: f64,
    lambda: f64,
    pattern: &RadiationPattern,
    fovs_rad: &[f64],
    propagation: Propagation,
) -> Result<Vec<(f64, f64)>> {
    let guess = analytic_beamwidth(r, lambda).min(0.5);
    fovs_rad
        .iter()
        .map(|&fov| {
            // narrow windows widen the lobe roughly as 1/fov
            let half = (guess * 4.0 * (TAU / fov).max(1.0)).min(PI / 2.0);
            let thetas = theta_grid(half, 1601);
            let curve = beam_shape_numeric_with(
                r,
                lambda,
                fov,
                pattern,
                &thetas,
                propagation,
                DEFAULT_NODES_PER_TURN,
            )?;
            Ok((fov, beamwidth_3db(&curve)?))
        })
        .collect()
}

/// Azimuth profile of two equal reflectors imaged by the static beamformer.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoPointProfile {
    pub azimuths_rad: Vec<f64>,
    /// Peak power over range per azimuth bin.
    pub power: Vec<f64>,
}

impl TwoPointProfile {
    /// Two local maxima, both at least half the global maximum, separated
    /// by a saddle at most half the weaker one.
    pub fn is_resolved(&self) -> bool {
        let p = &self.power;
        let mut maxima: Vec<usize> = (1..p.len().saturating_sub(1))
            .filter(|&i| p[i] > p[i - 1] && p[i] >= p[i + 1])
            .collect();
        if maxima.len() < 2 {
            return false;
        }
        maxima.sort_by(|&a, &b| p[b].total_cmp(&p[a]));
        let (i, j) = (maxima[0].min(maxima[1]), maxima[0].max(maxima[1]));
        let top = p[maxima[0]];
        let weaker = p[i].min(p[j]);
        if weaker < 0.5 * top {
            return false;
        }
        let saddle = p[i..=j].iter().copied().fold(f64::INFINITY, f64::min);
        saddle <= 0.5 * weaker
    }
}

/// Images two unit reflectors at [`TWO_POINT_RANGE_M`] placed symmetrically
/// about 90° azimuth, noise free, with the default radiation pattern.
pub fn two_point_profile(cfg: &RadarConfig, separation_rad: f64) -> Result<TwoPointProfile> {
    if !(separation_rad > 0.0 && separation_rad < PI / 2.0) {
        return Err(Error::InvalidInput(format!(
            "separation must be in (0, π/2), got {separation_rad}"
        )));
    }
    let centre = PI / 2.0;
    let scene = [
        Reflector::planar(TWO_POINT_RANGE_M, centre - separation_rad / 2.0),
        Reflector::planar(TWO_POINT_RANGE_M, centre + separation_rad / 2.0),
    ];
    let cube = simulate(
        &scene,
        &Trajectory::stationary(),
        cfg,
        &RadiationPattern::default(),
        0.0,
        0,
    )?;
    let step = 0.025f64.to_radians();
    let half = separation_rad / 2.0 + 4f64.to_radians();
    let bins = (2.0 * half / step).ceil() as usize;
    let range_bin = (TWO_POINT_RANGE_M / cfg.range_resolution_m()).round() as usize;
    let grid = ImagingGrid {
        azimuth_bins: bins,
        elevation_bins: 1,
        range_bins: (range_bin + 8).min(cfg.samples_per_chirp),
        azimuth_min_rad: centre - half,
        azimuth_max_rad: centre - half + bins as f64 * step,
        elevation_min_rad: 0.0,
        elevation_max_rad: step,
    };
    let heat = beamform_static(&cube, &grid, &ImagingOptions::default())?;
    let power = (0..bins)
        .map(|i| heat.ray(i, 0).iter().fold(0.0f64, |m, &x| m.max(x * x)))
        .collect();
    Ok(TwoPointProfile {
        azimuths_rad: (0..bins).map(|i| grid.azimuth(i)).collect(),
        power,
    })
}

pub fn measure_resolution_two_point(cfg: &RadarConfig, separation_rad: f64) -> Result<bool> {
    Ok(two_point_profile(cfg, separation_rad)?.is_resolved())
}

/// Smallest resolved separation in `[lo, hi]` by bisection, assuming
/// `hi` resolves and `lo` does not.
pub fn minimum_resolved_separation(cfg: &RadarConfig, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    if measure_resolution_two_point(cfg, lo)? {
        return Err(Error::Numerical(format!("{lo} rad is already resolved")));
    }
    if !measure_resolution_two_point(cfg, hi)? {
        return Err(Error::Numerical(format!("{hi} rad is not resolved")));
    }
    let (mut lo, mut hi) = (lo, hi);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if measure_resolution_two_point(cfg, mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}
