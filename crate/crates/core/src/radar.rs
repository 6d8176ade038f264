//! Radar geometry, waveform configuration and closed-form resolutions.
//!
//! Frame convention: right-handed, z up, origin at the rotation centre at
//! `t = 0`. Angles are radians everywhere in this crate; conversion from
//! degrees happens at the CLI and scenario-file boundary.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geometry::{wrap_tau, Vec3};
use crate::{Error, Result, SPEED_OF_LIGHT};

/// Rotating-array radar configuration.
///
/// Serialized to TOML with key names identical to the field names, SI units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RadarConfig {
    pub rotation_radius_m: f64,
    pub angular_speed_rad_s: f64,
    /// Heights of the vertical array elements, ascending, spaced by λ/2.
    pub antenna_heights_m: Vec<f64>,
    pub wavelength_m: f64,
    pub bandwidth_hz: f64,
    pub samples_per_chirp: usize,
    pub chirps_per_rotation: usize,
    pub max_range_m: f64,
    /// Total azimuth extent of chirps summed per imaging direction.
    pub fov_window_rad: f64,
}

impl Default for RadarConfig {
    fn default() -> Self {
        let wavelength_m = 0.0038;
        RadarConfig {
            rotation_radius_m: 0.08,
            angular_speed_rad_s: 4.0 * PI,
            antenna_heights_m: uniform_heights(8, wavelength_m),
            wavelength_m,
            bandwidth_hz: 4e9,
            samples_per_chirp: 256,
            chirps_per_rotation: 1200,
            max_range_m: 10.0,
            fov_window_rad: FRAC_PI_2,
        }
    }
}

/// `count` element heights starting at 0 with λ/2 spacing.
pub fn uniform_heights(count: usize, wavelength_m: f64) -> Vec<f64> {
    (0..count).map(|a| a as f64 * wavelength_m / 2.0).collect()
}

impl RadarConfig {
    /// Checks every invariant of the configuration.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.rotation_radius_m > 0.0 && self.rotation_radius_m.is_finite()) {
            return bad(format!(
                "rotation_radius_m must be > 0, got {}",
                self.rotation_radius_m
            ));
        }
        if !(self.angular_speed_rad_s > 0.0 && self.angular_speed_rad_s.is_finite()) {
            return bad(format!(
                "angular_speed_rad_s must be > 0, got {}",
                self.angular_speed_rad_s
            ));
        }
        if !(self.wavelength_m > 0.0 && self.wavelength_m.is_finite()) {
            return bad(format!("wavelength_m must be > 0, got {}", self.wavelength_m));
        }
        if !(self.bandwidth_hz > 0.0 && self.bandwidth_hz.is_finite()) {
            return bad(format!("bandwidth_hz must be > 0, got {}", self.bandwidth_hz));
        }
        if self.samples_per_chirp < 2 {
            return bad("samples_per_chirp must be at least 2".into());
        }
        if self.chirps_per_rotation < 2 {
            return bad("chirps_per_rotation must be at least 2".into());
        }
        if !(self.max_range_m > 0.0) {
            return bad(format!("max_range_m must be > 0, got {}", self.max_range_m));
        }
        if !(self.fov_window_rad > 0.0 && self.fov_window_rad <= TAU) {
            return bad(format!(
                "fov_window_rad must lie in (0, 2π], got {}",
                self.fov_window_rad
            ));
        }
        if self.antenna_heights_m.is_empty() {
            return bad("antenna_heights_m must list at least one antenna".into());
        }
        let spacing = self.wavelength_m / 2.0;
        for (a, pair) in self.antenna_heights_m.windows(2).enumerate() {
            let step = pair[1] - pair[0];
            if step <= 0.0 {
                return bad(format!(
                    "antenna_heights_m must be strictly increasing (entry {})",
                    a + 1
                ));
            }
            if ((step - spacing) / spacing).abs() > 1e-12 {
                return bad(format!(
                    "antenna spacing {step} at entry {} differs from λ/2 = {spacing}",
                    a + 1
                ));
            }
        }
        Ok(())
    }

    pub fn num_antennas(&self) -> usize {
        self.antenna_heights_m.len()
    }

    pub fn rotation_period_s(&self) -> f64 {
        TAU / self.angular_speed_rad_s
    }

    /// Slow-time sampling interval (one chirp, stop-and-hop).
    pub fn chirp_interval_s(&self) -> f64 {
        self.rotation_period_s() / self.chirps_per_rotation as f64
    }

    /// Slow-time sample rate in Hz.
    pub fn slow_time_rate_hz(&self) -> f64 {
        1.0 / self.chirp_interval_s()
    }

    /// Start time of chirp `k`.
    pub fn chirp_time(&self, k: usize) -> f64 {
        k as f64 / (self.chirps_per_rotation as f64 * self.angular_speed_rad_s / TAU)
    }

    /// Range bin width c / 2B.
    pub fn range_resolution_m(&self) -> f64 {
        SPEED_OF_LIGHT / (2.0 * self.bandwidth_hz)
    }

    /// Largest range representable by complex IF sampling: N · ΔR.
    pub fn unambiguous_range_m(&self) -> f64 {
        self.samples_per_chirp as f64 * self.range_resolution_m()
    }

    /// Slope of the rotation-compensated spectrogram ridges, 2ω²r/λ (Hz/s).
    pub fn ridge_slope_hz_per_s(&self) -> f64 {
        2.0 * self.angular_speed_rad_s.powi(2) * self.rotation_radius_m / self.wavelength_m
    }

    /// Wavelength seen by the slow-time phase of a range bin.
    ///
    /// After a symmetric-window range FFT the phase of the peak bin is
    /// referenced to the middle fast-time sample, so a distance change `δd`
    /// turns the phase by `2π δd (2/λ + (N−1)/(2N ΔR))`. With the default
    /// chirp that is 2.5 % more than `4π δd/λ`.
    pub fn slow_time_wavelength_m(&self) -> f64 {
        let n = self.samples_per_chirp as f64;
        let per_m = 2.0 / self.wavelength_m + (n - 1.0) / (2.0 * n * self.range_resolution_m());
        2.0 / per_m
    }

    /// [`ridge_slope_hz_per_s`](Self::ridge_slope_hz_per_s) with the
    /// slow-time wavelength, i.e. what a range-bin spectrogram shows.
    pub fn observed_ridge_slope_hz_per_s(&self) -> f64 {
        2.0 * self.angular_speed_rad_s.powi(2) * self.rotation_radius_m / self.slow_time_wavelength_m()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RadarConfig =
            toml::from_str(text).map_err(|e| Error::Format(format!("radar config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("radar config is always serializable")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()).map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

/// Position of antenna `a` at time `t` for a rotation-only platform.
pub fn antenna_position(cfg: &RadarConfig, a: usize, t: f64) -> Result<Vec3> {
    let h = *cfg
        .antenna_heights_m
        .get(a)
        .ok_or(Error::IndexOutOfRange {
            what: "antenna",
            index: a,
            len: cfg.num_antennas(),
        })?;
    let (s, c) = (cfg.angular_speed_rad_s * t).sin_cos();
    Ok(Vec3::new(
        cfg.rotation_radius_m * c,
        cfg.rotation_radius_m * s,
        h,
    ))
}

/// An imaging direction: azimuth in `[0, 2π)`, elevation in `[-π/2, π/2]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Direction {
    azimuth_rad: f64,
    elevation_rad: f64,
}

impl Direction {
    /// Builds a direction, wrapping the azimuth into `[0, 2π)`.
    pub fn new(azimuth_rad: f64, elevation_rad: f64) -> Result<Self> {
        if !azimuth_rad.is_finite() || !(-FRAC_PI_2..=FRAC_PI_2).contains(&elevation_rad) {
            return Err(Error::InvalidInput(format!(
                "direction ({azimuth_rad}, {elevation_rad}) out of range"
            )));
        }
        Ok(Direction {
            azimuth_rad: wrap_tau(azimuth_rad),
            elevation_rad,
        })
    }

    pub fn azimuth_rad(&self) -> f64 {
        self.azimuth_rad
    }

    pub fn elevation_rad(&self) -> f64 {
        self.elevation_rad
    }

    pub fn unit_vector(&self) -> Vec3 {
        direction_vector(self)
    }
}

/// `(cos φ cos θ, cos φ sin θ, sin φ)`.
pub fn direction_vector(d: &Direction) -> Vec3 {
    let (sa, ca) = d.azimuth_rad.sin_cos();
    let (se, ce) = d.elevation_rad.sin_cos();
    Vec3::new(ce * ca, ce * sa, se)
}

/// Theoretical resolution of the cylindrical array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolutionReport {
    pub azimuth_res_rad: f64,
    pub elevation_res_rad: f64,
    pub range_res_m: f64,
}

/// Azimuth 0.36·λ/r (circular aperture), elevation 1.98/A (λ/2 linear
/// array), range c/2B.
pub fn theoretical_resolutions(cfg: &RadarConfig) -> ResolutionReport {
    ResolutionReport {
        azimuth_res_rad: 0.36 * cfg.wavelength_m / cfg.rotation_radius_m,
        elevation_res_rad: 1.98 / cfg.num_antennas() as f64,
        range_res_m: cfg.range_resolution_m(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn antenna_position_examples() {
        let cfg = RadarConfig::default();
        let p = antenna_position(&cfg, 0, 0.0).unwrap();
        assert_eq!(p, Vec3::new(0.08, 0.0, 0.0));

        let q = antenna_position(&cfg, 3, 0.125).unwrap();
        assert!(q.x.abs() < 1e-15);
        assert!((q.y - 0.08).abs() < 1e-15);
        assert_eq!(q.z, cfg.antenna_heights_m[3]);

        let full = antenna_position(&cfg, 0, 0.5).unwrap();
        assert!((full - p).norm() < 1e-12);
    }

    #[test]
    fn antenna_index_out_of_range() {
        let cfg = RadarConfig::default();
        assert!(matches!(
            antenna_position(&cfg, 8, 0.0),
            Err(Error::IndexOutOfRange { index: 8, len: 8, .. })
        ));
    }

    #[test]
    fn direction_examples() {
        let v = direction_vector(&Direction::new(0.0, 0.0).unwrap());
        assert_eq!(v, Vec3::new(1.0, 0.0, 0.0));
        let v = direction_vector(&Direction::new(FRAC_PI_2, 0.0).unwrap());
        assert!((v - Vec3::new(0.0, 1.0, 0.0)).norm() < 1e-15);
        let v = direction_vector(&Direction::new(1.234, FRAC_PI_2).unwrap());
        assert!((v - Vec3::new(0.0, 0.0, 1.0)).norm() < 1e-15);
        assert!(Direction::new(0.0, 1.6).is_err());
        assert!((Direction::new(-FRAC_PI_2, 0.0).unwrap().azimuth_rad() - 1.5 * PI).abs() < 1e-15);
    }

    #[test]
    fn paper_resolutions() {
        let r = theoretical_resolutions(&RadarConfig::default());
        // 0.36·0.0038/0.08 = 0.98°, quoted as 0.96°; accepted within 3 %
        let az_deg = r.azimuth_res_rad.to_degrees();
        assert!((az_deg - 0.96).abs() / 0.96 < 0.03, "{az_deg}");
        assert!((r.elevation_res_rad - 0.2475).abs() < 1e-12);
        assert!((r.elevation_res_rad.to_degrees() - 14.2).abs() < 0.05);
        assert!((r.range_res_m - 0.0375).abs() < 1e-4);
    }

    #[test]
    fn resolution_scaling_is_exact() {
        let base = RadarConfig::default();
        let r0 = theoretical_resolutions(&base);
        let mut wide = base.clone();
        wide.rotation_radius_m *= 2.0;
        wide.bandwidth_hz *= 2.0;
        let r1 = theoretical_resolutions(&wide);
        assert_eq!(r1.azimuth_res_rad, r0.azimuth_res_rad / 2.0);
        assert_eq!(r1.range_res_m, r0.range_res_m / 2.0);
    }

    #[test]
    fn validation_catches_bad_spacing() {
        let mut cfg = RadarConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.antenna_heights_m[3] += 1e-6;
        assert!(cfg.validate().is_err());
        let mut cfg = RadarConfig::default();
        cfg.fov_window_rad = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = RadarConfig::default();
        cfg.rotation_radius_m = -0.1;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn config_toml_round_trip() {
        let cfg = RadarConfig::default();
        let text = cfg.to_toml();
        assert!(text.contains("rotation_radius_m = 0.08"));
        assert_eq!(RadarConfig::from_toml(&text).unwrap(), cfg);
        // unspecified keys fall back to defaults
        let partial = RadarConfig::from_toml("rotation_radius_m = 0.1\n").unwrap();
        assert_eq!(partial.rotation_radius_m, 0.1);
        assert_eq!(partial.samples_per_chirp, 256);
        assert!(RadarConfig::from_toml("rotation_radius = 0.1\n").is_err());
    }

    #[test]
    fn slow_time_grid() {
        let cfg = RadarConfig::default();
        assert!((cfg.rotation_period_s() - 0.5).abs() < 1e-15);
        assert!((cfg.chirp_time(600) - 0.25).abs() < 1e-15);
        assert!((cfg.slow_time_rate_hz() - 2400.0).abs() < 1e-9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]

        #[test]
        fn antenna_position_is_periodic(t in -10.0f64..10.0, a in 0usize..8) {
            let cfg = RadarConfig::default();
            let p0 = antenna_position(&cfg, a, t).unwrap();
            let p1 = antenna_position(&cfg, a, t + cfg.rotation_period_s()).unwrap();
            prop_assert!((p0 - p1).norm() <= 1e-12 * cfg.rotation_radius_m.max(1.0) * (1.0 + t.abs()));
        }

        #[test]
        fn direction_vector_has_unit_norm(az in -10.0f64..10.0, el in -FRAC_PI_2..=FRAC_PI_2) {
            let v = direction_vector(&Direction::new(az, el).unwrap());
            prop_assert!((v.norm() - 1.0).abs() < 1e-12);
        }
    }
}
