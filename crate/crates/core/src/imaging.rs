//! Coherent 3D beamforming over the synthetic cylindrical aperture.
//!
//! Three beamformers share one contract: for every (azimuth, elevation)
//! cell, sum the chirps whose boresight lies within `fov_window / 2` of the
//! cell azimuth, steer each by the round-trip projection of the antenna
//! position onto the look direction, then take the windowed range FFT.
//!
//! * [`beamform_static`] assumes a stationary platform.
//! * [`beamform_compensated`] displaces every antenna by `v·t`.
//! * [`beamform_fast`] factors the sum into an elevation step over the
//!   vertical array followed by a planar azimuth step; it is algebraically
//!   identical to the compensated form at roughly `1/A` of the cost.
//!
//! Before steering, each chirp is shifted in fast time by the projection of
//! its antenna's horizontal position (rotation radius plus platform
//! displacement) onto boresight, so range bin `k` is range `k·ΔR` measured
//! from the rotation centre at `t = 0`.
//!
//! Cost per heatmap, with Θ·Φ cells, W chirps per window and N samples:
//! compensated `O(ΘΦWAN)` multiply-adds plus `O(ΘΦ N log N)` FFTs, fast
//! `O(ΦTAN + ΘΦWN)`. Delay-and-sum phase steering would be `O(ΘΦWAN²)`;
//! it is not implemented.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, TAU};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dsp::WindowedFft;
use crate::geometry::{wrap_pi, Vec3};
use crate::pointcloud::RangeImage;
use crate::radar::{direction_vector, Direction, RadarConfig};
use crate::scene::{RawCube, Trajectory};
use crate::{Complex, Error, Result};

pub use crate::dsp::Window as RangeWindow;

/// Upper bound on platform speed accepted by the compensated beamformers.
pub const MAX_COMPENSATED_SPEED_M_S: f64 = 2.0;

/// Angular sampling of the heatmap. Bins are half-open:
/// `azimuth(i) = azimuth_min + i·(azimuth_max − azimuth_min)/azimuth_bins`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImagingGrid {
    pub azimuth_bins: usize,
    pub elevation_bins: usize,
    pub range_bins: usize,
    pub azimuth_min_rad: f64,
    pub azimuth_max_rad: f64,
    pub elevation_min_rad: f64,
    pub elevation_max_rad: f64,
}

impl Default for ImagingGrid {
    /// 512 × 64 × 256 over the full circle and ±45° elevation.
    fn default() -> Self {
        ImagingGrid {
            azimuth_bins: 512,
            elevation_bins: 64,
            range_bins: 256,
            azimuth_min_rad: 0.0,
            azimuth_max_rad: TAU,
            elevation_min_rad: -FRAC_PI_4,
            elevation_max_rad: FRAC_PI_4,
        }
    }
}

impl ImagingGrid {
    pub fn validate(&self) -> Result<()> {
        if self.azimuth_bins == 0 || self.elevation_bins == 0 || self.range_bins == 0 {
            return Err(Error::InvalidConfig("grid bin counts must be >= 1".into()));
        }
        let az_span = self.azimuth_max_rad - self.azimuth_min_rad;
        if !(az_span > 0.0 && az_span <= TAU + 1e-12) || !self.azimuth_min_rad.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "azimuth extent [{}, {}) must be non-empty and at most 2π",
                self.azimuth_min_rad, self.azimuth_max_rad
            )));
        }
        if !(self.elevation_min_rad >= -FRAC_PI_2
            && self.elevation_max_rad <= FRAC_PI_2
            && self.elevation_max_rad > self.elevation_min_rad)
        {
            return Err(Error::InvalidConfig(format!(
                "elevation extent [{}, {}) must lie within [-π/2, π/2]",
                self.elevation_min_rad, self.elevation_max_rad
            )));
        }
        Ok(())
    }

    pub fn azimuth_step(&self) -> f64 {
        (self.azimuth_max_rad - self.azimuth_min_rad) / self.azimuth_bins as f64
    }

    pub fn elevation_step(&self) -> f64 {
        (self.elevation_max_rad - self.elevation_min_rad) / self.elevation_bins as f64
    }

    pub fn azimuth(&self, i: usize) -> f64 {
        self.azimuth_min_rad + i as f64 * self.azimuth_step()
    }

    pub fn elevation(&self, j: usize) -> f64 {
        self.elevation_min_rad + j as f64 * self.elevation_step()
    }

    pub fn direction(&self, i: usize, j: usize) -> Direction {
        Direction::new(self.azimuth(i), self.elevation(j)).expect("grid validated")
    }

    /// Nearest azimuth bin to an angle, with wrap-around on a full circle.
    pub fn azimuth_index(&self, azimuth_rad: f64) -> usize {
        let step = self.azimuth_step();
        let full = (self.azimuth_max_rad - self.azimuth_min_rad - TAU).abs() < 1e-9;
        let off = if full {
            (azimuth_rad - self.azimuth_min_rad).rem_euclid(TAU)
        } else {
            azimuth_rad - self.azimuth_min_rad
        };
        let i = (off / step).round();
        if full {
            (i as usize) % self.azimuth_bins
        } else {
            i.clamp(0.0, (self.azimuth_bins - 1) as f64) as usize
        }
    }

    /// Circular distance in azimuth bins between two bin indices.
    pub fn azimuth_bin_distance(&self, a: usize, b: usize) -> usize {
        let d = a.abs_diff(b);
        let full = (self.azimuth_max_rad - self.azimuth_min_rad - TAU).abs() < 1e-9;
        if full {
            d.min(self.azimuth_bins - d)
        } else {
            d
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ImagingOptions {
    pub window: RangeWindow,
    /// Retain the complex range spectra alongside the magnitudes.
    pub keep_complex: bool,
}

/// Beamformed magnitudes laid out `(azimuth, elevation, range)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap3D {
    magnitudes: Vec<f64>,
    pub grid: ImagingGrid,
    pub range_resolution_m: f64,
    complex: Option<Vec<Complex>>,
}

impl Heatmap3D {
    pub fn from_magnitudes(
        grid: ImagingGrid,
        range_resolution_m: f64,
        magnitudes: Vec<f64>,
    ) -> Result<Self> {
        grid.validate()?;
        let expected = grid.azimuth_bins * grid.elevation_bins * grid.range_bins;
        if magnitudes.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "{} magnitudes for a grid of {expected} cells",
                magnitudes.len()
            )));
        }
        if magnitudes.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(Error::InvalidInput(
                "heatmap magnitudes must be finite and non-negative".into(),
            ));
        }
        Ok(Heatmap3D {
            magnitudes,
            grid,
            range_resolution_m,
            complex: None,
        })
    }

    pub fn magnitudes(&self) -> &[f64] {
        &self.magnitudes
    }

    /// Rounds magnitudes to `f32`, the on-disk precision, so a saved heatmap
    /// reloads bit-identically.
    pub fn round_to_f32(&mut self) {
        for m in &mut self.magnitudes {
            *m = *m as f32 as f64;
        }
    }

    /// Complex range spectra, present when imaged with `keep_complex`.
    pub fn complex(&self) -> Option<&[Complex]> {
        self.complex.as_deref()
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.grid.elevation_bins + j) * self.grid.range_bins + k
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.magnitudes[self.index(i, j, k)]
    }

    /// Range profile of one (azimuth, elevation) cell.
    pub fn ray(&self, i: usize, j: usize) -> &[f64] {
        let start = self.index(i, j, 0);
        &self.magnitudes[start..start + self.grid.range_bins]
    }

    pub fn range_of(&self, k: usize) -> f64 {
        k as f64 * self.range_resolution_m
    }

    pub fn max(&self) -> f64 {
        self.magnitudes.iter().copied().fold(0.0, f64::max)
    }

    /// `(azimuth, elevation, range)` indices of the strongest cell.
    pub fn argmax(&self) -> (usize, usize, usize) {
        let (flat, _) = self
            .magnitudes
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &m)| {
                if m > best.1 {
                    (i, m)
                } else {
                    best
                }
            });
        let r = self.grid.range_bins;
        let e = self.grid.elevation_bins;
        (flat / (r * e), (flat / r) % e, flat % r)
    }

    /// Range of the strongest return along every ray, as an
    /// azimuth-by-elevation image (columns azimuth, rows elevation from the
    /// top).
    pub fn peak_range_image(&self) -> RangeImage {
        let (w, h) = (self.grid.azimuth_bins, self.grid.elevation_bins);
        let mut data = vec![0.0; w * h];
        for i in 0..w {
            for j in 0..h {
                let ray = self.ray(i, j);
                let k = ray
                    .iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |b, (k, &m)| if m > b.1 { (k, m) } else { b })
                    .0;
                data[(h - 1 - j) * w + i] = self.range_of(k);
            }
        }
        RangeImage::new(w, h, data).expect("dimensions consistent")
    }
}

/// Windowed FFT magnitude of one fast-time sequence; bin `k` ↔ range `k·ΔR`.
pub fn range_profile(beam: &[Complex], range_bins: usize, window: RangeWindow) -> Result<Vec<f64>> {
    if beam.is_empty() || range_bins > beam.len() {
        return Err(Error::DimensionMismatch(format!(
            "range profile needs N >= range_bins, got N = {} and {range_bins} bins",
            beam.len()
        )));
    }
    let f = WindowedFft::new(window, beam.len(), beam.len());
    let mut out = Vec::with_capacity(beam.len());
    f.transform(beam, &mut out);
    Ok(out[..range_bins].iter().map(|c| c.norm()).collect())
}

/// Complex windowed range spectrum (all `N` bins) of one chirp.
pub fn range_spectrum(chirp: &[Complex], window: RangeWindow) -> Vec<Complex> {
    let f = WindowedFft::new(window, chirp.len(), chirp.len());
    let mut out = Vec::with_capacity(chirp.len());
    f.transform(chirp, &mut out);
    out
}

/// Delay-and-sum beamforming for a stationary platform.
pub fn beamform_static(cube: &RawCube, grid: &ImagingGrid, opts: &ImagingOptions) -> Result<Heatmap3D> {
    beamform_compensated(cube, grid, &Trajectory::stationary(), opts)
}

/// Beamforming with every antenna displaced by the platform motion `v·t`.
pub fn beamform_compensated(
    cube: &RawCube,
    grid: &ImagingGrid,
    motion: &Trajectory,
    opts: &ImagingOptions,
) -> Result<Heatmap3D> {
    let prep = Prepared::new(cube, grid, motion)?;
    let (az_bins, el_bins) = (grid.azimuth_bins, grid.elevation_bins);
    let n = prep.samples_per_chirp;
    let kappa = 2.0 * TAU / cube.cfg.wavelength_m;
    let heights = &cube.cfg.antenna_heights_m;
    let elev: Vec<(f64, f64)> = (0..el_bins).map(|j| grid.elevation(j).sin_cos()).collect();
    let fft = WindowedFft::new(opts.window, n, n);

    let slabs: Vec<AzimuthSlab> = (0..az_bins)
        .into_par_iter()
        .map(|i| {
            let (sin_az, cos_az) = grid.azimuth(i).sin_cos();
            let mut acc_re = vec![0.0; el_bins * n];
            let mut acc_im = vec![0.0; el_bins * n];
            for &k in &prep.window_chirps(grid.azimuth(i)) {
                let p = prep.positions[k];
                let horiz = cos_az * p.x + sin_az * p.y;
                for (a, &h) in heights.iter().enumerate() {
                    let (row_re, row_im) = prep.row(a, k);
                    for (j, &(sin_el, cos_el)) in elev.iter().enumerate() {
                        let (s, c) = (kappa * (cos_el * horiz + sin_el * h)).sin_cos();
                        let are = &mut acc_re[j * n..(j + 1) * n];
                        let aim = &mut acc_im[j * n..(j + 1) * n];
                        cmac(are, aim, row_re, row_im, c, s);
                    }
                }
            }
            finish_slab(&acc_re, &acc_im, el_bins, n, grid.range_bins, &fft, opts.keep_complex)
        })
        .collect();
    Ok(assemble(slabs, grid, &cube.cfg, opts.keep_complex))
}

/// Factored form of [`beamform_compensated`]: first combine the vertical
/// array per elevation, then steer the planar aperture per azimuth.
pub fn beamform_fast(
    cube: &RawCube,
    grid: &ImagingGrid,
    motion: &Trajectory,
    opts: &ImagingOptions,
) -> Result<Heatmap3D> {
    let prep = Prepared::new(cube, grid, motion)?;
    let (az_bins, el_bins) = (grid.azimuth_bins, grid.elevation_bins);
    let (antennas, chirps, n) = (prep.antennas, prep.chirps, prep.samples_per_chirp);
    let kappa = 2.0 * TAU / cube.cfg.wavelength_m;
    let heights = &cube.cfg.antenna_heights_m;
    let fft = WindowedFft::new(opts.window, n, n);
    let windows: Vec<Vec<usize>> = (0..az_bins)
        .map(|i| prep.window_chirps(grid.azimuth(i)))
        .collect();
    let az_trig: Vec<(f64, f64)> = (0..az_bins).map(|i| grid.azimuth(i).sin_cos()).collect();

    let mut per_elevation: Vec<Vec<AzimuthSlab>> = Vec::with_capacity(el_bins);
    let mut comb_re = vec![0.0; chirps * n];
    let mut comb_im = vec![0.0; chirps * n];
    for j in 0..el_bins {
        let (sin_el, cos_el) = grid.elevation(j).sin_cos();
        let weights: Vec<(f64, f64)> = heights
            .iter()
            .map(|h| {
                let (s, c) = (kappa * h * sin_el).sin_cos();
                (c, s)
            })
            .collect();
        comb_re
            .par_chunks_mut(n)
            .zip(comb_im.par_chunks_mut(n))
            .enumerate()
            .for_each(|(k, (ore, oim))| {
                ore.fill(0.0);
                oim.fill(0.0);
                for (a, &(c, s)) in weights.iter().enumerate().take(antennas) {
                    let (rre, rim) = prep.row(a, k);
                    cmac(ore, oim, rre, rim, c, s);
                }
            });
        let slabs: Vec<AzimuthSlab> = (0..az_bins)
            .into_par_iter()
            .map(|i| {
                let (sin_az, cos_az) = az_trig[i];
                let mut acc_re = vec![0.0; n];
                let mut acc_im = vec![0.0; n];
                for &k in &windows[i] {
                    let p = prep.positions[k];
                    let (s, c) = (kappa * cos_el * (cos_az * p.x + sin_az * p.y)).sin_cos();
                    cmac(
                        &mut acc_re,
                        &mut acc_im,
                        &comb_re[k * n..(k + 1) * n],
                        &comb_im[k * n..(k + 1) * n],
                        c,
                        s,
                    );
                }
                finish_slab(&acc_re, &acc_im, 1, n, grid.range_bins, &fft, opts.keep_complex)
            })
            .collect();
        per_elevation.push(slabs);
    }

    // regroup (elevation, azimuth) → (azimuth, elevation)
    let mut slabs: Vec<AzimuthSlab> = (0..az_bins)
        .map(|_| AzimuthSlab {
            mags: Vec::with_capacity(el_bins * grid.range_bins),
            spectra: opts.keep_complex.then(Vec::new),
        })
        .collect();
    for column in per_elevation {
        for (slab, part) in slabs.iter_mut().zip(column) {
            slab.mags.extend(part.mags);
            if let (Some(dst), Some(src)) = (slab.spectra.as_mut(), part.spectra) {
                dst.extend(src);
            }
        }
    }
    Ok(assemble(slabs, grid, &cube.cfg, opts.keep_complex))
}

/// `acc += (c + js) · row` on split real/imaginary buffers.
#[inline]
fn cmac(acc_re: &mut [f64], acc_im: &mut [f64], row_re: &[f64], row_im: &[f64], c: f64, s: f64) {
    for (((ar, ai), &xr), &xi) in acc_re
        .iter_mut()
        .zip(acc_im.iter_mut())
        .zip(row_re)
        .zip(row_im)
    {
        *ar += c * xr - s * xi;
        *ai += c * xi + s * xr;
    }
}

struct AzimuthSlab {
    mags: Vec<f64>,
    spectra: Option<Vec<Complex>>,
}

fn finish_slab(
    acc_re: &[f64],
    acc_im: &[f64],
    el_bins: usize,
    n: usize,
    range_bins: usize,
    fft: &WindowedFft,
    keep_complex: bool,
) -> AzimuthSlab {
    let mut mags = Vec::with_capacity(el_bins * range_bins);
    let mut spectra = keep_complex.then(|| Vec::with_capacity(el_bins * range_bins));
    let mut beam = Vec::with_capacity(n);
    let mut out = Vec::with_capacity(n);
    for j in 0..el_bins {
        beam.clear();
        beam.extend(
            acc_re[j * n..(j + 1) * n]
                .iter()
                .zip(&acc_im[j * n..(j + 1) * n])
                .map(|(&re, &im)| Complex::new(re, im)),
        );
        fft.transform(&beam, &mut out);
        mags.extend(out[..range_bins].iter().map(|c| c.norm()));
        if let Some(s) = spectra.as_mut() {
            s.extend_from_slice(&out[..range_bins]);
        }
    }
    AzimuthSlab { mags, spectra }
}

fn assemble(slabs: Vec<AzimuthSlab>, grid: &ImagingGrid, cfg: &RadarConfig, keep_complex: bool) -> Heatmap3D {
    let cells = grid.azimuth_bins * grid.elevation_bins * grid.range_bins;
    let mut magnitudes = Vec::with_capacity(cells);
    let mut complex = keep_complex.then(|| Vec::with_capacity(cells));
    for slab in slabs {
        magnitudes.extend(slab.mags);
        if let (Some(dst), Some(src)) = (complex.as_mut(), slab.spectra) {
            dst.extend(src);
        }
    }
    Heatmap3D {
        magnitudes,
        grid: *grid,
        range_resolution_m: cfg.range_resolution_m(),
        complex,
    }
}

/// Range-aligned cube in split real/imaginary layout plus the horizontal
/// antenna phase-centre track `p'_t + v'·t`.
struct Prepared {
    re: Vec<f64>,
    im: Vec<f64>,
    antennas: usize,
    chirps: usize,
    samples_per_chirp: usize,
    positions: Vec<Vec3>,
    boresight: Vec<f64>,
    half_window: f64,
}

impl Prepared {
    fn new(cube: &RawCube, grid: &ImagingGrid, motion: &Trajectory) -> Result<Self> {
        let cfg = &cube.cfg;
        cfg.validate()?;
        grid.validate()?;
        let (antennas, chirps, n) = cube.dims();
        if chirps != cfg.chirps_per_rotation
            || n != cfg.samples_per_chirp
            || antennas != cfg.num_antennas()
        {
            return Err(Error::DimensionMismatch(format!(
                "cube is {antennas}×{chirps}×{n} but its configuration describes {}×{}×{}",
                cfg.num_antennas(),
                cfg.chirps_per_rotation,
                cfg.samples_per_chirp
            )));
        }
        if grid.range_bins > n {
            return Err(Error::DimensionMismatch(format!(
                "{} range bins requested from {n} samples per chirp",
                grid.range_bins
            )));
        }
        if !(motion.speed_m_s >= 0.0 && motion.speed_m_s < MAX_COMPENSATED_SPEED_M_S)
            || !motion.heading_rad.is_finite()
        {
            return Err(Error::InvalidInput(format!(
                "motion {:.3} m/s outside [0, {MAX_COMPENSATED_SPEED_M_S}) m/s",
                motion.speed_m_s
            )));
        }

        let velocity = motion.velocity();
        let r = cfg.rotation_radius_m;
        let mut positions = Vec::with_capacity(chirps);
        let mut boresight = Vec::with_capacity(chirps);
        let mut shifts = Vec::with_capacity(chirps);
        for k in 0..chirps {
            let t = cfg.chirp_time(k);
            let angle = cfg.angular_speed_rad_s * t;
            let (s, c) = angle.sin_cos();
            let p = Vec3::new(r * c, r * s, 0.0) + velocity * t;
            shifts.push(c * p.x + s * p.y);
            positions.push(p);
            boresight.push(angle);
        }

        let total = antennas * chirps * n;
        let mut re = vec![0.0; total];
        let mut im = vec![0.0; total];
        let bin_phase = TAU / (n as f64 * cfg.range_resolution_m());
        re.par_chunks_mut(n)
            .zip(im.par_chunks_mut(n))
            .enumerate()
            .for_each(|(row, (ore, oim))| {
                let k = row % chirps;
                let a = row / chirps;
                let src = cube.chirp(a, k);
                let step = bin_phase * shifts[k];
                for (idx, ((o_re, o_im), x)) in ore.iter_mut().zip(oim.iter_mut()).zip(src).enumerate() {
                    let w = Complex::from_polar(1.0, (step * idx as f64).rem_euclid(TAU));
                    let y = x * w;
                    *o_re = y.re;
                    *o_im = y.im;
                }
            });

        Ok(Prepared {
            re,
            im,
            antennas,
            chirps,
            samples_per_chirp: n,
            positions,
            boresight,
            half_window: cfg.fov_window_rad / 2.0,
        })
    }

    fn row(&self, a: usize, k: usize) -> (&[f64], &[f64]) {
        let n = self.samples_per_chirp;
        let start = (a * self.chirps + k) * n;
        (&self.re[start..start + n], &self.im[start..start + n])
    }

    /// Chirps whose boresight is within half the FOV window of `azimuth`.
    fn window_chirps(&self, azimuth: f64) -> Vec<usize> {
        if self.half_window >= PI {
            return (0..self.chirps).collect();
        }
        self.boresight
            .iter()
            .enumerate()
            .filter(|(_, &b)| wrap_pi(b - azimuth).abs() <= self.half_window + 1e-12)
            .map(|(k, _)| k)
            .collect()
    }
}

/// Unit vector of a grid cell; exposed for point-cloud conversion.
pub fn cell_direction(grid: &ImagingGrid, i: usize, j: usize) -> Vec3 {
    direction_vector(&grid.direction(i, j))
}
