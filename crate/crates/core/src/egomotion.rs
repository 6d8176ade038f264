//! Platform velocity from the raw cube.
//!
//! Within a short slow-time window centred at `t_c`, multiplying by
//! `exp{j4πr cos(ω(t_c − t))/λ}` cancels the rotation phase of a reflector
//! the antenna faces at `t_c`. In the resulting spectrogram every reflector
//! draws a ridge `f(t_c) ≈ (2/λ)[rω(ωt_c − θ_n) − v cos(θ_v − θ_n)]` of
//! known slope `2ω²r/λ`, brightest where the antenna faces it. The
//! brightest point `(t_c*, f*)` satisfies `f* = −2v cos(θ_v − ωt_c*)/λ`, so
//! a sinusoid fitted robustly through the points of all ridges yields
//! `(v, θ_v)`.

use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dsp::{Window, WindowedFft};
use crate::geometry::{wrap_pi, wrap_tau};
use crate::radar::RadarConfig;
use crate::scene::RawCube;
use crate::{Complex, Error, Result};

/// Multiplies slow-time samples starting at chirp `first_chirp` by
/// `exp{j4πr cos(ω(t_c − t))/λ_s}`, with `λ_s` the
/// [slow-time wavelength](RadarConfig::slow_time_wavelength_m).
pub fn compensate_rotation(
    samples: &[Complex],
    cfg: &RadarConfig,
    first_chirp: usize,
    t_c: f64,
) -> Vec<Complex> {
    let k = 2.0 * TAU * cfg.rotation_radius_m / cfg.slow_time_wavelength_m();
    samples
        .iter()
        .enumerate()
        .map(|(m, x)| {
            let t = cfg.chirp_time(first_chirp + m);
            x * Complex::from_polar(1.0, k * (cfg.angular_speed_rad_s * (t_c - t)).cos())
        })
        .collect()
}

/// Short-time spectra of one range gate after rotation compensation.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    /// `columns × nfft`, column-major; frequencies ascending (FFT-shifted).
    magnitudes: Vec<f64>,
    pub window_len: usize,
    pub hop: usize,
    pub nfft: usize,
    pub range_bin: usize,
    /// Window-centre times, s.
    pub times: Vec<f64>,
    /// Bin frequencies, Hz, from `−fs/2` in steps of `fs/nfft`.
    pub freqs: Vec<f64>,
    pub sample_rate_hz: f64,
}

impl Spectrogram {
    /// Builds a spectrogram from explicit magnitudes laid out column-major.
    pub fn from_magnitudes(
        magnitudes: Vec<f64>,
        times: Vec<f64>,
        nfft: usize,
        sample_rate_hz: f64,
    ) -> Result<Self> {
        if nfft == 0 || magnitudes.len() != times.len() * nfft {
            return Err(Error::DimensionMismatch(format!(
                "{} magnitudes for {} columns of {nfft} bins",
                magnitudes.len(),
                times.len()
            )));
        }
        if magnitudes.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidInput("non-finite spectrogram value".into()));
        }
        Ok(Spectrogram {
            magnitudes,
            window_len: 0,
            hop: 0,
            nfft,
            range_bin: 0,
            times,
            freqs: bin_freqs(nfft, sample_rate_hz),
            sample_rate_hz,
        })
    }

    pub fn columns(&self) -> usize {
        self.times.len()
    }

    pub fn column(&self, c: usize) -> &[f64] {
        &self.magnitudes[c * self.nfft..(c + 1) * self.nfft]
    }

    pub fn at(&self, c: usize, i: usize) -> f64 {
        self.magnitudes[c * self.nfft + i]
    }

    pub fn magnitudes(&self) -> &[f64] {
        &self.magnitudes
    }

    pub fn bin_width_hz(&self) -> f64 {
        self.sample_rate_hz / self.nfft as f64
    }

    /// Fractional bin index of a frequency, on the circle `[0, nfft)`.
    pub fn bin_of(&self, f: f64) -> f64 {
        let fs = self.sample_rate_hz;
        (wrap_freq(f, fs) + fs / 2.0) / self.bin_width_hz()
    }

    /// Linearly interpolated power at a frequency, wrapping around.
    fn power_at(&self, c: usize, f: f64) -> f64 {
        let x = self.bin_of(f);
        let i = x.floor() as usize % self.nfft;
        let j = (i + 1) % self.nfft;
        let w = x - x.floor();
        let col = self.column(c);
        (1.0 - w) * col[i] * col[i] + w * col[j] * col[j]
    }

    /// Long-format CSV: `t_c_s,f_hz,magnitude`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t_c_s,f_hz,magnitude\n");
        for (c, t) in self.times.iter().enumerate() {
            for (i, f) in self.freqs.iter().enumerate() {
                let _ = writeln!(s, "{t:.6},{f:.4},{:.6e}", self.at(c, i));
            }
        }
        s
    }
}

fn bin_freqs(nfft: usize, fs: f64) -> Vec<f64> {
    (0..nfft)
        .map(|i| (i as f64 - (nfft / 2) as f64) * fs / nfft as f64)
        .collect()
}

/// Wraps a frequency into `[−fs/2, fs/2)`.
pub fn wrap_freq(f: f64, fs: f64) -> f64 {
    (f + fs / 2.0).rem_euclid(fs) - fs / 2.0
}

/// Short-time analysis settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrogramParams {
    pub window_len: usize,
    pub hop: usize,
    pub nfft: usize,
    pub window: Window,
}

impl Default for SpectrogramParams {
    /// 100 chirps (30° of rotation at 1200 chirps per turn), hop 25,
    /// Hann, 256-point FFT.
    fn default() -> Self {
        SpectrogramParams {
            window_len: 100,
            hop: 25,
            nfft: 256,
            window: Window::Hann,
        }
    }
}

impl SpectrogramParams {
    /// Window spanning 30° of rotation with a quarter-window hop.
    pub fn for_config(cfg: &RadarConfig) -> Self {
        let len = ((cfg.chirps_per_rotation as f64 / 12.0).round() as usize).max(4);
        let nfft = len.next_power_of_two().max(64) * 2;
        SpectrogramParams {
            window_len: len,
            hop: (len / 4).max(1),
            nfft,
            window: Window::Hann,
        }
    }

    fn validate(&self, chirps: usize) -> Result<()> {
        if self.window_len == 0 || self.hop == 0 || self.nfft < self.window_len {
            return Err(Error::InvalidConfig(format!(
                "spectrogram needs window_len >= 1, hop >= 1, nfft >= window_len: {self:?}"
            )));
        }
        if self.window_len > chirps {
            return Err(Error::InvalidInput(format!(
                "window of {} chirps exceeds the {chirps}-chirp cube",
                self.window_len
            )));
        }
        Ok(())
    }
}

/// Windowed range spectra of every chirp of one antenna, `T × N`.
pub fn range_spectra(cube: &RawCube, antenna: usize) -> Result<Vec<Vec<Complex>>> {
    let (a, t, n) = cube.dims();
    if antenna >= a {
        return Err(Error::IndexOutOfRange {
            what: "antenna",
            index: antenna,
            len: a,
        });
    }
    let fft = WindowedFft::new(Window::Hann, n, n);
    Ok((0..t)
        .into_par_iter()
        .map(|k| {
            let mut out = Vec::with_capacity(n);
            fft.transform(cube.chirp(antenna, k), &mut out);
            out
        })
        .collect())
}

/// Spectrogram of one range gate of antenna 0 with the given window and hop.
pub fn build_spectrogram(
    cube: &RawCube,
    cfg: &RadarConfig,
    range_bin: usize,
    window_len: usize,
    hop: usize,
) -> Result<Spectrogram> {
    let (_, _, n) = cube.dims();
    if range_bin >= n {
        return Err(Error::IndexOutOfRange {
            what: "range bin",
            index: range_bin,
            len: n,
        });
    }
    let params = SpectrogramParams {
        window_len,
        hop,
        nfft: window_len.next_power_of_two().max(SpectrogramParams::default().nfft),
        window: Window::Hann,
    };
    let spectra = range_spectra(cube, 0)?;
    let slow: Vec<Complex> = spectra.iter().map(|row| row[range_bin]).collect();
    spectrogram_from_slow_time(&slow, cfg, range_bin, &params)
}

/// Spectrogram of an explicit slow-time sequence (chirp 0 onwards).
pub fn spectrogram_from_slow_time(
    slow: &[Complex],
    cfg: &RadarConfig,
    range_bin: usize,
    params: &SpectrogramParams,
) -> Result<Spectrogram> {
    pooled_spectrogram(&[slow], cfg, range_bin, params)
}

/// Spectrogram whose power is summed over several slow-time sequences,
/// typically the range bins around one gate. A reflector that drifts
/// across bins during its visible window then keeps a steady level.
pub fn pooled_spectrogram(
    slows: &[&[Complex]],
    cfg: &RadarConfig,
    range_bin: usize,
    params: &SpectrogramParams,
) -> Result<Spectrogram> {
    let chirps = slows.first().map_or(0, |s| s.len());
    if slows.is_empty() || slows.iter().any(|s| s.len() != chirps) {
        return Err(Error::DimensionMismatch(
            "pooled sequences must be non-empty and equally long".into(),
        ));
    }
    params.validate(chirps)?;
    let (len, hop, nfft) = (params.window_len, params.hop, params.nfft);
    let fft = WindowedFft::new(params.window, len, nfft);
    let dt = cfg.chirp_interval_s();
    let starts: Vec<usize> = (0..=chirps - len).step_by(hop).collect();
    let times: Vec<f64> = starts
        .iter()
        .map(|&s| (s as f64 + (len - 1) as f64 / 2.0) * dt)
        .collect();
    let mut magnitudes = Vec::with_capacity(starts.len() * nfft);
    let mut out = Vec::with_capacity(nfft);
    let mut power = vec![0.0; nfft];
    for (&s, &t_c) in starts.iter().zip(&times) {
        power.iter_mut().for_each(|p| *p = 0.0);
        for slow in slows {
            let comp = compensate_rotation(&slow[s..s + len], cfg, s, t_c);
            fft.transform(&comp, &mut out);
            for (p, c) in power.iter_mut().zip(&out) {
                *p += c.norm_sqr();
            }
        }
        // shift so that bin 0 is −fs/2
        magnitudes.extend(power[nfft / 2..].iter().chain(&power[..nfft / 2]).map(|p| p.sqrt()));
    }
    let fs = cfg.slow_time_rate_hz();
    Ok(Spectrogram {
        magnitudes,
        window_len: len,
        hop,
        nfft,
        range_bin,
        times,
        freqs: bin_freqs(nfft, fs),
        sample_rate_hz: fs,
    })
}

/// Strongest point of one reflector's ridge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineDetection {
    /// Ridge frequency at `t_c = 0`, wrapped to `[−fs/2, fs/2)`.
    pub intercept_hz: f64,
    /// Hough accumulator value of the line.
    pub support: f64,
    pub peak_tc_s: f64,
    pub peak_f_hz: f64,
    pub peak_power: f64,
    /// Range gate the line was found in.
    pub range_bin: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LineParams {
    /// Lines below this fraction of the strongest accumulator value are dropped.
    pub threshold: f64,
    /// Lines must also exceed this multiple of the median accumulator value.
    pub min_peak_snr: f64,
    /// Secondary peaks along a line must reach this fraction of its maximum.
    pub min_peak_fraction: f64,
}

impl Default for LineParams {
    fn default() -> Self {
        LineParams {
            threshold: 0.05,
            min_peak_snr: 10.0,
            min_peak_fraction: 0.3,
        }
    }
}

/// Hough search for ridges of slope `2ω²r/λ`, see [`detect_lines_with`].
pub fn detect_lines(spec: &Spectrogram, cfg: &RadarConfig, threshold: f64) -> Result<Vec<LineDetection>> {
    detect_lines_with(
        spec,
        cfg,
        &LineParams {
            threshold,
            ..LineParams::default()
        },
    )
}

/// One-parameter Hough transform over wrapped intercepts.
///
/// Each intercept bin accumulates spectrogram power along
/// `f = wrap(b + s·t_c)`. Accumulator local maxima that pass both
/// thresholds are lines. Because intercepts wrap, one line can carry
/// several reflectors seen at different times, so every interior local
/// maximum of the power along the line that reaches `min_peak_fraction` of
/// the line maximum becomes a detection. Its time comes from Gaussian
/// interpolation over neighbouring columns and its frequency from a local
/// linear fit of the interpolated spectral peaks evaluated at that time.
pub fn detect_lines_with(
    spec: &Spectrogram,
    cfg: &RadarConfig,
    params: &LineParams,
) -> Result<Vec<LineDetection>> {
    if spec.columns() == 0 || spec.nfft == 0 {
        return Err(Error::InvalidInput("empty spectrogram".into()));
    }
    let slope = cfg.observed_ridge_slope_hz_per_s();
    let fs = spec.sample_rate_hz;
    let df = spec.bin_width_hz();
    let nb = spec.nfft;
    let intercepts: Vec<f64> = (0..nb).map(|i| -fs / 2.0 + i as f64 * df).collect();
    let acc: Vec<f64> = intercepts
        .iter()
        .map(|&b| {
            (0..spec.columns())
                .map(|c| spec.power_at(c, b + slope * spec.times[c]))
                .sum()
        })
        .collect();
    let top = acc.iter().copied().fold(0.0, f64::max);
    if !(top > 0.0) {
        return Ok(Vec::new());
    }
    let mut sorted = acc.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[nb / 2];
    let floor = (params.threshold * top).max(params.min_peak_snr * median);

    // non-maximum suppression over one main lobe
    let lobe = if spec.window_len > 0 {
        ((2 * nb) as f64 / spec.window_len as f64).ceil() as usize
    } else {
        2
    }
    .max(1);
    let mut order: Vec<usize> = (0..nb).filter(|&i| acc[i] >= floor).collect();
    order.sort_by(|&a, &b| acc[b].total_cmp(&acc[a]).then(a.cmp(&b)));
    let mut taken: Vec<usize> = Vec::new();
    for i in order {
        let circ = |j: usize| {
            let d = i.abs_diff(j);
            d.min(nb - d)
        };
        if taken.iter().all(|&j| circ(j) > lobe) {
            taken.push(i);
        }
    }

    let search = lobe as f64 * df;
    let mut out = Vec::new();
    for i in taken {
        let b = intercepts[i];
        let track: Vec<(f64, f64)> = (0..spec.columns())
            .map(|c| column_peak(spec, c, b + slope * spec.times[c], search))
            .collect();
        let line_max = track.iter().map(|p| p.0).fold(0.0, f64::max);
        for c in 1..spec.columns().saturating_sub(1) {
            let (m, _) = track[c];
            if !(m > track[c - 1].0 && m >= track[c + 1].0 && m >= params.min_peak_fraction * line_max) {
                continue;
            }
            let (t_star, f_star) = refine_peak(spec, &track, c);
            out.push(LineDetection {
                intercept_hz: b,
                support: acc[i],
                peak_tc_s: t_star,
                peak_f_hz: wrap_freq(f_star, fs),
                peak_power: m * m,
                range_bin: spec.range_bin,
            });
        }
    }
    Ok(out)
}

/// Strongest bin within `±search` Hz of `f0`, returned as (interpolated
/// magnitude, interpolated frequency).
fn column_peak(spec: &Spectrogram, c: usize, f0: f64, search: f64) -> (f64, f64) {
    let nb = spec.nfft;
    let col = spec.column(c);
    let centre = spec.bin_of(f0).round() as i64;
    let reach = (search / spec.bin_width_hz()).ceil() as i64;
    let idx = |k: i64| k.rem_euclid(nb as i64) as usize;
    let best = (centre - reach..=centre + reach)
        .max_by(|&a, &b| col[idx(a)].total_cmp(&col[idx(b)]).then(b.cmp(&a)))
        .unwrap();
    let (l, m, r) = (col[idx(best - 1)], col[idx(best)], col[idx(best + 1)]);
    let (delta, peak) = gaussian_vertex(l, m, r);
    let f = spec.freqs[idx(best)] + delta * spec.bin_width_hz();
    (peak, f)
}

/// Vertex offset in `[-0.5, 0.5]` and height of the Gaussian through three
/// equally spaced samples; parabolic when any sample is zero.
fn gaussian_vertex(l: f64, m: f64, r: f64) -> (f64, f64) {
    if l > 0.0 && m > 0.0 && r > 0.0 {
        let (a, b, c) = (l.ln(), m.ln(), r.ln());
        let den = a - 2.0 * b + c;
        if den < 0.0 {
            let d = (0.5 * (a - c) / den).clamp(-0.5, 0.5);
            let h = (b - 0.25 * (a - c) * d).exp();
            return (d, h);
        }
    }
    let den = l - 2.0 * m + r;
    if den < 0.0 {
        let d = (0.5 * (l - r) / den).clamp(-0.5, 0.5);
        (d, m - 0.25 * (l - r) * d)
    } else {
        (0.0, m)
    }
}

/// Peak time by Gaussian interpolation of the line profile around column
/// `c`, and the peak frequency from a weighted line through the spectral
/// peaks of columns `c−1..=c+1` evaluated at that time.
fn refine_peak(spec: &Spectrogram, track: &[(f64, f64)], c: usize) -> (f64, f64) {
    let dt = spec.times[c + 1] - spec.times[c];
    let (d, _) = gaussian_vertex(track[c - 1].0, track[c].0, track[c + 1].0);
    let t_star = spec.times[c] + d * dt;
    let fs = spec.sample_rate_hz;
    let f_ref = track[c].1;
    let pts: Vec<(f64, f64, f64)> = (c - 1..=c + 1)
        .map(|k| {
            let (m, f) = track[k];
            (spec.times[k] - t_star, f_ref + wrap_freq(f - f_ref, fs), m * m)
        })
        .collect();
    let sw: f64 = pts.iter().map(|p| p.2).sum();
    let mx = pts.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    let my = pts.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
    let sxx: f64 = pts.iter().map(|p| p.2 * (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| p.2 * (p.0 - mx) * (p.1 - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (t_star, my - slope * mx)
}

/// One `(t_c*, f*)` observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DopplerPeak {
    pub t_c: f64,
    pub f_hz: f64,
}

impl From<&LineDetection> for DopplerPeak {
    fn from(l: &LineDetection) -> Self {
        DopplerPeak {
            t_c: l.peak_tc_s,
            f_hz: l.peak_f_hz,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RansacParams {
    pub iterations: usize,
    /// Inlier threshold on `|f − model|`, Hz.
    pub threshold_hz: f64,
    /// Below this inlier ratio the estimate is flagged low-confidence.
    pub min_inlier_ratio: f64,
    pub seed: u64,
    /// Heading reported when the speed is too small to define one.
    pub prior_heading_rad: f64,
    /// Speeds below this are reported as zero with the degenerate flag.
    pub degenerate_speed_m_s: f64,
}

impl Default for RansacParams {
    /// 500 iterations, threshold two 256-point bins at 2400 Hz.
    fn default() -> Self {
        RansacParams {
            iterations: 500,
            threshold_hz: 18.75,
            min_inlier_ratio: 0.3,
            seed: 0,
            prior_heading_rad: 0.0,
            degenerate_speed_m_s: 0.005,
        }
    }
}

impl RansacParams {
    /// Threshold of two spectral bins for the given analysis settings.
    pub fn for_spectrogram(cfg: &RadarConfig, sp: &SpectrogramParams) -> Self {
        RansacParams {
            threshold_hz: 2.0 * cfg.slow_time_rate_hz() / sp.nfft as f64,
            ..RansacParams::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionEstimate {
    pub speed_m_s: f64,
    /// In `[0, 2π)`.
    pub heading_rad: f64,
    pub inlier_count: usize,
    pub peak_count: usize,
    pub residual_rms_hz: f64,
    pub degenerate: bool,
    pub low_confidence: bool,
}

impl MotionEstimate {
    /// `key=value` pairs on one line.
    pub fn to_record(&self) -> String {
        format!(
            "speed_m_s={} heading_rad={} inliers={} peaks={} residual_rms_hz={:.4} degenerate={} low_confidence={}",
            self.speed_m_s,
            self.heading_rad,
            self.inlier_count,
            self.peak_count,
            self.residual_rms_hz,
            self.degenerate,
            self.low_confidence
        )
    }

    pub fn from_record(line: &str) -> Result<Self> {
        let mut e = MotionEstimate {
            speed_m_s: f64::NAN,
            heading_rad: f64::NAN,
            inlier_count: 0,
            peak_count: 0,
            residual_rms_hz: 0.0,
            degenerate: false,
            low_confidence: false,
        };
        let bad = |k: &str| Error::Format(format!("motion record: bad value for {k}"));
        for pair in line.split_whitespace() {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("motion record: '{pair}' is not key=value")))?;
            match k {
                "speed_m_s" => e.speed_m_s = v.parse().map_err(|_| bad(k))?,
                "heading_rad" => e.heading_rad = v.parse().map_err(|_| bad(k))?,
                "inliers" => e.inlier_count = v.parse().map_err(|_| bad(k))?,
                "peaks" => e.peak_count = v.parse().map_err(|_| bad(k))?,
                "residual_rms_hz" => e.residual_rms_hz = v.parse().map_err(|_| bad(k))?,
                "degenerate" => e.degenerate = v.parse().map_err(|_| bad(k))?,
                "low_confidence" => e.low_confidence = v.parse().map_err(|_| bad(k))?,
                _ => return Err(Error::Format(format!("motion record: unknown key '{k}'"))),
            }
        }
        if !(e.speed_m_s >= 0.0 && e.heading_rad.is_finite()) {
            return Err(Error::Format("motion record needs speed_m_s and heading_rad".into()));
        }
        Ok(e)
    }

    pub fn trajectory(&self) -> crate::scene::Trajectory {
        crate::scene::Trajectory::new(self.speed_m_s, self.heading_rad)
    }
}

/// `f = α cos(ωt) + β sin(ωt)` model.
#[derive(Debug, Clone, Copy)]
struct Sinusoid {
    alpha: f64,
    beta: f64,
}

impl Sinusoid {
    fn eval(&self, omega: f64, t: f64) -> f64 {
        let (s, c) = (omega * t).sin_cos();
        self.alpha * c + self.beta * s
    }

    fn speed_heading(&self, lambda: f64) -> (f64, f64) {
        let v = lambda * self.alpha.hypot(self.beta) / 2.0;
        (v, wrap_tau((-self.beta).atan2(-self.alpha)))
    }

    fn through(omega: f64, p: &DopplerPeak, q: &DopplerPeak) -> Option<Self> {
        let (s1, c1) = (omega * p.t_c).sin_cos();
        let (s2, c2) = (omega * q.t_c).sin_cos();
        let det = c1 * s2 - c2 * s1;
        if det.abs() < 1e-3 {
            return None;
        }
        Some(Sinusoid {
            alpha: (p.f_hz * s2 - q.f_hz * s1) / det,
            beta: (c1 * q.f_hz - c2 * p.f_hz) / det,
        })
    }

    fn least_squares(omega: f64, peaks: &[&DopplerPeak]) -> Option<Self> {
        let (mut scc, mut sss, mut scs, mut sfc, mut sfs) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for p in peaks {
            let (s, c) = (omega * p.t_c).sin_cos();
            scc += c * c;
            sss += s * s;
            scs += c * s;
            sfc += p.f_hz * c;
            sfs += p.f_hz * s;
        }
        let det = scc * sss - scs * scs;
        if det.abs() < 1e-9 * (scc + sss).max(1.0).powi(2) {
            return None;
        }
        Some(Sinusoid {
            alpha: (sfc * sss - sfs * scs) / det,
            beta: (sfs * scc - sfc * scs) / det,
        })
    }
}

const RANSAC_BATCH: usize = 50;

/// Robust fit of `f* = −2v cos(θ_v − ωt_c*)/λ_s` to the peaks, `λ_s` being
/// the [slow-time wavelength](RadarConfig::slow_time_wavelength_m).
///
/// Iterations run in fixed batches, each with its own seeded ChaCha stream,
/// so the result does not depend on the number of worker threads.
pub fn estimate_motion(
    peaks: &[DopplerPeak],
    cfg: &RadarConfig,
    params: &RansacParams,
) -> Result<MotionEstimate> {
    if peaks.len() < 2 {
        return Err(Error::Estimation(format!(
            "need at least 2 spectral peaks, got {}",
            peaks.len()
        )));
    }
    if peaks.iter().any(|p| !(p.t_c.is_finite() && p.f_hz.is_finite())) {
        return Err(Error::InvalidInput("non-finite spectral peak".into()));
    }
    if !(params.threshold_hz > 0.0) {
        return Err(Error::InvalidConfig("RANSAC threshold must be > 0".into()));
    }
    let omega = cfg.angular_speed_rad_s;
    let fs = cfg.slow_time_rate_hz();
    let n = peaks.len();
    let residual = |m: &Sinusoid, p: &DopplerPeak| wrap_freq(p.f_hz - m.eval(omega, p.t_c), fs);
    let score = |m: &Sinusoid| {
        let mut count = 0;
        let mut sq = 0.0;
        for p in peaks {
            let r = residual(m, p);
            if r.abs() <= params.threshold_hz {
                count += 1;
                sq += r * r;
            }
        }
        (count, sq)
    };

    let batches = params.iterations.div_ceil(RANSAC_BATCH).max(1);
    let best = (0..batches)
        .into_par_iter()
        .map(|batch| {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            rng.set_stream(batch as u64);
            let iters = RANSAC_BATCH.min(params.iterations.saturating_sub(batch * RANSAC_BATCH)).max(1);
            let mut best: Option<(usize, f64, Sinusoid)> = None;
            for _ in 0..iters {
                let i = rng.random_range(0..n);
                let mut j = rng.random_range(0..n - 1);
                if j >= i {
                    j += 1;
                }
                let Some(m) = Sinusoid::through(omega, &peaks[i], &peaks[j]) else {
                    continue;
                };
                let (count, sq) = score(&m);
                if best.as_ref().is_none_or(|b| count > b.0 || (count == b.0 && sq < b.1)) {
                    best = Some((count, sq, m));
                }
            }
            best
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .fold(None::<(usize, f64, Sinusoid)>, |acc, b| match acc {
            Some(a) if a.0 > b.0 || (a.0 == b.0 && a.1 <= b.1) => Some(a),
            _ => Some(b),
        });

    let mut model = match best {
        Some((_, _, m)) => m,
        None => {
            // every pair was ill-conditioned: peaks share one rotation angle
            Sinusoid::least_squares(omega, &peaks.iter().collect::<Vec<_>>()).ok_or_else(|| {
                Error::Estimation("spectral peaks do not constrain the sinusoid".into())
            })?
        }
    };
    let mut inliers: Vec<&DopplerPeak> = Vec::new();
    for _ in 0..10 {
        let next: Vec<&DopplerPeak> = peaks
            .iter()
            .filter(|p| residual(&model, p).abs() <= params.threshold_hz)
            .collect();
        if next.len() < 2 {
            break;
        }
        let same = next.len() == inliers.len()
            && next.iter().zip(&inliers).all(|(a, b)| std::ptr::eq(*a, *b));
        inliers = next;
        if let Some(m) = Sinusoid::least_squares(omega, &inliers) {
            model = m;
        }
        if same {
            break;
        }
    }
    let inlier_count = peaks
        .iter()
        .filter(|p| residual(&model, p).abs() <= params.threshold_hz)
        .count();
    let rms = if inlier_count > 0 {
        (peaks
            .iter()
            .map(|p| residual(&model, p))
            .filter(|r| r.abs() <= params.threshold_hz)
            .map(|r| r * r)
            .sum::<f64>()
            / inlier_count as f64)
            .sqrt()
    } else {
        f64::NAN
    };
    let (speed, heading) = model.speed_heading(cfg.slow_time_wavelength_m());
    let degenerate = speed < params.degenerate_speed_m_s;
    Ok(MotionEstimate {
        speed_m_s: if degenerate { 0.0 } else { speed },
        heading_rad: if degenerate {
            wrap_tau(params.prior_heading_rad)
        } else {
            heading
        },
        inlier_count,
        peak_count: n,
        residual_rms_hz: rms,
        degenerate,
        low_confidence: (inlier_count as f64) < params.min_inlier_ratio * n as f64,
    })
}

/// End-to-end settings for [`estimate_motion_from_cube`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotionOptions {
    pub spectrogram: SpectrogramParams,
    pub lines: LineParams,
    pub ransac: RansacParams,
    /// Number of range gates analysed.
    pub gates: usize,
    /// Gates closer than this are ignored.
    pub min_gate_range_m: f64,
    /// Range bins on each side of a gate whose power is pooled into its
    /// spectrogram. Selected gates are kept further apart than this.
    pub gate_span: usize,
    pub antenna: usize,
}

impl Default for MotionOptions {
    fn default() -> Self {
        MotionOptions {
            spectrogram: SpectrogramParams::default(),
            lines: LineParams::default(),
            ransac: RansacParams::default(),
            gates: 8,
            min_gate_range_m: 0.5,
            gate_span: 2,
            antenna: 0,
        }
    }
}

impl MotionOptions {
    /// Defaults scaled to the chirp count and FFT size of `cfg`.
    pub fn for_config(cfg: &RadarConfig) -> Self {
        let spectrogram = SpectrogramParams::for_config(cfg);
        MotionOptions {
            spectrogram,
            ransac: RansacParams::for_spectrogram(cfg, &spectrogram),
            ..MotionOptions::default()
        }
    }
}

/// Everything the estimator saw, for diagnostics and plotting.
#[derive(Debug, Clone)]
pub struct MotionAnalysis {
    pub gates: Vec<usize>,
    pub spectrograms: Vec<Spectrogram>,
    pub lines: Vec<LineDetection>,
    pub estimate: MotionEstimate,
}

/// Range gates with the most energy: local maxima of the per-bin energy
/// summed over the rotation, strongest first, each more than
/// `min_separation` bins from every stronger one.
pub fn select_gates(
    spectra: &[Vec<Complex>],
    cfg: &RadarConfig,
    count: usize,
    min_range_m: f64,
    min_separation: usize,
) -> Vec<usize> {
    let n = spectra.first().map_or(0, Vec::len);
    if n < 3 {
        return Vec::new();
    }
    let mut energy = vec![0.0; n];
    for row in spectra {
        for (e, x) in energy.iter_mut().zip(row) {
            *e += x.norm_sqr();
        }
    }
    let first = ((min_range_m / cfg.range_resolution_m()).ceil() as usize).max(1);
    let mut cand: Vec<usize> = (first..n - 1)
        .filter(|&k| energy[k] > 0.0 && energy[k] >= energy[k - 1] && energy[k] > energy[k + 1])
        .collect();
    cand.sort_by(|&a, &b| energy[b].total_cmp(&energy[a]).then(a.cmp(&b)));
    let mut out: Vec<usize> = Vec::with_capacity(count);
    for k in cand {
        if out.len() == count {
            break;
        }
        if out.iter().all(|&g| g.abs_diff(k) > min_separation) {
            out.push(k);
        }
    }
    out
}

/// Gates, spectrograms, ridge peaks and the robust fit in one call.
pub fn analyse_motion(cube: &RawCube, opts: &MotionOptions) -> Result<MotionAnalysis> {
    let cfg = &cube.cfg;
    let spectra = range_spectra(cube, opts.antenna)?;
    let gates = select_gates(&spectra, cfg, opts.gates, opts.min_gate_range_m, opts.gate_span);
    let n = spectra.first().map_or(0, Vec::len);
    let spectrograms: Vec<Spectrogram> = gates
        .par_iter()
        .map(|&k| {
            let bins = k.saturating_sub(opts.gate_span)..(k + opts.gate_span + 1).min(n);
            let slows: Vec<Vec<Complex>> = bins
                .map(|b| spectra.iter().map(|row| row[b]).collect())
                .collect();
            let refs: Vec<&[Complex]> = slows.iter().map(Vec::as_slice).collect();
            pooled_spectrogram(&refs, cfg, k, &opts.spectrogram)
        })
        .collect::<Result<_>>()?;
    let mut lines = Vec::new();
    for spec in &spectrograms {
        lines.extend(detect_lines_with(spec, cfg, &opts.lines)?);
    }
    let peaks: Vec<DopplerPeak> = lines.iter().map(DopplerPeak::from).collect();
    let estimate = estimate_motion(&peaks, cfg, &opts.ransac)?;
    Ok(MotionAnalysis {
        gates,
        spectrograms,
        lines,
        estimate,
    })
}

pub fn estimate_motion_from_cube(cube: &RawCube, opts: &MotionOptions) -> Result<MotionEstimate> {
    Ok(analyse_motion(cube, opts)?.estimate)
}

/// Linearized ridge frequency at `t_c` for a reflector at azimuth `θ_n`.
pub fn linearized_ridge_hz(cfg: &RadarConfig, t_c: f64, theta_n: f64, speed: f64, heading: f64) -> f64 {
    let x = wrap_pi(cfg.angular_speed_rad_s * t_c - theta_n);
    2.0 / cfg.wavelength_m
        * (cfg.rotation_radius_m * cfg.angular_speed_rad_s * x - speed * (heading - theta_n).cos())
}

/// Doppler at the ridge peak as a range-bin spectrogram shows it,
/// `−2v cos(θ_v − θ_n)/λ_s`.
pub fn peak_doppler_hz(cfg: &RadarConfig, theta_n: f64, speed: f64, heading: f64) -> f64 {
    -2.0 * speed * (heading - theta_n).cos() / cfg.slow_time_wavelength_m()
}

/// Heading difference wrapped to `[0, π]`.
pub fn heading_error(a: f64, b: f64) -> f64 {
    wrap_pi(a - b).abs().min(PI)
}
