use std::f64::consts::TAU;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::Complex;

/// Taper applied before an FFT.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    #[default]
    Hann,
    Rectangular,
}

impl Window {
    /// Symmetric window coefficients of length `n`, centred on sample
    /// `(n − 1)/2`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; n],
            Window::Hann if n < 3 => vec![1.0; n],
            Window::Hann => (0..n)
                .map(|i| 0.5 - 0.5 * (TAU * i as f64 / (n - 1) as f64).cos())
                .collect(),
        }
    }
}

pub(crate) fn forward_fft(len: usize) -> Arc<dyn Fft<f64>> {
    FftPlanner::new().plan_fft_forward(len)
}

/// Windowed forward FFT normalized so a unit-amplitude on-bin tone has
/// magnitude 1.
pub(crate) struct WindowedFft {
    fft: Arc<dyn Fft<f64>>,
    taper: Vec<f64>,
    gain: f64,
    len: usize,
}

impl WindowedFft {
    /// `input_len` samples are tapered, zero-padded to `fft_len` and transformed.
    pub fn new(window: Window, input_len: usize, fft_len: usize) -> Self {
        assert!(fft_len >= input_len && input_len > 0);
        let taper = window.coefficients(input_len);
        let gain = taper.iter().sum::<f64>();
        WindowedFft {
            fft: forward_fft(fft_len),
            taper,
            gain,
            len: fft_len,
        }
    }

    pub fn transform(&self, input: &[Complex], out: &mut Vec<Complex>) {
        debug_assert_eq!(input.len(), self.taper.len());
        out.clear();
        out.extend(
            input
                .iter()
                .zip(&self.taper)
                .map(|(x, w)| x * (w / self.gain)),
        );
        out.resize(self.len, Complex::new(0.0, 0.0));
        self.fft.process(out);
    }
}
