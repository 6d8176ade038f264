//! Imaging with a rotating mmWave radar.
//!
//! A vertical linear array of `A` antennas spun around the z axis sweeps a
//! synthetic cylindrical aperture. This crate simulates the FMCW IF samples
//! such an array records from point reflectors on a moving platform, forms
//! 3D heatmaps by coherent beamforming (optionally compensating platform
//! motion), estimates the platform velocity from the Doppler content of the
//! raw samples, and turns heatmaps into point clouds scored against ground
//! truth.
//!
//! Module map:
//!
//! * [`radar`] geometry, waveform configuration and closed-form resolutions
//! * [`scene`] point-reflector IF simulator
//! * [`imaging`] static, motion-compensated and factored beamformers
//! * [`egomotion`] rotation-compensated spectrograms, line detection, RANSAC
//! * [`resolution`] Bessel beam shape, FOV-windowed quadrature, two-point test
//! * [`pointcloud`] CA-CFAR extraction and cloud/range-image metrics
//! * [`scenario`] scenario files and the end-to-end pipeline

pub mod container;
mod dsp;
pub mod egomotion;
mod error;
pub mod geometry;
pub mod imaging;
pub mod pointcloud;
pub mod radar;
pub mod resolution;
pub mod scenario;
pub mod scene;
pub mod special;

pub use error::{Error, Result};
pub use geometry::Vec3;
pub use radar::{Direction, RadarConfig, ResolutionReport};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Complex sample type used throughout.
pub type Complex = num_complex::Complex64;
