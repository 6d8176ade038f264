//! Little-endian binary containers for raw cubes and heatmaps.
//!
//! Both start with a 64-byte header:
//!
//! | offset | raw cube (`CYLSRAW\0`)  | heatmap (`CYLSHMP\0`) |
//! |--------|-------------------------|-----------------------|
//! | 0      | magic, 8 bytes          | magic, 8 bytes        |
//! | 8      | version `u32`           | version `u32`         |
//! | 12     | A `u32`                 | azimuth bins `u32`    |
//! | 16     | T `u32`                 | elevation bins `u32`  |
//! | 20     | N `u32`                 | range bins `u32`      |
//! | 24     | r `f64`                 | azimuth min `f64`     |
//! | 32     | ω `f64`                 | azimuth max `f64`     |
//! | 40     | λ `f64`                 | elevation min `f64`   |
//! | 48     | B `f64`                 | elevation max `f64`   |
//! | 56     | seed `u64`              | ΔR `f64`              |
//!
//! A raw cube payload is interleaved `(re, im)` `f32` pairs in
//! `(antenna, chirp, sample)` order; a heatmap payload is `f32` magnitudes
//! in `(azimuth, elevation, range)` order. The header only echoes part of
//! the radar configuration, so writers also emit a `<file>.meta.toml`
//! sidecar with the full configuration, the seed and the tool version.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::imaging::{Heatmap3D, ImagingGrid};
use crate::radar::{uniform_heights, RadarConfig};
use crate::scene::RawCube;
use crate::{Complex, Error, Result};

pub const CUBE_MAGIC: [u8; 8] = *b"CYLSRAW\0";
pub const HEATMAP_MAGIC: [u8; 8] = *b"CYLSHMP\0";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 64;

/// Library version recorded in sidecars.
pub const TOOL_VERSION: &str = concat!("cylsar ", env!("CARGO_PKG_VERSION"));

/// Contents of a `<file>.meta.toml` sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub tool_version: String,
    pub seed: u64,
    /// SHA-256 of the scenario file that produced the artifact, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario_sha256: Option<String>,
    pub radar: RadarConfig,
}

impl Provenance {
    pub fn new(cfg: &RadarConfig, seed: u64) -> Self {
        Provenance {
            tool_version: TOOL_VERSION.to_string(),
            seed,
            scenario_sha256: None,
            radar: cfg.clone(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("provenance serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let p: Provenance =
            toml::from_str(text).map_err(|e| Error::Format(format!("sidecar: {e}")))?;
        p.radar.validate()?;
        Ok(p)
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".meta.toml");
    PathBuf::from(s)
}

pub fn write_sidecar(path: &Path, prov: &Provenance) -> Result<()> {
    let side = sidecar_path(path);
    std::fs::write(&side, prov.to_toml()).map_err(|e| Error::io(&side, e))
}

pub fn read_sidecar(path: &Path) -> Result<Option<Provenance>> {
    let side = sidecar_path(path);
    match std::fs::read_to_string(&side) {
        Ok(text) => Provenance::from_toml(&text).map(Some),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(Error::io(&side, e)),
    }
}

fn dim(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::InvalidInput(format!("{what} {v} does not fit the header")))
}

struct Header {
    magic: [u8; 8],
    dims: [u32; 3],
    f: [f64; 4],
    last: [u8; 8],
}

impl Header {
    fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[..8].copy_from_slice(&self.magic);
        b[8..12].copy_from_slice(&FORMAT_VERSION.to_le_bytes());
        for (i, d) in self.dims.iter().enumerate() {
            b[12 + 4 * i..16 + 4 * i].copy_from_slice(&d.to_le_bytes());
        }
        for (i, v) in self.f.iter().enumerate() {
            b[24 + 8 * i..32 + 8 * i].copy_from_slice(&v.to_le_bytes());
        }
        b[56..].copy_from_slice(&self.last);
        b
    }

    fn parse(b: &[u8; HEADER_LEN], magic: [u8; 8]) -> Result<Self> {
        if b[..8] != magic {
            return Err(Error::Format(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(&b[..8]),
                String::from_utf8_lossy(&magic)
            )));
        }
        let version = u32::from_le_bytes(b[8..12].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported container version {version}")));
        }
        let u = |o: usize| u32::from_le_bytes(b[o..o + 4].try_into().unwrap());
        let f = |o: usize| f64::from_le_bytes(b[o..o + 8].try_into().unwrap());
        Ok(Header {
            magic,
            dims: [u(12), u(16), u(20)],
            f: [f(24), f(32), f(40), f(48)],
            last: b[56..64].try_into().unwrap(),
        })
    }
}

fn read_header(r: &mut impl Read, magic: [u8; 8]) -> Result<Header> {
    let mut b = [0u8; HEADER_LEN];
    r.read_exact(&mut b)
        .map_err(|_| Error::Format("file shorter than the 64-byte header".into()))?;
    Header::parse(&b, magic)
}

fn read_f32s(r: &mut impl Read, count: usize) -> Result<Vec<f32>> {
    let mut bytes = vec![0u8; count * 4];
    r.read_exact(&mut bytes)
        .map_err(|_| Error::Format(format!("payload shorter than {count} values")))?;
    let mut extra = [0u8; 1];
    if r.read(&mut extra).map_err(|e| Error::Format(e.to_string()))? != 0 {
        return Err(Error::Format("trailing bytes after payload".into()));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn write_cube(w: &mut impl Write, cube: &RawCube) -> Result<()> {
    let (a, t, n) = cube.dims();
    let cfg = &cube.cfg;
    let header = Header {
        magic: CUBE_MAGIC,
        dims: [dim(a, "A")?, dim(t, "T")?, dim(n, "N")?],
        f: [
            cfg.rotation_radius_m,
            cfg.angular_speed_rad_s,
            cfg.wavelength_m,
            cfg.bandwidth_hz,
        ],
        last: cube.seed.to_le_bytes(),
    };
    let io = |e| Error::Format(format!("write failed: {e}"));
    w.write_all(&header.to_bytes()).map_err(io)?;
    let mut buf = Vec::with_capacity(n * 8);
    for chunk in cube.samples().chunks(n.max(1)) {
        buf.clear();
        for c in chunk {
            buf.extend_from_slice(&(c.re as f32).to_le_bytes());
            buf.extend_from_slice(&(c.im as f32).to_le_bytes());
        }
        w.write_all(&buf).map_err(io)?;
    }
    Ok(())
}

/// Reads a cube. `cfg`, when given, must agree with the header; otherwise
/// the configuration is rebuilt from the header with uniform λ/2 heights
/// and default values for fields the header does not carry.
pub fn read_cube(r: &mut impl Read, cfg: Option<&RadarConfig>) -> Result<RawCube> {
    let h = read_header(r, CUBE_MAGIC)?;
    let [a, t, n] = h.dims.map(|d| d as usize);
    let [radius, omega, lambda, bandwidth] = h.f;
    let seed = u64::from_le_bytes(h.last);
    let cfg = match cfg {
        Some(c) => {
            let same = c.num_antennas() == a
                && c.chirps_per_rotation == t
                && c.samples_per_chirp == n
                && c.rotation_radius_m == radius
                && c.angular_speed_rad_s == omega
                && c.wavelength_m == lambda
                && c.bandwidth_hz == bandwidth;
            if !same {
                return Err(Error::Format(
                    "cube header disagrees with the supplied radar configuration".into(),
                ));
            }
            c.clone()
        }
        None => RadarConfig {
            rotation_radius_m: radius,
            angular_speed_rad_s: omega,
            antenna_heights_m: uniform_heights(a, lambda),
            wavelength_m: lambda,
            bandwidth_hz: bandwidth,
            samples_per_chirp: n,
            chirps_per_rotation: t,
            ..RadarConfig::default()
        },
    };
    cfg.validate()?;
    let raw = read_f32s(r, a * t * n * 2)?;
    let samples = raw
        .chunks_exact(2)
        .map(|p| Complex::new(p[0] as f64, p[1] as f64))
        .collect();
    RawCube::from_samples(&cfg, seed, samples)
}

/// Writes the cube and its sidecar.
pub fn save_cube(path: &Path, cube: &RawCube, prov: &Provenance) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    write_cube(&mut w, cube)?;
    w.flush().map_err(|e| Error::io(path, e))?;
    write_sidecar(path, prov)
}

/// Reads a cube, using its sidecar configuration when present.
pub fn load_cube(path: &Path) -> Result<RawCube> {
    let prov = read_sidecar(path)?;
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_cube(&mut BufReader::new(f), prov.as_ref().map(|p| &p.radar))
}

pub fn write_heatmap(w: &mut impl Write, heat: &Heatmap3D) -> Result<()> {
    let g = &heat.grid;
    let header = Header {
        magic: HEATMAP_MAGIC,
        dims: [
            dim(g.azimuth_bins, "azimuth bins")?,
            dim(g.elevation_bins, "elevation bins")?,
            dim(g.range_bins, "range bins")?,
        ],
        f: [
            g.azimuth_min_rad,
            g.azimuth_max_rad,
            g.elevation_min_rad,
            g.elevation_max_rad,
        ],
        last: heat.range_resolution_m.to_le_bytes(),
    };
    let io = |e| Error::Format(format!("write failed: {e}"));
    w.write_all(&header.to_bytes()).map_err(io)?;
    let mut buf = Vec::with_capacity(g.range_bins * 4);
    for chunk in heat.magnitudes().chunks(g.range_bins) {
        buf.clear();
        for m in chunk {
            buf.extend_from_slice(&(*m as f32).to_le_bytes());
        }
        w.write_all(&buf).map_err(io)?;
    }
    Ok(())
}

pub fn read_heatmap(r: &mut impl Read) -> Result<Heatmap3D> {
    let h = read_header(r, HEATMAP_MAGIC)?;
    let [az, el, rb] = h.dims.map(|d| d as usize);
    let grid = ImagingGrid {
        azimuth_bins: az,
        elevation_bins: el,
        range_bins: rb,
        azimuth_min_rad: h.f[0],
        azimuth_max_rad: h.f[1],
        elevation_min_rad: h.f[2],
        elevation_max_rad: h.f[3],
    };
    grid.validate()?;
    let dr = f64::from_le_bytes(h.last);
    if !(dr > 0.0) {
        return Err(Error::Format(format!("bad range resolution {dr}")));
    }
    let mags = read_f32s(r, az * el * rb)?;
    Heatmap3D::from_magnitudes(grid, dr, mags.into_iter().map(f64::from).collect())
}

pub fn save_heatmap(path: &Path, heat: &Heatmap3D, prov: &Provenance) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    write_heatmap(&mut w, heat)?;
    w.flush().map_err(|e| Error::io(path, e))?;
    write_sidecar(path, prov)
}

pub fn load_heatmap(path: &Path) -> Result<Heatmap3D> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_heatmap(&mut BufReader::new(f))
}

/// Lower-case hex SHA-256 of a byte slice.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}
