//! CA-CFAR point extraction and point-cloud / range-image metrics.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::imaging::{cell_direction, Heatmap3D};
use crate::{Error, Result, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub intensity: f64,
}

impl Point {
    pub fn new(x: f64, y: f64, z: f64, intensity: f64) -> Self {
        Point { x, y, z, intensity }
    }

    pub fn from_vec3(v: Vec3, intensity: f64) -> Self {
        Point::new(v.x, v.y, v.z, intensity)
    }

    pub fn position(&self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }
}

/// Points in the robot frame at `t = 0`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<Point>,
}

impl PointCloud {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if let Some(i) = points
            .iter()
            .position(|p| !(p.position().is_finite() && p.intensity.is_finite()))
        {
            return Err(Error::InvalidInput(format!("point {i} is not finite")));
        }
        Ok(PointCloud { points })
    }

    pub fn from_positions(positions: &[Vec3]) -> Result<Self> {
        PointCloud::new(positions.iter().map(|&v| Point::from_vec3(v, 1.0)).collect())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Option<Vec3> {
        if self.is_empty() {
            return None;
        }
        let sum = self
            .points
            .iter()
            .fold(Vec3::ZERO, |acc, p| acc + p.position());
        Some(sum * (1.0 / self.len() as f64))
    }

    /// ASCII PLY with `x y z intensity` vertex properties.
    pub fn to_ply(&self) -> String {
        let mut s = String::new();
        s.push_str("ply\nformat ascii 1.0\n");
        let _ = writeln!(s, "element vertex {}", self.len());
        s.push_str("property double x\nproperty double y\nproperty double z\nproperty double intensity\nend_header\n");
        for p in &self.points {
            let _ = writeln!(s, "{:e} {:e} {:e} {:e}", p.x, p.y, p.z, p.intensity);
        }
        s
    }

    /// Reads ASCII PLY. A missing intensity property defaults to 1.
    pub fn from_ply(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some("ply") {
            return Err(Error::Format("PLY: missing 'ply' magic".into()));
        }
        let mut count = None;
        let mut props = Vec::new();
        let mut in_vertex = false;
        for line in lines.by_ref() {
            let words: Vec<&str> = line.split_whitespace().collect();
            match words.as_slice() {
                ["format", "ascii", _] => {}
                ["format", ..] => return Err(Error::Format("PLY: only ascii format is supported".into())),
                ["comment", ..] | [] => {}
                ["element", "vertex", n] => {
                    count = Some(n.parse::<usize>().map_err(|_| Error::Format(format!("PLY: bad vertex count {n}")))?);
                    in_vertex = true;
                }
                ["element", ..] => in_vertex = false,
                ["property", _, name] if in_vertex => props.push(name.to_string()),
                ["property", ..] => {}
                ["end_header"] => break,
                _ => return Err(Error::Format(format!("PLY: unexpected header line '{line}'"))),
            }
        }
        let count = count.ok_or_else(|| Error::Format("PLY: no vertex element".into()))?;
        let col = |name: &str| props.iter().position(|p| p == name);
        let (ix, iy, iz) = match (col("x"), col("y"), col("z")) {
            (Some(x), Some(y), Some(z)) => (x, y, z),
            _ => return Err(Error::Format("PLY: vertex needs x, y, z".into())),
        };
        let ii = col("intensity");
        let mut points = Vec::with_capacity(count);
        for (row, line) in lines.filter(|l| !l.trim().is_empty()).take(count).enumerate() {
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|w| w.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Format(format!("PLY: bad number in vertex {row}")))?;
            if vals.len() < props.len() {
                return Err(Error::Format(format!("PLY: vertex {row} has {} values", vals.len())));
            }
            points.push(Point::new(vals[ix], vals[iy], vals[iz], ii.map_or(1.0, |i| vals[i])));
        }
        if points.len() != count {
            return Err(Error::Format(format!("PLY: expected {count} vertices, found {}", points.len())));
        }
        PointCloud::new(points)
    }

    pub fn save_ply(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_ply()).map_err(|e| Error::io(path, e))
    }

    pub fn load_ply(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        PointCloud::from_ply(&text)
    }
}

/// Local-maximum filter applied on top of the CFAR test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeakFilter {
    /// Every cell above threshold is a detection.
    #[default]
    None,
    /// Keep cells that are local maxima along their ray.
    Range,
    /// Keep cells that are maxima of their 3×3×3 neighbourhood.
    Local3d,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CfarParams {
    pub guard: usize,
    pub train: usize,
    pub pfa: f64,
    /// Multiplier on the CA-CFAR threshold factor.
    pub threshold_scale: f64,
    pub peak_filter: PeakFilter,
    /// Discard cells below this fraction of the heatmap maximum.
    pub min_relative: f64,
}

impl Default for CfarParams {
    fn default() -> Self {
        CfarParams {
            guard: 2,
            train: 8,
            pfa: 1e-4,
            threshold_scale: 1.0,
            peak_filter: PeakFilter::None,
            min_relative: 0.0,
        }
    }
}

impl CfarParams {
    /// Settings used for scene reconstruction: 3D peaks at least a quarter
    /// of the strongest return.
    pub fn scene() -> Self {
        CfarParams {
            peak_filter: PeakFilter::Local3d,
            min_relative: 0.25,
            ..CfarParams::default()
        }
    }

    /// CA-CFAR threshold factor on power for exponential noise,
    /// `α = N (pfa^{−1/N} − 1)` with `N = 2·train`.
    pub fn alpha(&self) -> f64 {
        let n = (2 * self.train) as f64;
        n * (self.pfa.powf(-1.0 / n) - 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.train == 0 {
            return Err(Error::InvalidConfig("CFAR needs train >= 1".into()));
        }
        if !(self.pfa > 0.0 && self.pfa < 1.0) {
            return Err(Error::InvalidConfig(format!("pfa must be in (0, 1), got {}", self.pfa)));
        }
        if !(self.threshold_scale > 0.0 && self.threshold_scale.is_finite()) {
            return Err(Error::InvalidConfig("threshold_scale must be > 0".into()));
        }
        if !(0.0..=1.0).contains(&self.min_relative) {
            return Err(Error::InvalidConfig("min_relative must be in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Heatmap cell that passed the detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Detection {
    pub azimuth_bin: usize,
    pub elevation_bin: usize,
    pub range_bin: usize,
}

/// CA-CFAR along range with the given window and false-alarm rate.
pub fn cfar_extract(heat: &Heatmap3D, guard: usize, train: usize, pfa: f64) -> Result<PointCloud> {
    cfar_extract_with(
        heat,
        &CfarParams {
            guard,
            train,
            pfa,
            ..CfarParams::default()
        },
    )
}

pub fn cfar_extract_with(heat: &Heatmap3D, params: &CfarParams) -> Result<PointCloud> {
    let detections = cfar_detect(heat, params)?;
    let points = detections
        .iter()
        .map(|d| {
            let dir = cell_direction(&heat.grid, d.azimuth_bin, d.elevation_bin);
            let mag = heat.get(d.azimuth_bin, d.elevation_bin, d.range_bin);
            Point::from_vec3(dir * heat.range_of(d.range_bin), mag)
        })
        .collect();
    PointCloud::new(points)
}

/// Cells passing the detector, in (azimuth, elevation, range) order.
///
/// Each power cell `P[k]` is compared against `α · mean` of `train` cells on
/// each side beyond `guard`; only cells with full windows on both sides are
/// tested.
pub fn cfar_detect(heat: &Heatmap3D, params: &CfarParams) -> Result<Vec<Detection>> {
    params.validate()?;
    let g = &heat.grid;
    let reach = params.guard + params.train;
    if g.range_bins < 2 * reach + 1 {
        return Err(Error::InvalidInput(format!(
            "{} range bins cannot hold a CFAR window of {} cells",
            g.range_bins,
            2 * reach + 1
        )));
    }
    let alpha = params.alpha() * params.threshold_scale;
    let floor = params.min_relative * heat.max();
    let n_train = (2 * params.train) as f64;
    let rays = g.azimuth_bins * g.elevation_bins;
    let per_ray: Vec<Vec<Detection>> = (0..rays)
        .into_par_iter()
        .map(|ray| {
            let (i, j) = (ray / g.elevation_bins, ray % g.elevation_bins);
            let mags = heat.ray(i, j);
            let power: Vec<f64> = mags.iter().map(|m| m * m).collect();
            // prefix sums for the training windows
            let mut prefix = Vec::with_capacity(power.len() + 1);
            prefix.push(0.0);
            for p in &power {
                prefix.push(prefix.last().unwrap() + p);
            }
            let window = |a: usize, b: usize| prefix[b] - prefix[a];
            let mut out = Vec::new();
            for k in reach..g.range_bins - reach {
                let p = power[k];
                if p == 0.0 || mags[k] < floor {
                    continue;
                }
                let noise = (window(k - reach, k - params.guard)
                    + window(k + params.guard + 1, k + reach + 1))
                    / n_train;
                if p <= alpha * noise {
                    continue;
                }
                let keep = match params.peak_filter {
                    PeakFilter::None => true,
                    PeakFilter::Range => mags[k] >= mags[k - 1] && mags[k] >= mags[k + 1],
                    PeakFilter::Local3d => is_local_max_3d(heat, i, j, k),
                };
                if keep {
                    out.push(Detection {
                        azimuth_bin: i,
                        elevation_bin: j,
                        range_bin: k,
                    });
                }
            }
            out
        })
        .collect();
    Ok(per_ray.into_iter().flatten().collect())
}

fn is_local_max_3d(heat: &Heatmap3D, i: usize, j: usize, k: usize) -> bool {
    let g = &heat.grid;
    let full = (g.azimuth_max_rad - g.azimuth_min_rad - std::f64::consts::TAU).abs() < 1e-9;
    let v = heat.get(i, j, k);
    for di in -1i64..=1 {
        let ii = i as i64 + di;
        let ii = if full {
            ii.rem_euclid(g.azimuth_bins as i64)
        } else if ii < 0 || ii >= g.azimuth_bins as i64 {
            continue;
        } else {
            ii
        } as usize;
        for dj in -1i64..=1 {
            let jj = j as i64 + dj;
            if jj < 0 || jj >= g.elevation_bins as i64 {
                continue;
            }
            for dk in -1i64..=1 {
                let kk = k as i64 + dk;
                if kk < 0 || kk >= g.range_bins as i64 || (di, dj, dk) == (0, 0, 0) {
                    continue;
                }
                let w = heat.get(ii, jj as usize, kk as usize);
                // ties resolve towards the lower flat index
                let later = (ii, jj as usize, kk as usize) > (i, j, k);
                if w > v || (w == v && !later) {
                    return false;
                }
            }
        }
    }
    true
}

/// Groups points whose chains of neighbours are within `radius`.
/// Returns clusters as index lists, ordered by first member.
pub fn cluster(cloud: &PointCloud, radius: f64) -> Vec<Vec<usize>> {
    let n = cloud.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for a in 0..n {
        for b in a + 1..n {
            if cloud.points[a].position().distance(cloud.points[b].position()) <= radius {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        if slot[r] == usize::MAX {
            slot[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[r]].push(i);
    }
    groups
}

/// Whether metrics use all three coordinates or only x and y.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dims {
    D2,
    #[default]
    D3,
}

fn coords(p: &Point, dims: Dims) -> [f64; 3] {
    match dims {
        Dims::D2 => [p.x, p.y, 0.0],
        Dims::D3 => [p.x, p.y, p.z],
    }
}

fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let (dx, dy, dz) = (a[0] - b[0], a[1] - b[1], a[2] - b[2]);
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Above this many target points nearest neighbours come from a kd-tree.
pub const KDTREE_THRESHOLD: usize = 1000;

/// Static kd-tree over 3D points for exact nearest-neighbour queries.
pub struct KdTree {
    pts: Vec<[f64; 3]>,
    // implicit balanced layout: node = median of its slice
    order: Vec<usize>,
}

impl KdTree {
    pub fn new(pts: Vec<[f64; 3]>) -> Self {
        let mut order: Vec<usize> = (0..pts.len()).collect();
        build(&pts, &mut order, 0);
        KdTree { pts, order }
    }

    /// Distance to the nearest stored point (`inf` when empty).
    pub fn nearest_distance(&self, q: &[f64; 3]) -> f64 {
        let mut best = f64::INFINITY;
        self.search(&self.order, 0, q, &mut best);
        best.sqrt()
    }

    fn search(&self, slice: &[usize], depth: usize, q: &[f64; 3], best: &mut f64) {
        if slice.is_empty() {
            return;
        }
        let mid = slice.len() / 2;
        let p = &self.pts[slice[mid]];
        let d2 = {
            let (dx, dy, dz) = (p[0] - q[0], p[1] - q[1], p[2] - q[2]);
            dx * dx + dy * dy + dz * dz
        };
        if d2 < *best {
            *best = d2;
        }
        let axis = depth % 3;
        let diff = q[axis] - p[axis];
        let (near, far) = if diff < 0.0 {
            (&slice[..mid], &slice[mid + 1..])
        } else {
            (&slice[mid + 1..], &slice[..mid])
        };
        self.search(near, depth + 1, q, best);
        if diff * diff < *best {
            self.search(far, depth + 1, q, best);
        }
    }
}

fn build(pts: &[[f64; 3]], order: &mut [usize], depth: usize) {
    if order.len() <= 1 {
        return;
    }
    let axis = depth % 3;
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        pts[a][axis].partial_cmp(&pts[b][axis]).unwrap_or(Ordering::Equal)
    });
    let (left, right) = order.split_at_mut(mid);
    build(pts, left, depth + 1);
    build(pts, &mut right[1..], depth + 1);
}

/// Mean over `from` of the distance to the nearest point of `to`.
fn directed_mean(from: &PointCloud, to: &PointCloud, dims: Dims) -> f64 {
    let targets: Vec<[f64; 3]> = to.points.iter().map(|p| coords(p, dims)).collect();
    let queries: Vec<[f64; 3]> = from.points.iter().map(|p| coords(p, dims)).collect();
    let mins: Vec<f64> = if targets.len() > KDTREE_THRESHOLD {
        let tree = KdTree::new(targets);
        queries.par_iter().map(|q| tree.nearest_distance(q)).collect()
    } else {
        queries
            .par_iter()
            .map(|q| targets.iter().map(|t| dist(q, t)).fold(f64::INFINITY, f64::min))
            .collect()
    };
    mins.iter().sum::<f64>() / mins.len() as f64
}

fn check_non_empty(a: &PointCloud, b: &PointCloud) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyCloud);
    }
    Ok(())
}

/// Average of the two directed mean nearest-neighbour distances.
pub fn chamfer(a: &PointCloud, b: &PointCloud, dims: Dims) -> Result<f64> {
    check_non_empty(a, b)?;
    Ok(0.5 * (directed_mean(a, b, dims) + directed_mean(b, a, dims)))
}

/// Larger of the two directed mean nearest-neighbour distances.
pub fn modified_hausdorff(a: &PointCloud, b: &PointCloud, dims: Dims) -> Result<f64> {
    check_non_empty(a, b)?;
    Ok(directed_mean(a, b, dims).max(directed_mean(b, a, dims)))
}

/// Row-major image of ranges in metres.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl RangeImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width * height != data.len() || width == 0 || height == 0 {
            return Err(Error::DimensionMismatch(format!(
                "{width}x{height} image with {} pixels",
                data.len()
            )));
        }
        Ok(RangeImage { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        RangeImage {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for row in self.data.chunks(self.width) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.6}")).collect();
            s.push_str(&line.join(","));
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut data = Vec::new();
        let mut width = None;
        let mut height = 0;
        for (lineno, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let row: Vec<f64> = line
                .split(',')
                .map(|w| w.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Format(format!("CSV line {}: bad number", lineno + 1)))?;
            match width {
                None => width = Some(row.len()),
                Some(w) if w != row.len() => {
                    return Err(Error::Format(format!(
                        "CSV line {}: {} columns, expected {w}",
                        lineno + 1,
                        row.len()
                    )))
                }
                _ => {}
            }
            data.extend(row);
            height += 1;
        }
        RangeImage::new(width.unwrap_or(0), height, data)
    }

    /// ASCII 16-bit PGM; one grey level per millimetre, saturating at
    /// 65.535 m, negative ranges clamp to 0.
    pub fn to_pgm(&self) -> String {
        let mut s = format!("P2\n{} {}\n65535\n", self.width, self.height);
        for row in self.data.chunks(self.width) {
            let line: Vec<String> = row
                .iter()
                .map(|v| ((v * 1000.0).round().clamp(0.0, 65535.0) as u32).to_string())
                .collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn from_pgm(text: &str) -> Result<Self> {
        let tokens: Vec<&str> = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or(""))
            .flat_map(str::split_whitespace)
            .collect();
        if tokens.first() != Some(&"P2") || tokens.len() < 4 {
            return Err(Error::Format("PGM: expected an ASCII P2 header".into()));
        }
        let parse = |t: &str| {
            t.parse::<usize>()
                .map_err(|_| Error::Format(format!("PGM: bad integer '{t}'")))
        };
        let (w, h, maxval) = (parse(tokens[1])?, parse(tokens[2])?, parse(tokens[3])?);
        if maxval != 65535 {
            return Err(Error::Format(format!("PGM: expected maxval 65535, got {maxval}")));
        }
        let data = tokens[4..]
            .iter()
            .map(|t| parse(t).map(|v| v as f64 / 1000.0))
            .collect::<Result<Vec<_>>>()?;
        RangeImage::new(w, h, data)
    }
}

/// Mean absolute difference over pixels whose mask entry is `false`;
/// `true` marks a pixel as excluded.
pub fn range_image_mae(pred: &RangeImage, truth: &RangeImage, mask: Option<&[bool]>) -> Result<f64> {
    if (pred.width, pred.height) != (truth.width, truth.height) {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            pred.width, pred.height, truth.width, truth.height
        )));
    }
    if let Some(m) = mask {
        if m.len() != pred.data.len() {
            return Err(Error::DimensionMismatch(format!(
                "mask has {} entries for {} pixels",
                m.len(),
                pred.data.len()
            )));
        }
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for (i, (p, t)) in pred.data.iter().zip(&truth.data).enumerate() {
        if mask.is_some_and(|m| m[i]) {
            continue;
        }
        sum += (p - t).abs();
        count += 1;
    }
    if count == 0 {
        return Err(Error::AllMasked);
    }
    Ok(sum / count as f64)
}
