//! Ray-density volumes: back-project events onto inverse-depth planes of a
//! reference viewpoint and count the rays crossing each voxel.
//!
//! Events are processed in packets that share one interpolated camera pose,
//! which cuts the number of slerps by orders of magnitude at event-camera
//! rates. Setting `packet_size = 1` recovers per-event interpolation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{relative_pose, CameraIntrinsics, Pose, Trajectory};

/// One brightness-change record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    /// Seconds.
    pub t: f64,
    pub x: u16,
    pub y: u16,
    pub polarity: i8,
}

impl Event {
    pub fn new(t: f64, x: u16, y: u16, polarity: i8) -> Self {
        Self { t, x, y, polarity }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VoteMode {
    /// Round to the nearest pixel, one integer count per crossing.
    Nearest,
    /// Spread unit mass over the four neighboring pixels. Crossings whose
    /// 2x2 neighborhood is not fully inside the image are dropped so every
    /// accepted crossing deposits exactly weight 1.
    Bilinear,
}

impl std::str::FromStr for VoteMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nearest" => Ok(Self::Nearest),
            "bilinear" => Ok(Self::Bilinear),
            other => Err(Error::Config(format!("unknown vote mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VotingConfig {
    pub packet_size: usize,
    pub vote_mode: VoteMode,
}

impl Default for VotingConfig {
    fn default() -> Self {
        Self {
            packet_size: 1024,
            vote_mode: VoteMode::Nearest,
        }
    }
}

impl VotingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.packet_size < 1 {
            return Err(Error::Config("packet_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Depth planes equidistant in inverse depth:
/// 1/z_i = 1/z_min + (i/(D-1)) * (1/z_max - 1/z_min).
///
/// The endpoints are returned exactly as `z_min` and `z_max`.
pub fn plane_depths(z_min: f64, z_max: f64, d: usize) -> Result<Vec<f64>> {
    validate_depth_range(z_min, z_max, d)?;
    let inv_min = 1.0 / z_min;
    let inv_max = 1.0 / z_max;
    Ok((0..d)
        .map(|i| {
            if i == 0 {
                z_min
            } else if i == d - 1 {
                z_max
            } else {
                let w = inv_min + (i as f64 / (d - 1) as f64) * (inv_max - inv_min);
                1.0 / w
            }
        })
        .collect())
}

pub(crate) fn validate_depth_range(z_min: f64, z_max: f64, d: usize) -> Result<()> {
    if !(z_min > 0.0 && z_max > z_min) {
        return Err(Error::Config(format!(
            "need 0 < z_min < z_max, got [{z_min}, {z_max}]"
        )));
    }
    if d < 2 {
        return Err(Error::Config(format!(
            "need at least 2 depth planes, got {d}"
        )));
    }
    Ok(())
}

/// D x W x H ray-count volume anchored at a reference viewpoint.
///
/// Counts are stored depth-major, row-major per plane: `(plane, y, x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DsiGrid {
    d: usize,
    width: usize,
    height: usize,
    z_min: f64,
    z_max: f64,
    counts: Vec<f32>,
    ref_pose: Pose,
    intrinsics: CameraIntrinsics,
}

impl DsiGrid {
    pub fn zeros(
        d: usize,
        z_min: f64,
        z_max: f64,
        ref_pose: Pose,
        intrinsics: CameraIntrinsics,
    ) -> Result<Self> {
        validate_depth_range(z_min, z_max, d)?;
        let width = intrinsics.width as usize;
        let height = intrinsics.height as usize;
        Ok(Self {
            d,
            width,
            height,
            z_min,
            z_max,
            counts: vec![0.0; d * width * height],
            ref_pose,
            intrinsics,
        })
    }

    pub(crate) fn from_raw(
        d: usize,
        z_min: f64,
        z_max: f64,
        ref_pose: Pose,
        intrinsics: CameraIntrinsics,
        counts: Vec<f32>,
    ) -> Result<Self> {
        let mut grid = Self::zeros(d, z_min, z_max, ref_pose, intrinsics)?;
        if counts.len() != grid.counts.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} voxels, got {}",
                grid.counts.len(),
                counts.len()
            )));
        }
        if counts.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::Data(
                "DSI counts must be finite and non-negative".into(),
            ));
        }
        grid.counts = counts;
        Ok(grid)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn z_min(&self) -> f64 {
        self.z_min
    }

    pub fn z_max(&self) -> f64 {
        self.z_max
    }

    pub fn ref_pose(&self) -> &Pose {
        &self.ref_pose
    }

    pub fn intrinsics(&self) -> &CameraIntrinsics {
        &self.intrinsics
    }

    pub fn counts(&self) -> &[f32] {
        &self.counts
    }

    #[inline]
    pub fn index(&self, plane: usize, x: usize, y: usize) -> usize {
        (plane * self.height + y) * self.width + x
    }

    #[inline]
    pub fn at(&self, plane: usize, x: usize, y: usize) -> f32 {
        self.counts[self.index(plane, x, y)]
    }

    pub fn set(&mut self, plane: usize, x: usize, y: usize, v: f32) {
        let i = self.index(plane, x, y);
        self.counts[i] = v;
    }

    pub fn plane_depths(&self) -> Vec<f64> {
        plane_depths(self.z_min, self.z_max, self.d).expect("grid invariants hold")
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().map(|&c| c as f64).sum()
    }

    /// Same geometry: shape, depth range, anchor pose, and intrinsics.
    pub fn same_anchor(&self, other: &DsiGrid) -> bool {
        self.d == other.d
            && self.width == other.width
            && self.height == other.height
            && self.z_min == other.z_min
            && self.z_max == other.z_max
            && self.ref_pose == other.ref_pose
            && self.intrinsics == other.intrinsics
    }

    /// Voxel-wise scale; used by the scale-invariance checks.
    pub fn scaled(&self, k: f32) -> DsiGrid {
        let mut out = self.clone();
        for c in &mut out.counts {
            *c *= k;
        }
        out
    }
}

/// Builds a DSI by casting one ray per event and incrementing every plane
/// crossing in front of the event camera that projects inside the reference
/// image.
///
/// For a packet-shared relative pose (R, t) and normalized event ray
/// x̂ = K^{-1}(x, y, 1), the crossing with plane z_i lies at ray parameter
/// s = (z_i - t_z) / (R x̂)_z and projects through K from P = s R x̂ + t.
///
/// Packets are fanned out to parallel workers with private grids merged by
/// addition in packet order, which reproduces the sequential result exactly
/// in nearest mode (integer counts).
#[allow(clippy::too_many_arguments)]
pub fn build_dsi(
    events: &[Event],
    traj: &Trajectory,
    ref_pose: &Pose,
    intrinsics: &CameraIntrinsics,
    z_min: f64,
    z_max: f64,
    d: usize,
    cfg: &VotingConfig,
) -> Result<DsiGrid> {
    cfg.validate()?;
    let grid = DsiGrid::zeros(d, z_min, z_max, *ref_pose, *intrinsics)?;
    if events.is_empty() {
        return Ok(grid);
    }
    for (i, pair) in events.windows(2).enumerate() {
        if pair[1].t < pair[0].t {
            return Err(Error::Data(format!(
                "event stream not sorted by time at index {}",
                i + 1
            )));
        }
    }
    for (i, ev) in events.iter().enumerate() {
        if !intrinsics.contains(ev.x as i64, ev.y as i64) {
            return Err(Error::Data(format!(
                "event {i} at ({}, {}) outside {}x{} sensor",
                ev.x, ev.y, intrinsics.width, intrinsics.height
            )));
        }
        if !traj.contains(ev.t) {
            return Err(Error::OutOfRange {
                t: ev.t,
                start: traj.start_time(),
                end: traj.end_time(),
            });
        }
    }

    let depths = plane_depths(z_min, z_max, d)?;
    let packets: Vec<&[Event]> = events.chunks(cfg.packet_size).collect();
    let packet_poses: Vec<Pose> = packets
        .iter()
        .map(|p| {
            let pose = traj.interpolate(packet_median_time(p))?;
            Ok(relative_pose(ref_pose, &pose))
        })
        .collect::<Result<_>>()?;

    let workers = rayon::current_num_threads().max(1).min(packets.len());
    let chunk = packets.len().div_ceil(workers);
    let partials: Vec<Vec<f32>> = packets
        .par_chunks(chunk)
        .zip(packet_poses.par_chunks(chunk))
        .map(|(packs, poses)| {
            let mut local = vec![0.0f32; grid.counts.len()];
            for (packet, rel) in packs.iter().zip(poses) {
                vote_packet(
                    packet,
                    rel,
                    intrinsics,
                    &depths,
                    cfg.vote_mode,
                    &mut local,
                    grid.height,
                    grid.width,
                );
            }
            local
        })
        .collect();

    let mut grid = grid;
    for partial in partials {
        for (acc, v) in grid.counts.iter_mut().zip(partial) {
            *acc += v;
        }
    }
    Ok(grid)
}

fn packet_median_time(packet: &[Event]) -> f64 {
    let n = packet.len();
    if n % 2 == 1 {
        packet[n / 2].t
    } else {
        0.5 * (packet[n / 2 - 1].t + packet[n / 2].t)
    }
}

#[allow(clippy::too_many_arguments)]
fn vote_packet(
    packet: &[Event],
    rel: &Pose,
    k: &CameraIntrinsics,
    depths: &[f64],
    mode: VoteMode,
    counts: &mut [f32],
    height: usize,
    width: usize,
) {
    let t = *rel.translation();
    for ev in packet {
        let ray = rel.rotate_vector(&k.normalized_ray(ev.x as f64, ev.y as f64));
        for (plane, &z) in depths.iter().enumerate() {
            let s = (z - t.z) / ray.z;
            if !(s > 0.0) {
                continue;
            }
            let px = s * ray.x + t.x;
            let py = s * ray.y + t.y;
            let pz = s * ray.z + t.z;
            let u = k.fx * px / pz + k.cx;
            let v = k.fy * py / pz + k.cy;
            match mode {
                VoteMode::Nearest => {
                    let ui = u.round() as i64;
                    let vi = v.round() as i64;
                    if ui >= 0 && vi >= 0 && (ui as usize) < width && (vi as usize) < height {
                        counts[(plane * height + vi as usize) * width + ui as usize] += 1.0;
                    }
                }
                VoteMode::Bilinear => {
                    let u0 = u.floor();
                    let v0 = v.floor();
                    let (iu, iv) = (u0 as i64, v0 as i64);
                    if iu < 0 || iv < 0 || (iu + 1) as usize >= width || (iv + 1) as usize >= height
                    {
                        continue;
                    }
                    let fu = (u - u0) as f32;
                    let fv = (v - v0) as f32;
                    let (x0, y0) = (iu as usize, iv as usize);
                    let base = plane * height;
                    counts[(base + y0) * width + x0] += (1.0 - fu) * (1.0 - fv);
                    counts[(base + y0) * width + x0 + 1] += fu * (1.0 - fv);
                    counts[(base + y0 + 1) * width + x0] += (1.0 - fu) * fv;
                    counts[(base + y0 + 1) * width + x0 + 1] += fu * fv;
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionMethod {
    Harmonic,
    Arithmetic,
    Geometric,
    Min,
}

impl std::str::FromStr for FusionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "harmonic" => Ok(Self::Harmonic),
            "arithmetic" => Ok(Self::Arithmetic),
            "geometric" => Ok(Self::Geometric),
            "min" => Ok(Self::Min),
            other => Err(Error::Config(format!("unknown fusion method '{other}'"))),
        }
    }
}

/// Voxel-wise fusion kernel on non-negative counts.
pub fn fuse_values(a: f64, b: f64, method: FusionMethod) -> f64 {
    match method {
        FusionMethod::Harmonic => {
            if a + b == 0.0 {
                0.0
            } else {
                2.0 * a * b / (a + b)
            }
        }
        FusionMethod::Arithmetic => 0.5 * (a + b),
        FusionMethod::Geometric => (a * b).sqrt(),
        FusionMethod::Min => a.min(b),
    }
}

/// Fuses two DSIs sharing the same anchor. Harmonic mean is the stereo
/// default: it suppresses voxels supported by only one camera.
pub fn fuse(a: &DsiGrid, b: &DsiGrid, method: FusionMethod) -> Result<DsiGrid> {
    if !a.same_anchor(b) {
        return Err(Error::ShapeMismatch(
            "DSI fusion requires identical shape, depth range, anchor pose, and intrinsics".into(),
        ));
    }
    let mut out = a.clone();
    for (o, (&x, &y)) in out
        .counts
        .iter_mut()
        .zip(a.counts.iter().zip(b.counts.iter()))
    {
        *o = fuse_values(x as f64, y as f64, method) as f32;
    }
    Ok(out)
}
