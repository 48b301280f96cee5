//! Binary DSI files, little-endian:
//!
//! ```text
//! magic "DSI1" | u32 D | u32 width | u32 height | f64 z_min | f64 z_max
//! | 7 x f64 reference pose (tx ty tz qx qy qz qw) | 4 x f64 (fx fy cx cy)
//! | D*W*H f32 counts, depth-major, row-major per plane
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::dsi::DsiGrid;
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Pose};

pub const DSI_FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"DSI1";

fn fmt_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

pub fn write_dsi(grid: &DsiGrid, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    w.write_all(MAGIC)?;
    w.write_all(&(grid.d() as u32).to_le_bytes())?;
    w.write_all(&(grid.width() as u32).to_le_bytes())?;
    w.write_all(&(grid.height() as u32).to_le_bytes())?;
    w.write_all(&grid.z_min().to_le_bytes())?;
    w.write_all(&grid.z_max().to_le_bytes())?;
    let (t, q) = grid.ref_pose().to_parts();
    for v in t.iter().chain(q.iter()) {
        w.write_all(&v.to_le_bytes())?;
    }
    let k = grid.intrinsics();
    for v in [k.fx, k.fy, k.cx, k.cy] {
        w.write_all(&v.to_le_bytes())?;
    }
    for &c in grid.counts() {
        w.write_all(&c.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dsi(path: impl AsRef<Path>) -> Result<DsiGrid> {
    let path = path.as_ref();
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| fmt_err(path, "truncated file"))?;
    if &magic != MAGIC {
        return Err(fmt_err(path, "bad magic, not a DSI file"));
    }
    let mut u32buf = [0u8; 4];
    let mut read_u32 = |r: &mut BufReader<File>| -> Result<u32> {
        r.read_exact(&mut u32buf)
            .map_err(|_| fmt_err(path, "truncated header"))?;
        Ok(u32::from_le_bytes(u32buf))
    };
    let d = read_u32(&mut r)? as usize;
    let width = read_u32(&mut r)?;
    let height = read_u32(&mut r)?;
    let mut f64buf = [0u8; 8];
    let mut read_f64 = |r: &mut BufReader<File>| -> Result<f64> {
        r.read_exact(&mut f64buf)
            .map_err(|_| fmt_err(path, "truncated header"))?;
        Ok(f64::from_le_bytes(f64buf))
    };
    let z_min = read_f64(&mut r)?;
    let z_max = read_f64(&mut r)?;
    let mut pose7 = [0.0f64; 7];
    for v in &mut pose7 {
        *v = read_f64(&mut r)?;
    }
    let ref_pose = Pose::from_parts(
        [pose7[0], pose7[1], pose7[2]],
        [pose7[3], pose7[4], pose7[5], pose7[6]],
    )?;
    let mut k4 = [0.0f64; 4];
    for v in &mut k4 {
        *v = read_f64(&mut r)?;
    }
    let intrinsics = CameraIntrinsics::new(k4[0], k4[1], k4[2], k4[3], width, height)?;

    let n = d * width as usize * height as usize;
    let mut bytes = vec![0u8; n * 4];
    r.read_exact(&mut bytes)
        .map_err(|_| fmt_err(path, "truncated voxel data"))?;
    let mut tail = [0u8; 1];
    if r.read(&mut tail)? != 0 {
        return Err(fmt_err(path, "trailing bytes after voxel data"));
    }
    let counts: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    DsiGrid::from_raw(d, z_min, z_max, ref_pose, intrinsics, counts)
}
