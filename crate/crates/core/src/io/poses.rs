//! Pose files: CSV rows `t,tx,ty,tz,qx,qy,qz,qw` (seconds, meters,
//! camera-to-world quaternion), strictly increasing in time.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{Pose, Trajectory};

pub fn write_trajectory(traj: &Trajectory, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    writeln!(w, "t,tx,ty,tz,qx,qy,qz,qw")?;
    for (t, pose) in traj.samples() {
        let (tr, q) = pose.to_parts();
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            t, tr[0], tr[1], tr[2], q[0], q[1], q[2], q[3]
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trajectory(path: impl AsRef<Path>) -> Result<Trajectory> {
    let path = path.as_ref();
    let r = BufReader::new(File::open(path)?);
    let mut samples = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if i == 0 && line.starts_with('t') {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Format {
                path: path.display().to_string(),
                reason: format!("line {}: expected 8 numbers", i + 1),
            })?;
        if vals.len() != 8 {
            return Err(Error::Format {
                path: path.display().to_string(),
                reason: format!("line {}: expected 8 fields, got {}", i + 1, vals.len()),
            });
        }
        let pose = Pose::from_parts(
            [vals[1], vals[2], vals[3]],
            [vals[4], vals[5], vals[6], vals[7]],
        )?;
        samples.push((vals[0], pose));
    }
    Trajectory::new(samples)
}
