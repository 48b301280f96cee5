//! Calibration files: JSON with per-camera pinhole intrinsics and the stereo
//! extrinsic (pose of the right camera expressed in the left camera frame).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::{CameraIntrinsics, Pose};

/// Plain pose record for explicit, stable JSON.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PoseRecord {
    pub t: [f64; 3],
    pub q_xyzw: [f64; 4],
}

impl PoseRecord {
    pub fn from_pose(pose: &Pose) -> Self {
        let (t, q_xyzw) = pose.to_parts();
        Self { t, q_xyzw }
    }

    pub fn to_pose(&self) -> Result<Pose> {
        Pose::from_parts(self.t, self.q_xyzw)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Calibration {
    pub left: CameraIntrinsics,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub right: Option<CameraIntrinsics>,
    /// Maps right-camera coordinates into the left-camera frame.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_left_right: Option<PoseRecord>,
}

pub fn write_calibration(calib: &Calibration, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path.as_ref(), serde_json::to_string_pretty(calib)?)?;
    Ok(())
}

pub fn read_calibration(path: impl AsRef<Path>) -> Result<Calibration> {
    let text = fs::read_to_string(path.as_ref())?;
    let calib: Calibration = serde_json::from_str(&text)?;
    CameraIntrinsics::new(
        calib.left.fx,
        calib.left.fy,
        calib.left.cx,
        calib.left.cy,
        calib.left.width,
        calib.left.height,
    )?;
    if let Some(r) = &calib.right {
        CameraIntrinsics::new(r.fx, r.fy, r.cx, r.cy, r.width, r.height)?;
    }
    Ok(calib)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{UnitQuaternion, Vector3};

    #[test]
    fn calibration_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("calib.json");
        let k = CameraIntrinsics::new(64.0, 64.0, 32.0, 32.0, 64, 64).unwrap();
        let baseline = Pose::new(Vector3::new(0.1, 0.0, 0.0), UnitQuaternion::identity());
        let calib = Calibration {
            left: k,
            right: Some(k),
            t_left_right: Some(PoseRecord::from_pose(&baseline)),
        };
        write_calibration(&calib, &p).unwrap();
        let back = read_calibration(&p).unwrap();
        assert_eq!(back.left, k);
        assert_eq!(back.right, Some(k));
        let pose = back.t_left_right.unwrap().to_pose().unwrap();
        assert_eq!(pose.translation().x, 0.1);
    }

    #[test]
    fn invalid_intrinsics_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("calib.json");
        std::fs::write(
            &p,
            r#"{"left":{"fx":-1.0,"fy":1.0,"cx":0.0,"cy":0.0,"width":4,"height":4}}"#,
        )
        .unwrap();
        assert!(read_calibration(&p).is_err());
    }
}
