//! Pinhole camera model, rigid poses, and trajectory interpolation.
//!
//! Everything here is immutable after construction and all operations are
//! pure functions, so concurrent read access is safe.

use nalgebra::{Quaternion, UnitQuaternion, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rectified pinhole intrinsics. Lens distortion is assumed removed upstream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0) {
            return Err(Error::Config(format!(
                "focal lengths must be positive, got fx={fx}, fy={fy}"
            )));
        }
        if width == 0 || height == 0 {
            return Err(Error::Config(format!(
                "sensor must be at least 1x1, got {width}x{height}"
            )));
        }
        if !(0.0 <= cx && cx < width as f64) || !(0.0 <= cy && cy < height as f64) {
            return Err(Error::Config(format!(
                "principal point ({cx}, {cy}) outside {width}x{height} sensor"
            )));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }

    /// Projects a camera-frame point to pixel coordinates (no rounding).
    pub fn project(&self, p: &Vector3<f64>) -> Result<Vector2<f64>> {
        if p.z <= 0.0 {
            return Err(Error::BehindCamera { z: p.z });
        }
        Ok(Vector2::new(
            self.fx * p.x / p.z + self.cx,
            self.fy * p.y / p.z + self.cy,
        ))
    }

    /// Lifts a pixel to the camera-frame point at the given depth.
    pub fn back_project(&self, pixel: &Vector2<f64>, depth: f64) -> Result<Vector3<f64>> {
        if depth <= 0.0 {
            return Err(Error::Config(format!(
                "back-projection depth must be positive, got {depth}"
            )));
        }
        Ok(Vector3::new(
            depth * (pixel.x - self.cx) / self.fx,
            depth * (pixel.y - self.cy) / self.fy,
            depth,
        ))
    }

    /// Unit-depth ray through a pixel: K^{-1} (x, y, 1).
    pub fn normalized_ray(&self, x: f64, y: f64) -> Vector3<f64> {
        Vector3::new((x - self.cx) / self.fx, (y - self.cy) / self.fy, 1.0)
    }

    pub fn contains(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as u32) < self.width && (y as u32) < self.height
    }
}

/// Rigid transform: rotation then translation, mapping local coordinates into
/// the parent frame (camera-to-world when used as a camera pose).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    translation: Vector3<f64>,
    rotation: UnitQuaternion<f64>,
}

impl Pose {
    pub fn new(translation: Vector3<f64>, rotation: UnitQuaternion<f64>) -> Self {
        Self {
            translation,
            rotation,
        }
    }

    pub fn identity() -> Self {
        Self {
            translation: Vector3::zeros(),
            rotation: UnitQuaternion::identity(),
        }
    }

    /// Builds a pose from raw components, renormalizing the quaternion.
    /// Rejects norms far from 1, which indicate corrupt input rather than
    /// rounding from a text format.
    pub fn from_parts(t: [f64; 3], q_xyzw: [f64; 4]) -> Result<Self> {
        let [qx, qy, qz, qw] = q_xyzw;
        let q = Quaternion::new(qw, qx, qy, qz);
        let norm = q.norm();
        if !norm.is_finite() || (norm - 1.0).abs() > 1e-3 {
            return Err(Error::Data(format!(
                "quaternion norm {norm} too far from 1"
            )));
        }
        Ok(Self {
            translation: Vector3::new(t[0], t[1], t[2]),
            rotation: UnitQuaternion::from_quaternion(q),
        })
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn rotation(&self) -> &UnitQuaternion<f64> {
        &self.rotation
    }

    /// (tx, ty, tz, qx, qy, qz, qw)
    pub fn to_parts(&self) -> ([f64; 3], [f64; 4]) {
        let t = self.translation;
        let q = self.rotation.quaternion();
        ([t.x, t.y, t.z], [q.i, q.j, q.k, q.w])
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn rotate_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    /// self ∘ other (apply `other` first).
    pub fn compose(&self, other: &Pose) -> Pose {
        let q = self.rotation.quaternion() * other.rotation.quaternion();
        Pose {
            translation: self.rotation * other.translation + self.translation,
            rotation: UnitQuaternion::from_quaternion(q),
        }
    }

    pub fn inverse(&self) -> Pose {
        let inv_rot = self.rotation.inverse();
        Pose {
            translation: -(inv_rot * self.translation),
            rotation: inv_rot,
        }
    }
}

/// T_wr^{-1} ∘ T_we: maps event-camera coordinates into reference-camera
/// coordinates.
pub fn relative_pose(t_wr: &Pose, t_we: &Pose) -> Pose {
    t_wr.inverse().compose(t_we)
}

/// Shortest-arc spherical interpolation, with a linear fallback when the
/// quaternions are nearly parallel.
fn slerp_shortest(
    q0: &UnitQuaternion<f64>,
    q1: &UnitQuaternion<f64>,
    u: f64,
) -> UnitQuaternion<f64> {
    let a = q0.quaternion().coords;
    let mut b = q1.quaternion().coords;
    let mut dot = a.dot(&b);
    if dot < 0.0 {
        b = -b;
        dot = -dot;
    }
    let coords = if dot > 1.0 - 1e-12 {
        a * (1.0 - u) + b * u
    } else {
        let theta = dot.clamp(-1.0, 1.0).acos();
        let sin_theta = theta.sin();
        a * ((1.0 - u) * theta).sin() / sin_theta + b * (u * theta).sin() / sin_theta
    };
    UnitQuaternion::from_quaternion(Quaternion::from_vector(coords))
}

/// Time-ordered pose samples. At least two samples are required so every
/// query inside the span has a bracketing pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    samples: Vec<(f64, Pose)>,
}

impl Trajectory {
    pub fn new(samples: Vec<(f64, Pose)>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::Config(format!(
                "trajectory needs at least 2 samples, got {}",
                samples.len()
            )));
        }
        for w in samples.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::Data(format!(
                    "trajectory timestamps must be strictly increasing ({} then {})",
                    w[0].0, w[1].0
                )));
            }
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[(f64, Pose)] {
        &self.samples
    }

    pub fn start_time(&self) -> f64 {
        self.samples[0].0
    }

    pub fn end_time(&self) -> f64 {
        self.samples[self.samples.len() - 1].0
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.start_time() && t <= self.end_time()
    }

    /// Pose at time `t`: linear translation, shortest-arc slerp rotation
    /// between the bracketing samples. Exact sample timestamps return the
    /// stored pose unchanged. No extrapolation.
    pub fn interpolate(&self, t: f64) -> Result<Pose> {
        if !self.contains(t) {
            return Err(Error::OutOfRange {
                t,
                start: self.start_time(),
                end: self.end_time(),
            });
        }
        // First sample with timestamp >= t.
        let hi = self.samples.partition_point(|(ts, _)| *ts < t);
        if hi < self.samples.len() && self.samples[hi].0 == t {
            return Ok(self.samples[hi].1);
        }
        let (t0, p0) = self.samples[hi - 1];
        let (t1, p1) = self.samples[hi];
        let u = (t - t0) / (t1 - t0);
        Ok(Pose {
            translation: p0.translation * (1.0 - u) + p1.translation * u,
            rotation: slerp_shortest(&p0.rotation, &p1.rotation, u),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand_chacha::ChaCha20Rng;
    use rand_core::{RngCore, SeedableRng};

    fn test_rng(seed: u64) -> ChaCha20Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        ChaCha20Rng::from_seed(key)
    }

    fn rand_unit(rng: &mut ChaCha20Rng) -> f64 {
        (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    fn random_pose(rng: &mut ChaCha20Rng) -> Pose {
        let axis = Vector3::new(
            rand_unit(rng) - 0.5,
            rand_unit(rng) - 0.5,
            rand_unit(rng) - 0.5,
        );
        let angle = (rand_unit(rng) - 0.5) * 2.0;
        let rot = if axis.norm() < 1e-9 {
            UnitQuaternion::identity()
        } else {
            UnitQuaternion::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle)
        };
        let t = Vector3::new(
            rand_unit(rng) * 4.0 - 2.0,
            rand_unit(rng) * 4.0 - 2.0,
            rand_unit(rng) * 4.0 - 2.0,
        );
        Pose::new(t, rot)
    }

    fn k100() -> CameraIntrinsics {
        CameraIntrinsics::new(100.0, 100.0, 50.0, 50.0, 101, 101).unwrap()
    }

    #[test]
    fn project_on_axis() {
        let p = k100().project(&Vector3::new(0.0, 0.0, 2.0)).unwrap();
        assert_eq!((p.x, p.y), (50.0, 50.0));
    }

    #[test]
    fn project_off_axis() {
        let p = k100().project(&Vector3::new(1.0, 0.0, 2.0)).unwrap();
        assert_eq!((p.x, p.y), (100.0, 50.0));
    }

    #[test]
    fn project_behind_camera_fails() {
        assert!(matches!(
            k100().project(&Vector3::new(0.0, 0.0, -1.0)),
            Err(Error::BehindCamera { .. })
        ));
    }

    #[test]
    fn back_project_principal_point() {
        let p = k100().back_project(&Vector2::new(50.0, 50.0), 3.0).unwrap();
        assert_eq!(p, Vector3::new(0.0, 0.0, 3.0));
    }

    #[test]
    fn back_project_inverse_of_project() {
        let p = k100()
            .back_project(&Vector2::new(100.0, 50.0), 2.0)
            .unwrap();
        assert_relative_eq!(p, Vector3::new(1.0, 0.0, 2.0), epsilon = 1e-12);
    }

    #[test]
    fn back_project_rejects_nonpositive_depth() {
        assert!(k100().back_project(&Vector2::new(10.0, 10.0), 0.0).is_err());
        assert!(k100()
            .back_project(&Vector2::new(10.0, 10.0), -2.0)
            .is_err());
    }

    #[test]
    fn project_back_project_round_trip() {
        let k = k100();
        let mut rng = test_rng(7);
        for _ in 0..1000 {
            let px = Vector2::new(rand_unit(&mut rng) * 100.0, rand_unit(&mut rng) * 100.0);
            let depth = 0.1 + rand_unit(&mut rng) * 10.0;
            let p = k.back_project(&px, depth).unwrap();
            let px2 = k.project(&p).unwrap();
            assert_relative_eq!(px2, px, epsilon = 1e-9);
        }
    }

    #[test]
    fn intrinsics_validation() {
        assert!(CameraIntrinsics::new(-1.0, 1.0, 0.0, 0.0, 4, 4).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 4.0, 0.0, 4, 4).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 0.0, 0.0, 0, 4).is_err());
    }

    #[test]
    fn relative_pose_of_equal_poses_is_identity() {
        let mut rng = test_rng(1);
        let p = random_pose(&mut rng);
        let rel = relative_pose(&p, &p);
        assert!(rel.translation().norm() < 1e-12);
        assert!(rel.rotation().angle() < 1e-12);
    }

    #[test]
    fn relative_pose_from_identity_reference() {
        let mut rng = test_rng(2);
        let p = random_pose(&mut rng);
        let rel = relative_pose(&Pose::identity(), &p);
        assert_relative_eq!(rel.translation(), p.translation(), epsilon = 1e-12);
        assert!(rel.rotation().angle_to(p.rotation()) < 1e-12);
    }

    #[test]
    fn relative_pose_group_law() {
        let mut rng = test_rng(3);
        for _ in 0..50 {
            let t_wr = random_pose(&mut rng);
            let t_we = random_pose(&mut rng);
            let rel = relative_pose(&t_wr, &t_we);
            let recomposed = t_wr.compose(&rel);
            assert_relative_eq!(recomposed.translation(), t_we.translation(), epsilon = 1e-9);
            assert!(recomposed.rotation().angle_to(t_we.rotation()) < 1e-9);
        }
    }

    #[test]
    fn quaternion_norm_preserved_over_composition_chain() {
        let mut rng = test_rng(4);
        let mut acc = Pose::identity();
        for _ in 0..100 {
            acc = acc.compose(&random_pose(&mut rng));
            assert!((acc.rotation().quaternion().norm() - 1.0).abs() <= 1e-9);
        }
    }

    fn two_sample_traj() -> Trajectory {
        let quarter_z =
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), std::f64::consts::FRAC_PI_2);
        Trajectory::new(vec![
            (0.0, Pose::identity()),
            (1.0, Pose::new(Vector3::new(2.0, 0.0, 0.0), quarter_z)),
        ])
        .unwrap()
    }

    #[test]
    fn interpolate_at_sample_returns_stored_pose() {
        let traj = two_sample_traj();
        let p = traj.interpolate(1.0).unwrap();
        assert_eq!(p, traj.samples()[1].1);
    }

    #[test]
    fn interpolate_midpoint_gives_half_rotation() {
        let traj = two_sample_traj();
        let p = traj.interpolate(0.5).unwrap();
        assert_relative_eq!(
            p.translation(),
            &Vector3::new(1.0, 0.0, 0.0),
            epsilon = 1e-12
        );
        assert_relative_eq!(
            p.rotation().angle(),
            std::f64::consts::FRAC_PI_4,
            epsilon = 1e-12
        );
        assert_relative_eq!(p.rotation().axis().unwrap().z, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn interpolate_outside_span_errors() {
        let traj = two_sample_traj();
        assert!(matches!(
            traj.interpolate(-0.1),
            Err(Error::OutOfRange { .. })
        ));
        assert!(matches!(
            traj.interpolate(1.1),
            Err(Error::OutOfRange { .. })
        ));
    }

    #[test]
    fn interpolate_continuous_near_samples() {
        let mut rng = test_rng(5);
        let samples: Vec<(f64, Pose)> = (0..5)
            .map(|i| (i as f64 * 0.25, random_pose(&mut rng)))
            .collect();
        let traj = Trajectory::new(samples).unwrap();
        let delta = 1e-6;
        for &(ts, _) in traj.samples() {
            let here = traj.interpolate(ts).unwrap();
            for probe in [ts - delta, ts + delta] {
                if !traj.contains(probe) {
                    continue;
                }
                let near = traj.interpolate(probe).unwrap();
                assert!((near.translation() - here.translation()).norm() < 1e-4);
                assert!(near.rotation().angle_to(here.rotation()) < 1e-4);
            }
        }
    }

    #[test]
    fn trajectory_rejects_bad_input() {
        assert!(Trajectory::new(vec![(0.0, Pose::identity())]).is_err());
        assert!(Trajectory::new(vec![(0.0, Pose::identity()), (0.0, Pose::identity())]).is_err());
    }

    #[test]
    fn pose_from_parts_rejects_bad_norm() {
        assert!(Pose::from_parts([0.0; 3], [0.0, 0.0, 0.0, 0.5]).is_err());
        assert!(Pose::from_parts([0.0; 3], [0.0, 0.0, 0.0, 1.0]).is_ok());
    }
}
