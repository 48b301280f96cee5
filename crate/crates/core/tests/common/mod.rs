//! Shared helpers for the integration and acceptance suites: seeded random
//! desk-scale scenes, frame building, and the dense ray-sampling DSI oracle.

#![allow(dead_code)]

use evdepth::dsi::{
    build_dsi, fuse, plane_depths, DsiGrid, Event, FusionMethod, VoteMode, VotingConfig,
};
use evdepth::geometry::{relative_pose, CameraIntrinsics, Pose, Trajectory};
use evdepth::net::{DepthMode, Head};
use evdepth::pipeline::event_window;
use evdepth::rng::{next_unit_f64, seeded_rng};
use evdepth::select::{AgtConfig, DepthMap};
use evdepth::synth::{generate, SceneSpec};
use evdepth::train::{assemble_dataset, Sample};
use nalgebra::{UnitQuaternion, Vector3};
use rand_chacha::ChaCha20Rng;

pub const Z_MIN: f64 = 1.0;
pub const Z_MAX: f64 = 4.0;
pub const DEPTH_PLANES: usize = 20;
pub const SPAN: f64 = 0.5;
pub const RADIUS: usize = 2;
pub const AGT_WINDOW: usize = 5;
pub const AGT_C: f64 = -6.0;

/// The library's seeded demo wireframe; constants above match its geometry.
pub fn desk_scene_spec(seed: u64) -> SceneSpec {
    evdepth::synth::demo_scene(seed)
}

pub struct FrameSet {
    /// (fused stereo DSI, left GT) per reference view.
    pub fused: Vec<(DsiGrid, DepthMap)>,
    /// (monocular left DSI, left GT) per reference view.
    pub mono: Vec<(DsiGrid, DepthMap)>,
}

/// Generates a desk scene and builds one DSI pair per ground-truth frame,
/// both anchored at the left camera's pose at the GT timestamp.
pub fn build_frames(seed: u64) -> FrameSet {
    let spec = desk_scene_spec(seed);
    let seq = generate(seed, &spec).unwrap();
    let right = seq.right.as_ref().expect("stereo scene");
    let vcfg = VotingConfig {
        packet_size: 1024,
        vote_mode: VoteMode::Nearest,
    };
    let mut fused_frames = Vec::new();
    let mut mono_frames = Vec::new();
    for frame in &seq.left.gt {
        let ref_pose = seq.left.trajectory.interpolate(frame.t).unwrap();
        let left_ev = event_window(&seq.left.events, frame.t, SPAN);
        let right_ev = event_window(&right.events, frame.t, SPAN);
        if left_ev.is_empty() || right_ev.is_empty() {
            continue;
        }
        let left_dsi = build_dsi(
            left_ev,
            &seq.left.trajectory,
            &ref_pose,
            &spec.intrinsics,
            Z_MIN,
            Z_MAX,
            DEPTH_PLANES,
            &vcfg,
        )
        .unwrap();
        let right_dsi = build_dsi(
            right_ev,
            &right.trajectory,
            &ref_pose,
            &spec.intrinsics,
            Z_MIN,
            Z_MAX,
            DEPTH_PLANES,
            &vcfg,
        )
        .unwrap();
        let fused = fuse(&left_dsi, &right_dsi, FusionMethod::Harmonic).unwrap();
        fused_frames.push((fused, frame.depth.clone()));
        mono_frames.push((left_dsi, frame.depth.clone()));
    }
    FrameSet {
        fused: fused_frames,
        mono: mono_frames,
    }
}

pub fn desk_agt() -> AgtConfig {
    AgtConfig::new(AGT_WINDOW, AGT_C).unwrap()
}

pub fn assemble_desk_samples(frames: &FrameSet, label: &str) -> Vec<Sample> {
    let refs: Vec<(&DsiGrid, &DepthMap)> = frames.fused.iter().map(|(g, d)| (g, d)).collect();
    assemble_dataset(
        label,
        &refs,
        &desk_agt(),
        RADIUS,
        RADIUS,
        Head::Single,
        DepthMode::Linear,
    )
    .unwrap()
    .samples
}

pub fn mae_and_median(errs: &mut [f64]) -> (f64, f64) {
    assert!(!errs.is_empty());
    errs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mae = errs.iter().sum::<f64>() / errs.len() as f64;
    let n = errs.len();
    let med = if n % 2 == 1 {
        errs[n / 2]
    } else {
        0.5 * (errs[n / 2 - 1] + errs[n / 2])
    };
    (mae, med)
}

pub fn collect_abs_errors(est: &DepthMap, gt: &DepthMap, errs: &mut Vec<f64>) {
    for (x, y, z) in est.iter_valid() {
        if let Some(zg) = gt.get(x, y) {
            errs.push((z - zg).abs());
        }
    }
}

// ---------------------------------------------------------------------------
// Dense ray-sampling oracle
// ---------------------------------------------------------------------------

/// Random single-packet voting scene on a 16x16x8 grid.
pub struct OracleScene {
    pub events: Vec<Event>,
    pub traj: Trajectory,
    pub ref_pose: Pose,
    pub intrinsics: CameraIntrinsics,
}

pub fn random_oracle_scene(seed: u64) -> OracleScene {
    let mut rng = seeded_rng(seed, 50);
    let unit = |rng: &mut ChaCha20Rng| next_unit_f64(rng);
    let fx = 9.0 + 4.0 * unit(&mut rng);
    let fy = 9.0 + 4.0 * unit(&mut rng);
    let cx = 7.0 + 2.0 * unit(&mut rng);
    let cy = 7.0 + 2.0 * unit(&mut rng);
    let intrinsics = CameraIntrinsics::new(fx, fy, cx, cy, 16, 16).unwrap();

    let small_pose = |rng: &mut ChaCha20Rng, t_scale: f64, max_angle: f64| {
        let axis = Vector3::new(unit(rng) - 0.5, unit(rng) - 0.5, unit(rng) - 0.5);
        let angle = (unit(rng) - 0.5) * 2.0 * max_angle;
        let rot = if axis.norm() < 1e-9 {
            UnitQuaternion::identity()
        } else {
            UnitQuaternion::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle)
        };
        let t = Vector3::new(
            (unit(rng) - 0.5) * 2.0 * t_scale,
            (unit(rng) - 0.5) * 2.0 * t_scale,
            (unit(rng) - 0.5) * 2.0 * t_scale,
        );
        Pose::new(t, rot)
    };
    let ref_pose = small_pose(&mut rng, 0.10, 0.09);
    let pose0 = small_pose(&mut rng, 0.20, 0.14);
    let pose1 = small_pose(&mut rng, 0.20, 0.14);
    let traj = Trajectory::new(vec![(0.0, pose0), (1.0, pose1)]).unwrap();

    let mut events: Vec<Event> = (0..50)
        .map(|_| {
            Event::new(
                unit(&mut rng),
                (unit(&mut rng) * 16.0) as u16,
                (unit(&mut rng) * 16.0) as u16,
                1,
            )
        })
        .collect();
    for e in &mut events {
        e.x = e.x.min(15);
        e.y = e.y.min(15);
    }
    events.sort_by(|a, b| a.t.partial_cmp(&b.t).unwrap());
    OracleScene {
        events,
        traj,
        ref_pose,
        intrinsics,
    }
}

/// Brute-force DSI: marches each event ray at `samples` points, assigns each
/// sample to the nearest inverse-depth plane, keeps one crossing per
/// (event, plane) — refined by bisection on the ray parameter so the pixel is
/// the exact plane crossing — and increments the grid. Never uses the
/// closed-form plane-intersection formula.
pub fn oracle_dsi(
    scene: &OracleScene,
    z_min: f64,
    z_max: f64,
    d: usize,
    packet_size: usize,
    samples: usize,
) -> DsiGrid {
    let k = &scene.intrinsics;
    let mut grid = DsiGrid::zeros(d, z_min, z_max, scene.ref_pose, *k).unwrap();
    let depths = plane_depths(z_min, z_max, d).unwrap();
    for packet in scene.events.chunks(packet_size) {
        let n = packet.len();
        let t_med = if n % 2 == 1 {
            packet[n / 2].t
        } else {
            0.5 * (packet[n / 2 - 1].t + packet[n / 2].t)
        };
        let event_pose = scene.traj.interpolate(t_med).unwrap();
        let rel = relative_pose(&scene.ref_pose, &event_pose);
        let origin = *rel.translation();
        for ev in packet {
            let ray = rel.rotate_vector(&k.normalized_ray(ev.x as f64, ev.y as f64));
            let pz = |s: f64| origin.z + s * ray.z;
            // Generous forward march covering every plane the ray can reach.
            let s_max = (z_max * 2.0 + origin.z.abs() + 1.0) / ray.z.abs().max(1e-9);
            let ds = s_max / (samples - 1) as f64;
            for (plane, &z_plane) in depths.iter().enumerate() {
                // March until a sampled interval brackets the plane depth.
                let mut bracket = None;
                for i in 1..samples {
                    let (s0, s1) = ((i - 1) as f64 * ds, i as f64 * ds);
                    if (pz(s0) - z_plane) * (pz(s1) - z_plane) <= 0.0 {
                        bracket = Some((s0, s1));
                        break;
                    }
                }
                let Some((mut lo, mut hi)) = bracket else {
                    continue;
                };
                for _ in 0..100 {
                    let mid = 0.5 * (lo + hi);
                    if (pz(lo) - z_plane) * (pz(mid) - z_plane) <= 0.0 {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                let s = 0.5 * (lo + hi);
                if s <= 0.0 {
                    continue;
                }
                let p = origin + s * ray;
                let u = k.fx * p.x / p.z + k.cx;
                let v = k.fy * p.y / p.z + k.cy;
                let (ui, vi) = (u.round() as i64, v.round() as i64);
                if ui >= 0 && vi >= 0 && (ui as usize) < 16 && (vi as usize) < 16 {
                    let cur = grid.at(plane, ui as usize, vi as usize);
                    grid.set(plane, ui as usize, vi as usize, cur + 1.0);
                }
            }
        }
    }
    grid
}
