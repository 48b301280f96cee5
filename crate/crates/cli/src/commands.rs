//! Command implementations. Each command reads and writes only documented
//! file formats and drops a `<output>.meta.json` next to its main output.

use std::path::{Path, PathBuf};
use std::time::Instant;

use evdepth::config::{RunConfig, RunMetadata};
use evdepth::dsi::{build_dsi as build_dsi_grid, fuse as fuse_grids, DsiGrid};
use evdepth::error::{Error, Result};
use evdepth::geometry::Trajectory;
use evdepth::io;
use evdepth::metrics::{
    aggregate, compute_metrics, compute_metrics_pooled, format_table, MetricsReport,
};
use evdepth::net::{init_params, load_models, save_models};
use evdepth::pipeline::{event_window, infer_depth_map, select_pixels};
use evdepth::select::{argmax_depth, morph_dilate, DepthMap, SubDsi};
use evdepth::synth::{demo_scene, generate, SceneSpec};
use evdepth::train::{
    assemble_dataset, predict, train as train_model, train_ensemble, EnsembleModel, Sample,
    TrainedModel,
};

use crate::{
    BenchArgs, BenchCommand, BuildDsiArgs, EvalArgs, FuseArgs, InferArgs, RenderArgs, SelectArgs,
    SynthArgs, TrainArgs,
};

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    Ok(())
}

fn meta_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    out.with_file_name(name)
}

fn write_meta(meta: &RunMetadata, out: &Path) -> Result<()> {
    meta.save(meta_path(out))
}

fn frame_file(dir: &Path, index: usize) -> PathBuf {
    dir.join(format!("frame_{index:04}.dsi"))
}

pub fn synth(args: SynthArgs) -> Result<()> {
    let spec = match &args.spec {
        Some(path) => SceneSpec::from_json(&std::fs::read_to_string(path)?)?,
        None => demo_scene(args.seed),
    };
    std::fs::create_dir_all(&args.out)?;
    let seq = generate(args.seed, &spec)?;
    if seq.left.events.is_empty() {
        eprintln!("warning: degenerate trajectory produced zero events");
    }

    std::fs::write(args.out.join("scene.json"), spec.to_json()?)?;
    let calib = io::Calibration {
        left: spec.intrinsics,
        right: seq.right.as_ref().map(|_| spec.intrinsics),
        t_left_right: seq.right.as_ref().map(|_| io::PoseRecord {
            t: [spec.stereo_baseline, 0.0, 0.0],
            q_xyzw: [0.0, 0.0, 0.0, 1.0],
        }),
    };
    io::write_calibration(&calib, args.out.join("calib.json"))?;

    let ext = match args.events_format.as_str() {
        "csv" => "csv",
        "bin" => "bin",
        other => return Err(Error::Config(format!("unknown events format '{other}'"))),
    };
    let mut cameras = Vec::new();
    let tracks = [
        Some(("left", &seq.left)),
        seq.right.as_ref().map(|track| ("right", track)),
    ];
    for (name, track) in tracks.into_iter().flatten() {
        let events_file = format!("{name}_events.{ext}");
        if ext == "csv" {
            io::write_events_csv(&track.events, args.out.join(&events_file))?;
        } else {
            io::write_events_bin(&track.events, args.out.join(&events_file))?;
        }
        let poses_file = format!("{name}_poses.csv");
        io::write_trajectory(&track.trajectory, args.out.join(&poses_file))?;
        cameras.push(io::CameraFiles {
            name: name.to_string(),
            events: events_file,
            poses: poses_file,
        });
    }

    std::fs::create_dir_all(args.out.join("gt"))?;
    let mut gt = Vec::new();
    for (i, frame) in seq.left.gt.iter().enumerate() {
        let rel = format!("gt/frame_{i:04}.pfm");
        io::write_pfm(&frame.depth, args.out.join(&rel))?;
        gt.push(io::GtEntry {
            t: frame.t,
            path: rel,
        });
    }

    let manifest = io::SequenceManifest {
        sequence: args
            .out
            .file_name()
            .map(|n| n.to_string_lossy().to_string())
            .unwrap_or_else(|| "sequence".to_string()),
        calib: "calib.json".to_string(),
        cameras,
        gt,
    };
    let manifest_path = args.out.join("manifest.json");
    manifest.save(&manifest_path)?;

    let mut meta = RunMetadata::new(
        "synth",
        RunConfig {
            seed: args.seed,
            ..RunConfig::default()
        },
    );
    meta.note("scene_spec", "scene.json");
    meta.note("left_events", seq.left.events.len());
    if let Some(right) = &seq.right {
        meta.note("right_events", right.events.len());
    }
    meta.note("gt_frames", seq.left.gt.len());
    write_meta(&meta, &manifest_path)?;
    println!(
        "wrote {} ({} left events, {} GT frames)",
        manifest_path.display(),
        seq.left.events.len(),
        seq.left.gt.len()
    );
    Ok(())
}

struct SceneInputs {
    manifest: io::SequenceManifest,
    calib: io::Calibration,
    manifest_path: PathBuf,
}

impl SceneInputs {
    fn load(path: &Path) -> Result<Self> {
        let manifest = io::SequenceManifest::load(path)?;
        let calib = io::read_calibration(io::SequenceManifest::resolve(path, &manifest.calib))?;
        Ok(Self {
            manifest,
            calib,
            manifest_path: path.to_path_buf(),
        })
    }

    fn camera(&self, name: &str) -> Result<&io::CameraFiles> {
        self.manifest
            .camera(name)
            .ok_or_else(|| Error::Data(format!("manifest has no camera '{name}'")))
    }

    fn resolve(&self, rel: &str) -> PathBuf {
        io::SequenceManifest::resolve(&self.manifest_path, rel)
    }

    fn reference_trajectory(&self) -> Result<Trajectory> {
        let reference = self.camera("left").or_else(|_| {
            self.manifest
                .cameras
                .first()
                .ok_or_else(|| Error::Data("manifest lists no cameras".into()))
        })?;
        io::read_trajectory(self.resolve(&reference.poses))
    }
}

pub fn build_dsi(args: BuildDsiArgs) -> Result<()> {
    let cfg = args.cfg.resolve()?;
    let scene = SceneInputs::load(&args.manifest)?;
    let cam = scene.camera(&args.camera)?;
    let events = io::read_events(scene.resolve(&cam.events))?;
    let traj = io::read_trajectory(scene.resolve(&cam.poses))?;
    let ref_traj = scene.reference_trajectory()?;
    if args.camera != "left" {
        if let Some(right) = &scene.calib.right {
            if *right != scene.calib.left {
                eprintln!(
                    "warning: per-camera intrinsics differ; DSIs assume a rectified pair and use the left camera's intrinsics"
                );
            }
        }
    }
    let k = scene.calib.left;

    std::fs::create_dir_all(&args.out)?;
    let mut written = 0usize;
    for (i, entry) in scene.manifest.gt.iter().enumerate() {
        let ref_pose = ref_traj.interpolate(entry.t)?;
        let window = event_window(&events, entry.t, cfg.span);
        let grid = build_dsi_grid(
            window,
            &traj,
            &ref_pose,
            &k,
            cfg.z_min,
            cfg.z_max,
            cfg.d,
            &cfg.voting_config(),
        )?;
        io::write_dsi(&grid, frame_file(&args.out, i))?;
        written += 1;
    }
    let mut meta = RunMetadata::new("build-dsi", cfg);
    meta.note("manifest", args.manifest.display().to_string());
    meta.note("camera", args.camera.clone());
    meta.note("frames", written);
    meta.note("events", events.len());
    write_meta(&meta, &args.out.join("dsi"))?;
    println!("wrote {written} DSI frames to {}", args.out.display());
    Ok(())
}

fn dsi_files_in(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().map(|e| e == "dsi").unwrap_or(false))
        .collect();
    files.sort();
    Ok(files)
}

pub fn fuse(args: FuseArgs) -> Result<()> {
    let cfg = args.cfg.resolve()?;
    let pairs: Vec<(PathBuf, PathBuf, PathBuf)> = if args.a.is_dir() {
        std::fs::create_dir_all(&args.out)?;
        let a_files = dsi_files_in(&args.a)?;
        if a_files.is_empty() {
            return Err(Error::Data(format!(
                "no .dsi files in {}",
                args.a.display()
            )));
        }
        a_files
            .into_iter()
            .map(|a| {
                let name = a
                    .file_name()
                    .expect("listed file has a name")
                    .to_os_string();
                let b = args.b.join(&name);
                let out = args.out.join(&name);
                (a, b, out)
            })
            .collect()
    } else {
        vec![(args.a.clone(), args.b.clone(), args.out.clone())]
    };
    for (a_path, b_path, out_path) in &pairs {
        let a = io::read_dsi(a_path)?;
        let b = io::read_dsi(b_path)?;
        let fused = fuse_grids(&a, &b, cfg.fusion)?;
        io::write_dsi(&fused, out_path)?;
    }
    let mut meta = RunMetadata::new("fuse", cfg);
    meta.note("pairs", pairs.len());
    write_meta(&meta, &args.out)?;
    println!(
        "fused {} DSI pair(s) into {}",
        pairs.len(),
        args.out.display()
    );
    Ok(())
}

pub fn select(args: SelectArgs) -> Result<()> {
    let cfg = args.cfg.resolve()?;
    let dsi = io::read_dsi(&args.dsi)?;
    let pixels = select_pixels(&dsi, &cfg.agt_config()?, cfg.r_w, cfg.r_h)?;
    ensure_parent(&args.out)?;
    io::write_pixel_list(&pixels, &args.out)?;
    let mut meta = RunMetadata::new("select", cfg);
    meta.note("dsi", args.dsi.display().to_string());
    meta.note("selected", pixels.len());
    write_meta(&meta, &args.out)?;
    println!("selected {} pixels -> {}", pixels.len(), args.out.display());
    Ok(())
}

fn load_training_frames(spec: &str) -> Result<(String, Vec<(DsiGrid, DepthMap)>)> {
    let (dsi_dir, manifest_path) = spec.rsplit_once(':').ok_or_else(|| {
        Error::Config(format!("--frames wants <dsi_dir>:<manifest>, got '{spec}'"))
    })?;
    let dsi_dir = Path::new(dsi_dir);
    let scene = SceneInputs::load(Path::new(manifest_path))?;
    let mut frames = Vec::new();
    for (i, entry) in scene.manifest.gt.iter().enumerate() {
        let dsi_path = frame_file(dsi_dir, i);
        if !dsi_path.exists() {
            return Err(Error::Data(format!(
                "missing {} for GT frame {i} of {}",
                dsi_path.display(),
                scene.manifest.sequence
            )));
        }
        let dsi = io::read_dsi(&dsi_path)?;
        let gt = io::read_pfm(scene.resolve(&entry.path))?;
        frames.push((dsi, gt));
    }
    Ok((scene.manifest.sequence.clone(), frames))
}

fn write_train_log(path: &Path, member: &str, model: &TrainedModel) -> Result<()> {
    use std::io::Write;
    ensure_parent(path)?;
    let mut name = path.file_stem().unwrap_or_default().to_os_string();
    name.push(format!(".{member}.csv"));
    let mut w = std::io::BufWriter::new(std::fs::File::create(path.with_file_name(name))?);
    writeln!(w, "epoch,step,loss")?;
    for (epoch, step, loss) in &model.step_log {
        writeln!(w, "{epoch},{step},{loss}")?;
    }
    Ok(())
}

pub fn train(args: TrainArgs) -> Result<()> {
    let cfg = args.cfg.resolve()?;
    let net_cfg = cfg.network_config()?;
    let mut samples: Vec<Sample> = Vec::new();
    let mut clamped = 0usize;
    for spec in &args.frames {
        let (sequence, frames) = load_training_frames(spec)?;
        let refs: Vec<(&DsiGrid, &DepthMap)> = frames.iter().map(|(g, d)| (g, d)).collect();
        let ds = assemble_dataset(
            &sequence,
            &refs,
            &cfg.agt_config()?,
            cfg.r_w,
            cfg.r_h,
            cfg.head,
            cfg.depth_mode,
        )?;
        clamped += ds.stats.clamped_targets;
        println!(
            "{sequence}: {} samples from {} frames",
            ds.samples.len(),
            frames.len()
        );
        samples.extend(ds.samples);
    }

    let tcfg = cfg.train_config();
    let members: Vec<(TrainedModel, &str)> = if cfg.ensemble {
        let (a, b) = train_ensemble(&samples, &net_cfg, &tcfg)?;
        vec![(a, "m1"), (b, "m2")]
    } else {
        vec![(train_model(&samples, &net_cfg, &tcfg)?, "m1")]
    };
    for (model, name) in &members {
        println!("member {name}: epoch losses {:?}", model.epoch_loss);
        if let Some(log) = &args.log {
            write_train_log(log, name, model)?;
        }
    }
    let model_list: Vec<_> = members
        .iter()
        .map(|(m, _)| (m.params.clone(), m.config))
        .collect();
    ensure_parent(&args.out)?;
    save_models(&model_list, &args.out)?;

    let mut meta = RunMetadata::new("train", cfg);
    meta.note("samples", samples.len());
    meta.note("clamped_targets", clamped);
    meta.note("members", members.len());
    meta.note(
        "final_epoch_loss",
        members
            .iter()
            .map(|(m, _)| *m.epoch_loss.last().unwrap())
            .collect::<Vec<f64>>(),
    );
    write_meta(&meta, &args.out)?;
    println!("wrote model to {}", args.out.display());
    Ok(())
}

pub fn infer(args: InferArgs) -> Result<()> {
    let mut cfg = args.cfg.resolve()?;
    let dsi = io::read_dsi(&args.dsi)?;
    let model = match args.method.as_str() {
        "net" => {
            let path = args
                .model
                .as_ref()
                .ok_or_else(|| Error::Config("--method net requires --model".into()))?;
            let members = load_models(path)?;
            // The model's geometry wins over flag defaults.
            cfg.r_w = members[0].1.r_w;
            cfg.r_h = members[0].1.r_h;
            cfg.head = members[0].1.head;
            Some(EnsembleModel { members })
        }
        "argmax" => None,
        other => return Err(Error::Config(format!("unknown method '{other}'"))),
    };
    let pixels = match &args.pixels {
        Some(path) => io::read_pixel_list(path)?,
        None => select_pixels(&dsi, &cfg.agt_config()?, cfg.r_w, cfg.r_h)?,
    };
    let mut dm = match &model {
        Some(model) => infer_depth_map(model, &dsi, &pixels, cfg.depth_mode)?,
        None => argmax_depth(&dsi, &pixels),
    };
    if args.dilate {
        dm = morph_dilate(&dm);
    }
    ensure_parent(&args.out)?;
    io::write_pfm(&dm, &args.out)?;
    if let Some(render_path) = &args.render {
        ensure_parent(render_path)?;
        io::render_depth(&dm, dsi.z_min(), dsi.z_max(), render_path)?;
    }
    let mut meta = RunMetadata::new("infer", cfg);
    meta.note("dsi", args.dsi.display().to_string());
    meta.note("method", args.method.clone());
    meta.note("dilate", args.dilate);
    meta.note("pixels", pixels.len());
    meta.note("valid", dm.valid_count());
    write_meta(&meta, &args.out)?;
    println!(
        "estimated {} pixels -> {}",
        dm.valid_count(),
        args.out.display()
    );
    Ok(())
}

fn pfm_pairs(est: &Path, gt: &Path) -> Result<Vec<(String, PathBuf, PathBuf)>> {
    if est.is_dir() {
        let mut names: Vec<String> = std::fs::read_dir(est)?
            .filter_map(|e| e.ok())
            .map(|e| e.file_name().to_string_lossy().to_string())
            .filter(|n| n.ends_with(".pfm"))
            .collect();
        names.sort();
        if names.is_empty() {
            return Err(Error::Data(format!("no .pfm files in {}", est.display())));
        }
        names
            .into_iter()
            .map(|n| {
                let gt_path = gt.join(&n);
                if !gt_path.exists() {
                    return Err(Error::Data(format!("no ground truth for {n}")));
                }
                Ok((n.clone(), est.join(&n), gt_path))
            })
            .collect()
    } else {
        Ok(vec![(
            est.file_name()
                .unwrap_or_default()
                .to_string_lossy()
                .to_string(),
            est.to_path_buf(),
            gt.to_path_buf(),
        )])
    }
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let cfg = args.cfg.resolve()?;
    let pairs = pfm_pairs(&args.est, &args.gt)?;
    let maps: Vec<(String, DepthMap, DepthMap)> = pairs
        .into_iter()
        .map(|(name, est_path, gt_path)| {
            Ok((name, io::read_pfm(&est_path)?, io::read_pfm(&gt_path)?))
        })
        .collect::<Result<_>>()?;

    let mut frame_reports: Vec<(String, MetricsReport)> = Vec::new();
    for (name, est, gt) in &maps {
        match compute_metrics(est, gt, cfg.bad_pix_threshold) {
            Ok(report) => frame_reports.push((name.clone(), report)),
            Err(Error::EmptyOverlap) => {
                eprintln!("warning: {name} has no overlap with ground truth, skipped");
            }
            Err(e) => return Err(e),
        }
    }
    if frame_reports.is_empty() {
        return Err(Error::EmptyOverlap);
    }
    let summary = if args.pooled {
        let refs: Vec<(&DepthMap, &DepthMap)> = maps.iter().map(|(_, e, g)| (e, g)).collect();
        compute_metrics_pooled(&refs, cfg.bad_pix_threshold)?
    } else {
        aggregate(
            &frame_reports
                .iter()
                .map(|(_, r)| r.clone())
                .collect::<Vec<_>>(),
        )?
    };

    let mut rows: Vec<(String, &MetricsReport)> = Vec::new();
    if frame_reports.len() > 1 {
        for (name, report) in &frame_reports {
            rows.push((name.clone(), report));
        }
    }
    let label = if args.pooled {
        "all frames (pooled)"
    } else {
        "all frames (weighted)"
    };
    rows.push((label.to_string(), &summary));
    print!("{}", format_table(&rows));

    if let Some(csv) = &args.csv {
        ensure_parent(csv)?;
        write_report_csv(csv, &frame_reports, &summary)?;
    }
    if let Some(out) = &args.out {
        ensure_parent(out)?;
        let json = serde_json::json!({
            "bad_pix_threshold": cfg.bad_pix_threshold,
            "aggregation": if args.pooled { "pooled" } else { "weighted" },
            "frames": frame_reports
                .iter()
                .map(|(n, r)| serde_json::json!({"frame": n, "report": r}))
                .collect::<Vec<_>>(),
            "summary": summary,
        });
        std::fs::write(out, serde_json::to_string_pretty(&json)?)?;
        let mut meta = RunMetadata::new("eval", cfg);
        meta.note("frames", frame_reports.len());
        write_meta(&meta, out)?;
    }
    Ok(())
}

fn write_report_csv(
    path: &Path,
    frames: &[(String, MetricsReport)],
    summary: &MetricsReport,
) -> Result<()> {
    use std::io::Write;
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        w,
        "frame,mean_err,median_err,bad_pix,bad_pix_threshold,silog,aerrr,log_rmse,delta1,delta2,delta3,n_points,n_overlap,median_is_exact"
    )?;
    let mut row = |name: &str, r: &MetricsReport| -> Result<()> {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            name,
            r.mean_err,
            r.median_err,
            r.bad_pix,
            r.bad_pix_threshold,
            r.silog,
            r.aerrr,
            r.log_rmse,
            r.delta1,
            r.delta2,
            r.delta3,
            r.n_points,
            r.n_overlap,
            r.median_is_exact
        )?;
        Ok(())
    };
    for (name, report) in frames {
        row(name, report)?;
    }
    row("summary", summary)?;
    Ok(())
}

pub fn bench(args: BenchArgs) -> Result<()> {
    match args.what {
        BenchCommand::Dsi {
            events,
            poses,
            calib,
            cfg,
        } => {
            let cfg = cfg.resolve()?;
            let events = io::read_events(&events)?;
            if events.is_empty() {
                return Err(Error::Data("no events to benchmark".into()));
            }
            let traj = io::read_trajectory(&poses)?;
            let calib = io::read_calibration(&calib)?;
            let t_mid = 0.5 * (traj.start_time() + traj.end_time());
            let ref_pose = traj.interpolate(t_mid)?;
            let start = Instant::now();
            let grid = build_dsi_grid(
                &events,
                &traj,
                &ref_pose,
                &calib.left,
                cfg.z_min,
                cfg.z_max,
                cfg.d,
                &cfg.voting_config(),
            )?;
            let dt = start.elapsed();
            println!(
                "DSI build: {} events in {:.3} s -> {:.0} events/s ({} votes, {}x{}x{} voxels)",
                events.len(),
                dt.as_secs_f64(),
                events.len() as f64 / dt.as_secs_f64(),
                grid.total(),
                grid.d(),
                grid.width(),
                grid.height()
            );
        }
        BenchCommand::Infer { model, count, cfg } => {
            let run_cfg = cfg.resolve()?;
            let members = match &model {
                Some(path) => load_models(path)?,
                None => {
                    let net = run_cfg.network_config()?;
                    vec![(init_params(&net, run_cfg.seed), net)]
                }
            };
            let net = members[0].1;
            let model = EnsembleModel { members };
            let mut rng = evdepth::rng::seeded_rng(run_cfg.seed, 99);
            let (ww, wh) = (2 * net.r_w + 1, 2 * net.r_h + 1);
            let subs: Vec<SubDsi> = (0..count)
                .map(|_| {
                    let mut values: Vec<f32> = (0..net.d * ww * wh)
                        .map(|_| evdepth::rng::next_unit_f64(&mut rng) as f32)
                        .collect();
                    values[0] = 1.0;
                    SubDsi::from_values(
                        net.d,
                        net.r_w,
                        net.r_h,
                        evdepth::select::PixelCoord {
                            x: net.r_w,
                            y: net.r_h,
                        },
                        values,
                    )
                    .expect("generated sub-DSI has the right shape")
                })
                .collect();
            // Warm up thread pool and caches.
            let _ = predict(
                &model,
                &subs[..subs.len().min(32)],
                run_cfg.z_min,
                run_cfg.z_max,
                run_cfg.depth_mode,
            )?;
            let start = Instant::now();
            let out = predict(
                &model,
                &subs,
                run_cfg.z_min,
                run_cfg.z_max,
                run_cfg.depth_mode,
            )?;
            let dt = start.elapsed();
            println!(
                "inference: {} sub-DSIs in {:.3} s -> {:.0} sub-DSIs/s ({:.4} ms each, {} members, D={}, {}x{})",
                out.len(),
                dt.as_secs_f64(),
                out.len() as f64 / dt.as_secs_f64(),
                1000.0 * dt.as_secs_f64() / out.len() as f64,
                model.members.len(),
                net.d,
                ww,
                wh
            );
        }
    }
    Ok(())
}

pub fn render(args: RenderArgs) -> Result<()> {
    let dm = io::read_pfm(&args.depth)?;
    ensure_parent(&args.out)?;
    io::render_depth(&dm, args.z_min, args.z_max, &args.out)?;
    println!(
        "rendered {} -> {}",
        args.depth.display(),
        args.out.display()
    );
    Ok(())
}
