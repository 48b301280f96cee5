//! Dataset assembly from (DSI, ground truth) frames, the supervised MAE
//! training loop, two-member ensembles, and batched prediction.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dsi::DsiGrid;
use crate::error::{Error, Result};
use crate::net::{
    adamw_step, backward, denormalize, forward, init_params, normalize_depth, AdamState,
    AdamWConfig, DepthMode, Head, ModelParams, NetworkConfig,
};
use crate::rng::seeded_rng;
use crate::select::{
    agt_select, confidence_map, extract_subdsi, AgtConfig, DepthMap, PixelCoord, SubDsi,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub sequence: String,
    pub frame: usize,
    pub pixel: PixelCoord,
}

/// One training instance: a normalized Sub-DSI, its normalized depth
/// target(s), and a validity mask (multi-pixel targets are sparse).
#[derive(Debug, Clone)]
pub struct Sample {
    pub subdsi: SubDsi,
    pub target: Vec<f64>,
    pub mask: Vec<bool>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    /// Shuffle individual samples into two halves.
    SampleWise,
    /// Keep all samples of a frame in the same half.
    FrameWise,
}

impl std::str::FromStr for SplitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sample" | "samplewise" => Ok(Self::SampleWise),
            "frame" | "framewise" => Ok(Self::FrameWise),
            other => Err(Error::Config(format!("unknown split mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    pub weight_decay: f64,
    pub ensemble: bool,
    pub split: SplitMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            lr: 1e-3,
            epochs: 3,
            seed: 0,
            weight_decay: 0.01,
            ensemble: true,
            split: SplitMode::SampleWise,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 1 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.epochs < 1 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct AssembleStats {
    pub samples: usize,
    pub clamped_targets: usize,
    pub skipped_zero_window: usize,
    pub skipped_no_gt: usize,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub stats: AssembleStats,
}

/// Runs selection and extraction on every frame and pairs Sub-DSIs with
/// normalized ground truth. The single head drops pixels without center GT;
/// the multi head keeps pixels with at least one valid cell and masks the
/// rest. Targets outside [z_min, z_max] are clamped and counted.
pub fn assemble_dataset(
    sequence: &str,
    frames: &[(&DsiGrid, &DepthMap)],
    select_cfg: &AgtConfig,
    r_w: usize,
    r_h: usize,
    head: Head,
    depth_mode: DepthMode,
) -> Result<Dataset> {
    let mut samples = Vec::new();
    let mut stats = AssembleStats::default();
    for (frame_idx, (dsi, gt)) in frames.iter().enumerate() {
        if dsi.width() != gt.width() || dsi.height() != gt.height() {
            return Err(Error::ShapeMismatch(format!(
                "frame {frame_idx}: DSI is {}x{}, GT {}x{}",
                dsi.width(),
                dsi.height(),
                gt.width(),
                gt.height()
            )));
        }
        let conf = confidence_map(dsi);
        let selected = agt_select(&conf, select_cfg, r_w, r_h)?;
        let (z_min, z_max) = (dsi.z_min(), dsi.z_max());
        for p in selected {
            if conf.at(p.x, p.y) <= 0.0 {
                stats.skipped_zero_window += 1;
                continue;
            }
            let mut target = Vec::new();
            let mut mask = Vec::new();
            match head {
                Head::Single => {
                    let Some(z) = gt.get(p.x, p.y) else {
                        stats.skipped_no_gt += 1;
                        continue;
                    };
                    if z < z_min || z > z_max {
                        stats.clamped_targets += 1;
                    }
                    target.push(normalize_depth(z, z_min, z_max, depth_mode));
                    mask.push(true);
                }
                Head::Multi3x3 => {
                    let mut any = false;
                    for dy in -1i64..=1 {
                        for dx in -1i64..=1 {
                            let (nx, ny) = (p.x as i64 + dx, p.y as i64 + dy);
                            let z = if nx >= 0
                                && ny >= 0
                                && (nx as usize) < gt.width()
                                && (ny as usize) < gt.height()
                            {
                                gt.get(nx as usize, ny as usize)
                            } else {
                                None
                            };
                            match z {
                                Some(z) => {
                                    if z < z_min || z > z_max {
                                        stats.clamped_targets += 1;
                                    }
                                    target.push(normalize_depth(z, z_min, z_max, depth_mode));
                                    mask.push(true);
                                    any = true;
                                }
                                None => {
                                    target.push(0.0);
                                    mask.push(false);
                                }
                            }
                        }
                    }
                    if !any {
                        stats.skipped_no_gt += 1;
                        continue;
                    }
                }
            }
            let subdsi = extract_subdsi(dsi, p, r_w, r_h)?;
            samples.push(Sample {
                subdsi,
                target,
                mask,
                provenance: Provenance {
                    sequence: sequence.to_string(),
                    frame: frame_idx,
                    pixel: p,
                },
            });
        }
    }
    if samples.is_empty() {
        return Err(Error::Data(format!(
            "no samples produced from {} frames",
            frames.len()
        )));
    }
    stats.samples = samples.len();
    Ok(Dataset { samples, stats })
}

/// Fisher-Yates with an explicit rejection-sampled bound so shuffles are
/// reproducible independently of any external crate's distribution code.
fn shuffle_indices(n: usize, rng: &mut rand_chacha::ChaCha20Rng) -> Vec<usize> {
    use rand_core::RngCore;
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let bound = (i + 1) as u64;
        let zone = u64::MAX - u64::MAX % bound;
        let j = loop {
            let r = rng.next_u64();
            if r < zone {
                break (r % bound) as usize;
            }
        };
        idx.swap(i, j);
    }
    idx
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub params: ModelParams,
    pub config: NetworkConfig,
    /// Mean loss per epoch, weighted by valid target cells.
    pub epoch_loss: Vec<f64>,
    /// (epoch, step, batch loss) for the training log.
    pub step_log: Vec<(usize, usize, f64)>,
}

/// Supervised MAE training. Per batch the loss is the MAE over all valid
/// target cells in the batch; per-sample gradients are computed in parallel
/// and summed in sample order so the result is bit-identical for any worker
/// count and fixed seed.
pub fn train(
    samples: &[Sample],
    net_cfg: &NetworkConfig,
    cfg: &TrainConfig,
) -> Result<TrainedModel> {
    cfg.validate()?;
    net_cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::Data("cannot train on an empty dataset".into()));
    }
    for (i, s) in samples.iter().enumerate() {
        if s.target.len() != net_cfg.head.out_dim() || s.mask.len() != s.target.len() {
            return Err(Error::ShapeMismatch(format!(
                "sample {i} has {} targets for a {}-output head",
                s.target.len(),
                net_cfg.head.out_dim()
            )));
        }
    }

    let mut params = init_params(net_cfg, cfg.seed);
    let mut state = AdamState::new(net_cfg);
    let adam = AdamWConfig {
        lr: cfg.lr,
        weight_decay: cfg.weight_decay,
        ..Default::default()
    };
    let mut shuffle_rng = seeded_rng(cfg.seed, 1);

    let mut epoch_loss = Vec::with_capacity(cfg.epochs);
    let mut step_log = Vec::new();
    let mut global_step = 0usize;
    for epoch in 0..cfg.epochs {
        let order = shuffle_indices(samples.len(), &mut shuffle_rng);
        let mut epoch_abs = 0.0f64;
        let mut epoch_cells = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let per_sample: Vec<(ModelParams, f64, usize)> = batch
                .par_iter()
                .map(|&si| {
                    let s = &samples[si];
                    let (grads, loss) = backward(&s.subdsi, &s.target, &s.mask, &params, net_cfg)?;
                    let cells = s.mask.iter().filter(|&&m| m).count();
                    Ok((grads, loss, cells))
                })
                .collect::<Result<_>>()?;

            let total_cells: usize = per_sample.iter().map(|(_, _, c)| c).sum();
            let mut batch_grads = ModelParams::zeros(net_cfg);
            let mut batch_loss = 0.0f64;
            for (grads, loss, cells) in &per_sample {
                let w = *cells as f64 / total_cells as f64;
                batch_grads.add_scaled(grads, w);
                batch_loss += loss * w;
            }
            if !batch_loss.is_finite() {
                return Err(Error::Diverged {
                    step: global_step,
                    loss: batch_loss,
                });
            }
            adamw_step(&mut params, &batch_grads, &mut state, &adam);
            step_log.push((epoch, global_step, batch_loss));
            epoch_abs += batch_loss * total_cells as f64;
            epoch_cells += total_cells;
            global_step += 1;
        }
        epoch_loss.push(epoch_abs / epoch_cells as f64);
    }
    Ok(TrainedModel {
        params,
        config: *net_cfg,
        epoch_loss,
        step_log,
    })
}

/// Deterministic half split: a seeded shuffle (stream 2) followed by a
/// ceil/floor cut, sample-wise or frame-wise.
pub fn ensemble_split(samples: &[Sample], cfg: &TrainConfig) -> (Vec<usize>, Vec<usize>) {
    let mut rng = seeded_rng(cfg.seed, 2);
    match cfg.split {
        SplitMode::SampleWise => {
            let order = shuffle_indices(samples.len(), &mut rng);
            let cut = samples.len().div_ceil(2);
            (order[..cut].to_vec(), order[cut..].to_vec())
        }
        SplitMode::FrameWise => {
            let mut keys: Vec<(String, usize)> = Vec::new();
            for s in samples {
                let key = (s.provenance.sequence.clone(), s.provenance.frame);
                if !keys.contains(&key) {
                    keys.push(key);
                }
            }
            let order = shuffle_indices(keys.len(), &mut rng);
            let cut = keys.len().div_ceil(2);
            let first: std::collections::HashSet<_> =
                order[..cut].iter().map(|&i| keys[i].clone()).collect();
            let mut a = Vec::new();
            let mut b = Vec::new();
            for (i, s) in samples.iter().enumerate() {
                let key = (s.provenance.sequence.clone(), s.provenance.frame);
                if first.contains(&key) {
                    a.push(i);
                } else {
                    b.push(i);
                }
            }
            (a, b)
        }
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleModel {
    pub members: Vec<(ModelParams, NetworkConfig)>,
}

impl EnsembleModel {
    pub fn single(params: ModelParams, config: NetworkConfig) -> Self {
        Self {
            members: vec![(params, config)],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.members.is_empty() {
            return Err(Error::Config("ensemble has no members".into()));
        }
        let cfg = self.members[0].1;
        for (params, c) in &self.members {
            if *c != cfg {
                return Err(Error::Config(
                    "ensemble members have different configs".into(),
                ));
            }
            params.matches_config(c)?;
        }
        Ok(())
    }
}

/// Trains two identically configured, independently initialized members on
/// disjoint halves (seeds seed+1 and seed+2), concurrently.
pub fn train_ensemble(
    samples: &[Sample],
    net_cfg: &NetworkConfig,
    cfg: &TrainConfig,
) -> Result<(TrainedModel, TrainedModel)> {
    if samples.len() < 2 {
        return Err(Error::Data(
            "ensemble training needs at least 2 samples".into(),
        ));
    }
    let (ia, ib) = ensemble_split(samples, cfg);
    let half_a: Vec<Sample> = ia.iter().map(|&i| samples[i].clone()).collect();
    let half_b: Vec<Sample> = ib.iter().map(|&i| samples[i].clone()).collect();
    let cfg_a = TrainConfig {
        seed: cfg.seed + 1,
        ..*cfg
    };
    let cfg_b = TrainConfig {
        seed: cfg.seed + 2,
        ..*cfg
    };
    let (ra, rb) = rayon::join(
        || train(&half_a, net_cfg, &cfg_a),
        || train(&half_b, net_cfg, &cfg_b),
    );
    Ok((ra?, rb?))
}

/// Batched prediction: per-member forward, clamp to [0,1], average across
/// members, then map to meters. Returns `out_dim` depths per input.
pub fn predict(
    model: &EnsembleModel,
    batch: &[SubDsi],
    z_min: f64,
    z_max: f64,
    depth_mode: DepthMode,
) -> Result<Vec<Vec<f64>>> {
    model.validate()?;
    let cfg = model.members[0].1;
    batch
        .par_iter()
        .map(|sub| {
            let mut mean = vec![0.0f64; cfg.head.out_dim()];
            for (params, member_cfg) in &model.members {
                let acts = forward(sub, params, member_cfg)?;
                for (m, u) in mean.iter_mut().zip(&acts.output) {
                    *m += u.clamp(0.0, 1.0);
                }
            }
            let n = model.members.len() as f64;
            Ok(mean
                .into_iter()
                .map(|u| denormalize(u / n, z_min, z_max, depth_mode))
                .collect())
        })
        .collect()
}
