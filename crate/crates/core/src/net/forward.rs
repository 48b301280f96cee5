//! Forward pass: 3D convolution + ReLU, GRU over depth layers, dense head.

use crate::error::{Error, Result};
use crate::select::SubDsi;

use super::{ModelParams, NetworkConfig, Tensor, CONV_KERNEL, CONV_PAD_DEPTH, CONV_STRIDE_DEPTH};

/// Per-step GRU internals kept for backpropagation through time.
#[derive(Debug, Clone)]
pub struct GruCache {
    /// Flattened conv outputs fed to the GRU, one per step.
    pub xs: Vec<Vec<f64>>,
    /// Update gates z_t.
    pub z: Vec<Vec<f64>>,
    /// Reset gates r_t.
    pub r: Vec<Vec<f64>>,
    /// Recurrent candidate terms k_t = U_h h_{t-1} + c_h before the reset product.
    pub k: Vec<Vec<f64>>,
    /// Candidates h̃_t.
    pub hcand: Vec<Vec<f64>>,
    /// Hidden states; h[0] is the zero initial state, h[t] the state after step t.
    pub h: Vec<Vec<f64>>,
}

/// Everything produced by one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardActivations {
    /// Pre-ReLU convolution output, shape (steps, channels, out_h, out_w).
    pub conv_pre: Tensor,
    /// Post-ReLU convolution output, same shape.
    pub conv_out: Tensor,
    pub gru: GruCache,
    /// Pre-ReLU first dense layer.
    pub dense1_pre: Vec<f64>,
    /// Post-ReLU first dense layer.
    pub dense1_out: Vec<f64>,
    /// Raw head output (not clamped).
    pub output: Vec<f64>,
}

impl ForwardActivations {
    pub fn final_hidden(&self) -> &[f64] {
        self.gru.h.last().expect("at least one step")
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn check_input(sub: &SubDsi, cfg: &NetworkConfig) -> Result<()> {
    if sub.d() < 2 || sub.d() % 2 != 0 {
        return Err(Error::ShapeMismatch(format!(
            "sub-DSI depth must be even and >= 2, got {}",
            sub.d()
        )));
    }
    if sub.r_w() != cfg.r_w || sub.r_h() != cfg.r_h {
        return Err(Error::ShapeMismatch(format!(
            "sub-DSI radii ({}, {}) do not match model radii ({}, {})",
            sub.r_w(),
            sub.r_h(),
            cfg.r_w,
            cfg.r_h
        )));
    }
    Ok(())
}

/// Cross-correlation with depth padding 1 / stride 2, no spatial padding,
/// bias, then ReLU. Returns (pre-activation, post-activation) tensors of
/// shape (d/2, channels, 2r_h-1, 2r_w-1).
pub(crate) fn conv3d(sub: &SubDsi, params: &ModelParams, cfg: &NetworkConfig) -> (Tensor, Tensor) {
    let d = sub.d();
    let steps = NetworkConfig::seq_len(d);
    let (in_h, in_w) = (sub.window_height(), sub.window_width());
    let (out_h, out_w) = (in_h - 2, in_w - 2);
    let channels = cfg.conv_channels;
    let w = params.conv_w.data();
    let b = params.conv_b.data();

    let mut pre = Tensor::zeros(&[steps, channels, out_h, out_w]);
    {
        let data = pre.data_mut();
        for t in 0..steps {
            let z_base = (t * CONV_STRIDE_DEPTH) as i64 - CONV_PAD_DEPTH as i64;
            for co in 0..channels {
                let w_base = co * 27;
                for oy in 0..out_h {
                    for ox in 0..out_w {
                        let mut acc = b[co];
                        for kd in 0..CONV_KERNEL[0] {
                            let z = z_base + kd as i64;
                            if z < 0 || z >= d as i64 {
                                continue;
                            }
                            for ky in 0..CONV_KERNEL[1] {
                                for kx in 0..CONV_KERNEL[2] {
                                    let x_val = sub.at(z as usize, oy + ky, ox + kx) as f64;
                                    acc += w[w_base + (kd * 3 + ky) * 3 + kx] * x_val;
                                }
                            }
                        }
                        data[((t * channels + co) * out_h + oy) * out_w + ox] = acc;
                    }
                }
            }
        }
    }
    let mut post = pre.clone();
    for v in post.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    (pre, post)
}

/// Public convolution op: returns the post-ReLU tensor.
pub fn conv3d_relu(sub: &SubDsi, params: &ModelParams, cfg: &NetworkConfig) -> Result<Tensor> {
    check_input(sub, cfg)?;
    params.matches_config(&NetworkConfig { d: sub.d(), ..*cfg })?;
    Ok(conv3d(sub, params, cfg).1)
}

/// Flattens one conv step (channels, out_h, out_w) into the GRU feature
/// vector, channels outermost.
pub(crate) fn flatten_step(conv_out: &Tensor, t: usize) -> Vec<f64> {
    let sh = conv_out.shape();
    let step_len = sh[1] * sh[2] * sh[3];
    conv_out.data()[t * step_len..(t + 1) * step_len].to_vec()
}

/// y = W x + b for a row-major (rows, cols) matrix.
pub(crate) fn matvec(
    w: &[f64],
    rows: usize,
    cols: usize,
    x: &[f64],
    b: Option<&[f64]>,
) -> Vec<f64> {
    let mut y = vec![0.0; rows];
    for (i, yi) in y.iter_mut().enumerate() {
        let row = &w[i * cols..(i + 1) * cols];
        let mut acc = match b {
            Some(bias) => bias[i],
            None => 0.0,
        };
        for (wj, xj) in row.iter().zip(x) {
            acc += wj * xj;
        }
        *yi = acc;
    }
    y
}

/// GRU update, gates stacked (z, r, h):
///   z_t = σ(W_z x + b_z + U_z h + c_z)
///   r_t = σ(W_r x + b_r + U_r h + c_r)
///   h̃_t = tanh(W_h x + b_h + r_t ⊙ (U_h h + c_h))
///   h_t = z_t ⊙ h_{t-1} + (1 - z_t) ⊙ h̃_t
pub(crate) fn gru_forward_cached(
    xs: Vec<Vec<f64>>,
    wi: &[f64],
    wh: &[f64],
    bi: &[f64],
    bh: &[f64],
    hidden: usize,
) -> GruCache {
    let steps = xs.len();
    let mut cache = GruCache {
        xs,
        z: Vec::with_capacity(steps),
        r: Vec::with_capacity(steps),
        k: Vec::with_capacity(steps),
        hcand: Vec::with_capacity(steps),
        h: Vec::with_capacity(steps + 1),
    };
    cache.h.push(vec![0.0; hidden]);
    for t in 0..steps {
        let x = &cache.xs[t];
        let h_prev = &cache.h[t];
        let gates_in = matvec(wi, 3 * hidden, hidden, x, Some(bi));
        let gates_rec = matvec(wh, 3 * hidden, hidden, h_prev, Some(bh));
        let mut z = vec![0.0; hidden];
        let mut r = vec![0.0; hidden];
        let mut k = vec![0.0; hidden];
        let mut hcand = vec![0.0; hidden];
        let mut h = vec![0.0; hidden];
        for j in 0..hidden {
            z[j] = sigmoid(gates_in[j] + gates_rec[j]);
            r[j] = sigmoid(gates_in[hidden + j] + gates_rec[hidden + j]);
            k[j] = gates_rec[2 * hidden + j];
            hcand[j] = (gates_in[2 * hidden + j] + r[j] * k[j]).tanh();
            h[j] = z[j] * h_prev[j] + (1.0 - z[j]) * hcand[j];
        }
        cache.z.push(z);
        cache.r.push(r);
        cache.k.push(k);
        cache.hcand.push(hcand);
        cache.h.push(h);
    }
    cache
}

/// Runs the GRU over a feature sequence and returns the final hidden state.
/// The sequence length is free; the feature length must equal the hidden
/// width.
pub fn gru_forward(sequence: &[Vec<f64>], params: &ModelParams) -> Result<Vec<f64>> {
    let hidden = params.hidden();
    if sequence.is_empty() {
        return Err(Error::ShapeMismatch("GRU needs at least one step".into()));
    }
    for (t, x) in sequence.iter().enumerate() {
        if x.len() != hidden {
            return Err(Error::ShapeMismatch(format!(
                "GRU step {t} has {} features, expected {hidden}",
                x.len()
            )));
        }
    }
    let cache = gru_forward_cached(
        sequence.to_vec(),
        params.gru_wi.data(),
        params.gru_wh.data(),
        params.gru_bi.data(),
        params.gru_bh.data(),
        hidden,
    );
    Ok(cache.h.last().unwrap().clone())
}

/// Dense(hidden -> hidden) + ReLU, then Dense(hidden -> out). The output is
/// raw; clamping to [0,1] happens only at inference.
pub fn head_forward(h: &[f64], params: &ModelParams) -> Result<Vec<f64>> {
    let hidden = params.hidden();
    if h.len() != hidden {
        return Err(Error::ShapeMismatch(format!(
            "head input has {} features, expected {hidden}",
            h.len()
        )));
    }
    let (_, d1, out) = head_forward_cached(h, params);
    let _ = d1;
    Ok(out)
}

pub(crate) fn head_forward_cached(
    h: &[f64],
    params: &ModelParams,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let hidden = params.hidden();
    let out_dim = params.out_dim();
    let pre1 = matvec(
        params.dense1_w.data(),
        hidden,
        hidden,
        h,
        Some(params.dense1_b.data()),
    );
    let mut d1 = pre1.clone();
    for v in &mut d1 {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let out = matvec(
        params.out_w.data(),
        out_dim,
        hidden,
        &d1,
        Some(params.out_b.data()),
    );
    (pre1, d1, out)
}

/// Full forward pass. The Sub-DSI may carry any even number of depth planes;
/// radii and channel counts must match the configuration.
pub fn forward(
    sub: &SubDsi,
    params: &ModelParams,
    cfg: &NetworkConfig,
) -> Result<ForwardActivations> {
    check_input(sub, cfg)?;
    params.matches_config(&NetworkConfig { d: cfg.d, ..*cfg })?;
    let (conv_pre, conv_out) = conv3d(sub, params, cfg);
    let steps = conv_out.shape()[0];
    let xs: Vec<Vec<f64>> = (0..steps).map(|t| flatten_step(&conv_out, t)).collect();
    let gru = gru_forward_cached(
        xs,
        params.gru_wi.data(),
        params.gru_wh.data(),
        params.gru_bi.data(),
        params.gru_bh.data(),
        cfg.hidden,
    );
    let h_final = gru.h.last().unwrap().clone();
    let (dense1_pre, dense1_out, output) = head_forward_cached(&h_final, params);
    Ok(ForwardActivations {
        conv_pre,
        conv_out,
        gru,
        dense1_pre,
        dense1_out,
        output,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{init_params, Head};
    use crate::select::{PixelCoord, SubDsi};
    use rand_core::{RngCore, SeedableRng};

    fn sub_from_fn(
        d: usize,
        r_w: usize,
        r_h: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> SubDsi {
        let (ww, wh) = (2 * r_w + 1, 2 * r_h + 1);
        let mut values = Vec::with_capacity(d * ww * wh);
        for p in 0..d {
            for wy in 0..wh {
                for wx in 0..ww {
                    values.push(f(p, wy, wx));
                }
            }
        }
        SubDsi::from_values(d, r_w, r_h, PixelCoord { x: r_w, y: r_h }, values).unwrap()
    }

    fn random_sub(seed: u64, d: usize, r_w: usize, r_h: usize) -> SubDsi {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        let mut rng = rand_chacha::ChaCha20Rng::from_seed(key);
        sub_from_fn(d, r_w, r_h, |_, _, _| {
            (rng.next_u64() % 1000) as f32 / 999.0
        })
    }

    #[test]
    fn conv_shapes_match_benchmark_architecture() {
        let cfg = NetworkConfig::benchmark_default(Head::Single);
        let params = init_params(&cfg, 1);
        let sub = random_sub(1, 100, 3, 3);
        let out = conv3d_relu(&sub, &params, &cfg).unwrap();
        assert_eq!(out.shape(), &[50, 4, 5, 5]);
    }

    #[test]
    fn conv_zero_input_zero_bias_gives_zero() {
        let cfg = NetworkConfig::new(8, 2, 2, 4, Head::Single).unwrap();
        let mut params = init_params(&cfg, 3);
        for v in params.conv_b.data_mut() {
            *v = 0.0;
        }
        let sub = sub_from_fn(8, 2, 2, |_, _, _| 0.0);
        let out = conv3d_relu(&sub, &params, &cfg).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv_impulse_with_one_hot_kernel_shifts() {
        let cfg = NetworkConfig::new(8, 2, 2, 1, Head::Single).unwrap();
        let mut params = ModelParams::zeros(&cfg);
        // Kernel selects (kd, ky, kx) = (1, 1, 1): output equals the input
        // sampled at the stride-2 depth grid, spatially shifted by one.
        let idx = (3 + 1) * 3 + 1; // (kd, ky, kx) = (1, 1, 1)
        params.conv_w.data_mut()[idx] = 1.0;
        let sub = sub_from_fn(
            8,
            2,
            2,
            |p, wy, wx| {
                if (p, wy, wx) == (4, 3, 2) {
                    7.0
                } else {
                    0.0
                }
            },
        );
        let out = conv3d_relu(&sub, &params, &cfg).unwrap();
        // With pad 1, stride 2: input depth 4 appears at step t where
        // 2t - 1 + 1 = 4, so t = 2; spatial (oy, ox) = (wy - 1, wx - 1).
        let sh = out.shape().to_vec();
        assert_eq!(sh, vec![4, 1, 3, 3]);
        let mut expected = Tensor::zeros(&sh);
        expected.data_mut()[(2 * 3 + 2) * 3 + 1] = 7.0; // (t, oy, ox) = (2, 2, 1), c = 0
        // Loop oracle over all positions.
        for (got, want) in out.data().iter().zip(expected.data()) {
            assert_eq!(got, want);
        }
    }

    #[test]
    fn conv_matches_naive_loop_oracle() {
        let cfg = NetworkConfig::new(10, 2, 3, 4, Head::Single).unwrap();
        let params = init_params(&cfg, 17);
        let sub = random_sub(17, 10, 2, 3);
        let out = conv3d_relu(&sub, &params, &cfg).unwrap();

        let (steps, ch, oh, ow) = (5usize, 4usize, 5usize, 3usize);
        assert_eq!(out.shape(), &[steps, ch, oh, ow]);
        let w = params.conv_w.data();
        let b = params.conv_b.data();
        for t in 0..steps {
            for co in 0..ch {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = b[co];
                        for kd in 0..3i64 {
                            let z = 2 * t as i64 - 1 + kd;
                            if !(0..10).contains(&z) {
                                continue;
                            }
                            for ky in 0..3 {
                                for kx in 0..3 {
                                    acc += w[((co * 3 + kd as usize) * 3 + ky) * 3 + kx]
                                        * sub.at(z as usize, oy + ky, ox + kx) as f64;
                                }
                            }
                        }
                        let want = acc.max(0.0);
                        let got = out.data()[((t * ch + co) * oh + oy) * ow + ox];
                        assert!((got - want).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn gru_zero_params_give_zero_state() {
        let cfg = NetworkConfig::new(8, 2, 2, 4, Head::Single).unwrap();
        let params = ModelParams::zeros(&cfg);
        let seq = vec![vec![0.3; 36]; 4];
        let h = gru_forward(&seq, &params).unwrap();
        assert!(h.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gru_hand_evaluated_scalar_step() {
        // hidden = 1, weights such that z = σ(0) = 0.5 and h̃ = tanh(1).
        let cache = gru_forward_cached(
            vec![vec![1.0]],
            &[0.0, 0.0, 1.0], // W_z, W_r, W_h
            &[0.0, 0.0, 0.0],
            &[0.0, 0.0, 0.0],
            &[0.0, 0.0, 0.0],
            1,
        );
        let h1 = cache.h[1][0];
        assert!((h1 - 0.5 * 1f64.tanh()).abs() < 1e-12);
        assert!((h1 - 0.380797).abs() < 1e-5);
    }

    #[test]
    fn gru_accepts_variable_sequence_length() {
        let cfg = NetworkConfig::benchmark_default(Head::Single);
        let params = init_params(&cfg, 5);
        let sub50 = random_sub(5, 50, 3, 3);
        let acts = forward(&sub50, &params, &cfg).unwrap();
        assert_eq!(acts.conv_out.shape()[0], 25);
        assert_eq!(acts.gru.h.len(), 26);
        assert_eq!(acts.output.len(), 1);
    }

    #[test]
    fn gru_rejects_wrong_feature_length() {
        let cfg = NetworkConfig::benchmark_default(Head::Single);
        let params = init_params(&cfg, 5);
        assert!(gru_forward(&[vec![0.0; 99]], &params).is_err());
    }

    #[test]
    fn head_zero_weights_give_zero() {
        let cfg = NetworkConfig::new(8, 2, 2, 4, Head::Single).unwrap();
        let params = ModelParams::zeros(&cfg);
        let out = head_forward(&vec![0.7; 36], &params).unwrap();
        assert_eq!(out, vec![0.0]);
    }

    #[test]
    fn head_identity_dense1_zero_out_gives_zero() {
        let cfg = NetworkConfig::new(8, 2, 2, 4, Head::Single).unwrap();
        let mut params = ModelParams::zeros(&cfg);
        for i in 0..36 {
            params.dense1_w.data_mut()[i * 36 + i] = 1.0;
        }
        let out = head_forward(&vec![0.4; 36], &params).unwrap();
        assert_eq!(out, vec![0.0]);
    }

    #[test]
    fn head_matches_two_matmul_oracle() {
        let cfg = NetworkConfig::new(8, 2, 2, 4, Head::Multi3x3).unwrap();
        let params = init_params(&cfg, 23);
        let h: Vec<f64> = (0..36).map(|i| (i as f64 * 0.37).sin()).collect();
        let got = head_forward(&h, &params).unwrap();

        let mut y1 = vec![0.0f64; 36];
        for i in 0..36 {
            let mut acc = params.dense1_b.data()[i];
            for j in 0..36 {
                acc += params.dense1_w.data()[i * 36 + j] * h[j];
            }
            y1[i] = acc.max(0.0);
        }
        for o in 0..9 {
            let mut acc = params.out_b.data()[o];
            for j in 0..36 {
                acc += params.out_w.data()[o * 36 + j] * y1[j];
            }
            assert!((got[o] - acc).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let cfg = NetworkConfig::new(20, 2, 2, 4, Head::Single).unwrap();
        let params = init_params(&cfg, 7);
        let sub = random_sub(9, 20, 2, 2);
        let a = forward(&sub, &params, &cfg).unwrap();
        let b = forward(&sub, &params, &cfg).unwrap();
        assert_eq!(a.output, b.output);
        assert_eq!(a.conv_out.data(), b.conv_out.data());
    }

    #[test]
    fn forward_zero_input_zero_params_gives_zero() {
        let cfg = NetworkConfig::new(8, 2, 2, 4, Head::Single).unwrap();
        let params = ModelParams::zeros(&cfg);
        let sub = sub_from_fn(8, 2, 2, |_, _, _| 0.0);
        let acts = forward(&sub, &params, &cfg).unwrap();
        assert_eq!(acts.output, vec![0.0]);
    }

    #[test]
    fn forward_sensitive_to_depth_order() {
        let cfg = NetworkConfig::new(16, 2, 2, 4, Head::Single).unwrap();
        let params = init_params(&cfg, 31);
        let sub = random_sub(31, 16, 2, 2);
        let mut rev_values = vec![0.0f32; sub.values().len()];
        let slab = sub.window_width() * sub.window_height();
        for p in 0..16 {
            rev_values[p * slab..(p + 1) * slab]
                .copy_from_slice(&sub.values()[(15 - p) * slab..(16 - p) * slab]);
        }
        let rev = SubDsi::from_values(16, 2, 2, sub.center(), rev_values).unwrap();
        let a = forward(&sub, &params, &cfg).unwrap();
        let b = forward(&rev, &params, &cfg).unwrap();
        assert_ne!(a.output, b.output);
    }

    #[test]
    fn forward_rejects_mismatched_radii() {
        let cfg = NetworkConfig::new(8, 2, 2, 4, Head::Single).unwrap();
        let params = init_params(&cfg, 2);
        let sub = random_sub(2, 8, 3, 3);
        assert!(forward(&sub, &params, &cfg).is_err());
    }
}
