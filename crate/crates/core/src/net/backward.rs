//! Reverse-mode gradients of the masked MAE loss through the dense head, the
//! unrolled GRU, and the 3D convolution.

use crate::error::{Error, Result};
use crate::select::SubDsi;

use super::forward::forward;
use super::{ModelParams, NetworkConfig, CONV_KERNEL, CONV_PAD_DEPTH, CONV_STRIDE_DEPTH};

/// Masked mean absolute error and the raw outputs, sharing the training
/// forward path (no clamping).
pub fn loss_and_output(
    sub: &SubDsi,
    target: &[f64],
    mask: &[bool],
    params: &ModelParams,
    cfg: &NetworkConfig,
) -> Result<(f64, Vec<f64>)> {
    let acts = forward(sub, params, cfg)?;
    let loss = masked_mae(&acts.output, target, mask)?;
    Ok((loss, acts.output))
}

fn masked_mae(output: &[f64], target: &[f64], mask: &[bool]) -> Result<f64> {
    if output.len() != target.len() || output.len() != mask.len() {
        return Err(Error::ShapeMismatch(format!(
            "output/target/mask lengths differ: {} / {} / {}",
            output.len(),
            target.len(),
            mask.len()
        )));
    }
    let n_valid = mask.iter().filter(|&&m| m).count();
    if n_valid == 0 {
        return Err(Error::Data("no valid target cells".into()));
    }
    let sum: f64 = output
        .iter()
        .zip(target)
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|((u, t), _)| (u - t).abs())
        .sum();
    Ok(sum / n_valid as f64)
}

/// Gradients of L = Σ_valid |u - target| / #valid with respect to every
/// parameter tensor. The subgradient of |x| at x = 0 is taken as 0.
pub fn backward(
    sub: &SubDsi,
    target: &[f64],
    mask: &[bool],
    params: &ModelParams,
    cfg: &NetworkConfig,
) -> Result<(ModelParams, f64)> {
    let acts = forward(sub, params, cfg)?;
    let loss = masked_mae(&acts.output, target, mask)?;
    let n_valid = mask.iter().filter(|&&m| m).count() as f64;

    let hidden = cfg.hidden;
    let out_dim = cfg.head.out_dim();
    let mut grads = ModelParams::zeros(cfg);

    // dL/du with the 0-at-0 subgradient convention.
    let mut du = vec![0.0f64; out_dim];
    for o in 0..out_dim {
        if mask[o] {
            let e = acts.output[o] - target[o];
            du[o] = if e > 0.0 {
                1.0 / n_valid
            } else if e < 0.0 {
                -1.0 / n_valid
            } else {
                0.0
            };
        }
    }

    // Output dense layer.
    let h_final = acts.final_hidden().to_vec();
    {
        let gw = grads.out_w.data_mut();
        for o in 0..out_dim {
            for j in 0..hidden {
                gw[o * hidden + j] += du[o] * acts.dense1_out[j];
            }
        }
        grads.out_b.data_mut().copy_from_slice(&du);
    }
    let mut dy1 = vec![0.0f64; hidden];
    for j in 0..hidden {
        let mut acc = 0.0;
        for o in 0..out_dim {
            acc += params.out_w.data()[o * hidden + j] * du[o];
        }
        dy1[j] = acc;
    }

    // First dense layer through its ReLU.
    let mut dpre1 = dy1;
    for (g, &pre) in dpre1.iter_mut().zip(&acts.dense1_pre) {
        if pre <= 0.0 {
            *g = 0.0;
        }
    }
    {
        let gw = grads.dense1_w.data_mut();
        for i in 0..hidden {
            for j in 0..hidden {
                gw[i * hidden + j] += dpre1[i] * h_final[j];
            }
        }
        grads.dense1_b.data_mut().copy_from_slice(&dpre1);
    }
    let mut dh = vec![0.0f64; hidden];
    for j in 0..hidden {
        let mut acc = 0.0;
        for i in 0..hidden {
            acc += params.dense1_w.data()[i * hidden + j] * dpre1[i];
        }
        dh[j] = acc;
    }

    // Backpropagation through time. dh holds dL/dh_t entering step t.
    let steps = acts.gru.xs.len();
    let wi = params.gru_wi.data();
    let wh = params.gru_wh.data();
    let mut dxs: Vec<Vec<f64>> = vec![vec![0.0; hidden]; steps];
    for t in (0..steps).rev() {
        let x = &acts.gru.xs[t];
        let h_prev = &acts.gru.h[t];
        let z = &acts.gru.z[t];
        let r = &acts.gru.r[t];
        let k = &acts.gru.k[t];
        let hcand = &acts.gru.hcand[t];

        let mut da_z = vec![0.0f64; hidden];
        let mut da_r = vec![0.0f64; hidden];
        let mut da_h = vec![0.0f64; hidden];
        let mut dk = vec![0.0f64; hidden];
        for j in 0..hidden {
            let dz = dh[j] * (h_prev[j] - hcand[j]);
            let dhc = dh[j] * (1.0 - z[j]);
            da_h[j] = dhc * (1.0 - hcand[j] * hcand[j]);
            let dr = da_h[j] * k[j];
            dk[j] = da_h[j] * r[j];
            da_z[j] = dz * z[j] * (1.0 - z[j]);
            da_r[j] = dr * r[j] * (1.0 - r[j]);
        }

        {
            let gwi = grads.gru_wi.data_mut();
            let gbi = grads.gru_bi.data_mut();
            let gwh = grads.gru_wh.data_mut();
            let gbh = grads.gru_bh.data_mut();
            for j in 0..hidden {
                for (gate, da) in [(0, da_z[j]), (1, da_r[j]), (2, da_h[j])] {
                    let row = (gate * hidden + j) * hidden;
                    for i in 0..hidden {
                        gwi[row + i] += da * x[i];
                    }
                    gbi[gate * hidden + j] += da;
                }
                for (gate, da) in [(0, da_z[j]), (1, da_r[j]), (2, dk[j])] {
                    let row = (gate * hidden + j) * hidden;
                    for i in 0..hidden {
                        gwh[row + i] += da * h_prev[i];
                    }
                    gbh[gate * hidden + j] += da;
                }
            }
        }

        // dx_t = W_zᵀ da_z + W_rᵀ da_r + W_hᵀ da_h
        let dx = &mut dxs[t];
        for j in 0..hidden {
            let mut acc = 0.0;
            for i in 0..hidden {
                acc += wi[i * hidden + j] * da_z[i];
                acc += wi[(hidden + i) * hidden + j] * da_r[i];
                acc += wi[(2 * hidden + i) * hidden + j] * da_h[i];
            }
            dx[j] = acc;
        }

        // dh_{t-1} = dh ⊙ z + U_zᵀ da_z + U_rᵀ da_r + U_hᵀ dk
        let mut dh_prev = vec![0.0f64; hidden];
        for j in 0..hidden {
            let mut acc = dh[j] * z[j];
            for i in 0..hidden {
                acc += wh[i * hidden + j] * da_z[i];
                acc += wh[(hidden + i) * hidden + j] * da_r[i];
                acc += wh[(2 * hidden + i) * hidden + j] * dk[i];
            }
            dh_prev[j] = acc;
        }
        dh = dh_prev;
    }

    // Convolution: route dx back through the flatten and the ReLU, then
    // accumulate kernel and bias gradients.
    let d = sub.d();
    let channels = cfg.conv_channels;
    let (out_h, out_w) = (sub.window_height() - 2, sub.window_width() - 2);
    let gw = grads.conv_w.data_mut();
    let gb = grads.conv_b.data_mut();
    for t in 0..steps {
        let z_base = (t * CONV_STRIDE_DEPTH) as i64 - CONV_PAD_DEPTH as i64;
        for co in 0..channels {
            for oy in 0..out_h {
                for ox in 0..out_w {
                    let flat = ((t * channels + co) * out_h + oy) * out_w + ox;
                    let pre = acts.conv_pre.data()[flat];
                    if pre <= 0.0 {
                        continue;
                    }
                    let g = dxs[t][(co * out_h + oy) * out_w + ox];
                    if g == 0.0 {
                        continue;
                    }
                    gb[co] += g;
                    for kd in 0..CONV_KERNEL[0] {
                        let zz = z_base + kd as i64;
                        if zz < 0 || zz >= d as i64 {
                            continue;
                        }
                        for ky in 0..CONV_KERNEL[1] {
                            for kx in 0..CONV_KERNEL[2] {
                                gw[co * 27 + (kd * 3 + ky) * 3 + kx] +=
                                    g * sub.at(zz as usize, oy + ky, ox + kx) as f64;
                            }
                        }
                    }
                }
            }
        }
    }

    Ok((grads, loss))
}
