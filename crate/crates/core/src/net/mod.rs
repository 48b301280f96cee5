//! The depth-regression head: a 3D convolution over the Sub-DSI, a GRU that
//! consumes the convolved depth layers in order, and two dense layers.
//!
//! Forward and backward passes are written out by hand against a fixed graph;
//! training runs in 64-bit so gradients can be validated against central
//! finite differences. Model files store 32-bit tensors.

mod backward;
mod forward;
mod init;
mod optim;
mod serial;

pub use backward::{backward, loss_and_output};
pub use forward::{conv3d_relu, forward, gru_forward, head_forward, ForwardActivations, GruCache};
pub use init::init_params;
pub use optim::{adamw_step, AdamState, AdamWConfig};
pub use serial::{load_model, load_models, save_model, save_models, MODEL_FORMAT_VERSION};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major f64 tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if data.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "tensor shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Which output head the network carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    /// One normalized depth for the selected pixel.
    Single,
    /// A 3x3 grid of normalized depths for the pixel and its 8 neighbors,
    /// row-major with the center at index 4.
    Multi3x3,
}

impl Head {
    pub fn out_dim(&self) -> usize {
        match self {
            Head::Single => 1,
            Head::Multi3x3 => 9,
        }
    }
}

impl std::str::FromStr for Head {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(Head::Single),
            "multi3x3" | "multi" => Ok(Head::Multi3x3),
            other => Err(Error::Config(format!("unknown head '{other}'"))),
        }
    }
}

/// Architecture hyperparameters. The convolution is fixed to kernel (3,3,3),
/// depth padding 1, depth stride 2, and no spatial padding, which halves the
/// depth layers and trims one pixel off each spatial border.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkConfig {
    /// Depth planes the model was configured for. The GRU is length-agnostic,
    /// so inference accepts any even depth.
    pub d: usize,
    pub r_w: usize,
    pub r_h: usize,
    pub conv_channels: usize,
    /// GRU width; must equal conv_channels * (2 r_w - 1) * (2 r_h - 1) so the
    /// flattened convolved frame feeds the GRU directly.
    pub hidden: usize,
    pub head: Head,
}

pub const CONV_KERNEL: [usize; 3] = [3, 3, 3];
pub const CONV_PAD_DEPTH: usize = 1;
pub const CONV_STRIDE_DEPTH: usize = 2;

impl NetworkConfig {
    pub fn new(d: usize, r_w: usize, r_h: usize, conv_channels: usize, head: Head) -> Result<Self> {
        let hidden = conv_channels * (2 * r_w - 1) * (2 * r_h - 1);
        let cfg = Self {
            d,
            r_w,
            r_h,
            conv_channels,
            hidden,
            head,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// The benchmark default: D=100 planes, 7x7 Sub-DSI, 4 channels,
    /// hidden width 100.
    pub fn benchmark_default(head: Head) -> Self {
        Self::new(100, 3, 3, 4, head).expect("default config is valid")
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 2 || self.d % 2 != 0 {
            return Err(Error::Config(format!(
                "depth planes must be even and >= 2, got {}",
                self.d
            )));
        }
        if self.r_w < 1 || self.r_h < 1 {
            return Err(Error::Config("sub-DSI radii must be >= 1".into()));
        }
        if self.conv_channels < 1 {
            return Err(Error::Config("need at least one conv channel".into()));
        }
        let expect = self.conv_channels * (2 * self.r_w - 1) * (2 * self.r_h - 1);
        if self.hidden != expect {
            return Err(Error::Config(format!(
                "hidden width {} must equal channels * (2r_w-1) * (2r_h-1) = {expect}",
                self.hidden
            )));
        }
        Ok(())
    }

    /// GRU steps for an input with `d` depth planes.
    pub fn seq_len(d: usize) -> usize {
        (d + 2 * CONV_PAD_DEPTH - CONV_KERNEL[0]) / CONV_STRIDE_DEPTH + 1
    }

    pub fn conv_out_width(&self) -> usize {
        2 * self.r_w - 1
    }

    pub fn conv_out_height(&self) -> usize {
        2 * self.r_h - 1
    }
}

/// Closed-form parameter count for a configuration.
pub fn param_count(cfg: &NetworkConfig) -> usize {
    let c = cfg.conv_channels;
    let h = cfg.hidden;
    let o = cfg.head.out_dim();
    let conv = c * CONV_KERNEL.iter().product::<usize>() + c;
    let gru = 2 * (3 * h * h) + 2 * (3 * h);
    let dense1 = h * h + h;
    let out = o * h + o;
    conv + gru + dense1 + out
}

/// All learnable tensors, named. Gate rows in the GRU matrices are stacked
/// in (update z, reset r, candidate h) order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub conv_w: Tensor,
    pub conv_b: Tensor,
    pub gru_wi: Tensor,
    pub gru_wh: Tensor,
    pub gru_bi: Tensor,
    pub gru_bh: Tensor,
    pub dense1_w: Tensor,
    pub dense1_b: Tensor,
    pub out_w: Tensor,
    pub out_b: Tensor,
}

impl ModelParams {
    pub const NAMES: [&'static str; 10] = [
        "conv_w", "conv_b", "gru_wi", "gru_wh", "gru_bi", "gru_bh", "dense1_w", "dense1_b",
        "out_w", "out_b",
    ];

    pub fn zeros(cfg: &NetworkConfig) -> Self {
        let c = cfg.conv_channels;
        let h = cfg.hidden;
        let o = cfg.head.out_dim();
        Self {
            conv_w: Tensor::zeros(&[c, 1, 3, 3, 3]),
            conv_b: Tensor::zeros(&[c]),
            gru_wi: Tensor::zeros(&[3 * h, h]),
            gru_wh: Tensor::zeros(&[3 * h, h]),
            gru_bi: Tensor::zeros(&[3 * h]),
            gru_bh: Tensor::zeros(&[3 * h]),
            dense1_w: Tensor::zeros(&[h, h]),
            dense1_b: Tensor::zeros(&[h]),
            out_w: Tensor::zeros(&[o, h]),
            out_b: Tensor::zeros(&[o]),
        }
    }

    pub fn field(&self, i: usize) -> &Tensor {
        match i {
            0 => &self.conv_w,
            1 => &self.conv_b,
            2 => &self.gru_wi,
            3 => &self.gru_wh,
            4 => &self.gru_bi,
            5 => &self.gru_bh,
            6 => &self.dense1_w,
            7 => &self.dense1_b,
            8 => &self.out_w,
            9 => &self.out_b,
            _ => panic!("no tensor field {i}"),
        }
    }

    pub fn field_mut(&mut self, i: usize) -> &mut Tensor {
        match i {
            0 => &mut self.conv_w,
            1 => &mut self.conv_b,
            2 => &mut self.gru_wi,
            3 => &mut self.gru_wh,
            4 => &mut self.gru_bi,
            5 => &mut self.gru_bh,
            6 => &mut self.dense1_w,
            7 => &mut self.dense1_b,
            8 => &mut self.out_w,
            9 => &mut self.out_b,
            _ => panic!("no tensor field {i}"),
        }
    }

    pub fn count(&self) -> usize {
        (0..Self::NAMES.len()).map(|i| self.field(i).numel()).sum()
    }

    /// Infers the hidden width from the GRU input-weight shape.
    pub fn hidden(&self) -> usize {
        self.gru_wi.shape()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.out_w.shape()[0]
    }

    /// Checks the tensor shapes against a configuration.
    pub fn matches_config(&self, cfg: &NetworkConfig) -> Result<()> {
        let want = Self::zeros(cfg);
        for i in 0..Self::NAMES.len() {
            if self.field(i).shape() != want.field(i).shape() {
                return Err(Error::ShapeMismatch(format!(
                    "tensor '{}' has shape {:?}, config expects {:?}",
                    Self::NAMES[i],
                    self.field(i).shape(),
                    want.field(i).shape()
                )));
            }
        }
        Ok(())
    }

    /// In-place axpy over every tensor: self += alpha * other.
    pub fn add_scaled(&mut self, other: &ModelParams, alpha: f64) {
        for i in 0..Self::NAMES.len() {
            let src = other.field(i).data().to_vec();
            for (d, s) in self.field_mut(i).data_mut().iter_mut().zip(src) {
                *d += alpha * s;
            }
        }
    }
}

/// How a normalized network output in [0,1] maps to meters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DepthMode {
    /// z = z_min + u (z_max - z_min)
    Linear,
    /// 1/z = 1/z_min + u (1/z_max - 1/z_min)
    Inverse,
}

impl std::str::FromStr for DepthMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(DepthMode::Linear),
            "inverse" => Ok(DepthMode::Inverse),
            other => Err(Error::Config(format!("unknown depth mode '{other}'"))),
        }
    }
}

/// Maps a normalized prediction to meters. `u` is expected in [0,1]; clamping
/// is the caller's job (done at inference, never during training).
pub fn denormalize(u: f64, z_min: f64, z_max: f64, mode: DepthMode) -> f64 {
    match mode {
        DepthMode::Linear => z_min + u * (z_max - z_min),
        DepthMode::Inverse => 1.0 / (1.0 / z_min + u * (1.0 / z_max - 1.0 / z_min)),
    }
}

/// Inverse of `denormalize`, clamped to [0,1] for targets outside the range.
pub fn normalize_depth(z: f64, z_min: f64, z_max: f64, mode: DepthMode) -> f64 {
    let u = match mode {
        DepthMode::Linear => (z - z_min) / (z_max - z_min),
        DepthMode::Inverse => (1.0 / z - 1.0 / z_min) / (1.0 / z_max - 1.0 / z_min),
    };
    u.clamp(0.0, 1.0)
}
