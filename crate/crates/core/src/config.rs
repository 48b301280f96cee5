//! One serializable bag of every pipeline tunable, with named presets for
//! the two benchmark setups, and the run-metadata record that makes every
//! invocation reproducible.

use serde::{Deserialize, Serialize};

use crate::dsi::{FusionMethod, VoteMode};
use crate::error::{Error, Result};
use crate::io::DSI_FORMAT_VERSION;
use crate::net::{DepthMode, Head, NetworkConfig, MODEL_FORMAT_VERSION};
use crate::select::AgtConfig;
use crate::train::{SplitMode, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Event window length per reference view, seconds; the window is
    /// centered on the ground-truth timestamp and clipped to the sequence.
    pub span: f64,
    pub z_min: f64,
    pub z_max: f64,
    pub d: usize,
    pub r_w: usize,
    pub r_h: usize,
    pub window: usize,
    pub agt_c: f64,
    pub batch_size: usize,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    pub head: Head,
    pub vote_mode: VoteMode,
    pub packet_size: usize,
    pub fusion: FusionMethod,
    pub depth_mode: DepthMode,
    pub weight_decay: f64,
    pub ensemble: bool,
    pub split: SplitMode,
    pub bad_pix_threshold: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            span: 1.0,
            z_min: 1.0,
            z_max: 6.5,
            d: 100,
            r_w: 3,
            r_h: 3,
            window: 9,
            agt_c: -10.0,
            batch_size: 64,
            lr: 1e-3,
            epochs: 3,
            seed: 0,
            head: Head::Single,
            vote_mode: VoteMode::Nearest,
            packet_size: 1024,
            fusion: FusionMethod::Harmonic,
            depth_mode: DepthMode::Linear,
            weight_decay: 0.01,
            ensemble: true,
            split: SplitMode::SampleWise,
            bad_pix_threshold: 0.10,
        }
    }
}

impl RunConfig {
    /// The two benchmark presets. `mvsec-indoor`: 1 s span, 1–6.5 m, D=100,
    /// 7x7 Sub-DSI, 9x9 window, C=-10. `dsec-zurich04a`: 0.2 s span, 4–50 m,
    /// D=100, 7x7 Sub-DSI, 9x9 window, C=-2. Both train with AdamW at 1e-3,
    /// MAE loss, batch 64, 3 epochs.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "mvsec-indoor" => Ok(Self::default()),
            "dsec-zurich04a" => Ok(Self {
                span: 0.2,
                z_min: 4.0,
                z_max: 50.0,
                agt_c: -2.0,
                ..Self::default()
            }),
            other => Err(Error::Config(format!(
                "unknown preset '{other}' (expected 'mvsec-indoor' or 'dsec-zurich04a')"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.network_config()?;
        self.agt_config()?;
        self.train_config().validate()?;
        crate::dsi::plane_depths(self.z_min, self.z_max, self.d)?;
        if !(self.span > 0.0) {
            return Err(Error::Config("span must be positive".into()));
        }
        if !(self.bad_pix_threshold > 0.0) {
            return Err(Error::Config("bad-pix threshold must be positive".into()));
        }
        Ok(())
    }

    pub fn network_config(&self) -> Result<NetworkConfig> {
        NetworkConfig::new(self.d, self.r_w, self.r_h, 4, self.head)
    }

    pub fn agt_config(&self) -> Result<AgtConfig> {
        AgtConfig::new(self.window, self.agt_c)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            lr: self.lr,
            epochs: self.epochs,
            seed: self.seed,
            weight_decay: self.weight_decay,
            ensemble: self.ensemble,
            split: self.split,
        }
    }

    pub fn voting_config(&self) -> crate::dsi::VotingConfig {
        crate::dsi::VotingConfig {
            packet_size: self.packet_size,
            vote_mode: self.vote_mode,
        }
    }
}

/// Everything needed to reproduce a run bit-exactly: the full configuration,
/// seeds (inside the config), format versions, and free-form notes such as
/// clamp counts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMetadata {
    pub command: String,
    pub config: RunConfig,
    pub optimizer: String,
    pub loss: String,
    pub model_format_version: u32,
    pub dsi_format_version: u32,
    #[serde(default)]
    pub notes: serde_json::Map<String, serde_json::Value>,
}

impl RunMetadata {
    pub fn new(command: &str, config: RunConfig) -> Self {
        Self {
            command: command.to_string(),
            config,
            optimizer: "adamw".to_string(),
            loss: "mae".to_string(),
            model_format_version: MODEL_FORMAT_VERSION,
            dsi_format_version: DSI_FORMAT_VERSION,
            notes: serde_json::Map::new(),
        }
    }

    pub fn note(&mut self, key: &str, value: impl Into<serde_json::Value>) {
        self.notes.insert(key.to_string(), value.into());
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path.as_ref(), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}
