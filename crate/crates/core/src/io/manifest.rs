//! Dataset manifests: a JSON index tying together event files, pose files,
//! calibration, and ground-truth frames for one sequence. Paths are relative
//! to the manifest's directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CameraFiles {
    pub name: String,
    pub events: String,
    pub poses: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GtEntry {
    pub t: f64,
    pub path: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SequenceManifest {
    pub sequence: String,
    pub calib: String,
    pub cameras: Vec<CameraFiles>,
    /// Ground-truth depth frames for the reference (left) camera.
    pub gt: Vec<GtEntry>,
}

impl SequenceManifest {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path.as_ref(), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Resolves a manifest-relative path against the manifest location.
    pub fn resolve(manifest_path: &Path, relative: &str) -> PathBuf {
        match manifest_path.parent() {
            Some(dir) => dir.join(relative),
            None => PathBuf::from(relative),
        }
    }

    pub fn camera(&self, name: &str) -> Option<&CameraFiles> {
        self.cameras.iter().find(|c| c.name == name)
    }
}
