//! Reproducibility envelope written next to every data file.

use atomlaser_core::dynamics::Diagnostics;
use atomlaser_core::{
    DerivedParams, GridSummary, JosephsonLandmarks, PeakAnalysis, SteadyOptions, SteadyState,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub const ARTIFACT_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

/// Deterministic part of a manifest; the content hash covers exactly this.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestBody {
    pub version: String,
    pub label: String,
    pub config: RunConfig,
    pub derived: DerivedParams,
    pub landmarks: JosephsonLandmarks,
    pub grid: GridSummary,
    pub diagnostics: Diagnostics,
    pub spectrum_time: f64,
    pub analysis: PeakAnalysis,
    pub steady_options: SteadyOptions,
    /// Present when the trajectory is long enough to judge.
    pub steady: Option<SteadyState>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub content_hash: String,
    pub body: ManifestBody,
    pub wall_time_sec: f64,
}

pub fn content_hash<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("manifest serializes");
    format!("sha256:{}", hex::encode(Sha256::digest(&bytes)))
}

impl RunManifest {
    pub fn new(body: ManifestBody, wall_time_sec: f64) -> Self {
        Self {
            content_hash: content_hash(&body),
            body,
            wall_time_sec,
        }
    }

    pub fn verify(&self) -> bool {
        content_hash(&self.body) == self.content_hash
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes") + "\n"
    }
}
