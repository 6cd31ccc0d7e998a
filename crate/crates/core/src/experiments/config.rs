//! TOML experiment configuration.
//!
//! ```toml
//! [generation]            # dataset; see `GenerationConfig`
//! seed = 1
//! identities = 16
//! per_class = 2000
//! train_fraction = 0.9
//! out_side = 32
//! normalize = false       # scale each shadow to peak 1 before noise
//! [generation.model]
//! grid = 32
//! k_id = 10
//! k_exp = 10
//! k_tex = 10
//! [generation.scene]
//! face_pos = [1.65, 0.0, 1.15]
//! expression_scale = 0.5
//! [generation.occluder]
//! kind = "square"         # "square" | "rectangle" | "bitmap"
//! canvas = 127
//! diagonal = 100.0
//!
//! [sweep]
//! seed = 1
//! snr_start = -35.0
//! snr_stop = 80.0
//! snr_step = 5.0
//! subsets = [2, 4, 8, 16]
//! trials = 5
//! # rank = 3             # omitted: chosen from explained variance
//! explained_variance = 0.99
//! record_timing = false
//! [sweep.policy]
//! sigma2_th = 1e-6
//! k = 5.0
//!
//! [pairs]
//! count = 4
//! # explicit = [[1, 2], [3, 4]]
//! # mid_snr = 20.0
//!
//! [report]
//! snr_db = 80.0
//! umbra_threshold = 0.0
//! umbra_on_noisy = false
//! noisy_sigmas = 3.0
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::GenerationConfig;
use crate::error::{invalid, Error, Result};
use crate::mlclass::InversionPolicy;

pub const MAX_GRID_POINTS: usize = 10_000;
pub const MAX_TRIALS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub seed: u64,
    pub snr_start: f64,
    pub snr_stop: f64,
    pub snr_step: f64,
    pub subsets: Vec<usize>,
    pub trials: usize,
    pub rank: Option<usize>,
    pub explained_variance: f64,
    pub policy: InversionPolicy,
    /// Fill the `wall_ms` column. Off by default so output is byte-reproducible.
    pub record_timing: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            snr_start: -35.0,
            snr_stop: 80.0,
            snr_step: 5.0,
            subsets: vec![2, 4, 8, 16],
            trials: 5,
            rank: None,
            explained_variance: 0.99,
            policy: InversionPolicy::default(),
            record_timing: false,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.snr_step > 0.0) || !(self.snr_start <= self.snr_stop) || !self.snr_stop.is_finite() || !self.snr_step.is_finite() {
            return Err(invalid("SNR grid needs start <= stop and step > 0"));
        }
        if (self.snr_stop - self.snr_start) / self.snr_step > MAX_GRID_POINTS as f64 {
            return Err(invalid(format!("SNR grid exceeds {MAX_GRID_POINTS} points")));
        }
        if self.trials == 0 || self.trials > MAX_TRIALS {
            return Err(invalid(format!("trials must lie in 1..={MAX_TRIALS}")));
        }
        if self.subsets.iter().any(|&m| m == 0) {
            return Err(invalid("subset sizes must be positive"));
        }
        if !(self.explained_variance > 0.0 && self.explained_variance <= 1.0) {
            return Err(invalid("explained_variance must lie in (0, 1]"));
        }
        self.policy.validate()
    }

    /// `start, start + step, …` up to and including `stop` (with a half-step guard).
    pub fn snr_grid(&self) -> Vec<f64> {
        let count = ((self.snr_stop - self.snr_start) / self.snr_step + 1e-9).floor() as usize + 1;
        (0..count).map(|i| self.snr_start + i as f64 * self.snr_step).collect()
    }

    /// Grid point closest to the middle of the range.
    pub fn mid_snr(&self) -> f64 {
        let grid = self.snr_grid();
        grid[(grid.len() - 1) / 2]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PairConfig {
    /// Pairs picked automatically across the distance range when `explicit` is empty.
    pub count: usize,
    pub explicit: Vec<[u32; 2]>,
    /// SNR used for the ordering summary; defaults to the middle of the grid.
    pub mid_snr: Option<f64>,
}

impl Default for PairConfig {
    fn default() -> Self {
        Self {
            count: 4,
            explicit: Vec::new(),
            mid_snr: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    /// Operating point for `fit`, `evaluate`, `umbra` and `pose-report`.
    pub snr_db: f64,
    pub umbra_threshold: f64,
    /// Measure umbra on noisy test images with threshold `noisy_sigmas · σ`.
    pub umbra_on_noisy: bool,
    pub noisy_sigmas: f64,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            snr_db: 80.0,
            umbra_threshold: 0.0,
            umbra_on_noisy: false,
            noisy_sigmas: 3.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub generation: GenerationConfig,
    pub sweep: SweepConfig,
    pub pairs: PairConfig,
    pub report: ReportConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.sweep.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    /// Applies a global seed to both data generation and noise.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.generation.seed = seed;
        self.sweep.seed = seed;
        self
    }
}
