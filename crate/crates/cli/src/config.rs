//! Run configuration file.
//!
//! TOML with one section per concern. Every field has a default, and
//! unknown keys are rejected.
//!
//! ```toml
//! out_dir = "runs/desk"
//!
//! [data]
//! manifest = "data/manifest.tsv"
//! sample_rate_hz = 100.0
//! filter = true
//! low_hz = 0.05
//! high_hz = 0.5
//! pad_length = 1150
//!
//! [encoder]
//! depth = 1
//! cross_per_block = 1
//! self_per_block = 0
//! n_latents = 256
//! model_dim = 512
//! fourier_bands = 6
//! max_freq_hz = 10.0
//! ffn_expansion = 4
//! dropout = 0.1
//! out_dim = 512
//!
//! [train]
//! epochs = 200
//! batch_size = 32
//! lr = 1e-4
//! warmup_epochs = 50
//! cooldown_epochs = 10
//! label_smoothing = 0.1
//! seed = 3407
//! window_seconds = 5.0
//! fusion = "lf_avg_gate"
//! checkpoint_every = 0
//!
//! [train.augment]
//! polarity_prob = [0.2, 0.2]
//! noise_prob = [0.2, 0.2]
//! mask_prob = [0.2, 0.2]
//! mask_fraction = [0.1, 0.3]
//! noise_k = [1.0, 1000.0]
//! ```

use std::path::{Path, PathBuf};

use respenc::encoder::EncoderConfig;
use respenc::model::Preprocess;
use respenc::signal::{DEFAULT_HIGH_HZ, DEFAULT_LOW_HZ, DEFAULT_PAD_LENGTH, DEFAULT_SAMPLE_RATE_HZ};
use respenc::training::TrainConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub manifest: Option<PathBuf>,
    pub sample_rate_hz: f64,
    pub filter: bool,
    pub low_hz: f64,
    pub high_hz: f64,
    pub pad_length: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            manifest: None,
            sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
            filter: true,
            low_hz: DEFAULT_LOW_HZ,
            high_hz: DEFAULT_HIGH_HZ,
            pad_length: DEFAULT_PAD_LENGTH,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub out_dir: Option<PathBuf>,
    pub data: DataConfig,
    pub encoder: EncoderConfig,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::parse(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn preprocess(&self) -> Preprocess {
        Preprocess {
            sample_rate_hz: self.data.sample_rate_hz,
            filter: self.data.filter,
            low_hz: self.data.low_hz,
            high_hz: self.data.high_hz,
            pad_length: self.data.pad_length,
            window_seconds: self.train.window_seconds,
        }
    }
}
