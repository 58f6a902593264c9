//! Pipeline configuration and its canonical TOML form.
//!
//! ```toml
//! superpixels_M = 512
//! threshold_t = 50
//! hu_window = [-1500.0, 100.0]
//! seed = 0
//! scales = [128, 256, 512, 1024]
//! tasks = ["imagenet", "sex", "age", "real-vs-synth"]
//! parallelism = 0
//!
//! [slic]
//! compactness = 10.0
//! max_iters = 10
//! ```
//!
//! Seeds above `i64::MAX` do not fit a TOML integer and are written as decimal
//! strings; both forms are accepted on input.
//!
//! `parallelism = 0` uses every available core. Worker count never changes
//! results, so it is left out of [`PipelineConfig::hash`].

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_bytes, sha256_hex};
use crate::metrics::{Scale, Task};
use crate::umask::{check_threshold, SlicParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlicConfig {
    pub compactness: f64,
    pub max_iters: usize,
}

impl Default for SlicConfig {
    fn default() -> Self {
        Self {
            compactness: SlicParams::DEFAULT_COMPACTNESS,
            max_iters: SlicParams::DEFAULT_MAX_ITERS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(rename = "superpixels_M")]
    pub superpixels_m: usize,
    pub threshold_t: u32,
    pub hu_window: (f64, f64),
    #[serde(with = "seed_repr")]
    pub seed: u64,
    pub scales: Vec<Scale>,
    pub tasks: Vec<Task>,
    pub parallelism: usize,
    pub slic: SlicConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            superpixels_m: 512,
            threshold_t: 50,
            hu_window: (-1500.0, 100.0),
            seed: 0,
            scales: Scale::ALL.to_vec(),
            tasks: Task::ALL.to_vec(),
            parallelism: 0,
            slic: SlicConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.superpixels_m == 0 {
            return Err(Error::Parameter("superpixels_M must be at least 1".into()));
        }
        check_threshold(self.threshold_t)?;
        let (lo, hi) = self.hu_window;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Parameter(format!("hu_window must satisfy lo < hi, got ({lo}, {hi})")));
        }
        if !(self.slic.compactness > 0.0 && self.slic.compactness.is_finite()) || self.slic.max_iters == 0 {
            return Err(Error::Parameter(format!("invalid SLIC settings {:?}", self.slic)));
        }
        for (name, n, distinct) in [
            ("scales", self.scales.len(), is_distinct(&self.scales)),
            ("tasks", self.tasks.len(), is_distinct(&self.tasks)),
        ] {
            if n == 0 || !distinct {
                return Err(Error::Parameter(format!("{name} must be a non-empty list without repeats")));
            }
        }
        Ok(())
    }

    pub fn slic_params(&self) -> SlicParams {
        SlicParams {
            superpixels: self.superpixels_m,
            compactness: self.slic.compactness,
            max_iters: self.slic.max_iters,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Format(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = read_bytes(path)?;
        let text = String::from_utf8(bytes).map_err(|_| Error::Format(format!("{}: not UTF-8", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// SHA-256 of the canonical TOML with `parallelism` zeroed.
    pub fn hash(&self) -> String {
        let normalized = Self {
            parallelism: 0,
            ..self.clone()
        };
        sha256_hex(normalized.to_toml().as_bytes())
    }
}

mod seed_repr {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(seed: &u64, s: S) -> Result<S::Ok, S::Error> {
        match i64::try_from(*seed) {
            Ok(v) => s.serialize_i64(v),
            Err(_) => s.serialize_str(&seed.to_string()),
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Int(u64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Int(v) => Ok(v),
            Repr::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

fn is_distinct<T: PartialEq>(items: &[T]) -> bool {
    items.iter().enumerate().all(|(i, a)| !items[..i].contains(a))
}
