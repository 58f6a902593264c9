//! Feature matrices and the UMFT on-disk format.
//!
//! Layout (all little-endian): magic `b"UMFT"`, `u16` version (1), `u32` N,
//! `u32` D, then N*D `f32` values in row-major order. Metadata lives in a JSON
//! sidecar next to the file.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const UMFT_MAGIC: &[u8; 4] = b"UMFT";
pub const UMFT_VERSION: u16 = 1;
pub const UMFT_HEADER_LEN: usize = 4 + 2 + 4 + 4;

/// Image side length at which features were extracted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub enum Scale {
    S128,
    S256,
    S512,
    S1024,
}

impl Scale {
    pub const ALL: [Scale; 4] = [Scale::S128, Scale::S256, Scale::S512, Scale::S1024];

    pub fn pixels(self) -> u32 {
        match self {
            Scale::S128 => 128,
            Scale::S256 => 256,
            Scale::S512 => 512,
            Scale::S1024 => 1024,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl TryFrom<u32> for Scale {
    type Error = String;

    fn try_from(v: u32) -> std::result::Result<Self, String> {
        Scale::ALL
            .into_iter()
            .find(|s| s.pixels() == v)
            .ok_or_else(|| format!("unsupported scale {v}; expected one of 128, 256, 512, 1024"))
    }
}

impl From<Scale> for u32 {
    fn from(s: Scale) -> u32 {
        s.pixels()
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.pixels())
    }
}

/// Pretraining task of the feature extractor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Task {
    #[serde(rename = "imagenet")]
    Imagenet,
    #[serde(rename = "sex")]
    Sex,
    #[serde(rename = "age")]
    Age,
    #[serde(rename = "real-vs-synth")]
    RealVsSynth,
}

impl Task {
    pub const ALL: [Task; 4] = [Task::Imagenet, Task::Sex, Task::Age, Task::RealVsSynth];

    pub fn id(self) -> &'static str {
        match self {
            Task::Imagenet => "imagenet",
            Task::Sex => "sex",
            Task::Age => "age",
            Task::RealVsSynth => "real-vs-synth",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_id(id: &str) -> Result<Self> {
        Task::ALL
            .into_iter()
            .find(|t| t.id() == id)
            .ok_or_else(|| Error::Parameter(format!("unknown task id {id:?}")))
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

/// JSON sidecar of a UMFT file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSidecar {
    pub scale: Scale,
    pub task_id: Task,
    pub dataset_id: String,
    pub extractor_fingerprint: String,
}

/// N x D feature observations for one (scale, task) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    n: usize,
    d: usize,
    data: Vec<f32>,
    pub scale: Scale,
    pub task: Task,
    pub dataset_id: String,
    pub extractor_fingerprint: String,
}

impl FeatureSet {
    /// `data` is row-major, `n` rows of `d` values.
    pub fn new(n: usize, d: usize, data: Vec<f32>, scale: Scale, task: Task, dataset_id: impl Into<String>) -> Result<Self> {
        if n < 2 {
            return Err(Error::InsufficientSamples { got: n, required: 2 });
        }
        if d == 0 {
            return Err(Error::Parameter("feature dimension must be at least 1".into()));
        }
        if data.len() != n * d {
            return Err(Error::Parameter(format!(
                "feature buffer has {} values, expected {n}x{d}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite feature at row {}, column {}",
                i / d,
                i % d
            )));
        }
        Ok(Self {
            n,
            d,
            data,
            scale,
            task,
            dataset_id: dataset_id.into(),
            extractor_fingerprint: String::new(),
        })
    }

    pub fn with_fingerprint(mut self, fingerprint: impl Into<String>) -> Self {
        self.extractor_fingerprint = fingerprint.into();
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn sidecar(&self) -> FeatureSidecar {
        FeatureSidecar {
            scale: self.scale,
            task_id: self.task,
            dataset_id: self.dataset_id.clone(),
            extractor_fingerprint: self.extractor_fingerprint.clone(),
        }
    }

    /// Serializes the matrix in UMFT layout.
    pub fn to_umft_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(UMFT_HEADER_LEN + 4 * self.data.len());
        out.extend_from_slice(UMFT_MAGIC);
        out.extend_from_slice(&UMFT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.n as u32).to_le_bytes());
        out.extend_from_slice(&(self.d as u32).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_umft_bytes(bytes: &[u8], meta: FeatureSidecar) -> Result<Self> {
        let (n, d, data) = parse_umft(bytes)?;
        Ok(Self::new(n, d, data, meta.scale, meta.task_id, meta.dataset_id)?
            .with_fingerprint(meta.extractor_fingerprint))
    }

    /// Writes `path` and its `.json` sidecar.
    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_umft_bytes()).map_err(|e| Error::io(path, e))?;
        let side = sidecar_path(path);
        let json = serde_json::to_vec_pretty(&self.sidecar()).expect("sidecar serializes");
        std::fs::write(&side, json).map_err(|e| Error::io(side, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let side = sidecar_path(path);
        let text = std::fs::read(&side).map_err(|e| Error::io(&side, e))?;
        let meta: FeatureSidecar = serde_json::from_slice(&text)
            .map_err(|e| Error::Format(format!("{}: {e}", side.display())))?;
        Self::from_umft_bytes(&bytes, meta)
    }
}

/// Sidecar location for a data file: same stem, `.json` extension.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

fn parse_umft(bytes: &[u8]) -> Result<(usize, usize, Vec<f32>)> {
    if bytes.len() < UMFT_HEADER_LEN {
        return Err(Error::Format(format!("UMFT file too short ({} bytes)", bytes.len())));
    }
    if &bytes[..4] != UMFT_MAGIC {
        return Err(Error::Format("bad UMFT magic".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != UMFT_VERSION {
        return Err(Error::Format(format!("unsupported UMFT version {version}")));
    }
    let n = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
    let payload = &bytes[UMFT_HEADER_LEN..];
    let expected = n
        .checked_mul(d)
        .and_then(|v| v.checked_mul(4))
        .ok_or_else(|| Error::Format("UMFT dimensions overflow".into()))?;
    if payload.len() != expected {
        return Err(Error::Format(format!(
            "UMFT payload is {} bytes, header declares {n}x{d} floats ({expected} bytes)",
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((n, d, data))
}
