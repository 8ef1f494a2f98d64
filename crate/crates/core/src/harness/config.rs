use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize};

use crate::quantizer::{stepsize_table, Resolution};
use crate::training::TrainingKind;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Ls,
    Almmse,
    Bpdn,
    Qiht,
    EmBgGamp,
    EmGmGamp,
    EmBgVamp,
    EmGmVamp,
    /// The true channel, as an upper reference for the rate metrics.
    Perfect,
}

impl Algorithm {
    pub const ALL: [Algorithm; 9] = [
        Algorithm::Ls,
        Algorithm::Almmse,
        Algorithm::Bpdn,
        Algorithm::Qiht,
        Algorithm::EmBgGamp,
        Algorithm::EmGmGamp,
        Algorithm::EmBgVamp,
        Algorithm::EmGmVamp,
        Algorithm::Perfect,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Ls => "ls",
            Algorithm::Almmse => "almmse",
            Algorithm::Bpdn => "bpdn",
            Algorithm::Qiht => "qiht",
            Algorithm::EmBgGamp => "em-bg-gamp",
            Algorithm::EmGmGamp => "em-gm-gamp",
            Algorithm::EmBgVamp => "em-bg-vamp",
            Algorithm::EmGmVamp => "em-gm-vamp",
            Algorithm::Perfect => "perfect",
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown algorithm {s:?}")))
    }
}

fn de_bits<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<Resolution>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Int(u32),
        Text(String),
    }
    let raw: Vec<Raw> = Vec::deserialize(d)?;
    raw.into_iter()
        .map(|r| match r {
            Raw::Int(b) => Ok(Resolution::Bits(b)),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        })
        .collect()
}

fn ser_bits<S: serde::Serializer>(bits: &[Resolution], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(bits.len()))?;
    for b in bits {
        match b {
            Resolution::Bits(n) => seq.serialize_element(n)?,
            Resolution::Infinite => seq.serialize_element("inf")?,
        }
    }
    seq.end()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArrayConfig {
    /// `[elevation rows, azimuth columns]`.
    pub tx: [usize; 2],
    pub rx: [usize; 2],
    pub spacing: f64,
}

impl Default for ArrayConfig {
    fn default() -> Self {
        Self { tx: [8, 8], rx: [8, 8], spacing: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    pub clusters: usize,
    pub paths: usize,
    pub spread_deg: f64,
    pub taps: usize,
    pub rolloff: f64,
    pub cluster_powers: Option<Vec<f64>>,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self { clusters: 4, paths: 10, spread_deg: 7.5, taps: 16, rolloff: 0.0, cluster_powers: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub kind: TrainingKind,
    pub np: Vec<usize>,
    pub power: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self { kind: TrainingKind::ShiftedZc, np: vec![2048], power: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub snr_db: Vec<f64>,
    #[serde(deserialize_with = "de_bits", serialize_with = "ser_bits")]
    pub bits: Vec<Resolution>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            snr_db: vec![0.0],
            bits: vec![
                Resolution::Bits(1),
                Resolution::Bits(2),
                Resolution::Bits(3),
                Resolution::Bits(4),
                Resolution::Infinite,
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlgorithmConfig {
    pub list: Vec<Algorithm>,
    pub max_iter: usize,
    pub tol: f64,
    pub damping: f64,
    pub gm_order: usize,
}

impl Default for AlgorithmConfig {
    fn default() -> Self {
        Self {
            list: Algorithm::ALL[..8].to_vec(),
            max_iter: 50,
            tol: 1e-6,
            damping: 1.0,
            gm_order: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RateSettings {
    /// Compute the mutual-information and rate bounds.
    pub enabled: bool,
    pub n_co: usize,
    pub n_b: usize,
}

impl Default for RateSettings {
    fn default() -> Self {
        Self { enabled: false, n_co: 10240, n_b: 256 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub path: Option<PathBuf>,
    /// Record per-row wall time; leave off for byte-reproducible output.
    pub timing: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { path: None, timing: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub trials: usize,
    /// Worker threads; 0 picks the number of cores.
    pub threads: usize,
    pub arrays: ArrayConfig,
    pub channel: ChannelConfig,
    pub training: TrainingConfig,
    pub sweep: SweepConfig,
    pub algorithms: AlgorithmConfig,
    pub rate: RateSettings,
    pub output: OutputConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            trials: 100,
            threads: 0,
            arrays: ArrayConfig::default(),
            channel: ChannelConfig::default(),
            training: TrainingConfig::default(),
            sweep: SweepConfig::default(),
            algorithms: AlgorithmConfig::default(),
            rate: RateSettings::default(),
            output: OutputConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.trials == 0 {
            return fail("trials must be at least 1".into());
        }
        if self.training.np.is_empty() || self.sweep.snr_db.is_empty() || self.sweep.bits.is_empty() {
            return fail("N_p, SNR and bits grids must be nonempty".into());
        }
        if self.algorithms.list.is_empty() {
            return fail("algorithm list must be nonempty".into());
        }
        if self.arrays.tx.contains(&0) || self.arrays.rx.contains(&0) {
            return fail("array dimensions must be positive".into());
        }
        if self.channel.taps < 5 {
            return fail(format!("delay spread L = {} must be at least 5", self.channel.taps));
        }
        if !(self.training.power > 0.0) {
            return fail("training power must be positive".into());
        }
        for b in &self.sweep.bits {
            stepsize_table(*b)?;
        }
        if self.sweep.snr_db.iter().any(|s| !s.is_finite()) {
            return fail("SNR values must be finite".into());
        }
        let n_t = self.arrays.tx[0] * self.arrays.tx[1];
        for &np in &self.training.np {
            if np == 0 {
                return fail("N_p must be positive".into());
            }
            if self.training.kind == TrainingKind::ShiftedZc && np % (n_t * self.channel.taps) != 0 {
                return Err(Error::Divisibility { n_p: np, block: n_t * self.channel.taps });
            }
            if self.rate.enabled && np > self.rate.n_co {
                return fail(format!("N_p = {np} exceeds the coherence length {}", self.rate.n_co));
            }
        }
        if self.rate.enabled && self.rate.n_b < self.channel.taps {
            return fail("N_b must be at least L".into());
        }
        if !(self.algorithms.damping > 0.0 && self.algorithms.damping <= 1.0) {
            return fail("damping must lie in (0, 1]".into());
        }
        if self.algorithms.gm_order == 0 || self.algorithms.max_iter == 0 {
            return fail("gm_order and max_iter must be positive".into());
        }
        Ok(())
    }
}
