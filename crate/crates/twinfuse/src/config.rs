//! Run and synthesis configuration, read from JSON. Every field has a
//! default so a config file only needs the fields it changes.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use twinfuse_core::audio::MfccConfig;
use twinfuse_core::datamodel::{Exclusion, Modality};
use twinfuse_core::dtw::DtwOptions;
use twinfuse_core::embeddings::{Metric, PcaDim};
use twinfuse_core::fusion::{FusionPlan, NormScope};
use twinfuse_core::hog::HogConfig;
use twinfuse_core::lstm::LstmConfig;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Modalities {
    Voice,
    Ear,
    #[default]
    Both,
}

impl Modalities {
    pub fn includes(self, m: Modality) -> bool {
        matches!(
            (self, m),
            (Modalities::Both, _) | (Modalities::Voice, Modality::Voice) | (Modalities::Ear, Modality::Ear)
        )
    }

    pub fn enabled(self) -> Vec<Modality> {
        [Modality::Voice, Modality::Ear]
            .into_iter()
            .filter(|m| self.includes(*m))
            .collect()
    }
}

/// Paths are taken as given, relative to the working directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub manifest: Option<PathBuf>,
    pub modality: Modalities,
    pub exclusion: Exclusion,
    pub mfcc: MfccConfig,
    pub dtw: DtwOptions,
    pub lstm: LstmConfig,
    pub hog: HogConfig,
    /// Deep ear embedding table; the embedding scorer is skipped without it.
    pub embeddings: Option<PathBuf>,
    pub pca: PcaDim,
    /// Distance for the HOG and embedding scorers.
    pub metric: Metric,
    pub norm_scope: NormScope,
    pub fusion: FusionPlan,
    /// Fail instead of pruning scorers whose inputs are missing.
    pub strict: bool,
    /// Output directory; not echoed into reports.
    #[serde(skip_serializing)]
    pub out_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            manifest: None,
            modality: Modalities::Both,
            exclusion: Exclusion::Pair,
            mfcc: MfccConfig::default(),
            dtw: DtwOptions::default(),
            lstm: LstmConfig::default(),
            hog: HogConfig::default(),
            embeddings: None,
            pca: PcaDim::default(),
            metric: Metric::Manhattan,
            norm_scope: NormScope::Matrix,
            fusion: FusionPlan::default(),
            strict: false,
            out_dir: None,
        }
    }
}

impl RunConfig {
    pub fn seed(&self) -> u64 {
        self.lstm.seed
    }

    /// Checks every sub-config that can be checked without data. MFCC
    /// settings depend on the sample rate and are checked per file.
    pub fn validate(&self) -> Result<()> {
        self.lstm.validate()?;
        self.hog.validate()?;
        self.fusion.validate()?;
        if let PcaDim::Variance(f) = self.pca {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::Config(format!("pca variance fraction {f} outside (0, 1]")));
            }
        }
        if let PcaDim::Fixed(0) = self.pca {
            return Err(Error::Config("pca dimension must be at least 1".into()));
        }
        Ok(())
    }
}

/// Parameters of the synthetic twin dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_pairs: usize,
    /// Correlation between the latent identity vectors of twins.
    pub twin_correlation: f64,
    pub seed: u64,
    pub latent_dim: usize,
    pub sample_rate: u32,
    pub duration_s: f64,
    /// Per-take perturbation of the voice latent (latent units).
    pub voice_jitter: f64,
    /// Additive white noise on each take, relative to the signal RMS.
    pub voice_noise: f64,
    /// Per-capture perturbation of the ear latent (latent units).
    pub ear_jitter: f64,
    /// Additive pixel noise standard deviation.
    pub ear_noise: f64,
    pub embedding_dim: usize,
    /// Additive noise on every embedding coordinate.
    pub embedding_noise: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_pairs: 38,
            twin_correlation: 0.8,
            seed: 0,
            latent_dim: 16,
            sample_rate: 16_000,
            duration_s: 1.0,
            voice_jitter: 0.15,
            voice_noise: 0.3,
            ear_jitter: 0.35,
            ear_noise: 0.05,
            embedding_dim: 128,
            embedding_noise: 0.5,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_pairs == 0 {
            return Err(Error::Config("n_pairs must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.twin_correlation) {
            return Err(Error::Config(format!(
                "twin_correlation {} outside [0, 1]",
                self.twin_correlation
            )));
        }
        let noises = [
            self.voice_jitter,
            self.voice_noise,
            self.ear_jitter,
            self.ear_noise,
            self.embedding_noise,
        ];
        if noises.iter().any(|n| !(n.is_finite() && *n >= 0.0)) {
            return Err(Error::Config("noise levels must be finite and non-negative".into()));
        }
        if self.latent_dim < 8 || self.embedding_dim == 0 {
            return Err(Error::Config("latent_dim must be at least 8 and embedding_dim positive".into()));
        }
        if self.sample_rate < 8_000 || !(self.duration_s > 0.05) {
            return Err(Error::Config("need sample_rate >= 8000 and duration_s > 0.05".into()));
        }
        Ok(())
    }
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn to_pretty_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("config serializes") + "\n"
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_config_fills_defaults() {
        let cfg: RunConfig = serde_json::from_str(r#"{"modality": "voice", "lstm": {"epochs": 3}}"#).unwrap();
        assert_eq!(cfg.modality, Modalities::Voice);
        assert_eq!(cfg.lstm.epochs, 3);
        assert_eq!(cfg.lstm.hidden_size, 32);
        assert_eq!(cfg.fusion, FusionPlan::default());
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"modalty": "voice"}"#).is_err());
    }

    #[test]
    fn default_round_trip() {
        let cfg = RunConfig::default();
        let back: RunConfig = serde_json::from_str(&to_pretty_json(&cfg)).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn bad_plan_weights_rejected() {
        let mut cfg = RunConfig::default();
        let text = to_pretty_json(&cfg.fusion).replace("0.79", "0.8");
        cfg.fusion = serde_json::from_str(&text).unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn synth_validation() {
        SynthConfig::default().validate().unwrap();
        let bad = SynthConfig { twin_correlation: 1.5, ..SynthConfig::default() };
        assert!(bad.validate().is_err());
        let bad = SynthConfig { n_pairs: 0, ..SynthConfig::default() };
        assert!(bad.validate().is_err());
    }
}
