//! Deterministic synthetic twin datasets.
//!
//! Every subject gets a latent identity vector; a twin's latent is
//! `ρ·z + sqrt(1 − ρ²)·ε`. The first half of the latent drives the voice,
//! the second half the ear. Each capture perturbs its half of the latent,
//! so takes of one subject differ while twins stay close.
//!
//! * voice: three sinusoids whose frequencies, amplitudes and amplitude
//!   envelopes follow the latent, with per-take tempo change, random phases
//!   and additive white noise, written as PCM16 WAV;
//! * ear: 64×128 sum of oriented sinusoidal bands plus pixel noise, written
//!   as PGM;
//! * embeddings: fixed random projection of each ear capture's latent plus
//!   noise, standing in for deep features.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use twinfuse_core::datamodel::{Capture, Dataset, EarSide, SampleRecord, SubjectId, VOICE_TAKES};
use twinfuse_core::hog::GrayImage;

use crate::config::{to_pretty_json, SynthConfig};
use crate::error::{Error, Result};
use crate::manifest::write_manifest;
use crate::pgm::write_pgm;
use crate::tables::write_vector_table;
use crate::wav::write_wav;

pub const EAR_WIDTH: usize = 64;
pub const EAR_HEIGHT: usize = 128;

const STREAM_LATENT: u64 = 0;
const STREAM_PROJECTION: u64 = 1;
const STREAM_SUBJECT: u64 = 1_000;

const VOICE_BASE_HZ: [f64; 3] = [300.0, 900.0, 2200.0];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub manifest: PathBuf,
    pub embeddings: PathBuf,
    pub n_subjects: usize,
    pub n_wav: usize,
    pub n_pgm: usize,
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn normal(r: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(r)
}

pub fn subject_id(index: usize) -> SubjectId {
    SubjectId::new(format!("s{:03}", index + 1)).expect("non-empty id")
}

/// Latent vectors of all subjects, twins adjacent: subjects `2p` and
/// `2p + 1` form pair `p`.
pub fn subject_latents(cfg: &SynthConfig) -> Vec<Vec<f64>> {
    let mut r = rng(cfg.seed, STREAM_LATENT);
    let rho = cfg.twin_correlation;
    let spread = (1.0 - rho * rho).max(0.0).sqrt();
    let mut out = Vec::with_capacity(2 * cfg.n_pairs);
    for _ in 0..cfg.n_pairs {
        let a: Vec<f64> = (0..cfg.latent_dim).map(|_| normal(&mut r)).collect();
        let b: Vec<f64> = a.iter().map(|v| rho * v + spread * normal(&mut r)).collect();
        out.push(a);
        out.push(b);
    }
    out
}

fn jitter(base: &[f64], amount: f64, r: &mut ChaCha8Rng) -> Vec<f64> {
    base.iter().map(|v| v + amount * normal(r)).collect()
}

/// One voice take from the voice half of a latent.
fn voice_take(latent: &[f64], cfg: &SynthConfig, r: &mut ChaCha8Rng) -> Vec<f64> {
    let z = jitter(latent, cfg.voice_jitter, r);
    let at = |k: usize| z[k % z.len()];
    let tempo = (0.05 * normal(r)).exp();
    let phases: Vec<f64> = (0..3).map(|_| r.random_range(0.0..2.0 * PI)).collect();
    let rate = 3.0 * (0.2 * at(6)).exp();
    let n = (cfg.duration_s * f64::from(cfg.sample_rate)).round() as usize;
    let sr = f64::from(cfg.sample_rate);
    let nyquist = sr / 2.0;
    let mut x: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / sr;
            (0..3)
                .map(|k| {
                    let f = (VOICE_BASE_HZ[k] * (0.15 * at(k)).exp()).min(0.9 * nyquist);
                    let amp = (0.35 * at(3 + k)).exp();
                    let env = 1.0 + 0.5 * (2.0 * PI * rate * tempo * t + 2.1 * k as f64 + at(7)).sin();
                    amp * env * (2.0 * PI * f * t + phases[k]).sin()
                })
                .sum::<f64>()
        })
        .collect();
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt().max(1e-12);
    for v in &mut x {
        *v = *v / rms + cfg.voice_noise * normal(r);
    }
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    x.iter().map(|v| 0.9 * v / peak).collect()
}

/// Smooth band texture from a perturbed ear latent.
fn ear_image(z: &[f64], cfg: &SynthConfig, r: &mut ChaCha8Rng) -> GrayImage {
    let at = |k: usize| z[k % z.len()];
    let bands: Vec<(f64, f64, f64)> = (0..3)
        .map(|k| {
            let theta = k as f64 * PI / 3.0 + 0.4 * at(k);
            let freq = (3.0 + 2.0 * k as f64) * (0.2 * at(3 + k)).exp();
            let phase = 1.5 * at(6 + k);
            (theta, freq, phase)
        })
        .collect();
    let mut pixels = Vec::with_capacity(EAR_WIDTH * EAR_HEIGHT);
    for y in 0..EAR_HEIGHT {
        for x in 0..EAR_WIDTH {
            let (xf, yf) = (x as f64, y as f64);
            let s: f64 = bands
                .iter()
                .map(|(theta, freq, phase)| {
                    (2.0 * PI * freq * (xf * theta.cos() + yf * theta.sin()) / EAR_HEIGHT as f64 + phase).sin()
                })
                .sum();
            let v = 0.5 + 0.12 * s + cfg.ear_noise * normal(r);
            pixels.push(v.clamp(0.0, 1.0));
        }
    }
    GrayImage::new(EAR_WIDTH, EAR_HEIGHT, pixels).expect("pixels are clamped")
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Writes WAV takes, PGM ears, the embedding table, the manifest and a
/// copy of the config under `out`.
pub fn generate_synthetic(cfg: &SynthConfig, out: &Path) -> Result<SynthOutput> {
    cfg.validate()?;
    create_dir(&out.join("voice"))?;
    create_dir(&out.join("ear"))?;

    let latents = subject_latents(cfg);
    let half = cfg.latent_dim / 2;
    let mut proj_rng = rng(cfg.seed, STREAM_PROJECTION);
    let ear_dim = cfg.latent_dim - half;
    let projection: Vec<Vec<f64>> = (0..cfg.embedding_dim)
        .map(|_| (0..ear_dim).map(|_| normal(&mut proj_rng) / (ear_dim as f64).sqrt()).collect())
        .collect();

    let mut samples = Vec::new();
    let mut embeddings = Vec::new();
    let (mut n_wav, mut n_pgm) = (0, 0);
    for (i, latent) in latents.iter().enumerate() {
        let sid = subject_id(i);
        let mut r = rng(cfg.seed, STREAM_SUBJECT + i as u64);
        let (voice, ear) = latent.split_at(half);
        for take in 1..=VOICE_TAKES {
            let rel = format!("voice/{sid}_take{take}.wav");
            write_wav(&out.join(&rel), &voice_take(voice, cfg, &mut r), cfg.sample_rate)?;
            n_wav += 1;
            samples.push(SampleRecord::new(format!("{sid}_v{take}"), sid.clone(), Capture::Voice { take }, rel));
        }
        for (side, name) in [(EarSide::Left, "left"), (EarSide::Right, "right")] {
            let z = jitter(ear, cfg.ear_jitter, &mut r);
            let rel = format!("ear/{sid}_{name}.pgm");
            write_pgm(&out.join(&rel), &ear_image(&z, cfg, &mut r))?;
            n_pgm += 1;
            let sample_id = format!("{sid}_ear_{name}");
            let e: Vec<f64> = projection
                .iter()
                .map(|w| w.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>() + cfg.embedding_noise * normal(&mut r))
                .collect();
            embeddings.push((sample_id.clone(), e));
            samples.push(SampleRecord::new(sample_id, sid.clone(), Capture::Ear { side }, rel));
        }
    }

    let pairs = (0..cfg.n_pairs)
        .map(|p| (subject_id(2 * p), subject_id(2 * p + 1)))
        .collect();
    let dataset = Dataset::new(pairs, samples)?;
    let manifest = out.join("manifest.json");
    write_manifest(&manifest, &dataset)?;
    let emb_path = out.join("embeddings.csv");
    write_vector_table(&emb_path, &embeddings)?;
    let cfg_path = out.join("synth_config.json");
    fs::write(&cfg_path, to_pretty_json(cfg)).map_err(|e| Error::io(&cfg_path, e))?;
    log::info!(
        "synthesized {} subjects: {n_wav} wav, {n_pgm} pgm, {} embeddings",
        latents.len(),
        embeddings.len()
    );
    Ok(SynthOutput {
        manifest,
        embeddings: emb_path,
        n_subjects: latents.len(),
        n_wav,
        n_pgm,
    })
}
