//! Pre-emphasis, framing, Hamming window, FFT, mel filterbank and DCT-II:
//! the MFCC front end for the voice scorers.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Mono PCM signal with samples nominally in `[-1, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Signal {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidConfig("sample rate must be positive".into()));
        }
        if !samples.iter().all(|s| s.is_finite()) {
            return Err(Error::NonFinite("signal"));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MfccConfig {
    pub pre_emphasis_alpha: f64,
    pub frame_len_ms: f64,
    pub hop_ms: f64,
    pub fft_size: usize,
    pub n_mel_filters: usize,
    pub n_coefficients: usize,
    pub fmin_hz: f64,
    /// Upper filterbank edge; `None` means the Nyquist frequency.
    pub fmax_hz: Option<f64>,
    pub log_floor: f64,
}

impl Default for MfccConfig {
    fn default() -> Self {
        Self {
            pre_emphasis_alpha: 0.97,
            frame_len_ms: 25.0,
            hop_ms: 10.0,
            fft_size: 512,
            n_mel_filters: 26,
            n_coefficients: 13,
            fmin_hz: 0.0,
            fmax_hz: None,
            log_floor: 1e-10,
        }
    }
}

impl MfccConfig {
    pub fn frame_samples(&self, sample_rate: u32) -> usize {
        libm::round(self.frame_len_ms * f64::from(sample_rate) / 1000.0) as usize
    }

    pub fn hop_samples(&self, sample_rate: u32) -> usize {
        libm::round(self.hop_ms * f64::from(sample_rate) / 1000.0) as usize
    }

    pub fn fmax(&self, sample_rate: u32) -> f64 {
        self.fmax_hz.unwrap_or(f64::from(sample_rate) / 2.0)
    }

    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if !(0.0..1.0).contains(&self.pre_emphasis_alpha) {
            return bad("pre-emphasis alpha must lie in [0, 1)");
        }
        if sample_rate == 0 {
            return bad("sample rate must be positive");
        }
        let frame = self.frame_samples(sample_rate);
        let hop = self.hop_samples(sample_rate);
        if frame < 2 || hop == 0 {
            return bad("frame must span at least 2 samples and hop at least 1");
        }
        if hop > frame {
            return bad("hop must not exceed the frame length");
        }
        if !self.fft_size.is_power_of_two() || self.fft_size < frame {
            return bad("fft size must be a power of two no smaller than the frame");
        }
        if self.n_mel_filters == 0 || self.n_coefficients == 0 {
            return bad("filter and coefficient counts must be positive");
        }
        if self.n_coefficients > self.n_mel_filters {
            return bad("cannot keep more coefficients than mel filters");
        }
        let fmax = self.fmax(sample_rate);
        if !(self.fmin_hz >= 0.0 && self.fmin_hz < fmax && fmax <= f64::from(sample_rate) / 2.0) {
            return bad("need 0 <= fmin < fmax <= sample_rate / 2");
        }
        if !(self.log_floor > 0.0) {
            return bad("log floor must be positive");
        }
        Ok(())
    }
}

/// MFCC frames of one utterance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSequence {
    frames: Matrix,
    config: Option<MfccConfig>,
}

impl FeatureSequence {
    /// Wraps raw frames (rows) that did not come from [`mfcc`].
    pub fn from_frames(frames: Matrix) -> Result<Self> {
        if frames.rows() == 0 || frames.cols() == 0 {
            return Err(Error::Empty("feature sequence"));
        }
        if !frames.is_finite() {
            return Err(Error::NonFinite("feature sequence"));
        }
        Ok(Self {
            frames,
            config: None,
        })
    }

    /// Scalar-valued sequence, one coefficient per frame.
    pub fn from_scalars(values: &[f64]) -> Result<Self> {
        Self::from_frames(Matrix::from_vec(values.len(), 1, values.to_vec())?)
    }

    pub fn frames(&self) -> &Matrix {
        &self.frames
    }

    pub fn n_frames(&self) -> usize {
        self.frames.rows()
    }

    pub fn dim(&self) -> usize {
        self.frames.cols()
    }

    pub fn config(&self) -> Option<&MfccConfig> {
        self.config.as_ref()
    }
}

pub fn pre_emphasis(x: &[f64], alpha: f64) -> Vec<f64> {
    let mut y = Vec::with_capacity(x.len());
    if let Some(&first) = x.first() {
        y.push(first);
    }
    y.extend(x.windows(2).map(|w| w[1] - alpha * w[0]));
    y
}

pub fn hamming_window(n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::InvalidConfig("hamming window needs n >= 2".into()));
    }
    let denom = (n - 1) as f64;
    Ok((0..n)
        .map(|k| 0.54 - 0.46 * libm::cos(2.0 * PI * k as f64 / denom))
        .collect())
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * libm::log10(1.0 + hz / 700.0)
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (libm::pow(10.0, mel / 2595.0) - 1.0)
}

/// Triangular filters with mel-equispaced centers, evaluated at the
/// frequencies of the `fft_size / 2 + 1` non-negative FFT bins.
pub fn mel_filterbank(cfg: &MfccConfig, sample_rate: u32) -> Result<Matrix> {
    cfg.validate(sample_rate)?;
    let n_bins = cfg.fft_size / 2 + 1;
    let lo = hz_to_mel(cfg.fmin_hz);
    let hi = hz_to_mel(cfg.fmax(sample_rate));
    let n_points = cfg.n_mel_filters + 2;
    let edges: Vec<f64> = (0..n_points)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_points - 1) as f64))
        .collect();
    let bin_hz = f64::from(sample_rate) / cfg.fft_size as f64;

    let mut bank = Matrix::zeros(cfg.n_mel_filters, n_bins);
    for m in 0..cfg.n_mel_filters {
        let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
        let row = bank.row_mut(m);
        for (k, w) in row.iter_mut().enumerate() {
            let f = k as f64 * bin_hz;
            *w = if f > left && f <= center {
                (f - left) / (center - left)
            } else if f > center && f < right {
                (right - f) / (right - center)
            } else {
                0.0
            };
        }
        if !row.iter().any(|&w| w > 0.0) {
            return Err(Error::InvalidConfig(alloc::format!(
                "mel filter {m} covers no FFT bin; use fewer filters or a larger fft"
            )));
        }
    }
    Ok(bank)
}

/// In-place iterative radix-2 FFT. `re.len()` must be a power of two.
pub fn fft_in_place(re: &mut [f64], im: &mut [f64]) {
    let n = re.len();
    debug_assert!(n.is_power_of_two() && im.len() == n);
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            re.swap(i, j);
            im.swap(i, j);
        }
    }
    let mut twiddles = Vec::with_capacity(n / 2);
    let mut len = 2;
    while len <= n {
        let ang = -2.0 * PI / len as f64;
        let half = len / 2;
        twiddles.clear();
        twiddles.extend((0..half).map(|k| libm::sincos(ang * k as f64)));
        for start in (0..n).step_by(len) {
            for (k, &(s, c)) in twiddles.iter().enumerate() {
                let a = start + k;
                let b = a + half;
                let tr = re[b] * c - im[b] * s;
                let ti = re[b] * s + im[b] * c;
                re[b] = re[a] - tr;
                im[b] = im[a] - ti;
                re[a] += tr;
                im[a] += ti;
            }
        }
        len <<= 1;
    }
}

/// `|X_k|^2` for `k = 0..=n/2` of a frame zero-padded to `n`.
pub fn power_spectrum(frame: &[f64], n: usize) -> Vec<f64> {
    let mut re = vec![0.0; n];
    let mut im = vec![0.0; n];
    re[..frame.len()].copy_from_slice(frame);
    fft_in_place(&mut re, &mut im);
    (0..=n / 2).map(|k| re[k] * re[k] + im[k] * im[k]).collect()
}

/// Orthonormal DCT-II basis, `n_out` rows of length `n_in`.
fn dct_basis(n_in: usize, n_out: usize) -> Matrix {
    let mut basis = Matrix::zeros(n_out, n_in);
    let nf = n_in as f64;
    for k in 0..n_out {
        let scale = if k == 0 {
            libm::sqrt(1.0 / nf)
        } else {
            libm::sqrt(2.0 / nf)
        };
        for n in 0..n_in {
            basis.set(
                k,
                n,
                scale * libm::cos(PI * k as f64 * (2.0 * n as f64 + 1.0) / (2.0 * nf)),
            );
        }
    }
    basis
}

/// Orthonormal DCT-II of `x`.
pub fn dct2(x: &[f64]) -> Vec<f64> {
    let basis = dct_basis(x.len(), x.len());
    basis.iter_rows().map(|b| dot(b, x)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn frame_count(len: usize, frame: usize, hop: usize) -> usize {
    if len < frame {
        0
    } else {
        (len - frame) / hop + 1
    }
}

/// Reusable MFCC extractor with precomputed window, filterbank and DCT.
#[derive(Debug, Clone)]
pub struct MfccExtractor {
    cfg: MfccConfig,
    sample_rate: u32,
    window: Vec<f64>,
    bank: Matrix,
    dct: Matrix,
}

impl MfccExtractor {
    pub fn new(cfg: &MfccConfig, sample_rate: u32) -> Result<Self> {
        let bank = mel_filterbank(cfg, sample_rate)?;
        Ok(Self {
            window: hamming_window(cfg.frame_samples(sample_rate))?,
            dct: dct_basis(cfg.n_mel_filters, cfg.n_coefficients),
            bank,
            cfg: cfg.clone(),
            sample_rate,
        })
    }

    pub fn extract(&self, x: &Signal) -> Result<FeatureSequence> {
        if x.sample_rate() != self.sample_rate {
            return Err(Error::InvalidConfig(alloc::format!(
                "extractor built for {} Hz, signal is {} Hz",
                self.sample_rate,
                x.sample_rate()
            )));
        }
        let frame = self.window.len();
        let hop = self.cfg.hop_samples(self.sample_rate);
        let n_frames = frame_count(x.len(), frame, hop);
        if n_frames == 0 {
            return Err(Error::SignalTooShort {
                len: x.len(),
                needed: frame,
            });
        }
        let emphasized = pre_emphasis(x.samples(), self.cfg.pre_emphasis_alpha);
        let mut out = Matrix::zeros(n_frames, self.cfg.n_coefficients);
        let mut buf = vec![0.0; frame];
        let mut log_mel = vec![0.0; self.cfg.n_mel_filters];
        for t in 0..n_frames {
            let start = t * hop;
            for (b, (s, w)) in buf
                .iter_mut()
                .zip(emphasized[start..start + frame].iter().zip(&self.window))
            {
                *b = s * w;
            }
            let power = power_spectrum(&buf, self.cfg.fft_size);
            for (lm, filt) in log_mel.iter_mut().zip(self.bank.iter_rows()) {
                let energy = dot(filt, &power);
                *lm = libm::log(energy.max(self.cfg.log_floor));
            }
            for (c, basis) in out.row_mut(t).iter_mut().zip(self.dct.iter_rows()) {
                *c = dot(basis, &log_mel);
            }
        }
        Ok(FeatureSequence {
            frames: out,
            config: Some(self.cfg.clone()),
        })
    }
}

pub fn mfcc(x: &Signal, cfg: &MfccConfig) -> Result<FeatureSequence> {
    MfccExtractor::new(cfg, x.sample_rate())?.extract(x)
}
