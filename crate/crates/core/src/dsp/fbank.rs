use std::path::Path;

use ndarray::Array2;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor_io::{FeatureMatrix, FrameSpec};

/// Log-mel filter bank settings. Defaults follow the 80-bin, 25 ms window,
/// 10 ms hop recipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FbankConfig {
    pub sample_rate_hz: u32,
    pub n_mels: usize,
    pub win_ms: f64,
    pub hop_ms: f64,
    pub fmin_hz: f64,
    /// `None` means Nyquist.
    pub fmax_hz: Option<f64>,
    pub floor: f64,
}

impl Default for FbankConfig {
    fn default() -> Self {
        FbankConfig::new(16_000)
    }
}

impl FbankConfig {
    pub fn new(sample_rate_hz: u32) -> Self {
        FbankConfig {
            sample_rate_hz,
            n_mels: 80,
            win_ms: 25.0,
            hop_ms: 10.0,
            fmin_hz: 0.0,
            fmax_hz: None,
            floor: 1e-10,
        }
    }

    pub fn nyquist(&self) -> f64 {
        f64::from(self.sample_rate_hz) / 2.0
    }

    pub fn fmax(&self) -> f64 {
        self.fmax_hz.unwrap_or_else(|| self.nyquist())
    }

    pub fn win_samples(&self) -> usize {
        (self.win_ms * f64::from(self.sample_rate_hz) / 1000.0).round() as usize
    }

    pub fn hop_samples(&self) -> usize {
        (self.hop_ms * f64::from(self.sample_rate_hz) / 1000.0).round() as usize
    }

    /// Window zero-padded to the next power of two.
    pub fn n_fft(&self) -> usize {
        self.win_samples().next_power_of_two()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Input(m));
        if self.sample_rate_hz == 0 {
            return bad("sample rate must be positive".into());
        }
        if !(self.hop_ms > 0.0 && self.hop_ms <= self.win_ms) {
            return bad(format!(
                "need 0 < hop_ms <= win_ms, got hop {} win {}",
                self.hop_ms, self.win_ms
            ));
        }
        if self.hop_samples() == 0 {
            return bad("hop is shorter than one sample".into());
        }
        if self.n_mels == 0 {
            return bad("n_mels must be at least 1".into());
        }
        let fmax = self.fmax();
        if !(self.fmin_hz >= 0.0 && self.fmin_hz < fmax && fmax <= self.nyquist()) {
            return bad(format!(
                "need 0 <= fmin < fmax <= {} Hz, got {}..{}",
                self.nyquist(),
                self.fmin_hz,
                fmax
            ));
        }
        if self.floor.is_nan() || self.floor <= 0.0 {
            return bad("floor must be positive".into());
        }
        Ok(())
    }

    /// Number of frames produced for `n` samples (no padding).
    pub fn frame_count(&self, n: usize) -> usize {
        let win = self.win_samples();
        if n < win {
            0
        } else {
            (n - win) / self.hop_samples() + 1
        }
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Corner frequencies (Hz) of the triangular filters: `n_mels + 2` points
/// equally spaced on the mel scale. Filter `m` peaks at `points[m + 1]`.
fn mel_points_hz(cfg: &FbankConfig) -> Vec<f64> {
    let lo = hz_to_mel(cfg.fmin_hz);
    let hi = hz_to_mel(cfg.fmax());
    let n = cfg.n_mels + 1;
    (0..=n)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / n as f64))
        .collect()
}

/// Peak frequency of each mel filter, in Hz.
pub fn mel_center_frequencies(cfg: &FbankConfig) -> Vec<f64> {
    let pts = mel_points_hz(cfg);
    pts[1..pts.len() - 1].to_vec()
}

/// `n_mels x (n_fft/2 + 1)` triangular weights, built in Hz on the FFT grid.
pub fn mel_filterbank(cfg: &FbankConfig) -> Array2<f64> {
    let n_fft = cfg.n_fft();
    let n_bins = n_fft / 2 + 1;
    let sr = f64::from(cfg.sample_rate_hz);
    let pts = mel_points_hz(cfg);
    Array2::from_shape_fn((cfg.n_mels, n_bins), |(m, k)| {
        let f = k as f64 * sr / n_fft as f64;
        let (l, c, r) = (pts[m], pts[m + 1], pts[m + 2]);
        if f <= l || f >= r {
            0.0
        } else if f <= c {
            (f - l) / (c - l)
        } else {
            (r - f) / (r - c)
        }
    })
}

fn hann(len: usize) -> Vec<f64> {
    (0..len)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / len as f64).cos())
        .collect()
}

/// Hann window, power spectrum, HTK mel filter bank, floor, natural log.
pub fn log_mel_spectrogram(waveform: &[f64], cfg: &FbankConfig) -> Result<FeatureMatrix> {
    cfg.validate()?;
    let win = cfg.win_samples();
    let hop = cfg.hop_samples();
    if waveform.len() < win {
        return Err(Error::Input(format!(
            "waveform has {} samples, shorter than one {win}-sample window",
            waveform.len()
        )));
    }
    if let Some(i) = waveform.iter().position(|x| !x.is_finite()) {
        return Err(Error::data(format!("sample {i}"), "non-finite sample"));
    }

    let n_fft = cfg.n_fft();
    let n_bins = n_fft / 2 + 1;
    let n_frames = cfg.frame_count(waveform.len());
    let window = hann(win);
    let bank = mel_filterbank(cfg);
    let fft = FftPlanner::new().plan_fft_forward(n_fft);

    let mut out = Array2::zeros((n_frames, cfg.n_mels));
    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
    let mut power = ndarray::Array1::zeros(n_bins);
    for (t, mut row) in out.rows_mut().into_iter().enumerate() {
        let frame = &waveform[t * hop..t * hop + win];
        for (slot, (x, w)) in buf.iter_mut().zip(frame.iter().zip(&window)) {
            *slot = Complex::new(x * w, 0.0);
        }
        buf[win..].fill(Complex::new(0.0, 0.0));
        fft.process(&mut buf);
        for (p, c) in power.iter_mut().zip(&buf[..n_bins]) {
            *p = c.norm_sqr();
        }
        for (dst, filt) in row.iter_mut().zip(bank.rows()) {
            *dst = filt.dot(&power).max(cfg.floor).ln();
        }
    }

    Ok(FeatureMatrix::new(out)?.with_frame_spec(FrameSpec::new(cfg.hop_ms, cfg.win_ms, cfg.win_ms / 2.0)))
}

/// Reads a mono 16-bit PCM WAV file into samples scaled to [-1, 1).
pub fn read_wav(path: impl AsRef<Path>) -> Result<(Vec<f64>, u32)> {
    let path = path.as_ref();
    let reader = hound::WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::format(path.display().to_string(), other.to_string()),
    })?;
    let spec = reader.spec();
    if spec.channels != 1 || spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
        return Err(Error::Unsupported(format!(
            "{}: need mono 16-bit PCM, got {} channel(s) {}-bit {:?}",
            path.display(),
            spec.channels,
            spec.bits_per_sample,
            spec.sample_format
        )));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| {
            s.map(|v| f64::from(v) / 32768.0)
                .map_err(|e| Error::format(path.display().to_string(), e.to_string()))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok((samples, spec.sample_rate))
}

/// Writes mono 16-bit PCM; samples are clipped to [-1, 1].
pub fn write_wav(path: impl AsRef<Path>, samples: &[f64], sample_rate: u32) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let to_err = |e: hound::Error| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::format(path.display().to_string(), other.to_string()),
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(to_err)?;
    for s in samples {
        w.write_sample((s.clamp(-1.0, 1.0) * 32767.0).round() as i16)
            .map_err(to_err)?;
    }
    w.finalize().map_err(to_err)
}
