//! Clip → fixed-length normalized magnitude spectrum.
//!
//! The chain is: onset detection, a forward-shifted 8820-sample segment,
//! RMS loudness normalization, Hamming window, zero-padded FFT of size
//! 2·8820, one-sided magnitudes without the DC bin, and max normalization.
//! With the canonical 44.1 kHz rate the spectrum has 2.5 Hz bins spanning
//! 2.5 Hz .. 22.05 kHz.

use std::cell::RefCell;
use std::fmt::Write as _;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::audio_io::{AudioClip, CANONICAL_SAMPLE_RATE};
use crate::error::{Error, Result};

pub const SEGMENT_LEN: usize = 8820;

/// Below this RMS a segment counts as silent.
pub const SILENCE_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessConfig {
    /// Onset threshold as a fraction of the clip's peak |amplitude|.
    pub onset_fraction: f64,
    /// Forward shift from the onset to the segment start, seconds.
    pub shift_seconds: f64,
    pub segment_len: usize,
    pub target_rms: f64,
    /// Number of spectrum bins fed to the models. Anything other than
    /// `segment_len` max-pools the full spectrum down and is meant for
    /// fast test runs only.
    pub spectrum_width: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            onset_fraction: 0.10,
            shift_seconds: 0.08,
            segment_len: SEGMENT_LEN,
            target_rms: 0.1,
            spectrum_width: SEGMENT_LEN,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.onset_fraction > 0.0 && self.onset_fraction < 1.0) {
            return Err(Error::Config(format!(
                "onset_fraction must be in (0, 1), got {}",
                self.onset_fraction
            )));
        }
        if !(self.shift_seconds >= 0.0 && self.shift_seconds.is_finite()) {
            return Err(Error::Config(format!(
                "shift_seconds must be >= 0, got {}",
                self.shift_seconds
            )));
        }
        if !(self.target_rms > 0.0 && self.target_rms.is_finite()) {
            return Err(Error::Config(format!(
                "target_rms must be > 0, got {}",
                self.target_rms
            )));
        }
        if self.segment_len < 2 {
            return Err(Error::Config("segment_len must be at least 2".into()));
        }
        if self.spectrum_width == 0 || self.spectrum_width > self.segment_len {
            return Err(Error::Config(format!(
                "spectrum_width must be in 1..={}, got {}",
                self.segment_len, self.spectrum_width
            )));
        }
        Ok(())
    }

    /// True when the model input is the full-resolution spectrum.
    pub fn is_full_width(&self) -> bool {
        self.spectrum_width == self.segment_len
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

/// Non-negative magnitude spectrum. `bins[i]` holds the magnitude at
/// `(i + 1) * bin_hz`; the DC bin is never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub bins: Vec<f64>,
    pub bin_hz: f64,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn freq_of(&self, index: usize) -> f64 {
        (index + 1) as f64 * self.bin_hz
    }

    pub fn max(&self) -> f64 {
        self.bins.iter().copied().fold(0.0, f64::max)
    }

    /// CSV with header `bin,freq_hz,magnitude`; `bin` is the FFT bin number.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin,freq_hz,magnitude\n");
        for (i, m) in self.bins.iter().enumerate() {
            let _ = writeln!(out, "{},{},{}", i + 1, self.freq_of(i), m);
        }
        out
    }
}

/// Index of the first sample whose magnitude reaches `onset_fraction` of the peak.
pub fn detect_onset(clip: &AudioClip, cfg: &PreprocessConfig) -> Result<usize> {
    if clip.samples.is_empty() {
        return Err(Error::Empty("clip has no samples".into()));
    }
    let peak = clip.samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if peak <= 0.0 {
        return Err(Error::NoOnset);
    }
    let threshold = cfg.onset_fraction * peak;
    clip.samples
        .iter()
        .position(|s| s.abs() >= threshold)
        .ok_or(Error::NoOnset)
}

/// Cuts `segment_len` samples starting `shift_seconds` after the onset,
/// zero-padding whatever the clip cannot supply.
pub fn extract_segment(clip: &AudioClip, onset: usize, cfg: &PreprocessConfig) -> Segment {
    let shift = (cfg.shift_seconds * clip.sample_rate as f64).round() as usize;
    let start = onset.saturating_add(shift);
    let mut samples = vec![0.0; cfg.segment_len];
    if start < clip.samples.len() {
        let end = (start + cfg.segment_len).min(clip.samples.len());
        samples[..end - start].copy_from_slice(&clip.samples[start..end]);
    }
    Segment {
        samples,
        sample_rate: clip.sample_rate,
    }
}

pub fn rms(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    (samples.iter().map(|s| s * s).sum::<f64>() / samples.len() as f64).sqrt()
}

pub fn normalize_rms(seg: &Segment, cfg: &PreprocessConfig) -> Result<Segment> {
    let current = rms(&seg.samples);
    if current <= SILENCE_EPS {
        return Err(Error::SilentSegment { rms: current });
    }
    let gain = cfg.target_rms / current;
    Ok(Segment {
        samples: seg.samples.iter().map(|s| s * gain).collect(),
        sample_rate: seg.sample_rate,
    })
}

/// Symmetric Hamming window, `0.54 - 0.46 cos(2πk/(n-1))`.
pub fn hamming_window(n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::Argument(format!(
            "Hamming window needs n >= 2, got {n}"
        )));
    }
    let denom = (n - 1) as f64;
    Ok((0..n)
        .map(|k| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * k as f64 / denom).cos())
        .collect())
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn fft_plan(len: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(len))
}

/// Forward complex FFT of a real sequence zero-padded to `fft_len`.
pub fn real_fft(samples: &[f64], fft_len: usize) -> Vec<Complex<f64>> {
    let mut buf: Vec<Complex<f64>> = samples
        .iter()
        .map(|&s| Complex::new(s, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(fft_len)
        .collect();
    fft_plan(fft_len).process(&mut buf);
    buf
}

/// Windowed, zero-padded (2×) FFT magnitudes at bins 1..=len.
pub fn magnitude_spectrum(seg: &Segment) -> Spectrum {
    let n = seg.samples.len();
    let window = hamming_window(n.max(2)).expect("n >= 2");
    let windowed: Vec<f64> = seg
        .samples
        .iter()
        .zip(&window)
        .map(|(s, w)| s * w)
        .collect();
    let fft_len = 2 * n;
    let spectrum = real_fft(&windowed, fft_len);
    Spectrum {
        bins: spectrum[1..=n].iter().map(|c| c.norm()).collect(),
        bin_hz: seg.sample_rate as f64 / fft_len as f64,
    }
}

/// Scales so the largest bin is 1; an all-zero spectrum is returned as is.
pub fn normalize_spectrum(sp: &Spectrum) -> Spectrum {
    let max = sp.max();
    if max <= 0.0 {
        return sp.clone();
    }
    Spectrum {
        bins: sp.bins.iter().map(|b| b / max).collect(),
        bin_hz: sp.bin_hz,
    }
}

/// Max-pools a spectrum into `width` equal groups; the group maximum keeps
/// peak heights intact. Identity when `width` equals the input length.
pub fn pool_spectrum(sp: &Spectrum, width: usize) -> Spectrum {
    let n = sp.len();
    if width >= n {
        return sp.clone();
    }
    let mut bins = vec![0.0f64; width];
    for (i, &v) in sp.bins.iter().enumerate() {
        let g = i * width / n;
        bins[g] = bins[g].max(v);
    }
    Spectrum {
        bins,
        bin_hz: sp.bin_hz * n as f64 / width as f64,
    }
}

/// Onset → shifted segment → RMS normalization.
pub fn preprocess(clip: &AudioClip, cfg: &PreprocessConfig) -> Result<Segment> {
    if clip.sample_rate != CANONICAL_SAMPLE_RATE {
        return Err(Error::Unsupported(format!(
            "sample rate {} Hz (only {CANONICAL_SAMPLE_RATE} Hz is accepted; resample first)",
            clip.sample_rate
        )));
    }
    let onset = detect_onset(clip, cfg)?;
    let segment = extract_segment(clip, onset, cfg);
    normalize_rms(&segment, cfg)
}

/// Model-ready spectrum of a (normalized or augmented) segment.
pub fn segment_features(seg: &Segment, cfg: &PreprocessConfig) -> Spectrum {
    let full = normalize_spectrum(&magnitude_spectrum(seg));
    pool_spectrum(&full, cfg.spectrum_width)
}

/// Full chain from clip to model input.
pub fn clip_features(clip: &AudioClip, cfg: &PreprocessConfig) -> Result<Spectrum> {
    Ok(segment_features(&preprocess(clip, cfg)?, cfg))
}

/// Short-time magnitude spectra with axes.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    /// Frame centre times, seconds.
    pub times: Vec<f64>,
    /// Bin frequencies 0..=sr/2, Hz.
    pub freqs: Vec<f64>,
    /// `magnitudes[frame][bin]`.
    pub magnitudes: Vec<Vec<f64>>,
}

impl Spectrogram {
    /// Long-format CSV: `time_s,freq_hz,magnitude`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time_s,freq_hz,magnitude\n");
        for (t, row) in self.times.iter().zip(&self.magnitudes) {
            for (f, m) in self.freqs.iter().zip(row) {
                let _ = writeln!(out, "{t},{f},{m}");
            }
        }
        out
    }
}

pub fn spectrogram(clip: &AudioClip, frame: usize, hop: usize) -> Result<Spectrogram> {
    if frame < 2 || hop == 0 {
        return Err(Error::Argument(format!(
            "invalid spectrogram frame {frame} / hop {hop}"
        )));
    }
    if frame > clip.samples.len() {
        return Err(Error::Argument(format!(
            "frame {frame} longer than clip ({} samples)",
            clip.samples.len()
        )));
    }
    let window = hamming_window(frame)?;
    let sr = clip.sample_rate as f64;
    let n_frames = 1 + (clip.samples.len() - frame) / hop;
    let n_bins = frame / 2 + 1;
    let plan = fft_plan(frame);
    let mut buf = vec![Complex::new(0.0, 0.0); frame];
    let mut magnitudes = Vec::with_capacity(n_frames);
    let mut times = Vec::with_capacity(n_frames);
    for f in 0..n_frames {
        let start = f * hop;
        for (k, b) in buf.iter_mut().enumerate() {
            *b = Complex::new(clip.samples[start + k] * window[k], 0.0);
        }
        plan.process(&mut buf);
        magnitudes.push(buf[..n_bins].iter().map(|c| c.norm()).collect());
        times.push((start as f64 + frame as f64 / 2.0) / sr);
    }
    Ok(Spectrogram {
        times,
        freqs: (0..n_bins).map(|k| k as f64 * sr / frame as f64).collect(),
        magnitudes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use std::f64::consts::PI;

    fn clip(samples: Vec<f64>) -> AudioClip {
        AudioClip {
            samples,
            sample_rate: 44100,
        }
    }

    fn seg(samples: Vec<f64>) -> Segment {
        Segment {
            samples,
            sample_rate: 44100,
        }
    }

    #[test]
    fn onset_first_crossing() {
        let mut s = vec![0.0; 2000];
        s[1000] = 1.0;
        assert_eq!(detect_onset(&clip(s), &PreprocessConfig::default()).unwrap(), 1000);
        assert_eq!(
            detect_onset(&clip(vec![0.5; 10]), &PreprocessConfig::default()).unwrap(),
            0
        );
    }

    #[test]
    fn onset_of_silence_fails() {
        assert!(matches!(
            detect_onset(&clip(vec![0.0; 10]), &PreprocessConfig::default()),
            Err(Error::NoOnset)
        ));
    }

    #[test]
    fn segment_padding_at_last_sample() {
        let cfg = PreprocessConfig {
            shift_seconds: 0.0,
            ..Default::default()
        };
        let c = clip(vec![0.25; 100]);
        let s = extract_segment(&c, 99, &cfg);
        assert_eq!(s.samples.len(), SEGMENT_LEN);
        assert_eq!(s.samples[0], 0.25);
        assert!(s.samples[1..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn segment_is_raw_slice_when_long_enough() {
        let cfg = PreprocessConfig::default();
        let samples: Vec<f64> = (0..20000).map(|i| (i as f64 * 0.01).sin()).collect();
        let s = extract_segment(&clip(samples.clone()), 100, &cfg);
        let start = 100 + 3528;
        assert_eq!(&s.samples[..], &samples[start..start + SEGMENT_LEN]);
    }

    #[test]
    fn segment_past_end_is_all_zero() {
        let s = extract_segment(&clip(vec![1.0; 50]), 10, &PreprocessConfig::default());
        assert_eq!(s.samples.len(), SEGMENT_LEN);
        assert!(s.samples.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn rms_identities() {
        assert!((rms(&vec![-0.3; SEGMENT_LEN]) - 0.3).abs() < 1e-12);
        assert_eq!(rms(&vec![0.0; SEGMENT_LEN]), 0.0);
        // 100 whole cycles over the segment.
        let a = 0.7;
        let sine: Vec<f64> = (0..SEGMENT_LEN)
            .map(|n| a * (2.0 * PI * 100.0 * n as f64 / SEGMENT_LEN as f64).sin())
            .collect();
        assert!((rms(&sine) - a / 2f64.sqrt()).abs() < 1e-6);
    }

    #[test]
    fn normalize_rms_scales_by_ratio() {
        let cfg = PreprocessConfig::default();
        let s = seg(vec![0.5; 100]);
        let out = normalize_rms(&s, &cfg).unwrap();
        for (o, i) in out.samples.iter().zip(&s.samples) {
            assert!((o - i * 0.2).abs() < 1e-15);
        }
        let again = normalize_rms(&out, &cfg).unwrap();
        for (a, b) in again.samples.iter().zip(&out.samples) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(matches!(
            normalize_rms(&seg(vec![0.0; 100]), &cfg),
            Err(Error::SilentSegment { .. })
        ));
    }

    #[test]
    fn hamming_shape() {
        let w = hamming_window(9).unwrap();
        assert!((w[0] - 0.08).abs() < 1e-15);
        assert!((w[8] - 0.08).abs() < 1e-15);
        assert!((w[4] - 1.0).abs() < 1e-15);
        let w = hamming_window(SEGMENT_LEN).unwrap();
        for k in 0..SEGMENT_LEN {
            assert!((w[k] - w[SEGMENT_LEN - 1 - k]).abs() < 1e-12);
        }
        assert!(hamming_window(1).is_err());
    }

    #[test]
    fn zero_segment_zero_spectrum() {
        let sp = magnitude_spectrum(&seg(vec![0.0; SEGMENT_LEN]));
        assert_eq!(sp.len(), SEGMENT_LEN);
        assert!(sp.bins.iter().all(|&b| b == 0.0));
        assert_eq!(sp.bin_hz, 2.5);
        assert_eq!(normalize_spectrum(&sp), sp);
    }

    #[test]
    fn bin_aligned_sine_peaks_at_its_bin() {
        for k in [40usize, 1508, 3459, 8000] {
            let f = k as f64 * 2.5;
            let s: Vec<f64> = (0..SEGMENT_LEN)
                .map(|n| (2.0 * PI * f * n as f64 / 44100.0).sin())
                .collect();
            let sp = magnitude_spectrum(&seg(s));
            let argmax = sp
                .bins
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0;
            assert_eq!(argmax + 1, k);
            assert_eq!(sp.freq_of(argmax), f);
        }
    }

    #[test]
    fn normalize_spectrum_cases() {
        let sp = Spectrum {
            bins: vec![2.0, 4.0, 1.0],
            bin_hz: 2.5,
        };
        let n = normalize_spectrum(&sp);
        assert_eq!(n.bins, vec![0.5, 1.0, 0.25]);
        assert_eq!(normalize_spectrum(&n), n);
    }

    #[test]
    fn pooling_keeps_maxima() {
        let sp = Spectrum {
            bins: vec![0.1, 0.9, 0.2, 0.3, 1.0, 0.0],
            bin_hz: 2.5,
        };
        let p = pool_spectrum(&sp, 3);
        assert_eq!(p.bins, vec![0.9, 0.3, 1.0]);
        assert_eq!(p.bin_hz, 5.0);
        assert_eq!(pool_spectrum(&sp, 6), sp);
    }

    #[test]
    fn preprocess_rejects_other_rates() {
        let c = AudioClip {
            samples: vec![0.5; 20000],
            sample_rate: 48000,
        };
        assert!(matches!(
            preprocess(&c, &PreprocessConfig::default()),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn spectrogram_ridge_and_zero() {
        let f = 1000.0;
        let s: Vec<f64> = (0..44100)
            .map(|n| (2.0 * PI * f * n as f64 / 44100.0).sin())
            .collect();
        let sg = spectrogram(&clip(s), 1024, 512).unwrap();
        for row in &sg.magnitudes {
            let argmax = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0;
            assert!((sg.freqs[argmax] - f).abs() <= 44100.0 / 1024.0);
        }
        let z = spectrogram(&clip(vec![0.0; 4096]), 1024, 256).unwrap();
        assert!(z.magnitudes.iter().flatten().all(|&m| m == 0.0));
        assert!(spectrogram(&clip(vec![0.0; 100]), 1024, 256).is_err());
        assert!(spectrogram(&clip(vec![0.0; 4096]), 1024, 0).is_err());
    }

    #[test]
    fn deterministic_pipeline() {
        let mut rng = Rng::new(5);
        let s: Vec<f64> = (0..30000).map(|_| rng.gaussian(0.0, 0.2)).collect();
        let c = clip(s);
        let cfg = PreprocessConfig::default();
        let a = clip_features(&c, &cfg).unwrap();
        let b = clip_features(&c, &cfg).unwrap();
        assert_eq!(a, b);
        assert!((a.max() - 1.0).abs() < 1e-15);
    }
}
