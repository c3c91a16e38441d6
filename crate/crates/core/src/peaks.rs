//! Resonance peak extraction and the weighted peak-matching distance.

use std::cmp::Ordering;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dsp::Spectrum;
use crate::error::{Error, Result};

/// Upper bound on the number of peaks kept per spectrum.
pub const MAX_PEAKS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub freq_hz: f64,
    pub amplitude: f64,
    /// FFT bin number, so `freq_hz == bin * bin_hz`.
    pub bin: usize,
}

/// At most [`MAX_PEAKS`] peaks in descending amplitude order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PeakSet {
    pub peaks: Vec<Peak>,
}

impl PeakSet {
    pub fn len(&self) -> usize {
        self.peaks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.peaks.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("freq_hz,amplitude,bin\n");
        for p in &self.peaks {
            let _ = writeln!(out, "{},{},{}", p.freq_hz, p.amplitude, p.bin);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MatchConfig {
    /// Weight of the squared frequency difference (Hz²).
    pub w_f: f64,
    /// Weight of the squared normalized-amplitude difference.
    pub w_a: f64,
    /// Added once per peak of cardinality difference between the two sets.
    pub penalty_per_unmatched: f64,
    pub min_height_fraction: f64,
    pub min_separation_bins: usize,
    pub prominence_mad_factor: f64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            w_f: 2.0,
            w_a: 0.5,
            penalty_per_unmatched: 100.0,
            min_height_fraction: 0.15,
            min_separation_bins: 150,
            prominence_mad_factor: 5.0,
        }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("w_f", self.w_f),
            ("w_a", self.w_a),
            ("penalty_per_unmatched", self.penalty_per_unmatched),
            ("min_height_fraction", self.min_height_fraction),
            ("prominence_mad_factor", self.prominence_mad_factor),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.min_separation_bins == 0 {
            return Err(Error::Config("min_separation_bins must be positive".into()));
        }
        Ok(())
    }

    /// Rescales the bin separation for a spectrum of `width` bins pooled
    /// from `full_width`, so the gate keeps the same width in Hz.
    pub fn for_width(&self, width: usize, full_width: usize) -> MatchConfig {
        let mut cfg = self.clone();
        if width < full_width {
            let scaled = self.min_separation_bins as f64 * width as f64 / full_width as f64;
            cfg.min_separation_bins = (scaled.round() as usize).max(1);
        }
        cfg
    }
}

pub(crate) fn median_of(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Median absolute deviation from the median.
pub fn mad(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Argument("MAD of an empty sequence".into()));
    }
    let mut v = values.to_vec();
    let med = median_of(&mut v);
    let mut dev: Vec<f64> = values.iter().map(|x| (x - med).abs()).collect();
    Ok(median_of(&mut dev))
}

/// Topographic prominence of the sample at `i`: its height minus the higher
/// of the lowest points between it and the nearest strictly higher sample on
/// each side (or the array edge).
pub fn prominence(bins: &[f64], i: usize) -> f64 {
    let h = bins[i];
    let mut left_min = h;
    for &v in bins[..i].iter().rev() {
        if v > h {
            break;
        }
        left_min = left_min.min(v);
    }
    let mut right_min = h;
    for &v in &bins[i + 1..] {
        if v > h {
            break;
        }
        right_min = right_min.min(v);
    }
    h - left_min.max(right_min)
}

fn by_amplitude_desc(a: &Peak, b: &Peak) -> Ordering {
    b.amplitude
        .total_cmp(&a.amplitude)
        .then_with(|| a.bin.cmp(&b.bin))
}

/// Local maxima passing the height, prominence and separation gates; the
/// ten tallest survivors in descending amplitude.
pub fn find_peaks(sp: &Spectrum, cfg: &MatchConfig) -> PeakSet {
    let bins = &sp.bins;
    let n = bins.len();
    if n < 3 {
        return PeakSet::default();
    }
    let max = sp.max();
    if max <= 0.0 {
        return PeakSet::default();
    }
    let min_height = cfg.min_height_fraction * max;
    let min_prominence = cfg.prominence_mad_factor * mad(bins).expect("non-empty");

    let mut candidates: Vec<Peak> = (1..n - 1)
        .filter(|&i| bins[i] > bins[i - 1] && bins[i] >= bins[i + 1])
        .filter(|&i| bins[i] >= min_height)
        .filter(|&i| prominence(bins, i) >= min_prominence)
        .map(|i| Peak {
            freq_hz: sp.freq_of(i),
            amplitude: bins[i],
            bin: i + 1,
        })
        .collect();
    candidates.sort_by(by_amplitude_desc);

    let mut kept: Vec<Peak> = Vec::new();
    for c in candidates {
        if kept
            .iter()
            .all(|k| k.bin.abs_diff(c.bin) >= cfg.min_separation_bins)
        {
            kept.push(c);
            if kept.len() == MAX_PEAKS {
                break;
            }
        }
    }
    PeakSet { peaks: kept }
}

/// Weighted Euclidean distance between two peaks.
pub fn pair_distance(p: &Peak, q: &Peak, cfg: &MatchConfig) -> f64 {
    let df = p.freq_hz - q.freq_hz;
    let da = p.amplitude - q.amplitude;
    (cfg.w_f * df * df + cfg.w_a * da * da).sqrt()
}

/// Sum over original peaks of the distance to the nearest reconstructed
/// peak (reuse allowed, ties to the lower bin), plus a penalty per peak of
/// cardinality difference.
pub fn set_distance(original: &PeakSet, reconstructed: &PeakSet, cfg: &MatchConfig) -> f64 {
    let matched: f64 = if reconstructed.is_empty() {
        0.0
    } else {
        original
            .peaks
            .iter()
            .map(|p| {
                reconstructed
                    .peaks
                    .iter()
                    .map(|q| (pair_distance(p, q, cfg), q.bin))
                    .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
                    .map(|(d, _)| d)
                    .unwrap_or(0.0)
            })
            .sum()
    };
    let unmatched = original.len().abs_diff(reconstructed.len());
    matched + cfg.penalty_per_unmatched * unmatched as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn peak(freq_hz: f64, amplitude: f64) -> Peak {
        Peak {
            freq_hz,
            amplitude,
            bin: (freq_hz / 2.5).round() as usize,
        }
    }

    #[test]
    fn mad_cases() {
        assert_eq!(mad(&[3.0; 7]).unwrap(), 0.0);
        assert_eq!(mad(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap(), 1.0);
        assert_eq!(mad(&[42.0]).unwrap(), 0.0);
        // even length: median 2.5, deviations {1.5, .5, .5, 1.5} → 1.0
        assert_eq!(mad(&[1.0, 2.0, 3.0, 4.0]).unwrap(), 1.0);
        assert!(matches!(mad(&[]), Err(Error::Argument(_))));
    }

    #[test]
    fn prominence_topographic() {
        let b = [0.0, 3.0, 1.0, 5.0, 2.0, 4.0, 0.5];
        // 3.0: left edge valley 0, right side stops at 5.0 with min 1 → 3 - 1
        assert_eq!(prominence(&b, 1), 2.0);
        // global max: both sides run to the edges, higher edge valley 0.5
        assert_eq!(prominence(&b, 3), 4.5);
        // 4.0: left stops at 5.0 with min 2, right edge min 0.5 → 4 - 2
        assert_eq!(prominence(&b, 5), 2.0);
    }

    #[test]
    fn flat_spectrum_has_no_peaks() {
        let sp = Spectrum {
            bins: vec![0.5; 1000],
            bin_hz: 2.5,
        };
        assert!(find_peaks(&sp, &MatchConfig::default()).is_empty());
        let zero = Spectrum {
            bins: vec![0.0; 1000],
            bin_hz: 2.5,
        };
        assert!(find_peaks(&zero, &MatchConfig::default()).is_empty());
    }

    fn bump(bins: &mut [f64], centre: usize, height: f64) {
        for (i, b) in bins.iter_mut().enumerate() {
            let x = (i as f64 - centre as f64) / 4.0;
            *b += height / (1.0 + x * x);
        }
    }

    #[test]
    fn separation_keeps_taller_peak() {
        let mut bins = vec![0.0; 2000];
        bump(&mut bins, 800, 1.0);
        bump(&mut bins, 900, 0.8);
        let sp = Spectrum { bins, bin_hz: 2.5 };
        let set = find_peaks(&sp, &MatchConfig::default());
        assert_eq!(set.len(), 1);
        assert_eq!(set.peaks[0].bin, 801);
    }

    #[test]
    fn keeps_ten_tallest_sorted() {
        let mut bins = vec![0.0; 6000];
        for k in 0..14 {
            bump(&mut bins, 200 + k * 400, 1.0 - k as f64 * 0.05);
        }
        let sp = Spectrum { bins, bin_hz: 2.5 };
        let set = find_peaks(&sp, &MatchConfig::default());
        assert_eq!(set.len(), MAX_PEAKS);
        for w in set.peaks.windows(2) {
            assert!(w[0].amplitude >= w[1].amplitude);
        }
        assert_eq!(set.peaks[0].bin, 201);
    }

    #[test]
    fn height_gate() {
        let mut bins = vec![0.0; 3000];
        bump(&mut bins, 500, 1.0);
        bump(&mut bins, 1500, 0.1);
        let sp = Spectrum { bins, bin_hz: 2.5 };
        assert_eq!(find_peaks(&sp, &MatchConfig::default()).len(), 1);
    }

    #[test]
    fn pair_distance_values() {
        let cfg = MatchConfig::default();
        let p = peak(1000.0, 0.7);
        assert_eq!(pair_distance(&p, &p, &cfg), 0.0);
        let d = pair_distance(&peak(1000.0, 0.5), &peak(1001.0, 0.5), &cfg);
        assert!((d - 2f64.sqrt()).abs() < 1e-12);
        let d = pair_distance(&peak(1000.0, 0.9), &peak(1010.0, 0.7), &cfg);
        assert!((d - 200.02f64.sqrt()).abs() < 1e-9);
        assert!((d - 14.1428).abs() < 1e-4);
    }

    #[test]
    fn set_distance_cases() {
        let cfg = MatchConfig::default();
        let a = PeakSet {
            peaks: vec![peak(1000.0, 1.0), peak(3000.0, 0.4)],
        };
        assert_eq!(set_distance(&a, &a, &cfg), 0.0);
        let one = PeakSet {
            peaks: vec![peak(1000.0, 1.0)],
        };
        let empty = PeakSet::default();
        assert_eq!(set_distance(&one, &empty, &cfg), 100.0);
        assert_eq!(set_distance(&empty, &one, &cfg), 100.0);
        assert_eq!(set_distance(&empty, &empty, &cfg), 0.0);
        // Both originals reuse the single reconstructed peak.
        let d = set_distance(&a, &one, &cfg);
        let expected = pair_distance(&a.peaks[1], &one.peaks[0], &cfg) + 100.0;
        assert!((d - expected).abs() < 1e-12);
    }

    #[test]
    fn frequency_term_dominates_80_percent() {
        // With equal raw differences the weighted squares split 2.0 : 0.5.
        let cfg = MatchConfig::default();
        let share = cfg.w_f / (cfg.w_f + cfg.w_a);
        assert!((share - 0.8).abs() < 1e-15);
    }

    #[test]
    fn separation_rescales_with_width() {
        let cfg = MatchConfig::default().for_width(1024, 8820);
        assert_eq!(cfg.min_separation_bins, 17);
        assert_eq!(MatchConfig::default().for_width(8820, 8820).min_separation_bins, 150);
    }
}
