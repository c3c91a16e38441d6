//! Per-role verification metrics over an annotated corpus.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use super::{verify_spectrum, ModelBundle, VerificationReport};
use crate::audio_io::{AudioClip, ManifestEntry, Role};
use crate::dsp;
use crate::error::{Error, Result};

/// One verified corpus file.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub entry: ManifestEntry,
    pub report: VerificationReport,
    /// Classifier output regardless of the authenticity decision.
    pub predicted_label: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DistanceStats {
    pub min: f64,
    pub median: f64,
    pub mean: f64,
    pub max: f64,
}

impl DistanceStats {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        };
        Some(DistanceStats {
            min: v[0],
            median,
            mean: v.iter().sum::<f64>() / n as f64,
            max: v[n - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoleMetrics {
    pub role: Role,
    pub count: usize,
    pub accepted: usize,
    /// Files whose classifier output matches their label (genuine roles).
    pub label_correct: usize,
    pub distances: DistanceStats,
}

impl RoleMetrics {
    pub fn acceptance_rate(&self) -> f64 {
        self.accepted as f64 / self.count as f64
    }

    pub fn rejection_rate(&self) -> f64 {
        1.0 - self.acceptance_rate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub threshold: f64,
    pub roles: Vec<RoleMetrics>,
    pub records: Vec<EvalRecord>,
}

impl EvalReport {
    pub fn role(&self, role: Role) -> Option<&RoleMetrics> {
        self.roles.iter().find(|m| m.role == role)
    }

    /// Share of counterfeits accepted as authentic.
    pub fn false_accept_rate(&self) -> Option<f64> {
        self.role(Role::Counterfeit).map(RoleMetrics::acceptance_rate)
    }

    /// Share of held-out genuine coins rejected.
    pub fn false_reject_rate(&self) -> Option<f64> {
        self.role(Role::Test).map(RoleMetrics::rejection_rate)
    }

    /// Classifier accuracy on held-out genuine coins, independent of the
    /// authenticity gate.
    pub fn classifier_accuracy(&self) -> Option<f64> {
        self.role(Role::Test)
            .map(|m| m.label_correct as f64 / m.count as f64)
    }

    /// Median counterfeit distance over median held-out genuine distance.
    pub fn separation_ratio(&self) -> Option<f64> {
        let g = self.role(Role::Test)?.distances.median;
        let c = self.role(Role::Counterfeit)?.distances.median;
        Some(if g > 0.0 { c / g } else { f64::INFINITY })
    }

    /// One row per role.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "role,count,accepted,acceptance_rate,label_correct,dist_min,dist_median,dist_mean,dist_max\n",
        );
        for m in &self.roles {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                m.role.as_str(),
                m.count,
                m.accepted,
                m.acceptance_rate(),
                m.label_correct,
                m.distances.min,
                m.distances.median,
                m.distances.mean,
                m.distances.max
            );
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "threshold {:.4}", self.threshold);
        let _ = writeln!(
            out,
            "{:<12} {:>5} {:>9} {:>8} {:>12} {:>12} {:>12}",
            "role", "n", "accepted", "rate", "d_median", "d_min", "d_max"
        );
        for m in &self.roles {
            let _ = writeln!(
                out,
                "{:<12} {:>5} {:>9} {:>8.3} {:>12.4} {:>12.4} {:>12.4}",
                m.role.as_str(),
                m.count,
                m.accepted,
                m.acceptance_rate(),
                m.distances.median,
                m.distances.min,
                m.distances.max
            );
        }
        let pct = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{:.1}%", 100.0 * v));
        let _ = writeln!(out, "false-accept rate (counterfeit): {}", pct(self.false_accept_rate()));
        let _ = writeln!(out, "false-reject rate (held-out genuine): {}", pct(self.false_reject_rate()));
        if let Some(u) = self.role(Role::Unknown) {
            let _ = writeln!(out, "unknown-class rejection: {:.1}%", 100.0 * u.rejection_rate());
        }
        let _ = writeln!(out, "classifier accuracy (held-out): {}", pct(self.classifier_accuracy()));
        if let Some(r) = self.separation_ratio() {
            let _ = write!(out, "median counterfeit / genuine distance: {r:.1}");
        }
        out
    }
}

/// Verifies every role-annotated file. Files are processed in parallel;
/// records come back in input order.
pub fn evaluate(bundle: &ModelBundle, files: &[(ManifestEntry, AudioClip)]) -> Result<EvalReport> {
    if let Some((e, _)) = files.iter().find(|(e, _)| e.role.is_none()) {
        return Err(Error::Manifest(format!(
            "{} has no role; evaluation needs role annotations",
            e.path.display()
        )));
    }
    let test_count = files.iter().filter(|(e, _)| e.role == Some(Role::Test)).count();
    if test_count == 0 {
        return Err(Error::Manifest("no held-out genuine files (role \"test\")".into()));
    }
    let records: Vec<EvalRecord> = files
        .par_iter()
        .map(|(entry, clip)| -> Result<EvalRecord> {
            let ctx = |e: Error| e.context(format!("evaluating {}", entry.path.display()));
            let sp = dsp::clip_features(clip, &bundle.preprocess).map_err(ctx)?;
            let report = verify_spectrum(&sp, bundle).map_err(ctx)?;
            let latent = bundle.autoencoder.encode(&sp).map_err(ctx)?;
            let (idx, _) = bundle.classifier.classify(&latent).map_err(ctx)?;
            Ok(EvalRecord {
                entry: entry.clone(),
                report,
                predicted_label: bundle.classifier.labels[idx].clone(),
            })
        })
        .collect::<Result<_>>()?;
    let roles = Role::ALL
        .iter()
        .filter_map(|&role| {
            let rs: Vec<&EvalRecord> = records.iter().filter(|r| r.entry.role == Some(role)).collect();
            let distances: Vec<f64> = rs.iter().map(|r| r.report.distance).collect();
            Some(RoleMetrics {
                role,
                count: rs.len(),
                accepted: rs.iter().filter(|r| r.report.authentic).count(),
                label_correct: rs
                    .iter()
                    .filter(|r| r.entry.genuine && r.predicted_label == r.entry.label)
                    .count(),
                distances: DistanceStats::of(&distances)?,
            })
        })
        .collect();
    Ok(EvalReport {
        threshold: bundle.threshold.threshold,
        roles,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats_even_and_odd() {
        let s = DistanceStats::of(&[3.0, 1.0, 2.0]).unwrap();
        assert_eq!((s.min, s.median, s.mean, s.max), (1.0, 2.0, 2.0, 3.0));
        assert_eq!(DistanceStats::of(&[1.0, 4.0]).unwrap().median, 2.5);
        assert!(DistanceStats::of(&[]).is_none());
    }
}
