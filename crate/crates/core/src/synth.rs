//! Synthetic coin-strike recordings built from resonance-mode tables.
//!
//! A strike is a short decaying white-noise burst followed by a sum of
//! exponentially damped sinusoids, one per resonance mode, over a weak
//! Gaussian noise floor. Genuine specimens jitter each mode's frequency and
//! level; counterfeits shift every mode by several percent and may lose
//! minor modes entirely.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::audio_io::{save_wav, AudioClip, DatasetManifest, ManifestEntry, Role, CANONICAL_SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonanceMode {
    pub freq_hz: f64,
    /// Level relative to the strongest mode, dB (amplitude, 20·log10).
    pub rel_amp_db: f64,
    pub decay_tau_s: f64,
}

impl ResonanceMode {
    /// Mode with the default decay: 0.30 s below 5 kHz, 0.15 s above.
    pub fn with_default_decay(freq_hz: f64, rel_amp_db: f64) -> Self {
        ResonanceMode {
            freq_hz,
            rel_amp_db,
            decay_tau_s: if freq_hz < 5000.0 { 0.30 } else { 0.15 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Strike {
    pub duration_s: f64,
    /// Burst peak relative to the dominant mode amplitude.
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoinProfile {
    pub name: String,
    pub modes: Vec<ResonanceMode>,
    pub strike: Strike,
    /// Standard deviation of the additive noise floor, relative to the dominant mode.
    pub noise_floor: f64,
    /// Length of the recorded ringing after the strike, seconds.
    pub ring_s: f64,
}

/// Resonance table of the 1 oz Australian Kangaroo silver coin.
pub const KANGAROO_MODES: [(f64, f64); 4] = [
    (3770.00, 0.00),
    (3505.62, -0.36),
    (8648.75, -6.78),
    (15258.12, -22.18),
];

/// Inter-specimen frequency spread of the Kangaroo modes, in the order of
/// [`KANGAROO_MODES`].
pub const KANGAROO_FREQ_SIGMA_HZ: [f64; 4] = [47.28, 55.07, 5.62, 7.33];

/// Inter-specimen level spread of the Kangaroo modes (dB), same order.
pub const KANGAROO_AMP_SIGMA_DB: [f64; 4] = [15.69, 17.45, 3.58, 2.75];

/// Cap applied to per-specimen level jitter; the rest of the measured
/// spread is recording-condition variation handled by augmentation.
pub const AMP_JITTER_CAP_DB: f64 = 6.0;

impl CoinProfile {
    /// Profile with default strike, noise floor and decays.
    pub fn from_table(name: &str, table: &[(f64, f64)]) -> Self {
        CoinProfile {
            name: name.to_string(),
            modes: table
                .iter()
                .map(|&(f, db)| ResonanceMode::with_default_decay(f, db))
                .collect(),
            strike: Strike {
                duration_s: 0.010,
                amplitude: 1.5,
            },
            noise_floor: 1e-4,
            ring_s: 0.6,
        }
    }

    pub fn kangaroo() -> Self {
        CoinProfile::from_table("kangaroo", &KANGAROO_MODES)
    }

    /// Second trainable class: Kangaroo modes ×0.8 with its own level pattern.
    /// Invented stand-in, not a measured coin.
    pub fn owl_surrogate() -> Self {
        let levels = [0.0, -6.0, -3.0, -12.0];
        let table: Vec<(f64, f64)> = KANGAROO_MODES
            .iter()
            .zip(levels)
            .map(|(&(f, _), db)| (f * 0.8, db))
            .collect();
        CoinProfile::from_table("owl", &table)
    }

    /// Untrained genuine class: Kangaroo modes ×1.25. Invented stand-in.
    pub fn philharmonic_surrogate() -> Self {
        let table: Vec<(f64, f64)> = KANGAROO_MODES
            .iter()
            .map(|&(f, db)| (f * 1.25, db))
            .collect();
        CoinProfile::from_table("philharmonic", &table)
    }

    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        let nyquist = sample_rate as f64 / 2.0;
        if self.modes.is_empty() {
            return Err(Error::Argument(format!("profile '{}' has no modes", self.name)));
        }
        for (i, m) in self.modes.iter().enumerate() {
            if !(m.freq_hz > 0.0 && m.freq_hz < nyquist) {
                return Err(Error::Argument(format!(
                    "profile '{}' mode {} at {} Hz is outside (0, {nyquist}) Hz",
                    self.name,
                    i + 1,
                    m.freq_hz
                )));
            }
            if !(m.decay_tau_s > 0.0) || !m.rel_amp_db.is_finite() {
                return Err(Error::Argument(format!(
                    "profile '{}' mode {} needs a positive decay and finite level",
                    self.name,
                    i + 1
                )));
            }
        }
        if !(self.strike.duration_s >= 0.0 && self.strike.amplitude >= 0.0) {
            return Err(Error::Argument(format!(
                "profile '{}' has a negative strike parameter",
                self.name
            )));
        }
        if !(self.noise_floor >= 0.0 && self.ring_s > 0.0) {
            return Err(Error::Argument(format!(
                "profile '{}' needs noise_floor >= 0 and ring_s > 0",
                self.name
            )));
        }
        Ok(())
    }

    /// Index of the strongest mode.
    pub fn dominant_mode(&self) -> usize {
        self.modes
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.rel_amp_db.total_cmp(&b.1.rel_amp_db).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }
}

/// Specimen-to-specimen variation and counterfeit construction parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerturbModel {
    /// Per-mode frequency jitter σ (Hz); missing entries mean no jitter.
    pub freq_jitter_sigma_hz: Vec<f64>,
    /// Per-mode level jitter σ (dB).
    pub amp_jitter_sigma_db: Vec<f64>,
    pub counterfeit_shift_fraction: f64,
    pub mode_drop_prob: f64,
    /// Level change σ (dB) applied to counterfeit modes.
    pub counterfeit_amp_sigma_db: f64,
    /// Physical coins per class in a corpus; every recording is a strike of
    /// one of them. 0 makes each recording a coin of its own.
    pub specimens_per_class: usize,
    /// Strike-to-strike frequency wobble of one specimen (Hz).
    pub strike_freq_sigma_hz: f64,
    /// Strike-to-strike level change of every mode of one specimen (dB).
    pub strike_amp_sigma_db: f64,
}

impl Default for PerturbModel {
    fn default() -> Self {
        PerturbModel {
            freq_jitter_sigma_hz: KANGAROO_FREQ_SIGMA_HZ.to_vec(),
            amp_jitter_sigma_db: KANGAROO_AMP_SIGMA_DB
                .iter()
                .map(|s| s.min(AMP_JITTER_CAP_DB))
                .collect(),
            counterfeit_shift_fraction: 0.08,
            mode_drop_prob: 0.2,
            counterfeit_amp_sigma_db: 6.0,
            specimens_per_class: 3,
            strike_freq_sigma_hz: 0.5,
            strike_amp_sigma_db: 1.5,
        }
    }
}

impl PerturbModel {
    /// No jitter at all; counterfeit parameters keep their defaults.
    pub fn none() -> Self {
        PerturbModel {
            freq_jitter_sigma_hz: Vec::new(),
            amp_jitter_sigma_db: Vec::new(),
            strike_freq_sigma_hz: 0.0,
            strike_amp_sigma_db: 0.0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = self
            .freq_jitter_sigma_hz
            .iter()
            .chain(&self.amp_jitter_sigma_db)
            .chain([
                &self.counterfeit_amp_sigma_db,
                &self.strike_freq_sigma_hz,
                &self.strike_amp_sigma_db,
            ]);
        for v in all {
            if !(*v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("jitter σ {v} must be finite and >= 0")));
            }
        }
        if !(self.counterfeit_shift_fraction > 0.0 && self.counterfeit_shift_fraction < 1.0) {
            return Err(Error::Config(format!(
                "counterfeit_shift_fraction must be in (0, 1), got {}",
                self.counterfeit_shift_fraction
            )));
        }
        if !(0.0..=1.0).contains(&self.mode_drop_prob) {
            return Err(Error::Config(format!(
                "mode_drop_prob must be in [0, 1], got {}",
                self.mode_drop_prob
            )));
        }
        Ok(())
    }

    /// Per-strike variation only, as a jitter model for [`synthesize`].
    pub fn strike_only(&self, modes: usize) -> PerturbModel {
        PerturbModel {
            freq_jitter_sigma_hz: vec![self.strike_freq_sigma_hz; modes],
            amp_jitter_sigma_db: vec![self.strike_amp_sigma_db; modes],
            ..self.clone()
        }
    }
}

/// One physical coin: the nominal profile with specimen jitter applied to
/// every mode's frequency and level.
pub fn specimen_of(profile: &CoinProfile, jitter: &PerturbModel, rng: &mut Rng) -> CoinProfile {
    let nyquist = CANONICAL_SAMPLE_RATE as f64 / 2.0;
    let modes = profile
        .modes
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let df = jitter.freq_jitter_sigma_hz.get(i).copied().unwrap_or(0.0);
            let da = jitter.amp_jitter_sigma_db.get(i).copied().unwrap_or(0.0);
            let freq = if df > 0.0 { rng.gaussian(m.freq_hz, df) } else { m.freq_hz };
            let db = if da > 0.0 { rng.gaussian(m.rel_amp_db, da) } else { m.rel_amp_db };
            ResonanceMode {
                freq_hz: freq.clamp(1.0, nyquist - 1.0),
                rel_amp_db: db,
                decay_tau_s: m.decay_tau_s,
            }
        })
        .collect();
    CoinProfile {
        modes,
        ..profile.clone()
    }
}

/// What was actually rendered into a synthetic clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub profile: String,
    pub sample_rate: u32,
    /// First sample of the strike burst.
    pub strike_index: usize,
    /// Modes after jitter, in profile order.
    pub modes: Vec<ResonanceMode>,
    /// Gain applied to bring the clip peak to 0.9.
    pub gain: f64,
    /// Index of the struck coin within its class pool, when pooled.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub specimen: Option<usize>,
}

const CLIP_PEAK: f64 = 0.9;

/// Renders one strike of `profile`, applying specimen jitter.
pub fn synthesize(
    profile: &CoinProfile,
    jitter: &PerturbModel,
    rng: &mut Rng,
    silence_prefix_s: f64,
) -> Result<(AudioClip, GroundTruth)> {
    let sr = CANONICAL_SAMPLE_RATE;
    profile.validate(sr)?;
    if !(silence_prefix_s >= 0.0) {
        return Err(Error::Argument(format!(
            "silence prefix {silence_prefix_s} s is negative"
        )));
    }
    let fs = sr as f64;
    let top_db = profile
        .modes
        .iter()
        .map(|m| m.rel_amp_db)
        .fold(f64::NEG_INFINITY, f64::max);

    let modes = specimen_of(profile, jitter, rng).modes;
    let phases: Vec<f64> = modes
        .iter()
        .map(|_| rng.uniform(0.0, 2.0 * std::f64::consts::PI))
        .collect();

    let prefix = (silence_prefix_s * fs).round() as usize;
    let ring = (profile.ring_s * fs).round() as usize;
    let strike_len = (profile.strike.duration_s * fs).round() as usize;
    let strike_tau = (profile.strike.duration_s / 3.0).max(1.0 / fs);
    let mut samples = vec![0.0; prefix + ring];

    for (mode, phase) in modes.iter().zip(&phases) {
        let amp = 10f64.powf((mode.rel_amp_db - top_db) / 20.0);
        let w = 2.0 * std::f64::consts::PI * mode.freq_hz;
        for (n, s) in samples[prefix..].iter_mut().enumerate() {
            let t = n as f64 / fs;
            *s += amp * (-t / mode.decay_tau_s).exp() * (w * t + phase).sin();
        }
    }
    for n in 0..strike_len.min(ring) {
        let t = n as f64 / fs;
        samples[prefix + n] +=
            profile.strike.amplitude * (-t / strike_tau).exp() * rng.uniform(-1.0, 1.0);
    }
    if profile.noise_floor > 0.0 {
        for s in samples.iter_mut() {
            *s += rng.gaussian(0.0, profile.noise_floor);
        }
    }
    let peak = samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    let gain = if peak > 0.0 { CLIP_PEAK / peak } else { 1.0 };
    samples.iter_mut().for_each(|s| *s *= gain);

    let clip = AudioClip::new(samples, sr)?;
    let truth = GroundTruth {
        profile: profile.name.clone(),
        sample_rate: sr,
        strike_index: prefix,
        modes,
        gain,
        specimen: None,
    };
    Ok((clip, truth))
}

/// A counterfeit design derived from a genuine profile: every mode moves by
/// a random ±[0.5, 1]·shift fraction, levels change, and non-dominant modes
/// may vanish.
pub fn counterfeit_of(profile: &CoinProfile, perturb: &PerturbModel, rng: &mut Rng) -> CoinProfile {
    let dominant = profile.dominant_mode();
    let mut modes = Vec::with_capacity(profile.modes.len());
    for (i, m) in profile.modes.iter().enumerate() {
        let dropped = rng.next_f64() < perturb.mode_drop_prob;
        let sign = if rng.next_f64() < 0.5 { -1.0 } else { 1.0 };
        let u = rng.uniform(0.5, 1.0) * perturb.counterfeit_shift_fraction;
        let level = rng.normal() * perturb.counterfeit_amp_sigma_db;
        if dropped && i != dominant {
            continue;
        }
        modes.push(ResonanceMode {
            freq_hz: m.freq_hz * (1.0 + sign * u),
            rel_amp_db: m.rel_amp_db + level,
            decay_tau_s: m.decay_tau_s,
        });
    }
    CoinProfile {
        name: format!("{}-counterfeit", profile.name),
        modes,
        ..profile.clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusCounts {
    /// Genuine training files per genuine class.
    pub train_per_class: usize,
    /// Genuine held-out files per genuine class.
    pub test_per_class: usize,
    pub counterfeit: usize,
    /// Genuine files of classes never used for training.
    pub unknown: usize,
}

impl Default for CorpusCounts {
    fn default() -> Self {
        CorpusCounts {
            train_per_class: 20,
            test_per_class: 10,
            counterfeit: 10,
            unknown: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSpec {
    pub genuine: Vec<CoinProfile>,
    pub unknown: Vec<CoinProfile>,
    pub counts: CorpusCounts,
    pub perturb: PerturbModel,
    pub silence_prefix_s: f64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            genuine: vec![CoinProfile::kangaroo(), CoinProfile::owl_surrogate()],
            unknown: vec![CoinProfile::philharmonic_surrogate()],
            counts: CorpusCounts::default(),
            perturb: PerturbModel::default(),
            silence_prefix_s: 0.25,
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        if self.genuine.len() < 2 {
            return Err(Error::Argument(
                "a corpus needs at least two genuine coin profiles".into(),
            ));
        }
        if self.counts.unknown > 0 && self.unknown.is_empty() {
            return Err(Error::Argument(
                "unknown-class files requested but no unknown profile given".into(),
            ));
        }
        let mut names: Vec<&str> = self
            .genuine
            .iter()
            .chain(&self.unknown)
            .map(|p| p.name.as_str())
            .collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Argument("profile names must be unique".into()));
        }
        for p in self.genuine.iter().chain(&self.unknown) {
            p.validate(CANONICAL_SAMPLE_RATE)?;
        }
        self.perturb.validate()
    }
}

/// One synthesized file, before anything touches the disk.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusItem {
    pub entry: ManifestEntry,
    pub clip: AudioClip,
    pub truth: GroundTruth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub path: PathBuf,
    pub role: Role,
    #[serde(flatten)]
    pub truth: GroundTruth,
}

/// Ground-truth sidecar written next to the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSidecar {
    pub seed: u64,
    pub files: Vec<TruthRecord>,
}

fn role_code(role: Role) -> u64 {
    match role {
        Role::Train => 1,
        Role::Test => 2,
        Role::Counterfeit => 3,
        Role::Unknown => 4,
    }
}

fn file_rng(seed: u64, role: Role, class: usize, index: usize) -> Rng {
    let stream = (role_code(role) << 48) | ((class as u64) << 24) | index as u64;
    Rng::new(derive_seed(seed, stream))
}

const SPECIMEN_STREAM: u64 = 5;

/// The coin struck for file `index` of a class: a member of the class's
/// specimen pool, or a fresh specimen when pooling is off.
fn specimen_for(
    spec: &CorpusSpec,
    seed: u64,
    profile: &CoinProfile,
    pool_key: u64,
    index: usize,
    rng: &mut Rng,
) -> (CoinProfile, Option<usize>) {
    let pool = spec.perturb.specimens_per_class;
    if pool == 0 {
        return (specimen_of(profile, &spec.perturb, rng), None);
    }
    let which = index % pool;
    let stream = (SPECIMEN_STREAM << 48) | (pool_key << 24) | which as u64;
    let mut specimen_rng = Rng::new(derive_seed(seed, stream));
    (specimen_of(profile, &spec.perturb, &mut specimen_rng), Some(which))
}

/// Generates every corpus clip in memory. Each file draws from its own
/// seed derived from `(seed, role, class, index)`; pooled specimens from
/// `(seed, class, specimen)`, so training and held-out files of a class
/// strike the same coins.
pub fn generate_corpus(spec: &CorpusSpec, seed: u64) -> Result<Vec<CorpusItem>> {
    spec.validate()?;
    let mut items = Vec::new();
    let mut push = |role: Role,
                    coin: &CoinProfile,
                    specimen: Option<usize>,
                    label: &str,
                    genuine: bool,
                    rng: &mut Rng,
                    idx: usize|
     -> Result<()> {
        let strike = spec.perturb.strike_only(coin.modes.len());
        let (clip, mut truth) = synthesize(coin, &strike, rng, spec.silence_prefix_s)?;
        truth.specimen = specimen;
        items.push(CorpusItem {
            entry: ManifestEntry {
                path: PathBuf::from(role.as_str()).join(format!("{label}_{idx:03}.wav")),
                label: label.to_string(),
                genuine,
                role: Some(role),
            },
            clip,
            truth,
        });
        Ok(())
    };

    for (role, count) in [
        (Role::Train, spec.counts.train_per_class),
        (Role::Test, spec.counts.test_per_class),
    ] {
        for (c, profile) in spec.genuine.iter().enumerate() {
            for i in 0..count {
                let mut rng = file_rng(seed, role, c, i);
                let (coin, which) = specimen_for(spec, seed, profile, c as u64, i, &mut rng);
                push(role, &coin, which, &profile.name, true, &mut rng, i)?;
            }
        }
    }
    for i in 0..spec.counts.counterfeit {
        let c = i % spec.genuine.len();
        let source = &spec.genuine[c];
        let mut rng = file_rng(seed, Role::Counterfeit, c, i);
        let fake = counterfeit_of(source, &spec.perturb, &mut rng);
        let coin = specimen_of(&fake, &spec.perturb, &mut rng);
        push(Role::Counterfeit, &coin, None, &source.name, false, &mut rng, i)?;
    }
    for i in 0..spec.counts.unknown {
        let c = i % spec.unknown.len().max(1);
        let profile = &spec.unknown[c];
        let mut rng = file_rng(seed, Role::Unknown, c, i);
        let pool_key = (spec.genuine.len() + c) as u64;
        let (coin, which) = specimen_for(spec, seed, profile, pool_key, i / spec.unknown.len(), &mut rng);
        push(Role::Unknown, &coin, which, &profile.name, true, &mut rng, i)?;
    }
    Ok(items)
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TRUTH_FILE: &str = "ground_truth.json";

/// Writes the corpus WAV files, `manifest.json` and `ground_truth.json`
/// under `out_dir`.
pub fn build_corpus(spec: &CorpusSpec, seed: u64, out_dir: &Path) -> Result<DatasetManifest> {
    let items = generate_corpus(spec, seed)?;
    for role in Role::ALL {
        let dir = out_dir.join(role.as_str());
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let mut files = Vec::with_capacity(items.len());
    let mut truths = Vec::with_capacity(items.len());
    for item in items {
        save_wav(&item.clip, out_dir.join(&item.entry.path))?;
        truths.push(TruthRecord {
            path: item.entry.path.clone(),
            role: item.entry.role.expect("corpus entries carry roles"),
            truth: item.truth,
        });
        files.push(item.entry);
    }
    let manifest = DatasetManifest {
        labels: spec
            .genuine
            .iter()
            .chain(&spec.unknown)
            .map(|p| p.name.clone())
            .collect(),
        files,
        seed,
        base_dir: out_dir.to_path_buf(),
    };
    manifest.validate()?;
    let path = out_dir.join(MANIFEST_FILE);
    fs::write(&path, manifest.to_json()).map_err(|e| Error::io(&path, e))?;
    let sidecar = TruthSidecar { seed, files: truths };
    let path = out_dir.join(TRUTH_FILE);
    let text = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::rms;

    #[test]
    fn counterfeit_identity_when_disabled() {
        let p = CoinProfile::kangaroo();
        let perturb = PerturbModel {
            counterfeit_shift_fraction: 0.0,
            mode_drop_prob: 0.0,
            counterfeit_amp_sigma_db: 0.0,
            ..PerturbModel::none()
        };
        let fake = counterfeit_of(&p, &perturb, &mut Rng::new(3));
        assert_eq!(fake.modes, p.modes);
    }

    #[test]
    fn counterfeit_shift_bounds() {
        let p = CoinProfile::kangaroo();
        let perturb = PerturbModel {
            mode_drop_prob: 0.0,
            ..Default::default()
        };
        for seed in 0..200 {
            let fake = counterfeit_of(&p, &perturb, &mut Rng::new(seed));
            assert_eq!(fake.modes.len(), p.modes.len());
            for (m, src) in fake.modes.iter().zip(&p.modes) {
                let rel = (m.freq_hz / src.freq_hz - 1.0).abs();
                assert!((0.04 - 1e-12..=0.08 + 1e-12).contains(&rel), "rel {rel}");
            }
            assert!((fake.modes[0].freq_hz - 3770.0).abs() >= 0.04 * 3770.0 - 1e-9);
        }
    }

    #[test]
    fn dominant_mode_never_dropped() {
        let p = CoinProfile::kangaroo();
        let perturb = PerturbModel {
            mode_drop_prob: 1.0,
            ..Default::default()
        };
        for seed in 0..50 {
            let fake = counterfeit_of(&p, &perturb, &mut Rng::new(seed));
            assert_eq!(fake.modes.len(), 1);
            assert!((fake.modes[0].freq_hz / 3770.0 - 1.0).abs() <= 0.08 + 1e-12);
        }
    }

    #[test]
    fn invalid_mode_named_in_error() {
        let mut p = CoinProfile::kangaroo();
        p.modes[2].freq_hz = 30000.0;
        let err = synthesize(&p, &PerturbModel::none(), &mut Rng::new(1), 0.1).unwrap_err();
        assert!(err.to_string().contains("mode 3"), "{err}");
    }

    #[test]
    fn fixed_seed_is_bit_identical() {
        let p = CoinProfile::kangaroo();
        let a = synthesize(&p, &PerturbModel::default(), &mut Rng::new(8), 0.2).unwrap();
        let b = synthesize(&p, &PerturbModel::default(), &mut Rng::new(8), 0.2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ringing_decays() {
        let mut p = CoinProfile::kangaroo();
        p.strike.amplitude = 0.0;
        p.noise_floor = 0.0;
        let (clip, truth) = synthesize(&p, &PerturbModel::none(), &mut Rng::new(2), 0.1).unwrap();
        let tenth = 4410;
        let s = truth.strike_index;
        let first = rms(&clip.samples[s..s + tenth]);
        let second = rms(&clip.samples[s + tenth..s + 2 * tenth]);
        assert!(second < first, "{second} >= {first}");
    }

    #[test]
    fn corpus_counts_and_roles() {
        let items = generate_corpus(&CorpusSpec::default(), 7).unwrap();
        assert_eq!(items.len(), 80);
        let count = |r: Role| items.iter().filter(|i| i.entry.role == Some(r)).count();
        assert_eq!(count(Role::Train), 40);
        assert_eq!(count(Role::Test), 20);
        assert_eq!(count(Role::Counterfeit), 10);
        assert_eq!(count(Role::Unknown), 10);
        assert!(items
            .iter()
            .filter(|i| i.entry.role == Some(Role::Counterfeit))
            .all(|i| !i.entry.genuine));
    }

    #[test]
    fn corpus_needs_two_genuine_profiles() {
        let spec = CorpusSpec {
            genuine: vec![CoinProfile::kangaroo()],
            ..Default::default()
        };
        assert!(matches!(generate_corpus(&spec, 1), Err(Error::Argument(_))));
    }
}
