//! The spectrum autoencoder, its anomaly threshold, the latent-space coin
//! classifier, and the verification decision that ties them together.

mod bundle;
mod eval;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

pub use bundle::{decode_bundle, encode_bundle, load_bundle, save_bundle, BUNDLE_MAGIC, BUNDLE_VERSION};
pub use eval::{evaluate, DistanceStats, EvalRecord, EvalReport, RoleMetrics};

use crate::audio_io::AudioClip;
use crate::augment::{augment_segment, AugmentConfig};
use crate::dsp::{self, PreprocessConfig, Spectrum, SEGMENT_LEN};
use crate::error::{Error, Result};
use crate::nn::{self, Activation, LayerSpec, Network, Targets, TrainConfig, TrainHistory};
use crate::peaks::{find_peaks, set_distance, MatchConfig, PeakSet};
use crate::rng::{derive_seed, Rng};

pub const HIDDEN_WIDTHS: [usize; 2] = [1024, 512];
pub const LATENT_DIM: usize = 128;
pub const CLASSIFIER_HIDDEN: usize = 64;
pub const DROPOUT: f64 = 0.1;

/// Layer widths of the autoencoder for a given input width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AutoencoderSpec {
    pub input: usize,
    pub hidden1: usize,
    pub hidden2: usize,
    pub latent: usize,
}

impl AutoencoderSpec {
    /// 8820 → 1024 → 512 → 128 at full width; narrower inputs scale every
    /// width by the same ratio (never below 8 units).
    pub fn for_width(width: usize) -> Self {
        let scale = |h: usize| {
            if width >= SEGMENT_LEN {
                h
            } else {
                ((h as f64 * width as f64 / SEGMENT_LEN as f64).round() as usize).max(8)
            }
        };
        AutoencoderSpec {
            input: width,
            hidden1: scale(HIDDEN_WIDTHS[0]),
            hidden2: scale(HIDDEN_WIDTHS[1]),
            latent: scale(LATENT_DIM),
        }
    }

    /// Encoder: ReLU throughout, dropout on the first hidden layer. Decoder
    /// mirrors it and ends in a linear layer.
    pub fn layers(&self) -> Vec<LayerSpec> {
        vec![
            LayerSpec::new(self.input, self.hidden1, Activation::Relu, DROPOUT),
            LayerSpec::new(self.hidden1, self.hidden2, Activation::Relu, 0.0),
            LayerSpec::new(self.hidden2, self.latent, Activation::Relu, 0.0),
            LayerSpec::new(self.latent, self.hidden2, Activation::Relu, 0.0),
            LayerSpec::new(self.hidden2, self.hidden1, Activation::Relu, DROPOUT),
            LayerSpec::new(self.hidden1, self.input, Activation::Linear, 0.0),
        ]
    }
}

/// Number of layers that make up the encoder half.
pub const ENCODER_DEPTH: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct Autoencoder {
    pub net: Network,
}

impl Autoencoder {
    pub fn new(spec: AutoencoderSpec, rng: &mut Rng) -> Result<Self> {
        Ok(Autoencoder {
            net: Network::new(&spec.layers(), rng)?,
        })
    }

    pub fn from_network(net: Network) -> Result<Self> {
        if net.layers.len() != 2 * ENCODER_DEPTH || net.input_dim() != net.output_dim() {
            return Err(Error::Shape(format!(
                "autoencoder needs {} layers with matching input/output, got {} layers {}→{}",
                2 * ENCODER_DEPTH,
                net.layers.len(),
                net.input_dim(),
                net.output_dim()
            )));
        }
        Ok(Autoencoder { net })
    }

    pub fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn latent_dim(&self) -> usize {
        self.net.layers[ENCODER_DEPTH - 1].outputs
    }

    fn check_input(&self, sp: &Spectrum) -> Result<()> {
        if sp.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "spectrum of {} bins for an autoencoder expecting {}",
                sp.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Latent code of a spectrum (eval mode).
    pub fn encode(&self, sp: &Spectrum) -> Result<Vec<f64>> {
        Ok(self.encode_many(std::slice::from_ref(sp))?.remove(0))
    }

    pub fn encode_many(&self, spectra: &[Spectrum]) -> Result<Vec<Vec<f64>>> {
        for sp in spectra {
            self.check_input(sp)?;
        }
        let xs: Vec<Vec<f64>> = spectra.iter().map(|s| s.bins.clone()).collect();
        self.net.predict_prefix(&xs, ENCODER_DEPTH)
    }

    /// Eval-mode reconstruction, clamped at zero.
    pub fn reconstruct(&self, sp: &Spectrum) -> Result<Spectrum> {
        Ok(self.reconstruct_many(std::slice::from_ref(sp))?.remove(0))
    }

    pub fn reconstruct_many(&self, spectra: &[Spectrum]) -> Result<Vec<Spectrum>> {
        for sp in spectra {
            self.check_input(sp)?;
        }
        let xs: Vec<Vec<f64>> = spectra.iter().map(|s| s.bins.clone()).collect();
        let out = self.net.predict_many(&xs)?;
        Ok(out
            .into_iter()
            .zip(spectra)
            .map(|(bins, sp)| Spectrum {
                bins: bins.into_iter().map(|v| v.max(0.0)).collect(),
                bin_hz: sp.bin_hz,
            })
            .collect())
    }
}

/// Trains an autoencoder on genuine spectra with MSE.
pub fn train_autoencoder(spectra: &[Spectrum], cfg: &TrainConfig) -> Result<(Autoencoder, TrainHistory)> {
    if spectra.is_empty() {
        return Err(Error::Argument("no spectra to train the autoencoder on".into()));
    }
    let width = spectra[0].len();
    if let Some(bad) = spectra.iter().find(|s| s.len() != width) {
        return Err(Error::Shape(format!(
            "mixed spectrum widths {} and {}",
            width,
            bad.len()
        )));
    }
    let mut init_rng = Rng::new(derive_seed(cfg.seed, 0xAE));
    let mut ae = Autoencoder::new(AutoencoderSpec::for_width(width), &mut init_rng)?;
    let xs: Vec<Vec<f64>> = spectra.iter().map(|s| s.bins.clone()).collect();
    let mut rng = Rng::new(derive_seed(cfg.seed, 0xAE + 1));
    let history = nn::train(&mut ae.net, &xs, Targets::Vectors(&xs), cfg, &mut rng)?;
    Ok((ae, history))
}

/// Peak sets and distance between a spectrum and its reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub struct PeakComparison {
    pub distance: f64,
    pub original: PeakSet,
    pub reconstructed: PeakSet,
    /// Reconstruction after clamping and max normalization.
    pub reconstruction: Spectrum,
}

/// Compares peaks of `sp` with those of its (re-normalized) reconstruction.
pub fn compare_peaks(sp: &Spectrum, recon: &Spectrum, matching: &MatchConfig) -> PeakComparison {
    let recon = dsp::normalize_spectrum(recon);
    let original = find_peaks(sp, matching);
    let reconstructed = find_peaks(&recon, matching);
    PeakComparison {
        distance: set_distance(&original, &reconstructed, matching),
        original,
        reconstructed,
        reconstruction: recon,
    }
}

pub fn peak_distances(ae: &Autoencoder, spectra: &[Spectrum], matching: &MatchConfig) -> Result<Vec<f64>> {
    let recons = ae.reconstruct_many(spectra)?;
    Ok(spectra
        .iter()
        .zip(&recons)
        .map(|(sp, r)| compare_peaks(sp, r, matching).distance)
        .collect())
}

/// Anomaly threshold `μ + 3σ` over peak distances (population σ).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdModel {
    pub mu_d: f64,
    pub sigma_d: f64,
    pub threshold: f64,
}

impl ThresholdModel {
    pub fn from_distances(distances: &[f64]) -> Result<Self> {
        if distances.len() < 2 {
            return Err(Error::Argument(format!(
                "threshold calibration needs at least 2 distances, got {}",
                distances.len()
            )));
        }
        if distances.iter().any(|d| !d.is_finite()) {
            return Err(Error::Argument("non-finite peak distance".into()));
        }
        let n = distances.len() as f64;
        let mu_d = distances.iter().sum::<f64>() / n;
        let sigma_d = (distances.iter().map(|d| (d - mu_d).powi(2)).sum::<f64>() / n).sqrt();
        Ok(ThresholdModel {
            mu_d,
            sigma_d,
            threshold: mu_d + 3.0 * sigma_d,
        })
    }

    /// Distances at or below the threshold are authentic.
    pub fn accepts(&self, distance: f64) -> bool {
        distance <= self.threshold
    }
}

pub fn calibrate_threshold(ae: &Autoencoder, spectra: &[Spectrum], matching: &MatchConfig) -> Result<ThresholdModel> {
    if spectra.len() < 2 {
        return Err(Error::Argument(format!(
            "threshold calibration needs at least 2 spectra, got {}",
            spectra.len()
        )));
    }
    ThresholdModel::from_distances(&peak_distances(ae, spectra, matching)?)
}

/// Coin-type classifier on the autoencoder's latent code.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub net: Network,
    pub labels: Vec<String>,
}

impl Classifier {
    /// latent → 64 (ReLU) → one logit per class.
    pub fn layers(latent: usize, classes: usize) -> Vec<LayerSpec> {
        vec![
            LayerSpec::new(latent, CLASSIFIER_HIDDEN, Activation::Relu, 0.0),
            LayerSpec::new(CLASSIFIER_HIDDEN, classes, Activation::Linear, 0.0),
        ]
    }

    /// Class probabilities for one latent vector.
    pub fn probabilities(&self, latent: &[f64]) -> Result<Vec<f64>> {
        Ok(nn::softmax(&self.net.predict(latent)?))
    }

    /// Most probable label and its probability.
    pub fn classify(&self, latent: &[f64]) -> Result<(usize, f64)> {
        let probs = self.probabilities(latent)?;
        let (idx, p) = probs
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, p)| if p > best.1 { (i, p) } else { best });
        Ok((idx, p))
    }
}

/// Trains the classifier on frozen-encoder latents.
pub fn train_classifier(
    ae: &Autoencoder,
    spectra: &[Spectrum],
    labels: &[usize],
    label_names: &[String],
    cfg: &TrainConfig,
) -> Result<(Classifier, TrainHistory)> {
    if spectra.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} spectra but {} labels",
            spectra.len(),
            labels.len()
        )));
    }
    let mut present: Vec<usize> = labels.to_vec();
    present.sort_unstable();
    present.dedup();
    if present.len() < 2 || label_names.len() < 2 {
        return Err(Error::Argument(format!(
            "classifier needs at least two classes, got {}",
            present.len()
        )));
    }
    if let Some(bad) = labels.iter().find(|&&l| l >= label_names.len()) {
        return Err(Error::Argument(format!("label index {bad} has no name")));
    }
    let latents = ae.encode_many(spectra)?;
    let mut init_rng = Rng::new(derive_seed(cfg.seed, 0xC1));
    let mut net = Network::new(&Classifier::layers(ae.latent_dim(), label_names.len()), &mut init_rng)?;
    let mut rng = Rng::new(derive_seed(cfg.seed, 0xC1 + 1));
    let history = nn::train(&mut net, &latents, Targets::Labels(labels), cfg, &mut rng)?;
    Ok((
        Classifier {
            net,
            labels: label_names.to_vec(),
        },
        history,
    ))
}

/// Everything needed to verify a recording.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub autoencoder: Autoencoder,
    pub classifier: Classifier,
    pub threshold: ThresholdModel,
    pub preprocess: PreprocessConfig,
    pub matching: MatchConfig,
}

/// Configuration snapshot stored in a bundle and hashed for compatibility checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigSnapshot {
    pub preprocess: PreprocessConfig,
    pub matching: MatchConfig,
}

impl ConfigSnapshot {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn hash(&self) -> [u8; 32] {
        use sha2::{Digest, Sha256};
        Sha256::digest(self.to_json().as_bytes()).into()
    }
}

impl ModelBundle {
    pub fn labels(&self) -> &[String] {
        &self.classifier.labels
    }

    pub fn snapshot(&self) -> ConfigSnapshot {
        ConfigSnapshot {
            preprocess: self.preprocess.clone(),
            matching: self.matching.clone(),
        }
    }

    pub fn config_hash(&self) -> [u8; 32] {
        self.snapshot().hash()
    }

    /// Fails with [`Error::Compatibility`] unless the given configuration
    /// hashes to the one the bundle was trained with.
    pub fn check_compatible(&self, preprocess: &PreprocessConfig, matching: &MatchConfig) -> Result<()> {
        let theirs = ConfigSnapshot {
            preprocess: preprocess.clone(),
            matching: matching.clone(),
        }
        .hash();
        if theirs != self.config_hash() {
            return Err(Error::Compatibility(format!(
                "bundle was trained with {} but the caller uses {}",
                self.snapshot().to_json(),
                ConfigSnapshot {
                    preprocess: preprocess.clone(),
                    matching: matching.clone(),
                }
                .to_json()
            )));
        }
        Ok(())
    }

    /// Matching parameters adjusted to the bundle's spectrum width.
    pub fn effective_matching(&self) -> MatchConfig {
        self.matching
            .for_width(self.preprocess.spectrum_width, self.preprocess.segment_len)
    }

    pub fn is_full_width(&self) -> bool {
        self.preprocess.is_full_width()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub distance: f64,
    pub threshold: f64,
    pub authentic: bool,
    pub label: Option<String>,
    pub confidence: Option<f64>,
    pub original_peaks: PeakSet,
    pub reconstructed_peaks: PeakSet,
}

#[derive(Serialize)]
struct ReportLine<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    file: Option<&'a str>,
    distance: f64,
    threshold: f64,
    authentic: bool,
    label: Option<&'a str>,
    confidence: Option<f64>,
}

impl VerificationReport {
    /// Single-line JSON record with keys distance, threshold, authentic,
    /// label, confidence (and file when given).
    pub fn to_json_line(&self, file: Option<&str>) -> String {
        serde_json::to_string(&ReportLine {
            file,
            distance: self.distance,
            threshold: self.threshold,
            authentic: self.authentic,
            label: self.label.as_deref(),
            confidence: self.confidence,
        })
        .expect("report serializes")
    }

    pub fn verdict(&self) -> String {
        match (&self.label, self.confidence) {
            (Some(label), Some(p)) if self.authentic => {
                format!("authentic: {label} (confidence {p:.3})")
            }
            _ if self.authentic => "authentic".to_string(),
            _ => "counterfeit (unrecognized)".to_string(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.verdict());
        let _ = writeln!(
            out,
            "  peak distance {:.4} (threshold {:.4})",
            self.distance, self.threshold
        );
        let fmt = |set: &PeakSet| {
            set.peaks
                .iter()
                .map(|p| format!("{:.2} Hz @ {:.3}", p.freq_hz, p.amplitude))
                .collect::<Vec<_>>()
                .join(", ")
        };
        let _ = writeln!(out, "  original peaks:      {}", fmt(&self.original_peaks));
        let _ = write!(out, "  reconstructed peaks: {}", fmt(&self.reconstructed_peaks));
        out
    }
}

/// Decision for a model-ready spectrum.
pub fn verify_spectrum(sp: &Spectrum, bundle: &ModelBundle) -> Result<VerificationReport> {
    let recon = bundle.autoencoder.reconstruct(sp)?;
    let cmp = compare_peaks(sp, &recon, &bundle.effective_matching());
    let authentic = bundle.threshold.accepts(cmp.distance);
    let (label, confidence) = if authentic {
        let latent = bundle.autoencoder.encode(sp)?;
        let (idx, p) = bundle.classifier.classify(&latent)?;
        (Some(bundle.classifier.labels[idx].clone()), Some(p))
    } else {
        (None, None)
    };
    Ok(VerificationReport {
        distance: cmp.distance,
        threshold: bundle.threshold.threshold,
        authentic,
        label,
        confidence,
        original_peaks: cmp.original,
        reconstructed_peaks: cmp.reconstructed,
    })
}

/// Full chain: preprocess → spectrum → reconstruct → peak distance →
/// threshold → (classifier when authentic).
pub fn verify(clip: &AudioClip, bundle: &ModelBundle) -> Result<VerificationReport> {
    let sp = dsp::clip_features(clip, &bundle.preprocess)
        .map_err(|e| e.context("preprocessing recording"))?;
    verify_spectrum(&sp, bundle)
}

/// [`verify`] after checking the caller's configuration against the bundle.
pub fn verify_with_config(
    clip: &AudioClip,
    bundle: &ModelBundle,
    preprocess: &PreprocessConfig,
    matching: &MatchConfig,
) -> Result<VerificationReport> {
    bundle.check_compatible(preprocess, matching)?;
    verify(clip, bundle)
}

/// Settings for the whole training run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PipelineConfig {
    pub preprocess: PreprocessConfig,
    pub matching: MatchConfig,
    pub augment: AugmentConfig,
    pub train: TrainConfig,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.preprocess.validate()?;
        self.matching.validate()?;
        self.augment.validate()?;
        self.train.validate()
    }
}

/// Training outputs beyond the bundle itself.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingRun {
    pub bundle: ModelBundle,
    pub autoencoder_history: TrainHistory,
    pub classifier_history: TrainHistory,
    /// Augmented training spectra with their label indices.
    pub spectra: Vec<Spectrum>,
    pub labels: Vec<usize>,
    /// Peak distance of every training spectrum.
    pub train_distances: Vec<f64>,
}

/// Preprocesses and augments labelled genuine recordings into model inputs.
/// Labels are indexed in sorted order of their names.
pub fn training_spectra(
    clips: &[(AudioClip, String)],
    cfg: &PipelineConfig,
) -> Result<(Vec<Spectrum>, Vec<usize>, Vec<String>)> {
    let mut names: Vec<String> = clips.iter().map(|(_, l)| l.clone()).collect();
    names.sort();
    names.dedup();
    let mut spectra = Vec::with_capacity(clips.len() * cfg.augment.variants_per_segment());
    let mut labels = Vec::with_capacity(spectra.capacity());
    for (i, (clip, label)) in clips.iter().enumerate() {
        let seg = dsp::preprocess(clip, &cfg.preprocess)
            .map_err(|e| e.context(format!("training recording #{i} ({label})")))?;
        let mut rng = Rng::new(derive_seed(cfg.train.seed, 0xA0_0000 + i as u64));
        let idx = names.binary_search(label).expect("label collected above");
        for aug in augment_segment(&seg, &cfg.augment, &mut rng) {
            spectra.push(dsp::segment_features(&aug, &cfg.preprocess));
            labels.push(idx);
        }
    }
    Ok((spectra, labels, names))
}

/// Augmentation → autoencoder → threshold → classifier.
pub fn train_pipeline(clips: &[(AudioClip, String)], cfg: &PipelineConfig) -> Result<TrainingRun> {
    cfg.validate()?;
    if clips.is_empty() {
        return Err(Error::Argument("no genuine training recordings".into()));
    }
    let (spectra, labels, names) = training_spectra(clips, cfg)?;
    if names.len() < 2 {
        return Err(Error::Argument(format!(
            "classifier needs at least two coin types, training data has {}",
            names.len()
        )));
    }
    let (autoencoder, autoencoder_history) = train_autoencoder(&spectra, &cfg.train)?;
    let matching = cfg
        .matching
        .for_width(cfg.preprocess.spectrum_width, cfg.preprocess.segment_len);
    let train_distances = peak_distances(&autoencoder, &spectra, &matching)?;
    let threshold = ThresholdModel::from_distances(&train_distances)?;
    let (classifier, classifier_history) = train_classifier(&autoencoder, &spectra, &labels, &names, &cfg.train)?;
    Ok(TrainingRun {
        bundle: ModelBundle {
            autoencoder,
            classifier,
            threshold,
            preprocess: cfg.preprocess.clone(),
            matching: cfg.matching.clone(),
        },
        autoencoder_history,
        classifier_history,
        spectra,
        labels,
        train_distances,
    })
}
