//! Flat INI-style configuration for the command-line tool.
//!
//! ```text
//! # comments start with '#' or ';'
//! seed = 7
//!
//! [preprocess]        onset_fraction, shift_seconds, segment_len, target_rms, spectrum_width
//! [matching]          w_f, w_a, penalty_per_unmatched, min_height_fraction,
//!                     min_separation_bins, prominence_mad_factor
//! [augment]           coeffs (comma list), noise_sigma, variants_per_coeff
//! [train]             epochs, batch_size, learning_rate, shuffle
//! [synth]             train_per_class, test_per_class, counterfeit, unknown,
//!                     silence_prefix_s, freq_jitter_sigma_hz, amp_jitter_sigma_db,
//!                     counterfeit_shift_fraction, mode_drop_prob, counterfeit_amp_sigma_db
//! [profile NAME]      role (genuine | unknown), modes (freq:dB[:tau], ...),
//!                     strike_duration_s, strike_amplitude, noise_floor, ring_s
//! ```
//!
//! Any `[profile ...]` section replaces the built-in coin profiles. Unknown
//! sections and keys are errors.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::augment::AugmentConfig;
use crate::dsp::PreprocessConfig;
use crate::error::{Error, Result};
use crate::models::PipelineConfig;
use crate::nn::TrainConfig;
use crate::peaks::MatchConfig;
use crate::synth::{CoinProfile, CorpusCounts, CorpusSpec, PerturbModel, ResonanceMode};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CliConfig {
    pub seed: Option<u64>,
    pub preprocess: PreprocessConfig,
    pub matching: MatchConfig,
    pub augment: AugmentConfig,
    pub train: TrainConfig,
    pub corpus: CorpusSpec,
}

impl CliConfig {
    pub fn validate(&self) -> Result<()> {
        self.pipeline().validate()?;
        self.corpus.validate()
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            preprocess: self.preprocess.clone(),
            matching: self.matching.clone(),
            augment: self.augment.clone(),
            train: self.train.clone(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        parse_config(&text).map_err(|e| e.context(format!("reading config {}", path.display())))
    }
}

struct Entry {
    key: String,
    value: String,
    line: usize,
}

struct Section {
    name: String,
    line: usize,
    entries: Vec<Entry>,
}

fn split_sections(text: &str) -> Result<Vec<Section>> {
    let mut sections = vec![Section {
        name: String::new(),
        line: 0,
        entries: Vec::new(),
    }];
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let s = raw.trim();
        if s.is_empty() || s.starts_with('#') || s.starts_with(';') {
            continue;
        }
        if let Some(rest) = s.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| Error::Config(format!("line {line}: unterminated section header")))?;
            let name = name.split_whitespace().collect::<Vec<_>>().join(" ");
            if sections.iter().any(|sec| sec.name == name) {
                return Err(Error::Config(format!("line {line}: duplicate section [{name}]")));
            }
            sections.push(Section {
                name,
                line,
                entries: Vec::new(),
            });
            continue;
        }
        let (key, value) = s
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {line}: expected `key = value`")))?;
        let key = key.trim().to_string();
        if key.is_empty() {
            return Err(Error::Config(format!("line {line}: empty key")));
        }
        let current = sections.last_mut().expect("root section");
        if current.entries.iter().any(|e| e.key == key) {
            return Err(Error::Config(format!("line {line}: duplicate key `{key}`")));
        }
        current.entries.push(Entry {
            key,
            value: value.trim().to_string(),
            line,
        });
    }
    Ok(sections)
}

/// Converts `raw` into a JSON value shaped like `like`.
fn coerce(raw: &str, like: &Value, line: usize, key: &str) -> Result<Value> {
    let bad = |what: &str| Error::Config(format!("line {line}: `{key}` expects {what}, got `{raw}`"));
    match like {
        Value::Bool(_) => match raw {
            "true" | "yes" | "on" | "1" => Ok(Value::Bool(true)),
            "false" | "no" | "off" | "0" => Ok(Value::Bool(false)),
            _ => Err(bad("a boolean")),
        },
        Value::Number(n) => {
            if n.is_f64() {
                let v: f64 = raw.parse().map_err(|_| bad("a number"))?;
                serde_json::Number::from_f64(v).map(Value::Number).ok_or_else(|| bad("a finite number"))
            } else {
                let v: u64 = raw.parse().map_err(|_| bad("a non-negative integer"))?;
                Ok(Value::from(v))
            }
        }
        Value::Array(items) => {
            let elem = items.first().cloned().unwrap_or(Value::from(0.0));
            let parts: Vec<&str> = raw
                .trim_start_matches('[')
                .trim_end_matches(']')
                .split(',')
                .map(str::trim)
                .filter(|p| !p.is_empty())
                .collect();
            parts
                .into_iter()
                .map(|p| coerce(p, &elem, line, key))
                .collect::<Result<Vec<_>>>()
                .map(Value::Array)
        }
        Value::String(_) => Ok(Value::String(raw.to_string())),
        _ => Err(bad("a supported value")),
    }
}

/// Overrides fields of `base` from a section's entries; keys not present on
/// `base` are rejected.
fn apply<T: Serialize + DeserializeOwned>(base: &T, section: &str, entries: &[&Entry]) -> Result<T> {
    let mut obj: Map<String, Value> = match serde_json::to_value(base) {
        Ok(Value::Object(m)) => m,
        _ => unreachable!("config structs serialize to objects"),
    };
    for e in entries {
        let like = obj.get(&e.key).ok_or_else(|| {
            Error::Config(format!("line {}: unknown key `{}` in [{section}]", e.line, e.key))
        })?;
        let v = coerce(&e.value, like, e.line, &e.key)?;
        obj.insert(e.key.clone(), v);
    }
    serde_json::from_value(Value::Object(obj)).map_err(|e| Error::Config(format!("[{section}]: {e}")))
}

fn parse_modes(raw: &str, line: usize) -> Result<Vec<ResonanceMode>> {
    raw.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            let nums: Vec<f64> = p
                .split(':')
                .map(|x| x.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Config(format!("line {line}: bad mode `{p}`, expected freq:dB[:tau]")))?;
            match nums[..] {
                [f, db] => Ok(ResonanceMode::with_default_decay(f, db)),
                [f, db, tau] => Ok(ResonanceMode {
                    freq_hz: f,
                    rel_amp_db: db,
                    decay_tau_s: tau,
                }),
                _ => Err(Error::Config(format!(
                    "line {line}: bad mode `{p}`, expected freq:dB[:tau]"
                ))),
            }
        })
        .collect()
}

fn parse_profile(name: &str, sec: &Section) -> Result<(CoinProfile, bool)> {
    let mut profile = CoinProfile::from_table(name, &[]);
    let mut genuine = true;
    let num = |e: &Entry| {
        e.value
            .parse::<f64>()
            .map_err(|_| Error::Config(format!("line {}: `{}` expects a number", e.line, e.key)))
    };
    for e in &sec.entries {
        match e.key.as_str() {
            "role" => {
                genuine = match e.value.as_str() {
                    "genuine" => true,
                    "unknown" => false,
                    other => {
                        return Err(Error::Config(format!(
                            "line {}: profile role must be genuine or unknown, got `{other}`",
                            e.line
                        )))
                    }
                }
            }
            "modes" => profile.modes = parse_modes(&e.value, e.line)?,
            "strike_duration_s" => profile.strike.duration_s = num(e)?,
            "strike_amplitude" => profile.strike.amplitude = num(e)?,
            "noise_floor" => profile.noise_floor = num(e)?,
            "ring_s" => profile.ring_s = num(e)?,
            _ => {
                return Err(Error::Config(format!(
                    "line {}: unknown key `{}` in [profile {name}]",
                    e.line, e.key
                )))
            }
        }
    }
    if profile.modes.is_empty() {
        return Err(Error::Config(format!(
            "line {}: [profile {name}] has no modes",
            sec.line
        )));
    }
    Ok((profile, genuine))
}

pub fn parse_config(text: &str) -> Result<CliConfig> {
    let mut cfg = CliConfig::default();
    let mut profiles: Vec<(CoinProfile, bool)> = Vec::new();
    for sec in split_sections(text)? {
        let entries: Vec<&Entry> = sec.entries.iter().collect();
        match sec.name.as_str() {
            "" => {
                for e in entries {
                    match e.key.as_str() {
                        "seed" => {
                            cfg.seed = Some(e.value.parse().map_err(|_| {
                                Error::Config(format!("line {}: seed must be a non-negative integer", e.line))
                            })?)
                        }
                        _ => {
                            return Err(Error::Config(format!(
                                "line {}: unknown top-level key `{}`",
                                e.line, e.key
                            )))
                        }
                    }
                }
            }
            "preprocess" => cfg.preprocess = apply(&cfg.preprocess, "preprocess", &entries)?,
            "matching" => cfg.matching = apply(&cfg.matching, "matching", &entries)?,
            "augment" => cfg.augment = apply(&cfg.augment, "augment", &entries)?,
            "train" => {
                if let Some(e) = entries.iter().find(|e| e.key == "seed") {
                    return Err(Error::Config(format!(
                        "line {}: set the seed at top level or with --seed",
                        e.line
                    )));
                }
                cfg.train = apply(&cfg.train, "train", &entries)?
            }
            "synth" => {
                let counts_keys = ["train_per_class", "test_per_class", "counterfeit", "unknown"];
                let (counts, rest): (Vec<&Entry>, Vec<&Entry>) =
                    entries.into_iter().partition(|e| counts_keys.contains(&e.key.as_str()));
                let (prefix, perturb): (Vec<&Entry>, Vec<&Entry>) =
                    rest.into_iter().partition(|e| e.key == "silence_prefix_s");
                cfg.corpus.counts = apply::<CorpusCounts>(&cfg.corpus.counts, "synth", &counts)?;
                cfg.corpus.perturb = apply::<PerturbModel>(&cfg.corpus.perturb, "synth", &perturb)?;
                if let Some(e) = prefix.first() {
                    cfg.corpus.silence_prefix_s = e.value.parse().map_err(|_| {
                        Error::Config(format!("line {}: silence_prefix_s expects a number", e.line))
                    })?;
                }
            }
            other => match other.strip_prefix("profile ") {
                Some(name) if !name.is_empty() => profiles.push(parse_profile(name, &sec)?),
                _ => {
                    return Err(Error::Config(format!(
                        "line {}: unknown section [{other}]",
                        sec.line
                    )))
                }
            },
        }
    }
    if !profiles.is_empty() {
        cfg.corpus.genuine = profiles.iter().filter(|p| p.1).map(|p| p.0.clone()).collect();
        cfg.corpus.unknown = profiles.into_iter().filter(|p| !p.1).map(|p| p.0).collect();
    }
    Ok(cfg)
}
