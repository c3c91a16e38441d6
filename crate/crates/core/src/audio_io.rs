//! WAV ingestion/export and dataset manifests.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Canonical sample rate. 8820 samples span exactly 0.2 s at this rate.
pub const CANONICAL_SAMPLE_RATE: u32 = 44_100;

/// Mono audio with its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        let clip = AudioClip {
            samples,
            sample_rate,
        };
        clip.validate()?;
        Ok(clip)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 {
            return Err(Error::Argument("sample rate must be positive".into()));
        }
        if self.samples.is_empty() {
            return Err(Error::Empty("clip has no samples".into()));
        }
        if let Some(i) = self.samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::Argument(format!("non-finite sample at index {i}")));
        }
        Ok(())
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

const WAVE_FORMAT_PCM: u16 = 1;
const WAVE_FORMAT_IEEE_FLOAT: u16 = 3;
const WAVE_FORMAT_EXTENSIBLE: u16 = 0xFFFE;

struct Fmt {
    format: u16,
    channels: u16,
    sample_rate: u32,
    bits: u16,
}

fn le_u16(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn le_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

/// Decodes a RIFF/WAVE byte buffer (PCM16 or float32, mono or stereo).
pub fn decode_wav(bytes: &[u8]) -> Result<AudioClip> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::Format("missing RIFF/WAVE header".into()));
    }
    let mut fmt: Option<Fmt> = None;
    let mut data: Option<&[u8]> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = le_u32(bytes, pos + 4) as usize;
        let body_start = pos + 8;
        let body_end = body_start
            .checked_add(size)
            .ok_or_else(|| Error::Format("chunk size overflow".into()))?;
        if body_end > bytes.len() {
            return Err(Error::Format(format!(
                "chunk '{}' truncated: declares {size} bytes, {} available",
                String::from_utf8_lossy(id),
                bytes.len() - body_start
            )));
        }
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(Error::Format("fmt chunk shorter than 16 bytes".into()));
                }
                let mut format = le_u16(body, 0);
                if format == WAVE_FORMAT_EXTENSIBLE {
                    if body.len() < 26 {
                        return Err(Error::Format("extensible fmt chunk too short".into()));
                    }
                    // The sub-format GUID starts with the plain format tag.
                    format = le_u16(body, 24);
                }
                fmt = Some(Fmt {
                    format,
                    channels: le_u16(body, 2),
                    sample_rate: le_u32(body, 4),
                    bits: le_u16(body, 14),
                });
            }
            b"data" => data = Some(body),
            _ => {}
        }
        // Chunks are word aligned.
        pos = body_end + (size & 1);
    }
    let fmt = fmt.ok_or_else(|| Error::Format("no fmt chunk".into()))?;
    let data = data.ok_or_else(|| Error::Format("no data chunk".into()))?;

    if fmt.channels != 1 && fmt.channels != 2 {
        return Err(Error::Unsupported(format!("{} channels", fmt.channels)));
    }
    if fmt.sample_rate == 0 {
        return Err(Error::Format("sample rate is zero".into()));
    }
    let bytes_per_sample = match (fmt.format, fmt.bits) {
        (WAVE_FORMAT_PCM, 16) => 2,
        (WAVE_FORMAT_IEEE_FLOAT, 32) => 4,
        (f, b) => {
            return Err(Error::Unsupported(format!(
                "format tag {f} with {b} bits per sample"
            )))
        }
    };
    let frame = bytes_per_sample * fmt.channels as usize;
    if data.is_empty() {
        return Err(Error::Empty("data chunk is empty".into()));
    }
    if data.len() % frame != 0 {
        return Err(Error::Format(format!(
            "data chunk of {} bytes is not a whole number of {frame}-byte frames",
            data.len()
        )));
    }
    let decode = |chunk: &[u8]| -> f64 {
        if bytes_per_sample == 2 {
            i16::from_le_bytes([chunk[0], chunk[1]]) as f64 / 32768.0
        } else {
            f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]) as f64
        }
    };
    let samples: Vec<f64> = data
        .chunks_exact(frame)
        .map(|f| {
            if fmt.channels == 1 {
                decode(f)
            } else {
                (decode(&f[..bytes_per_sample]) + decode(&f[bytes_per_sample..])) / 2.0
            }
        })
        .collect();
    if samples.iter().any(|s| !s.is_finite()) {
        return Err(Error::Format("non-finite float sample".into()));
    }
    Ok(AudioClip {
        samples,
        sample_rate: fmt.sample_rate,
    })
}

pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_wav(&bytes)
}

/// Encodes a clip as mono 16-bit PCM.
pub fn encode_wav(clip: &AudioClip) -> Result<Vec<u8>> {
    if clip.samples.is_empty() {
        return Err(Error::Empty("cannot write an empty clip".into()));
    }
    clip.validate()?;
    let data_len = clip.samples.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&WAVE_FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&clip.sample_rate.to_le_bytes());
    out.extend_from_slice(&(clip.sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in &clip.samples {
        let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    Ok(out)
}

pub fn save_wav(clip: &AudioClip, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_wav(clip)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// What a manifest entry is used for. Corpora produced by the synthesizer tag
/// every file; hand-written manifests may omit the role.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Train,
    Test,
    Counterfeit,
    Unknown,
}

impl Role {
    pub const ALL: [Role; 4] = [Role::Train, Role::Test, Role::Counterfeit, Role::Unknown];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Train => "train",
            Role::Test => "test",
            Role::Counterfeit => "counterfeit",
            Role::Unknown => "unknown",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub label: String,
    pub genuine: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<Role>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub labels: Vec<String>,
    pub files: Vec<ManifestEntry>,
    pub seed: u64,
    /// Directory relative paths resolve against; not serialized.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl DatasetManifest {
    /// Checks label membership and path uniqueness.
    pub fn validate(&self) -> Result<()> {
        let declared: HashSet<&str> = self.labels.iter().map(String::as_str).collect();
        if declared.len() != self.labels.len() {
            return Err(Error::Manifest("duplicate label in declared label set".into()));
        }
        let mut seen = HashSet::new();
        for entry in &self.files {
            if !declared.contains(entry.label.as_str()) {
                return Err(Error::Manifest(format!(
                    "label '{}' of {} is not declared",
                    entry.label,
                    entry.path.display()
                )));
            }
            if !seen.insert(&entry.path) {
                return Err(Error::Manifest(format!(
                    "duplicate path {}",
                    entry.path.display()
                )));
            }
        }
        Ok(())
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        if entry.path.is_absolute() {
            entry.path.clone()
        } else {
            self.base_dir.join(&entry.path)
        }
    }

    pub fn with_role(&self, role: Role) -> impl Iterator<Item = &ManifestEntry> {
        self.files.iter().filter(move |e| e.role == Some(role))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}

/// Parses a manifest document without touching the file system.
pub fn parse_manifest(text: &str) -> Result<DatasetManifest> {
    let manifest: DatasetManifest =
        serde_json::from_str(text).map_err(|e| Error::Manifest(e.to_string()))?;
    manifest.validate()?;
    Ok(manifest)
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut manifest = parse_manifest(&text)?;
    manifest.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let missing: Vec<String> = manifest
        .files
        .iter()
        .map(|e| manifest.resolve(e))
        .filter(|p| !p.is_file())
        .map(|p| p.display().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Manifest(format!(
            "missing files: {}",
            missing.join(", ")
        )));
    }
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pcm16_bytes(channels: u16, frames: &[i16]) -> Vec<u8> {
        let mut b = Vec::new();
        let data_len = frames.len() * 2;
        b.extend_from_slice(b"RIFF");
        b.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
        b.extend_from_slice(b"WAVEfmt ");
        b.extend_from_slice(&16u32.to_le_bytes());
        b.extend_from_slice(&1u16.to_le_bytes());
        b.extend_from_slice(&channels.to_le_bytes());
        b.extend_from_slice(&44100u32.to_le_bytes());
        b.extend_from_slice(&(44100u32 * 2 * channels as u32).to_le_bytes());
        b.extend_from_slice(&(2 * channels).to_le_bytes());
        b.extend_from_slice(&16u16.to_le_bytes());
        b.extend_from_slice(b"data");
        b.extend_from_slice(&(data_len as u32).to_le_bytes());
        for s in frames {
            b.extend_from_slice(&s.to_le_bytes());
        }
        b
    }

    fn float_bytes(channels: u16, frames: &[f32]) -> Vec<u8> {
        let mut b = Vec::new();
        let data_len = frames.len() * 4;
        b.extend_from_slice(b"RIFF");
        b.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
        b.extend_from_slice(b"WAVEfmt ");
        b.extend_from_slice(&16u32.to_le_bytes());
        b.extend_from_slice(&3u16.to_le_bytes());
        b.extend_from_slice(&channels.to_le_bytes());
        b.extend_from_slice(&44100u32.to_le_bytes());
        b.extend_from_slice(&(44100u32 * 4 * channels as u32).to_le_bytes());
        b.extend_from_slice(&(4 * channels).to_le_bytes());
        b.extend_from_slice(&32u16.to_le_bytes());
        b.extend_from_slice(b"data");
        b.extend_from_slice(&(data_len as u32).to_le_bytes());
        for s in frames {
            b.extend_from_slice(&s.to_le_bytes());
        }
        b
    }

    #[test]
    fn pcm16_scaling() {
        let clip = decode_wav(&pcm16_bytes(1, &[0, 16384, -32768])).unwrap();
        assert_eq!(clip.samples, vec![0.0, 0.5, -1.0]);
        assert_eq!(clip.sample_rate, 44100);
    }

    #[test]
    fn stereo_float_downmix() {
        let clip = decode_wav(&float_bytes(2, &[1.0, 0.0])).unwrap();
        assert_eq!(clip.samples, vec![0.5]);
    }

    #[test]
    fn truncated_data_is_format_error() {
        let mut bytes = pcm16_bytes(1, &[1, 2, 3, 4]);
        bytes.truncate(bytes.len() - 3);
        assert!(matches!(decode_wav(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn bad_magic_is_format_error() {
        let mut bytes = pcm16_bytes(1, &[1]);
        bytes[0] = b'X';
        assert!(matches!(decode_wav(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn empty_data_is_empty_error() {
        assert!(matches!(
            decode_wav(&pcm16_bytes(1, &[])),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn unsupported_encodings() {
        let mut bytes = pcm16_bytes(1, &[1, 2]);
        // 8-bit PCM
        bytes[34] = 8;
        assert!(matches!(decode_wav(&bytes), Err(Error::Unsupported(_))));
        let mut bytes = pcm16_bytes(1, &[1, 2, 3]);
        bytes[22] = 3;
        assert!(matches!(decode_wav(&bytes), Err(Error::Unsupported(_))));
    }

    #[test]
    fn skips_unknown_chunks() {
        let plain = pcm16_bytes(1, &[100, -100]);
        let mut bytes = plain[..12].to_vec();
        bytes.extend_from_slice(b"LIST");
        bytes.extend_from_slice(&3u32.to_le_bytes());
        bytes.extend_from_slice(&[1, 2, 3, 0]);
        bytes.extend_from_slice(&plain[12..]);
        let clip = decode_wav(&bytes).unwrap();
        assert_eq!(clip.samples.len(), 2);
    }

    #[test]
    fn save_empty_clip_fails() {
        let clip = AudioClip {
            samples: vec![],
            sample_rate: 44100,
        };
        assert!(matches!(encode_wav(&clip), Err(Error::Empty(_))));
    }

    #[test]
    fn sine_round_trip_within_quantization() {
        let samples: Vec<f64> = (0..4410)
            .map(|n| (2.0 * std::f64::consts::PI * 1000.0 * n as f64 / 44100.0).sin())
            .collect();
        let clip = AudioClip::new(samples, 44100).unwrap();
        let back = decode_wav(&encode_wav(&clip).unwrap()).unwrap();
        let max_err = clip
            .samples
            .iter()
            .zip(&back.samples)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(max_err <= 1.0 / 32768.0, "max error {max_err}");
    }

    const MANIFEST: &str = r#"{
        "labels": ["kangaroo", "owl"],
        "seed": 3,
        "files": [
            {"path": "a1.wav", "label": "kangaroo", "genuine": true},
            {"path": "a2.wav", "label": "kangaroo", "genuine": true},
            {"path": "a3.wav", "label": "kangaroo", "genuine": true},
            {"path": "b1.wav", "label": "owl", "genuine": true},
            {"path": "b2.wav", "label": "owl", "genuine": true},
            {"path": "b3.wav", "label": "owl", "genuine": true, "role": "train"}
        ]
    }"#;

    #[test]
    fn manifest_two_classes_three_files() {
        let m = parse_manifest(MANIFEST).unwrap();
        assert_eq!(m.files.len(), 6);
        assert_eq!(m.files[5].role, Some(Role::Train));
    }

    #[test]
    fn manifest_duplicate_path() {
        let text = MANIFEST.replace("a2.wav", "a1.wav");
        assert!(matches!(parse_manifest(&text), Err(Error::Manifest(_))));
    }

    #[test]
    fn manifest_undeclared_label() {
        let text = MANIFEST.replace("\"label\": \"owl\", \"genuine\": true}", "\"label\": \"eagle\", \"genuine\": true}");
        assert!(matches!(parse_manifest(&text), Err(Error::Manifest(_))));
    }

    #[test]
    fn manifest_unknown_key_rejected() {
        let text = MANIFEST.replace("\"seed\": 3", "\"seed\": 3, \"extra\": 1");
        assert!(matches!(parse_manifest(&text), Err(Error::Manifest(_))));
    }

    #[test]
    fn manifest_lists_missing_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        fs::write(&path, MANIFEST).unwrap();
        fs::write(dir.path().join("a1.wav"), b"").unwrap();
        match load_manifest(&path) {
            Err(Error::Manifest(msg)) => {
                assert!(msg.contains("b3.wav"));
                assert!(!msg.contains("a1.wav"));
            }
            other => panic!("expected manifest error, got {other:?}"),
        }
    }
}
