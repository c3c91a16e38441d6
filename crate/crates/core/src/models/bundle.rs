//! Binary model bundle. All integers and floats are little-endian.
//!
//! ```text
//! magic            4 bytes  "CRNG"
//! version          u16
//! config_len       u32      length of the JSON config snapshot
//! config           config_len bytes, UTF-8 JSON {preprocess, matching}
//! network × 2      autoencoder, then classifier:
//!   layer_count    u32
//!   per layer:     inputs u32, outputs u32, activation u8 (0 ReLU, 1 linear),
//!                  dropout f64, weights f64 × outputs·inputs (row-major),
//!                  biases f64 × outputs
//! threshold        mu_d f64, sigma_d f64, threshold f64
//! label table      count u32, then per label: len u32 + UTF-8 bytes
//! config hash      32 bytes, SHA-256 of the config JSON
//! ```

use std::path::Path;

use super::{Autoencoder, Classifier, ConfigSnapshot, ModelBundle, ThresholdModel};
use crate::error::{Error, Result};
use crate::nn::{Activation, DenseLayer, Network};

pub const BUNDLE_MAGIC: &[u8; 4] = b"CRNG";
pub const BUNDLE_VERSION: u16 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: usize) {
        let v = u32::try_from(v).expect("bundle field exceeds u32");
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn bytes(&mut self, b: &[u8]) {
        self.u32(b.len());
        self.0.extend_from_slice(b);
    }
    fn network(&mut self, net: &Network) {
        self.u32(net.layers.len());
        for l in &net.layers {
            self.u32(l.inputs);
            self.u32(l.outputs);
            self.u8(l.activation.code());
            self.f64(l.dropout);
            for &w in &l.weights {
                self.f64(w);
            }
            for &b in &l.biases {
                self.f64(b);
            }
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Format(format!(
                "bundle truncated while reading {what} at byte {}",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }
    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }
    fn u32(&mut self, what: &str) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()) as usize)
    }
    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let len = n
            .checked_mul(8)
            .ok_or_else(|| Error::Format(format!("{what} size overflows")))?;
        Ok(self
            .take(len, what)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
    fn string(&mut self, what: &str) -> Result<String> {
        let n = self.u32(what)?;
        String::from_utf8(self.take(n, what)?.to_vec())
            .map_err(|_| Error::Format(format!("{what} is not valid UTF-8")))
    }
    fn network(&mut self, name: &str) -> Result<Network> {
        let count = self.u32(name)?;
        let mut layers = Vec::with_capacity(count.min(64));
        for i in 0..count {
            let what = format!("{name} layer {i}");
            let inputs = self.u32(&what)?;
            let outputs = self.u32(&what)?;
            let code = self.u8(&what)?;
            let activation = Activation::from_code(code)
                .ok_or_else(|| Error::Format(format!("{what}: unknown activation code {code}")))?;
            let dropout = self.f64(&what)?;
            let n_weights = inputs
                .checked_mul(outputs)
                .ok_or_else(|| Error::Format(format!("{what}: size overflows")))?;
            let weights = self.f64s(n_weights, &what)?;
            let biases = self.f64s(outputs, &what)?;
            layers.push(DenseLayer {
                inputs,
                outputs,
                weights,
                biases,
                activation,
                dropout,
            });
        }
        Network::from_layers(layers).map_err(|e| Error::Format(format!("{name}: {e}")))
    }
}

pub fn encode_bundle(bundle: &ModelBundle) -> Vec<u8> {
    let snapshot = bundle.snapshot();
    let json = snapshot.to_json();
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(BUNDLE_MAGIC);
    w.u16(BUNDLE_VERSION);
    w.bytes(json.as_bytes());
    w.network(&bundle.autoencoder.net);
    w.network(&bundle.classifier.net);
    w.f64(bundle.threshold.mu_d);
    w.f64(bundle.threshold.sigma_d);
    w.f64(bundle.threshold.threshold);
    w.u32(bundle.classifier.labels.len());
    for label in &bundle.classifier.labels {
        w.bytes(label.as_bytes());
    }
    w.0.extend_from_slice(&snapshot.hash());
    w.0
}

pub fn decode_bundle(bytes: &[u8]) -> Result<ModelBundle> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4, "magic")? != BUNDLE_MAGIC {
        return Err(Error::Format("not a model bundle (bad magic)".into()));
    }
    let version = r.u16("version")?;
    if version != BUNDLE_VERSION {
        return Err(Error::Format(format!(
            "bundle version {version} is not supported (expected {BUNDLE_VERSION})"
        )));
    }
    let json = r.string("config snapshot")?;
    let snapshot: ConfigSnapshot = serde_json::from_str(&json)
        .map_err(|e| Error::Format(format!("config snapshot: {e}")))?;
    let ae_net = r.network("autoencoder")?;
    let cls_net = r.network("classifier")?;
    let threshold = ThresholdModel {
        mu_d: r.f64("threshold")?,
        sigma_d: r.f64("threshold")?,
        threshold: r.f64("threshold")?,
    };
    let n_labels = r.u32("label table")?;
    let mut labels = Vec::with_capacity(n_labels.min(1024));
    for i in 0..n_labels {
        labels.push(r.string(&format!("label {i}"))?);
    }
    let hash = r.take(32, "config hash")?;
    if r.pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after bundle",
            bytes.len() - r.pos
        )));
    }
    if hash != snapshot.hash() {
        return Err(Error::Format("config hash does not match the stored config".into()));
    }
    if cls_net.output_dim() != labels.len() {
        return Err(Error::Format(format!(
            "classifier has {} outputs but {} labels",
            cls_net.output_dim(),
            labels.len()
        )));
    }
    let autoencoder = Autoencoder::from_network(ae_net).map_err(|e| Error::Format(e.to_string()))?;
    if cls_net.input_dim() != autoencoder.latent_dim() {
        return Err(Error::Format(format!(
            "classifier input {} does not match latent width {}",
            cls_net.input_dim(),
            autoencoder.latent_dim()
        )));
    }
    if autoencoder.input_dim() != snapshot.preprocess.spectrum_width {
        return Err(Error::Format(format!(
            "autoencoder input {} does not match spectrum width {}",
            autoencoder.input_dim(),
            snapshot.preprocess.spectrum_width
        )));
    }
    Ok(ModelBundle {
        autoencoder,
        classifier: Classifier { net: cls_net, labels },
        threshold,
        preprocess: snapshot.preprocess,
        matching: snapshot.matching,
    })
}

pub fn save_bundle(bundle: &ModelBundle, path: &Path) -> Result<()> {
    std::fs::write(path, encode_bundle(bundle)).map_err(|e| Error::io(path, e))
}

pub fn load_bundle(path: &Path) -> Result<ModelBundle> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_bundle(&bytes).map_err(|e| e.context(format!("loading bundle {}", path.display())))
}
