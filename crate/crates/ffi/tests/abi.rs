use std::ffi::{CStr, CString};
use std::path::Path;
use std::ptr;
use std::sync::OnceLock;

use resonant_auth::audio_io::{save_wav, Role};
use resonant_auth::models::{self, PipelineConfig};
use resonant_auth::synth::{generate_corpus, CorpusItem, CorpusSpec};
use resonant_auth_ffi::*;

struct Fixture {
    _dir: tempfile::TempDir,
    bundle: CString,
    genuine: CString,
    fake: CString,
    samples: Vec<f64>,
    labels: Vec<String>,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let mut spec = CorpusSpec::default();
        spec.counts.train_per_class = 4;
        spec.counts.test_per_class = 1;
        spec.counts.counterfeit = 1;
        spec.counts.unknown = 0;
        let items = generate_corpus(&spec, 11).unwrap();
        let train: Vec<_> = items
            .iter()
            .filter(|i| i.entry.role == Some(Role::Train))
            .map(|i| (i.clip.clone(), i.entry.label.clone()))
            .collect();
        let mut cfg = PipelineConfig::default();
        cfg.preprocess.spectrum_width = 512;
        cfg.train.epochs = 8;
        cfg.train.seed = 11;
        let run = models::train_pipeline(&train, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let bundle = dir.path().join("m.bundle");
        models::save_bundle(&run.bundle, &bundle).unwrap();
        let pick = |role| -> &CorpusItem { items.iter().find(|i| i.entry.role == Some(role)).unwrap() };
        let write = |item: &CorpusItem, name: &str| {
            let p = dir.path().join(name);
            save_wav(&item.clip, &p).unwrap();
            cstr(&p)
        };
        let genuine = write(pick(Role::Test), "g.wav");
        let fake = write(pick(Role::Counterfeit), "c.wav");
        Fixture {
            bundle: cstr(&bundle),
            genuine,
            fake,
            samples: pick(Role::Test).clip.samples.clone(),
            labels: run.bundle.labels().to_vec(),
            _dir: dir,
        }
    })
}

fn cstr(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn load(f: &Fixture) -> *mut RaBundle {
    let mut b = ptr::null_mut();
    assert_eq!(unsafe { ra_bundle_load(f.bundle.as_ptr(), &mut b) }, RaStatus::Ok);
    assert!(!b.is_null());
    b
}

fn last_error() -> String {
    let p = ra_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn labels_and_threshold() {
    let f = fixture();
    let b = load(f);
    unsafe {
        assert_eq!(ra_bundle_label_count(b), f.labels.len());
        for (i, l) in f.labels.iter().enumerate() {
            assert_eq!(CStr::from_ptr(ra_bundle_label(b, i)).to_str().unwrap(), l);
        }
        assert!(ra_bundle_label(b, f.labels.len()).is_null());
        assert!(ra_bundle_threshold(b).is_finite());
        assert_eq!(ra_bundle_spectrum_width(b), 512);
        ra_bundle_free(b);
    }
}

#[test]
fn file_and_sample_paths_agree() {
    let f = fixture();
    let b = load(f);
    let mut a = RaReport {
        distance: 0.0,
        threshold: 0.0,
        authentic: false,
        label_index: 0,
        confidence: 0.0,
        original_peak_count: 0,
        reconstructed_peak_count: 0,
    };
    let mut s = a;
    unsafe {
        assert_eq!(ra_verify_wav(b, f.genuine.as_ptr(), &mut a), RaStatus::Ok);
        let st = ra_verify_samples(b, f.samples.as_ptr(), f.samples.len(), 44100, &mut s);
        assert_eq!(st, RaStatus::Ok);
        ra_bundle_free(b);
    }
    // 16-bit WAV quantization shifts the distance slightly, not the verdict.
    assert_eq!(a.authentic, s.authentic);
    assert_eq!(a.threshold, s.threshold);
    assert!(a.original_peak_count > 0);
    if a.authentic {
        assert!(a.label_index >= 0 && (a.label_index as usize) < f.labels.len());
        assert!(a.confidence > 0.0 && a.confidence <= 1.0);
    } else {
        assert_eq!(a.label_index, -1);
        assert!(a.confidence.is_nan());
    }
}

#[test]
fn json_report() {
    let f = fixture();
    let b = load(f);
    let mut out = ptr::null_mut();
    unsafe {
        assert_eq!(ra_verify_wav_json(b, f.fake.as_ptr(), &mut out), RaStatus::Ok);
        let line = CStr::from_ptr(out).to_str().unwrap().to_owned();
        ra_string_free(out);
        ra_bundle_free(b);
        for key in ["\"file\"", "\"distance\"", "\"threshold\"", "\"authentic\"", "\"label\"", "\"confidence\""] {
            assert!(line.contains(key), "{line}");
        }
    }
}

#[test]
fn error_codes() {
    let f = fixture();
    let mut b = ptr::null_mut();
    let missing = CString::new("/nonexistent/x.bundle").unwrap();
    unsafe {
        assert_eq!(ra_bundle_load(missing.as_ptr(), &mut b), RaStatus::Io);
        assert!(b.is_null());
        assert!(last_error().contains("nonexistent"));
        assert_eq!(ra_bundle_load(ptr::null(), &mut b), RaStatus::NullPointer);
        assert_eq!(ra_bundle_load(f.bundle.as_ptr(), ptr::null_mut()), RaStatus::NullPointer);

        // A WAV file is not a bundle.
        assert_eq!(ra_bundle_load(f.genuine.as_ptr(), &mut b), RaStatus::Format);

        let b = load(f);
        assert!(ra_last_error_message().is_null());
        let mut r = std::mem::zeroed::<RaReport>();
        let silence = vec![0.0; 44100];
        assert_eq!(
            ra_verify_samples(b, silence.as_ptr(), silence.len(), 44100, &mut r),
            RaStatus::NoOnset
        );
        assert_eq!(ra_verify_samples(b, ptr::null(), 0, 44100, &mut r), RaStatus::NullPointer);
        assert_eq!(ra_verify_wav(ptr::null(), f.genuine.as_ptr(), &mut r), RaStatus::NullPointer);
        ra_bundle_free(b);
        ra_bundle_free(ptr::null_mut());
        ra_string_free(ptr::null_mut());
        assert_eq!(ra_bundle_label_count(ptr::null()), 0);
        assert!(ra_bundle_threshold(ptr::null()).is_nan());
    }
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(ra_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
