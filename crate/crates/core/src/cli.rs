//! The `resonant-auth` command-line tool.
//!
//! Exit codes: 0 success / all authentic, 2 usage or I/O error, 3 at least
//! one recording judged counterfeit.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::analysis::{self, PlotSpec, PlotStyle, Series, Table};
use crate::audio_io::{load_manifest, load_wav, AudioClip, DatasetManifest, ManifestEntry, Role};
use crate::config::CliConfig;
use crate::dsp;
use crate::error::{Error, Result};
use crate::models::{self, ModelBundle, VerificationReport};
use crate::nn::TrainHistory;
use crate::synth;

pub const SEED_ENV: &str = "RESONANT_AUTH_SEED";
pub const DEFAULT_SEED: u64 = 7;

pub const EXIT_OK: u8 = 0;
pub const EXIT_ERROR: u8 = 2;
pub const EXIT_COUNTERFEIT: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "resonant-auth", version, about = "Acoustic authentication of bullion coins")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalOpts {
    /// INI-style configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random stream (falls back to $RESONANT_AUTH_SEED, then the config file, then 7).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Spectrum bins fed to the models. Values below 8820 are for quick runs
    /// only and do not follow the reference pipeline.
    #[arg(long, global = true)]
    pub spectrum_width: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labelled synthetic corpus with manifest and ground truth.
    Synth {
        #[arg(long)]
        out: PathBuf,
    },
    /// Train autoencoder, threshold and classifier on a manifest's genuine training files.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        /// Output bundle path.
        #[arg(long)]
        out: PathBuf,
        /// Directory for loss/accuracy CSVs (default: next to the bundle).
        #[arg(long)]
        curves_dir: Option<PathBuf>,
    },
    /// Verify a WAV file or every WAV file in a directory.
    Verify {
        #[arg(long)]
        bundle: PathBuf,
        /// One JSON object per line instead of text.
        #[arg(long)]
        json: bool,
        path: PathBuf,
    },
    /// Per-role metrics over a role-annotated manifest.
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        bundle: PathBuf,
        /// Write the per-role table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Export plot data as CSV (and SVG where it makes sense).
    ExportPlot {
        #[arg(long, value_enum)]
        kind: PlotKind,
        /// Output path prefix; `.csv` / `.svg` are appended.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        bundle: Option<PathBuf>,
        #[arg(long)]
        wav: Option<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Curve CSV written by `train` (kind = curves).
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value_t = 1024)]
        frame: usize,
        #[arg(long, default_value_t = 256)]
        hop: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlotKind {
    Spectrum,
    Spectrogram,
    Pca,
    Curves,
}

/// Resolved configuration: file, then environment seed, then flags.
pub fn resolve_config(global: &GlobalOpts) -> Result<CliConfig> {
    let mut cfg = match &global.config {
        Some(path) => CliConfig::load(path)?,
        None => CliConfig::default(),
    };
    let env_seed = match std::env::var(SEED_ENV) {
        Ok(v) => Some(v.trim().parse::<u64>().map_err(|_| {
            Error::Config(format!("{SEED_ENV}={v} is not a non-negative integer"))
        })?),
        Err(_) => None,
    };
    let seed = global.seed.or(env_seed).or(cfg.seed).unwrap_or(DEFAULT_SEED);
    cfg.seed = Some(seed);
    cfg.train.seed = seed;
    if let Some(w) = global.spectrum_width {
        cfg.preprocess.spectrum_width = w;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn seed_of(cfg: &CliConfig) -> u64 {
    cfg.seed.unwrap_or(DEFAULT_SEED)
}

fn reduced_width_note(width: usize, full: usize) -> Option<String> {
    (width != full).then(|| {
        format!("note: spectrum width {width} (reference pipeline uses {full}); results are not reference-conformant")
    })
}

fn load_entries(manifest: &DatasetManifest, entries: &[&ManifestEntry]) -> Result<Vec<(ManifestEntry, AudioClip)>> {
    entries
        .par_iter()
        .map(|e| {
            let path = manifest.resolve(e);
            let clip = load_wav(&path)?;
            Ok(((*e).clone(), clip))
        })
        .collect()
}

fn cmd_synth(cfg: &CliConfig, out: &Path) -> Result<u8> {
    let manifest = synth::build_corpus(&cfg.corpus, seed_of(cfg), out)?;
    let count = |role| manifest.with_role(role).count();
    println!(
        "wrote {} files to {} (train {}, test {}, counterfeit {}, unknown {})",
        manifest.files.len(),
        out.display(),
        count(Role::Train),
        count(Role::Test),
        count(Role::Counterfeit),
        count(Role::Unknown)
    );
    Ok(EXIT_OK)
}

/// Genuine files marked for training; manifests without roles contribute
/// every genuine file.
pub fn training_entries(manifest: &DatasetManifest) -> Vec<&ManifestEntry> {
    let has_roles = manifest.files.iter().any(|e| e.role.is_some());
    manifest
        .files
        .iter()
        .filter(|e| e.genuine && (!has_roles || e.role == Some(Role::Train)))
        .collect()
}

fn write_curve(path: &Path, history: &TrainHistory) -> Result<()> {
    analysis::export_csv(&analysis::curve_table(history), path)
}

fn cmd_train(cfg: &CliConfig, manifest_path: &Path, out: &Path, curves_dir: Option<&Path>) -> Result<u8> {
    let manifest = load_manifest(manifest_path)?;
    let entries = training_entries(&manifest);
    if entries.is_empty() {
        return Err(Error::Manifest("manifest has no genuine training files".into()));
    }
    if let Some(note) = reduced_width_note(cfg.preprocess.spectrum_width, cfg.preprocess.segment_len) {
        eprintln!("{note}");
    }
    let clips: Vec<(AudioClip, String)> = load_entries(&manifest, &entries)?
        .into_iter()
        .map(|(e, c)| (c, e.label))
        .collect();
    let run = models::train_pipeline(&clips, &cfg.pipeline()).map_err(|e| e.context("training"))?;
    models::save_bundle(&run.bundle, out)?;
    let dir = curves_dir
        .map(Path::to_path_buf)
        .unwrap_or_else(|| out.parent().map(Path::to_path_buf).unwrap_or_default());
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    write_curve(&dir.join("autoencoder_loss.csv"), &run.autoencoder_history)?;
    write_curve(&dir.join("classifier_curve.csv"), &run.classifier_history)?;
    let last = |h: &TrainHistory| h.loss.last().copied().unwrap_or(f64::NAN);
    println!(
        "trained on {} recordings ({} spectra): AE loss {:.3e} → {:.3e}, classifier loss {:.3e}, threshold {:.4}",
        clips.len(),
        run.spectra.len(),
        run.autoencoder_history.loss.first().copied().unwrap_or(f64::NAN),
        last(&run.autoencoder_history),
        last(&run.classifier_history),
        run.bundle.threshold.threshold
    );
    println!("bundle written to {}", out.display());
    Ok(EXIT_OK)
}

fn wav_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).map_err(|e| Error::io(&d, e))? {
            let path = entry.map_err(|e| Error::io(&d, e))?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path
                .extension()
                .is_some_and(|x| x.eq_ignore_ascii_case("wav"))
            {
                out.push(path);
            }
        }
    }
    out.sort();
    Ok(out)
}

fn check_caller_config(global: &GlobalOpts, cfg: &CliConfig, bundle: &ModelBundle) -> Result<()> {
    if global.config.is_some() || global.spectrum_width.is_some() {
        bundle.check_compatible(&cfg.preprocess, &cfg.matching)?;
    }
    Ok(())
}

fn cmd_verify(global: &GlobalOpts, cfg: &CliConfig, bundle_path: &Path, json: bool, path: &Path) -> Result<u8> {
    let bundle = models::load_bundle(bundle_path)?;
    check_caller_config(global, cfg, &bundle)?;
    let files = if path.is_dir() {
        wav_files(path)?
    } else {
        vec![path.to_path_buf()]
    };
    if files.is_empty() {
        return Err(Error::Empty(format!("no WAV files under {}", path.display())));
    }
    let results: Vec<(PathBuf, Result<VerificationReport>)> = files
        .par_iter()
        .map(|f| {
            let r = load_wav(f).and_then(|clip| models::verify(&clip, &bundle));
            (f.clone(), r)
        })
        .collect();
    let mut code = EXIT_OK;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for (file, result) in &results {
        let name = file.display().to_string();
        match result {
            Ok(report) => {
                if json {
                    let _ = writeln!(out, "{}", report.to_json_line(Some(&name)));
                } else {
                    let _ = writeln!(out, "{name}: {}", report.to_text());
                }
                if !report.authentic && code == EXIT_OK {
                    code = EXIT_COUNTERFEIT;
                }
            }
            Err(e) => {
                eprintln!("error: {name}: {e}");
                code = EXIT_ERROR;
            }
        }
    }
    Ok(code)
}

fn cmd_eval(global: &GlobalOpts, cfg: &CliConfig, manifest_path: &Path, bundle_path: &Path, csv: Option<&Path>) -> Result<u8> {
    let bundle = models::load_bundle(bundle_path)?;
    check_caller_config(global, cfg, &bundle)?;
    let manifest = load_manifest(manifest_path)?;
    let entries: Vec<&ManifestEntry> = manifest.files.iter().collect();
    if entries.iter().any(|e| e.role.is_none()) {
        return Err(Error::Manifest("evaluation needs a role for every manifest entry".into()));
    }
    let files = load_entries(&manifest, &entries)?;
    let report = models::evaluate(&bundle, &files)?;
    println!("{}", report.to_text());
    if let Some(path) = csv {
        std::fs::write(path, report.to_csv()).map_err(|e| Error::io(path, e))?;
    }
    Ok(EXIT_OK)
}

fn need<'a>(opt: &'a Option<PathBuf>, flag: &str, kind: &str) -> Result<&'a Path> {
    opt.as_deref()
        .ok_or_else(|| Error::Argument(format!("--{flag} is required for --kind {kind}")))
}

fn with_ext(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn read_curve_csv(path: &Path) -> Result<Table> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::Empty(format!("{} is empty", path.display())))?
        .split(',')
        .map(str::to_string)
        .collect();
    let rows = lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    Ok(Table { header, rows })
}

#[allow(clippy::too_many_arguments)]
fn cmd_export_plot(
    global: &GlobalOpts,
    cfg: &CliConfig,
    kind: PlotKind,
    out: &Path,
    bundle: &Option<PathBuf>,
    wav: &Option<PathBuf>,
    manifest: &Option<PathBuf>,
    input: &Option<PathBuf>,
    frame: usize,
    hop: usize,
) -> Result<u8> {
    let line_plot = |title: &str, x: &str, y: &str| PlotSpec {
        title: title.into(),
        x_label: x.into(),
        y_label: y.into(),
        style: PlotStyle::Lines,
    };
    match kind {
        PlotKind::Spectrum => {
            let bundle = models::load_bundle(need(bundle, "bundle", "spectrum")?)?;
            check_caller_config(global, cfg, &bundle)?;
            let clip = load_wav(need(wav, "wav", "spectrum")?)?;
            let sp = dsp::clip_features(&clip, &bundle.preprocess)?;
            let recon = bundle.autoencoder.reconstruct(&sp)?;
            let cmp = models::compare_peaks(&sp, &recon, &bundle.effective_matching());
            let table = analysis::overlay_table(&sp, &cmp.reconstruction)?;
            analysis::export_csv(&table, &with_ext(out, "csv"))?;
            let series = |name: &str, s: &dsp::Spectrum| Series {
                name: name.into(),
                points: (0..s.len()).map(|i| (s.freq_of(i), s.bins[i])).collect(),
            };
            analysis::export_svg(
                &[series("original", &sp), series("reconstructed", &cmp.reconstruction)],
                &line_plot("Recorded and reconstructed spectrum", "frequency (Hz)", "normalized amplitude"),
                &with_ext(out, "svg"),
            )?;
            let peaks_path = with_ext(out, "peaks.csv");
            let mut text = String::from("set,freq_hz,amplitude,bin\n");
            for (name, set) in [("original", &cmp.original), ("reconstructed", &cmp.reconstructed)] {
                for p in &set.peaks {
                    text.push_str(&format!("{name},{},{},{}\n", p.freq_hz, p.amplitude, p.bin));
                }
            }
            std::fs::write(&peaks_path, text).map_err(|e| Error::io(&peaks_path, e))?;
            println!("peak distance {:.4} (threshold {:.4})", cmp.distance, bundle.threshold.threshold);
        }
        PlotKind::Spectrogram => {
            let clip = load_wav(need(wav, "wav", "spectrogram")?)?;
            let sg = dsp::spectrogram(&clip, frame, hop)?;
            let path = with_ext(out, "csv");
            std::fs::write(&path, sg.to_csv()).map_err(|e| Error::io(&path, e))?;
        }
        PlotKind::Pca => {
            let bundle = models::load_bundle(need(bundle, "bundle", "pca")?)?;
            check_caller_config(global, cfg, &bundle)?;
            let manifest = load_manifest(need(manifest, "manifest", "pca")?)?;
            let entries: Vec<&ManifestEntry> = manifest
                .files
                .iter()
                .filter(|e| e.genuine && bundle.labels().contains(&e.label))
                .filter(|e| matches!(e.role, None | Some(Role::Train) | Some(Role::Test)))
                .collect();
            let files = load_entries(&manifest, &entries)?;
            let spectra = files
                .iter()
                .map(|(_, c)| dsp::clip_features(c, &bundle.preprocess))
                .collect::<Result<Vec<_>>>()?;
            let latents = bundle.autoencoder.encode_many(&spectra)?;
            let labels: Vec<String> = files.iter().map(|(e, _)| e.label.clone()).collect();
            let pca = analysis::pca_2d(&latents, &labels)?;
            analysis::export_csv(&pca.to_table(), &with_ext(out, "csv"))?;
            analysis::export_svg(
                &analysis::pca_series(&pca),
                &PlotSpec {
                    title: "PCA of latent representation".into(),
                    x_label: "PC1".into(),
                    y_label: "PC2".into(),
                    style: PlotStyle::Points,
                },
                &with_ext(out, "svg"),
            )?;
            println!(
                "explained variance ratio {:.3} / {:.3}",
                pca.explained_ratio[0], pca.explained_ratio[1]
            );
        }
        PlotKind::Curves => {
            let path = need(input, "input", "curves")?;
            let table = read_curve_csv(path)?;
            let num = |s: &str| s.trim().parse::<f64>().unwrap_or(f64::NAN);
            let series: Vec<Series> = (1..table.header.len())
                .map(|col| Series {
                    name: table.header[col].clone(),
                    points: table.rows.iter().map(|r| (num(&r[0]), num(&r[col]))).collect(),
                })
                .collect();
            if series.is_empty() {
                return Err(Error::Argument(format!("{} has no value columns", path.display())));
            }
            analysis::export_csv(&table, &with_ext(out, "csv"))?;
            analysis::export_svg(&series, &line_plot("Training curve", "epoch", "value"), &with_ext(out, "svg"))?;
        }
    }
    Ok(EXIT_OK)
}

pub fn run(cli: Cli) -> Result<u8> {
    let cfg = resolve_config(&cli.global)?;
    match &cli.command {
        Command::Synth { out } => cmd_synth(&cfg, out),
        Command::Train {
            manifest,
            out,
            curves_dir,
        } => cmd_train(&cfg, manifest, out, curves_dir.as_deref()),
        Command::Verify { bundle, json, path } => cmd_verify(&cli.global, &cfg, bundle, *json, path),
        Command::Eval { manifest, bundle, csv } => cmd_eval(&cli.global, &cfg, manifest, bundle, csv.as_deref()),
        Command::ExportPlot {
            kind,
            out,
            bundle,
            wav,
            manifest,
            input,
            frame,
            hop,
        } => cmd_export_plot(&cli.global, &cfg, *kind, out, bundle, wav, manifest, input, *frame, *hop),
    }
}

/// Parses arguments and runs; clap usage errors exit with 2.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_ERROR } else { EXIT_OK });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
