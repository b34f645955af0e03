//! `uci`: corpus synthesis, training, evaluation, augmentation preview and self-check.
//!
//! Every command reads an optional TOML file; command-line flags override it,
//! and `UCI_SEED` overrides the seed of the file but not an explicit `--seed`.
//! Relative paths, on the command line or in a file, are resolved against
//! `--root` when it is given.
//!
//! Exit codes: 0 success, 2 configuration or usage, 3 I/O, 4 numeric failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use toml::{Table, Value};
use uci_core::augment::{self, AugmentConfig, AugmentMode};
use uci_core::clips::{generate_synthetic_dataset, Frame, SyntheticConfig, VideoClip};
use uci_core::eval::{cross_domain_report, write_report};
use uci_core::selfcheck;
use uci_core::trainer::{train, TrainConfig};
use uci_core::{seed_keys, Error};

const SEED_ENV: &str = "UCI_SEED";

#[derive(Parser)]
#[command(name = "uci", version, about = "Temporal-inconsistency detector for forged video")]
struct Cli {
    /// Directory that relative paths are resolved against.
    #[arg(long, global = true)]
    root: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic multi-domain corpus and its manifest.
    Synth(SynthArgs),
    /// Train a detector.
    Train(TrainArgs),
    /// Score the test split of a held-out domain.
    Eval(EvalArgs),
    /// Write original/augmented frame strips for one clip.
    AugmentPreview(PreviewArgs),
    /// Run the built-in gradient, loss and metric checks.
    Selfcheck(SelfcheckArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Corpus settings; `out_dir` may be given here too.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    num_domains: Option<usize>,
    #[arg(long)]
    videos_per_domain_per_label: Option<usize>,
    #[arg(long)]
    frames_per_video: Option<usize>,
    #[arg(long)]
    frame_size: Option<usize>,
    #[arg(long)]
    fake_jitter_px: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    /// Training profile; `resume` may be given here too. Defaults to the desk profile.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Checkpoint to continue from.
    #[arg(long)]
    resume: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    hold_out: Option<String>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    clip_len: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    /// File with any of `ckpt`, `manifest`, `hold_out`, `out_dir`.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    ckpt: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    hold_out: Option<String>,
    /// Report directory; defaults to `eval_<domain>` next to the checkpoint.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PreviewArgs {
    /// File with any of `clip`, `seed`, `out_dir`, `frames` and an `[augment]` table.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory of `frame_*.png` files.
    #[arg(long)]
    clip: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of leading frames to show.
    #[arg(long)]
    frames: Option<usize>,
    /// off, temporal-preserved or non-temporal.
    #[arg(long)]
    mode: Option<String>,
}

#[derive(Args)]
struct SelfcheckArgs {
    /// Seed for the random instances; `seed` in the file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct EvalFile {
    ckpt: Option<PathBuf>,
    manifest: Option<PathBuf>,
    hold_out: Option<String>,
    out_dir: Option<PathBuf>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PreviewFile {
    clip: Option<PathBuf>,
    #[serde(default)]
    seed: u64,
    out_dir: Option<PathBuf>,
    #[serde(default = "default_preview_frames")]
    frames: usize,
    #[serde(default = "default_preview_augment")]
    augment: AugmentConfig,
}

fn default_preview_frames() -> usize {
    8
}

fn default_preview_augment() -> AugmentConfig {
    AugmentConfig::scaled_to(64)
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct SelfcheckFile {
    #[serde(default)]
    seed: u64,
}

struct Paths {
    root: Option<PathBuf>,
}

impl Paths {
    fn resolve(&self, p: &Path) -> PathBuf {
        match &self.root {
            Some(root) if p.is_relative() => root.join(p),
            _ => p.to_path_buf(),
        }
    }
}

fn config_error(msg: impl Into<String>) -> anyhow::Error {
    Error::Config(msg.into()).into()
}

fn read_table(paths: &Paths, file: Option<&Path>) -> Result<Table> {
    let Some(file) = file else {
        return Ok(Table::new());
    };
    let path = paths.resolve(file);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::Io {
        path: path.clone(),
        source: e,
    })?;
    text.parse::<Table>()
        .map_err(|e| config_error(format!("{}: {e}", path.display())))
}

fn into_config<T: serde::de::DeserializeOwned>(table: Table) -> Result<T> {
    let text = toml::to_string(&table).context("re-serialising configuration")?;
    Ok(uci_core::config::parse_toml(&text)?)
}

fn set(table: &mut Table, key: &str, value: Option<impl Into<Value>>) {
    if let Some(v) = value {
        table.insert(key.to_string(), v.into());
    }
}

fn set_count(table: &mut Table, key: &str, value: Option<usize>) -> Result<()> {
    if let Some(v) = value {
        let v = i64::try_from(v).map_err(|_| config_error(format!("{key} is too large")))?;
        table.insert(key.to_string(), Value::Integer(v));
    }
    Ok(())
}

fn set_path(table: &mut Table, key: &str, value: Option<&Path>) {
    set(table, key, value.map(|p| p.display().to_string()));
}

/// Precedence: flag, then `UCI_SEED`, then the file.
fn set_seed(table: &mut Table, flag: Option<u64>) -> Result<()> {
    let env = match std::env::var(SEED_ENV) {
        Ok(v) => Some(
            v.trim()
                .parse::<u64>()
                .map_err(|_| config_error(format!("{SEED_ENV}={v:?} is not an unsigned integer")))?,
        ),
        Err(_) => None,
    };
    if let Some(seed) = flag.or(env) {
        let v = i64::try_from(seed).map_err(|_| config_error("seed must fit in 63 bits"))?;
        table.insert("seed".into(), Value::Integer(v));
    }
    Ok(())
}

fn take_path(table: &mut Table, key: &str) -> Result<Option<PathBuf>> {
    match table.remove(key) {
        None => Ok(None),
        Some(Value::String(s)) => Ok(Some(PathBuf::from(s))),
        Some(other) => Err(config_error(format!("{key} must be a string, got {other}"))),
    }
}

fn synth(paths: &Paths, args: SynthArgs) -> Result<()> {
    let mut table = read_table(paths, args.config.as_deref())?;
    let out = args
        .out
        .or(take_path(&mut table, "out_dir")?)
        .ok_or_else(|| config_error("no output directory: pass --out or set out_dir"))?;
    let mut base: Table = toml::from_str(&uci_core::config::to_toml(&SyntheticConfig::default()))?;
    base.extend(table);
    set_seed(&mut base, args.seed)?;
    set_count(&mut base, "num_domains", args.num_domains)?;
    set_count(
        &mut base,
        "videos_per_domain_per_label",
        args.videos_per_domain_per_label,
    )?;
    set_count(&mut base, "frames_per_video", args.frames_per_video)?;
    set_count(&mut base, "frame_size", args.frame_size)?;
    set_count(&mut base, "fake_jitter_px", args.fake_jitter_px)?;
    let config: SyntheticConfig = into_config(base)?;
    let manifest = generate_synthetic_dataset(&config, &paths.resolve(&out))?;
    println!("{}", manifest.display());
    Ok(())
}

fn train_cmd(paths: &Paths, args: TrainArgs) -> Result<()> {
    let mut table = read_table(paths, args.config.as_deref())?;
    let resume = args.resume.or(take_path(&mut table, "resume")?);
    set_path(&mut table, "manifest", args.manifest.as_deref());
    set_path(&mut table, "out_dir", args.out_dir.as_deref());
    set_count(&mut table, "epochs", args.epochs)?;
    set_count(&mut table, "batch_size", args.batch_size)?;
    set_count(&mut table, "clip_len", args.clip_len)?;
    set(&mut table, "hold_out", args.hold_out);
    set(&mut table, "learning_rate", args.learning_rate);
    set_seed(&mut table, args.seed)?;
    let mut config: TrainConfig = into_config(table)?;
    config.manifest = paths.resolve(&config.manifest);
    config.out_dir = paths.resolve(&config.out_dir);
    let resume = resume.map(|p| paths.resolve(&p));

    let outcome = train(&config, resume.as_deref())?;
    println!("checkpoint: {}", outcome.last_checkpoint.display());
    println!("metrics: {}", outcome.metrics.display());
    println!("val: {}", outcome.val.display());
    if outcome.stopped_early {
        println!("stopped early after epoch {}", outcome.epochs_run);
    }
    Ok(())
}

fn eval_cmd(paths: &Paths, args: EvalArgs) -> Result<()> {
    let file: EvalFile = into_config(read_table(paths, args.config.as_deref())?)?;
    let ckpt = args
        .ckpt
        .or(file.ckpt)
        .ok_or_else(|| config_error("no checkpoint: pass --ckpt"))?;
    let manifest = args
        .manifest
        .or(file.manifest)
        .ok_or_else(|| config_error("no manifest: pass --manifest"))?;
    let domain = args
        .hold_out
        .or(file.hold_out)
        .ok_or_else(|| config_error("no held-out domain: pass --hold-out"))?;
    let ckpt = paths.resolve(&ckpt);
    let out = match args.out.or(file.out_dir) {
        Some(p) => paths.resolve(&p),
        None => ckpt
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join(format!("eval_{domain}")),
    };
    let (report, _) = cross_domain_report(&ckpt, &paths.resolve(&manifest), &domain)?;
    let (csv, json) = write_report(std::slice::from_ref(&report), &out)?;
    println!("{}", serde_json::to_string(&report)?);
    println!("report: {}", csv.display());
    println!("report: {}", json.display());
    Ok(())
}

fn read_frames(dir: &Path, limit: usize) -> Result<Vec<Frame>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry
            .map_err(|e| Error::Io {
                path: dir.to_path_buf(),
                source: e,
            })?
            .path();
        if path.extension().is_some_and(|e| e == "png") {
            files.push(path);
        }
    }
    files.sort();
    files.truncate(limit);
    if files.is_empty() {
        return Err(Error::Io {
            path: dir.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "no PNG frames"),
        }
        .into());
    }
    Ok(files.iter().map(|p| Frame::load(p)).collect::<uci_core::Result<_>>()?)
}

/// Originals on the top row, augmented frames below.
fn strip(top: &[Frame], bottom: &[Frame]) -> Result<Frame> {
    let side = top[0].width();
    let mut canvas = Frame::filled(side * top.len(), 2 * side, [0, 0, 0])?;
    for (row, frames) in [top, bottom].into_iter().enumerate() {
        for (i, f) in frames.iter().enumerate() {
            for y in 0..side {
                for x in 0..side {
                    canvas.set(i * side + x, row * side + y, f.get(x, y));
                }
            }
        }
    }
    Ok(canvas)
}

fn preview(paths: &Paths, args: PreviewArgs) -> Result<()> {
    let mut table = read_table(paths, args.config.as_deref())?;
    set_seed(&mut table, args.seed)?;
    let mut file: PreviewFile = into_config(table)?;
    if let Some(mode) = args.mode {
        file.augment.mode =
            into_config::<ModeOnly>(Table::from_iter([("mode".to_string(), Value::String(mode))]))?.mode;
    }
    if let Some(n) = args.frames {
        file.frames = n;
    }
    let clip_dir = args
        .clip
        .or(file.clip)
        .ok_or_else(|| config_error("no clip: pass --clip"))?;
    let out = args
        .out
        .or(file.out_dir)
        .ok_or_else(|| config_error("no output directory: pass --out"))?;
    if file.frames < 2 {
        bail!(config_error("frames must be at least 2"));
    }

    let frames = read_frames(&paths.resolve(&clip_dir), file.frames)?;
    let clip = VideoClip::new(frames, clip_dir.display().to_string())?;
    let mut rng = uci_core::seed::rng(seed_keys!(file.seed, "preview"));
    let (augmented, trace) = augment::apply_traced(&clip, &mut rng, &file.augment)?;
    let size = file.augment.output_size;
    let originals: Vec<Frame> = clip.frames().iter().map(|f| augment::resize_frame(f, size)).collect();

    let out = paths.resolve(&out);
    std::fs::create_dir_all(&out).map_err(|e| Error::Io {
        path: out.clone(),
        source: e,
    })?;
    let strip_path = out.join("strip.png");
    strip(&originals, augmented.frames())?.save(&strip_path)?;
    let trace_path = out.join("trace.txt");
    let mut text = String::new();
    for (i, (c, f)) in trace.clip.iter().zip(&trace.frames).enumerate() {
        text.push_str(&format!("frame {i}\n  clip: {c:?}\n  frame: {f:?}\n"));
    }
    std::fs::write(&trace_path, text).map_err(|e| Error::Io {
        path: trace_path.clone(),
        source: e,
    })?;
    println!("{}", strip_path.display());
    println!("{}", trace_path.display());
    Ok(())
}

#[derive(Deserialize)]
struct ModeOnly {
    mode: AugmentMode,
}

fn selfcheck_cmd(paths: &Paths, args: SelfcheckArgs) -> Result<bool> {
    let mut table = read_table(paths, args.config.as_deref())?;
    set_seed(&mut table, args.seed)?;
    let file: SelfcheckFile = into_config(table)?;
    let checks = selfcheck::run(&selfcheck::Options {
        seed: file.seed,
        ..Default::default()
    });
    for c in &checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    let ok = selfcheck::all_passed(&checks);
    println!(
        "{}/{} checks passed",
        checks.iter().filter(|c| c.passed).count(),
        checks.len()
    );
    Ok(ok)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return e.exit_code() as u8;
        }
        if cause.is::<std::io::Error>() {
            return 3;
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let paths = Paths { root: cli.root };
    let result = match cli.command {
        Command::Synth(a) => synth(&paths, a).map(|_| true),
        Command::Train(a) => train_cmd(&paths, a).map(|_| true),
        Command::Eval(a) => eval_cmd(&paths, a).map(|_| true),
        Command::AugmentPreview(a) => preview(&paths, a).map(|_| true),
        Command::Selfcheck(a) => selfcheck_cmd(&paths, a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(4),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
