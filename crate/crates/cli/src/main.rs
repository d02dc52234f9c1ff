//! Command-line driver: dataset synthesis, preprocessing, the three training
//! stages, inference, evaluation, parameter counting, and figure export.
//!
//! Exit codes: 0 on success, 2 for configuration errors, 3 for anything
//! else. Failures print a single JSON line on stderr.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use facedepth::depth::{
    build_dataset, compute_normal_map, degrade, load_dmf, load_pgm16, resize_normalize, save_dmf,
    DepthMap,
};
use facedepth::diif::denoise;
use facedepth::par::ExecMode;
use facedepth::recognizer::{count_block, multibranch_fusion_block, plain_fusion_convblock};
use facedepth::train::{
    denoiser_ckpt_path, evaluate, finetune_ckpt_path, finetune_recognizer, load_denoiser,
    load_split, pretrain_ckpt_path, pretrain_recognizer, set_by_path, train_denoiser, RunConfig,
};
use facedepth::{depth::DatasetManifest, depth::Split, Error, Result};

#[derive(Parser)]
#[command(name = "facedepth", version, about)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

/// Configuration resolution shared by all subcommands: profile, then an
/// optional config file, then `--set` overrides in order, then `--seed`.
#[derive(Args)]
struct ConfigArgs {
    /// JSON run configuration; overrides the profile baseline.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dotted-path overrides, e.g. `--set denoiser.lr=0.0005`. Last wins.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Baseline profile when no config file is given.
    #[arg(long, default_value = "desk", value_parser = ["paper", "desk"])]
    profile: String,
    /// Override the run seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Run batch-level loops sequentially instead of in parallel.
    #[arg(long)]
    sequential: bool,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let base = match &self.config {
            Some(path) => RunConfig::from_json(&std::fs::read_to_string(path).map_err(|e| {
                Error::config(format!("cannot read config {}: {e}", path.display()))
            })?)?,
            None => match self.profile.as_str() {
                "paper" => RunConfig::paper(),
                _ => RunConfig::desk(),
            },
        };
        let mut doc = serde_json::to_value(&base).expect("config serialization");
        for item in &self.set {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| Error::config(format!("--set expects KEY=VALUE, got {item:?}")))?;
            set_by_path(&mut doc, key, value)?;
        }
        let mut cfg = RunConfig::from_json(&doc.to_string())?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn mode(&self) -> ExecMode {
        if self.sequential {
            ExecMode::Sequential
        } else {
            ExecMode::Parallel
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate the synthetic dataset and its manifest.
    Synth {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Dataset output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Degrade one depth map with the configured degradation.
    Degrade {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Resize and renormalize one depth map.
    Preprocess {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 128)]
        size: usize,
    },
    /// Train the denoiser on a synthesized dataset.
    TrainDenoiser {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Dataset directory holding manifest.json.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Recognizer checkpoint for the perceptual term.
        #[arg(long)]
        perceptual: Option<PathBuf>,
        /// Resume from an earlier denoiser checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Denoise one depth map with a trained checkpoint.
    Denoise {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Pretrain the recognizer on clean training maps.
    PretrainRecognizer {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finetune the pretrained recognizer on denoised maps.
    FinetuneRecognizer {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Denoiser checkpoint; defaults to <out>/denoiser.ckpt.
        #[arg(long)]
        denoiser: Option<PathBuf>,
        /// Pretraining checkpoint; defaults to <out>/recognizer_pretrain.ckpt.
        #[arg(long)]
        pretrain: Option<PathBuf>,
    },
    /// Evaluate denoising quality and rank-one identification on the test
    /// split.
    Evaluate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        denoiser: Option<PathBuf>,
        #[arg(long)]
        recognizer: Option<PathBuf>,
    },
    /// Print parameter and multiply-add counts for the fusion alternatives.
    CountParams,
    /// Export PNG panels (clean, degraded, denoised, normals) for test
    /// samples.
    ExportFigures {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Denoiser checkpoint; omit to skip the denoised panel.
        #[arg(long)]
        denoiser: Option<PathBuf>,
        /// Number of test samples to export.
        #[arg(long, default_value_t = 4)]
        count: usize,
    },
}

fn load_any(path: &Path) -> Result<DepthMap> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("pgm") => load_pgm16(path),
        _ => load_dmf(path),
    }
}

fn snapshot(out: &Path, cfg: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("config.json"), cfg.to_json())?;
    Ok(())
}

fn open_log(out: &Path, name: &str) -> Result<std::fs::File> {
    std::fs::create_dir_all(out)?;
    Ok(std::fs::File::create(out.join(name))?)
}

/// Grayscale panel of a depth map on `[0, 255]`.
fn depth_panel(d: &DepthMap) -> image::RgbImage {
    let (h, w) = d.values.dim();
    image::RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let (i, j) = (y as usize, x as usize);
        if d.mask[[i, j]] {
            let v = d.values[[i, j]].clamp(0.0, 255.0) as u8;
            image::Rgb([v, v, v])
        } else {
            image::Rgb([16, 0, 24])
        }
    })
}

/// RGB panel of the normal map, components mapped by `(n + 1) / 2`.
fn normal_panel(d: &DepthMap, gain: f64) -> image::RgbImage {
    let nm = compute_normal_map(d, gain);
    let (h, w, _) = nm.data.dim();
    image::RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let (i, j) = (y as usize, x as usize);
        let c = |k: usize| (((nm.data[[i, j, k]] + 1.0) / 2.0).clamp(0.0, 1.0) * 255.0) as u8;
        image::Rgb([c(0), c(1), c(2)])
    })
}

fn side_by_side(panels: &[image::RgbImage]) -> image::RgbImage {
    let h = panels.iter().map(|p| p.height()).max().unwrap_or(1);
    let gap = 2u32;
    let w: u32 = panels.iter().map(|p| p.width() + gap).sum::<u32>() - gap;
    let mut out = image::RgbImage::from_pixel(w, h, image::Rgb([255, 255, 255]));
    let mut x0 = 0u32;
    for p in panels {
        image::imageops::replace(&mut out, p, x0 as i64, 0);
        x0 += p.width() + gap;
    }
    out
}

fn run(cmd: Cmd) -> Result<serde_json::Value> {
    match cmd {
        Cmd::Synth { cfg, out } => {
            let cfg = cfg.resolve()?;
            let manifest = build_dataset(&out, &cfg.data, ExecMode::Parallel)?;
            snapshot(&out, &cfg)?;
            Ok(json!({"records": manifest.records.len(), "dir": out}))
        }
        Cmd::Degrade { cfg, input, output } => {
            let cfg = cfg.resolve()?;
            let map = load_any(&input)?;
            let deg = degrade(&map, &cfg.data.degrade, cfg.seed)?;
            save_dmf(&output, &deg)?;
            Ok(json!({"output": output}))
        }
        Cmd::Preprocess {
            input,
            output,
            size,
        } => {
            let map = load_any(&input)?;
            save_dmf(&output, &resize_normalize(&map, size)?)?;
            Ok(json!({"output": output, "size": size}))
        }
        Cmd::TrainDenoiser {
            cfg,
            data,
            out,
            perceptual,
            resume,
        } => {
            let cfg = cfg.resolve()?;
            snapshot(&out, &cfg)?;
            let mut log = open_log(&out, "train_denoiser.jsonl")?;
            let outcome = train_denoiser(
                &data,
                &out,
                &cfg,
                perceptual.as_deref(),
                resume.as_deref(),
                &mut log,
            )?;
            Ok(json!({
                "epochs_run": outcome.epochs_run,
                "steps": outcome.steps,
                "final_loss": outcome.final_loss,
                "psnr_gain_db": outcome.psnr_gain_db,
                "stopped_early": outcome.stopped_early,
                "checkpoint": denoiser_ckpt_path(&out),
            }))
        }
        Cmd::Denoise {
            ckpt,
            input,
            output,
        } => {
            let (mut store, net) = load_denoiser(&ckpt)?;
            let map = resize_normalize(&load_any(&input)?, net.cfg.grid)?;
            save_dmf(&output, &denoise(&net, &mut store, &map)?)?;
            Ok(json!({"output": output, "grid": net.cfg.grid}))
        }
        Cmd::PretrainRecognizer { cfg, data, out } => {
            let cfg = cfg.resolve()?;
            snapshot(&out, &cfg)?;
            let mut log = open_log(&out, "pretrain_recognizer.jsonl")?;
            let outcome = pretrain_recognizer(&data, &out, &cfg, &mut log)?;
            Ok(json!({
                "epochs_run": outcome.epochs_run,
                "steps": outcome.steps,
                "final_loss": outcome.final_loss,
                "checkpoint": pretrain_ckpt_path(&out),
            }))
        }
        Cmd::FinetuneRecognizer {
            cfg,
            data,
            out,
            denoiser,
            pretrain,
        } => {
            let cfg = cfg.resolve()?;
            snapshot(&out, &cfg)?;
            let den = denoiser.unwrap_or_else(|| denoiser_ckpt_path(&out));
            let pre = pretrain.unwrap_or_else(|| pretrain_ckpt_path(&out));
            let mut log = open_log(&out, "finetune_recognizer.jsonl")?;
            let outcome = finetune_recognizer(&data, &out, &cfg, &den, &pre, &mut log)?;
            Ok(json!({
                "epochs_run": outcome.epochs_run,
                "steps": outcome.steps,
                "final_loss": outcome.final_loss,
                "checkpoint": finetune_ckpt_path(&out),
            }))
        }
        Cmd::Evaluate {
            cfg,
            data,
            out,
            denoiser,
            recognizer,
        } => {
            let mode = cfg.mode();
            let cfg = cfg.resolve()?;
            snapshot(&out, &cfg)?;
            let den = denoiser.unwrap_or_else(|| denoiser_ckpt_path(&out));
            let rec = recognizer.unwrap_or_else(|| finetune_ckpt_path(&out));
            let summary = evaluate(&data, &out, &cfg, &den, &rec, mode)?;
            Ok(serde_json::to_value(&summary).expect("summary serialization"))
        }
        Cmd::CountParams => {
            let (pp, pm) = count_block(&plain_fusion_convblock())?;
            let (fp, fm) = count_block(&multibranch_fusion_block())?;
            Ok(json!({
                "plain_convblock": {"params": pp, "madds": pm},
                "fusion_block": {"params": fp, "madds": fm},
            }))
        }
        Cmd::ExportFigures {
            cfg,
            data,
            out,
            denoiser,
            count,
        } => {
            let cfg = cfg.resolve()?;
            let manifest = DatasetManifest::load(&data.join("manifest.json"))?;
            let samples = load_split(&data, &manifest, Split::Test, cfg.dmd.grid, Some(&cfg.data))?;
            let mut loaded = denoiser.map(|p| load_denoiser(&p)).transpose()?;
            std::fs::create_dir_all(&out)?;
            let mut written = Vec::new();
            for s in samples.iter().take(count.max(1)) {
                let mut panels = vec![depth_panel(&s.clean), depth_panel(&s.degraded)];
                if let Some((store, net)) = loaded.as_mut() {
                    panels.push(depth_panel(&denoise(net, store, &s.degraded)?));
                }
                panels.push(normal_panel(&s.clean, cfg.dmd.normal_gain));
                let path = out.join(format!("{}.png", s.name));
                side_by_side(&panels)
                    .save(&path)
                    .map_err(|e| Error::data(format!("cannot write {}: {e}", path.display())))?;
                written.push(path);
            }
            Ok(json!({"figures": written.len(), "dir": out}))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(v) => {
            println!("{v}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let kind = match &e {
                Error::Config(_) => "config",
                Error::Format(_) => "format",
                Error::InvalidInput(_) => "invalid_input",
                Error::Data(_) => "data",
                Error::Io(_) => "io",
            };
            eprintln!("{}", json!({"error": kind, "message": e.to_string()}));
            if matches!(e, Error::Config(_)) {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}
