use std::path::{Path, PathBuf};

use affectgan_core::audio_features::write_lld_vectors;
use affectgan_core::data_pipeline::{
    generate_synthetic_dataset, load_clip, load_manifest, FrameDataset, Image, LldSource, NoiseSpec, SynthConfig,
    TRAIN_SPLIT,
};
use affectgan_core::models::{images_to_tensor, load_checkpoint, tensor_to_images, Checkpoint};
use affectgan_core::training::{
    evaluate_model, train_with, EvalOptions, TrainConfig, BEST_CHECKPOINT, HISTORY_FILE, LAST_CHECKPOINT,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{config_hash, RunConfig};
use crate::{CliError, DenoiseArgs, EvalArgs, FeaturesArgs, SynthArgs, TrainArgs};

pub const RUN_MANIFEST: &str = "run.json";

pub struct Context {
    pub json: bool,
    pub seed: Option<u64>,
}

impl Context {
    /// Prints `value` as JSON, or `human` otherwise.
    fn emit(&self, value: &Value, human: &str) {
        if self.json {
            println!("{}", serde_json::to_string_pretty(value).expect("json value"));
        } else {
            println!("{human}");
        }
    }
}

#[derive(Serialize)]
struct RunManifest<'a, C: Serialize> {
    command: &'a str,
    cli_version: &'a str,
    core_version: &'a str,
    config_hash: String,
    seed: u64,
    config: &'a C,
    outputs: Vec<String>,
}

fn write_run_manifest<C: Serialize>(
    out: &Path,
    command: &str,
    seed: u64,
    config: &C,
    outputs: Vec<String>,
) -> Result<(), CliError> {
    let m = RunManifest {
        command,
        cli_version: env!("CARGO_PKG_VERSION"),
        core_version: affectgan_core::VERSION,
        config_hash: config_hash(config),
        seed,
        config,
        outputs,
    };
    let path = out.join(RUN_MANIFEST);
    let text = serde_json::to_string_pretty(&m).expect("manifest serialises") + "\n";
    std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// `fallback`, `vectors:DIR` or `csv:DIR`.
pub fn parse_lld_source(s: &str) -> Result<LldSource, CliError> {
    match s.split_once(':') {
        None if s == "fallback" => Ok(LldSource::Fallback),
        Some(("vectors", dir)) if !dir.is_empty() => Ok(LldSource::Vectors(dir.into())),
        Some(("csv", dir)) if !dir.is_empty() => Ok(LldSource::Precomputed(dir.into())),
        _ => Err(CliError::Usage(format!("unknown audio source '{s}' (expected fallback, vectors:DIR or csv:DIR)"))),
    }
}

pub fn synth_data(ctx: &Context, a: &SynthArgs) -> Result<(), CliError> {
    let config = SynthConfig {
        n_subjects: a.subjects as usize,
        clips_per_subject: a.clips as usize,
        frames_per_clip: a.frames as usize,
        image_size: a.size,
        fps: a.fps,
        audio_rate: a.audio_rate,
        seed: ctx.seed.unwrap_or(0),
        val_fraction: a.val_fraction,
    };
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let manifest = generate_synthetic_dataset(&config, &a.out)?;
    write_run_manifest(&a.out, "synth-data", config.seed, &config, vec!["manifest.json".into(), "clips".into()])?;
    let splits: Vec<Value> = manifest
        .splits()
        .into_iter()
        .map(|s| json!({"split": s, "clips": manifest.clips_in(s).count(), "frames": manifest.total_frames(s)}))
        .collect();
    let manifest_path = a.out.join("manifest.json");
    ctx.emit(
        &json!({"manifest": manifest_path, "clips": manifest.clips.len(), "splits": splits}),
        &format!("wrote {} clips to {}", manifest.clips.len(), manifest_path.display()),
    );
    Ok(())
}

pub fn features(ctx: &Context, a: &FeaturesArgs) -> Result<(), CliError> {
    let source = match parse_lld_source(&a.source)? {
        LldSource::Vectors(_) => return Err(CliError::Usage("features reads fallback or csv:DIR sources".into())),
        s => s,
    };
    let manifest = load_manifest(&a.manifest)?;
    create_dir(&a.out)?;
    let (mut frames, mut dim) = (0, 0);
    let mut outputs = Vec::new();
    for entry in &manifest.clips {
        let clip = load_clip(&manifest.root, entry)?;
        let vectors = source.vectors_for(&clip)?;
        dim = vectors[0].len();
        frames += vectors.len();
        let name = format!("{}.csv", entry.id);
        write_lld_vectors(&a.out.join(&name), &vectors)?;
        outputs.push(name);
    }
    let cfg = json!({"manifest": a.manifest, "source": a.source});
    write_run_manifest(&a.out, "features", ctx.seed.unwrap_or(0), &cfg, outputs)?;
    ctx.emit(
        &json!({"out": a.out, "clips": manifest.clips.len(), "frames": frames, "dim": dim}),
        &format!("wrote {frames} vectors of length {dim} for {} clips to {}", manifest.clips.len(), a.out.display()),
    );
    Ok(())
}

fn effective_config(ctx: &Context, a: &TrainArgs) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(&a.config)?;
    if let Some(mode) = a.mode {
        cfg.train.mode = mode;
    }
    if let Some(epochs) = a.epochs {
        cfg.train.epochs = epochs;
    }
    if let Some(seed) = ctx.seed {
        cfg.train.seed = seed;
    }
    Ok(cfg)
}

pub fn train(ctx: &Context, a: &TrainArgs) -> Result<(), CliError> {
    let cfg = effective_config(ctx, a)?;
    if a.dump_config {
        print!("{}", cfg.to_toml()?);
        return Ok(());
    }
    cfg.validate()?;
    let out = a.out.clone().expect("clap requires --out");
    let base = a.config.parent().unwrap_or(Path::new("."));
    let resolved = cfg.resolved(base);
    let manifest = load_manifest(&resolved.data.manifest)?;
    let train_ds = FrameDataset::load(&manifest, TRAIN_SPLIT, &resolved.data.lld_source)?;
    let val_ds = FrameDataset::load(&manifest, &resolved.eval.split, &resolved.data.lld_source)?;
    create_dir(&out)?;
    std::fs::write(out.join("config.toml"), cfg.to_toml()?).map_err(|e| CliError::io(&out, e))?;
    let outcome = train_with(
        &train_ds,
        &val_ds,
        &resolved.data.noise,
        &resolved.train,
        &resolved.model,
        &out,
        |history, _| {
            if let [tr, va] = &history[history.len() - 2..] {
                eprintln!(
                    "epoch {:>3}  L_D {:.4}  L_G {:.4}  train ccc {:.3}/{:.3}  {} ccc {:.3}/{:.3}",
                    va.epoch,
                    va.l_d,
                    va.l_g,
                    tr.metrics.valence_ccc,
                    tr.metrics.arousal_ccc,
                    va.split,
                    va.metrics.valence_ccc,
                    va.metrics.arousal_ccc
                );
            }
        },
    )?;
    let outputs = ["config.toml", HISTORY_FILE, BEST_CHECKPOINT, LAST_CHECKPOINT].map(String::from).to_vec();
    write_run_manifest(&out, "train", resolved.train.seed, &resolved, outputs)?;
    let (aeg, cd) = outcome.checksums();
    ctx.emit(
        &json!({
            "out": out,
            "mode": resolved.train.mode,
            "epochs": resolved.train.epochs,
            "best_epoch": outcome.best_epoch,
            "best_val_mean_ccc": outcome.best_val_ccc,
            "final": outcome.history.last().map(|r| &r.metrics),
            "aeg_checksum": aeg,
            "cd_checksum": cd,
        }),
        &format!(
            "trained {} for {} epochs; best mean {} CCC {:.4} at epoch {}; outputs in {}",
            resolved.train.mode,
            resolved.train.epochs,
            resolved.eval.split,
            outcome.best_val_ccc,
            outcome.best_epoch,
            out.display()
        ),
    );
    Ok(())
}

fn checkpoint_meta<T: serde::de::DeserializeOwned>(ck: &Checkpoint, key: &str) -> Result<T, CliError> {
    let raw = ck.metadata.get(key).ok_or_else(|| CliError::Metadata(format!("missing '{key}'")))?;
    serde_json::from_str(raw).map_err(|e| CliError::Metadata(format!("{key}: {e}")))
}

pub fn eval(ctx: &Context, a: &EvalArgs) -> Result<(), CliError> {
    let ck = load_checkpoint(&a.checkpoint)?;
    let train_cfg: TrainConfig = checkpoint_meta(&ck, "train_config")?;
    let noise: NoiseSpec = checkpoint_meta(&ck, "noise")?;
    let mode = a.mode.unwrap_or(train_cfg.mode);
    let opts = EvalOptions {
        zero_latent: a.zero_latent,
        noisy_inputs: train_cfg.eval_noisy && !a.clean,
        batch_size: a.batch_size.max(1),
        seed: ctx.seed.unwrap_or(train_cfg.seed),
    };
    let manifest = load_manifest(&a.manifest)?;
    let ds = FrameDataset::load(&manifest, &a.split, &parse_lld_source(&a.lld_source)?)?;
    let report = evaluate_model(&ck.model, mode, &ds, &noise, &opts)?;
    if let Some(out) = &a.out {
        create_dir(out)?;
        let j = out.join("metrics.json");
        std::fs::write(&j, serde_json::to_string_pretty(&report).expect("report") + "\n").map_err(|e| CliError::io(&j, e))?;
        let c = out.join("metrics.csv");
        std::fs::write(&c, report.to_csv()).map_err(|e| CliError::io(&c, e))?;
        let cfg = json!({
            "checkpoint": a.checkpoint,
            "manifest": a.manifest,
            "split": a.split,
            "lld_source": a.lld_source,
            "mode": mode,
            "options": opts,
        });
        write_run_manifest(out, "eval", opts.seed, &cfg, vec!["metrics.json".into(), "metrics.csv".into()])?;
    }
    ctx.emit(&serde_json::to_value(&report).expect("report"), report.to_csv().trim_end());
    Ok(())
}

fn png_inputs(input: &Path) -> Result<Vec<PathBuf>, CliError> {
    if input.is_file() {
        return Ok(vec![input.to_path_buf()]);
    }
    let rd = std::fs::read_dir(input).map_err(|e| CliError::io(input, e))?;
    let mut files = Vec::new();
    for entry in rd {
        let p = entry.map_err(|e| CliError::io(input, e))?.path();
        if p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
            files.push(p);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(CliError::Usage(format!("no PNG files in {}", input.display())));
    }
    Ok(files)
}

pub fn denoise(ctx: &Context, a: &DenoiseArgs) -> Result<(), CliError> {
    let ck = load_checkpoint(&a.checkpoint)?;
    let size = ck.model.spec.aeg.image_size;
    let files = png_inputs(&a.input)?;
    create_dir(&a.out)?;
    let mut outputs = Vec::new();
    for path in &files {
        let img = Image::read_png(path)?;
        if (img.height(), img.width()) != (size, size) {
            return Err(CliError::Usage(format!(
                "{} is {}x{}, the checkpoint expects {size}x{size}",
                path.display(),
                img.height(),
                img.width()
            )));
        }
        let (out, _) = ck.model.aeg.forward(&images_to_tensor::<f32>(std::slice::from_ref(&img)))?;
        let mut den = tensor_to_images(&out).remove(0);
        den.clamp01();
        let name = path.file_name().expect("file path").to_string_lossy().into_owned();
        den.write_png(&a.out.join(&name))?;
        outputs.push(name);
    }
    let cfg = json!({"checkpoint": a.checkpoint, "input": a.input});
    write_run_manifest(&a.out, "denoise", ctx.seed.unwrap_or(0), &cfg, outputs)?;
    ctx.emit(
        &json!({"out": a.out, "images": files.len()}),
        &format!("denoised {} images into {}", files.len(), a.out.display()),
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lld_source_strings() {
        assert_eq!(parse_lld_source("fallback").unwrap(), LldSource::Fallback);
        assert_eq!(parse_lld_source("csv:a/b").unwrap(), LldSource::Precomputed("a/b".into()));
        assert_eq!(parse_lld_source("vectors:f").unwrap(), LldSource::Vectors("f".into()));
        for bad in ["", "csv:", "wav:x", "fallback:x"] {
            assert!(matches!(parse_lld_source(bad), Err(CliError::Usage(_))), "{bad}");
        }
    }
}
