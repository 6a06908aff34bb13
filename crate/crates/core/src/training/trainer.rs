use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::step::{latent_for, BatchTensors, Trainer};
use super::{Mode, TrainConfig, TrainError};
use crate::affect_metrics::{evaluate, AffectEstimate, MetricsReport, ReportMeta};
use crate::data_pipeline::{psnr, FrameDataset, NoiseSpec, TRAIN_SPLIT};
use crate::models::{save_checkpoint, tensor_to_images, LldNorm, Model, ModelSpec};
use crate::nn::{Real, Tensor};

pub const HISTORY_HEADER: &str = "epoch,split,mse_v,mse_a,cor_v,cor_a,ccc_v,ccc_a,L_D,L_G";

pub const HISTORY_FILE: &str = "history.csv";
pub const BEST_CHECKPOINT: &str = "best.safetensors";
pub const LAST_CHECKPOINT: &str = "last.safetensors";

/// One line of the history CSV. Both rows of an epoch carry that epoch's
/// mean training losses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub epoch: usize,
    pub split: String,
    pub metrics: MetricsReport,
    pub l_d: f64,
    pub l_g: f64,
}

impl HistoryRow {
    pub fn to_csv(&self) -> String {
        let m = &self.metrics;
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.epoch,
            self.split,
            m.valence_mse,
            m.arousal_mse,
            m.valence_cor,
            m.arousal_cor,
            m.valence_ccc,
            m.arousal_ccc,
            self.l_d,
            self.l_g
        )
    }
}

pub fn history_csv(rows: &[HistoryRow]) -> String {
    let mut s = format!("{HISTORY_HEADER}\n");
    for r in rows {
        s.push_str(&r.to_csv());
        s.push('\n');
    }
    s
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    /// Replace the latent code by zeros (ablation).
    pub zero_latent: bool,
    /// Corrupt inputs with the noise model; otherwise feed clean frames.
    pub noisy_inputs: bool,
    pub batch_size: usize,
    /// Seed of the fixed evaluation corruption.
    pub seed: u64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { zero_latent: false, noisy_inputs: true, batch_size: 32, seed: 0 }
    }
}

/// Affect predictions for every frame of `ds` in manifest order.
///
/// AEG modes judge the generator's output; mode disc judges the input frame.
pub fn predict<T: Real>(
    model: &Model<T>,
    mode: Mode,
    ds: &FrameDataset,
    noise: &NoiseSpec,
    opts: &EvalOptions,
) -> Result<Vec<AffectEstimate>, TrainError> {
    let mut out = Vec::with_capacity(ds.len());
    for batch in ds.eval_batches(opts.batch_size.max(1), opts.seed, noise)? {
        let bt = BatchTensors::from_batch(&batch, &model.cd)?;
        let input = if opts.noisy_inputs { &bt.noisy } else { &bt.clean };
        let n = bt.len();
        let zeros = || {
            let c = &model.spec.cd;
            Tensor::zeros(&[n, c.z_channels, c.injection_size(), c.injection_size()])
        };
        let affect = if mode.uses_aeg() {
            let (fake, z) = model.aeg.forward(input)?;
            let z = if opts.zero_latent { zeros() } else { latent_for(model, mode, z) };
            model.cd.forward(&fake, Some(input), &batch.lld, &z, mode.audio_on())?.1
        } else {
            model.cd.forward(input, Some(input), &batch.lld, &zeros(), true)?.1
        };
        out.extend(affect.data().chunks(2).map(|c| AffectEstimate::new(c[0].to_f64_lossy(), c[1].to_f64_lossy())));
    }
    Ok(out)
}

pub fn evaluate_model<T: Real>(
    model: &Model<T>,
    mode: Mode,
    ds: &FrameDataset,
    noise: &NoiseSpec,
    opts: &EvalOptions,
) -> Result<MetricsReport, TrainError> {
    let preds = predict(model, mode, ds, noise, opts)?;
    let report = evaluate(&preds, &ds.labels())?;
    Ok(report.with_meta(ReportMeta { mode: mode.to_string(), seed: opts.seed, split: ds.split().to_owned() }))
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub history: Vec<HistoryRow>,
    /// Epoch with the highest mean validation CCC (0 if none improved on
    /// the initial state).
    pub best_epoch: usize,
    pub best_val_ccc: f64,
    pub history_path: PathBuf,
    pub best_checkpoint: PathBuf,
    pub last_checkpoint: PathBuf,
    pub model: Model<f32>,
}

impl TrainOutcome {
    /// SHA-256 of the final AEG and CD parameters.
    pub fn checksums(&self) -> (String, String) {
        (self.model.aeg.params().checksum(), self.model.cd.params().checksum())
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TrainError + '_ {
    move |source| TrainError::Io { path: path.display().to_string(), source }
}

/// Checkpoint metadata that lets `eval` reproduce the logged validation.
pub fn checkpoint_metadata(cfg: &TrainConfig, noise: &NoiseSpec, epoch: usize) -> BTreeMap<String, String> {
    let mut m = BTreeMap::new();
    m.insert("train_config".into(), serde_json::to_string(cfg).expect("config serialises"));
    m.insert("noise".into(), serde_json::to_string(noise).expect("noise spec serialises"));
    m.insert("mode".into(), cfg.mode.to_string());
    m.insert("epoch".into(), epoch.to_string());
    m
}

fn check_fit(ds: &FrameDataset, spec: &ModelSpec) -> Result<(), TrainError> {
    let s = spec.cd.image_size;
    if ds.image_size() != (s, s) {
        let (h, w) = ds.image_size();
        return Err(TrainError::Incompatible(format!("{} frames are {h}x{w}, model expects {s}x{s}", ds.split())));
    }
    if ds.lld_len() != spec.cd.lld_len {
        return Err(TrainError::Incompatible(format!(
            "{} audio vectors have length {}, model expects {}",
            ds.split(),
            ds.lld_len(),
            spec.cd.lld_len
        )));
    }
    Ok(())
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

pub fn train(
    train_ds: &FrameDataset,
    val_ds: &FrameDataset,
    noise: &NoiseSpec,
    cfg: &TrainConfig,
    spec: &ModelSpec,
    out_dir: &Path,
) -> Result<TrainOutcome, TrainError> {
    train_with(train_ds, val_ds, noise, cfg, spec, out_dir, |_, _| {})
}

/// [`train`] with a callback after every epoch, given the history so far and
/// the current model.
pub fn train_with(
    train_ds: &FrameDataset,
    val_ds: &FrameDataset,
    noise: &NoiseSpec,
    cfg: &TrainConfig,
    spec: &ModelSpec,
    out_dir: &Path,
    mut on_epoch: impl FnMut(&[HistoryRow], &Model<f32>),
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    spec.validate()?;
    noise.validate()?;
    check_fit(train_ds, spec)?;
    check_fit(val_ds, spec)?;
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let history_path = out_dir.join(HISTORY_FILE);
    let best_checkpoint = out_dir.join(BEST_CHECKPOINT);
    let last_checkpoint = out_dir.join(LAST_CHECKPOINT);

    let mut model = Model::<f32>::new(spec.clone(), cfg.seed)?;
    model.cd.set_lld_norm(LldNorm::fit(&train_ds.lld_vectors()))?;
    let mut trainer = Trainer::new(model, cfg.clone(), &train_ds.labels())?;
    save_checkpoint(&last_checkpoint, &trainer.model, &checkpoint_metadata(cfg, noise, 0))?;

    let eval_opts = EvalOptions { noisy_inputs: cfg.eval_noisy, seed: cfg.seed, ..EvalOptions::default() };
    let mut history = Vec::new();
    let mut best = (0, f64::NEG_INFINITY);
    for epoch in 1..=cfg.epochs {
        let (mut l_d, mut l_g) = (Vec::new(), Vec::new());
        let (mut preds, mut labels) = (Vec::new(), Vec::new());
        let mut d_count = 0usize;
        for batch in train_ds.batches(cfg.batch_size, cfg.seed, epoch as u64, noise)? {
            // a trailing single frame cannot form a batch
            if batch.len() < 2 {
                continue;
            }
            let (report, p) = trainer.d_step_with_predictions(&batch)?;
            l_d.push(report.l_d);
            preds.extend(p);
            labels.extend_from_slice(&batch.labels);
            d_count += 1;
            if cfg.mode.uses_aeg() && d_count % cfg.d_steps_per_g == 0 {
                l_g.push(trainer.g_step(&batch)?.l_g);
            }
        }
        let (l_d, l_g) = (mean(&l_d), mean(&l_g));
        let meta = |split: &str| ReportMeta { mode: cfg.mode.to_string(), seed: cfg.seed, split: split.to_owned() };
        let train_metrics = evaluate(&preds, &labels)?.with_meta(meta(TRAIN_SPLIT));
        let val_metrics = evaluate_model(&trainer.model, cfg.mode, val_ds, noise, &eval_opts)?;
        let val_ccc = val_metrics.mean_ccc();
        history.push(HistoryRow { epoch, split: TRAIN_SPLIT.into(), metrics: train_metrics, l_d, l_g });
        history.push(HistoryRow { epoch, split: val_ds.split().into(), metrics: val_metrics, l_d, l_g });
        std::fs::write(&history_path, history_csv(&history)).map_err(io_err(&history_path))?;
        let mut meta = checkpoint_metadata(cfg, noise, epoch);
        meta.insert("val_mean_ccc".into(), val_ccc.to_string());
        save_checkpoint(&last_checkpoint, &trainer.model, &meta)?;
        if val_ccc > best.1 {
            best = (epoch, val_ccc);
            save_checkpoint(&best_checkpoint, &trainer.model, &meta)?;
        }
        on_epoch(&history, &trainer.model);
    }
    if best.0 == 0 {
        // zero epochs: the initial state is the only candidate
        std::fs::copy(&last_checkpoint, &best_checkpoint).map_err(io_err(&best_checkpoint))?;
        std::fs::write(&history_path, history_csv(&history)).map_err(io_err(&history_path))?;
    }
    Ok(TrainOutcome {
        history,
        best_epoch: best.0,
        best_val_ccc: best.1,
        history_path,
        best_checkpoint,
        last_checkpoint,
        model: trainer.model,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PsnrSummary {
    /// Mean PSNR(noisy, clean) in dB.
    pub noisy: f64,
    /// Mean PSNR(AEG(noisy), clean) in dB.
    pub denoised: f64,
    pub frames: usize,
    /// Frames whose corruption drew no stage; their input PSNR is infinite,
    /// so they are left out of both means.
    pub skipped_identity: usize,
}

impl PsnrSummary {
    pub fn gain(&self) -> f64 {
        self.denoised - self.noisy
    }
}

/// PSNR of corrupted inputs and AEG outputs against the clean frames, over
/// the fixed evaluation corruption of `ds`.
pub fn denoising_psnr<T: Real>(
    model: &Model<T>,
    ds: &FrameDataset,
    noise: &NoiseSpec,
    seed: u64,
) -> Result<PsnrSummary, TrainError> {
    let mut s = PsnrSummary { noisy: 0.0, denoised: 0.0, frames: 0, skipped_identity: 0 };
    for batch in ds.eval_batches(32, seed, noise)? {
        let bt = BatchTensors::from_batch(&batch, &model.cd)?;
        let (out, _) = model.aeg.forward(&bt.noisy)?;
        for ((den, noisy), clean) in tensor_to_images(&out).iter().zip(&batch.noisy).zip(&batch.clean) {
            if noisy == clean {
                s.skipped_identity += 1;
                continue;
            }
            s.noisy += psnr(noisy, clean);
            s.denoised += psnr(den, clean).min(100.0);
            s.frames += 1;
        }
    }
    let n = s.frames.max(1) as f64;
    s.noisy /= n;
    s.denoised /= n;
    Ok(s)
}
