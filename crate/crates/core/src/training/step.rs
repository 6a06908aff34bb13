use std::fmt;

use serde::{Deserialize, Serialize};

use super::losses::{adv_loss_d, adv_loss_g, affect_term, patch_term, rec_terms, values_f64};
use super::{Mode, TrainConfig, TrainError};
use crate::affect_metrics::{class_weights, AffectEstimate, ClassWeighting, Dimension};
use crate::data_pipeline::Batch;
use crate::models::{images_to_tensor, Cd, CdInputs, Model};
use crate::nn::{Adam, AdamConfig, Bound, Graph, Real, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    D,
    G,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::D => "discriminator step",
            Phase::G => "generator step",
        })
    }
}

/// Loss components of one update. Terms not computed in a phase are 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub step: u64,
    pub mode: Mode,
    pub phase: Phase,
    pub l_d: f64,
    pub l_g: f64,
    /// `adv_loss_d` in a D step, `adv_loss_g` in a G step.
    pub l_adv: f64,
    pub l_afc_r: f64,
    pub l_afc_f: f64,
    /// Denoise plus cycle term, before `λ_rec`.
    pub l_rec: f64,
}

impl StepReport {
    /// The phase's total rebuilt from the logged components.
    pub fn recompose(&self, cfg: &TrainConfig) -> f64 {
        match self.phase {
            Phase::D if self.mode == Mode::Disc => cfg.lambda_afc * self.l_afc_r,
            Phase::D => self.l_adv + cfg.lambda_afc * self.l_afc_r,
            Phase::G => self.l_adv + cfg.lambda_afc * self.l_afc_f + cfg.lambda_rec * self.l_rec,
        }
    }

    pub fn total(&self) -> f64 {
        match self.phase {
            Phase::D => self.l_d,
            Phase::G => self.l_g,
        }
    }
}

/// A batch converted to tensors for one model.
#[derive(Clone, Debug)]
pub struct BatchTensors<T: Real> {
    pub noisy: Tensor<T>,
    pub clean: Tensor<T>,
    /// Standardised audio vectors `[N, L]`.
    pub lld: Tensor<T>,
    pub labels: Vec<AffectEstimate>,
}

impl<T: Real> BatchTensors<T> {
    pub fn from_batch(batch: &Batch, cd: &Cd<T>) -> Result<Self, TrainError> {
        let size = cd.spec().image_size;
        if let Some(img) = batch.clean.iter().chain(&batch.noisy).find(|i| (i.height(), i.width()) != (size, size)) {
            return Err(TrainError::Incompatible(format!(
                "frame is {}x{} but the model expects {size}x{size}",
                img.height(),
                img.width()
            )));
        }
        Ok(Self {
            noisy: images_to_tensor(&batch.noisy),
            clean: images_to_tensor(&batch.clean),
            lld: cd.prepare_lld(&batch.lld)?,
            labels: batch.labels.clone(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Named scalar terms of the two objectives.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossTerm {
    AffectReal,
    AdvD,
    LD,
    AdvG,
    AffectFake,
    Rec,
    LG,
}

impl LossTerm {
    pub fn as_str(self) -> &'static str {
        match self {
            LossTerm::AffectReal => "affect_real",
            LossTerm::AdvD => "adv_d",
            LossTerm::LD => "L_D",
            LossTerm::AdvG => "adv_g",
            LossTerm::AffectFake => "affect_fake",
            LossTerm::Rec => "rec",
            LossTerm::LG => "L_G",
        }
    }
}

/// A loss graph with the trainable network bound as leaves.
pub(crate) struct LossGraph<T: Real> {
    pub g: Graph<T>,
    pub bound: Bound,
    pub total: Var,
    /// Unweighted terms, including the total.
    pub terms: Vec<(LossTerm, Var, f64)>,
    /// `[N, 2]` affect predictions of the branch that carries the labels.
    pub affect: Var,
}

impl<T: Real> LossGraph<T> {
    pub fn value(&self, term: LossTerm) -> f64 {
        self.terms.iter().find(|t| t.0 == term).map_or(0.0, |t| t.2)
    }

    fn check_finite(&self, step: u64, phase: Phase) -> Result<(), TrainError> {
        match self.terms.iter().find(|t| !t.2.is_finite()) {
            Some(t) => Err(TrainError::NonFinite { step, phase, term: t.0.as_str() }),
            None => Ok(()),
        }
    }
}

fn zero_latent<T: Real>(model: &Model<T>, n: usize) -> Tensor<T> {
    let c = &model.spec.cd;
    Tensor::zeros(&[n, c.z_channels, c.injection_size(), c.injection_size()])
}

/// Latent code handed to the CD at inference: live `z` or zeros.
pub(crate) fn latent_for<T: Real>(model: &Model<T>, mode: Mode, z: Tensor<T>) -> Tensor<T> {
    if mode.latent_on() {
        z
    } else {
        let n = z.shape()[0];
        zero_latent(model, n)
    }
}

/// `L_D` with the CD trainable. The generator's output enters as a constant.
pub(crate) fn build_d<T: Real>(
    model: &Model<T>,
    bt: &BatchTensors<T>,
    cfg: &TrainConfig,
    weights: [&ClassWeighting; 2],
) -> Result<LossGraph<T>, TrainError> {
    let mut g = Graph::new();
    let bound = model.cd.bind(&mut g, true);
    let n = bt.len();
    let lld = g.constant(bt.lld.clone());
    let noisy = g.constant(bt.noisy.clone());
    if cfg.mode == Mode::Disc {
        let z = g.constant(zero_latent(model, n));
        let inputs = CdInputs { image: noisy, noisy: Some(noisy), lld, z, audio_on: true };
        let out = model.cd.forward_graph(&mut g, &bound, inputs)?;
        let (afc, v) = affect_term(&mut g, out.affect, &bt.labels, weights, cfg.mode_affect_loss())?;
        let total = g.weighted_sum(&[(afc, cfg.lambda_afc)]);
        let l_d = cfg.lambda_afc * v;
        return Ok(LossGraph {
            g,
            bound,
            total,
            terms: vec![(LossTerm::AffectReal, afc, v), (LossTerm::LD, total, l_d)],
            affect: out.affect,
        });
    }
    let (fake, z) = model.aeg.forward(&bt.noisy)?;
    let z = g.constant(latent_for(model, cfg.mode, z));
    let fake = g.constant(fake);
    let clean = g.constant(bt.clean.clone());
    let audio_on = cfg.mode.audio_on();
    let real = model.cd.forward_graph(&mut g, &bound, CdInputs { image: clean, noisy: Some(noisy), lld, z, audio_on })?;
    let judged = model.cd.forward_graph(&mut g, &bound, CdInputs { image: fake, noisy: Some(noisy), lld, z, audio_on })?;
    let (r, f) = (values_f64(&g, real.patch), values_f64(&g, judged.patch));
    let (adv, gr, gf) = adv_loss_d(&r, &f, cfg.adv_loss);
    let adv_real = adv_loss_d(&r, &[], cfg.adv_loss).0;
    let ar = patch_term(&mut g, real.patch, adv_real, &gr);
    let af = patch_term(&mut g, judged.patch, adv - adv_real, &gf);
    let adv_var = g.weighted_sum(&[(ar, 1.0), (af, 1.0)]);
    let (afc, v) = affect_term(&mut g, real.affect, &bt.labels, weights, cfg.mode_affect_loss())?;
    let total = g.weighted_sum(&[(adv_var, 1.0), (afc, cfg.lambda_afc)]);
    let l_d = adv + cfg.lambda_afc * v;
    Ok(LossGraph {
        g,
        bound,
        total,
        terms: vec![(LossTerm::AdvD, adv_var, adv), (LossTerm::AffectReal, afc, v), (LossTerm::LD, total, l_d)],
        affect: real.affect,
    })
}

/// `L_G` with the AEG trainable and the CD frozen.
pub(crate) fn build_g<T: Real>(
    model: &Model<T>,
    bt: &BatchTensors<T>,
    cfg: &TrainConfig,
    weights: [&ClassWeighting; 2],
) -> Result<LossGraph<T>, TrainError> {
    if !cfg.mode.uses_aeg() {
        return Err(TrainError::NoGenerator);
    }
    let mut g = Graph::new();
    let bound = model.aeg.bind(&mut g, true);
    let frozen = model.cd.bind(&mut g, false);
    let n = bt.len();
    let noisy = g.constant(bt.noisy.clone());
    let clean = g.constant(bt.clean.clone());
    let lld = g.constant(bt.lld.clone());
    let out = model.aeg.forward_graph(&mut g, &bound, noisy);
    let z = if cfg.mode.latent_on() { out.z } else { g.constant(zero_latent(model, n)) };
    let inputs = CdInputs { image: out.image, noisy: Some(noisy), lld, z, audio_on: cfg.mode.audio_on() };
    let judged = model.cd.forward_graph(&mut g, &frozen, inputs)?;
    let f = values_f64(&g, judged.patch);
    let (adv, gf) = adv_loss_g(&f, cfg.adv_loss);
    let adv_var = patch_term(&mut g, judged.patch, adv, &gf);
    let (afc, v) = affect_term(&mut g, judged.affect, &bt.labels, weights, cfg.mode_affect_loss())?;
    let (denoise, cycle) = rec_terms(&mut g, &model.aeg, &bound, clean, out.image);
    let rec = g.weighted_sum(&[(denoise, 1.0), (cycle, 1.0)]);
    let rec_v = g.value(rec).item().to_f64_lossy();
    let total = g.weighted_sum(&[(adv_var, 1.0), (afc, cfg.lambda_afc), (rec, cfg.lambda_rec)]);
    let l_g = adv + cfg.lambda_afc * v + cfg.lambda_rec * rec_v;
    Ok(LossGraph {
        g,
        bound,
        total,
        terms: vec![
            (LossTerm::AdvG, adv_var, adv),
            (LossTerm::AffectFake, afc, v),
            (LossTerm::Rec, rec, rec_v),
            (LossTerm::LG, total, l_g),
        ],
        affect: judged.affect,
    })
}

/// Per-dimension class weights over a label set.
pub fn label_weights(labels: &[AffectEstimate], cfg: &TrainConfig) -> Result<[ClassWeighting; 2], TrainError> {
    let w = |d: Dimension| {
        let xs: Vec<f64> = labels.iter().map(|e| e.get(d)).collect();
        class_weights(&xs, cfg.n_bins, cfg.weighting)
    };
    Ok([w(Dimension::Valence)?, w(Dimension::Arousal)?])
}

/// Owns the model, both optimizers and the class weights.
pub struct Trainer<T: Real> {
    pub model: Model<T>,
    pub config: TrainConfig,
    opt_d: Adam<T>,
    opt_g: Adam<T>,
    weights: [ClassWeighting; 2],
    step: u64,
}

impl<T: Real> Trainer<T> {
    /// Class weights are histogrammed from `train_labels`.
    pub fn new(model: Model<T>, config: TrainConfig, train_labels: &[AffectEstimate]) -> Result<Self, TrainError> {
        config.validate()?;
        let weights = label_weights(train_labels, &config)?;
        let adam = |lr| AdamConfig { lr, beta1: config.beta1, beta2: config.beta2, ..AdamConfig::default() };
        let opt_d = Adam::new(adam(config.d_lr), model.cd.params());
        let opt_g = Adam::new(adam(config.g_lr), model.aeg.params());
        Ok(Self { model, config, opt_d, opt_g, weights, step: 0 })
    }

    pub fn weights(&self) -> [&ClassWeighting; 2] {
        [&self.weights[0], &self.weights[1]]
    }

    /// Updates applied so far, both phases.
    pub fn steps(&self) -> u64 {
        self.step
    }

    fn tensors(&self, batch: &Batch) -> Result<BatchTensors<T>, TrainError> {
        if batch.len() < 2 {
            return Err(TrainError::InvalidConfig(format!("batch of {} samples; at least 2 needed", batch.len())));
        }
        BatchTensors::from_batch(batch, &self.model.cd)
    }

    /// One CD update. Also returns the affect predictions of the supervised
    /// branch, taken before the update.
    pub fn d_step_with_predictions(&mut self, batch: &Batch) -> Result<(StepReport, Vec<AffectEstimate>), TrainError> {
        let bt = self.tensors(batch)?;
        let lg = build_d(&self.model, &bt, &self.config, self.weights())?;
        lg.check_finite(self.step, Phase::D)?;
        let preds = values_f64(&lg.g, lg.affect).chunks(2).map(|c| AffectEstimate::new(c[0], c[1])).collect();
        let mut grads = lg.g.backward(lg.total);
        let grads = self.model.cd.params().collect_grads(&mut grads, &lg.bound);
        if grads.iter().any(|t| !t.is_finite()) {
            return Err(TrainError::NonFinite { step: self.step, phase: Phase::D, term: "CD gradient" });
        }
        self.opt_d.step(self.model.cd.params_mut(), &grads);
        let report = StepReport {
            step: self.step,
            mode: self.config.mode,
            phase: Phase::D,
            l_d: lg.value(LossTerm::LD),
            l_g: 0.0,
            l_adv: lg.value(LossTerm::AdvD),
            l_afc_r: lg.value(LossTerm::AffectReal),
            l_afc_f: 0.0,
            l_rec: 0.0,
        };
        self.step += 1;
        Ok((report, preds))
    }

    pub fn d_step(&mut self, batch: &Batch) -> Result<StepReport, TrainError> {
        self.d_step_with_predictions(batch).map(|r| r.0)
    }

    /// One AEG update against the frozen CD.
    pub fn g_step(&mut self, batch: &Batch) -> Result<StepReport, TrainError> {
        let bt = self.tensors(batch)?;
        let lg = build_g(&self.model, &bt, &self.config, self.weights())?;
        lg.check_finite(self.step, Phase::G)?;
        let mut grads = lg.g.backward(lg.total);
        let grads = self.model.aeg.params().collect_grads(&mut grads, &lg.bound);
        if grads.iter().any(|t| !t.is_finite()) {
            return Err(TrainError::NonFinite { step: self.step, phase: Phase::G, term: "AEG gradient" });
        }
        self.opt_g.step(self.model.aeg.params_mut(), &grads);
        let report = StepReport {
            step: self.step,
            mode: self.config.mode,
            phase: Phase::G,
            l_d: 0.0,
            l_g: lg.value(LossTerm::LG),
            l_adv: lg.value(LossTerm::AdvG),
            l_afc_r: 0.0,
            l_afc_f: lg.value(LossTerm::AffectFake),
            l_rec: lg.value(LossTerm::Rec),
        };
        self.step += 1;
        Ok(report)
    }
}

pub fn d_step<T: Real>(trainer: &mut Trainer<T>, batch: &Batch) -> Result<StepReport, TrainError> {
    trainer.d_step(batch)
}

pub fn g_step<T: Real>(trainer: &mut Trainer<T>, batch: &Batch) -> Result<StepReport, TrainError> {
    trainer.g_step(batch)
}
