use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::step::{build_d, build_g, label_weights, BatchTensors, LossGraph, LossTerm, Phase};
use super::{TrainConfig, TrainError};
use crate::data_pipeline::Batch;
use crate::models::Model;
use crate::nn::{ParamId, ParamStore, Real, Tensor};

/// Gradients below this magnitude are compared absolutely: relative error
/// is `|a − n| / max(|a|, |n|, AUDIT_FLOOR)`.
pub const AUDIT_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditOptions {
    /// Coordinates sampled per network.
    pub n_params: usize,
    pub h: f64,
    pub seed: u64,
}

impl Default for AuditOptions {
    fn default() -> Self {
        Self { n_params: 24, h: 1e-5, seed: 0 }
    }
}

/// Agreement for one loss term over the sampled coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditTerm {
    pub term: LossTerm,
    /// `cd` or `aeg`: the network the term is differentiated against.
    pub network: String,
    pub checked: usize,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub max_abs_grad: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub h: f64,
    pub max_rel_err: f64,
    pub terms: Vec<AuditTerm>,
}

impl AuditReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_err < tolerance
    }

    pub fn term(&self, term: LossTerm) -> Option<&AuditTerm> {
        self.terms.iter().find(|t| t.term == term)
    }
}

fn build<T: Real>(model: &Model<T>, bt: &BatchTensors<T>, cfg: &TrainConfig, phase: Phase, batch: &Batch) -> Result<LossGraph<T>, TrainError> {
    let weights = label_weights(&batch.labels, cfg)?;
    let w = [&weights[0], &weights[1]];
    match phase {
        Phase::D => build_d(model, bt, cfg, w),
        Phase::G => build_g(model, bt, cfg, w),
    }
}

fn store<T: Real>(model: &Model<T>, phase: Phase) -> &ParamStore<T> {
    match phase {
        Phase::D => model.cd.params(),
        Phase::G => model.aeg.params(),
    }
}

/// Value and parameter gradients of `L_D` (w.r.t. the CD) or `L_G` (w.r.t.
/// the AEG) on one batch, class weights taken from the batch labels.
pub fn loss_gradients<T: Real>(
    model: &Model<T>,
    batch: &Batch,
    cfg: &TrainConfig,
    phase: Phase,
) -> Result<(f64, Vec<Tensor<T>>), TrainError> {
    let bt = BatchTensors::from_batch(batch, &model.cd)?;
    let lg = build(model, &bt, cfg, phase, batch)?;
    let mut grads = lg.g.backward(lg.total);
    let total = lg.g.value(lg.total).item().to_f64_lossy();
    Ok((total, store(model, phase).collect_grads(&mut grads, &lg.bound)))
}

/// Compares analytic gradients of every loss term with central differences
/// over a random subset of CD coordinates (D terms) and AEG coordinates
/// (G terms). Class weights come from the batch labels.
pub fn gradient_audit(
    model: &Model<f64>,
    batch: &Batch,
    cfg: &TrainConfig,
    opts: &AuditOptions,
) -> Result<AuditReport, TrainError> {
    let bt = BatchTensors::from_batch(batch, &model.cd)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut phases = vec![Phase::D];
    if cfg.mode.uses_aeg() {
        phases.push(Phase::G);
    }
    let mut terms = Vec::new();
    for phase in phases {
        let lg = build(model, &bt, cfg, phase, batch)?;
        let params = store(model, phase);
        let coords = coordinates(params, opts.n_params, &mut rng);
        for &(term, var, _) in &lg.terms {
            let mut grads = lg.g.backward(var);
            let analytic = params.collect_grads(&mut grads, &lg.bound);
            let mut t = AuditTerm {
                term,
                network: if phase == Phase::D { "cd" } else { "aeg" }.into(),
                checked: coords.len(),
                max_rel_err: 0.0,
                max_abs_err: 0.0,
                max_abs_grad: 0.0,
            };
            for &(id, i) in &coords {
                let a = analytic[id.0].data()[i];
                let n = central_difference(model, &bt, cfg, phase, batch, term, id, i, opts.h)?;
                let abs = (a - n).abs();
                t.max_abs_err = t.max_abs_err.max(abs);
                t.max_rel_err = t.max_rel_err.max(abs / a.abs().max(n.abs()).max(AUDIT_FLOOR));
                t.max_abs_grad = t.max_abs_grad.max(a.abs());
            }
            terms.push(t);
        }
    }
    let max_rel_err = terms.iter().map(|t| t.max_rel_err).fold(0.0, f64::max);
    Ok(AuditReport { h: opts.h, max_rel_err, terms })
}

/// `n` distinct `(tensor, element)` pairs drawn uniformly over all scalars.
fn coordinates<T: Real>(params: &ParamStore<T>, n: usize, rng: &mut ChaCha8Rng) -> Vec<(ParamId, usize)> {
    let total = params.scalar_count();
    let mut picked = sample(rng, total, n.min(total)).into_vec();
    picked.sort_unstable();
    picked
        .into_iter()
        .map(|mut flat| {
            for id in params.ids() {
                let len = params.get(id).len();
                if flat < len {
                    return (id, flat);
                }
                flat -= len;
            }
            unreachable!("index within scalar count")
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn central_difference(
    model: &Model<f64>,
    bt: &BatchTensors<f64>,
    cfg: &TrainConfig,
    phase: Phase,
    batch: &Batch,
    term: LossTerm,
    id: ParamId,
    i: usize,
    h: f64,
) -> Result<f64, TrainError> {
    let eval = |delta: f64| -> Result<f64, TrainError> {
        let mut m = model.clone();
        let p = match phase {
            Phase::D => m.cd.params_mut(),
            Phase::G => m.aeg.params_mut(),
        };
        p.get_mut(id).data_mut()[i] += delta;
        Ok(build(&m, bt, cfg, phase, batch)?.value(term))
    };
    Ok((eval(h)? - eval(-h)?) / (2.0 * h))
}
