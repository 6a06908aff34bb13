//! Adversarial training of the AEG and CD: loss assembly, alternating
//! discriminator/generator updates, the three progressive modes, evaluation,
//! checkpointing and gradient audits.

mod audit;
mod losses;
mod step;
mod trainer;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::affect_metrics::{LossKind, MetricsError, WeightingMode, DEFAULT_BINS};
use crate::data_pipeline::DataError;
use crate::models::ModelError;

pub use audit::{gradient_audit, loss_gradients, AuditOptions, AuditReport, AuditTerm, AUDIT_FLOOR};
pub use losses::{adv_loss_d, adv_loss_g, l1_mean, rec_loss};
pub use step::{d_step, g_step, label_weights, BatchTensors, LossTerm, Phase, StepReport, Trainer};
pub use trainer::{
    checkpoint_metadata, denoising_psnr, evaluate_model, history_csv, predict, train, train_with, EvalOptions, HistoryRow,
    PsnrSummary, TrainOutcome, BEST_CHECKPOINT, HISTORY_FILE, HISTORY_HEADER, LAST_CHECKPOINT,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Supervised discriminator on raw (noisy) frames with audio, no AEG.
    Disc,
    /// Adversarial AEG + CD, latent code zeroed, audio plane off.
    AegCd,
    /// Full model: latent code injected and audio plane on.
    #[default]
    AegCdSz,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Disc, Mode::AegCd, Mode::AegCdSz];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Disc => "disc",
            Mode::AegCd => "aeg_cd",
            Mode::AegCdSz => "aeg_cd_sz",
        }
    }

    pub fn uses_aeg(self) -> bool {
        self != Mode::Disc
    }

    pub fn audio_on(self) -> bool {
        self != Mode::AegCd
    }

    pub fn latent_on(self) -> bool {
        self == Mode::AegCdSz
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown mode '{s}' (expected disc, aeg_cd or aeg_cd_sz)"))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdvLoss {
    #[default]
    NonsaturatingLog,
    LeastSquares,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub mode: Mode,
    pub lambda_afc: f64,
    pub lambda_rec: f64,
    pub adv_loss: AdvLoss,
    pub g_lr: f64,
    pub d_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub d_steps_per_g: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub weighting: WeightingMode,
    pub n_bins: usize,
    /// Affect loss of the AEG modes.
    pub affect_loss: LossKind,
    /// Affect loss of the plain discriminator mode.
    pub disc_loss: LossKind,
    /// Corrupt validation inputs with the training noise model.
    pub eval_noisy: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: Mode::default(),
            lambda_afc: 1.0,
            lambda_rec: 10.0,
            adv_loss: AdvLoss::default(),
            g_lr: 1e-4,
            d_lr: 1e-4,
            beta1: 0.5,
            beta2: 0.999,
            d_steps_per_g: 1,
            batch_size: 16,
            epochs: 10,
            seed: 0,
            weighting: WeightingMode::Inverse,
            n_bins: DEFAULT_BINS,
            affect_loss: LossKind::Composite,
            disc_loss: LossKind::MseOnly,
            eval_noisy: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_owned()));
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !(self.lambda_afc.is_finite() && self.lambda_afc >= 0.0 && self.lambda_rec.is_finite() && self.lambda_rec >= 0.0) {
            return bad("lambda_afc and lambda_rec must be finite and nonnegative");
        }
        if !pos(self.g_lr) || !pos(self.d_lr) {
            return bad("learning rates must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("Adam betas must lie in [0, 1)");
        }
        if self.d_steps_per_g < 1 {
            return bad("d_steps_per_g must be at least 1");
        }
        if self.batch_size < 2 {
            return bad("batch_size must be at least 2");
        }
        if self.n_bins < 1 {
            return bad("n_bins must be at least 1");
        }
        Ok(())
    }

    /// Affect loss used by the configured mode.
    pub fn mode_affect_loss(&self) -> LossKind {
        if self.mode == Mode::Disc {
            self.disc_loss
        } else {
            self.affect_loss
        }
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("non-finite {term} at step {step} ({phase}); training aborted")]
    NonFinite { step: u64, phase: Phase, term: &'static str },
    #[error("generator step requested in mode disc")]
    NoGenerator,
    #[error("dataset does not fit the model: {0}")]
    Incompatible(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_strings_round_trip() {
        for m in Mode::ALL {
            assert_eq!(m.as_str().parse::<Mode>().unwrap(), m);
        }
        assert!("gan".parse::<Mode>().is_err());
        assert!(!Mode::AegCd.audio_on() && !Mode::AegCd.latent_on() && Mode::AegCd.uses_aeg());
        assert!(Mode::Disc.audio_on() && !Mode::Disc.uses_aeg());
        assert!(Mode::AegCdSz.audio_on() && Mode::AegCdSz.latent_on());
    }

    #[test]
    fn config_defaults_and_validation() {
        let c = TrainConfig::default();
        c.validate().unwrap();
        assert_eq!((c.lambda_afc, c.lambda_rec, c.beta1, c.beta2), (1.0, 10.0, 0.5, 0.999));
        assert_eq!(c.mode_affect_loss(), LossKind::Composite);
        assert_eq!(TrainConfig { mode: Mode::Disc, ..c.clone() }.mode_affect_loss(), LossKind::MseOnly);
        assert!(TrainConfig { batch_size: 1, ..c.clone() }.validate().is_err());
        assert!(TrainConfig { g_lr: 0.0, ..c.clone() }.validate().is_err());
        assert!(TrainConfig { d_steps_per_g: 0, ..c.clone() }.validate().is_err());
        assert!(TrainConfig { lambda_rec: -1.0, ..c }.validate().is_err());
    }
}
