//! Agreement metrics for continuous affect: MSE/RMSE, Pearson correlation and
//! Lin's concordance correlation coefficient, plus the class-weighted
//! composite training loss, evaluation reports and subject-disjoint folds.
//!
//! All moments are population (biased) moments.

mod folds;
mod loss;
mod report;
mod weighting;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use folds::{make_folds, FoldSpec};
pub use loss::{affect_loss, mse_loss, AffectLoss, DimensionLossTerms, LossKind};
pub use report::{evaluate, DimensionMetrics, MetricsReport, ReportMeta, CSV_HEADER};
pub use weighting::{class_weights, ClassWeighting, WeightingMode, DEFAULT_BINS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("empty-series")]
    EmptySeries,
    #[error("length mismatch: {predictions} predictions vs {targets} targets")]
    LengthMismatch { predictions: usize, targets: usize },
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("need at least {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("label {0} outside [-1, 1]")]
    LabelOutOfRange(f64),
    #[error("n_bins must be at least 1")]
    NoBins,
    #[error("need at least {needed} subjects for {needed} folds, got {got}")]
    TooFewSubjects { needed: usize, got: usize },
    #[error("fold count must be at least 2, got {0}")]
    TooFewFolds(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dimension {
    Valence,
    Arousal,
}

impl Dimension {
    pub const BOTH: [Dimension; 2] = [Dimension::Valence, Dimension::Arousal];

    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::Valence => "valence",
            Dimension::Arousal => "arousal",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// One (valence, arousal) pair, nominally in `[-1, 1]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AffectEstimate {
    pub valence: f64,
    pub arousal: f64,
}

impl AffectEstimate {
    pub fn new(valence: f64, arousal: f64) -> Self {
        Self { valence, arousal }
    }

    pub fn get(&self, dim: Dimension) -> f64 {
        match dim {
            Dimension::Valence => self.valence,
            Dimension::Arousal => self.arousal,
        }
    }
}

/// Aligned predictions and targets for one affect dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct AffectSeries {
    predictions: Vec<f64>,
    targets: Vec<f64>,
    dimension: Dimension,
}

impl AffectSeries {
    pub fn new(
        predictions: Vec<f64>,
        targets: Vec<f64>,
        dimension: Dimension,
    ) -> Result<Self, MetricsError> {
        if predictions.len() != targets.len() {
            return Err(MetricsError::LengthMismatch {
                predictions: predictions.len(),
                targets: targets.len(),
            });
        }
        if predictions.is_empty() {
            return Err(MetricsError::EmptySeries);
        }
        if let Some(i) = predictions.iter().zip(&targets).position(|(p, t)| !p.is_finite() || !t.is_finite()) {
            return Err(MetricsError::NonFinite(i));
        }
        Ok(Self { predictions, targets, dimension })
    }

    /// Extracts one dimension from paired estimate streams.
    pub fn from_estimates(
        predictions: &[AffectEstimate],
        targets: &[AffectEstimate],
        dimension: Dimension,
    ) -> Result<Self, MetricsError> {
        Self::new(
            predictions.iter().map(|p| p.get(dimension)).collect(),
            targets.iter().map(|t| t.get(dimension)).collect(),
            dimension,
        )
    }

    pub fn predictions(&self) -> &[f64] {
        &self.predictions
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn dimension(&self) -> Dimension {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.predictions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predictions.is_empty()
    }
}

/// A correlation value; `degenerate` marks a zero-variance input for which
/// the value is a convention rather than a statistic.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Correlation {
    pub value: f64,
    pub degenerate: bool,
}

/// First and second population moments of a prediction/target pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Moments {
    pub n: f64,
    pub mean_p: f64,
    pub mean_t: f64,
    pub var_p: f64,
    pub var_t: f64,
    pub cov: f64,
}

impl Moments {
    pub fn of(p: &[f64], t: &[f64]) -> Self {
        let n = p.len() as f64;
        let mean_p = p.iter().sum::<f64>() / n;
        let mean_t = t.iter().sum::<f64>() / n;
        let (mut var_p, mut var_t, mut cov) = (0.0, 0.0, 0.0);
        for (&a, &b) in p.iter().zip(t) {
            let (da, db) = (a - mean_p, b - mean_t);
            var_p += da * da;
            var_t += db * db;
            cov += da * db;
        }
        Self { n, mean_p, mean_t, var_p: var_p / n, var_t: var_t / n, cov: cov / n }
    }

    pub fn pearson(&self) -> Correlation {
        if self.var_p <= 0.0 || self.var_t <= 0.0 {
            return Correlation { value: 0.0, degenerate: true };
        }
        let r = self.cov / (self.var_p.sqrt() * self.var_t.sqrt());
        Correlation { value: r.clamp(-1.0, 1.0), degenerate: false }
    }

    pub fn ccc_denominator(&self) -> f64 {
        let shift = self.mean_p - self.mean_t;
        self.var_p + self.var_t + shift * shift
    }

    pub fn ccc(&self) -> Correlation {
        let denom = self.ccc_denominator();
        if denom <= 0.0 {
            // Both constant and equal.
            return Correlation { value: 1.0, degenerate: false };
        }
        if self.var_p <= 0.0 && self.var_t <= 0.0 {
            return Correlation { value: 0.0, degenerate: true };
        }
        Correlation { value: (2.0 * self.cov / denom).clamp(-1.0, 1.0), degenerate: false }
    }
}

/// Mean of squared differences.
pub fn mse(series: &AffectSeries) -> f64 {
    let n = series.len() as f64;
    series.predictions.iter().zip(&series.targets).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n
}

pub fn rmse(series: &AffectSeries) -> f64 {
    mse(series).sqrt()
}

/// Pearson correlation. Zero variance in either input yields a degenerate 0.
pub fn pearson_cor(series: &AffectSeries) -> Result<Correlation, MetricsError> {
    require_len(series, 2)?;
    Ok(Moments::of(&series.predictions, &series.targets).pearson())
}

/// Lin's concordance correlation coefficient
/// `2·cov / (σp² + σt² + (μp − μt)²)`.
///
/// Two equal constant series give 1; two unequal constants give a degenerate 0.
pub fn ccc(series: &AffectSeries) -> Result<Correlation, MetricsError> {
    require_len(series, 2)?;
    Ok(Moments::of(&series.predictions, &series.targets).ccc())
}

fn require_len(series: &AffectSeries, needed: usize) -> Result<(), MetricsError> {
    if series.len() < needed {
        return Err(MetricsError::TooShort { needed, got: series.len() });
    }
    Ok(())
}
