use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{AffectEstimate, ClassWeighting, Dimension, MetricsError, Moments};

/// Which supervision the affect head receives.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Class-weighted MSE plus `(1 − COR)` plus `(1 − CCC)`.
    #[default]
    Composite,
    /// Plain unweighted mean squared error.
    MseOnly,
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Composite => "composite",
            LossKind::MseOnly => "mse_only",
        })
    }
}

impl FromStr for LossKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "composite" => Ok(Self::Composite),
            "mse_only" => Ok(Self::MseOnly),
            other => Err(format!("unknown loss kind '{other}'")),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DimensionLossTerms {
    pub mse_term: f64,
    pub cor_term: f64,
    pub ccc_term: f64,
}

impl DimensionLossTerms {
    pub fn total(&self) -> f64 {
        self.mse_term + self.cor_term + self.ccc_term
    }
}

/// Value and prediction-gradient of the affect loss over a batch.
#[derive(Clone, Debug, PartialEq)]
pub struct AffectLoss {
    pub value: f64,
    /// `d value / d prediction`, one pair per sample.
    pub grad: Vec<AffectEstimate>,
    pub terms: [DimensionLossTerms; 2],
    /// Batch of one: correlation terms were not computed.
    pub correlation_dropped: bool,
    /// A zero-variance batch forced a correlation convention.
    pub degenerate: bool,
}

/// Composite affect loss averaged over valence and arousal.
///
/// Per dimension the squared error of each sample is weighted by its target
/// bin's class weight divided by the bin's occupancy in the batch, so each
/// occupied bin contributes `w_i · MSE_i`. Correlation terms use the whole
/// batch.
pub fn affect_loss(
    predictions: &[AffectEstimate],
    targets: &[AffectEstimate],
    weighting: [&ClassWeighting; 2],
    kind: LossKind,
) -> Result<AffectLoss, MetricsError> {
    if predictions.len() != targets.len() {
        return Err(MetricsError::LengthMismatch { predictions: predictions.len(), targets: targets.len() });
    }
    if predictions.is_empty() {
        return Err(MetricsError::EmptySeries);
    }
    let n = predictions.len();
    let mut grad = vec![AffectEstimate::default(); n];
    let mut terms = [DimensionLossTerms::default(); 2];
    let mut degenerate = false;
    let correlation_dropped = kind == LossKind::Composite && n < 2;
    for dim in Dimension::BOTH {
        let p: Vec<f64> = predictions.iter().map(|e| e.get(dim)).collect();
        let t: Vec<f64> = targets.iter().map(|e| e.get(dim)).collect();
        if let Some(i) = p.iter().chain(&t).position(|v| !v.is_finite()) {
            return Err(MetricsError::NonFinite(i % n));
        }
        let (dim_terms, dim_grad, dim_degenerate) = match kind {
            LossKind::MseOnly => {
                let (v, g) = mse_loss(&p, &t);
                (DimensionLossTerms { mse_term: v, ..Default::default() }, g, false)
            }
            LossKind::Composite => composite(&p, &t, weighting[dim.index()]),
        };
        degenerate |= dim_degenerate;
        terms[dim.index()] = dim_terms;
        for (g, d) in grad.iter_mut().zip(dim_grad) {
            match dim {
                Dimension::Valence => g.valence = 0.5 * d,
                Dimension::Arousal => g.arousal = 0.5 * d,
            }
        }
    }
    let value = 0.5 * (terms[0].total() + terms[1].total());
    Ok(AffectLoss { value, grad, terms, correlation_dropped, degenerate })
}

/// Unweighted mean squared error and its gradient.
pub fn mse_loss(p: &[f64], t: &[f64]) -> (f64, Vec<f64>) {
    let n = p.len() as f64;
    let value = p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n;
    let grad = p.iter().zip(t).map(|(a, b)| 2.0 * (a - b) / n).collect();
    (value, grad)
}

fn composite(p: &[f64], t: &[f64], weighting: &ClassWeighting) -> (DimensionLossTerms, Vec<f64>, bool) {
    let n = p.len();
    let mut occupancy = vec![0usize; weighting.n_bins()];
    let bins: Vec<usize> = t.iter().map(|&l| weighting.bin_of(l)).collect();
    for &b in &bins {
        occupancy[b] += 1;
    }
    let mut grad = vec![0.0; n];
    let mut mse_term = 0.0;
    for j in 0..n {
        let coef = weighting.weights()[bins[j]] / occupancy[bins[j]] as f64;
        let e = p[j] - t[j];
        mse_term += coef * e * e;
        grad[j] = 2.0 * coef * e;
    }
    if n < 2 {
        return (DimensionLossTerms { mse_term, ..Default::default() }, grad, false);
    }

    let m = Moments::of(p, t);
    let nf = n as f64;
    let mut degenerate = false;

    let cor = m.pearson();
    if cor.degenerate {
        degenerate = true;
    } else {
        let (sp, st) = (m.var_p.sqrt(), m.var_t.sqrt());
        for j in 0..n {
            let (dp, dt) = (p[j] - m.mean_p, t[j] - m.mean_t);
            let dr = dt / (nf * sp * st) - cor.value * dp / (nf * m.var_p);
            grad[j] -= dr;
        }
    }

    let ccc = m.ccc();
    let denom = m.ccc_denominator();
    if ccc.degenerate {
        degenerate = true;
    } else if denom > 0.0 {
        let shift = m.mean_p - m.mean_t;
        for j in 0..n {
            let (dp, dt) = (p[j] - m.mean_p, t[j] - m.mean_t);
            let ddenom = 2.0 * dp / nf + 2.0 * shift / nf;
            let dc = 2.0 * dt / (nf * denom) - ccc.value * ddenom / denom;
            grad[j] -= dc;
        }
    }

    let terms = DimensionLossTerms { mse_term, cor_term: 1.0 - cor.value, ccc_term: 1.0 - ccc.value };
    (terms, grad, degenerate)
}
