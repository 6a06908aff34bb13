use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::MetricsError;

/// Number of uniform label bins over `[-1, 1]` (0.1 wide).
pub const DEFAULT_BINS: usize = 20;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightingMode {
    /// `w_i = n_i / N`.
    Literal,
    /// `w_i ∝ 1 / n_i` over occupied bins.
    #[default]
    Inverse,
    /// Equal weight for every occupied bin.
    Uniform,
}

impl fmt::Display for WeightingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WeightingMode::Literal => "literal",
            WeightingMode::Inverse => "inverse",
            WeightingMode::Uniform => "uniform",
        })
    }
}

impl FromStr for WeightingMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "literal" => Ok(Self::Literal),
            "inverse" => Ok(Self::Inverse),
            "uniform" => Ok(Self::Uniform),
            other => Err(format!("unknown weighting mode '{other}'")),
        }
    }
}

/// Per-bin class weights for one affect dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassWeighting {
    bin_edges: Vec<f64>,
    counts: Vec<u64>,
    weights: Vec<f64>,
    mode: WeightingMode,
}

impl ClassWeighting {
    /// One bin covering `[-1, 1]` with weight 1.
    pub fn single_bin() -> Self {
        Self { bin_edges: vec![-1.0, 1.0], counts: vec![0], weights: vec![1.0], mode: WeightingMode::Uniform }
    }

    pub fn bin_edges(&self) -> &[f64] {
        &self.bin_edges
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mode(&self) -> WeightingMode {
        self.mode
    }

    pub fn n_bins(&self) -> usize {
        self.weights.len()
    }

    /// Bin index of `label`; values outside `[-1, 1]` clamp to the end bins.
    pub fn bin_of(&self, label: f64) -> usize {
        bin_index(label, self.n_bins())
    }

    pub fn weight_of(&self, label: f64) -> f64 {
        self.weights[self.bin_of(label)]
    }
}

fn bin_index(label: f64, n_bins: usize) -> usize {
    let pos = ((label + 1.0) / 2.0 * n_bins as f64).floor();
    (pos.max(0.0) as usize).min(n_bins - 1)
}

/// Histograms `labels` into `n_bins` uniform bins over `[-1, 1]` and derives
/// normalised weights. Empty bins get weight 0 in every mode.
pub fn class_weights(
    labels: &[f64],
    n_bins: usize,
    mode: WeightingMode,
) -> Result<ClassWeighting, MetricsError> {
    if labels.is_empty() {
        return Err(MetricsError::EmptySeries);
    }
    if n_bins == 0 {
        return Err(MetricsError::NoBins);
    }
    let mut counts = vec![0u64; n_bins];
    for &l in labels {
        if !(-1.0..=1.0).contains(&l) {
            return Err(MetricsError::LabelOutOfRange(l));
        }
        counts[bin_index(l, n_bins)] += 1;
    }
    let raw: Vec<f64> = counts
        .iter()
        .map(|&c| match (c, mode) {
            (0, _) => 0.0,
            (c, WeightingMode::Literal) => c as f64,
            (c, WeightingMode::Inverse) => 1.0 / c as f64,
            (_, WeightingMode::Uniform) => 1.0,
        })
        .collect();
    let total: f64 = raw.iter().sum();
    let weights = raw.iter().map(|r| r / total).collect();
    let bin_edges = (0..=n_bins).map(|i| -1.0 + 2.0 * i as f64 / n_bins as f64).collect();
    Ok(ClassWeighting { bin_edges, counts, weights, mode })
}
