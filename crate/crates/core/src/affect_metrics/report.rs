use serde::{Deserialize, Serialize};

use super::{ccc, mse, pearson_cor, AffectEstimate, AffectSeries, Dimension, MetricsError};

pub const CSV_HEADER: &str = "mode,fold,dim,mse,rmse,cor,ccc,n";

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DimensionMetrics {
    pub mse: f64,
    pub rmse: f64,
    pub cor: f64,
    pub ccc: f64,
}

/// Labels identifying where a report came from.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub mode: String,
    pub seed: u64,
    pub split: String,
}

/// Per-dimension agreement metrics. Serialises to a flat JSON object.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mode: String,
    pub seed: u64,
    pub split: String,
    pub n: usize,
    pub valence_mse: f64,
    pub valence_rmse: f64,
    pub valence_cor: f64,
    pub valence_ccc: f64,
    pub arousal_mse: f64,
    pub arousal_rmse: f64,
    pub arousal_cor: f64,
    pub arousal_ccc: f64,
}

impl MetricsReport {
    pub fn dimension(&self, dim: Dimension) -> DimensionMetrics {
        match dim {
            Dimension::Valence => DimensionMetrics {
                mse: self.valence_mse,
                rmse: self.valence_rmse,
                cor: self.valence_cor,
                ccc: self.valence_ccc,
            },
            Dimension::Arousal => DimensionMetrics {
                mse: self.arousal_mse,
                rmse: self.arousal_rmse,
                cor: self.arousal_cor,
                ccc: self.arousal_ccc,
            },
        }
    }

    fn set_dimension(&mut self, dim: Dimension, m: DimensionMetrics) {
        let slots = match dim {
            Dimension::Valence => {
                [&mut self.valence_mse, &mut self.valence_rmse, &mut self.valence_cor, &mut self.valence_ccc]
            }
            Dimension::Arousal => {
                [&mut self.arousal_mse, &mut self.arousal_rmse, &mut self.arousal_cor, &mut self.arousal_ccc]
            }
        };
        for (slot, v) in slots.into_iter().zip([m.mse, m.rmse, m.cor, m.ccc]) {
            *slot = v;
        }
    }

    pub fn meta(&self) -> ReportMeta {
        ReportMeta { mode: self.mode.clone(), seed: self.seed, split: self.split.clone() }
    }

    pub fn with_meta(mut self, meta: ReportMeta) -> Self {
        self.mode = meta.mode;
        self.seed = meta.seed;
        self.split = meta.split;
        self
    }

    /// Mean CCC over both dimensions.
    pub fn mean_ccc(&self) -> f64 {
        0.5 * (self.valence_ccc + self.arousal_ccc)
    }

    /// One CSV row per dimension, matching [`CSV_HEADER`].
    pub fn csv_rows(&self) -> Vec<String> {
        Dimension::BOTH
            .iter()
            .map(|&d| {
                let m = self.dimension(d);
                format!(
                    "{},{},{},{},{},{},{},{}",
                    self.mode,
                    self.split,
                    d.as_str(),
                    m.mse,
                    m.rmse,
                    m.cor,
                    m.ccc,
                    self.n
                )
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for row in self.csv_rows() {
            s.push_str(&row);
            s.push('\n');
        }
        s
    }
}

/// Computes the full report over aligned prediction/target streams.
pub fn evaluate(
    predictions: &[AffectEstimate],
    targets: &[AffectEstimate],
) -> Result<MetricsReport, MetricsError> {
    if predictions.len() != targets.len() {
        return Err(MetricsError::LengthMismatch { predictions: predictions.len(), targets: targets.len() });
    }
    let mut report = MetricsReport { n: predictions.len(), ..Default::default() };
    for dim in Dimension::BOTH {
        let s = AffectSeries::from_estimates(predictions, targets, dim)?;
        let m = mse(&s);
        report.set_dimension(
            dim,
            DimensionMetrics { mse: m, rmse: m.sqrt(), cor: pearson_cor(&s)?.value, ccc: ccc(&s)?.value },
        );
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stream(v: &[(f64, f64)]) -> Vec<AffectEstimate> {
        v.iter().map(|&(a, b)| AffectEstimate::new(a, b)).collect()
    }

    #[test]
    fn identical_streams() {
        let s = stream(&[(0.1, 0.2), (-0.4, 0.5), (0.7, -0.1)]);
        let r = evaluate(&s, &s).unwrap();
        assert_eq!(r.valence_mse, 0.0);
        assert!((r.valence_cor - 1.0).abs() < 1e-15 && (r.arousal_ccc - 1.0).abs() < 1e-15);
        assert_eq!(r.n, 3);
    }

    #[test]
    fn empty_and_mismatched_streams_fail() {
        assert_eq!(evaluate(&[], &[]), Err(MetricsError::EmptySeries));
        assert!(matches!(
            evaluate(&stream(&[(0.0, 0.0)]), &[]),
            Err(MetricsError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn flat_json_and_csv() {
        let p = stream(&[(0.1, 0.2), (-0.4, 0.5), (0.7, -0.1)]);
        let t = stream(&[(0.0, 0.1), (-0.3, 0.6), (0.5, 0.0)]);
        let r = evaluate(&p, &t)
            .unwrap()
            .with_meta(ReportMeta { mode: "aeg_cd_sz".into(), seed: 3, split: "val".into() });
        let json: serde_json::Value = serde_json::to_value(&r).unwrap();
        let obj = json.as_object().unwrap();
        assert!(obj.values().all(|v| !v.is_object() && !v.is_array()));
        assert_eq!(obj["mode"], "aeg_cd_sz");
        let back: MetricsReport = serde_json::from_value(json).unwrap();
        assert_eq!(back, r);
        let csv = r.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert!(lines[1].starts_with("aeg_cd_sz,val,valence,"));
        assert!(lines[2].ends_with(",3"));
    }
}
