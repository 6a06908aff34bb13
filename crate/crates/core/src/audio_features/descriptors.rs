//! Self-contained six-descriptor LLD set used when no precomputed features
//! are available.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// Log energy, RMS, zero-crossing rate, spectral centroid, 85% roll-off, F0.
pub const FALLBACK_DESCRIPTORS: usize = 6;

/// Log energy reported for silent windows.
pub const LOG_ENERGY_FLOOR: f64 = -100.0;

const ROLLOFF_FRACTION: f64 = 0.85;
const F0_MIN_HZ: f64 = 60.0;
const F0_MAX_HZ: f64 = 400.0;
const VOICING_THRESHOLD: f64 = 0.3;

pub fn window_descriptors(x: &[f64], rate: u32) -> [f64; FALLBACK_DESCRIPTORS] {
    let n = x.len().max(1) as f64;
    let mean_sq = x.iter().map(|v| v * v).sum::<f64>() / n;
    let log_energy = if mean_sq > 0.0 { mean_sq.ln().max(LOG_ENERGY_FLOOR) } else { LOG_ENERGY_FLOOR };
    let (centroid, rolloff) = spectral_shape(x, rate);
    [log_energy, mean_sq.sqrt(), zero_crossing_rate(x), centroid, rolloff, f0_autocorrelation(x, rate)]
}

fn zero_crossing_rate(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let crossings = x.windows(2).filter(|w| (w[0] >= 0.0) != (w[1] >= 0.0)).count();
    crossings as f64 / (x.len() - 1) as f64
}

/// Spectral centroid and roll-off in Hz of the Hann-windowed frame.
fn spectral_shape(x: &[f64], rate: u32) -> (f64, f64) {
    let nfft = x.len().next_power_of_two().max(2);
    let n = x.len();
    let mut buf: Vec<Complex<f64>> = (0..nfft)
        .map(|i| {
            if i < n {
                let w = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (n.max(2) - 1) as f64).cos();
                Complex::new(x[i] * w, 0.0)
            } else {
                Complex::new(0.0, 0.0)
            }
        })
        .collect();
    FftPlanner::new().plan_fft_forward(nfft).process(&mut buf);
    let bins = nfft / 2 + 1;
    let hz = |k: usize| k as f64 * rate as f64 / nfft as f64;
    let mags: Vec<f64> = buf[..bins].iter().map(|c| c.norm()).collect();
    let mag_sum: f64 = mags.iter().sum();
    if mag_sum <= 0.0 {
        return (0.0, 0.0);
    }
    let centroid = mags.iter().enumerate().map(|(k, m)| hz(k) * m).sum::<f64>() / mag_sum;
    let power_total: f64 = mags.iter().map(|m| m * m).sum();
    let mut acc = 0.0;
    let mut rolloff = hz(bins - 1);
    for (k, m) in mags.iter().enumerate() {
        acc += m * m;
        if acc >= ROLLOFF_FRACTION * power_total {
            rolloff = hz(k);
            break;
        }
    }
    (centroid, rolloff)
}

/// Autocorrelation pitch estimate within `[60, 400]` Hz; 0 when unvoiced.
fn f0_autocorrelation(x: &[f64], rate: u32) -> f64 {
    let r = rate as f64;
    let min_lag = (r / F0_MAX_HZ).ceil() as usize;
    let max_lag = ((r / F0_MIN_HZ).floor() as usize).min(x.len().saturating_sub(2));
    if min_lag < 1 || max_lag <= min_lag {
        return 0.0;
    }
    let energy: f64 = x.iter().map(|v| v * v).sum();
    if energy <= 0.0 {
        return 0.0;
    }
    let ac = |lag: usize| x[..x.len() - lag].iter().zip(&x[lag..]).map(|(a, b)| a * b).sum::<f64>();
    let values: Vec<f64> = (min_lag - 1..=max_lag + 1).map(ac).collect();
    let at = |lag: usize| values[lag + 1 - min_lag];
    let best = (min_lag..=max_lag).max_by(|&a, &b| at(a).total_cmp(&at(b))).unwrap();
    if at(best) / energy < VOICING_THRESHOLD {
        return 0.0;
    }
    let (y0, y1, y2) = (at(best - 1), at(best), at(best + 1));
    let curvature = y0 - 2.0 * y1 + y2;
    let offset = if curvature < 0.0 { (0.5 * (y0 - y2) / curvature).clamp(-0.5, 0.5) } else { 0.0 };
    r / (best as f64 + offset)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, rate: u32, n: usize) -> Vec<f64> {
        (0..n).map(|i| 0.5 * (2.0 * std::f64::consts::PI * freq * i as f64 / rate as f64).sin()).collect()
    }

    #[test]
    fn silence() {
        let d = window_descriptors(&[0.0; 960], 16000);
        assert_eq!(d[0], LOG_ENERGY_FLOOR);
        assert_eq!(d[1], 0.0);
        assert_eq!(d[2], 0.0);
        assert_eq!(d[5], 0.0);
    }

    #[test]
    fn pitch_of_pure_tones() {
        for &(f, rate) in &[(220.0, 16000u32), (220.0, 8000), (220.0, 44100), (120.0, 16000), (350.0, 16000)] {
            let n = (0.06 * rate as f64).round() as usize;
            let d = window_descriptors(&sine(f, rate, n), rate);
            assert!((d[5] - f).abs() < 5.0, "{f} Hz at {rate}: estimated {}", d[5]);
        }
    }

    #[test]
    fn tone_spectrum_and_energy() {
        let d = window_descriptors(&sine(1000.0, 16000, 960), 16000);
        assert!((d[1] - 0.5 / 2f64.sqrt()).abs() < 1e-2);
        assert!((d[0] - (0.125f64).ln()).abs() < 1e-2);
        assert!((d[3] - 1000.0).abs() < 100.0, "centroid {}", d[3]);
        assert!((d[4] - 1000.0).abs() < 50.0, "rolloff {}", d[4]);
        // 1 kHz crosses zero twice per period: 2000 crossings per second
        assert!((d[2] * 16000.0 - 2000.0).abs() < 50.0);
    }

    #[test]
    fn white_noise_is_unvoiced() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let x: Vec<f64> = (0..960).map(|_| rng.gen_range(-0.5..0.5)).collect();
        assert_eq!(window_descriptors(&x, 16000)[5], 0.0);
    }
}
