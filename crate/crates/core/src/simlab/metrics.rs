use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One degree in radians.
pub const SETTLE_THRESHOLD: f64 = 0.017453292519943295;

pub const METRIC_WEIGHTS: [f64; 6] = [0.1, 0.1, 0.1, 0.1, 0.3, 0.3];

pub const METRIC_NAMES: [&str; 6] = ["rmse", "mae", "p95", "peak", "settle", "dedt_rms"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub rmse: f64,
    pub mae: f64,
    pub p95: f64,
    pub peak: f64,
    /// Seconds from the disturbance until the mean error stays below the
    /// threshold.
    pub settle: f64,
    pub dedt_rms: f64,
    /// True when the error never settled and `settle` is the remaining
    /// episode time.
    pub censored: bool,
}

impl MetricSet {
    pub fn as_array(&self) -> [f64; 6] {
        [self.rmse, self.mae, self.p95, self.peak, self.settle, self.dedt_rms]
    }
}

/// Percentile with linear interpolation between order statistics.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let pos = (p / 100.0).clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// Metrics of a joint-mean absolute error signal sampled every `dt` from
/// `t = 0`.
pub fn metrics_from_signal(ebar: &[f64], dt: f64, trigger: f64, threshold: f64) -> Result<MetricSet> {
    if ebar.is_empty() {
        return Err(Error::Empty("error signal"));
    }
    if ebar.iter().any(|e| !e.is_finite()) {
        return Err(Error::NonFinite("error signal"));
    }
    let n = ebar.len() as f64;
    let rmse = (ebar.iter().map(|e| e * e).sum::<f64>() / n).sqrt();
    let mae = ebar.iter().sum::<f64>() / n;
    let peak = ebar.iter().cloned().fold(0.0, f64::max);
    let p95 = percentile(ebar, 95.0);
    let dedt_rms = if ebar.len() < 2 {
        0.0
    } else {
        let s: f64 = ebar.windows(2).map(|w| ((w[1] - w[0]) / dt).powi(2)).sum();
        (s / (ebar.len() - 1) as f64).sqrt()
    };
    let end = (ebar.len() - 1) as f64 * dt;
    let first = ((trigger / dt) - 1e-9).ceil().max(0.0) as usize;
    let (settle, censored) = match (first..ebar.len()).rev().find(|&i| ebar[i] >= threshold) {
        None => (0.0, false),
        Some(i) if i + 1 == ebar.len() => ((end - trigger).max(0.0), true),
        Some(i) => {
            let frac = (ebar[i] - threshold) / (ebar[i] - ebar[i + 1]);
            let tc = (i as f64 + frac) * dt;
            ((tc - trigger).max(0.0), false)
        }
    };
    Ok(MetricSet {
        rmse,
        mae,
        p95,
        peak,
        settle,
        dedt_rms,
        censored,
    })
}

/// Min-max normalizes every metric across `sets` and returns the weighted
/// sum per entry. A metric that is equal everywhere contributes zero.
pub fn composite_score(sets: &[MetricSet], weights: &[f64; 6]) -> Result<Vec<f64>> {
    if sets.len() < 2 {
        return Err(Error::Validation("composite score needs at least two controllers".into()));
    }
    let wsum: f64 = weights.iter().sum();
    if (wsum - 1.0).abs() > 1e-12 || weights.iter().any(|w| *w < 0.0) {
        return Err(Error::Validation(format!("metric weights must be >= 0 and sum to 1 (sum {wsum})")));
    }
    let rows: Vec<[f64; 6]> = sets.iter().map(MetricSet::as_array).collect();
    let mut scores = vec![0.0; sets.len()];
    for m in 0..6 {
        let lo = rows.iter().map(|r| r[m]).fold(f64::INFINITY, f64::min);
        let hi = rows.iter().map(|r| r[m]).fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        if span <= 0.0 {
            continue;
        }
        for (s, r) in scores.iter_mut().zip(&rows) {
            *s += weights[m] * (r[m] - lo) / span;
        }
    }
    Ok(scores)
}

/// Relative improvement of `score` over the feedback-only baseline, in %.
pub fn improvement(baseline: f64, score: f64) -> f64 {
    (baseline - score) / baseline * 100.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn flat_signal() {
        let m = metrics_from_signal(&[0.3; 101], 0.01, 0.5, SETTLE_THRESHOLD).unwrap();
        for v in [m.rmse, m.mae, m.p95, m.peak] {
            assert_relative_eq!(v, 0.3, epsilon = 1e-12);
        }
        assert_eq!(m.dedt_rms, 0.0);
        assert!(m.censored);
        assert_relative_eq!(m.settle, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn zero_signal_settles_immediately() {
        let m = metrics_from_signal(&[0.0; 50], 0.01, 0.2, SETTLE_THRESHOLD).unwrap();
        assert_eq!(m.settle, 0.0);
        assert!(!m.censored);
    }

    #[test]
    fn exponential_crossing() {
        let dt = 1e-4;
        let sig: Vec<f64> = (0..=50_000)
            .map(|k| {
                let t = k as f64 * dt;
                if t < 2.0 {
                    0.0
                } else {
                    0.1 * (-3.0 * (t - 2.0)).exp()
                }
            })
            .collect();
        let m = metrics_from_signal(&sig, dt, 2.0, SETTLE_THRESHOLD).unwrap();
        let crossing = (0.1 / SETTLE_THRESHOLD).ln() / 3.0;
        assert_relative_eq!(m.settle, crossing, epsilon = 1e-6);
        assert_relative_eq!(2.0 + m.settle, 2.582, epsilon = 1e-3);
    }

    #[test]
    fn percentile_interpolates() {
        let v: Vec<f64> = (0..=100).map(|x| x as f64).collect();
        assert_relative_eq!(percentile(&v, 95.0), 95.0);
        assert_relative_eq!(percentile(&[0.0, 1.0], 95.0), 0.95);
    }

    #[test]
    fn scaling_is_linear() {
        let sig: Vec<f64> = (0..300).map(|k| 0.05 + 0.04 * (k as f64 * 0.1).sin()).collect();
        let a = metrics_from_signal(&sig, 0.01, 1.0, SETTLE_THRESHOLD).unwrap();
        let scaled: Vec<f64> = sig.iter().map(|x| 3.0 * x).collect();
        let b = metrics_from_signal(&scaled, 0.01, 1.0, SETTLE_THRESHOLD).unwrap();
        for (x, y) in [(a.rmse, b.rmse), (a.mae, b.mae), (a.p95, b.p95), (a.peak, b.peak), (a.dedt_rms, b.dedt_rms)] {
            assert_relative_eq!(3.0 * x, y, epsilon = 1e-12);
        }
    }

    fn set(v: [f64; 6]) -> MetricSet {
        MetricSet {
            rmse: v[0],
            mae: v[1],
            p95: v[2],
            peak: v[3],
            settle: v[4],
            dedt_rms: v[5],
            censored: false,
        }
    }

    #[test]
    fn composite_extremes() {
        let s = composite_score(&[set([1.0; 6]), set([2.0; 6])], &METRIC_WEIGHTS).unwrap();
        assert_relative_eq!(s[0], 0.0);
        assert_relative_eq!(s[1], 1.0, epsilon = 1e-12);
        let same = composite_score(&[set([1.0; 6]), set([1.0; 6])], &METRIC_WEIGHTS).unwrap();
        assert_eq!(same, vec![0.0, 0.0]);
        assert!(composite_score(&[set([1.0; 6])], &METRIC_WEIGHTS).is_err());
        assert!(composite_score(&[set([1.0; 6]), set([2.0; 6])], &[0.2; 6]).is_err());
    }

    #[test]
    fn composite_shift_invariant() {
        let a = [set([0.1, 0.2, 0.3, 0.4, 0.5, 0.6]), set([0.3, 0.1, 0.2, 0.9, 0.1, 0.2]), set([0.2; 6])];
        let base = composite_score(&a, &METRIC_WEIGHTS).unwrap();
        let shifted: Vec<MetricSet> = a
            .iter()
            .map(|m| {
                let mut m = *m;
                m.settle += 7.0;
                m
            })
            .collect();
        let after = composite_score(&shifted, &METRIC_WEIGHTS).unwrap();
        for (x, y) in base.iter().zip(after) {
            assert_relative_eq!(*x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn improvement_percent() {
        assert_relative_eq!(improvement(0.8, 0.2), 75.0);
    }
}
