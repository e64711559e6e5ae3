//! Sample summaries and the two-sample Kolmogorov–Smirnov test.

use serde::Serialize;

use crate::error::{invalid, Error, Result};

/// Smallest sample size accepted by [`ks_two_sample`].
pub const KS_MIN_SAMPLE: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub count: usize,
}

impl MeanEstimate {
    pub fn from_samples(xs: &[f64]) -> Result<Self> {
        if xs.is_empty() {
            return Err(Error::EmptySample);
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = if xs.len() > 1 {
            xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Ok(MeanEstimate {
            mean,
            stderr: (var / n).sqrt(),
            count: xs.len(),
        })
    }

    /// Whether `value` lies within `k` standard errors (plus `slack`).
    pub fn agrees_with(&self, value: f64, k: f64, slack: f64) -> bool {
        (self.mean - value).abs() <= k * self.stderr + slack
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub critical: f64,
    pub p_value: f64,
    pub level: f64,
    pub reject: bool,
}

/// `c(a) = sqrt(-ln(a/2) / 2)`, the asymptotic two-sample critical constant.
pub fn ks_critical_constant(level: f64) -> f64 {
    (-(level / 2.0).ln() / 2.0).sqrt()
}

/// Asymptotic Kolmogorov tail `Q(lambda) = 2 sum (-1)^(k-1) exp(-2 k^2 lambda^2)`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Largest gap between the empirical CDFs of `a` and `b`.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    Ok(d)
}

/// Two-sample KS test at `level` with asymptotic critical values. Both
/// samples must have at least [`KS_MIN_SAMPLE`] points.
pub fn ks_two_sample(a: &[f64], b: &[f64], level: f64) -> Result<KsResult> {
    if !(level > 0.0 && level < 1.0) {
        return Err(invalid(format!("test level must lie in (0, 1), got {level}")));
    }
    let statistic = ks_statistic(a, b)?;
    for s in [a, b] {
        if s.len() < KS_MIN_SAMPLE {
            return Err(Error::SampleTooSmall {
                size: s.len(),
                min: KS_MIN_SAMPLE,
            });
        }
    }
    let (n, m) = (a.len() as f64, b.len() as f64);
    let scale = ((n + m) / (n * m)).sqrt();
    let critical = ks_critical_constant(level) * scale;
    let en = (n * m / (n + m)).sqrt();
    let p_value = kolmogorov_q((en + 0.12 + 0.11 / en) * statistic);
    Ok(KsResult {
        statistic,
        critical,
        p_value,
        level,
        reject: statistic > critical,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MomentRow {
    pub order: u32,
    pub estimate: f64,
    pub stderr: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Raw empirical moments `E X^r` with 95% normal-approximation intervals.
pub fn moment_report(samples: &[f64], orders: &[u32]) -> Result<Vec<MomentRow>> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    orders
        .iter()
        .map(|&r| {
            if !(1..=4).contains(&r) {
                return Err(invalid(format!("moment order must be in 1..=4, got {r}")));
            }
            let powers: Vec<f64> = samples.iter().map(|x| x.powi(r as i32)).collect();
            let est = MeanEstimate::from_samples(&powers)?;
            let half = 1.959_963_984_540_054 * est.stderr;
            Ok(MomentRow {
                order: r,
                estimate: est.mean,
                stderr: est.stderr,
                ci_low: est.mean - half,
                ci_high: est.mean + half,
            })
        })
        .collect()
}

/// Unbiased sample variance.
pub fn variance(samples: &[f64]) -> Result<f64> {
    let e = MeanEstimate::from_samples(samples)?;
    Ok(e.stderr * e.stderr * samples.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ks_on_identical_and_shifted_samples() {
        let a: Vec<f64> = (0..2000).map(|i| i as f64 / 2000.0).collect();
        let r = ks_two_sample(&a, &a, 0.01).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!(!r.reject);
        let b: Vec<f64> = a.iter().map(|x| x + 0.2).collect();
        let r = ks_two_sample(&a, &b, 0.01).unwrap();
        assert!((r.statistic - 0.2).abs() <= 1.5 / 2000.0, "{}", r.statistic);
        assert!(r.reject);
        assert!(r.p_value < 1e-6);
    }

    #[test]
    fn ks_statistic_brute_force() {
        let a = [0.1, 0.4, 0.4, 0.9];
        let b = [0.2, 0.4, 0.5];
        let ecdf = |s: &[f64], x: f64| s.iter().filter(|&&v| v <= x).count() as f64 / s.len() as f64;
        let brute = a
            .iter()
            .chain(&b)
            .map(|&x| (ecdf(&a, x) - ecdf(&b, x)).abs())
            .fold(0.0, f64::max);
        assert_eq!(ks_statistic(&a, &b).unwrap(), brute);
    }

    #[test]
    fn ks_rejects_bad_input() {
        assert!(matches!(ks_two_sample(&[], &[1.0], 0.01), Err(Error::EmptySample)));
        assert!(matches!(
            ks_two_sample(&[1.0; 10], &[1.0; 10], 0.01),
            Err(Error::SampleTooSmall { .. })
        ));
    }

    #[test]
    fn critical_constant_and_tail() {
        assert!((ks_critical_constant(0.01) - 1.627_623_630_7).abs() < 1e-9);
        assert!((kolmogorov_q(1.627_623_630_7) - 0.01).abs() < 1e-8);
        assert!((kolmogorov_q(1.358_099) - 0.05).abs() < 1e-4);
    }

    #[test]
    fn moments() {
        let rows = moment_report(&[3.0; 50], &[1, 2]).unwrap();
        assert_eq!(rows[0].estimate, 3.0);
        assert_eq!(rows[0].stderr, 0.0);
        assert_eq!(rows[1].estimate, 9.0);
        assert_eq!(variance(&[3.0; 50]).unwrap(), 0.0);
        assert!(moment_report(&[1.0], &[5]).is_err());
    }
}
