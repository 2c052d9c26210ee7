//! Monte-Carlo estimation with exact binomial confidence intervals.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF, Normal};

use crate::coin::trial_rng;
use crate::protocol::HarnessError;

/// Two-sided confidence level of every interval.
pub const CONFIDENCE: f64 = 0.99;

/// Standard errors of slack allowed when comparing an estimate to a bound.
pub const SE_SLACK: f64 = 3.0;

pub const MIN_TRIALS: u64 = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub trials: u64,
    pub successes: u64,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub bound: Option<f64>,
    pub bound_vacuous: bool,
}

/// Clopper-Pearson interval for `successes` out of `trials`.
pub fn clopper_pearson(successes: u64, trials: u64, confidence: f64) -> (f64, f64) {
    let alpha = 1.0 - confidence;
    let (s, n) = (successes as f64, trials as f64);
    let low = if successes == 0 {
        0.0
    } else {
        Beta::new(s, n - s + 1.0)
            .expect("positive shape")
            .inverse_cdf(alpha / 2.0)
    };
    let high = if successes == trials {
        1.0
    } else {
        Beta::new(s + 1.0, n - s)
            .expect("positive shape")
            .inverse_cdf(1.0 - alpha / 2.0)
    };
    (low, high)
}

impl Estimate {
    pub fn from_counts(successes: u64, trials: u64) -> Self {
        assert!(trials > 0 && successes <= trials);
        let (ci_low, ci_high) = clopper_pearson(successes, trials, CONFIDENCE);
        let p_hat = successes as f64 / trials as f64;
        Estimate {
            trials,
            successes,
            p_hat,
            ci_low: ci_low.min(p_hat),
            ci_high: ci_high.max(p_hat),
            bound: None,
            bound_vacuous: false,
        }
    }

    pub fn with_bound(mut self, bound: f64) -> Self {
        self.bound = Some(bound);
        self.bound_vacuous = bound >= 1.0;
        self
    }

    /// `sqrt(p̂(1 − p̂)/trials)`.
    pub fn se(&self) -> f64 {
        (self.p_hat * (1.0 - self.p_hat) / self.trials as f64).sqrt()
    }

    /// `p̂ ≤ bound + 3·SE`; true when no bound is attached.
    pub fn within_bound(&self) -> bool {
        self.bound
            .is_none_or(|b| self.p_hat <= b + SE_SLACK * self.se())
    }

    pub fn contains(&self, p: f64) -> bool {
        self.ci_low <= p && p <= self.ci_high
    }

    /// Pools two estimates of the same quantity.
    pub fn merge(&self, other: &Estimate) -> Estimate {
        let mut out = Estimate::from_counts(
            self.successes + other.successes,
            self.trials + other.trials,
        );
        out.bound = self.bound;
        out.bound_vacuous = self.bound_vacuous;
        out
    }
}

/// Runs `trials` independent rounds, round `i` with `trial_rng(seed, i)`.
pub fn estimate_acceptance<F>(trials: u64, seed: u64, mut game: F) -> Result<Estimate, HarnessError>
where
    F: FnMut(&mut ChaCha8Rng) -> Result<bool, HarnessError>,
{
    if trials < MIN_TRIALS {
        return Err(HarnessError::Params(format!(
            "at least {MIN_TRIALS} trials required, got {trials}"
        )));
    }
    let mut successes = 0;
    for i in 0..trials {
        if game(&mut trial_rng(seed, i))? {
            successes += 1;
        }
    }
    Ok(Estimate::from_counts(successes, trials))
}

/// Sample mean with a normal-approximation interval at [`CONFIDENCE`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub trials: u64,
    pub mean: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl MeanEstimate {
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = if samples.len() > 1 {
            samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let se = (var / n).sqrt();
        let z = Normal::standard().inverse_cdf(0.5 + CONFIDENCE / 2.0);
        MeanEstimate {
            trials: samples.len() as u64,
            mean,
            se,
            ci_low: mean - z * se,
            ci_high: mean + z * se,
        }
    }
}

pub fn estimate_mean<F>(trials: u64, seed: u64, mut sample: F) -> Result<MeanEstimate, HarnessError>
where
    F: FnMut(&mut ChaCha8Rng) -> Result<f64, HarnessError>,
{
    if trials < MIN_TRIALS {
        return Err(HarnessError::Params(format!(
            "at least {MIN_TRIALS} trials required, got {trials}"
        )));
    }
    let samples = (0..trials)
        .map(|i| sample(&mut trial_rng(seed, i)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(MeanEstimate::from_samples(&samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coin::Coin;

    #[test]
    fn always_accepting() {
        let e = estimate_acceptance(1000, 1, |_| Ok(true)).unwrap();
        assert_eq!(e.p_hat, 1.0);
        assert!(e.ci_low > 0.994);
        assert_eq!(e.ci_high, 1.0);
        assert_eq!(e.se(), 0.0);
    }

    #[test]
    fn fair_coin() {
        let e = estimate_acceptance(100_000, 2, |r| Ok(r.fair_bit())).unwrap();
        assert!((e.p_hat - 0.5).abs() < 0.006);
        assert!(e.contains(0.5));
        let again = estimate_acceptance(100_000, 2, |r| Ok(r.fair_bit())).unwrap();
        assert_eq!(e, again);
    }

    #[test]
    fn too_few_trials() {
        assert!(estimate_acceptance(99, 0, |_| Ok(true)).is_err());
    }

    #[test]
    fn clopper_pearson_reference_values() {
        // closed forms at the extremes: ((α/2)^(1/n), 1) and (0, 1 − (α/2)^(1/n))
        let (lo, hi) = clopper_pearson(10, 10, 0.99);
        assert!((lo - 0.005f64.powf(0.1)).abs() < 1e-9);
        assert_eq!(hi, 1.0);
        let (lo, hi) = clopper_pearson(0, 20, 0.99);
        assert_eq!(lo, 0.0);
        assert!((hi - (1.0 - 0.005f64.powf(0.05))).abs() < 1e-9);
        let (lo, hi) = clopper_pearson(50, 100, 0.99);
        assert!((lo + hi - 1.0).abs() < 1e-9);
        assert!(lo < 0.5 && hi > 0.5);
    }

    #[test]
    fn bound_flags() {
        let e = Estimate::from_counts(30, 100).with_bound(1.3);
        assert!(e.bound_vacuous && e.within_bound());
        let e = Estimate::from_counts(60, 100).with_bound(0.4);
        assert!(!e.bound_vacuous && !e.within_bound());
    }

    #[test]
    fn coverage_of_known_probability() {
        // p = 0.3 exactly; intervals at 99% should miss rarely
        let misses = (0..200)
            .filter(|&s| {
                let e = estimate_acceptance(500, s, |r| Ok(r.bernoulli(0.3))).unwrap();
                !e.contains(0.3)
            })
            .count();
        assert!(misses <= 6, "{misses} misses out of 200");
    }

    #[test]
    fn mean_estimate() {
        let m = MeanEstimate::from_samples(&[1.0, 2.0, 3.0, 4.0]);
        assert!((m.mean - 2.5).abs() < 1e-12);
        assert!((m.se - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-12);
        assert!(m.ci_low < 2.5 && m.ci_high > 2.5);
    }
}
