//! Sources of randomness for every probabilistic operation.
//!
//! All protocol code draws its randomness through [`Coin::pick`], a single
//! categorical choice over non-negative weights. Any seeded `rand` generator
//! is a `Coin`, which gives bit-exact replay for identical seeds. The same
//! seam lets [`exact_distribution`] walk every branch of a computation and
//! weight it by its exact probability, which is how the small-instance
//! oracles avoid sampling error altogether.

use std::collections::BTreeMap;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub trait Coin {
    /// Returns an index `i` with probability `weights[i] / sum(weights)`.
    /// Zero-weight entries are never returned.
    fn pick(&mut self, weights: &[f64]) -> usize;

    fn fair_bit(&mut self) -> bool {
        self.pick(&[0.5, 0.5]) == 1
    }

    /// `true` with probability `p`.
    fn bernoulli(&mut self, p: f64) -> bool {
        self.pick(&[1.0 - p, p]) == 1
    }
}

impl<R: RngCore> Coin for R {
    fn pick(&mut self, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().sum();
        assert!(total > 0.0, "pick over all-zero weights");
        let u = self.gen::<f64>() * total;
        let mut acc = 0.0;
        let mut last = 0;
        for (i, &w) in weights.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            acc += w;
            last = i;
            if u < acc {
                return i;
            }
        }
        last
    }
}

/// Independent generator for trial `index` under a master `seed`.
pub fn trial_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Replays a fixed prefix of choices, then always takes the first branch
/// with positive weight, recording everything it saw.
struct Scripted {
    script: Vec<usize>,
    trace: Vec<(usize, Vec<f64>)>,
    prob: f64,
}

impl Coin for Scripted {
    fn pick(&mut self, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().sum();
        assert!(total > 0.0, "pick over all-zero weights");
        let pos = self.trace.len();
        let choice = match self.script.get(pos) {
            Some(&c) => c,
            None => weights
                .iter()
                .position(|&w| w > 0.0)
                .expect("positive weight"),
        };
        let normalized: Vec<f64> = weights.iter().map(|w| w.max(0.0) / total).collect();
        self.prob *= normalized[choice];
        self.trace.push((choice, normalized));
        choice
    }
}

/// Exact output distribution of `f`, found by enumerating every sequence of
/// coin outcomes with positive probability.
///
/// `f` must be a deterministic function of its coin outcomes. The number of
/// runs equals the number of branches, so this is only for small instances.
pub fn exact_distribution<T, E, F>(mut f: F) -> Result<BTreeMap<T, f64>, E>
where
    T: Ord,
    F: FnMut(&mut dyn Coin) -> Result<T, E>,
{
    let mut out = BTreeMap::new();
    let mut script = Vec::new();
    loop {
        let mut coin = Scripted {
            script,
            trace: Vec::new(),
            prob: 1.0,
        };
        let value = f(&mut coin)?;
        *out.entry(value).or_insert(0.0) += coin.prob;

        // advance the odometer at the deepest position with an untried branch
        let mut next = None;
        for (pos, (choice, weights)) in coin.trace.iter().enumerate().rev() {
            if let Some(alt) = (choice + 1..weights.len()).find(|&j| weights[j] > 0.0) {
                next = Some((pos, alt));
                break;
            }
        }
        match next {
            None => return Ok(out),
            Some((pos, alt)) => {
                script = coin.trace[..pos].iter().map(|(c, _)| *c).collect();
                script.push(alt);
            }
        }
    }
}

/// Exact probability that `f` returns `true`.
pub fn exact_probability<E, F>(f: F) -> Result<f64, E>
where
    F: FnMut(&mut dyn Coin) -> Result<bool, E>,
{
    Ok(exact_distribution(f)?.get(&true).copied().unwrap_or(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_pick_is_deterministic() {
        let mut a = trial_rng(7, 3);
        let mut b = trial_rng(7, 3);
        let xs: Vec<usize> = (0..100).map(|_| a.pick(&[0.2, 0.3, 0.5])).collect();
        let ys: Vec<usize> = (0..100).map(|_| b.pick(&[0.2, 0.3, 0.5])).collect();
        assert_eq!(xs, ys);
    }

    #[test]
    fn zero_weight_never_picked() {
        let mut rng = trial_rng(1, 0);
        for _ in 0..1000 {
            assert_eq!(rng.pick(&[0.0, 1.0, 0.0]), 1);
        }
    }

    #[test]
    fn enumerates_two_coins() {
        let dist = exact_distribution::<_, (), _>(|c| {
            let a = c.fair_bit() as u8;
            let b = c.pick(&[0.25, 0.75]) as u8;
            Ok(a + b)
        })
        .unwrap();
        assert_eq!(dist.len(), 3);
        assert!((dist[&0] - 0.125).abs() < 1e-15);
        assert!((dist[&1] - 0.5).abs() < 1e-15);
        assert!((dist[&2] - 0.375).abs() < 1e-15);
    }

    #[test]
    fn enumerates_data_dependent_branching() {
        // second coin only drawn when the first comes up 1
        let p = exact_probability::<(), _>(|c| Ok(c.fair_bit() && c.bernoulli(0.3))).unwrap();
        assert!((p - 0.15).abs() < 1e-15);
    }
}
