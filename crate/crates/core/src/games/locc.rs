//! The leakage game: the challenger keeps a BB84 state, the adversary's
//! algorithms act on it only through [`RegisterOps`] and return classical
//! leakage, then a guesser sees the leakage and `θ` and must output `x`.

use crate::adversary::{to_locc, Bb84Strategy, LoccStrategy};
use crate::coin::Coin;
use crate::protocol::HarnessError;
use crate::qsim::{Bb84Description, QReg, RegisterOps};

use super::bounds::locc_bound;
use super::stats::{estimate_acceptance, Estimate};

pub fn locc_leakage_game(
    strategy: &LoccStrategy<'_>,
    n: usize,
    coin: &mut dyn Coin,
) -> Result<bool, HarnessError> {
    let desc = Bb84Description::random(n, coin);
    let mut reg = QReg::prepare_bb84(&desc)?;
    let mut leaks = Vec::with_capacity(strategy.rounds());
    for i in 0..strategy.rounds() {
        let leak = strategy.run_round(i, &leaks, &mut reg as &mut dyn RegisterOps, coin)?;
        leaks.push(leak);
    }
    let guess = strategy.guess(&leaks, desc.theta(), coin)?;
    Ok(&guess == desc.x())
}

/// Monte-Carlo win rate with the leakage bound attached.
pub fn estimate_locc(
    strategy: &dyn Bb84Strategy,
    n: usize,
    trials: u64,
    seed: u64,
) -> Result<Estimate, HarnessError> {
    let locc = to_locc(strategy)?;
    let est = estimate_acceptance(trials, seed, |rng| locc_leakage_game(&locc, n, rng))?;
    Ok(est.with_bound(locc_bound(n).raw))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::{AdaptiveRule, CircuitSpec, StrategyDescriptor};
    use crate::bits::BitString;
    use crate::coin::exact_probability;
    use crate::qsim::BREIDBART;

    fn exact(strategy: &StrategyDescriptor, n: usize) -> f64 {
        let locc = to_locc(strategy).unwrap();
        exact_probability(|coin| locc_leakage_game(&locc, n, coin)).unwrap()
    }

    #[test]
    fn memoryless_rates() {
        let rate = 0.5 + 0.5 / 2f64.sqrt();
        assert!((exact(&StrategyDescriptor::Breidbart, 3) - rate.powi(3)).abs() < 1e-12);
        assert!((exact(&StrategyDescriptor::uniform_guess(0.0), 3) - 0.75f64.powi(3)).abs() < 1e-12);
    }

    #[test]
    fn adaptive_two_rounds_exact() {
        // 1 qubit measured computationally, parity picks the angle for the other 2
        let s = StrategyDescriptor::adaptive_compression(
            CircuitSpec::Identity,
            0,
            2,
            AdaptiveRule {
                even_angle: BREIDBART,
                odd_angle: 0.0,
            },
        );
        let rate = 0.5 + 0.5 / 2f64.sqrt();
        // the parity of the first outcome is a fair bit independent of the rest
        let expected = 0.75 * (0.5 * rate.powi(2) + 0.5 * 0.75f64.powi(2));
        assert!((exact(&s, 3) - expected).abs() < 1e-12);
    }

    #[test]
    fn quantum_memory_is_refused() {
        let keep_all = StrategyDescriptor::keep_subset((0..4).collect(), StrategyDescriptor::Breidbart);
        assert!(matches!(
            estimate_locc(&keep_all, 4, 100, 0),
            Err(HarnessError::Access(_))
        ));
    }

    #[test]
    fn rounds_see_only_register_ops() {
        // a round can measure but only returns bytes; the guesser gets bytes and θ
        let probe = LoccStrategy::new(
            vec![Box::new(|prior: &[Vec<u8>], reg: &mut dyn RegisterOps, _c: &mut dyn Coin| {
                assert!(prior.is_empty());
                Ok(reg.num_qubits().to_string().into_bytes())
            })],
            Box::new(|leaks: &[Vec<u8>], theta: &BitString, _c: &mut dyn Coin| {
                assert_eq!(leaks, &[b"5".to_vec()]);
                Ok(BitString::zeros(theta.len()))
            }),
        );
        let p = exact_probability(|coin| locc_leakage_game(&probe, 5, coin)).unwrap();
        assert!((p - 1.0 / 32.0).abs() < 1e-12);
    }
}
