//! Comparisons between a strategy and its transforms.

use serde::{Deserialize, Serialize};

use crate::adversary::{as_prover, measure_inserted, Bb84Strategy};
use crate::coin::exact_probability;
use crate::protocol::{run_poqm, HarnessError, Poqm, ProtocolParams};
use crate::puzzle::{adversary_prover, compile_puzzle_to_poqm, pair_from_single, run_abc_game, Puzzle, PuzzleAdversary};

use super::stats::{estimate_acceptance, Estimate, SE_SLACK};

pub const EXACT_MAX_N: usize = 4;
pub const EXACT_MAX_M2: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode")]
pub enum Mode {
    Exact,
    Mc { trials: u64, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmplificationReport {
    pub protocol: String,
    pub n: usize,
    pub m2: usize,
    pub mode: Mode,
    pub acc_m2: f64,
    pub acc_measured: f64,
    /// `acc_m2 / acc_measured`; infinite when the measured strategy never wins.
    pub ratio: f64,
    pub factor: f64,
    /// Monte-Carlo details; absent in exact mode.
    pub estimates: Option<(Estimate, Estimate)>,
    pub ok: bool,
}

/// Compares a strategy with its measure-inserted transform on `proto`.
pub fn amplification_report(
    proto: &dyn Poqm,
    strategy: &dyn Bb84Strategy,
    params: &ProtocolParams,
    mode: Mode,
) -> Result<AmplificationReport, HarnessError> {
    let m2 = strategy.memory_qubits();
    let measured = measure_inserted(strategy);
    let factor = (m2 as f64).exp2();
    let (acc_m2, acc_measured, estimates, ok) = match mode {
        Mode::Exact => {
            if params.n > EXACT_MAX_N || m2 > EXACT_MAX_M2 {
                return Err(HarnessError::Params(format!(
                    "exact mode supports n ≤ {EXACT_MAX_N}, m2 ≤ {EXACT_MAX_M2}"
                )));
            }
            let run = |s: &dyn Bb84Strategy| {
                exact_probability(|coin| Ok::<_, HarnessError>(run_poqm(proto, &as_prover(s), params, coin)?.verdict.accepted))
            };
            let a = run(strategy)?;
            let b = run(&measured)?;
            (a, b, None, a <= factor * b + 1e-12)
        }
        Mode::Mc { trials, seed } => {
            let run = |s: &dyn Bb84Strategy| {
                estimate_acceptance(trials, seed, |rng| {
                    Ok(run_poqm(proto, &as_prover(s), params, rng)?.verdict.accepted)
                })
            };
            let a = run(strategy)?;
            let b = run(&measured)?;
            let se = (a.se().powi(2) + (factor * b.se()).powi(2)).sqrt();
            let ok = a.p_hat <= factor * b.p_hat + SE_SLACK * se;
            (a.p_hat, b.p_hat, Some((a, b)), ok)
        }
    };
    Ok(AmplificationReport {
        protocol: proto.name().to_string(),
        n: params.n,
        m2,
        mode,
        acc_m2,
        acc_measured,
        ratio: acc_m2 / acc_measured,
        factor,
        estimates,
        ok,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JensenReport {
    pub n: usize,
    pub k: usize,
    pub deterministic_answer: bool,
    pub single: Estimate,
    pub both: Estimate,
    /// `sqrt(SE_both² + (2·p̂_single·SE_single)²)`.
    pub combined_se: f64,
    pub ok: bool,
}

/// Single-prover acceptance of the compiled puzzle against the two-prover
/// game built from the same adversary, with trial `i` of both using the
/// same seed.
pub fn jensen_report<P: Puzzle + Clone + 'static>(
    puzzle: P,
    adversary: &dyn PuzzleAdversary,
    n: usize,
    k: usize,
    trials: u64,
    seed: u64,
) -> Result<JensenReport, HarnessError> {
    let (a, b, c) = pair_from_single(adversary)?;
    let proto = compile_puzzle_to_poqm(puzzle.clone());
    let params = ProtocolParams::new(n).with_k(k);
    let prover = adversary_prover(adversary);
    let single = estimate_acceptance(trials, seed, |rng| {
        Ok(run_poqm(&proto, &prover, &params, rng)?.verdict.accepted)
    })?;
    let both = estimate_acceptance(trials, seed, |rng| run_abc_game(&puzzle, &a, &b, &c, n, k, rng))?;
    let combined_se = (both.se().powi(2) + (2.0 * single.p_hat * single.se()).powi(2)).sqrt();
    let ok = both.p_hat >= single.p_hat.powi(2) - SE_SLACK * combined_se;
    Ok(JensenReport {
        n,
        k,
        deterministic_answer: adversary.deterministic_answer(),
        single,
        both,
        combined_se,
        ok,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::StrategyDescriptor;
    use crate::bb84::Bb84Poqm;
    use crate::puzzle::{MeasureAll, ToyPuzzle, UniformGuess};

    #[test]
    fn keep_one_qubit() {
        let s = StrategyDescriptor::keep_subset(vec![0], StrategyDescriptor::Breidbart);
        let r = amplification_report(&Bb84Poqm::it(), &s, &ProtocolParams::new(1), Mode::Exact).unwrap();
        assert!((r.acc_m2 - 1.0).abs() < 1e-12);
        assert!((r.acc_measured - 0.75).abs() < 1e-12);
        assert!(r.ok);
    }

    #[test]
    fn memoryless_ratio_is_one() {
        let r = amplification_report(
            &Bb84Poqm::it(),
            &StrategyDescriptor::Breidbart,
            &ProtocolParams::new(2),
            Mode::Exact,
        )
        .unwrap();
        assert!((r.ratio - 1.0).abs() < 1e-12 && r.factor == 1.0 && r.ok);
    }

    #[test]
    fn exact_mode_capacity() {
        let s = StrategyDescriptor::Breidbart;
        assert!(amplification_report(&Bb84Poqm::it(), &s, &ProtocolParams::new(5), Mode::Exact).is_err());
    }

    #[test]
    fn monte_carlo_mode() {
        let s = StrategyDescriptor::keep_subset(vec![0, 2], StrategyDescriptor::Breidbart);
        let r = amplification_report(
            &Bb84Poqm::it(),
            &s,
            &ProtocolParams::new(4),
            Mode::Mc { trials: 2000, seed: 4 },
        )
        .unwrap();
        assert!(r.ok && r.estimates.is_some());
    }

    #[test]
    fn jensen_deterministic_answers_coincide() {
        let r = jensen_report(ToyPuzzle, &MeasureAll { angle: 0.0 }, 6, 2, 2000, 3).unwrap();
        assert!(r.deterministic_answer);
        assert_eq!(r.single.successes, r.both.successes);
        assert!(r.ok);
    }

    #[test]
    fn jensen_random_answers() {
        let r = jensen_report(ToyPuzzle, &UniformGuess, 4, 1, 5000, 8).unwrap();
        assert!(r.ok);
        assert!(r.single.contains(0.75f64.powi(4)));
        assert!(r.both.contains(0.625f64.powi(4)));
    }
}
