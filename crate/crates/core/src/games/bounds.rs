//! Closed-form bounds the experiments are compared against.

use serde::{Deserialize, Serialize};

use crate::bb84::n_for_memory;

/// `ξ = −log₂(1/2 + 1/(2√2))`, the per-qubit exponent of the leakage bound.
pub fn xi() -> f64 {
    -(0.5 + 1.0 / (2.0 * 2f64.sqrt())).log2()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundKind {
    Locc,
    Amplification,
    #[serde(rename = "puzzle-2^-k")]
    Puzzle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundValue {
    pub name: BoundKind,
    /// `n`, `m2` or `k`, depending on the bound.
    pub param: usize,
    pub xi: f64,
    pub raw: f64,
    /// The bound says nothing (`raw ≥ 1`); reported, never clamped.
    pub vacuous: bool,
    pub note: Option<String>,
}

/// `2^(−ξn/2 + 2^−n)`: success bound for recovering all of `x` from
/// classical leakage of an `n`-qubit BB84 state.
pub fn locc_bound(n: usize) -> BoundValue {
    let n_f = n as f64;
    let raw = (-xi() * n_f / 2.0 + (-n_f).exp2()).exp2();
    BoundValue {
        name: BoundKind::Locc,
        param: n,
        xi: xi(),
        raw,
        vacuous: raw >= 1.0,
        note: None,
    }
}

/// The leakage bound at the state length used against `m2` qubits.
pub fn hybrid3_bound(m2: usize) -> BoundValue {
    locc_bound(n_for_memory(m2))
}

/// `2^m2`: the most measuring `m2` qubits can lose.
pub fn amplification_factor(m2: usize) -> BoundValue {
    let raw = (m2 as f64).exp2();
    BoundValue {
        name: BoundKind::Amplification,
        param: m2,
        xi: xi(),
        raw,
        vacuous: false,
        note: Some("multiplicative factor, not a probability".into()),
    }
}

/// `2^−k`, the information-theoretic part of puzzle soundness.
pub fn puzzle_bound(k: usize) -> BoundValue {
    BoundValue {
        name: BoundKind::Puzzle,
        param: k,
        xi: xi(),
        raw: (-(k as f64)).exp2(),
        vacuous: k == 0,
        note: Some("computational slack omitted".into()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xi_value() {
        assert!(xi() > 0.22 && xi() < 0.23);
        assert!((xi() - 0.228_443).abs() < 1e-5);
        // 2^−ξ is the per-qubit Breidbart rate
        assert!(((-xi()).exp2() - (std::f64::consts::PI / 8.0).cos().powi(2)).abs() < 1e-12);
    }

    #[test]
    fn locc_reference_points() {
        let b8 = locc_bound(8);
        assert!((b8.raw - 0.5325).abs() < 5e-4 && !b8.vacuous);
        let b1 = locc_bound(1);
        assert!((b1.raw - 1.306).abs() < 1e-3 && b1.vacuous);
        let b16 = locc_bound(16);
        assert!((b16.raw - 0.2817).abs() < 5e-4);
        assert!((hybrid3_bound(1).raw - locc_bound(10).raw).abs() < 1e-15);
        assert!((hybrid3_bound(2).raw - locc_bound(19).raw).abs() < 1e-15);
    }

    #[test]
    fn locc_monotone_and_vacuity() {
        for n in 2..64 {
            assert!(locc_bound(n + 1).raw < locc_bound(n).raw);
        }
        for n in 1..64 {
            let b = locc_bound(n);
            assert_eq!(b.vacuous, b.raw >= 1.0);
        }
    }

    #[test]
    fn puzzle_and_amplification() {
        assert_eq!(puzzle_bound(3).raw, 0.125);
        assert_eq!(puzzle_bound(3).note.as_deref(), Some("computational slack omitted"));
        assert_eq!(amplification_factor(2).raw, 4.0);
    }
}
