//! Exact check that inserting a `k`-outcome measurement into a circuit
//! keeps every output probability at least `1/k` of its original value.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::adversary::{Gate, GateKind};
use crate::bits::BitString;
use crate::coin::{exact_distribution, Coin};
use crate::protocol::HarnessError;
use crate::qsim::{Matrix, QReg};

pub const BZ_MAX_QUBITS: usize = 6;

/// Starts in `|0…0⟩`, applies `gates`, measures every qubit
/// computationally.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BzCircuit {
    pub qubits: usize,
    pub gates: Vec<Gate>,
}

/// Computational measurement of `measured` after the first `step` gates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Insertion {
    pub step: usize,
    pub measured: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BzReport {
    pub p_original: BTreeMap<String, f64>,
    pub p_inserted: BTreeMap<String, f64>,
    pub k: usize,
    /// `min p'(x)·k / p(x)` over outcomes with `p(x) > 0`.
    pub worst_ratio: f64,
    pub ok: bool,
}

const TOLERANCE: f64 = 1e-12;

fn run(
    circuit: &BzCircuit,
    insertion: Option<&Insertion>,
    coin: &mut dyn Coin,
) -> Result<BitString, HarnessError> {
    let mut reg = QReg::new(circuit.qubits)?;
    for (step, gate) in circuit.gates.iter().enumerate() {
        if let Some(ins) = insertion.filter(|ins| ins.step == step) {
            for &q in &ins.measured {
                reg.measure_angle(q, 0.0, coin)?;
            }
        }
        reg.apply_unitary(&gate.gate.matrix(), &gate.targets)?;
    }
    if let Some(ins) = insertion.filter(|ins| ins.step == circuit.gates.len()) {
        for &q in &ins.measured {
            reg.measure_angle(q, 0.0, coin)?;
        }
    }
    (0..circuit.qubits)
        .map(|q| Ok(reg.measure_angle(q, 0.0, coin)?))
        .collect()
}

fn distribution(
    circuit: &BzCircuit,
    insertion: Option<&Insertion>,
) -> Result<BTreeMap<String, f64>, HarnessError> {
    Ok(exact_distribution(|coin| run(circuit, insertion, coin))?
        .into_iter()
        .map(|(x, p)| (x.to_string(), p))
        .collect())
}

pub fn check_bz(circuit: &BzCircuit, insertion: &Insertion) -> Result<BzReport, HarnessError> {
    if circuit.qubits == 0 || circuit.qubits > BZ_MAX_QUBITS {
        return Err(HarnessError::Params(format!(
            "exact check supports 1..={BZ_MAX_QUBITS} qubits, got {}",
            circuit.qubits
        )));
    }
    if insertion.step > circuit.gates.len() {
        return Err(HarnessError::Params("insertion point past the end".into()));
    }
    let mut measured = insertion.measured.clone();
    measured.sort_unstable();
    measured.dedup();
    if measured.len() != insertion.measured.len()
        || measured.last().is_some_and(|&q| q >= circuit.qubits)
    {
        return Err(HarnessError::Params("bad measured-qubit set".into()));
    }
    let k = 1usize << measured.len();
    let p_original = distribution(circuit, None)?;
    let p_inserted = distribution(circuit, Some(insertion))?;
    let mut worst_ratio = f64::INFINITY;
    let mut ok = true;
    for (x, &p) in &p_original {
        let q = p_inserted.get(x).copied().unwrap_or(0.0);
        if q < p / k as f64 - TOLERANCE {
            ok = false;
        }
        if p > TOLERANCE {
            worst_ratio = worst_ratio.min(q * k as f64 / p);
        }
    }
    Ok(BzReport {
        p_original,
        p_inserted,
        k,
        worst_ratio,
        ok,
    })
}

/// `depth` gates, each a Haar-random unitary on one or two random qubits.
pub fn random_circuit<R: Rng>(qubits: usize, depth: usize, rng: &mut R) -> BzCircuit {
    let gates = (0..depth)
        .map(|_| {
            let width = if qubits >= 2 && rng.gen_bool(0.5) { 2 } else { 1 };
            let targets = sample(rng, qubits, width).into_vec();
            Gate {
                gate: GateKind::Unitary(Matrix::random_unitary(width, rng)),
                targets,
            }
        })
        .collect();
    BzCircuit { qubits, gates }
}

/// Uniform insertion point and a uniform non-empty subset of qubits.
pub fn random_insertion<R: Rng>(circuit: &BzCircuit, rng: &mut R) -> Insertion {
    let step = rng.gen_range(0..=circuit.gates.len());
    let count = rng.gen_range(1..=circuit.qubits);
    Insertion {
        step,
        measured: sample(rng, circuit.qubits, count).into_vec(),
    }
}
