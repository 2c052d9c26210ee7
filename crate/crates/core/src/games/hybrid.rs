//! The hybrid chain for the ideal-RSP protocol.
//!
//! * 0: the real game, initialization through the ideal RSP.
//! * 1: the verifier samples the RSP flag itself; on `pass` it knows
//!   `(x, θ)` as before. With the ideal functionality this is the same
//!   experiment as 0.
//! * 2: the verifier prepares the BB84 state directly; no failure.
//! * 3: as 2, against the measure-inserted adversary.

use serde::{Deserialize, Serialize};

use crate::adversary::{as_prover, measure_inserted, Bb84Strategy};
use crate::bb84::{execute_verifier, Bb84Poqm, VerifierSecret};
use crate::coin::Coin;
use crate::bits::BitString;
use crate::protocol::{
    apply_hold, enforce_budget, run_poqm, Budget, HarnessError, Poqm, ProverMemory, ProtocolParams,
};
use crate::qsim::{Bb84Description, QReg};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Hybrid {
    H0,
    H1,
    H2,
    H3,
}

impl Hybrid {
    pub fn from_index(i: usize) -> Result<Self, HarnessError> {
        match i {
            0 => Ok(Hybrid::H0),
            1 => Ok(Hybrid::H1),
            2 => Ok(Hybrid::H2),
            3 => Ok(Hybrid::H3),
            _ => Err(HarnessError::Params(format!("no hybrid {i}"))),
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// One round of the selected hybrid. `fail_prob` is the ideal RSP's
/// failure probability and only matters for hybrids 0 and 1.
pub fn run_hybrid(
    which: Hybrid,
    params: &ProtocolParams,
    fail_prob: f64,
    strategy: &dyn Bb84Strategy,
    coin: &mut dyn Coin,
) -> Result<bool, HarnessError> {
    match which {
        Hybrid::H0 => Ok(run_poqm(&Bb84Poqm::ideal_rsp(fail_prob), &as_prover(strategy), params, coin)?
            .verdict
            .accepted),
        Hybrid::H1 => hybrid1(params, fail_prob, strategy, coin),
        Hybrid::H2 => Ok(run_poqm(&Bb84Poqm::it(), &as_prover(strategy), params, coin)?
            .verdict
            .accepted),
        Hybrid::H3 => {
            let measured = measure_inserted(strategy);
            Ok(run_poqm(&Bb84Poqm::it(), &as_prover(&measured), params, coin)?
                .verdict
                .accepted)
        }
    }
}

fn hybrid1(
    params: &ProtocolParams,
    fail_prob: f64,
    strategy: &dyn Bb84Strategy,
    coin: &mut dyn Coin,
) -> Result<bool, HarnessError> {
    Bb84Poqm::ideal_rsp(fail_prob).check_params(params)?;
    let n = params.n;
    let failed = coin.bernoulli(fail_prob);
    let (secret, mut reg) = if failed {
        (VerifierSecret::Fail, QReg::new(n)?)
    } else {
        let d = Bb84Description::random(n, coin);
        let reg = QReg::prepare_bb84(&d)?;
        (VerifierSecret::Pass(d), reg)
    };
    let classical = strategy.encode(&mut reg, coin)?;
    let mut memory = ProverMemory {
        classical,
        quantum: reg,
    };
    enforce_budget(Budget::Qubits(strategy.memory_qubits()), n, &memory)?;
    apply_hold(params.hold, &mut memory, coin)?;
    let theta = match &secret {
        VerifierSecret::Pass(d) => d.theta().clone(),
        VerifierSecret::Fail => BitString::random(n, coin),
    };
    let answer = strategy.answer(&theta, &memory.classical, &mut memory.quantum, coin)?;
    Ok(execute_verifier(&secret, &answer).accepted)
}
