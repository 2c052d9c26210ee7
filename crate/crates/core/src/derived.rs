//! Constructions built on the extractable BB84 PoQM: a state puzzle and a
//! key exchange over a classical channel.
//!
//! Both use the ideal-RSP initialization, whose transcript is a marker
//! that says nothing about `(x, θ)`. So an attacker that sees only the
//! public data is guessing blind. The evaluators below measure that.

use serde::{Deserialize, Serialize};

use crate::bb84::{execute_prover, extract, ideal_rsp_init, VerifierSecret};
use crate::bits::BitString;
use crate::coin::Coin;
use crate::games::stats::{estimate_acceptance, estimate_mean, Estimate, MeanEstimate, SE_SLACK};
use crate::protocol::{apply_hold, Hold, HarnessError, ProverMemory, Role, Transcript};
use crate::qsim::{Bb84Description, Matrix, QReg};

/// `(s, |ψ_s⟩)`: `s` is the prover's classical state and the
/// initialization transcript; the answer state is the BB84 state.
#[derive(Debug, Clone)]
pub struct StatePuzzInstance {
    pub s: Vec<u8>,
    target: Bb84Description,
    honest: QReg,
}

#[derive(Debug, Serialize, Deserialize)]
struct PuzzleString {
    state: String,
    tau: Vec<(Role, String)>,
}

impl StatePuzzInstance {
    pub fn target(&self) -> &Bb84Description {
        &self.target
    }

    /// The honest prover's register after initialization.
    pub fn honest_register(&self) -> &QReg {
        &self.honest
    }

    pub fn view(&self) -> StatePuzzView<'_> {
        StatePuzzView { s: &self.s }
    }
}

/// Runs the ideal-RSP initialization with the honest prover and packages
/// its classical side as `s`.
pub fn statepuzz_samp(n: usize, coin: &mut dyn Coin) -> Result<StatePuzzInstance, HarnessError> {
    let (secret, init) = ideal_rsp_init(n, 0.0, coin)?;
    let target = secret
        .description()
        .cloned()
        .ok_or_else(|| HarnessError::Protocol("state preparation failed with fail_prob 0".into()))?;
    let s = PuzzleString {
        state: String::from_utf8_lossy(&init.prover_state).into_owned(),
        tau: init
            .transcript
            .entries()
            .iter()
            .map(|(r, m)| (*r, String::from_utf8_lossy(m).into_owned()))
            .collect(),
    };
    Ok(StatePuzzInstance {
        s: serde_json::to_vec(&s).expect("puzzle string serializes"),
        target,
        honest: init.prover_quantum,
    })
}

/// What an attacker gets: `s` and nothing else.
pub struct StatePuzzView<'a> {
    pub s: &'a [u8],
}

impl StatePuzzView<'_> {
    pub fn target(&self) -> Result<&Bb84Description, HarnessError> {
        Err(HarnessError::Access("the answer state is not part of s".into()))
    }
}

pub trait StatePuzzAttacker: Send + Sync {
    fn name(&self) -> &str;

    fn attack(
        &self,
        view: &StatePuzzView<'_>,
        n: usize,
        coin: &mut dyn Coin,
    ) -> Result<QReg, HarnessError>;
}

/// Outputs `|0…0⟩`.
pub struct ZeroState;

impl StatePuzzAttacker for ZeroState {
    fn name(&self) -> &str {
        "zero-state"
    }

    fn attack(&self, _view: &StatePuzzView<'_>, n: usize, _coin: &mut dyn Coin) -> Result<QReg, HarnessError> {
        Ok(QReg::new(n)?)
    }
}

/// Outputs `⊗ (cos a|0⟩ + sin a|1⟩)`.
pub struct ProductAngle(pub f64);

impl StatePuzzAttacker for ProductAngle {
    fn name(&self) -> &str {
        "product-angle"
    }

    fn attack(&self, _view: &StatePuzzView<'_>, n: usize, _coin: &mut dyn Coin) -> Result<QReg, HarnessError> {
        let mut reg = QReg::new(n)?;
        let r = Matrix::rotation(self.0);
        for q in 0..n {
            reg.apply_unitary(&r, &[q])?;
        }
        Ok(reg)
    }
}

/// Outputs a fresh uniformly random BB84 state.
pub struct RandomBb84;

impl StatePuzzAttacker for RandomBb84 {
    fn name(&self) -> &str {
        "random-bb84"
    }

    fn attack(&self, _view: &StatePuzzView<'_>, n: usize, coin: &mut dyn Coin) -> Result<QReg, HarnessError> {
        Ok(QReg::prepare_bb84(&Bb84Description::random(n, coin))?)
    }
}

/// Tries to read the answer out of the view.
pub struct TargetReader;

impl StatePuzzAttacker for TargetReader {
    fn name(&self) -> &str {
        "target-reader"
    }

    fn attack(&self, view: &StatePuzzView<'_>, _n: usize, _coin: &mut dyn Coin) -> Result<QReg, HarnessError> {
        Ok(QReg::prepare_bb84(view.target()?)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatePuzzReport {
    pub attacker: String,
    pub n: usize,
    pub fidelity: MeanEstimate,
    /// `2^−n`, the mean fidelity of any state chosen without seeing `ψ_s`.
    pub blind_value: f64,
    pub ok: bool,
}

/// Mean fidelity of the attacker's output with `ψ_s` over fresh instances.
pub fn statepuzz_attack_eval(
    attacker: &dyn StatePuzzAttacker,
    n: usize,
    trials: u64,
    seed: u64,
) -> Result<StatePuzzReport, HarnessError> {
    let fidelity = estimate_mean(trials, seed, |rng| {
        let inst = statepuzz_samp(n, rng)?;
        let out = attacker.attack(&inst.view(), n, rng)?;
        if out.n() != n {
            return Err(HarnessError::Strategy(format!(
                "attacker output has {} qubits, expected {n}",
                out.n()
            )));
        }
        Ok(out.fidelity(&inst.target)?)
    })?;
    let blind_value = (-(n as f64)).exp2();
    let ok = fidelity.mean <= blind_value + SE_SLACK * fidelity.se;
    Ok(StatePuzzReport {
        attacker: attacker.name().to_string(),
        n,
        fidelity,
        blind_value,
        ok,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionReport {
    pub fidelity: MeanEstimate,
    pub acceptance: Estimate,
}

/// Feeds the register produced by `source` to the honest execution phase
/// of the BB84 PoQM. A register close to `ψ_s` must pass about as often as
/// its fidelity.
pub fn reduction_check<F>(n: usize, trials: u64, seed: u64, source: F) -> Result<ReductionReport, HarnessError>
where
    F: Fn(&StatePuzzInstance, &mut dyn Coin) -> Result<QReg, HarnessError>,
{
    let fidelity = estimate_mean(trials, seed, |rng| {
        let inst = statepuzz_samp(n, rng)?;
        Ok(source(&inst, rng)?.fidelity(&inst.target)?)
    })?;
    let acceptance = estimate_acceptance(trials, seed, |rng| {
        let inst = statepuzz_samp(n, rng)?;
        let mut reg = source(&inst, rng)?;
        Ok(&execute_prover(&mut reg, inst.target.theta(), rng)? == inst.target.x())
    })?;
    Ok(ReductionReport { fidelity, acceptance })
}

/// One key-exchange session. Alice plays the prover and Bob the verifier.
#[derive(Debug, Clone)]
pub struct KeOutcome {
    pub a: BitString,
    pub b: BitString,
    /// Initialization transcript followed by Bob's `θ`.
    pub tau: Transcript,
    /// Sessions discarded because the state preparation failed.
    pub retries: usize,
}

pub const KE_MAX_RETRIES: usize = 64;

/// Runs initialization (retrying on a failed preparation), the hold, then
/// Bob announces `θ`; Alice measures and keeps the outcome as `a`, which
/// she never sends, and Bob extracts `b`.
pub fn ke_run(
    n: usize,
    fail_prob: f64,
    hold: Option<Hold>,
    coin: &mut dyn Coin,
) -> Result<KeOutcome, HarnessError> {
    for retries in 0..=KE_MAX_RETRIES {
        let (secret, init) = ideal_rsp_init(n, fail_prob, coin)?;
        let VerifierSecret::Pass(desc) = &secret else {
            continue;
        };
        let mut memory = ProverMemory {
            classical: init.prover_state.clone(),
            quantum: init.prover_quantum,
        };
        apply_hold(hold, &mut memory, coin)?;
        let theta = desc.theta().clone();
        let mut exec = Transcript::new();
        exec.push(Role::Verifier, theta.to_bytes())?;
        let tau = init.transcript.concat(&exec);
        let a = execute_prover(&mut memory.quantum, &theta, coin)?;
        let b = extract(&secret, &init.transcript, &theta)
            .map_err(|e| HarnessError::Protocol(e.to_string()))?;
        return Ok(KeOutcome { a, b, tau, retries });
    }
    Err(HarnessError::Protocol(format!(
        "state preparation failed {} times in a row",
        KE_MAX_RETRIES + 1
    )))
}

/// Fraction of sessions with `a = b`.
pub fn ke_agreement(
    n: usize,
    hold: Option<Hold>,
    trials: u64,
    seed: u64,
) -> Result<Estimate, HarnessError> {
    estimate_acceptance(trials, seed, |rng| {
        let out = ke_run(n, 0.0, hold, rng)?;
        Ok(out.a == out.b)
    })
}

/// What an eavesdropper sees: the public transcript.
pub struct EveView<'a> {
    pub tau: &'a Transcript,
}

impl EveView<'_> {
    pub fn alice_key(&self) -> Result<&BitString, HarnessError> {
        Err(HarnessError::Access("Alice's key never leaves her lab".into()))
    }
}

pub trait Eavesdropper: Send + Sync {
    fn name(&self) -> &str;

    fn guess(&self, view: &EveView<'_>, n: usize, coin: &mut dyn Coin) -> Result<BitString, HarnessError>;
}

pub struct AllZeros;

impl Eavesdropper for AllZeros {
    fn name(&self) -> &str {
        "all-zeros"
    }

    fn guess(&self, _view: &EveView<'_>, n: usize, _coin: &mut dyn Coin) -> Result<BitString, HarnessError> {
        Ok(BitString::zeros(n))
    }
}

/// Guesses `x = θ`, read from the last transcript message.
pub struct EchoBases;

impl Eavesdropper for EchoBases {
    fn name(&self) -> &str {
        "echo-bases"
    }

    fn guess(&self, view: &EveView<'_>, n: usize, _coin: &mut dyn Coin) -> Result<BitString, HarnessError> {
        let last = view
            .tau
            .entries()
            .last()
            .ok_or_else(|| HarnessError::Strategy("empty transcript".into()))?;
        BitString::from_bytes(&last.1)
            .ok()
            .filter(|b| b.len() == n)
            .ok_or_else(|| HarnessError::Strategy("last message is not a basis string".into()))
    }
}

pub struct RandomGuess;

impl Eavesdropper for RandomGuess {
    fn name(&self) -> &str {
        "random"
    }

    fn guess(&self, _view: &EveView<'_>, n: usize, coin: &mut dyn Coin) -> Result<BitString, HarnessError> {
        Ok(BitString::random(n, coin))
    }
}

/// Asks for Alice's key.
pub struct KeyThief;

impl Eavesdropper for KeyThief {
    fn name(&self) -> &str {
        "key-thief"
    }

    fn guess(&self, view: &EveView<'_>, _n: usize, _coin: &mut dyn Coin) -> Result<BitString, HarnessError> {
        view.alice_key().cloned()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EveReport {
    pub eve: String,
    pub n: usize,
    pub success: Estimate,
    /// `2^−n`: `x` is uniform and independent of the transcript.
    pub exact: f64,
    pub ok: bool,
}

/// Empirical `Pr[e = a]`.
pub fn ke_eve_eval(
    eve: &dyn Eavesdropper,
    n: usize,
    trials: u64,
    seed: u64,
) -> Result<EveReport, HarnessError> {
    let exact = (-(n as f64)).exp2();
    let success = estimate_acceptance(trials, seed, |rng| {
        let out = ke_run(n, 0.0, None, rng)?;
        let e = eve.guess(&EveView { tau: &out.tau }, n, rng)?;
        Ok(e == out.a)
    })?
    .with_bound(exact);
    let ok = success.within_bound();
    Ok(EveReport {
        eve: eve.name().to_string(),
        n,
        success,
        exact,
        ok,
    })
}
