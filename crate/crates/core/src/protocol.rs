//! Two-phase PoQM protocols over a classical channel.
//!
//! A protocol supplies the verifier halves of both phases ([`Poqm`]); a
//! [`Prover`] supplies the prover halves. The runner moves messages between
//! them, records one [`Transcript`] per phase, and is the only thing that
//! carries prover state across the phase boundary: whatever the first
//! prover half leaves in its [`ProverMemory`] is all the second half gets,
//! and the quantum part is checked against the prover's declared budget.
//! Quantum registers handed from verifier to prover travel out-of-band next
//! to a message; they never appear in a transcript.

use serde::{Deserialize, Serialize};

use crate::coin::Coin;
use crate::qsim::{QReg, QsimError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HarnessError {
    #[error("prover declared {declared} qubits of memory but carried {carried} across the phase boundary")]
    Budget { declared: usize, carried: usize },
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("protocol implementation error: {0}")]
    Protocol(String),
    #[error("strategy error: {0}")]
    Strategy(String),
    #[error("access denied: {0}")]
    Access(String),
    #[error(transparent)]
    Qsim(#[from] QsimError),
}

/// Wall-clock hold between the phases plus per-qubit depolarization applied
/// to the prover's retained register.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Hold {
    pub duration_ms: u64,
    pub depolarize: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    /// Qubit / bit-string length; plays the role of the security parameter.
    pub n: usize,
    pub k: Option<usize>,
    pub hold: Option<Hold>,
}

impl ProtocolParams {
    pub fn new(n: usize) -> Self {
        ProtocolParams {
            n,
            k: None,
            hold: None,
        }
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = Some(k);
        self
    }

    pub fn with_hold(mut self, hold: Hold) -> Self {
        self.hold = Some(hold);
        self
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.n == 0 {
            return Err(HarnessError::Params("n must be at least 1".into()));
        }
        if self.k == Some(0) {
            return Err(HarnessError::Params("k must be at least 1".into()));
        }
        if let Some(h) = self.hold {
            if !(0.0..=1.0).contains(&h.depolarize) {
                return Err(HarnessError::Params(format!(
                    "depolarization {} outside [0, 1]",
                    h.depolarize
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Verifier,
    Prover,
}

/// Append-only record of one phase's classical messages. Senders alternate.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Transcript {
    entries: Vec<(Role, Vec<u8>)>,
}

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, role: Role, message: Vec<u8>) -> Result<(), HarnessError> {
        if self.entries.last().map(|(r, _)| *r) == Some(role) {
            return Err(HarnessError::Protocol(format!(
                "{role:?} sent twice in a row"
            )));
        }
        self.entries.push((role, message));
        Ok(())
    }

    pub fn entries(&self) -> &[(Role, Vec<u8>)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Concatenation, without the alternation check at the seam.
    pub fn concat(&self, other: &Transcript) -> Transcript {
        let mut entries = self.entries.clone();
        entries.extend(other.entries.iter().cloned());
        Transcript { entries }
    }

    /// Every message body joined together, for byte-level scans.
    pub fn all_bytes(&self) -> Vec<u8> {
        self.entries.iter().flat_map(|(_, m)| m.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub accepted: bool,
    pub detail: String,
}

impl Verdict {
    pub fn accept() -> Self {
        Verdict {
            accepted: true,
            detail: "accepted".into(),
        }
    }

    pub fn reject(detail: impl Into<String>) -> Self {
        Verdict {
            accepted: false,
            detail: detail.into(),
        }
    }
}

/// What crosses the phase boundary on the prover side: an unbounded
/// classical string and a quantum register.
#[derive(Debug, Clone, PartialEq)]
pub struct ProverMemory {
    pub classical: Vec<u8>,
    pub quantum: QReg,
}

impl ProverMemory {
    pub fn classical_only(classical: Vec<u8>) -> Self {
        ProverMemory {
            classical,
            quantum: QReg::empty(),
        }
    }
}

/// Result of an initialization phase run with an honest prover.
#[derive(Debug, Clone)]
pub struct InitOutcome {
    pub verifier_out: Vec<u8>,
    pub prover_state: Vec<u8>,
    pub prover_quantum: QReg,
    pub transcript: Transcript,
}

/// A verifier message, optionally accompanied by an out-of-band register.
#[derive(Debug)]
pub struct Outgoing {
    pub message: Vec<u8>,
    pub handoff: Option<QReg>,
    pub expects_reply: bool,
}

impl Outgoing {
    pub fn classical(message: Vec<u8>, expects_reply: bool) -> Self {
        Outgoing {
            message,
            handoff: None,
            expects_reply,
        }
    }
}

pub enum InitStep {
    Send(Outgoing),
    /// Phase over; carries the verifier's private output `v`.
    Done(Vec<u8>),
}

pub enum ExecStep {
    Send(Outgoing),
    Decide(Verdict),
}

/// Reason a verifier gives up on a malformed interaction; becomes ⊥.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Abort(pub String);

pub trait InitVerifier {
    /// `reply` is the prover's answer to the previous message, if one was
    /// expected. The first call gets `None`.
    fn step(&mut self, reply: Option<&[u8]>, coin: &mut dyn Coin) -> Result<InitStep, Abort>;
}

pub trait ExecVerifier {
    fn step(&mut self, reply: Option<&[u8]>, coin: &mut dyn Coin) -> Result<ExecStep, Abort>;
}

/// The verifier side of a two-phase PoQM.
pub trait Poqm: Send + Sync {
    fn name(&self) -> &str;

    /// Honest prover's quantum memory across the hold.
    fn m1(&self, params: &ProtocolParams) -> usize;

    fn check_params(&self, params: &ProtocolParams) -> Result<(), HarnessError> {
        params.validate()
    }

    fn init_verifier(&self, params: &ProtocolParams) -> Box<dyn InitVerifier>;

    fn exec_verifier(
        &self,
        params: &ProtocolParams,
        v: &[u8],
    ) -> Result<Box<dyn ExecVerifier>, HarnessError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Budget {
    /// Must carry exactly the protocol's `m1` qubits.
    Honest,
    /// Adversary limited to exactly this many qubits.
    Qubits(usize),
}

pub trait InitProver {
    /// Replies to a verifier message. Returning a number of replies other
    /// than what the verifier expects is a protocol violation.
    fn on_message(
        &mut self,
        message: &[u8],
        handoff: Option<QReg>,
        coin: &mut dyn Coin,
    ) -> Result<Vec<Vec<u8>>, HarnessError>;

    fn finish(self: Box<Self>, coin: &mut dyn Coin) -> Result<ProverMemory, HarnessError>;
}

pub trait ExecProver {
    fn on_message(
        &mut self,
        message: &[u8],
        coin: &mut dyn Coin,
    ) -> Result<Vec<Vec<u8>>, HarnessError>;
}

/// Prover for both phases. Implementations are immutable descriptions;
/// all per-run state lives in the phase objects.
pub trait Prover: Send + Sync {
    fn budget(&self) -> Budget;

    fn init_phase<'a>(&'a self, params: &ProtocolParams) -> Box<dyn InitProver + 'a>;

    fn exec_phase<'a>(
        &'a self,
        params: &ProtocolParams,
        memory: ProverMemory,
    ) -> Box<dyn ExecProver + 'a>;
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub verdict: Verdict,
    pub init: Transcript,
    pub exec: Transcript,
}

const VIOLATION: &str = "protocol violation";

fn expect_replies(
    expects_reply: bool,
    mut replies: Vec<Vec<u8>>,
) -> Result<Option<Vec<u8>>, String> {
    match (expects_reply, replies.len()) {
        (true, 1) => Ok(replies.pop()),
        (false, 0) => Ok(None),
        (true, got) => Err(format!("{VIOLATION}: expected 1 reply, prover sent {got}")),
        (false, got) => Err(format!("{VIOLATION}: expected no reply, prover sent {got}")),
    }
}

enum InitResult {
    Finished { v: Vec<u8>, memory: ProverMemory },
    Rejected(String),
}

fn run_init_phase(
    proto: &dyn Poqm,
    prover: &dyn Prover,
    params: &ProtocolParams,
    transcript: &mut Transcript,
    coin: &mut dyn Coin,
) -> Result<InitResult, HarnessError> {
    let mut verifier = proto.init_verifier(params);
    let mut p1 = prover.init_phase(params);
    let mut reply: Option<Vec<u8>> = None;
    let v = loop {
        match verifier.step(reply.as_deref(), coin) {
            Err(Abort(why)) => return Ok(InitResult::Rejected(why)),
            Ok(InitStep::Done(v)) => break v,
            Ok(InitStep::Send(out)) => {
                transcript.push(Role::Verifier, out.message.clone())?;
                let replies = p1.on_message(&out.message, out.handoff, coin)?;
                reply = match expect_replies(out.expects_reply, replies) {
                    Ok(r) => r,
                    Err(why) => return Ok(InitResult::Rejected(why)),
                };
                if let Some(r) = &reply {
                    transcript.push(Role::Prover, r.clone())?;
                }
            }
        }
    };
    let memory = p1.finish(coin)?;
    Ok(InitResult::Finished { v, memory })
}

fn run_exec_phase(
    proto: &dyn Poqm,
    prover: &dyn Prover,
    params: &ProtocolParams,
    v: &[u8],
    memory: ProverMemory,
    transcript: &mut Transcript,
    coin: &mut dyn Coin,
) -> Result<Verdict, HarnessError> {
    let mut verifier = proto.exec_verifier(params, v)?;
    let mut p2 = prover.exec_phase(params, memory);
    let mut reply: Option<Vec<u8>> = None;
    loop {
        match verifier.step(reply.as_deref(), coin) {
            Err(Abort(why)) => return Ok(Verdict::reject(why)),
            Ok(ExecStep::Decide(verdict)) => return Ok(verdict),
            Ok(ExecStep::Send(out)) => {
                transcript.push(Role::Verifier, out.message.clone())?;
                let replies = p2.on_message(&out.message, coin)?;
                reply = match expect_replies(out.expects_reply, replies) {
                    Ok(r) => r,
                    Err(why) => return Ok(Verdict::reject(why)),
                };
                if let Some(r) = &reply {
                    transcript.push(Role::Prover, r.clone())?;
                }
            }
        }
    }
}

/// Checks the quantum part of `memory` against the prover's declared budget.
pub fn enforce_budget(
    budget: Budget,
    m1: usize,
    memory: &ProverMemory,
) -> Result<(), HarnessError> {
    let declared = match budget {
        Budget::Honest => m1,
        Budget::Qubits(m2) => m2,
    };
    let carried = memory.quantum.n();
    if carried != declared {
        return Err(HarnessError::Budget { declared, carried });
    }
    Ok(())
}

/// Applies the hold's depolarization to every retained qubit.
pub fn apply_hold(
    hold: Option<Hold>,
    memory: &mut ProverMemory,
    coin: &mut dyn Coin,
) -> Result<(), HarnessError> {
    if let Some(h) = hold {
        if h.depolarize > 0.0 {
            for q in 0..memory.quantum.n() {
                memory.quantum.depolarize(q, h.depolarize, coin)?;
            }
        }
    }
    Ok(())
}

/// Runs initialization, the hold, and execution. Malformed interaction ends
/// in a ⊥ verdict; a prover exceeding its budget is a harness error.
pub fn run_poqm(
    proto: &dyn Poqm,
    prover: &dyn Prover,
    params: &ProtocolParams,
    coin: &mut dyn Coin,
) -> Result<RunOutcome, HarnessError> {
    run_both_phases(proto, prover, params, true, coin)
}

fn run_both_phases(
    proto: &dyn Poqm,
    prover: &dyn Prover,
    params: &ProtocolParams,
    memory_bounded: bool,
    coin: &mut dyn Coin,
) -> Result<RunOutcome, HarnessError> {
    proto.check_params(params)?;
    let mut init = Transcript::new();
    let mut exec = Transcript::new();
    let (v, mut memory) = match run_init_phase(proto, prover, params, &mut init, coin)? {
        InitResult::Rejected(why) => {
            return Ok(RunOutcome {
                verdict: Verdict::reject(why),
                init,
                exec,
            })
        }
        InitResult::Finished { v, memory } => (v, memory),
    };
    if memory_bounded {
        enforce_budget(prover.budget(), proto.m1(params), &memory)?;
        apply_hold(params.hold, &mut memory, coin)?;
    }
    let verdict = run_exec_phase(proto, prover, params, &v, memory, &mut exec, coin)?;
    Ok(RunOutcome {
        verdict,
        init,
        exec,
    })
}

/// Runs only the initialization phase with an honest prover.
pub fn run_init(
    proto: &dyn Poqm,
    prover: &dyn Prover,
    params: &ProtocolParams,
    coin: &mut dyn Coin,
) -> Result<InitOutcome, HarnessError> {
    proto.check_params(params)?;
    let mut transcript = Transcript::new();
    match run_init_phase(proto, prover, params, &mut transcript, coin)? {
        InitResult::Rejected(why) => Err(HarnessError::Protocol(format!(
            "initialization rejected: {why}"
        ))),
        InitResult::Finished { v, memory } => {
            enforce_budget(prover.budget(), proto.m1(params), &memory)?;
            Ok(InitOutcome {
                verifier_out: v,
                prover_state: memory.classical,
                prover_quantum: memory.quantum,
                transcript,
            })
        }
    }
}

/// A PoQM collapsed into a single interaction: the verifier runs both
/// phases back to back and outputs the execution verdict.
pub struct Poq<P> {
    inner: P,
}

pub fn poqm_to_poq<P: Poqm>(proto: P) -> Poq<P> {
    Poq { inner: proto }
}

impl<P: Poqm> Poq<P> {
    pub fn inner(&self) -> &P {
        &self.inner
    }

    /// One interaction; the transcript is both phases concatenated. There
    /// is no hold and no memory budget.
    pub fn run(
        &self,
        prover: &dyn Prover,
        params: &ProtocolParams,
        coin: &mut dyn Coin,
    ) -> Result<(Verdict, Transcript), HarnessError> {
        let out = run_both_phases(&self.inner, prover, params, false, coin)?;
        Ok((out.verdict, out.init.concat(&out.exec)))
    }
}
