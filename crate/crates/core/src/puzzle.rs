//! 1-of-2^k puzzles, a toy instantiation, the compiler to a PoQM, and the
//! two-prover (A, B, C) game.
//!
//! The toy puzzle hands the prover a BB84 state out-of-band. Its `n`
//! qubits are split into `k` contiguous blocks; the challenge picks a basis
//! per block and the verifier checks the positions whose preparation basis
//! agrees with the challenged one. This keeps the algorithm shapes (`y`,
//! `ch`, `ans`, `Ver`) without any computational assumption, so soundness
//! here is whatever the adversaries manage, not a theorem.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::coin::Coin;
use crate::protocol::{
    Abort, Budget, ExecProver, ExecStep, ExecVerifier, HarnessError, InitProver, InitStep,
    InitVerifier, Outgoing, Poqm, Prover, ProverMemory, ProtocolParams, Verdict,
};
use crate::qsim::{basis_angle, Bb84Description, QReg, MAX_QUBITS};

/// Partition of `0..n` into `k` contiguous blocks; the first `n mod k`
/// blocks get the extra qubit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockLayout {
    pub n: usize,
    pub k: usize,
}

impl BlockLayout {
    pub fn new(n: usize, k: usize) -> Result<Self, HarnessError> {
        if k == 0 || k > n {
            return Err(HarnessError::Params(format!(
                "need 1 ≤ k ≤ n, got n = {n}, k = {k}"
            )));
        }
        if n > MAX_QUBITS {
            return Err(HarnessError::Params(format!("n = {n} exceeds {MAX_QUBITS}")));
        }
        Ok(BlockLayout { n, k })
    }

    pub fn block(&self, j: usize) -> Range<usize> {
        let (q, r) = (self.n / self.k, self.n % self.k);
        let start = j * q + j.min(r);
        let len = q + usize::from(j < r);
        start..start + len
    }

    pub fn blocks(&self) -> Vec<Range<usize>> {
        (0..self.k).map(|j| self.block(j)).collect()
    }

    pub fn block_of(&self, i: usize) -> usize {
        (0..self.k)
            .find(|&j| self.block(j).contains(&i))
            .expect("index inside layout")
    }

    /// Challenged basis for each qubit.
    pub fn expand(&self, ch: &BitString) -> BitString {
        (0..self.n).map(|i| ch.get(self.block_of(i))).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToySecret {
    pub desc: Bb84Description,
    pub layout: BlockLayout,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PuzzleKeys {
    pub pk: Vec<u8>,
    pub sk: Vec<u8>,
}

#[derive(Debug, Clone)]
pub struct PuzzleInstance {
    pub y: Vec<u8>,
    pub reg: QReg,
}

/// The four puzzle algorithms. Keys and `y` are opaque byte strings so the
/// compiler and the game work for any instantiation.
pub trait Puzzle: Send + Sync {
    fn name(&self) -> &str;

    /// Size of the register `Obligate` outputs.
    fn register_size(&self, n: usize, k: usize) -> usize;

    /// `KeyGen`. The returned register is what `Obligate` receives
    /// out-of-band.
    fn keygen(&self, n: usize, k: usize, coin: &mut dyn Coin)
        -> Result<(PuzzleKeys, QReg), HarnessError>;

    fn obligate(&self, pk: &[u8], handed: QReg, coin: &mut dyn Coin)
        -> Result<PuzzleInstance, HarnessError>;

    fn solve(
        &self,
        pk: &[u8],
        inst: &mut PuzzleInstance,
        ch: &BitString,
        coin: &mut dyn Coin,
    ) -> Result<BitString, HarnessError>;

    fn ver(&self, sk: &[u8], y: &[u8], ch: &BitString, ans: &BitString) -> bool;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ToyPuzzle;

fn parse_layout(pk: &[u8]) -> Result<BlockLayout, HarnessError> {
    serde_json::from_slice(pk).map_err(|e| HarnessError::Protocol(format!("bad public key: {e}")))
}

pub fn toy_keygen(
    n: usize,
    k: usize,
    coin: &mut dyn Coin,
) -> Result<(ToySecret, BlockLayout, QReg), HarnessError> {
    let layout = BlockLayout::new(n, k)?;
    let desc = Bb84Description::random(n, coin);
    let reg = QReg::prepare_bb84(&desc)?;
    Ok((ToySecret { desc, layout }, layout, reg))
}

pub fn toy_obligate(layout: &BlockLayout, handed: QReg) -> Result<PuzzleInstance, HarnessError> {
    if handed.n() != layout.n {
        return Err(HarnessError::Params(format!(
            "handed register has {} qubits, layout expects {}",
            handed.n(),
            layout.n
        )));
    }
    Ok(PuzzleInstance {
        y: Vec::new(),
        reg: handed,
    })
}

/// Measures every qubit of block `j` in basis `ch_j`.
pub fn toy_solve(
    layout: &BlockLayout,
    inst: &mut PuzzleInstance,
    ch: &BitString,
    coin: &mut dyn Coin,
) -> Result<BitString, HarnessError> {
    if ch.len() != layout.k {
        return Err(HarnessError::Params(format!(
            "challenge has {} bits, expected {}",
            ch.len(),
            layout.k
        )));
    }
    let bases = layout.expand(ch);
    (0..layout.n)
        .map(|i| Ok(inst.reg.measure_angle(i, basis_angle(bases.get(i)), coin)?))
        .collect()
}

/// Accepts iff `ans_i = x_i` at every `i` whose basis `θ_i` equals the
/// challenge bit of its block.
pub fn toy_ver(sk: &ToySecret, ch: &BitString, ans: &BitString) -> bool {
    let layout = sk.layout;
    if ans.len() != layout.n || ch.len() != layout.k {
        return false;
    }
    let bases = layout.expand(ch);
    let (x, theta) = (sk.desc.x(), sk.desc.theta());
    (0..layout.n).all(|i| theta.get(i) != bases.get(i) || ans.get(i) == x.get(i))
}

impl Puzzle for ToyPuzzle {
    fn name(&self) -> &str {
        "toy"
    }

    fn register_size(&self, n: usize, _k: usize) -> usize {
        n
    }

    fn keygen(
        &self,
        n: usize,
        k: usize,
        coin: &mut dyn Coin,
    ) -> Result<(PuzzleKeys, QReg), HarnessError> {
        let (sk, layout, reg) = toy_keygen(n, k, coin)?;
        let keys = PuzzleKeys {
            pk: serde_json::to_vec(&layout).expect("layout serializes"),
            sk: serde_json::to_vec(&sk).expect("secret serializes"),
        };
        Ok((keys, reg))
    }

    fn obligate(
        &self,
        pk: &[u8],
        handed: QReg,
        _coin: &mut dyn Coin,
    ) -> Result<PuzzleInstance, HarnessError> {
        toy_obligate(&parse_layout(pk)?, handed)
    }

    fn solve(
        &self,
        pk: &[u8],
        inst: &mut PuzzleInstance,
        ch: &BitString,
        coin: &mut dyn Coin,
    ) -> Result<BitString, HarnessError> {
        toy_solve(&parse_layout(pk)?, inst, ch, coin)
    }

    fn ver(&self, sk: &[u8], y: &[u8], ch: &BitString, ans: &BitString) -> bool {
        match serde_json::from_slice::<ToySecret>(sk) {
            Ok(sk) => y.is_empty() && toy_ver(&sk, ch, ans),
            Err(_) => false,
        }
    }
}

/// Verifier output `v = (sk, y)` of the compiled protocol.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct CompiledSecret {
    sk: Vec<u8>,
    y: Vec<u8>,
}

fn params_k(params: &ProtocolParams) -> usize {
    params.k.unwrap_or(1)
}

/// The 4-round PoQM built from a puzzle: initialization sends `pk` (plus
/// the out-of-band register) and receives `y`; execution sends a uniform
/// `ch` and receives `ans`.
pub struct CompiledPoqm<P> {
    puzzle: P,
}

pub fn compile_puzzle_to_poqm<P: Puzzle + Clone + 'static>(puzzle: P) -> CompiledPoqm<P> {
    CompiledPoqm { puzzle }
}

impl<P> CompiledPoqm<P> {
    pub fn puzzle(&self) -> &P {
        &self.puzzle
    }
}

/// Messages per phase of the compiled protocol.
pub const COMPILED_ROUNDS: usize = 4;

struct CompiledInit<P> {
    puzzle: P,
    n: usize,
    k: usize,
    sk: Option<Vec<u8>>,
}

impl<P: Puzzle> InitVerifier for CompiledInit<P> {
    fn step(&mut self, reply: Option<&[u8]>, coin: &mut dyn Coin) -> Result<InitStep, Abort> {
        match &self.sk {
            None => {
                let (keys, reg) = self
                    .puzzle
                    .keygen(self.n, self.k, coin)
                    .map_err(|e| Abort(e.to_string()))?;
                self.sk = Some(keys.sk);
                Ok(InitStep::Send(Outgoing {
                    message: keys.pk,
                    handoff: Some(reg),
                    expects_reply: true,
                }))
            }
            Some(sk) => {
                let y = reply.ok_or_else(|| Abort("protocol violation: missing y".into()))?;
                let v = CompiledSecret {
                    sk: sk.clone(),
                    y: y.to_vec(),
                };
                Ok(InitStep::Done(serde_json::to_vec(&v).expect("secret serializes")))
            }
        }
    }
}

struct CompiledExec<P> {
    puzzle: P,
    k: usize,
    secret: CompiledSecret,
    ch: Option<BitString>,
}

impl<P: Puzzle> ExecVerifier for CompiledExec<P> {
    fn step(&mut self, reply: Option<&[u8]>, coin: &mut dyn Coin) -> Result<ExecStep, Abort> {
        match &self.ch {
            None => {
                let ch = BitString::random(self.k, coin);
                let msg = ch.to_bytes();
                self.ch = Some(ch);
                Ok(ExecStep::Send(Outgoing::classical(msg, true)))
            }
            Some(ch) => {
                let reply = reply.ok_or_else(|| Abort("protocol violation: missing answer".into()))?;
                let ans = BitString::from_bytes(reply)
                    .map_err(|e| Abort(format!("protocol violation: malformed answer ({e})")))?;
                if self.puzzle.ver(&self.secret.sk, &self.secret.y, ch, &ans) {
                    Ok(ExecStep::Decide(Verdict::accept()))
                } else {
                    Ok(ExecStep::Decide(Verdict::reject("puzzle verification failed")))
                }
            }
        }
    }
}

impl<P: Puzzle + Clone + 'static> Poqm for CompiledPoqm<P> {
    fn name(&self) -> &str {
        "puzzle"
    }

    fn m1(&self, params: &ProtocolParams) -> usize {
        self.puzzle.register_size(params.n, params_k(params))
    }

    fn check_params(&self, params: &ProtocolParams) -> Result<(), HarnessError> {
        params.validate()?;
        BlockLayout::new(params.n, params_k(params))?;
        Ok(())
    }

    fn init_verifier(&self, params: &ProtocolParams) -> Box<dyn InitVerifier> {
        Box::new(CompiledInit {
            puzzle: self.puzzle.clone(),
            n: params.n,
            k: params_k(params),
            sk: None,
        })
    }

    fn exec_verifier(
        &self,
        params: &ProtocolParams,
        v: &[u8],
    ) -> Result<Box<dyn ExecVerifier>, HarnessError> {
        let secret = serde_json::from_slice(v)
            .map_err(|e| HarnessError::Protocol(format!("bad verifier output: {e}")))?;
        Ok(Box::new(CompiledExec {
            puzzle: self.puzzle.clone(),
            k: params_k(params),
            secret,
            ch: None,
        }))
    }
}

/// What the honest prover carries as classical state: `pk` and `y`.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct HonestState {
    pk: Vec<u8>,
    y: Vec<u8>,
}

/// Honest prover of the compiled protocol: `Obligate`, keep the register,
/// `Solve` on the challenge.
#[derive(Debug, Clone)]
pub struct HonestPuzzleProver<P> {
    puzzle: P,
}

impl<P> HonestPuzzleProver<P> {
    pub fn new(puzzle: P) -> Self {
        HonestPuzzleProver { puzzle }
    }
}

struct HonestPuzzleInit<'a, P> {
    puzzle: &'a P,
    state: Option<(HonestState, QReg)>,
}

impl<P: Puzzle> InitProver for HonestPuzzleInit<'_, P> {
    fn on_message(
        &mut self,
        message: &[u8],
        handoff: Option<QReg>,
        coin: &mut dyn Coin,
    ) -> Result<Vec<Vec<u8>>, HarnessError> {
        let handed =
            handoff.ok_or_else(|| HarnessError::Protocol("no register was handed over".into()))?;
        let inst = self.puzzle.obligate(message, handed, coin)?;
        let y = inst.y.clone();
        self.state = Some((
            HonestState {
                pk: message.to_vec(),
                y: inst.y,
            },
            inst.reg,
        ));
        Ok(vec![y])
    }

    fn finish(self: Box<Self>, _coin: &mut dyn Coin) -> Result<ProverMemory, HarnessError> {
        let (state, reg) = self
            .state
            .ok_or_else(|| HarnessError::Protocol("initialization never started".into()))?;
        Ok(ProverMemory {
            classical: serde_json::to_vec(&state).expect("state serializes"),
            quantum: reg,
        })
    }
}

struct HonestPuzzleExec<'a, P> {
    puzzle: &'a P,
    memory: ProverMemory,
}

impl<P: Puzzle> ExecProver for HonestPuzzleExec<'_, P> {
    fn on_message(
        &mut self,
        message: &[u8],
        coin: &mut dyn Coin,
    ) -> Result<Vec<Vec<u8>>, HarnessError> {
        let state: HonestState = serde_json::from_slice(&self.memory.classical)
            .map_err(|e| HarnessError::Protocol(format!("bad prover state: {e}")))?;
        let ch = BitString::from_bytes(message)
            .map_err(|e| HarnessError::Protocol(format!("malformed challenge: {e}")))?;
        let mut inst = PuzzleInstance {
            y: state.y,
            reg: std::mem::replace(&mut self.memory.quantum, QReg::empty()),
        };
        let ans = self.puzzle.solve(&state.pk, &mut inst, &ch, coin)?;
        Ok(vec![ans.to_bytes()])
    }
}

impl<P: Puzzle> Prover for HonestPuzzleProver<P> {
    fn budget(&self) -> Budget {
        Budget::Honest
    }

    fn init_phase<'a>(&'a self, _params: &ProtocolParams) -> Box<dyn InitProver + 'a> {
        Box::new(HonestPuzzleInit {
            puzzle: &self.puzzle,
            state: None,
        })
    }

    fn exec_phase<'a>(
        &'a self,
        _params: &ProtocolParams,
        memory: ProverMemory,
    ) -> Box<dyn ExecProver + 'a> {
        Box::new(HonestPuzzleExec {
            puzzle: &self.puzzle,
            memory,
        })
    }
}

/// A memory-bounded cheating prover `(P1*, P2*)` for a compiled puzzle.
pub trait PuzzleAdversary: Send + Sync {
    fn memory_qubits(&self) -> usize {
        0
    }

    /// `P1*`: returns the message `y` and what crosses the boundary.
    fn obligate(
        &self,
        pk: &[u8],
        handed: QReg,
        coin: &mut dyn Coin,
    ) -> Result<(Vec<u8>, ProverMemory), HarnessError>;

    /// `P2*`.
    fn answer(
        &self,
        ch: &BitString,
        memory: &mut ProverMemory,
        coin: &mut dyn Coin,
    ) -> Result<BitString, HarnessError>;

    /// Whether `P2*` uses no randomness.
    fn deterministic_answer(&self) -> bool;
}

fn stored(memory: &ProverMemory) -> Result<BitString, HarnessError> {
    BitString::from_bytes(&memory.classical)
        .map_err(|e| HarnessError::Strategy(format!("bad stored string: {e}")))
}

/// Measures every qubit at one angle and answers the record.
#[derive(Debug, Clone, Copy)]
pub struct MeasureAll {
    pub angle: f64,
}

impl PuzzleAdversary for MeasureAll {
    fn obligate(
        &self,
        _pk: &[u8],
        mut handed: QReg,
        coin: &mut dyn Coin,
    ) -> Result<(Vec<u8>, ProverMemory), HarnessError> {
        let all: Vec<usize> = (0..handed.n()).collect();
        let bits: BitString = all
            .iter()
            .map(|&i| handed.measure_angle(i, self.angle, coin))
            .collect::<Result<_, _>>()?;
        handed.discard(&all)?;
        Ok((Vec::new(), ProverMemory::classical_only(bits.to_bytes())))
    }

    fn answer(
        &self,
        _ch: &BitString,
        memory: &mut ProverMemory,
        _coin: &mut dyn Coin,
    ) -> Result<BitString, HarnessError> {
        stored(memory)
    }

    fn deterministic_answer(&self) -> bool {
        true
    }
}

/// Throws the register away and answers uniformly random bits.
#[derive(Debug, Clone, Copy)]
pub struct UniformGuess;

impl PuzzleAdversary for UniformGuess {
    fn obligate(
        &self,
        _pk: &[u8],
        mut handed: QReg,
        _coin: &mut dyn Coin,
    ) -> Result<(Vec<u8>, ProverMemory), HarnessError> {
        let n = handed.n();
        let all: Vec<usize> = (0..n).collect();
        handed.discard(&all)?;
        Ok((Vec::new(), ProverMemory::classical_only(n.to_string().into_bytes())))
    }

    fn answer(
        &self,
        _ch: &BitString,
        memory: &mut ProverMemory,
        coin: &mut dyn Coin,
    ) -> Result<BitString, HarnessError> {
        let n: usize = std::str::from_utf8(&memory.classical)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| HarnessError::Strategy("bad stored length".into()))?;
        Ok(BitString::random(n, coin))
    }

    fn deterministic_answer(&self) -> bool {
        false
    }
}

/// Measures each qubit in a random basis and keeps `(basis, outcome)`.
/// Answers the outcome where the recorded basis matches the challenged one,
/// a fresh random bit elsewhere.
#[derive(Debug, Clone, Copy)]
pub struct RandomBasisRecord;

impl PuzzleAdversary for RandomBasisRecord {
    fn obligate(
        &self,
        pk: &[u8],
        mut handed: QReg,
        coin: &mut dyn Coin,
    ) -> Result<(Vec<u8>, ProverMemory), HarnessError> {
        let n = handed.n();
        let bases = BitString::random(n, coin);
        let bits: BitString = (0..n)
            .map(|i| handed.measure_angle(i, basis_angle(bases.get(i)), coin))
            .collect::<Result<_, _>>()?;
        let all: Vec<usize> = (0..n).collect();
        handed.discard(&all)?;
        let record = serde_json::json!({
            "pk": String::from_utf8_lossy(pk),
            "bases": bases,
            "bits": bits,
        });
        Ok((
            Vec::new(),
            ProverMemory::classical_only(serde_json::to_vec(&record).expect("record serializes")),
        ))
    }

    fn answer(
        &self,
        ch: &BitString,
        memory: &mut ProverMemory,
        coin: &mut dyn Coin,
    ) -> Result<BitString, HarnessError> {
        #[derive(Deserialize)]
        struct Record {
            pk: String,
            bases: BitString,
            bits: BitString,
        }
        let rec: Record = serde_json::from_slice(&memory.classical)
            .map_err(|e| HarnessError::Strategy(format!("bad record: {e}")))?;
        let layout = parse_layout(rec.pk.as_bytes())?;
        let want = layout.expand(ch);
        (0..layout.n)
            .map(|i| {
                Ok(if rec.bases.get(i) == want.get(i) {
                    rec.bits.get(i)
                } else {
                    coin.fair_bit()
                })
            })
            .collect()
    }

    fn deterministic_answer(&self) -> bool {
        false
    }
}

/// Runs a puzzle adversary as the prover of the compiled protocol.
pub struct PuzzleAdversaryProver<'a> {
    adversary: &'a dyn PuzzleAdversary,
}

pub fn adversary_prover(adversary: &dyn PuzzleAdversary) -> PuzzleAdversaryProver<'_> {
    PuzzleAdversaryProver { adversary }
}

struct AdvInit<'a> {
    adversary: &'a dyn PuzzleAdversary,
    memory: Option<ProverMemory>,
}

impl InitProver for AdvInit<'_> {
    fn on_message(
        &mut self,
        message: &[u8],
        handoff: Option<QReg>,
        coin: &mut dyn Coin,
    ) -> Result<Vec<Vec<u8>>, HarnessError> {
        let handed =
            handoff.ok_or_else(|| HarnessError::Protocol("no register was handed over".into()))?;
        let (y, memory) = self.adversary.obligate(message, handed, coin)?;
        self.memory = Some(memory);
        Ok(vec![y])
    }

    fn finish(self: Box<Self>, _coin: &mut dyn Coin) -> Result<ProverMemory, HarnessError> {
        self.memory
            .ok_or_else(|| HarnessError::Protocol("initialization never started".into()))
    }
}

struct AdvExec<'a> {
    adversary: &'a dyn PuzzleAdversary,
    memory: ProverMemory,
}

impl ExecProver for AdvExec<'_> {
    fn on_message(
        &mut self,
        message: &[u8],
        coin: &mut dyn Coin,
    ) -> Result<Vec<Vec<u8>>, HarnessError> {
        let ch = BitString::from_bytes(message)
            .map_err(|e| HarnessError::Protocol(format!("malformed challenge: {e}")))?;
        Ok(vec![self.adversary.answer(&ch, &mut self.memory, coin)?.to_bytes()])
    }
}

impl Prover for PuzzleAdversaryProver<'_> {
    fn budget(&self) -> Budget {
        Budget::Qubits(self.adversary.memory_qubits())
    }

    fn init_phase<'a>(&'a self, _params: &ProtocolParams) -> Box<dyn InitProver + 'a> {
        Box::new(AdvInit {
            adversary: self.adversary,
            memory: None,
        })
    }

    fn exec_phase<'a>(
        &'a self,
        _params: &ProtocolParams,
        memory: ProverMemory,
    ) -> Box<dyn ExecProver + 'a> {
        Box::new(AdvExec {
            adversary: self.adversary,
            memory,
        })
    }
}

/// A's output: `y` for the verifier and one share each for B and C.
#[derive(Debug, Clone)]
pub struct AbcSplit {
    pub y: Vec<u8>,
    pub b: ProverMemory,
    pub c: ProverMemory,
}

pub trait PlayerA: Send + Sync {
    /// Qubits A promises to give B and C.
    fn shape(&self, n: usize) -> (usize, usize);

    fn split(&self, pk: &[u8], handed: QReg, coin: &mut dyn Coin)
        -> Result<AbcSplit, HarnessError>;
}

/// What B or C sees: the public key, `y`, the challenge, and its own share.
pub struct PlayerView {
    pub pk: Vec<u8>,
    pub y: Vec<u8>,
    pub ch: BitString,
    pub share: ProverMemory,
}

impl PlayerView {
    /// B and C cannot communicate once the game starts.
    pub fn peer_answer(&self) -> Result<BitString, HarnessError> {
        Err(HarnessError::Access(
            "B and C share no channel after A's split".into(),
        ))
    }
}

pub trait Player: Send + Sync {
    fn answer(&self, view: &mut PlayerView, coin: &mut dyn Coin) -> Result<BitString, HarnessError>;
}

/// One round of the game: accept iff both B's and C's answers verify.
/// Randomness is drawn in the order keygen, A, ch, B, C.
pub fn run_abc_game(
    puzzle: &dyn Puzzle,
    a: &dyn PlayerA,
    b: &dyn Player,
    c: &dyn Player,
    n: usize,
    k: usize,
    coin: &mut dyn Coin,
) -> Result<bool, HarnessError> {
    let (keys, reg) = puzzle.keygen(n, k, coin)?;
    let split = a.split(&keys.pk, reg, coin)?;
    let (bq, cq) = a.shape(n);
    if split.b.quantum.n() != bq || split.c.quantum.n() != cq {
        return Err(HarnessError::Budget {
            declared: bq + cq,
            carried: split.b.quantum.n() + split.c.quantum.n(),
        });
    }
    let ch = BitString::random(k, coin);
    let mut view_b = PlayerView {
        pk: keys.pk.clone(),
        y: split.y.clone(),
        ch: ch.clone(),
        share: split.b,
    };
    let mut view_c = PlayerView {
        pk: keys.pk.clone(),
        y: split.y.clone(),
        ch: ch.clone(),
        share: split.c,
    };
    let ans_b = b.answer(&mut view_b, coin)?;
    let ans_c = c.answer(&mut view_c, coin)?;
    Ok(puzzle.ver(&keys.sk, &split.y, &ch, &ans_b) && puzzle.ver(&keys.sk, &split.y, &ch, &ans_c))
}

/// A from a single prover: runs `P1*` and sends `s'` to both B and C.
pub struct SingleA<'a>(&'a dyn PuzzleAdversary);

/// B or C from a single prover: runs `P2*(ch, s')`.
pub struct SingleAnswer<'a>(&'a dyn PuzzleAdversary);

impl PlayerA for SingleA<'_> {
    fn shape(&self, _n: usize) -> (usize, usize) {
        (0, 0)
    }

    fn split(&self, pk: &[u8], handed: QReg, coin: &mut dyn Coin) -> Result<AbcSplit, HarnessError> {
        let (y, memory) = self.0.obligate(pk, handed, coin)?;
        if memory.quantum.n() != 0 {
            return Err(HarnessError::Budget {
                declared: 0,
                carried: memory.quantum.n(),
            });
        }
        Ok(AbcSplit {
            y,
            b: ProverMemory::classical_only(memory.classical.clone()),
            c: ProverMemory::classical_only(memory.classical),
        })
    }
}

impl Player for SingleAnswer<'_> {
    fn answer(&self, view: &mut PlayerView, coin: &mut dyn Coin) -> Result<BitString, HarnessError> {
        self.0.answer(&view.ch, &mut view.share, coin)
    }
}

/// The reduction's (A, B, C). Only classical `s'` can be copied, so
/// adversaries with quantum memory are rejected.
pub fn pair_from_single(
    adversary: &dyn PuzzleAdversary,
) -> Result<(SingleA<'_>, SingleAnswer<'_>, SingleAnswer<'_>), HarnessError> {
    if adversary.memory_qubits() > 0 {
        return Err(HarnessError::Params(
            "the reduction needs a classical-only P1* output".into(),
        ));
    }
    Ok((
        SingleA(adversary),
        SingleAnswer(adversary),
        SingleAnswer(adversary),
    ))
}

/// A that hands the whole register to B and nothing to C.
pub struct AllToB;

impl PlayerA for AllToB {
    fn shape(&self, n: usize) -> (usize, usize) {
        (n, 0)
    }

    fn split(&self, _pk: &[u8], handed: QReg, _coin: &mut dyn Coin) -> Result<AbcSplit, HarnessError> {
        Ok(AbcSplit {
            y: Vec::new(),
            b: ProverMemory {
                classical: Vec::new(),
                quantum: handed,
            },
            c: ProverMemory::classical_only(Vec::new()),
        })
    }
}

/// Solves honestly with whatever register it holds.
pub struct SolvingPlayer<P>(pub P);

impl<P: Puzzle> Player for SolvingPlayer<P> {
    fn answer(&self, view: &mut PlayerView, coin: &mut dyn Coin) -> Result<BitString, HarnessError> {
        let mut inst = PuzzleInstance {
            y: view.y.clone(),
            reg: std::mem::replace(&mut view.share.quantum, QReg::empty()),
        };
        self.0.solve(&view.pk, &mut inst, &view.ch, coin)
    }
}

/// Answers uniformly random bits of the layout's length.
pub struct RandomPlayer;

impl Player for RandomPlayer {
    fn answer(&self, view: &mut PlayerView, coin: &mut dyn Coin) -> Result<BitString, HarnessError> {
        let layout = parse_layout(&view.pk)?;
        Ok(BitString::random(layout.n, coin))
    }
}

/// Tries to copy the other player's answer.
pub struct EchoPlayer;

impl Player for EchoPlayer {
    fn answer(&self, view: &mut PlayerView, _coin: &mut dyn Coin) -> Result<BitString, HarnessError> {
        view.peer_answer()
    }
}
