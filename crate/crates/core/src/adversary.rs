//! Memory-bounded adversaries against the BB84 PoQM.
//!
//! An adversary is a pair `(P1*, P2*)`: [`Bb84Strategy::encode`] turns the
//! handed register into a classical string `s` and leaves exactly `m2`
//! qubits behind; [`Bb84Strategy::answer`] gets `θ`, `s` and those qubits
//! and produces `x'`. [`StrategyDescriptor`] covers the named strategies
//! and is what the CLI and config files speak; anything else can implement
//! the trait directly.
//!
//! Classical strategies answer with their stored bit even when the stored
//! basis does not match `θ_i`; no function of (stored bit, θ) does better
//! for them.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::coin::{exact_distribution, Coin};
use crate::protocol::{
    Budget, ExecProver, HarnessError, InitProver, Prover, ProverMemory, ProtocolParams,
};
use crate::qsim::{basis_angle, Bb84Description, Matrix, QReg, RegisterOps, BREIDBART};

pub use crate::protocol::ProverMemory as AdversaryMemory;

pub trait Bb84Strategy: Send + Sync {
    /// `m2`: qubits carried across the phase boundary.
    fn memory_qubits(&self) -> usize;

    /// `P1*`. On return `reg` must hold exactly `memory_qubits()` qubits.
    fn encode(&self, reg: &mut dyn RegisterOps, coin: &mut dyn Coin)
        -> Result<Vec<u8>, HarnessError>;

    /// `P2*`.
    fn answer(
        &self,
        theta: &BitString,
        classical: &[u8],
        reg: &mut dyn RegisterOps,
        coin: &mut dyn Coin,
    ) -> Result<BitString, HarnessError>;

    /// A multi-round leakage form, for strategies that have one beyond the
    /// single-round form every memoryless strategy gets from [`to_locc`].
    fn custom_locc(&self) -> Option<LoccStrategy<'_>> {
        None
    }
}

type RoundFn<'a> = dyn Fn(&[Vec<u8>], &mut dyn RegisterOps, &mut dyn Coin) -> Result<Vec<u8>, HarnessError>
    + Send
    + Sync
    + 'a;
type GuessFn<'a> =
    dyn Fn(&[Vec<u8>], &BitString, &mut dyn Coin) -> Result<BitString, HarnessError> + Send + Sync + 'a;

/// Adversary for the leakage game: a sequence of algorithms `E_i` that the
/// challenger runs on its register (each sees the earlier leakage), and a
/// final guesser that sees only the leakage and `θ`.
pub struct LoccStrategy<'a> {
    rounds: Vec<Box<RoundFn<'a>>>,
    guess: Box<GuessFn<'a>>,
}

impl<'a> LoccStrategy<'a> {
    pub fn new(rounds: Vec<Box<RoundFn<'a>>>, guess: Box<GuessFn<'a>>) -> Self {
        LoccStrategy { rounds, guess }
    }

    pub fn rounds(&self) -> usize {
        self.rounds.len()
    }

    pub fn run_round(
        &self,
        i: usize,
        prior: &[Vec<u8>],
        reg: &mut dyn RegisterOps,
        coin: &mut dyn Coin,
    ) -> Result<Vec<u8>, HarnessError> {
        (self.rounds[i])(prior, reg, coin)
    }

    pub fn guess(
        &self,
        leaks: &[Vec<u8>],
        theta: &BitString,
        coin: &mut dyn Coin,
    ) -> Result<BitString, HarnessError> {
        (self.guess)(leaks, theta, coin)
    }
}

/// Leakage-game form of a strategy. Memoryless strategies become one round
/// (`E_1 = P1*`, guess `= P2*`); a strategy that needs quantum memory at
/// guessing time has no such form.
pub fn to_locc(s: &dyn Bb84Strategy) -> Result<LoccStrategy<'_>, HarnessError> {
    if let Some(l) = s.custom_locc() {
        return Ok(l);
    }
    if s.memory_qubits() > 0 {
        return Err(HarnessError::Access(
            "the final guesser receives only classical leakage and θ; \
             this strategy needs quantum memory"
                .into(),
        ));
    }
    Ok(LoccStrategy::new(
        vec![Box::new(move |_, reg, coin| s.encode(reg, coin))],
        Box::new(move |leaks, theta, coin| {
            s.answer(theta, &leaks[0], &mut QReg::empty(), coin)
        }),
    ))
}

/// Per-qubit measurement angles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Angles {
    Uniform(f64),
    PerQubit(Vec<f64>),
}

impl Angles {
    fn get(&self, i: usize, n: usize) -> Result<f64, HarnessError> {
        match self {
            Angles::Uniform(a) => Ok(*a),
            Angles::PerQubit(v) if v.len() == n => Ok(v[i]),
            Angles::PerQubit(v) => Err(HarnessError::Strategy(format!(
                "{} angles given for {n} qubits",
                v.len()
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GateKind {
    H,
    X,
    Y,
    Z,
    S,
    T,
    Cnot,
    Swap,
    Rotation(f64),
    Unitary(Matrix),
}

impl GateKind {
    pub fn matrix(&self) -> Matrix {
        match self {
            GateKind::H => Matrix::hadamard(),
            GateKind::X => Matrix::pauli_x(),
            GateKind::Y => Matrix::pauli_y(),
            GateKind::Z => Matrix::pauli_z(),
            GateKind::S => Matrix::phase_s(),
            GateKind::T => Matrix::phase_t(),
            GateKind::Cnot => Matrix::cnot(),
            GateKind::Swap => Matrix::swap(),
            GateKind::Rotation(a) => Matrix::rotation(*a),
            GateKind::Unitary(m) => m.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub gate: GateKind,
    pub targets: Vec<usize>,
}

/// The unitary a compression strategy applies before measuring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CircuitSpec {
    Identity,
    /// `CNOT(2i → 2i+1)` on every adjacent pair.
    CnotPairs,
    /// `R(−angle)` on every qubit, so a later computational measurement is
    /// a measurement at `angle`.
    RotateAll { angle: f64 },
    Gates { gates: Vec<Gate> },
}

impl CircuitSpec {
    fn apply(&self, reg: &mut dyn RegisterOps) -> Result<(), HarnessError> {
        let width = reg.num_qubits();
        match self {
            CircuitSpec::Identity => {}
            CircuitSpec::CnotPairs => {
                let cnot = Matrix::cnot();
                for i in (0..width.saturating_sub(1)).step_by(2) {
                    reg.apply_unitary(&cnot, &[i, i + 1])?;
                }
            }
            CircuitSpec::RotateAll { angle } => {
                let r = Matrix::rotation(-angle);
                for i in 0..width {
                    reg.apply_unitary(&r, &[i])?;
                }
            }
            CircuitSpec::Gates { gates } => {
                for g in gates {
                    reg.apply_unitary(&g.gate.matrix(), &g.targets)?;
                }
            }
        }
        Ok(())
    }
}

/// Second-round rule for adaptive compression: every retained qubit is
/// measured at `even_angle` if the first-round leakage has even parity,
/// else at `odd_angle`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveRule {
    pub even_angle: f64,
    pub odd_angle: f64,
}

impl AdaptiveRule {
    fn angle(&self, first: &BitString) -> f64 {
        if first.parity() {
            self.odd_angle
        } else {
            self.even_angle
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StrategyDescriptor {
    /// Measure qubit `i` at `angles[i]`, answer the stored bits.
    ClassicalBasisGuess { angles: Angles },
    /// Measure every qubit at `π/8`, answer the stored bits.
    Breidbart,
    /// Keep the listed qubits, treat the rest with `fallback` (which must
    /// be a per-qubit measurement strategy).
    KeepSubset {
        indices: Vec<usize>,
        fallback: Box<StrategyDescriptor>,
    },
    /// Append `ancillas` zero qubits, apply `circuit`, measure all but the
    /// first `kept` qubits into `s` and keep the first `kept`. With an
    /// adaptive rule the kept qubits are measured in a second leakage round
    /// instead of being carried.
    Compression {
        circuit: CircuitSpec,
        ancillas: usize,
        kept: usize,
        adaptive: Option<AdaptiveRule>,
    },
    /// `inner`, with its quantum memory measured in the computational basis
    /// at the phase boundary and re-prepared as `|p⟩` for the answer.
    MeasureInserted { inner: Box<StrategyDescriptor> },
}

fn strategy_err(msg: impl Into<String>) -> HarnessError {
    HarnessError::Strategy(msg.into())
}

fn parse_stored(classical: &[u8], len: usize) -> Result<BitString, HarnessError> {
    let s = BitString::from_bytes(classical).map_err(|e| strategy_err(e.to_string()))?;
    if s.len() != len {
        return Err(strategy_err(format!(
            "stored {} bits, expected {len}",
            s.len()
        )));
    }
    Ok(s)
}

impl StrategyDescriptor {
    pub fn classical_basis_guess(angles: Vec<f64>) -> Self {
        StrategyDescriptor::ClassicalBasisGuess {
            angles: Angles::PerQubit(angles),
        }
    }

    pub fn uniform_guess(angle: f64) -> Self {
        StrategyDescriptor::ClassicalBasisGuess {
            angles: Angles::Uniform(angle),
        }
    }

    pub fn breidbart() -> Self {
        StrategyDescriptor::Breidbart
    }

    pub fn keep_subset(indices: Vec<usize>, fallback: StrategyDescriptor) -> Self {
        StrategyDescriptor::KeepSubset {
            indices,
            fallback: Box::new(fallback),
        }
    }

    pub fn compression(circuit: CircuitSpec, ancillas: usize, kept: usize) -> Self {
        StrategyDescriptor::Compression {
            circuit,
            ancillas,
            kept,
            adaptive: None,
        }
    }

    pub fn adaptive_compression(
        circuit: CircuitSpec,
        ancillas: usize,
        kept: usize,
        rule: AdaptiveRule,
    ) -> Self {
        StrategyDescriptor::Compression {
            circuit,
            ancillas,
            kept,
            adaptive: Some(rule),
        }
    }

    pub fn measure_inserted(self) -> Self {
        StrategyDescriptor::MeasureInserted {
            inner: Box::new(self),
        }
    }

    /// Leakage rounds `N` this strategy uses in the leakage game.
    pub fn leak_rounds(&self) -> usize {
        match self {
            StrategyDescriptor::Compression {
                adaptive: Some(_), ..
            } => 2,
            _ => 1,
        }
    }

    /// Measurement angle for qubit `i` if this is a per-qubit measurement
    /// strategy.
    fn product_angle(&self, i: usize, n: usize) -> Option<Result<f64, HarnessError>> {
        match self {
            StrategyDescriptor::ClassicalBasisGuess { angles } => Some(angles.get(i, n)),
            StrategyDescriptor::Breidbart => Some(Ok(BREIDBART)),
            _ => None,
        }
    }

    fn measure_product(
        &self,
        reg: &mut dyn RegisterOps,
        coin: &mut dyn Coin,
    ) -> Result<Vec<u8>, HarnessError> {
        let n = reg.num_qubits();
        let mut bits = BitString::zeros(0);
        for i in 0..n {
            let angle = self.product_angle(i, n).expect("product strategy")?;
            bits.push(reg.measure_angle(i, angle, coin)?);
        }
        let all: Vec<usize> = (0..n).collect();
        reg.discard(&all)?;
        Ok(bits.to_bytes())
    }

    fn sorted_kept(indices: &[usize], n: usize) -> Result<Vec<usize>, HarnessError> {
        let mut kept = indices.to_vec();
        kept.sort_unstable();
        if kept.windows(2).any(|w| w[0] == w[1]) {
            return Err(strategy_err("duplicate kept index"));
        }
        if kept.last().is_some_and(|&i| i >= n) {
            return Err(strategy_err(format!("kept index out of range for n = {n}")));
        }
        Ok(kept)
    }

    /// First-round leakage of compression: ancillas, circuit, measure all
    /// but the first `kept` qubits.
    fn compress_first_round(
        circuit: &CircuitSpec,
        ancillas: usize,
        kept: usize,
        reg: &mut dyn RegisterOps,
        coin: &mut dyn Coin,
    ) -> Result<BitString, HarnessError> {
        reg.append_zeros(ancillas)?;
        let width = reg.num_qubits();
        if kept > width {
            return Err(strategy_err(format!(
                "cannot keep {kept} of {width} qubits"
            )));
        }
        circuit.apply(reg)?;
        let rest: Vec<usize> = (kept..width).collect();
        Ok(reg.measure_subset_computational(&rest, coin)?)
    }

    fn adaptive_second_round(
        rule: &AdaptiveRule,
        first: &BitString,
        reg: &mut dyn RegisterOps,
        coin: &mut dyn Coin,
    ) -> Result<BitString, HarnessError> {
        let angle = rule.angle(first);
        let kept = reg.num_qubits();
        let bits = (0..kept)
            .map(|i| reg.measure_angle(i, angle, coin))
            .collect::<Result<BitString, _>>()?;
        let all: Vec<usize> = (0..kept).collect();
        reg.discard(&all)?;
        Ok(bits)
    }

    /// Answer for compression given the first-round bits and, per kept
    /// position, either a second-round bit or a qubit to measure.
    fn compression_answer(
        theta: &BitString,
        kept: usize,
        first: &BitString,
        second: Option<&BitString>,
        reg: &mut dyn RegisterOps,
        coin: &mut dyn Coin,
    ) -> Result<BitString, HarnessError> {
        let n = theta.len();
        (0..n)
            .map(|i| {
                if i < kept {
                    match second {
                        Some(b) => Ok(b.get(i)),
                        None => Ok(reg.measure_angle(i, basis_angle(theta.get(i)), coin)?),
                    }
                } else {
                    first
                        .as_slice()
                        .get(i - kept)
                        .copied()
                        .ok_or_else(|| strategy_err("stored string too short"))
                }
            })
            .collect()
    }
}

impl Bb84Strategy for StrategyDescriptor {
    fn memory_qubits(&self) -> usize {
        match self {
            StrategyDescriptor::ClassicalBasisGuess { .. } | StrategyDescriptor::Breidbart => 0,
            StrategyDescriptor::KeepSubset { indices, .. } => indices.len(),
            StrategyDescriptor::Compression { kept, adaptive, .. } => {
                if adaptive.is_some() {
                    0
                } else {
                    *kept
                }
            }
            StrategyDescriptor::MeasureInserted { .. } => 0,
        }
    }

    fn encode(
        &self,
        reg: &mut dyn RegisterOps,
        coin: &mut dyn Coin,
    ) -> Result<Vec<u8>, HarnessError> {
        match self {
            StrategyDescriptor::ClassicalBasisGuess { .. } | StrategyDescriptor::Breidbart => {
                self.measure_product(reg, coin)
            }
            StrategyDescriptor::KeepSubset { indices, fallback } => {
                let n = reg.num_qubits();
                let kept = Self::sorted_kept(indices, n)?;
                let mut bits = BitString::zeros(0);
                let mut gone = Vec::new();
                for i in (0..n).filter(|i| kept.binary_search(i).is_err()) {
                    let angle = fallback
                        .product_angle(i, n)
                        .ok_or_else(|| strategy_err("fallback must measure qubit by qubit"))??;
                    bits.push(reg.measure_angle(i, angle, coin)?);
                    gone.push(i);
                }
                reg.discard(&gone)?;
                Ok(bits.to_bytes())
            }
            StrategyDescriptor::Compression {
                circuit,
                ancillas,
                kept,
                adaptive,
            } => {
                let first = Self::compress_first_round(circuit, *ancillas, *kept, reg, coin)?;
                match adaptive {
                    None => Ok(first.to_bytes()),
                    Some(rule) => {
                        let second = Self::adaptive_second_round(rule, &first, reg, coin)?;
                        Ok(second.concat(&first).to_bytes())
                    }
                }
            }
            StrategyDescriptor::MeasureInserted { inner } => {
                measure_inserted(inner.as_ref()).encode(reg, coin)
            }
        }
    }

    fn answer(
        &self,
        theta: &BitString,
        classical: &[u8],
        reg: &mut dyn RegisterOps,
        coin: &mut dyn Coin,
    ) -> Result<BitString, HarnessError> {
        let n = theta.len();
        match self {
            StrategyDescriptor::ClassicalBasisGuess { .. } | StrategyDescriptor::Breidbart => {
                parse_stored(classical, n)
            }
            StrategyDescriptor::KeepSubset { indices, .. } => {
                let kept = Self::sorted_kept(indices, n)?;
                let stored = parse_stored(classical, n - kept.len())?;
                let mut stored = stored.iter();
                let mut slot = 0;
                (0..n)
                    .map(|i| {
                        if kept.binary_search(&i).is_ok() {
                            let q = slot;
                            slot += 1;
                            Ok(reg.measure_angle(q, basis_angle(theta.get(i)), coin)?)
                        } else {
                            Ok(stored.next().expect("length checked"))
                        }
                    })
                    .collect()
            }
            StrategyDescriptor::Compression {
                kept,
                ancillas,
                adaptive,
                ..
            } => {
                let width = n + ancillas;
                match adaptive {
                    None => {
                        let first = parse_stored(classical, width - kept)?;
                        Self::compression_answer(theta, *kept, &first, None, reg, coin)
                    }
                    Some(_) => {
                        let all = parse_stored(classical, width)?;
                        let second: BitString = all.iter().take(*kept).collect();
                        let first: BitString = all.iter().skip(*kept).collect();
                        Self::compression_answer(theta, *kept, &first, Some(&second), reg, coin)
                    }
                }
            }
            StrategyDescriptor::MeasureInserted { inner } => {
                measure_inserted(inner.as_ref()).answer(theta, classical, reg, coin)
            }
        }
    }

    fn custom_locc(&self) -> Option<LoccStrategy<'_>> {
        let StrategyDescriptor::Compression {
            circuit,
            ancillas,
            kept,
            adaptive: Some(rule),
        } = self
        else {
            return None;
        };
        let (ancillas, kept) = (*ancillas, *kept);
        let first_round: Box<RoundFn<'_>> = Box::new(move |_, reg, coin| {
            Ok(Self::compress_first_round(circuit, ancillas, kept, reg, coin)?.to_bytes())
        });
        let second_round: Box<RoundFn<'_>> = Box::new(move |prior, reg, coin| {
            let first = BitString::from_bytes(&prior[0]).map_err(|e| strategy_err(e.to_string()))?;
            Ok(Self::adaptive_second_round(rule, &first, reg, coin)?.to_bytes())
        });
        let guess: Box<GuessFn<'_>> = Box::new(move |leaks, theta, coin| {
            let parse = |b: &[u8]| BitString::from_bytes(b).map_err(|e| strategy_err(e.to_string()));
            let first = parse(&leaks[0])?;
            let second = parse(&leaks[1])?;
            Self::compression_answer(theta, kept, &first, Some(&second), &mut QReg::empty(), coin)
        });
        Some(LoccStrategy::new(vec![first_round, second_round], guess))
    }
}

/// `S` with its quantum memory measured in the computational basis at the
/// phase boundary: `s' = p ‖ s`, and `P2*` runs on `|p⟩`.
pub struct Measured<'a> {
    inner: &'a dyn Bb84Strategy,
}

pub fn measure_inserted(inner: &dyn Bb84Strategy) -> Measured<'_> {
    Measured { inner }
}

impl Bb84Strategy for Measured<'_> {
    fn memory_qubits(&self) -> usize {
        0
    }

    fn encode(
        &self,
        reg: &mut dyn RegisterOps,
        coin: &mut dyn Coin,
    ) -> Result<Vec<u8>, HarnessError> {
        let s = self.inner.encode(reg, coin)?;
        let m2 = self.inner.memory_qubits();
        if reg.num_qubits() != m2 {
            return Err(HarnessError::Budget {
                declared: m2,
                carried: reg.num_qubits(),
            });
        }
        let all: Vec<usize> = (0..m2).collect();
        let p = reg.measure_subset_computational(&all, coin)?;
        let mut out = p.to_bytes();
        out.extend_from_slice(&s);
        Ok(out)
    }

    fn answer(
        &self,
        theta: &BitString,
        classical: &[u8],
        _reg: &mut dyn RegisterOps,
        coin: &mut dyn Coin,
    ) -> Result<BitString, HarnessError> {
        let m2 = self.inner.memory_qubits();
        if classical.len() < m2 {
            return Err(strategy_err("stored string too short"));
        }
        let (p, s) = classical.split_at(m2);
        let p = BitString::from_bytes(p).map_err(|e| strategy_err(e.to_string()))?;
        let mut rebuilt = QReg::basis_state(&p)?;
        self.inner.answer(theta, s, &mut rebuilt, coin)
    }
}

fn fmt_angle(a: f64) -> String {
    for k in [1u32, 2, 4, 8, 16] {
        for j in 1..(2 * k) {
            if (a - PI * j as f64 / k as f64).abs() < 1e-12 {
                return if j == 1 {
                    format!("pi/{k}")
                } else {
                    format!("{j}pi/{k}")
                };
            }
        }
    }
    format!("{a}")
}

impl fmt::Display for StrategyDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StrategyDescriptor::ClassicalBasisGuess {
                angles: Angles::Uniform(a),
            } => write!(f, "classical({})", fmt_angle(*a)),
            StrategyDescriptor::ClassicalBasisGuess {
                angles: Angles::PerQubit(v),
            } => {
                let parts: Vec<String> = v.iter().map(|&a| fmt_angle(a)).collect();
                write!(f, "classical({})", parts.join(","))
            }
            StrategyDescriptor::Breidbart => write!(f, "breidbart"),
            StrategyDescriptor::KeepSubset { indices, fallback } => {
                let parts: Vec<String> = indices.iter().map(|i| i.to_string()).collect();
                write!(f, "keep({}; {fallback})", parts.join(","))
            }
            StrategyDescriptor::Compression {
                circuit,
                ancillas,
                kept,
                adaptive,
            } => {
                let circ = match circuit {
                    CircuitSpec::Identity => "identity".to_string(),
                    CircuitSpec::CnotPairs => "cnot-pairs".to_string(),
                    CircuitSpec::RotateAll { angle } => format!("rotate({})", fmt_angle(*angle)),
                    CircuitSpec::Gates { .. } => "gates".to_string(),
                };
                write!(f, "compress({kept}; {circ}; ancillas={ancillas}")?;
                if let Some(r) = adaptive {
                    write!(
                        f,
                        "; adaptive({},{})",
                        fmt_angle(r.even_angle),
                        fmt_angle(r.odd_angle)
                    )?;
                }
                write!(f, ")")
            }
            StrategyDescriptor::MeasureInserted { inner } => write!(f, "measured({inner})"),
        }
    }
}

/// Parses `comp`, `had`, `breidbart`, `pi/8`, `3pi/8`, or a number of radians.
pub fn parse_angle(s: &str) -> Result<f64, String> {
    let s = s.trim();
    match s {
        "comp" | "computational" => return Ok(0.0),
        "had" | "hadamard" => return Ok(PI / 4.0),
        "breidbart" => return Ok(BREIDBART),
        "pi" => return Ok(PI),
        _ => {}
    }
    if let Some((num, den)) = s.split_once("pi/") {
        let num: f64 = if num.is_empty() {
            1.0
        } else {
            num.parse().map_err(|_| format!("bad angle {s:?}"))?
        };
        let den: f64 = den.parse().map_err(|_| format!("bad angle {s:?}"))?;
        return Ok(num * PI / den);
    }
    s.parse().map_err(|_| format!("bad angle {s:?}"))
}

/// Splits `name(args)` into `(name, Some(args))`, or `(s, None)`.
fn split_call(s: &str) -> Result<(&str, Option<&str>), String> {
    let s = s.trim();
    match s.find('(') {
        None => Ok((s, None)),
        Some(open) => {
            if !s.ends_with(')') {
                return Err(format!("unbalanced parentheses in {s:?}"));
            }
            Ok((s[..open].trim(), Some(&s[open + 1..s.len() - 1])))
        }
    }
}

/// Splits on `;` at parenthesis depth zero.
fn split_top(s: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, ch) in s.char_indices() {
        match ch {
            '(' => depth += 1,
            ')' => depth -= 1,
            ';' if depth == 0 => {
                out.push(s[start..i].trim());
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(s[start..].trim());
    out
}

fn parse_indices(s: &str) -> Result<Vec<usize>, String> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|t| t.trim().parse().map_err(|_| format!("bad index {t:?}")))
        .collect()
}

impl FromStr for StrategyDescriptor {
    type Err = String;

    /// Accepts JSON, or the compact form: `breidbart`, `classical`,
    /// `classical(pi/4)`, `classical(0,pi/4,...)`, `keep(0,1; breidbart)`,
    /// `keep-first(m)`, `compress(kept; identity|cnot-pairs|rotate(a);
    /// ancillas=a; adaptive(even,odd))`, `measured(<strategy>)`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.starts_with('{') {
            return serde_json::from_str(s).map_err(|e| e.to_string());
        }
        let (name, args) = split_call(s)?;
        match (name, args) {
            ("breidbart", None) => Ok(StrategyDescriptor::Breidbart),
            ("classical", None) => Ok(StrategyDescriptor::uniform_guess(0.0)),
            ("classical", Some(a)) => {
                let angles = a
                    .split(',')
                    .map(parse_angle)
                    .collect::<Result<Vec<_>, _>>()?;
                if angles.len() == 1 {
                    Ok(StrategyDescriptor::uniform_guess(angles[0]))
                } else {
                    Ok(StrategyDescriptor::classical_basis_guess(angles))
                }
            }
            ("keep", Some(a)) => {
                let parts = split_top(a);
                let indices = parse_indices(parts[0])?;
                let fallback = match parts.get(1) {
                    Some(f) => f.parse()?,
                    None => StrategyDescriptor::Breidbart,
                };
                Ok(StrategyDescriptor::keep_subset(indices, fallback))
            }
            ("keep-first", Some(a)) => {
                let m: usize = a.trim().parse().map_err(|_| format!("bad count {a:?}"))?;
                Ok(StrategyDescriptor::keep_subset(
                    (0..m).collect(),
                    StrategyDescriptor::Breidbart,
                ))
            }
            ("compress", Some(a)) => {
                let parts = split_top(a);
                let kept: usize = parts[0]
                    .parse()
                    .map_err(|_| format!("bad kept count {:?}", parts[0]))?;
                let mut circuit = CircuitSpec::Identity;
                let mut ancillas = 0;
                let mut adaptive = None;
                for p in &parts[1..] {
                    let (pname, pargs) = split_call(p)?;
                    match (pname, pargs) {
                        ("identity", None) => circuit = CircuitSpec::Identity,
                        ("cnot-pairs", None) => circuit = CircuitSpec::CnotPairs,
                        ("rotate", Some(x)) => {
                            circuit = CircuitSpec::RotateAll {
                                angle: parse_angle(x)?,
                            }
                        }
                        ("adaptive", Some(x)) => {
                            let (e, o) = x
                                .split_once(',')
                                .ok_or_else(|| format!("adaptive needs two angles: {x:?}"))?;
                            adaptive = Some(AdaptiveRule {
                                even_angle: parse_angle(e)?,
                                odd_angle: parse_angle(o)?,
                            });
                        }
                        (other, None) if other.starts_with("ancillas=") => {
                            ancillas = other["ancillas=".len()..]
                                .parse()
                                .map_err(|_| format!("bad ancilla count {other:?}"))?;
                        }
                        _ => return Err(format!("unknown compression option {p:?}")),
                    }
                }
                Ok(StrategyDescriptor::Compression {
                    circuit,
                    ancillas,
                    kept,
                    adaptive,
                })
            }
            ("measured", Some(inner)) => Ok(inner.parse::<StrategyDescriptor>()?.measure_inserted()),
            _ => Err(format!("unknown strategy {s:?}")),
        }
    }
}

/// Runs a strategy as the prover of a BB84 PoQM.
pub struct StrategyProver<'a> {
    strategy: &'a dyn Bb84Strategy,
}

pub fn as_prover(strategy: &dyn Bb84Strategy) -> StrategyProver<'_> {
    StrategyProver { strategy }
}

struct StrategyInit<'a> {
    strategy: &'a dyn Bb84Strategy,
    reg: Option<QReg>,
}

impl InitProver for StrategyInit<'_> {
    fn on_message(
        &mut self,
        _message: &[u8],
        handoff: Option<QReg>,
        _coin: &mut dyn Coin,
    ) -> Result<Vec<Vec<u8>>, HarnessError> {
        if handoff.is_some() {
            self.reg = handoff;
        }
        Ok(Vec::new())
    }

    fn finish(self: Box<Self>, coin: &mut dyn Coin) -> Result<ProverMemory, HarnessError> {
        let mut reg = self
            .reg
            .ok_or_else(|| HarnessError::Protocol("no register was handed over".into()))?;
        let classical = self.strategy.encode(&mut reg, coin)?;
        Ok(ProverMemory {
            classical,
            quantum: reg,
        })
    }
}

struct StrategyExec<'a> {
    strategy: &'a dyn Bb84Strategy,
    memory: ProverMemory,
}

impl ExecProver for StrategyExec<'_> {
    fn on_message(
        &mut self,
        message: &[u8],
        coin: &mut dyn Coin,
    ) -> Result<Vec<Vec<u8>>, HarnessError> {
        let theta = BitString::from_bytes(message)
            .map_err(|e| HarnessError::Protocol(format!("malformed basis message: {e}")))?;
        let answer =
            self.strategy
                .answer(&theta, &self.memory.classical, &mut self.memory.quantum, coin)?;
        Ok(vec![answer.to_bytes()])
    }
}

impl Prover for StrategyProver<'_> {
    fn budget(&self) -> Budget {
        Budget::Qubits(self.strategy.memory_qubits())
    }

    fn init_phase<'a>(&'a self, _params: &ProtocolParams) -> Box<dyn InitProver + 'a> {
        Box::new(StrategyInit {
            strategy: self.strategy,
            reg: None,
        })
    }

    fn exec_phase<'a>(
        &'a self,
        _params: &ProtocolParams,
        memory: ProverMemory,
    ) -> Box<dyn ExecProver + 'a> {
        Box::new(StrategyExec {
            strategy: self.strategy,
            memory,
        })
    }
}

/// Result of an exhaustive search over product measurements.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BruteForceReport {
    pub n: usize,
    pub candidates: usize,
    pub best_angles: Vec<f64>,
    pub value: f64,
    pub family: &'static str,
}

pub const BRUTE_FORCE_FAMILY: &str =
    "product projective measurements (one real angle per qubit) with optimal classical \
     post-processing of (outcomes, theta); general POVMs are not searched";

/// Exact success probability of measuring each qubit at `angles[i]` and
/// then answering optimally given the outcomes and `θ`.
pub fn product_measurement_value(angles: &[f64]) -> Result<f64, HarnessError> {
    let n = angles.len();
    let dist = exact_distribution(|coin| {
        let d = Bb84Description::random(n, coin);
        let mut reg = QReg::prepare_bb84(&d)?;
        let outcomes = angles
            .iter()
            .enumerate()
            .map(|(i, &a)| reg.measure_angle(i, a, coin))
            .collect::<Result<BitString, _>>()?;
        Ok::<_, HarnessError>((d.theta().clone(), outcomes, d.x().clone()))
    })?;
    // best answer for each (θ, outcomes) is the most likely x
    let mut best = std::collections::BTreeMap::<(BitString, BitString), f64>::new();
    for ((theta, out, _x), p) in dist {
        let slot = best.entry((theta, out)).or_insert(0.0);
        *slot = slot.max(p);
    }
    Ok(best.values().sum())
}

/// Exhaustive search over per-qubit angles drawn from `candidates`.
pub fn brute_force_over(n: usize, candidates: &[f64]) -> Result<BruteForceReport, HarnessError> {
    if n == 0 || n > 2 {
        return Err(HarnessError::Params(format!(
            "brute-force search supports n ≤ 2 (got {n})"
        )));
    }
    let mut best: Option<(Vec<f64>, f64)> = None;
    let total = candidates.len().pow(n as u32);
    for code in 0..total {
        let angles: Vec<f64> = (0..n)
            .map(|q| candidates[(code / candidates.len().pow(q as u32)) % candidates.len()])
            .collect();
        let v = product_measurement_value(&angles)?;
        // ties go to the first candidate found
        if best.as_ref().is_none_or(|(_, b)| v > b + 1e-12) {
            best = Some((angles, v));
        }
    }
    let (best_angles, value) = best.ok_or_else(|| HarnessError::Params("no candidates".into()))?;
    Ok(BruteForceReport {
        n,
        candidates: total,
        best_angles,
        value,
        family: BRUTE_FORCE_FAMILY,
    })
}

/// Exhaustive search over the grid `{jπ/grid : 0 ≤ j < grid}` per qubit.
pub fn brute_force_best(n: usize, grid: usize) -> Result<BruteForceReport, HarnessError> {
    if grid < 8 {
        return Err(HarnessError::Params(format!(
            "angle grid must have at least 8 points (got {grid})"
        )));
    }
    let candidates: Vec<f64> = (0..grid).map(|j| PI * j as f64 / grid as f64).collect();
    brute_force_over(n, &candidates)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bb84::Bb84Poqm;
    use crate::coin::{exact_probability, trial_rng};
    use crate::protocol::run_poqm;
    use std::f64::consts::FRAC_PI_4;

    const BREIDBART_RATE: f64 = 0.853_553_390_593_273_8;

    fn exact_acceptance(s: &StrategyDescriptor, n: usize) -> f64 {
        let params = ProtocolParams::new(n);
        exact_probability(|coin| {
            Ok::<_, HarnessError>(
                run_poqm(&Bb84Poqm::it(), &as_prover(s), &params, coin)?
                    .verdict
                    .accepted,
            )
        })
        .unwrap()
    }

    #[test]
    fn per_qubit_rates_by_enumeration() {
        assert!((exact_acceptance(&StrategyDescriptor::uniform_guess(0.0), 1) - 0.75).abs() < 1e-12);
        assert!(
            (exact_acceptance(&StrategyDescriptor::uniform_guess(FRAC_PI_4), 1) - 0.75).abs() < 1e-12
        );
        assert!((exact_acceptance(&StrategyDescriptor::Breidbart, 1) - BREIDBART_RATE).abs() < 1e-12);
        assert!(
            (exact_acceptance(&StrategyDescriptor::Breidbart, 3) - BREIDBART_RATE.powi(3)).abs()
                < 1e-12
        );
        let mixed = StrategyDescriptor::classical_basis_guess(vec![0.0, FRAC_PI_4, 0.0]);
        assert!((exact_acceptance(&mixed, 3) - 0.75f64.powi(3)).abs() < 1e-12);
    }

    #[test]
    fn keep_subset_family() {
        let all = StrategyDescriptor::keep_subset((0..3).collect(), StrategyDescriptor::Breidbart);
        assert!((exact_acceptance(&all, 3) - 1.0).abs() < 1e-12);
        let half = StrategyDescriptor::keep_subset(vec![2, 0], StrategyDescriptor::Breidbart);
        assert!((exact_acceptance(&half, 4) - BREIDBART_RATE.powi(2)).abs() < 1e-12);
        let none = StrategyDescriptor::keep_subset(vec![], StrategyDescriptor::Breidbart);
        assert!(
            (exact_acceptance(&none, 3) - exact_acceptance(&StrategyDescriptor::Breidbart, 3)).abs()
                < 1e-12
        );
    }

    #[test]
    fn measured_keep_one() {
        let keep = StrategyDescriptor::keep_subset(vec![0], StrategyDescriptor::Breidbart);
        assert!((exact_acceptance(&keep, 1) - 1.0).abs() < 1e-12);
        let measured = keep.measure_inserted();
        assert_eq!(measured.memory_qubits(), 0);
        assert!((exact_acceptance(&measured, 1) - 0.75).abs() < 1e-12);
        let b = StrategyDescriptor::Breidbart;
        assert!(
            (exact_acceptance(&b.clone().measure_inserted(), 2) - exact_acceptance(&b, 2)).abs()
                < 1e-12
        );
    }

    #[test]
    fn compression_extremes() {
        let honest = StrategyDescriptor::compression(CircuitSpec::Identity, 0, 3);
        assert_eq!(honest.memory_qubits(), 3);
        assert!((exact_acceptance(&honest, 3) - 1.0).abs() < 1e-12);
        let none = StrategyDescriptor::compression(CircuitSpec::Identity, 0, 0);
        assert!((exact_acceptance(&none, 3) - 0.75f64.powi(3)).abs() < 1e-12);
        let rotated = StrategyDescriptor::compression(
            CircuitSpec::RotateAll { angle: BREIDBART },
            0,
            0,
        );
        assert!((exact_acceptance(&rotated, 2) - BREIDBART_RATE.powi(2)).abs() < 1e-12);
        let ancilla = StrategyDescriptor::compression(CircuitSpec::CnotPairs, 1, 1);
        assert_eq!(ancilla.memory_qubits(), 1);
        let p = exact_acceptance(&ancilla, 3);
        assert!((0.0..=1.0).contains(&p));
    }

    #[test]
    fn budget_is_enforced() {
        struct Liar;
        impl Bb84Strategy for Liar {
            fn memory_qubits(&self) -> usize {
                1
            }
            fn encode(
                &self,
                _reg: &mut dyn RegisterOps,
                _coin: &mut dyn Coin,
            ) -> Result<Vec<u8>, HarnessError> {
                Ok(Vec::new())
            }
            fn answer(
                &self,
                theta: &BitString,
                _c: &[u8],
                _r: &mut dyn RegisterOps,
                _coin: &mut dyn Coin,
            ) -> Result<BitString, HarnessError> {
                Ok(BitString::zeros(theta.len()))
            }
        }
        let err = run_poqm(
            &Bb84Poqm::it(),
            &as_prover(&Liar),
            &ProtocolParams::new(4),
            &mut trial_rng(0, 0),
        )
        .unwrap_err();
        assert_eq!(
            err,
            HarnessError::Budget {
                declared: 1,
                carried: 4
            }
        );
    }

    #[test]
    fn locc_conversion() {
        assert!(to_locc(&StrategyDescriptor::Breidbart).is_ok());
        let keep = StrategyDescriptor::keep_subset(vec![0, 1], StrategyDescriptor::Breidbart);
        assert!(matches!(to_locc(&keep), Err(HarnessError::Access(_))));
        assert_eq!(to_locc(&keep.measure_inserted()).unwrap().rounds(), 1);
        let adaptive = StrategyDescriptor::adaptive_compression(
            CircuitSpec::Identity,
            0,
            2,
            AdaptiveRule {
                even_angle: BREIDBART,
                odd_angle: 0.0,
            },
        );
        assert_eq!(adaptive.leak_rounds(), 2);
        assert_eq!(to_locc(&adaptive).unwrap().rounds(), 2);
    }

    #[test]
    fn descriptor_text_round_trip() {
        let cases = [
            "breidbart",
            "classical(0)",
            "classical(pi/4)",
            "classical(0,pi/4,pi/8)",
            "keep(0,3; breidbart)",
            "keep(1; classical(pi/4))",
            "compress(2; identity; ancillas=0)",
            "compress(0; rotate(pi/8); ancillas=1)",
            "compress(2; cnot-pairs; ancillas=0; adaptive(pi/8,0))",
            "measured(keep(0; breidbart))",
        ];
        for c in cases {
            let d: StrategyDescriptor = c.parse().unwrap();
            assert_eq!(d.to_string(), c);
            let json = serde_json::to_string(&d).unwrap();
            assert_eq!(json.parse::<StrategyDescriptor>().unwrap(), d);
        }
        assert_eq!(
            "keep-first(2)".parse::<StrategyDescriptor>().unwrap(),
            StrategyDescriptor::keep_subset(vec![0, 1], StrategyDescriptor::Breidbart)
        );
        assert!("teleport".parse::<StrategyDescriptor>().is_err());
        assert!("keep(0".parse::<StrategyDescriptor>().is_err());
    }

    #[test]
    fn brute_force_single_qubit() {
        let r = brute_force_best(1, 64).unwrap();
        assert!((r.value - BREIDBART_RATE).abs() < 1e-9);
        assert!((r.best_angles[0] - BREIDBART).abs() <= PI / 64.0 + 1e-12);
        let two_bases = brute_force_over(1, &[0.0, FRAC_PI_4]).unwrap();
        assert!((two_bases.value - 0.75).abs() < 1e-12);
        assert!(brute_force_best(3, 64).is_err());
        assert!(brute_force_best(1, 4).is_err());
    }
}
