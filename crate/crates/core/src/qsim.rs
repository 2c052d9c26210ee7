//! Dense state-vector simulation for small registers.
//!
//! A [`QReg`] keeps its state as a tensor product of dense factors. Freshly
//! prepared BB84 states are fully factored, a gate merges the factors it
//! touches, and a measurement splits the measured qubit back out. The
//! represented state is always the ordinary `2^n` amplitude vector (see
//! [`QReg::amplitudes`]); factoring only keeps product-state experiments
//! at 16–24 qubits cheap.
//!
//! Conventions used everywhere in this crate:
//! * qubit 0 is the most significant bit of a basis index, so `X` on qubit 1
//!   of `|00⟩` gives amplitude 1 at index `0b01`;
//! * a measurement at angle `a` projects onto `cos a|0⟩ + sin a|1⟩`
//!   (outcome 0) and `−sin a|0⟩ + cos a|1⟩` (outcome 1). Angle 0 is the
//!   computational basis, `π/4` the Hadamard basis, `π/8` the Breidbart basis.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4, FRAC_PI_8};

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::coin::Coin;

pub const MAX_QUBITS: usize = 24;

pub const COMPUTATIONAL: f64 = 0.0;
pub const HADAMARD: f64 = FRAC_PI_4;
pub const BREIDBART: f64 = FRAC_PI_8;

const NORM_TOL: f64 = 1e-9;

/// Measurement angle of the BB84 basis named by a basis bit.
pub fn basis_angle(theta: bool) -> f64 {
    if theta {
        HADAMARD
    } else {
        COMPUTATIONAL
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QsimError {
    #[error("register capacity exceeded: {0} qubits requested, allowed 1..={MAX_QUBITS}")]
    Capacity(usize),
    #[error("qubit index {index} out of range for a {n}-qubit register")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("duplicate qubit index {0}")]
    DuplicateIndex(usize),
    #[error("matrix is not unitary")]
    NotUnitary,
    #[error("matrix of dimension {dim} cannot act on {targets} qubits")]
    DimensionMismatch { dim: usize, targets: usize },
    #[error("register has {reg} qubits but the target has {target}")]
    SizeMismatch { reg: usize, target: usize },
    #[error("qubit {0} is entangled with the rest of the register and cannot be discarded")]
    Entangled(usize),
    #[error("probability {0} outside [0, 1]")]
    Probability(f64),
    #[error("invalid state: {0}")]
    InvalidState(String),
}

/// Square complex matrix, row-major, dimension a power of two.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    dim: usize,
    data: Vec<Complex64>,
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

impl Matrix {
    pub fn new(dim: usize, data: Vec<Complex64>) -> Result<Self, QsimError> {
        if !dim.is_power_of_two() || data.len() != dim * dim {
            return Err(QsimError::InvalidState(format!(
                "matrix data of length {} for dimension {dim}",
                data.len()
            )));
        }
        Ok(Matrix { dim, data })
    }

    pub fn from_real(dim: usize, data: &[f64]) -> Result<Self, QsimError> {
        Matrix::new(dim, data.iter().map(|&x| c(x)).collect())
    }

    pub fn identity(dim: usize) -> Self {
        let mut data = vec![Complex64::default(); dim * dim];
        for i in 0..dim {
            data[i * dim + i] = c(1.0);
        }
        Matrix { dim, data }
    }

    pub fn hadamard() -> Self {
        let h = FRAC_1_SQRT_2;
        Matrix::from_real(2, &[h, h, h, -h]).unwrap()
    }

    pub fn pauli_x() -> Self {
        Matrix::from_real(2, &[0.0, 1.0, 1.0, 0.0]).unwrap()
    }

    pub fn pauli_y() -> Self {
        let i = Complex64::i();
        Matrix::new(2, vec![c(0.0), -i, i, c(0.0)]).unwrap()
    }

    pub fn pauli_z() -> Self {
        Matrix::from_real(2, &[1.0, 0.0, 0.0, -1.0]).unwrap()
    }

    pub fn phase_s() -> Self {
        Matrix::new(2, vec![c(1.0), c(0.0), c(0.0), Complex64::i()]).unwrap()
    }

    pub fn phase_t() -> Self {
        Matrix::new(
            2,
            vec![c(1.0), c(0.0), c(0.0), Complex64::from_polar(1.0, FRAC_PI_4)],
        )
        .unwrap()
    }

    /// Real rotation taking `|0⟩` to `cos a|0⟩ + sin a|1⟩`.
    pub fn rotation(angle: f64) -> Self {
        let (s, co) = angle.sin_cos();
        Matrix::from_real(2, &[co, -s, s, co]).unwrap()
    }

    /// Controlled-NOT, control on the first target.
    pub fn cnot() -> Self {
        let mut m = vec![0.0; 16];
        m[0] = 1.0;
        m[5] = 1.0;
        m[11] = 1.0;
        m[14] = 1.0;
        Matrix::from_real(4, &m).unwrap()
    }

    pub fn swap() -> Self {
        let mut m = vec![0.0; 16];
        m[0] = 1.0;
        m[6] = 1.0;
        m[9] = 1.0;
        m[15] = 1.0;
        Matrix::from_real(4, &m).unwrap()
    }

    /// Haar-random unitary on `qubits` qubits (Gram–Schmidt on a complex
    /// Gaussian matrix).
    pub fn random_unitary<R: Rng + ?Sized>(qubits: usize, rng: &mut R) -> Self {
        let dim = 1 << qubits;
        let mut gauss = || {
            let u1: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
            let u2: f64 = rng.gen();
            let r = (-2.0 * u1.ln()).sqrt();
            let t = 2.0 * std::f64::consts::PI * u2;
            Complex64::new(r * t.cos(), r * t.sin())
        };
        let mut cols: Vec<Vec<Complex64>> = (0..dim)
            .map(|_| (0..dim).map(|_| gauss()).collect())
            .collect();
        for j in 0..dim {
            for k in 0..j {
                let (done, rest) = cols.split_at_mut(j);
                let (prev, col) = (&done[k], &mut rest[0]);
                let proj: Complex64 = prev.iter().zip(col.iter()).map(|(p, c)| p.conj() * c).sum();
                for (c, p) in col.iter_mut().zip(prev) {
                    *c -= proj * p;
                }
            }
            let norm = cols[j].iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            for z in cols[j].iter_mut() {
                *z /= norm;
            }
        }
        let mut data = vec![Complex64::default(); dim * dim];
        for (j, col) in cols.iter().enumerate() {
            for (i, &z) in col.iter().enumerate() {
                data[i * dim + j] = z;
            }
        }
        Matrix { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_qubits(&self) -> usize {
        self.dim.trailing_zeros() as usize
    }

    pub fn get(&self, r: usize, col: usize) -> Complex64 {
        self.data[r * self.dim + col]
    }

    pub fn dagger(&self) -> Self {
        let d = self.dim;
        let mut data = vec![Complex64::default(); d * d];
        for r in 0..d {
            for col in 0..d {
                data[col * d + r] = self.data[r * d + col].conj();
            }
        }
        Matrix { dim: d, data }
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.dim, other.dim);
        let d = self.dim;
        let mut data = vec![Complex64::default(); d * d];
        for r in 0..d {
            for k in 0..d {
                let a = self.data[r * d + k];
                if a == Complex64::default() {
                    continue;
                }
                for col in 0..d {
                    data[r * d + col] += a * other.data[k * d + col];
                }
            }
        }
        Matrix { dim: d, data }
    }

    pub fn kron(&self, other: &Matrix) -> Matrix {
        let (a, b) = (self.dim, other.dim);
        let d = a * b;
        let mut data = vec![Complex64::default(); d * d];
        for r1 in 0..a {
            for c1 in 0..a {
                let x = self.data[r1 * a + c1];
                for r2 in 0..b {
                    for c2 in 0..b {
                        data[(r1 * b + r2) * d + c1 * b + c2] = x * other.data[r2 * b + c2];
                    }
                }
            }
        }
        Matrix { dim: d, data }
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        let p = self.dagger().matmul(self);
        let d = self.dim;
        (0..d).all(|r| {
            (0..d).all(|col| {
                let want = if r == col { 1.0 } else { 0.0 };
                (p.data[r * d + col] - c(want)).norm() <= tol
            })
        })
    }
}

/// BB84 description `(x, θ)`: qubit `i` is `H^{θ_i}|x_i⟩`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawBb84")]
pub struct Bb84Description {
    x: BitString,
    theta: BitString,
}

#[derive(Deserialize)]
struct RawBb84 {
    x: BitString,
    theta: BitString,
}

impl TryFrom<RawBb84> for Bb84Description {
    type Error = QsimError;
    fn try_from(r: RawBb84) -> Result<Self, Self::Error> {
        Bb84Description::new(r.x, r.theta)
    }
}

impl Bb84Description {
    pub fn new(x: BitString, theta: BitString) -> Result<Self, QsimError> {
        if x.len() != theta.len() {
            return Err(QsimError::SizeMismatch {
                reg: x.len(),
                target: theta.len(),
            });
        }
        Ok(Bb84Description { x, theta })
    }

    /// Uniform `(x, θ)`; `x` is drawn first.
    pub fn random(n: usize, coin: &mut dyn Coin) -> Self {
        let x = BitString::random(n, coin);
        let theta = BitString::random(n, coin);
        Bb84Description { x, theta }
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn x(&self) -> &BitString {
        &self.x
    }

    pub fn theta(&self) -> &BitString {
        &self.theta
    }

    /// Single-qubit state vector of qubit `i`.
    pub fn qubit_state(&self, i: usize) -> [Complex64; 2] {
        bb84_qubit(self.x.get(i), self.theta.get(i))
    }
}

fn bb84_qubit(x: bool, theta: bool) -> [Complex64; 2] {
    match (theta, x) {
        (false, false) => [c(1.0), c(0.0)],
        (false, true) => [c(0.0), c(1.0)],
        (true, false) => [c(FRAC_1_SQRT_2), c(FRAC_1_SQRT_2)],
        (true, true) => [c(FRAC_1_SQRT_2), c(-FRAC_1_SQRT_2)],
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Factor {
    qubits: Vec<usize>,
    amps: Vec<Complex64>,
}

impl Factor {
    fn width(&self) -> usize {
        self.qubits.len()
    }

    fn kron(&self, other: &Factor) -> Factor {
        let mut qubits = self.qubits.clone();
        qubits.extend_from_slice(&other.qubits);
        let mut amps = Vec::with_capacity(self.amps.len() * other.amps.len());
        for &a in &self.amps {
            for &b in &other.amps {
                amps.push(a * b);
            }
        }
        Factor { qubits, amps }
    }
}

/// A simulated register of `n ≤ 24` qubits in a pure state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawQReg")]
pub struct QReg {
    n: usize,
    factors: Vec<Factor>,
}

#[derive(Deserialize)]
struct RawQReg {
    n: usize,
    factors: Vec<Factor>,
}

impl TryFrom<RawQReg> for QReg {
    type Error = QsimError;
    fn try_from(raw: RawQReg) -> Result<Self, Self::Error> {
        if raw.n > MAX_QUBITS {
            return Err(QsimError::Capacity(raw.n));
        }
        let mut seen = vec![false; raw.n];
        for f in &raw.factors {
            if f.qubits.is_empty() || f.amps.len() != 1usize << f.qubits.len() {
                return Err(QsimError::InvalidState("malformed factor".into()));
            }
            for &q in &f.qubits {
                if q >= raw.n || std::mem::replace(&mut seen[q], true) {
                    return Err(QsimError::InvalidState(format!("qubit {q} misplaced")));
                }
            }
            let norm: f64 = f.amps.iter().map(|z| z.norm_sqr()).sum();
            if (norm - 1.0).abs() > NORM_TOL {
                return Err(QsimError::InvalidState(format!("factor norm {norm}")));
            }
        }
        if seen.iter().any(|&s| !s) {
            return Err(QsimError::InvalidState("qubit missing from factors".into()));
        }
        Ok(QReg {
            n: raw.n,
            factors: raw.factors,
        })
    }
}

impl QReg {
    /// `|0…0⟩` on `n` qubits, `1 ≤ n ≤ 24`.
    pub fn new(n: usize) -> Result<Self, QsimError> {
        if !(1..=MAX_QUBITS).contains(&n) {
            return Err(QsimError::Capacity(n));
        }
        Ok(Self::zeros(n))
    }

    fn zeros(n: usize) -> Self {
        QReg {
            n,
            factors: (0..n)
                .map(|q| Factor {
                    qubits: vec![q],
                    amps: vec![c(1.0), c(0.0)],
                })
                .collect(),
        }
    }

    /// The register with no qubits.
    pub fn empty() -> Self {
        QReg {
            n: 0,
            factors: Vec::new(),
        }
    }

    /// Register holding the given full amplitude vector (length `2^n`).
    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self, QsimError> {
        if !amps.len().is_power_of_two() {
            return Err(QsimError::InvalidState(format!(
                "amplitude vector of length {}",
                amps.len()
            )));
        }
        let n = amps.len().trailing_zeros() as usize;
        if n > MAX_QUBITS {
            return Err(QsimError::Capacity(n));
        }
        let norm: f64 = amps.iter().map(|z| z.norm_sqr()).sum();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(QsimError::InvalidState(format!("norm {norm}")));
        }
        if n == 0 {
            return Ok(QReg::empty());
        }
        Ok(QReg {
            n,
            factors: vec![Factor {
                qubits: (0..n).collect(),
                amps,
            }],
        })
    }

    /// Computational basis state `|bits⟩`.
    pub fn basis_state(bits: &BitString) -> Result<Self, QsimError> {
        if bits.len() > MAX_QUBITS {
            return Err(QsimError::Capacity(bits.len()));
        }
        let mut reg = QReg::zeros(bits.len());
        for (q, b) in bits.iter().enumerate() {
            if b {
                reg.factors[q].amps = vec![c(0.0), c(1.0)];
            }
        }
        Ok(reg)
    }

    /// `⊗_i H^{θ_i}|x_i⟩`.
    pub fn prepare_bb84(d: &Bb84Description) -> Result<Self, QsimError> {
        let n = d.n();
        if n > MAX_QUBITS {
            return Err(QsimError::Capacity(n));
        }
        Ok(QReg {
            n,
            factors: (0..n)
                .map(|q| Factor {
                    qubits: vec![q],
                    amps: d.qubit_state(q).to_vec(),
                })
                .collect(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Full `2^n` amplitude vector.
    pub fn amplitudes(&self) -> Vec<Complex64> {
        let n = self.n;
        let mut out = vec![c(1.0); 1 << n];
        for f in &self.factors {
            let m = f.width();
            for (idx, slot) in out.iter_mut().enumerate() {
                let mut local = 0usize;
                for (p, &q) in f.qubits.iter().enumerate() {
                    let bit = (idx >> (n - 1 - q)) & 1;
                    local |= bit << (m - 1 - p);
                }
                *slot *= f.amps[local];
            }
        }
        out
    }

    /// `Σ |amplitude|²`.
    pub fn norm_sqr(&self) -> f64 {
        self.factors
            .iter()
            .map(|f| f.amps.iter().map(|z| z.norm_sqr()).sum::<f64>())
            .product()
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &QReg) -> Result<Complex64, QsimError> {
        if self.n != other.n {
            return Err(QsimError::SizeMismatch {
                reg: self.n,
                target: other.n,
            });
        }
        Ok(self
            .amplitudes()
            .iter()
            .zip(other.amplitudes())
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    /// Euclidean distance between amplitude vectors.
    pub fn distance(&self, other: &QReg) -> Result<f64, QsimError> {
        if self.n != other.n {
            return Err(QsimError::SizeMismatch {
                reg: self.n,
                target: other.n,
            });
        }
        Ok(self
            .amplitudes()
            .iter()
            .zip(other.amplitudes())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt())
    }

    /// Number of factors the state is currently split into.
    pub fn factor_count(&self) -> usize {
        self.factors.len()
    }

    fn check_index(&self, i: usize) -> Result<(), QsimError> {
        if i >= self.n {
            return Err(QsimError::IndexOutOfRange {
                index: i,
                n: self.n,
            });
        }
        Ok(())
    }

    fn check_indices(&self, idx: &[usize]) -> Result<(), QsimError> {
        let mut seen = vec![false; self.n];
        for &i in idx {
            self.check_index(i)?;
            if std::mem::replace(&mut seen[i], true) {
                return Err(QsimError::DuplicateIndex(i));
            }
        }
        Ok(())
    }

    fn locate(&self, q: usize) -> (usize, usize) {
        for (fi, f) in self.factors.iter().enumerate() {
            if let Some(p) = f.qubits.iter().position(|&x| x == q) {
                return (fi, p);
            }
        }
        unreachable!("qubit {q} not in any factor")
    }

    /// Merges the factors holding `qubits` into one and returns its index.
    fn merge_for(&mut self, qubits: &[usize]) -> usize {
        let mut idx: Vec<usize> = qubits.iter().map(|&q| self.locate(q).0).collect();
        idx.sort_unstable();
        idx.dedup();
        if idx.len() == 1 {
            return idx[0];
        }
        let mut parts: Vec<Factor> = idx
            .iter()
            .rev()
            .map(|&fi| self.factors.swap_remove(fi))
            .collect();
        parts.reverse();
        let merged = parts
            .iter()
            .skip(1)
            .fold(parts[0].clone(), |acc, f| acc.kron(f));
        self.factors.push(merged);
        self.factors.len() - 1
    }

    /// Applies `u` to `targets` (the first target is the most significant
    /// bit of `u`'s index), identity elsewhere.
    pub fn apply_unitary(&mut self, u: &Matrix, targets: &[usize]) -> Result<(), QsimError> {
        self.check_indices(targets)?;
        if targets.is_empty() || u.dim() != 1 << targets.len() {
            return Err(QsimError::DimensionMismatch {
                dim: u.dim(),
                targets: targets.len(),
            });
        }
        if !u.is_unitary(NORM_TOL) {
            return Err(QsimError::NotUnitary);
        }
        let fi = self.merge_for(targets);
        let f = &mut self.factors[fi];
        let m = f.width();
        let pos: Vec<usize> = targets
            .iter()
            .map(|q| f.qubits.iter().position(|x| x == q).unwrap())
            .collect();
        apply_local(&mut f.amps, m, u, &pos);
        Ok(())
    }

    /// Born-rule measurement of qubit `i` at `angle`; the qubit stays in
    /// the register, collapsed onto the observed basis vector.
    pub fn measure_angle(
        &mut self,
        i: usize,
        angle: f64,
        coin: &mut dyn Coin,
    ) -> Result<bool, QsimError> {
        self.check_index(i)?;
        let (fi, pos) = self.locate(i);
        let f = &self.factors[fi];
        let m = f.width();
        let bit = 1usize << (m - 1 - pos);
        let (s, co) = angle.sin_cos();
        let half = 1usize << (m - 1);
        let mut c0 = Vec::with_capacity(half);
        let mut c1 = Vec::with_capacity(half);
        for j0 in (0..1usize << m).filter(|j| j & bit == 0) {
            let (a0, a1) = (f.amps[j0], f.amps[j0 | bit]);
            c0.push(a0 * co + a1 * s);
            c1.push(a1 * co - a0 * s);
        }
        let p0: f64 = c0.iter().map(|z| z.norm_sqr()).sum();
        let p1: f64 = c1.iter().map(|z| z.norm_sqr()).sum();
        let outcome = coin.pick(&[p0, p1]) == 1;
        let (mut rest, p) = if outcome { (c1, p1) } else { (c0, p0) };
        let scale = 1.0 / p.sqrt();
        for z in rest.iter_mut() {
            *z *= scale;
        }
        let mut basis = if outcome {
            vec![c(-s), c(co)]
        } else {
            vec![c(co), c(s)]
        };
        if m == 1 {
            // keep the global phase on the measured qubit
            for z in basis.iter_mut() {
                *z *= rest[0];
            }
            self.factors[fi].amps = basis;
        } else {
            let mut qubits = self.factors[fi].qubits.clone();
            qubits.remove(pos);
            self.factors[fi] = Factor {
                qubits,
                amps: rest,
            };
            self.factors.push(Factor {
                qubits: vec![i],
                amps: basis,
            });
        }
        Ok(outcome)
    }

    /// Measures `subset` in the computational basis (in the given order)
    /// and removes those qubits. Remaining qubits keep their relative order
    /// and are renumbered from 0.
    pub fn measure_subset_computational(
        &mut self,
        subset: &[usize],
        coin: &mut dyn Coin,
    ) -> Result<BitString, QsimError> {
        self.check_indices(subset)?;
        let bits = subset
            .iter()
            .map(|&q| self.measure_angle(q, COMPUTATIONAL, coin))
            .collect::<Result<BitString, _>>()?;
        self.discard(subset)?;
        Ok(bits)
    }

    /// Removes qubits that are not entangled with the rest of the register
    /// (each must sit alone in its factor, e.g. after being measured).
    pub fn discard(&mut self, subset: &[usize]) -> Result<(), QsimError> {
        self.check_indices(subset)?;
        if subset.is_empty() {
            return Ok(());
        }
        for &q in subset {
            let (fi, _) = self.locate(q);
            if self.factors[fi].width() != 1 {
                return Err(QsimError::Entangled(q));
            }
        }
        let mut gone = vec![false; self.n];
        for &q in subset {
            gone[q] = true;
        }
        let mut shift = vec![0usize; self.n];
        let mut removed = 0;
        for q in 0..self.n {
            shift[q] = removed;
            if gone[q] {
                removed += 1;
            }
        }
        self.factors.retain(|f| !(f.width() == 1 && gone[f.qubits[0]]));
        for f in self.factors.iter_mut() {
            for q in f.qubits.iter_mut() {
                *q -= shift[*q];
            }
        }
        self.n -= removed;
        Ok(())
    }

    /// Appends `other` after the existing qubits.
    pub fn append(&mut self, other: QReg) -> Result<(), QsimError> {
        let total = self.n + other.n;
        if total > MAX_QUBITS {
            return Err(QsimError::Capacity(total));
        }
        let offset = self.n;
        for mut f in other.factors {
            for q in f.qubits.iter_mut() {
                *q += offset;
            }
            self.factors.push(f);
        }
        self.n = total;
        Ok(())
    }

    pub fn append_zeros(&mut self, count: usize) -> Result<(), QsimError> {
        self.append(QReg::zeros(count))
    }

    /// With probability `p`, applies a uniformly random Pauli from
    /// `{I, X, Y, Z}` to qubit `i`.
    pub fn depolarize(&mut self, i: usize, p: f64, coin: &mut dyn Coin) -> Result<(), QsimError> {
        if !(0.0..=1.0).contains(&p) {
            return Err(QsimError::Probability(p));
        }
        self.check_index(i)?;
        if !coin.bernoulli(p) {
            return Ok(());
        }
        let pauli = match coin.pick(&[1.0, 1.0, 1.0, 1.0]) {
            0 => return Ok(()),
            1 => Matrix::pauli_x(),
            2 => Matrix::pauli_y(),
            _ => Matrix::pauli_z(),
        };
        self.apply_unitary(&pauli, &[i])
    }

    /// `|⟨ψ_target|self⟩|²` for the BB84 state described by `target`.
    pub fn fidelity(&self, target: &Bb84Description) -> Result<f64, QsimError> {
        if target.n() != self.n {
            return Err(QsimError::SizeMismatch {
                reg: self.n,
                target: target.n(),
            });
        }
        let mut fid = 1.0;
        for f in &self.factors {
            let mut t = vec![c(1.0)];
            for &q in &f.qubits {
                let s = target.qubit_state(q);
                t = t.iter().flat_map(|&a| [a * s[0], a * s[1]]).collect();
            }
            let ov: Complex64 = t.iter().zip(&f.amps).map(|(a, b)| a.conj() * b).sum();
            fid *= ov.norm_sqr();
        }
        Ok(fid)
    }
}

fn apply_local(amps: &mut [Complex64], m: usize, u: &Matrix, pos: &[usize]) {
    let t = pos.len();
    let d = 1usize << t;
    let shifts: Vec<usize> = pos.iter().map(|p| m - 1 - p).collect();
    let mask: usize = shifts.iter().map(|s| 1usize << s).sum();
    let offsets: Vec<usize> = (0..d)
        .map(|sub| {
            (0..t)
                .map(|j| ((sub >> (t - 1 - j)) & 1) << shifts[j])
                .sum()
        })
        .collect();
    let mut buf = vec![Complex64::default(); d];
    for base in (0..1usize << m).filter(|b| b & mask == 0) {
        for (s, slot) in buf.iter_mut().enumerate() {
            *slot = amps[base | offsets[s]];
        }
        for (r, &off) in offsets.iter().enumerate() {
            amps[base | off] = (0..d).map(|k| u.get(r, k) * buf[k]).sum();
        }
    }
}

/// Operations a strategy may perform on a register it holds or has been
/// allowed to act on. The trait deliberately exposes no amplitudes.
pub trait RegisterOps {
    fn num_qubits(&self) -> usize;
    fn apply_unitary(&mut self, u: &Matrix, targets: &[usize]) -> Result<(), QsimError>;
    fn measure_angle(&mut self, i: usize, angle: f64, coin: &mut dyn Coin)
        -> Result<bool, QsimError>;
    fn measure_subset_computational(
        &mut self,
        subset: &[usize],
        coin: &mut dyn Coin,
    ) -> Result<BitString, QsimError>;
    fn discard(&mut self, subset: &[usize]) -> Result<(), QsimError>;
    fn append_zeros(&mut self, count: usize) -> Result<(), QsimError>;
}

impl RegisterOps for QReg {
    fn num_qubits(&self) -> usize {
        self.n
    }
    fn apply_unitary(&mut self, u: &Matrix, targets: &[usize]) -> Result<(), QsimError> {
        QReg::apply_unitary(self, u, targets)
    }
    fn measure_angle(
        &mut self,
        i: usize,
        angle: f64,
        coin: &mut dyn Coin,
    ) -> Result<bool, QsimError> {
        QReg::measure_angle(self, i, angle, coin)
    }
    fn measure_subset_computational(
        &mut self,
        subset: &[usize],
        coin: &mut dyn Coin,
    ) -> Result<BitString, QsimError> {
        QReg::measure_subset_computational(self, subset, coin)
    }
    fn discard(&mut self, subset: &[usize]) -> Result<(), QsimError> {
        QReg::discard(self, subset)
    }
    fn append_zeros(&mut self, count: usize) -> Result<(), QsimError> {
        QReg::append_zeros(self, count)
    }
}
