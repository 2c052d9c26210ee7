//! Proofs of quantum memory (PoQM): a classical verifier checks, across a
//! hold period, that a prover kept quantum information in quantum memory.
//!
//! The crate provides the simulated quantum substrate ([`qsim`]), the
//! two-phase protocol runner ([`protocol`]), concrete protocols ([`bb84`],
//! [`puzzle`]), memory-bounded adversaries ([`adversary`]), security-game
//! harnesses and bounds ([`games`]), and the constructions built on top of a
//! PoQM ([`derived`]).

pub mod adversary;
pub mod bb84;
pub mod bits;
pub mod coin;
pub mod derived;
pub mod games;
pub mod protocol;
pub mod puzzle;
pub mod qsim;

pub use bits::BitString;
pub use coin::Coin;
pub use qsim::{Bb84Description, Matrix, QReg, QsimError};
