//! Protocols selectable by name.

use poqm::bb84::{Bb84Poqm, HonestBb84};
use poqm::protocol::{Poqm, Prover};
use poqm::puzzle::{compile_puzzle_to_poqm, HonestPuzzleProver, ToyPuzzle};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ProtocolChoice {
    Bb84It,
    Bb84Rsp,
    Puzzle,
}

impl ProtocolChoice {
    pub fn name(self) -> &'static str {
        match self {
            ProtocolChoice::Bb84It => "bb84-it",
            ProtocolChoice::Bb84Rsp => "bb84-rsp",
            ProtocolChoice::Puzzle => "puzzle",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [ProtocolChoice::Bb84It, ProtocolChoice::Bb84Rsp, ProtocolChoice::Puzzle]
            .into_iter()
            .find(|p| p.name() == name)
    }

    pub fn poqm(self, fail_prob: f64) -> Box<dyn Poqm> {
        match self {
            ProtocolChoice::Bb84It => Box::new(Bb84Poqm::it()),
            ProtocolChoice::Bb84Rsp => Box::new(Bb84Poqm::ideal_rsp(fail_prob)),
            ProtocolChoice::Puzzle => Box::new(compile_puzzle_to_poqm(ToyPuzzle)),
        }
    }

    pub fn honest_prover(self) -> Box<dyn Prover> {
        match self {
            ProtocolChoice::Bb84It | ProtocolChoice::Bb84Rsp => Box::new(HonestBb84),
            ProtocolChoice::Puzzle => Box::new(HonestPuzzleProver::new(ToyPuzzle)),
        }
    }

    pub fn is_bb84(self) -> bool {
        !matches!(self, ProtocolChoice::Puzzle)
    }
}
