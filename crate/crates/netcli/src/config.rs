//! Shared experiment options, mergeable with a TOML config file.
//!
//! A config file uses the long flag names as keys:
//!
//! ```toml
//! protocol = "bb84-rsp"
//! m2 = 2
//! trials = 1000
//! seed = 1
//! ```
//!
//! Flags given on the command line win over the file; the seed falls back
//! to `POQM_SEED`, then 0.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::protocols::ProtocolChoice;
use crate::report::Format;

pub const SEED_ENV: &str = "POQM_SEED";

#[derive(Debug, Clone, Default, PartialEq, clap::Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct Opts {
    #[arg(long, value_enum)]
    pub protocol: Option<ProtocolChoice>,
    /// Number of BB84 qubits.
    #[arg(long)]
    pub n: Option<usize>,
    /// Challenge length of the puzzle protocol.
    #[arg(long)]
    pub k: Option<usize>,
    /// Adversary memory in qubits; sets n for the BB84 protocols.
    #[arg(long)]
    pub m2: Option<usize>,
    /// Strategy descriptor, e.g. `breidbart` or `keep-first(1)`.
    #[arg(long)]
    pub strategy: Option<String>,
    #[arg(long)]
    pub trials: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub hold_ms: Option<u64>,
    /// Per-qubit depolarization during the hold.
    #[arg(long)]
    pub depolarize: Option<f64>,
    /// Failure probability of the ideal state preparation.
    #[arg(long)]
    pub fail_prob: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// TOML file with defaults for any of these options.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config {path}: {source}")]
    Parse {
        path: PathBuf,
        source: toml::de::Error,
    },
    #[error("{SEED_ENV}={0:?} is not an unsigned integer")]
    SeedEnv(String),
}

impl Opts {
    /// Fills every unset field from `file`.
    pub fn merged(self, file: Opts) -> Opts {
        Opts {
            protocol: self.protocol.or(file.protocol),
            n: self.n.or(file.n),
            k: self.k.or(file.k),
            m2: self.m2.or(file.m2),
            strategy: self.strategy.or(file.strategy),
            trials: self.trials.or(file.trials),
            seed: self.seed.or(file.seed),
            hold_ms: self.hold_ms.or(file.hold_ms),
            depolarize: self.depolarize.or(file.depolarize),
            fail_prob: self.fail_prob.or(file.fail_prob),
            out: self.out.or(file.out),
            format: self.format.or(file.format),
            config: self.config,
        }
    }

    /// Applies the config file named by `--config`, if any.
    pub fn resolve(self) -> Result<Opts, ConfigError> {
        match self.config.clone() {
            None => Ok(self),
            Some(path) => Ok(self.merged(load(&path)?)),
        }
    }

    /// CLI, then config file, then `POQM_SEED`, then 0.
    pub fn seed(&self) -> Result<u64, ConfigError> {
        seed_with_env(self.seed, std::env::var(SEED_ENV).ok())
    }

    pub fn format(&self) -> Format {
        self.format.unwrap_or(Format::Json)
    }
}

pub fn load(path: &Path) -> Result<Opts, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    parse(&text).map_err(|source| ConfigError::Parse {
        path: path.to_path_buf(),
        source,
    })
}

pub fn parse(text: &str) -> Result<Opts, toml::de::Error> {
    toml::from_str(text)
}

fn seed_with_env(explicit: Option<u64>, env: Option<String>) -> Result<u64, ConfigError> {
    if let Some(s) = explicit {
        return Ok(s);
    }
    match env {
        None => Ok(0),
        Some(v) => v.trim().parse().map_err(|_| ConfigError::SeedEnv(v)),
    }
}
