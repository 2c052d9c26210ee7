//! The `poqm` command line.

use std::ffi::OsString;
use std::io::{self, Write};
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use clap::{Parser, Subcommand, ValueEnum};
use poqm::adversary::{
    brute_force_best, parse_angle, Bb84Strategy, StrategyDescriptor,
};
use poqm::bb84::n_for_memory;
use poqm::coin::trial_rng;
use poqm::derived::{
    ke_agreement, ke_eve_eval, reduction_check, statepuzz_attack_eval, AllZeros, EchoBases,
    Eavesdropper, KeyThief, ProductAngle, RandomBb84, RandomGuess, StatePuzzAttacker,
    TargetReader, ZeroState,
};
use poqm::games::bounds::{amplification_factor, hybrid3_bound, puzzle_bound};
use poqm::games::bz::{check_bz, random_circuit, random_insertion, BzCircuit, Insertion};
use poqm::games::reports::{amplification_report, jensen_report, Mode, EXACT_MAX_M2, EXACT_MAX_N};
use poqm::games::stats::SE_SLACK;
use poqm::games::{estimate_acceptance, estimate_locc, locc_bound, run_hybrid, Estimate, Hybrid};
use poqm::protocol::{run_poqm, HarnessError, Hold, ProtocolParams};
use poqm::puzzle::{MeasureAll, PuzzleAdversary, RandomBasisRecord, ToyPuzzle, UniformGuess};
use poqm::qsim::BREIDBART;
use serde_json::json;

use crate::config::{ConfigError, Opts};
use crate::protocols::ProtocolChoice;
use crate::report::{decode, emit, Format, Report};
use crate::session::{run_prover, serve, ProverConfig, SessionError, VerifierConfig};

#[derive(Debug, Parser)]
#[command(name = "poqm", version, about = "Proofs of quantum memory: simulator, games, and networked sessions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte-Carlo acceptance of a protocol against the honest prover or a strategy.
    Run(Opts),
    /// One of the security games.
    Game {
        #[arg(value_enum)]
        game: GameKind,
        #[command(flatten)]
        opts: Opts,
        /// Angle grid size for `brute`.
        #[arg(long)]
        grid: Option<usize>,
        /// Gate count of random circuits for `bz`.
        #[arg(long)]
        depth: Option<usize>,
    },
    /// Tabulates a closed-form bound over a range of parameters.
    Bounds {
        #[arg(long, value_enum, default_value = "locc")]
        lemma: Lemma,
        /// A single value or an inclusive range `a..b`.
        #[arg(long, default_value = "1..16")]
        n: String,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// The hybrid chain for one strategy.
    Hybrid {
        #[command(flatten)]
        opts: Opts,
        /// Run only this hybrid (0-3).
        #[arg(long)]
        which: Option<usize>,
    },
    /// Key exchange agreement and eavesdroppers.
    Ke(Opts),
    /// State puzzle attackers.
    Statepuzz(Opts),
    /// Serves verifier sessions over TCP.
    Verifier {
        #[command(flatten)]
        opts: Opts,
        #[arg(long, default_value = "127.0.0.1:0")]
        listen: String,
        #[arg(long, default_value_t = 1)]
        sessions: u64,
        #[arg(long, default_value_t = 30_000)]
        timeout_ms: u64,
    },
    /// Runs the honest prover against a verifier.
    Prover {
        #[command(flatten)]
        opts: Opts,
        #[arg(long)]
        connect: String,
        /// Session index; selects the prover's coin stream.
        #[arg(long, default_value_t = 0)]
        session: u64,
        #[arg(long, default_value_t = 30_000)]
        timeout_ms: u64,
    },
    /// Re-emits a saved JSON report.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GameKind {
    Locc,
    Bz,
    Amplification,
    Jensen,
    Brute,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Lemma {
    Locc,
    Amplification,
    Hybrid3,
    Puzzle,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("cannot decode report: {0}")]
    Decode(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            _ => 1,
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Parses `args` (program name first), runs the command, writes the
/// report, and returns the exit code: 0 iff every check passed, 1 on a
/// failed check or runtime error, 2 on a usage or config error.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli.command) {
        Ok(passed) => {
            if passed {
                0
            } else {
                1
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(command: Command) -> Result<bool, CliError> {
    let (report, format, out) = match command {
        Command::Run(opts) => {
            let opts = opts.resolve()?;
            (cmd_run(&opts)?, opts.format(), opts.out)
        }
        Command::Game {
            game,
            opts,
            grid,
            depth,
        } => {
            let opts = opts.resolve()?;
            let report = match game {
                GameKind::Locc => game_locc(&opts)?,
                GameKind::Bz => game_bz(&opts, depth)?,
                GameKind::Amplification => game_amplification(&opts)?,
                GameKind::Jensen => game_jensen(&opts)?,
                GameKind::Brute => game_brute(&opts, grid)?,
            };
            (report, opts.format(), opts.out)
        }
        Command::Bounds {
            lemma,
            n,
            format,
            out,
        } => (cmd_bounds(lemma, &n)?, format, out),
        Command::Hybrid { opts, which } => {
            let opts = opts.resolve()?;
            (cmd_hybrid(&opts, which)?, opts.format(), opts.out)
        }
        Command::Ke(opts) => {
            let opts = opts.resolve()?;
            (cmd_ke(&opts)?, opts.format(), opts.out)
        }
        Command::Statepuzz(opts) => {
            let opts = opts.resolve()?;
            (cmd_statepuzz(&opts)?, opts.format(), opts.out)
        }
        Command::Verifier {
            opts,
            listen,
            sessions,
            timeout_ms,
        } => {
            let opts = opts.resolve()?;
            (
                cmd_verifier(&opts, &listen, sessions, timeout_ms)?,
                opts.format(),
                opts.out,
            )
        }
        Command::Prover {
            opts,
            connect,
            session,
            timeout_ms,
        } => {
            let opts = opts.resolve()?;
            (
                cmd_prover(&opts, &connect, session, timeout_ms)?,
                opts.format(),
                opts.out,
            )
        }
        Command::Report {
            input,
            format,
            out,
        } => (decode(&std::fs::read(&input)?)?, format, out),
    };
    let bytes = emit(&report, format);
    match out {
        Some(path) => {
            std::fs::write(&path, &bytes)?;
            for c in &report.checks {
                eprintln!("{}: {} ({})", c.name, if c.pass { "pass" } else { "FAIL" }, c.detail);
            }
        }
        None => io::stdout().write_all(&bytes)?,
    }
    Ok(report.passed())
}

fn protocol_params(opts: &Opts, protocol: ProtocolChoice) -> Result<ProtocolParams, CliError> {
    let n = match (opts.n, opts.m2) {
        (Some(n), _) => n,
        (None, Some(m2)) if protocol.is_bb84() => n_for_memory(m2),
        (None, Some(_)) => return Err(usage("--m2 sets n only for the BB84 protocols; pass --n")),
        (None, None) => 8,
    };
    let mut params = ProtocolParams::new(n);
    match (protocol, opts.k) {
        (ProtocolChoice::Puzzle, k) => params = params.with_k(k.unwrap_or(1)),
        (_, Some(_)) => return Err(usage("--k applies to the puzzle protocol only")),
        (_, None) => {}
    }
    if opts.hold_ms.is_some() || opts.depolarize.is_some() {
        params = params.with_hold(Hold {
            duration_ms: opts.hold_ms.unwrap_or(0),
            depolarize: opts.depolarize.unwrap_or(0.0),
        });
    }
    params.validate().map_err(|e| usage(e.to_string()))?;
    Ok(params)
}

fn fail_prob(opts: &Opts) -> Result<f64, CliError> {
    let f = opts.fail_prob.unwrap_or(0.0);
    if !(0.0..1.0).contains(&f) {
        return Err(usage(format!("--fail-prob {f} outside [0, 1)")));
    }
    Ok(f)
}

fn strategy(opts: &Opts, default: &str) -> Result<StrategyDescriptor, CliError> {
    opts.strategy
        .as_deref()
        .unwrap_or(default)
        .parse()
        .map_err(|e| usage(format!("bad strategy: {e}")))
}

fn puzzle_adversary(desc: &str) -> Result<Box<dyn PuzzleAdversary>, CliError> {
    let desc = desc.trim();
    match desc {
        "measure-all" => return Ok(Box::new(MeasureAll { angle: 0.0 })),
        "uniform-guess" => return Ok(Box::new(UniformGuess)),
        "random-basis-record" => return Ok(Box::new(RandomBasisRecord)),
        _ => {}
    }
    if let Some(arg) = desc
        .strip_prefix("measure-all(")
        .and_then(|s| s.strip_suffix(')'))
    {
        let angle = parse_angle(arg).map_err(|e| usage(format!("bad angle: {e}")))?;
        return Ok(Box::new(MeasureAll { angle }));
    }
    Err(usage(format!(
        "unknown puzzle adversary {desc:?}; expected measure-all[(angle)], uniform-guess, or random-basis-record"
    )))
}

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// `p_hat ≤ bound + slack·se` rendered as a check detail.
fn bound_detail(e: &Estimate, bound: f64) -> String {
    format!(
        "p_hat {:.5} vs bound {:.5} + {SE_SLACK}·{:.5}",
        e.p_hat,
        bound,
        e.se()
    )
}

fn cmd_run(opts: &Opts) -> Result<Report, CliError> {
    let protocol = opts.protocol.unwrap_or(ProtocolChoice::Bb84It);
    let params = protocol_params(opts, protocol)?;
    let seed = opts.seed()?;
    let trials = opts.trials.unwrap_or(1000);
    let fail = fail_prob(opts)?;
    let proto = protocol.poqm(fail);
    let mut r = Report::new("run", seed);
    r.param("protocol", protocol.name())
        .param("n", params.n)
        .param("k", params.k)
        .param("hold", params.hold)
        .param("fail_prob", fail)
        .param("trials", trials);
    let start = Instant::now();
    let noiseless = fail == 0.0 && params.hold.is_none_or(|h| h.depolarize == 0.0);
    match &opts.strategy {
        None => {
            let prover = protocol.honest_prover();
            let est = estimate_acceptance(trials, seed, |rng| {
                Ok(run_poqm(&*proto, &*prover, &params, rng)?.verdict.accepted)
            })?;
            if noiseless {
                r.check(
                    "honest-completeness",
                    est.successes == est.trials,
                    format!("{}/{} accepted", est.successes, est.trials),
                );
            }
            r.estimate("honest-acceptance", est);
        }
        Some(_) => {
            if !protocol.is_bb84() {
                return Err(usage("--strategy applies to the BB84 protocols; use `game jensen` for the puzzle"));
            }
            let s = strategy(opts, "breidbart")?;
            let m2 = s.memory_qubits();
            r.param("strategy", s.to_string()).param("m2", m2);
            let prover = poqm::adversary::as_prover(&s);
            let mut est = estimate_acceptance(trials, seed, |rng| {
                Ok(run_poqm(&*proto, &prover, &params, rng)?.verdict.accepted)
            })?;
            let locc = locc_bound(params.n);
            let amp = amplification_factor(m2);
            let bound = amp.raw * locc.raw;
            if fail == 0.0 {
                est = est.with_bound(bound);
                r.check("soundness", est.within_bound(), bound_detail(&est, bound));
            }
            r.bounds.push(locc);
            r.bounds.push(amp);
            r.estimate("adversary-acceptance", est);
        }
    }
    r.timings_ms.insert("total".into(), elapsed_ms(start));
    Ok(r)
}

fn game_locc(opts: &Opts) -> Result<Report, CliError> {
    let s = strategy(opts, "breidbart")?;
    let n = opts.n.unwrap_or(8);
    let seed = opts.seed()?;
    let trials = opts.trials.unwrap_or(100_000);
    let mut r = Report::new("game-locc", seed);
    r.param("strategy", s.to_string())
        .param("n", n)
        .param("trials", trials);
    let start = Instant::now();
    let est = estimate_locc(&s, n, trials, seed)?;
    let bound = locc_bound(n);
    r.check("locc-bound", est.within_bound(), bound_detail(&est, bound.raw));
    r.bounds.push(bound);
    r.estimate(s.to_string(), est);
    r.timings_ms.insert("total".into(), elapsed_ms(start));
    Ok(r)
}

fn game_bz(opts: &Opts, depth: Option<usize>) -> Result<Report, CliError> {
    let qubits = opts.n.unwrap_or(3);
    let depth = depth.unwrap_or(6);
    let circuits = opts.trials.unwrap_or(100);
    let seed = opts.seed()?;
    let mut r = Report::new("game-bz", seed);
    r.param("qubits", qubits)
        .param("depth", depth)
        .param("circuits", circuits);
    let start = Instant::now();
    let mut violations = Vec::new();
    let mut worst = f64::INFINITY;
    for i in 0..circuits {
        let mut rng = trial_rng(seed, i);
        let circuit = random_circuit(qubits, depth, &mut rng);
        let insertion = random_insertion(&circuit, &mut rng);
        let rep = check_bz(&circuit, &insertion)?;
        worst = worst.min(rep.worst_ratio);
        if !rep.ok {
            violations.push(i);
        }
    }
    r.check(
        "bz-random",
        violations.is_empty(),
        format!("{} violations, worst p'·k/p = {worst:.6}", violations.len()),
    );
    let tight = check_bz(
        &BzCircuit {
            qubits: 1,
            gates: vec![h_gate(), h_gate()],
        },
        &Insertion {
            step: 1,
            measured: vec![0],
        },
    )?;
    r.check(
        "bz-tight",
        tight.ok && (tight.worst_ratio - 1.0).abs() < 1e-9,
        format!("p = {:?}, p' = {:?}, k = {}", tight.p_original, tight.p_inserted, tight.k),
    );
    r.details = json!({ "violations": violations, "worst_ratio": worst, "tight": tight });
    r.timings_ms.insert("total".into(), elapsed_ms(start));
    Ok(r)
}

fn h_gate() -> poqm::adversary::Gate {
    poqm::adversary::Gate {
        gate: poqm::adversary::GateKind::H,
        targets: vec![0],
    }
}

fn game_amplification(opts: &Opts) -> Result<Report, CliError> {
    let protocol = opts.protocol.unwrap_or(ProtocolChoice::Bb84It);
    if !protocol.is_bb84() {
        return Err(usage("amplification runs on the BB84 protocols"));
    }
    let s = strategy(opts, "keep-first(1)")?;
    let m2 = s.memory_qubits();
    let params = ProtocolParams::new(opts.n.unwrap_or(2));
    params.validate().map_err(|e| usage(e.to_string()))?;
    let seed = opts.seed()?;
    let mode = match opts.trials {
        None if params.n <= EXACT_MAX_N && m2 <= EXACT_MAX_M2 => Mode::Exact,
        trials => Mode::Mc {
            trials: trials.unwrap_or(10_000),
            seed,
        },
    };
    let mut r = Report::new("game-amplification", seed);
    r.param("protocol", protocol.name())
        .param("strategy", s.to_string())
        .param("n", params.n)
        .param("m2", m2)
        .param("mode", mode);
    let start = Instant::now();
    let rep = amplification_report(&*protocol.poqm(fail_prob(opts)?), &s, &params, mode)?;
    r.check(
        "amplification",
        rep.ok,
        format!(
            "acceptance {:.6} vs 2^{m2} × measured {:.6}",
            rep.acc_m2, rep.acc_measured
        ),
    );
    if let Some((a, b)) = &rep.estimates {
        r.estimate("strategy", a.clone());
        r.estimate("measured", b.clone());
    }
    r.bounds.push(amplification_factor(m2));
    r.details = serde_json::to_value(&rep)?;
    r.timings_ms.insert("total".into(), elapsed_ms(start));
    Ok(r)
}

fn game_jensen(opts: &Opts) -> Result<Report, CliError> {
    let desc = opts.strategy.as_deref().unwrap_or("measure-all");
    let adversary = puzzle_adversary(desc)?;
    let n = opts.n.unwrap_or(8);
    let k = opts.k.unwrap_or(2);
    let trials = opts.trials.unwrap_or(10_000);
    let seed = opts.seed()?;
    let mut r = Report::new("game-jensen", seed);
    r.param("adversary", desc)
        .param("n", n)
        .param("k", k)
        .param("trials", trials);
    let start = Instant::now();
    let rep = jensen_report(ToyPuzzle, &*adversary, n, k, trials, seed)?;
    r.check(
        "jensen",
        rep.ok,
        format!(
            "both {:.5} vs single² {:.5} − {SE_SLACK}·{:.5}",
            rep.both.p_hat,
            rep.single.p_hat.powi(2),
            rep.combined_se
        ),
    );
    if rep.deterministic_answer {
        r.check(
            "deterministic-equality",
            rep.both.successes == rep.single.successes,
            format!("{} vs {} successes", rep.both.successes, rep.single.successes),
        );
    }
    r.estimate("single", rep.single.clone());
    r.estimate("both", rep.both.clone());
    r.bounds.push(puzzle_bound(k));
    r.details = serde_json::to_value(&rep)?;
    r.timings_ms.insert("total".into(), elapsed_ms(start));
    Ok(r)
}

fn game_brute(opts: &Opts, grid: Option<usize>) -> Result<Report, CliError> {
    let n = opts.n.unwrap_or(1);
    let grid = grid.unwrap_or(64);
    let trials = opts.trials.unwrap_or(100_000);
    let seed = opts.seed()?;
    let mut r = Report::new("game-brute", seed);
    r.param("n", n).param("grid", grid).param("trials", trials);
    let start = Instant::now();
    let rep = brute_force_best(n, grid)?;
    r.timings_ms.insert("search".into(), elapsed_ms(start));
    let rate = BREIDBART.cos().powi(2);
    let target = rate.powi(n as i32);
    let step = std::f64::consts::PI / grid as f64;
    r.check(
        "brute-value",
        (rep.value - target).abs() <= 0.01,
        format!("best {:.6} vs cos²(π/8)^{n} = {target:.6}", rep.value),
    );
    r.check(
        "brute-argmax",
        rep.best_angles.iter().all(|a| (a - BREIDBART).abs() <= step + 1e-12),
        format!("best angles {:?}, grid step {step:.5}", rep.best_angles),
    );
    let mc = estimate_locc(&StrategyDescriptor::Breidbart, n, trials, seed)?;
    r.check(
        "breidbart-agrees",
        mc.contains(rep.value),
        format!(
            "Monte-Carlo {:.5} in [{:.5}, {:.5}] vs oracle {:.6}",
            mc.p_hat, mc.ci_low, mc.ci_high, rep.value
        ),
    );
    r.estimate("breidbart", mc);
    r.details = serde_json::to_value(&rep)?;
    r.timings_ms.insert("total".into(), elapsed_ms(start));
    Ok(r)
}

/// `a`, `a..b`, or `a..=b`, inclusive.
fn parse_range(s: &str) -> Result<Vec<usize>, CliError> {
    let bad = || usage(format!("bad range {s:?}; expected a or a..b"));
    let num = |t: &str| t.trim().parse::<usize>().map_err(|_| bad());
    let (lo, hi) = match s.split_once("..") {
        None => {
            let v = num(s)?;
            (v, v)
        }
        Some((a, b)) => (num(a)?, num(b.strip_prefix('=').unwrap_or(b))?),
    };
    if lo > hi {
        return Err(bad());
    }
    Ok((lo..=hi).collect())
}

fn cmd_bounds(lemma: Lemma, range: &str) -> Result<Report, CliError> {
    let params = parse_range(range)?;
    let mut r = Report::new("bounds", 0);
    r.param("lemma", format!("{lemma:?}").to_lowercase())
        .param("range", range);
    for p in params {
        let b = match lemma {
            Lemma::Locc => locc_bound(p),
            Lemma::Amplification => amplification_factor(p),
            Lemma::Hybrid3 => hybrid3_bound(p),
            Lemma::Puzzle => puzzle_bound(p),
        };
        r.bounds.push(b);
    }
    Ok(r)
}

fn cmd_hybrid(opts: &Opts, which: Option<usize>) -> Result<Report, CliError> {
    let s = strategy(opts, "breidbart")?;
    let m2 = s.memory_qubits();
    let n = match (opts.n, opts.m2.or((m2 > 0).then_some(m2))) {
        (Some(n), _) => n,
        (None, Some(m)) => n_for_memory(m),
        (None, None) => 8,
    };
    let params = ProtocolParams::new(n);
    params.validate().map_err(|e| usage(e.to_string()))?;
    let fail = fail_prob(opts)?;
    let trials = opts.trials.unwrap_or(10_000);
    let seed = opts.seed()?;
    let hybrids = match which {
        Some(i) => vec![Hybrid::from_index(i).map_err(|e| usage(e.to_string()))?],
        None => vec![Hybrid::H0, Hybrid::H1, Hybrid::H2, Hybrid::H3],
    };
    let mut r = Report::new("hybrid", seed);
    r.param("strategy", s.to_string())
        .param("n", n)
        .param("m2", m2)
        .param("fail_prob", fail)
        .param("trials", trials);
    let start = Instant::now();
    let mut found = [None, None, None, None];
    for h in hybrids {
        let t = Instant::now();
        let est = estimate_acceptance(trials, seed, |rng| run_hybrid(h, &params, fail, &s, rng))?;
        r.timings_ms.insert(format!("h{}", h.index()), elapsed_ms(t));
        r.estimate(format!("h{}", h.index()), est.clone());
        found[h.index()] = Some(est);
    }
    let factor = amplification_factor(m2);
    let locc = locc_bound(n);
    if let (Some(h0), Some(h2)) = (&found[0], &found[2]) {
        if fail == 0.0 {
            let se = h0.se().hypot(h2.se());
            r.check(
                "h0-matches-h2",
                (h0.p_hat - h2.p_hat).abs() <= SE_SLACK * se,
                format!("{:.5} vs {:.5}, combined se {se:.5}", h0.p_hat, h2.p_hat),
            );
        }
    }
    if let (Some(h2), Some(h3)) = (&found[2], &found[3]) {
        let se = h2.se().hypot(factor.raw * h3.se());
        r.check(
            "h2-amplification",
            h2.p_hat <= factor.raw * h3.p_hat + SE_SLACK * se,
            format!("{:.5} vs {} × {:.5}, combined se {se:.5}", h2.p_hat, factor.raw, h3.p_hat),
        );
    }
    if let Some(h3) = &found[3] {
        r.check(
            "h3-locc",
            h3.p_hat <= locc.raw + SE_SLACK * h3.se(),
            bound_detail(h3, locc.raw),
        );
    }
    r.bounds.push(locc);
    r.bounds.push(factor);
    r.timings_ms.insert("total".into(), elapsed_ms(start));
    Ok(r)
}

fn cmd_ke(opts: &Opts) -> Result<Report, CliError> {
    let n = opts.n.unwrap_or(8);
    let trials = opts.trials.unwrap_or(10_000);
    let seed = opts.seed()?;
    let depolarize = opts.depolarize.unwrap_or(0.0);
    if !(0.0..=1.0).contains(&depolarize) {
        return Err(usage(format!("--depolarize {depolarize} outside [0, 1]")));
    }
    let hold = Hold {
        duration_ms: opts.hold_ms.unwrap_or(0),
        depolarize,
    };
    let mut r = Report::new("ke", seed);
    r.param("n", n)
        .param("trials", trials)
        .param("hold", hold);
    let start = Instant::now();
    let agreement = ke_agreement(n, Some(hold), trials, seed)?;
    if depolarize == 0.0 {
        r.check(
            "agreement",
            agreement.successes == agreement.trials,
            format!("{}/{} sessions agree", agreement.successes, agreement.trials),
        );
    } else {
        let clean = ke_agreement(n, None, trials, seed)?;
        r.details = json!({
            "noiseless_agreement": clean.p_hat,
            "agreement_drop": clean.p_hat - agreement.p_hat,
        });
        r.estimate("agreement-noiseless", clean);
    }
    r.estimate("agreement", agreement);
    r.timings_ms.insert("agreement".into(), elapsed_ms(start));
    let eves: [&dyn Eavesdropper; 3] = [&AllZeros, &EchoBases, &RandomGuess];
    for eve in eves {
        let rep = ke_eve_eval(eve, n, trials, seed)?;
        r.check(
            format!("eve-{}", rep.eve),
            rep.ok,
            bound_detail(&rep.success, rep.exact),
        );
        r.estimate(format!("eve-{}", rep.eve), rep.success);
    }
    let thief = ke_eve_eval(&KeyThief, n, 100, seed);
    r.check(
        "eve-key-thief-denied",
        matches!(thief, Err(HarnessError::Access(_))),
        match &thief {
            Err(e) => e.to_string(),
            Ok(rep) => format!("read the key: success {:.5}", rep.success.p_hat),
        },
    );
    r.timings_ms.insert("total".into(), elapsed_ms(start));
    Ok(r)
}

fn cmd_statepuzz(opts: &Opts) -> Result<Report, CliError> {
    let n = opts.n.unwrap_or(8);
    let trials = opts.trials.unwrap_or(10_000);
    let seed = opts.seed()?;
    let mut r = Report::new("statepuzz", seed);
    r.param("n", n).param("trials", trials);
    let start = Instant::now();
    let honest = reduction_check(n, trials, seed, |inst, _| Ok(inst.honest_register().clone()))?;
    r.check(
        "honest-fidelity",
        (honest.fidelity.mean - 1.0).abs() < 1e-9,
        format!("mean fidelity {:.12}", honest.fidelity.mean),
    );
    r.check(
        "honest-acceptance",
        honest.acceptance.successes == honest.acceptance.trials,
        format!("{}/{}", honest.acceptance.successes, honest.acceptance.trials),
    );
    r.estimate("honest-acceptance", honest.acceptance.clone());
    let mut attacks = Vec::new();
    let attackers: [&dyn StatePuzzAttacker; 3] = [&ZeroState, &ProductAngle(BREIDBART), &RandomBb84];
    for a in attackers {
        let rep = statepuzz_attack_eval(a, n, trials, seed)?;
        r.check(
            format!("attacker-{}", rep.attacker),
            rep.ok,
            format!(
                "mean fidelity {:.5} vs 2^-{n} = {:.5} + {SE_SLACK}·{:.5}",
                rep.fidelity.mean, rep.blind_value, rep.fidelity.se
            ),
        );
        attacks.push(rep);
    }
    let reader = statepuzz_attack_eval(&TargetReader, n, 100, seed);
    r.check(
        "attacker-target-reader-denied",
        matches!(reader, Err(HarnessError::Access(_))),
        match &reader {
            Err(e) => e.to_string(),
            Ok(rep) => format!("read the target: fidelity {:.5}", rep.fidelity.mean),
        },
    );
    r.details = json!({ "honest_fidelity": honest.fidelity, "attacks": attacks });
    r.timings_ms.insert("total".into(), elapsed_ms(start));
    Ok(r)
}

fn cmd_verifier(opts: &Opts, listen: &str, sessions: u64, timeout_ms: u64) -> Result<Report, CliError> {
    let protocol = opts.protocol.unwrap_or(ProtocolChoice::Bb84It);
    let params = protocol_params(opts, protocol)?;
    let seed = opts.seed()?;
    let hold_ms = opts.hold_ms.unwrap_or(0);
    let cfg = VerifierConfig {
        protocol,
        params: ProtocolParams {
            hold: None,
            ..params
        },
        fail_prob: fail_prob(opts)?,
        hold_ms,
        seed,
        io_timeout: Duration::from_millis(timeout_ms),
    };
    let listener = TcpListener::bind(listen)?;
    eprintln!("listening on {}", listener.local_addr()?);
    let mut r = Report::new("verifier", seed);
    r.param("protocol", protocol.name())
        .param("n", cfg.params.n)
        .param("k", cfg.params.k)
        .param("hold_ms", hold_ms)
        .param("sessions", sessions);
    let start = Instant::now();
    let reports = serve(&listener, &cfg, sessions)?;
    for s in &reports {
        r.check(
            format!("session-{}-accepted", s.session),
            s.verdict.accepted,
            s.verdict.detail.clone().unwrap_or_default(),
        );
        if let Some(held) = s.hold_enforced_ms {
            r.check(
                format!("session-{}-hold", s.session),
                held >= hold_ms as f64,
                format!("challenge sent {held:.1} ms after PHASE_DONE"),
            );
        }
        r.timings_ms.insert(format!("session-{}", s.session), s.session_ms);
    }
    r.details = serde_json::to_value(&reports)?;
    r.timings_ms.insert("total".into(), elapsed_ms(start));
    Ok(r)
}

fn cmd_prover(opts: &Opts, connect: &str, session: u64, timeout_ms: u64) -> Result<Report, CliError> {
    let protocol = opts.protocol.unwrap_or(ProtocolChoice::Bb84It);
    let params = protocol_params(opts, protocol)?;
    let seed = opts.seed()?;
    let cfg = ProverConfig {
        protocol,
        params: ProtocolParams {
            hold: None,
            ..params
        },
        seed,
        session,
        depolarize: opts.depolarize.unwrap_or(0.0),
        io_timeout: Duration::from_millis(timeout_ms),
        answer_early: false,
    };
    let mut r = Report::new("prover", seed);
    r.param("protocol", protocol.name())
        .param("n", cfg.params.n)
        .param("k", cfg.params.k)
        .param("depolarize", cfg.depolarize)
        .param("session", session);
    let stream = TcpStream::connect(connect)?;
    let outcome = run_prover(stream, &cfg)?;
    r.check(
        "accepted",
        outcome.verdict.accepted,
        outcome.verdict.detail.clone().unwrap_or_default(),
    );
    r.timings_ms.insert("session".into(), outcome.session_ms);
    if let Some(h) = outcome.hold_observed_ms {
        r.timings_ms.insert("hold_observed".into(), h);
    }
    r.details = serde_json::to_value(&outcome)?;
    Ok(r)
}
