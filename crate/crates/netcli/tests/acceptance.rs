//! Acceptance suite: ten criteria, one PASS/FAIL line each. Exits nonzero
//! if any criterion fails or overruns its time budget.

use std::f64::consts::{FRAC_PI_4, PI};
use std::io::{BufRead, BufReader};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use poqm::adversary::{
    brute_force_best, AdaptiveRule, Bb84Strategy, CircuitSpec, Gate, GateKind,
    StrategyDescriptor,
};
use poqm::bb84::{n_for_memory, Bb84Poqm, HonestBb84};
use poqm::coin::{exact_probability, trial_rng};
use poqm::derived::{
    ke_agreement, ke_eve_eval, reduction_check, statepuzz_attack_eval, AllZeros, EchoBases,
    Eavesdropper, ProductAngle, RandomBb84, RandomGuess, StatePuzzAttacker, ZeroState,
};
use poqm::games::bz::{check_bz, random_circuit, random_insertion, BzCircuit, Insertion};
use poqm::games::reports::{amplification_report, jensen_report, Mode};
use poqm::games::stats::SE_SLACK;
use poqm::games::{estimate_acceptance, estimate_locc, locc_bound, run_hybrid, Hybrid};
use poqm::protocol::{run_poqm, HarnessError, Hold, Poqm, Prover, ProtocolParams};
use poqm::puzzle::{
    compile_puzzle_to_poqm, HonestPuzzleProver, MeasureAll, PuzzleAdversary, RandomBasisRecord,
    ToyPuzzle, UniformGuess,
};
use poqm::qsim::BREIDBART;
use poqm_netcli::report::decode;

type Outcome = Result<(bool, Vec<String>), HarnessError>;

type Case = (&'static str, Box<dyn Poqm>, Box<dyn Prover>, ProtocolParams);

const SEED: u64 = 2024;

fn breidbart_rate() -> f64 {
    0.5 + 0.5 / 2f64.sqrt()
}

fn criterion(id: u32, title: &str, budget: Duration, body: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let result = body();
    let elapsed = start.elapsed();
    let (pass, lines) = match result {
        Ok((pass, lines)) => (pass, lines),
        Err(e) => (false, vec![format!("error: {e}")]),
    };
    let in_time = elapsed <= budget;
    let ok = pass && in_time;
    println!(
        "criterion {id}: {} {title} ({:.1} s, budget {} s{})",
        if ok { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        budget.as_secs(),
        if in_time { "" } else { ", over budget" }
    );
    for l in lines {
        println!("    {l}");
    }
    ok
}

fn mark(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "VIOLATION"
    }
}

fn honest_completeness() -> Outcome {
    let cases: Vec<Case> = vec![
        ("bb84-it n=8", Box::new(Bb84Poqm::it()), Box::new(HonestBb84), ProtocolParams::new(8)),
        (
            "bb84-rsp n=19",
            Box::new(Bb84Poqm::ideal_rsp(0.0)),
            Box::new(HonestBb84),
            ProtocolParams::new(n_for_memory(2)),
        ),
        (
            "puzzle n=8 k=2",
            Box::new(compile_puzzle_to_poqm(ToyPuzzle)),
            Box::new(HonestPuzzleProver::new(ToyPuzzle)),
            ProtocolParams::new(8).with_k(2),
        ),
    ];
    let mut pass = true;
    let mut lines = Vec::new();
    for (name, proto, prover, params) in cases {
        let start = Instant::now();
        let e = estimate_acceptance(10_000, SEED, |rng| {
            Ok(run_poqm(&*proto, &*prover, &params, rng)?.verdict.accepted)
        })?;
        let secs = start.elapsed().as_secs_f64();
        let ok = e.successes == e.trials && secs < 10.0;
        pass &= ok;
        lines.push(format!("{name}: {}/{} accepted in {secs:.2} s [{}]", e.successes, e.trials, mark(ok)));
    }
    Ok((pass, lines))
}

fn locc_zoo(n: usize) -> Vec<StrategyDescriptor> {
    let rule = AdaptiveRule {
        even_angle: 0.0,
        odd_angle: FRAC_PI_4,
    };
    vec![
        StrategyDescriptor::uniform_guess(0.0),
        StrategyDescriptor::uniform_guess(FRAC_PI_4),
        StrategyDescriptor::classical_basis_guess(
            (0..n).map(|i| if i % 2 == 0 { 0.0 } else { FRAC_PI_4 }).collect(),
        ),
        StrategyDescriptor::Breidbart,
        StrategyDescriptor::compression(CircuitSpec::Identity, 0, 0),
        StrategyDescriptor::compression(CircuitSpec::CnotPairs, 0, 0),
        StrategyDescriptor::compression(CircuitSpec::RotateAll { angle: BREIDBART }, 1, 0),
        StrategyDescriptor::adaptive_compression(CircuitSpec::CnotPairs, 0, 2, rule),
        StrategyDescriptor::adaptive_compression(
            CircuitSpec::RotateAll { angle: BREIDBART },
            0,
            1,
            AdaptiveRule {
                even_angle: BREIDBART,
                odd_angle: 3.0 * BREIDBART,
            },
        ),
    ]
}

fn locc_bound_zoo() -> Outcome {
    let mut pass = true;
    let mut lines = Vec::new();
    let mut cells = 0;
    for n in [8, 12, 16] {
        let bound = locc_bound(n).raw;
        for s in locc_zoo(n) {
            let e = estimate_locc(&s, n, 100_000, SEED)?;
            let ok = e.within_bound();
            pass &= ok;
            cells += 1;
            if !ok || n == 8 {
                lines.push(format!(
                    "n={n} {s}: {:.5} ≤ {bound:.5} + 3·{:.5} [{}]",
                    e.p_hat,
                    e.se(),
                    mark(ok)
                ));
            }
        }
    }
    let b = estimate_locc(&StrategyDescriptor::Breidbart, 8, 100_000, SEED)?;
    let b_ok = (0.2717..=0.2917).contains(&b.p_hat);
    let c = estimate_locc(&StrategyDescriptor::uniform_guess(0.0), 8, 100_000, SEED)?;
    let c_ok = (0.0901..=0.1101).contains(&c.p_hat);
    pass &= b_ok && c_ok;
    lines.push(format!(
        "breidbart n=8: {:.5} in [0.2717, 0.2917], exact {:.5} [{}]",
        b.p_hat,
        breidbart_rate().powi(8),
        mark(b_ok)
    ));
    lines.push(format!(
        "classical guess n=8: {:.5} in [0.0901, 0.1101], exact {:.5} [{}]",
        c.p_hat,
        0.75f64.powi(8),
        mark(c_ok)
    ));
    lines.push(format!("{cells} strategy × n cells, all within bound: {pass}"));
    Ok((pass, lines))
}

fn measurement_insertion() -> Outcome {
    let mut violations = 0;
    let mut worst = f64::INFINITY;
    for i in 0..100 {
        let mut rng = trial_rng(SEED, i);
        let qubits = 1 + (i as usize % 3);
        let circuit = random_circuit(qubits, 8, &mut rng);
        let insertion = random_insertion(&circuit, &mut rng);
        let r = check_bz(&circuit, &insertion)?;
        worst = worst.min(r.worst_ratio);
        if !r.ok {
            violations += 1;
        }
    }
    let h = || Gate {
        gate: GateKind::H,
        targets: vec![0],
    };
    let tight = check_bz(
        &BzCircuit {
            qubits: 1,
            gates: vec![h(), h()],
        },
        &Insertion {
            step: 1,
            measured: vec![0],
        },
    )?;
    let tight_ok = tight.ok
        && (tight.p_original["0"] - 1.0).abs() < 1e-12
        && (tight.p_inserted["0"] - 0.5).abs() < 1e-12
        && (tight.worst_ratio - 1.0).abs() < 1e-12;
    Ok((
        violations == 0 && tight_ok,
        vec![
            format!("100 random circuits on 1-3 qubits: {violations} violations, worst p'·k/p = {worst:.6}"),
            format!(
                "|+⟩ then H: p(0) = {}, p'(0) = {}, k = {} [{}]",
                tight.p_original["0"],
                tight.p_inserted["0"],
                tight.k,
                mark(tight_ok)
            ),
        ],
    ))
}

/// Every subset of at most two qubits, with each per-qubit fallback.
fn keep_subset_family(n: usize) -> Vec<StrategyDescriptor> {
    let fallbacks = [
        StrategyDescriptor::Breidbart,
        StrategyDescriptor::uniform_guess(0.0),
        StrategyDescriptor::uniform_guess(FRAC_PI_4),
    ];
    let mut subsets: Vec<Vec<usize>> = vec![vec![]];
    for i in 0..n {
        subsets.push(vec![i]);
        for j in i + 1..n {
            subsets.push(vec![i, j]);
        }
    }
    subsets
        .into_iter()
        .flat_map(|s| {
            fallbacks
                .iter()
                .map(move |fb| StrategyDescriptor::keep_subset(s.clone(), fb.clone()))
        })
        .collect()
}

fn amplification() -> Outcome {
    let mut cases = 0;
    let mut violations = Vec::new();
    for proto in [Bb84Poqm::it(), Bb84Poqm::ideal_rsp(0.0)] {
        for n in 1..=4 {
            for s in keep_subset_family(n) {
                let r = amplification_report(&proto, &s, &ProtocolParams::new(n), Mode::Exact)?;
                cases += 1;
                if !r.ok {
                    violations.push(format!("{} n={n} {s}: {} > 2^{} × {}", r.protocol, r.acc_m2, r.m2, r.acc_measured));
                }
            }
        }
    }
    let one = amplification_report(
        &Bb84Poqm::it(),
        &StrategyDescriptor::keep_subset(vec![0], StrategyDescriptor::Breidbart),
        &ProtocolParams::new(1),
        Mode::Exact,
    )?;
    let one_ok = (one.acc_m2 - 1.0).abs() < 1e-12 && (one.acc_measured - 0.75).abs() < 1e-12;
    let mut lines = vec![
        format!("{cases} exact cases (n ≤ 4, m2 ≤ 2, two protocols): {} violations", violations.len()),
        format!("n=1 m2=1: ({}, {}) [{}]", one.acc_m2, one.acc_measured, mark(one_ok)),
    ];
    lines.extend(violations.iter().take(5).cloned());
    Ok((violations.is_empty() && one_ok, lines))
}

fn hybrid_chain() -> Outcome {
    let mut pass = true;
    let mut lines = Vec::new();

    // hybrid 0 against hybrid 2 under an ideal preparation
    let keep = |m2: usize| StrategyDescriptor::keep_subset((0..m2).collect(), StrategyDescriptor::Breidbart);
    for (s, n) in [(StrategyDescriptor::Breidbart, 8), (keep(1), n_for_memory(1)), (keep(2), n_for_memory(2))] {
        let params = ProtocolParams::new(n);
        let h0 = estimate_acceptance(100_000, SEED, |rng| run_hybrid(Hybrid::H0, &params, 0.0, &s, rng))?;
        let h2 = estimate_acceptance(100_000, SEED + 1, |rng| run_hybrid(Hybrid::H2, &params, 0.0, &s, rng))?;
        let se = h0.se().hypot(h2.se());
        let ok = (h0.p_hat - h2.p_hat).abs() <= SE_SLACK * se;
        pass &= ok;
        lines.push(format!(
            "H0 vs H2, {s} n={n}: {:.5} vs {:.5} (independent seeds, 3·se {:.5}) [{}]",
            h0.p_hat,
            h2.p_hat,
            SE_SLACK * se,
            mark(ok)
        ));
    }

    // hybrid 2 against hybrid 3, exactly
    let mut cases = 0;
    let mut violations = 0;
    for n in 1..=4 {
        let params = ProtocolParams::new(n);
        for s in keep_subset_family(n) {
            let m2 = s.memory_qubits();
            let h2 = exact_probability(|coin| run_hybrid(Hybrid::H2, &params, 0.0, &s, coin))?;
            let h3 = exact_probability(|coin| run_hybrid(Hybrid::H3, &params, 0.0, &s, coin))?;
            cases += 1;
            if h2 > (m2 as f64).exp2() * h3 + 1e-12 {
                violations += 1;
            }
        }
    }
    pass &= violations == 0;
    lines.push(format!("H2 ≤ 2^m2·H3 exactly: {cases} cases, {violations} violations"));

    // hybrid 3 against the leakage bound
    for m2 in [1, 2] {
        let n = n_for_memory(m2);
        let bound = locc_bound(n).raw;
        let params = ProtocolParams::new(n);
        for s in [
            keep(m2),
            StrategyDescriptor::keep_subset((n - m2..n).collect(), StrategyDescriptor::uniform_guess(0.0)),
            StrategyDescriptor::compression(CircuitSpec::CnotPairs, 0, m2),
        ] {
            let h3 = estimate_acceptance(100_000, SEED, |rng| run_hybrid(Hybrid::H3, &params, 0.0, &s, rng))?;
            let ok = h3.p_hat <= bound + SE_SLACK * h3.se();
            pass &= ok;
            lines.push(format!(
                "H3, m2={m2} n={n} {s}: {:.5} ≤ {bound:.5} + 3·{:.5} [{}]",
                h3.p_hat,
                h3.se(),
                mark(ok)
            ));
        }
    }
    Ok((pass, lines))
}

fn jensen() -> Outcome {
    let adversaries: [(&str, &dyn PuzzleAdversary); 3] = [
        ("measure-all", &MeasureAll { angle: 0.0 }),
        ("uniform-guess", &UniformGuess),
        ("random-basis-record", &RandomBasisRecord),
    ];
    let mut pass = true;
    let mut lines = Vec::new();
    for (name, adv) in adversaries {
        let r = jensen_report(ToyPuzzle, adv, 8, 2, 100_000, SEED)?;
        let mut ok = r.ok;
        let mut note = String::new();
        if r.deterministic_answer {
            let equal = r.both.successes == r.single.successes;
            ok &= equal;
            note = format!(", both = single exactly: {equal}");
        }
        pass &= ok;
        lines.push(format!(
            "{name}: both {:.5} ≥ single² {:.5} − 3·{:.5}{note} [{}]",
            r.both.p_hat,
            r.single.p_hat.powi(2),
            r.combined_se,
            mark(ok)
        ));
        if name == "measure-all" {
            // block j is answered correctly with prob 1 (matching basis) or
            // 0.75^4 (other basis), and there are two blocks
            let exact = ((1.0 + 0.75f64.powi(4)) / 2.0).powi(2);
            let in_ci = r.single.contains(exact);
            pass &= in_ci;
            lines.push(format!(
                "measure-all single acceptance CI [{:.5}, {:.5}] contains {exact:.5} [{}]",
                r.single.ci_low,
                r.single.ci_high,
                mark(in_ci)
            ));
        }
    }
    Ok((pass, lines))
}

fn statepuzz() -> Outcome {
    let n = 8;
    let mut lines = Vec::new();
    let honest = reduction_check(n, 10_000, SEED, |inst, _| Ok(inst.honest_register().clone()))?;
    let mut pass = (honest.fidelity.mean - 1.0).abs() < 1e-9
        && honest.acceptance.successes == honest.acceptance.trials;
    lines.push(format!(
        "honest: mean fidelity {:.12}, execution accepts {}/{}",
        honest.fidelity.mean, honest.acceptance.successes, honest.acceptance.trials
    ));
    let attackers: [(&str, &dyn StatePuzzAttacker); 4] = [
        ("zero-state", &ZeroState),
        ("product-angle(pi/8)", &ProductAngle(BREIDBART)),
        ("product-angle(pi/3)", &ProductAngle(PI / 3.0)),
        ("random-bb84", &RandomBb84),
    ];
    for (label, a) in attackers {
        let r = statepuzz_attack_eval(a, n, 100_000, SEED)?;
        pass &= r.ok;
        lines.push(format!(
            "{label}: mean fidelity {:.5} ≤ {:.5} + 3·{:.5} [{}]",
            r.fidelity.mean,
            r.blind_value,
            r.fidelity.se,
            mark(r.ok)
        ));
    }
    Ok((pass, lines))
}

fn key_exchange() -> Outcome {
    let n = 8;
    let agreement = ke_agreement(n, None, 10_000, SEED)?;
    let mut pass = agreement.successes == agreement.trials;
    let mut lines = vec![format!(
        "noiseless agreement {}/{}",
        agreement.successes, agreement.trials
    )];
    let eves: [&dyn Eavesdropper; 3] = [&AllZeros, &EchoBases, &RandomGuess];
    for eve in eves {
        let r = ke_eve_eval(eve, n, 100_000, SEED)?;
        pass &= r.ok;
        lines.push(format!(
            "{}: {:.5} ≤ {:.5} + 3·{:.5} [{}]",
            r.eve,
            r.success.p_hat,
            r.exact,
            r.success.se(),
            mark(r.ok)
        ));
    }
    let hold = Hold {
        duration_ms: 0,
        depolarize: 0.05,
    };
    let noisy = ke_agreement(n, Some(hold), 10_000, SEED)?;
    lines.push(format!(
        "depolarization 0.05 during the hold: agreement {:.4} (drop {:.4}; per-qubit flip 0.025 predicts {:.4}), reported only",
        noisy.p_hat,
        agreement.p_hat - noisy.p_hat,
        0.975f64.powi(n as i32)
    ));
    Ok((pass, lines))
}

fn brute_force() -> Outcome {
    let grid = 64;
    let r = brute_force_best(1, grid)?;
    let step = PI / grid as f64;
    let value_ok = (r.value - breidbart_rate()).abs() <= 0.01;
    let angle_ok = (r.best_angles[0] - BREIDBART).abs() <= step + 1e-12;
    let mc = estimate_locc(&StrategyDescriptor::Breidbart, 1, 100_000, SEED)?;
    let mc_ok = mc.contains(r.value);
    Ok((
        value_ok && angle_ok && mc_ok,
        vec![
            format!("grid {grid}: best value {:.6} vs cos²(π/8) {:.6} [{}]", r.value, breidbart_rate(), mark(value_ok)),
            format!("argmax {:.5} vs π/8 = {:.5}, step {step:.5} [{}]", r.best_angles[0], BREIDBART, mark(angle_ok)),
            format!(
                "breidbart Monte-Carlo {:.5}, CI [{:.5}, {:.5}] [{}]",
                mc.p_hat,
                mc.ci_low,
                mc.ci_high,
                mark(mc_ok)
            ),
        ],
    ))
}

struct NetRun {
    accepted: bool,
    session_ms: f64,
    transcript: Vec<u8>,
}

fn networked_session() -> Result<NetRun, HarnessError> {
    let io = |e: std::io::Error| HarnessError::Protocol(e.to_string());
    let bin = env!("CARGO_BIN_EXE_poqm");
    let dir = std::env::temp_dir().join(format!("poqm-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(io)?;
    let report = dir.join("verifier.json");
    let mut verifier = Command::new(bin)
        .args(["verifier", "--protocol", "bb84-it", "--n", "8", "--hold-ms", "2000", "--seed", "17", "--out"])
        .arg(&report)
        .stderr(Stdio::piped())
        .spawn()
        .map_err(io)?;
    let mut line = String::new();
    BufReader::new(verifier.stderr.as_mut().expect("piped"))
        .read_line(&mut line)
        .map_err(io)?;
    let addr = line
        .trim()
        .strip_prefix("listening on ")
        .ok_or_else(|| HarnessError::Protocol(format!("unexpected verifier output {line:?}")))?
        .to_string();
    let prover = Command::new(bin)
        .args(["prover", "--protocol", "bb84-it", "--n", "8", "--seed", "17", "--connect", &addr])
        .output()
        .map_err(io)?;
    let status = verifier.wait().map_err(io)?;
    let r = decode(&std::fs::read(&report).map_err(io)?)
        .map_err(|e| HarnessError::Protocol(e.to_string()))?;
    let _ = std::fs::remove_dir_all(&dir);
    let session = &r.details[0];
    Ok(NetRun {
        accepted: status.success() && prover.status.success() && session["verdict"]["accepted"] == true,
        session_ms: session["session_ms"].as_f64().unwrap_or(0.0),
        transcript: serde_json::to_vec(&session["transcript"]).expect("json"),
    })
}

fn networked() -> Outcome {
    let a = networked_session()?;
    let b = networked_session()?;
    let identical = a.transcript == b.transcript;
    let pass = a.accepted && b.accepted && a.session_ms >= 2000.0 && b.session_ms >= 2000.0 && identical;
    Ok((
        pass,
        vec![
            format!("run 1: accepted {}, session {:.0} ms", a.accepted, a.session_ms),
            format!("run 2: accepted {}, session {:.0} ms", b.accepted, b.session_ms),
            format!("transcripts byte-identical: {identical} ({} bytes)", a.transcript.len()),
        ],
    ))
}

fn main() {
    let s = Duration::from_secs;
    let results = [
        criterion(1, "honest completeness", s(30), honest_completeness),
        criterion(2, "leakage bound over the strategy zoo", s(60), locc_bound_zoo),
        criterion(3, "measurement insertion loses at most 1/k", s(30), measurement_insertion),
        criterion(4, "amplification by measuring memory", s(10), amplification),
        criterion(5, "hybrid chain", s(120), hybrid_chain),
        criterion(6, "two-prover squaring", s(60), jensen),
        criterion(7, "state puzzle", s(30), statepuzz),
        criterion(8, "key exchange", s(30), key_exchange),
        criterion(9, "brute-force oracle", s(60), brute_force),
        criterion(10, "networked session", s(15), networked),
    ];
    let passed = results.iter().filter(|r| **r).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
