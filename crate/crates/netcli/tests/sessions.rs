use std::net::{TcpListener, TcpStream};
use std::thread;
use std::time::Duration;

use poqm::protocol::ProtocolParams;
use poqm_netcli::frame::{read_frame, write_frame, ErrorPayload, Frame, FrameType, Hello};
use poqm_netcli::protocols::ProtocolChoice;
use poqm_netcli::session::{
    run_prover, serve, ProverConfig, ProverOutcome, SessionError, SessionReport, VerifierConfig,
};

fn verifier(protocol: ProtocolChoice, params: ProtocolParams, hold_ms: u64, seed: u64) -> VerifierConfig {
    VerifierConfig {
        protocol,
        params,
        fail_prob: 0.0,
        hold_ms,
        seed,
        io_timeout: Duration::from_secs(10),
    }
}

fn prover(cfg: &VerifierConfig, session: u64) -> ProverConfig {
    ProverConfig {
        protocol: cfg.protocol,
        params: cfg.params.clone(),
        seed: cfg.seed,
        session,
        depolarize: 0.0,
        io_timeout: Duration::from_secs(10),
        answer_early: false,
    }
}

/// Serves `provers.len()` sessions and runs each prover on its own thread.
fn run(
    cfg: &VerifierConfig,
    provers: Vec<ProverConfig>,
) -> (Vec<SessionReport>, Vec<Result<ProverOutcome, SessionError>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let sessions = provers.len() as u64;
    let server = {
        let cfg = cfg.clone();
        thread::spawn(move || serve(&listener, &cfg, sessions).unwrap())
    };
    let clients: Vec<_> = provers
        .into_iter()
        .map(|p| {
            // connect in order so accept order matches the session index
            let stream = TcpStream::connect(addr).unwrap();
            thread::spawn(move || run_prover(stream, &p))
        })
        .collect();
    let outcomes = clients.into_iter().map(|c| c.join().unwrap()).collect();
    (server.join().unwrap(), outcomes)
}

#[test]
fn honest_sessions_accept_every_protocol() {
    for (protocol, params) in [
        (ProtocolChoice::Bb84It, ProtocolParams::new(8)),
        (ProtocolChoice::Bb84Rsp, ProtocolParams::new(19)),
        (ProtocolChoice::Puzzle, ProtocolParams::new(8).with_k(2)),
    ] {
        let cfg = verifier(protocol, params, 0, 11);
        let (reports, outcomes) = run(&cfg, vec![prover(&cfg, 0)]);
        assert!(reports[0].verdict.accepted, "{protocol:?}: {:?}", reports[0].verdict);
        let out = outcomes.into_iter().next().unwrap().unwrap();
        assert!(out.verdict.accepted);
        assert_eq!(out.transcript, reports[0].transcript);
    }
}

#[test]
fn hold_is_enforced() {
    let cfg = verifier(ProtocolChoice::Bb84It, ProtocolParams::new(6), 300, 2);
    let (reports, outcomes) = run(&cfg, vec![prover(&cfg, 0)]);
    let r = &reports[0];
    assert!(r.verdict.accepted);
    assert!(r.hold_enforced_ms.unwrap() >= 300.0);
    let phase_done = r
        .frames
        .iter()
        .find(|f| f.sent && f.frame_type == FrameType::PhaseDone as u8)
        .unwrap();
    let challenge = r
        .frames
        .iter()
        .find(|f| f.sent && f.frame_type == FrameType::Challenge as u8)
        .unwrap();
    assert!(challenge.at_ms - phase_done.at_ms >= 300.0);
    assert!(outcomes[0].as_ref().unwrap().hold_observed_ms.unwrap() >= 290.0);
}

#[test]
fn transcripts_are_deterministic() {
    let cfg = verifier(ProtocolChoice::Bb84It, ProtocolParams::new(8), 0, 42);
    let (a, _) = run(&cfg, vec![prover(&cfg, 0)]);
    let (b, _) = run(&cfg, vec![prover(&cfg, 0)]);
    assert_eq!(
        serde_json::to_vec(&a[0].transcript).unwrap(),
        serde_json::to_vec(&b[0].transcript).unwrap()
    );
    let other = verifier(ProtocolChoice::Bb84It, ProtocolParams::new(8), 0, 43);
    let (c, _) = run(&other, vec![prover(&other, 0)]);
    assert_ne!(a[0].transcript, c[0].transcript);
}

#[test]
fn early_answer_gets_error_frame() {
    let cfg = verifier(ProtocolChoice::Bb84It, ProtocolParams::new(4), 200, 3);
    let mut p = prover(&cfg, 0);
    p.answer_early = true;
    let (reports, outcomes) = run(&cfg, vec![p]);
    let r = &reports[0];
    assert!(!r.verdict.accepted);
    assert!(r.verdict.detail.as_ref().unwrap().contains("before the challenge"));
    assert!(r
        .frames
        .iter()
        .any(|f| f.sent && f.frame_type == FrameType::Error as u8));
    assert!(!r
        .frames
        .iter()
        .any(|f| f.sent && f.frame_type == FrameType::Challenge as u8));
    assert!(!outcomes[0].as_ref().unwrap().verdict.accepted);
}

#[test]
fn concurrent_sessions_are_independent() {
    let cfg = verifier(ProtocolChoice::Bb84It, ProtocolParams::new(8), 200, 9);
    let (reports, outcomes) = run(&cfg, vec![prover(&cfg, 0), prover(&cfg, 1)]);
    assert_eq!(reports.len(), 2);
    for (r, o) in reports.iter().zip(&outcomes) {
        assert!(r.verdict.accepted);
        assert_eq!(&o.as_ref().unwrap().transcript, &r.transcript);
    }
    assert_eq!(reports[0].session, 0);
    assert_eq!(reports[1].session, 1);
    assert_ne!(reports[0].transcript, reports[1].transcript);
}

#[test]
fn parameter_mismatch_is_refused() {
    let cfg = verifier(ProtocolChoice::Bb84It, ProtocolParams::new(8), 0, 1);
    let mut p = prover(&cfg, 0);
    p.params = ProtocolParams::new(9);
    let (reports, outcomes) = run(&cfg, vec![p]);
    assert!(!reports[0].verdict.accepted);
    assert!(reports[0].verdict.detail.as_ref().unwrap().contains("mismatch"));
    assert!(matches!(outcomes[0], Err(SessionError::Peer(_))));
}

#[test]
fn silent_prover_times_out() {
    let mut cfg = verifier(ProtocolChoice::Bb84It, ProtocolParams::new(4), 0, 1);
    cfg.io_timeout = Duration::from_millis(200);
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let server = thread::spawn(move || serve(&listener, &cfg, 1).unwrap());
    let mut stream = TcpStream::connect(addr).unwrap();
    let reports = server.join().unwrap();
    assert!(!reports[0].verdict.accepted);
    assert_eq!(reports[0].verdict.detail.as_deref(), Some("timeout"));
    let f = read_frame(&mut stream).unwrap();
    assert_eq!(f.ty, FrameType::Error);
    let e: ErrorPayload = f.parse().unwrap();
    assert_eq!(e.error, "timeout");
}

#[test]
fn wrong_first_frame_is_refused() {
    let cfg = verifier(ProtocolChoice::Bb84It, ProtocolParams::new(4), 0, 1);
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let server = thread::spawn(move || serve(&listener, &cfg, 1).unwrap());
    let mut stream = TcpStream::connect(addr).unwrap();
    write_frame(
        &mut stream,
        &Frame::new(
            FrameType::Answer,
            &Hello {
                protocol: "bb84-it".into(),
                params: ProtocolParams::new(4),
            },
        ),
    )
    .unwrap();
    let reports = server.join().unwrap();
    assert!(!reports[0].verdict.accepted);
    assert_eq!(read_frame(&mut stream).unwrap().ty, FrameType::Error);
    assert_eq!(read_frame(&mut stream).unwrap().ty, FrameType::Verdict);
}
