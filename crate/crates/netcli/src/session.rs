//! One PoQM session over a byte stream, verifier and prover side.
//!
//! Frame sequence: `HELLO` both ways, then for every initialization
//! message an optional `QSTATE_ENVELOPE` followed by `INIT_MSG` (and the
//! prover's `INIT_MSG` reply when one is expected), `PHASE_DONE`, the hold,
//! `CHALLENGE` / `ANSWER` pairs, and `VERDICT`. Any frame the prover sends
//! between `PHASE_DONE` and the first `CHALLENGE` is answered with `ERROR`
//! and the session is rejected.

use std::io;
use std::net::{TcpListener, TcpStream};
use std::thread;
use std::time::{Duration, Instant};

use poqm::coin::trial_rng;
use poqm::protocol::{
    apply_hold, Abort, ExecStep, Hold, HarnessError, InitStep, Outgoing, ProtocolParams, Role,
};
use poqm::qsim::QReg;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::frame::{
    read_frame, write_frame, ErrorPayload, Frame, FrameError, FrameType, Hello, Message,
    VerdictPayload,
};
use crate::protocols::ProtocolChoice;

#[derive(Debug, Clone)]
pub struct VerifierConfig {
    pub protocol: ProtocolChoice,
    pub params: ProtocolParams,
    pub fail_prob: f64,
    pub hold_ms: u64,
    pub seed: u64,
    pub io_timeout: Duration,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub role: Role,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameLog {
    pub sent: bool,
    pub frame_type: u8,
    pub at_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub session: u64,
    pub protocol: String,
    pub params: ProtocolParams,
    pub seed: u64,
    pub verdict: VerdictPayload,
    pub transcript: Vec<TranscriptEntry>,
    /// Time between sending `PHASE_DONE` and sending the first `CHALLENGE`.
    pub hold_enforced_ms: Option<f64>,
    pub session_ms: f64,
    pub frames: Vec<FrameLog>,
}

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error("peer reported an error: {0}")]
    Peer(String),
    #[error("unexpected {got:?} frame, wanted {want}")]
    Unexpected { got: FrameType, want: &'static str },
    #[error("{0}")]
    Violation(String),
}

impl From<io::Error> for SessionError {
    fn from(e: io::Error) -> Self {
        SessionError::Frame(FrameError::Io(e))
    }
}

struct Channel {
    stream: TcpStream,
    start: Instant,
    log: Vec<FrameLog>,
}

impl Channel {
    fn new(stream: TcpStream, timeout: Duration) -> io::Result<Self> {
        stream.set_read_timeout(Some(timeout))?;
        stream.set_nodelay(true)?;
        Ok(Channel {
            stream,
            start: Instant::now(),
            log: Vec::new(),
        })
    }

    fn now_ms(&self) -> f64 {
        self.start.elapsed().as_secs_f64() * 1e3
    }

    fn send(&mut self, frame: Frame) -> Result<f64, SessionError> {
        write_frame(&mut self.stream, &frame)?;
        let at_ms = self.now_ms();
        self.log.push(FrameLog {
            sent: true,
            frame_type: frame.ty as u8,
            at_ms,
        });
        Ok(at_ms)
    }

    fn recv(&mut self) -> Result<Frame, SessionError> {
        let frame = read_frame(&mut self.stream)?;
        let at_ms = self.now_ms();
        self.log.push(FrameLog {
            sent: false,
            frame_type: frame.ty as u8,
            at_ms,
        });
        if frame.ty == FrameType::Error {
            let e: ErrorPayload = frame.parse()?;
            return Err(SessionError::Peer(e.error));
        }
        Ok(frame)
    }

    fn recv_type(&mut self, want: FrameType, name: &'static str) -> Result<Frame, SessionError> {
        let f = self.recv()?;
        if f.ty != want {
            return Err(SessionError::Unexpected { got: f.ty, want: name });
        }
        Ok(f)
    }

    fn send_error(&mut self, error: impl Into<String>) {
        let _ = self.send(Frame::new(FrameType::Error, &ErrorPayload { error: error.into() }));
    }

    /// Waits until `deadline`, failing if the peer sends anything first.
    fn quiet_until(&mut self, deadline: Instant) -> Result<(), SessionError> {
        let mut probe = [0u8; 1];
        loop {
            let now = Instant::now();
            let result = if now >= deadline {
                self.stream.set_nonblocking(true)?;
                let r = self.stream.peek(&mut probe);
                self.stream.set_nonblocking(false)?;
                r
            } else {
                self.stream.set_read_timeout(Some(deadline - now))?;
                self.stream.peek(&mut probe)
            };
            match result {
                Ok(0) => return Err(FrameError::Closed.into()),
                Ok(_) => {
                    let early = read_frame(&mut self.stream)?;
                    return Err(SessionError::Violation(format!(
                        "protocol violation: prover sent {:?} before the challenge",
                        early.ty
                    )));
                }
                Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {
                    if Instant::now() >= deadline {
                        return Ok(());
                    }
                }
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => return Err(FrameError::Io(e).into()),
            }
        }
    }
}

fn text(bytes: &[u8]) -> Result<String, SessionError> {
    String::from_utf8(bytes.to_vec())
        .map_err(|_| SessionError::Violation("protocol message is not UTF-8".into()))
}

fn send_outgoing(
    ch: &mut Channel,
    ty: FrameType,
    out: &Outgoing,
    transcript: &mut Vec<TranscriptEntry>,
) -> Result<f64, SessionError> {
    if let Some(reg) = &out.handoff {
        ch.send(Frame::new(FrameType::QstateEnvelope, &json!({ "register": reg })))?;
    }
    let message = text(&out.message)?;
    transcript.push(TranscriptEntry {
        role: Role::Verifier,
        message: message.clone(),
    });
    ch.send(Frame::new(
        ty,
        &Message {
            message,
            expects_reply: out.expects_reply,
        },
    ))
}

fn recv_reply(
    ch: &mut Channel,
    ty: FrameType,
    name: &'static str,
    transcript: &mut Vec<TranscriptEntry>,
) -> Result<Vec<u8>, SessionError> {
    let m: Message = ch.recv_type(ty, name)?.parse()?;
    transcript.push(TranscriptEntry {
        role: Role::Prover,
        message: m.message.clone(),
    });
    Ok(m.message.into_bytes())
}

struct VerifierRun {
    verdict: VerdictPayload,
    hold_enforced_ms: Option<f64>,
}

fn verifier_steps(
    ch: &mut Channel,
    cfg: &VerifierConfig,
    index: u64,
    transcript: &mut Vec<TranscriptEntry>,
) -> Result<VerifierRun, SessionError> {
    let hello: Hello = ch.recv_type(FrameType::Hello, "HELLO")?.parse()?;
    if hello.protocol != cfg.protocol.name()
        || hello.params.n != cfg.params.n
        || hello.params.k != cfg.params.k
    {
        return Err(SessionError::Violation(format!(
            "parameter mismatch: prover offered {} n={} k={:?}, verifier runs {} n={} k={:?}",
            hello.protocol,
            hello.params.n,
            hello.params.k,
            cfg.protocol.name(),
            cfg.params.n,
            cfg.params.k
        )));
    }
    ch.send(Frame::new(
        FrameType::Hello,
        &Hello {
            protocol: cfg.protocol.name().into(),
            params: cfg.params.clone(),
        },
    ))?;

    let proto = cfg.protocol.poqm(cfg.fail_prob);
    proto.check_params(&cfg.params)?;
    let mut coin = trial_rng(cfg.seed, index);
    let reject = |why: String| VerifierRun {
        verdict: VerdictPayload {
            accepted: false,
            detail: Some(why),
        },
        hold_enforced_ms: None,
    };

    let mut init = proto.init_verifier(&cfg.params);
    let mut reply: Option<Vec<u8>> = None;
    let v = loop {
        match init.step(reply.as_deref(), &mut coin) {
            Err(Abort(why)) => return Ok(reject(why)),
            Ok(InitStep::Done(v)) => break v,
            Ok(InitStep::Send(out)) => {
                send_outgoing(ch, FrameType::InitMsg, &out, transcript)?;
                reply = if out.expects_reply {
                    Some(recv_reply(ch, FrameType::InitMsg, "INIT_MSG", transcript)?)
                } else {
                    None
                };
            }
        }
    };
    let phase_done_at = ch.send(Frame::new(FrameType::PhaseDone, &json!({})))?;
    let deadline = Instant::now() + Duration::from_millis(cfg.hold_ms);
    ch.quiet_until(deadline)?;
    ch.stream.set_read_timeout(Some(cfg.io_timeout))?;

    let mut exec = proto.exec_verifier(&cfg.params, &v)?;
    let mut reply: Option<Vec<u8>> = None;
    let mut hold_enforced_ms = None;
    loop {
        match exec.step(reply.as_deref(), &mut coin) {
            Err(Abort(why)) => return Ok(reject(why)),
            Ok(ExecStep::Decide(verdict)) => {
                return Ok(VerifierRun {
                    verdict: VerdictPayload {
                        accepted: verdict.accepted,
                        detail: Some(verdict.detail),
                    },
                    hold_enforced_ms,
                })
            }
            Ok(ExecStep::Send(out)) => {
                let at = send_outgoing(ch, FrameType::Challenge, &out, transcript)?;
                hold_enforced_ms.get_or_insert(at - phase_done_at);
                reply = if out.expects_reply {
                    Some(recv_reply(ch, FrameType::Answer, "ANSWER", transcript)?)
                } else {
                    None
                };
            }
        }
    }
}

/// Runs the verifier side of one session and reports it. Failures of the
/// peer end the session with ⊥; they are not errors of the verifier.
pub fn serve_session(stream: TcpStream, cfg: &VerifierConfig, index: u64) -> SessionReport {
    let mut transcript = Vec::new();
    let (run, mut ch) = match Channel::new(stream, cfg.io_timeout) {
        Err(e) => {
            return SessionReport {
                session: index,
                protocol: cfg.protocol.name().into(),
                params: cfg.params.clone(),
                seed: cfg.seed,
                verdict: VerdictPayload {
                    accepted: false,
                    detail: Some(format!("socket setup failed: {e}")),
                },
                transcript,
                hold_enforced_ms: None,
                session_ms: 0.0,
                frames: Vec::new(),
            }
        }
        Ok(mut ch) => (verifier_steps(&mut ch, cfg, index, &mut transcript), ch),
    };
    let run = match run {
        Ok(run) => run,
        Err(e) => {
            let why = match &e {
                SessionError::Frame(FrameError::Io(io))
                    if matches!(io.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) =>
                {
                    "timeout".to_string()
                }
                other => other.to_string(),
            };
            if !matches!(e, SessionError::Peer(_)) {
                ch.send_error(why.clone());
            }
            VerifierRun {
                verdict: VerdictPayload {
                    accepted: false,
                    detail: Some(why),
                },
                hold_enforced_ms: None,
            }
        }
    };
    let _ = ch.send(Frame::new(FrameType::Verdict, &run.verdict));
    SessionReport {
        session: index,
        protocol: cfg.protocol.name().into(),
        params: cfg.params.clone(),
        seed: cfg.seed,
        verdict: run.verdict,
        transcript,
        hold_enforced_ms: run.hold_enforced_ms,
        session_ms: ch.now_ms(),
        frames: ch.log,
    }
}

/// Accepts `sessions` connections and serves each on its own thread.
pub fn serve(listener: &TcpListener, cfg: &VerifierConfig, sessions: u64) -> io::Result<Vec<SessionReport>> {
    let mut handles = Vec::new();
    for index in 0..sessions {
        let (stream, _) = listener.accept()?;
        let cfg = cfg.clone();
        handles.push(thread::spawn(move || serve_session(stream, &cfg, index)));
    }
    Ok(handles
        .into_iter()
        .map(|h| h.join().expect("session thread"))
        .collect())
}

#[derive(Debug, Clone)]
pub struct ProverConfig {
    pub protocol: ProtocolChoice,
    pub params: ProtocolParams,
    pub seed: u64,
    pub session: u64,
    /// Per-qubit depolarization of the register during the hold.
    pub depolarize: f64,
    pub io_timeout: Duration,
    /// Sends an unsolicited `ANSWER` right after `PHASE_DONE`.
    pub answer_early: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProverOutcome {
    pub verdict: VerdictPayload,
    pub transcript: Vec<TranscriptEntry>,
    /// Time between receiving `PHASE_DONE` and receiving the challenge.
    pub hold_observed_ms: Option<f64>,
    pub session_ms: f64,
}

/// Runs the honest prover of `cfg.protocol` against a verifier.
pub fn run_prover(stream: TcpStream, cfg: &ProverConfig) -> Result<ProverOutcome, SessionError> {
    let mut ch = Channel::new(stream, cfg.io_timeout)?;
    let mut transcript = Vec::new();
    let prover = cfg.protocol.honest_prover();
    let mut coin = trial_rng(cfg.seed, cfg.session);
    ch.send(Frame::new(
        FrameType::Hello,
        &Hello {
            protocol: cfg.protocol.name().into(),
            params: cfg.params.clone(),
        },
    ))?;
    ch.recv_type(FrameType::Hello, "HELLO")?;

    let mut init = prover.init_phase(&cfg.params);
    let mut handoff: Option<QReg> = None;
    let phase_done_at = loop {
        let f = ch.recv()?;
        match f.ty {
            FrameType::QstateEnvelope => {
                #[derive(Deserialize)]
                struct Envelope {
                    register: QReg,
                }
                handoff = Some(f.parse::<Envelope>()?.register);
            }
            FrameType::InitMsg => {
                let m: Message = f.parse()?;
                transcript.push(TranscriptEntry {
                    role: Role::Verifier,
                    message: m.message.clone(),
                });
                for r in init.on_message(m.message.as_bytes(), handoff.take(), &mut coin)? {
                    let message = text(&r)?;
                    transcript.push(TranscriptEntry {
                        role: Role::Prover,
                        message: message.clone(),
                    });
                    ch.send(Frame::new(
                        FrameType::InitMsg,
                        &Message {
                            message,
                            expects_reply: false,
                        },
                    ))?;
                }
            }
            FrameType::PhaseDone => break ch.now_ms(),
            FrameType::Verdict => {
                return Ok(ProverOutcome {
                    verdict: f.parse()?,
                    transcript,
                    hold_observed_ms: None,
                    session_ms: ch.now_ms(),
                })
            }
            other => {
                return Err(SessionError::Unexpected {
                    got: other,
                    want: "an initialization frame",
                })
            }
        }
    };
    let mut memory = init.finish(&mut coin)?;
    apply_hold(
        Some(Hold {
            duration_ms: 0,
            depolarize: cfg.depolarize,
        }),
        &mut memory,
        &mut coin,
    )?;
    if cfg.answer_early {
        ch.send(Frame::new(
            FrameType::Answer,
            &Message {
                message: String::new(),
                expects_reply: false,
            },
        ))?;
    }

    let mut exec = prover.exec_phase(&cfg.params, memory);
    let mut hold_observed_ms = None;
    loop {
        let f = match ch.recv() {
            Ok(f) => f,
            Err(SessionError::Peer(e)) => {
                // the verdict follows the error frame
                let verdict = ch.recv_type(FrameType::Verdict, "VERDICT").ok();
                return match verdict {
                    Some(v) => Ok(ProverOutcome {
                        verdict: v.parse()?,
                        transcript,
                        hold_observed_ms,
                        session_ms: ch.now_ms(),
                    }),
                    None => Err(SessionError::Peer(e)),
                };
            }
            Err(e) => return Err(e),
        };
        match f.ty {
            FrameType::Challenge => {
                hold_observed_ms.get_or_insert(ch.now_ms() - phase_done_at);
                let m: Message = f.parse()?;
                transcript.push(TranscriptEntry {
                    role: Role::Verifier,
                    message: m.message.clone(),
                });
                for r in exec.on_message(m.message.as_bytes(), &mut coin)? {
                    let message = text(&r)?;
                    transcript.push(TranscriptEntry {
                        role: Role::Prover,
                        message: message.clone(),
                    });
                    ch.send(Frame::new(
                        FrameType::Answer,
                        &Message {
                            message,
                            expects_reply: false,
                        },
                    ))?;
                }
            }
            FrameType::Verdict => {
                return Ok(ProverOutcome {
                    verdict: f.parse()?,
                    transcript,
                    hold_observed_ms,
                    session_ms: ch.now_ms(),
                })
            }
            other => {
                return Err(SessionError::Unexpected {
                    got: other,
                    want: "CHALLENGE or VERDICT",
                })
            }
        }
    }
}
