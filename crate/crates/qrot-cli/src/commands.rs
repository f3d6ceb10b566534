use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::net::TcpListener;
use std::path::Path;
use std::time::Duration;

use qrot::bitcore::SessionRng;
use qrot::bounds::eps_max_strict;
use qrot::protocol::{
    party_rngs, run_party, run_session, AbortReason, Direction, Party, Phase, Receiver, ReceiverHooks, Sender,
    SenderHooks, SessionConfig, SessionOptions, SessionResult, Transcript,
};
use qrot::qsim::run_quantum_phase;
use qrot::rates::{
    fig2_csv, fig3_csv, fig4_csv, n_crit, ot_table, CritConfig, Fig2Config, Fig3Config, Fig4Config, Grid,
    SourcePoint,
};
use qrot::wire::TcpTransport;
use serde::Serialize;

use crate::args::{env_seed, BoundsArgs, ParamArgs, Figure, FiguresArgs, OptimizeArgs, RoleArgs, RoleName, SimulateArgs};

/// Exit status and message of a failed command.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

pub const EXIT_INVALID: i32 = 3;
pub const EXIT_IO: i32 = 4;
pub const EXIT_CONNECT: i32 = 5;
/// Aborted sessions exit with this plus the abort code.
pub const EXIT_ABORT_BASE: i32 = 10;

impl Failure {
    fn invalid(e: impl std::fmt::Display) -> Self {
        Self { code: EXIT_INVALID, message: e.to_string() }
    }

    fn io(e: impl std::fmt::Display) -> Self {
        Self { code: EXIT_IO, message: e.to_string() }
    }

    fn abort(reason: AbortReason, by_peer: bool) -> Self {
        let who = if by_peer { "peer aborted" } else { "aborted" };
        Self { code: EXIT_ABORT_BASE + reason.code() as i32, message: format!("session {who}: {reason}") }
    }
}

pub type CmdResult = Result<String, Failure>;

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("plain data serializes") + "\n"
}

pub fn bounds(a: &BoundsArgs) -> CmdResult {
    let params = a.params.params();
    params.validate().map_err(Failure::invalid)?;
    let report = eps_max_strict(&params, a.experimental, a.tag_bits).map_err(Failure::invalid)?;
    if a.json {
        #[derive(Serialize)]
        struct Out<'a> {
            params: &'a qrot::bounds::ProtocolParams,
            n_test: u64,
            n_check: u64,
            n_raw: u64,
            tag_bits: u64,
            dominant: &'static str,
            report: &'a qrot::bounds::BoundReport,
            flags: String,
        }
        return Ok(json(&Out {
            params: &params,
            n_test: params.n_test(),
            n_check: params.n_check(),
            n_raw: params.n_raw(),
            tag_bits: a.tag_bits,
            dominant: report.dominant().name(),
            report: &report,
            flags: ParamArgs::to_flags(&params).join(" "),
        }));
    }
    let mut s = String::new();
    let _ = writeln!(s, "n_test={}\nn_check={}\nn_raw={}", params.n_test(), params.n_check(), params.n_raw());
    s.push_str(&report.to_kv());
    let _ = writeln!(s, "dominant={}", report.dominant().name());
    let _ = writeln!(s, "flags={}", ParamArgs::to_flags(&params).join(" "));
    Ok(s)
}

fn grid(steps: Option<usize>) -> Grid {
    steps.map_or_else(Grid::default, Grid::coarse)
}

fn read_sources(path: &Path) -> Result<Vec<SourcePoint>, Failure> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
    reader
        .deserialize()
        .collect::<Result<Vec<SourcePoint>, _>>()
        .map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))
}

pub fn figures(a: &FiguresArgs) -> CmdResult {
    let csv = match a.figure {
        Figure::Fig2 => fig2_csv(&Fig2Config::default()),
        Figure::Fig3 => fig3_csv(&Fig3Config::default()),
        Figure::Fig4 => fig4_csv(&Fig4Config { grid: grid(a.grid_steps), ..Fig4Config::default() }),
        Figure::OtTable => {
            let path = a.sources.as_deref().ok_or_else(|| Failure::invalid("ot-table needs --sources"))?;
            let points = read_sources(path)?;
            let base = Fig4Config::default().base;
            let rows = ot_table(&points, &CritConfig { n_target: 1, ..base }, &grid(a.grid_steps))
                .map_err(Failure::invalid)?;
            let mut out = String::from("pump_power,coincidence_rate,qber,n_crit,r_ot\n");
            for r in rows {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{}",
                    qrot::rates::csv_float(r.source.pump_power),
                    qrot::rates::csv_float(r.source.coincidence_rate),
                    qrot::rates::csv_float(r.source.qber),
                    r.n_crit.map_or(String::new(), |n| n.to_string()),
                    qrot::rates::csv_float(r.r_ot)
                );
            }
            Ok(out)
        }
    }
    .map_err(Failure::invalid)?;
    match &a.out {
        Some(path) => {
            std::fs::write(path, &csv).map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
            Ok(String::new())
        }
        None => Ok(csv),
    }
}

pub fn optimize(a: &OptimizeArgs) -> CmdResult {
    let config = CritConfig {
        eps_target: a.eps_target,
        p_max: a.p_max,
        f: a.f,
        p_multi: a.p_multi,
        n_target: a.n,
        eps_ir: a.eps_ir,
        eps_bind: a.eps_bind,
    };
    let grid = Grid { refine: !a.no_refine, ..Grid::coarse(a.grid_steps) };
    let r = n_crit(&config, &grid).map_err(Failure::invalid)?;
    if a.json {
        return Ok(json(&r));
    }
    Ok(format!(
        "n_crit={}\nalpha={}\ndelta1={}\ndelta2={}\neps_max={:.6e}\n",
        r.n_crit, r.alpha, r.delta1, r.delta2, r.eps_max
    ))
}

#[derive(Debug, Serialize)]
pub struct SimulateSummary {
    pub sessions: usize,
    pub successes: usize,
    pub success_rate: f64,
    /// Successful sessions whose receiver output disagrees with the sender.
    pub mismatches: usize,
    pub aborts: BTreeMap<String, usize>,
    /// Mean test-set error estimate over sessions that reached the check.
    pub mean_qber: Option<f64>,
    /// Chi-square of the choice bit against uniform, one degree of freedom.
    pub chi2_choice: f64,
    /// Chi-square of every output bit position, `2n` degrees of freedom.
    pub chi2_bits: f64,
    pub chi2_bits_dof: usize,
}

fn chi2_binary(ones: usize, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let n = total as f64;
    (ones as f64 - n / 2.0).powi(2) / (n / 4.0)
}

pub fn summarize(results: &[SessionResult], n_bits: usize) -> SimulateSummary {
    let ok: Vec<_> = results.iter().filter_map(SessionResult::rot).collect();
    let mut aborts = BTreeMap::new();
    for r in results {
        if let Some(reason) = r.abort_reason() {
            *aborts.entry(reason.name().to_string()).or_insert(0) += 1;
        }
    }
    let qbers: Vec<f64> = results.iter().filter_map(|r| r.sender_stats).filter(|s| s.checked > 0).map(|s| s.p_estimate).collect();
    let mut ones = vec![0usize; 2 * n_bits];
    for (s, _) in &ok {
        for i in 0..n_bits.min(s.m0.len()) {
            ones[i] += s.m0.bit(i) as usize;
            ones[n_bits + i] += s.m1.bit(i) as usize;
        }
    }
    SimulateSummary {
        sessions: results.len(),
        successes: ok.len(),
        success_rate: if results.is_empty() { 0.0 } else { ok.len() as f64 / results.len() as f64 },
        mismatches: results.iter().filter(|r| r.rot().is_some() && !r.is_correct()).count(),
        aborts,
        mean_qber: (!qbers.is_empty()).then(|| qbers.iter().sum::<f64>() / qbers.len() as f64),
        chi2_choice: chi2_binary(ok.iter().filter(|(_, b)| b.c).count(), ok.len()),
        chi2_bits: ones.iter().map(|&k| chi2_binary(k, ok.len())).sum(),
        chi2_bits_dof: 2 * n_bits,
    }
}

pub fn simulate(a: &SimulateArgs) -> CmdResult {
    let config = a.session.config();
    config.validate().map_err(Failure::invalid)?;
    let seed = env_seed().map_err(Failure::invalid)?.unwrap_or(a.seed);
    a.source.model(seed).validate().map_err(Failure::invalid)?;
    if a.sessions == 0 {
        return Err(Failure::invalid("--sessions must be positive"));
    }
    let workers = a
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .clamp(1, a.sessions);
    let indices: Vec<u64> = (0..a.sessions as u64).collect();
    let chunk = indices.len().div_ceil(workers);
    let results: Result<Vec<SessionResult>, qrot::Error> = std::thread::scope(|s| {
        let handles: Vec<_> = indices
            .chunks(chunk)
            .map(|part| {
                s.spawn(move || {
                    part.iter()
                        .map(|&i| {
                            let session_seed = seed.wrapping_add(i);
                            run_session(config, &a.source.model(session_seed), session_seed, SessionOptions::default())
                        })
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        // chunks are joined in order, so results stay in session order
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    });
    let results = results.map_err(Failure::invalid)?;
    let summary = summarize(&results, config.params.n as usize);
    if a.json {
        return Ok(json(&summary));
    }
    let mut s = String::new();
    let _ = writeln!(s, "sessions={}", summary.sessions);
    let _ = writeln!(s, "successes={}", summary.successes);
    let _ = writeln!(s, "success_rate={:.4}", summary.success_rate);
    let _ = writeln!(s, "mismatches={}", summary.mismatches);
    for (k, v) in &summary.aborts {
        let _ = writeln!(s, "abort.{k}={v}");
    }
    let _ = writeln!(s, "mean_qber={}", summary.mean_qber.map_or("n/a".into(), |q| format!("{q:.6}")));
    let _ = writeln!(s, "chi2_choice={:.4}", summary.chi2_choice);
    let _ = writeln!(s, "chi2_bits={:.4} (dof {})", summary.chi2_bits, summary.chi2_bits_dof);
    Ok(s)
}

#[derive(Debug, Serialize)]
struct TranscriptSummary {
    frames_sent: usize,
    frames_received: usize,
    bytes_sent: usize,
    bytes_received: usize,
    leak_bits: usize,
}

impl TranscriptSummary {
    fn new(t: &Transcript) -> Self {
        let count = |d| t.entries.iter().filter(|e| e.direction == d).count();
        Self {
            frames_sent: count(Direction::Sent),
            frames_received: count(Direction::Received),
            bytes_sent: t.bytes(Direction::Sent),
            bytes_received: t.bytes(Direction::Received),
            leak_bits: t.leak_bits(Direction::Sent) + t.leak_bits(Direction::Received),
        }
    }
}

#[derive(Debug, Serialize)]
struct RoleOutput {
    role: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    m0: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    m1: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    c: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    m: Option<String>,
    transcript: TranscriptSummary,
}

fn party_rng(seed: Option<u64>, role: RoleName) -> SessionRng {
    match seed {
        Some(s) => {
            let (a, b) = party_rngs(s);
            if role == RoleName::Alice {
                a
            } else {
                b
            }
        }
        None => SessionRng::from_os(),
    }
}

fn finished(phase: Phase) -> Result<(), Failure> {
    match phase {
        Phase::Done => Ok(()),
        Phase::Aborted { reason, by_peer } => Err(Failure::abort(reason, by_peer)),
        other => Err(Failure::invalid(format!("session stopped in phase {other:?}"))),
    }
}

pub fn role(a: &RoleArgs) -> CmdResult {
    let config: SessionConfig = a.session.config();
    config.validate().map_err(Failure::invalid)?;
    let seed = match env_seed().map_err(Failure::invalid)? {
        Some(s) => Some(s),
        None => a.seed,
    };
    let quantum = run_quantum_phase(&a.source.model(a.source_seed), config.n0()).map_err(Failure::invalid)?;
    let timeout = Duration::from_secs(a.timeout.max(1));
    let addr = format!("{}:{}", a.host, a.port);
    let rng = party_rng(seed, a.role);
    let connect_err = |e: qrot::wire::WireError| Failure { code: EXIT_CONNECT, message: format!("{addr}: {e}") };

    let output = match a.role {
        RoleName::Alice => {
            let listener = TcpListener::bind(&addr).map_err(|e| Failure { code: EXIT_CONNECT, message: format!("{addr}: {e}") })?;
            let local = listener.local_addr().map_err(Failure::io)?;
            // announced before blocking so scripts can pick up port 0
            eprintln!("listening on {local}");
            let _ = std::io::stderr().flush();
            let mut transport = TcpTransport::accept(&listener, timeout).map_err(connect_err)?;
            let mut sender = Sender::new(config, quantum.alice, rng, SenderHooks::default());
            let t = run_party(&mut sender, &mut transport, timeout);
            finished(sender.phase())?;
            let out = sender.output().expect("done implies output");
            RoleOutput {
                role: "alice",
                m0: Some(hex::encode(out.m0.as_bytes())),
                m1: Some(hex::encode(out.m1.as_bytes())),
                c: None,
                m: None,
                transcript: TranscriptSummary::new(&t),
            }
        }
        RoleName::Bob => {
            let mut transport = TcpTransport::connect(&addr, timeout).map_err(connect_err)?;
            let mut receiver = Receiver::new(config, quantum.bob, rng, ReceiverHooks::default());
            let t = run_party(&mut receiver, &mut transport, timeout);
            finished(receiver.phase())?;
            let out = receiver.output().expect("done implies output");
            RoleOutput {
                role: "bob",
                m0: None,
                m1: None,
                c: Some(out.c as u8),
                m: Some(hex::encode(out.m.as_bytes())),
                transcript: TranscriptSummary::new(&t),
            }
        }
    };
    if a.json {
        return Ok(json(&output));
    }
    let mut s = String::new();
    for (k, v) in [("m0", &output.m0), ("m1", &output.m1), ("m", &output.m)] {
        if let Some(v) = v {
            let _ = writeln!(s, "{k}={v}");
        }
    }
    if let Some(c) = output.c {
        let _ = writeln!(s, "c={c}");
    }
    let t = &output.transcript;
    let _ = writeln!(
        s,
        "frames_sent={}\nframes_received={}\nbytes_sent={}\nbytes_received={}\nleak_bits={}",
        t.frames_sent, t.frames_received, t.bytes_sent, t.bytes_received, t.leak_bits
    );
    Ok(s)
}
