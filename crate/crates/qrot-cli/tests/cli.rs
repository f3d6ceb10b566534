use std::io::{BufRead, BufReader};
use std::process::{Command, Output, Stdio};

fn qrot() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_qrot"));
    c.env_remove("QROT_SEED");
    c
}

fn run(args: &[&str]) -> Output {
    qrot().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn kv(text: &str, key: &str) -> String {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no {key} in {text}"))
        .to_string()
}

#[test]
fn bounds_defaults_reproduce_table1() {
    let o = run(&["bounds", "--json"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let eps = v["report"]["eps_max"].as_f64().unwrap();
    assert!((1.91e-8 / 2.0..=1.91e-8 * 2.0).contains(&eps), "{eps}");
    assert_eq!(v["dominant"], "stat");
    assert_eq!(v["n_raw"], 1_893_073);
}

#[test]
fn bounds_flags_line_roundtrips() {
    let first = stdout(&run(&["bounds", "--preset", "desk", "--delta1", "0.0071"]));
    let flags = kv(&first, "flags");
    let mut args = vec!["bounds"];
    args.extend(flags.split(' '));
    assert_eq!(stdout(&run(&args)), first);
}

#[test]
fn bounds_rejects_undefined_bracket() {
    let o = run(&["bounds", "--p-max", "0.4"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("rate bracket undefined"));
}

#[test]
fn experimental_without_multi_photons_matches_theoretical() {
    let a = stdout(&run(&["bounds", "--p-multi", "0", "--experimental"]));
    let b = stdout(&run(&["bounds", "--p-multi", "0"]));
    let numbers = |s: &str| s.lines().filter(|l| l.starts_with("eps_")).map(str::to_string).collect::<Vec<_>>();
    assert_eq!(numbers(&a), numbers(&b));
}

#[test]
fn fig2_root_and_file_output() {
    let dir = std::env::temp_dir().join(format!("qrot-cli-fig2-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("fig2.csv");
    let o = run(&["figures", "fig2", "--out", path.to_str().unwrap()]);
    assert!(o.status.success());
    let csv = std::fs::read_to_string(&path).unwrap();
    assert_eq!(csv, stdout(&run(&["figures", "fig2"])));
    let root = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse::<f64>().unwrap()).collect::<Vec<_>>())
        .find(|r| r[1] == 0.0)
        .unwrap()[0];
    assert!((root - 0.028).abs() <= 0.001, "{root}");
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn ot_table_from_sources() {
    let dir = std::env::temp_dir().join(format!("qrot-cli-ot-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("sources.csv");
    std::fs::write(&path, "pump_power,coincidence_rate,qber\n1.0,2450,0.01\n2.0,4900,0.05\n").unwrap();
    let o = run(&["figures", "ot-table", "--sources", path.to_str().unwrap(), "--grid-steps", "4"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "pump_power,coincidence_rate,qber,n_crit,r_ot");
    assert!(!rows[1].split(',').nth(3).unwrap().is_empty());
    // above the critical error rate there is no ROT
    assert!(rows[2].ends_with(",,0"), "{}", rows[2]);
    std::fs::remove_dir_all(dir).unwrap();
    assert_eq!(run(&["figures", "ot-table"]).status.code(), Some(3));
}

#[test]
fn optimize_json() {
    let o = run(&["optimize", "--json", "--grid-steps", "6", "--no-refine"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let n = v["n_crit"].as_u64().unwrap();
    assert!((300_000..=30_000_000).contains(&n), "{n}");
}

#[test]
fn simulate_noiseless_desk() {
    let o = run(&["simulate", "--preset", "desk", "--sessions", "100", "--json"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["successes"], 100);
    assert_eq!(v["mismatches"], 0);
    assert_eq!(v["mean_qber"], 0.0);
}

#[test]
fn simulate_is_seeded() {
    let args = ["simulate", "--preset", "desk", "--sessions", "4", "--p-err", "0.01", "--seed", "3"];
    let a = stdout(&run(&args));
    assert_eq!(a, stdout(&run(&args)));
    let from_env = stdout(&qrot().args(["simulate", "--preset", "desk", "--sessions", "4", "--p-err", "0.01"]).env("QROT_SEED", "3").output().unwrap());
    assert_eq!(a, from_env);
    let overridden = qrot().args(args).env("QROT_SEED", "4").output().unwrap();
    assert_ne!(a, stdout(&overridden));
}

/// Starts alice on an ephemeral port; returns the child and the port.
fn spawn_alice(extra: &[&str]) -> (std::process::Child, u16) {
    let mut child = qrot()
        .args(["role", "alice", "--preset", "desk", "--port", "0", "--source-seed", "9", "--timeout", "20"])
        .args(extra)
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stderr.as_mut().unwrap()).read_line(&mut line).unwrap();
    let port = line.trim().rsplit(':').next().unwrap().parse().unwrap();
    (child, port)
}

#[test]
fn roles_agree_over_loopback() {
    let (alice, port) = spawn_alice(&[]);
    let port = port.to_string();
    let bob = run(&["role", "bob", "--preset", "desk", "--port", &port, "--source-seed", "9", "--timeout", "20"]);
    let alice = alice.wait_with_output().unwrap();
    assert!(bob.status.success(), "{}", String::from_utf8_lossy(&bob.stderr));
    assert!(alice.status.success());
    let (a, b) = (stdout(&alice), stdout(&bob));
    let c = kv(&b, "c");
    let m = kv(&b, "m");
    assert_eq!(m, kv(&a, if c == "1" { "m1" } else { "m0" }));
    assert_ne!(kv(&a, "m0"), kv(&a, "m1"));
    assert_eq!(kv(&a, "bytes_sent"), kv(&b, "bytes_received"));
    assert_eq!(kv(&a, "leak_bits"), kv(&b, "leak_bits"));
}

#[test]
fn handshake_mismatch_exits_nonzero() {
    let (alice, port) = spawn_alice(&[]);
    let port = port.to_string();
    let bob = run(&["role", "bob", "--preset", "desk", "--p-max", "0.014", "--port", &port, "--timeout", "20"]);
    let alice = alice.wait_with_output().unwrap();
    assert_eq!(bob.status.code(), Some(17));
    assert_eq!(alice.status.code(), Some(17));
    assert!(String::from_utf8_lossy(&alice.stderr).contains("HANDSHAKE_MISMATCH"));
}

#[test]
fn connection_refused_exits_nonzero() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = listener.local_addr().unwrap().port().to_string();
    drop(listener);
    let o = run(&["role", "bob", "--preset", "desk", "--port", &port, "--timeout", "2"]);
    assert_eq!(o.status.code(), Some(5));
}
