use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Command, Output, Stdio};

const BIN: &str = env!("CARGO_BIN_EXE_wrench");

fn wrench(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN).current_dir(dir).args(args).output().expect("spawn wrench")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn field(text: &str, name: &str) -> String {
    text.lines()
        .find_map(|l| l.strip_prefix(name).map(|v| v.trim().to_string()))
        .unwrap_or_else(|| panic!("no {name} in:\n{text}"))
}

#[test]
fn publish_scaled_profile_then_verify_passes() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("flat.csv"), "1,2000\n").unwrap();
    let out = wrench(
        dir.path(),
        &["publish", "--profile", "flat.csv", "--scale", "2", "--transport", "loopback", "--out-dir", "run", "--workers", "2"],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(field(&stdout(&out), "sent"), "4000");

    let out = wrench(dir.path(), &["verify", "--log", "run/latency.wrll", "--manifest", "run/manifest.txt"]);
    assert_eq!(code(&out), 0, "{}{}", stdout(&out), stderr(&out));
    let table = stdout(&out);
    for verdict in ["exactly_once", "ordered", "complete", "latency_slo"] {
        assert!(field(&table, verdict).starts_with("PASS"), "{table}");
    }
    let manifest = std::fs::read_to_string(dir.path().join("run/manifest.txt")).unwrap();
    assert_eq!(field(&manifest, "scale ="), "2");

    let out = wrench(dir.path(), &["verify", "--log", "run/latency.wrll", "--manifest", "run/manifest.txt", "--format", "csv"]);
    assert_eq!(code(&out), 0);
    let csv = stdout(&out);
    assert!(csv.starts_with("scope,priority,intended"));
    assert!(csv.lines().last().unwrap().starts_with("all,-,4000,4000,4000,4000,0,0,0,0"), "{csv}");
}

#[test]
fn convert_prints_record_count_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = wrench(dir.path(), &["publish", "--rate", "3000", "--duration", "1", "--workers", "1", "--out-dir", "r"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let size = std::fs::metadata(dir.path().join("r/latency.wrll")).unwrap().len();

    let out = wrench(dir.path(), &["convert", "--log", "r/latency.wrll", "--out", "r/l.csv"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(stdout(&out).trim().parse::<u64>().unwrap(), (size - 8) / 32);

    let out = wrench(dir.path(), &["convert", "--csv", "r/l.csv", "--out", "r/back.wrll"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(
        std::fs::read(dir.path().join("r/latency.wrll")).unwrap(),
        std::fs::read(dir.path().join("r/back.wrll")).unwrap()
    );
}

/// Parses `fault = stream,offered,dropped,duplicated,delayed,out_of_order,delivered`.
fn ledger(manifest: &str) -> Vec<u64> {
    field(manifest, "fault =").split(',').map(|v| v.parse().unwrap()).collect()
}

#[test]
fn faulty_run_fails_verification_with_counts_matching_the_ledger() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "publish", "--rate", "10000", "--duration", "1", "--workers", "1", "--seed", "11",
        "--transport", "loopback-faulty", "--drop-prob", "0.02", "--dup-prob", "0.01",
        "--reorder-prob", "0.01", "--reorder-window", "8",
    ];
    let mut a = args.to_vec();
    a.extend(["--out-dir", "a"]);
    assert_eq!(code(&wrench(dir.path(), &a)), 0);

    let out = wrench(dir.path(), &["verify", "--log", "a/latency.wrll", "--manifest", "a/manifest.txt", "--format", "csv"]);
    assert_eq!(code(&out), 4);
    let manifest = std::fs::read_to_string(dir.path().join("a/manifest.txt")).unwrap();
    let l = ledger(&manifest);
    let row: Vec<String> = stdout(&out).lines().nth(1).unwrap().split(',').map(str::to_string).collect();
    // deliveries, gaps, duplicates, out_of_order
    assert_eq!(row[4].parse::<u64>().unwrap(), l[6]);
    assert_eq!(row[6].parse::<u64>().unwrap(), l[2]);
    assert_eq!(row[7].parse::<u64>().unwrap(), l[3]);
    assert_eq!(row[8].parse::<u64>().unwrap(), l[5]);
    assert!(l[2] > 0 && l[3] > 0 && l[5] > 0);

    let out = wrench(dir.path(), &["verify", "--log", "a/latency.wrll", "--manifest", "a/manifest.txt"]);
    assert!(field(&stdout(&out), "fault ledger").starts_with("MATCH"));

    // same seed, same faults and same arrival order
    let mut b = args.to_vec();
    b.extend(["--out-dir", "b"]);
    assert_eq!(code(&wrench(dir.path(), &b)), 0);
    let other = std::fs::read_to_string(dir.path().join("b/manifest.txt")).unwrap();
    assert_eq!(ledger(&manifest), ledger(&other));
    let sequences = |d: &str| -> Vec<String> {
        assert_eq!(code(&wrench(dir.path(), &["convert", "--log", &format!("{d}/latency.wrll"), "--out", &format!("{d}/l.csv")])), 0);
        std::fs::read_to_string(dir.path().join(d).join("l.csv"))
            .unwrap()
            .lines()
            .map(|l| l.split(',').take(2).collect::<Vec<_>>().join(","))
            .collect()
    };
    assert_eq!(sequences("a"), sequences("b"));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.conf"), "segment = 1,500\nworkers = 1\nseed = 5\nout_dir = from-config\n").unwrap();
    let out = wrench(dir.path(), &["publish", "--config", "run.conf", "--dry-run"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(field(&stdout(&out), "intended"), "500");
    assert_eq!(field(&stdout(&out), "seed"), "5");

    let out = wrench(dir.path(), &["publish", "--config", "run.conf", "--rate", "800", "--duration", "2", "--seed", "6", "--dry-run"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(field(&stdout(&out), "intended"), "1600");
    assert_eq!(field(&stdout(&out), "seed"), "6");
    assert!(field(&stdout(&out), "manifest").starts_with("from-config"));
}

#[test]
fn dry_run_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["publish", "--rate", "100", "--duration", "1", "--out-dir", "x", "--dry-run"][..],
        &["record", "--rate", "100", "--duration", "1", "--out", "x/s.wrsn", "--dry-run"],
        &["subscribe", "--listen", "127.0.0.1:0", "--log", "x/l.wrll", "--dry-run"],
        &["scenario", "desk-smoke", "--out-dir", "x", "--dry-run"],
    ] {
        let out = wrench(dir.path(), args);
        assert_eq!(code(&out), 0, "{args:?}: {}", stderr(&out));
        assert!(stdout(&out).contains("dry run: configuration valid"));
    }
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn configuration_errors_exit_2_before_any_output_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.conf"), "segment = 1,100\nfrobnicate = 1\n").unwrap();
    std::fs::write(dir.path().join("f.csv"), "1,100\n").unwrap();
    let cases: &[&[&str]] = &[
        &["publish", "--config", "bad.conf"],
        &["publish", "--profile", "missing.csv"],
        &["publish", "--profile", "f.csv", "--transport", "tcp"],
        &["publish", "--profile", "f.csv", "--transport", "pigeon"],
        &["publish", "--profile", "f.csv", "--drop-prob", "2", "--transport", "loopback-faulty"],
        &["publish", "--profile", "f.csv", "--time-scale", "2"],
        &["publish", "--rate", "100"],
        &["publish", "--bogus-flag"],
        &["verify", "--log", "missing.wrll"],
        &["scenario", "no-such-scenario"],
        &["subscribe"],
    ];
    for args in cases {
        let out = wrench(dir.path(), args);
        assert_eq!(code(&out), 2, "{args:?}: {}", stderr(&out));
        assert!(!stderr(&out).is_empty());
    }
    let unknown = stderr(&wrench(dir.path(), &["publish", "--config", "bad.conf"]));
    assert!(unknown.contains("frobnicate") && unknown.contains("line 2"), "{unknown}");
    let entries: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(entries.len(), 2, "{entries:?}");
}

#[test]
fn unreachable_endpoint_is_a_run_failure() {
    let dir = tempfile::tempdir().unwrap();
    let port = {
        let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let ep = format!("127.0.0.1:{port}");
    let out = wrench(dir.path(), &["publish", "--rate", "100", "--duration", "1", "--transport", "tcp", "--endpoint", &ep]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}

#[test]
fn verify_without_manifest_cannot_pass() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&wrench(dir.path(), &["publish", "--rate", "500", "--duration", "1", "--workers", "1", "--out-dir", "r"])), 0);
    let out = wrench(dir.path(), &["verify", "--log", "r/latency.wrll"]);
    assert_eq!(code(&out), 4);
    assert_eq!(field(&stdout(&out), "complete"), "UNKNOWN");
    assert!(field(&stdout(&out), "exactly_once").starts_with("PASS"));
}

#[test]
fn tcp_publisher_and_subscriber_in_separate_processes() {
    let dir = tempfile::tempdir().unwrap();
    let mut sub = Command::new(BIN)
        .current_dir(dir.path())
        .args(["subscribe", "--listen", "127.0.0.1:0", "--connections", "2", "--log", "sub/lat.wrll"])
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(sub.stderr.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on ").expect("listen line").to_string();

    let out = wrench(
        dir.path(),
        &["publish", "--rate", "2000", "--duration", "1", "--workers", "2", "--transport", "tcp", "--endpoint", &addr, "--out-dir", "pub"],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let sub_out = sub.wait_with_output().unwrap();
    assert_eq!(sub_out.status.code(), Some(0));
    assert_eq!(field(&String::from_utf8_lossy(&sub_out.stdout), "records"), "2000");

    let out = wrench(dir.path(), &["verify", "--log", "sub/lat.wrll", "--manifest", "pub/manifest.txt"]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
}

#[test]
fn record_then_replay_a_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let out = wrench(dir.path(), &["record", "--rate", "1000", "--duration", "1", "--seed", "2", "--out", "s.wrsn"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(field(&stdout(&out), "frames"), "1000");

    let out = wrench(dir.path(), &["publish", "--snapshot", "s.wrsn", "--time-scale", "4", "--restamp", "--out-dir", "rep"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(field(&stdout(&out), "sent"), "1000");
    let elapsed: f64 = field(&stdout(&out), "elapsed").trim_end_matches(" s").parse().unwrap();
    assert!(elapsed < 0.6, "{elapsed}");

    let out = wrench(dir.path(), &["verify", "--log", "rep/latency.wrll", "--manifest", "rep/manifest.txt"]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));

    let out = wrench(dir.path(), &["publish", "--snapshot", "s.wrsn", "--scale", "2"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("--time-scale"));
}

#[test]
fn gen_profile_emits_the_snapshot_mean_profile() {
    let dir = tempfile::tempdir().unwrap();
    let out = wrench(dir.path(), &["gen-profile"]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out), "# duration_s,rate\n60,300394\n");

    let out = wrench(dir.path(), &["gen-profile", "--kind", "peak-burst", "--scale", "0.5", "--out", "p/peak.csv"]);
    assert_eq!(code(&out), 0);
    let text = std::fs::read_to_string(dir.path().join("p/peak.csv")).unwrap();
    assert_eq!(text.lines().last(), Some("2,350000"));

    let out = wrench(dir.path(), &["publish", "--profile", "p/peak.csv", "--dry-run"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(field(&stdout(&out), "intended"), "2000000");
}

#[test]
fn report_groups_by_payload_band() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&wrench(dir.path(), &["publish", "--rate", "2000", "--duration", "1", "--workers", "1", "--out-dir", "r"])), 0);
    let out = wrench(dir.path(), &["report", "--log", "r/latency.wrll", "--group-by", "payload-band", "--format", "csv"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let counts: u64 = stdout(&out).lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse::<u64>().unwrap()).sum();
    assert_eq!(counts, 2000);
    assert_eq!(code(&wrench(dir.path(), &["report", "--log", "r/latency.wrll", "--group-by", "colour"])), 2);
}

#[test]
fn scenario_from_file_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("tiny.conf"), "name = tiny\nsegment = 1,2000\nworkers = 1\n").unwrap();
    let out = wrench(dir.path(), &["scenario", "--file", "tiny.conf", "--out-dir", "run"]);
    assert_eq!(code(&out), 0, "{}{}", stdout(&out), stderr(&out));
    assert_eq!(field(&stdout(&out), "result"), "PASS");
    for f in ["latency.wrll", "manifest.txt", "rates.csv", "report.txt", "report.csv", "summary.csv"] {
        assert!(dir.path().join("run").join(f).is_file(), "{f}");
    }

    let out = wrench(dir.path(), &["scenario", "--list"]);
    for name in ["desk-smoke", "snapshot60", "peak-burst", "fault-oracle"] {
        assert!(stdout(&out).contains(name));
    }
}

fn repo_file(rel: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

#[test]
fn committed_example_config_is_valid_for_every_role() {
    let dir = tempfile::tempdir().unwrap();
    let conf = repo_file("configs/wrench.conf");
    let conf = conf.to_str().unwrap();
    let out = wrench(dir.path(), &["publish", "--config", conf, "--dry-run"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(field(&stdout(&out), "intended"), "1000000");
    let out = wrench(dir.path(), &["subscribe", "--config", conf, "--dry-run"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(field(&stdout(&out), "log"), "wrench-run/latency.wrll");
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn committed_feed_workload_matches_the_builtin_default() {
    use wrench_core::workload::{RateProfile, WorkloadSpec};
    let spec = WorkloadSpec::read(&repo_file("configs/feed-workload.conf")).unwrap();
    let mut expected = WorkloadSpec::feed_default();
    expected.seed = 1;
    assert_eq!(spec, expected);
    let profile = RateProfile::read_csv(&repo_file("configs/profiles/snapshot-mean.csv")).unwrap();
    assert_eq!(profile, RateProfile::snapshot_mean());
}

#[test]
fn committed_profiles_match_gen_profile() {
    let dir = tempfile::tempdir().unwrap();
    for (file, args) in [
        ("snapshot-mean.csv", &["--kind", "snapshot-mean"][..]),
        ("peak-burst.csv", &["--kind", "peak-burst"]),
        ("session.csv", &["--kind", "session"]),
        ("ramp-300k.csv", &["--kind", "ramp", "--rate", "300000", "--duration", "30"]),
        ("flat-100k.csv", &["--kind", "flat", "--rate", "100000", "--duration", "60"]),
    ] {
        let mut a = vec!["gen-profile"];
        a.extend(args);
        let out = wrench(dir.path(), &a);
        assert_eq!(stdout(&out), std::fs::read_to_string(repo_file("configs/profiles").join(file)).unwrap(), "{file}");
    }
}
