use std::path::Path;
use std::process::Command;

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_convergence"))
}

fn scenario(name: &str) -> String {
    format!("{}/scenarios/{name}.toml", env!("CARGO_MANIFEST_DIR"))
}

fn code(c: &mut Command) -> i32 {
    c.output().unwrap().status.code().unwrap()
}

#[test]
fn run_verify_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = cli().args(["run", &scenario("mapping_bug"), "--seed", "7", "--out"]).arg(&out).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("PASSED"));
    for f in ["scenario.toml", "eventlog.jsonl", "report.json", "report.txt"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let effective = std::fs::read_to_string(out.join("scenario.toml")).unwrap();
    assert!(effective.contains("seed = 7"));

    let v = cli().arg("verify").arg(out.join("eventlog.jsonl")).arg(out.join("scenario.toml")).output().unwrap();
    assert_eq!(v.status.code(), Some(0), "{}", String::from_utf8_lossy(&v.stdout));
    let r = cli().arg("report").arg(&out).output().unwrap();
    assert_eq!(r.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&r.stdout), std::fs::read_to_string(out.join("report.txt")).unwrap());
}

#[test]
fn tampered_log_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    assert_eq!(code(cli().args(["run", &scenario("mapping_bug"), "--out"]).arg(out)), 0);
    let log = std::fs::read_to_string(out.join("eventlog.jsonl")).unwrap();
    let tampered = log.replace("\"kind\":\"run_end\",\"attempts\":", "\"kind\":\"run_end\",\"attempts\":1");
    assert_ne!(tampered, log);
    std::fs::write(out.join("bad.jsonl"), tampered).unwrap();
    assert_eq!(code(cli().arg("verify").arg(out.join("bad.jsonl")).arg(out.join("scenario.toml"))), 1);
}

#[test]
fn failed_assertion_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(scenario("empty")).unwrap();
    let path = dir.path().join("s.toml");
    std::fs::write(&path, text.replace("[expect]\n", "[expect]\nswitch_outcome = \"switched\"\n")).unwrap();
    let o = cli().arg("run").arg(&path).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
}

#[test]
fn bad_input_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.toml");
    std::fs::write(&path, "name = \"x\"\nbogus = 1\n").unwrap();
    assert_eq!(code(cli().arg("run").arg(&path)), 2);
    assert_eq!(code(cli().arg("run").arg(dir.path().join("missing.toml"))), 2);
    assert_eq!(code(cli().arg("report").arg(Path::new("/nonexistent/run"))), 2);
}
