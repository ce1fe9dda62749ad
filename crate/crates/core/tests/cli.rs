use std::process::{Command, Output};

fn labtwin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_labtwin"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn scenario(name: &str) -> String {
    format!("{}/scenarios/{name}", env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn run_writes_trace_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("minimal.jsonl");
    let out = labtwin(&[
        "run",
        &scenario("minimal.json"),
        "--trace",
        path.to_str().unwrap(),
        "--format",
        "jsonl",
        "--stride",
        "500",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.starts_with("{\"time_s\":0.0,\"beaker.solvent[kg]\":0.1}"));
}

#[test]
fn run_prints_csv_to_stdout() {
    let out = labtwin(&["run", &scenario("minimal.json"), "--stride", "1000"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(
        String::from_utf8(out.stdout).unwrap(),
        "time_s,beaker.solvent[kg]\n0,0.1\n10,0.1\n"
    );
}

#[test]
fn verify_exit_codes() {
    assert_eq!(labtwin(&["verify", &scenario("minimal.json")]).status.code(), Some(0));

    let dir = tempfile::tempdir().unwrap();
    let strict = dir.path().join("strict.json");
    let text = std::fs::read_to_string(scenario("sn1.json")).unwrap();
    let text = text.replace("\"duration\": \"2000 s\"", "\"duration\": \"20 s\"");
    std::fs::write(&strict, text).unwrap();
    let out = labtwin(&["verify", strict.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("verification failed"));
}

#[test]
fn errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let broken = dir.path().join("broken.json");
    std::fs::write(&broken, "{ \"meta\": ").unwrap();
    for args in [
        vec!["verify", broken.to_str().unwrap()],
        vec!["describe", "/nonexistent/scenario.json"],
        vec!["bench", &scenario("minimal.json")[..], "--envs", "0"],
        vec!["frobnicate"],
    ] {
        let out = labtwin(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn bench_and_describe_report() {
    let out = labtwin(&["bench", &scenario("sn1.json"), "--envs", "2", "--steps", "50"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("bench n_envs=2 steps=50"));

    let out = labtwin(&["describe", &scenario("sn1.json")]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("rxn:sn1@beaker"));
    assert!(text.contains("heater:hp"));
}
