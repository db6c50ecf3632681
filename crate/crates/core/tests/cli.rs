use std::process::Command;

fn adlink() -> Command {
    Command::new(env!("CARGO_BIN_EXE_adlink"))
}

#[test]
fn help_prints_usage() {
    let out = adlink().arg("--help").output().unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("Usage"), "{stdout}");
    assert!(stdout.contains("pretrain"));
}

#[test]
fn unknown_subcommand_fails() {
    let out = adlink().arg("frobnicate").output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8(out.stderr).unwrap().contains("frobnicate"));
}

#[test]
fn steps_record_config_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let status = adlink()
        .args(["synth", "--run-dir"])
        .arg(&run)
        .args(["--set", "synthetic.n_authors=10"])
        .status()
        .unwrap();
    assert!(status.success());
    let resolved = std::fs::read_to_string(run.join("config.resolved.toml")).unwrap();
    assert!(resolved.contains("n_authors = 10"), "{resolved}");
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
    assert!(manifest.to_string().contains("ads.jsonl"), "{manifest}");

    // A later step picks up the resolved config; a missing input is an error.
    let out = adlink().args(["pretrain", "--run-dir"]).arg(&run).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("vocab"));
}

#[test]
fn bad_override_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = adlink()
        .args(["synth", "--run-dir"])
        .arg(dir.path())
        .args(["--set", "synthetic.no_such_key=1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}
