use std::path::Path;
use std::process::{Command, Output};

fn specdec(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_specdec")).current_dir(dir).args(args).output().unwrap()
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    assert!(specdec(dir.path(), &["init", "--dir", "."]).status.success());
    dir
}

#[test]
fn flags_override_config_file() {
    let dir = setup();
    let d = dir.path();
    std::fs::write(
        d.join("cfg.json"),
        r#"{"model": "gridworld.json", "drafter": "drafter-zero.json", "mode": "vanilla", "seeds": "0..3"}"#,
    )
    .unwrap();
    let from_file = specdec(d, &["decode", "--config", "cfg.json"]);
    assert!(from_file.status.success());
    let text = String::from_utf8(from_file.stdout).unwrap();
    assert!(text.contains("\"mode\":\"vanilla\""), "{text}");
    assert!(text.contains("\"seeds\":4"), "{text}");
    assert!(text.contains("\"accumulatedTVD\":0.0"), "{text}");

    let overridden = specdec(d, &["decode", "--config", "cfg.json", "--mode", "cascade"]);
    assert!(String::from_utf8(overridden.stdout).unwrap().contains("\"mode\":\"cascade\""));
}

#[test]
fn bad_invocations_fail_with_a_message() {
    let dir = setup();
    let d = dir.path();
    let cases: [&[&str]; 4] = [
        &["decode", "--model", "gridworld.json"],
        &["decode", "--model", "gridworld.json", "--mode", "beam"],
        &["decode", "--model", "gridworld.json", "--mode", "vanilla"],
        &["decode", "--model", "gridworld.json", "--drafter", "drafter-zero.json", "--mode", "cascade", "--tvd-budget", "-1"],
    ];
    for args in cases {
        let out = specdec(d, args);
        assert!(!out.status.success(), "{args:?}");
        assert!(!out.stderr.is_empty(), "{args:?}");
    }
}

#[test]
fn train_writes_a_loadable_drafter() {
    let dir = setup();
    let d = dir.path();
    let out = specdec(d, &["train", "--model", "gridworld.json", "--epochs", "5", "--out", "trained.json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = specdec(d, &["decode", "--model", "gridworld.json", "--drafter", "trained.json", "--mode", "cascade"]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
}
