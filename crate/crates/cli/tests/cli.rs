use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

const SMALL: &str = "\
embed_dim = 6
embed_epochs = 2
rec_epochs = 1
imitation_epochs = 1
gen_epochs = 1
joint_epochs = 1
policy_hidden = 5
disc_hidden = 4
word_dim = 4
enc_hidden = 3
attn_dim = 4
dec_hidden = 5
mlp_hidden = 5
max_context = 8
max_response = 4
";

fn dicr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dicr"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn small_world(root: &Path) {
    let r = root.to_str().unwrap();
    std::fs::create_dir_all(root).unwrap();
    let conf = root.join("small.conf");
    std::fs::write(&conf, SMALL).unwrap();
    let out = dicr(&[
        "toygen",
        "--out",
        r,
        "--entities",
        "30",
        "--relations",
        "3",
        "--dialogs",
        "40",
        "--config",
        conf.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(dicr(&["eval", "--out", "nowhere"]).status.code(), Some(2));
    assert_eq!(
        dicr(&["train", "--stage", "sideways"]).status.code(),
        Some(2)
    );
    assert_eq!(dicr(&["sweep"]).status.code(), Some(2));
    assert_eq!(dicr(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn a_stage_without_its_predecessor_fails() {
    let dir = tempfile::tempdir().unwrap();
    small_world(dir.path());
    let out = dicr(&[
        "train",
        "--out",
        dir.path().to_str().unwrap(),
        "--stage",
        "gen",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("imitation"), "{err}");
}

#[test]
fn small_world_trains_evaluates_and_chats() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let r = root.to_str().unwrap();
    small_world(root);
    let out = dicr(&["train", "--out", r, "--stage", "all"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for stage in ["rec", "imitation", "gen", "joint"] {
        assert!(
            root.join(format!("run/checkpoints/{stage}.ckpt")).is_file(),
            "{stage}"
        );
    }
    assert!(root.join("run/report.txt").is_file());

    let ckpt = root.join("run/checkpoints/joint.ckpt");
    let out = dicr(&[
        "eval",
        "--out",
        r,
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--split",
        "valid",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stdout).contains("recall_at_1"));
    assert!(root.join("run/eval_valid.txt").is_file());

    let out = dicr(&[
        "plot",
        "--out",
        r,
        "--report",
        root.join("run/report.txt").to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(root.join("plots/sweep.png").is_file());

    let mut child = Command::new(env!("CARGO_BIN_EXE_dicr"))
        .args(["chat", "--out", r, "--checkpoint", ckpt.to_str().unwrap()])
        .env("RUST_LOG", "warn")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(b"hello there\n\n")
        .unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(
        text.contains("dicr> tell me about a film you like"),
        "{text}"
    );
    assert!(text.contains("path> (none)"), "{text}");
}
