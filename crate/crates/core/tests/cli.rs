use std::fs;
use std::process::Command;

fn visauth(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_visauth")).args(args).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
    )
}

#[test]
fn checks_pass_with_exit_zero() {
    let (code, out) = visauth(&["checks"]);
    assert_eq!(code, 0);
    assert!(out.contains("check|log2(36!)|138.094329|138|+-0.5|PASS"));
    assert!(out.ends_with("result|PASS\n"));
}

#[test]
fn failed_expectation_exits_one_and_bad_config_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let failing = dir.path().join("failing.conf");
    fs::write(&failing, "[scenario]\nprotocol = p1\nexpect.denied = 1\n").unwrap();
    let (code, out) = visauth(&["run", failing.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(out.contains("expect|scenario-1|denied|1|0|FAIL"));

    let broken = dir.path().join("broken.conf");
    fs::write(&broken, "[scenario]\nprotocol = p1\ntrials = many\n").unwrap();
    assert_eq!(visauth(&["run", broken.to_str().unwrap()]).0, 2);
    assert_eq!(
        visauth(&["run", dir.path().join("missing.conf").to_str().unwrap()]).0,
        2
    );
    assert_eq!(visauth(&["matrix", "--trials", "0"]).0, 2);
}

#[test]
fn dumps_frames_and_transcripts() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("p2.conf");
    fs::write(
        &conf,
        "[scenario]\nname = otp\nprotocol = p2\ntrials = 2\nexpect.authenticated = 2\n",
    )
    .unwrap();
    let frames = dir.path().join("frames");
    let transcripts = dir.path().join("transcripts");
    let (code, out) = visauth(&[
        "--dump-frames",
        frames.to_str().unwrap(),
        "--transcripts",
        transcripts.to_str().unwrap(),
        "--scan-times",
        "run",
        conf.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{out}");
    assert!(out.contains("scan|otp|login_challenge|"));
    // the challenge frame as sent by the server and as shown on the terminal
    let mut dumped: Vec<_> = fs::read_dir(frames.join("otp"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    dumped.sort();
    assert_eq!(dumped.len(), 2);
    assert!(dumped[0].to_str().unwrap().ends_with("login_challenge.qrv"));
    assert!(dumped[1].to_str().unwrap().ends_with("show_qr.qrv"));
    let texts: Vec<String> = dumped.iter().map(|p| fs::read_to_string(p).unwrap()).collect();
    assert_eq!(texts[0], texts[1]);
    let parsed = visauth::visual::FrameDump::parse(&texts[0]).unwrap();
    assert_eq!(parsed.spec.ec_level, visauth::visual::EcLevel::M);
    let transcript = fs::read_to_string(transcripts.join("otp.txt")).unwrap();
    assert!(transcript.lines().any(|l| l.contains("|otp_submit|")));
}

#[test]
fn small_matrix_runs() {
    let (code, out) = visauth(&["matrix", "--trials", "2", "--guard", "on"]);
    assert_eq!(code, 0);
    assert_eq!(out.lines().filter(|l| l.starts_with("cell|on|")).count(), 24);
}

#[test]
fn shipped_configs_pass() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/configs");
    let mut names: Vec<_> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    names.sort();
    assert!(names.len() >= 3);
    for path in names {
        let (code, out) = visauth(&["run", path.to_str().unwrap()]);
        assert_eq!(code, 0, "{}:\n{out}", path.display());
    }
}
