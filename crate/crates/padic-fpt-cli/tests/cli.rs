//! End-to-end behavior of the binary: determinism, exit codes, precedence.

use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_padic-fpt"))
}

#[test]
fn simulate_is_byte_deterministic() {
    let dir = std::env::temp_dir().join("padic_fpt_cli_test_sim");
    std::fs::create_dir_all(&dir).unwrap();
    let out1 = dir.join("a.csv");
    let out2 = dir.join("b.csv");
    for out in [&out1, &out2] {
        let status = bin()
            .args([
                "simulate",
                "--p",
                "2",
                "--alpha",
                "1.0",
                "--r",
                "0",
                "--nu",
                "1",
                "--paths",
                "500",
                "--horizon",
                "50",
                "--seed",
                "42",
                "--out",
                out.to_str().unwrap(),
            ])
            .status()
            .unwrap();
        assert!(status.success());
    }
    let a = std::fs::read(&out1).unwrap();
    let b = std::fs::read(&out2).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, b, "identical seed must give identical bytes");
}

#[test]
fn invalid_prime_exits_with_code_one() {
    let output = bin()
        .args(["spectrum", "--p", "9", "--alpha", "1.0", "--out", "/dev/null"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let err = String::from_utf8_lossy(&output.stderr);
    assert!(err.contains("not prime"), "stderr: {err}");
}

#[test]
fn ball_inside_support_rejected() {
    let output = bin()
        .args(["spectrum", "--p", "2", "--alpha", "1.0", "--nu", "0", "--out", "/dev/null"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
}

#[test]
fn config_file_precedence() {
    let dir = std::env::temp_dir().join("padic_fpt_cli_test_cfg");
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("run.json");
    std::fs::write(&cfg, "{\"alpha\": 1.0, \"K\": 12}").unwrap();
    let out = dir.join("spec.json");
    // Flag overrides the file's alpha; the file's K applies.
    let output = bin()
        .args([
            "spectrum",
            "--config",
            cfg.to_str().unwrap(),
            "--alpha",
            "2.0",
            "--out",
            out.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.contains("\"alpha\":2"), "alpha flag must win: {text}");
    assert!(text.contains("\"K\":12"), "file K must apply: {text}");
}

#[test]
fn unknown_config_key_rejected() {
    let dir = std::env::temp_dir().join("padic_fpt_cli_test_badcfg");
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("bad.json");
    std::fs::write(&cfg, "{\"alfa\": 1.0}").unwrap();
    let output = bin()
        .args(["spectrum", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
}

#[test]
fn density_emits_expected_header() {
    let dir = std::env::temp_dir().join("padic_fpt_cli_test_density");
    std::fs::create_dir_all(&dir).unwrap();
    let out = dir.join("density.csv");
    let status = bin()
        .args([
            "density",
            "--p",
            "2",
            "--alpha",
            "1.0",
            "--steps",
            "50",
            "--K",
            "20",
            "--out",
            out.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("t,f,f_ret,cdf\n"));
    assert_eq!(text.lines().count(), 52);
}

#[test]
fn spectrum_json_round_trips() {
    let dir = std::env::temp_dir().join("padic_fpt_cli_test_spec");
    std::fs::create_dir_all(&dir).unwrap();
    let out = dir.join("spectrum.json");
    let status = bin()
        .args(["spectrum", "--p", "3", "--alpha", "1.5", "--K", "10", "--out", out.to_str().unwrap()])
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    let spec = padic_fpt::spectrum::Spectrum::from_json_str(&text).unwrap();
    assert_eq!(spec.to_json_string(), text);
}

#[test]
fn kernels_rejects_inadmissible_log_kernel() {
    // ln^alpha tails with alpha <= 1 are not integrable: exit code 2.
    let output = bin()
        .args(["kernels", "--kernel", "log", "--alpha", "0.8", "--out", "/dev/null"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}
