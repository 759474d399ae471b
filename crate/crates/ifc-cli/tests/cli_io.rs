//! Behavior of the `ifc` binary: exit codes, printed verdicts, file
//! round-trips, certificate verification, and CSV determinism.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const CHAN_A: &str = "3\n1 4 3\n2 1 3\n6 2 1\n";
const CODE_A: &str = "0,1,2,3,4,5\n0,3\n0,2,4\n";
const CHAN_B: &str = "3\n1 12 6\n2 3 6\n3 3 1\n";

fn ifc() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ifc"));
    cmd.env_remove("IFC_THREADS");
    cmd
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn assert_exit(out: &Output, want: i32) {
    assert_eq!(
        out.status.code(),
        Some(want),
        "stdout: {} stderr: {}",
        stdout_of(out),
        stderr_of(out)
    );
}

#[test]
fn analyze_reports_decodable_with_efficiency() {
    let dir = TempDir::new().unwrap();
    let h = write(dir.path(), "h.txt", CHAN_A);
    let c = write(dir.path(), "c.txt", CODE_A);
    let out = ifc().arg("analyze").arg(&h).arg(&c).output().unwrap();
    assert_exit(&out, 0);
    assert_eq!(stdout_of(&out), "decodable, W_max=41, eff=0.964978967444\n");
}

#[test]
fn analyze_prints_witness_on_collision() {
    let dir = TempDir::new().unwrap();
    let h = write(dir.path(), "h.txt", CHAN_A);
    let c = write(dir.path(), "c.txt", "0,5\n0,5\n0,5\n");
    let out = ifc().arg("analyze").arg(&h).arg(&c).output().unwrap();
    assert_exit(&out, 1);
    let text = stdout_of(&out);
    assert!(text.starts_with("not decodable: "), "got: {text}");
    assert!(text.contains("confuses"), "got: {text}");
}

#[test]
fn analyze_rejects_malformed_input_with_position() {
    let dir = TempDir::new().unwrap();
    let h = write(dir.path(), "h.txt", "3\n1 4 x\n2 1 3\n6 2 1\n");
    let c = write(dir.path(), "c.txt", CODE_A);
    let out = ifc().arg("analyze").arg(&h).arg(&c).output().unwrap();
    assert_exit(&out, 2);
    let err = stderr_of(&out);
    assert!(err.contains("line 2") && err.contains("column 5"), "got: {err}");

    let missing = dir.path().join("nope.txt");
    let out = ifc().arg("analyze").arg(&missing).arg(&c).output().unwrap();
    assert_exit(&out, 2);
}

#[test]
fn design_writes_codebook_that_analyze_accepts() {
    let dir = TempDir::new().unwrap();
    let h = write(dir.path(), "h.txt", CHAN_B);
    let out = ifc().arg("design").arg(&h).output().unwrap();
    assert_exit(&out, 0);
    let text = stdout_of(&out);
    assert!(text.starts_with("s=(6,2,3), eff=1.053605109123\n"), "got: {text}");

    let codebook = dir.path().join("h.codebook");
    assert_eq!(fs::read_to_string(&codebook).unwrap(), "0,1,2,3,4,5\n0,1\n0,1,2\n");

    let out = ifc().arg("analyze").arg(&h).arg(&codebook).output().unwrap();
    assert_exit(&out, 0);
    assert!(stdout_of(&out).starts_with("decodable, W_max=30,"));

    let custom = dir.path().join("alt.codebook");
    let out = ifc().arg("design").arg(&h).arg("--out").arg(&custom).output().unwrap();
    assert_exit(&out, 0);
    assert!(custom.exists());
}

#[test]
fn design_surfaces_isolated_rows_and_fallback() {
    let dir = TempDir::new().unwrap();
    let h = write(dir.path(), "h.txt", "2\n2 0\n3 1\n");
    let out = ifc().arg("design").arg(&h).output().unwrap();
    assert_exit(&out, 1);
    let err = stderr_of(&out);
    assert!(err.contains("receiver 1") && err.contains("no interference"), "got: {err}");

    let out = ifc().arg("design").arg(&h).arg("--isolated-t").arg("3").output().unwrap();
    assert_exit(&out, 0);
    let text = stdout_of(&out);
    assert!(text.starts_with("s=(4,3)"), "got: {text}");
}

#[test]
fn search_certificate_round_trips_and_detects_corruption() {
    let dir = TempDir::new().unwrap();
    let h = write(dir.path(), "h.txt", CHAN_A);
    let cert = dir.path().join("cert.json");
    let out = ifc()
        .arg("search")
        .arg(&h)
        .args(["--r-max", "3", "--out"])
        .arg(&cert)
        .output()
        .unwrap();
    assert_exit(&out, 0);
    let text = stdout_of(&out);
    assert!(text.starts_with("eff=1.053605109123, r=(1,3,2), d=(1,1,2),"), "got: {text}");

    let out = ifc().arg("search").arg("--verify").arg(&cert).output().unwrap();
    assert_exit(&out, 0);
    assert!(stdout_of(&out).starts_with("certificate ok"));

    let tampered = dir.path().join("tampered.json");
    let body = fs::read_to_string(&cert).unwrap();
    fs::write(&tampered, body.replace("\"2\"", "\"3\"")).unwrap();
    let out = ifc().arg("search").arg("--verify").arg(&tampered).output().unwrap();
    assert_exit(&out, 1);
    assert!(stdout_of(&out).starts_with("certificate invalid"));

    let truncated = dir.path().join("broken.json");
    fs::write(&truncated, &body[..body.len() / 2]).unwrap();
    let out = ifc().arg("search").arg("--verify").arg(&truncated).output().unwrap();
    assert_exit(&out, 2);

    let out = ifc().arg("search").output().unwrap();
    assert_exit(&out, 2);
}

#[test]
fn search_unit_bounds_give_identity_certificate() {
    let dir = TempDir::new().unwrap();
    let h = write(dir.path(), "h.txt", CHAN_A);
    let out = ifc().arg("search").arg(&h).args(["--r-max", "1"]).output().unwrap();
    assert_exit(&out, 0);
    let cert = fs::read_to_string(dir.path().join("h.certificate.json")).unwrap();
    let parsed: serde_json::Value = serde_json::from_str(&cert).unwrap();
    assert_eq!(parsed["r"], serde_json::json!(["1", "1", "1"]));
    assert_eq!(parsed["d"], serde_json::json!(["1", "1", "1"]));
    assert_eq!(parsed["best_matrix"], parsed["source_matrix"]);
}

fn sweep_config(dir: &Path, out_name: &str) -> PathBuf {
    write(dir, "chan.txt", CHAN_A);
    write(
        dir,
        "sweep.cfg",
        &format!(
            "matrix_file = chan.txt\nn = 2\nl = 2\ntrials = 400\n\
             snr_db = 40 50 60\nr_max = 3\nseed = 11\nout = {out_name}\n"
        ),
    )
}

#[test]
fn simulate_is_deterministic_across_runs_and_thread_counts() {
    let dir = TempDir::new().unwrap();
    let cfg = sweep_config(dir.path(), "run.csv");
    let csv_path = dir.path().join("run.csv");

    let mut outputs = Vec::new();
    for threads in [None, None, Some("1"), Some("4")] {
        let mut cmd = ifc();
        cmd.arg("simulate").arg(&cfg);
        if let Some(t) = threads {
            cmd.env("IFC_THREADS", t);
        }
        let out = cmd.output().unwrap();
        assert_exit(&out, 0);
        outputs.push(fs::read(&csv_path).unwrap());
    }
    assert_eq!(outputs[0], outputs[1], "same invocation differed between runs");
    assert_eq!(outputs[0], outputs[2], "single-threaded run differed");
    assert_eq!(outputs[0], outputs[3], "four-thread run differed");

    let text = String::from_utf8(outputs[0].clone()).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "snr_db,n,l,q,eff,rate_theoretical,rate_empirical,err_u1,err_u2,err_u3,trials,seed"
    );
    assert_eq!(lines.count(), 3);
}

#[test]
fn simulate_writes_empty_fields_on_infeasible_depth() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "chan.txt", CHAN_A);
    let cfg = write(
        dir.path(),
        "deep.cfg",
        "matrix_file = chan.txt\nn = 2\ntrials = 10\nz = 1000000\nr_max = 3\n",
    );
    let out = ifc().arg("simulate").arg(&cfg).output().unwrap();
    assert_exit(&out, 0);
    let text = stdout_of(&out);
    let row = text.lines().nth(1).unwrap();
    assert_eq!(row, "-60,2,,,,,,,,,10,0");
}

#[test]
fn simulate_zero_noise_reports_zero_errors() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "chan.txt", CHAN_A);
    let cfg = write(
        dir.path(),
        "zero.cfg",
        "matrix_file = chan.txt\nn = 2\nl = 2\ntrials = 200\nz = 0\nr_max = 3\n",
    );
    let out = ifc().arg("simulate").arg(&cfg).output().unwrap();
    assert_exit(&out, 0);
    let text = stdout_of(&out);
    let row = text.lines().nth(1).unwrap();
    let fields: Vec<&str> = row.split(',').collect();
    assert_eq!(fields[0], "inf");
    assert_eq!(&fields[7..10], &["0", "0", "0"]);
    assert_eq!(fields[5], "inf");
}

#[test]
fn simulate_auto_mode_uses_quantized_noise_budget_for_real_gains() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "real.txt", "3\n1.3 4 3\n2 1.2 3\n6 2 1.1\n");
    let cfg = write(
        dir.path(),
        "real.cfg",
        "matrix_file = real.txt\nn = 2\nl = 2\ntrials = 100\nz = 0.00001\nr_max = 3\n",
    );
    let out = ifc().arg("simulate").arg(&cfg).output().unwrap();
    assert_exit(&out, 0);
    let text = stdout_of(&out);
    let fields: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    let eff: f64 = fields[4].parse().unwrap();
    let rate_th: f64 = fields[5].parse().unwrap();
    let z: f64 = 1e-5;
    let plain = 0.5 * (1.0 / z).log2() * eff;
    assert!(
        rate_th.is_finite() && rate_th < plain - 1.0,
        "rate {rate_th} should sit well below the unquantized value {plain}"
    );
}

#[test]
fn simulate_rejects_broken_configs() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "chan.txt", CHAN_A);
    for body in [
        "matrix_file = chan.txt\nn = 2\ntrials = 10\nz = 0\n#needs explicit depth for z = 0\n",
        "matrix_file = chan.txt\nn = 2\ntrials = 10\nsnr_db = 40\nbogus = 1\n",
        "matrix_file = gone.txt\nn = 2\ntrials = 10\nsnr_db = 40\n",
    ] {
        let cfg = write(dir.path(), "bad.cfg", body);
        let out = ifc().arg("simulate").arg(&cfg).output().unwrap();
        assert_exit(&out, 2);
    }
}
