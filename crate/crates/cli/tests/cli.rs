use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_esc-pde"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

const SHORT_ESC: &str = r#"
name = "short"
[solver]
t_final = 3.0
[output]
snapshot_every = 200
"#;

fn stdout_value(out: &Output, key: &str) -> f64 {
    let text = String::from_utf8_lossy(&out.stdout);
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}: ")))
        .unwrap_or_else(|| panic!("{key} missing in {text}"))
        .parse()
        .unwrap()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn checksums(dir: &Path) -> Vec<(String, String)> {
    manifest(dir)["files"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| (f["file"].as_str().unwrap().to_string(), f["sha256"].as_str().unwrap().to_string()))
        .collect()
}

#[test]
fn run_writes_listed_files_and_reproduces_checksums() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "short.toml", SHORT_ESC);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let o = run(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let sums = checksums(&a);
    let names: Vec<&str> = sums.iter().map(|(f, _)| f.as_str()).collect();
    for f in ["trajectory.csv", "field.csv", "report.txt", "y.svg", "control.svg", "theta.svg", "dither.svg", "field.svg"] {
        assert!(names.contains(&f), "{f} not in {names:?}");
    }
    for (file, sum) in &sums {
        let bytes = fs::read(a.join(file)).unwrap();
        let hex: String = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
        assert_eq!(&hex, sum, "{file}");
    }
    assert_eq!(sums, checksums(&b));
    let header = fs::read_to_string(a.join("trajectory.csv")).unwrap();
    assert!(header.starts_with("t,theta,Theta,y,U,G_hat,H_hat,S,vartheta\n"));
    assert!(fs::read_to_string(a.join("field.csv")).unwrap().starts_with("t,x,alpha\n"));
    assert!(!a.join(".failed").exists());
}

#[test]
fn forbidden_gain_is_rejected_without_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "bad.toml", "[controller]\nk_bar = -2.4674011002723395\n");
    let out = tmp.path().join("out");
    let o = run(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("forbidden"));
    assert!(!out.exists());
}

#[test]
fn non_unit_diffusion_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "eps.toml", "[actuator]\ndiffusion = 0.5\n");
    let o = run(&["run", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("diffusion"));
}

#[test]
fn empty_config_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "empty.toml", "# nothing here\n");
    let o = run(&["run", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn late_failure_leaves_marker() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "avg.toml",
        "kind = \"average\"\n[solver]\nt_final = 0.5\n[average]\ndecay_window = 0.0\n",
    );
    let out = tmp.path().join("o");
    let o = run(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let marker = fs::read_to_string(out.join(".failed")).unwrap();
    assert!(marker.contains("window"), "{marker}");
    assert!(!out.join("manifest.json").exists());
}

#[test]
fn design_dither_values() {
    let o = run(&["design-dither", "--a", "0.2", "--omega", "10", "--L", "1"]);
    assert!(o.status.success());
    let (a1, phi1) = (stdout_value(&o, "A"), stdout_value(&o, "phi"));
    assert!((a1 - 0.13481635708410035).abs() < 1e-9);
    assert!((phi1 + 1.4396055397645697).abs() < 1e-9);
    assert!(stdout_value(&o, "identity_max_residual") < 1e-12);

    let o = run(&["design-dither", "--a", "0.4", "--omega", "10", "--L", "1"]);
    assert!((stdout_value(&o, "A") - 2.0 * a1).abs() < 1e-9);
    assert_eq!(stdout_value(&o, "phi"), phi1);

    let o = run(&["design-dither", "--a", "0.2", "--omega", "25", "--L", "1"]);
    assert!((stdout_value(&o, "A") - 2.0 * 0.029160657101142774).abs() < 1e-9);
    assert!((stdout_value(&o, "phi") + 2.750738157467477).abs() < 1e-9);

    let o = run(&["design-dither", "--a", "0.2", "--omega", "10", "--L", "1", "--formula", "published"]);
    assert!((stdout_value(&o, "A") - 0.1356).abs() < 1e-4);
    assert!((stdout_value(&o, "phi") + 1.4618).abs() < 5e-4);
}

#[test]
fn design_dither_table_has_one_period() {
    let o = run(&["design-dither", "--a", "0.2", "--omega", "10", "--L", "1", "--samples", "8"]);
    let text = String::from_utf8_lossy(&o.stdout);
    let table: Vec<&str> = text.lines().skip_while(|l| !l.starts_with("t,S")).collect();
    assert_eq!(table.len(), 9);
    for row in &table[1..] {
        let v: Vec<f64> = row.split(',').map(|x| x.parse().unwrap()).collect();
        assert!((v[2] - v[3]).abs() < 1e-9, "{row}");
    }
}

#[test]
fn design_dither_rejects_non_positive_input() {
    for args in [["--a", "-1", "--omega", "10", "--L", "1"], ["--a", "0.2", "--omega", "0", "--L", "1"]] {
        let o = bin().arg("design-dither").args(args).output().unwrap();
        assert_eq!(o.status.code(), Some(2));
    }
}

#[test]
fn single_value_sweep_is_inconclusive() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "short.toml", SHORT_ESC);
    let out = tmp.path().join("sweep");
    let o = run(&["sweep", "--config", cfg.to_str().unwrap(), "--param", "a", "--values", "0.2", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.contains("inconclusive: true"), "{summary}");
    assert!(out.join("a_0.2").join("manifest.json").exists());
}

#[test]
fn gain_sweep_isolates_forbidden_value() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "short.toml", SHORT_ESC);
    let out = tmp.path().join("sweep");
    let o = bin()
        .env("ESC_THREADS", "2")
        .args(["sweep", "--config", cfg.to_str().unwrap(), "--param", "K", "--values", "0.2,1.2337005501361697,0.3"])
        .args(["--out", out.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(o.status.success());
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.contains("failed: 1"), "{summary}");
    assert!(summary.contains("forbidden"));
    assert!(out.join("K_0.2/manifest.json").exists());
    assert!(out.join("K_0.3/manifest.json").exists());
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().filter(|l| l.contains(",failed,")).count(), 1);
}

#[test]
fn amplitude_sweep_reports_exponents() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "sweep.toml",
        "[solver]\nt_final = 40.0\n[output]\nplots = false\nresidual_window = 0.25\n[sweep]\nparam = \"a\"\nvalues = [0.2, 0.1, 0.05]\n",
    );
    let out = tmp.path().join("sweep");
    let o = run(&["sweep", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    let get = |k: &str| -> f64 {
        summary
            .lines()
            .find_map(|l| l.strip_prefix(&format!("{k}: ")))
            .unwrap()
            .parse()
            .unwrap()
    };
    assert!((get("y_exponent") - 2.0).abs() < 0.3, "{summary}");
    assert!((get("theta_exponent") - 1.0).abs() < 0.2, "{summary}");
}

#[test]
fn sweep_without_param_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "short.toml", SHORT_ESC);
    let o = run(&["sweep", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("s").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bundled_configs_run() {
    let tmp = tempfile::tempdir().unwrap();
    for name in ["average_system", "gain_probe", "standard_esc"] {
        let out = tmp.path().join(name);
        let cfg = configs().join(format!("{name}.toml"));
        let o = run(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{name}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(out.join("report.txt").exists());
    }
    let report = |name: &str| fs::read_to_string(tmp.path().join(name).join("report.txt")).unwrap();
    let nu = |text: &str| -> f64 {
        text.lines().find_map(|l| l.strip_prefix("nu_hat: ")).unwrap().parse().unwrap()
    };
    assert!(nu(&report("average_system")) > 0.0);
    assert!(nu(&report("gain_probe")) < 0.0);
    assert!(report("average_system").contains("w_boundary_max"));
}

#[test]
fn paper_baseline_config_matches_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    let body = fs::read_to_string(configs().join("paper_baseline.toml")).unwrap();
    let body = body.replace("t_final = 100.0", "t_final = 2.0");
    let cfg = write_config(tmp.path(), "p.toml", &body);
    let out = tmp.path().join("p");
    let o = run(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let report = fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(report.contains("K_bar: -0.4"));
    assert!(report.contains("scenario: paper_baseline"));
}
