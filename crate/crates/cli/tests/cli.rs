use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = r#"
n_workers = 2
batch_per_worker = 8
epochs = 2
seeds = [1, 2]
output_dir = "from_config"

[model]
kind = "logistic_regression"

[dataset]
kind = "two_gaussians"
n = 128
input_dim = 3
noise = 1.0

[lr]
base = 0.1

[[strategy]]
kind = "full_sync"

[[strategy]]
p = 4
"#;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_periodavg"));
    c.env_remove("PERIODAVG_OUTPUT_DIR");
    c
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let p = dir.join("exp.toml");
    std::fs::write(&p, text).unwrap();
    p
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn run_writes_csvs_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let out = bin().arg("run").arg(&cfg).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let od = dir.path().join("from_config");
    for f in ["fullsgd_seed1.csv", "fullsgd_seed2.csv", "cpsgd_p4_seed1.csv", "cpsgd_p4_seed2.csv", "summary.csv"] {
        assert!(od.join(f).exists(), "missing {f}");
    }
    let text = stdout(&out);
    let fullsgd = text.find("fullsgd").unwrap();
    let cpsgd = text.find("cpsgd_p4").unwrap();
    assert!(fullsgd < cpsgd, "config order expected:\n{text}");
}

#[test]
fn output_dir_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let env_dir = dir.path().join("env");
    let flag_dir = dir.path().join("flag");

    let out = bin().arg("run").arg(&cfg).env("PERIODAVG_OUTPUT_DIR", &env_dir).output().unwrap();
    assert!(out.status.success());
    assert!(env_dir.join("summary.csv").exists());
    assert!(!dir.path().join("from_config").exists());

    let out = bin()
        .arg("run")
        .arg(&cfg)
        .arg("--output-dir")
        .arg(&flag_dir)
        .env("PERIODAVG_OUTPUT_DIR", dir.path().join("unused"))
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(flag_dir.join("summary.csv").exists());
    assert!(!dir.path().join("unused").exists());
}

#[test]
fn parallel_runs_give_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(bin().arg("run").arg(&cfg).arg("--output-dir").arg(&a).output().unwrap().status.success());
    assert!(bin()
        .arg("run")
        .arg(&cfg)
        .arg("--output-dir")
        .arg(&b)
        .arg("--parallel-runs")
        .arg("4")
        .output()
        .unwrap()
        .status
        .success());
    for f in ["fullsgd_seed1.csv", "cpsgd_p4_seed2.csv", "summary.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), &CONFIG.replace("p = 4", "p_init = 4\nks_fraction = 1.5"));
    for cmd in ["run", "validate"] {
        let out = bin().arg(cmd).arg(&bad).output().unwrap();
        assert_eq!(out.status.code(), Some(2), "{cmd}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("ks_fraction"));
    }
}

#[test]
fn validate_ok() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let out = bin().arg("validate").arg(&cfg).output().unwrap();
    assert!(out.status.success());
    assert!(stdout(&out).contains("4 runs"));
    assert!(!dir.path().join("from_config").exists());
}

#[test]
fn diverging_run_exits_1_and_leaves_marker() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &CONFIG
            .replace("kind = \"logistic_regression\"", "kind = \"linear_regression_mse\"")
            .replace("kind = \"two_gaussians\"", "kind = \"linreg_gaussian\"")
            .replace("base = 0.1", "base = 1e100"),
    );
    let out = bin().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(dir.path().join("from_config/fullsgd_seed1.FAILED").exists());
}

#[test]
fn summarize_rebuilds_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let run = bin().arg("run").arg(&cfg).output().unwrap();
    assert!(run.status.success());
    let out = bin().arg("summarize").arg(dir.path().join("from_config")).output().unwrap();
    assert!(out.status.success());
    let text = stdout(&out);
    // sorted by name here, so cpsgd comes first
    assert!(text.find("cpsgd_p4").unwrap() < text.find("fullsgd").unwrap());
    let row = |t: &str, name: &str| t.lines().find(|l| l.starts_with(name)).unwrap().to_string();
    assert_eq!(row(&text, "fullsgd"), row(&stdout(&run), "fullsgd"));
}

#[test]
fn summarize_empty_dir_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin().arg("summarize").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn shipped_configs_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let out = bin().arg("validate").arg(&path).output().unwrap();
            assert!(out.status.success(), "{}: {}", path.display(), String::from_utf8_lossy(&out.stderr));
            seen += 1;
        }
    }
    assert!(seen >= 2);
}
