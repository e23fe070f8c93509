use std::path::Path;
use std::process::{Command, Output};

fn hscl(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hscl"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    std::fs::write(dir.join(name), text).unwrap();
    name.to_string()
}

#[test]
fn verify_default_config_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = hscl(&["verify", "--out", "v"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("v/verify_report.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], true);
    assert_eq!(report["tilt"]["trials"], 1000);
    assert_eq!(report["loss_bound"]["violations"], 0);
}

#[test]
fn verify_negative_control_fails_with_first_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "neg.conf", "verify.hardenings = exp_tilt:-1\n");
    let out = hscl(&["verify", "--config", &cfg, "--out", "v"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("v/verify_report.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], false);
    assert!(report["first_failure"].as_str().unwrap().contains("exp_tilt:-1"));
}

#[test]
fn empty_population_file_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "empty.csv", "");
    let cfg = write(dir.path(), "c.conf", "data.population = empty.csv\n");
    let out = hscl(&["verify", "--config", &cfg, "--out", "v"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.conf", "train.batchsize = 32\n");
    let out = hscl(&["train", "--config", &cfg, "--out", "t"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("batchsize"));
}

#[test]
fn one_epoch_smoke_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.conf", "train.epochs = 1\nmixture.n_per_class = 20\n");
    let out = hscl(&["train", "--config", &cfg, "--out", "t"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let history = std::fs::read_to_string(dir.path().join("t/history.csv")).unwrap();
    let lines: Vec<&str> = history.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(
        lines[0],
        "epoch,train_loss,loss_ucl,loss_scl,loss_hucl,loss_hscl,assumption_fraction,probe_accuracy"
    );
    assert!(lines[1].starts_with("1,"));
    assert_eq!(lines[1].split(',').count(), 8);
    assert!(dir.path().join("t/weights.shape").exists());
    assert!(dir.path().join("t/weights.bin").exists());
}

#[test]
fn seed_flag_changes_history() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.conf", "train.epochs = 2\nmixture.n_per_class = 20\n");
    let run = |out: &str, seed: &str| {
        let o = hscl(&["train", "--config", &cfg, "--seed", seed, "--out", out], dir.path());
        assert!(o.status.success());
        std::fs::read(dir.path().join(out).join("history.csv")).unwrap()
    };
    assert_eq!(run("a", "3"), run("b", "3"));
    assert_ne!(run("a", "3"), run("c", "4"));
}

#[test]
fn compare_emits_one_row_per_method() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.conf",
        "train.epochs = 2\nmixture.n_per_class = 20\ncompare.methods = UCL, H-UCL, SCL, H-SCL\ncompare.seeds = 0, 1\n",
    );
    let out = hscl(&["compare", "--config", &cfg, "--out", "c"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("c/comparison.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "setting,mean_acc,std_acc,n_seeds");
    assert_eq!(lines.len(), 5);
    for line in &lines[1..] {
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells.len(), 4);
        let acc: f64 = cells[1].parse().unwrap();
        assert!((0.0..=1.0).contains(&acc));
        assert_eq!(cells[3], "2");
    }
}

#[test]
fn compare_single_method_single_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.conf",
        "train.epochs = 1\nmixture.n_per_class = 20\ncompare.methods = SCL\ncompare.seeds = 7\n",
    );
    let out = hscl(&["compare", "--config", &cfg, "--out", "c"], dir.path());
    assert!(out.status.success());
    let csv = std::fs::read_to_string(dir.path().join("c/comparison.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn make_data_is_reproducible_and_loadable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.conf", "mixture.n_classes = 3\nmixture.n_per_class = 5\nmixture.ambient_dim = 4\n");
    for out in ["a", "b"] {
        assert!(hscl(&["make-data", "--config", &cfg, "--out", out], dir.path()).status.success());
    }
    let a = std::fs::read(dir.path().join("a/population.csv")).unwrap();
    assert_eq!(a, std::fs::read(dir.path().join("b/population.csv")).unwrap());
    let pop = hscl_core::Population::load_csv(&dir.path().join("a/population.csv")).unwrap();
    assert_eq!(pop.len(), 15);
    assert_eq!(pop.feature_dim(), 4);

    // The generated file feeds back in as a population.
    let cfg2 = write(
        dir.path(),
        "d.conf",
        "data.population = a/population.csv\ntrain.epochs = 1\ntrain.batch_size = 8\n",
    );
    let out = hscl(&["train", "--config", &cfg2, "--out", "t"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn missing_subcommand_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = hscl(&[], dir.path());
    assert_eq!(out.status.code(), Some(2));
}
