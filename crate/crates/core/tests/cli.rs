use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn rgann(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rgann"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn golf_config() -> String {
    repo().join("configs/golf.toml").display().to_string()
}

#[test]
fn stagewise_commands_chain() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = golf_config();
    let o = rgann(&["train", "--config", &cfg, "--seed", "3"], d);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let net = d.join("network_constructive.txt");
    assert_eq!(
        code(&rgann(
            &[
                "prune",
                "--config",
                &cfg,
                "--network",
                net.to_str().unwrap()
            ],
            d
        )),
        0
    );
    let pruned = d.join("network.txt");
    assert_eq!(
        code(&rgann(
            &[
                "cluster",
                "--config",
                &cfg,
                "--network",
                pruned.to_str().unwrap()
            ],
            d
        )),
        0
    );
    let clusters = d.join("clusters.json");
    let o = rgann(
        &[
            "extract",
            "--config",
            &cfg,
            "--network",
            pruned.to_str().unwrap(),
            "--clusters",
            clusters.to_str().unwrap(),
        ],
        d,
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rules = d.join("rules.txt");
    let o = rgann(
        &[
            "evaluate",
            "--config",
            &cfg,
            "--rules",
            rules.to_str().unwrap(),
        ],
        d,
    );
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("train: accuracy 1.0000"));
}

#[test]
fn experiment_seed_list_and_override() {
    let dir = tempfile::tempdir().unwrap();
    let o = rgann(
        &[
            "experiment",
            "--config",
            &golf_config(),
            "--seeds",
            "4,9",
            "--set",
            "prune.retrain_epochs_cap=40",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("seed_4/rules.txt").exists());
    assert!(dir.path().join("seed_9/rules.txt").exists());
    assert!(!dir.path().join("seed_1").exists());
    let csv = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert_eq!(
        csv.lines()
            .filter(|l| l.starts_with("4,") || l.starts_with("9,"))
            .count(),
        2
    );
}

#[test]
fn config_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(
        code(&rgann(
            &["pipeline", "--config", "/definitely/missing.toml"],
            d
        )),
        1
    );
    let bad = d.join("bad.toml");
    fs::write(
        &bad,
        "data = \"x.csv\"\nschema = \"y.toml\"\nunknown_key = 1\n",
    )
    .unwrap();
    assert_eq!(
        code(&rgann(&["pipeline", "--config", bad.to_str().unwrap()], d)),
        1
    );
    let cfg = golf_config();
    assert_eq!(
        code(&rgann(
            &[
                "pipeline",
                "--config",
                &cfg,
                "--set",
                "train.learning_rate=7"
            ],
            d
        )),
        1
    );
    assert_eq!(
        code(&rgann(
            &["pipeline", "--config", &cfg, "--set", "no_equals_sign"],
            d
        )),
        1
    );
    assert_eq!(
        code(&rgann(&["experiment", "--config", &cfg, "--seeds", "x"], d)),
        1
    );
}

#[test]
fn data_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let schema = repo().join("data/golf.toml");
    let write_cfg = |data: &str| {
        let p = d.join("cfg.toml");
        fs::write(
            &p,
            format!(
                "data = {data:?}\nschema = {:?}\n",
                schema.display().to_string()
            ),
        )
        .unwrap();
        p
    };
    let missing = write_cfg("no_such.csv");
    assert_eq!(
        code(&rgann(
            &["pipeline", "--config", missing.to_str().unwrap()],
            d
        )),
        2
    );
    fs::write(
        d.join("bad.csv"),
        "sunny,85,85,weak,dont_play\ncloudy,80,90,strong,play\n",
    )
    .unwrap();
    let bad = write_cfg("bad.csv");
    let o = rgann(&["pipeline", "--config", bad.to_str().unwrap()], d);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("row 1: unknown category"));
}

#[test]
fn invalid_artifacts_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = golf_config();
    let junk = d.join("junk.txt");
    fs::write(&junk, "not a network\n").unwrap();
    assert_eq!(
        code(&rgann(
            &[
                "prune",
                "--config",
                &cfg,
                "--network",
                junk.to_str().unwrap()
            ],
            d
        )),
        3
    );
    let rules = d.join("rules.txt");
    fs::write(&rules, "IF outlook = foggy THEN play\nDEFAULT play\n").unwrap();
    assert_eq!(
        code(&rgann(
            &[
                "evaluate",
                "--config",
                &cfg,
                "--rules",
                rules.to_str().unwrap()
            ],
            d
        )),
        3
    );
    // a breast-cancer network does not fit the golf inputs
    let bc = repo().join("configs/breast_cancer.toml");
    assert_eq!(
        code(&rgann(
            &["train", "--config", bc.to_str().unwrap(), "--seed", "8"],
            d
        )),
        0
    );
    let net = d.join("network_constructive.txt");
    assert_eq!(
        code(&rgann(
            &[
                "cluster",
                "--config",
                &cfg,
                "--network",
                net.to_str().unwrap()
            ],
            d
        )),
        3
    );
}
