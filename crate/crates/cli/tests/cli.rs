use std::path::PathBuf;
use std::process::{Command, Output};

fn scarsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scarsim"))
        .args(args)
        .env_remove("SCARSIM_THREADS")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("scarsim-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn basis_dimension() {
    let o = scarsim(&["basis", "--n", "4", "--bc", "pbc"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "7");
    let o = scarsim(&["basis", "--n", "4", "--bc", "obc", "--dump"]);
    let lines: Vec<String> = stdout(&o).lines().map(String::from).collect();
    assert_eq!(lines[0], "8");
    assert_eq!(lines.len(), 9);
    assert!(lines.contains(&"0x5".to_string()) && !lines.contains(&"0x3".to_string()));
}

#[test]
fn usage_errors_exit_one() {
    let o = scarsim(&["basis", "--bc", "pbc"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--n"));
    let o = scarsim(&["basis", "--n", "4", "--bcc", "pbc"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--bc"), "{}", stderr(&o));
    assert_eq!(scarsim(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(
        scarsim(&["basis", "--n", "4", "--bc", "ring"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn runtime_errors_exit_two() {
    let o = scarsim(&["ramp", "--n", "6", "--mu", "1", "--b", "10", "--sector"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("pole"));
}

#[test]
fn help_lists_every_flag() {
    let o = scarsim(&["sweep", "--help"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    for flag in [
        "--n",
        "--bc",
        "--mu-i",
        "--mu-f",
        "--extra-mu-f",
        "--dt",
        "--t-max",
        "--layers",
        "--config",
        "--threads",
        "--output",
    ] {
        assert!(text.contains(flag), "{flag} missing from help");
    }
    let top = stdout(&scarsim(&["--help"]));
    for cmd in [
        "basis",
        "hamiltonian",
        "quench",
        "sweep",
        "tdvp-orbit",
        "leakage-map",
        "dispersion",
        "towers",
        "ensembles",
        "ramp",
    ] {
        assert!(top.contains(cmd), "{cmd}");
    }
}

#[test]
fn flags_override_config() {
    let dir = scratch("override");
    let cfg = dir.join("basis.json");
    std::fs::write(&cfg, r#"{"n": 6, "bc": "obc"}"#).unwrap();
    let from_file = scarsim(&["basis", "--config", cfg.to_str().unwrap()]);
    assert_eq!(stdout(&from_file).trim(), "21");
    let overridden = scarsim(&["basis", "--config", cfg.to_str().unwrap(), "--bc", "pbc"]);
    assert_eq!(stdout(&overridden).trim(), "18");
    std::fs::write(&cfg, r#"{"n": 6, "colour": 1}"#).unwrap();
    assert_eq!(
        scarsim(&["basis", "--config", cfg.to_str().unwrap()])
            .status
            .code(),
        Some(1)
    );
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn sweep_from_config_is_reproducible() {
    let dir = scratch("sweep");
    let cfg = dir.join("sweep.json");
    std::fs::write(&cfg, r#"{"schema": 1, "n_sites": 8, "mu_i": "-1:1:1", "mu_f": "-1:1:0.5", "extra_mu_f": [-1.31]}"#).unwrap();
    let run = |name: &str, threads: &str| {
        let out = dir.join(name);
        let o = scarsim(&[
            "sweep",
            "--config",
            cfg.to_str().unwrap(),
            "--threads",
            threads,
            "-o",
            out.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        std::fs::read_to_string(out).unwrap()
    };
    let a = run("a.csv", "1");
    let b = run("b.csv", "2");
    assert_eq!(a, b);
    assert!(a.starts_with("mu_i,mu_f,delta_f,msd_n,ipr,delta_n,status\n"));
    assert_eq!(a.lines().count(), 1 + 3 * 6);
    assert!(a
        .lines()
        .skip(1)
        .all(|l| l.ends_with(",ok") && l.split(',').count() == 7));
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("a.json")).unwrap()).unwrap();
    assert_eq!(meta["config"]["n_sites"], 8);
    assert!(meta["version"].is_string() && meta["wall_seconds"].is_number());
    std::fs::write(&cfg, r#"{"schema": 7}"#).unwrap();
    assert_eq!(
        scarsim(&["sweep", "--config", cfg.to_str().unwrap()])
            .status
            .code(),
        Some(1)
    );
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn quench_table() {
    let o = scarsim(&[
        "quench",
        "--n",
        "10",
        "--initial",
        "zplus",
        "--mu-f",
        "0",
        "--t-max",
        "1",
        "--dt",
        "0.5",
        "--entropy",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let rows: Vec<Vec<f64>> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0][1], 1.0);
    assert!((rows[0][2] - 0.5).abs() < 1e-12);
}

#[test]
fn orbit_and_dispersion_tables() {
    let o = scarsim(&["tdvp-orbit", "--mu", "1.6", "--t-max", "2"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("t,theta,phi,energy,leakage\n"));
    let o = scarsim(&["dispersion", "--n", "10", "--mu", "0.6"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().count(), 1 + 6);
    let o = scarsim(&["towers", "--n", "10", "--mu-f", "0.6"]);
    let total: f64 = stdout(&o)
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap())
        .sum();
    assert!((total - 1.0).abs() < 1e-9);
}

#[test]
fn ensembles_and_leakage_tables() {
    let o = scarsim(&[
        "ensembles",
        "--n",
        "8",
        "--mu-i",
        "-1.31",
        "--mu-f",
        "0:1:0.5",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(
        stdout(&o).lines().next(),
        Some("mu_f,beta,n_th,n_diag,delta_n")
    );
    assert_eq!(stdout(&o).lines().count(), 4);
    let o = scarsim(&["leakage-map", "--n-theta", "3", "--n-phi", "2"]);
    assert_eq!(stdout(&o).lines().count(), 7);
}
