use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use fedpg_core::graph::{edge_homophily, load_graph};

fn fedpg(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fedpg"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const TOY: &str = "# toy federation\nnum_clients = 2\nrounds = 3\nlocal_epochs = 3\nserver_epochs = 10\nproto_dim = 4\nhidden_dim = 6\nlr = 0.05\npartition = balanced\n";

/// Generates a small SBM dataset and a config file inside `dir`.
fn setup(dir: &Path) {
    let o = fedpg(
        &[
            "gen-data",
            "sbm",
            "--blocks",
            "30,30,30",
            "--features",
            "6",
            "--p-in",
            "0.2",
            "--seed",
            "4",
            "--out",
            "g",
        ],
        dir,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    fs::write(dir.join("toy.cfg"), TOY).unwrap();
}

fn run(dir: &Path, out: &str, extra: &[&str]) -> Output {
    let mut args = vec!["run", "g", "--config", "toy.cfg", "--out", out];
    args.extend_from_slice(extra);
    fedpg(&args, dir)
}

#[test]
fn config_errors_exit_with_code_two() {
    let tmp = tempfile::tempdir().unwrap();
    setup(tmp.path());
    let cases: [(&[&str], &str); 4] = [
        (
            &["run", "g", "--config", "absent.cfg", "--out", "o"],
            "CONFIG_NOT_FOUND",
        ),
        (
            &["run", "g", "--config", "toy.cfg", "--set", "alpha=1.5", "--out", "o"],
            "CONFIG_RANGE",
        ),
        (
            &["run", "g", "--config", "toy.cfg", "--set", "colour=blue", "--out", "o"],
            "CONFIG_UNKNOWN_KEY",
        ),
        (&["run", "g", "--set", "alpha", "--out", "o"], "CONFIG_SYNTAX"),
    ];
    for (args, code) in cases {
        let o = fedpg(args, tmp.path());
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        let err = stderr(&o);
        assert_eq!(err.lines().count(), 1, "{err}");
        assert!(err.starts_with(&format!("error {code}: ")), "{err}");
    }
    assert!(!tmp.path().join("o").exists());
}

#[test]
fn missing_dataset_is_a_runtime_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = fedpg(&["run", "nowhere", "--out", "o"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error IO: "));
}

#[test]
fn toy_run_writes_all_outputs_and_echo_is_stable() {
    let tmp = tempfile::tempdir().unwrap();
    setup(tmp.path());
    let a = run(tmp.path(), "a", &["--seed", "3"]);
    let b = run(tmp.path(), "b", &["--seed", "3"]);
    assert!(a.status.success(), "{}", stderr(&a));
    for name in ["metrics.csv", "ledger.csv", "summary.json"] {
        assert!(tmp.path().join("a").join(name).is_file(), "{name}");
    }
    let echo = |o: &Output| {
        let s = stdout(o);
        let end = s.find("\n}\n").unwrap() + 2;
        s[..end].to_string()
    };
    assert_eq!(echo(&a), echo(&b));
    let cfg: serde_json::Value = serde_json::from_str(&echo(&a)).unwrap();
    assert_eq!(cfg["init_seed"], 3);
    assert_eq!(cfg["num_clients"], 2);
    for name in ["metrics.csv", "ledger.csv"] {
        assert_eq!(
            fs::read(tmp.path().join("a").join(name)).unwrap(),
            fs::read(tmp.path().join("b").join(name)).unwrap()
        );
    }
}

#[test]
fn generators_honour_their_parameters() {
    let tmp = tempfile::tempdir().unwrap();
    let o = fedpg(
        &["gen-data", "sbm", "--blocks", "20,20,20", "--p-out", "0", "--out", "s"],
        tmp.path(),
    );
    assert!(o.status.success());
    let g = load_graph(tmp.path().join("s")).unwrap();
    assert!(g.connected_components().0 >= 3);

    let o = fedpg(
        &[
            "gen-data",
            "homophily",
            "--nodes",
            "300",
            "--homophily",
            "1.0",
            "--out",
            "h",
        ],
        tmp.path(),
    );
    assert!(o.status.success());
    assert_eq!(edge_homophily(&load_graph(tmp.path().join("h")).unwrap()), 1.0);

    let o = fedpg(
        &[
            "gen-data",
            "homophily",
            "--nodes",
            "10",
            "--homophily",
            "1.5",
            "--out",
            "x",
        ],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stderr(&o).lines().count(), 1);
}

#[test]
fn partition_preview_lists_every_client() {
    let tmp = tempfile::tempdir().unwrap();
    setup(tmp.path());
    let o = fedpg(
        &["partition", "g", "--clients", "3", "--method", "balanced"],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let nodes: usize = out
        .lines()
        .skip(1)
        .take(3)
        .map(|l| l.split('\t').nth(1).unwrap().parse::<usize>().unwrap())
        .sum();
    assert_eq!(nodes, 90);
}

/// Node-weighted test accuracy of the last round, straight from the CSV.
fn final_accuracy_from_metrics(dir: &Path) -> f64 {
    let text = fs::read_to_string(dir.join("metrics.csv")).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    let last = rows.iter().map(|r| r[0].parse::<usize>().unwrap()).max().unwrap();
    let (mut num, mut den) = (0.0, 0.0);
    for r in rows
        .iter()
        .filter(|r| r[0].parse::<usize>().unwrap() == last && r[2] == "test")
    {
        let n: f64 = r[5].parse().unwrap();
        num += r[3].parse::<f64>().unwrap() * n;
        den += n;
    }
    num / den
}

#[test]
fn report_agrees_with_summaries_and_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    setup(tmp.path());
    assert!(run(tmp.path(), "pg", &["--set", "method=fedpg"]).status.success());
    assert!(run(tmp.path(), "naive", &["--set", "method=fedproto-naive"])
        .status
        .success());

    let before: Vec<Vec<u8>> = ["metrics.csv", "ledger.csv", "summary.json"]
        .iter()
        .map(|n| fs::read(tmp.path().join("pg").join(n)).unwrap())
        .collect();
    let o = fedpg(&["report", "pg", "naive", "--curves", "c.csv"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let after: Vec<Vec<u8>> = ["metrics.csv", "ledger.csv", "summary.json"]
        .iter()
        .map(|n| fs::read(tmp.path().join("pg").join(n)).unwrap())
        .collect();
    assert_eq!(before, after);

    let table = stdout(&o);
    let rows: Vec<Vec<&str>> = table.lines().skip(1).map(|l| l.split('\t').collect()).collect();
    assert_eq!(rows.len(), 2);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("pg/summary.json")).unwrap()).unwrap();
    assert_eq!(rows[0][1], "fedpg");
    assert_eq!(
        rows[0][3].parse::<f64>().unwrap(),
        summary["final_accuracy"].as_f64().unwrap()
    );
    assert_eq!(
        rows[0][4].parse::<f64>().unwrap(),
        summary["best_accuracy"].as_f64().unwrap()
    );
    assert_eq!(
        rows[0][5].parse::<u64>().unwrap(),
        summary["best_round"].as_u64().unwrap()
    );
    assert_eq!(
        rows[0][6].parse::<u64>().unwrap(),
        summary["total_bytes_up"].as_u64().unwrap()
    );
    assert_eq!(
        rows[0][7].parse::<u64>().unwrap(),
        summary["total_bytes_down"].as_u64().unwrap()
    );

    let delta =
        final_accuracy_from_metrics(&tmp.path().join("naive")) - final_accuracy_from_metrics(&tmp.path().join("pg"));
    assert!((rows[1][8].parse::<f64>().unwrap() - delta).abs() <= 1e-12);

    let curves = fs::read_to_string(tmp.path().join("c.csv")).unwrap();
    let mut series: Vec<&str> = curves.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    series.dedup();
    assert_eq!(series, vec!["fedpg", "fedproto-naive"]);

    let again = fedpg(&["report", "pg", "naive", "--curves", "c2.csv"], tmp.path());
    assert_eq!(stdout(&again), table);
    assert_eq!(fs::read(tmp.path().join("c2.csv")).unwrap(), curves.as_bytes());
}
