//! Run summaries rebuilt from the emitted files alone: accuracies come from
//! metrics.csv, traffic from ledger.csv and only the method name from
//! summary.json.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use fedpg_core::engine::fmt17;

pub struct RunReport {
    pub name: String,
    pub method: String,
    /// Global test accuracy per round, in round order.
    pub curve: Vec<(usize, f64)>,
    pub bytes_up: u64,
    pub bytes_down: u64,
}

impl RunReport {
    pub fn final_accuracy(&self) -> f64 {
        self.curve.last().map_or(0.0, |c| c.1)
    }

    /// Best accuracy and its round; the earliest round wins ties.
    pub fn best(&self) -> (f64, usize) {
        let mut best = (f64::NEG_INFINITY, 0);
        for &(r, a) in &self.curve {
            if a > best.0 {
                best = (a, r);
            }
        }
        (best.0.max(0.0), best.1)
    }
}

fn reader(path: &Path) -> anyhow::Result<csv::Reader<fs::File>> {
    csv::Reader::from_path(path).with_context(|| format!("cannot read {}", path.display()))
}

pub fn load_run(dir: &Path) -> anyhow::Result<RunReport> {
    // round -> (sum of accuracy * nodes, nodes)
    let mut rounds: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    let path = dir.join("metrics.csv");
    for row in reader(&path)?.records() {
        let row = row.with_context(|| format!("malformed row in {}", path.display()))?;
        let field = |i: usize| row.get(i).ok_or_else(|| anyhow!("short row in {}", path.display()));
        let round: usize = field(0)?.parse()?;
        let entry = rounds.entry(round).or_insert((0.0, 0));
        if field(2)? == "test" {
            let acc: f64 = field(3)?.parse()?;
            let n: usize = field(5)?.parse()?;
            entry.0 += acc * n as f64;
            entry.1 += n;
        }
    }
    let curve = rounds
        .into_iter()
        .map(|(r, (num, den))| (r, if den == 0 { 0.0 } else { num / den as f64 }))
        .collect();

    let (mut bytes_up, mut bytes_down) = (0u64, 0u64);
    let path = dir.join("ledger.csv");
    for row in reader(&path)?.records() {
        let row = row.with_context(|| format!("malformed row in {}", path.display()))?;
        bytes_up += row.get(2).unwrap_or("0").parse::<u64>()?;
        bytes_down += row.get(3).unwrap_or("0").parse::<u64>()?;
    }

    let path = dir.join("summary.json");
    let text = fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
    let summary: serde_json::Value = serde_json::from_str(&text)?;
    let method = summary["method"].as_str().unwrap_or("unknown").to_string();

    Ok(RunReport {
        name: dir
            .file_name()
            .map_or_else(|| dir.display().to_string(), |n| n.to_string_lossy().into_owned()),
        method,
        curve,
        bytes_up,
        bytes_down,
    })
}

/// Table of final and best accuracy plus traffic, one row per run. The
/// last column is the final-accuracy difference to the first run.
pub fn table(runs: &[RunReport]) -> String {
    let mut s = String::from(
        "run\tmethod\trounds\tfinal_accuracy\tbest_accuracy\tbest_round\tbytes_up\tbytes_down\tdelta_final\n",
    );
    let base = runs.first().map_or(0.0, |r| r.final_accuracy());
    for r in runs {
        let (best, best_round) = r.best();
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.name,
            r.method,
            r.curve.len(),
            fmt17(r.final_accuracy()),
            fmt17(best),
            best_round,
            r.bytes_up,
            r.bytes_down,
            fmt17(r.final_accuracy() - base)
        );
    }
    s
}

pub fn curves_csv(runs: &[RunReport]) -> String {
    let mut s = String::from("run,method,round,global_accuracy\n");
    for r in runs {
        for &(round, acc) in &r.curve {
            let _ = writeln!(s, "{},{},{},{}", r.name, r.method, round, fmt17(acc));
        }
    }
    s
}

/// Loads every run, writes `curves` and returns the table.
pub fn report(dirs: &[PathBuf], curves: &Path) -> anyhow::Result<String> {
    let runs = dirs.iter().map(|d| load_run(d)).collect::<anyhow::Result<Vec<_>>>()?;
    fs::write(curves, curves_csv(&runs)).with_context(|| format!("cannot write {}", curves.display()))?;
    Ok(table(&runs))
}
