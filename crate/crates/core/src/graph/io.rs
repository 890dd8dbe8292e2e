//! Dataset directory format: `edges.tsv`, `features.csv`, `labels.csv`,
//! `splits.csv` and `meta.json`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Graph, Split};
use crate::error::{FedError, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct Meta {
    num_nodes: usize,
    num_features: usize,
    num_classes: usize,
}

fn read(dir: &Path, name: &str) -> Result<String> {
    let path = dir.join(name);
    fs::read_to_string(&path).map_err(|e| FedError::io(path, e))
}

fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

/// Loads and normalizes a dataset directory. Errors name the offending
/// file and 1-based line.
pub fn load_graph(dir: impl AsRef<Path>) -> Result<Graph> {
    let dir = dir.as_ref();
    for name in ["edges.tsv", "features.csv", "labels.csv", "splits.csv"] {
        if !dir.join(name).is_file() {
            return Err(FedError::io(
                dir.join(name),
                std::io::Error::new(std::io::ErrorKind::NotFound, "missing dataset file"),
            ));
        }
    }
    let meta: Option<Meta> = if dir.join("meta.json").is_file() {
        let text = read(dir, "meta.json")?;
        Some(serde_json::from_str(&text).map_err(|e| FedError::data("meta.json", e.line(), e.to_string()))?)
    } else {
        None
    };

    let mut rows: Vec<f64> = Vec::new();
    let mut width: Option<usize> = meta.map(|m| m.num_features);
    let mut n_feat_rows = 0;
    let text = read(dir, "features.csv")?;
    for (line_no, line) in lines(&text) {
        let mut count = 0;
        for tok in line.split(',') {
            let x: f64 = tok
                .trim()
                .parse()
                .map_err(|_| FedError::data("features.csv", line_no, format!("not a number: `{}`", tok.trim())))?;
            rows.push(x);
            count += 1;
        }
        match width {
            Some(w) if w != count => {
                return Err(FedError::data(
                    "features.csv",
                    line_no,
                    format!("ragged row: {count} values, expected {w}"),
                ))
            }
            None => width = Some(count),
            _ => {}
        }
        n_feat_rows += 1;
    }

    let text = read(dir, "labels.csv")?;
    let mut labels = Vec::new();
    let mut label_lines = Vec::new();
    for (line_no, line) in lines(&text) {
        let y: usize = line
            .parse()
            .map_err(|_| FedError::data("labels.csv", line_no, format!("not a class id: `{line}`")))?;
        labels.push(y);
        label_lines.push(line_no);
    }
    let n = meta.map_or(labels.len(), |m| m.num_nodes);
    let num_classes = meta.map_or_else(|| labels.iter().max().map_or(1, |m| m + 1), |m| m.num_classes);
    for (&y, &line_no) in labels.iter().zip(&label_lines) {
        if y >= num_classes {
            return Err(FedError::data(
                "labels.csv",
                line_no,
                format!("label {y} >= declared class count {num_classes}"),
            ));
        }
    }
    if labels.len() != n {
        return Err(FedError::data(
            "labels.csv",
            labels.len(),
            format!("{} labels for {n} nodes", labels.len()),
        ));
    }
    if n_feat_rows != n {
        return Err(FedError::data(
            "features.csv",
            n_feat_rows,
            format!("{n_feat_rows} feature rows for {n} nodes"),
        ));
    }

    let text = read(dir, "splits.csv")?;
    let mut splits = Vec::with_capacity(n);
    for (line_no, line) in lines(&text) {
        let s = Split::parse(line)
            .ok_or_else(|| FedError::data("splits.csv", line_no, format!("unknown split tag `{line}`")))?;
        splits.push(s);
    }
    if splits.len() != n {
        return Err(FedError::data(
            "splits.csv",
            splits.len(),
            format!("{} split tags for {n} nodes", splits.len()),
        ));
    }

    let text = read(dir, "edges.tsv")?;
    let mut edges = Vec::new();
    for (line_no, line) in lines(&text) {
        let mut it = line.split_whitespace();
        let parse = |it: &mut std::str::SplitWhitespace| -> Result<usize> {
            let tok = it
                .next()
                .ok_or_else(|| FedError::data("edges.tsv", line_no, "expected two node ids"))?;
            let id: usize = tok
                .parse()
                .map_err(|_| FedError::data("edges.tsv", line_no, format!("bad node id `{tok}`")))?;
            if id >= n {
                return Err(FedError::data(
                    "edges.tsv",
                    line_no,
                    format!("node id {id} out of range for {n} nodes"),
                ));
            }
            Ok(id)
        };
        let u = parse(&mut it)?;
        let v = parse(&mut it)?;
        edges.push((u, v));
    }

    let features = Matrix::from_vec(n, width.unwrap_or(0), rows);
    Graph::new(num_classes, edges, features, labels, splits)
}

/// Writes `g` in the dataset directory format, creating `dir` if needed.
pub fn save_graph(g: &Graph, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| FedError::io(dir, e))?;
    let write = |name: &str, body: String| -> Result<()> {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| FedError::io(path, e))
    };

    let mut s = String::new();
    for &(u, v) in g.edges() {
        let _ = writeln!(s, "{u}\t{v}");
    }
    write("edges.tsv", s)?;

    let mut s = String::new();
    for i in 0..g.num_nodes() {
        let row = g.features().row(i);
        for (j, x) in row.iter().enumerate() {
            if j > 0 {
                s.push(',');
            }
            let _ = write!(s, "{x}");
        }
        s.push('\n');
    }
    write("features.csv", s)?;

    let mut s = String::new();
    for y in g.labels() {
        let _ = writeln!(s, "{y}");
    }
    write("labels.csv", s)?;

    let mut s = String::new();
    for sp in g.splits() {
        let _ = writeln!(s, "{}", sp.as_str());
    }
    write("splits.csv", s)?;

    let meta = Meta {
        num_nodes: g.num_nodes(),
        num_features: g.num_features(),
        num_classes: g.num_classes(),
    };
    write("meta.json", serde_json::to_string_pretty(&meta).unwrap() + "\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_dir(dir: &Path, edges: &str, features: &str, labels: &str, splits: &str) {
        fs::write(dir.join("edges.tsv"), edges).unwrap();
        fs::write(dir.join("features.csv"), features).unwrap();
        fs::write(dir.join("labels.csv"), labels).unwrap();
        fs::write(dir.join("splits.csv"), splits).unwrap();
    }

    #[test]
    fn loads_path_graph() {
        let tmp = tempfile::tempdir().unwrap();
        write_dir(
            tmp.path(),
            "0 1\n1\t2\n",
            "1,0\n0,1\n1,1\n",
            "0\n1\n0\n",
            "train\nval\ntest\n",
        );
        let g = load_graph(tmp.path()).unwrap();
        assert_eq!(g.num_nodes(), 3);
        assert_eq!(g.num_edges(), 2);
        assert_eq!(g.adjacency().nnz(), 2 * 2 + 3);
        assert_eq!(g.splits(), &[Split::Train, Split::Val, Split::Test]);
    }

    #[test]
    fn reversed_and_duplicate_edges_collapse() {
        let tmp = tempfile::tempdir().unwrap();
        write_dir(
            tmp.path(),
            "0\t1\n1\t0\n0\t1\n0\t0\n",
            "1\n2\n",
            "0\n0\n",
            "train\ntest\n",
        );
        let g = load_graph(tmp.path()).unwrap();
        assert_eq!(g.edges(), &[(0, 1)]);
        assert_eq!(g.neighbors(0), &[0, 1]);
    }

    #[test]
    fn reports_file_and_line() {
        let tmp = tempfile::tempdir().unwrap();
        write_dir(tmp.path(), "0\t1\n", "1,2\n3\n", "0\n0\n", "train\ntest\n");
        let err = load_graph(tmp.path()).unwrap_err();
        assert_eq!(err.code(), "DATA_FORMAT");
        assert!(err.to_string().starts_with("features.csv:2"), "{err}");

        write_dir(tmp.path(), "0\t1\n1\t5\n", "1\n3\n", "0\n0\n", "train\ntest\n");
        let err = load_graph(tmp.path()).unwrap_err();
        assert!(err.to_string().starts_with("edges.tsv:2"), "{err}");

        write_dir(tmp.path(), "0\t1\n", "1\n3\n", "0\n2\n", "train\ntest\n");
        fs::write(
            tmp.path().join("meta.json"),
            r#"{"num_nodes": 2, "num_features": 1, "num_classes": 2}"#,
        )
        .unwrap();
        let err = load_graph(tmp.path()).unwrap_err();
        assert!(err.to_string().starts_with("labels.csv:2"), "{err}");
    }

    #[test]
    fn missing_file_is_an_io_error() {
        let tmp = tempfile::tempdir().unwrap();
        let err = load_graph(tmp.path()).unwrap_err();
        assert_eq!(err.code(), "IO");
        assert!(err.to_string().contains("edges.tsv"));
    }

    #[test]
    fn save_then_load_is_identity() {
        let tmp = tempfile::tempdir().unwrap();
        let features = Matrix::from_vec(3, 2, vec![0.1, -2.5, 1e-17, 3.0, 7.25, 0.3333333333333333]);
        let g = Graph::new(
            2,
            [(0, 1), (2, 1)],
            features,
            vec![0, 1, 1],
            vec![Split::Train, Split::Val, Split::Test],
        )
        .unwrap();
        save_graph(&g, tmp.path()).unwrap();
        assert_eq!(load_graph(tmp.path()).unwrap(), g);
    }
}
