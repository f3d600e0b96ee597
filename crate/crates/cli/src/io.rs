//! Dataset, graph, and instance file formats plus run-directory output.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Headerless CSV, one sample per row, comma-separated decimal floats.
pub fn read_dataset(path: &Path) -> Result<Vec<DVector<f64>>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    let mut rows = Vec::new();
    let mut width = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let values: Result<Vec<f64>, _> = line.split(',').map(|f| f.trim().parse()).collect();
        let values = values.map_err(|e| {
            CliError::config(format!(
                "{}:{}: bad float ({e})",
                path.display(),
                lineno + 1
            ))
        })?;
        match width {
            None => width = Some(values.len()),
            Some(w) if w != values.len() => {
                return Err(CliError::config(format!(
                    "{}:{}: expected {w} columns, got {}",
                    path.display(),
                    lineno + 1,
                    values.len()
                )))
            }
            _ => {}
        }
        rows.push(DVector::from_vec(values));
    }
    if rows.is_empty() {
        return Err(CliError::config(format!(
            "{} holds no samples",
            path.display()
        )));
    }
    Ok(rows)
}

/// Binary dataset for the RBM: every entry must be 0 or 1.
pub fn read_binary_dataset(path: &Path) -> Result<Vec<Vec<u8>>, CliError> {
    read_dataset(path)?
        .into_iter()
        .map(|row| {
            row.iter()
                .map(|&v| {
                    if v == 0.0 {
                        Ok(0u8)
                    } else if v == 1.0 {
                        Ok(1u8)
                    } else {
                        Err(CliError::config(format!(
                            "non-binary entry {v} in {}",
                            path.display()
                        )))
                    }
                })
                .collect()
        })
        .collect()
}

/// Edge-list CSV `from,to` with 0-based page indices.
pub fn read_edges(path: &Path) -> Result<(usize, Vec<(usize, usize)>), CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    let mut edges = Vec::new();
    let mut max_page = 0usize;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let parse = |s: Option<&str>| -> Result<usize, CliError> {
            s.ok_or_else(|| {
                CliError::config(format!("{}:{}: need from,to", path.display(), lineno + 1))
            })?
            .trim()
            .parse()
            .map_err(|e| {
                CliError::config(format!(
                    "{}:{}: bad page index ({e})",
                    path.display(),
                    lineno + 1
                ))
            })
        };
        let from = parse(parts.next())?;
        let to = parse(parts.next())?;
        max_page = max_page.max(from).max(to);
        edges.push((from, to));
    }
    if edges.is_empty() {
        return Err(CliError::config(format!(
            "{} holds no edges",
            path.display()
        )));
    }
    Ok((max_page + 1, edges))
}

/// On-disk Ising instance.
#[derive(Debug, Serialize, Deserialize)]
pub struct IsingFile {
    pub height: usize,
    pub width: usize,
    pub eta1: f64,
    pub eta2: f64,
    /// Row-major +-1 pixels.
    pub x: Vec<i8>,
}

pub fn read_ising(path: &Path) -> Result<IsingFile, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::config(format!("{}: invalid instance JSON ({e})", path.display())))
}

/// A run directory holding `trace.csv` and `result.json`.
pub struct RunDir {
    dir: PathBuf,
    force: bool,
}

impl RunDir {
    pub fn prepare(dir: &Path, force: bool) -> Result<Self, CliError> {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::config(format!("cannot create {}: {e}", dir.display())))?;
        Ok(RunDir {
            dir: dir.to_path_buf(),
            force,
        })
    }

    fn open(&self, name: &str) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        if path.exists() && !self.force {
            return Err(CliError::config(format!(
                "{} exists; pass --force to overwrite",
                path.display()
            )));
        }
        Ok(path)
    }

    pub fn write_trace(&self, trace: &lvlearn::Trace) -> Result<(), CliError> {
        let path = self.open("trace.csv")?;
        let mut buf = Vec::new();
        trace
            .write_csv(&mut buf)
            .map_err(|e| CliError::numeric(format!("cannot serialize trace: {e}")))?;
        fs::write(&path, buf)
            .map_err(|e| CliError::numeric(format!("cannot write {}: {e}", path.display())))?;
        Ok(())
    }

    pub fn write_result(&self, value: &serde_json::Value) -> Result<(), CliError> {
        let path = self.open("result.json")?;
        let text = serde_json::to_string_pretty(value)
            .map_err(|e| CliError::numeric(format!("cannot serialize result: {e}")))?;
        fs::write(&path, text + "\n")
            .map_err(|e| CliError::numeric(format!("cannot write {}: {e}", path.display())))?;
        Ok(())
    }

    /// Raw CSV with caller-provided header and 17-significant-digit floats.
    pub fn write_csv(&self, name: &str, header: &str, rows: &[Vec<f64>]) -> Result<(), CliError> {
        let path = self.open(name)?;
        let mut out = String::from(header);
        out.push('\n');
        for row in rows {
            let fields: Vec<String> = row
                .iter()
                .map(|v| lvlearn::trace::format_float(*v))
                .collect();
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        fs::write(&path, out)
            .map_err(|e| CliError::numeric(format!("cannot write {}: {e}", path.display())))?;
        Ok(())
    }

    /// The pagerank output CSV: integer page ids against float ranks.
    pub fn write_ranks(&self, ranks: &[f64]) -> Result<(), CliError> {
        let path = self.open("ranks.csv")?;
        let mut out = String::from("page,rank\n");
        for (page, rank) in ranks.iter().enumerate() {
            out.push_str(&format!("{page},{}\n", lvlearn::trace::format_float(*rank)));
        }
        fs::write(&path, out)
            .map_err(|e| CliError::numeric(format!("cannot write {}: {e}", path.display())))?;
        Ok(())
    }
}
