//! Per-iteration records emitted by the iterative fitters.

use std::io::{self, Write};

/// Ordered (iteration, named values) records.
///
/// Every iterative fitter returns one of these alongside its result so runs
/// can be plotted or diffed. CSV output carries a header row and prints
/// floats with 17 significant digits so reruns are byte-comparable.
#[derive(Debug, Clone)]
pub struct Trace {
    columns: Vec<String>,
    rows: Vec<(usize, Vec<f64>)>,
}

impl Trace {
    pub fn new(columns: &[&str]) -> Self {
        Trace {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, iter: usize, values: &[f64]) {
        debug_assert_eq!(values.len(), self.columns.len());
        self.rows.push((iter, values.to_vec()));
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn rows(&self) -> &[(usize, Vec<f64>)] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Values of one named column, in iteration order.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|(_, v)| v[idx]).collect())
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        write!(w, "iter")?;
        for c in &self.columns {
            write!(w, ",{c}")?;
        }
        writeln!(w)?;
        for (iter, values) in &self.rows {
            write!(w, "{iter}")?;
            for v in values {
                write!(w, ",{}", format_float(*v))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// 17 significant digits, enough to round-trip any f64.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}
