use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use susyinv::operator::Matrix;

use crate::error::CliError;

/// Fixed 17-significant-digit scientific format, locale independent.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub struct Table {
    header: Vec<String>,
    body: String,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self { header: header.into_iter().map(Into::into).collect(), body: String::new() }
    }

    pub fn push(&mut self, row: &[f64]) {
        debug_assert_eq!(row.len(), self.header.len());
        let cells: Vec<String> = row.iter().map(|&x| num(x)).collect();
        let _ = writeln!(self.body, "{}", cells.join(","));
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let text = format!("{}\n{}", self.header.join(","), self.body);
        std::fs::write(path, text)?;
        Ok(())
    }
}

#[derive(Serialize)]
pub struct ComplexMatrix {
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl From<&Matrix> for ComplexMatrix {
    fn from(m: &Matrix) -> Self {
        let rows = |f: fn(&susyinv::C64) -> f64| {
            (0..m.nrows()).map(|r| (0..m.ncols()).map(|c| f(&m[(r, c)])).collect()).collect()
        };
        Self { re: rows(|z| z.re), im: rows(|z| z.im) }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// `n` evenly spaced times in `[0, t_end]`, both ends included.
pub fn sample_times(t_end: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![0.0];
    }
    (0..n).map(|k| t_end * k as f64 / (n - 1) as f64).collect()
}
