use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::recovery::SignedDensity;

/// A labelled table of numbers with optional text columns.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub title: String,
    pub columns: Vec<String>,
    pub rows: Vec<(String, Vec<f64>)>,
}

impl Table {
    pub fn new(title: &str, row_header: &str, columns: &[String]) -> Self {
        let mut cols = vec![row_header.to_string()];
        cols.extend(columns.iter().cloned());
        Table {
            title: title.into(),
            columns: cols,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, label: impl Into<String>, values: Vec<f64>) {
        self.rows.push((label.into(), values));
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for (label, vals) in &self.rows {
            s.push_str(label);
            for v in vals {
                let _ = write!(s, ",{}", fmt_num(*v));
            }
            s.push('\n');
        }
        s
    }

    pub fn to_text(&self) -> String {
        let cells: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|(l, v)| std::iter::once(l.clone()).chain(v.iter().map(|x| fmt_num(*x))).collect())
            .collect();
        let ncol = self.columns.len();
        let width: Vec<usize> = (0..ncol)
            .map(|j| {
                cells
                    .iter()
                    .filter_map(|r| r.get(j).map(String::len))
                    .chain([self.columns[j].len()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut s = String::new();
        if !self.title.is_empty() {
            let _ = writeln!(s, "{}", self.title);
        }
        let line = |cells: &[String]| {
            cells
                .iter()
                .zip(&width)
                .map(|(c, w)| format!("{c:>w$}"))
                .collect::<Vec<_>>()
                .join("  ")
        };
        let _ = writeln!(s, "{}", line(&self.columns));
        for r in &cells {
            let _ = writeln!(s, "{}", line(r));
        }
        s
    }
}

fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v != 0.0 && (v.abs() < 1e-3 || v.abs() >= 1e5) {
        format!("{v:.5e}")
    } else {
        format!("{v:.5}")
    }
}

/// Renders `tables` as CSV or aligned text.
pub fn table_report(tables: &[Table], csv: bool) -> String {
    tables
        .iter()
        .map(|t| if csv { t.to_csv() } else { t.to_text() })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Density values on a tensor grid of `resolution` points per axis.
/// Rows list the coordinates followed by the value, first axis slowest.
pub fn plot_grid(density: &SignedDensity, resolution: usize) -> Result<Vec<(Vec<f64>, f64)>> {
    if resolution < 2 {
        return Err(Error::Config("grid resolution must be at least 2".into()));
    }
    let bx = &density.spec().domain_box;
    let n = bx.len();
    let total = resolution.pow(n as u32);
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; n];
    for _ in 0..total {
        let x: Vec<f64> = idx
            .iter()
            .zip(bx)
            .map(|(&i, &(a, b))| a + (b - a) * i as f64 / (resolution - 1) as f64)
            .collect();
        let v = density.eval(&x)?;
        out.push((x, v));
        for d in (0..n).rev() {
            idx[d] += 1;
            if idx[d] < resolution {
                break;
            }
            idx[d] = 0;
        }
    }
    Ok(out)
}

/// [`plot_grid`] as CSV with a `x1,..,xn,density` header.
pub fn density_grid_csv(density: &SignedDensity, resolution: usize) -> Result<String> {
    let grid = plot_grid(density, resolution)?;
    let n = density.spec().dimension;
    let mut s: String = (1..=n).map(|i| format!("x{i},")).collect();
    s.push_str("density\n");
    for (x, v) in grid {
        for c in x {
            let _ = write!(s, "{c},");
        }
        let _ = writeln!(s, "{v}");
    }
    Ok(s)
}
