use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::{sym_pinv, GramData, LieMatrix, ThresholdReport, DEFAULT_GRAM_TOL};
use crate::error::{Error, Result};

/// Rows whose largest entry is below this fraction of the matrix maximum are
/// treated as identically zero.
const ROW_FLOOR: f64 = 1e-10;

fn pattern(l: &DMatrix<f64>, rel_cut: f64) -> Vec<Vec<bool>> {
    let floor = ROW_FLOOR * l.amax();
    l.row_iter()
        .map(|row| {
            let top = row.amax();
            row.iter().map(|v| top > floor && v.abs() >= rel_cut * top).collect()
        })
        .collect()
}

/// Least-squares refit of row `r` of `K` with entries outside `keep` pinned
/// to the extraction matrix, returned as a row of `L`.
fn refit_row(g: &GramData, r: usize, keep: &[bool], tau: f64) -> Vec<f64> {
    let lx = keep.len();
    let s: Vec<usize> = (0..lx).filter(|&j| keep[j]).collect();
    let mut out = vec![0.0; lx];
    if s.is_empty() {
        return out;
    }
    let pinned_r = r < lx && !keep[r];
    let gss = DMatrix::from_fn(s.len(), s.len(), |a, b| g.ppt[(s[a], s[b])]);
    let rhs = DVector::from_fn(s.len(), |a, _| {
        let mut v = g.qpt[(r, s[a])];
        if pinned_r {
            v -= g.ppt[(r, s[a])];
        }
        v
    });
    let (pinv, _) = sym_pinv(&gss, DEFAULT_GRAM_TOL);
    let ks = pinv * rhs;
    for (a, &j) in s.iter().enumerate() {
        let theta = if j == r { 1.0 } else { 0.0 };
        out[j] = (ks[a] - theta) / tau;
    }
    out
}

/// Iterative hard thresholding: per row, entries of `L` below
/// `rel_cut` times the row maximum are zeroed and the remaining entries of
/// the corresponding row of `K` are refitted by least squares. Stops when
/// the sparsity pattern repeats or after `max_rounds`.
pub fn threshold_refine(
    lie: &LieMatrix,
    gram: &GramData,
    rel_cut: f64,
    max_rounds: usize,
) -> Result<LieMatrix> {
    if !(rel_cut > 0.0 && rel_cut < 1.0) {
        return Err(Error::Config(format!("relative cut must lie in (0, 1), got {rel_cut}")));
    }
    if gram.ppt.nrows() != lie.lx() || gram.qpt.nrows() != lie.kx() {
        return Err(Error::DimensionMismatch("Gram data do not match the Lie matrix".into()));
    }
    let mut current = lie.entries.clone();
    let mut pat = pattern(&current, rel_cut);
    let mut rounds = 0;
    let mut converged = false;
    while rounds < max_rounds.max(1) {
        rounds += 1;
        let rows: Vec<Vec<f64>> = (0..lie.kx())
            .into_par_iter()
            .map(|r| refit_row(gram, r, &pat[r], lie.tau))
            .collect();
        current = DMatrix::from_fn(lie.kx(), lie.lx(), |i, j| rows[i][j]);
        let next = pattern(&current, rel_cut);
        if next == pat {
            converged = true;
            break;
        }
        pat = next;
    }
    let zeros = current.iter().filter(|v| **v == 0.0).count();
    let mut out = lie.clone();
    out.threshold = Some(ThresholdReport {
        rounds,
        zeroed_fraction: zeros as f64 / current.len() as f64,
        converged,
    });
    out.entries = current;
    Ok(out)
}
