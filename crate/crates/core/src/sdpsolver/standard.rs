use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::cones::{svec_index, Cone};
use crate::error::{Error, Result};
use crate::momentsdp::{lift_momentfit, MomentProblem, Objective};

/// Compressed sparse row matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsrMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from `(row, col, value)` triplets, summing duplicates and
    /// dropping exact zeros.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut rows: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); nrows];
        for &(i, j, v) in triplets {
            *rows[i].entry(j).or_insert(0.0) += v;
        }
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for r in rows {
            for (j, v) in r {
                if v != 0.0 {
                    indices.push(j);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        CsrMatrix {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        }
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (lo, hi) = (self.indptr[i], self.indptr[i + 1]);
        self.indices[lo..hi].iter().cloned().zip(self.values[lo..hi].iter().cloned())
    }

    /// `out = A x`.
    pub fn mul_vec(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
    }

    /// `out = A^T y`.
    pub fn tmul_vec(&self, y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (i, &yi) in y.iter().enumerate() {
            if yi != 0.0 {
                for (j, v) in self.row(i) {
                    out[j] += v * yi;
                }
            }
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }
}

/// `minimize c.u  subject to  A u + s = b,  s in K`, with `K` the product of
/// `cones` in row order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConicStandardForm {
    pub a: CsrMatrix,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub cones: Vec<Cone>,
}

impl ConicStandardForm {
    pub fn n(&self) -> usize {
        self.a.ncols
    }

    pub fn m(&self) -> usize {
        self.a.nrows
    }

    pub fn validate(&self) -> Result<()> {
        let rows: usize = self.cones.iter().map(|c| c.rows()).sum();
        if rows != self.m() || self.b.len() != self.m() || self.c.len() != self.n() {
            return Err(Error::DimensionMismatch(format!(
                "cones cover {rows} rows, A is {}x{}, |b| = {}, |c| = {}",
                self.m(),
                self.n(),
                self.b.len(),
                self.c.len()
            )));
        }
        if self.b.iter().chain(&self.c).chain(&self.a.values).any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("conic data".into()));
        }
        Ok(())
    }

    /// Row ranges of each cone.
    pub fn cone_ranges(&self) -> Vec<(Cone, std::ops::Range<usize>)> {
        let mut at = 0;
        self.cones
            .iter()
            .map(|c| {
                let r = at..at + c.rows();
                at = r.end;
                (*c, r)
            })
            .collect()
    }
}

fn push_cone(cones: &mut Vec<Cone>, c: Cone) {
    match (cones.last_mut(), c) {
        (Some(Cone::Zero(d)), Cone::Zero(e)) | (Some(Cone::NonNeg(d)), Cone::NonNeg(e)) => *d += e,
        _ => cones.push(c),
    }
}

/// Conic form of a moment problem. Equalities become zero-cone rows, PSD
/// blocks become vectorized PSD cones (`1 x 1` blocks become nonnegative
/// rows) and moment-fit objectives are lifted to a second-order cone.
pub fn to_standard_form(problem: &MomentProblem) -> Result<ConicStandardForm> {
    let p = lift_momentfit(problem);
    let n = p.n_vars;
    let Objective::Linear { c } = &p.objective else {
        unreachable!("lifted objective is linear")
    };
    if c.len() > n {
        return Err(Error::DimensionMismatch("objective longer than the variable vector".into()));
    }
    let mut cvec = c.clone();
    cvec.resize(n, 0.0);
    let mut trip = Vec::new();
    let mut b = Vec::new();
    let mut cones = Vec::new();
    let eq = &p.equalities;
    if eq.rhs.len() != eq.rows {
        return Err(Error::DimensionMismatch("equality right-hand side".into()));
    }
    for &(i, j, v) in &eq.triplets {
        if i >= eq.rows || j >= n {
            return Err(Error::DimensionMismatch(format!("equality entry ({i}, {j})")));
        }
        trip.push((i, j, v));
    }
    b.extend_from_slice(&eq.rhs);
    if eq.rows > 0 {
        push_cone(&mut cones, Cone::Zero(eq.rows));
    }
    let r2 = std::f64::consts::SQRT_2;
    for blk in &p.psd_blocks {
        let base = b.len();
        let s = blk.size;
        for &(a, bb, var, coeff) in &blk.terms {
            if a > bb || bb >= s || var >= n {
                return Err(Error::DimensionMismatch(format!("block `{}` entry", blk.label)));
            }
            let (i, j) = (bb, a);
            let w = if i == j { 1.0 } else { r2 };
            trip.push((base + svec_index(i, j, s), var, -coeff * w));
        }
        b.resize(base + s * (s + 1) / 2, 0.0);
        push_cone(&mut cones, if s == 1 { Cone::NonNeg(1) } else { Cone::Psd(s) });
    }
    for soc in &p.soc_blocks {
        let base = b.len();
        for (r, row) in soc.rows.iter().enumerate() {
            for &(j, v) in row {
                trip.push((base + r, j, -v));
            }
        }
        b.extend_from_slice(&soc.constants);
        push_cone(&mut cones, Cone::Soc(soc.rows.len()));
    }
    let form = ConicStandardForm {
        a: CsrMatrix::from_triplets(b.len(), n, &trip),
        b,
        c: cvec,
        cones,
    };
    form.validate()?;
    Ok(form)
}
