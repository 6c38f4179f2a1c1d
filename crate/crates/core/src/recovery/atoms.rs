use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::momentsdp::moment_matrix_map;
use crate::polybasis::{BasisFamily, BasisSpec, MultiIndex, PolyCoeffs};

pub const DEFAULT_RANK_TOL: f64 = 1e-6;
const GAP_RATIO: f64 = 10.0;
const WEIGHT_TOL: f64 = 1e-6;
const BOX_SLACK: f64 = 1e-4;
const RESIDUAL_TOL: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub point: Vec<f64>,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractionDiagnostics {
    pub rank: usize,
    /// Half-degree `d` at which `rank M_d = rank M_{d-1}`.
    pub flat_degree: u32,
    /// `σ_p / σ_{p+1}` of `M_d`; infinite when `M_d` has full rank.
    pub gap_ratio: f64,
    /// Max-norm mismatch between the atoms' moments and the input.
    pub residual: f64,
}

/// Finitely supported measure `Σ w_i δ_{x_i}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomicMeasure {
    pub atoms: Vec<Atom>,
    pub diagnostics: ExtractionDiagnostics,
}

impl AtomicMeasure {
    pub fn expectation(&self, g: &PolyCoeffs) -> Result<f64> {
        self.atoms
            .iter()
            .map(|a| Ok(a.weight * g.eval(&a.point)?))
            .sum()
    }

    /// Moments `Σ w_i b_γ(x_i)` over `spec`.
    pub fn moments(&self, spec: &BasisSpec) -> Result<Vec<f64>> {
        let mut y = vec![0.0; spec.size()];
        for a in &self.atoms {
            for (acc, b) in y.iter_mut().zip(spec.eval(&a.point)?) {
                *acc += a.weight * b;
            }
        }
        Ok(y)
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        self.atoms.iter().map(|a| a.point.clone()).collect()
    }
}

struct RankInfo {
    rank: usize,
    gap: f64,
    ambiguous: bool,
}

fn numerical_rank(eigs: &[f64], tol: f64) -> RankInfo {
    let top = eigs[0].max(f64::MIN_POSITIVE);
    let rank = eigs.iter().take_while(|&&v| v > tol * top).count();
    if rank == eigs.len() {
        return RankInfo {
            rank,
            gap: f64::INFINITY,
            ambiguous: false,
        };
    }
    let next = eigs[rank].max(0.0);
    let gap = if next == 0.0 {
        f64::INFINITY
    } else {
        eigs[rank.saturating_sub(1)] / next
    };
    RankInfo {
        rank,
        gap,
        ambiguous: rank == 0 || gap < GAP_RATIO,
    }
}

fn sorted_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(m.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    (vals, vecs)
}

/// Matrix of multiplication by the `k`-th (scaled for Chebyshev) coordinate,
/// from degree `d - 1` into degree `d`.
fn shift_matrix(spec: &BasisSpec, d: u32, k: usize) -> DMatrix<f64> {
    let low = spec.with_degree(d - 1).index_set();
    let high = spec.with_degree(d).index_set();
    let mut n = DMatrix::zeros(low.len(), high.len());
    for (row, alpha) in low.iter().enumerate() {
        let mut up = alpha.0.clone();
        up[k] += 1;
        let up_pos = high.position(&MultiIndex(up)).unwrap();
        if spec.family == BasisFamily::Chebyshev && alpha.0[k] >= 1 {
            let mut down = alpha.0.clone();
            down[k] -= 1;
            n[(row, up_pos)] += 0.5;
            n[(row, high.position(&MultiIndex(down)).unwrap())] += 0.5;
        } else {
            n[(row, up_pos)] += 1.0;
        }
    }
    n
}

fn lstsq(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    svd.solve(b, 1e-12 * smax)
        .map_err(|e| Error::NumericalBreakdown(e.to_string()))
}

/// Recovers an atomic measure from a moment vector `y` over `spec` when the
/// moment matrix has a flat truncation.
pub fn extract_atoms(y: &[f64], spec: &BasisSpec, rank_tol: f64) -> Result<AtomicMeasure> {
    if y.len() != spec.size() {
        return Err(Error::DimensionMismatch(format!(
            "{} moments for a dictionary of size {}",
            y.len(),
            spec.size()
        )));
    }
    if !(y[0].is_finite() && y[0] > 0.0) {
        return Err(Error::ExtractionFailed("zero mass".into()));
    }
    let n = spec.dimension;
    let one = PolyCoeffs::constant(spec.with_degree(0), 1.0);
    let mut prev_rank = Some(1usize);
    let mut found = None;
    for d in 1..=spec.degree / 2 {
        let block = moment_matrix_map(&one, 2 * d, &spec.with_degree(2 * d))?;
        let m = block.eval(&y[..spec.with_degree(2 * d).size()]);
        let (vals, vecs) = sorted_eigen(&m);
        let info = numerical_rank(&vals, rank_tol);
        if info.ambiguous {
            prev_rank = None;
            continue;
        }
        if prev_rank == Some(info.rank) {
            found = Some((d, info, vals, vecs));
            break;
        }
        prev_rank = Some(info.rank);
    }
    let (d, info, vals, vecs) =
        found.ok_or_else(|| Error::ExtractionFailed("no flat truncation of the moment matrix".into()))?;
    let r = info.rank;
    let mut v = DMatrix::zeros(vecs.nrows(), r);
    for c in 0..r {
        v.set_column(c, &(vecs.column(c) * vals[c].sqrt()));
    }
    let low = spec.with_degree(d - 1).size();
    let v_low = v.rows(0, low).into_owned();
    let shifts: Vec<DMatrix<f64>> = (0..n)
        .map(|k| lstsq(&v_low, &(shift_matrix(spec, d, k) * &v)))
        .collect::<Result<_>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut best: Option<(f64, DMatrix<f64>)> = None;
    for _ in 0..4 {
        let mut lam: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
        let s: f64 = lam.iter().sum();
        lam.iter_mut().for_each(|l| *l /= s);
        let mut comb = DMatrix::zeros(r, r);
        for (l, x) in lam.iter().zip(&shifts) {
            comb += *l * x;
        }
        let comb = 0.5 * (&comb + comb.transpose());
        let (ev, q) = sorted_eigen(&comb);
        let sep = ev
            .windows(2)
            .map(|w| w[0] - w[1])
            .fold(f64::INFINITY, f64::min);
        if best.as_ref().map_or(true, |(b, _)| sep > *b) {
            best = Some((sep, q));
        }
    }
    let q = best.unwrap().1;

    let mut points = Vec::with_capacity(r);
    for i in 0..r {
        let qi = q.column(i);
        let u: Vec<f64> = shifts.iter().map(|x| qi.dot(&(x * qi))).collect();
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::ExtractionFailed("non-finite atom".into()));
        }
        let x = match spec.family {
            BasisFamily::Chebyshev => spec.from_unit(&u),
            BasisFamily::Monomial => u,
        };
        for (&xi, &(a, b)) in x.iter().zip(&spec.domain_box) {
            let slack = BOX_SLACK * 0.5 * (b - a);
            if xi < a - slack || xi > b + slack {
                return Err(Error::ExtractionFailed(format!("atom {x:?} outside the box")));
            }
        }
        points.push(x);
    }

    let mut vand = DMatrix::zeros(y.len(), r);
    for (i, p) in points.iter().enumerate() {
        vand.set_column(i, &DVector::from_vec(spec.eval(p)?));
    }
    let target = DMatrix::from_column_slice(y.len(), 1, y);
    let w = lstsq(&vand, &target)?;
    let resid = (&vand * &w - &target).amax();
    let weights: Vec<f64> = w.column(0).iter().copied().collect();
    if weights.iter().any(|&w| w < -WEIGHT_TOL) {
        return Err(Error::ExtractionFailed("negative weight".into()));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > WEIGHT_TOL {
        return Err(Error::ExtractionFailed(format!("weights sum to {total}")));
    }
    if resid > RESIDUAL_TOL {
        return Err(Error::ExtractionFailed(format!("moment residual {resid:e}")));
    }
    let mut atoms: Vec<Atom> = points
        .into_iter()
        .zip(weights)
        .map(|(point, weight)| Atom { point, weight })
        .collect();
    atoms.sort_by(|a, b| {
        a.point
            .iter()
            .zip(&b.point)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(AtomicMeasure {
        atoms,
        diagnostics: ExtractionDiagnostics {
            rank: r,
            flat_degree: d,
            gap_ratio: info.gap,
            residual: resid,
        },
    })
}
