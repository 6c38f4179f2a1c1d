//! Log-det barrier polish of moment solutions.
//!
//! The moment-fit and linear problems produced by the pipeline often have a
//! whole face of optimal moment vectors. The polish follows the barrier
//! path `min t F(y) - Σ log det B_j(y)` restricted to the affine set of the
//! equalities, whose limit is the analytic center of the optimal face.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::admm::{SolveReport, SolveStatus};
use super::MomentSolution;
use crate::error::{Error, Result};
use crate::momentsdp::{MomentProblem, Objective};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolishSettings {
    /// Barrier duality-gap bound `ν / t` at which the path is stopped.
    pub gap: f64,
    /// Growth factor of `t` between centerings.
    pub mu: f64,
    pub max_newton: usize,
    /// Relative singular-value cutoff used to find the equality null space.
    pub rank_tol: f64,
    /// Largest accepted equality residual of the initial point.
    pub feasibility_tol: f64,
}

impl Default for PolishSettings {
    fn default() -> Self {
        PolishSettings {
            gap: 1e-9,
            mu: 10.0,
            max_newton: 2000,
            rank_tol: 1e-10,
            feasibility_tol: 1e-6,
        }
    }
}

/// Affine matrix function `C + Σ x_i D_i` over reduced variables.
struct AffineBlock {
    c: DMatrix<f64>,
    d: Vec<DMatrix<f64>>,
}

impl AffineBlock {
    fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        let mut m = self.c.clone();
        for (xi, di) in x.iter().zip(&self.d) {
            if *xi != 0.0 {
                m += *xi * di;
            }
        }
        m
    }
}

/// Quadratic `½ xᵀ Q x + gᵀ x` in the reduced variables.
struct Quadratic {
    q: DMatrix<f64>,
    g: DVector<f64>,
}

fn barrier_value(blocks: &[AffineBlock], x: &[f64]) -> Option<f64> {
    let mut v = 0.0;
    for b in blocks {
        let chol = b.eval(x).cholesky()?;
        v -= 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    }
    Some(v)
}

fn barrier_derivatives(blocks: &[AffineBlock], x: &[f64], dim: usize) -> Option<(DVector<f64>, DMatrix<f64>)> {
    let mut g = DVector::zeros(dim);
    let mut h = DMatrix::zeros(dim, dim);
    for b in blocks {
        let s = b.c.nrows();
        let chol = b.eval(x).cholesky()?;
        let linv = chol.l().solve_lower_triangular(&DMatrix::identity(s, s))?;
        let packed = s * (s + 1) / 2;
        // columns hold the symmetric packing of L⁻¹ D_i L⁻ᵀ, so that H = VᵀV
        let cols: Vec<(f64, Vec<f64>)> = b
            .d
            .par_iter()
            .map(|d| {
                let a = &linv * d * linv.transpose();
                let mut v = Vec::with_capacity(packed);
                for j in 0..s {
                    v.push(a[(j, j)]);
                    for i in j + 1..s {
                        v.push(std::f64::consts::SQRT_2 * 0.5 * (a[(i, j)] + a[(j, i)]));
                    }
                }
                (a.trace(), v)
            })
            .collect();
        let mut v = DMatrix::zeros(packed, dim);
        for (i, (tr, col)) in cols.into_iter().enumerate() {
            g[i] -= tr;
            v.column_mut(i).copy_from_slice(&col);
        }
        h += v.tr_mul(&v);
    }
    Some((g, h))
}

fn solve_spd(h: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(ch) = h.clone().cholesky() {
        return Some(ch.solve(rhs));
    }
    let n = h.nrows();
    let shift = 1e-12 * h.diagonal().amax().max(1.0);
    h.clone()
        .lu()
        .solve(rhs)
        .or_else(|| (h + DMatrix::identity(n, n) * shift).cholesky().map(|c| c.solve(rhs)))
}

/// Minimizes `t·f(x) + φ(x)` by damped Newton from a strictly feasible `x`.
fn center(
    blocks: &[AffineBlock],
    f: &Quadratic,
    t: f64,
    x: &mut Vec<f64>,
    budget: &mut usize,
    stop: Option<&dyn Fn(&[f64]) -> bool>,
) -> Result<()> {
    let dim = x.len();
    let fval = |x: &[f64]| {
        let xv = DVector::from_column_slice(x);
        0.5 * xv.dot(&(&f.q * &xv)) + f.g.dot(&xv)
    };
    loop {
        if let Some(stop) = stop {
            if stop(x) {
                return Ok(());
            }
        }
        if *budget == 0 {
            return Err(Error::NumericalBreakdown("barrier polish exceeded its Newton budget".into()));
        }
        *budget -= 1;
        let (gb, hb) = barrier_derivatives(blocks, x, dim)
            .ok_or_else(|| Error::NumericalBreakdown("iterate left the cone".into()))?;
        let xv = DVector::from_column_slice(x);
        let grad = (&f.q * &xv + &f.g) * t + gb;
        let hess = &f.q * t + hb;
        let dx = solve_spd(&hess, &(-&grad))
            .ok_or_else(|| Error::NumericalBreakdown("singular Newton system".into()))?;
        let dec = -grad.dot(&dx);
        if !dec.is_finite() {
            return Err(Error::NumericalBreakdown("non-finite Newton decrement".into()));
        }
        let phi0 = t * fval(x) + barrier_value(blocks, x).unwrap();
        if dec * 0.5 <= 1e-11 * (1.0 + phi0.abs()) {
            return Ok(());
        }
        let mut step = 1.0;
        loop {
            let trial: Vec<f64> = x.iter().zip(dx.iter()).map(|(a, b)| a + step * b).collect();
            if let Some(bv) = barrier_value(blocks, &trial) {
                if t * fval(&trial) + bv <= phi0 - 0.25 * step * dec {
                    *x = trial;
                    break;
                }
            }
            step *= 0.5;
            if step < 1e-14 {
                return Ok(());
            }
        }
    }
}

/// Reduced description `u = u_p + Z w` of the equality-feasible set.
struct AffineSet {
    particular: DVector<f64>,
    basis: DMatrix<f64>,
}

fn equality_affine_set(problem: &MomentProblem, rank_tol: f64) -> Result<(AffineSet, f64)> {
    let n = problem.n_vars;
    let eq = &problem.equalities;
    let rows = eq.rows.max(n);
    let mut e = DMatrix::<f64>::zeros(rows, n);
    for &(i, j, v) in &eq.triplets {
        e[(i, j)] += v;
    }
    let mut rhs = DVector::zeros(rows);
    for (i, v) in eq.rhs.iter().enumerate() {
        rhs[i] = *v;
    }
    let svd = e.clone().svd(true, true);
    let smax = svd.singular_values.max().max(f64::MIN_POSITIVE);
    let u = svd.u.as_ref().unwrap();
    let vt = svd.v_t.as_ref().unwrap();
    let mut particular = DVector::zeros(n);
    let mut null = Vec::new();
    for i in 0..svd.singular_values.len() {
        let s = svd.singular_values[i];
        let v = vt.row(i).transpose();
        if s > rank_tol * smax {
            particular += v * (u.column(i).dot(&rhs) / s);
        } else {
            null.push(v);
        }
    }
    let resid = (&e * &particular - &rhs).amax();
    let basis = if null.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&null)
    };
    Ok((AffineSet { particular, basis }, resid))
}

fn reduce_blocks(problem: &MomentProblem, set: &AffineSet) -> Vec<AffineBlock> {
    let dim = set.basis.ncols();
    problem
        .psd_blocks
        .iter()
        .map(|b| {
            let c = b.eval(set.particular.as_slice());
            let d = (0..dim)
                .map(|i| {
                    let col: Vec<f64> = set.basis.column(i).iter().copied().collect();
                    b.eval(&col)
                })
                .collect();
            AffineBlock { c, d }
        })
        .collect()
}

fn reduce_objective(problem: &MomentProblem, set: &AffineSet) -> Quadratic {
    let n = problem.n_vars;
    let mut qu = DMatrix::zeros(n, n);
    let mut gu = DVector::zeros(n);
    match &problem.objective {
        Objective::Linear { c } => {
            for (i, v) in c.iter().enumerate() {
                gu[i] = *v;
            }
        }
        Objective::MomentFit { targets } => {
            for tg in targets {
                qu[(tg.index, tg.index)] += 2.0 * tg.weight;
                gu[tg.index] -= 2.0 * tg.weight * tg.value;
            }
        }
    }
    let z = &set.basis;
    Quadratic {
        q: z.transpose() * &qu * z,
        g: z.transpose() * (&qu * &set.particular + gu),
    }
}

/// Moves an optimal moment vector to the analytic center of the optimal face
/// by following the log-det barrier path from `start`.
///
/// Fails when the problem has SOC blocks, when `start` violates the
/// equalities, or when the feasible set has no interior.
pub fn polish(problem: &MomentProblem, start: &[f64], settings: &PolishSettings) -> Result<MomentSolution> {
    let clock = Instant::now();
    if !problem.soc_blocks.is_empty() {
        return Err(Error::DimensionMismatch("polish expects a problem without SOC blocks".into()));
    }
    if start.len() < problem.n_vars {
        return Err(Error::DimensionMismatch("start vector too short".into()));
    }
    let (set, resid) = equality_affine_set(problem, settings.rank_tol)?;
    if resid > settings.feasibility_tol {
        return Err(Error::NumericalBreakdown(format!("inconsistent equalities (residual {resid:e})")));
    }
    let dim = set.basis.ncols();
    let u0 = DVector::from_column_slice(&start[..problem.n_vars]);
    let w0: Vec<f64> = (set.basis.transpose() * (&u0 - &set.particular)).iter().copied().collect();
    let blocks = reduce_blocks(problem, &set);
    let nu: f64 = blocks.iter().map(|b| b.c.nrows() as f64).sum();
    let mut budget = settings.max_newton;

    // phase one: min s subject to B_j(w) + s I > 0
    let lam0 = blocks
        .iter()
        .map(|b| b.eval(&w0).symmetric_eigenvalues().min())
        .fold(f64::INFINITY, f64::min);
    let scale = blocks.iter().map(|b| b.eval(&w0).amax()).fold(1e-300, f64::max);
    let mut x = w0.clone();
    x.push((-lam0).max(0.0) + 1e-3 * scale);
    let shifted: Vec<AffineBlock> = blocks
        .iter()
        .map(|b| {
            let mut d = b.d.clone();
            d.push(DMatrix::identity(b.c.nrows(), b.c.ncols()));
            AffineBlock { c: b.c.clone(), d }
        })
        .collect();
    let mut g1 = DVector::zeros(dim + 1);
    g1[dim] = 1.0;
    let phase1 = Quadratic {
        q: DMatrix::zeros(dim + 1, dim + 1),
        g: g1,
    };
    let margin = -1e-6 * scale;
    let feasible = |x: &[f64]| x[x.len() - 1] < margin;
    let mut t1 = 1.0 / scale;
    while !feasible(&x) {
        center(&shifted, &phase1, t1, &mut x, &mut budget, Some(&feasible))?;
        if feasible(&x) {
            break;
        }
        if nu / t1 < 1e-3 * scale * 1e-6 {
            return Err(Error::NumericalBreakdown("feasible set has no interior".into()));
        }
        t1 *= settings.mu;
    }
    x.pop();

    // phase two: barrier path on the objective
    let objective = reduce_objective(problem, &set);
    let mut t = 1.0;
    loop {
        center(&blocks, &objective, t, &mut x, &mut budget, None)?;
        if nu / t <= settings.gap {
            break;
        }
        t *= settings.mu;
    }
    let w = DVector::from_vec(x);
    let u: Vec<f64> = (&set.particular + &set.basis * w).iter().copied().collect();
    let obj = problem.objective.value(&u);
    let eqr = problem.equality_residual(&u);
    Ok(MomentSolution {
        y: u[..problem.lx()].to_vec(),
        objective: obj,
        min_psd_eigenvalue: problem.min_psd_eigenvalue(&u),
        equality_residual: eqr,
        report: SolveReport {
            status: SolveStatus::Optimal,
            primal_residual: eqr,
            dual_residual: 0.0,
            gap: nu / t,
            objective: obj,
            iterations: settings.max_newton - budget,
            wall_time: clock.elapsed().as_secs_f64(),
            rho_updates: 0,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::momentsdp::{EqualityBlock, PsdBlock};
    use crate::polybasis::BasisSpec;

    fn diag_problem(objective: Objective) -> MomentProblem {
        // variables (y0, y1, y2) on [-1, 1] with y0 = 1 and [[y0, y1], [y1, y2]] >= 0, y0 - y2 >= 0
        MomentProblem {
            spec: BasisSpec::new(crate::polybasis::BasisFamily::Monomial, 1, 2, vec![(-1.0, 1.0)]).unwrap(),
            k: 0,
            n_vars: 3,
            objective,
            equalities: EqualityBlock {
                rows: 1,
                triplets: vec![(0, 0, 1.0)],
                rhs: vec![1.0],
            },
            psd_blocks: vec![
                PsdBlock {
                    label: "moment".into(),
                    size: 2,
                    terms: vec![(0, 0, 0, 1.0), (0, 1, 1, 1.0), (1, 1, 2, 1.0)],
                },
                PsdBlock {
                    label: "localizing-0".into(),
                    size: 1,
                    terms: vec![(0, 0, 0, 1.0), (0, 0, 2, -1.0)],
                },
            ],
            soc_blocks: vec![],
        }
    }

    #[test]
    fn linear_optimum_is_reached() {
        // minimize y1 over measures on [-1, 1]: optimum -1 at the Dirac at -1
        let p = diag_problem(Objective::Linear { c: vec![0.0, 1.0, 0.0] });
        let sol = polish(&p, &[1.0, 0.0, 0.3], &PolishSettings::default()).unwrap();
        assert!((sol.y[1] + 1.0).abs() < 1e-6, "{:?}", sol.y);
        assert!((sol.y[2] - 1.0).abs() < 1e-6);
        assert!(sol.min_psd_eigenvalue > -1e-9);
    }

    #[test]
    fn fit_optimal_face_is_centered() {
        // y1 = 0 leaves y2 in [0, 1]; the analytic center of
        // log y2 + log(1 - y2) is y2 = 1/2
        let p = diag_problem(Objective::fit(&[(1, 0.0)]));
        let sol = polish(&p, &[1.0, 0.2, 0.9], &PolishSettings::default()).unwrap();
        assert!(sol.y[1].abs() < 1e-4);
        assert!((sol.y[2] - 0.5).abs() < 1e-4, "{:?}", sol.y);
    }

    #[test]
    fn no_interior_is_reported() {
        // forcing y2 = 1 and y1 = 0 makes the localizing scalar vanish
        let mut p = diag_problem(Objective::Linear { c: vec![0.0; 3] });
        p.equalities = EqualityBlock {
            rows: 3,
            triplets: vec![(0, 0, 1.0), (1, 2, 1.0), (2, 1, 1.0)],
            rhs: vec![1.0, 1.0, 0.0],
        };
        assert!(polish(&p, &[1.0, 0.0, 1.0], &PolishSettings::default()).is_err());
    }
}
