use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cones::Cone;
use super::standard::{ConicStandardForm, CsrMatrix};
use crate::error::{Error, Result};

/// Settings of the operator-splitting solver.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub max_iter: usize,
    /// Over-relaxation parameter in `(0, 2)`.
    pub alpha: f64,
    /// Initial step parameter.
    pub rho: f64,
    /// Proximal regularization of the linear step.
    pub sigma: f64,
    pub adaptive_rho: bool,
    /// Residuals are evaluated every this many iterations.
    pub check_every: usize,
    /// Rounds of Ruiz equilibration.
    pub scaling_iters: usize,
    /// Wall-clock limit in seconds.
    pub time_limit: Option<f64>,
    /// Randomizes the initial primal iterate when set.
    pub seed: Option<u64>,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            eps_abs: 1e-7,
            eps_rel: 1e-7,
            max_iter: 500_000,
            alpha: 1.5,
            rho: 0.1,
            sigma: 1e-6,
            adaptive_rho: true,
            check_every: 25,
            scaling_iters: 10,
            time_limit: None,
            seed: None,
        }
    }
}

impl SolverSettings {
    /// Tolerances `1e-8` for one-dimensional dictionaries, `1e-7` otherwise.
    pub fn for_dimension(n: usize) -> Self {
        let eps = if n == 1 { 1e-8 } else { 1e-7 };
        SolverSettings {
            eps_abs: eps,
            eps_rel: eps,
            ..Default::default()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    MaxIter,
    /// Iterates diverged; the problem is probably infeasible or unbounded.
    InfeasibleLike,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    pub objective: f64,
    pub iterations: usize,
    pub wall_time: f64,
    pub rho_updates: usize,
}

/// Primal `x`, slack `s` and dual `y` (in the polar cone, so that
/// `c = A^T y` at optimality) of a conic program.
#[derive(Clone, Debug)]
pub struct ConicSolution {
    pub x: Vec<f64>,
    pub s: Vec<f64>,
    pub y: Vec<f64>,
    pub report: SolveReport,
}

/// Iterates to start from, in unscaled coordinates.
#[derive(Clone, Debug)]
pub struct WarmStart {
    pub x: Vec<f64>,
    pub s: Vec<f64>,
    pub y: Vec<f64>,
}

struct Scaling {
    d: Vec<f64>,
    e: Vec<f64>,
    cs: f64,
}

fn equilibrate(form: &ConicStandardForm, iters: usize) -> (CsrMatrix, Scaling) {
    let (m, n) = (form.m(), form.n());
    let mut a = form.a.clone();
    let mut d = vec![1.0; n];
    let mut e = vec![1.0; m];
    let ranges = form.cone_ranges();
    let clamp = |v: f64| if v < 1e-8 { 1.0 } else { (1.0 / v.sqrt()).clamp(1e-4, 1e4) };
    for _ in 0..iters {
        let mut cm = vec![0.0f64; n];
        let mut rm = vec![0.0f64; m];
        for i in 0..m {
            for (j, v) in a.row(i) {
                cm[j] = cm[j].max(v.abs());
                rm[i] = rm[i].max(v.abs());
            }
        }
        for (cone, r) in &ranges {
            if matches!(cone, Cone::Soc(_) | Cone::Psd(_)) {
                let mean = rm[r.clone()].iter().sum::<f64>() / r.len() as f64;
                rm[r.clone()].iter_mut().for_each(|v| *v = mean);
            }
        }
        let dj: Vec<f64> = cm.iter().map(|&v| clamp(v)).collect();
        let ei: Vec<f64> = rm.iter().map(|&v| clamp(v)).collect();
        for i in 0..m {
            for k in a.indptr[i]..a.indptr[i + 1] {
                a.values[k] *= ei[i] * dj[a.indices[k]];
            }
        }
        d.iter_mut().zip(&dj).for_each(|(a, b)| *a *= b);
        e.iter_mut().zip(&ei).for_each(|(a, b)| *a *= b);
    }
    let cmax = form.c.iter().zip(&d).fold(0.0f64, |acc, (c, dj)| acc.max((c * dj).abs()));
    let cs = if cmax > 0.0 { (1.0 / cmax).clamp(1e-4, 1e4) } else { 1.0 };
    (a, Scaling { d, e, cs })
}

fn factor(a: &CsrMatrix, r: &[f64], sigma: f64) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let n = a.ncols;
    let mut k = DMatrix::zeros(n, n);
    for i in 0..a.nrows {
        let (lo, hi) = (a.indptr[i], a.indptr[i + 1]);
        for p in lo..hi {
            let (j1, v1) = (a.indices[p], a.values[p] * r[i]);
            for q in lo..hi {
                k[(j1, a.indices[q])] += v1 * a.values[q];
            }
        }
    }
    for j in 0..n {
        k[(j, j)] += sigma;
    }
    nalgebra::Cholesky::new(k).ok_or_else(|| Error::NumericalBreakdown("linear system not positive definite".into()))
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cone blocks large enough to be worth projecting in parallel.
const PARALLEL_ROWS: usize = 2000;

fn project(ranges: &[(Cone, std::ops::Range<usize>)], v: &mut [f64]) {
    let heavy: usize = ranges
        .iter()
        .filter(|(c, _)| matches!(c, Cone::Psd(_)))
        .map(|(_, r)| r.len())
        .sum();
    if heavy >= PARALLEL_ROWS && ranges.len() > 1 {
        let mut parts: Vec<(Cone, &mut [f64])> = Vec::with_capacity(ranges.len());
        let mut rest = v;
        for (c, r) in ranges {
            let (head, tail) = rest.split_at_mut(r.len());
            parts.push((*c, head));
            rest = tail;
        }
        parts.into_par_iter().for_each(|(c, p)| c.project(p));
    } else {
        for (c, r) in ranges {
            c.project(&mut v[r.clone()]);
        }
    }
}

struct Residuals {
    primal: f64,
    dual: f64,
    gap: f64,
    objective: f64,
    p_ok: bool,
    d_ok: bool,
    g_ok: bool,
    p_ratio: f64,
    d_ratio: f64,
}

/// Solves `min c.x  s.t.  A x + s = b, s in K` by ADMM with over-relaxation,
/// diagonal equilibration and adaptive step size.
pub fn solve(form: &ConicStandardForm, settings: &SolverSettings) -> Result<ConicSolution> {
    solve_warm(form, settings, None)
}

pub fn solve_warm(
    form: &ConicStandardForm,
    settings: &SolverSettings,
    warm: Option<&WarmStart>,
) -> Result<ConicSolution> {
    form.validate()?;
    let start = Instant::now();
    let (m, n) = (form.m(), form.n());
    let ranges = form.cone_ranges();
    let (a, sc) = equilibrate(form, settings.scaling_iters);
    let b: Vec<f64> = form.b.iter().zip(&sc.e).map(|(v, e)| v * e).collect();
    let c: Vec<f64> = form.c.iter().zip(&sc.d).map(|(v, d)| v * d * sc.cs).collect();
    let is_zero: Vec<bool> = ranges
        .iter()
        .flat_map(|(cone, r)| std::iter::repeat_n(matches!(cone, Cone::Zero(_)), r.len()))
        .collect();
    let mut rho = settings.rho;
    let rows_rho = |rho: f64| -> Vec<f64> { is_zero.iter().map(|&z| if z { 1e3 * rho } else { rho }).collect() };
    let mut r = rows_rho(rho);
    let mut chol = factor(&a, &r, settings.sigma)?;

    let mut x = vec![0.0; n];
    let mut s = vec![0.0; m];
    let mut y = vec![0.0; m];
    if let Some(w) = warm {
        if w.x.len() != n || w.s.len() != m || w.y.len() != m {
            return Err(Error::DimensionMismatch("warm start".into()));
        }
        for j in 0..n {
            x[j] = w.x[j] / sc.d[j];
        }
        for i in 0..m {
            s[i] = w.s[i] * sc.e[i];
            y[i] = w.y[i] * sc.cs / sc.e[i];
        }
    } else if let Some(seed) = settings.seed {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        x.iter_mut().for_each(|v| *v = rng.random_range(-1e-3..1e-3));
    }

    let alpha = settings.alpha;
    let mut w = vec![0.0; m];
    let mut atw = vec![0.0; n];
    let mut ax = vec![0.0; m];
    let mut srel = vec![0.0; m];
    let mut v = vec![0.0; m];
    let mut aty = vec![0.0; n];
    let mut rho_updates = 0;
    let mut best: Option<(f64, Vec<f64>, Vec<f64>, Vec<f64>, Residuals)> = None;
    let mut status = SolveStatus::MaxIter;
    let mut iterations = 0;

    let evaluate = |x: &[f64], s: &[f64], y: &[f64], ax: &mut [f64], aty: &mut [f64]| -> Residuals {
        a.mul_vec(x, ax);
        a.tmul_vec(y, aty);
        let mut rp = 0.0f64;
        let (mut nax, mut ns, mut nb) = (0.0f64, 0.0f64, 0.0f64);
        let (mut rps, mut naxs, mut nss, mut nbs) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        for i in 0..m {
            let res = ax[i] + s[i] - b[i];
            rp = rp.max((res / sc.e[i]).abs());
            nax = nax.max((ax[i] / sc.e[i]).abs());
            ns = ns.max((s[i] / sc.e[i]).abs());
            nb = nb.max((b[i] / sc.e[i]).abs());
            rps = rps.max(res.abs());
            naxs = naxs.max(ax[i].abs());
            nss = nss.max(s[i].abs());
            nbs = nbs.max(b[i].abs());
        }
        let mut rd = 0.0f64;
        let (mut nc, mut naty) = (0.0f64, 0.0f64);
        let (mut rds, mut ncs, mut natys) = (0.0f64, 0.0f64, 0.0f64);
        for j in 0..n {
            let res = c[j] - aty[j];
            rd = rd.max((res / sc.d[j]).abs() / sc.cs);
            nc = nc.max((c[j] / sc.d[j]).abs() / sc.cs);
            naty = naty.max((aty[j] / sc.d[j]).abs() / sc.cs);
            rds = rds.max(res.abs());
            ncs = ncs.max(c[j].abs());
            natys = natys.max(aty[j].abs());
        }
        let pobj = dot(&c, x) / sc.cs;
        let dobj = dot(&b, y) / sc.cs;
        let gap = (pobj - dobj).abs();
        let e_abs = settings.eps_abs;
        let e_rel = settings.eps_rel;
        Residuals {
            primal: rp,
            dual: rd,
            gap,
            objective: pobj,
            p_ok: rp <= e_abs + e_rel * nax.max(ns).max(nb),
            d_ok: rd <= e_abs + e_rel * nc.max(naty),
            g_ok: gap <= e_abs + e_rel * pobj.abs().max(dobj.abs()),
            p_ratio: rps / naxs.max(nss).max(nbs).max(1e-10),
            d_ratio: rds / ncs.max(natys).max(1e-10),
        }
    };

    for it in 1..=settings.max_iter {
        iterations = it;
        for i in 0..m {
            w[i] = r[i] * (b[i] - s[i]) + y[i];
        }
        a.tmul_vec(&w, &mut atw);
        let rhs = DVector::from_fn(n, |j, _| settings.sigma * x[j] - c[j] + atw[j]);
        let xt = chol.solve(&rhs);
        a.mul_vec(xt.as_slice(), &mut ax);
        for j in 0..n {
            x[j] = alpha * xt[j] + (1.0 - alpha) * x[j];
        }
        for i in 0..m {
            let st = b[i] - ax[i];
            srel[i] = alpha * st + (1.0 - alpha) * s[i];
            v[i] = srel[i] + y[i] / r[i];
        }
        project(&ranges, &mut v);
        for i in 0..m {
            y[i] += r[i] * (srel[i] - v[i]);
        }
        std::mem::swap(&mut s, &mut v);

        if it % settings.check_every != 0 && it != settings.max_iter {
            continue;
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::NumericalBreakdown(format!("non-finite iterate at iteration {it}")));
        }
        let res = evaluate(&x, &s, &y, &mut ax, &mut aty);
        let merit = res.primal.max(res.dual).max(res.gap);
        let done = res.p_ok && res.d_ok && res.g_ok;
        if best.as_ref().is_none_or(|bst| merit < bst.0) || done {
            best = Some((merit, x.clone(), s.clone(), y.clone(), res));
            if done {
                status = SolveStatus::Optimal;
                break;
            }
        }
        if inf_norm(&y) > 1e12 || inf_norm(&x) > 1e12 {
            status = SolveStatus::InfeasibleLike;
            best = Some((merit, x.clone(), s.clone(), y.clone(), evaluate(&x, &s, &y, &mut ax, &mut aty)));
            break;
        }
        if let Some(limit) = settings.time_limit {
            if start.elapsed().as_secs_f64() > limit {
                break;
            }
        }
        if settings.adaptive_rho && it % (4 * settings.check_every) == 0 {
            let cur = evaluate(&x, &s, &y, &mut ax, &mut aty);
            let ratio = (cur.p_ratio / cur.d_ratio.max(1e-300)).sqrt();
            let new_rho = (rho * ratio).clamp(1e-6, 1e6);
            if new_rho > 5.0 * rho || new_rho < 0.2 * rho {
                rho = new_rho;
                r = rows_rho(rho);
                chol = factor(&a, &r, settings.sigma)?;
                rho_updates += 1;
            }
        }
    }
    let (_, xb, sb, yb, res) = best.expect("at least one residual evaluation");
    let x: Vec<f64> = xb.iter().zip(&sc.d).map(|(v, d)| v * d).collect();
    let s: Vec<f64> = sb.iter().zip(&sc.e).map(|(v, e)| v / e).collect();
    let y: Vec<f64> = yb.iter().zip(&sc.e).map(|(v, e)| v * e / sc.cs).collect();
    Ok(ConicSolution {
        x,
        s,
        y,
        report: SolveReport {
            status,
            primal_residual: res.primal,
            dual_residual: res.dual,
            gap: res.gap,
            objective: res.objective,
            iterations,
            wall_time: start.elapsed().as_secs_f64(),
            rho_updates,
        },
    })
}
