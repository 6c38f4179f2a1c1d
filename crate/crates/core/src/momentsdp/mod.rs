//! Moment semidefinite programs over truncated moment vectors.
//!
//! A [`MomentProblem`] has variables `u = (y, aux)` where `y` holds the
//! moments of the dictionary elements up to degree `l` and `aux` holds any
//! epigraph variables introduced by [`lift_momentfit`]. Constraints are
//! sparse: linear equalities, symmetric matrices affine in `y` that must be
//! positive semidefinite, and second-order cones.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::edmd::LieMatrix;
use crate::error::{Error, Result};
use crate::polybasis::{dictionary_size, product_linearize, BasisFamily, BasisSpec, PolyCoeffs};

/// `{x : sigma_j(x) >= 0}` for the listed polynomials.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemialgebraicSet {
    pub dimension: usize,
    pub constraints: Vec<PolyCoeffs>,
}

impl SemialgebraicSet {
    /// The box of `spec`, one quadratic `(x_i - a_i)(b_i - x_i)` per axis
    /// (`1 - u_i^2` in the scaled coordinate `u_i` for Chebyshev).
    pub fn from_box(spec: &BasisSpec) -> Self {
        let s2 = spec.with_degree(2);
        let set = s2.index_set();
        let n = spec.dimension;
        let constraints = (0..n)
            .map(|i| {
                let mut p = PolyCoeffs::zeros(s2.clone());
                let mut e = vec![0u32; n];
                e[i] = 1;
                let lin = set.position_of(&e).expect("degree 2 dictionary");
                e[i] = 2;
                let quad = set.position_of(&e).expect("degree 2 dictionary");
                match spec.family {
                    BasisFamily::Chebyshev => {
                        p.coeffs[0] = 0.5;
                        p.coeffs[quad] = -0.5;
                    }
                    BasisFamily::Monomial => {
                        let (a, b) = spec.domain_box[i];
                        p.coeffs[0] = -a * b;
                        p.coeffs[lin] = a + b;
                        p.coeffs[quad] = -1.0;
                    }
                }
                p
            })
            .collect();
        SemialgebraicSet {
            dimension: n,
            constraints,
        }
    }

    /// Whether `x` satisfies every constraint up to `tol`.
    pub fn contains(&self, x: &[f64], tol: f64) -> Result<bool> {
        for c in &self.constraints {
            if c.eval(x)? < -tol {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// One weighted target of a moment-matching objective.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitTarget {
    /// Position in the dictionary.
    pub index: usize,
    pub value: f64,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Objective {
    /// Minimize `c . u`; `c` may be shorter than `u` (missing entries are 0).
    Linear { c: Vec<f64> },
    /// Minimize `sum_i w_i (y_{index_i} - value_i)^2`.
    MomentFit { targets: Vec<FitTarget> },
}

impl Objective {
    /// Targets with weight `1 / value^2` (relative errors).
    pub fn relative_fit(targets: &[(usize, f64)]) -> Objective {
        Objective::MomentFit {
            targets: targets
                .iter()
                .map(|&(index, value)| FitTarget {
                    index,
                    value,
                    weight: 1.0 / (value * value),
                })
                .collect(),
        }
    }

    /// Unit-weight targets.
    pub fn fit(targets: &[(usize, f64)]) -> Objective {
        Objective::MomentFit {
            targets: targets
                .iter()
                .map(|&(index, value)| FitTarget {
                    index,
                    value,
                    weight: 1.0,
                })
                .collect(),
        }
    }

    /// Value at the variable vector `u`.
    pub fn value(&self, u: &[f64]) -> f64 {
        match self {
            Objective::Linear { c } => c.iter().zip(u).map(|(a, b)| a * b).sum(),
            Objective::MomentFit { targets } => targets
                .iter()
                .map(|t| t.weight * (u[t.index] - t.value).powi(2))
                .sum(),
        }
    }

    fn max_index(&self) -> Option<usize> {
        match self {
            Objective::Linear { c } => c.iter().rposition(|v| *v != 0.0),
            Objective::MomentFit { targets } => targets.iter().map(|t| t.index).max(),
        }
    }
}

/// Sparse linear equalities `E u = rhs`, as `(row, col, value)` triplets.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EqualityBlock {
    pub rows: usize,
    pub triplets: Vec<(usize, usize, f64)>,
    pub rhs: Vec<f64>,
}

/// A symmetric `size x size` matrix affine in the variables; entry `(a, b)`
/// with `a <= b` is the sum of `coeff * u[var]` over its terms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsdBlock {
    pub label: String,
    pub size: usize,
    /// `(a, b, var, coeff)` with `a <= b`.
    pub terms: Vec<(usize, usize, usize, f64)>,
}

impl PsdBlock {
    /// The matrix at the variable vector `u`.
    pub fn eval(&self, u: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.size, self.size);
        for &(a, b, v, c) in &self.terms {
            m[(a, b)] += c * u[v];
        }
        for a in 0..self.size {
            for b in 0..a {
                m[(a, b)] = m[(b, a)];
            }
        }
        m
    }

    /// Smallest eigenvalue at `u`.
    pub fn min_eigenvalue(&self, u: &[f64]) -> f64 {
        self.eval(u).symmetric_eigenvalues().min()
    }
}

/// An affine map of the variables constrained to the second-order cone
/// `{(t, v) : |v| <= t}`; row 0 is `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SocBlock {
    pub rows: Vec<Vec<(usize, f64)>>,
    pub constants: Vec<f64>,
}

impl SocBlock {
    pub fn eval(&self, u: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .zip(&self.constants)
            .map(|(r, c)| c + r.iter().map(|&(j, a)| a * u[j]).sum::<f64>())
            .collect()
    }
}

/// Objective, invariance equalities, normalization and cone constraints over
/// a truncated moment vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentProblem {
    /// Degree-`l` dictionary indexing `y`.
    pub spec: BasisSpec,
    /// Degree of the dictionary whose Lie derivatives are constrained.
    pub k: u32,
    /// Total number of variables, `l_x` plus auxiliaries.
    pub n_vars: usize,
    pub objective: Objective,
    pub equalities: EqualityBlock,
    pub psd_blocks: Vec<PsdBlock>,
    pub soc_blocks: Vec<SocBlock>,
}

impl MomentProblem {
    /// Number of moment variables.
    pub fn lx(&self) -> usize {
        self.spec.size()
    }

    /// `|E u - rhs|_inf`.
    pub fn equality_residual(&self, u: &[f64]) -> f64 {
        let mut r: Vec<f64> = self.equalities.rhs.iter().map(|v| -v).collect();
        for &(i, j, v) in &self.equalities.triplets {
            r[i] += v * u[j];
        }
        r.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// Smallest eigenvalue over all PSD blocks at `u`.
    pub fn min_psd_eigenvalue(&self, u: &[f64]) -> f64 {
        self.psd_blocks
            .iter()
            .map(|b| b.min_eigenvalue(u))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer(w, self)?;
        Ok(())
    }

    pub fn read_json<R: Read>(r: R) -> Result<Self> {
        Ok(serde_json::from_reader(r)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_json(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_json(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

/// Localizing half-degree `floor((l - deg sigma) / 2)`.
pub fn localizing_degree(sigma: &PolyCoeffs, l: u32) -> Result<u32> {
    let d = sigma.degree();
    if d > l {
        return Err(Error::DegreeOverflow {
            needed: d,
            available: l,
        });
    }
    Ok((l - d) / 2)
}

/// The linear map `y -> M(sigma y)`: entry `(a, b)` is the moment of
/// `sigma * b_a * b_b`, for dictionary elements of degree up to
/// [`localizing_degree`].
pub fn moment_matrix_map(sigma: &PolyCoeffs, l: u32, spec: &BasisSpec) -> Result<PsdBlock> {
    if !sigma.spec.compatible(spec) {
        return Err(Error::DimensionMismatch("sigma uses a different dictionary".into()));
    }
    let gamma = localizing_degree(sigma, l)?;
    let family = spec.family;
    let small = spec.with_degree(gamma).index_set();
    let full = spec.with_degree(l).index_set();
    let sset = sigma.spec.index_set();
    let sigma_terms: Vec<_> = sigma
        .coeffs
        .iter()
        .enumerate()
        .filter(|(_, c)| **c != 0.0)
        .map(|(i, c)| (sset.get(i).clone(), *c))
        .collect();
    let s = small.len();
    let mut terms = Vec::new();
    for a in 0..s {
        for b in a..s {
            let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
            for (g, cg) in product_linearize(small.get(a), small.get(b), family) {
                for (delta, cd) in &sigma_terms {
                    for (h, ch) in product_linearize(&g, delta, family) {
                        let pos = full.position(&h).ok_or(Error::DegreeOverflow {
                            needed: h.degree(),
                            available: l,
                        })?;
                        *acc.entry(pos).or_insert(0.0) += cg * cd * ch;
                    }
                }
            }
            for (pos, c) in acc {
                if c != 0.0 {
                    terms.push((a, b, pos, c));
                }
            }
        }
    }
    Ok(PsdBlock {
        label: String::new(),
        size: s,
        terms,
    })
}

/// Stacks the rows of `L` (except the identically-zero row of the constant
/// function) and the normalization `y_0 = 1`, and adds the moment matrix and
/// one localizing matrix per constraint of `domain`.
pub fn assemble_problem(
    lie: &LieMatrix,
    domain: &SemialgebraicSet,
    objective: Objective,
) -> Result<MomentProblem> {
    let spec = lie.spec.clone();
    let l = lie.l;
    if domain.dimension != spec.dimension {
        return Err(Error::DimensionMismatch(format!(
            "domain has dimension {}, dictionary {}",
            domain.dimension, spec.dimension
        )));
    }
    let lx = spec.size();
    let kx = dictionary_size(spec.dimension, lie.k);
    if lie.entries.shape() != (kx, lx) {
        return Err(Error::DimensionMismatch("Lie matrix shape".into()));
    }
    if let Some(i) = objective.max_index() {
        if i >= kx {
            return Err(Error::DimensionMismatch(format!(
                "objective uses dictionary element {i}, only {kx} have degree <= {}",
                lie.k
            )));
        }
    }
    if let Objective::MomentFit { targets } = &objective {
        if targets.iter().any(|t| !(t.weight > 0.0) || !t.value.is_finite()) {
            return Err(Error::Config("moment-fit weights must be positive".into()));
        }
    }
    let mut eq = EqualityBlock::default();
    for r in 1..kx {
        let row = lie.entries.row(r);
        if row.iter().all(|v| *v == 0.0) {
            continue;
        }
        for (j, v) in row.iter().enumerate() {
            if *v != 0.0 {
                eq.triplets.push((eq.rows, j, *v));
            }
        }
        eq.rhs.push(0.0);
        eq.rows += 1;
    }
    eq.triplets.push((eq.rows, 0, 1.0));
    eq.rhs.push(1.0);
    eq.rows += 1;

    let mut blocks = Vec::with_capacity(domain.constraints.len() + 1);
    let one = PolyCoeffs::constant(spec.with_degree(0), 1.0);
    let mut m0 = moment_matrix_map(&one, l, &spec)?;
    m0.label = "moment".into();
    blocks.push(m0);
    for (j, sigma) in domain.constraints.iter().enumerate() {
        let mut b = moment_matrix_map(sigma, l, &spec)?;
        b.label = format!("localizing-{j}");
        blocks.push(b);
    }
    Ok(MomentProblem {
        spec,
        k: lie.k,
        n_vars: lx,
        objective,
        equalities: eq,
        psd_blocks: blocks,
        soc_blocks: Vec::new(),
    })
}

/// Replaces a moment-fit objective by minimizing an epigraph variable `t`
/// with `|diag(sqrt w)(y_I - target)| <= t`. The optimal `t` is the square
/// root of the original objective. Other objectives are returned unchanged.
pub fn lift_momentfit(problem: &MomentProblem) -> MomentProblem {
    let Objective::MomentFit { targets } = &problem.objective else {
        return problem.clone();
    };
    let mut out = problem.clone();
    let t = problem.n_vars;
    out.n_vars += 1;
    let mut c = vec![0.0; out.n_vars];
    c[t] = 1.0;
    out.objective = Objective::Linear { c };
    let mut rows = vec![vec![(t, 1.0)]];
    let mut constants = vec![0.0];
    for tg in targets {
        let sw = tg.weight.sqrt();
        rows.push(vec![(tg.index, sw)]);
        constants.push(-sw * tg.value);
    }
    out.soc_blocks.push(SocBlock { rows, constants });
    out
}

/// `count` linear objectives over the degree-`k` dictionary, uniform on the
/// unit sphere of the non-constant coefficients.
pub fn randomized_objectives(n: usize, k: u32, count: usize, seed: u64) -> Vec<Objective> {
    let kx = dictionary_size(n, k);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut c = vec![0.0; kx];
            loop {
                for v in c.iter_mut().skip(1) {
                    *v = StandardNormal.sample(&mut rng);
                }
                let norm = DVector::from_column_slice(&c).norm();
                if norm > 1e-12 {
                    c.iter_mut().for_each(|v| *v /= norm);
                    break;
                }
            }
            Objective::Linear { c }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::PolySystem;
    use crate::edmd::{exact_lie_matrix, ExactSystem};
    use crate::polybasis::index_set;
    use rand::Rng;

    fn monomial_01(degree: u32) -> BasisSpec {
        BasisSpec::new(BasisFamily::Monomial, 1, degree, vec![(0.0, 1.0)]).unwrap()
    }

    fn counterexample_problem() -> MomentProblem {
        let spec = monomial_01(2);
        let f = PolySystem::interpolate(&spec.with_degree(2), |x, o| o[0] = 2.0 * x[0] - x[0] * x[0]);
        let lie = exact_lie_matrix(ExactSystem::Map(&f.components), 1, 2, &spec).unwrap();
        let domain = SemialgebraicSet::from_box(&spec);
        assemble_problem(&lie, &domain, Objective::Linear { c: vec![0.0, -1.0] }).unwrap()
    }

    #[test]
    fn monomial_moment_matrix_and_localizer() {
        let spec = monomial_01(2);
        let one = PolyCoeffs::constant(spec.with_degree(0), 1.0);
        let m = moment_matrix_map(&one, 2, &spec).unwrap();
        let y = [1.0, 0.3, 0.2];
        let got = m.eval(&y);
        assert_eq!(got, DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.2]));
        let sigma = &SemialgebraicSet::from_box(&spec).constraints[0];
        let loc = moment_matrix_map(sigma, 2, &spec).unwrap();
        assert_eq!(loc.size, 1);
        assert!((loc.eval(&y)[(0, 0)] - (0.3 - 0.2)).abs() < 1e-15);
        // Dirac at 1: all moments 1
        let d = [1.0; 3];
        assert_eq!(m.eval(&d), DMatrix::from_element(2, 2, 1.0));
        assert_eq!(loc.eval(&d)[(0, 0)], 0.0);
    }

    #[test]
    fn counterexample_problem_layout() {
        let p = counterexample_problem();
        assert_eq!(p.equalities.rows, 2);
        assert_eq!(p.equalities.rhs, vec![0.0, 1.0]);
        let row0: Vec<_> = p.equalities.triplets.iter().filter(|t| t.0 == 0).collect();
        assert_eq!(row0.len(), 2);
        assert!(row0.iter().any(|t| t.1 == 1 && (t.2 - 1.0).abs() < 1e-14));
        assert!(row0.iter().any(|t| t.1 == 2 && (t.2 + 1.0).abs() < 1e-14));
        assert_eq!(p.psd_blocks.len(), 2);
        assert_eq!(p.psd_blocks[0].size, 2);
        assert_eq!(p.psd_blocks[1].size, 1);
        // the claimed optimum is feasible
        let y = [1.0, 1.0, 1.0];
        assert!(p.equality_residual(&y) < 1e-14);
        assert!(p.min_psd_eigenvalue(&y) > -1e-14);
    }

    #[test]
    fn chebyshev_box_constraint_is_one_minus_square() {
        let spec = BasisSpec::chebyshev_unit(2, 4);
        let x = SemialgebraicSet::from_box(&spec);
        for p in [[0.3, -0.7], [1.0, 0.0], [-0.2, 0.9]] {
            for i in 0..2 {
                let want = 1.0 - p[i] * p[i];
                assert!((x.constraints[i].eval(&p).unwrap() - want).abs() < 1e-15);
            }
        }
    }

    fn dirac_moments(spec: &BasisSpec, pts: &[Vec<f64>], w: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; spec.size()];
        for (p, wi) in pts.iter().zip(w) {
            for (a, v) in y.iter_mut().zip(spec.eval(p).unwrap()) {
                *a += wi * v;
            }
        }
        y
    }

    #[test]
    fn measures_in_the_box_give_psd_blocks() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for n in 1..=3usize {
            let l = if n == 3 { 5 } else { 8 };
            let spec = BasisSpec::chebyshev_unit(n, l);
            let domain = SemialgebraicSet::from_box(&spec);
            let lie = LieMatrix {
                entries: DMatrix::zeros(dictionary_size(n, 2), spec.size()),
                k: 2,
                l,
                spec: spec.clone(),
                tau: 1.0,
                kind: crate::edmd::LieKind::ExactMap,
                threshold: None,
                rank: None,
            };
            let p = assemble_problem(&lie, &domain, Objective::Linear { c: vec![] }).unwrap();
            let pts: Vec<Vec<f64>> = (0..40)
                .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            let w = vec![1.0 / 40.0; 40];
            let y = dirac_moments(&spec, &pts, &w);
            assert!(p.min_psd_eigenvalue(&y) >= -1e-10);
            // a single interior Dirac
            let y = dirac_moments(&spec, &pts[..1], &[1.0]);
            assert!(p.min_psd_eigenvalue(&y) >= -1e-10);
            // the moment matrix of the data equals the average outer product
            let small = spec.with_degree(l / 2);
            let mut want = DMatrix::zeros(small.size(), small.size());
            for q in &pts {
                let v = DVector::from_vec(small.eval(q).unwrap());
                want += &v * v.transpose() / 40.0;
            }
            let y = dirac_moments(&spec, &pts, &w);
            assert!((p.psd_blocks[0].eval(&y) - want).amax() < 1e-12);
        }
    }

    #[test]
    fn moment_map_is_linear() {
        let spec = BasisSpec::chebyshev_unit(2, 6);
        let sigma = &SemialgebraicSet::from_box(&spec).constraints[1];
        let m = moment_matrix_map(sigma, 6, &spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let y1: Vec<f64> = (0..spec.size()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y2: Vec<f64> = (0..spec.size()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let comb: Vec<f64> = y1.iter().zip(&y2).map(|(a, b)| 2.0 * a - 3.0 * b).collect();
        let lhs = m.eval(&comb);
        let rhs = m.eval(&y1) * 2.0 - m.eval(&y2) * 3.0;
        assert!((lhs - rhs).amax() < 1e-13);
        assert_eq!(index_set(2, 2).len(), m.size);
    }

    #[test]
    fn logistic_physical_measure_is_feasible() {
        let spec = BasisSpec::chebyshev_unit(1, 20);
        let f = PolySystem::interpolate(&spec.with_degree(2), |x, o| o[0] = 2.0 * x[0] * x[0] - 1.0);
        let lie = exact_lie_matrix(ExactSystem::Map(&f.components), 10, 20, &spec).unwrap();
        let p = assemble_problem(&lie, &SemialgebraicSet::from_box(&spec), Objective::Linear { c: vec![0.0, 1.0] })
            .unwrap();
        let mut y = vec![0.0; 21];
        y[0] = 1.0;
        assert!(p.equality_residual(&y) < 1e-10);
        assert!(p.min_psd_eigenvalue(&y) > -1e-10);
    }

    #[test]
    fn lifting_adds_epigraph_cone() {
        let p = counterexample_problem();
        let mut fit = p.clone();
        fit.objective = Objective::fit(&[(1, 0.25)]);
        let lifted = lift_momentfit(&fit);
        assert_eq!(lifted.n_vars, 4);
        assert_eq!(lifted.soc_blocks.len(), 1);
        let u = [1.0, 0.5, 0.25, 0.0];
        let v = lifted.soc_blocks[0].eval(&u);
        assert_eq!(v, vec![0.0, 0.25]);
        let empty = MomentProblem {
            objective: Objective::MomentFit { targets: vec![] },
            ..p
        };
        assert_eq!(lift_momentfit(&empty).soc_blocks[0].rows.len(), 1);
    }

    #[test]
    fn random_objectives() {
        let a = randomized_objectives(1, 20, 1000, 17);
        let b = randomized_objectives(1, 20, 1, 17);
        assert_eq!(a[0], b[0]);
        let mut mean = vec![0.0; 21];
        for o in &a {
            let Objective::Linear { c } = o else { panic!() };
            assert_eq!(c[0], 0.0);
            assert!((DVector::from_column_slice(c).norm() - 1.0).abs() < 1e-12);
            for (m, v) in mean.iter_mut().zip(c) {
                *m += v / 1000.0;
            }
        }
        assert!(mean.iter().all(|m| m.abs() < 0.1));
    }

    #[test]
    fn json_round_trip() {
        let p = counterexample_problem();
        let mut buf = Vec::new();
        p.write_json(&mut buf).unwrap();
        assert_eq!(MomentProblem::read_json(&buf[..]).unwrap(), p);
    }

    #[test]
    fn objective_degree_is_checked() {
        let p = counterexample_problem();
        let spec = monomial_01(2);
        let f = PolySystem::interpolate(&spec.with_degree(2), |x, o| o[0] = 2.0 * x[0] - x[0] * x[0]);
        let lie = exact_lie_matrix(ExactSystem::Map(&f.components), 1, 2, &spec).unwrap();
        let r = assemble_problem(&lie, &SemialgebraicSet::from_box(&spec), Objective::Linear { c: vec![0.0, 0.0, 1.0] });
        assert!(matches!(r, Err(Error::DimensionMismatch(_))));
        assert_eq!(p.k, 1);
    }
}
