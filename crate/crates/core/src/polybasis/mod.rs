//! Graded multivariate polynomial dictionaries.
//!
//! A [`BasisSpec`] fixes the family, dimension, maximal total degree and
//! domain box of a dictionary. Basis functions are ordered by
//! [`index_set`]; because the order is graded, the degree-`k` dictionary is a
//! prefix of every degree-`l >= k` dictionary.
//!
//! Chebyshev functions are evaluated in box-normalized coordinates
//! `u = (2x - a - b) / (b - a)`. Monomials are evaluated in the original
//! coordinates.

mod index;
mod interp;

pub use index::{binomial, dictionary_size, index_set, IndexSet, MultiIndex};
pub use interp::Interpolator;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisFamily {
    Monomial,
    Chebyshev,
}

/// Family, dimension, degree and domain box of a polynomial dictionary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub family: BasisFamily,
    pub dimension: usize,
    pub degree: u32,
    pub domain_box: Vec<(f64, f64)>,
}

impl BasisSpec {
    pub fn new(
        family: BasisFamily,
        dimension: usize,
        degree: u32,
        domain_box: Vec<(f64, f64)>,
    ) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::DimensionMismatch("dimension must be >= 1".into()));
        }
        if domain_box.len() != dimension {
            return Err(Error::DimensionMismatch(format!(
                "domain box has {} axes, expected {dimension}",
                domain_box.len()
            )));
        }
        for &(a, b) in &domain_box {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(Error::NonFiniteInput(format!("invalid interval [{a}, {b}]")));
            }
        }
        Ok(BasisSpec {
            family,
            dimension,
            degree,
            domain_box,
        })
    }

    /// Chebyshev dictionary on the cube `[-1, 1]^n`.
    pub fn chebyshev_unit(dimension: usize, degree: u32) -> Self {
        BasisSpec {
            family: BasisFamily::Chebyshev,
            dimension,
            degree,
            domain_box: vec![(-1.0, 1.0); dimension],
        }
    }

    pub fn with_degree(&self, degree: u32) -> BasisSpec {
        BasisSpec {
            degree,
            ..self.clone()
        }
    }

    pub fn size(&self) -> usize {
        dictionary_size(self.dimension, self.degree)
    }

    pub fn index_set(&self) -> IndexSet {
        IndexSet::new(self.dimension, self.degree)
    }

    /// Same family, dimension and box (degree may differ).
    pub fn compatible(&self, other: &BasisSpec) -> bool {
        self.family == other.family
            && self.dimension == other.dimension
            && self.domain_box == other.domain_box
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(&self.domain_box)
            .all(|(&v, &(a, b))| v >= a && v <= b)
    }

    /// Map a point of the box to `[-1, 1]^n`.
    pub fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.domain_box)
            .map(|(&v, &(a, b))| (2.0 * v - a - b) / (b - a))
            .collect()
    }

    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(&self.domain_box)
            .map(|(&v, &(a, b))| 0.5 * (a + b) + 0.5 * (b - a) * v)
            .collect()
    }

    /// Basis values at `x` in [`index_set`] order.
    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut ev = BasisEvaluator::new(self);
        let mut out = vec![0.0; self.size()];
        ev.eval_into(x, &mut out)?;
        Ok(out)
    }

    /// Like [`BasisSpec::eval`], also reporting whether `x` lies in the box.
    pub fn eval_flagged(&self, x: &[f64]) -> Result<(Vec<f64>, bool)> {
        let v = self.eval(x)?;
        Ok((v, self.contains(x)))
    }

    /// Values, gradients and Hessians (row-major `n x n`) of every basis function.
    pub fn eval_with_derivatives(&self, x: &[f64]) -> Result<BasisDerivatives> {
        check_point(self.dimension, x)?;
        let n = self.dimension;
        let k = self.degree as usize;
        let tables: Vec<AxisTable> = (0..n).map(|i| self.axis_table(i, x[i], k)).collect();
        let set = self.index_set();
        let mut values = Vec::with_capacity(set.len());
        let mut gradients = Vec::with_capacity(set.len());
        let mut hessians = Vec::with_capacity(set.len());
        for alpha in set.iter() {
            let e = alpha.exponents();
            let v: f64 = (0..n).map(|i| tables[i].val[e[i] as usize]).product();
            let mut g = vec![0.0; n];
            let mut h = vec![0.0; n * n];
            for i in 0..n {
                let mut gi = tables[i].d1[e[i] as usize];
                let mut hii = tables[i].d2[e[i] as usize];
                for j in (0..n).filter(|&j| j != i) {
                    gi *= tables[j].val[e[j] as usize];
                    hii *= tables[j].val[e[j] as usize];
                }
                g[i] = gi;
                h[i * n + i] = hii;
                for j in (i + 1)..n {
                    let mut hij = tables[i].d1[e[i] as usize] * tables[j].d1[e[j] as usize];
                    for l in (0..n).filter(|&l| l != i && l != j) {
                        hij *= tables[l].val[e[l] as usize];
                    }
                    h[i * n + j] = hij;
                    h[j * n + i] = hij;
                }
            }
            values.push(v);
            gradients.push(g);
            hessians.push(h);
        }
        Ok(BasisDerivatives {
            values,
            gradients,
            hessians,
        })
    }

    fn axis_table(&self, axis: usize, x: f64, k: usize) -> AxisTable {
        let (a, b) = self.domain_box[axis];
        match self.family {
            BasisFamily::Monomial => {
                let mut t = AxisTable::zeros(k);
                let mut p = 1.0;
                for j in 0..=k {
                    t.val[j] = p;
                    p *= x;
                }
                for j in 1..=k {
                    t.d1[j] = j as f64 * t.val[j - 1];
                }
                for j in 2..=k {
                    t.d2[j] = (j * (j - 1)) as f64 * t.val[j - 2];
                }
                t
            }
            BasisFamily::Chebyshev => {
                let s = 2.0 / (b - a);
                let u = (2.0 * x - a - b) / (b - a);
                let mut t = chebyshev_table(u, k);
                for j in 0..=k {
                    t.d1[j] *= s;
                    t.d2[j] *= s * s;
                }
                t
            }
        }
    }
}

/// Output of [`BasisSpec::eval_with_derivatives`].
#[derive(Clone, Debug)]
pub struct BasisDerivatives {
    pub values: Vec<f64>,
    pub gradients: Vec<Vec<f64>>,
    pub hessians: Vec<Vec<f64>>,
}

struct AxisTable {
    val: Vec<f64>,
    d1: Vec<f64>,
    d2: Vec<f64>,
}

impl AxisTable {
    fn zeros(k: usize) -> Self {
        AxisTable {
            val: vec![0.0; k + 1],
            d1: vec![0.0; k + 1],
            d2: vec![0.0; k + 1],
        }
    }
}

/// `T_j(u)`, `T_j'(u)`, `T_j''(u)` for `j = 0..=k`.
fn chebyshev_table(u: f64, k: usize) -> AxisTable {
    let mut t = AxisTable::zeros(k);
    t.val[0] = 1.0;
    if k >= 1 {
        t.val[1] = u;
        t.d1[1] = 1.0;
    }
    for j in 1..k {
        t.val[j + 1] = 2.0 * u * t.val[j] - t.val[j - 1];
        t.d1[j + 1] = 2.0 * t.val[j] + 2.0 * u * t.d1[j] - t.d1[j - 1];
        t.d2[j + 1] = 4.0 * t.d1[j] + 2.0 * u * t.d2[j] - t.d2[j - 1];
    }
    t
}

/// Chebyshev values `T_0(u)..T_k(u)` written into `out`.
pub(crate) fn chebyshev_values(u: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = 1.0;
    if out.len() > 1 {
        out[1] = u;
    }
    for j in 2..out.len() {
        out[j] = 2.0 * u * out[j - 1] - out[j - 2];
    }
}

fn check_point(n: usize, x: &[f64]) -> Result<()> {
    if x.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "point has {} coordinates, expected {n}",
            x.len()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput(format!("{x:?}")));
    }
    Ok(())
}

/// Reusable evaluator for many points of one dictionary.
pub struct BasisEvaluator {
    family: BasisFamily,
    n: usize,
    k: usize,
    boxes: Vec<(f64, f64)>,
    exps: Vec<u32>,
    tables: Vec<f64>,
}

impl BasisEvaluator {
    pub fn new(spec: &BasisSpec) -> Self {
        let set = spec.index_set();
        let exps = set.iter().flat_map(|a| a.exponents().to_vec()).collect();
        let k = spec.degree as usize;
        BasisEvaluator {
            family: spec.family,
            n: spec.dimension,
            k,
            boxes: spec.domain_box.clone(),
            exps,
            tables: vec![0.0; spec.dimension * (k + 1)],
        }
    }

    pub fn len(&self) -> usize {
        self.exps.len() / self.n
    }

    pub fn is_empty(&self) -> bool {
        self.exps.is_empty()
    }

    pub fn eval_into(&mut self, x: &[f64], out: &mut [f64]) -> Result<()> {
        check_point(self.n, x)?;
        let w = self.k + 1;
        for (i, &xi) in x.iter().enumerate() {
            let row = &mut self.tables[i * w..(i + 1) * w];
            match self.family {
                BasisFamily::Monomial => {
                    let mut p = 1.0;
                    for r in row.iter_mut() {
                        *r = p;
                        p *= xi;
                    }
                }
                BasisFamily::Chebyshev => {
                    let (a, b) = self.boxes[i];
                    chebyshev_values((2.0 * xi - a - b) / (b - a), row);
                }
            }
        }
        for (j, o) in out.iter_mut().enumerate() {
            let e = &self.exps[j * self.n..(j + 1) * self.n];
            let mut v = 1.0;
            for (i, &ei) in e.iter().enumerate() {
                v *= self.tables[i * w + ei as usize];
            }
            *o = v;
        }
        Ok(())
    }
}

/// Coefficients of a polynomial in a dictionary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolyCoeffs {
    pub spec: BasisSpec,
    pub coeffs: Vec<f64>,
}

impl PolyCoeffs {
    pub fn new(spec: BasisSpec, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != spec.size() {
            return Err(Error::DimensionMismatch(format!(
                "{} coefficients for a dictionary of size {}",
                coeffs.len(),
                spec.size()
            )));
        }
        Ok(PolyCoeffs { spec, coeffs })
    }

    pub fn zeros(spec: BasisSpec) -> Self {
        let n = spec.size();
        PolyCoeffs {
            spec,
            coeffs: vec![0.0; n],
        }
    }

    pub fn constant(spec: BasisSpec, c: f64) -> Self {
        let mut p = PolyCoeffs::zeros(spec);
        p.coeffs[0] = c;
        p
    }

    /// The coordinate function `x_i` (original coordinates).
    pub fn coordinate(spec: BasisSpec, i: usize) -> Self {
        let set = spec.index_set();
        let mut p = PolyCoeffs::zeros(spec.clone());
        let pos = set
            .position(&MultiIndex::unit(spec.dimension, i))
            .expect("degree >= 1");
        match spec.family {
            BasisFamily::Monomial => p.coeffs[pos] = 1.0,
            BasisFamily::Chebyshev => {
                let (a, b) = spec.domain_box[i];
                p.coeffs[0] = 0.5 * (a + b);
                p.coeffs[pos] = 0.5 * (b - a);
            }
        }
        p
    }

    /// Interpolates `f` in the dictionary; exact when `f` is a polynomial of
    /// degree `<= spec.degree`.
    pub fn interpolate(spec: BasisSpec, f: impl Fn(&[f64]) -> f64) -> Self {
        let interp = Interpolator::new(&spec);
        let vals: Vec<f64> = interp.nodes().iter().map(|x| f(x)).collect();
        interp.fit(&vals)
    }

    /// Highest total degree carrying a coefficient above `1e-13` relative.
    pub fn degree(&self) -> u32 {
        let set = self.spec.index_set();
        let scale = self.coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        let tol = 1e-13 * scale.max(f64::MIN_POSITIVE);
        self.coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| c.abs() > tol)
            .map(|(i, _)| set.get(i).degree())
            .max()
            .unwrap_or(0)
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        let b = self.spec.eval(x)?;
        Ok(b.iter().zip(&self.coeffs).map(|(u, v)| u * v).sum())
    }

    /// Re-express in the same family at a different degree (truncating or padding).
    pub fn resized(&self, degree: u32) -> PolyCoeffs {
        let spec = self.spec.with_degree(degree);
        let mut coeffs = vec![0.0; spec.size()];
        let n = coeffs.len().min(self.coeffs.len());
        coeffs[..n].copy_from_slice(&self.coeffs[..n]);
        PolyCoeffs { spec, coeffs }
    }

    /// Exact product, expressed at degree `deg(self) + deg(other)`.
    pub fn mul(&self, other: &PolyCoeffs) -> Result<PolyCoeffs> {
        if !self.spec.compatible(&other.spec) {
            return Err(Error::DimensionMismatch("incompatible dictionaries".into()));
        }
        let out_spec = self.spec.with_degree(self.degree() + other.degree());
        let out_set = out_spec.index_set();
        let sa = self.spec.index_set();
        let sb = other.spec.index_set();
        let mut coeffs = vec![0.0; out_set.len()];
        for (i, &ca) in self.coeffs.iter().enumerate().filter(|(_, c)| **c != 0.0) {
            for (j, &cb) in other.coeffs.iter().enumerate().filter(|(_, c)| **c != 0.0) {
                if sa.get(i).degree() + sb.get(j).degree() > out_spec.degree {
                    continue;
                }
                for (g, c) in product_linearize(sa.get(i), sb.get(j), self.spec.family) {
                    coeffs[out_set.position(&g).unwrap()] += ca * cb * c;
                }
            }
        }
        Ok(PolyCoeffs {
            spec: out_spec,
            coeffs,
        })
    }
}

/// Selection matrix `Theta` with `Theta p_l(x) = p_k(x)`.
pub fn extraction_matrix(k: u32, l: u32, spec: &BasisSpec) -> Result<DMatrix<f64>> {
    if k > l {
        return Err(Error::DegreeOrder { k, l });
    }
    let kx = dictionary_size(spec.dimension, k);
    let lx = dictionary_size(spec.dimension, l);
    Ok(DMatrix::from_fn(kx, lx, |i, j| if i == j { 1.0 } else { 0.0 }))
}

/// Expansion of `b_alpha * b_beta` in the dictionary, as `(gamma, coefficient)`
/// pairs. Monomials multiply by adding exponents; Chebyshev factors use
/// `T_a T_b = (T_{a+b} + T_{|a-b|}) / 2` axis by axis.
pub fn product_linearize(
    alpha: &MultiIndex,
    beta: &MultiIndex,
    family: BasisFamily,
) -> Vec<(MultiIndex, f64)> {
    match family {
        BasisFamily::Monomial => vec![(alpha.add(beta), 1.0)],
        BasisFamily::Chebyshev => {
            let mut terms: Vec<(Vec<u32>, f64)> = vec![(Vec::with_capacity(alpha.dim()), 1.0)];
            for (&a, &b) in alpha.exponents().iter().zip(beta.exponents()) {
                let axis: Vec<(u32, f64)> = if a == 0 || b == 0 {
                    vec![(a + b, 1.0)]
                } else {
                    vec![(a + b, 0.5), (a.abs_diff(b), 0.5)]
                };
                let mut next = Vec::with_capacity(terms.len() * axis.len());
                for (e, c) in &terms {
                    for &(g, w) in &axis {
                        let mut e2 = e.clone();
                        e2.push(g);
                        next.push((e2, c * w));
                    }
                }
                terms = next;
            }
            terms
                .into_iter()
                .map(|(e, c)| (MultiIndex(e), c))
                .collect()
        }
    }
}

/// Exact coefficients of `g o f` in the degree-`l` dictionary.
///
/// `f` lists the components of the map in original coordinates. The
/// composition is sampled on a tensor grid of Chebyshev nodes and
/// interpolated, which is exact for polynomials of degree `<= l`.
pub fn compose_with_map(g: &PolyCoeffs, f: &[PolyCoeffs], l: u32) -> Result<PolyCoeffs> {
    let n = g.spec.dimension;
    if f.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "map has {} components, dictionary dimension is {n}",
            f.len()
        )));
    }
    let dg = g.degree();
    let df = f.iter().map(|c| c.degree()).max().unwrap_or(0);
    let needed = dg * df;
    if needed > l {
        return Err(Error::DegreeOverflow {
            needed,
            available: l,
        });
    }
    let interp = Interpolator::new(&g.spec.with_degree(l));
    compose_with_interpolator(g, f, &interp)
}

pub(crate) fn compose_with_interpolator(
    g: &PolyCoeffs,
    f: &[PolyCoeffs],
    interp: &Interpolator,
) -> Result<PolyCoeffs> {
    let mut vals = Vec::with_capacity(interp.nodes().len());
    for x in interp.nodes() {
        let fx: Vec<f64> = f.iter().map(|c| c.eval(x)).collect::<Result<_>>()?;
        vals.push(g.eval(&fx)?);
    }
    Ok(interp.fit(&vals))
}

fn lebesgue_1d(family: BasisFamily, j: u32, (a, b): (f64, f64)) -> f64 {
    match family {
        BasisFamily::Monomial => {
            let p = j as i32 + 1;
            (b.powi(p) - a.powi(p)) / p as f64
        }
        BasisFamily::Chebyshev => {
            if j % 2 == 1 {
                0.0
            } else {
                let jj = j as f64;
                0.5 * (b - a) * 2.0 / (1.0 - jj * jj)
            }
        }
    }
}

/// `∫_box b_gamma dx` for every dictionary element.
pub fn lebesgue_moments(spec: &BasisSpec) -> Vec<f64> {
    spec.index_set()
        .iter()
        .map(|g| {
            g.exponents()
                .iter()
                .zip(&spec.domain_box)
                .map(|(&j, &ab)| lebesgue_1d(spec.family, j, ab))
                .product()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mi(v: &[u32]) -> MultiIndex {
        MultiIndex(v.to_vec())
    }

    #[test]
    fn monomial_eval() {
        let spec = BasisSpec::new(BasisFamily::Monomial, 1, 2, vec![(-3.0, 3.0)]).unwrap();
        assert_eq!(spec.eval(&[2.0]).unwrap(), vec![1.0, 2.0, 4.0]);
    }

    #[test]
    fn chebyshev_eval_1d() {
        let spec = BasisSpec::chebyshev_unit(1, 3);
        let v = spec.eval(&[0.5]).unwrap();
        for (a, b) in v.iter().zip([1.0, 0.5, -0.5, -1.0]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn chebyshev_eval_2d_tensor() {
        let spec = BasisSpec::chebyshev_unit(2, 2);
        let v = spec.eval(&[0.5, -0.5]).unwrap();
        // T_a(x1) T_b(x2) evaluated factor by factor
        let t = |j: u32, u: f64| (j as f64 * u.acos()).cos();
        let expected: Vec<f64> = index_set(2, 2)
            .iter()
            .map(|a| t(a.0[0], 0.5) * t(a.0[1], -0.5))
            .collect();
        for (a, b) in v.iter().zip(&expected) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-14);
        }
        for (a, b) in v.iter().zip([1.0, 0.5, -0.5, -0.5, -0.25, -0.5]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-14);
        }
    }

    #[test]
    fn eval_rejects_non_finite() {
        let spec = BasisSpec::chebyshev_unit(1, 3);
        assert!(matches!(spec.eval(&[f64::NAN]), Err(Error::NonFiniteInput(_))));
        let (_, inside) = spec.eval_flagged(&[1.5]).unwrap();
        assert!(!inside);
    }

    #[test]
    fn extraction_matrix_cases() {
        let spec = BasisSpec::chebyshev_unit(1, 2);
        let t = extraction_matrix(1, 2, &spec).unwrap();
        assert_eq!(t, DMatrix::from_row_slice(2, 3, &[1., 0., 0., 0., 1., 0.]));
        let id = extraction_matrix(2, 2, &spec).unwrap();
        assert_eq!(id, DMatrix::identity(3, 3));
        assert!(matches!(
            extraction_matrix(3, 2, &spec),
            Err(Error::DegreeOrder { .. })
        ));
    }

    #[test]
    fn extraction_matrix_selects_prefix_at_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for family in [BasisFamily::Chebyshev, BasisFamily::Monomial] {
            for n in 1..=3 {
                let spec = BasisSpec::new(family, n, 7, vec![(-2.0, 1.5); n]).unwrap();
                for _ in 0..20 {
                    let x: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..1.5)).collect();
                    let pl = nalgebra::DVector::from_vec(spec.eval(&x).unwrap());
                    for k in 0..=7 {
                        let th = extraction_matrix(k, 7, &spec).unwrap();
                        let pk = spec.with_degree(k).eval(&x).unwrap();
                        let got = &th * &pl;
                        for (a, b) in got.iter().zip(&pk) {
                            assert!((a - b).abs() <= 1e-13 * b.abs().max(1.0));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn product_linearize_cases() {
        assert_eq!(
            product_linearize(&mi(&[1, 0]), &mi(&[0, 2]), BasisFamily::Monomial),
            vec![(mi(&[1, 2]), 1.0)]
        );
        let mut t = product_linearize(&mi(&[1]), &mi(&[1]), BasisFamily::Chebyshev);
        t.sort_by(|a, b| a.0.cmp(&b.0));
        assert_eq!(t, vec![(mi(&[0]), 0.5), (mi(&[2]), 0.5)]);
    }

    /// Interpolation at tensor Chebyshev nodes, computed directly from
    /// `T_j(cos t) = cos(j t)` without the recurrence.
    fn node_interpolation_oracle(n: usize, deg: u32, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        let npts = deg as usize + 1;
        let theta: Vec<f64> = (0..npts)
            .map(|j| std::f64::consts::PI * (j as f64 + 0.5) / npts as f64)
            .collect();
        let set = index_set(n, deg);
        let total = npts.pow(n as u32);
        let mut coeffs = vec![0.0; set.len()];
        for flat in 0..total {
            let mut idx = vec![0usize; n];
            let mut r = flat;
            for d in (0..n).rev() {
                idx[d] = r % npts;
                r /= npts;
            }
            let x: Vec<f64> = idx.iter().map(|&j| theta[j].cos()).collect();
            let fx = f(&x);
            for (c, a) in coeffs.iter_mut().zip(set.iter()) {
                let mut w = fx;
                for d in 0..n {
                    let aj = a.0[d] as f64;
                    let norm = if a.0[d] == 0 { 1.0 } else { 2.0 };
                    w *= norm / npts as f64 * (aj * theta[idx[d]]).cos();
                }
                *c += w;
            }
        }
        coeffs
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn chebyshev_product_matches_node_oracle(
            n in 1usize..=3,
            a in proptest::collection::vec(0u32..5, 3),
            b in proptest::collection::vec(0u32..5, 3),
        ) {
            let alpha = MultiIndex(a[..n].to_vec());
            let beta = MultiIndex(b[..n].to_vec());
            let deg = alpha.degree() + beta.degree();
            let spec = BasisSpec::chebyshev_unit(n, deg);
            let set = spec.index_set();
            let pa = set.position(&alpha).unwrap();
            let pb = set.position(&beta).unwrap();
            let oracle = node_interpolation_oracle(n, deg, |x| {
                let v = spec.eval(x).unwrap();
                v[pa] * v[pb]
            });
            let mut got = vec![0.0; set.len()];
            for (g, c) in product_linearize(&alpha, &beta, BasisFamily::Chebyshev) {
                got[set.position(&g).unwrap()] += c;
            }
            for (x, y) in got.iter().zip(&oracle) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn product_reproduces_pointwise_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for family in [BasisFamily::Chebyshev, BasisFamily::Monomial] {
            let spec = BasisSpec::new(family, 2, 8, vec![(-1.0, 2.0), (0.0, 1.0)]).unwrap();
            let set = spec.index_set();
            for _ in 0..100 {
                let i = rng.random_range(0..dictionary_size(2, 4));
                let j = rng.random_range(0..dictionary_size(2, 4));
                let x = [rng.random_range(-1.0..2.0), rng.random_range(0.0..1.0)];
                let v = spec.eval(&x).unwrap();
                let lhs = v[i] * v[j];
                let rhs: f64 = product_linearize(set.get(i), set.get(j), family)
                    .iter()
                    .map(|(g, c)| c * v[set.position(g).unwrap()])
                    .sum();
                assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
            }
        }
    }

    #[test]
    fn compose_examples() {
        let spec = BasisSpec::chebyshev_unit(1, 2);
        let f = PolyCoeffs::new(spec.clone(), vec![0.0, 0.0, 1.0]).unwrap();
        let g = PolyCoeffs::coordinate(spec.with_degree(1), 0);
        let h = compose_with_map(&g, &[f.clone()], 2).unwrap();
        for (a, b) in h.coeffs.iter().zip([0.0, 0.0, 1.0]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-14);
        }
        // x^2 o (2x^2 - 1) = T_2^2 = (T_0 + T_4) / 2
        let sq = PolyCoeffs::new(spec.clone(), vec![0.5, 0.0, 0.5]).unwrap();
        let h = compose_with_map(&sq, &[f.clone()], 4).unwrap();
        for (a, b) in h.coeffs.iter().zip([0.5, 0.0, 0.0, 0.0, 0.5]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-14);
        }
        let one = PolyCoeffs::constant(spec.clone(), 3.0);
        let h = compose_with_map(&one, &[f.clone()], 3).unwrap();
        assert_abs_diff_eq!(h.coeffs[0], 3.0, epsilon = 1e-14);
        assert!(h.coeffs[1..].iter().all(|c| c.abs() < 1e-14));
        assert!(matches!(
            compose_with_map(&sq, &[f], 3),
            Err(Error::DegreeOverflow { .. })
        ));
    }

    #[test]
    fn compose_round_trips_pointwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for family in [BasisFamily::Chebyshev, BasisFamily::Monomial] {
            let spec = BasisSpec::new(family, 2, 2, vec![(-1.0, 1.0), (-2.0, 2.0)]).unwrap();
            let f: Vec<PolyCoeffs> = (0..2)
                .map(|_| {
                    let c = (0..spec.size()).map(|_| rng.random_range(-0.5..0.5)).collect();
                    PolyCoeffs::new(spec.clone(), c).unwrap()
                })
                .collect();
            let gspec = spec.with_degree(3);
            let g = PolyCoeffs::new(
                gspec.clone(),
                (0..gspec.size()).map(|_| rng.random_range(-1.0..1.0)).collect(),
            )
            .unwrap();
            let h = compose_with_map(&g, &f, 6).unwrap();
            for _ in 0..50 {
                let x = [rng.random_range(-1.0..1.0), rng.random_range(-2.0..2.0)];
                let fx = [f[0].eval(&x).unwrap(), f[1].eval(&x).unwrap()];
                let want = g.eval(&fx).unwrap();
                let got = h.eval(&x).unwrap();
                assert!((want - got).abs() <= 1e-11 * want.abs().max(1.0), "{want} {got}");
            }
        }
    }

    #[test]
    fn lebesgue_moment_values() {
        let m = lebesgue_moments(&BasisSpec::chebyshev_unit(1, 3));
        assert_abs_diff_eq!(m[0], 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m[2], -2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m[3], 0.0);
        let spec = BasisSpec::new(BasisFamily::Monomial, 1, 2, vec![(0.0, 1.0)]).unwrap();
        assert_abs_diff_eq!(lebesgue_moments(&spec)[2], 1.0 / 3.0, epsilon = 1e-15);
        let spec = BasisSpec::chebyshev_unit(2, 4);
        let pos = spec.index_set().position(&mi(&[2, 2])).unwrap();
        assert_abs_diff_eq!(lebesgue_moments(&spec)[pos], 4.0 / 9.0, epsilon = 1e-15);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let spec = BasisSpec::new(BasisFamily::Chebyshev, 2, 5, vec![(-1.0, 3.0), (0.0, 2.0)])
            .unwrap();
        let x = [0.3, 1.1];
        let d = spec.eval_with_derivatives(&x).unwrap();
        let h = 1e-5;
        for i in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[i] += h;
            xm[i] -= h;
            let vp = spec.eval(&xp).unwrap();
            let vm = spec.eval(&xm).unwrap();
            let dp = spec.eval_with_derivatives(&xp).unwrap();
            let dm = spec.eval_with_derivatives(&xm).unwrap();
            for j in 0..spec.size() {
                let fd = (vp[j] - vm[j]) / (2.0 * h);
                assert!((fd - d.gradients[j][i]).abs() < 1e-6);
                for l in 0..2 {
                    let fd2 = (dp.gradients[j][l] - dm.gradients[j][l]) / (2.0 * h);
                    assert!((fd2 - d.hessians[j][i * 2 + l]).abs() < 1e-5);
                }
            }
        }
    }
}
