use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::quadrature::adaptive_simpson;
use crate::error::{Error, Result};
use crate::polybasis::{lebesgue_moments, product_linearize, BasisFamily, BasisSpec, PolyCoeffs};

/// Gram matrix `∫ p_r p_rᵀ dx` of the degree-`r` dictionary against Lebesgue
/// measure on the domain box.
pub fn reference_moment_matrix(spec: &BasisSpec, r: u32) -> DMatrix<f64> {
    let small = spec.with_degree(r);
    let set = small.index_set();
    let big = spec.with_degree(2 * r);
    let bigset = big.index_set();
    let leb = lebesgue_moments(&big);
    let s = set.len();
    let mut m = DMatrix::zeros(s, s);
    for a in 0..s {
        for b in a..s {
            let v: f64 = product_linearize(set.get(a), set.get(b), spec.family)
                .into_iter()
                .map(|(g, c)| c * leb[bigset.position(&g).unwrap()])
                .sum();
            m[(a, b)] = v;
            m[(b, a)] = v;
        }
    }
    m
}

/// Polynomial density `ρ_r` with respect to Lebesgue measure on the box.
/// It may take negative values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignedDensity {
    pub poly: PolyCoeffs,
}

/// `ρ_r = p_rᵀ M⁻¹ y_r`, the unique degree-`r` density whose moments up to
/// degree `r` equal those in `y`.
pub fn density_from_moments(y: &[f64], r: u32, spec: &BasisSpec) -> Result<SignedDensity> {
    let target = spec.with_degree(r);
    let rx = target.size();
    if y.len() < rx {
        return Err(Error::DegreeOverflow {
            needed: r,
            available: degree_of_len(spec, y.len()),
        });
    }
    let m = reference_moment_matrix(spec, r);
    let chol = m.cholesky().ok_or(Error::SingularReference)?;
    let c = chol.solve(&DVector::from_column_slice(&y[..rx]));
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularReference);
    }
    Ok(SignedDensity {
        poly: PolyCoeffs::new(target, c.as_slice().to_vec())?,
    })
}

pub(crate) fn degree_of_len(spec: &BasisSpec, len: usize) -> u32 {
    let mut d = 0;
    while spec.with_degree(d + 1).size() <= len {
        d += 1;
    }
    d
}

/// `∫ f g dx` over the box, for two polynomials in compatible dictionaries.
pub(crate) fn integrate_product(f: &PolyCoeffs, g: &PolyCoeffs) -> Result<f64> {
    if !f.spec.compatible(&g.spec) {
        return Err(Error::DimensionMismatch("incompatible dictionaries".into()));
    }
    let big = f.spec.with_degree(f.spec.degree + g.spec.degree);
    let bigset = big.index_set();
    let leb = lebesgue_moments(&big);
    let (fs, gs) = (f.spec.index_set(), g.spec.index_set());
    let mut acc = 0.0;
    for (i, &cf) in f.coeffs.iter().enumerate().filter(|(_, c)| **c != 0.0) {
        for (j, &cg) in g.coeffs.iter().enumerate().filter(|(_, c)| **c != 0.0) {
            for (h, c) in product_linearize(fs.get(i), gs.get(j), f.spec.family) {
                acc += cf * cg * c * leb[bigset.position(&h).unwrap()];
            }
        }
    }
    Ok(acc)
}

impl SignedDensity {
    pub fn spec(&self) -> &BasisSpec {
        &self.poly.spec
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.poly.eval(x)
    }

    /// `∫ ρ dx`.
    pub fn mass(&self) -> f64 {
        let leb = lebesgue_moments(&self.poly.spec);
        leb.iter().zip(&self.poly.coeffs).map(|(a, b)| a * b).sum()
    }

    /// `∫ g ρ dx`, exact for polynomial `g`.
    pub fn expectation(&self, g: &PolyCoeffs) -> Result<f64> {
        integrate_product(&self.poly, g)
    }

    /// Moments `∫ b_γ ρ dx` for every element of `spec`.
    pub fn moments(&self, spec: &BasisSpec) -> Result<Vec<f64>> {
        (0..spec.size())
            .map(|i| {
                let mut e = PolyCoeffs::zeros(spec.clone());
                e.coeffs[i] = 1.0;
                integrate_product(&self.poly, &e)
            })
            .collect()
    }

    /// Cumulative distribution `R(x) = ∫_a^x ρ`, defined for `n = 1`.
    pub fn cdf(&self) -> Result<Cdf> {
        let spec = &self.poly.spec;
        if spec.dimension != 1 {
            return Err(Error::DimensionNotOne(spec.dimension));
        }
        let (a, b) = spec.domain_box[0];
        let c = &self.poly.coeffs;
        let mut anti = vec![0.0; c.len() + 1];
        match spec.family {
            BasisFamily::Monomial => {
                for (j, &cj) in c.iter().enumerate() {
                    anti[j + 1] += cj / (j as f64 + 1.0);
                }
            }
            BasisFamily::Chebyshev => {
                let h = 0.5 * (b - a);
                for (j, &cj) in c.iter().enumerate() {
                    match j {
                        0 => anti[1] += h * cj,
                        1 => anti[2] += 0.25 * h * cj,
                        _ => {
                            let jf = j as f64;
                            anti[j + 1] += h * cj / (2.0 * (jf + 1.0));
                            anti[j - 1] -= h * cj / (2.0 * (jf - 1.0));
                        }
                    }
                }
            }
        }
        let anti_spec = spec.with_degree(spec.degree + 1);
        let poly = PolyCoeffs::new(anti_spec, anti)?;
        let offset = poly.eval(&[a])?;
        Ok(Cdf { poly, offset })
    }
}

/// Antiderivative of a one-dimensional [`SignedDensity`], zero at the left
/// end of the box.
#[derive(Clone, Debug)]
pub struct Cdf {
    poly: PolyCoeffs,
    offset: f64,
}

impl Cdf {
    pub fn eval(&self, x: f64) -> f64 {
        self.poly.eval(&[x]).map(|v| v - self.offset).unwrap_or(f64::NAN)
    }
}

/// `∫ |R − R*| dx` over the box, where `R` is the CDF of `density` and `R*`
/// is `exact_cdf`.
pub fn cdf_and_l1(density: &SignedDensity, exact_cdf: &dyn Fn(f64) -> f64) -> Result<f64> {
    let cdf = density.cdf()?;
    let (a, b) = density.spec().domain_box[0];
    let f = |x: f64| (cdf.eval(x) - exact_cdf(x)).abs();
    Ok(adaptive_simpson(&f, a, b, 1e-10, 64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recovery::quadrature::gauss_legendre;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn cheb(d: u32) -> BasisSpec {
        BasisSpec::new(BasisFamily::Chebyshev, 1, d, vec![(-1.0, 1.0)]).unwrap()
    }

    #[test]
    fn reference_matrix_small_cases() {
        let m = reference_moment_matrix(&cheb(1), 1);
        assert_abs_diff_eq!(m[(0, 0)], 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m[(0, 1)], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m[(1, 1)], 2.0 / 3.0, epsilon = 1e-15);
        let mono = BasisSpec::new(BasisFamily::Monomial, 1, 1, vec![(0.0, 1.0)]).unwrap();
        let h = reference_moment_matrix(&mono, 1);
        assert_abs_diff_eq!(h[(0, 1)], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(h[(1, 1)], 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn reference_matrix_is_positive_definite() {
        for n in 1..=3usize {
            let rmax = if n == 3 { 10 } else { 20 };
            let spec = BasisSpec::new(BasisFamily::Chebyshev, n, rmax, vec![(-1.0, 1.0); n]).unwrap();
            let m = reference_moment_matrix(&spec, rmax);
            let min = m.symmetric_eigen().eigenvalues.min();
            assert!(min > 0.0, "n={n}: {min}");
        }
    }

    #[test]
    fn reference_matrix_matches_gauss_legendre() {
        let spec = BasisSpec::new(BasisFamily::Chebyshev, 2, 4, vec![(-1.0, 2.0), (0.0, 3.0)]).unwrap();
        let m = reference_moment_matrix(&spec, 4);
        let (x, w) = gauss_legendre(10);
        let mut q = DMatrix::zeros(m.nrows(), m.ncols());
        for (xi, wi) in x.iter().zip(&w) {
            for (xj, wj) in x.iter().zip(&w) {
                let p = [0.5 + 1.5 * xi, 1.5 + 1.5 * xj];
                let b = DVector::from_vec(spec.eval(&p).unwrap());
                q += (wi * wj * 2.25) * &b * b.transpose();
            }
        }
        assert!((m - q).amax() < 1e-12);
    }

    #[test]
    fn uniform_moments_give_constant_density() {
        let spec = cheb(6);
        let y: Vec<f64> = lebesgue_moments(&spec).iter().map(|v| 0.5 * v).collect();
        let rho = density_from_moments(&y, 6, &spec).unwrap();
        for x in [-0.9, -0.2, 0.4, 1.0] {
            assert_abs_diff_eq!(rho.eval(&[x]).unwrap(), 0.5, epsilon = 1e-12);
        }
        let l1 = cdf_and_l1(&rho, &|x| 0.5 * (x + 1.0)).unwrap();
        assert!(l1 < 1e-10);
    }

    #[test]
    fn dirac_density_reproduces_moments_by_quadrature() {
        let spec = cheb(2);
        let y = spec.eval(&[0.0]).unwrap();
        let rho = density_from_moments(&y, 2, &spec).unwrap();
        let (x, w) = gauss_legendre(8);
        for j in 0..3 {
            let got: f64 = x
                .iter()
                .zip(&w)
                .map(|(x, w)| w * rho.eval(&[*x]).unwrap() * spec.eval(&[*x]).unwrap()[j])
                .sum();
            assert_abs_diff_eq!(got, y[j], epsilon = 1e-12);
        }
        assert_abs_diff_eq!(rho.mass(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn expectation_of_t2_under_uniform() {
        let spec = cheb(0);
        let rho = SignedDensity {
            poly: PolyCoeffs::constant(spec, 0.5),
        };
        let mut g = PolyCoeffs::zeros(cheb(2));
        g.coeffs[2] = 1.0;
        assert_abs_diff_eq!(rho.expectation(&g).unwrap(), -1.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn cdf_rejects_higher_dimensions() {
        let spec = BasisSpec::chebyshev_unit(2, 2);
        let rho = SignedDensity {
            poly: PolyCoeffs::constant(spec, 0.25),
        };
        assert!(matches!(rho.cdf(), Err(Error::DimensionNotOne(2))));
    }

    proptest! {
        #[test]
        fn density_preserves_moments(seed in 0u64..1000, r in 1u32..8) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let spec = BasisSpec::new(BasisFamily::Chebyshev, 2, r, vec![(-1.0, 1.0), (-2.0, 0.5)]).unwrap();
            let pts: Vec<[f64; 2]> = (0..6).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-2.0..0.5)]).collect();
            let mut y = vec![0.0; spec.size()];
            for p in &pts {
                for (a, b) in y.iter_mut().zip(spec.eval(p).unwrap()) {
                    *a += b / pts.len() as f64;
                }
            }
            let rho = density_from_moments(&y, r, &spec).unwrap();
            let back = rho.moments(&spec).unwrap();
            for (a, b) in back.iter().zip(&y) {
                prop_assert!((a - b).abs() < 1e-8);
            }
            prop_assert!((rho.mass() - 1.0).abs() < 1e-8);
        }

        #[test]
        fn cdf_derivative_is_density(seed in 0u64..1000, mono in any::<bool>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let family = if mono { BasisFamily::Monomial } else { BasisFamily::Chebyshev };
            let spec = BasisSpec::new(family, 1, 9, vec![(-0.5, 2.0)]).unwrap();
            let coeffs: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
            let rho = SignedDensity { poly: PolyCoeffs::new(spec, coeffs).unwrap() };
            let cdf = rho.cdf().unwrap();
            prop_assert!(cdf.eval(-0.5).abs() < 1e-12);
            prop_assert!((cdf.eval(2.0) - rho.mass()).abs() < 1e-10);
            for _ in 0..5 {
                let x = rng.random_range(-0.4..1.9);
                let h = 1e-6;
                let fd = (cdf.eval(x + h) - cdf.eval(x - h)) / (2.0 * h);
                prop_assert!((fd - rho.eval(&[x]).unwrap()).abs() < 1e-4);
            }
        }
    }
}
