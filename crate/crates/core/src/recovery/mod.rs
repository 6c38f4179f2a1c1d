//! Measures recovered from optimal moment vectors.
//!
//! A moment vector is turned into a [`SignedDensity`] by projecting onto
//! polynomials with the Lebesgue Gram matrix of the box, or into an
//! [`AtomicMeasure`] when its moment matrix is flat. [`Histogram`] is the
//! data-only baseline.

mod atoms;
mod density;
mod histogram;
mod quadrature;

pub use atoms::{extract_atoms, Atom, AtomicMeasure, ExtractionDiagnostics, DEFAULT_RANK_TOL};
pub use density::{cdf_and_l1, density_from_moments, reference_moment_matrix, Cdf, SignedDensity};
pub use histogram::{histogram_density, histogram_of_points, Histogram};
pub use quadrature::{adaptive_simpson, gauss_legendre};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polybasis::{BasisSpec, PolyCoeffs};

/// Any representation of a probability measure that can integrate polynomials.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Measure {
    Density(SignedDensity),
    Atomic(AtomicMeasure),
    Histogram(Histogram),
    /// A raw moment vector over `spec`.
    Moments { spec: BasisSpec, y: Vec<f64> },
}

/// `∫ g dμ`.
pub fn expectation(measure: &Measure, g: &PolyCoeffs) -> Result<f64> {
    match measure {
        Measure::Density(d) => d.expectation(g),
        Measure::Atomic(a) => a.expectation(g),
        Measure::Histogram(h) => h.expectation(g),
        Measure::Moments { spec, y } => {
            if !spec.compatible(&g.spec) {
                return Err(Error::DimensionMismatch("incompatible dictionaries".into()));
            }
            let need = g.degree();
            if need > spec.degree {
                return Err(Error::DegreeOverflow {
                    needed: need,
                    available: spec.degree,
                });
            }
            let g = g.resized(need);
            Ok(g.coeffs.iter().zip(y).map(|(a, b)| a * b).sum())
        }
    }
}

/// Unnormalized stationary density of the double-well system with noise
/// amplitude `sigma`.
pub fn double_well_weight(x: &[f64], sigma: f64) -> f64 {
    let s = x[0] + x[1];
    let d = x[0] - x[1];
    let v = (4.0 * s * s - 1.0).powi(2) + 4.0 * d * d;
    (-v / (2.0 * sigma * sigma)).exp()
}

/// Expectations of the bivariate Chebyshev products `T_a(x1) T_b(x2)` under
/// the exact double-well density, by tensor Gauss–Legendre quadrature of
/// the given order on `[-3, 3]^2`.
pub fn double_well_expectations(sigma: f64, observables: &[(u32, u32)], order: usize) -> Vec<f64> {
    let (nodes, weights) = gauss_legendre(order);
    let half = 3.0;
    let maxdeg = observables.iter().map(|&(a, b)| a.max(b)).max().unwrap_or(0) as usize;
    let cheb = |x: f64| {
        let mut t = vec![1.0; maxdeg + 1];
        if maxdeg >= 1 {
            t[1] = x;
        }
        for j in 2..=maxdeg {
            t[j] = 2.0 * x * t[j - 1] - t[j - 2];
        }
        t
    };
    let tables: Vec<Vec<f64>> = nodes.iter().map(|&u| cheb(half * u)).collect();
    let mut norm = 0.0;
    let mut acc = vec![0.0; observables.len()];
    for (i, &ui) in nodes.iter().enumerate() {
        for (j, &uj) in nodes.iter().enumerate() {
            let w = weights[i] * weights[j] * double_well_weight(&[half * ui, half * uj], sigma);
            norm += w;
            for (o, &(a, b)) in acc.iter_mut().zip(observables) {
                *o += w * tables[i][a as usize] * tables[j][b as usize];
            }
        }
    }
    acc.iter().map(|v| v / norm).collect()
}

/// Observables `T_a(x1) T_b(x2)` with `a + b ∈ {2, 4, 6}`, in the order
/// `(2,0), (1,1), (0,2), (4,0), ...`.
pub fn double_well_observables() -> Vec<(u32, u32)> {
    let mut out = Vec::new();
    for total in [2u32, 4, 6] {
        for a in (0..=total).rev() {
            out.push((a, total - a));
        }
    }
    out
}
