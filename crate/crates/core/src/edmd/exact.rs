use nalgebra::DMatrix;

use super::{LieKind, LieMatrix};
use crate::error::{Error, Result};
use crate::polybasis::{compose_with_map, BasisSpec, Interpolator, PolyCoeffs};

/// A polynomial system with known equations.
#[derive(Clone, Copy, Debug)]
pub enum ExactSystem<'a> {
    /// `x -> f(x)`.
    Map(&'a [PolyCoeffs]),
    /// `dx/dt = a(x)`.
    Ode(&'a [PolyCoeffs]),
    /// `dX = a(X) dt + B dW` with a constant `n x d` matrix `B`.
    Sde {
        drift: &'a [PolyCoeffs],
        diffusion: &'a DMatrix<f64>,
    },
}

fn max_degree(f: &[PolyCoeffs]) -> u32 {
    f.iter().map(|c| c.degree()).max().unwrap_or(0)
}

/// Entries this small relative to the largest in their row are interpolation
/// round-off and are set to zero.
const CLEAN_TOL: f64 = 1e-12;

fn clean_rows(m: &mut DMatrix<f64>) {
    for mut row in m.row_iter_mut() {
        let top = row.amax();
        for v in row.iter_mut() {
            if v.abs() <= CLEAN_TOL * top.max(1.0) {
                *v = 0.0;
            }
        }
    }
}

/// Exact Lie matrix on the degree-`k` dictionary, expanded in degree `l`.
///
/// Maps use composition, `L b = b o f - b`. Flows use `L b = a . grad b`,
/// plus `1/2 <B B^T, hess b>` for diffusions; these are sampled on Chebyshev
/// nodes and interpolated.
pub fn exact_lie_matrix(system: ExactSystem<'_>, k: u32, l: u32, spec: &BasisSpec) -> Result<LieMatrix> {
    if k > l {
        return Err(Error::DegreeOrder { k, l });
    }
    let n = spec.dimension;
    let components = match system {
        ExactSystem::Map(f) | ExactSystem::Ode(f) | ExactSystem::Sde { drift: f, .. } => f,
    };
    if components.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "system has {} components, dictionary dimension is {n}",
            components.len()
        )));
    }
    let sk = spec.with_degree(k);
    let sl = spec.with_degree(l);
    let (kx, lx) = (sk.size(), sl.size());
    let mut entries = DMatrix::zeros(kx, lx);
    let kind = match system {
        ExactSystem::Map(f) => {
            for r in 1..kx {
                let mut basis = vec![0.0; kx];
                basis[r] = 1.0;
                let g = PolyCoeffs::new(sk.clone(), basis)?;
                let comp = compose_with_map(&g, f, l)?;
                for (j, c) in comp.coeffs.iter().enumerate() {
                    entries[(r, j)] = *c;
                }
                entries[(r, r)] -= 1.0;
            }
            LieKind::ExactMap
        }
        ExactSystem::Ode(_) | ExactSystem::Sde { .. } => {
            let da = max_degree(components);
            if k > 0 && da + k - 1 > l {
                return Err(Error::DegreeOverflow {
                    needed: da + k - 1,
                    available: l,
                });
            }
            let diff = match system {
                ExactSystem::Sde { diffusion, .. } => {
                    if diffusion.nrows() != n {
                        return Err(Error::DimensionMismatch("diffusion matrix rows".into()));
                    }
                    Some(diffusion * diffusion.transpose())
                }
                _ => None,
            };
            let interp = Interpolator::new(&sl);
            let nodes = interp.nodes();
            let mut samples = DMatrix::zeros(kx, nodes.len());
            for (c, x) in nodes.iter().enumerate() {
                let d = sk.eval_with_derivatives(x)?;
                let a: Vec<f64> = components.iter().map(|p| p.eval(x)).collect::<Result<_>>()?;
                for r in 0..kx {
                    let mut v: f64 = (0..n).map(|i| a[i] * d.gradients[r][i]).sum();
                    if let Some(dd) = &diff {
                        for i in 0..n {
                            for j in 0..n {
                                v += 0.5 * dd[(i, j)] * d.hessians[r][i * n + j];
                            }
                        }
                    }
                    samples[(r, c)] = v;
                }
            }
            for r in 1..kx {
                let vals: Vec<f64> = samples.row(r).iter().cloned().collect();
                let fit = interp.fit(&vals);
                for (j, c) in fit.coeffs.iter().enumerate() {
                    entries[(r, j)] = *c;
                }
            }
            if diff.is_some() {
                LieKind::ExactSde
            } else {
                LieKind::ExactOde
            }
        }
    };
    clean_rows(&mut entries);
    Ok(LieMatrix {
        entries,
        k,
        l,
        spec: sl,
        tau: 1.0,
        kind,
        threshold: None,
        rank: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{simulate_map, Logistic, PolySystem};
    use crate::edmd::{edmd, EdmdPath};
    use crate::polybasis::BasisFamily;
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn logistic_poly(spec: &BasisSpec) -> Vec<PolyCoeffs> {
        PolySystem::interpolate(&spec.with_degree(2), |x, out| out[0] = 2.0 * x[0] * x[0] - 1.0).components
    }

    #[test]
    fn logistic_first_row() {
        let spec = BasisSpec::chebyshev_unit(1, 2);
        let f = logistic_poly(&spec);
        let lie = exact_lie_matrix(ExactSystem::Map(&f), 1, 2, &spec).unwrap();
        assert_eq!(lie.entries.row(0).iter().cloned().collect::<Vec<_>>(), vec![0.0; 3]);
        let r: Vec<f64> = lie.entries.row(1).iter().cloned().collect();
        for (a, b) in r.iter().zip([0.0, -1.0, 1.0]) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!(exact_lie_matrix(ExactSystem::Map(&f), 2, 3, &spec).is_err());
    }

    #[test]
    fn logistic_physical_moments_are_annihilated() {
        // Chebyshev moments of 1/(pi sqrt(1-x^2)): T_0 -> 1, all others 0
        for k in [5u32, 10, 25] {
            let spec = BasisSpec::chebyshev_unit(1, 2 * k);
            let f = logistic_poly(&spec);
            let lie = exact_lie_matrix(ExactSystem::Map(&f), k, 2 * k, &spec).unwrap();
            let mut y = DVector::zeros(lie.lx());
            y[0] = 1.0;
            assert!((&lie.entries * y).amax() < 1e-10);
        }
    }

    #[test]
    fn data_driven_matches_exact_with_unisolvent_samples() {
        let spec = BasisSpec::chebyshev_unit(1, 20);
        let f = logistic_poly(&spec);
        let exact = exact_lie_matrix(ExactSystem::Map(&f), 10, 20, &spec).unwrap();
        let s = simulate_map(&Logistic, &[0.1234], 200, vec![(-1.0, 1.0)], "logistic").unwrap();
        let data = edmd(&s, 10, 20, &spec, EdmdPath::Direct).unwrap();
        assert!((&data.entries - &exact.entries).norm() < 1e-8);
    }

    #[test]
    fn double_well_drift_row() {
        let spec = BasisSpec::chebyshev_unit(2, 4);
        let drift = PolySystem::interpolate(&spec.with_degree(3), |x, out| {
            let s = x[0] + x[1];
            out[0] = -16.0 * s.powi(3) + 2.0 * x[0] + 6.0 * x[1];
            out[1] = -16.0 * s.powi(3) + 6.0 * x[0] + 2.0 * x[1];
        });
        let lie = exact_lie_matrix(ExactSystem::Ode(&drift.components), 2, 4, &spec).unwrap();
        // index 1 is (1, 0), i.e. T_1(x_1) = x_1
        let row = PolyCoeffs::new(spec.clone(), lie.entries.row(1).iter().cloned().collect()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let x: [f64; 2] = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let s = x[0] + x[1];
            let want = -16.0 * s.powi(3) + 2.0 * x[0] + 6.0 * x[1];
            assert!((row.eval(&x).unwrap() - want).abs() < 1e-11);
        }
        assert!(lie.entries.row(0).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn sde_generator_matches_pointwise_formula() {
        let spec = BasisSpec::new(BasisFamily::Chebyshev, 2, 5, vec![(-2.0, 1.0), (-1.0, 3.0)]).unwrap();
        let drift = PolySystem::interpolate(&spec.with_degree(2), |x, out| {
            out[0] = x[1] - x[0] * x[0];
            out[1] = 0.5 * x[0] * x[1];
        });
        let b = DMatrix::from_row_slice(2, 2, &[0.7, 0.1, 0.0, 0.4]);
        let sys = ExactSystem::Sde {
            drift: &drift.components,
            diffusion: &b,
        };
        let lie = exact_lie_matrix(sys, 3, 4, &spec).unwrap();
        let sk = spec.with_degree(3);
        let bbt = &b * b.transpose();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let x = [rng.random_range(-2.0..1.0), rng.random_range(-1.0..3.0)];
            let d = sk.eval_with_derivatives(&x).unwrap();
            let a = [x[1] - x[0] * x[0], 0.5 * x[0] * x[1]];
            let p = spec.eval(&x).unwrap();
            for r in 0..sk.size() {
                let mut want = a[0] * d.gradients[r][0] + a[1] * d.gradients[r][1];
                for i in 0..2 {
                    for j in 0..2 {
                        want += 0.5 * bbt[(i, j)] * d.hessians[r][2 * i + j];
                    }
                }
                let got: f64 = lie.entries.row(r).iter().zip(&p).map(|(c, v)| c * v).sum();
                assert!((got - want).abs() < 1e-9 * (1.0 + want.abs()), "{got} {want}");
            }
        }
        assert_eq!(lie.kind, LieKind::ExactSde);
    }

    #[test]
    fn identity_map_is_zero() {
        let spec = BasisSpec::chebyshev_unit(2, 3);
        let id: Vec<PolyCoeffs> = (0..2).map(|i| PolyCoeffs::coordinate(spec.with_degree(1), i)).collect();
        let lie = exact_lie_matrix(ExactSystem::Map(&id), 3, 3, &spec).unwrap();
        assert!(lie.entries.amax() < 1e-13);
    }
}
