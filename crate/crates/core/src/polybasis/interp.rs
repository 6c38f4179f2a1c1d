use nalgebra::DMatrix;

use super::{chebyshev_values, BasisFamily, BasisEvaluator, BasisSpec, IndexSet, PolyCoeffs};

/// Interpolation onto a total-degree dictionary from samples on the tensor
/// grid of Chebyshev–Gauss nodes (`(degree + 1)^n` points).
///
/// The fit is exact for polynomials of total degree `<= degree`.
pub struct Interpolator {
    spec: BasisSpec,
    set: IndexSet,
    npts: usize,
    nodes: Vec<Vec<f64>>,
    kind: Kind,
}

enum Kind {
    /// `transform[a][j] = (2 - δ_{a0}) / N · T_a(u_j)`
    Chebyshev(DMatrix<f64>),
    /// Pseudo-inverse of the Vandermonde matrix on the nodes.
    Vandermonde(DMatrix<f64>),
}

impl Interpolator {
    pub fn new(spec: &BasisSpec) -> Self {
        let n = spec.dimension;
        let npts = spec.degree as usize + 1;
        let u: Vec<f64> = (0..npts)
            .map(|j| (std::f64::consts::PI * (j as f64 + 0.5) / npts as f64).cos())
            .collect();
        let total = npts.pow(n as u32);
        let mut nodes = Vec::with_capacity(total);
        for flat in 0..total {
            let mut r = flat;
            let mut unit = vec![0.0; n];
            for d in (0..n).rev() {
                unit[d] = u[r % npts];
                r /= npts;
            }
            nodes.push(spec.from_unit(&unit));
        }
        let set = spec.index_set();
        let kind = match spec.family {
            BasisFamily::Chebyshev => {
                let mut t = DMatrix::zeros(npts, npts);
                let mut vals = vec![0.0; npts];
                for (j, &uj) in u.iter().enumerate() {
                    chebyshev_values(uj, &mut vals);
                    for a in 0..npts {
                        let w = if a == 0 { 1.0 } else { 2.0 };
                        t[(a, j)] = w / npts as f64 * vals[a];
                    }
                }
                Kind::Chebyshev(t)
            }
            BasisFamily::Monomial => {
                let mut ev = BasisEvaluator::new(spec);
                let mut v = DMatrix::zeros(total, set.len());
                let mut row = vec![0.0; set.len()];
                for (i, x) in nodes.iter().enumerate() {
                    ev.eval_into(x, &mut row).expect("finite nodes");
                    for (j, r) in row.iter().enumerate() {
                        v[(i, j)] = *r;
                    }
                }
                let pinv = v
                    .pseudo_inverse(1e-14)
                    .expect("vandermonde pseudo-inverse");
                Kind::Vandermonde(pinv)
            }
        };
        Interpolator {
            spec: spec.clone(),
            set,
            npts,
            nodes,
            kind,
        }
    }

    /// Sample points in original coordinates.
    pub fn nodes(&self) -> &[Vec<f64>] {
        &self.nodes
    }

    pub fn spec(&self) -> &BasisSpec {
        &self.spec
    }

    /// Coefficients from values at [`Interpolator::nodes`].
    pub fn fit(&self, values: &[f64]) -> PolyCoeffs {
        self.fit_with_overflow(values).0
    }

    /// Also returns the largest coefficient of total degree above the
    /// dictionary degree (zero, up to rounding, for in-space inputs; always
    /// zero for the monomial family).
    pub fn fit_with_overflow(&self, values: &[f64]) -> (PolyCoeffs, f64) {
        assert_eq!(values.len(), self.nodes.len());
        match &self.kind {
            Kind::Chebyshev(t) => {
                let n = self.spec.dimension;
                let np = self.npts;
                let mut data = values.to_vec();
                let mut line = vec![0.0; np];
                for axis in 0..n {
                    let stride = np.pow((n - 1 - axis) as u32);
                    let outer = data.len() / (np * stride);
                    for o in 0..outer {
                        for s in 0..stride {
                            let base = o * np * stride + s;
                            for a in 0..np {
                                let mut acc = 0.0;
                                for j in 0..np {
                                    acc += t[(a, j)] * data[base + j * stride];
                                }
                                line[a] = acc;
                            }
                            for a in 0..np {
                                data[base + a * stride] = line[a];
                            }
                        }
                    }
                }
                let mut coeffs = vec![0.0; self.set.len()];
                for (c, alpha) in coeffs.iter_mut().zip(self.set.iter()) {
                    let mut flat = 0;
                    for &e in alpha.exponents() {
                        flat = flat * np + e as usize;
                    }
                    *c = data[flat];
                }
                let deg = self.spec.degree;
                let mut overflow = 0.0f64;
                for (flat, v) in data.iter().enumerate() {
                    let mut r = flat;
                    let mut total = 0;
                    for _ in 0..n {
                        total += (r % np) as u32;
                        r /= np;
                    }
                    if total > deg {
                        overflow = overflow.max(v.abs());
                    }
                }
                (
                    PolyCoeffs {
                        spec: self.spec.clone(),
                        coeffs,
                    },
                    overflow,
                )
            }
            Kind::Vandermonde(pinv) => {
                let v = nalgebra::DVector::from_column_slice(values);
                let c = pinv * v;
                (
                    PolyCoeffs {
                        spec: self.spec.clone(),
                        coeffs: c.iter().copied().collect(),
                    },
                    0.0,
                )
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_dictionary_elements() {
        for family in [BasisFamily::Chebyshev, BasisFamily::Monomial] {
            let spec = BasisSpec::new(family, 2, 4, vec![(-1.0, 2.0), (0.5, 1.5)]).unwrap();
            let interp = Interpolator::new(&spec);
            for target in 0..spec.size() {
                let vals: Vec<f64> = interp
                    .nodes()
                    .iter()
                    .map(|x| spec.eval(x).unwrap()[target])
                    .collect();
                let (p, over) = interp.fit_with_overflow(&vals);
                assert!(over < 1e-12);
                for (i, c) in p.coeffs.iter().enumerate() {
                    let want = if i == target { 1.0 } else { 0.0 };
                    assert!((c - want).abs() < 1e-9, "{family:?} {target} {i} {c}");
                }
            }
        }
    }

    #[test]
    fn flags_out_of_space_functions() {
        let spec = BasisSpec::chebyshev_unit(2, 2);
        let interp = Interpolator::new(&spec);
        let vals: Vec<f64> = interp.nodes().iter().map(|x| x[0] * x[0] * x[1]).collect();
        let (_, over) = interp.fit_with_overflow(&vals);
        assert!(over > 0.1);
    }
}
