//! Built-in dynamical systems and the traits the simulators consume.

use crate::error::Result;
use crate::polybasis::{BasisSpec, PolyCoeffs};

/// A discrete-time map `x -> f(x)`.
pub trait DiscreteMap: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], out: &mut [f64]);
}

/// A vector field `x' = f(x)`.
pub trait VectorField: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64], out: &mut [f64]);
}

/// Chebyshev-form logistic map `f(x) = 2x^2 - 1` on `[-1, 1]`.
#[derive(Clone, Copy, Debug, Default)]
pub struct Logistic;

impl DiscreteMap for Logistic {
    fn dim(&self) -> usize {
        1
    }
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        out[0] = 2.0 * x[0] * x[0] - 1.0;
    }
}

/// `f(x) = 2x - x^2` on `[0, 1]`; its only invariant measures sit on the fixed
/// points 0 and 1.
#[derive(Clone, Copy, Debug, Default)]
pub struct TwoFixedPointMap;

impl DiscreteMap for TwoFixedPointMap {
    fn dim(&self) -> usize {
        1
    }
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        out[0] = 2.0 * x[0] - x[0] * x[0];
    }
}

/// Drift of the stochastic double-well system.
#[derive(Clone, Copy, Debug, Default)]
pub struct DoubleWell;

impl VectorField for DoubleWell {
    fn dim(&self) -> usize {
        2
    }
    fn eval(&self, x: &[f64], out: &mut [f64]) {
        let s = x[0] + x[1];
        let cubic = -16.0 * s * s * s;
        out[0] = cubic + 2.0 * x[0] + 6.0 * x[1];
        out[1] = cubic + 6.0 * x[0] + 2.0 * x[1];
    }
}

/// Rössler system `x1' = -x2 - x3, x2' = x1 + a x2, x3' = b + x3 (x1 - c)`.
#[derive(Clone, Copy, Debug)]
pub struct Rossler {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Default for Rossler {
    fn default() -> Self {
        Rossler {
            a: 0.1,
            b: 0.1,
            c: 18.0,
        }
    }
}

impl VectorField for Rossler {
    fn dim(&self) -> usize {
        3
    }
    fn eval(&self, x: &[f64], out: &mut [f64]) {
        out[0] = -x[1] - x[2];
        out[1] = x[0] + self.a * x[1];
        out[2] = self.b + x[2] * (x[0] - self.c);
    }
}

/// The zero vector field in `n` dimensions.
#[derive(Clone, Copy, Debug)]
pub struct ZeroField(pub usize);

impl VectorField for ZeroField {
    fn dim(&self) -> usize {
        self.0
    }
    fn eval(&self, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
}

/// A polynomial map or vector field given component-wise in a dictionary.
#[derive(Clone, Debug)]
pub struct PolySystem {
    pub components: Vec<PolyCoeffs>,
}

impl PolySystem {
    pub fn new(components: Vec<PolyCoeffs>) -> Self {
        PolySystem { components }
    }

    /// Interpolates each component of `f` into `spec` (exact for polynomial `f`
    /// of degree `<= spec.degree`).
    pub fn interpolate(spec: &BasisSpec, f: impl Fn(&[f64], &mut [f64])) -> Self {
        let n = spec.dimension;
        let components = (0..n)
            .map(|i| {
                PolyCoeffs::interpolate(spec.clone(), |x| {
                    let mut out = vec![0.0; n];
                    f(x, &mut out);
                    out[i]
                })
            })
            .collect();
        PolySystem { components }
    }

    pub fn degree(&self) -> u32 {
        self.components.iter().map(|c| c.degree()).max().unwrap_or(0)
    }

    pub fn eval_checked(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.components.iter().map(|c| c.eval(x)).collect()
    }
}

impl DiscreteMap for PolySystem {
    fn dim(&self) -> usize {
        self.components.len()
    }
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (o, c) in out.iter_mut().zip(&self.components) {
            *o = c.eval(x).unwrap_or(f64::NAN);
        }
    }
}

impl VectorField for PolySystem {
    fn dim(&self) -> usize {
        self.components.len()
    }
    fn eval(&self, x: &[f64], out: &mut [f64]) {
        self.apply(x, out)
    }
}
