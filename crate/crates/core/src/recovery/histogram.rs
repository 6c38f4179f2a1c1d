use serde::{Deserialize, Serialize};

use super::quadrature::gauss_legendre;
use crate::dynamics::SnapshotSet;
use crate::error::{Error, Result};
use crate::polybasis::PolyCoeffs;

/// Piecewise-constant probability density on a uniform grid over a box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub domain_box: Vec<(f64, f64)>,
    pub bins: usize,
    /// Cell probabilities, first axis fastest.
    pub mass: Vec<f64>,
}

/// Histogram of the snapshot points `x_i` with `bins` cells per axis.
pub fn histogram_density(snapshots: &SnapshotSet, bins: usize) -> Result<Histogram> {
    let points: Vec<&[f64]> = (0..snapshots.len()).map(|i| snapshots.x(i)).collect();
    histogram_of_points(&points, &snapshots.domain_box, bins)
}

pub fn histogram_of_points(points: &[&[f64]], domain_box: &[(f64, f64)], bins: usize) -> Result<Histogram> {
    if bins == 0 {
        return Err(Error::Config("histogram needs at least one bin".into()));
    }
    let n = domain_box.len();
    let mut mass = vec![0.0; bins.pow(n as u32)];
    let mut count = 0usize;
    for p in points {
        if p.len() != n {
            return Err(Error::DimensionMismatch("point dimension".into()));
        }
        let mut idx = 0usize;
        let mut stride = 1usize;
        let mut inside = true;
        for (&v, &(a, b)) in p.iter().zip(domain_box) {
            if !(v >= a && v <= b) {
                inside = false;
                break;
            }
            let c = (((v - a) / (b - a)) * bins as f64).floor() as usize;
            idx += c.min(bins - 1) * stride;
            stride *= bins;
        }
        if inside {
            mass[idx] += 1.0;
            count += 1;
        }
    }
    if count > 0 {
        mass.iter_mut().for_each(|v| *v /= count as f64);
    }
    Ok(Histogram {
        domain_box: domain_box.to_vec(),
        bins,
        mass,
    })
}

impl Histogram {
    pub fn dimension(&self) -> usize {
        self.domain_box.len()
    }

    fn cell_width(&self, axis: usize) -> f64 {
        let (a, b) = self.domain_box[axis];
        (b - a) / self.bins as f64
    }

    fn cell_of(&self, flat: usize) -> Vec<usize> {
        let mut rest = flat;
        (0..self.dimension())
            .map(|_| {
                let c = rest % self.bins;
                rest /= self.bins;
                c
            })
            .collect()
    }

    /// Density value at `x`; zero outside the box.
    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut idx = 0;
        let mut stride = 1;
        let mut vol = 1.0;
        for (axis, (&v, &(a, b))) in x.iter().zip(&self.domain_box).enumerate() {
            if !(v >= a && v <= b) {
                return 0.0;
            }
            let c = (((v - a) / (b - a)) * self.bins as f64).floor() as usize;
            idx += c.min(self.bins - 1) * stride;
            stride *= self.bins;
            vol *= self.cell_width(axis);
        }
        self.mass[idx] / vol
    }

    /// `∫ g ρ dx`, integrating `g` exactly over every occupied cell.
    pub fn expectation(&self, g: &PolyCoeffs) -> Result<f64> {
        let n = self.dimension();
        let q = g.degree() as usize / 2 + 1;
        let (nodes, weights) = gauss_legendre(q);
        let total_nodes = q.pow(n as u32);
        let mut acc = 0.0;
        let mut point = vec![0.0; n];
        for (flat, &p) in self.mass.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let cell = self.cell_of(flat);
            let mut avg = 0.0;
            for t in 0..total_nodes {
                let mut rest = t;
                let mut w = 1.0;
                for axis in 0..n {
                    let j = rest % q;
                    rest /= q;
                    let h = self.cell_width(axis);
                    let lo = self.domain_box[axis].0 + cell[axis] as f64 * h;
                    point[axis] = lo + 0.5 * h * (nodes[j] + 1.0);
                    w *= 0.5 * weights[j];
                }
                avg += w * g.eval(&point)?;
            }
            acc += p * avg;
        }
        Ok(acc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polybasis::{BasisFamily, BasisSpec};

    #[test]
    fn single_point_fills_one_cell() {
        let pts = [[0.3].as_slice()];
        let h = histogram_of_points(&pts, &[(-1.0, 1.0)], 10).unwrap();
        assert_eq!(h.mass.iter().filter(|&&v| v > 0.0).count(), 1);
        assert_eq!(h.mass[6], 1.0);
        assert!((h.eval(&[0.35]) - 5.0).abs() < 1e-12);
        assert_eq!(h.eval(&[-0.35]), 0.0);
        let spec = BasisSpec::chebyshev_unit(1, 0);
        let one = PolyCoeffs::constant(spec, 1.0);
        assert!((h.expectation(&one).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn cell_averages_are_exact() {
        let pts = [[0.05, 0.95].as_slice()];
        let h = histogram_of_points(&pts, &[(0.0, 1.0), (0.0, 1.0)], 10).unwrap();
        let spec = BasisSpec::new(BasisFamily::Monomial, 2, 6, vec![(0.0, 1.0); 2]).unwrap();
        let g = PolyCoeffs::interpolate(spec, |x| x[0].powi(3) * x[1].powi(3));
        // average of x^3 over [0, 0.1] times average of y^3 over [0.9, 1]
        let want = (0.1f64.powi(4) / 4.0 / 0.1) * ((1.0 - 0.9f64.powi(4)) / 4.0 / 0.1);
        assert!((h.expectation(&g).unwrap() - want).abs() < 1e-14);
    }

    #[test]
    fn right_edge_goes_to_last_cell() {
        let pts = [[1.0].as_slice()];
        let h = histogram_of_points(&pts, &[(-1.0, 1.0)], 4).unwrap();
        assert_eq!(h.mass[3], 1.0);
    }
}
