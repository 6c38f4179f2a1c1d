//! Poincaré sections of sampled flows.

use serde::{Deserialize, Serialize};

use super::ode::{substeps, DenseTrajectory, Rk4};
use super::snapshots::{Provenance, SnapshotSet};
use super::systems::VectorField;
use crate::error::{Error, Result};

/// The hyperplane `x[coordinate] = level`, crossed in the increasing direction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoincareSection {
    pub coordinate: usize,
    pub level: f64,
    /// Coordinate recorded at each crossing.
    pub observed: usize,
    /// Box for the returned 1D data; `None` uses the padded data range.
    pub observed_range: Option<(f64, f64)>,
}

impl PoincareSection {
    pub fn new(coordinate: usize, level: f64, observed: usize) -> Self {
        PoincareSection {
            coordinate,
            level,
            observed,
            observed_range: None,
        }
    }

    fn upward(&self, before: f64, after: f64) -> bool {
        before < self.level && after >= self.level
    }
}

/// A located crossing.
#[derive(Clone, Debug, PartialEq)]
pub struct Crossing {
    pub t: f64,
    pub state: Vec<f64>,
}

fn hermite(y0: f64, d0: f64, y1: f64, d1: f64, dt: f64, s: f64) -> f64 {
    let s2 = s * s;
    let s3 = s2 * s;
    (2.0 * s3 - 3.0 * s2 + 1.0) * y0
        + (s3 - 2.0 * s2 + s) * dt * d0
        + (-2.0 * s3 + 3.0 * s2) * y1
        + (s3 - s2) * dt * d1
}

/// Root in `[0, 1]` of a bracketed scalar function, by bisection.
fn bisect(g: impl Fn(f64) -> f64, tol: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut glo = g(lo);
    let mut mid = 0.5;
    for _ in 0..200 {
        mid = 0.5 * (lo + hi);
        let gm = g(mid);
        if gm.abs() < tol || hi - lo < 1e-16 {
            break;
        }
        if (gm < 0.0) == (glo < 0.0) {
            lo = mid;
            glo = gm;
        } else {
            hi = mid;
        }
    }
    mid
}

/// Crossings located by cubic Hermite interpolation between samples followed
/// by bisection on the interpolant.
pub fn find_crossings(traj: &DenseTrajectory, section: &PoincareSection) -> Vec<Crossing> {
    let c = section.coordinate;
    let n = traj.n;
    let mut out = Vec::new();
    for i in 1..traj.len() {
        let (a, b) = (traj.state(i - 1), traj.state(i));
        if !section.upward(a[c], b[c]) {
            continue;
        }
        let (da, db) = (traj.deriv(i - 1), traj.deriv(i));
        let dt = traj.dt;
        let s = bisect(
            |s| hermite(a[c], da[c], b[c], db[c], dt, s) - section.level,
            1e-12,
        );
        let mut state: Vec<f64> = (0..n)
            .map(|j| hermite(a[j], da[j], b[j], db[j], dt, s))
            .collect();
        state[c] = section.level;
        out.push(Crossing {
            t: traj.time(i - 1) + s * dt,
            state,
        });
    }
    out
}

/// Integrates from `x` for time `s` with steps no longer than `h`.
fn advance(rk: &mut Rk4, field: &dyn VectorField, x: &[f64], s: f64, h: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    if s > 0.0 {
        let steps = (s / h).ceil().max(1.0) as usize;
        rk.flow(field, &mut y, s, steps);
    }
    y
}

/// Refines a crossing inside the step `[x, x(t + dt)]` with Newton iterations
/// on the integrator itself, starting from the Hermite estimate `s0`.
fn refine_on_flow(
    rk: &mut Rk4,
    field: &dyn VectorField,
    x: &[f64],
    s0: f64,
    dt: f64,
    h: f64,
    section: &PoincareSection,
) -> (f64, Vec<f64>) {
    let c = section.coordinate;
    let mut s = s0;
    let mut f = vec![0.0; x.len()];
    let mut y = advance(rk, field, x, s, h);
    for _ in 0..8 {
        field.eval(&y, &mut f);
        let g = y[c] - section.level;
        if g.abs() < 1e-13 * (1.0 + section.level.abs()) || f[c] == 0.0 {
            break;
        }
        let next = (s - g / f[c]).clamp(0.0, dt);
        if (next - s).abs() < 1e-15 {
            break;
        }
        s = next;
        y = advance(rk, field, x, s, h);
    }
    (s, y)
}

/// Streams a trajectory of `field` and records every upward crossing, with
/// locations refined against the integrator.
pub fn stream_crossings(
    field: &dyn VectorField,
    x0: &[f64],
    t_end: f64,
    tau: f64,
    h: f64,
    section: &PoincareSection,
) -> Result<Vec<Crossing>> {
    let sub = substeps(tau, h)?;
    let h = tau / sub as f64;
    let n = x0.len();
    let c = section.coordinate;
    let samples = (t_end / tau + 1e-9).floor() as usize;
    let mut rk = Rk4::new(n);
    let mut refine_rk = Rk4::new(n);
    let mut x = x0.to_vec();
    let mut prev = x.clone();
    let (mut dprev, mut dcur) = (vec![0.0; n], vec![0.0; n]);
    field.eval(&prev, &mut dprev);
    let mut out = Vec::new();
    for j in 1..=samples {
        for _ in 0..sub {
            rk.step(field, &mut x, h);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { t: j as f64 * tau });
        }
        field.eval(&x, &mut dcur);
        if section.upward(prev[c], x[c]) {
            let s0 = bisect(
                |s| hermite(prev[c], dprev[c], x[c], dcur[c], tau, s) - section.level,
                1e-12,
            ) * tau;
            let (s, mut state) = refine_on_flow(&mut refine_rk, field, &prev, s0, tau, h, section);
            state[c] = section.level;
            out.push(Crossing {
                t: (j - 1) as f64 * tau + s,
                state,
            });
        }
        prev.copy_from_slice(&x);
        dprev.copy_from_slice(&dcur);
    }
    Ok(out)
}

/// Consecutive observed values `(v_i, v_{i+1})` as a 1D map dataset with
/// `tau = 1`.
pub fn section_snapshots(
    crossings: &[Crossing],
    section: &PoincareSection,
    system: &str,
) -> Result<SnapshotSet> {
    if crossings.len() < 2 {
        return Err(Error::NoCrossings);
    }
    let vals: Vec<f64> = crossings.iter().map(|c| c.state[section.observed]).collect();
    let range = section.observed_range.unwrap_or_else(|| {
        let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let pad = 0.02 * (hi - lo).max(1e-12);
        (lo - pad, hi + pad)
    });
    let mut out = SnapshotSet::new(
        1,
        1.0,
        vec![range],
        Provenance {
            system: format!("{system}-section"),
            seed: None,
            step: None,
        },
    )?;
    for w in vals.windows(2) {
        out.push(&w[..1], &w[1..]);
    }
    Ok(out)
}

/// Return-map data from a dense trajectory.
pub fn poincare_snapshots(traj: &DenseTrajectory, section: &PoincareSection) -> Result<SnapshotSet> {
    section_snapshots(&find_crossings(traj, section), section, "trajectory")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::systems::Rossler;
    use std::f64::consts::PI;

    fn sine_trajectory(sign: f64) -> DenseTrajectory {
        let dt = 0.05;
        let len = (40.0 / dt) as usize;
        let mut states = Vec::new();
        let mut derivs = Vec::new();
        for i in 0..len {
            let t = i as f64 * dt + 0.3;
            states.extend_from_slice(&[sign * t.sin(), t.cos()]);
            derivs.extend_from_slice(&[sign * t.cos(), -t.sin()]);
        }
        DenseTrajectory::from_samples(2, 0.3, dt, states, derivs)
    }

    #[test]
    fn sine_crossings_at_multiples_of_two_pi() {
        let c = find_crossings(&sine_trajectory(1.0), &PoincareSection::new(0, 0.0, 1));
        assert_eq!(c.len(), 6);
        for (j, cr) in c.iter().enumerate() {
            assert!((cr.t - 2.0 * PI * (j + 1) as f64).abs() < 1e-8, "{}", cr.t);
            assert!((cr.state[1] - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn direction_filter_rejects_downward_crossings() {
        // x = -sin t crosses zero upward at odd multiples of pi only
        let traj = sine_trajectory(-1.0);
        let c = find_crossings(&traj, &PoincareSection::new(0, 0.0, 1));
        for cr in &c {
            assert!((cr.t / PI).round() as i64 % 2 == 1);
        }
        // a purely decreasing coordinate never crosses upward
        let states: Vec<f64> = (0..100).flat_map(|i| [1.0 - 0.02 * i as f64, 0.0]).collect();
        let derivs: Vec<f64> = (0..100).flat_map(|_| [-1.0, 0.0]).collect();
        let down = DenseTrajectory::from_samples(2, 0.0, 0.02, states, derivs);
        let sec = PoincareSection::new(0, 0.0, 1);
        assert!(find_crossings(&down, &sec).is_empty());
        assert!(matches!(poincare_snapshots(&down, &sec), Err(Error::NoCrossings)));
    }

    #[test]
    fn rossler_crossings_are_upward_and_on_section() {
        let field = Rossler::default();
        let sec = PoincareSection::new(0, 0.0, 1);
        let c = stream_crossings(&field, &[0.0, -20.0, 0.0], 200.0, 0.005, 0.005, &sec).unwrap();
        assert!(c.len() > 25);
        let mut d = [0.0; 3];
        for cr in &c {
            field.eval(&cr.state, &mut d);
            assert!(d[0] > 0.0);
            assert!(cr.state[1] < 0.0);
        }
        let data = section_snapshots(&c, &sec, "rossler").unwrap();
        assert_eq!(data.len(), c.len() - 1);
        assert_eq!(data.tau, 1.0);
    }

    #[test]
    fn refined_crossing_agrees_with_dense_interpolation() {
        let field = Rossler::default();
        let sec = PoincareSection::new(0, 0.0, 1);
        let opts = crate::dynamics::ode::OdeSampling {
            t_end: 60.0,
            tau: 0.005,
            h: 0.005,
            domain_box: vec![(-30.0, 30.0), (-30.0, 30.0), (0.0, 60.0)],
            system: "rossler".into(),
        };
        let (_, traj) = crate::dynamics::ode::integrate_ode(&field, &[0.0, -20.0, 0.0], &opts).unwrap();
        let a = find_crossings(&traj, &sec);
        let b = stream_crossings(&field, &[0.0, -20.0, 0.0], 60.0, 0.005, 0.005, &sec).unwrap();
        assert_eq!(a.len(), b.len());
        for (p, q) in a.iter().zip(&b) {
            assert!((p.t - q.t).abs() < 1e-7);
            assert!((p.state[1] - q.state[1]).abs() < 1e-6);
        }
    }
}
