//! Periodic-orbit refinement by multiple shooting between section crossings.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::ode::Rk4;
use super::poincare::PoincareSection;
use super::systems::VectorField;
use crate::error::{Error, Result};

/// A closed orbit of a flow, described by its section crossings.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PeriodicOrbit {
    /// Number of section crossings per period.
    pub period: usize,
    /// Observed coordinate at each crossing.
    pub section_points: Vec<f64>,
    /// Full state at each crossing.
    pub crossing_states: Vec<Vec<f64>>,
    pub flight_times: Vec<f64>,
    /// Continuous period, the sum of the flight times.
    pub t_period: f64,
    /// Full states sampled along one period.
    pub samples: Vec<Vec<f64>>,
    /// Final max-norm of the shooting equations.
    pub residual: f64,
    pub newton_iterations: usize,
    /// Set when the seed had period `p` but the orbit closes after fewer
    /// crossings; holds the seed period.
    pub reduced_from: Option<usize>,
}

/// Options for [`refine_upo`].
#[derive(Clone, Debug)]
pub struct ShootingOptions {
    /// Largest integration step.
    pub h_max: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Longest time searched for the next crossing.
    pub max_flight: f64,
    /// Two crossings closer than this are treated as equal.
    pub dedupe_tol: f64,
}

impl Default for ShootingOptions {
    fn default() -> Self {
        ShootingOptions {
            h_max: 2e-3,
            tol: 1e-9,
            max_iter: 50,
            max_flight: 100.0,
            dedupe_tol: 1e-6,
        }
    }
}

/// The flow map with a fixed number of equal steps.
struct Segment<'a> {
    field: &'a dyn VectorField,
    rk: Rk4,
}

impl Segment<'_> {
    fn flow(&mut self, x: &[f64], t: f64, steps: usize) -> Vec<f64> {
        let mut y = x.to_vec();
        self.rk.flow(self.field, &mut y, t, steps);
        y
    }
}

/// Time to the next upward crossing of `section` from `x`, located on the
/// fixed-step integrator to high accuracy.
pub fn flight_time(
    field: &dyn VectorField,
    x: &[f64],
    section: &PoincareSection,
    h: f64,
    max_time: f64,
) -> Result<(f64, Vec<f64>)> {
    let c = section.coordinate;
    let mut rk = Rk4::new(x.len());
    let mut y = x.to_vec();
    let mut t = 0.0;
    let mut prev = y.clone();
    while t < max_time {
        prev.copy_from_slice(&y);
        rk.step(field, &mut y, h);
        t += h;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { t });
        }
        if prev[c] < section.level && y[c] >= section.level {
            // secant refinement of the partial step
            let (mut a, mut b) = (0.0, h);
            let (mut ga, mut gb) = (prev[c] - section.level, y[c] - section.level);
            let mut s = h * ga / (ga - gb);
            let mut z = prev.clone();
            for _ in 0..60 {
                z.copy_from_slice(&prev);
                rk.step(field, &mut z, s);
                let g = z[c] - section.level;
                if g.abs() < 1e-14 * (1.0 + section.level.abs()) {
                    break;
                }
                if (g < 0.0) == (ga < 0.0) {
                    a = s;
                    ga = g;
                } else {
                    b = s;
                    gb = g;
                }
                s = a - ga * (b - a) / (gb - ga);
                if b - a < 1e-15 {
                    break;
                }
            }
            return Ok((t - h + s, z));
        }
    }
    Err(Error::NoCrossings)
}

fn pack_state(x: &[f64], c: usize) -> impl Iterator<Item = f64> + '_ {
    x.iter().enumerate().filter(move |&(j, _)| j != c).map(|(_, &v)| v)
}

fn unpack_state(u: &[f64], c: usize, level: f64) -> Vec<f64> {
    let mut x = Vec::with_capacity(u.len() + 1);
    x.extend_from_slice(&u[..c]);
    x.push(level);
    x.extend_from_slice(&u[c..]);
    x
}

/// Refines a period-`p` cycle of the return map, given by its observed
/// coordinates, into a periodic orbit of `field`.
///
/// The initial state at each crossing has the section coordinate at its
/// level, the observed coordinate from `seeds` and every other coordinate 0.
pub fn refine_upo(
    field: &dyn VectorField,
    section: &PoincareSection,
    seeds: &[f64],
    opts: &ShootingOptions,
) -> Result<PeriodicOrbit> {
    let n = field.dim();
    let p = seeds.len();
    let c = section.coordinate;
    if p == 0 {
        return Err(Error::Config("no seeds".into()));
    }
    let mut states = Vec::with_capacity(p);
    let mut times = Vec::with_capacity(p);
    for &s in seeds {
        let mut x = vec![0.0; n];
        x[c] = section.level;
        x[section.observed] = s;
        let (t, _) = flight_time(field, &x, section, opts.h_max, opts.max_flight)?;
        states.push(x);
        times.push(t);
    }
    let steps: Vec<usize> = times
        .iter()
        .map(|t| (t / opts.h_max).ceil().max(1.0) as usize)
        .collect();

    let nu = n; // unknowns per segment: n-1 state entries plus flight time
    let mut u = DVector::zeros(p * nu);
    for i in 0..p {
        for (j, v) in pack_state(&states[i], c).enumerate() {
            u[i * nu + j] = v;
        }
        u[i * nu + n - 1] = times[i];
    }
    let mut seg = Segment {
        field,
        rk: Rk4::new(n),
    };
    let residual_of = |seg: &mut Segment, u: &DVector<f64>| -> DVector<f64> {
        let mut r = DVector::zeros(p * n);
        for i in 0..p {
            let x = unpack_state(&u.as_slice()[i * nu..i * nu + n - 1], c, section.level);
            let end = seg.flow(&x, u[i * nu + n - 1], steps[i]);
            let k = (i + 1) % p;
            let xn = unpack_state(&u.as_slice()[k * nu..k * nu + n - 1], c, section.level);
            for j in 0..n {
                r[i * n + j] = end[j] - xn[j];
            }
        }
        r
    };

    let mut r = residual_of(&mut seg, &u);
    let mut norm = r.amax();
    let mut iterations = 0;
    while norm >= opts.tol {
        if iterations == opts.max_iter {
            return Err(Error::NewtonDiverged { residual: norm });
        }
        iterations += 1;
        let mut jac = DMatrix::zeros(p * n, p * nu);
        for i in 0..p {
            let base = unpack_state(&u.as_slice()[i * nu..i * nu + n - 1], c, section.level);
            let t = u[i * nu + n - 1];
            let f0 = seg.flow(&base, t, steps[i]);
            let scale = 1.0 + base.iter().map(|v| v * v).sum::<f64>().sqrt();
            for q in 0..nu {
                let mut up = u.as_slice()[i * nu..(i + 1) * nu].to_vec();
                let dh = 1e-7 * if q == n - 1 { 1.0 + t.abs() } else { scale };
                up[q] += dh;
                let x = unpack_state(&up[..n - 1], c, section.level);
                let f1 = seg.flow(&x, up[n - 1], steps[i]);
                for j in 0..n {
                    jac[(i * n + j, i * nu + q)] = (f1[j] - f0[j]) / dh;
                }
            }
            // -x_{i+1} term
            let k = (i + 1) % p;
            let mut col = 0;
            for j in 0..n {
                if j == c {
                    continue;
                }
                jac[(i * n + j, k * nu + col)] -= 1.0;
                col += 1;
            }
        }
        let delta = jac
            .clone()
            .lu()
            .solve(&(-&r))
            .or_else(|| jac.svd(true, true).solve(&(-&r), 1e-13).ok())
            .ok_or_else(|| Error::NumericalBreakdown("singular shooting Jacobian".into()))?;
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..20 {
            let trial = &u + &delta * lambda;
            let valid = (0..p).all(|i| trial[i * nu + n - 1] > 0.0);
            if valid {
                let rt = residual_of(&mut seg, &trial);
                let nt = rt.amax();
                if nt.is_finite() && nt < norm {
                    u = trial;
                    r = rt;
                    norm = nt;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err(Error::NewtonDiverged { residual: norm });
        }
    }

    let crossing_states: Vec<Vec<f64>> = (0..p)
        .map(|i| unpack_state(&u.as_slice()[i * nu..i * nu + n - 1], c, section.level))
        .collect();
    let flight_times: Vec<f64> = (0..p).map(|i| u[i * nu + n - 1]).collect();

    // closure after a proper divisor of p
    let mut period = p;
    for d in 1..p {
        if p % d != 0 {
            continue;
        }
        let dist = crossing_states[0]
            .iter()
            .zip(&crossing_states[d])
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if dist < opts.dedupe_tol * (1.0 + crossing_states[0].iter().map(|v| v.abs()).fold(0.0, f64::max)) {
            period = d;
            break;
        }
    }
    let crossing_states: Vec<Vec<f64>> = crossing_states.into_iter().take(period).collect();
    let flight_times: Vec<f64> = flight_times.into_iter().take(period).collect();
    let mut samples = Vec::new();
    let mut rk = Rk4::new(n);
    for (i, x) in crossing_states.iter().enumerate() {
        let mut y = x.clone();
        let h = flight_times[i] / steps[i] as f64;
        for _ in 0..steps[i] {
            samples.push(y.clone());
            rk.step(field, &mut y, h);
        }
    }
    Ok(PeriodicOrbit {
        period,
        section_points: crossing_states.iter().map(|x| x[section.observed]).collect(),
        t_period: flight_times.iter().sum(),
        crossing_states,
        flight_times,
        samples,
        residual: norm,
        newton_iterations: iterations,
        reduced_from: (period < p).then_some(p),
    })
}

/// `|Phi_T(x_0) - x_0|_inf` for a single uninterrupted integration over the
/// full period with steps no longer than `h`.
pub fn closure_residual(field: &dyn VectorField, orbit: &PeriodicOrbit, h: f64) -> f64 {
    let x0 = &orbit.crossing_states[0];
    let mut y = x0.clone();
    let steps = (orbit.t_period / h).ceil().max(1.0) as usize;
    Rk4::new(y.len()).flow(field, &mut y, orbit.t_period, steps);
    y.iter().zip(x0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::systems::Rossler;

    /// Rotation in the first two coordinates, decay in the third.
    struct Rotation;
    impl VectorField for Rotation {
        fn dim(&self) -> usize {
            3
        }
        fn eval(&self, x: &[f64], out: &mut [f64]) {
            out[0] = -x[1];
            out[1] = x[0];
            out[2] = -x[2];
        }
    }

    #[test]
    fn exact_periodic_seed_needs_no_newton_steps() {
        let sec = PoincareSection::new(0, 0.0, 1);
        let orbit = refine_upo(&Rotation, &sec, &[-1.5], &ShootingOptions::default()).unwrap();
        assert_eq!(orbit.newton_iterations, 0);
        assert!((orbit.t_period - 2.0 * std::f64::consts::PI).abs() < 1e-9);
        assert_eq!(orbit.period, 1);
    }

    #[test]
    fn rossler_period_one_orbit_closes() {
        let field = Rossler::default();
        let sec = PoincareSection::new(0, 0.0, 1);
        // rough fixed point of the return map
        let orbit = refine_upo(&field, &sec, &[-22.0], &ShootingOptions::default()).unwrap();
        assert!(orbit.residual < 1e-9);
        let res = closure_residual(&field, &orbit, 2e-3);
        assert!(res < 1e-6, "closure {res}");
        assert!(orbit.t_period > 5.0 && orbit.t_period < 7.0);
    }

    #[test]
    fn repeated_seed_reduces_to_minimal_period() {
        let field = Rossler::default();
        let sec = PoincareSection::new(0, 0.0, 1);
        let one = refine_upo(&field, &sec, &[-22.0], &ShootingOptions::default()).unwrap();
        let s = one.section_points[0];
        let orbit = refine_upo(&field, &sec, &[s, s], &ShootingOptions::default()).unwrap();
        assert_eq!(orbit.period, 1);
        assert_eq!(orbit.reduced_from, Some(2));
    }
}
