//! Fixed-step classical Runge–Kutta integration.

use super::snapshots::{Provenance, SnapshotSet};
use super::systems::VectorField;
use crate::error::{Error, Result};

/// Scratch space for one RK4 step.
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub fn new(n: usize) -> Self {
        Rk4 {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }

    /// Advances `x` in place by `h`.
    pub fn step(&mut self, field: &dyn VectorField, x: &mut [f64], h: f64) {
        let n = x.len();
        field.eval(x, &mut self.k1);
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * h * self.k1[i];
        }
        field.eval(&self.tmp, &mut self.k2);
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * h * self.k2[i];
        }
        field.eval(&self.tmp, &mut self.k3);
        for i in 0..n {
            self.tmp[i] = x[i] + h * self.k3[i];
        }
        field.eval(&self.tmp, &mut self.k4);
        for i in 0..n {
            x[i] += h / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }

    /// Integrates for time `t` with `steps` equal steps.
    pub fn flow(&mut self, field: &dyn VectorField, x: &mut [f64], t: f64, steps: usize) {
        let h = t / steps as f64;
        for _ in 0..steps {
            self.step(field, x, h);
        }
    }
}

/// States and derivatives sampled on a uniform time grid.
#[derive(Clone, Debug)]
pub struct DenseTrajectory {
    pub n: usize,
    pub t0: f64,
    pub dt: f64,
    states: Vec<f64>,
    derivs: Vec<f64>,
}

impl DenseTrajectory {
    pub fn from_samples(n: usize, t0: f64, dt: f64, states: Vec<f64>, derivs: Vec<f64>) -> Self {
        assert_eq!(states.len(), derivs.len());
        assert_eq!(states.len() % n, 0);
        DenseTrajectory {
            n,
            t0,
            dt,
            states,
            derivs,
        }
    }

    pub fn len(&self) -> usize {
        self.states.len() / self.n
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.n..(i + 1) * self.n]
    }

    pub fn deriv(&self, i: usize) -> &[f64] {
        &self.derivs[i * self.n..(i + 1) * self.n]
    }
}

/// Options for [`integrate_ode`].
#[derive(Clone, Debug)]
pub struct OdeSampling {
    pub t_end: f64,
    /// Sampling interval of the snapshot pairs.
    pub tau: f64,
    /// Internal step; `tau` must be an integer multiple of it.
    pub h: f64,
    pub domain_box: Vec<(f64, f64)>,
    pub system: String,
}

pub(crate) fn substeps(tau: f64, h: f64) -> Result<usize> {
    if !(h > 0.0 && tau >= h) {
        return Err(Error::Config(format!("need 0 < h <= tau (h = {h}, tau = {tau})")));
    }
    let r = tau / h;
    let s = r.round();
    if (r - s).abs() > 1e-9 * r {
        return Err(Error::Config(format!("tau = {tau} is not a multiple of h = {h}")));
    }
    Ok(s as usize)
}

/// Streams the states `x(j tau)`, `j = 0..=floor(t_end / tau)`, to `visit`.
pub fn for_each_sample(
    field: &dyn VectorField,
    x0: &[f64],
    t_end: f64,
    tau: f64,
    h: f64,
    mut visit: impl FnMut(usize, &[f64]),
) -> Result<()> {
    let sub = substeps(tau, h)?;
    let h = tau / sub as f64;
    let samples = (t_end / tau + 1e-9).floor() as usize;
    let mut rk = Rk4::new(x0.len());
    let mut x = x0.to_vec();
    visit(0, &x);
    for j in 1..=samples {
        for _ in 0..sub {
            rk.step(field, &mut x, h);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { t: j as f64 * tau });
        }
        visit(j, &x);
    }
    Ok(())
}

/// Integrates `field` from `x0`, returning snapshot pairs `(x(t), x(t + tau))`
/// (pairs leaving the box are dropped) and the sampled trajectory.
pub fn integrate_ode(
    field: &dyn VectorField,
    x0: &[f64],
    opts: &OdeSampling,
) -> Result<(SnapshotSet, DenseTrajectory)> {
    let n = field.dim();
    if x0.len() != n {
        return Err(Error::DimensionMismatch(format!("x0 has {} entries", x0.len())));
    }
    let mut snaps = SnapshotSet::new(
        n,
        opts.tau,
        opts.domain_box.clone(),
        Provenance {
            system: opts.system.clone(),
            seed: None,
            step: Some(opts.h),
        },
    )?;
    let mut states = Vec::new();
    let mut derivs = Vec::new();
    let mut d = vec![0.0; n];
    let mut prev: Option<Vec<f64>> = None;
    for_each_sample(field, x0, opts.t_end, opts.tau, opts.h, |_, x| {
        field.eval(x, &mut d);
        states.extend_from_slice(x);
        derivs.extend_from_slice(&d);
        if let Some(p) = &prev {
            snaps.push(p, x);
        }
        prev = Some(x.to_vec());
    })?;
    let traj = DenseTrajectory::from_samples(n, 0.0, opts.tau, states, derivs);
    Ok((snaps, traj))
}

/// Time averages of `observables` over samples of one trajectory.
pub fn time_averages(
    field: &dyn VectorField,
    x0: &[f64],
    t_end: f64,
    tau: f64,
    h: f64,
    observables: &[&dyn Fn(&[f64]) -> f64],
) -> Result<Vec<f64>> {
    let mut acc = vec![0.0; observables.len()];
    let mut count = 0usize;
    for_each_sample(field, x0, t_end, tau, h, |_, x| {
        for (a, g) in acc.iter_mut().zip(observables) {
            *a += g(x);
        }
        count += 1;
    })?;
    Ok(acc.into_iter().map(|a| a / count as f64).collect())
}
