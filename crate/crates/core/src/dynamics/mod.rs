//! Snapshot generation for maps, SDEs and ODEs, Poincaré sections, and
//! periodic-orbit refinement.

mod ode;
mod poincare;
mod sde;
mod shooting;
mod snapshots;
mod systems;

pub use ode::{for_each_sample, integrate_ode, time_averages, DenseTrajectory, OdeSampling, Rk4};
pub use poincare::{
    find_crossings, poincare_snapshots, section_snapshots, stream_crossings, Crossing,
    PoincareSection,
};
pub use sde::{derive_seed, simulate_sde, simulate_sde_ensemble, simulate_sde_random_start, SdeSettings};
pub use shooting::{closure_residual, flight_time, refine_upo, PeriodicOrbit, ShootingOptions};
pub use snapshots::{empirical_moments, Provenance, SnapshotSet};
pub use systems::{
    DiscreteMap, DoubleWell, Logistic, PolySystem, Rossler, TwoFixedPointMap, VectorField,
    ZeroField,
};

use crate::error::{Error, Result};

/// `m` snapshot pairs `(x_i, f(x_i))` along the orbit of `x0`.
pub fn simulate_map(
    f: &dyn DiscreteMap,
    x0: &[f64],
    m: usize,
    domain_box: Vec<(f64, f64)>,
    system: &str,
) -> Result<SnapshotSet> {
    let n = f.dim();
    if x0.len() != n {
        return Err(Error::DimensionMismatch(format!("x0 has {} entries", x0.len())));
    }
    let mut out = SnapshotSet::new(
        n,
        1.0,
        domain_box,
        Provenance {
            system: system.to_string(),
            seed: None,
            step: None,
        },
    )?;
    if !out.contains(x0) {
        return Err(Error::OrbitEscaped { step: 0 });
    }
    let mut x = x0.to_vec();
    let mut z = vec![0.0; n];
    for step in 0..m {
        f.apply(&x, &mut z);
        if !out.push(&x, &z) {
            return Err(Error::OrbitEscaped { step: step + 1 });
        }
        std::mem::swap(&mut x, &mut z);
    }
    Ok(out)
}
