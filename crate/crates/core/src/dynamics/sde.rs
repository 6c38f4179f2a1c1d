//! Euler–Maruyama simulation with additive Gaussian noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::snapshots::{Provenance, SnapshotSet};
use super::systems::VectorField;
use crate::error::{Error, Result};

/// Settings for `dX = a(X) dt + sigma dW`.
#[derive(Clone, Debug)]
pub struct SdeSettings {
    pub sigma: f64,
    pub tau: f64,
    pub steps: usize,
    pub domain_box: Vec<(f64, f64)>,
    pub system: String,
}

impl SdeSettings {
    fn abort_radius(&self) -> f64 {
        10.0 * self
            .domain_box
            .iter()
            .map(|&(a, b)| a.abs().max(b.abs()))
            .fold(0.0, f64::max)
    }
}

/// Child seed `i` of `master`, via the SplitMix64 finalizer.
pub fn derive_seed(master: u64, i: u64) -> u64 {
    let mut z = master.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(i + 1));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One Euler–Maruyama realization from `x0`. Pairs with an endpoint outside
/// the box are dropped; the run aborts if the state leaves ten times the box
/// radius.
pub fn simulate_sde(
    drift: &dyn VectorField,
    settings: &SdeSettings,
    x0: &[f64],
    seed: u64,
) -> Result<SnapshotSet> {
    let n = drift.dim();
    if x0.len() != n {
        return Err(Error::DimensionMismatch(format!("x0 has {} entries", x0.len())));
    }
    if settings.sigma < 0.0 {
        return Err(Error::Config("noise intensity must be nonnegative".into()));
    }
    let mut out = SnapshotSet::new(
        n,
        settings.tau,
        settings.domain_box.clone(),
        Provenance {
            system: settings.system.clone(),
            seed: Some(seed),
            step: Some(settings.tau),
        },
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let radius = settings.abort_radius();
    let sq = settings.sigma * settings.tau.sqrt();
    let mut x = x0.to_vec();
    let mut next = vec![0.0; n];
    let mut a = vec![0.0; n];
    for step in 0..settings.steps {
        drift.eval(&x, &mut a);
        for i in 0..n {
            let xi: f64 = rng.sample(StandardNormal);
            next[i] = x[i] + a[i] * settings.tau + sq * xi;
        }
        if next.iter().any(|v| !v.is_finite() || v.abs() > radius) {
            return Err(Error::BlowUp { step });
        }
        out.push(&x, &next);
        std::mem::swap(&mut x, &mut next);
    }
    Ok(out)
}

/// `realizations` independent runs started uniformly in `init_box`, each with
/// its own seed derived from `master_seed`; results concatenated in order.
pub fn simulate_sde_ensemble(
    drift: &dyn VectorField,
    settings: &SdeSettings,
    init_box: &[(f64, f64)],
    realizations: usize,
    master_seed: u64,
) -> Result<SnapshotSet> {
    let runs: Vec<SnapshotSet> = (0..realizations)
        .into_par_iter()
        .map(|r| {
            let seed = derive_seed(master_seed, r as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x0: Vec<f64> = init_box
                .iter()
                .map(|&(a, b)| rng.random_range(a..b))
                .collect();
            simulate_sde(drift, settings, &x0, derive_seed(seed, 0))
        })
        .collect::<Result<_>>()?;
    let mut it = runs.into_iter();
    let mut all = it.next().ok_or_else(|| Error::Config("no realizations".into()))?;
    for r in it {
        all.append(&r);
    }
    all.provenance.seed = Some(master_seed);
    Ok(all)
}

/// A single realization started at a uniformly drawn point of `init_box`.
pub fn simulate_sde_random_start(
    drift: &dyn VectorField,
    settings: &SdeSettings,
    init_box: &[(f64, f64)],
    seed: u64,
) -> Result<SnapshotSet> {
    let mut out = simulate_sde_ensemble(drift, settings, init_box, 1, seed)?;
    out.provenance.seed = Some(seed);
    Ok(out)
}
