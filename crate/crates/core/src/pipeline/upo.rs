use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{closure_residual, refine_upo, PeriodicOrbit, PoincareSection, ShootingOptions, SnapshotSet, VectorField};
use crate::edmd::{edmd, EdmdPath};
use crate::error::{Error, Result};
use crate::momentsdp::{assemble_problem, randomized_objectives, SemialgebraicSet};
use crate::polybasis::{BasisFamily, BasisSpec};
use crate::recovery::extract_atoms;
use crate::sdpsolver::{polish, solve_moment_problem, Admm, PolishSettings, SolverSettings};

/// Settings of one hunt.
#[derive(Clone, Debug)]
pub struct HuntSettings {
    pub family: BasisFamily,
    pub k: u32,
    pub l: u32,
    pub objectives: usize,
    pub seed: u64,
    pub period_cap: usize,
    pub rank_tol: f64,
    pub solver: SolverSettings,
    pub polish: Option<PolishSettings>,
    pub shooting: ShootingOptions,
    /// Largest accepted closure residual after re-integration.
    pub closure_tol: f64,
}

impl HuntSettings {
    pub fn new(k: u32, l: u32) -> Self {
        HuntSettings {
            family: BasisFamily::Chebyshev,
            k,
            l,
            objectives: 200,
            seed: 7,
            period_cap: 8,
            rank_tol: crate::recovery::DEFAULT_RANK_TOL,
            solver: SolverSettings {
                max_iter: 5_000,
                ..SolverSettings::for_dimension(1)
            },
            polish: None,
            shooting: ShootingOptions::default(),
            closure_tol: 1e-6,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub orbit: PeriodicOrbit,
    pub closure_residual: f64,
    /// Objectives whose extracted support produced this orbit.
    pub found_by: Vec<usize>,
}

/// Outcome of a single randomized objective.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ObjectiveOutcome {
    pub index: usize,
    pub objective: f64,
    pub support: Option<Vec<f64>>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct UpoCatalog {
    /// Verified orbits sorted by period, then by smallest section point.
    pub orbits: Vec<CatalogEntry>,
    pub outcomes: Vec<ObjectiveOutcome>,
    /// Distinct supports found across objectives.
    pub supports: Vec<Vec<f64>>,
    /// Candidate cycles that failed refinement or verification.
    pub rejected: Vec<(Vec<f64>, String)>,
    /// `(n, pairs (x_i, x_{i+n}))` of the section sequence.
    pub diagonal: Vec<(usize, Vec<(f64, f64)>)>,
}

impl UpoCatalog {
    pub fn periods(&self) -> Vec<usize> {
        let mut p: Vec<usize> = self.orbits.iter().map(|e| e.orbit.period).collect();
        p.dedup();
        p
    }

    pub fn count_of_period(&self, period: usize) -> usize {
        self.orbits.iter().filter(|e| e.orbit.period == period).count()
    }
}

/// Consecutive section values `x_0, .., x_m` when the pairs chain.
fn section_sequence(snaps: &SnapshotSet) -> Vec<f64> {
    let m = snaps.len();
    let mut seq: Vec<f64> = (0..m).map(|i| snaps.x(i)[0]).collect();
    if m > 0 {
        seq.push(snaps.z(m - 1)[0]);
    }
    seq
}

/// Pairs `(x_i, x_{i+n})` for `n = 1..=cap`; intersections with the diagonal
/// mark period-`n` points.
pub fn diagonal_data(snaps: &SnapshotSet, cap: usize) -> Vec<(usize, Vec<(f64, f64)>)> {
    let seq = section_sequence(snaps);
    (1..=cap)
        .map(|n| (n, seq.windows(n + 1).map(|w| (w[0], w[n])).collect()))
        .collect()
}

fn same_support(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

/// Splits a support into cycles of the return map, following each point to
/// the support point nearest the data image of its nearest data point.
pub fn order_cycles(support: &[f64], snaps: &SnapshotSet) -> Vec<Vec<f64>> {
    let p = support.len();
    let nearest = |v: f64, pts: &mut dyn Iterator<Item = (usize, f64)>| {
        pts.min_by(|a, b| (a.1 - v).abs().total_cmp(&(b.1 - v).abs())).map(|(i, _)| i)
    };
    let next: Vec<usize> = support
        .iter()
        .map(|&s| {
            let i = nearest(s, &mut (0..snaps.len()).map(|i| (i, snaps.x(i)[0]))).unwrap();
            let z = snaps.z(i)[0];
            nearest(z, &mut support.iter().copied().enumerate()).unwrap()
        })
        .collect();
    let mut seen = vec![false; p];
    let mut cycles = Vec::new();
    for start in 0..p {
        if seen[start] {
            continue;
        }
        let mut path = Vec::new();
        let mut cur = start;
        while !seen[cur] && !path.contains(&cur) {
            path.push(cur);
            cur = next[cur];
        }
        if let Some(pos) = path.iter().position(|&j| j == cur) {
            cycles.push(path[pos..].iter().map(|&j| support[j]).collect());
        }
        for j in path {
            seen[j] = true;
        }
    }
    cycles
}

fn same_orbit(a: &PeriodicOrbit, b: &PeriodicOrbit, tol: f64) -> bool {
    if a.period != b.period {
        return false;
    }
    let mut x = a.section_points.clone();
    let mut y = b.section_points.clone();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    same_support(&x, &y, tol)
}

/// Searches for periodic orbits of `field` through the support of ergodic
/// measures that maximize randomized linear objectives on section data.
pub fn upo_hunt(
    field: &dyn VectorField,
    section: &PoincareSection,
    snaps: &SnapshotSet,
    settings: &HuntSettings,
) -> Result<UpoCatalog> {
    if snaps.dimension != 1 {
        return Err(Error::DimensionNotOne(snaps.dimension));
    }
    let spec = BasisSpec::new(settings.family, 1, settings.l, snaps.domain_box.clone())?;
    let lie = edmd(snaps, settings.k, settings.l, &spec, EdmdPath::Auto)?;
    let objectives = randomized_objectives(1, settings.k, settings.objectives, settings.seed);
    let base = assemble_problem(&lie, &SemialgebraicSet::from_box(&spec), objectives[0].clone())?;
    let half = 0.5 * (snaps.domain_box[0].1 - snaps.domain_box[0].0);

    let outcomes: Vec<ObjectiveOutcome> = objectives
        .into_par_iter()
        .enumerate()
        .map(|(index, obj)| {
            let mut problem = base.clone();
            problem.objective = obj;
            let run = || -> Result<(f64, Vec<f64>)> {
                let mut sol = solve_moment_problem(&problem, &Admm(settings.solver.clone()))?;
                if let Some(ps) = &settings.polish {
                    if let Ok(better) = polish(&problem, &sol.y, ps) {
                        sol = better;
                    }
                }
                let atoms = extract_atoms(&sol.y, &spec, settings.rank_tol)?;
                let mut pts: Vec<f64> = atoms.points().into_iter().map(|p| p[0]).collect();
                pts.sort_by(f64::total_cmp);
                Ok((sol.objective, pts))
            };
            match run() {
                Ok((objective, pts)) => ObjectiveOutcome {
                    index,
                    objective,
                    support: Some(pts),
                    error: None,
                },
                Err(e) => ObjectiveOutcome {
                    index,
                    objective: f64::NAN,
                    support: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();

    let mut supports: Vec<(Vec<f64>, Vec<usize>)> = Vec::new();
    for o in &outcomes {
        let Some(s) = &o.support else { continue };
        match supports.iter_mut().find(|(t, _)| same_support(t, s, 1e-4 * half)) {
            Some((_, ids)) => ids.push(o.index),
            None => supports.push((s.clone(), vec![o.index])),
        }
    }

    let mut candidates: Vec<(Vec<f64>, Vec<usize>)> = Vec::new();
    for (s, ids) in &supports {
        for c in order_cycles(s, snaps) {
            if c.len() > settings.period_cap {
                continue;
            }
            let mut key = c.clone();
            key.sort_by(f64::total_cmp);
            match candidates.iter_mut().find(|(t, _)| {
                let mut u = t.clone();
                u.sort_by(f64::total_cmp);
                same_support(&u, &key, 1e-4 * half)
            }) {
                Some((_, found)) => found.extend(ids),
                None => candidates.push((c, ids.clone())),
            }
        }
    }

    let refined: Vec<(Vec<f64>, Vec<usize>, Result<(PeriodicOrbit, f64)>)> = candidates
        .into_par_iter()
        .map(|(c, ids)| {
            let r = refine_upo(field, section, &c, &settings.shooting).and_then(|orbit| {
                let res = closure_residual(field, &orbit, settings.shooting.h_max);
                if res < settings.closure_tol {
                    Ok((orbit, res))
                } else {
                    Err(Error::NewtonDiverged { residual: res })
                }
            });
            (c, ids, r)
        })
        .collect();

    let mut orbits: Vec<CatalogEntry> = Vec::new();
    let mut rejected = Vec::new();
    for (c, ids, r) in refined {
        match r {
            Ok((orbit, res)) => match orbits.iter_mut().find(|e| same_orbit(&e.orbit, &orbit, 1e-6 * half)) {
                Some(e) => e.found_by.extend(ids),
                None => orbits.push(CatalogEntry {
                    orbit,
                    closure_residual: res,
                    found_by: ids,
                }),
            },
            Err(e) => rejected.push((c, e.to_string())),
        }
    }
    for e in &mut orbits {
        e.found_by.sort_unstable();
        e.found_by.dedup();
    }
    let min_point = |o: &PeriodicOrbit| o.section_points.iter().copied().fold(f64::INFINITY, f64::min);
    orbits.sort_by(|a, b| {
        a.orbit
            .period
            .cmp(&b.orbit.period)
            .then(min_point(&a.orbit).total_cmp(&min_point(&b.orbit)))
    });

    Ok(UpoCatalog {
        orbits,
        outcomes,
        supports: supports.into_iter().map(|(s, _)| s).collect(),
        rejected,
        diagonal: diagonal_data(snaps, settings.period_cap),
    })
}
