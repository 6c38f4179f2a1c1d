use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::*;
use super::report::Table;
use super::run::{output_dir, run_pipeline, run_upo, ArtifactBundle};
use super::upo::UpoCatalog;
use crate::dynamics::{time_averages, Rossler};
use crate::error::{Error, Result};
use crate::polybasis::{BasisSpec, PolyCoeffs};
use crate::recovery::{double_well_expectations, double_well_observables, expectation, histogram_density, Measure};
use crate::sdpsolver::SolverSettings;

fn base_config(name: &str, system: SystemConfig, k: u32, l: u32) -> ExperimentConfig {
    ExperimentConfig {
        name: name.into(),
        system,
        data: None,
        basis: BasisConfig {
            family: crate::polybasis::BasisFamily::Chebyshev,
            k,
            l,
            domain: None,
        },
        edmd: EdmdConfig::default(),
        objective: None,
        solver: SolverConfig::default(),
        recovery: RecoveryConfig::default(),
        upo: None,
        output: PathBuf::from(name),
    }
}

/// Logistic fit of the first Chebyshev moment, `k` and `l = 2k`. With
/// `m = None` the exact Lie matrix and target 0 are used.
pub fn logistic_fit_config(m: Option<usize>, k: u32) -> ExperimentConfig {
    let name = match m {
        Some(m) => format!("logistic-m{m}-k{k}"),
        None => format!("logistic-exact-k{k}"),
    };
    let mut c = base_config(&name, SystemConfig::Logistic, k, 2 * k);
    c.data = m.map(|m| DataConfig::Orbit { x0: vec![0.25], m });
    c.edmd.exact = m.is_none();
    c.objective = Some(ObjectiveConfig {
        kind: ObjectiveKind::Fit,
        moments: vec![vec![1]],
        coefficients: vec![],
        values: m.is_none().then(|| vec![0.0]),
    });
    c.solver.polish = true;
    c
}

/// Logistic orbit data with the linear objective `y_j`, recovering atoms.
pub fn logistic_atoms_config(m: usize, k: u32, j: u32) -> ExperimentConfig {
    let mut c = base_config(&format!("logistic-atoms-m{m}-k{k}-y{j}"), SystemConfig::Logistic, k, 2 * k);
    c.data = Some(DataConfig::Orbit { x0: vec![0.25], m });
    c.objective = Some(ObjectiveConfig {
        kind: ObjectiveKind::Linear,
        moments: vec![vec![j]],
        coefficients: vec![1.0],
        values: None,
    });
    c.recovery.density = false;
    c.recovery.atoms = true;
    c
}

/// The map `2x - x^2` on `[0, 1]` in monomials, `k = 1`, `l = 2`, minimizing `-y_1`.
pub fn two_fixed_point_config() -> ExperimentConfig {
    let mut c = base_config("two-fixed-point", SystemConfig::TwoFixedPoint, 1, 2);
    c.basis.family = crate::polybasis::BasisFamily::Monomial;
    c.edmd.exact = true;
    c.objective = Some(ObjectiveConfig {
        kind: ObjectiveKind::Linear,
        moments: vec![vec![1]],
        coefficients: vec![-1.0],
        values: None,
    });
    c.recovery.density = false;
    c
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Table1 {
    pub ks: Vec<u32>,
    pub exact: Vec<f64>,
    /// `(m, empirical first moment, L1 errors per k)`.
    pub rows: Vec<(usize, f64, Vec<f64>)>,
}

impl Table1 {
    pub fn table(&self) -> Table {
        let mut cols: Vec<String> = self.ks.iter().map(|k| format!("k={k}")).collect();
        cols.push("ytilde1".into());
        let mut t = Table::new("L1 distance between recovered and exact CDFs", "m", &cols);
        let mut ex = self.exact.clone();
        ex.push(0.0);
        t.push("exact", ex);
        for (m, y, vals) in &self.rows {
            let mut v = vals.clone();
            v.push(*y);
            t.push(m.to_string(), v);
        }
        t
    }
}

fn l1_of(bundle: &ArtifactBundle) -> Result<f64> {
    bundle
        .report
        .l1_cdf
        .ok_or_else(|| Error::Config("no density L1 in the report".into()))
}

/// Table of CDF errors for the exact Lie matrix and each data length in `ms`.
pub fn replicate_table1(ks: &[u32], ms: &[usize], root: &Path) -> Result<Table1> {
    let exact = ks
        .iter()
        .map(|&k| l1_of(&run_pipeline(&logistic_fit_config(None, k), root)?))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for &m in ms {
        let mut vals = Vec::new();
        let mut ytil = f64::NAN;
        for &k in ks {
            let b = run_pipeline(&logistic_fit_config(Some(m), k), root)?;
            ytil = b.report.fit_targets[0];
            vals.push(l1_of(&b)?);
        }
        rows.push((m, ytil, vals));
    }
    Ok(Table1 {
        ks: ks.to_vec(),
        exact,
        rows,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Table2 {
    pub powers: Vec<u32>,
    pub exact: Vec<f64>,
    /// Relative errors in percent.
    pub sdp: Vec<f64>,
    pub histogram: Vec<f64>,
}

impl Table2 {
    pub fn table(&self) -> Table {
        let cols: Vec<String> = self.powers.iter().map(|j| format!("E[x^{j}]")).collect();
        let mut t = Table::new("Relative moment errors (%)", "method", &cols);
        t.push("sdp", self.sdp.clone());
        t.push("histogram", self.histogram.clone());
        t
    }
}

/// `E[x^j]` under the arcsine law.
pub fn arcsine_moment(j: u32) -> f64 {
    if j % 2 == 1 {
        return 0.0;
    }
    (0..j / 2).fold(1.0, |acc, i| acc * (j - i) as f64 / (i + 1) as f64) / 2f64.powi(j as i32)
}

/// Relative errors of monomial moments from the recovered density and from a
/// histogram of the same orbit.
pub fn replicate_table2(m: usize, k: u32, bins: usize, powers: &[u32], root: &Path) -> Result<Table2> {
    let b = run_pipeline(&logistic_fit_config(Some(m), k), root)?;
    let density = b
        .recovered
        .density
        .as_ref()
        .ok_or_else(|| Error::Config("density recovery disabled".into()))?;
    let snaps = b.snapshots.as_ref().expect("data-driven run");
    let hist = histogram_density(snaps, bins)?;
    let (mut exact, mut sdp, mut histogram) = (vec![], vec![], vec![]);
    for &j in powers {
        let g = PolyCoeffs::interpolate(BasisSpec::chebyshev_unit(1, j), |x| x[0].powi(j as i32));
        let e = arcsine_moment(j);
        exact.push(e);
        sdp.push(100.0 * (density.expectation(&g)? - e).abs() / e.abs());
        histogram.push(100.0 * (hist.expectation(&g)? - e).abs() / e.abs());
    }
    Ok(Table2 {
        powers: powers.to_vec(),
        exact,
        sdp,
        histogram,
    })
}

/// Desk-scale double-well run: one realization of `steps` steps.
pub fn double_well_config(steps: usize, k: u32, l: u32, seed: u64) -> ExperimentConfig {
    let mut c = base_config(
        &format!("double-well-n{steps}-k{k}-l{l}"),
        SystemConfig::DoubleWell { sigma: 0.75 },
        k,
        l,
    );
    c.data = Some(DataConfig::Sde {
        realizations: 1,
        steps,
        tau: 1e-4,
        seed,
        init_box: vec![(-0.5, 0.5); 2],
    });
    c.edmd.threshold = Some(1e-3);
    c.objective = Some(ObjectiveConfig {
        kind: ObjectiveKind::Linear,
        moments: vec![vec![2, 0], vec![0, 2]],
        coefficients: vec![-1.0, -1.0],
        values: None,
    });
    c.solver.polish = true;
    c
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DoubleWellTable {
    pub observables: Vec<(u32, u32)>,
    pub exact: Vec<f64>,
    pub predicted: Vec<f64>,
    pub histogram: Vec<f64>,
}

impl DoubleWellTable {
    pub fn relative_errors(&self) -> Vec<f64> {
        self.predicted
            .iter()
            .zip(&self.exact)
            .map(|(p, e)| (p - e).abs() / e.abs())
            .collect()
    }

    pub fn table(&self) -> Table {
        let cols: Vec<String> = ["exact", "sdp", "sdp err %", "histogram", "histogram err %"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let mut t = Table::new("Stationary expectations of T_a(x1) T_b(x2)", "observable", &cols);
        for (i, &(a, b)) in self.observables.iter().enumerate() {
            let e = self.exact[i];
            t.push(
                format!("T{a}T{b}"),
                vec![
                    e,
                    self.predicted[i],
                    100.0 * (self.predicted[i] - e).abs() / e.abs(),
                    self.histogram[i],
                    100.0 * (self.histogram[i] - e).abs() / e.abs(),
                ],
            );
        }
        t
    }
}

/// Expectations of the 15 Chebyshev observables from the run of `config`,
/// against quadrature of the exact density.
pub fn replicate_doublewell(config: &ExperimentConfig, root: &Path) -> Result<DoubleWellTable> {
    let b = run_pipeline(config, root)?;
    let SystemConfig::DoubleWell { sigma } = config.system else {
        return Err(Error::Config("double-well replication needs the double-well system".into()));
    };
    let observables = double_well_observables();
    let exact = double_well_expectations(sigma, &observables, 200);
    let spec = b.lie.spec.clone();
    let set = spec.index_set();
    let y = Measure::Moments {
        spec: spec.clone(),
        y: b.solution.y.clone(),
    };
    let hist = Measure::Histogram(histogram_density(b.snapshots.as_ref().expect("sde data"), 101)?);
    let (mut predicted, mut histogram) = (vec![], vec![]);
    for &(a, c) in &observables {
        let s6 = spec.with_degree(6);
        let mut g = PolyCoeffs::zeros(s6.clone());
        let pos = s6.index_set().position_of(&[a, c]).expect("degree 6");
        g.coeffs[pos] = 1.0;
        debug_assert!(set.position_of(&[a, c]).is_some());
        predicted.push(expectation(&y, &g)?);
        histogram.push(expectation(&hist, &g)?);
    }
    Ok(DoubleWellTable {
        observables,
        exact,
        predicted,
        histogram,
    })
}

/// Rössler physical-measure run on `t_end` of data sampled every 0.005.
pub fn rossler_measure_config(t_end: f64) -> ExperimentConfig {
    let mut c = base_config(
        &format!("rossler-measure-t{t_end}"),
        SystemConfig::Rossler {
            a: 0.1,
            b: 0.1,
            c: 18.0,
        },
        14,
        15,
    );
    c.data = Some(DataConfig::Ode {
        x0: vec![0.0, -20.0, 0.0],
        t_end,
        tau: 0.005,
        h: 0.005,
    });
    c.objective = Some(ObjectiveConfig {
        kind: ObjectiveKind::RelativeFit,
        moments: vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]],
        coefficients: vec![],
        values: None,
    });
    c.solver.settings = Some(SolverSettings {
        max_iter: 20_000,
        ..SolverSettings::for_dimension(3)
    });
    c.solver.polish = true;
    c
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RosslerMoments {
    pub exponents: Vec<Vec<u32>>,
    pub predicted: Vec<f64>,
    /// Long-time averages.
    pub reference: Vec<f64>,
    pub reference_t_end: f64,
}

impl RosslerMoments {
    pub fn relative_errors(&self) -> Vec<f64> {
        self.predicted
            .iter()
            .zip(&self.reference)
            .map(|(p, r)| (p - r).abs() / r.abs())
            .collect()
    }

    pub fn table(&self) -> Table {
        let cols: Vec<String> = ["predicted", "time average", "err %"].iter().map(|s| s.to_string()).collect();
        let mut t = Table::new("Moments of the recovered Rossler density", "moment", &cols);
        for (i, e) in self.exponents.iter().enumerate() {
            let label = e.iter().map(|v| v.to_string()).collect::<String>();
            t.push(
                format!("x^{label}"),
                vec![self.predicted[i], self.reference[i], 100.0 * self.relative_errors()[i]],
            );
        }
        t
    }
}

/// Monomial moments of degree 1 and 2 of the recovered measure against time
/// averages over `reference_t_end`.
pub fn replicate_rossler_measure(config: &ExperimentConfig, reference_t_end: f64, root: &Path) -> Result<RosslerMoments> {
    let b = run_pipeline(config, root)?;
    let SystemConfig::Rossler { a, b: bb, c } = config.system else {
        return Err(Error::Config("needs the Rossler system".into()));
    };
    let Some(DataConfig::Ode { x0, tau, h, .. }) = &config.data else {
        return Err(Error::Config("needs ode data".into()));
    };
    let exponents: Vec<Vec<u32>> = b.report.moments.iter().map(|m| m.exponents.clone()).collect();
    let obs: Vec<Box<dyn Fn(&[f64]) -> f64 + '_>> = exponents
        .iter()
        .map(|e| {
            Box::new(move |x: &[f64]| x.iter().zip(e).map(|(v, &p)| v.powi(p as i32)).product::<f64>())
                as Box<dyn Fn(&[f64]) -> f64>
        })
        .collect();
    let refs: Vec<&dyn Fn(&[f64]) -> f64> = obs.iter().map(|o| o.as_ref()).collect();
    let reference = time_averages(&Rossler { a, b: bb, c }, x0, reference_t_end, *tau, *h, &refs)?;
    drop(refs);
    drop(obs);
    Ok(RosslerMoments {
        predicted: b.report.moments.iter().map(|m| m.predicted).collect(),
        exponents,
        reference,
        reference_t_end,
    })
}

/// Rössler return-map data on `x1 = 0` (upward), observing `x2`, from
/// `t_end` time units sampled every 0.005.
pub fn rossler_upo_config(t_end: f64, k: u32, l: u32, objectives: usize) -> ExperimentConfig {
    let mut c = base_config(
        &format!("rossler-upo-t{t_end}-k{k}-l{l}-n{objectives}"),
        SystemConfig::Rossler {
            a: 0.1,
            b: 0.1,
            c: 18.0,
        },
        k,
        l,
    );
    c.data = Some(DataConfig::Section {
        x0: vec![0.0, -20.0, 0.0],
        t_end,
        tau: 0.005,
        h: 0.005,
        coordinate: 0,
        level: 0.0,
        observed: 1,
        range: None,
    });
    c.recovery.density = false;
    c.solver.settings = Some(SolverSettings {
        max_iter: 5_000,
        ..SolverSettings::for_dimension(1)
    });
    c.solver.polish = false;
    c.upo = Some(UpoConfig {
        objectives,
        ..UpoConfig::default()
    });
    c
}

pub fn replicate_rossler_upo(config: &ExperimentConfig, root: &Path) -> Result<UpoCatalog> {
    Ok(run_upo(config, root)?.0)
}

/// Writes `tables` as `name.csv` and `name.txt` under the output directory of
/// `name`.
pub fn write_tables(name: &str, tables: &[Table], root: &Path) -> Result<PathBuf> {
    let mut cfg = base_config(name, SystemConfig::Logistic, 0, 0);
    cfg.output = PathBuf::from(name);
    let dir = output_dir(&cfg, root);
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join(format!("{name}.csv")), super::report::table_report(tables, true))?;
    std::fs::write(dir.join(format!("{name}.txt")), super::report::table_report(tables, false))?;
    Ok(dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arcsine_moments_match_quadrature() {
        let (x, w) = crate::recovery::gauss_legendre(400);
        for j in [2u32, 4, 10] {
            // substitute x = sin(pi t / 2) to remove the endpoint singularity
            let q: f64 = x
                .iter()
                .zip(&w)
                .map(|(t, wt)| wt * 0.5 * (std::f64::consts::FRAC_PI_2 * t).sin().powi(j as i32))
                .sum();
            assert!((q - arcsine_moment(j)).abs() < 1e-12, "{j}");
        }
        assert_eq!(arcsine_moment(3), 0.0);
    }

    #[test]
    fn two_fixed_point_regression() {
        let dir = tempfile::tempdir().unwrap();
        let b = run_pipeline(&two_fixed_point_config(), dir.path()).unwrap();
        assert!((b.solution.y[0] - 1.0).abs() < 1e-6);
        assert!((b.solution.y[1] - 1.0).abs() < 1e-6);
        assert!((b.solution.objective + 1.0).abs() < 1e-6);
    }

    #[test]
    fn configs_validate_and_round_trip() {
        for c in [
            logistic_fit_config(None, 5),
            logistic_fit_config(Some(100), 5),
            logistic_atoms_config(100, 5, 3),
            two_fixed_point_config(),
            double_well_config(1000, 4, 6, 1),
            rossler_measure_config(10.0),
            rossler_upo_config(100.0, 4, 8, 3),
        ] {
            c.validate().unwrap();
            let back = ExperimentConfig::from_toml_str(&c.to_toml_string().unwrap()).unwrap();
            assert_eq!(back, c);
        }
    }
}
