use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::artifacts::{sha256_hex, stage_key, ArtifactStore};
use super::config::{DataConfig, ExperimentConfig, ObjectiveKind, SystemConfig};
use super::report::density_grid_csv;
use super::upo::{upo_hunt, HuntSettings, UpoCatalog};
use crate::dynamics::{
    empirical_moments, integrate_ode, section_snapshots, simulate_map, simulate_sde_ensemble,
    stream_crossings, DiscreteMap, DoubleWell, Logistic, OdeSampling, PoincareSection, PolySystem, Rossler,
    SdeSettings, SnapshotSet, TwoFixedPointMap, VectorField,
};
use crate::edmd::{edmd, exact_lie_matrix, threshold_refine, ExactSystem, GramData, LieMatrix};
use crate::error::{Error, Result};
use crate::momentsdp::{assemble_problem, MomentProblem, Objective, SemialgebraicSet};
use crate::polybasis::{BasisSpec, PolyCoeffs};
use crate::recovery::{cdf_and_l1, density_from_moments, extract_atoms, AtomicMeasure, SignedDensity};
use crate::sdpsolver::{polish, solve_moment_problem, Admm, MomentSolution};

/// Environment variable naming the directory relative output paths live in.
pub const OUTPUT_ROOT_ENV: &str = "INVMEAS_OUTPUT_ROOT";

/// Output root from [`OUTPUT_ROOT_ENV`], defaulting to `./runs`.
pub fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}

/// Directory of a config's artifacts under `root`.
pub fn output_dir(config: &ExperimentConfig, root: &Path) -> PathBuf {
    if config.output.is_absolute() {
        config.output.clone()
    } else {
        root.join(&config.output)
    }
}

/// Measures recovered from the optimal moment vector.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Recovered {
    pub density: Option<SignedDensity>,
    pub atoms: Option<AtomicMeasure>,
    /// Why atom extraction failed, when it was requested.
    pub atoms_error: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MomentEstimate {
    /// Monomial exponents in original coordinates.
    pub exponents: Vec<u32>,
    pub predicted: f64,
    /// Average over the snapshot points.
    pub empirical: Option<f64>,
}

/// Summary of one pipeline run. Contains no wall-clock data, so identical
/// inputs give identical bytes.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunReport {
    pub name: String,
    pub system: String,
    pub snapshots: Option<usize>,
    pub k: u32,
    pub l: u32,
    pub objective: f64,
    pub status: String,
    pub iterations: usize,
    pub polished: bool,
    pub polish_error: Option<String>,
    pub min_psd_eigenvalue: f64,
    pub equality_residual: f64,
    pub fit_targets: Vec<f64>,
    pub moments: Vec<MomentEstimate>,
    /// `∫|R - R*|` against the arcsine law, for logistic densities.
    pub l1_cdf: Option<f64>,
    pub atoms: Option<Vec<(Vec<f64>, f64)>>,
    pub atoms_error: Option<String>,
    pub stage_hashes: BTreeMap<String, String>,
}

/// Everything a run produced.
#[derive(Clone, Debug)]
pub struct ArtifactBundle {
    pub dir: PathBuf,
    pub snapshots: Option<SnapshotSet>,
    pub lie: LieMatrix,
    pub problem: MomentProblem,
    pub solution: MomentSolution,
    pub recovered: Recovered,
    pub report: RunReport,
    /// Stages served from the cache.
    pub reused: Vec<String>,
    pub timings: BTreeMap<String, f64>,
}

/// Stage runner over one artifact directory.
pub struct Pipeline<'a> {
    pub config: &'a ExperimentConfig,
    pub store: ArtifactStore,
    pub hashes: BTreeMap<String, String>,
    pub timings: BTreeMap<String, f64>,
}

fn arcsine_cdf(x: f64) -> f64 {
    0.5 + x.clamp(-1.0, 1.0).asin() / std::f64::consts::PI
}

fn map_of(system: &SystemConfig) -> Option<Box<dyn DiscreteMap>> {
    match system {
        SystemConfig::Logistic => Some(Box::new(Logistic)),
        SystemConfig::TwoFixedPoint => Some(Box::new(TwoFixedPointMap)),
        _ => None,
    }
}

fn field_of(system: &SystemConfig) -> Option<Box<dyn VectorField>> {
    match *system {
        SystemConfig::DoubleWell { .. } => Some(Box::new(DoubleWell)),
        SystemConfig::Rossler { a, b, c } => Some(Box::new(Rossler { a, b, c })),
        _ => None,
    }
}

/// Generates (or loads) the snapshot set described by `config.data`.
pub fn generate_snapshots(config: &ExperimentConfig) -> Result<SnapshotSet> {
    let data = config
        .data
        .as_ref()
        .ok_or_else(|| Error::Config("no data section".into()))?;
    let system = &config.system;
    let domain = config.domain();
    match data {
        DataConfig::Orbit { x0, m } => {
            let f = map_of(system).ok_or_else(|| Error::Config("orbit data needs a map".into()))?;
            simulate_map(f.as_ref(), x0, *m, domain.unwrap(), system.name())
        }
        DataConfig::Sde {
            realizations,
            steps,
            tau,
            seed,
            init_box,
        } => {
            let SystemConfig::DoubleWell { sigma } = *system else {
                return Err(Error::Config("sde data needs the double-well system".into()));
            };
            let settings = SdeSettings {
                sigma,
                tau: *tau,
                steps: *steps,
                domain_box: domain.unwrap(),
                system: system.name().into(),
            };
            simulate_sde_ensemble(&DoubleWell, &settings, init_box, *realizations, *seed)
        }
        DataConfig::Ode { x0, t_end, tau, h } => {
            let f = field_of(system).ok_or_else(|| Error::Config("ode data needs a vector field".into()))?;
            let opts = OdeSampling {
                t_end: *t_end,
                tau: *tau,
                h: *h,
                domain_box: domain.unwrap(),
                system: system.name().into(),
            };
            Ok(integrate_ode(f.as_ref(), x0, &opts)?.0)
        }
        DataConfig::Section {
            x0,
            t_end,
            tau,
            h,
            coordinate,
            level,
            observed,
            range,
        } => {
            let f = field_of(system).ok_or_else(|| Error::Config("section data needs a vector field".into()))?;
            let mut section = PoincareSection::new(*coordinate, *level, *observed);
            section.observed_range = config.basis.domain.as_ref().map(|d| d[0]).or(*range);
            let crossings = stream_crossings(f.as_ref(), x0, *t_end, *tau, *h, &section)?;
            section_snapshots(&crossings, &section, system.name())
        }
        DataConfig::File { path } => SnapshotSet::load(path),
    }
}

/// Polynomial description of the configured system in `spec`'s family and box.
fn exact_lie(config: &ExperimentConfig, spec: &BasisSpec) -> Result<LieMatrix> {
    let (k, l) = (config.basis.k, config.basis.l);
    let low = spec.with_degree(3);
    match &config.system {
        SystemConfig::Logistic | SystemConfig::TwoFixedPoint => {
            let f = map_of(&config.system).unwrap();
            let sys = PolySystem::interpolate(&spec.with_degree(2), |x, o| f.apply(x, o));
            exact_lie_matrix(ExactSystem::Map(&sys.components), k, l, spec)
        }
        SystemConfig::DoubleWell { sigma } => {
            let sys = PolySystem::interpolate(&low, |x, o| DoubleWell.eval(x, o));
            let b = DMatrix::identity(2, 2) * *sigma;
            exact_lie_matrix(
                ExactSystem::Sde {
                    drift: &sys.components,
                    diffusion: &b,
                },
                k,
                l,
                spec,
            )
        }
        SystemConfig::Rossler { a, b, c } => {
            let r = Rossler { a: *a, b: *b, c: *c };
            let sys = PolySystem::interpolate(&spec.with_degree(2), |x, o| r.eval(x, o));
            exact_lie_matrix(ExactSystem::Ode(&sys.components), k, l, spec)
        }
    }
}

/// Index of each exponent vector in `spec`'s dictionary.
pub fn moment_indices(spec: &BasisSpec, exponents: &[Vec<u32>]) -> Result<Vec<usize>> {
    let set = spec.index_set();
    exponents
        .iter()
        .map(|e| {
            set.position_of(e)
                .ok_or_else(|| Error::Config(format!("moment {e:?} is not in the dictionary")))
        })
        .collect()
}

/// All monomial exponents of total degree 1 and 2 in `n` variables.
fn low_moments(n: usize) -> Vec<Vec<u32>> {
    let set = crate::polybasis::index_set(n, 2);
    set.into_iter().skip(1).map(|a| a.0).collect()
}

impl<'a> Pipeline<'a> {
    pub fn new(config: &'a ExperimentConfig, root: &Path) -> Result<Self> {
        config.validate()?;
        let dir = output_dir(config, root);
        let store = ArtifactStore::open(&dir)?;
        store.write_extra("config.toml", config.to_toml_string()?.as_bytes())?;
        Ok(Pipeline {
            config,
            store,
            hashes: BTreeMap::new(),
            timings: BTreeMap::new(),
        })
    }

    fn timed<T>(&mut self, stage: &str, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        let t = Instant::now();
        let out = f(self);
        self.timings.insert(stage.to_string(), t.elapsed().as_secs_f64());
        out
    }

    fn record(&mut self, stage: &str, hash: String) {
        self.hashes.insert(stage.to_string(), hash);
    }

    fn upstream(&self, stage: &str) -> String {
        self.hashes.get(stage).cloned().unwrap_or_default()
    }

    pub fn snapshots(&mut self) -> Result<Option<SnapshotSet>> {
        let Some(data) = self.config.data.clone() else {
            return Ok(None);
        };
        self.timed("snapshots", |p| {
            let extra = match &data {
                DataConfig::File { path } => sha256_hex(&std::fs::read(path)?),
                _ => String::new(),
            };
            let key = stage_key(
                "snapshots",
                &(&p.config.system, &data, &p.config.basis.domain),
                &extra,
            )?;
            if let Some(bytes) = p.store.cached("snapshots", &key) {
                let s = SnapshotSet::read_binary(bytes.as_slice())?;
                p.record("snapshots", sha256_hex(&bytes));
                return Ok(Some(s));
            }
            let s = generate_snapshots(p.config)?;
            if s.is_empty() {
                return Err(Error::NoCrossings);
            }
            let mut bytes = Vec::new();
            s.write_binary(&mut bytes)?;
            let h = p.store.put("snapshots", "snapshots.bin", &key, &bytes)?;
            p.record("snapshots", h);
            Ok(Some(s))
        })
        .map_err(|e| e.at_stage("snapshots"))
    }

    /// Dictionary of degree `l` on the data box (or the configured one).
    pub fn spec(&self, snaps: Option<&SnapshotSet>) -> Result<BasisSpec> {
        let domain = match (&self.config.basis.domain, snaps) {
            (Some(d), _) => d.clone(),
            (None, Some(s)) => s.domain_box.clone(),
            (None, None) => self
                .config
                .domain()
                .ok_or_else(|| Error::Config("cannot infer the domain".into()))?,
        };
        self.config.spec_for(domain)
    }

    pub fn lie(&mut self, snaps: Option<&SnapshotSet>) -> Result<LieMatrix> {
        let spec = self.spec(snaps).map_err(|e| e.at_stage("edmd"))?;
        self.timed("edmd", |p| {
            let cfg = p.config;
            let upstream = if cfg.edmd.exact {
                String::new()
            } else {
                p.upstream("snapshots")
            };
            let key = stage_key("edmd", &(&cfg.system, &cfg.basis, &cfg.edmd, &spec), &upstream)?;
            if let Some(bytes) = p.store.cached("edmd", &key) {
                p.record("edmd", sha256_hex(&bytes));
                return LieMatrix::read_json(bytes.as_slice());
            }
            let (k, l) = (cfg.basis.k, cfg.basis.l);
            let lie = if cfg.edmd.exact {
                exact_lie(cfg, &spec)?
            } else {
                let s = snaps.ok_or_else(|| Error::Config("data-driven EDMD needs snapshots".into()))?;
                let raw = edmd(s, k, l, &spec, cfg.edmd.path)?;
                match cfg.edmd.threshold {
                    Some(cut) => {
                        let gram = GramData::from_snapshots(s, k, l, &spec)?;
                        threshold_refine(&raw, &gram, cut, cfg.edmd.max_rounds)?
                    }
                    None => raw,
                }
            };
            let mut bytes = Vec::new();
            lie.write_json(&mut bytes)?;
            let h = p.store.put("edmd", "lie.json", &key, &bytes)?;
            p.record("edmd", h);
            Ok(lie)
        })
        .map_err(|e| e.at_stage("edmd"))
    }

    /// Objective of the configured kind; fit targets default to data moments.
    pub fn objective(&self, spec: &BasisSpec, snaps: Option<&SnapshotSet>) -> Result<(Objective, Vec<f64>)> {
        let Some(o) = &self.config.objective else {
            return Ok((Objective::Linear { c: vec![] }, vec![]));
        };
        let idx = moment_indices(spec, &o.moments)?;
        match o.kind {
            ObjectiveKind::Linear => {
                let mut c = vec![0.0; spec.size()];
                for (i, v) in idx.iter().zip(&o.coefficients) {
                    c[*i] += v;
                }
                Ok((Objective::Linear { c }, vec![]))
            }
            ObjectiveKind::Fit | ObjectiveKind::RelativeFit => {
                let values = match &o.values {
                    Some(v) => v.clone(),
                    None => {
                        let s = snaps.ok_or_else(|| Error::Config("empirical targets need data".into()))?;
                        let emp = empirical_moments(s, &spec.with_degree(self.config.basis.k))?;
                        idx.iter().map(|&i| emp[i]).collect()
                    }
                };
                let pairs: Vec<(usize, f64)> = idx.iter().copied().zip(values.iter().copied()).collect();
                let obj = if o.kind == ObjectiveKind::Fit {
                    Objective::fit(&pairs)
                } else {
                    Objective::relative_fit(&pairs)
                };
                Ok((obj, values))
            }
        }
    }

    pub fn problem(&mut self, lie: &LieMatrix, snaps: Option<&SnapshotSet>) -> Result<(MomentProblem, Vec<f64>)> {
        self.timed("assemble", |p| {
            let (objective, targets) = p.objective(&lie.spec, snaps)?;
            let upstream = format!("{}{}", p.upstream("edmd"), p.upstream("snapshots"));
            let key = stage_key("assemble", &(&objective, &p.config.basis.family), &upstream)?;
            if let Some(bytes) = p.store.cached("assemble", &key) {
                p.record("assemble", sha256_hex(&bytes));
                return Ok((MomentProblem::read_json(bytes.as_slice())?, targets));
            }
            let domain = SemialgebraicSet::from_box(&lie.spec);
            let problem = assemble_problem(lie, &domain, objective)?;
            let mut bytes = Vec::new();
            problem.write_json(&mut bytes)?;
            let h = p.store.put("assemble", "problem.json", &key, &bytes)?;
            p.record("assemble", h);
            Ok((problem, targets))
        })
        .map_err(|e| e.at_stage("assemble"))
    }

    pub fn solve(&mut self, problem: &MomentProblem) -> Result<(MomentSolution, Option<String>)> {
        self.timed("solve", |p| {
            let cfg = &p.config.solver;
            let settings = p.config.solver_settings();
            let key = stage_key("solve", &(&settings, cfg.polish, &cfg.polish_settings), &p.upstream("assemble"))?;
            if let Some(bytes) = p.store.cached("solve", &key) {
                p.record("solve", sha256_hex(&bytes));
                let (sol, err): (MomentSolution, Option<String>) = serde_json::from_slice(&bytes)?;
                return Ok((sol, err));
            }
            let mut sol = solve_moment_problem(problem, &Admm(settings))?;
            let mut polish_error = None;
            if cfg.polish {
                match polish(problem, &sol.y, &cfg.polish_settings) {
                    Ok(better) => sol = better,
                    Err(e) => polish_error = Some(e.to_string()),
                }
            }
            sol.report.wall_time = 0.0;
            let bytes = serde_json::to_vec(&(&sol, &polish_error))?;
            let h = p.store.put("solve", "solution.json", &key, &bytes)?;
            p.record("solve", h);
            Ok((sol, polish_error))
        })
        .map_err(|e| e.at_stage("solve"))
    }

    pub fn recover(&mut self, solution: &MomentSolution, spec: &BasisSpec) -> Result<Recovered> {
        self.timed("recover", |p| {
            let cfg = &p.config.recovery;
            let key = stage_key("recover", &(cfg, p.config.basis.k), &p.upstream("solve"))?;
            if let Some(bytes) = p.store.cached("recover", &key) {
                p.record("recover", sha256_hex(&bytes));
                return Ok(serde_json::from_slice(&bytes)?);
            }
            let mut out = Recovered::default();
            if cfg.density {
                let r = cfg.degree.unwrap_or(p.config.basis.k);
                out.density = Some(density_from_moments(&solution.y, r, spec)?);
            }
            if cfg.atoms {
                match extract_atoms(&solution.y, spec, cfg.rank_tol) {
                    Ok(a) => out.atoms = Some(a),
                    Err(e) => out.atoms_error = Some(e.to_string()),
                }
            }
            let bytes = serde_json::to_vec(&out)?;
            let h = p.store.put("recover", "recovered.json", &key, &bytes)?;
            p.record("recover", h);
            Ok(out)
        })
        .map_err(|e| e.at_stage("recover"))
    }
}

/// Runs every stage, re-using artifacts whose inputs are unchanged.
pub fn run_pipeline(config: &ExperimentConfig, root: &Path) -> Result<ArtifactBundle> {
    let mut p = Pipeline::new(config, root)?;
    let snaps = p.snapshots()?;
    let lie = p.lie(snaps.as_ref())?;
    let spec = lie.spec.clone();
    let (problem, targets) = p.problem(&lie, snaps.as_ref())?;
    let (solution, polish_error) = p.solve(&problem)?;
    let recovered = p.recover(&solution, &spec)?;

    let report = (|| -> Result<RunReport> {
        let n = spec.dimension;
        let mono = BasisSpec::new(crate::polybasis::BasisFamily::Monomial, n, 2, spec.domain_box.clone())?;
        let moment_y = crate::recovery::Measure::Moments {
            spec: spec.clone(),
            y: solution.y.clone(),
        };
        let mut moments = Vec::new();
        for e in low_moments(n) {
            let g = PolyCoeffs::interpolate(spec.with_degree(2), |x| {
                x.iter().zip(&e).map(|(v, &p)| v.powi(p as i32)).product()
            });
            let predicted = crate::recovery::expectation(&moment_y, &g)?;
            let empirical = snaps.as_ref().map(|s| {
                let pos = mono.index_set().position_of(&e).unwrap();
                empirical_moments(s, &mono).map(|m| m[pos]).unwrap_or(f64::NAN)
            });
            moments.push(MomentEstimate {
                exponents: e,
                predicted,
                empirical,
            });
        }
        let l1_cdf = match (&config.system, &recovered.density) {
            (SystemConfig::Logistic, Some(d)) if d.spec().domain_box == vec![(-1.0, 1.0)] => {
                Some(cdf_and_l1(d, &arcsine_cdf)?)
            }
            _ => None,
        };
        Ok(RunReport {
            name: config.name.clone(),
            system: config.system.name().into(),
            snapshots: snaps.as_ref().map(|s| s.len()),
            k: config.basis.k,
            l: config.basis.l,
            objective: solution.objective,
            status: format!("{:?}", solution.report.status),
            iterations: solution.report.iterations,
            polished: config.solver.polish && polish_error.is_none(),
            polish_error: polish_error.clone(),
            min_psd_eigenvalue: solution.min_psd_eigenvalue,
            equality_residual: solution.equality_residual,
            fit_targets: targets.clone(),
            moments,
            l1_cdf,
            atoms: recovered
                .atoms
                .as_ref()
                .map(|a| a.atoms.iter().map(|t| (t.point.clone(), t.weight)).collect()),
            atoms_error: recovered.atoms_error.clone(),
            stage_hashes: p.hashes.clone(),
        })
    })()
    .map_err(|e| e.at_stage("report"))?;

    p.store
        .write_extra("report.json", &serde_json::to_vec_pretty(&report)?)?;
    if let (Some(res), Some(d)) = (config.recovery.grid, &recovered.density) {
        p.store.write_extra("density_grid.csv", density_grid_csv(d, res)?.as_bytes())?;
    }
    p.store
        .write_extra("timings.json", &serde_json::to_vec_pretty(&p.timings)?)?;
    Ok(ArtifactBundle {
        dir: p.store.dir().to_path_buf(),
        snapshots: snaps,
        lie,
        problem,
        solution,
        recovered,
        report,
        reused: p.store.reused.clone(),
        timings: p.timings.clone(),
    })
}

/// Settings of a UPO hunt from a config with section data.
pub fn hunt_settings(config: &ExperimentConfig) -> HuntSettings {
    let upo = config.upo.clone().unwrap_or_default();
    let mut s = HuntSettings::new(config.basis.k, config.basis.l);
    s.family = config.basis.family;
    s.objectives = upo.objectives;
    s.seed = upo.seed;
    s.period_cap = upo.period_cap;
    s.rank_tol = config.recovery.rank_tol;
    s.solver = config.solver_settings();
    s.polish = config.solver.polish.then(|| config.solver.polish_settings.clone());
    s.shooting = (&upo.shooting).into();
    s
}

/// Generates (or re-uses) section data and runs [`upo_hunt`] on it, writing
/// `catalog.json` and `diagonal.csv`.
pub fn run_upo(config: &ExperimentConfig, root: &Path) -> Result<(UpoCatalog, PathBuf)> {
    let Some(DataConfig::Section {
        coordinate,
        level,
        observed,
        ..
    }) = &config.data
    else {
        return Err(Error::Config("upo hunts need section data".into()));
    };
    let field = field_of(&config.system).ok_or_else(|| Error::Config("upo hunts need a vector field".into()))?;
    let mut p = Pipeline::new(config, root)?;
    let snaps = p.snapshots()?.expect("section data present");
    let section = PoincareSection::new(*coordinate, *level, *observed);
    let settings = hunt_settings(config);
    let t = Instant::now();
    let catalog = upo_hunt(field.as_ref(), &section, &snaps, &settings).map_err(|e| e.at_stage("upo"))?;
    p.timings.insert("upo".into(), t.elapsed().as_secs_f64());
    p.store
        .write_extra("catalog.json", &serde_json::to_vec_pretty(&catalog)?)?;
    let mut csv = String::from("n,x_i,x_i_plus_n\n");
    for (n, pairs) in &catalog.diagonal {
        for (a, b) in pairs {
            csv.push_str(&format!("{n},{a},{b}\n"));
        }
    }
    p.store.write_extra("diagonal.csv", csv.as_bytes())?;
    p.store
        .write_extra("timings.json", &serde_json::to_vec_pretty(&p.timings)?)?;
    Ok((catalog, p.store.dir().to_path_buf()))
}
