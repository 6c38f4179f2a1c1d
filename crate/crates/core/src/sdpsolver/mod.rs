//! First-order conic solver for zero, nonnegative, second-order and
//! semidefinite cones.

mod admm;
mod center;
mod cones;
mod standard;

pub use admm::{solve, solve_warm, ConicSolution, SolveReport, SolveStatus, SolverSettings, WarmStart};
pub use center::{polish, PolishSettings};
pub use cones::{psd_project, smat, svec, svec_index, Cone};
pub use standard::{to_standard_form, ConicStandardForm, CsrMatrix};

use std::path::PathBuf;
use std::process::Command;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::momentsdp::MomentProblem;

/// Anything that can solve a [`ConicStandardForm`].
pub trait ConicSolver: Sync {
    fn solve(&self, form: &ConicStandardForm) -> Result<ConicSolution>;
}

/// The embedded ADMM solver.
#[derive(Clone, Debug, Default)]
pub struct Admm(pub SolverSettings);

impl ConicSolver for Admm {
    fn solve(&self, form: &ConicStandardForm) -> Result<ConicSolution> {
        solve(form, &self.0)
    }
}

/// An external program invoked as `program [args..] input.json output.json`.
/// The input is a serialized [`ConicStandardForm`]; the output must be a JSON
/// object with arrays `x`, `s` and `y` in the conventions of
/// [`ConicSolution`].
#[derive(Clone, Debug)]
pub struct ExternalSolver {
    pub program: PathBuf,
    pub args: Vec<String>,
    pub work_dir: PathBuf,
}

#[derive(Deserialize, Serialize)]
struct ExternalOutput {
    x: Vec<f64>,
    s: Vec<f64>,
    y: Vec<f64>,
}

impl ConicSolver for ExternalSolver {
    fn solve(&self, form: &ConicStandardForm) -> Result<ConicSolution> {
        let start = std::time::Instant::now();
        std::fs::create_dir_all(&self.work_dir)?;
        let input = self.work_dir.join("conic-input.json");
        let output = self.work_dir.join("conic-output.json");
        serde_json::to_writer(std::fs::File::create(&input)?, form)?;
        let status = Command::new(&self.program)
            .args(&self.args)
            .arg(&input)
            .arg(&output)
            .status()?;
        if !status.success() {
            return Err(Error::NumericalBreakdown(format!("external solver exited with {status}")));
        }
        let out: ExternalOutput = serde_json::from_reader(std::fs::File::open(&output)?)?;
        if out.x.len() != form.n() || out.s.len() != form.m() || out.y.len() != form.m() {
            return Err(Error::Format("external solution has wrong dimensions".into()));
        }
        let mut ax = vec![0.0; form.m()];
        form.a.mul_vec(&out.x, &mut ax);
        let primal = (0..form.m()).map(|i| (ax[i] + out.s[i] - form.b[i]).abs()).fold(0.0, f64::max);
        let mut aty = vec![0.0; form.n()];
        form.a.tmul_vec(&out.y, &mut aty);
        let dual = (0..form.n()).map(|j| (form.c[j] - aty[j]).abs()).fold(0.0, f64::max);
        let objective: f64 = form.c.iter().zip(&out.x).map(|(a, b)| a * b).sum();
        let dobj: f64 = form.b.iter().zip(&out.y).map(|(a, b)| a * b).sum();
        Ok(ConicSolution {
            report: SolveReport {
                status: SolveStatus::Optimal,
                primal_residual: primal,
                dual_residual: dual,
                gap: (objective - dobj).abs(),
                objective,
                iterations: 0,
                wall_time: start.elapsed().as_secs_f64(),
                rho_updates: 0,
            },
            x: out.x,
            s: out.s,
            y: out.y,
        })
    }
}

/// Solution of a [`MomentProblem`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MomentSolution {
    /// Optimal moment vector.
    pub y: Vec<f64>,
    /// Value of the problem's own objective at `y` (the quadratic value for
    /// moment fits).
    pub objective: f64,
    /// Smallest eigenvalue over the PSD blocks at `y`.
    pub min_psd_eigenvalue: f64,
    pub equality_residual: f64,
    pub report: SolveReport,
}

/// Converts, solves and maps the solution back to moments.
pub fn solve_moment_problem(problem: &MomentProblem, solver: &dyn ConicSolver) -> Result<MomentSolution> {
    let form = to_standard_form(problem)?;
    let sol = solver.solve(&form)?;
    let lx = problem.lx();
    let u = &sol.x[..problem.n_vars];
    Ok(MomentSolution {
        y: sol.x[..lx].to_vec(),
        objective: problem.objective.value(u),
        min_psd_eigenvalue: problem.min_psd_eigenvalue(u),
        equality_residual: problem.equality_residual(u),
        report: sol.report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::PolySystem;
    use crate::edmd::{exact_lie_matrix, ExactSystem};
    use crate::momentsdp::{assemble_problem, EqualityBlock, Objective, SemialgebraicSet};
    use crate::polybasis::{BasisFamily, BasisSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn counterexample(objective: Objective) -> MomentProblem {
        let spec = BasisSpec::new(BasisFamily::Monomial, 1, 2, vec![(0.0, 1.0)]).unwrap();
        let f = PolySystem::interpolate(&spec.with_degree(2), |x, o| o[0] = 2.0 * x[0] - x[0] * x[0]);
        let lie = exact_lie_matrix(ExactSystem::Map(&f.components), 1, 2, &spec).unwrap();
        assemble_problem(&lie, &SemialgebraicSet::from_box(&spec), objective).unwrap()
    }

    #[test]
    fn counterexample_form_layout() {
        let form = to_standard_form(&counterexample(Objective::Linear { c: vec![0.0, -1.0] })).unwrap();
        assert_eq!(form.cones, vec![Cone::Zero(2), Cone::Psd(2), Cone::NonNeg(1)]);
        assert_eq!(form.m(), 6);
    }

    #[test]
    fn counterexample_optimum() {
        let p = counterexample(Objective::Linear { c: vec![0.0, -1.0] });
        let sol = solve_moment_problem(&p, &Admm(SolverSettings::for_dimension(1))).unwrap();
        assert_eq!(sol.report.status, SolveStatus::Optimal);
        for v in &sol.y {
            assert!((v - 1.0).abs() < 1e-6, "{:?}", sol.y);
        }
        assert!((sol.objective + 1.0).abs() < 1e-6);
        assert!(sol.min_psd_eigenvalue > -1e-6);
    }

    #[test]
    fn pure_lp_form() {
        let p = MomentProblem {
            psd_blocks: vec![],
            ..counterexample(Objective::Linear { c: vec![0.0, 1.0] })
        };
        let form = to_standard_form(&p).unwrap();
        assert_eq!(form.cones, vec![Cone::Zero(2)]);
    }

    /// LP built from a KKT certificate: `x*` and the multipliers are chosen
    /// first, then `c` is set so they are optimal.
    #[test]
    fn random_lp_with_known_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let (n, me, mi) = (6, 2, 8);
            let xstar: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let a: Vec<Vec<f64>> = (0..me + mi)
                .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            // first half of the inequalities active, rest with slack
            let mut trip = Vec::new();
            let mut b = Vec::new();
            for (i, row) in a.iter().enumerate() {
                let ax: f64 = row.iter().zip(&xstar).map(|(p, q)| p * q).sum();
                let slack = if i < me + mi / 2 { 0.0 } else { rng.random_range(0.5..1.0) };
                b.push(ax + slack);
                for (j, v) in row.iter().enumerate() {
                    trip.push((i, j, *v));
                }
            }
            // dual y in the polar cone: free on equalities, <= 0 on active rows
            let mut yd = vec![0.0; me + mi];
            for (i, v) in yd.iter_mut().enumerate().take(me + mi / 2) {
                *v = if i < me { rng.random_range(-1.0..1.0) } else { -rng.random_range(0.2..1.0) };
            }
            let c: Vec<f64> = (0..n).map(|j| (0..me + mi).map(|i| a[i][j] * yd[i]).sum()).collect();
            let form = ConicStandardForm {
                a: CsrMatrix::from_triplets(me + mi, n, &trip),
                b,
                c: c.clone(),
                cones: vec![Cone::Zero(me), Cone::NonNeg(mi)],
            };
            let sol = solve(&form, &SolverSettings::for_dimension(1)).unwrap();
            assert_eq!(sol.report.status, SolveStatus::Optimal);
            let opt: f64 = c.iter().zip(&xstar).map(|(p, q)| p * q).sum();
            assert!((sol.report.objective - opt).abs() < 1e-7, "{} {}", sol.report.objective, opt);
        }
    }

    #[test]
    fn feasibility_problem_returns_feasible_point() {
        let spec = BasisSpec::chebyshev_unit(1, 10);
        let f = PolySystem::interpolate(&spec.with_degree(2), |x, o| o[0] = 2.0 * x[0] * x[0] - 1.0);
        let lie = exact_lie_matrix(ExactSystem::Map(&f.components), 5, 10, &spec).unwrap();
        let p = assemble_problem(&lie, &SemialgebraicSet::from_box(&spec), Objective::Linear { c: vec![] }).unwrap();
        let sol = solve_moment_problem(&p, &Admm(SolverSettings::for_dimension(1))).unwrap();
        assert_eq!(sol.report.status, SolveStatus::Optimal);
        assert!(sol.equality_residual < 1e-7);
        assert!(sol.min_psd_eigenvalue > -1e-6);
    }

    #[test]
    fn moment_fit_with_empty_targets() {
        let p = counterexample(Objective::MomentFit { targets: vec![] });
        let sol = solve_moment_problem(&p, &Admm(SolverSettings::for_dimension(1))).unwrap();
        assert!(sol.objective.abs() < 1e-12);
        let form = to_standard_form(&p).unwrap();
        let raw = solve(&form, &SolverSettings::for_dimension(1)).unwrap();
        assert!(raw.x[3].abs() < 1e-6);
    }

    #[test]
    fn logistic_linear_objective_finds_fixed_point() {
        let spec = BasisSpec::chebyshev_unit(1, 20);
        let f = PolySystem::interpolate(&spec.with_degree(2), |x, o| o[0] = 2.0 * x[0] * x[0] - 1.0);
        let lie = exact_lie_matrix(ExactSystem::Map(&f.components), 10, 20, &spec).unwrap();
        let p = assemble_problem(&lie, &SemialgebraicSet::from_box(&spec), Objective::Linear { c: vec![0.0, 1.0] })
            .unwrap();
        let sol = solve_moment_problem(&p, &Admm(SolverSettings::for_dimension(1))).unwrap();
        assert_eq!(sol.report.status, SolveStatus::Optimal);
        // moments of the Dirac at -1/2: T_j(-1/2) = cos(2 pi j / 3)
        for (j, v) in sol.y.iter().enumerate() {
            let want = (2.0 * std::f64::consts::PI * j as f64 / 3.0).cos();
            assert!((v - want).abs() < 1e-5, "j={j} {v} {want}");
        }
    }

    #[test]
    fn solves_are_deterministic() {
        let p = counterexample(Objective::Linear { c: vec![0.0, -1.0] });
        let form = to_standard_form(&p).unwrap();
        let a = solve(&form, &SolverSettings::default()).unwrap();
        let b = solve(&form, &SolverSettings::default()).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.report.iterations, b.report.iterations);
        let _ = EqualityBlock::default();
    }
}
