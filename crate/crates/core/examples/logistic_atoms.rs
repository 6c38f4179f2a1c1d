//! Linear objectives on logistic orbit data select ergodic measures on
//! periodic orbits, which are read off as atoms.

use invmeas::dynamics::{simulate_map, Logistic};
use invmeas::edmd::{edmd, EdmdPath};
use invmeas::momentsdp::{assemble_problem, Objective, SemialgebraicSet};
use invmeas::polybasis::BasisSpec;
use invmeas::recovery::{extract_atoms, DEFAULT_RANK_TOL};
use invmeas::sdpsolver::{solve_moment_problem, Admm, SolverSettings};

fn main() -> invmeas::Result<()> {
    let snaps = simulate_map(&Logistic, &[0.25], 10_000, vec![(-1.0, 1.0)], "logistic")?;
    let k = 10;
    let spec = BasisSpec::chebyshev_unit(1, 2 * k);
    let lie = edmd(&snaps, k, 2 * k, &spec, EdmdPath::Auto)?;
    for j in [1, 3, 5] {
        let mut c = vec![0.0; spec.with_degree(k).size()];
        c[j] = 1.0;
        let problem = assemble_problem(&lie, &SemialgebraicSet::from_box(&spec), Objective::Linear { c })?;
        let sol = solve_moment_problem(&problem, &Admm(SolverSettings::for_dimension(1)))?;
        match extract_atoms(&sol.y, &spec, DEFAULT_RANK_TOL) {
            Ok(m) => {
                println!("minimize y{j}: {:.6}", sol.objective);
                for a in &m.atoms {
                    println!("    atom {:+.5}  weight {:.4}", a.point[0], a.weight);
                }
            }
            Err(e) => println!("minimize y{j}: no atoms ({e})"),
        }
    }
    Ok(())
}
