//! Assembles and solves the moment problem of `x -> 2x - x^2` on `[0, 1]`
//! by hand: monomials, k = 1, l = 2, minimizing `-y_1`.

use invmeas::dynamics::PolySystem;
use invmeas::edmd::{exact_lie_matrix, ExactSystem};
use invmeas::momentsdp::{assemble_problem, Objective, SemialgebraicSet};
use invmeas::polybasis::{BasisFamily, BasisSpec};
use invmeas::sdpsolver::{solve_moment_problem, Admm, SolverSettings};

fn main() -> invmeas::Result<()> {
    let spec = BasisSpec::new(BasisFamily::Monomial, 1, 2, vec![(0.0, 1.0)])?;
    let map = PolySystem::interpolate(&spec, |x, out| out[0] = 2.0 * x[0] - x[0] * x[0]);
    let lie = exact_lie_matrix(ExactSystem::Map(&map.components), 1, 2, &spec)?;
    println!("A =\n{}", lie.entries);

    let domain = SemialgebraicSet::from_box(&spec);
    let problem = assemble_problem(&lie, &domain, Objective::Linear { c: vec![0.0, -1.0] })?;
    let sol = solve_moment_problem(&problem, &Admm(SolverSettings::for_dimension(1)))?;
    println!(
        "status {:?} after {} iterations: y = {:?}, objective {:.8}",
        sol.report.status, sol.report.iterations, sol.y, sol.objective
    );
    Ok(())
}
