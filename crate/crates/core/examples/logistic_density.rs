//! Signed densities of the logistic map `x -> 2x^2 - 1` from the exact Lie
//! matrix and from orbit data, compared with the arcsine law by the L1
//! distance between CDFs.

use invmeas::dynamics::{empirical_moments, simulate_map, Logistic};
use invmeas::edmd::{edmd, exact_lie_matrix, EdmdPath, ExactSystem};
use invmeas::momentsdp::{assemble_problem, Objective, SemialgebraicSet};
use invmeas::polybasis::{BasisSpec, PolyCoeffs};
use invmeas::recovery::{cdf_and_l1, density_from_moments};
use invmeas::sdpsolver::{polish, solve_moment_problem, Admm, PolishSettings, SolverSettings};

fn arcsine_cdf(x: f64) -> f64 {
    0.5 + x.clamp(-1.0, 1.0).asin() / std::f64::consts::PI
}

fn main() -> invmeas::Result<()> {
    let k = 10;
    let spec = BasisSpec::chebyshev_unit(1, 2 * k);
    let map = PolyCoeffs::interpolate(spec.with_degree(2), |x| 2.0 * x[0] * x[0] - 1.0);
    let exact = exact_lie_matrix(ExactSystem::Map(&[map]), k, 2 * k, &spec)?;

    let snaps = simulate_map(&Logistic, &[0.25], 10_000, vec![(-1.0, 1.0)], "logistic")?;
    let data = edmd(&snaps, k, 2 * k, &spec, EdmdPath::Auto)?;
    let ytil = empirical_moments(&snaps, &spec.with_degree(1))?[1];
    println!("empirical first moment {ytil:.5}");

    for (label, lie, target) in [("exact", &exact, 0.0), ("data", &data, ytil)] {
        let problem = assemble_problem(lie, &SemialgebraicSet::from_box(&spec), Objective::fit(&[(1, target)]))?;
        let raw = solve_moment_problem(&problem, &Admm(SolverSettings::for_dimension(1)))?;
        let sol = polish(&problem, &raw.y, &PolishSettings::default())?;
        let rho = density_from_moments(&sol.y, k, &spec)?;
        let l1 = cdf_and_l1(&rho, &arcsine_cdf)?;
        println!("{label:>5}: k = {k}, L1 CDF error {l1:.5}, density at 0: {:.4}", rho.eval(&[0.0])?);
    }
    Ok(())
}
