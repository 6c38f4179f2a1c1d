//! Periodic orbits of the Rossler system from Poincare return-map data:
//! randomized linear objectives, atom extraction, and multiple shooting.
//! Argument: number of objectives.

use invmeas::pipeline::replicate::rossler_upo_config;
use invmeas::pipeline::run_upo;

fn main() -> invmeas::Result<()> {
    let objectives = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(40);
    let dir = tempfile::tempdir()?;
    let (catalog, _) = run_upo(&rossler_upo_config(5000.0, 20, 80, objectives), dir.path())?;
    println!(
        "{} section pairs, {} distinct supports, {} rejected cycles",
        catalog.diagonal[0].1.len(),
        catalog.supports.len(),
        catalog.rejected.len()
    );
    for e in &catalog.orbits {
        println!(
            "period {:2}  T = {:9.5}  closure {:.1e}  x2 at crossings {:.4?}",
            e.orbit.period, e.orbit.t_period, e.closure_residual, e.orbit.section_points
        );
    }
    Ok(())
}
