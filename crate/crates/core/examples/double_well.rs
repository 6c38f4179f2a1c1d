//! Stationary Chebyshev expectations of the stochastic double-well system
//! from one Euler-Maruyama realization, against quadrature of the exact
//! density. Pass a step count to change the data size.

use invmeas::pipeline::replicate::{double_well_config, replicate_doublewell};
use invmeas::pipeline::{density_grid_csv, run_pipeline, table_report};

fn main() -> invmeas::Result<()> {
    let steps = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(200_000);
    let dir = tempfile::tempdir()?;
    let cfg = double_well_config(steps, 10, 12, 1);
    let t = replicate_doublewell(&cfg, dir.path())?;
    print!("{}", table_report(&[t.table()], false));

    let b = run_pipeline(&cfg, dir.path())?;
    let grid = density_grid_csv(b.recovered.density.as_ref().expect("density"), 41)?;
    println!("density grid: {} rows, reused stages {:?}", grid.lines().count() - 1, b.reused);
    Ok(())
}
