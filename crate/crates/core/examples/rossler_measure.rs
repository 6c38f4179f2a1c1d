//! Physical measure of the Rossler attractor from a short trajectory,
//! checked against long-time averages of all moments up to degree 2.
//! Arguments: data length and reference length in time units.

use invmeas::pipeline::replicate::{replicate_rossler_measure, rossler_measure_config};
use invmeas::pipeline::table_report;

fn main() -> invmeas::Result<()> {
    let mut args = std::env::args().skip(1).map(|s| s.parse::<f64>().ok());
    let t_end = args.next().flatten().unwrap_or(1000.0);
    let reference = args.next().flatten().unwrap_or(1e4);
    let dir = tempfile::tempdir()?;
    let m = replicate_rossler_measure(&rossler_measure_config(t_end), reference, dir.path())?;
    print!("{}", table_report(&[m.table()], false));
    Ok(())
}
