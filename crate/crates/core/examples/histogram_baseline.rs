//! Monomial moments of the logistic invariant measure predicted by the
//! recovered density and by a 101-bin histogram of the same orbit.

use invmeas::pipeline::replicate::replicate_table2;
use invmeas::pipeline::table_report;

fn main() -> invmeas::Result<()> {
    let dir = tempfile::tempdir()?;
    let t = replicate_table2(1000, 20, 101, &[2, 4, 6, 8, 10, 20, 30, 40], dir.path())?;
    print!("{}", table_report(&[t.table()], false));
    Ok(())
}
