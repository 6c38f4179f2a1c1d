//! Runs the staged pipeline from a TOML configuration twice; the second run
//! loads every stage from the artifact cache.

use invmeas::pipeline::{run_pipeline, ExperimentConfig};

const CONFIG: &str = r#"
name = "logistic-demo"
output = "logistic-demo"

[system]
kind = "logistic"

[data]
kind = "orbit"
x0 = [0.25]
m = 5000

[basis]
k = 8
l = 16

[objective]
kind = "fit"
moments = [[1]]

[solver]
polish = true

[recovery]
grid = 21
"#;

fn main() -> invmeas::Result<()> {
    let cfg = ExperimentConfig::from_toml_str(CONFIG)?;
    let dir = tempfile::tempdir()?;
    let first = run_pipeline(&cfg, dir.path())?;
    println!("first run: L1 = {:.5}, reused {:?}", first.report.l1_cdf.unwrap_or(f64::NAN), first.reused);
    let second = run_pipeline(&cfg, dir.path())?;
    println!("second run: reused {:?}", second.reused);
    for f in ["manifest.json", "report.json", "density_grid.csv"] {
        println!("{f}: {} bytes", std::fs::metadata(second.dir.join(f))?.len());
    }
    Ok(())
}
