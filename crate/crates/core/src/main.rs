use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use invmeas::pipeline::replicate::*;
use invmeas::pipeline::{output_root, run_pipeline, run_upo, table_report, ExperimentConfig, Pipeline, Table};
use invmeas::{Error, Result};

#[derive(Parser)]
#[command(name = "invmeas", version, about = "Invariant measures from snapshot data")]
struct Cli {
    /// Output root; overrides INVMEAS_OUTPUT_ROOT.
    #[arg(long, global = true)]
    output_root: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Experiment configuration (TOML).
    config: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate snapshot data.
    Simulate(ConfigArg),
    /// Approximate the Lie derivative matrix.
    Edmd(ConfigArg),
    /// Assemble the moment problem.
    Assemble(ConfigArg),
    /// Solve the moment problem.
    Solve(ConfigArg),
    /// Run every stage and recover the measure.
    Recover(ConfigArg),
    /// Run every stage and extract an atomic measure.
    Atoms(ConfigArg),
    /// Hunt periodic orbits on section data.
    Upo(ConfigArg),
    /// CDF errors of the logistic map for exact and data-driven Lie matrices.
    ReplicateTable1 {
        #[arg(long, value_delimiter = ',', default_values_t = [5u32, 10, 15, 20, 25])]
        ks: Vec<u32>,
        #[arg(long, value_delimiter = ',', default_values_t = [100usize, 1000, 10000, 100000])]
        ms: Vec<usize>,
        /// Also print the moment-error table for this orbit length.
        #[arg(long, default_value_t = 1000)]
        table2_m: usize,
    },
    /// Chebyshev expectations of the stochastic double-well system.
    ReplicateDoublewell {
        #[arg(long, default_value_t = 500_000)]
        steps: usize,
        #[arg(long, default_value_t = 10)]
        k: u32,
        #[arg(long, default_value_t = 12)]
        l: u32,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Full-scale data (5e6 steps).
        #[arg(long)]
        full: bool,
    },
    /// Rossler physical measure and periodic orbits.
    ReplicateRossler {
        #[arg(long, default_value_t = 1000.0)]
        t_end: f64,
        #[arg(long, default_value_t = 1e5)]
        reference_t_end: f64,
        #[arg(long, default_value_t = 5000.0)]
        section_t_end: f64,
        #[arg(long, default_value_t = 200)]
        objectives: usize,
        /// Full-scale sweep (1000 objectives, reference averages to 1e6).
        #[arg(long)]
        full: bool,
        #[arg(long)]
        skip_measure: bool,
        #[arg(long)]
        skip_upo: bool,
    },
}

fn load(c: &ConfigArg) -> Result<ExperimentConfig> {
    ExperimentConfig::load(&c.config)
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn print_tables(name: &str, tables: &[Table], root: &Path) -> Result<()> {
    let dir = write_tables(name, tables, root)?;
    print!("{}", table_report(tables, false));
    eprintln!("tables written to {}", dir.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let root = cli.output_root.unwrap_or_else(output_root);
    match cli.command {
        Command::Simulate(c) => {
            let cfg = load(&c)?;
            let mut p = Pipeline::new(&cfg, &root)?;
            let s = p.snapshots()?.ok_or_else(|| Error::Config("config has no data section".into()))?;
            println!("{} snapshots in {}", s.len(), p.store.dir().display());
        }
        Command::Edmd(c) => {
            let cfg = load(&c)?;
            let mut p = Pipeline::new(&cfg, &root)?;
            let s = p.snapshots()?;
            let lie = p.lie(s.as_ref())?;
            println!("L: {}x{}, rank {:?}, {} nonzeros", lie.kx(), lie.lx(), lie.rank, lie.nnz());
        }
        Command::Assemble(c) => {
            let cfg = load(&c)?;
            let mut p = Pipeline::new(&cfg, &root)?;
            let s = p.snapshots()?;
            let lie = p.lie(s.as_ref())?;
            let (problem, _) = p.problem(&lie, s.as_ref())?;
            println!(
                "{} variables, {} equalities, {} psd blocks",
                problem.n_vars,
                problem.equalities.rhs.len(),
                problem.psd_blocks.len()
            );
        }
        Command::Solve(c) => {
            let cfg = load(&c)?;
            let mut p = Pipeline::new(&cfg, &root)?;
            let s = p.snapshots()?;
            let lie = p.lie(s.as_ref())?;
            let (problem, _) = p.problem(&lie, s.as_ref())?;
            let (sol, polish_error) = p.solve(&problem)?;
            print_json(&sol.report)?;
            if let Some(e) = polish_error {
                eprintln!("polish failed: {e}");
            }
        }
        Command::Recover(c) => {
            let b = run_pipeline(&load(&c)?, &root)?;
            print_json(&b.report)?;
        }
        Command::Atoms(c) => {
            let mut cfg = load(&c)?;
            cfg.recovery.atoms = true;
            let b = run_pipeline(&cfg, &root)?;
            match (&b.recovered.atoms, &b.recovered.atoms_error) {
                (Some(a), _) => print_json(a)?,
                (None, Some(e)) => return Err(Error::ExtractionFailed(e.clone()).at_stage("recover")),
                _ => unreachable!(),
            }
        }
        Command::Upo(c) => {
            let (catalog, dir) = run_upo(&load(&c)?, &root)?;
            for e in &catalog.orbits {
                println!(
                    "period {:2}  T = {:.6}  residual {:.1e}  points {:?}",
                    e.orbit.period, e.orbit.t_period, e.closure_residual, e.orbit.section_points
                );
            }
            eprintln!("catalog written to {}", dir.display());
        }
        Command::ReplicateTable1 { ks, ms, table2_m } => {
            let t1 = replicate_table1(&ks, &ms, &root)?;
            let k2 = 20;
            let t2 = replicate_table2(table2_m, k2, 101, &[2, 4, 6, 8, 10, 20, 30, 40], &root)?;
            print_tables("table1", &[t1.table(), t2.table()], &root)?;
        }
        Command::ReplicateDoublewell { steps, k, l, seed, full } => {
            let steps = if full { 5_000_000 } else { steps };
            let t = replicate_doublewell(&double_well_config(steps, k, l, seed), &root)?;
            print_tables("doublewell", &[t.table()], &root)?;
        }
        Command::ReplicateRossler {
            t_end,
            reference_t_end,
            section_t_end,
            objectives,
            full,
            skip_measure,
            skip_upo,
        } => {
            let (reference_t_end, objectives) = if full { (1e6, 1000) } else { (reference_t_end, objectives) };
            if !skip_measure {
                let m = replicate_rossler_measure(&rossler_measure_config(t_end), reference_t_end, &root)?;
                print_tables("rossler-measure", &[m.table()], &root)?;
            }
            if !skip_upo {
                let cfg = rossler_upo_config(section_t_end, 20, 80, objectives);
                let c = replicate_rossler_upo(&cfg, &root)?;
                let cols = vec!["orbits".to_string()];
                let mut t = Table::new("Verified periodic orbits", "period", &cols);
                for p in c.periods() {
                    t.push(p.to_string(), vec![c.count_of_period(p) as f64]);
                }
                print_tables("rossler-upo", &[t], &root)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::from(3),
            }
        }
    }
}
