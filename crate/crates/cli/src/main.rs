use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use eigbound_cli::{
    format_csv, format_markdown, mesh_tool, run, verify, CliError, ConstantArg, FloorArg, Problem,
    ReferenceTable, RunConfig, Tolerances, TraceFaceArg,
};

#[derive(Parser)]
#[command(
    name = "eigbound",
    version,
    about = "Guaranteed lower and upper eigenvalue bounds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    #[value(alias = "markdown")]
    Md,
}

#[derive(clap::Args)]
struct SolverArgs {
    #[arg(long, value_enum)]
    problem: Problem,
    /// Index of the bounded eigenvalue, counted from 1.
    #[arg(long, default_value_t = 1)]
    eigs: usize,
    /// Residual tolerance of the eigensolver.
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    /// Poincaré constant used by laplace-lshape.
    #[arg(long, value_enum, default_value = "pi")]
    constant: ConstantArg,
    /// Face measure in the trace constant used by steklov-lshape.
    #[arg(long, value_enum, default_value = "diameter")]
    trace_face: TraceFaceArg,
    /// Stiffness floor used by elasticity-cook-bounds.
    #[arg(long, value_enum, default_value = "mu")]
    stiffness_floor: FloorArg,
}

impl SolverArgs {
    fn config(&self, levels: usize) -> RunConfig {
        RunConfig {
            eigs: self.eigs,
            tol: self.tol,
            constant: self.constant.into(),
            trace_face: self.trace_face.into(),
            floor: self.stiffness_floor.into(),
            ..RunConfig::new(self.problem, levels)
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a level sweep and write the bound table.
    Run {
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long, default_value_t = 5)]
        levels: usize,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        /// Output file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare a table against reference data, cell by cell.
    Verify {
        #[command(flatten)]
        solver: SolverArgs,
        /// Reference CSV; the shipped table of the problem when omitted.
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Previously written CSV; the problem is run when omitted.
        #[arg(long)]
        computed: Option<PathBuf>,
        #[arg(long, default_value_t = 2e-5)]
        rtol_lambda: f64,
        #[arg(long, default_value_t = 2e-5)]
        rtol_lower: f64,
        #[arg(long, default_value_t = 1e-3)]
        rtol_upper: f64,
        /// Tolerance for numeric h descriptors.
        #[arg(long, default_value_t = 1e-3)]
        rtol_h: f64,
    },
    /// Write a refined builtin mesh.
    Mesh {
        /// lshape_fig1, lshape_fig1_steklov, square_fig3 or cook_fig4.
        #[arg(long)]
        builtin: String,
        #[arg(long, default_value_t = 0)]
        refine: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn emit(text: &str, out: Option<&PathBuf>) -> Result<(), CliError> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn read_table(path: &PathBuf) -> Result<ReferenceTable, CliError> {
    ReferenceTable::parse(&path.display().to_string(), fs::File::open(path)?)
}

fn main_inner(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Run {
            solver,
            levels,
            format,
            out,
        } => {
            let table = run(&solver.config(levels))?;
            let text = match format {
                Format::Csv => format_csv(&table)?,
                Format::Md => format_markdown(&table),
            };
            emit(&text, out.as_ref())?;
        }
        Command::Verify {
            solver,
            reference,
            computed,
            rtol_lambda,
            rtol_lower,
            rtol_upper,
            rtol_h,
        } => {
            let reference = match &reference {
                Some(p) => read_table(p)?,
                None => solver.problem.reference(),
            };
            let computed = match &computed {
                Some(p) => read_table(p)?,
                None => ReferenceTable::from_table(&run(&solver.config(reference.rows.len()))?),
            };
            let tol = Tolerances {
                lambda: rtol_lambda,
                lower: rtol_lower,
                upper: rtol_upper,
                h: rtol_h,
            };
            let report = verify(&reference, &computed, tol)?;
            for f in &report.failures {
                eprintln!("FAIL {f}");
            }
            println!(
                "{}",
                serde_json::to_string_pretty(&report).expect("report serializes")
            );
            if !report.pass {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Mesh {
            builtin,
            refine,
            out,
        } => {
            emit(&mesh_tool(&builtin, refine)?, out.as_ref())?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match main_inner(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
