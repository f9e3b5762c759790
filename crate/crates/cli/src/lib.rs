//! Experiment runner for the `eigbound` command line tool.
//!
//! Builds the mesh hierarchy of a benchmark problem, solves the discrete
//! eigenproblems level by level and turns them into guaranteed bounds.

pub mod table;
pub mod verify;

use clap::ValueEnum;
use eigbound::assemble::{AssembleError, CoefficientField};
use eigbound::bounds::{
    assemble_report, delta_elasticity, delta_elliptic, delta_laplace, delta_steklov, BoundReport,
    BoundsError, ConstantChoice, DeltaBound, LevelData, StiffnessFloor, TraceFaceMeasure,
};
use eigbound::mesh::{builtin_mesh, refine_red, refine_times, write_mesh, BuiltinMesh, MeshError};
use eigbound::spectra::{
    mixed_eigs_scalar, p1_upper_eigs, steklov_eigs, SolveOptions, SpectraError, UpperProblem,
};
use thiserror::Error;

pub use table::{format_csv, format_markdown, sig6, ReferenceRow, ReferenceTable, Table, TableRow};
pub use verify::{verify, CellFailure, Tolerances, VerifyReport};

/// Largest number of levels accepted by [`run`].
pub const MAX_LEVELS: usize = 8;

/// Lamé-type parameters of the Cook membrane runs.
pub const COOK_MU: f64 = 1.0;
pub const COOK_KAPPA: f64 = 100.0;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Spectra(#[from] SpectraError),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Assemble(#[from] AssembleError),
    #[error("table {source_name}, line {line}: {msg}")]
    Table {
        source_name: String,
        line: usize,
        msg: String,
    },
    #[error("shape mismatch: reference has {reference} rows, computed has {computed}")]
    Shape { reference: usize, computed: usize },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Problem {
    /// Laplace eigenvalues on the L-shaped domain.
    LaplaceLshape,
    /// Piecewise constant diffusion and reaction on the square.
    EllipticSquare,
    /// Steklov eigenvalues on the L-shaped domain.
    SteklovLshape,
    /// Linear elasticity on Cook's membrane from tabulated mixed eigenvalues.
    ElasticityCookBounds,
}

impl Problem {
    pub fn name(self) -> &'static str {
        match self {
            Problem::LaplaceLshape => "laplace-lshape",
            Problem::EllipticSquare => "elliptic-square",
            Problem::SteklovLshape => "steklov-lshape",
            Problem::ElasticityCookBounds => "elasticity-cook-bounds",
        }
    }

    pub fn mesh(self) -> BuiltinMesh {
        match self {
            Problem::LaplaceLshape => BuiltinMesh::LshapeFig1,
            Problem::EllipticSquare => BuiltinMesh::SquareFig3,
            Problem::SteklovLshape => BuiltinMesh::LshapeFig1Steklov,
            Problem::ElasticityCookBounds => BuiltinMesh::CookFig4,
        }
    }

    /// The shipped reference table for this problem.
    pub fn reference(self) -> ReferenceTable {
        let (name, text) = match self {
            Problem::LaplaceLshape => ("table1", include_str!("../data/table1.csv")),
            Problem::EllipticSquare => ("table2", include_str!("../data/table2.csv")),
            Problem::ElasticityCookBounds => ("table3", include_str!("../data/table3.csv")),
            Problem::SteklovLshape => ("table4", include_str!("../data/table4.csv")),
        };
        ReferenceTable::parse(name, text.as_bytes()).expect("shipped reference tables parse")
    }

    /// Column 1 label: `h·√2` as a power of two, or the raw `h` for Cook.
    pub fn h_descriptor(self, level: usize, h: f64) -> String {
        match self {
            Problem::ElasticityCookBounds => sig6(h),
            _ if level == 0 => "2^0".to_string(),
            _ => format!("2^-{level}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConstantArg {
    Pi,
    Bessel,
}

impl From<ConstantArg> for ConstantChoice {
    fn from(c: ConstantArg) -> Self {
        match c {
            ConstantArg::Pi => ConstantChoice::Pi,
            ConstantArg::Bessel => ConstantChoice::BesselJ11,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TraceFaceArg {
    Facet,
    Diameter,
}

impl From<TraceFaceArg> for TraceFaceMeasure {
    fn from(c: TraceFaceArg) -> Self {
        match c {
            TraceFaceArg::Facet => TraceFaceMeasure::Facet,
            TraceFaceArg::Diameter => TraceFaceMeasure::CellDiameter,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FloorArg {
    TwoMu,
    Mu,
}

impl From<FloorArg> for StiffnessFloor {
    fn from(c: FloorArg) -> Self {
        match c {
            FloorArg::TwoMu => StiffnessFloor::TwoMu,
            FloorArg::Mu => StiffnessFloor::Mu,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: Problem,
    pub levels: usize,
    /// Index `J` of the bounded eigenvalue, counted from 1.
    pub eigs: usize,
    pub tol: f64,
    pub constant: ConstantChoice,
    pub trace_face: TraceFaceMeasure,
    pub floor: StiffnessFloor,
}

impl RunConfig {
    pub fn new(problem: Problem, levels: usize) -> Self {
        Self {
            problem,
            levels,
            eigs: 1,
            tol: SolveOptions::default().tol,
            constant: ConstantChoice::Pi,
            trace_face: TraceFaceMeasure::CellDiameter,
            floor: StiffnessFloor::Mu,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.levels == 0 || self.levels > MAX_LEVELS {
            return Err(CliError::Config(format!(
                "levels must lie in 1..={MAX_LEVELS}, got {}",
                self.levels
            )));
        }
        if self.eigs == 0 {
            return Err(CliError::Config("eigs must be at least 1".into()));
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(CliError::Config(format!(
                "tol must lie in (0, 1), got {}",
                self.tol
            )));
        }
        if self.problem == Problem::ElasticityCookBounds {
            let available = self.problem.reference().rows.len();
            if self.levels > available || self.eigs != 1 {
                return Err(CliError::Config(format!(
                    "elasticity-cook-bounds only has tabulated first eigenvalues for {available} levels"
                )));
            }
        }
        Ok(())
    }
}

fn nth(values: &[f64], j: usize) -> Result<f64, CliError> {
    values
        .get(j - 1)
        .copied()
        .ok_or(CliError::Spectra(SpectraError::TooFewEigenvalues {
            requested: j,
            available: values.len(),
        }))
}

/// Runs the level sweep and returns one row per level.
pub fn run(config: &RunConfig) -> Result<Table, CliError> {
    config.validate()?;
    let problem = config.problem;
    let opts = SolveOptions {
        tol: config.tol,
        ..SolveOptions::default()
    }
    .with_eigs(config.eigs);
    let tabulated = problem.reference();

    let mut levels = Vec::with_capacity(config.levels);
    let mut deltas: Vec<DeltaBound> = Vec::with_capacity(config.levels);
    let mut gamma0 = 0.0;
    let mut mesh = builtin_mesh(problem.mesh());
    for level in 0..config.levels {
        if level > 0 {
            mesh = refine_red(&mesh);
        }
        let h = mesh.max_diameter();
        let j = config.eigs;
        let (lambda_h, delta, upper) = match problem {
            Problem::LaplaceLshape => {
                let c = CoefficientField::identity(&mesh);
                let lam = nth(&mixed_eigs_scalar(&mesh, &c, &opts)?.eigenvalues, j)?;
                let up = nth(
                    &p1_upper_eigs(&mesh, UpperProblem::Laplace, &c, &opts)?.eigenvalues,
                    j,
                )?;
                (lam, delta_laplace(h, config.constant)?, up)
            }
            Problem::EllipticSquare => {
                let c = CoefficientField::square_fig3(&mesh)?;
                gamma0 = c.gamma0();
                let lam = nth(&mixed_eigs_scalar(&mesh, &c, &opts)?.eigenvalues, j)?;
                let up = nth(
                    &p1_upper_eigs(&mesh, UpperProblem::Elliptic, &c, &opts)?.eigenvalues,
                    j,
                )?;
                (lam, delta_elliptic(h, c.a0())?, up)
            }
            Problem::SteklovLshape => {
                let c = CoefficientField::constant(&mesh, 1.0, 1.0)?;
                let lam = nth(&steklov_eigs(&mesh, &opts)?.eigenvalues, j)?;
                let up = nth(
                    &p1_upper_eigs(&mesh, UpperProblem::Steklov, &c, &opts)?.eigenvalues,
                    j,
                )?;
                (lam, delta_steklov(&mesh, config.trace_face)?, up)
            }
            Problem::ElasticityCookBounds => {
                let c = CoefficientField::identity(&mesh);
                let lam = tabulated.rows[level].lambda_h;
                let kind = UpperProblem::Elasticity {
                    mu: COOK_MU,
                    kappa: COOK_KAPPA,
                };
                let up = nth(&p1_upper_eigs(&mesh, kind, &c, &opts)?.eigenvalues, j)?;
                (lam, delta_elasticity(&mesh, COOK_MU, config.floor)?, up)
            }
        };
        levels.push(LevelData {
            level,
            h,
            lambda_h,
            upper: Some(upper),
        });
        deltas.push(delta);
    }
    let reports = assemble_report(&levels, &deltas, gamma0)?;
    Ok(Table {
        problem: problem.name().to_string(),
        rows: reports
            .into_iter()
            .map(|report: BoundReport| TableRow {
                h_descriptor: problem.h_descriptor(report.level, report.h),
                report,
            })
            .collect(),
    })
}

/// Text of a builtin mesh after `k` red refinements.
pub fn mesh_tool(name: &str, k: usize) -> Result<String, CliError> {
    let b: BuiltinMesh = name.parse()?;
    Ok(write_mesh(&refine_times(&builtin_mesh(b), k)))
}
