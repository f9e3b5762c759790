//! Cell-by-cell comparison of a computed table against a reference.

use serde::Serialize;

use crate::table::ReferenceTable;
use crate::CliError;

/// Relative tolerances per column. `h` applies to numeric descriptors only;
/// power-of-two descriptors must match as text.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    pub lambda: f64,
    pub lower: f64,
    pub upper: f64,
    pub h: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            lambda: 2e-5,
            lower: 2e-5,
            upper: 1e-3,
            h: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellFailure {
    pub level: usize,
    pub column: &'static str,
    pub reference: String,
    pub computed: String,
    pub rel_error: Option<f64>,
    pub tol: f64,
}

impl std::fmt::Display for CellFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "level {} column {}: reference {} computed {}",
            self.level, self.column, self.reference, self.computed
        )?;
        match self.rel_error {
            Some(e) => write!(f, " (relative error {e:.3e} > {:.1e})", self.tol),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub reference: String,
    pub computed: String,
    pub rows: usize,
    pub cells: usize,
    pub pass: bool,
    pub tolerances: Tolerances,
    pub failures: Vec<CellFailure>,
}

fn rel_error(reference: f64, computed: f64) -> f64 {
    if reference == 0.0 {
        computed.abs()
    } else {
        (computed - reference).abs() / reference.abs()
    }
}

pub fn verify(
    reference: &ReferenceTable,
    computed: &ReferenceTable,
    tol: Tolerances,
) -> Result<VerifyReport, CliError> {
    if reference.rows.len() != computed.rows.len() {
        return Err(CliError::Shape {
            reference: reference.rows.len(),
            computed: computed.rows.len(),
        });
    }
    let mut failures = Vec::new();
    let mut cells = 0;
    for (r, c) in reference.rows.iter().zip(&computed.rows) {
        let mut text_cell = |column: &'static str, a: String, b: String| {
            failures.push(CellFailure {
                level: r.level,
                column,
                reference: a,
                computed: b,
                rel_error: None,
                tol: 0.0,
            })
        };
        cells += 2;
        if r.level != c.level {
            text_cell("level", r.level.to_string(), c.level.to_string());
        }
        match (r.h_descriptor.parse::<f64>(), c.h_descriptor.parse::<f64>()) {
            (Ok(a), Ok(b)) if rel_error(a, b) <= tol.h => {}
            (Ok(a), Ok(b)) => failures.push(CellFailure {
                level: r.level,
                column: "h_descriptor",
                reference: r.h_descriptor.clone(),
                computed: c.h_descriptor.clone(),
                rel_error: Some(rel_error(a, b)),
                tol: tol.h,
            }),
            _ if r.h_descriptor == c.h_descriptor => {}
            _ => text_cell(
                "h_descriptor",
                r.h_descriptor.clone(),
                c.h_descriptor.clone(),
            ),
        }
        let numeric = [
            ("lambda_h", Some(r.lambda_h), Some(c.lambda_h), tol.lambda),
            ("lower", Some(r.lower), Some(c.lower), tol.lower),
            ("upper", r.upper, c.upper, tol.upper),
        ];
        for (column, a, b, t) in numeric {
            cells += 1;
            match (a, b) {
                (None, _) => {}
                (Some(a), Some(b)) => {
                    let e = rel_error(a, b);
                    if !(e <= t) {
                        failures.push(CellFailure {
                            level: r.level,
                            column,
                            reference: a.to_string(),
                            computed: b.to_string(),
                            rel_error: Some(e),
                            tol: t,
                        });
                    }
                }
                (Some(a), None) => failures.push(CellFailure {
                    level: r.level,
                    column,
                    reference: a.to_string(),
                    computed: "missing".into(),
                    rel_error: None,
                    tol: t,
                }),
            }
        }
    }
    Ok(VerifyReport {
        reference: reference.source.clone(),
        computed: computed.source.clone(),
        rows: reference.rows.len(),
        cells,
        pass: failures.is_empty(),
        tolerances: tol,
        failures,
    })
}
