//! Bound tables: six-digit CSV and Markdown output, and reference tables.

use std::io::Read;

use eigbound::bounds::BoundReport;
use serde::Serialize;

use crate::CliError;

pub const CSV_HEADER: [&str; 6] = [
    "level",
    "h_descriptor",
    "lambda_h",
    "delta_sq",
    "lower",
    "upper",
];

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub h_descriptor: String,
    pub report: BoundReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub problem: String,
    pub rows: Vec<TableRow>,
}

/// Six significant digits. Plain decimals for moderate magnitudes,
/// `d.ddddde-k` otherwise.
pub fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.5e}");
    let (mant, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-3..6).contains(&exp) {
        format!("{:.*}", (5 - exp) as usize, x)
    } else {
        format!("{mant}e{exp}")
    }
}

fn cells(row: &TableRow) -> [String; 6] {
    let r = &row.report;
    [
        r.level.to_string(),
        row.h_descriptor.clone(),
        sig6(r.lambda_h),
        sig6(r.delta_sq),
        sig6(r.lower),
        r.upper.map(sig6).unwrap_or_default(),
    ]
}

pub fn format_csv(table: &Table) -> Result<String, CliError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for row in &table.rows {
        w.write_record(cells(row))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("table text is ASCII"))
}

pub fn format_markdown(table: &Table) -> String {
    let mut out = "| level | h descriptor | lambda_h | delta^2 | lower bound | upper bound |\n\
         |---:|---:|---:|---:|---:|---:|\n"
        .to_string();
    for row in &table.rows {
        out += &format!("| {} |\n", cells(row).join(" | "));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReferenceRow {
    pub level: usize,
    pub h_descriptor: String,
    pub lambda_h: f64,
    pub lower: f64,
    pub upper: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTable {
    pub source: String,
    pub rows: Vec<ReferenceRow>,
}

impl ReferenceTable {
    /// Reads a table with at least the columns `level`, `h_descriptor`,
    /// `lambda_h`, `lower` and `upper`, in any order. Other columns are
    /// ignored, so files written by `run` are accepted too.
    pub fn parse(source: &str, reader: impl Read) -> Result<Self, CliError> {
        let err = |line: usize, msg: String| CliError::Table {
            source_name: source.to_string(),
            line,
            msg,
        };
        let mut r = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = r.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| err(1, format!("missing column {name}")))
        };
        let (cl, ch, cv, clo, cu) = (
            col("level")?,
            col("h_descriptor")?,
            col("lambda_h")?,
            col("lower")?,
            col("upper")?,
        );
        let mut rows = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            let field = |c: usize| rec.get(c).unwrap_or("");
            let num = |c: usize| -> Result<f64, CliError> {
                field(c)
                    .parse::<f64>()
                    .map_err(|e| err(line, format!("column {}: {e}", &headers[c])))
            };
            let upper = match field(cu) {
                "" => None,
                _ => Some(num(cu)?),
            };
            rows.push(ReferenceRow {
                level: field(cl)
                    .parse()
                    .map_err(|e| err(line, format!("column level: {e}")))?,
                h_descriptor: field(ch).to_string(),
                lambda_h: num(cv)?,
                lower: num(clo)?,
                upper,
            });
        }
        Ok(Self {
            source: source.to_string(),
            rows,
        })
    }

    /// Full-precision view of a computed table.
    pub fn from_table(t: &Table) -> Self {
        Self {
            source: t.problem.clone(),
            rows: t
                .rows
                .iter()
                .map(|r| ReferenceRow {
                    level: r.report.level,
                    h_descriptor: r.h_descriptor.clone(),
                    lambda_h: r.report.lambda_h,
                    lower: r.report.lower,
                    upper: r.report.upper,
                })
                .collect(),
        }
    }
}
