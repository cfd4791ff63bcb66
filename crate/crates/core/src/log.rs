//! Fixed-schema CSV trajectory logs.
//!
//! One row per control step. The first line is always the header; column
//! names and order are part of the format contract (schema version 1), so
//! readers can reject a file before touching any numbers. Floats are
//! written with the shortest representation that round-trips, which makes
//! log bytes a faithful witness for determinism checks.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use crate::qp::QpStatus;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum LogError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("empty log: missing header line")]
    MissingHeader,
    #[error("header column {column}: expected {expected:?}, found {found:?}")]
    Header { column: usize, expected: String, found: String },
    #[error("header has {found} columns, expected {expected}")]
    HeaderWidth { expected: usize, found: usize },
    #[error("line {line}: {found} fields, expected {expected}")]
    RowWidth { line: usize, expected: usize, found: usize },
    #[error("line {line}, column {column}: cannot parse {value:?}")]
    Value { line: usize, column: String, value: String },
}

/// Per-foot slice of one control step.
#[derive(Debug, Clone, PartialEq)]
pub struct FootRecord {
    /// Clearance margin, m.
    pub h: f64,
    /// Contact force the filter QP certified, N; zero for swing feet or
    /// when no filter ran.
    pub lambda_qp: [f64; 3],
    /// Ground-truth contact force from the simulator, N.
    pub lambda_true: [f64; 3],
    /// Scheduled stance flag.
    pub stance: bool,
}

/// One control step of a scenario run.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// Time since the gait started, s.
    pub t: f64,
    pub phi: f64,
    pub status: QpStatus,
    pub iterations: usize,
    /// ‖u_filtered − u_nominal‖₂, N·m.
    pub interference: f64,
    pub base_position: [f64; 3],
    pub feet: Vec<FootRecord>,
    pub u_nominal: Vec<f64>,
    pub u_filtered: Vec<f64>,
    /// Actuated joint angles, rad.
    pub q: Vec<f64>,
    /// Actuated joint rates, rad/s.
    pub dq: Vec<f64>,
}

pub fn status_code(status: QpStatus) -> u8 {
    match status {
        QpStatus::Optimal => 0,
        QpStatus::Infeasible => 1,
        QpStatus::MaxIterations => 2,
    }
}

fn status_from_code(code: u64) -> Option<QpStatus> {
    match code {
        0 => Some(QpStatus::Optimal),
        1 => Some(QpStatus::Infeasible),
        2 => Some(QpStatus::MaxIterations),
        _ => None,
    }
}

/// Column names for a robot with `n_feet` feet and `n_va` actuated joints.
pub fn columns(n_feet: usize, n_va: usize) -> Vec<String> {
    let mut names = vec![
        "t".to_string(),
        "phi".to_string(),
        "status".to_string(),
        "iters".to_string(),
        "interference".to_string(),
        "base_x".to_string(),
        "base_y".to_string(),
        "base_z".to_string(),
    ];
    for i in 0..n_feet {
        names.push(format!("f{i}_h"));
        for axis in ["fx", "fy", "fz"] {
            names.push(format!("f{i}_qp_{axis}"));
        }
        for axis in ["fx", "fy", "fz"] {
            names.push(format!("f{i}_true_{axis}"));
        }
        names.push(format!("f{i}_stance"));
    }
    for prefix in ["u_nom", "u_filt", "q", "dq"] {
        for k in 0..n_va {
            names.push(format!("{prefix}_{k}"));
        }
    }
    names
}

pub fn header(n_feet: usize, n_va: usize) -> String {
    columns(n_feet, n_va).join(",")
}

fn format_row(record: &StepRecord, out: &mut String) {
    out.clear();
    let _ = write!(
        out,
        "{},{},{},{},{},{},{},{}",
        record.t,
        record.phi,
        status_code(record.status),
        record.iterations,
        record.interference,
        record.base_position[0],
        record.base_position[1],
        record.base_position[2],
    );
    for foot in &record.feet {
        let _ = write!(out, ",{}", foot.h);
        for v in foot.lambda_qp {
            let _ = write!(out, ",{v}");
        }
        for v in foot.lambda_true {
            let _ = write!(out, ",{v}");
        }
        let _ = write!(out, ",{}", u8::from(foot.stance));
    }
    for block in [&record.u_nominal, &record.u_filtered, &record.q, &record.dq] {
        for v in block {
            let _ = write!(out, ",{v}");
        }
    }
}

/// Write a complete log: header first, one row per record. `n_feet`/`n_va`
/// fix the schema so an empty run still produces a checkable file.
pub fn write<W: Write>(
    mut w: W,
    n_feet: usize,
    n_va: usize,
    records: &[StepRecord],
) -> io::Result<()> {
    writeln!(w, "{}", header(n_feet, n_va))?;
    let mut row = String::new();
    for record in records {
        format_row(record, &mut row);
        writeln!(w, "{row}")?;
    }
    Ok(())
}

pub fn write_file(
    path: impl AsRef<Path>,
    n_feet: usize,
    n_va: usize,
    records: &[StepRecord],
) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write(&mut w, n_feet, n_va, records)?;
    w.flush()
}

/// Serialize to a string; handy for bitwise determinism comparisons.
pub fn to_string(n_feet: usize, n_va: usize, records: &[StepRecord]) -> String {
    let mut buf = Vec::new();
    write(&mut buf, n_feet, n_va, records).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("log rows are ASCII")
}

struct Schema {
    n_feet: usize,
    n_va: usize,
    width: usize,
}

/// Validate a header line and recover the dimensions it encodes.
fn parse_header(line: &str) -> Result<Schema, LogError> {
    let found: Vec<&str> = line.split(',').collect();
    // the foot and joint counts are implied by the name pattern
    let n_feet = found.iter().filter(|c| c.starts_with('f') && c.ends_with("_h")).count();
    let n_va = found.iter().filter(|c| c.starts_with("u_nom_")).count();
    let expected = columns(n_feet, n_va);
    if found.len() != expected.len() {
        return Err(LogError::HeaderWidth { expected: expected.len(), found: found.len() });
    }
    for (i, (f, e)) in found.iter().zip(&expected).enumerate() {
        if f != e {
            return Err(LogError::Header {
                column: i,
                expected: e.clone(),
                found: (*f).to_string(),
            });
        }
    }
    Ok(Schema { n_feet, n_va, width: expected.len() })
}

fn parse_f64(field: &str, line: usize, column: &str) -> Result<f64, LogError> {
    field.parse().map_err(|_| LogError::Value {
        line,
        column: column.to_string(),
        value: field.to_string(),
    })
}

fn parse_u64(field: &str, line: usize, column: &str) -> Result<u64, LogError> {
    field.parse().map_err(|_| LogError::Value {
        line,
        column: column.to_string(),
        value: field.to_string(),
    })
}

pub fn read<R: BufRead>(r: R) -> Result<Vec<StepRecord>, LogError> {
    let mut lines = r.lines();
    let header_line = lines.next().ok_or(LogError::MissingHeader)??;
    let schema = parse_header(&header_line)?;

    let mut records = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let lineno = idx + 2;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != schema.width {
            return Err(LogError::RowWidth {
                line: lineno,
                expected: schema.width,
                found: fields.len(),
            });
        }
        let mut cursor = fields.iter();
        let mut next = || *cursor.next().expect("width checked above");

        let t = parse_f64(next(), lineno, "t")?;
        let phi = parse_f64(next(), lineno, "phi")?;
        let code = parse_u64(next(), lineno, "status")?;
        let status = status_from_code(code).ok_or_else(|| LogError::Value {
            line: lineno,
            column: "status".to_string(),
            value: code.to_string(),
        })?;
        let iterations = parse_u64(next(), lineno, "iters")? as usize;
        let interference = parse_f64(next(), lineno, "interference")?;
        let mut base_position = [0.0; 3];
        for (k, axis) in ["base_x", "base_y", "base_z"].iter().enumerate() {
            base_position[k] = parse_f64(next(), lineno, axis)?;
        }

        let mut feet = Vec::with_capacity(schema.n_feet);
        for _ in 0..schema.n_feet {
            let h = parse_f64(next(), lineno, "h")?;
            let mut lambda_qp = [0.0; 3];
            for slot in &mut lambda_qp {
                *slot = parse_f64(next(), lineno, "qp_f")?;
            }
            let mut lambda_true = [0.0; 3];
            for slot in &mut lambda_true {
                *slot = parse_f64(next(), lineno, "true_f")?;
            }
            let stance = match parse_u64(next(), lineno, "stance")? {
                0 => false,
                1 => true,
                other => {
                    return Err(LogError::Value {
                        line: lineno,
                        column: "stance".to_string(),
                        value: other.to_string(),
                    })
                }
            };
            feet.push(FootRecord { h, lambda_qp, lambda_true, stance });
        }

        let mut blocks = [Vec::new(), Vec::new(), Vec::new(), Vec::new()];
        for (b, name) in ["u_nom", "u_filt", "q", "dq"].iter().enumerate() {
            for _ in 0..schema.n_va {
                blocks[b].push(parse_f64(next(), lineno, name)?);
            }
        }
        let [u_nominal, u_filtered, q, dq] = blocks;

        records.push(StepRecord {
            t,
            phi,
            status,
            iterations,
            interference,
            base_position,
            feet,
            u_nominal,
            u_filtered,
            q,
            dq,
        });
    }
    Ok(records)
}

pub fn read_file(path: impl AsRef<Path>) -> Result<Vec<StepRecord>, LogError> {
    read(BufReader::new(File::open(path)?))
}

/// Validate a log file against the schema: header names, row widths, and
/// every value parseable. Returns the number of data rows.
pub fn check_file(path: impl AsRef<Path>) -> Result<usize, LogError> {
    Ok(read_file(path)?.len())
}
