//! Text formats for recordings, networks, association matrices and curves.
//!
//! All files are UTF-8 CSV with `\n` line endings and `.` as the decimal
//! separator, independent of locale:
//!
//! - fluorescence: one row per time sample, one comma-separated column per
//!   neuron, no header;
//! - networks: lines `i,j,w` with 1-based indices; an edge is present iff
//!   `w > 0`, self-loop lines are ignored (counted as warnings);
//! - association matrices: lines `i,j,score` (1-based) for every ordered
//!   pair `i != j`, scores rendered to 6 significant digits, rows ordered
//!   by `i` then `j`;
//! - curves: lines `x,y`, no header.
//!
//! Indices are 0-based everywhere in memory and 1-based in every file.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::pipeline::PiecewiseLinear;
use crate::types::{AssociationMatrix, Network, Recording};

/// Renders `x` with 6 significant digits, trailing zeros trimmed
/// (0.5 -> "0.5", 1/3 -> "0.333333").
pub fn format_sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    let rounded: f64 = format!("{x:.5e}").parse().expect("sig-digit round-trip");
    format!("{rounded}")
}

fn parse_field(token: &str, path: &Path, line: usize, column: usize) -> Result<f64> {
    let trimmed = token.trim();
    let value: f64 = trimmed.parse().map_err(|_| Error::Format {
        path: path.to_path_buf(),
        line,
        message: format!("column {column}: invalid number {trimmed:?}"),
    })?;
    if !value.is_finite() {
        return Err(Error::Format {
            path: path.to_path_buf(),
            line,
            message: format!("column {column}: non-finite value {trimmed:?}"),
        });
    }
    Ok(value)
}

/// Loads a fluorescence recording. Rows are time samples, columns are
/// neurons; the returned matrix is transposed to neuron-major storage
/// with `time_offset = 0`.
pub fn load_fluorescence(path: impl AsRef<Path>) -> Result<Recording> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);

    let mut p = 0usize;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let line_no = idx + 1;
        let mut row = Vec::with_capacity(p);
        for (col, token) in line.split(',').enumerate() {
            row.push(parse_field(token, path, line_no, col + 1)?);
        }
        if rows.is_empty() {
            p = row.len();
        } else if row.len() != p {
            return Err(Error::Format {
                path: path.to_path_buf(),
                line: line_no,
                message: format!("row {} has {} column(s), expected {}", line_no, row.len(), p),
            });
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Format {
            path: path.to_path_buf(),
            line: 0,
            message: "file contains no samples".to_string(),
        });
    }

    let t_samples = rows.len();
    let mut values = Array2::zeros((p, t_samples));
    for (t, row) in rows.iter().enumerate() {
        for (i, &v) in row.iter().enumerate() {
            values[[i, t]] = v;
        }
    }
    Recording::new(values, 0)
}

/// Writes a recording in the fluorescence format (time samples as rows).
///
/// Values are rendered with Rust's shortest round-trip formatting, so
/// `load_fluorescence` recovers them bit-exactly. The `time_offset`
/// metadata is not part of the format.
pub fn save_fluorescence(rec: &Recording, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for t in 0..rec.samples() {
        for i in 0..rec.neurons() {
            if i > 0 {
                write!(out, ",").map_err(|e| Error::io(path, e))?;
            }
            write!(out, "{}", rec.values[[i, t]]).map_err(|e| Error::io(path, e))?;
        }
        writeln!(out).map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// A network parsed from disk plus the number of self-loop lines that
/// were dropped on the way in.
#[derive(Debug, Clone)]
pub struct LoadedNetwork {
    pub network: Network,
    pub self_loops_ignored: usize,
}

/// Loads a ground-truth network from `i,j,w` lines (1-based indices).
/// An edge is recorded iff `w > 0`; non-positive weights (the challenge
/// files use -1 for "absent") are skipped, self-loop lines are counted
/// but never inserted.
pub fn load_network(path: impl AsRef<Path>, p: usize) -> Result<LoadedNetwork> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);

    let mut network = Network::new(p);
    let mut self_loops_ignored = 0usize;
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let line_no = idx + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::Format {
                path: path.to_path_buf(),
                line: line_no,
                message: format!("expected 3 fields i,j,w, got {}", fields.len()),
            });
        }
        let from = parse_index(fields[0], path, line_no, 1, p)?;
        let to = parse_index(fields[1], path, line_no, 2, p)?;
        let weight = parse_field(fields[2], path, line_no, 3)?;
        if weight <= 0.0 {
            continue;
        }
        if from == to {
            self_loops_ignored += 1;
            continue;
        }
        network.insert(from - 1, to - 1)?;
    }
    Ok(LoadedNetwork {
        network,
        self_loops_ignored,
    })
}

fn parse_index(token: &str, path: &Path, line: usize, column: usize, p: usize) -> Result<usize> {
    let trimmed = token.trim();
    let index: usize = trimmed.parse().map_err(|_| Error::Format {
        path: path.to_path_buf(),
        line,
        message: format!("column {column}: invalid index {trimmed:?}"),
    })?;
    if index < 1 || index > p {
        return Err(Error::IndexRange {
            path: path.to_path_buf(),
            line,
            index,
            max: p,
        });
    }
    Ok(index)
}

/// Writes all off-diagonal scores as `i,j,score` lines, 1-based,
/// `i` ascending then `j` ascending.
pub fn save_association(m: &AssociationMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let p = m.p();
    for i in 0..p {
        for j in 0..p {
            if i == j {
                continue;
            }
            writeln!(out, "{},{},{}", i + 1, j + 1, format_sig6(m.scores[[i, j]]))
                .map_err(|e| Error::io(path, e))?;
        }
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Loads an association matrix from `i,j,score` lines. The neuron count
/// is the largest index seen; unlisted pairs and the diagonal are 0.
/// The symmetric flag is set iff the loaded matrix is exactly symmetric.
pub fn load_association(path: impl AsRef<Path>) -> Result<AssociationMatrix> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);

    let mut entries: Vec<(usize, usize, f64)> = Vec::new();
    let mut p = 0usize;
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let line_no = idx + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::Format {
                path: path.to_path_buf(),
                line: line_no,
                message: format!("expected 3 fields i,j,score, got {}", fields.len()),
            });
        }
        let from = parse_index(fields[0], path, line_no, 1, usize::MAX)?;
        let to = parse_index(fields[1], path, line_no, 2, usize::MAX)?;
        let score = parse_field(fields[2], path, line_no, 3)?;
        p = p.max(from).max(to);
        entries.push((from - 1, to - 1, score));
    }
    if p == 0 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            line: 0,
            message: "file contains no scores".to_string(),
        });
    }

    let mut scores = Array2::zeros((p, p));
    for (i, j, s) in entries {
        scores[[i, j]] = s;
    }
    let symmetric = (0..p).all(|i| (i + 1..p).all(|j| scores[[i, j]] == scores[[j, i]]));
    AssociationMatrix::new(scores, symmetric)
}

/// Loads piecewise-linear knots from `x,y` lines (for the `w*` exponent
/// modifier `k`).
pub fn load_knots(path: impl AsRef<Path>) -> Result<PiecewiseLinear> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);

    let mut knots = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let line_no = idx + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 2 {
            return Err(Error::Format {
                path: path.to_path_buf(),
                line: line_no,
                message: format!("expected 2 fields x,y, got {}", fields.len()),
            });
        }
        let x = parse_field(fields[0], path, line_no, 1)?;
        let y = parse_field(fields[1], path, line_no, 2)?;
        knots.push((x, y));
    }
    PiecewiseLinear::new(knots)
}

/// Writes curve points as bare `x,y` lines.
pub fn save_curve(points: &[(f64, f64)], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for (x, y) in points {
        writeln!(out, "{x},{y}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}
