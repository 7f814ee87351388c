//! File formats: density files, dense kernel matrices and CSV tables.
//!
//! Numbers are written in Rust's shortest round-trip notation, so reading a
//! file back gives the same bits.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use onsager_core::space::{Axis, AxisSpec, Quadrature};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const DENSITY_MAGIC: &str = "# onsager density v1";

/// Canonical one-line description of a grid.
pub fn space_descriptor(axes: &[AxisSpec], euclidean: bool) -> String {
    let mut s = String::from(if euclidean { "metric=euclidean" } else { "metric=max" });
    for a in axes {
        match a.axis {
            Axis::Periodic { period } => write!(s, ";periodic(period={period:?},n={})", a.resolution),
            Axis::Interval { lo, hi } => {
                let q = match a.quadrature {
                    Quadrature::Trapezoid => "trapezoid",
                    Quadrature::GaussLegendre => "gauss",
                };
                write!(s, ";interval(lo={lo:?},hi={hi:?},n={},quadrature={q})", a.resolution)
            }
        }
        .expect("writing to a String");
    }
    s
}

pub fn descriptor_hash(descriptor: &str) -> String {
    Sha256::digest(descriptor.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// Shortest round-trip text for a float: plain for moderate magnitudes,
/// exponent form otherwise.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-4..1e15).contains(&a) || !x.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityFile {
    pub descriptor: String,
    pub space_hash: String,
    pub b: Option<f64>,
    pub values: Vec<f64>,
}

pub fn format_density(descriptor: &str, b: Option<f64>, values: &[f64]) -> String {
    let mut s = String::with_capacity(24 * values.len() + 256);
    s.push_str(DENSITY_MAGIC);
    s.push('\n');
    writeln!(s, "# space {descriptor}").unwrap();
    writeln!(s, "# space-sha256 {}", descriptor_hash(descriptor)).unwrap();
    if let Some(b) = b {
        writeln!(s, "# b {}", num(b)).unwrap();
    }
    writeln!(s, "# points {}", values.len()).unwrap();
    for v in values {
        s.push_str(&num(*v));
        s.push('\n');
    }
    s
}

pub fn write_density(path: &Path, descriptor: &str, b: Option<f64>, values: &[f64]) -> Result<(), CliError> {
    fs::write(path, format_density(descriptor, b, values)).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn parse_density(text: &str, origin: &str) -> Result<DensityFile, CliError> {
    let bad = |message: String| CliError::Format { path: origin.to_string(), message };
    let mut lines = text.lines();
    if lines.next() != Some(DENSITY_MAGIC) {
        return Err(bad(format!("first line must be `{DENSITY_MAGIC}`")));
    }
    let (mut descriptor, mut hash, mut b, mut points) = (None, None, None, None);
    let mut values = Vec::new();
    for (no, line) in lines.enumerate() {
        if let Some(rest) = line.strip_prefix("# ") {
            let (key, value) = rest.split_once(' ').unwrap_or((rest, ""));
            match key {
                "space" => descriptor = Some(value.to_string()),
                "space-sha256" => hash = Some(value.to_string()),
                "b" => b = Some(value.parse::<f64>().map_err(|e| bad(format!("b: {e}")))?),
                "points" => points = Some(value.parse::<usize>().map_err(|e| bad(format!("points: {e}")))?),
                _ => return Err(bad(format!("unknown header `{key}`"))),
            }
        } else if !line.trim().is_empty() {
            values.push(line.trim().parse::<f64>().map_err(|e| bad(format!("line {}: {e}", no + 2)))?);
        }
    }
    let descriptor = descriptor.ok_or_else(|| bad("missing `# space` header".into()))?;
    let space_hash = hash.ok_or_else(|| bad("missing `# space-sha256` header".into()))?;
    if space_hash != descriptor_hash(&descriptor) {
        return Err(bad("space hash does not match the space descriptor".into()));
    }
    let points = points.ok_or_else(|| bad("missing `# points` header".into()))?;
    if points != values.len() {
        return Err(bad(format!("header announces {points} points, found {}", values.len())));
    }
    Ok(DensityFile { descriptor, space_hash, b, values })
}

pub fn read_density(path: &Path) -> Result<DensityFile, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    parse_density(&text, &path.display().to_string())
}

/// Dense kernel matrix: a `dim N` line, then `N * N` numbers in row-major
/// order separated by whitespace. Lines starting with `#` are comments.
pub fn parse_kernel_matrix(text: &str, expected: usize, origin: &str) -> Result<Vec<f64>, CliError> {
    let bad = |message: String| CliError::Format { path: origin.to_string(), message };
    let mut body = text.lines().filter(|l| !l.trim_start().starts_with('#') && !l.trim().is_empty());
    let header = body.next().ok_or_else(|| bad("empty file".into()))?;
    let n: usize = header
        .trim()
        .strip_prefix("dim")
        .ok_or_else(|| bad("first line must be `dim N`".into()))?
        .trim()
        .parse()
        .map_err(|e| bad(format!("dim: {e}")))?;
    if n != expected {
        return Err(bad(format!("matrix of dimension {n} for a space of {expected} points")));
    }
    let mut entries = Vec::with_capacity(n * n);
    for tok in body.flat_map(str::split_whitespace) {
        entries.push(tok.parse::<f64>().map_err(|e| bad(format!("`{tok}`: {e}")))?);
    }
    if entries.len() != n * n {
        return Err(bad(format!("expected {} entries, found {}", n * n, entries.len())));
    }
    Ok(entries)
}

pub fn read_kernel_matrix(path: &Path, expected: usize) -> Result<Vec<f64>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    parse_kernel_matrix(&text, expected, &path.display().to_string())
}

pub fn format_kernel_matrix(n: usize, entries: &[f64]) -> String {
    let mut s = format!("dim {n}\n");
    for row in entries.chunks(n) {
        let line: Vec<String> = row.iter().map(|v| num(*v)).collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    s
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    let io_err = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io_err)?;
    w.write_record(header).map_err(io_err)?;
    for r in rows {
        w.write_record(r).map_err(io_err)?;
    }
    w.flush()?;
    Ok(())
}
