//! Point-pattern CSV files: header `x,y[,z...][,mark]`, coordinates in
//! window units, optional integer mark column (single mark 0 when absent).
//! Window metadata lives in the run config, not in the CSV.

use crate::error::Error;
use crate::geometry::{Configuration, MarkedPoint};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

const AXIS_NAMES: [&str; 3] = ["x", "y", "z"];

fn axis_name(ax: usize) -> String {
    AXIS_NAMES
        .get(ax)
        .map(|s| s.to_string())
        .unwrap_or_else(|| format!("x{ax}"))
}

/// Writes a configuration; coordinates use the shortest round-trip decimal
/// form, so identical configurations produce identical bytes.
pub fn write_pattern<W: Write>(mut out: W, config: &Configuration) -> Result<(), Error> {
    let dim = config.dim();
    let header: Vec<String> = (0..dim).map(axis_name).chain(["mark".into()]).collect();
    writeln!(out, "{}", header.join(","))?;
    for (pos, mark) in config.iter() {
        let coords: Vec<String> = pos.iter().map(|c| format!("{c}")).collect();
        writeln!(out, "{},{}", coords.join(","), mark)?;
    }
    Ok(())
}

pub fn write_pattern_file(path: &Path, config: &Configuration) -> Result<(), Error> {
    let file = std::fs::File::create(path)?;
    write_pattern(std::io::BufWriter::new(file), config)
}

/// Reads a pattern; the dimension is inferred from the header and the mark
/// column is optional.
pub fn read_pattern<R: std::io::Read>(input: R) -> Result<Configuration, Error> {
    let reader = BufReader::new(input);
    let mut lines = reader.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::PatternFormat {
        line: 1,
        message: "empty file".into(),
    })?;
    let header = header?;
    let columns: Vec<String> = header.split(',').map(|c| c.trim().to_string()).collect();
    let has_mark = columns.last().map(|c| c == "mark").unwrap_or(false);
    let dim = if has_mark {
        columns.len() - 1
    } else {
        columns.len()
    };
    if dim == 0 {
        return Err(Error::PatternFormat {
            line: 1,
            message: format!("no coordinate columns in header '{header}'"),
        });
    }
    let mut points = Vec::new();
    for (idx, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != columns.len() {
            return Err(Error::PatternFormat {
                line: idx + 1,
                message: format!(
                    "expected {} fields, found {}",
                    columns.len(),
                    fields.len()
                ),
            });
        }
        let mut position = Vec::with_capacity(dim);
        for field in &fields[..dim] {
            position.push(field.trim().parse::<f64>().map_err(|e| Error::PatternFormat {
                line: idx + 1,
                message: format!("bad coordinate '{field}': {e}"),
            })?);
        }
        let mark = if has_mark {
            fields[dim]
                .trim()
                .parse::<usize>()
                .map_err(|e| Error::PatternFormat {
                    line: idx + 1,
                    message: format!("bad mark '{}': {e}", fields[dim]),
                })?
        } else {
            0
        };
        points.push(MarkedPoint::new(position, mark));
    }
    Configuration::from_points(dim, &points).map_err(Error::from)
}

pub fn read_pattern_file(path: &Path) -> Result<Configuration, Error> {
    let file = std::fs::File::open(path)?;
    read_pattern(file)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_configuration() {
        let pts = vec![
            MarkedPoint::new(vec![0.125, -0.375], 0),
            MarkedPoint::new(vec![1.0 / 3.0, std::f64::consts::FRAC_1_SQRT_2], 1),
        ];
        let config = Configuration::from_points(2, &pts).unwrap();
        let mut buf = Vec::new();
        write_pattern(&mut buf, &config).unwrap();
        let back = read_pattern(&buf[..]).unwrap();
        assert_eq!(config, back);
        // identical write is byte-identical
        let mut buf2 = Vec::new();
        write_pattern(&mut buf2, &config).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn mark_column_optional() {
        let text = "x,y\n0.5,0.25\n-1.0,2.0\n";
        let config = read_pattern(text.as_bytes()).unwrap();
        assert_eq!(config.len(), 2);
        assert_eq!(config.mark(0), 0);
    }

    #[test]
    fn three_dimensional_header() {
        let text = "x,y,z,mark\n0.0,0.5,1.0,1\n";
        let config = read_pattern(text.as_bytes()).unwrap();
        assert_eq!(config.dim(), 3);
        assert_eq!(config.mark(0), 1);
    }

    #[test]
    fn malformed_rows_are_located() {
        let text = "x,y,mark\n0.0,bad,0\n";
        match read_pattern(text.as_bytes()) {
            Err(Error::PatternFormat { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected format error, got {other:?}"),
        }
    }
}
