//! Plain-text data ingestion and output: numeric CSV matrices and vectors,
//! group files (one line per group, space-delimited zero-based column
//! indices), and `key=value` configuration files.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::{Error, Result};

fn open(path: &Path) -> Result<BufReader<std::fs::File>> {
    std::fs::File::open(path)
        .map(BufReader::new)
        .map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

/// Reads a comma-delimited numeric matrix. No header by default; pass
/// `skip_header` to drop the first line.
pub fn read_matrix_csv(path: &Path, skip_header: bool) -> Result<Array2<f64>> {
    let reader = open(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width: Option<usize> = None;
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        if idx == 0 && skip_header {
            continue;
        }
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let row: Vec<f64> = trimmed
            .split(',')
            .enumerate()
            .map(|(col, tok)| {
                tok.trim().parse::<f64>().map_err(|_| {
                    parse_err(path, idx + 1, format!("column {}: `{}` is not a number", col + 1, tok.trim()))
                })
            })
            .collect::<Result<_>>()?;
        if let Some(w) = width {
            if row.len() != w {
                return Err(parse_err(
                    path,
                    idx + 1,
                    format!("expected {w} columns, found {}", row.len()),
                ));
            }
        } else {
            width = Some(row.len());
        }
        rows.push(row);
    }
    let w = width.ok_or_else(|| parse_err(path, 0, "empty matrix file"))?;
    let mut m = Array2::<f64>::zeros((rows.len(), w));
    for (i, row) in rows.into_iter().enumerate() {
        for (j, v) in row.into_iter().enumerate() {
            m[[i, j]] = v;
        }
    }
    Ok(m)
}

/// Reads a one-column CSV (or single comma-joined line) as a vector.
pub fn read_vector_csv(path: &Path, skip_header: bool) -> Result<Array1<f64>> {
    let m = read_matrix_csv(path, skip_header)?;
    if m.ncols() == 1 {
        Ok(m.column(0).to_owned())
    } else if m.nrows() == 1 {
        Ok(m.row(0).to_owned())
    } else {
        Err(Error::InvalidInput(format!(
            "{}: expected a vector, found a {}x{} matrix",
            path.display(),
            m.nrows(),
            m.ncols()
        )))
    }
}

/// Writes a matrix as comma-delimited rows (full precision round-trip).
pub fn write_matrix_csv(path: &Path, m: &Array2<f64>) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    for row in m.rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
        writeln!(f, "{}", line.join(",")).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
    }
    Ok(())
}

/// Writes a vector as a one-column CSV.
pub fn write_vector_csv(path: &Path, v: &Array1<f64>) -> Result<()> {
    let m = v.view().insert_axis(ndarray::Axis(1)).to_owned();
    write_matrix_csv(path, &m)
}

/// Reads a group file: one line per group, space-delimited zero-based
/// feature indices.
pub fn read_groups(path: &Path) -> Result<Vec<Vec<usize>>> {
    let reader = open(path)?;
    let mut groups = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let group: Vec<usize> = trimmed
            .split_whitespace()
            .map(|tok| {
                tok.parse::<usize>().map_err(|_| {
                    parse_err(path, idx + 1, format!("`{tok}` is not a feature index"))
                })
            })
            .collect::<Result<_>>()?;
        groups.push(group);
    }
    if groups.is_empty() {
        return Err(parse_err(path, 0, "empty group file"));
    }
    Ok(groups)
}

/// Writes a group file.
pub fn write_groups(path: &Path, groups: &[Vec<usize>]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    for group in groups {
        let line: Vec<String> = group.iter().map(|j| j.to_string()).collect();
        writeln!(f, "{}", line.join(" ")).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
    }
    Ok(())
}

/// Reads a `key=value` configuration file. Lines starting with `#` and blank
/// lines are ignored; later keys override earlier ones.
pub fn read_config(path: &Path) -> Result<BTreeMap<String, String>> {
    let reader = open(path)?;
    let mut map = BTreeMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (key, value) = trimmed.split_once('=').ok_or_else(|| {
            parse_err(path, idx + 1, "expected `key=value`")
        })?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn matrix_round_trip_preserves_bits() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let m = array![[1.5, -2.25e-10], [3.0, 4.0 / 3.0]];
        write_matrix_csv(&path, &m).unwrap();
        let back = read_matrix_csv(&path, false).unwrap();
        for (a, b) in m.iter().zip(back.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn header_skip_and_scientific_notation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        std::fs::write(&path, "a,b\n1e-3, 2.5\n-4E2,0\n").unwrap();
        let m = read_matrix_csv(&path, true).unwrap();
        assert_eq!(m.shape(), &[2, 2]);
        assert_eq!(m[[0, 0]], 1e-3);
        assert_eq!(m[[1, 0]], -400.0);
    }

    #[test]
    fn parse_errors_carry_location() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "1,2\n3,oops\n").unwrap();
        let err = read_matrix_csv(&path, false).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2"), "{msg}");
        assert!(msg.contains("oops"), "{msg}");
    }

    #[test]
    fn ragged_rows_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ragged.csv");
        std::fs::write(&path, "1,2\n3\n").unwrap();
        assert!(read_matrix_csv(&path, false).is_err());
    }

    #[test]
    fn groups_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("groups.txt");
        let groups = vec![vec![0, 1], vec![2], vec![3, 4, 5]];
        write_groups(&path, &groups).unwrap();
        assert_eq!(read_groups(&path).unwrap(), groups);
    }

    #[test]
    fn config_parsing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.txt");
        std::fs::write(&path, "# comment\nn = 100\nsnr=10.5\n\nexample=2\n").unwrap();
        let cfg = read_config(&path).unwrap();
        assert_eq!(cfg["n"], "100");
        assert_eq!(cfg["snr"], "10.5");
        assert_eq!(cfg["example"], "2");
        std::fs::write(&path, "no equals sign\n").unwrap();
        assert!(read_config(&path).is_err());
    }
}
