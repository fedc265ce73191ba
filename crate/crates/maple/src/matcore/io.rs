//! Matrix file formats: plain CSV and a little-endian binary format.
//!
//! CSV cells are written with enough digits to round-trip `f64` exactly
//! (Rust's shortest-representation float formatting guarantees this). The
//! binary format is `b"MAPLEMAT"` + `rows: u32 LE` + `cols: u32 LE` +
//! row-major `f64 LE` payload; it exists so large matrices survive a
//! save/load cycle bit-for-bit without paying text parsing costs.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::DenseMatrix;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"MAPLEMAT";

/// Write a matrix as CSV, one row per line.
pub fn write_csv(path: &Path, m: &DenseMatrix) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut line = String::new();
    for i in 0..m.rows() {
        line.clear();
        for (j, x) in m.row(i).iter().enumerate() {
            if j > 0 {
                line.push(',');
            }
            line.push_str(&format!("{x}"));
        }
        line.push('\n');
        w.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Read a CSV matrix written by [`write_csv`] (or any rectangular numeric
/// CSV without a header). Empty lines are skipped.
pub fn read_csv(path: &Path) -> Result<DenseMatrix> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut data: Vec<f64> = Vec::new();
    let mut cols = 0usize;
    let mut rows = 0usize;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let mut this_row = 0usize;
        for cell in trimmed.split(',') {
            let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                message: format!("not a number: {cell:?}"),
            })?;
            data.push(v);
            this_row += 1;
        }
        if rows == 0 {
            cols = this_row;
        } else if this_row != cols {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                message: format!("expected {cols} columns, found {this_row}"),
            });
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: "empty file".to_string(),
        });
    }
    Ok(DenseMatrix::from_vec(rows, cols, data))
}

/// Write the binary format (see module docs). Bit-exact round trip.
pub fn write_binary(path: &Path, m: &DenseMatrix) -> Result<()> {
    let rows = u32::try_from(m.rows())
        .map_err(|_| Error::BadFormat(format!("matrix too large for format: {} rows", m.rows())))?;
    let cols = u32::try_from(m.cols())
        .map_err(|_| Error::BadFormat(format!("matrix too large for format: {} cols", m.cols())))?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(MAGIC).map_err(|e| Error::io(path, e))?;
    w.write_all(&rows.to_le_bytes()).map_err(|e| Error::io(path, e))?;
    w.write_all(&cols.to_le_bytes()).map_err(|e| Error::io(path, e))?;
    let mut buf = Vec::with_capacity(8 * m.data().len());
    for &x in m.data() {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    w.write_all(&buf).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Read the binary format, validating magic bytes and payload length.
pub fn read_binary(path: &Path) -> Result<DenseMatrix> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|e| Error::io(path, e))?;
    if &magic != MAGIC {
        return Err(Error::BadFormat(format!(
            "{}: bad magic bytes (not a matrix file)",
            path.display()
        )));
    }
    let mut dims = [0u8; 8];
    r.read_exact(&mut dims).map_err(|e| Error::io(path, e))?;
    let rows = u32::from_le_bytes(dims[0..4].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(dims[4..8].try_into().unwrap()) as usize;
    let count = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::BadFormat(format!("{}: dimension overflow", path.display())))?;
    let mut payload = Vec::new();
    r.read_to_end(&mut payload).map_err(|e| Error::io(path, e))?;
    if payload.len() != 8 * count {
        return Err(Error::BadFormat(format!(
            "{}: expected {} payload bytes for {rows}x{cols}, found {}",
            path.display(),
            8 * count,
            payload.len()
        )));
    }
    let data: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(DenseMatrix::from_vec(rows, cols, data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamRng;

    #[test]
    fn csv_round_trip_is_exact() {
        let mut rng = StreamRng::new(30);
        let m = rng.gaussian_matrix(7, 5);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        write_csv(&path, &m).unwrap();
        let back = read_csv(&path).unwrap();
        // Shortest-repr formatting round-trips f64 bit-for-bit.
        assert_eq!(m, back);
    }

    #[test]
    fn csv_rejects_ragged_rows_and_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let ragged = dir.path().join("ragged.csv");
        std::fs::write(&ragged, "1,2,3\n4,5\n").unwrap();
        assert!(matches!(read_csv(&ragged), Err(Error::Parse { line: 2, .. })));

        let garbage = dir.path().join("garbage.csv");
        std::fs::write(&garbage, "1,abc\n").unwrap();
        assert!(matches!(read_csv(&garbage), Err(Error::Parse { line: 1, .. })));

        let empty = dir.path().join("empty.csv");
        std::fs::write(&empty, "").unwrap();
        assert!(matches!(read_csv(&empty), Err(Error::Parse { .. })));
    }

    #[test]
    fn binary_round_trip_is_bit_exact() {
        let mut rng = StreamRng::new(31);
        let mut m = rng.gaussian_matrix(9, 4);
        // Include values CSV could mangle if formatting were sloppy.
        m.set(0, 0, f64::MIN_POSITIVE);
        m.set(0, 1, -0.1);
        m.set(0, 2, 1e300);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        write_binary(&path, &m).unwrap();
        let back = read_binary(&path).unwrap();
        assert_eq!(m.data().len(), back.data().len());
        for (a, b) in m.data().iter().zip(back.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn binary_rejects_corrupt_files() {
        let dir = tempfile::tempdir().unwrap();
        let bad_magic = dir.path().join("bad.bin");
        std::fs::write(&bad_magic, b"NOTAMATRIX______").unwrap();
        assert!(matches!(read_binary(&bad_magic), Err(Error::BadFormat(_))));

        // Valid header, truncated payload.
        let truncated = dir.path().join("trunc.bin");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"MAPLEMAT");
        bytes.extend_from_slice(&2u32.to_le_bytes());
        bytes.extend_from_slice(&2u32.to_le_bytes());
        bytes.extend_from_slice(&1.0f64.to_le_bytes());
        std::fs::write(&truncated, &bytes).unwrap();
        assert!(matches!(read_binary(&truncated), Err(Error::BadFormat(_))));
    }
}
