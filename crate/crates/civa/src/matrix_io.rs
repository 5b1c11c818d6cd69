//! Matrix files shared by every tool in the project.
//!
//! Two encodings are understood:
//!
//! * CSV, one matrix row per line, comma separated, no header.
//! * Binary: the 8-byte magic `IVAMAT01`, then `u64` rows and `u64` cols
//!   (little endian), then `rows * cols` little-endian `f64` values in
//!   row-major order.
//!
//! Readers sniff the magic; writers pick CSV when the path ends in `.csv`.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{CivaError, Result};

pub const MAGIC: &[u8; 8] = b"IVAMAT01";

/// Encode a matrix in the binary format.
pub fn encode_binary(m: &DMatrix<f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + 8 * m.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
    out
}

/// Decode a matrix from the binary format.
pub fn decode_binary(bytes: &[u8]) -> Result<DMatrix<f64>> {
    if bytes.len() < 24 || &bytes[..8] != MAGIC {
        return Err(CivaError::Format("missing IVAMAT01 header".into()));
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let cols = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| n.checked_add(24))
        .ok_or_else(|| CivaError::Format("header dimensions overflow".into()))?;
    if bytes.len() != expected {
        return Err(CivaError::Format(format!(
            "expected {expected} bytes for {rows}x{cols}, found {}",
            bytes.len()
        )));
    }
    let body = &bytes[24..];
    Ok(DMatrix::from_fn(rows, cols, |i, j| {
        let at = 8 * (i * cols + j);
        f64::from_le_bytes(body[at..at + 8].try_into().unwrap())
    }))
}

pub fn write_csv<W: Write>(m: &DMatrix<f64>, mut out: W) -> Result<()> {
    for i in 0..m.nrows() {
        let line = (0..m.ncols())
            .map(|j| format!("{:e}", m[(i, j)]))
            .collect::<Vec<_>>()
            .join(",");
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in BufReader::new(input).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|tok| {
                tok.trim().parse::<f64>().map_err(|e| {
                    CivaError::Format(format!("line {}: bad number {tok:?}: {e}", lineno + 1))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(CivaError::Format(format!(
                    "line {}: {} columns, expected {}",
                    lineno + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

/// Read a matrix file in either encoding.
pub fn read_matrix(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let bytes = fs::read(path.as_ref())?;
    if bytes.starts_with(MAGIC) {
        decode_binary(&bytes)
    } else {
        read_csv(bytes.as_slice())
    }
}

/// Write a matrix; `.csv` paths get CSV, everything else the binary encoding.
pub fn write_matrix(path: impl AsRef<Path>, m: &DMatrix<f64>) -> Result<()> {
    let path = path.as_ref();
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        let file = fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        write_csv(m, &mut w)?;
        w.flush()?;
    } else {
        fs::write(path, encode_binary(m))?;
    }
    Ok(())
}

/// Stack equally-shaped matrices vertically.
pub fn stack_rows(blocks: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
    let Some(first) = blocks.first() else {
        return Err(CivaError::DimensionMismatch("nothing to stack".into()));
    };
    let (r, c) = first.shape();
    if blocks.iter().any(|b| b.shape() != (r, c)) {
        return Err(CivaError::DimensionMismatch("blocks differ in shape".into()));
    }
    Ok(DMatrix::from_fn(r * blocks.len(), c, |i, j| blocks[i / r][(i % r, j)]))
}

/// Inverse of [`stack_rows`]: split into blocks of `block_rows` rows.
pub fn split_rows(m: &DMatrix<f64>, block_rows: usize) -> Result<Vec<DMatrix<f64>>> {
    if block_rows == 0 || m.nrows() % block_rows != 0 {
        return Err(CivaError::DimensionMismatch(format!(
            "{} rows cannot be split into blocks of {block_rows}",
            m.nrows()
        )));
    }
    Ok((0..m.nrows() / block_rows)
        .map(|b| m.rows(b * block_rows, block_rows).into_owned())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout_is_fixed() {
        let m = DMatrix::from_row_slice(1, 2, &[1.0, -2.5]);
        let bytes = encode_binary(&m);
        assert_eq!(&bytes[..8], b"IVAMAT01");
        assert_eq!(&bytes[8..16], &1u64.to_le_bytes());
        assert_eq!(&bytes[16..24], &2u64.to_le_bytes());
        assert_eq!(&bytes[24..32], &1.0f64.to_le_bytes());
        assert_eq!(&bytes[32..40], &(-2.5f64).to_le_bytes());
    }

    #[test]
    fn truncated_binary_is_rejected() {
        let m = DMatrix::from_element(2, 2, 1.0);
        let bytes = encode_binary(&m);
        assert!(decode_binary(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode_binary(b"IVAMAT02").is_err());
    }

    #[test]
    fn ragged_csv_is_rejected() {
        assert!(read_csv("1,2\n3\n".as_bytes()).is_err());
        assert!(read_csv("1,x\n".as_bytes()).is_err());
    }

    #[test]
    fn files_dispatch_on_extension() {
        let dir = tempfile::tempdir().unwrap();
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.5]);
        for name in ["m.csv", "m.ivamat"] {
            let p = dir.path().join(name);
            write_matrix(&p, &m).unwrap();
            assert_eq!(read_matrix(&p).unwrap(), m);
        }
        let raw = fs::read(dir.path().join("m.csv")).unwrap();
        assert!(raw.starts_with(b"1e0,"));
    }

    proptest! {
        #[test]
        fn binary_and_csv_round_trip(
            rows in 1usize..6, cols in 1usize..6,
            seed in proptest::collection::vec(-1e6f64..1e6, 36)
        ) {
            let m = DMatrix::from_fn(rows, cols, |i, j| seed[i * 6 + j]);
            prop_assert_eq!(decode_binary(&encode_binary(&m)).unwrap(), m.clone());
            let mut buf = Vec::new();
            write_csv(&m, &mut buf).unwrap();
            prop_assert_eq!(read_csv(buf.as_slice()).unwrap(), m);
        }

        #[test]
        fn stack_then_split_is_identity(k in 1usize..5, r in 1usize..4, c in 1usize..4) {
            let blocks: Vec<_> = (0..k)
                .map(|b| DMatrix::from_fn(r, c, |i, j| (b * 100 + i * 10 + j) as f64))
                .collect();
            let stacked = stack_rows(&blocks).unwrap();
            prop_assert_eq!(split_rows(&stacked, r).unwrap(), blocks);
        }
    }
}
