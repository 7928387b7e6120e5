//! Binary file formats and CSV numeric formatting.
//!
//! * Samples file: little-endian `u64 n`, `u64 d`, then `n*d` f64 values
//!   row-major.
//! * Matrix file: little-endian `u64 d` header, then `d*d` f64 values
//!   row-major (square matrices such as covariances).
//! * Score-net parameter file: magic `SGMSNET1`, `u64 d`, `u64 width`,
//!   `u64 n_hidden`, then the tensors row-major in fixed order.
//! * CSV floats: 17 significant digits, `.` decimal separator.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::diffusion::{SampleBatch, Stage};
use crate::error::{Error, Result};
use crate::scorenet::ScoreNetParams;

pub const PARAMS_MAGIC: &[u8; 8] = b"SGMSNET1";

fn write_u64(w: &mut impl Write, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn write_f64s(w: &mut impl Write, values: impl Iterator<Item = f64>) -> Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64s(r: &mut impl Read, count: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; count * 8];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

pub fn write_samples(path: &Path, batch: &SampleBatch) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let data = batch.data();
    write_u64(&mut w, data.nrows() as u64)?;
    write_u64(&mut w, data.ncols() as u64)?;
    for i in 0..data.nrows() {
        write_f64s(&mut w, data.row(i).iter().copied())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_samples(path: &Path) -> Result<SampleBatch> {
    let mut r = BufReader::new(File::open(path)?);
    let n = read_u64(&mut r)? as usize;
    let d = read_u64(&mut r)? as usize;
    if n == 0 || d == 0 {
        return Err(Error::Format(format!("samples file with empty shape {n}x{d}")));
    }
    let values = read_f64s(&mut r, n * d)?;
    Ok(SampleBatch::new(
        DMatrix::from_row_slice(n, d, &values),
        0,
        Stage::Data,
    ))
}

pub fn write_matrix(path: &Path, mat: &DMatrix<f64>) -> Result<()> {
    if mat.nrows() != mat.ncols() {
        return Err(Error::Domain("matrix file stores square matrices".into()));
    }
    let mut w = BufWriter::new(File::create(path)?);
    write_u64(&mut w, mat.nrows() as u64)?;
    for i in 0..mat.nrows() {
        write_f64s(&mut w, mat.row(i).iter().copied())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let mut r = BufReader::new(File::open(path)?);
    let d = read_u64(&mut r)? as usize;
    if d == 0 {
        return Err(Error::Format("matrix file with zero dimension".into()));
    }
    let values = read_f64s(&mut r, d * d)?;
    Ok(DMatrix::from_row_slice(d, d, &values))
}

pub fn write_params(path: &Path, params: &ScoreNetParams) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(PARAMS_MAGIC)?;
    write_u64(&mut w, params.dim() as u64)?;
    write_u64(&mut w, params.width() as u64)?;
    write_u64(&mut w, crate::scorenet::N_HIDDEN as u64)?;
    for (_, _, data) in params.tensor_blocks() {
        write_f64s(&mut w, data.into_iter())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_params(path: &Path) -> Result<ScoreNetParams> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != PARAMS_MAGIC {
        return Err(Error::Format("not a score-net parameter file".into()));
    }
    let d = read_u64(&mut r)? as usize;
    let width = read_u64(&mut r)? as usize;
    let n_hidden = read_u64(&mut r)? as usize;
    if n_hidden != crate::scorenet::N_HIDDEN {
        return Err(Error::Format(format!(
            "parameter file has {n_hidden} hidden layers, expected {}",
            crate::scorenet::N_HIDDEN
        )));
    }
    let shapes = ScoreNetParams::zeros(d, width)?
        .tensor_blocks()
        .into_iter()
        .map(|(rows, cols, _)| (rows, cols))
        .collect::<Vec<_>>();
    let mut blocks = Vec::with_capacity(shapes.len());
    for (rows, cols) in shapes {
        blocks.push(read_f64s(&mut r, rows * cols)?);
    }
    ScoreNetParams::from_tensor_blocks(d, width, &blocks)
}

/// Formats a float with 17 significant digits, locale-independent.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        return "nan".to_string();
    }
    format!("{v:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn samples_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("s.bin");
        let data = DMatrix::from_row_slice(2, 3, &[1.0, 2.5, -3.0, 0.25, 1e-300, 4e20]);
        let batch = SampleBatch::new(data.clone(), 7, Stage::Generated);
        write_samples(&path, &batch).unwrap();
        let back = read_samples(&path).unwrap();
        assert_eq!(back.data(), &data);
    }

    #[test]
    fn matrix_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.bin");
        let m = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.1, 0.8]);
        write_matrix(&path, &m).unwrap();
        assert_eq!(read_matrix(&path).unwrap(), m);
        let rect = DMatrix::zeros(2, 3);
        assert!(write_matrix(&path, &rect).is_err());
    }

    #[test]
    fn params_round_trip_bit_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("p.bin");
        let p = ScoreNetParams::init(3, 8, 99).unwrap();
        write_params(&path, &p).unwrap();
        let back = read_params(&path).unwrap();
        assert_eq!(p, back);
    }

    #[test]
    fn fmt_has_17_significant_digits() {
        let s = fmt_f64(10.05);
        assert!(s.starts_with("1.005000000000000") && s.ends_with("e1"), "{s}");
        // 1 leading digit + 16 decimals
        assert_eq!(s.split('e').next().unwrap().replace(['.', '-'], "").len(), 17);
        for x in [std::f64::consts::PI, 1e-300, -4.25e17, 0.1] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
    }
}
