//! File formats: factored vectors, Matrix Market and field dumps.
//!
//! Factor files start with the magic `LRFV`, a little-endian `u32` version,
//! then `u64` `n_x`, `n_xi`, `rank`, then `Y` and `Z` column-major as
//! little-endian `f64`. A stochastic basis alone is stored with `n_x = 0`.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use lrsg_core::dense::Mat;
use lrsg_core::lowrank::{FactoredVector, ProjectionBasis};
use lrsg_core::sparse::CsrMatrix;

const MAGIC: &[u8; 4] = b"LRFV";
const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a factor file (bad magic)")]
    Magic,
    #[error("unsupported factor file version {0}")]
    Version(u32),
    #[error("factor file holds a full vector, expected a basis (or vice versa)")]
    Kind,
    #[error(transparent)]
    Core(#[from] lrsg_core::Error),
}

fn write_header(w: &mut impl Write, nx: usize, nxi: usize, rank: usize) -> io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    for v in [nx, nxi, rank] {
        w.write_all(&(v as u64).to_le_bytes())?;
    }
    Ok(())
}

fn write_f64s(w: &mut impl Write, data: &[f64]) -> io::Result<()> {
    for v in data {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_u64(r: &mut impl Read) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_mat(r: &mut impl Read, rows: usize, cols: usize) -> io::Result<Mat> {
    let mut data = vec![0.0; rows * cols];
    let mut b = [0u8; 8];
    for v in &mut data {
        r.read_exact(&mut b)?;
        *v = f64::from_le_bytes(b);
    }
    Ok(Mat::from_col_major(rows, cols, data))
}

fn read_header(r: &mut impl Read) -> Result<(usize, usize, usize), FormatError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(FormatError::Magic);
    }
    let mut v = [0u8; 4];
    r.read_exact(&mut v)?;
    let version = u32::from_le_bytes(v);
    if version != VERSION {
        return Err(FormatError::Version(version));
    }
    let nx = read_u64(r)? as usize;
    let nxi = read_u64(r)? as usize;
    let rank = read_u64(r)? as usize;
    Ok((nx, nxi, rank))
}

pub fn write_factors(path: &Path, u: &FactoredVector) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_header(&mut w, u.n_x(), u.n_xi(), u.rank())?;
    write_f64s(&mut w, u.y().as_slice())?;
    write_f64s(&mut w, u.z().as_slice())?;
    w.flush()
}

pub fn read_factors(path: &Path) -> Result<FactoredVector, FormatError> {
    let mut r = BufReader::new(File::open(path)?);
    let (nx, nxi, rank) = read_header(&mut r)?;
    if nx == 0 {
        return Err(FormatError::Kind);
    }
    let y = read_mat(&mut r, nx, rank)?;
    let z = read_mat(&mut r, nxi, rank)?;
    Ok(FactoredVector::new(y, z)?)
}

pub fn write_basis(path: &Path, basis: &ProjectionBasis) -> io::Result<()> {
    let z = basis.zc();
    let mut w = BufWriter::new(File::create(path)?);
    write_header(&mut w, 0, z.rows(), z.cols())?;
    write_f64s(&mut w, z.as_slice())?;
    w.flush()
}

pub fn read_basis(path: &Path) -> Result<ProjectionBasis, FormatError> {
    let mut r = BufReader::new(File::open(path)?);
    let (nx, nxi, rank) = read_header(&mut r)?;
    if nx != 0 {
        return Err(FormatError::Kind);
    }
    Ok(ProjectionBasis::new(read_mat(&mut r, nxi, rank)?)?)
}

/// Coordinate real general Matrix Market file, 1-based indices.
pub fn write_matrix_market(path: &Path, m: &CsrMatrix) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(w, "{} {} {}", m.nrows(), m.ncols(), m.nnz())?;
    for (i, j, v) in m.triplets() {
        writeln!(w, "{} {} {:e}", i + 1, j + 1, v)?;
    }
    w.flush()
}

/// Dense Matrix Market array file for a vector.
pub fn write_matrix_market_vector(path: &Path, v: &[f64]) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "%%MatrixMarket matrix array real general")?;
    writeln!(w, "{} 1", v.len())?;
    for x in v {
        writeln!(w, "{x:e}")?;
    }
    w.flush()
}

/// `x,y,mean_u` rows, one per grid node.
pub fn write_field_csv(path: &Path, points: &[(f64, f64)], values: &[f64]) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "x,y,mean_u")?;
    for ((x, y), u) in points.iter().zip(values) {
        writeln!(w, "{x},{y},{u}")?;
    }
    w.flush()
}
