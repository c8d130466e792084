//! Matrix CSV and partition JSON.
//!
//! Matrices are plain headerless CSV, one row per line. Numbers are written
//! with Rust's shortest round-trip formatting so that re-reading is exact.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::numerics::{Partition, SymMatrix};
use crate::{Error, Result};

/// Tolerance for the symmetry check on matrix inputs.
pub const SYMMETRY_TOL: f64 = 1e-9;

pub fn parse_matrix<R: Read>(reader: R) -> Result<DMatrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse(format!("row {}: {e}", line + 1)))?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let row = rec
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| Error::Parse(format!("row {}: bad value {f:?}", line + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || ncols == 0 {
        return Err(Error::Parse("empty matrix".into()));
    }
    if let Some(i) = rows.iter().position(|r| r.len() != ncols) {
        return Err(Error::Parse(format!(
            "row {} has {} entries, expected {ncols}",
            i + 1,
            rows[i].len()
        )));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    parse_matrix(File::open(path)?)
}

/// Reads a symmetric matrix, rejecting asymmetry above [`SYMMETRY_TOL`].
pub fn read_symmetric(path: &Path) -> Result<SymMatrix> {
    SymMatrix::from_dense_checked(read_matrix(path)?, SYMMETRY_TOL)
}

/// Reads a single row or single column as a vector.
pub fn read_vector(path: &Path) -> Result<DVector<f64>> {
    let m = read_matrix(path)?;
    match (m.nrows(), m.ncols()) {
        (1, n) => Ok(DVector::from_iterator(n, m.iter().copied())),
        (n, 1) => Ok(DVector::from_iterator(n, m.iter().copied())),
        (r, c) => Err(Error::Parse(format!("expected a vector, got a {r}x{c} matrix"))),
    }
}

pub fn write_matrix_to<W: Write>(m: &DMatrix<f64>, w: W) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    for i in 0..m.nrows() {
        wtr.write_record(m.row(i).iter().map(|x| x.to_string()))
            .map_err(|e| Error::Parse(e.to_string()))?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn matrix_to_csv(m: &DMatrix<f64>) -> String {
    let mut buf = Vec::new();
    write_matrix_to(m, &mut buf).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("csv output is utf-8")
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    write_matrix_to(m, File::create(path)?)
}

/// On-disk partition: 1-based indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionFile {
    pub n: usize,
    pub blocks: Vec<Vec<usize>>,
}

impl PartitionFile {
    pub fn to_partition(&self) -> Result<Partition> {
        Partition::from_one_based(self.n, self.blocks.clone())
    }
}

impl From<&Partition> for PartitionFile {
    fn from(p: &Partition) -> Self {
        PartitionFile { n: p.n(), blocks: p.to_one_based() }
    }
}

pub fn parse_partition(text: &str) -> Result<Partition> {
    let f: PartitionFile =
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("partition: {e}")))?;
    f.to_partition()
}

pub fn read_partition(path: &Path) -> Result<Partition> {
    parse_partition(&std::fs::read_to_string(path)?)
}

pub fn partition_to_json(p: &Partition) -> String {
    serde_json::to_string(&PartitionFile::from(p)).expect("partition serializes")
}
