//! Binary model files.
//!
//! ```text
//! "ESM1"                      magic
//! u32   version (= 1)
//! u8    base kind (0 logistic, 1 discrete distribution)
//! u64   n, K, m (m = 0 for dense storage)
//! u32   graph-spec length, then UTF-8 bytes
//! u32   hyper-parameter count, then per entry: u32 key length, key bytes, f64 value
//! f64[] dense: theta (n x K, row-major)
//!       factorized: Z (n x m, row-major), Q~ (K x m, row-major), lambda (m)
//! u32   CRC-32 of every preceding byte
//! ```
//!
//! All integers and floats are little-endian.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::params::{Metadata, ParamStorage, StratParams};
use crate::error::{Error, LoadError, Result};
use crate::graphs::EigenBasis;
use crate::proximal::BaseKind;

pub const MAGIC: &[u8; 4] = b"ESM1";
pub const VERSION: u32 = 1;

/// Byte accounting for one model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SizeReport {
    pub parameter_count: usize,
    /// Bytes of floating-point payload.
    pub payload_bytes: usize,
    /// Total encoded file size.
    pub file_bytes: usize,
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_row_major(out: &mut Vec<u8>, m: &DMatrix<f64>) {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
}

/// Encodes a model in the file format above.
pub fn encode(params: &StratParams) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    out.push(match params.base_kind {
        BaseKind::Logistic => 0,
        BaseKind::DiscreteDistribution => 1,
    });
    put_u64(&mut out, params.n() as u64);
    put_u64(&mut out, params.k() as u64);
    put_u64(&mut out, params.m().unwrap_or(0) as u64);
    let graph = params.metadata.graph.as_bytes();
    put_u32(&mut out, graph.len() as u32);
    out.extend_from_slice(graph);
    put_u32(&mut out, params.metadata.hyper.len() as u32);
    for (key, value) in &params.metadata.hyper {
        put_u32(&mut out, key.len() as u32);
        out.extend_from_slice(key.as_bytes());
        out.extend_from_slice(&value.to_le_bytes());
    }
    match &params.storage {
        ParamStorage::Dense { theta } => put_row_major(&mut out, theta),
        ParamStorage::Factorized { z, basis } => {
            put_row_major(&mut out, z);
            put_row_major(&mut out, &basis.q_tilde);
            for v in basis.lambda_m.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    let crc = crc32fast::hash(&out);
    put_u32(&mut out, crc);
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> std::result::Result<&'a [u8], LoadError> {
        if self.buf.len() - self.pos < n {
            return Err(LoadError::Truncated(what));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &'static str) -> std::result::Result<u32, LoadError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &'static str) -> std::result::Result<u64, LoadError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &'static str) -> std::result::Result<f64, LoadError> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn string(&mut self, what: &'static str) -> std::result::Result<String, LoadError> {
        let len = self.u32(what)? as usize;
        let bytes = self.take(len, what)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| LoadError::Malformed(format!("{what} is not UTF-8")))
    }

    fn row_major(
        &mut self,
        rows: usize,
        cols: usize,
        what: &'static str,
    ) -> std::result::Result<DMatrix<f64>, LoadError> {
        let needed = rows
            .checked_mul(cols)
            .and_then(|c| c.checked_mul(8))
            .ok_or_else(|| LoadError::Malformed(format!("{what} dimensions overflow")))?;
        let bytes = self.take(needed, what)?;
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(DMatrix::from_row_slice(rows, cols, &values))
    }
}

/// Decodes a model file; nothing is returned unless every check passes.
pub fn decode(buf: &[u8]) -> std::result::Result<StratParams, LoadError> {
    if buf.len() < 4 || &buf[..4] != MAGIC {
        return Err(LoadError::BadMagic);
    }
    let mut r = Reader { buf, pos: 4 };
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(LoadError::VersionMismatch {
            found: version,
            expected: VERSION,
        });
    }
    let base_kind = match r.take(1, "base kind")?[0] {
        0 => BaseKind::Logistic,
        1 => BaseKind::DiscreteDistribution,
        other => return Err(LoadError::Malformed(format!("unknown base kind {other}"))),
    };
    let n = r.u64("n")? as usize;
    let k = r.u64("K")? as usize;
    let m = r.u64("m")? as usize;
    if m > k {
        return Err(LoadError::Malformed(format!("m = {m} exceeds K = {k}")));
    }
    let graph = r.string("graph spec")?;
    let count = r.u32("hyper-parameter count")?;
    let mut hyper = Vec::new();
    for _ in 0..count {
        let key = r.string("hyper-parameter key")?;
        let value = r.f64("hyper-parameter value")?;
        hyper.push((key, value));
    }
    let storage = if m == 0 {
        ParamStorage::Dense {
            theta: r.row_major(n, k, "theta")?,
        }
    } else {
        let z = r.row_major(n, m, "Z")?;
        let q_tilde = r.row_major(k, m, "eigenvectors")?;
        let lambda = r.row_major(m, 1, "eigenvalues")?;
        let basis = EigenBasis::new(q_tilde, DVector::from_column_slice(lambda.as_slice()))
            .map_err(|e| LoadError::Malformed(e.to_string()))?;
        ParamStorage::Factorized { z, basis }
    };
    let body_end = r.pos;
    let stored = r.u32("checksum")?;
    if r.pos != buf.len() {
        return Err(LoadError::Malformed(format!("{} trailing bytes", buf.len() - r.pos)));
    }
    let computed = crc32fast::hash(&buf[..body_end]);
    if stored != computed {
        return Err(LoadError::ChecksumMismatch { stored, computed });
    }
    Ok(StratParams {
        storage,
        base_kind,
        metadata: Metadata { graph, hyper },
    })
}

pub fn save(params: &StratParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(params)).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<StratParams> {
    let path = path.as_ref();
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(decode(&buf)?)
}

pub fn serialized_size_report(params: &StratParams) -> SizeReport {
    let payload_floats = match &params.storage {
        ParamStorage::Dense { theta } => theta.len(),
        ParamStorage::Factorized { z, basis } => z.len() + basis.q_tilde.len() + basis.lambda_m.len(),
    };
    SizeReport {
        parameter_count: params.parameter_count(),
        payload_bytes: 8 * payload_floats,
        file_bytes: encode(params).len(),
    }
}
