//! Binary on-disk cache for the dense `P⁻¹` part of a
//! [`BilaplacianOperator`](super::BilaplacianOperator).
//!
//! Layout (little endian): 8-byte magic, `N` as u64, `ε` as f64, 32-byte mesh
//! content hash, then `N²` f64 values in row-major order.

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use faer::Mat;

use crate::error::Result;

const MAGIC: &[u8; 8] = b"OPTCINV1";
const HEADER_LEN: usize = 8 + 8 + 8 + 32;

/// Identifies one cached inverse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CacheKey {
    pub n: usize,
    pub epsilon: f64,
    pub mesh_hash: [u8; 32],
}

impl CacheKey {
    fn header(&self) -> [u8; HEADER_LEN] {
        let mut h = [0u8; HEADER_LEN];
        h[..8].copy_from_slice(MAGIC);
        h[8..16].copy_from_slice(&(self.n as u64).to_le_bytes());
        h[16..24].copy_from_slice(&self.epsilon.to_le_bytes());
        h[24..].copy_from_slice(&self.mesh_hash);
        h
    }

    /// File name unique to the key.
    pub fn file_name(&self) -> String {
        let hash: String = self.mesh_hash[..12].iter().map(|b| format!("{b:02x}")).collect();
        format!("ainv-{hash}-{}-{:016x}.bin", self.n, self.epsilon.to_bits())
    }

    pub fn path_in(&self, dir: &Path) -> PathBuf {
        dir.join(self.file_name())
    }
}

/// Returns the cached matrix, or `None` when the file is absent, truncated
/// or written for a different key.
pub fn load(path: &Path, key: &CacheKey) -> Result<Option<Mat<f64>>> {
    let mut file = match fs::File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    let mut header = [0u8; HEADER_LEN];
    if file.read_exact(&mut header).is_err() || header != key.header() {
        return Ok(None);
    }
    let n = key.n;
    let mut payload = Vec::with_capacity(n * n * 8);
    file.read_to_end(&mut payload)?;
    if payload.len() != n * n * 8 {
        return Ok(None);
    }
    let mut values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
    let mut m = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = values.next().expect("length checked");
        }
    }
    Ok(Some(m))
}

/// Writes through a sibling temporary file and renames it into place.
pub fn store(path: &Path, key: &CacheKey, m: &Mat<f64>) -> Result<()> {
    assert_eq!((m.nrows(), m.ncols()), (key.n, key.n), "cache key does not match matrix");
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    {
        let mut w = io::BufWriter::new(fs::File::create(&tmp)?);
        w.write_all(&key.header())?;
        for i in 0..key.n {
            for j in 0..key.n {
                w.write_all(&m[(i, j)].to_le_bytes())?;
            }
        }
        w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_invalidation() {
        let dir = tempfile::tempdir().unwrap();
        let m = Mat::from_fn(3, 3, |i, j| (i * 3 + j) as f64 * 0.1 - 0.25);
        let key = CacheKey {
            n: 3,
            epsilon: 1e-8,
            mesh_hash: [7; 32],
        };
        let path = key.path_in(dir.path());
        assert!(load(&path, &key).unwrap().is_none());
        store(&path, &key, &m).unwrap();
        let back = load(&path, &key).unwrap().unwrap();
        assert_eq!(back, m);

        let other_hash = CacheKey {
            mesh_hash: [8; 32],
            ..key
        };
        assert!(load(&path, &other_hash).unwrap().is_none());
        let other_eps = CacheKey {
            epsilon: 2e-8,
            ..key
        };
        assert!(load(&path, &other_eps).unwrap().is_none());
    }

    #[test]
    fn truncated_file_is_a_miss() {
        let dir = tempfile::tempdir().unwrap();
        let key = CacheKey {
            n: 2,
            epsilon: 1.0,
            mesh_hash: [0; 32],
        };
        let path = key.path_in(dir.path());
        let mut bytes = key.header().to_vec();
        bytes.extend_from_slice(&1.0f64.to_le_bytes());
        fs::write(&path, bytes).unwrap();
        assert!(load(&path, &key).unwrap().is_none());
    }
}
