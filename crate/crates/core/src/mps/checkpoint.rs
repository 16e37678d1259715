//! Binary MPS checkpoints.
//!
//! Layout, all little-endian: magic `MPSCKPT1`, `u64` site count, `u64` max
//! bond, `u64` center, `N + 1` `u64` bond dimensions, then every site tensor's
//! `f64` data in `(left, phys, right)` row-major order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::Mps;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"MPSCKPT1";

impl Mps {
    pub fn write_checkpoint(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        for v in [self.n_sites(), self.max_bond(), self.center()] {
            w.write_all(&(v as u64).to_le_bytes())?;
        }
        for d in self.bond_dims() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for t in self.tensors() {
            for x in t.data() {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|e| Error::io(path, e))?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint(format!("{}: not an MPS checkpoint", path.display())));
        }
        let read_u64 = |r: &mut BufReader<File>| -> Result<usize> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b).map_err(|e| Error::io(path, e))?;
            usize::try_from(u64::from_le_bytes(b)).map_err(|_| Error::Checkpoint("size overflow".into()))
        };
        let n = read_u64(&mut r)?;
        let max_bond = read_u64(&mut r)?;
        let center = read_u64(&mut r)?;
        if n == 0 || center >= n {
            return Err(Error::Checkpoint(format!("bad header: {n} sites, center {center}")));
        }
        let dims = (0..=n).map(|_| read_u64(&mut r)).collect::<Result<Vec<_>>>()?;
        if dims[0] != 1 || dims[n] != 1 || dims.iter().any(|&d| d == 0 || d > 1 << 20) {
            return Err(Error::Checkpoint(format!("bad bond dimensions {dims:?}")));
        }
        let mut tensors = Vec::with_capacity(n);
        for i in 0..n {
            let len = dims[i] * 2 * dims[i + 1];
            let mut bytes = vec![0u8; len * 8];
            r.read_exact(&mut bytes).map_err(|e| Error::io(path, e))?;
            let data: Vec<f64> = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            if data.iter().any(|x| !x.is_finite()) {
                return Err(Error::Checkpoint(format!("non-finite data at site {}", i + 1)));
            }
            tensors.push(Tensor::new(vec![dims[i], 2, dims[i + 1]], data));
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest).map_err(|e| Error::io(path, e))? != 0 {
            return Err(Error::Checkpoint("trailing bytes after tensor data".into()));
        }
        Ok(Mps::from_parts(tensors, center, max_bond))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mps::tests::ghz;

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("psi.bin");
        let mut psi = Mps::from_state_vector(&ghz(5), 5, 0.0, 8).unwrap();
        psi.move_center(2);
        psi.write_checkpoint(&path).unwrap();
        let back = Mps::read_checkpoint(&path).unwrap();
        assert_eq!(back, psi);
    }

    #[test]
    fn rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.bin");
        std::fs::write(&path, b"NOTMAGIC\0\0\0\0").unwrap();
        assert!(matches!(Mps::read_checkpoint(&path), Err(Error::Checkpoint(_))));
        let psi = Mps::product(&[[1.0, 0.0]; 3]).unwrap();
        psi.write_checkpoint(&path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 4);
        std::fs::write(&path, &bytes).unwrap();
        assert!(Mps::read_checkpoint(&path).is_err());
    }
}
