//! Linear filter banks and their on-disk format.
//!
//! A bank holds `n_filters` square filters of odd side `size`. The file
//! layout is the 5-byte magic `BSIF1`, two little-endian u32 (filter count,
//! side length), then all coefficients as little-endian float64,
//! filter-major and row-major within each filter.

use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Real;

pub const BANK_MAGIC: &[u8; 5] = b"BSIF1";
pub const MIN_SIZE: usize = 3;
pub const MAX_SIZE: usize = 17;
pub const MAX_FILTERS: usize = 12;

#[derive(Debug, Clone)]
pub struct FilterBank<T: Real> {
    n_filters: usize,
    size: usize,
    /// `n_filters` filters, each `size * size` row-major.
    filters: Vec<Vec<T>>,
    /// Free-text origin: learning seed or source file.
    pub provenance: String,
    pub seed: Option<u64>,
}

impl<T: Real> FilterBank<T> {
    pub fn new(
        filters: Vec<Vec<T>>,
        size: usize,
        provenance: String,
        seed: Option<u64>,
    ) -> Result<Self> {
        let n_filters = filters.len();
        if size % 2 == 0 || !(MIN_SIZE..=MAX_SIZE).contains(&size) {
            return Err(Error::FilterBank(format!(
                "filter side {size} must be odd and within {MIN_SIZE}..={MAX_SIZE}"
            )));
        }
        if n_filters == 0 || n_filters > MAX_FILTERS {
            return Err(Error::FilterBank(format!(
                "filter count {n_filters} must be within 1..={MAX_FILTERS}"
            )));
        }
        for (i, f) in filters.iter().enumerate() {
            if f.len() != size * size {
                return Err(Error::FilterBank(format!(
                    "filter {i} has {} coefficients, expected {}",
                    f.len(),
                    size * size
                )));
            }
            if !f.iter().all(|c| c.is_finite()) {
                return Err(Error::FilterBank(format!(
                    "filter {i} has non-finite coefficients"
                )));
            }
            if f.iter().all(|c| *c == T::zero()) {
                return Err(Error::FilterBank(format!("filter {i} is identically zero")));
            }
        }
        Ok(FilterBank {
            n_filters,
            size,
            filters,
            provenance,
            seed,
        })
    }

    pub fn n_filters(&self) -> usize {
        self.n_filters
    }

    /// Filter side length `l`.
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn filter(&self, i: usize) -> &[T] {
        &self.filters[i]
    }

    /// Identifier pair `(n_filters, size)` tagging descriptors with their bank.
    pub fn id(&self) -> (u32, u32) {
        (self.n_filters as u32, self.size as u32)
    }
}

/// Serialise a bank in the file layout (magic, header, coefficients).
pub fn bank_to_bytes<T: Real>(bank: &FilterBank<T>) -> Vec<u8> {
    let mut buf = Vec::with_capacity(13 + bank.n_filters * bank.size * bank.size * 8);
    buf.extend_from_slice(BANK_MAGIC);
    buf.extend_from_slice(&(bank.n_filters as u32).to_le_bytes());
    buf.extend_from_slice(&(bank.size as u32).to_le_bytes());
    for filter in &bank.filters {
        for &c in filter {
            let c = c.to_f64().expect("filter coefficient must convert to f64");
            buf.extend_from_slice(&c.to_le_bytes());
        }
    }
    buf
}

/// Parse the file layout; `origin` names the source in errors and provenance.
pub fn bank_from_bytes<T: Real>(bytes: &[u8], origin: &Path) -> Result<FilterBank<T>> {
    let file_err = |message: String| Error::BankFile {
        path: origin.to_path_buf(),
        message,
    };
    if bytes.len() < 13 {
        return Err(file_err("file truncated (missing header)".into()));
    }
    if &bytes[0..5] != BANK_MAGIC {
        return Err(file_err("bad magic, expected BSIF1".into()));
    }
    let n = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    let l = u32::from_le_bytes(bytes[9..13].try_into().unwrap()) as usize;
    let expected = 13usize
        .checked_add(n.saturating_mul(l).saturating_mul(l).saturating_mul(8))
        .ok_or_else(|| file_err("header describes an oversized bank".into()))?;
    if bytes.len() < expected {
        return Err(file_err(format!(
            "file truncated: {} bytes, expected {expected}",
            bytes.len()
        )));
    }
    if bytes.len() > expected {
        return Err(file_err(format!(
            "trailing data: {} bytes, expected {expected}",
            bytes.len()
        )));
    }
    let mut filters = Vec::with_capacity(n);
    let mut off = 13;
    for _ in 0..n {
        let mut filter = Vec::with_capacity(l * l);
        for _ in 0..l * l {
            let c = f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
            off += 8;
            filter.push(T::from_f64(c).ok_or_else(|| {
                file_err("coefficient not representable in the scalar type".into())
            })?);
        }
        filters.push(filter);
    }
    FilterBank::new(filters, l, format!("file:{}", origin.display()), None)
}

pub fn save_filter_bank<T: Real>(bank: &FilterBank<T>, path: &Path) -> Result<()> {
    std::fs::write(path, bank_to_bytes(bank)).map_err(|e| Error::io(path, e))
}

pub fn load_filter_bank<T: Real>(path: &Path) -> Result<FilterBank<T>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    bank_from_bytes(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_bank() -> FilterBank<f64> {
        let filters = vec![
            vec![0.25, -0.5, 0.125, 1.0, 0.0, -1.0, 0.5, 0.75, -0.25],
            vec![1e-3, 2e-3, -3e-3, 0.0, 0.5, 0.0, -0.125, 0.0625, 0.03125],
        ];
        FilterBank::new(filters, 3, "unit test".into(), Some(1)).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bank.bsif");
        let bank = toy_bank();
        save_filter_bank(&bank, &path).unwrap();
        let loaded: FilterBank<f64> = load_filter_bank(&path).unwrap();
        assert_eq!(loaded.n_filters(), 2);
        assert_eq!(loaded.size(), 3);
        for i in 0..2 {
            for (a, b) in bank.filter(i).iter().zip(loaded.filter(i)) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bank.bsif");
        std::fs::write(&path, b"NOTBSIF000000").unwrap();
        match load_filter_bank::<f64>(&path) {
            Err(Error::BankFile { message, .. }) => assert!(message.contains("magic")),
            other => panic!("expected bank file error, got {other:?}"),
        }
    }

    #[test]
    fn truncated_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bank.bsif");
        let bank = toy_bank();
        save_filter_bank(&bank, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();
        match load_filter_bank::<f64>(&path) {
            Err(Error::BankFile { message, .. }) => assert!(message.contains("truncated")),
            other => panic!("expected bank file error, got {other:?}"),
        }
    }

    #[test]
    fn invalid_shapes_are_rejected() {
        assert!(FilterBank::new(vec![vec![1.0; 9]], 4, String::new(), None).is_err());
        assert!(FilterBank::new(vec![vec![1.0; 8]], 3, String::new(), None).is_err());
        assert!(FilterBank::new(vec![vec![0.0; 9]], 3, String::new(), None).is_err());
        assert!(FilterBank::new(Vec::<Vec<f64>>::new(), 3, String::new(), None).is_err());
        assert!(FilterBank::new(vec![vec![1.0; 9 * 9]; 13], 9, String::new(), None).is_err());
    }
}
