//! `PSET` point-set files.
//!
//! ```text
//! magic    4 bytes "PSET"
//! version  u32 = 1
//! n, d     u32, u32
//! label    u32
//! coords   n*d f32, row-major
//! ```
//! All fields little-endian. Element ids are not stored; loading assigns
//! `0..n` and takes the sample name from the file stem.

use std::path::Path;

use crate::error::{Error, Result};
use crate::model::PointSet;
use crate::tensor::Matrix;

const MAGIC: &[u8; 4] = b"PSET";
const VERSION: u32 = 1;

pub fn encode_pset(ps: &PointSet) -> Result<Vec<u8>> {
    if ps.is_empty() {
        return Err(Error::EmptySet("refusing to write an empty point set".into()));
    }
    let as_u32 = |v: usize, what: &str| {
        u32::try_from(v).map_err(|_| Error::Format(format!("{what} {v} does not fit in u32")))
    };
    let mut out = Vec::with_capacity(20 + 4 * ps.coords().data().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&as_u32(ps.len(), "n")?.to_le_bytes());
    out.extend_from_slice(&as_u32(ps.dim(), "d")?.to_le_bytes());
    out.extend_from_slice(&as_u32(ps.label(), "label")?.to_le_bytes());
    for &v in ps.coords().data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode_pset(bytes: &[u8], name: &str) -> Result<PointSet> {
    if bytes.len() < 20 {
        return Err(Error::Format(format!("{} bytes is shorter than the PSET header", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Format("bad magic (expected PSET)".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().expect("4 bytes"));
    if word(1) != VERSION {
        return Err(Error::Format(format!("unsupported PSET version {}", word(1))));
    }
    let (n, d, label) = (word(2) as usize, word(3) as usize, word(4) as usize);
    let expected = n
        .checked_mul(d)
        .and_then(|c| c.checked_mul(4))
        .and_then(|c| c.checked_add(20))
        .ok_or_else(|| Error::Format(format!("implausible size {n}x{d}")))?;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "expected {expected} bytes for {n}x{d} points, found {}",
            bytes.len()
        )));
    }
    if n == 0 {
        return Err(Error::Format("PSET file holds zero points".into()));
    }
    let data = bytes[20..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    PointSet::from_coords(Matrix::from_vec(n, d, data)?, label, name)
        .map_err(|e| Error::Format(e.to_string()))
}

pub fn save_pset(ps: &PointSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_pset(ps)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_pset(path: impl AsRef<Path>) -> Result<PointSet> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    decode_pset(&bytes, &name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_set() -> impl Strategy<Value = PointSet> {
        (1usize..40, 1usize..5, 0usize..10).prop_flat_map(|(n, d, label)| {
            proptest::collection::vec(-1e3f64..1e3, n * d).prop_map(move |v| {
                PointSet::from_coords(Matrix::from_vec(n, d, v).unwrap(), label, "p").unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn roundtrip_within_f32_rounding(ps in arb_set()) {
            let back = decode_pset(&encode_pset(&ps).unwrap(), "p").unwrap();
            prop_assert_eq!(back.label(), ps.label());
            prop_assert_eq!(back.coords().shape(), ps.coords().shape());
            for (a, b) in back.coords().data().iter().zip(ps.coords().data()) {
                prop_assert_eq!(*a, (*b as f32) as f64);
            }
        }
    }

    #[test]
    fn header_layout_is_bit_exact() {
        let ps = PointSet::from_coords(Matrix::from_rows(&[[1.0, 2.0, 3.0]]).unwrap(), 4, "x").unwrap();
        let b = encode_pset(&ps).unwrap();
        let mut want = b"PSET".to_vec();
        for w in [1u32, 1, 3, 4] {
            want.extend_from_slice(&w.to_le_bytes());
        }
        for v in [1.0f32, 2.0, 3.0] {
            want.extend_from_slice(&v.to_le_bytes());
        }
        assert_eq!(b, want);
    }

    #[test]
    fn truncated_or_corrupt_files_fail() {
        let ps = PointSet::from_coords(Matrix::zeros(5, 3), 0, "z").unwrap();
        let b = encode_pset(&ps).unwrap();
        assert!(matches!(decode_pset(&b[..b.len() - 1], "z"), Err(Error::Format(_))));
        assert!(matches!(decode_pset(&b[..10], "z"), Err(Error::Format(_))));
        let mut v = b.clone();
        v[4] = 2;
        assert!(matches!(decode_pset(&v, "z"), Err(Error::Format(_))));
        let mut m = b;
        m[0] = b'Q';
        assert!(matches!(decode_pset(&m, "z"), Err(Error::Format(_))));
    }

    #[test]
    fn file_roundtrip_uses_stem_as_name() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("chair_0001.pset");
        let ps = PointSet::from_coords(Matrix::filled(2, 3, 0.5), 1, "x").unwrap();
        save_pset(&ps, &p).unwrap();
        let back = load_pset(&p).unwrap();
        assert_eq!(back.name(), "chair_0001");
        assert_eq!(back.coords(), ps.coords());
    }
}
