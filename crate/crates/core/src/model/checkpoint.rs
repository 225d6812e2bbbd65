//! `SFM1` checkpoint files.
//!
//! Layout, all integers little-endian `u32`, all reals little-endian `f64`:
//!
//! ```text
//! magic            4 bytes  "SFM1"
//! d, h, C          3 x u32  input width, pooled width, class count
//! layer count      u32      L = pointwise layers + head layers
//! pointwise count  u32      number of leading layers that form g1
//! L times:
//!   weight         u32 rows, u32 cols, rows*cols f64 (row-major)
//!   bias           u32 rows (=1), u32 cols, cols f64
//! ```

use std::io::{Read, Write};
use std::path::Path;

use super::{Dense, SetClassifier};
use crate::error::{Error, Result};
use crate::tensor::{Matrix, Scalar};

const MAGIC: &[u8; 4] = b"SFM1";

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Format(format!("{v} does not fit in u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_matrix<T: Scalar>(out: &mut Vec<u8>, m: &Matrix<T>) -> Result<()> {
    put_u32(out, m.rows())?;
    put_u32(out, m.cols())?;
    for &v in m.data() {
        out.extend_from_slice(&v.as_f64().to_le_bytes());
    }
    Ok(())
}

pub fn encode<T: Scalar>(model: &SetClassifier<T>) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, model.input_dim())?;
    put_u32(&mut out, model.feature_width())?;
    put_u32(&mut out, model.classes())?;
    put_u32(&mut out, model.point_layers().len() + model.head_layers().len())?;
    put_u32(&mut out, model.point_layers().len())?;
    for l in model.layers() {
        put_matrix(&mut out, &l.weight)?;
        put_matrix(&mut out, &l.bias)?;
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Format(format!(
                "checkpoint truncated at byte {} (needed {n} more)",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn matrix<T: Scalar>(&mut self) -> Result<Matrix<T>> {
        let rows = self.u32()?;
        let cols = self.u32()?;
        let len = rows
            .checked_mul(cols)
            .filter(|l| l.checked_mul(8).is_some_and(|b| b <= self.buf.len()))
            .ok_or_else(|| Error::Format(format!("implausible matrix {rows}x{cols}")))?;
        let bytes = self.take(len * 8)?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| T::lit(f64::from_le_bytes(c.try_into().expect("8 bytes"))))
            .collect();
        Matrix::from_vec(rows, cols, data)
    }
}

pub fn decode<T: Scalar>(bytes: &[u8]) -> Result<SetClassifier<T>> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Format("bad checkpoint magic (expected SFM1)".into()));
    }
    let (d, h, c) = (r.u32()?, r.u32()?, r.u32()?);
    let layers = r.u32()?;
    let pointwise = r.u32()?;
    if pointwise == 0 || pointwise >= layers {
        return Err(Error::Format(format!(
            "{pointwise} pointwise layers out of {layers} total"
        )));
    }
    let mut dense = Vec::with_capacity(layers);
    for _ in 0..layers {
        let weight = r.matrix()?;
        let bias = r.matrix()?;
        dense.push(Dense { weight, bias });
    }
    if r.pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after checkpoint",
            bytes.len() - r.pos
        )));
    }
    let head = dense.split_off(pointwise);
    let model = SetClassifier::from_layers(dense, head).map_err(|e| Error::Format(e.to_string()))?;
    if (model.input_dim(), model.feature_width(), model.classes()) != (d, h, c) {
        return Err(Error::Format(format!(
            "header says d={d} h={h} C={c} but layers give d={} h={} C={}",
            model.input_dim(),
            model.feature_width(),
            model.classes()
        )));
    }
    Ok(model)
}

pub fn save<T: Scalar>(model: &SetClassifier<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(model)?;
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(&bytes))
        .map_err(|e| Error::io(path, e))
}

pub fn load<T: Scalar>(path: impl AsRef<Path>) -> Result<SetClassifier<T>> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Architecture;

    #[test]
    fn roundtrip_is_exact_in_f64() {
        let m = SetClassifier::<f64>::new(Architecture::default(), 5).unwrap();
        let back: SetClassifier<f64> = decode(&encode(&m).unwrap()).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn header_layout() {
        let m = SetClassifier::<f64>::new(Architecture::default(), 5).unwrap();
        let b = encode(&m).unwrap();
        assert_eq!(&b[..4], b"SFM1");
        let words: Vec<u32> = b[4..24]
            .chunks(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        assert_eq!(words, vec![3, 128, 5, 5, 3]);
        let params: usize = m.layers().map(|l| l.weight.data().len() + l.bias.data().len()).sum();
        assert_eq!(b.len(), 24 + 5 * 2 * 8 + params * 8);
    }

    #[test]
    fn rejects_corruption() {
        let m = SetClassifier::<f64>::new(Architecture::default(), 5).unwrap();
        let b = encode(&m).unwrap();
        assert!(decode::<f64>(&b[..b.len() - 3]).is_err());
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(matches!(decode::<f64>(&bad), Err(Error::Format(_))));
        let mut extra = b;
        extra.push(0);
        assert!(decode::<f64>(&extra).is_err());
    }
}
