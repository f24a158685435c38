//! Binary tensor records.
//!
//! Layout of one record, all integers little-endian:
//!
//! ```text
//! magic   4 bytes  "DANT"
//! ndim    u32
//! dims    ndim x u64
//! data    prod(dims) x f64
//! ```
//!
//! A named bundle (used for checkpoints) is `"DANB"`, a `u32` count, then per
//! entry a `u32` name length, the UTF-8 name, and one tensor record.

use std::io::{Read, Write};

use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

const TENSOR_MAGIC: &[u8; 4] = b"DANT";
const BUNDLE_MAGIC: &[u8; 4] = b"DANB";

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn expect_magic(r: &mut impl Read, magic: &[u8; 4]) -> Result<()> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    if &b != magic {
        return Err(TensorError::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&b),
            String::from_utf8_lossy(magic)
        )));
    }
    Ok(())
}

pub fn write_tensor(w: &mut impl Write, t: &Tensor) -> Result<()> {
    w.write_all(TENSOR_MAGIC)?;
    w.write_all(&(t.ndim() as u32).to_le_bytes())?;
    for &d in t.shape() {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    for &v in t.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_tensor(r: &mut impl Read) -> Result<Tensor> {
    expect_magic(r, TENSOR_MAGIC)?;
    let ndim = read_u32(r)? as usize;
    if ndim == 0 || ndim > 16 {
        return Err(TensorError::Format(format!("unsupported rank {ndim}")));
    }
    let shape = (0..ndim)
        .map(|_| read_u64(r).map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let len = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| TensorError::Format("element count overflows".into()))?;
    let mut bytes = vec![0u8; len.checked_mul(8).ok_or_else(|| TensorError::Format("too large".into()))?];
    r.read_exact(&mut bytes)?;
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Tensor::new(shape, data)
}

pub fn to_bytes(t: &Tensor) -> Vec<u8> {
    let mut buf = Vec::with_capacity(8 + 8 * t.ndim() + 8 * t.len());
    write_tensor(&mut buf, t).expect("writing to a Vec cannot fail");
    buf
}

pub fn from_bytes(mut bytes: &[u8]) -> Result<Tensor> {
    let t = read_tensor(&mut bytes)?;
    if !bytes.is_empty() {
        return Err(TensorError::Format(format!("{} trailing bytes", bytes.len())));
    }
    Ok(t)
}

pub fn write_bundle<'a>(w: &mut impl Write, entries: impl ExactSizeIterator<Item = (&'a str, &'a Tensor)>) -> Result<()> {
    w.write_all(BUNDLE_MAGIC)?;
    w.write_all(&(entries.len() as u32).to_le_bytes())?;
    for (name, t) in entries {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        write_tensor(w, t)?;
    }
    Ok(())
}

pub fn read_bundle(r: &mut impl Read) -> Result<Vec<(String, Tensor)>> {
    expect_magic(r, BUNDLE_MAGIC)?;
    let count = read_u32(r)?;
    let mut out = Vec::new();
    for _ in 0..count {
        let len = read_u32(r)? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|e| TensorError::Format(e.to_string()))?;
        out.push((name, read_tensor(r)?));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let t = Tensor::new(vec![1, 2], vec![1.0, -2.0]).unwrap();
        let b = to_bytes(&t);
        assert_eq!(&b[..4], b"DANT");
        assert_eq!(&b[4..8], &2u32.to_le_bytes());
        assert_eq!(&b[8..16], &1u64.to_le_bytes());
        assert_eq!(&b[16..24], &2u64.to_le_bytes());
        assert_eq!(&b[24..32], &1.0f64.to_le_bytes());
        assert_eq!(b.len(), 40);
    }

    #[test]
    fn truncated_stream_is_an_error() {
        let t = Tensor::ones(&[3]);
        let b = to_bytes(&t);
        assert!(from_bytes(&b[..b.len() - 1]).is_err());
        assert!(from_bytes(&b"XXXX"[..]).is_err());
    }

    #[test]
    fn bundle_keeps_names_and_order() {
        let a = Tensor::ones(&[2]);
        let b = Tensor::zeros(&[1, 3]);
        let mut buf = Vec::new();
        write_bundle(&mut buf, [("a", &a), ("b", &b)].into_iter()).unwrap();
        let back = read_bundle(&mut buf.as_slice()).unwrap();
        assert_eq!(back, vec![("a".to_string(), a), ("b".to_string(), b)]);
    }
}
