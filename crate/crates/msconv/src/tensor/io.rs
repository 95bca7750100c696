//! Raw tensor dump format for test fixtures and checkpoints.
//!
//! Layout (all little-endian): magic `MSTN`, u32 version = 1, u32 dtype
//! (0 = f32, 1 = f64), four u64 shape extents (N, C, H, W), then the
//! row-major payload.

use std::io::{Read, Write};

use super::{Shape, Tensor};
use crate::scalar::{Dtype, Scalar};
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"MSTN";
pub const VERSION: u32 = 1;

pub fn write_tensor<T: Scalar>(out: &mut impl Write, t: &Tensor<T>) -> Result<()> {
    let mut buf = Vec::with_capacity(4 + 4 + 4 + 32 + t.data().len() * T::BYTES);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(T::DTYPE as u32).to_le_bytes());
    let s = t.shape();
    for dim in [s.n, s.c, s.h, s.w] {
        buf.extend_from_slice(&(dim as u64).to_le_bytes());
    }
    for &v in t.data() {
        v.write_le(&mut buf);
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_tensor<T: Scalar>(input: &mut impl Read) -> Result<Tensor<T>> {
    let mut head = [0u8; 4 + 4 + 4 + 32];
    input.read_exact(&mut head).map_err(|e| Error::Format(format!("tensor header: {e}")))?;
    if &head[0..4] != MAGIC {
        return Err(Error::Format("bad tensor magic (expected MSTN)".into()));
    }
    let version = u32::from_le_bytes(head[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Format(format!("unsupported tensor version {version}")));
    }
    let dtype_tag = u32::from_le_bytes(head[8..12].try_into().unwrap());
    let dtype = Dtype::from_u32(dtype_tag)
        .ok_or_else(|| Error::Format(format!("unknown dtype tag {dtype_tag}")))?;
    if dtype != T::DTYPE {
        return Err(Error::Format(format!(
            "dtype mismatch: file holds {:?}, caller expects {:?}",
            dtype,
            T::DTYPE
        )));
    }
    let mut dims = [0usize; 4];
    for (i, d) in dims.iter_mut().enumerate() {
        *d = u64::from_le_bytes(head[12 + i * 8..20 + i * 8].try_into().unwrap()) as usize;
    }
    let shape = Shape::new(dims[0], dims[1], dims[2], dims[3]);
    let mut payload = vec![0u8; shape.len() * T::BYTES];
    input
        .read_exact(&mut payload)
        .map_err(|e| Error::Format(format!("tensor payload: {e}")))?;
    let data: Vec<T> = payload.chunks_exact(T::BYTES).map(T::read_le).collect();
    Tensor::from_vec(shape, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let t = Tensor::<f64>::from_vec(
            Shape::new(1, 2, 2, 3),
            (0..12).map(|i| (i as f64) * 0.125 - 0.3).collect(),
        )
        .unwrap();
        let mut buf = Vec::new();
        write_tensor(&mut buf, &t).unwrap();
        let back: Tensor<f64> = read_tensor(&mut buf.as_slice()).unwrap();
        assert_eq!(back.shape(), t.shape());
        assert!(back.data().iter().zip(t.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn dtype_mismatch_is_rejected() {
        let t = Tensor::<f32>::zeros(Shape::new(1, 1, 1, 1));
        let mut buf = Vec::new();
        write_tensor(&mut buf, &t).unwrap();
        assert!(read_tensor::<f64>(&mut buf.as_slice()).is_err());
    }
}
