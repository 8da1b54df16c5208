//! `NGI1` binary arrays.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic   4 bytes  "NGI1"
//! ndim    u32
//! dims    ndim x u64
//! dtype   u8       1 = float64, 2 = complex128 (re, im pairs)
//! payload row-major values
//! ```

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{ArrayD, IxDyn};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"NGI1";
pub const DTYPE_F64: u8 = 1;
pub const DTYPE_C128: u8 = 2;

#[derive(Debug, Clone, PartialEq)]
pub enum NgiArray {
    Real(ArrayD<f64>),
    Complex(ArrayD<Complex64>),
}

impl NgiArray {
    pub fn shape(&self) -> &[usize] {
        match self {
            NgiArray::Real(a) => a.shape(),
            NgiArray::Complex(a) => a.shape(),
        }
    }

    pub fn into_real(self) -> Result<ArrayD<f64>> {
        match self {
            NgiArray::Real(a) => Ok(a),
            NgiArray::Complex(_) => Err(Error::Format("expected float64 array, found complex128".into())),
        }
    }

    pub fn into_complex(self) -> Result<ArrayD<Complex64>> {
        match self {
            NgiArray::Complex(a) => Ok(a),
            NgiArray::Real(a) => Ok(a.mapv(|v| Complex64::new(v, 0.0))),
        }
    }
}

pub fn encode(array: &NgiArray) -> Vec<u8> {
    let shape = array.shape();
    let n: usize = shape.iter().product();
    let (dtype, width) = match array {
        NgiArray::Real(_) => (DTYPE_F64, 8),
        NgiArray::Complex(_) => (DTYPE_C128, 16),
    };
    let mut out = Vec::with_capacity(9 + 8 * shape.len() + width * n);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
    for &d in shape {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    out.push(dtype);
    // `iter()` walks logical row-major order regardless of memory layout.
    match array {
        NgiArray::Real(a) => a.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
        NgiArray::Complex(a) => a.iter().for_each(|v| {
            out.extend_from_slice(&v.re.to_le_bytes());
            out.extend_from_slice(&v.im.to_le_bytes());
        }),
    }
    out
}

fn take<'a>(bytes: &mut &'a [u8], n: usize) -> Result<&'a [u8]> {
    if bytes.len() < n {
        return Err(Error::Format("truncated NGI1 stream".into()));
    }
    let (head, tail) = bytes.split_at(n);
    *bytes = tail;
    Ok(head)
}

fn f64_at(chunk: &[u8]) -> f64 {
    f64::from_le_bytes(chunk.try_into().expect("8-byte chunk"))
}

pub fn decode(mut bytes: &[u8]) -> Result<NgiArray> {
    let b = &mut bytes;
    if take(b, 4)? != MAGIC {
        return Err(Error::Format("bad magic, expected NGI1".into()));
    }
    let ndim = u32::from_le_bytes(take(b, 4)?.try_into().unwrap()) as usize;
    let mut shape = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        let d = u64::from_le_bytes(take(b, 8)?.try_into().unwrap());
        shape.push(usize::try_from(d).map_err(|_| Error::Format("dimension overflow".into()))?);
    }
    let dtype = take(b, 1)?[0];
    let n = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Format("element count overflow".into()))?;
    let width = match dtype {
        DTYPE_F64 => 8,
        DTYPE_C128 => 16,
        other => return Err(Error::Format(format!("unknown dtype code {other}"))),
    };
    let payload = take(b, n * width)?;
    if !b.is_empty() {
        return Err(Error::Format(format!("{} trailing bytes after payload", b.len())));
    }
    let dim = IxDyn(&shape);
    Ok(match dtype {
        DTYPE_F64 => {
            let v = payload.chunks_exact(8).map(f64_at).collect();
            NgiArray::Real(ArrayD::from_shape_vec(dim, v).expect("shape matches payload"))
        }
        _ => {
            let v = payload
                .chunks_exact(16)
                .map(|c| Complex64::new(f64_at(&c[..8]), f64_at(&c[8..])))
                .collect();
            NgiArray::Complex(ArrayD::from_shape_vec(dim, v).expect("shape matches payload"))
        }
    })
}

/// Writes `bytes` to a sibling temp file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write(path: &Path, array: &NgiArray) -> Result<()> {
    write_atomic(path, &encode(array))
}

pub fn read(path: &Path) -> Result<NgiArray> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .map_err(|e| Error::MissingInput(format!("{}: {e}", path.display())))?
        .read_to_end(&mut bytes)?;
    decode(&bytes).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let a = NgiArray::Real(ArrayD::from_shape_vec(IxDyn(&[2, 1]), vec![1.0, -2.0]).unwrap());
        let bytes = encode(&a);
        assert_eq!(&bytes[..4], b"NGI1");
        assert_eq!(&bytes[4..8], &2u32.to_le_bytes());
        assert_eq!(&bytes[8..16], &2u64.to_le_bytes());
        assert_eq!(&bytes[16..24], &1u64.to_le_bytes());
        assert_eq!(bytes[24], 1);
        assert_eq!(&bytes[25..33], &1.0f64.to_le_bytes());
        assert_eq!(bytes.len(), 25 + 16);
    }

    #[test]
    fn complex_payload_is_re_im_pairs() {
        let a = NgiArray::Complex(ArrayD::from_elem(IxDyn(&[1]), Complex64::new(3.0, 4.0)));
        let bytes = encode(&a);
        assert_eq!(bytes[16], DTYPE_C128);
        assert_eq!(&bytes[17..25], &3.0f64.to_le_bytes());
        assert_eq!(&bytes[25..33], &4.0f64.to_le_bytes());
    }

    #[test]
    fn rejects_corrupt_input() {
        assert!(decode(b"NGI2\0\0\0\0").is_err());
        let mut bytes = encode(&NgiArray::Real(ArrayD::zeros(IxDyn(&[3]))));
        bytes.pop();
        assert!(decode(&bytes).is_err());
        bytes.extend_from_slice(&[0, 0]);
        assert!(decode(&bytes).is_err());
        let mut bad = encode(&NgiArray::Real(ArrayD::zeros(IxDyn(&[1]))));
        bad[16] = 7;
        assert!(decode(&bad).is_err());
    }

    #[test]
    fn transposed_views_written_in_logical_order() {
        let a = ndarray::arr2(&[[1.0, 2.0], [3.0, 4.0]]);
        let t = a.t().to_owned();
        let back = decode(&encode(&NgiArray::Real(t.clone().into_dyn()))).unwrap();
        assert_eq!(back, NgiArray::Real(t.into_dyn()));
    }

    fn shapes() -> impl Strategy<Value = Vec<usize>> {
        prop::collection::vec(1usize..5, 1..=3)
    }

    proptest! {
        #[test]
        fn real_roundtrip_bitwise(shape in shapes(), seed in any::<u64>()) {
            let n: usize = shape.iter().product();
            let vals: Vec<f64> = (0..n).map(|i| f64::from_bits(seed.wrapping_mul(i as u64 + 1).rotate_left(7) & 0x7fef_ffff_ffff_ffff)).collect();
            let a = NgiArray::Real(ArrayD::from_shape_vec(IxDyn(&shape), vals).unwrap());
            let bytes = encode(&a);
            prop_assert_eq!(encode(&decode(&bytes).unwrap()), bytes);
        }

        #[test]
        fn complex_roundtrip_bitwise(shape in shapes(), re in prop::collection::vec(any::<f64>(), 64), im in prop::collection::vec(any::<f64>(), 64)) {
            let n: usize = shape.iter().product();
            let vals: Vec<Complex64> = (0..n).map(|i| Complex64::new(re[i], im[i])).collect();
            let a = NgiArray::Complex(ArrayD::from_shape_vec(IxDyn(&shape), vals).unwrap());
            let bytes = encode(&a);
            // Bit comparison: NaN payloads must survive too.
            prop_assert_eq!(encode(&decode(&bytes).unwrap()), bytes);
        }
    }
}
