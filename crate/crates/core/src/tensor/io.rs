//! Binary tensor container.
//!
//! Layout (little-endian throughout):
//!
//! | bytes        | field                               |
//! |--------------|-------------------------------------|
//! | 8            | magic `SPTENSR1`                    |
//! | 4            | `u32` version (currently 1)         |
//! | 1            | element type code, 0 = f32, 1 = f64 |
//! | 1            | `u8` rank                           |
//! | 8 * rank     | `u64` dims                          |
//! | numel * size | raw row-major payload               |

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use super::{ElemType, Tensor};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SPTENSR1";
pub const VERSION: u32 = 1;

pub fn write_tensor(path: impl AsRef<Path>, t: &Tensor) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_tensor_to(&mut w, t)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_tensor_from(&mut BufReader::new(file))
}

pub fn write_tensor_to<W: Write>(w: &mut W, t: &Tensor) -> Result<()> {
    let rank = u8::try_from(t.rank()).map_err(|_| Error::invalid("rank above 255"))?;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&[t.elem_type().code(), rank])?;
    for &d in t.shape() {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    match t.elem_type() {
        ElemType::F32 => {
            for &v in t.data() {
                w.write_all(&(v as f32).to_le_bytes())?;
            }
        }
        ElemType::F64 => {
            for &v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

/// Fill `buf` completely or report how far the stream got.
fn read_full<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => {
                return Err(Error::Truncated {
                    needed: buf.len(),
                    found: filled,
                })
            }
            Ok(n) => filled += n,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(())
}

pub fn read_tensor_from<R: Read>(r: &mut R) -> Result<Tensor> {
    let mut magic = [0u8; 8];
    read_full(r, &mut magic)?;
    if &magic != MAGIC {
        return Err(Error::BadMagic {
            expected: String::from_utf8_lossy(MAGIC).into_owned(),
            found: magic.to_vec(),
        });
    }
    let mut word = [0u8; 4];
    read_full(r, &mut word)?;
    let version = u32::from_le_bytes(word);
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let mut pair = [0u8; 2];
    read_full(r, &mut pair)?;
    let elem = ElemType::from_code(pair[0])
        .ok_or_else(|| Error::Format(format!("unknown element type code {}", pair[0])))?;
    let rank = pair[1] as usize;

    let mut shape = Vec::with_capacity(rank);
    let mut dim = [0u8; 8];
    for _ in 0..rank {
        read_full(r, &mut dim)?;
        let d = usize::try_from(u64::from_le_bytes(dim))
            .map_err(|_| Error::Format("dimension overflows usize".into()))?;
        shape.push(d);
    }
    let numel = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Format("element count overflows usize".into()))?;
    let bytes = numel
        .checked_mul(elem.size())
        .ok_or_else(|| Error::Format("payload size overflows usize".into()))?;

    let mut payload = Vec::new();
    r.take(bytes as u64).read_to_end(&mut payload)?;
    if payload.len() < bytes {
        return Err(Error::Truncated {
            needed: bytes,
            found: payload.len(),
        });
    }
    let data = match elem {
        ElemType::F32 => payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect(),
        ElemType::F64 => payload
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
            .collect(),
    };
    Ok(Tensor::new(shape, data)?.with_elem_type(elem))
}
