//! `MXTN` tensor snapshot container.
//!
//! Layout, all little-endian: magic `MXTN`, `u8` version (1), `u8` dtype
//! (0 = f32, 1 = f64), `u8` rank, `rank × u32` extents, row-major payload.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"MXTN";
pub const VERSION: u8 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dtype {
    F32 = 0,
    F64 = 1,
}

pub fn encode_tensor(tensor: &Tensor, dtype: Dtype) -> Vec<u8> {
    let width = match dtype {
        Dtype::F32 => 4,
        Dtype::F64 => 8,
    };
    let mut out = Vec::with_capacity(7 + 4 * tensor.rank() + width * tensor.len());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(dtype as u8);
    out.push(tensor.rank() as u8);
    for &d in tensor.shape() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in tensor.data() {
        match dtype {
            Dtype::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
            Dtype::F64 => out.extend_from_slice(&v.to_le_bytes()),
        }
    }
    out
}

pub fn decode_tensor(bytes: &[u8]) -> Result<Tensor> {
    const FMT: &str = "MXTN";
    if bytes.len() < 7 {
        return Err(Error::format(FMT, bytes.len(), "truncated header"));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::format(FMT, 0, "bad magic"));
    }
    if bytes[4] != VERSION {
        return Err(Error::format(FMT, 4, format!("unsupported version {}", bytes[4])));
    }
    let width = match bytes[5] {
        0 => 4,
        1 => 8,
        d => return Err(Error::format(FMT, 5, format!("unknown dtype {d}"))),
    };
    let rank = bytes[6] as usize;
    let mut off = 7;
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        let Some(chunk) = bytes.get(off..off + 4) else {
            return Err(Error::format(FMT, off, "truncated extents"));
        };
        let d = u32::from_le_bytes(chunk.try_into().unwrap()) as usize;
        if d == 0 {
            return Err(Error::format(FMT, off, "zero extent"));
        }
        shape.push(d);
        off += 4;
    }
    let n: usize = shape.iter().product();
    let payload = &bytes[off..];
    if payload.len() != n * width {
        return Err(Error::format(
            FMT,
            off + payload.len().min(n * width),
            format!("payload holds {} bytes, expected {}", payload.len(), n * width),
        ));
    }
    let data = if width == 4 {
        payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect()
    } else {
        payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect()
    };
    Tensor::new(shape, data)
}

pub fn save_tensor(tensor: &Tensor, dtype: Dtype, path: &Path) -> Result<()> {
    std::fs::write(path, encode_tensor(tensor, dtype)).map_err(|e| Error::io(path, e))
}

pub fn load_tensor(path: &Path) -> Result<Tensor> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_tensor(&bytes)
}

pub const INDEX_FILE: &str = "index.json";

#[derive(Serialize, Deserialize)]
struct TensorIndex<M> {
    meta: M,
    tensors: BTreeMap<String, String>,
}

/// Saves named tensors as `<name>.mxtn` (f64) next to an `index.json`
/// holding `meta` and the name → file map.
pub fn save_tensor_set<M: Serialize>(dir: &Path, meta: &M, tensors: &[(String, &Tensor)]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = BTreeMap::new();
    for (name, t) in tensors {
        let file = format!("{name}.mxtn");
        save_tensor(t, Dtype::F64, &dir.join(&file))?;
        files.insert(name.clone(), file);
    }
    let index = TensorIndex { meta, tensors: files };
    let path = dir.join(INDEX_FILE);
    let json = serde_json::to_string_pretty(&index)?;
    std::fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))
}

/// Reads a tensor set written by [`save_tensor_set`].
pub fn load_tensor_set<M: DeserializeOwned>(dir: &Path) -> Result<(M, BTreeMap<String, Tensor>)> {
    let path = dir.join(INDEX_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let index: TensorIndex<M> = serde_json::from_str(&text)?;
    let mut out = BTreeMap::new();
    for (name, file) in index.tensors {
        out.insert(name, load_tensor(&dir.join(file))?);
    }
    Ok((index.meta, out))
}

/// Moves loaded tensors into `slots`, checking names and shapes.
pub fn fill_slots(mut loaded: BTreeMap<String, Tensor>, slots: Vec<(String, &mut Tensor)>) -> Result<()> {
    if loaded.len() != slots.len() {
        return Err(Error::invalid(format!(
            "tensor set has {} entries, expected {}",
            loaded.len(),
            slots.len()
        )));
    }
    for (name, slot) in slots {
        let t = loaded
            .remove(&name)
            .ok_or_else(|| Error::invalid(format!("tensor set is missing {name}")))?;
        if t.shape() != slot.shape() {
            return Err(Error::shape(name, slot.shape(), t.shape()));
        }
        *slot = t;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let t = Tensor::new(vec![2, 1], vec![1.0, -2.0]).unwrap();
        let b = encode_tensor(&t, Dtype::F32);
        assert_eq!(&b[..7], b"MXTN\x01\x00\x02");
        assert_eq!(&b[7..15], &[2, 0, 0, 0, 1, 0, 0, 0]);
        assert_eq!(&b[15..19], &1.0f32.to_le_bytes());
        assert_eq!(b.len(), 23);
    }

    #[test]
    fn truncated_payload_reports_offset() {
        let t = Tensor::zeros(&[3]);
        let mut b = encode_tensor(&t, Dtype::F64);
        b.pop();
        match decode_tensor(&b) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 11 + 23),
            other => panic!("{other:?}"),
        }
    }

    proptest! {
        #[test]
        fn f64_round_trip_is_exact(shape in proptest::collection::vec(1usize..5, 1..4), seed in any::<u64>()) {
            let n: usize = shape.iter().product();
            let data: Vec<f64> = (0..n).map(|i| ((i as u64 ^ seed) as f64).sin() * 1e3).collect();
            let t = Tensor::new(shape, data).unwrap();
            prop_assert_eq!(decode_tensor(&encode_tensor(&t, Dtype::F64)).unwrap(), t);
        }
    }
}
