//! Weight snapshots: a `u32` little-endian header length, a JSON header
//! listing tensor shapes, then every tensor as little-endian `f64`s.

use serde::{Deserialize, Serialize};

use crate::error::{FedError, Result};
use crate::linalg::Matrix;

#[derive(Serialize, Deserialize)]
struct Header {
    shapes: Vec<[usize; 2]>,
}

pub fn encode_tensors(tensors: &[&Matrix]) -> Vec<u8> {
    let header = Header {
        shapes: tensors.iter().map(|t| [t.rows(), t.cols()]).collect(),
    };
    let json = serde_json::to_vec(&header).expect("shape header serializes");
    let numel: usize = tensors.iter().map(|t| t.len()).sum();
    let mut out = Vec::with_capacity(4 + json.len() + 8 * numel);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for t in tensors {
        for x in t.as_slice() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

pub fn decode_tensors(bytes: &[u8]) -> Result<Vec<Matrix>> {
    let bad = |m: &str| FedError::InvalidArgument(format!("weight blob: {m}"));
    if bytes.len() < 4 {
        return Err(bad("truncated header length"));
    }
    let len = u32::from_le_bytes(bytes[..4].try_into().unwrap()) as usize;
    let json = bytes.get(4..4 + len).ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(json).map_err(|e| bad(&e.to_string()))?;
    let mut data = bytes[4 + len..].chunks_exact(8);
    let mut out = Vec::with_capacity(header.shapes.len());
    for [r, c] in header.shapes {
        let mut buf = Vec::with_capacity(r * c);
        for _ in 0..r * c {
            let b = data.next().ok_or_else(|| bad("truncated data"))?;
            buf.push(f64::from_le_bytes(b.try_into().unwrap()));
        }
        out.push(Matrix::from_vec(r, c, buf));
    }
    if data.next().is_some() || !data.remainder().is_empty() {
        return Err(bad("trailing bytes"));
    }
    Ok(out)
}
