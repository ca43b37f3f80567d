//! `LMLP` model files.
//!
//! Layout: magic `LMLP`, format version (u32 LE), count of layer dimensions
//! (u32 LE), the layer dimensions (u32 LE each), then for every layer its
//! row-major weights followed by its biases, all f32 LE.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::model::MlpModel;
use crate::{Error, Result};

pub const MODEL_MAGIC: &[u8; 4] = b"LMLP";
pub const MODEL_VERSION: u32 = 1;

pub fn encode_model(model: &MlpModel) -> Vec<u8> {
    let dims = model.layer_dims();
    let mut out = Vec::with_capacity(12 + 4 * dims.len() + 4 * model.num_params());
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for d in &dims {
        out.extend_from_slice(&(*d as u32).to_le_bytes());
    }
    for tensor in model.tensors() {
        for v in tensor {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    out
}

fn read_u32(bytes: &[u8], at: &mut usize) -> Option<u32> {
    let chunk = bytes.get(*at..*at + 4)?;
    *at += 4;
    Some(u32::from_le_bytes(chunk.try_into().ok()?))
}

pub fn decode_model(bytes: &[u8], origin: &Path) -> Result<MlpModel> {
    let bad = |m: &str| Error::format(origin, m.to_string());
    if bytes.len() < 12 || &bytes[..4] != MODEL_MAGIC {
        return Err(bad("missing LMLP magic"));
    }
    let mut at = 4;
    let version = read_u32(bytes, &mut at).ok_or_else(|| bad("truncated header"))?;
    if version != MODEL_VERSION {
        return Err(bad(&format!("unsupported model version {version}")));
    }
    let count = read_u32(bytes, &mut at).ok_or_else(|| bad("truncated header"))? as usize;
    if count < 2 || count > 64 {
        return Err(bad(&format!("implausible layer count {count}")));
    }
    let mut dims = Vec::with_capacity(count);
    for _ in 0..count {
        dims.push(read_u32(bytes, &mut at).ok_or_else(|| bad("truncated layer dims"))? as usize);
    }
    if dims.contains(&0) {
        return Err(bad("zero layer dimension"));
    }
    let expected: usize = dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
    if bytes.len() != at + 4 * expected {
        return Err(bad(&format!(
            "payload is {} bytes, expected {}",
            bytes.len() - at,
            4 * expected
        )));
    }
    let mut floats = bytes[at..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64);
    let mut params = Vec::with_capacity(count - 1);
    for w in dims.windows(2) {
        let weights: Vec<f64> = floats.by_ref().take(w[0] * w[1]).collect();
        let biases: Vec<f64> = floats.by_ref().take(w[1]).collect();
        params.push((weights, biases));
    }
    MlpModel::from_parameters(&dims, params).map_err(|e| bad(&e.to_string()))
}

pub fn write_model<W: Write>(model: &MlpModel, mut writer: W) -> std::io::Result<()> {
    writer.write_all(&encode_model(model))
}

pub fn save_model(model: &MlpModel, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_model(model, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<MlpModel> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?)
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    decode_model(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let model = MlpModel::zeros(&[3, 2]).unwrap();
        let bytes = encode_model(&model);
        assert_eq!(&bytes[..4], b"LMLP");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 2);
        assert_eq!(bytes.len(), 12 + 8 + 4 * (6 + 2));
    }

    #[test]
    fn f32_representable_models_round_trip_exactly() {
        let mut model = MlpModel::seeded(&[5, 4, 3], 8).unwrap();
        for layer in model.layers_mut() {
            layer.weights_mut().iter_mut().for_each(|w| *w = *w as f32 as f64);
        }
        let back = decode_model(&encode_model(&model), Path::new("mem")).unwrap();
        assert_eq!(back, model);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let model = MlpModel::zeros(&[3, 2]).unwrap();
        let mut bytes = encode_model(&model);
        assert!(matches!(decode_model(&bytes[..bytes.len() - 1], Path::new("m")), Err(Error::Format { .. })));
        bytes[0] = b'X';
        assert!(matches!(decode_model(&bytes, Path::new("m")), Err(Error::Format { .. })));
    }
}
