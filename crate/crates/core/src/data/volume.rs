//! 3D scalar grids and the `LVOL` file format.
//!
//! `LVOL` layout: magic `LVOL`, version (u32 LE), depth, height, width
//! (u32 LE each), then `depth*height*width` f32 LE voxels in z-major,
//! row-major order.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::{Error, Result};

pub const VOLUME_MAGIC: &[u8; 4] = b"LVOL";
pub const VOLUME_VERSION: u32 = 1;
pub const VOLUME_HEADER_BYTES: usize = 20;

/// `(depth, height, width)`.
pub type Dims = [usize; 3];

#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    dims: Dims,
    voxels: Vec<f32>,
}

impl Volume {
    pub fn new(dims: Dims, voxels: Vec<f32>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::InvalidInput(format!("volume dims must be positive, got {dims:?}")));
        }
        if voxels.len() != dims.iter().product::<usize>() {
            return Err(Error::InvalidInput(format!(
                "{} voxels do not fill a {}x{}x{} grid",
                voxels.len(),
                dims[0],
                dims[1],
                dims[2]
            )));
        }
        if voxels.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("volume contains non-finite voxels".into()));
        }
        Ok(Self { dims, voxels })
    }

    pub fn filled(dims: Dims, value: f32) -> Result<Self> {
        Self::new(dims, vec![value; dims.iter().product()])
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn depth(&self) -> usize {
        self.dims[0]
    }

    pub fn voxels(&self) -> &[f32] {
        &self.voxels
    }

    pub fn into_voxels(self) -> Vec<f32> {
        self.voxels
    }

    pub fn get(&self, z: usize, y: usize, x: usize) -> f32 {
        self.voxels[(z * self.dims[1] + y) * self.dims[2] + x]
    }

    /// Contiguous voxels of slices `start..end` along depth.
    pub fn slices(&self, start: usize, end: usize) -> &[f32] {
        let plane = self.dims[1] * self.dims[2];
        &self.voxels[start * plane..end * plane]
    }
}

pub fn encode_volume(volume: &Volume) -> Vec<u8> {
    let mut out = Vec::with_capacity(VOLUME_HEADER_BYTES + 4 * volume.voxels.len());
    out.extend_from_slice(VOLUME_MAGIC);
    out.extend_from_slice(&VOLUME_VERSION.to_le_bytes());
    for d in volume.dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in &volume.voxels {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_volume(bytes: &[u8], origin: &Path) -> Result<Volume> {
    if bytes.len() < VOLUME_HEADER_BYTES || &bytes[..4] != VOLUME_MAGIC {
        return Err(Error::format(origin, "missing LVOL magic or truncated header"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
    let version = word(4);
    if version != VOLUME_VERSION {
        return Err(Error::format(origin, format!("unsupported volume version {version}")));
    }
    let dims = [word(8) as usize, word(12) as usize, word(16) as usize];
    let count = dims.iter().try_fold(1usize, |acc, d| acc.checked_mul(*d));
    let expected = count.and_then(|c| c.checked_mul(4));
    if expected != Some(bytes.len() - VOLUME_HEADER_BYTES) {
        return Err(Error::format(
            origin,
            format!("payload of {} bytes does not match dims {dims:?}", bytes.len() - VOLUME_HEADER_BYTES),
        ));
    }
    let voxels = bytes[VOLUME_HEADER_BYTES..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Volume::new(dims, voxels).map_err(|e| Error::format(origin, e.to_string()))
}

pub fn save_volume(volume: &Volume, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&encode_volume(volume)).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_volume(path: &Path) -> Result<Volume> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode_volume(&bytes, path)
}
