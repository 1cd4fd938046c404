use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{sidecar_path, Affine, Dtype, VolumeFile, VoxelData};
use crate::error::{Error, Result};
use crate::volume::{Shape3, VoxelSpacing};

/// JSON sidecar of a little-endian raw payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSidecar {
    pub dims: [usize; 3],
    pub channels: usize,
    pub spacing: [f64; 3],
    pub dtype: Dtype,
    pub affine: Affine,
}

pub(super) fn read(path: &Path) -> Result<VolumeFile> {
    let side = sidecar_path(path);
    let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let meta: RawSidecar = serde_json::from_str(&text)?;
    let shape = Shape3::new(meta.dims[0], meta.dims[1], meta.dims[2])?;
    let spacing = VoxelSpacing::new(meta.spacing[0], meta.spacing[1], meta.spacing[2])?;
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let expected = shape.len() * meta.channels * meta.dtype.size();
    if bytes.len() < expected {
        return Err(Error::Truncated {
            expected,
            actual: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(Error::Header(format!(
            "payload has {} bytes, sidecar declares {expected}",
            bytes.len()
        )));
    }
    let data = match meta.dtype {
        Dtype::U8 => VoxelData::U8(bytes),
        Dtype::I16 => VoxelData::I16(
            bytes
                .chunks_exact(2)
                .map(|c| i16::from_le_bytes([c[0], c[1]]))
                .collect(),
        ),
        Dtype::F32 => VoxelData::F32(
            bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect(),
        ),
    };
    Ok(VolumeFile {
        shape,
        channels: meta.channels,
        spacing,
        affine: meta.affine,
        data,
    })
}

pub(super) fn write(vf: &VolumeFile, path: &Path) -> Result<()> {
    let meta = RawSidecar {
        dims: vf.shape.dims(),
        channels: vf.channels,
        spacing: vf.spacing.as_array(),
        dtype: vf.data.dtype(),
        affine: vf.affine,
    };
    let mut bytes = Vec::with_capacity(vf.data.len() * meta.dtype.size());
    match &vf.data {
        VoxelData::U8(v) => bytes.extend_from_slice(v),
        VoxelData::I16(v) => v.iter().for_each(|x| bytes.extend_from_slice(&x.to_le_bytes())),
        VoxelData::F32(v) => v.iter().for_each(|x| bytes.extend_from_slice(&x.to_le_bytes())),
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    let side = sidecar_path(path);
    let mut json = serde_json::to_string_pretty(&meta)?;
    json.push('\n');
    std::fs::write(&side, json).map_err(|e| Error::io(&side, e))
}
