//! Volume files: single-file NIfTI-1 (`.nii`, `.nii.gz`) and raw payloads
//! with a JSON sidecar (`.raw` + `.json`).

mod nifti;
mod raw;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{LabelVolume, ProbVolume, Shape3, VoxelSpacing};

pub use nifti::{decode_nifti, encode_nifti};
pub use raw::RawSidecar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VolumeFormat {
    Nifti,
    NiftiGz,
    Raw,
}

impl VolumeFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if name.ends_with(".nii.gz") {
            Ok(Self::NiftiGz)
        } else if name.ends_with(".nii") {
            Ok(Self::Nifti)
        } else if name.ends_with(".raw") {
            Ok(Self::Raw)
        } else {
            Err(Error::InvalidParameter(format!(
                "cannot infer volume format of {} (expected .nii, .nii.gz or .raw)",
                path.display()
            )))
        }
    }
}

/// Strips `.nii.gz`, `.nii` or `.raw` from a file name.
pub fn volume_stem(path: &Path) -> Option<String> {
    let name = path.file_name()?.to_str()?;
    [".nii.gz", ".nii", ".raw"]
        .iter()
        .find_map(|ext| name.strip_suffix(ext))
        .map(str::to_string)
}

/// Sidecar path of a raw payload.
pub fn sidecar_path(raw: &Path) -> PathBuf {
    raw.with_extension("json")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    U8,
    I16,
    F32,
}

impl Dtype {
    pub fn nifti_code(self) -> i16 {
        match self {
            Dtype::U8 => 2,
            Dtype::I16 => 4,
            Dtype::F32 => 16,
        }
    }

    pub fn from_nifti_code(code: i16) -> Result<Self> {
        match code {
            2 => Ok(Dtype::U8),
            4 => Ok(Dtype::I16),
            16 => Ok(Dtype::F32),
            other => Err(Error::UnsupportedDatatype(other)),
        }
    }

    pub fn size(self) -> usize {
        match self {
            Dtype::U8 => 1,
            Dtype::I16 => 2,
            Dtype::F32 => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum VoxelData {
    U8(Vec<u8>),
    I16(Vec<i16>),
    F32(Vec<f32>),
}

impl VoxelData {
    pub fn dtype(&self) -> Dtype {
        match self {
            VoxelData::U8(_) => Dtype::U8,
            VoxelData::I16(_) => Dtype::I16,
            VoxelData::F32(_) => Dtype::F32,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            VoxelData::U8(v) => v.len(),
            VoxelData::I16(v) => v.len(),
            VoxelData::F32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn values(&self) -> Vec<f64> {
        match self {
            VoxelData::U8(v) => v.iter().map(|&x| f64::from(x)).collect(),
            VoxelData::I16(v) => v.iter().map(|&x| f64::from(x)).collect(),
            VoxelData::F32(v) => v.iter().map(|&x| f64::from(x)).collect(),
        }
    }
}

/// Row-major 3x4 voxel-to-world matrix; stored and written back, only the
/// spacing is used.
pub type Affine = [[f64; 4]; 3];

pub fn diagonal_affine(spacing: VoxelSpacing) -> Affine {
    let s = spacing.as_array();
    [[s[0], 0.0, 0.0, 0.0], [0.0, s[1], 0.0, 0.0], [0.0, 0.0, s[2], 0.0]]
}

/// A decoded volume: `channels` consecutive 3D blocks (the fourth NIfTI
/// dimension), x fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeFile {
    pub shape: Shape3,
    pub channels: usize,
    pub spacing: VoxelSpacing,
    pub affine: Affine,
    pub data: VoxelData,
}

impl VolumeFile {
    fn check(&self) -> Result<()> {
        let expected = self.shape.len() * self.channels;
        if self.channels == 0 || self.data.len() != expected {
            return Err(Error::Header(format!(
                "{} voxels declared, {} stored",
                expected,
                self.data.len()
            )));
        }
        Ok(())
    }

    /// Stored as uint8 when every label fits, int16 otherwise.
    pub fn from_labels(vol: &LabelVolume) -> Result<Self> {
        let max = vol.max_label();
        let data = if max <= u16::from(u8::MAX) {
            VoxelData::U8(vol.data().iter().map(|&l| l as u8).collect())
        } else if max <= i16::MAX as u16 {
            VoxelData::I16(vol.data().iter().map(|&l| l as i16).collect())
        } else {
            return Err(Error::InvalidParameter(format!("label {max} does not fit int16")));
        };
        Ok(Self {
            shape: vol.shape(),
            channels: 1,
            spacing: vol.spacing(),
            affine: diagonal_affine(vol.spacing()),
            data,
        })
    }

    pub fn from_probs(vol: &ProbVolume, spacing: VoxelSpacing) -> Self {
        Self {
            shape: vol.shape(),
            channels: vol.channels(),
            spacing,
            affine: diagonal_affine(spacing),
            data: VoxelData::F32(vol.data().iter().map(|&v| v as f32).collect()),
        }
    }

    /// Integer-valued single-channel data as labels. Float payloads are
    /// accepted when every value is a non-negative integer.
    pub fn into_labels(self) -> Result<LabelVolume> {
        if self.channels != 1 {
            return Err(Error::Header(format!(
                "label volume must have one channel, found {}",
                self.channels
            )));
        }
        let bad = |index: usize, value: f64| Error::Header(format!("voxel {index} holds {value}, not a label"));
        let data = match self.data {
            VoxelData::U8(v) => v.into_iter().map(u16::from).collect(),
            VoxelData::I16(v) => v
                .into_iter()
                .enumerate()
                .map(|(i, x)| u16::try_from(x).map_err(|_| bad(i, f64::from(x))))
                .collect::<Result<_>>()?,
            VoxelData::F32(v) => v
                .into_iter()
                .enumerate()
                .map(|(i, x)| {
                    if x >= 0.0 && x.fract() == 0.0 && x <= f32::from(u16::MAX) {
                        Ok(x as u16)
                    } else {
                        Err(bad(i, f64::from(x)))
                    }
                })
                .collect::<Result<_>>()?,
        };
        LabelVolume::new(self.shape, self.spacing, data)
    }

    /// Channel-major probabilities; a single-channel file is rejected.
    pub fn into_probs(self) -> Result<ProbVolume> {
        if self.channels < 2 {
            return Err(Error::Header("probability volume needs at least 2 channels".into()));
        }
        ProbVolume::new(self.channels, self.shape, self.data.values())
    }
}

pub fn read_volume(path: &Path) -> Result<VolumeFile> {
    let vf = match VolumeFormat::from_path(path)? {
        VolumeFormat::Nifti | VolumeFormat::NiftiGz => {
            let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
            decode_nifti(&bytes)?
        }
        VolumeFormat::Raw => raw::read(path)?,
    };
    vf.check()?;
    Ok(vf)
}

/// Byte-deterministic for identical input.
pub fn write_volume(vf: &VolumeFile, path: &Path) -> Result<()> {
    vf.check()?;
    match VolumeFormat::from_path(path)? {
        VolumeFormat::Nifti => write_bytes(path, &encode_nifti(vf, false)?),
        VolumeFormat::NiftiGz => write_bytes(path, &encode_nifti(vf, true)?),
        VolumeFormat::Raw => raw::write(vf, path),
    }
}

pub fn read_labels(path: &Path) -> Result<LabelVolume> {
    read_volume(path)?.into_labels()
}

pub fn write_labels(vol: &LabelVolume, path: &Path) -> Result<()> {
    write_volume(&VolumeFile::from_labels(vol)?, path)
}

pub fn read_probs(path: &Path) -> Result<ProbVolume> {
    read_volume(path)?.into_probs()
}

pub fn write_probs(vol: &ProbVolume, spacing: VoxelSpacing, path: &Path) -> Result<()> {
    write_volume(&VolumeFile::from_probs(vol, spacing), path)
}

/// A prediction given either as labels or as per-class probabilities.
#[derive(Debug, Clone)]
pub enum Prediction {
    Labels(LabelVolume),
    Probs(ProbVolume, VoxelSpacing),
}

pub fn read_prediction(path: &Path) -> Result<Prediction> {
    let vf = read_volume(path)?;
    if vf.channels > 1 {
        let spacing = vf.spacing;
        Ok(Prediction::Probs(vf.into_probs()?, spacing))
    } else {
        Ok(Prediction::Labels(vf.into_labels()?))
    }
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
