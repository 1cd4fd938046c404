use std::io::{Read, Write};

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use super::{Affine, Dtype, VolumeFile, VoxelData};
use crate::error::{Error, Result};
use crate::volume::{Shape3, VoxelSpacing};

const HEADER_LEN: usize = 348;
const VOX_OFFSET: usize = 352;
const MAGIC: [u8; 4] = *b"n+1\0";

#[derive(Clone, Copy)]
enum Endian {
    Little,
    Big,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    endian: Endian,
}

impl Cursor<'_> {
    fn take<const N: usize>(&self, at: usize) -> [u8; N] {
        self.bytes[at..at + N].try_into().expect("header length checked")
    }

    fn i16(&self, at: usize) -> i16 {
        match self.endian {
            Endian::Little => i16::from_le_bytes(self.take(at)),
            Endian::Big => i16::from_be_bytes(self.take(at)),
        }
    }

    fn f32(&self, at: usize) -> f32 {
        match self.endian {
            Endian::Little => f32::from_le_bytes(self.take(at)),
            Endian::Big => f32::from_be_bytes(self.take(at)),
        }
    }

    /// Header floats widened through their shortest decimal form, so a
    /// spacing of 0.8 written as f32 reads back as 0.8.
    fn decimal(&self, at: usize) -> f64 {
        self.f32(at).to_string().parse().expect("f32 display parses")
    }
}

fn gunzip(bytes: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    match GzDecoder::new(bytes).read_to_end(&mut out) {
        Ok(_) => Ok(out),
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => Err(Error::Truncated {
            expected: out.len() + 1,
            actual: out.len(),
        }),
        Err(e) => Err(Error::Header(format!("gzip stream: {e}"))),
    }
}

/// Parses a single-file NIfTI-1 image; gzip is detected from the leading
/// bytes, byte order from `sizeof_hdr`.
pub fn decode_nifti(bytes: &[u8]) -> Result<VolumeFile> {
    let owned;
    let bytes = if bytes.starts_with(&[0x1f, 0x8b]) {
        owned = gunzip(bytes)?;
        &owned[..]
    } else {
        bytes
    };
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated {
            expected: HEADER_LEN,
            actual: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[344..348].try_into().expect("length checked");
    if magic != MAGIC {
        return Err(Error::BadMagic(magic));
    }
    let endian = if i32::from_le_bytes(bytes[0..4].try_into().expect("length checked")) == HEADER_LEN as i32 {
        Endian::Little
    } else if i32::from_be_bytes(bytes[0..4].try_into().expect("length checked")) == HEADER_LEN as i32 {
        Endian::Big
    } else {
        return Err(Error::Header("sizeof_hdr is not 348".into()));
    };
    let h = Cursor { bytes, endian };

    let ndim = h.i16(40);
    if !(1..=4).contains(&ndim) {
        return Err(Error::Header(format!("unsupported dimensionality {ndim}")));
    }
    let mut dims = [1usize; 4];
    for (d, slot) in dims.iter_mut().enumerate().take(ndim as usize) {
        let v = h.i16(42 + 2 * d);
        if v < 1 {
            return Err(Error::Header(format!("dim[{}] = {v}", d + 1)));
        }
        *slot = v as usize;
    }
    let dtype = Dtype::from_nifti_code(h.i16(70))?;
    let pix = [h.decimal(80), h.decimal(84), h.decimal(88)].map(f64::abs);
    let spacing =
        VoxelSpacing::new(pix[0], pix[1], pix[2]).map_err(|_| Error::Header(format!("pixdim {pix:?} not positive")))?;
    let vox_offset = h.f32(108);
    if !(vox_offset >= HEADER_LEN as f32) || vox_offset.fract() != 0.0 {
        return Err(Error::Header(format!("vox_offset {vox_offset}")));
    }
    let vox_offset = vox_offset as usize;
    let (slope, inter) = (h.f32(112), h.f32(116));

    let affine: Affine = if h.i16(254) > 0 {
        std::array::from_fn(|r| std::array::from_fn(|c| h.decimal(280 + 16 * r + 4 * c)))
    } else {
        super::diagonal_affine(spacing)
    };

    let shape = Shape3::new(dims[0], dims[1], dims[2])?;
    let count = shape.len() * dims[3];
    let expected = vox_offset + count * dtype.size();
    if bytes.len() < expected {
        return Err(Error::Truncated {
            expected,
            actual: bytes.len(),
        });
    }
    let payload = &bytes[vox_offset..expected];
    let data = match dtype {
        Dtype::U8 => VoxelData::U8(payload.to_vec()),
        Dtype::I16 => VoxelData::I16(
            payload
                .chunks_exact(2)
                .map(|c| {
                    let b = [c[0], c[1]];
                    match endian {
                        Endian::Little => i16::from_le_bytes(b),
                        Endian::Big => i16::from_be_bytes(b),
                    }
                })
                .collect(),
        ),
        Dtype::F32 => {
            let scale = slope != 0.0 && (slope != 1.0 || inter != 0.0);
            VoxelData::F32(
                payload
                    .chunks_exact(4)
                    .map(|c| {
                        let b = [c[0], c[1], c[2], c[3]];
                        let v = match endian {
                            Endian::Little => f32::from_le_bytes(b),
                            Endian::Big => f32::from_be_bytes(b),
                        };
                        if scale {
                            v * slope + inter
                        } else {
                            v
                        }
                    })
                    .collect(),
            )
        }
    };
    Ok(VolumeFile {
        shape,
        channels: dims[3],
        spacing,
        affine,
        data,
    })
}

fn put(buf: &mut [u8], at: usize, bytes: &[u8]) {
    buf[at..at + bytes.len()].copy_from_slice(bytes);
}

/// Little-endian NIfTI-1 with the sform taken from `vf.affine`; gzip
/// output carries no timestamp or file name.
pub fn encode_nifti(vf: &VolumeFile, gzip: bool) -> Result<Vec<u8>> {
    let [nx, ny, nz] = vf.shape.dims();
    let mut dims = [nx, ny, nz, vf.channels];
    let ndim: i16 = if vf.channels > 1 { 4 } else { 3 };
    if dims.iter().any(|&d| d > i16::MAX as usize) {
        return Err(Error::InvalidParameter(format!(
            "dimensions {dims:?} exceed NIfTI-1 limits"
        )));
    }
    if ndim == 3 {
        dims[3] = 1;
    }
    let dtype = vf.data.dtype();
    let mut buf = vec![0u8; VOX_OFFSET];
    put(&mut buf, 0, &(HEADER_LEN as i32).to_le_bytes());
    put(&mut buf, 38, b"r");
    put(&mut buf, 40, &ndim.to_le_bytes());
    for (d, &v) in dims.iter().enumerate() {
        put(&mut buf, 42 + 2 * d, &(v as i16).to_le_bytes());
    }
    for d in 4..7 {
        put(&mut buf, 42 + 2 * d, &1i16.to_le_bytes());
    }
    put(&mut buf, 70, &dtype.nifti_code().to_le_bytes());
    put(&mut buf, 72, &(8 * dtype.size() as i16).to_le_bytes());
    let s = vf.spacing.as_array();
    let pixdim = [1.0, s[0], s[1], s[2], 1.0, 1.0, 1.0, 1.0];
    for (d, &v) in pixdim.iter().enumerate() {
        put(&mut buf, 76 + 4 * d, &(v as f32).to_le_bytes());
    }
    put(&mut buf, 108, &(VOX_OFFSET as f32).to_le_bytes());
    put(&mut buf, 112, &1f32.to_le_bytes());
    // mm, no time unit
    buf[123] = 2;
    put(&mut buf, 254, &1i16.to_le_bytes());
    for (r, row) in vf.affine.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            put(&mut buf, 280 + 16 * r + 4 * c, &(v as f32).to_le_bytes());
        }
    }
    put(&mut buf, 344, &MAGIC);

    buf.reserve(vf.data.len() * dtype.size());
    match &vf.data {
        VoxelData::U8(v) => buf.extend_from_slice(v),
        VoxelData::I16(v) => v.iter().for_each(|x| buf.extend_from_slice(&x.to_le_bytes())),
        VoxelData::F32(v) => v.iter().for_each(|x| buf.extend_from_slice(&x.to_le_bytes())),
    }
    if !gzip {
        return Ok(buf);
    }
    let mut enc = GzEncoder::new(Vec::new(), Compression::default());
    enc.write_all(&buf)
        .and_then(|_| enc.finish())
        .map_err(|e| Error::Header(format!("gzip: {e}")))
}
