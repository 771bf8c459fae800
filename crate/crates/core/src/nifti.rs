//! Single-file NIfTI-1 (`.nii` / `.nii.gz`) reading and writing.
//!
//! Reads accept little- and big-endian headers, the uint8, int16, int32,
//! float32 and float64 datatypes, and 4D+ files whose extra dimensions are
//! all 1. Writes are always little-endian with a 352-byte data offset. A
//! `.nii.gz` path is gzip-compressed with fixed settings (level, zero mtime,
//! unknown OS byte) so identical volumes serialize to identical bytes.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use crate::error::{Error, Result};
use crate::volume::{GridShape, HeaderMeta, LabelMask, SoftLabelMask, Spacing, Volume3D};

const HEADER_SIZE: usize = 348;
const VOX_OFFSET: usize = 352;
const MAGIC: &[u8; 4] = b"n+1\0";
pub const GZIP_LEVEL: u32 = 6;
/// Tolerance when deciding whether a decoded label value is 0 or 1.
pub const LABEL_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NiftiDataType {
    Uint8,
    Int16,
    Int32,
    Float32,
    Float64,
}

impl NiftiDataType {
    pub const ALL: [NiftiDataType; 5] = [
        NiftiDataType::Uint8,
        NiftiDataType::Int16,
        NiftiDataType::Int32,
        NiftiDataType::Float32,
        NiftiDataType::Float64,
    ];

    pub fn code(self) -> i16 {
        match self {
            NiftiDataType::Uint8 => 2,
            NiftiDataType::Int16 => 4,
            NiftiDataType::Int32 => 8,
            NiftiDataType::Float32 => 16,
            NiftiDataType::Float64 => 64,
        }
    }

    pub fn from_code(code: i16) -> Option<Self> {
        Self::ALL.into_iter().find(|d| d.code() == code)
    }

    pub fn size(self) -> usize {
        match self {
            NiftiDataType::Uint8 => 1,
            NiftiDataType::Int16 => 2,
            NiftiDataType::Int32 | NiftiDataType::Float32 => 4,
            NiftiDataType::Float64 => 8,
        }
    }

    /// Representable range of the integer types.
    pub fn range(self) -> Option<(f64, f64)> {
        match self {
            NiftiDataType::Uint8 => Some((0.0, u8::MAX as f64)),
            NiftiDataType::Int16 => Some((i16::MIN as f64, i16::MAX as f64)),
            NiftiDataType::Int32 => Some((i32::MIN as f64, i32::MAX as f64)),
            NiftiDataType::Float32 | NiftiDataType::Float64 => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endian {
    Little,
    Big,
}

/// The header fields this crate interprets.
#[derive(Debug, Clone, PartialEq)]
pub struct NiftiHeader {
    pub shape: GridShape,
    pub spacing: Spacing,
    pub datatype: NiftiDataType,
    pub scl_slope: f32,
    pub scl_inter: f32,
    pub vox_offset: usize,
    pub endian: Endian,
    pub meta: HeaderMeta,
}

impl NiftiHeader {
    /// Whether `scl_slope`/`scl_inter` change stored values.
    pub fn has_scaling(&self) -> bool {
        self.scl_slope.is_finite()
            && self.scl_slope != 0.0
            && !(self.scl_slope == 1.0 && self.scl_inter == 0.0)
    }
}

struct Fields<'a> {
    bytes: &'a [u8],
    endian: Endian,
}

impl Fields<'_> {
    fn take<const N: usize>(&self, off: usize) -> [u8; N] {
        let mut b = [0u8; N];
        b.copy_from_slice(&self.bytes[off..off + N]);
        if self.endian == Endian::Big {
            b.reverse();
        }
        b
    }

    fn i16(&self, off: usize) -> i16 {
        i16::from_le_bytes(self.take(off))
    }

    fn i32(&self, off: usize) -> i32 {
        i32::from_le_bytes(self.take(off))
    }

    fn f32(&self, off: usize) -> f32 {
        f32::from_le_bytes(self.take(off))
    }

    fn f32s<const N: usize>(&self, off: usize) -> [f32; N] {
        std::array::from_fn(|k| self.f32(off + 4 * k))
    }
}

fn corrupt(path: &Path, field: &'static str, reason: impl Into<String>) -> Error {
    Error::CorruptHeader {
        path: path.to_path_buf(),
        field,
        reason: reason.into(),
    }
}

pub fn is_gzip_path(path: &Path) -> bool {
    path.to_string_lossy().ends_with(".gz")
}

fn read_file_bytes(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::with_capacity(raw.len() * 4);
        MultiGzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

/// Parses a header from the start of an uncompressed NIfTI-1 byte stream.
pub fn parse_header(bytes: &[u8], path: &Path) -> Result<NiftiHeader> {
    if bytes.len() < HEADER_SIZE {
        return Err(corrupt(
            path,
            "sizeof_hdr",
            format!("file holds {} bytes, header needs {HEADER_SIZE}", bytes.len()),
        ));
    }
    let size_le = i32::from_le_bytes(bytes[0..4].try_into().unwrap());
    let size_be = i32::from_be_bytes(bytes[0..4].try_into().unwrap());
    let endian = if size_le == HEADER_SIZE as i32 {
        Endian::Little
    } else if size_be == HEADER_SIZE as i32 {
        Endian::Big
    } else {
        return Err(corrupt(path, "sizeof_hdr", format!("expected 348, got {size_le}")));
    };
    let h = Fields { bytes, endian };

    if &bytes[344..348] != MAGIC {
        return Err(corrupt(
            path,
            "magic",
            format!("expected single-file \"n+1\", got {:?}", String::from_utf8_lossy(&bytes[344..348])),
        ));
    }

    let dim: [i16; 8] = std::array::from_fn(|k| h.i16(40 + 2 * k));
    let ndim = dim[0];
    if !(3..=7).contains(&ndim) {
        return Err(corrupt(path, "dim", format!("dim[0] = {ndim}, need a 3D volume")));
    }
    if let Some(extra) = (4..=ndim as usize).find(|&k| dim[k] != 1) {
        return Err(corrupt(
            path,
            "dim",
            format!("dim[{extra}] = {}, only singleton trailing dimensions are allowed", dim[extra]),
        ));
    }
    if dim[1..4].iter().any(|&d| d < 1) {
        return Err(corrupt(path, "dim", format!("non-positive extent in {:?}", &dim[1..4])));
    }
    let shape = GridShape::new(dim[1] as usize, dim[2] as usize, dim[3] as usize)
        .map_err(|e| corrupt(path, "dim", e.to_string()))?;

    let code = h.i16(70);
    let datatype = NiftiDataType::from_code(code).ok_or_else(|| Error::UnsupportedDatatype {
        path: path.to_path_buf(),
        code,
    })?;
    let bitpix = h.i16(72);
    if bitpix as usize != datatype.size() * 8 {
        return Err(corrupt(
            path,
            "bitpix",
            format!("{bitpix} does not match datatype {code}"),
        ));
    }

    let pixdim: [f32; 8] = h.f32s(76);
    let spacing = Spacing::new(
        pixdim[1].abs() as f64,
        pixdim[2].abs() as f64,
        pixdim[3].abs() as f64,
    )
    .map_err(|e| corrupt(path, "pixdim", e.to_string()))?;

    let vox_offset = h.f32(108);
    if !(vox_offset.is_finite() && vox_offset >= HEADER_SIZE as f32) {
        return Err(corrupt(path, "vox_offset", format!("{vox_offset}")));
    }

    let mut descrip = [0u8; 80];
    descrip.copy_from_slice(&bytes[148..228]);
    let meta = HeaderMeta {
        qform_code: h.i16(252),
        sform_code: h.i16(254),
        quatern: h.f32s(256),
        qoffset: h.f32s(268),
        qfac: if pixdim[0] < 0.0 { -1.0 } else { 1.0 },
        srow_x: h.f32s(280),
        srow_y: h.f32s(296),
        srow_z: h.f32s(312),
        xyzt_units: bytes[123],
        descrip,
    };

    Ok(NiftiHeader {
        shape,
        spacing,
        datatype,
        scl_slope: h.f32(112),
        scl_inter: h.f32(116),
        vox_offset: vox_offset as usize,
        endian,
        meta,
    })
}

fn decode_values(bytes: &[u8], header: &NiftiHeader, path: &Path) -> Result<Vec<f64>> {
    let n = header.shape.len();
    let size = header.datatype.size();
    let start = header.vox_offset;
    let end = start + n * size;
    if bytes.len() < end {
        return Err(corrupt(
            path,
            "vox_offset",
            format!("data needs {end} bytes, file holds {}", bytes.len()),
        ));
    }
    let fields = Fields {
        bytes: &bytes[start..end],
        endian: header.endian,
    };
    let raw: Vec<f64> = match header.datatype {
        NiftiDataType::Uint8 => fields.bytes.iter().map(|&b| b as f64).collect(),
        NiftiDataType::Int16 => (0..n).map(|k| fields.i16(2 * k) as f64).collect(),
        NiftiDataType::Int32 => (0..n).map(|k| fields.i32(4 * k) as f64).collect(),
        NiftiDataType::Float32 => (0..n).map(|k| fields.f32(4 * k) as f64).collect(),
        NiftiDataType::Float64 => (0..n)
            .map(|k| f64::from_le_bytes(fields.take(8 * k)))
            .collect(),
    };
    if header.has_scaling() {
        let (slope, inter) = (header.scl_slope as f64, header.scl_inter as f64);
        Ok(raw.into_iter().map(|v| v * slope + inter).collect())
    } else {
        Ok(raw)
    }
}

/// Header plus scaled voxel values, without any interpretation.
pub fn read_values(path: impl AsRef<Path>) -> Result<(NiftiHeader, Vec<f64>)> {
    let path = path.as_ref();
    let bytes = read_file_bytes(path)?;
    let header = parse_header(&bytes, path)?;
    let values = decode_values(&bytes, &header, path)?;
    Ok((header, values))
}

pub fn read_header(path: impl AsRef<Path>) -> Result<NiftiHeader> {
    let path = path.as_ref();
    let bytes = read_file_bytes(path)?;
    parse_header(&bytes, path)
}

pub fn read_volume(path: impl AsRef<Path>) -> Result<Volume3D> {
    let path = path.as_ref();
    let (header, values) = read_values(path)?;
    let data = values.into_iter().map(|v| v as f32).collect();
    Volume3D::new(header.shape, header.spacing, data)
        .map(|v| v.with_meta(header.meta))
        .map_err(|e| Error::InvalidData(format!("{}: {e}", path.display())))
}

/// Voxels that are neither 0 nor 1 within [`LABEL_TOLERANCE`]: the distinct
/// offending values (at most 16, sorted) and their total count.
pub fn non_binary_values(values: &[f64]) -> (Vec<f64>, usize) {
    let mut bad: Vec<f64> = values
        .iter()
        .copied()
        .filter(|&v| !((v - 0.0).abs() <= LABEL_TOLERANCE || (v - 1.0).abs() <= LABEL_TOLERANCE))
        .collect();
    let count = bad.len();
    bad.sort_by(|a, b| a.total_cmp(b));
    bad.dedup();
    bad.truncate(16);
    (bad, count)
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<LabelMask> {
    let path = path.as_ref();
    let (header, values) = read_values(path)?;
    let (bad, count) = non_binary_values(&values);
    if count > 0 {
        return Err(Error::NonBinaryLabel {
            path: path.to_path_buf(),
            values: bad,
            count,
        });
    }
    let data = values.iter().map(|&v| (v > 0.5) as u8).collect();
    Ok(LabelMask::new(header.shape, header.spacing, data)?.with_meta(header.meta))
}

fn encode_header(
    shape: GridShape,
    spacing: Spacing,
    datatype: NiftiDataType,
    meta: &HeaderMeta,
) -> Vec<u8> {
    let mut h = vec![0u8; VOX_OFFSET];
    let put = |h: &mut Vec<u8>, off: usize, b: &[u8]| h[off..off + b.len()].copy_from_slice(b);

    put(&mut h, 0, &(HEADER_SIZE as i32).to_le_bytes());
    h[38] = b'r';
    let dims = [3i16, shape.nx as i16, shape.ny as i16, shape.nz as i16, 1, 1, 1, 1];
    for (k, d) in dims.iter().enumerate() {
        put(&mut h, 40 + 2 * k, &d.to_le_bytes());
    }
    put(&mut h, 70, &datatype.code().to_le_bytes());
    put(&mut h, 72, &((datatype.size() * 8) as i16).to_le_bytes());
    let s = spacing.as_array();
    let pixdim = [meta.qfac, s[0] as f32, s[1] as f32, s[2] as f32, 0.0, 0.0, 0.0, 0.0];
    for (k, p) in pixdim.iter().enumerate() {
        put(&mut h, 76 + 4 * k, &p.to_le_bytes());
    }
    put(&mut h, 108, &(VOX_OFFSET as f32).to_le_bytes());
    put(&mut h, 112, &1f32.to_le_bytes());
    put(&mut h, 116, &0f32.to_le_bytes());
    h[123] = meta.xyzt_units;
    put(&mut h, 148, &meta.descrip);
    put(&mut h, 252, &meta.qform_code.to_le_bytes());
    put(&mut h, 254, &meta.sform_code.to_le_bytes());
    let floats = meta
        .quatern
        .iter()
        .chain(&meta.qoffset)
        .chain(&meta.srow_x)
        .chain(&meta.srow_y)
        .chain(&meta.srow_z);
    for (k, f) in floats.enumerate() {
        put(&mut h, 256 + 4 * k, &f.to_le_bytes());
    }
    put(&mut h, 344, MAGIC);
    h
}

fn check_extents(shape: GridShape) -> Result<()> {
    if shape.dims().iter().any(|&n| n > i16::MAX as usize) {
        return Err(Error::InvalidGrid(format!(
            "{shape} does not fit NIfTI-1 16-bit dimensions"
        )));
    }
    Ok(())
}

fn gzip(bytes: &[u8]) -> Vec<u8> {
    let mut enc = GzEncoder::new(Vec::with_capacity(bytes.len() / 2), Compression::new(GZIP_LEVEL));
    enc.write_all(bytes).expect("writing to a Vec cannot fail");
    enc.finish().expect("writing to a Vec cannot fail")
}

fn finish_file(raw: Vec<u8>, gzipped: bool) -> Vec<u8> {
    if gzipped {
        gzip(&raw)
    } else {
        raw
    }
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Encodes a full single-file NIfTI-1 image (header, extension flag, data).
pub fn encode_values(
    shape: GridShape,
    spacing: Spacing,
    meta: &HeaderMeta,
    datatype: NiftiDataType,
    values: impl ExactSizeIterator<Item = f64>,
) -> Result<Vec<u8>> {
    check_extents(shape)?;
    let mut out = encode_header(shape, spacing, datatype, meta);
    out.reserve(values.len() * datatype.size());
    for v in values {
        if let Some((lo, hi)) = datatype.range() {
            if v.fract() != 0.0 || v < lo || v > hi {
                return Err(Error::InvalidData(format!(
                    "value {v} is not representable as {datatype:?}"
                )));
            }
        }
        match datatype {
            NiftiDataType::Uint8 => out.push(v as u8),
            NiftiDataType::Int16 => out.extend_from_slice(&(v as i16).to_le_bytes()),
            NiftiDataType::Int32 => out.extend_from_slice(&(v as i32).to_le_bytes()),
            NiftiDataType::Float32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
            NiftiDataType::Float64 => out.extend_from_slice(&v.to_le_bytes()),
        }
    }
    Ok(out)
}

/// File contents for `volume` stored as `datatype`, gzipped if asked.
pub fn volume_file_bytes(volume: &Volume3D, datatype: NiftiDataType, gzipped: bool) -> Result<Vec<u8>> {
    let raw = encode_values(
        volume.shape(),
        volume.spacing(),
        volume.meta(),
        datatype,
        volume.data().iter().map(|&v| v as f64),
    )?;
    Ok(finish_file(raw, gzipped))
}

/// File contents for a binary mask stored as uint8.
pub fn mask_file_bytes(mask: &LabelMask, gzipped: bool) -> Result<Vec<u8>> {
    check_extents(mask.shape())?;
    let mut raw = encode_header(mask.shape(), mask.spacing(), NiftiDataType::Uint8, mask.meta());
    raw.extend_from_slice(mask.data());
    Ok(finish_file(raw, gzipped))
}

/// File contents for a soft mask stored as float32.
pub fn soft_mask_file_bytes(mask: &SoftLabelMask, gzipped: bool) -> Result<Vec<u8>> {
    let raw = encode_values(
        mask.shape(),
        mask.spacing(),
        mask.meta(),
        NiftiDataType::Float32,
        mask.data().iter().map(|&v| v as f64),
    )?;
    Ok(finish_file(raw, gzipped))
}

fn with_path<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::InvalidData(msg) => Error::InvalidData(format!("{}: {msg}", path.display())),
        Error::InvalidGrid(msg) => Error::InvalidGrid(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Writes `volume` with an explicit on-disk datatype. Integer types require
/// integral in-range values.
pub fn write_volume_as(
    path: impl AsRef<Path>,
    volume: &Volume3D,
    datatype: NiftiDataType,
) -> Result<()> {
    let path = path.as_ref();
    let bytes = with_path(path, volume_file_bytes(volume, datatype, is_gzip_path(path)))?;
    write_bytes(path, &bytes)
}

/// Writes an image as float32.
pub fn write_volume(path: impl AsRef<Path>, volume: &Volume3D) -> Result<()> {
    write_volume_as(path, volume, NiftiDataType::Float32)
}

/// Writes a binary mask as uint8.
pub fn write_mask(path: impl AsRef<Path>, mask: &LabelMask) -> Result<()> {
    let path = path.as_ref();
    let bytes = with_path(path, mask_file_bytes(mask, is_gzip_path(path)))?;
    write_bytes(path, &bytes)
}

/// Writes a soft label as float32.
pub fn write_soft_mask(path: impl AsRef<Path>, mask: &SoftLabelMask) -> Result<()> {
    let path = path.as_ref();
    let bytes = with_path(path, soft_mask_file_bytes(mask, is_gzip_path(path)))?;
    write_bytes(path, &bytes)
}

/// Strips `.nii.gz` / `.nii` from a file name.
pub fn sample_id(path: &Path) -> Option<String> {
    let name = path.file_name()?.to_str()?;
    name.strip_suffix(".nii.gz")
        .or_else(|| name.strip_suffix(".nii"))
        .map(str::to_owned)
}

/// NIfTI files directly inside `dir`, sorted by sample id.
pub fn list_volumes(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if !path.is_file() {
            continue;
        }
        if let Some(id) = sample_id(&path) {
            out.push((id, path));
        }
    }
    out.sort();
    Ok(out)
}
