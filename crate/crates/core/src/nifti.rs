//! Minimal single-file NIfTI-1 codec (`.nii`, `.nii.gz`).
//!
//! Reads either byte order, writes little endian with `vox_offset = 352`.
//! Header fields the pipeline does not interpret are carried through
//! [`NiftiHeader`] so a read/write cycle echoes them.

use std::fs;
use std::io::{Cursor, Read, Write};
use std::path::Path;

use byteorder::{BigEndian, ByteOrder, LittleEndian, ReadBytesExt, WriteBytesExt};
use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use crate::error::{Error, Result};
use crate::volumes::{DataType, Volume4D};

pub const HEADER_SIZE: usize = 348;
pub const VOX_OFFSET: usize = 352;
pub const MAGIC_SINGLE: [u8; 4] = *b"n+1\0";
pub const MAGIC_PAIR: [u8; 4] = *b"ni1\0";

#[derive(Debug, Clone, PartialEq)]
pub struct NiftiHeader {
    pub sizeof_hdr: i32,
    pub data_type: [u8; 10],
    pub db_name: [u8; 18],
    pub extents: i32,
    pub session_error: i16,
    pub regular: u8,
    pub dim_info: u8,
    pub dim: [i16; 8],
    pub intent_p1: f32,
    pub intent_p2: f32,
    pub intent_p3: f32,
    pub intent_code: i16,
    pub datatype: i16,
    pub bitpix: i16,
    pub slice_start: i16,
    pub pixdim: [f32; 8],
    pub vox_offset: f32,
    pub scl_slope: f32,
    pub scl_inter: f32,
    pub slice_end: i16,
    pub slice_code: u8,
    pub xyzt_units: u8,
    pub cal_max: f32,
    pub cal_min: f32,
    pub slice_duration: f32,
    pub toffset: f32,
    pub glmax: i32,
    pub glmin: i32,
    pub descrip: [u8; 80],
    pub aux_file: [u8; 24],
    pub qform_code: i16,
    pub sform_code: i16,
    pub quatern_b: f32,
    pub quatern_c: f32,
    pub quatern_d: f32,
    pub qoffset_x: f32,
    pub qoffset_y: f32,
    pub qoffset_z: f32,
    pub srow_x: [f32; 4],
    pub srow_y: [f32; 4],
    pub srow_z: [f32; 4],
    pub intent_name: [u8; 16],
    pub magic: [u8; 4],
}

impl Default for NiftiHeader {
    fn default() -> Self {
        NiftiHeader {
            sizeof_hdr: HEADER_SIZE as i32,
            data_type: [0; 10],
            db_name: [0; 18],
            extents: 0,
            session_error: 0,
            regular: b'r',
            dim_info: 0,
            dim: [3, 1, 1, 1, 1, 1, 1, 1],
            intent_p1: 0.0,
            intent_p2: 0.0,
            intent_p3: 0.0,
            intent_code: 0,
            datatype: DataType::F32.code(),
            bitpix: 32,
            slice_start: 0,
            pixdim: [1.0; 8],
            vox_offset: VOX_OFFSET as f32,
            scl_slope: 1.0,
            scl_inter: 0.0,
            slice_end: 0,
            slice_code: 0,
            xyzt_units: 2, // mm
            cal_max: 0.0,
            cal_min: 0.0,
            slice_duration: 0.0,
            toffset: 0.0,
            glmax: 0,
            glmin: 0,
            descrip: [0; 80],
            aux_file: [0; 24],
            qform_code: 0,
            sform_code: 0,
            quatern_b: 0.0,
            quatern_c: 0.0,
            quatern_d: 0.0,
            qoffset_x: 0.0,
            qoffset_y: 0.0,
            qoffset_z: 0.0,
            srow_x: [1.0, 0.0, 0.0, 0.0],
            srow_y: [0.0, 1.0, 0.0, 0.0],
            srow_z: [0.0, 0.0, 1.0, 0.0],
            intent_name: [0; 16],
            magic: MAGIC_SINGLE,
        }
    }
}

fn read_bytes<const N: usize>(r: &mut Cursor<&[u8]>) -> [u8; N] {
    let mut out = [0u8; N];
    // the caller guarantees HEADER_SIZE bytes
    r.read_exact(&mut out).expect("header slice");
    out
}

impl NiftiHeader {
    fn decode<E: ByteOrder>(raw: &[u8]) -> Self {
        let mut r = Cursor::new(raw);
        let i16s = |r: &mut Cursor<&[u8]>| r.read_i16::<E>().expect("header slice");
        let i32s = |r: &mut Cursor<&[u8]>| r.read_i32::<E>().expect("header slice");
        let f32s = |r: &mut Cursor<&[u8]>| r.read_f32::<E>().expect("header slice");
        let u8s = |r: &mut Cursor<&[u8]>| r.read_u8().expect("header slice");

        let sizeof_hdr = i32s(&mut r);
        let data_type = read_bytes::<10>(&mut r);
        let db_name = read_bytes::<18>(&mut r);
        let extents = i32s(&mut r);
        let session_error = i16s(&mut r);
        let regular = u8s(&mut r);
        let dim_info = u8s(&mut r);
        let mut dim = [0i16; 8];
        for d in &mut dim {
            *d = i16s(&mut r);
        }
        let intent_p1 = f32s(&mut r);
        let intent_p2 = f32s(&mut r);
        let intent_p3 = f32s(&mut r);
        let intent_code = i16s(&mut r);
        let datatype = i16s(&mut r);
        let bitpix = i16s(&mut r);
        let slice_start = i16s(&mut r);
        let mut pixdim = [0f32; 8];
        for p in &mut pixdim {
            *p = f32s(&mut r);
        }
        let vox_offset = f32s(&mut r);
        let scl_slope = f32s(&mut r);
        let scl_inter = f32s(&mut r);
        let slice_end = i16s(&mut r);
        let slice_code = u8s(&mut r);
        let xyzt_units = u8s(&mut r);
        let cal_max = f32s(&mut r);
        let cal_min = f32s(&mut r);
        let slice_duration = f32s(&mut r);
        let toffset = f32s(&mut r);
        let glmax = i32s(&mut r);
        let glmin = i32s(&mut r);
        let descrip = read_bytes::<80>(&mut r);
        let aux_file = read_bytes::<24>(&mut r);
        let qform_code = i16s(&mut r);
        let sform_code = i16s(&mut r);
        let quatern_b = f32s(&mut r);
        let quatern_c = f32s(&mut r);
        let quatern_d = f32s(&mut r);
        let qoffset_x = f32s(&mut r);
        let qoffset_y = f32s(&mut r);
        let qoffset_z = f32s(&mut r);
        let mut rows = [[0f32; 4]; 3];
        for row in &mut rows {
            for v in row.iter_mut() {
                *v = f32s(&mut r);
            }
        }
        let intent_name = read_bytes::<16>(&mut r);
        let magic = read_bytes::<4>(&mut r);
        NiftiHeader {
            sizeof_hdr,
            data_type,
            db_name,
            extents,
            session_error,
            regular,
            dim_info,
            dim,
            intent_p1,
            intent_p2,
            intent_p3,
            intent_code,
            datatype,
            bitpix,
            slice_start,
            pixdim,
            vox_offset,
            scl_slope,
            scl_inter,
            slice_end,
            slice_code,
            xyzt_units,
            cal_max,
            cal_min,
            slice_duration,
            toffset,
            glmax,
            glmin,
            descrip,
            aux_file,
            qform_code,
            sform_code,
            quatern_b,
            quatern_c,
            quatern_d,
            qoffset_x,
            qoffset_y,
            qoffset_z,
            srow_x: rows[0],
            srow_y: rows[1],
            srow_z: rows[2],
            intent_name,
            magic,
        }
    }

    /// Parses the 348-byte header, detecting byte order from `sizeof_hdr`.
    /// Returns the header and whether the file is big endian.
    pub fn parse(raw: &[u8]) -> Result<(Self, bool)> {
        if raw.len() < HEADER_SIZE {
            return Err(Error::Nifti(format!("truncated header: {} bytes", raw.len())));
        }
        let raw = &raw[..HEADER_SIZE];
        let header = if LittleEndian::read_i32(raw) == HEADER_SIZE as i32 {
            (Self::decode::<LittleEndian>(raw), false)
        } else if BigEndian::read_i32(raw) == HEADER_SIZE as i32 {
            (Self::decode::<BigEndian>(raw), true)
        } else {
            return Err(Error::Nifti("sizeof_hdr is not 348; not a NIfTI-1 file".into()));
        };
        match header.0.magic {
            MAGIC_SINGLE => Ok(header),
            MAGIC_PAIR => Err(Error::Nifti(
                "two-file NIfTI (ni1) is not supported; use a single .nii file".into(),
            )),
            other => Err(Error::Nifti(format!("bad magic {other:?}"))),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w: Vec<u8> = Vec::with_capacity(HEADER_SIZE);
        type E = LittleEndian;
        // writes into a Vec cannot fail
        let _ = (|| -> std::io::Result<()> {
            w.write_i32::<E>(self.sizeof_hdr)?;
            w.write_all(&self.data_type)?;
            w.write_all(&self.db_name)?;
            w.write_i32::<E>(self.extents)?;
            w.write_i16::<E>(self.session_error)?;
            w.write_u8(self.regular)?;
            w.write_u8(self.dim_info)?;
            for &d in &self.dim {
                w.write_i16::<E>(d)?;
            }
            w.write_f32::<E>(self.intent_p1)?;
            w.write_f32::<E>(self.intent_p2)?;
            w.write_f32::<E>(self.intent_p3)?;
            w.write_i16::<E>(self.intent_code)?;
            w.write_i16::<E>(self.datatype)?;
            w.write_i16::<E>(self.bitpix)?;
            w.write_i16::<E>(self.slice_start)?;
            for &p in &self.pixdim {
                w.write_f32::<E>(p)?;
            }
            w.write_f32::<E>(self.vox_offset)?;
            w.write_f32::<E>(self.scl_slope)?;
            w.write_f32::<E>(self.scl_inter)?;
            w.write_i16::<E>(self.slice_end)?;
            w.write_u8(self.slice_code)?;
            w.write_u8(self.xyzt_units)?;
            w.write_f32::<E>(self.cal_max)?;
            w.write_f32::<E>(self.cal_min)?;
            w.write_f32::<E>(self.slice_duration)?;
            w.write_f32::<E>(self.toffset)?;
            w.write_i32::<E>(self.glmax)?;
            w.write_i32::<E>(self.glmin)?;
            w.write_all(&self.descrip)?;
            w.write_all(&self.aux_file)?;
            w.write_i16::<E>(self.qform_code)?;
            w.write_i16::<E>(self.sform_code)?;
            for v in [
                self.quatern_b,
                self.quatern_c,
                self.quatern_d,
                self.qoffset_x,
                self.qoffset_y,
                self.qoffset_z,
            ] {
                w.write_f32::<E>(v)?;
            }
            for row in [&self.srow_x, &self.srow_y, &self.srow_z] {
                for &v in row {
                    w.write_f32::<E>(v)?;
                }
            }
            w.write_all(&self.intent_name)?;
            w.write_all(&self.magic)?;
            Ok(())
        })();
        debug_assert_eq!(w.len(), HEADER_SIZE);
        w
    }

    /// Voxel-to-world transform: sform if set, else qform, else pixdim scaling.
    pub fn affine(&self) -> [[f64; 4]; 4] {
        let mut a = [[0.0; 4]; 4];
        a[3][3] = 1.0;
        if self.sform_code > 0 {
            for (dst, src) in a.iter_mut().zip([&self.srow_x, &self.srow_y, &self.srow_z]) {
                for (d, &s) in dst.iter_mut().zip(src.iter()) {
                    *d = s as f64;
                }
            }
        } else if self.qform_code > 0 {
            let (b, c, d) = (self.quatern_b as f64, self.quatern_c as f64, self.quatern_d as f64);
            let a0 = (1.0 - (b * b + c * c + d * d)).max(0.0).sqrt();
            let rot = [
                [
                    a0 * a0 + b * b - c * c - d * d,
                    2.0 * (b * c - a0 * d),
                    2.0 * (b * d + a0 * c),
                ],
                [
                    2.0 * (b * c + a0 * d),
                    a0 * a0 + c * c - b * b - d * d,
                    2.0 * (c * d - a0 * b),
                ],
                [
                    2.0 * (b * d - a0 * c),
                    2.0 * (c * d + a0 * b),
                    a0 * a0 + d * d - c * c - b * b,
                ],
            ];
            let qfac = if self.pixdim[0] < 0.0 { -1.0 } else { 1.0 };
            let scale = [
                self.pixdim[1] as f64,
                self.pixdim[2] as f64,
                self.pixdim[3] as f64 * qfac,
            ];
            for i in 0..3 {
                for j in 0..3 {
                    a[i][j] = rot[i][j] * scale[j];
                }
            }
            a[0][3] = self.qoffset_x as f64;
            a[1][3] = self.qoffset_y as f64;
            a[2][3] = self.qoffset_z as f64;
        } else {
            for (i, row) in a.iter_mut().take(3).enumerate() {
                row[i] = self.pixdim[i + 1] as f64;
            }
        }
        a
    }
}

fn maybe_gunzip(bytes: &[u8]) -> Result<Vec<u8>> {
    if bytes.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(bytes)
            .read_to_end(&mut out)
            .map_err(|e| Error::Nifti(format!("gzip: {e}")))?;
        Ok(out)
    } else {
        Ok(bytes.to_vec())
    }
}

pub fn read_nifti(path: impl AsRef<Path>) -> Result<Volume4D> {
    let bytes = fs::read(path.as_ref())?;
    read_nifti_bytes(&bytes)
}

pub fn read_nifti_bytes(bytes: &[u8]) -> Result<Volume4D> {
    let bytes = maybe_gunzip(bytes)?;
    let (header, big_endian) = NiftiHeader::parse(&bytes)?;

    let ndim = header.dim[0];
    if !(3..=4).contains(&ndim) {
        return Err(Error::Nifti(format!("dim[0] = {ndim}; only 3D and 4D supported")));
    }
    let mut dims = [1usize; 4];
    for (k, d) in dims.iter_mut().enumerate().take(ndim as usize) {
        let v = header.dim[k + 1];
        if v < 1 {
            return Err(Error::Nifti(format!("dim[{}] = {v}", k + 1)));
        }
        *d = v as usize;
    }
    let dtype = DataType::from_code(header.datatype)
        .ok_or_else(|| Error::Nifti(format!("unsupported datatype code {}", header.datatype)))?;

    let offset = header.vox_offset as usize;
    if offset < HEADER_SIZE {
        return Err(Error::Nifti(format!("vox_offset {offset} inside the header")));
    }
    let count: usize = dims.iter().product();
    let nbytes = count * dtype.size();
    if bytes.len() < offset + nbytes {
        return Err(Error::Nifti(format!(
            "truncated data: need {} bytes after offset {offset}, have {}",
            nbytes,
            bytes.len().saturating_sub(offset)
        )));
    }
    let raw = &bytes[offset..offset + nbytes];
    let file_order = if big_endian {
        decode_values::<BigEndian>(raw, dtype)
    } else {
        decode_values::<LittleEndian>(raw, dtype)
    };

    let (slope, inter) = (header.scl_slope as f64, header.scl_inter as f64);
    let rescale = slope != 0.0 && slope.is_finite() && !(slope == 1.0 && inter == 0.0);

    let nvox = dims[0] * dims[1] * dims[2];
    let nc = dims[3];
    let mut data = vec![0.0; count];
    for c in 0..nc {
        for v in 0..nvox {
            let x = file_order[v + nvox * c];
            data[c + nc * v] = if rescale { slope * x + inter } else { x };
        }
    }

    let spacing = [1, 2, 3].map(|k| {
        let p = header.pixdim[k].abs() as f64;
        if p > 0.0 && p.is_finite() {
            p
        } else {
            1.0
        }
    });
    let affine = header.affine();
    let mut volume = Volume4D::new(dims, data)?;
    volume.set_spacing(spacing)?;
    volume.set_affine(affine);
    volume.set_dtype(dtype);
    volume.set_header(Some(header));
    Ok(volume)
}

fn decode_values<E: ByteOrder>(raw: &[u8], dtype: DataType) -> Vec<f64> {
    match dtype {
        DataType::U8 => raw.iter().map(|&b| b as f64).collect(),
        DataType::I16 => raw.chunks_exact(2).map(|c| E::read_i16(c) as f64).collect(),
        DataType::F32 => raw.chunks_exact(4).map(|c| E::read_f32(c) as f64).collect(),
        DataType::F64 => raw.chunks_exact(8).map(E::read_f64).collect(),
    }
}

/// Serializes a volume; fails if a value does not fit an integer dtype.
pub fn encode_nifti(volume: &Volume4D, dtype: DataType) -> Result<Vec<u8>> {
    let [nx, ny, nz, nc] = volume.dims();
    let mut header = volume.header().cloned().unwrap_or_default();
    let was_4d = header.dim[0] == 4;
    header.sizeof_hdr = HEADER_SIZE as i32;
    header.dim = [1; 8];
    header.dim[0] = if nc > 1 || was_4d { 4 } else { 3 };
    for (k, &d) in [nx, ny, nz, nc].iter().enumerate() {
        header.dim[k + 1] =
            i16::try_from(d).map_err(|_| Error::Nifti(format!("dimension {d} exceeds NIfTI-1 limit")))?;
    }
    header.datatype = dtype.code();
    header.bitpix = (dtype.size() * 8) as i16;
    let spacing = volume.spacing();
    for (p, s) in header.pixdim[1..4].iter_mut().zip(spacing) {
        *p = s as f32;
    }
    if header.pixdim[0] == 0.0 {
        header.pixdim[0] = 1.0;
    }
    header.vox_offset = VOX_OFFSET as f32;
    header.scl_slope = 1.0;
    header.scl_inter = 0.0;
    header.magic = MAGIC_SINGLE;
    let affine = volume.affine();
    header.srow_x = affine[0].map(|v| v as f32);
    header.srow_y = affine[1].map(|v| v as f32);
    header.srow_z = affine[2].map(|v| v as f32);
    if volume.header().is_none() {
        header.sform_code = 1;
    }

    let mut out = header.encode();
    out.extend_from_slice(&[0u8; VOX_OFFSET - HEADER_SIZE]);
    out.reserve(volume.data().len() * dtype.size());

    let nvox = nx * ny * nz;
    let data = volume.data();
    for c in 0..nc {
        for v in 0..nvox {
            let x = data[c + nc * v];
            match dtype {
                DataType::U8 => out.push(to_integer(x, 0.0, u8::MAX as f64)? as u8),
                DataType::I16 => {
                    let i = to_integer(x, i16::MIN as f64, i16::MAX as f64)? as i16;
                    out.extend_from_slice(&i.to_le_bytes());
                }
                DataType::F32 => out.extend_from_slice(&(x as f32).to_le_bytes()),
                DataType::F64 => out.extend_from_slice(&x.to_le_bytes()),
            }
        }
    }
    Ok(out)
}

fn to_integer(x: f64, lo: f64, hi: f64) -> Result<f64> {
    let r = x.round();
    if !r.is_finite() || r < lo || r > hi {
        return Err(Error::Nifti(format!(
            "value {x} does not fit the integer range [{lo}, {hi}]"
        )));
    }
    Ok(r)
}

/// Writes `volume`; a `.gz` suffix selects gzip compression.
pub fn write_nifti(volume: &Volume4D, path: impl AsRef<Path>, dtype: DataType) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_nifti(volume, dtype)?;
    let gz = path.extension().is_some_and(|e| e == "gz");
    let mut file = fs::File::create(path)?;
    if gz {
        let mut enc = GzEncoder::new(file, Compression::default());
        enc.write_all(&bytes)?;
        enc.finish()?;
    } else {
        file.write_all(&bytes)?;
    }
    Ok(())
}
