//! Dense 4D volumes and 3D masks.
//!
//! Samples are stored channel-fastest: all channels of one voxel are
//! contiguous, and voxel `(x, y, z)` has linear index `x + nx·(y + ny·z)`.
//! The same linear index seeds the per-voxel random streams.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nifti::NiftiHeader;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataType {
    U8,
    I16,
    F32,
    F64,
}

impl DataType {
    pub fn code(self) -> i16 {
        match self {
            DataType::U8 => 2,
            DataType::I16 => 4,
            DataType::F32 => 16,
            DataType::F64 => 64,
        }
    }

    pub fn from_code(code: i16) -> Option<Self> {
        match code {
            2 => Some(DataType::U8),
            4 => Some(DataType::I16),
            16 => Some(DataType::F32),
            64 => Some(DataType::F64),
            _ => None,
        }
    }

    /// The name accepted by `FromStr`.
    pub fn name(self) -> &'static str {
        match self {
            DataType::U8 => "uint8",
            DataType::I16 => "int16",
            DataType::F32 => "float32",
            DataType::F64 => "float64",
        }
    }

    pub fn size(self) -> usize {
        match self {
            DataType::U8 => 1,
            DataType::I16 => 2,
            DataType::F32 => 4,
            DataType::F64 => 8,
        }
    }
}

impl std::str::FromStr for DataType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uint8" | "u8" => Ok(DataType::U8),
            "int16" | "i16" => Ok(DataType::I16),
            "float32" | "f32" => Ok(DataType::F32),
            "float64" | "f64" => Ok(DataType::F64),
            other => Err(Error::InvalidParameter(format!("unknown dtype {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Volume4D {
    dims: [usize; 4],
    spacing: [f64; 3],
    affine: [[f64; 4]; 4],
    data: Vec<f64>,
    dtype: DataType,
    header: Option<NiftiHeader>,
}

fn identity_affine() -> [[f64; 4]; 4] {
    let mut a = [[0.0; 4]; 4];
    for (i, row) in a.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    a
}

impl Volume4D {
    pub fn new(dims: [usize; 4], data: Vec<f64>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::Dimension(format!("zero extent in {dims:?}")));
        }
        let expected: usize = dims.iter().product();
        if data.len() != expected {
            return Err(Error::Dimension(format!(
                "data length {} != {expected} for dims {dims:?}",
                data.len()
            )));
        }
        Ok(Volume4D {
            dims,
            spacing: [1.0; 3],
            affine: identity_affine(),
            data,
            dtype: DataType::F32,
            header: None,
        })
    }

    pub fn zeros(dims: [usize; 4]) -> Result<Self> {
        Self::new(dims, vec![0.0; dims.iter().product()])
    }

    /// A volume with the spatial metadata of `self` and new channel data.
    pub fn like(&self, channels: usize, data: Vec<f64>) -> Result<Self> {
        let [nx, ny, nz, _] = self.dims;
        let mut out = Self::new([nx, ny, nz, channels], data)?;
        out.spacing = self.spacing;
        out.affine = self.affine;
        out.dtype = self.dtype;
        out.header = self.header.clone();
        Ok(out)
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn spatial_dims(&self) -> [usize; 3] {
        [self.dims[0], self.dims[1], self.dims[2]]
    }

    pub fn channels(&self) -> usize {
        self.dims[3]
    }

    pub fn n_voxels(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn set_spacing(&mut self, spacing: [f64; 3]) -> Result<()> {
        if spacing.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidParameter(format!("voxel spacing {spacing:?}")));
        }
        self.spacing = spacing;
        Ok(())
    }

    pub fn affine(&self) -> [[f64; 4]; 4] {
        self.affine
    }

    pub fn set_affine(&mut self, affine: [[f64; 4]; 4]) {
        self.affine = affine;
    }

    pub fn dtype(&self) -> DataType {
        self.dtype
    }

    pub fn set_dtype(&mut self, dtype: DataType) {
        self.dtype = dtype;
    }

    pub fn header(&self) -> Option<&NiftiHeader> {
        self.header.as_ref()
    }

    pub fn set_header(&mut self, header: Option<NiftiHeader>) {
        self.header = header;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn voxel_index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    /// All channels of voxel `v` (linear index).
    pub fn voxel(&self, v: usize) -> &[f64] {
        let nc = self.dims[3];
        &self.data[v * nc..(v + 1) * nc]
    }

    pub fn voxel_mut(&mut self, v: usize) -> &mut [f64] {
        let nc = self.dims[3];
        &mut self.data[v * nc..(v + 1) * nc]
    }

    pub fn get(&self, x: usize, y: usize, z: usize, c: usize) -> f64 {
        self.data[c + self.dims[3] * self.voxel_index(x, y, z)]
    }

    /// Output channel `k` is input channel `indices[k]`.
    pub fn gather_channels(&self, indices: &[usize]) -> Result<Self> {
        let nc = self.channels();
        if let Some(&bad) = indices.iter().find(|&&i| i >= nc) {
            return Err(Error::Dimension(format!(
                "channel {bad} out of range for {nc} channels"
            )));
        }
        if indices.is_empty() {
            return Err(Error::Dimension("empty channel selection".into()));
        }
        let mut data = Vec::with_capacity(self.n_voxels() * indices.len());
        for v in 0..self.n_voxels() {
            let src = self.voxel(v);
            data.extend(indices.iter().map(|&i| src[i]));
        }
        self.like(indices.len(), data)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    dims: [usize; 3],
    data: Vec<bool>,
}

impl Mask {
    pub fn new(dims: [usize; 3], data: Vec<bool>) -> Result<Self> {
        if data.len() != dims.iter().product::<usize>() {
            return Err(Error::Dimension(format!(
                "mask length {} for dims {dims:?}",
                data.len()
            )));
        }
        Ok(Mask { dims, data })
    }

    pub fn full(dims: [usize; 3]) -> Self {
        Mask {
            dims,
            data: vec![true; dims.iter().product()],
        }
    }

    pub fn empty(dims: [usize; 3]) -> Self {
        Mask {
            dims,
            data: vec![false; dims.iter().product()],
        }
    }

    /// Nonzero voxels of a single-channel volume.
    pub fn from_volume(volume: &Volume4D) -> Result<Self> {
        if volume.channels() != 1 {
            return Err(Error::Dimension(format!(
                "mask volume has {} channels",
                volume.channels()
            )));
        }
        Ok(Mask {
            dims: volume.spatial_dims(),
            data: volume.data().iter().map(|&v| v != 0.0).collect(),
        })
    }

    pub fn to_volume(&self) -> Volume4D {
        let [nx, ny, nz] = self.dims;
        let mut v = Volume4D::new(
            [nx, ny, nz, 1],
            self.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        )
        .expect("mask dims are valid");
        v.set_dtype(DataType::U8);
        v
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn contains(&self, v: usize) -> bool {
        self.data[v]
    }

    pub fn set(&mut self, v: usize, value: bool) {
        self.data[v] = value;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    /// Linear indices of masked voxels, ascending.
    pub fn indices(&self) -> Vec<usize> {
        (0..self.data.len()).filter(|&v| self.data[v]).collect()
    }

    pub fn check_matches(&self, volume: &Volume4D) -> Result<()> {
        if self.dims != volume.spatial_dims() {
            return Err(Error::Dimension(format!(
                "mask {:?} vs volume {:?}",
                self.dims,
                volume.spatial_dims()
            )));
        }
        Ok(())
    }
}
