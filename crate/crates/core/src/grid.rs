//! Voxel lattice data model shared by every metric.
//!
//! Payloads are stored x-fastest (`x + nx * (y + ny * z)`), matching the
//! on-disk NIfTI ordering. After loading, array axes are canonicalized so
//! that axis 0 runs left-right, axis 1 posterior-anterior and axis 2
//! inferior-superior.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{EvalError, Result};

const SPACING_TOL_MM: f64 = 1e-4;
const AFFINE_TOL_MM: f64 = 1e-3;

/// Lattice geometry: dims, spacing (mm), direction cosines and origin (mm).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    /// Column `j` is the world direction of array axis `j`.
    pub direction: [[f64; 3]; 3],
    pub origin: [f64; 3],
}

impl Geometry {
    pub fn new(dims: [usize; 3], spacing: [f64; 3]) -> Result<Self> {
        let identity = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        Self::with_orientation(dims, spacing, identity, [0.0; 3])
    }

    pub fn with_orientation(
        dims: [usize; 3],
        spacing: [f64; 3],
        direction: [[f64; 3]; 3],
        origin: [f64; 3],
    ) -> Result<Self> {
        if dims.contains(&0) {
            return Err(EvalError::InvalidGrid(format!(
                "dims must be positive, got {dims:?}"
            )));
        }
        if spacing.iter().any(|s| !s.is_finite() || *s <= 0.0) {
            return Err(EvalError::InvalidGrid(format!(
                "spacing must be strictly positive, got {spacing:?}"
            )));
        }
        Ok(Geometry {
            dims,
            spacing,
            direction,
            origin,
        })
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let x = idx % self.dims[0];
        let rest = idx / self.dims[0];
        [x, rest % self.dims[1], rest / self.dims[1]]
    }

    /// Voxel volume in mm³.
    pub fn voxel_volume_mm3(&self) -> f64 {
        self.spacing.iter().product()
    }

    /// Voxel volume in cm³. Native header spacing is used; nothing is resampled.
    pub fn voxel_volume(&self) -> f64 {
        self.voxel_volume_mm3() / 1000.0
    }

    /// Checks that two lattices describe the same voxels.
    pub fn ensure_matches(&self, other: &Geometry) -> Result<()> {
        if self.dims != other.dims {
            return Err(EvalError::GeometryMismatch(format!(
                "dims {:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        for a in 0..3 {
            if (self.spacing[a] - other.spacing[a]).abs() > SPACING_TOL_MM {
                return Err(EvalError::GeometryMismatch(format!(
                    "spacing {:?} vs {:?}",
                    self.spacing, other.spacing
                )));
            }
            if (self.origin[a] - other.origin[a]).abs() > AFFINE_TOL_MM {
                return Err(EvalError::GeometryMismatch(format!(
                    "origin {:?} vs {:?}",
                    self.origin, other.origin
                )));
            }
            for b in 0..3 {
                if (self.direction[a][b] - other.direction[a][b]).abs() > AFFINE_TOL_MM {
                    return Err(EvalError::GeometryMismatch(format!(
                        "direction {:?} vs {:?}",
                        self.direction, other.direction
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Axis-aligned voxel box, `lo` inclusive and `hi` exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub lo: [usize; 3],
    pub hi: [usize; 3],
}

impl BoundingBox {
    pub fn full(dims: [usize; 3]) -> Self {
        BoundingBox {
            lo: [0; 3],
            hi: dims,
        }
    }

    pub fn union(&self, other: &BoundingBox) -> BoundingBox {
        let mut out = *self;
        for a in 0..3 {
            out.lo[a] = out.lo[a].min(other.lo[a]);
            out.hi[a] = out.hi[a].max(other.hi[a]);
        }
        out
    }

    /// Grows the box by `margin` voxels per side, clipped to `dims`.
    pub fn padded(&self, margin: usize, dims: [usize; 3]) -> BoundingBox {
        let mut out = *self;
        for a in 0..3 {
            out.lo[a] = self.lo[a].saturating_sub(margin);
            out.hi[a] = (self.hi[a] + margin).min(dims[a]);
        }
        out
    }

    pub fn voxel_count(&self) -> usize {
        (0..3).map(|a| self.hi[a] - self.lo[a]).product()
    }

    pub fn contains(&self, c: [usize; 3]) -> bool {
        (0..3).all(|a| c[a] >= self.lo[a] && c[a] < self.hi[a])
    }

    /// Linear indices of every voxel inside the box, x-fastest.
    pub fn indices<'a>(&'a self, geometry: &'a Geometry) -> impl Iterator<Item = usize> + 'a {
        (self.lo[2]..self.hi[2]).flat_map(move |z| {
            (self.lo[1]..self.hi[1])
                .flat_map(move |y| (self.lo[0]..self.hi[0]).map(move |x| geometry.index(x, y, z)))
        })
    }
}

/// A 3-D lattice with one value per voxel.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    geometry: Geometry,
    data: Vec<T>,
}

/// Real-valued image as loaded from disk.
pub type VoxelGrid = Grid<f64>;
/// Binary segmentation; the payload is `{0,1}` by construction.
pub type BinaryMask = Grid<bool>;
/// Small non-negative integer labels.
pub type LabelMap = Grid<u8>;

impl<T> Grid<T> {
    pub fn from_vec(geometry: Geometry, data: Vec<T>) -> Result<Self> {
        if data.len() != geometry.len() {
            return Err(EvalError::InvalidGrid(format!(
                "payload has {} values but dims {:?} need {}",
                data.len(),
                geometry.dims,
                geometry.len()
            )));
        }
        Ok(Grid { geometry, data })
    }

    pub fn filled(geometry: Geometry, value: T) -> Self
    where
        T: Clone,
    {
        let data = vec![value; geometry.len()];
        Grid { geometry, data }
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn dims(&self) -> [usize; 3] {
        self.geometry.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.geometry.spacing
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> &T {
        &self.data[self.geometry.index(x, y, z)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, value: T) {
        let i = self.geometry.index(x, y, z);
        self.data[i] = value;
    }

    pub fn map<U>(&self, f: impl Fn(&T) -> U) -> Grid<U> {
        Grid {
            geometry: self.geometry.clone(),
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn ensure_same_geometry<U>(&self, other: &Grid<U>) -> Result<()> {
        self.geometry.ensure_matches(&other.geometry)
    }
}

impl Grid<bool> {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    pub fn is_empty_mask(&self) -> bool {
        !self.data.iter().any(|&v| v)
    }

    /// Tight bounding box of the foreground, or `None` for an empty mask.
    pub fn bounding_box(&self) -> Option<BoundingBox> {
        let [nx, ny, _] = self.geometry.dims;
        let mut lo = [usize::MAX; 3];
        let mut hi = [0usize; 3];
        let mut any = false;
        for (i, _) in self.data.iter().enumerate().filter(|(_, &v)| v) {
            any = true;
            let c = [i % nx, (i / nx) % ny, i / (nx * ny)];
            for a in 0..3 {
                lo[a] = lo[a].min(c[a]);
                hi[a] = hi[a].max(c[a] + 1);
            }
        }
        any.then_some(BoundingBox { lo, hi })
    }
}

impl Grid<u8> {
    /// Binary mask of voxels carrying `label`.
    pub fn extract(&self, label: u8) -> BinaryMask {
        self.map(|&v| v == label)
    }
}

/// Union bounding box of several masks; `None` if all are empty.
pub fn union_bounding_box<'a>(
    masks: impl IntoIterator<Item = &'a BinaryMask>,
) -> Option<BoundingBox> {
    masks
        .into_iter()
        .filter_map(|m| m.bounding_box())
        .reduce(|a, b| a.union(&b))
}

/// Tolerance for probability payloads that drift slightly outside `[0,1]`.
pub const PROB_CLAMP_TOL: f64 = 1e-4;

/// Probability map with every voxel in `[0,1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMap(Grid<f32>);

impl ProbMap {
    /// Validates the payload. Values within `PROB_CLAMP_TOL` of the unit
    /// interval are clamped; anything further out, or non-finite, is rejected.
    pub fn new(mut grid: Grid<f32>) -> Result<Self> {
        let tol = PROB_CLAMP_TOL as f32;
        for v in grid.data_mut() {
            if !v.is_finite() || *v < -tol || *v > 1.0 + tol {
                return Err(EvalError::InvalidPayload(format!(
                    "probability {v} outside [0,1]"
                )));
            }
            *v = v.clamp(0.0, 1.0);
        }
        Ok(ProbMap(grid))
    }

    pub fn from_mask(mask: &BinaryMask) -> Self {
        ProbMap(mask.map(|&b| if b { 1.0 } else { 0.0 }))
    }

    /// `p > t` binarization.
    pub fn threshold(&self, t: f64) -> BinaryMask {
        self.0.map(|&p| f64::from(p) > t)
    }

    pub fn as_grid(&self) -> &Grid<f32> {
        &self.0
    }

    pub fn into_grid(self) -> Grid<f32> {
        self.0
    }
}

impl Deref for ProbMap {
    type Target = Grid<f32>;

    fn deref(&self) -> &Grid<f32> {
        &self.0
    }
}
