use crate::error::{Error, Result};
use crate::geometry::{Point, Segment};

/// Dense grid geometry: `dims` cells of `voxel_size` meters per side.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VoxelGridSpec {
    pub dims: [usize; 3],
    pub voxel_size: f64,
}

impl Default for VoxelGridSpec {
    fn default() -> Self {
        VoxelGridSpec {
            dims: [38, 38, 18],
            voxel_size: 0.2,
        }
    }
}

impl VoxelGridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dims.contains(&0) {
            return Err(Error::config("voxel_dims", "every dimension must be >= 1"));
        }
        if !(self.voxel_size > 0.0 && self.voxel_size.is_finite()) {
            return Err(Error::config("voxel_size", "must be positive"));
        }
        Ok(())
    }

    pub fn cell_count(&self) -> usize {
        self.dims.iter().product()
    }

    /// Lower corner of the grid when it is centered on `center`.
    pub fn origin(&self, center: Point) -> Point {
        let half = |n: usize| self.voxel_size * n as f64 / 2.0;
        Point::new(
            center.x - half(self.dims[0]),
            center.y - half(self.dims[1]),
            center.z - half(self.dims[2]),
        )
    }

    /// Row-major flat index of cell `(i, j, k)`.
    pub fn flat_index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    /// Cell containing `p` for a grid with lower corner `origin`, if inside.
    pub fn cell_of(&self, p: Point, origin: Point) -> Option<[usize; 3]> {
        let coords = [
            (p.x - origin.x) / self.voxel_size,
            (p.y - origin.y) / self.voxel_size,
            (p.z - origin.z) / self.voxel_size,
        ];
        let mut cell = [0usize; 3];
        for axis in 0..3 {
            let c = coords[axis].floor();
            if !(c >= 0.0 && c < self.dims[axis] as f64) {
                return None;
            }
            cell[axis] = c as usize;
        }
        Some(cell)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GridStage {
    Binary,
    Normalized,
}

/// A segment rasterized onto a [`VoxelGridSpec`], stored row-major (x, y, z).
#[derive(Clone, Debug, PartialEq)]
pub struct VoxelizedSegment {
    pub segment_id: u64,
    pub dims: [usize; 3],
    pub values: Vec<f32>,
    pub stage: GridStage,
    pub occupied_count: usize,
}

impl VoxelizedSegment {
    /// Wraps already-normalized values.
    pub fn normalized(segment_id: u64, dims: [usize; 3], values: Vec<f32>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if values.len() != n {
            return Err(Error::DimensionMismatch {
                context: "voxel grid",
                expected: vec![n],
                found: vec![values.len()],
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("grid", "normalized cells must be finite"));
        }
        Ok(VoxelizedSegment {
            segment_id,
            dims,
            values,
            stage: GridStage::Normalized,
            occupied_count: 0,
        })
    }

    /// Wraps a 0/1 grid, recomputing the occupied count.
    pub fn binary(segment_id: u64, dims: [usize; 3], values: Vec<f32>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if values.len() != n {
            return Err(Error::DimensionMismatch {
                context: "voxel grid",
                expected: vec![n],
                found: vec![values.len()],
            });
        }
        if values.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::config("grid", "binary cells must be 0 or 1"));
        }
        let occupied_count = values.iter().filter(|&&v| v == 1.0).count();
        Ok(VoxelizedSegment {
            segment_id,
            dims,
            values,
            stage: GridStage::Binary,
            occupied_count,
        })
    }

    pub fn cell_count(&self) -> usize {
        self.values.len()
    }
}

/// Rasterizes a segment into a binary occupancy grid centered on its
/// centroid, discarding points that fall outside the grid.
pub fn voxelize(segment: &Segment, spec: &VoxelGridSpec) -> Result<VoxelizedSegment> {
    spec.validate()?;
    let origin = spec.origin(segment.centroid());
    let mut values = vec![0.0f32; spec.cell_count()];
    let mut occupied_count = 0;
    for &p in &segment.points {
        if let Some([i, j, k]) = spec.cell_of(p, origin) {
            let idx = spec.flat_index(i, j, k);
            if values[idx] == 0.0 {
                values[idx] = 1.0;
                occupied_count += 1;
            }
        }
    }
    if occupied_count == 0 {
        return Err(Error::EmptyVoxelization {
            segment_id: segment.segment_id,
        });
    }
    Ok(VoxelizedSegment {
        segment_id: segment.segment_id,
        dims: spec.dims,
        values,
        stage: GridStage::Binary,
        occupied_count,
    })
}
