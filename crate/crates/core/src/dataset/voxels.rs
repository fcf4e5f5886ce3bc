use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::preprocess::{GridStage, VoxelizedSegment};

const MAGIC: &[u8; 4] = b"SDV1";

/// A binary grid with its provenance. `grid.segment_id` equals
/// `sample_id`.
#[derive(Clone, Debug, PartialEq)]
pub struct VoxelRecord {
    pub sample_id: u64,
    /// The dataset segment the sample was derived from.
    pub segment_id: u64,
    pub group_id: u64,
    pub grid: VoxelizedSegment,
}

/// Writes bit-packed binary grids: magic `SDV1`, dims (3 x u64), count
/// (u64), then per record sample_id, segment_id, group_id, occupied_count
/// (u64 each) and `ceil(cells / 8)` bytes of occupancy bits, cell-major,
/// least significant bit first. All integers little-endian.
pub fn write_voxels(path: &Path, dims: [usize; 3], records: &[VoxelRecord]) -> Result<()> {
    let cells: usize = dims.iter().product();
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    for d in dims {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    w.write_all(&(records.len() as u64).to_le_bytes())?;
    let mut bits = vec![0u8; cells.div_ceil(8)];
    for r in records {
        if r.grid.stage != GridStage::Binary || r.grid.dims != dims {
            return Err(Error::DimensionMismatch {
                context: "voxel file record (binary grid expected)",
                expected: dims.to_vec(),
                found: r.grid.dims.to_vec(),
            });
        }
        for v in [r.sample_id, r.segment_id, r.group_id, r.grid.occupied_count as u64] {
            w.write_all(&v.to_le_bytes())?;
        }
        bits.fill(0);
        for (i, &v) in r.grid.values.iter().enumerate() {
            if v != 0.0 {
                bits[i / 8] |= 1 << (i % 8);
            }
        }
        w.write_all(&bits)?;
    }
    w.flush()?;
    Ok(())
}

struct Reader<R> {
    inner: R,
    offset: u64,
    path: String,
}

impl<R: Read> Reader<R> {
    fn fill(&mut self, buf: &mut [u8]) -> Result<()> {
        self.inner.read_exact(buf).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => Error::Truncated {
                path: self.path.clone(),
                offset: self.offset,
            },
            _ => Error::Io(e),
        })?;
        self.offset += buf.len() as u64;
        Ok(())
    }

    fn word(&mut self) -> Result<u64> {
        let mut b = [0u8; 8];
        self.fill(&mut b)?;
        Ok(u64::from_le_bytes(b))
    }
}

pub fn read_voxels(path: &Path) -> Result<([usize; 3], Vec<VoxelRecord>)> {
    let name = path.display().to_string();
    let mut r = Reader {
        inner: BufReader::new(File::open(path)?),
        offset: 0,
        path: name.clone(),
    };
    let mut magic = [0u8; 4];
    r.fill(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::VersionMismatch {
            path: name,
            expected: "SDV1".into(),
            found: String::from_utf8_lossy(&magic).into_owned(),
        });
    }
    let dims = [r.word()? as usize, r.word()? as usize, r.word()? as usize];
    let count = r.word()? as usize;
    let cells: usize = dims.iter().product();
    let mut out = Vec::with_capacity(count.min(1 << 16));
    let mut bits = vec![0u8; cells.div_ceil(8)];
    for _ in 0..count {
        let (sample_id, segment_id, group_id, occupied) = (r.word()?, r.word()?, r.word()?, r.word()? as usize);
        r.fill(&mut bits)?;
        let values: Vec<f32> = (0..cells).map(|i| f32::from((bits[i / 8] >> (i % 8)) & 1)).collect();
        let grid = VoxelizedSegment::binary(sample_id, dims, values)?;
        if grid.occupied_count != occupied {
            return Err(Error::Format {
                path: name,
                line: out.len() + 1,
                message: format!("record claims {occupied} occupied cells, found {}", grid.occupied_count),
            });
        }
        out.push(VoxelRecord {
            sample_id,
            segment_id,
            group_id,
            grid,
        });
    }
    Ok((dims, out))
}
