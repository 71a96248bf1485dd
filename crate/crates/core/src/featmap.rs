//! Dense C×H×W scalar grids standing in for convolutional feature maps, plus
//! max ROI pooling over them.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;

/// A channel-major scalar grid with an image-coordinate stride: cell (y, x)
/// covers image pixels `[x*stride, (x+1)*stride) × [y*stride, (y+1)*stride)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub stride: f64,
    /// Row-major within channel: `data[c*H*W + y*W + x]`.
    pub data: Vec<f32>,
}

impl FeatureMap {
    pub fn zeros(channels: usize, height: usize, width: usize, stride: f64) -> Self {
        assert!(stride > 0.0);
        FeatureMap {
            channels,
            height,
            width,
            stride,
            data: vec![0.0; channels * height * width],
        }
    }

    #[inline]
    pub fn idx(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.height + y) * self.width + x
    }

    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[self.idx(c, y, x)]
    }

    #[inline]
    pub fn at_mut(&mut self, c: usize, y: usize, x: usize) -> &mut f32 {
        let i = self.idx(c, y, x);
        &mut self.data[i]
    }

    /// Image-coordinate extent covered by the grid.
    pub fn extent(&self) -> (f64, f64) {
        (self.width as f64 * self.stride, self.height as f64 * self.stride)
    }

    /// Binary layout: u32 C, u32 H, u32 W, f32 stride (all little-endian),
    /// then C·H·W f32 values row-major within channel.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&(self.channels as u32).to_le_bytes())?;
        w.write_all(&(self.height as u32).to_le_bytes())?;
        w.write_all(&(self.width as u32).to_le_bytes())?;
        w.write_all(&(self.stride as f32).to_le_bytes())?;
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut u = [0u8; 4];
        r.read_exact(&mut u)?;
        let channels = u32::from_le_bytes(u) as usize;
        r.read_exact(&mut u)?;
        let height = u32::from_le_bytes(u) as usize;
        r.read_exact(&mut u)?;
        let width = u32::from_le_bytes(u) as usize;
        r.read_exact(&mut u)?;
        let stride = f32::from_le_bytes(u) as f64;
        if stride <= 0.0 {
            return Err(Error::schema("feature_map.stride", "must be positive"));
        }
        let n = channels * height * width;
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            r.read_exact(&mut u)?;
            data.push(f32::from_le_bytes(u));
        }
        Ok(FeatureMap {
            channels,
            height,
            width,
            stride,
            data,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(16 + self.data.len() * 4);
        self.write_to(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        FeatureMap::read_from(bytes.as_slice())
    }
}

/// Feature-cell span of a box projected by the stride, rounded outward and
/// clamped to the grid. Errors when the box misses the grid entirely.
fn project_span(fm: &FeatureMap, b: &BoundingBox) -> Result<(usize, usize, usize, usize)> {
    let x0 = (b.x / fm.stride).floor().max(0.0) as usize;
    let y0 = (b.y / fm.stride).floor().max(0.0) as usize;
    let x1 = ((b.right() / fm.stride).ceil() as isize).min(fm.width as isize);
    let y1 = ((b.bottom() / fm.stride).ceil() as isize).min(fm.height as isize);
    if x1 <= x0 as isize || y1 <= y0 as isize || x0 >= fm.width || y0 >= fm.height {
        return Err(Error::Geometry(format!(
            "box {:?} outside feature map {}x{} (stride {})",
            b, fm.width, fm.height, fm.stride
        )));
    }
    Ok((x0, y0, x1 as usize, y1 as usize))
}

/// Max-pools the box into a G×G grid per channel.
///
/// Output is channel-major: `out[c*G*G + gy*G + gx]`. Grid cell `i` spans
/// feature columns `[floor(i*L/G), ceil((i+1)*L/G))` of the projected span,
/// so every cell covers at least one column when the span is non-empty.
/// Cells that still end up empty (span shorter than the grid in theory)
/// contribute 0.
pub fn roi_pool(fm: &FeatureMap, b: &BoundingBox, grid: usize) -> Result<Vec<f64>> {
    Ok(roi_pool_with_argmax(fm, b, grid)?.0)
}

/// As [`roi_pool`], additionally returning the flat feature-map index that won
/// each output cell (`None` for empty cells) for subgradient routing.
pub fn roi_pool_with_argmax(
    fm: &FeatureMap,
    b: &BoundingBox,
    grid: usize,
) -> Result<(Vec<f64>, Vec<Option<usize>>)> {
    assert!(grid > 0);
    let (x0, y0, x1, y1) = project_span(fm, b)?;
    let lw = x1 - x0;
    let lh = y1 - y0;
    let mut out = vec![0.0f64; fm.channels * grid * grid];
    let mut arg = vec![None; fm.channels * grid * grid];
    for c in 0..fm.channels {
        for gy in 0..grid {
            let cy0 = y0 + gy * lh / grid;
            let cy1 = y0 + ((gy + 1) * lh + grid - 1) / grid; // ceil
            for gx in 0..grid {
                let cx0 = x0 + gx * lw / grid;
                let cx1 = x0 + ((gx + 1) * lw + grid - 1) / grid;
                let mut best: Option<(f32, usize)> = None;
                for y in cy0..cy1.min(y1) {
                    for x in cx0..cx1.min(x1) {
                        let i = fm.idx(c, y, x);
                        let v = fm.data[i];
                        if best.map_or(true, |(bv, _)| v > bv) {
                            best = Some((v, i));
                        }
                    }
                }
                let o = (c * grid + gy) * grid + gx;
                if let Some((v, i)) = best {
                    out[o] = v as f64;
                    arg[o] = Some(i);
                }
            }
        }
    }
    Ok((out, arg))
}
