//! Dense rank-4 volumes and their physical depth spacing.
//!
//! A [`Volume4D`] stores `C * D * H * W` values of `f64` in row-major
//! `(channel, depth, height, width)` order, so each `(c, d)` plane of
//! `H * W` elements is contiguous. Every operator in this crate works on
//! this layout. The physical distance between adjacent depth slices is
//! carried separately as [`ThicknessMeta`] and travels with the volume
//! through the pipeline.

use thiserror::Error;

/// Errors raised by volume construction and indexing.
#[derive(Debug, Error, PartialEq)]
pub enum VolumeError {
    #[error("volume dimensions must all be at least 1 (got {c}x{d}x{h}x{w})")]
    ZeroDimension { c: usize, d: usize, h: usize, w: usize },
    #[error("volume of {c}x{d}x{h}x{w} elements overflows the address space")]
    DimensionOverflow { c: usize, d: usize, h: usize, w: usize },
    #[error("data length {got} does not match {c}x{d}x{h}x{w} = {expected}")]
    DataLength {
        c: usize,
        d: usize,
        h: usize,
        w: usize,
        expected: usize,
        got: usize,
    },
    #[error("index ({c}, {d}, {h}, {w}) out of range for {dims:?} volume")]
    IndexOutOfRange {
        c: usize,
        d: usize,
        h: usize,
        w: usize,
        dims: [usize; 4],
    },
    #[error("slice spacing must be positive and finite, got {0} mm")]
    InvalidSpacing(f64),
}

/// Physical depth spacing of a volume, in millimeters between adjacent slices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThicknessMeta {
    spacing_mm: f64,
}

impl ThicknessMeta {
    pub fn new(spacing_mm: f64) -> Result<Self, VolumeError> {
        if !(spacing_mm.is_finite() && spacing_mm > 0.0) {
            return Err(VolumeError::InvalidSpacing(spacing_mm));
        }
        Ok(Self { spacing_mm })
    }

    #[inline]
    pub fn spacing_mm(self) -> f64 {
        self.spacing_mm
    }
}

/// Dense rank-4 tensor of 64-bit floats in row-major (C, D, H, W) order.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume4D {
    channels: usize,
    depth: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Volume4D {
    /// Creates a volume with every element set to `fill`.
    pub fn new(
        channels: usize,
        depth: usize,
        height: usize,
        width: usize,
        fill: f64,
    ) -> Result<Self, VolumeError> {
        let len = Self::checked_len(channels, depth, height, width)?;
        Ok(Self {
            channels,
            depth,
            height,
            width,
            data: vec![fill; len],
        })
    }

    /// Wraps an existing buffer; `data.len()` must equal `C * D * H * W`.
    pub fn from_vec(
        channels: usize,
        depth: usize,
        height: usize,
        width: usize,
        data: Vec<f64>,
    ) -> Result<Self, VolumeError> {
        let len = Self::checked_len(channels, depth, height, width)?;
        if data.len() != len {
            return Err(VolumeError::DataLength {
                c: channels,
                d: depth,
                h: height,
                w: width,
                expected: len,
                got: data.len(),
            });
        }
        Ok(Self {
            channels,
            depth,
            height,
            width,
            data,
        })
    }

    fn checked_len(c: usize, d: usize, h: usize, w: usize) -> Result<usize, VolumeError> {
        if c == 0 || d == 0 || h == 0 || w == 0 {
            return Err(VolumeError::ZeroDimension { c, d, h, w });
        }
        c.checked_mul(d)
            .and_then(|n| n.checked_mul(h))
            .and_then(|n| n.checked_mul(w))
            // isize::MAX is the hard cap for any Rust allocation
            .filter(|n| n.checked_mul(8).is_some_and(|b| b <= isize::MAX as usize))
            .ok_or(VolumeError::DimensionOverflow { c, d, h, w })
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn depth(&self) -> usize {
        self.depth
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> [usize; 4] {
        [self.channels, self.depth, self.height, self.width]
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false // construction forbids zero dimensions
    }

    /// Flat offset of `(c, d, h, w)` under the row-major layout.
    #[inline]
    pub fn flat_index(&self, c: usize, d: usize, h: usize, w: usize) -> usize {
        ((c * self.depth + d) * self.height + h) * self.width + w
    }

    #[inline]
    fn check_index(&self, c: usize, d: usize, h: usize, w: usize) -> Result<usize, VolumeError> {
        if c < self.channels && d < self.depth && h < self.height && w < self.width {
            Ok(self.flat_index(c, d, h, w))
        } else {
            Err(VolumeError::IndexOutOfRange {
                c,
                d,
                h,
                w,
                dims: self.dims(),
            })
        }
    }

    /// Reads one element; panics on out-of-range indices.
    #[inline]
    pub fn get(&self, c: usize, d: usize, h: usize, w: usize) -> f64 {
        debug_assert!(c < self.channels && d < self.depth && h < self.height && w < self.width);
        self.data[self.flat_index(c, d, h, w)]
    }

    /// Writes one element; panics on out-of-range indices.
    #[inline]
    pub fn set(&mut self, c: usize, d: usize, h: usize, w: usize, value: f64) {
        debug_assert!(c < self.channels && d < self.depth && h < self.height && w < self.width);
        let idx = self.flat_index(c, d, h, w);
        self.data[idx] = value;
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Contiguous `H * W` plane at `(c, d)`.
    #[inline]
    pub fn plane(&self, c: usize, d: usize) -> &[f64] {
        let hw = self.height * self.width;
        let start = (c * self.depth + d) * hw;
        &self.data[start..start + hw]
    }

    #[inline]
    pub fn plane_mut(&mut self, c: usize, d: usize) -> &mut [f64] {
        let hw = self.height * self.width;
        let start = (c * self.depth + d) * hw;
        &mut self.data[start..start + hw]
    }

    /// Read-only view of the axial slice at depth `d` across all channels.
    pub fn slice_depth(&self, d: usize) -> Result<DepthSlice<'_>, VolumeError> {
        if d >= self.depth {
            return Err(VolumeError::IndexOutOfRange {
                c: 0,
                d,
                h: 0,
                w: 0,
                dims: self.dims(),
            });
        }
        Ok(DepthSlice { volume: self, d })
    }

    /// Sum of the `H * W` elements of the plane at `(c, d)`.
    pub fn sum_channel_slice(&self, c: usize, d: usize) -> Result<f64, VolumeError> {
        self.check_index(c, d, 0, 0)?;
        Ok(self.plane(c, d).iter().sum())
    }

    /// True when no element is NaN or infinite.
    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Reinterprets the buffer under new dimensions with the same total length.
    ///
    /// The flat data is untouched; only the shape changes. Used to stack
    /// depth slices as channels (`C x D x H x W` -> `C*D x 1 x H x W`).
    pub fn reshape(
        self,
        channels: usize,
        depth: usize,
        height: usize,
        width: usize,
    ) -> Result<Self, VolumeError> {
        Self::from_vec(channels, depth, height, width, self.data)
    }
}

/// Borrowed `C x H x W` view at one depth index of a [`Volume4D`].
#[derive(Debug, Clone, Copy)]
pub struct DepthSlice<'a> {
    volume: &'a Volume4D,
    d: usize,
}

impl DepthSlice<'_> {
    #[inline]
    pub fn channels(&self) -> usize {
        self.volume.channels
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.volume.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.volume.width
    }

    #[inline]
    pub fn depth_index(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn get(&self, c: usize, h: usize, w: usize) -> f64 {
        self.volume.get(c, self.d, h, w)
    }

    /// Contiguous plane of channel `c` at this depth.
    #[inline]
    pub fn plane(&self, c: usize) -> &[f64] {
        self.volume.plane(c, self.d)
    }
}
