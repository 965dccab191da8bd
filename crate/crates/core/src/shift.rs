//! Slice-shift operators along the depth axis.
//!
//! Two in-place linear maps over [`Volume4D`]:
//!
//! * [`tsm_shift`] moves one block of channels up by a whole slice and a
//!   second block down by a whole slice, zero-padding the border. The
//!   remaining channels stay untouched.
//! * [`align_shift`] moves the same blocks by a *fractional* slice step
//!   `alpha = r / s`, where `r` is the configured reference spacing and
//!   `s` the volume's actual spacing. Each shifted slice is the linear
//!   interpolation ("virtual slice") between a slice and its neighbor, so
//!   the physical displacement is always `alpha * s = r` millimeters no
//!   matter how thick the slices are. At `s = r` the operator is exactly
//!   [`tsm_shift`]; as `s` grows it approaches the identity and the
//!   volume is effectively processed slice by slice.
//!
//! Both operators are linear, so backpropagation only needs their
//! transposes: [`tsm_shift_adjoint`] and [`align_shift_adjoint`]. The
//! transpose of an up-shift is the matching down-shift with the same
//! interpolation weights.

use thiserror::Error;

use crate::volume::{ThicknessMeta, Volume4D};

#[derive(Debug, Error, PartialEq)]
pub enum ShiftError {
    #[error("shift channels {shift_up}+{shift_down} must stay below the {channels} available")]
    ChannelPartition {
        shift_up: usize,
        shift_down: usize,
        channels: usize,
    },
    #[error("reference thickness must be positive and finite, got {0} mm")]
    InvalidReference(f64),
    #[error("spacing {spacing_mm} mm is finer than the reference {reference_mm} mm; resample the volume first")]
    AlignFactorOutOfRange { spacing_mm: f64, reference_mm: f64 },
    #[error("no valid default channel partition for {0} channels")]
    NoDefaultPartition(usize),
}

/// Channel partition and reference thickness for the shift operators.
///
/// Channels `[0, shift_up)` shift up, `[shift_up, shift_up + shift_down)`
/// shift down, and the rest stay static. The partition must leave at least
/// one static channel: `shift_up + shift_down < C`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftConfig {
    pub shift_up: usize,
    pub shift_down: usize,
    pub reference_mm: f64,
}

impl ShiftConfig {
    pub fn new(shift_up: usize, shift_down: usize, reference_mm: f64) -> Result<Self, ShiftError> {
        if !(reference_mm.is_finite() && reference_mm > 0.0) {
            return Err(ShiftError::InvalidReference(reference_mm));
        }
        Ok(Self {
            shift_up,
            shift_down,
            reference_mm,
        })
    }

    /// Conventional partition: an eighth of the channels each way, rounded up.
    ///
    /// Needs at least 3 channels; below that no equal nonzero split satisfies
    /// `shift_up + shift_down < C`.
    pub fn default_for_channels(channels: usize, reference_mm: f64) -> Result<Self, ShiftError> {
        let part = channels.div_ceil(8);
        if 2 * part >= channels {
            return Err(ShiftError::NoDefaultPartition(channels));
        }
        Self::new(part, part, reference_mm)
    }

    /// Checks the strict partition invariant against a channel count.
    pub fn validate_for(&self, channels: usize) -> Result<(), ShiftError> {
        if self.shift_up + self.shift_down >= channels {
            return Err(ShiftError::ChannelPartition {
                shift_up: self.shift_up,
                shift_down: self.shift_down,
                channels,
            });
        }
        Ok(())
    }
}

/// Fractional slice step `alpha = r / s`, in `(0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignFactor(f64);

impl AlignFactor {
    /// Computes `r / s`. Rejects `s < r`: thinner-than-reference volumes
    /// must be resampled to the reference first (see `resample`), so the
    /// operator never extrapolates.
    pub fn new(reference_mm: f64, spacing: ThicknessMeta) -> Result<Self, ShiftError> {
        if !(reference_mm.is_finite() && reference_mm > 0.0) {
            return Err(ShiftError::InvalidReference(reference_mm));
        }
        let s = spacing.spacing_mm();
        if s < reference_mm {
            return Err(ShiftError::AlignFactorOutOfRange {
                spacing_mm: s,
                reference_mm,
            });
        }
        Ok(Self(reference_mm / s))
    }

    #[inline]
    pub fn alpha(self) -> f64 {
        self.0
    }
}

/// Whole-slice shift with zero padding, in place.
///
/// Up channels: `out[d] = in[d+1]`, last slice becomes zero.
/// Down channels: `out[d] = in[d-1]`, first slice becomes zero.
pub fn tsm_shift(x: &mut Volume4D, cfg: &ShiftConfig) -> Result<(), ShiftError> {
    cfg.validate_for(x.channels())?;
    let depth = x.depth();
    for c in 0..cfg.shift_up {
        for d in 0..depth {
            if d + 1 < depth {
                let (cur, next) = planes_pair_mut(x, c, d, d + 1);
                cur.copy_from_slice(next);
            } else {
                x.plane_mut(c, d).fill(0.0);
            }
        }
    }
    for c in cfg.shift_up..cfg.shift_up + cfg.shift_down {
        for d in (0..depth).rev() {
            if d > 0 {
                let (prev, cur) = planes_pair_mut(x, c, d - 1, d);
                cur.copy_from_slice(prev);
            } else {
                x.plane_mut(c, d).fill(0.0);
            }
        }
    }
    Ok(())
}

/// Transpose of [`tsm_shift`]: up channels receive the down-shift and vice
/// versa, with the same zero padding.
pub fn tsm_shift_adjoint(g: &mut Volume4D, cfg: &ShiftConfig) -> Result<(), ShiftError> {
    cfg.validate_for(g.channels())?;
    let depth = g.depth();
    // Up block's transpose is a down shift over the same channel range.
    for c in 0..cfg.shift_up {
        for d in (0..depth).rev() {
            if d > 0 {
                let (prev, cur) = planes_pair_mut(g, c, d - 1, d);
                cur.copy_from_slice(prev);
            } else {
                g.plane_mut(c, d).fill(0.0);
            }
        }
    }
    // Down block's transpose is an up shift.
    for c in cfg.shift_up..cfg.shift_up + cfg.shift_down {
        for d in 0..depth {
            if d + 1 < depth {
                let (cur, next) = planes_pair_mut(g, c, d, d + 1);
                cur.copy_from_slice(next);
            } else {
                g.plane_mut(c, d).fill(0.0);
            }
        }
    }
    Ok(())
}

/// Fractional slice shift with zero padding, in place.
///
/// With `alpha = r / s`:
/// up channels become `out[d] = alpha * in[d+1] + (1 - alpha) * in[d]`
/// (`in[D] = 0`), down channels `out[d] = alpha * in[d-1] + (1 - alpha) * in[d]`
/// (`in[-1] = 0`), static channels are untouched.
pub fn align_shift(
    x: &mut Volume4D,
    spacing: ThicknessMeta,
    cfg: &ShiftConfig,
) -> Result<(), ShiftError> {
    let alpha = AlignFactor::new(cfg.reference_mm, spacing)?.alpha();
    cfg.validate_for(x.channels())?;
    shift_blocks(x, cfg.shift_up, cfg.shift_down, alpha)
}

/// Transpose of [`align_shift`] for the same spacing and configuration.
///
/// Satisfies `<align_shift(x), g> = <x, align_shift_adjoint(g)>` for every
/// pair of same-shape volumes.
pub fn align_shift_adjoint(
    g: &mut Volume4D,
    spacing: ThicknessMeta,
    cfg: &ShiftConfig,
) -> Result<(), ShiftError> {
    let alpha = AlignFactor::new(cfg.reference_mm, spacing)?.alpha();
    cfg.validate_for(g.channels())?;
    // Swapping the direction of every shifted block transposes the map:
    // each block is (1-alpha) I + alpha S, and S^T is the opposite shift.
    shift_blocks_transposed(g, cfg.shift_up, cfg.shift_down, alpha)
}

fn shift_blocks(x: &mut Volume4D, up: usize, down: usize, alpha: f64) -> Result<(), ShiftError> {
    let depth = x.depth();
    let keep = 1.0 - alpha;
    for c in 0..up {
        up_blend(x, c, depth, alpha, keep);
    }
    for c in up..up + down {
        down_blend(x, c, depth, alpha, keep);
    }
    Ok(())
}

fn shift_blocks_transposed(
    g: &mut Volume4D,
    up: usize,
    down: usize,
    alpha: f64,
) -> Result<(), ShiftError> {
    let depth = g.depth();
    let keep = 1.0 - alpha;
    for c in 0..up {
        down_blend(g, c, depth, alpha, keep);
    }
    for c in up..up + down {
        up_blend(g, c, depth, alpha, keep);
    }
    Ok(())
}

/// `out[d] = alpha * in[d+1] + keep * in[d]`, ascending so each plane is
/// read before it is overwritten.
fn up_blend(x: &mut Volume4D, c: usize, depth: usize, alpha: f64, keep: f64) {
    for d in 0..depth {
        if d + 1 < depth {
            let (cur, next) = planes_pair_mut(x, c, d, d + 1);
            for (o, &n) in cur.iter_mut().zip(next.iter()) {
                *o = alpha * n + keep * *o;
            }
        } else {
            for o in x.plane_mut(c, d) {
                *o *= keep;
            }
        }
    }
}

/// `out[d] = alpha * in[d-1] + keep * in[d]`, descending for the same reason.
fn down_blend(x: &mut Volume4D, c: usize, depth: usize, alpha: f64, keep: f64) {
    for d in (0..depth).rev() {
        if d > 0 {
            let (prev, cur) = planes_pair_mut(x, c, d - 1, d);
            for (o, &p) in cur.iter_mut().zip(prev.iter()) {
                *o = alpha * p + keep * *o;
            }
        } else {
            for o in x.plane_mut(c, d) {
                *o *= keep;
            }
        }
    }
}

/// Mutable access to two distinct depth planes of one channel.
fn planes_pair_mut(x: &mut Volume4D, c: usize, d_lo: usize, d_hi: usize) -> (&mut [f64], &mut [f64]) {
    debug_assert!(d_lo < d_hi);
    let hw = x.height() * x.width();
    let lo_start = (c * x.depth() + d_lo) * hw;
    let hi_start = (c * x.depth() + d_hi) * hw;
    let (head, tail) = x.as_mut_slice().split_at_mut(hi_start);
    (&mut head[lo_start..lo_start + hw], &mut tail[..hw])
}
