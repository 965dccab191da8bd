//! Depth-axis spatial normalization and the thin/thick thickness policy.
//!
//! The pipeline routes volumes by spacing: anything at or below the
//! reference thickness is resampled onto the reference grid, anything
//! thicker keeps its native grid (resampling thick data loses far more
//! information than it recovers). [`resample_depth`] interpolates linearly
//! along depth only; in-plane geometry is never touched.

use thiserror::Error;

use crate::volume::{ThicknessMeta, Volume4D, VolumeError};

#[derive(Debug, Error, PartialEq)]
pub enum ResampleError {
    #[error("target spacing must be positive and finite, got {0} mm")]
    InvalidTarget(f64),
    #[error("reference thickness must be positive and finite, got {0} mm")]
    InvalidReference(f64),
    #[error("cannot resample a single-slice volume to a different spacing")]
    SingleSliceNoBasis,
    #[error("resampled depth {0} is too large")]
    DepthOverflow(f64),
    #[error(transparent)]
    Volume(#[from] VolumeError),
}

/// Routing decision for one volume: normalize onto the reference grid, or
/// keep the native grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThicknessPolicyDecision {
    Normalize { target_mm: f64 },
    KeepOriginal,
}

/// Thin volumes (`s <= r`, boundary inclusive) are normalized to the
/// reference `r`; thick volumes keep their original spacing.
pub fn thickness_policy(
    spacing: ThicknessMeta,
    reference_mm: f64,
) -> Result<ThicknessPolicyDecision, ResampleError> {
    if !(reference_mm.is_finite() && reference_mm > 0.0) {
        return Err(ResampleError::InvalidReference(reference_mm));
    }
    if spacing.spacing_mm() <= reference_mm {
        Ok(ThicknessPolicyDecision::Normalize {
            target_mm: reference_mm,
        })
    } else {
        Ok(ThicknessPolicyDecision::KeepOriginal)
    }
}

/// Linearly resamples the depth axis from spacing `s` to `target_mm`.
///
/// The output grid is anchored at input slice 0 and has
/// `D' = round((D-1) * s / target) + 1` slices; output slice `j` is the
/// linear interpolation of the input at continuous position
/// `j * target / s`, clamped to `[0, D-1]`. Channels and in-plane shape
/// are unchanged; the returned [`ThicknessMeta`] is the target spacing.
pub fn resample_depth(
    v: &Volume4D,
    spacing: ThicknessMeta,
    target_mm: f64,
) -> Result<(Volume4D, ThicknessMeta), ResampleError> {
    if !(target_mm.is_finite() && target_mm > 0.0) {
        return Err(ResampleError::InvalidTarget(target_mm));
    }
    let s = spacing.spacing_mm();
    let out_meta = ThicknessMeta::new(target_mm)?;

    if target_mm == s {
        return Ok((v.clone(), out_meta));
    }
    let d_in = v.depth();
    if d_in == 1 {
        return Err(ResampleError::SingleSliceNoBasis);
    }

    let span = (d_in - 1) as f64 * s / target_mm;
    let rounded = span.round();
    if !(rounded >= 0.0 && rounded < (usize::MAX / 2) as f64) {
        return Err(ResampleError::DepthOverflow(span));
    }
    let d_out = rounded as usize + 1;

    let [c_n, _, h_n, w_n] = v.dims();
    let mut out = Volume4D::new(c_n, d_out, h_n, w_n, 0.0)?;
    let ratio = target_mm / s;
    let max_pos = (d_in - 1) as f64;

    for j in 0..d_out {
        let pos = (j as f64 * ratio).clamp(0.0, max_pos);
        let i0 = pos.floor() as usize;
        let frac = pos - i0 as f64;
        for c in 0..c_n {
            if frac == 0.0 {
                out.plane_mut(c, j).copy_from_slice(v.plane(c, i0));
            } else {
                let lo = v.plane(c, i0);
                let hi = v.plane(c, i0 + 1);
                let dst = out.plane_mut(c, j);
                for ((o, &a), &b) in dst.iter_mut().zip(lo).zip(hi) {
                    *o = (1.0 - frac) * a + frac * b;
                }
            }
        }
    }
    Ok((out, out_meta))
}
