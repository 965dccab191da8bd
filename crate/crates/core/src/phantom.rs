//! Seeded synthetic phantoms and the slice-averaging acquisition model.
//!
//! A phantom is a fine-grid (sub-millimeter) volume containing two blob
//! populations that are indistinguishable on a single axial slice:
//!
//! * lesions: compact ellipsoids a few millimeters deep, centered on the
//!   phantom's key plane. These are the detection targets.
//! * rods: the same in-plane footprint stretched over tens of millimeters
//!   of depth, crossing the key plane. These are distractors; only depth
//!   context separates them from lesions.
//!
//! The depth profile of a lesion lives near the acquisition scale, so a
//! thick-slice acquisition genuinely loses the evidence that distinguishes
//! the two populations.
//!
//! [`acquire`] simulates a scanner with a given slice thickness by box
//! averaging the fine slices inside each slab. A slab partially outside
//! the volume is truncated to the slices that exist.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::volume::{ThicknessMeta, Volume4D, VolumeError};

#[derive(Debug, Error, PartialEq)]
pub enum PhantomError {
    #[error("phantom needs at least one blob")]
    NoBlobs,
    #[error("phantom extent too small: need depth >= {min_depth_mm} mm and plane >= {min_plane} px")]
    VolumeTooSmall { min_depth_mm: f64, min_plane: usize },
    #[error("fine spacing must be positive and finite, got {0} mm")]
    BadFineSpacing(f64),
    #[error("could not place blob {index} without overlap after {tries} tries")]
    PlacementFailed { index: usize, tries: usize },
    #[error("slice thickness {slice_mm} mm is finer than the phantom grid {fine_mm} mm")]
    SliceTooFine { slice_mm: f64, fine_mm: f64 },
    #[error(transparent)]
    Volume(#[from] VolumeError),
}

/// Per-voxel noise level of the fine volume.
pub const NOISE_SIGMA: f64 = 0.35;

/// Depth extent (in fine slices) over which noise is correlated. Scanner
/// noise is not independent between sub-millimeter slices; without this
/// correlation, thick-slab averaging would cancel noise unrealistically.
const NOISE_CORR_SLICES: usize = 14;

const MIN_DEPTH_MM: f64 = 24.0;
const MIN_PLANE: usize = 16;
const PLACEMENT_TRIES: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlobKind {
    Lesion,
    Rod,
}

/// One blob annotation. In-plane coordinates are in pixels, depth in mm.
#[derive(Debug, Clone, PartialEq)]
pub struct Blob {
    pub kind: BlobKind,
    pub center_z_mm: f64,
    pub center_y: f64,
    pub center_x: f64,
    pub radius_px: f64,
    pub depth_semi_mm: f64,
    pub amplitude: f64,
}

/// Fine-grid ground-truth volume with its blob annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    pub volume: Volume4D,
    pub fine_spacing: ThicknessMeta,
    /// Depth of the annotated key plane, in mm from the volume start.
    pub key_z_mm: f64,
    /// Fine-grid index of the key plane.
    pub key_slice: usize,
    pub blobs: Vec<Blob>,
}

impl Phantom {
    pub fn lesions(&self) -> impl Iterator<Item = &Blob> {
        self.blobs.iter().filter(|b| b.kind == BlobKind::Lesion)
    }
}

/// Geometry of the fine grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhantomSize {
    pub depth_mm: f64,
    pub height: usize,
    pub width: usize,
    pub fine_spacing_mm: f64,
}

impl Default for PhantomSize {
    fn default() -> Self {
        Self {
            depth_mm: 64.0,
            height: 32,
            width: 32,
            fine_spacing_mm: 0.5,
        }
    }
}

/// Deterministically generates a phantom: blob layout, intensities, and
/// noise are all functions of `seed`.
///
/// Half of the blobs (rounded up) are lesions centered exactly on the key
/// plane; the rest are rods crossing it. Blobs are placed without in-plane
/// overlap; generation fails if a placement cannot be found within a
/// bounded number of tries.
pub fn generate_phantom(
    seed: u64,
    size: &PhantomSize,
    n_blobs: usize,
) -> Result<Phantom, PhantomError> {
    if n_blobs == 0 {
        return Err(PhantomError::NoBlobs);
    }
    if !(size.fine_spacing_mm.is_finite() && size.fine_spacing_mm > 0.0) {
        return Err(PhantomError::BadFineSpacing(size.fine_spacing_mm));
    }
    if size.depth_mm < MIN_DEPTH_MM || size.height < MIN_PLANE || size.width < MIN_PLANE {
        return Err(PhantomError::VolumeTooSmall {
            min_depth_mm: MIN_DEPTH_MM,
            min_plane: MIN_PLANE,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fine = size.fine_spacing_mm;
    let depth_slices = (size.depth_mm / fine).round() as usize;

    // Key plane sits in the central band so every acquisition window
    // around it stays inside the volume.
    let key_z_mm = size.depth_mm * rng.random_range(0.38..0.62);
    let key_slice = ((key_z_mm / fine) - 0.5).round().clamp(0.0, (depth_slices - 1) as f64) as usize;

    let n_lesions = n_blobs.div_ceil(2);
    let mut blobs: Vec<Blob> = Vec::with_capacity(n_blobs);
    for index in 0..n_blobs {
        let is_lesion = index < n_lesions;
        let mut placed = false;
        for _ in 0..PLACEMENT_TRIES {
            let radius_px = rng.random_range(2.5..4.0);
            let margin = radius_px + 2.0;
            let center_y = rng.random_range(margin..size.height as f64 - margin);
            let center_x = rng.random_range(margin..size.width as f64 - margin);
            let clash = blobs.iter().any(|b| {
                let dy = b.center_y - center_y;
                let dx = b.center_x - center_x;
                (dy * dy + dx * dx).sqrt() < b.radius_px + radius_px + 3.0
            });
            if clash {
                continue;
            }
            // Brightness is deliberately uninformative: both populations
            // share the amplitude range, so only depth context separates
            // them, and the dim tail produces genuinely marginal targets.
            let amplitude = rng.random_range(0.4..1.1);
            let blob = if is_lesion {
                Blob {
                    kind: BlobKind::Lesion,
                    center_z_mm: key_z_mm,
                    center_y,
                    center_x,
                    radius_px,
                    depth_semi_mm: rng.random_range(1.8..2.4),
                    amplitude,
                }
            } else {
                let center_z_mm = key_z_mm + rng.random_range(-1.0..1.0);
                let fit = center_z_mm.min(size.depth_mm - center_z_mm) - 0.5;
                Blob {
                    kind: BlobKind::Rod,
                    center_z_mm,
                    center_y,
                    center_x,
                    radius_px,
                    depth_semi_mm: rng.random_range(16.0_f64..22.0).min(fit),
                    amplitude,
                }
            };
            blobs.push(blob);
            placed = true;
            break;
        }
        if !placed {
            return Err(PhantomError::PlacementFailed {
                index,
                tries: PLACEMENT_TRIES,
            });
        }
    }

    let mut volume = Volume4D::new(1, depth_slices, size.height, size.width, 0.0)?;
    for blob in &blobs {
        rasterize(&mut volume, blob, fine);
    }
    add_depth_correlated_noise(&mut volume, &mut rng);

    Ok(Phantom {
        volume,
        fine_spacing: ThicknessMeta::new(fine)?,
        key_z_mm,
        key_slice,
        blobs,
    })
}

/// Compactly supported depth profile on `t = dz / semi`, zero for
/// `|t| >= 1`. Lesions fall off quadratically inside their support; rods
/// hold a plateau and taper only near the ends, so a rod looks flat over
/// any context window while a lesion is a sharp bump.
fn depth_profile(kind: BlobKind, t: f64) -> f64 {
    let t2 = t * t;
    if t2 >= 1.0 {
        return 0.0;
    }
    let base = match kind {
        BlobKind::Lesion => 1.0 - t2,
        BlobKind::Rod => 1.0 - t2 * t2 * t2 * t2,
    };
    base * base
}

/// Adds one blob's intensity: a paraboloid footprint in the plane times
/// its [`depth_profile`].
fn rasterize(volume: &mut Volume4D, blob: &Blob, fine_mm: f64) {
    let [_, d_n, h_n, w_n] = volume.dims();
    let inv_r2 = 1.0 / (blob.radius_px * blob.radius_px);
    let inv_s = 1.0 / blob.depth_semi_mm;

    // Bounding box keeps rasterization linear in blob size.
    let z_lo = (((blob.center_z_mm - blob.depth_semi_mm) / fine_mm - 0.5).floor()).max(0.0) as usize;
    let z_hi = ((((blob.center_z_mm + blob.depth_semi_mm) / fine_mm) - 0.5).ceil() as usize).min(d_n - 1);
    let y_lo = ((blob.center_y - blob.radius_px).floor()).max(0.0) as usize;
    let y_hi = (((blob.center_y + blob.radius_px).ceil()) as usize).min(h_n - 1);
    let x_lo = ((blob.center_x - blob.radius_px).floor()).max(0.0) as usize;
    let x_hi = (((blob.center_x + blob.radius_px).ceil()) as usize).min(w_n - 1);

    for z in z_lo..=z_hi {
        let z_mm = (z as f64 + 0.5) * fine_mm;
        let t = (z_mm - blob.center_z_mm) * inv_s;
        let profile = depth_profile(blob.kind, t);
        if profile <= 0.0 {
            continue;
        }
        let plane = volume.plane_mut(0, z);
        for y in y_lo..=y_hi {
            let dy = y as f64 + 0.5 - blob.center_y;
            for x in x_lo..=x_hi {
                let dx = x as f64 + 0.5 - blob.center_x;
                let footprint = 1.0 - (dy * dy + dx * dx) * inv_r2;
                if footprint > 0.0 {
                    plane[y * w_n + x] += blob.amplitude * footprint * profile;
                }
            }
        }
    }
}

/// Adds noise with per-voxel deviation [`NOISE_SIGMA`], correlated along
/// depth by a moving average of white noise over [`NOISE_CORR_SLICES`]
/// slices (clamped at the volume borders).
fn add_depth_correlated_noise(volume: &mut Volume4D, rng: &mut ChaCha8Rng) {
    let [_, d_n, h_n, w_n] = volume.dims();
    let hw = h_n * w_n;
    let half = NOISE_CORR_SLICES / 2;
    // White noise scaled so the averaged field has the target deviation.
    let white_sigma = NOISE_SIGMA * (NOISE_CORR_SLICES as f64).sqrt();
    let noise = Normal::new(0.0, white_sigma).expect("valid sigma");
    let white: Vec<f64> = (0..d_n * hw).map(|_| noise.sample(rng)).collect();
    for z in 0..d_n {
        let lo = z.saturating_sub(half);
        let hi = (z + half).min(d_n - 1);
        let inv = 1.0 / NOISE_CORR_SLICES as f64;
        let plane = volume.plane_mut(0, z);
        for (p, plane_value) in plane.iter_mut().enumerate() {
            let mut acc = 0.0;
            for w in lo..=hi {
                acc += white[w * hw + p];
            }
            *plane_value += acc * inv;
        }
    }
}

/// Simulates acquisition at `slice_mm` by box-averaging the fine slices
/// whose centers fall inside each slab of that thickness. Returns the
/// acquired volume with its spacing metadata; a final slab extending past
/// the volume is truncated to the slices that exist.
pub fn acquire(p: &Phantom, slice_mm: f64) -> Result<(Volume4D, ThicknessMeta), PhantomError> {
    let fine = p.fine_spacing.spacing_mm();
    if !(slice_mm.is_finite() && slice_mm >= fine) {
        return Err(PhantomError::SliceTooFine {
            slice_mm,
            fine_mm: fine,
        });
    }
    let [_, d_fine, h_n, w_n] = p.volume.dims();
    let total_mm = d_fine as f64 * fine;
    let mut n_slabs = (total_mm / slice_mm).ceil() as usize;

    let mut sums = vec![0.0; n_slabs * h_n * w_n];
    let mut counts = vec![0usize; n_slabs];
    let hw = h_n * w_n;
    for i in 0..d_fine {
        let center = (i as f64 + 0.5) * fine;
        let slab = ((center / slice_mm).floor() as usize).min(n_slabs - 1);
        counts[slab] += 1;
        let src = p.volume.plane(0, i);
        let dst = &mut sums[slab * hw..(slab + 1) * hw];
        for (acc, &v) in dst.iter_mut().zip(src) {
            *acc += v;
        }
    }
    // A trailing slab whose intersection with the volume contains no fine
    // slice centers carries no data; drop it.
    while n_slabs > 1 && counts[n_slabs - 1] == 0 {
        n_slabs -= 1;
        sums.truncate(n_slabs * hw);
    }
    for (slab, &count) in counts.iter().enumerate().take(n_slabs) {
        let inv = 1.0 / count as f64;
        for v in &mut sums[slab * hw..(slab + 1) * hw] {
            *v *= inv;
        }
    }
    Ok((
        Volume4D::from_vec(1, n_slabs, h_n, w_n, sums)?,
        ThicknessMeta::new(slice_mm)?,
    ))
}
