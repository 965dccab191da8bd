//! Thickness-aware tensor operators for anisotropic 3D volumes.
//!
//! Volumetric scans arrive with wildly different slice thicknesses (1 mm
//! and 5 mm dominate in practice), and models trained after naive spatial
//! normalization perform visibly worse on thick-slice data. This crate
//! implements the machinery to study and close that gap:
//!
//! * [`volume`]: dense `C x D x H x W` tensors ([`Volume4D`]) carrying
//!   their physical depth spacing ([`ThicknessMeta`]), plus the `.v4d`
//!   file format in [`io`].
//! * [`shift`]: the whole-slice shift operator ([`tsm_shift`]) and the
//!   fractional, thickness-aware variant ([`align_shift`]) whose shift
//!   distance is a fixed physical length regardless of slice spacing,
//!   with exact adjoints for backpropagation.
//! * [`resample`]: linear depth resampling and the thin/thick routing
//!   policy ([`thickness_policy`]).
//! * [`convert`]: the mechanical 2D-to-3D network conversion recipe with
//!   value-preserving weight inflation.
//! * [`nn`]: minimal forward/backward operators (depth-1 convolution,
//!   pooling, normalization, depth squeeze, linear head) sufficient to
//!   train the converted toy networks.
//! * [`phantom`], [`froc`], [`experiment`]: a seeded synthetic benchmark
//!   that acquires shared phantoms at thin and thick spacings, trains
//!   2.5D / TSM / AlignShift detector variants, and reports the
//!   thin-vs-thick sensitivity gap.

pub mod convert;
pub mod experiment;
pub mod froc;
pub mod io;
pub mod nn;
pub mod phantom;
pub mod resample;
pub mod shift;
pub mod volume;

pub use convert::{
    convert_layer, convert_network, inflate_conv_weights, ConvWeights2d, ConvWeights3d,
    LayerSpec, NetworkSpec, NormStats,
};
pub use experiment::{run_gap_experiment, BenchConfig, Cohort, GapReport, GapRow, Strategy};
pub use froc::{froc_sensitivity, Detection, DetectionRecord, FrocResult};
pub use resample::{resample_depth, thickness_policy, ThicknessPolicyDecision};
pub use shift::{
    align_shift, align_shift_adjoint, tsm_shift, tsm_shift_adjoint, AlignFactor, ShiftConfig,
};
pub use volume::{DepthSlice, ThicknessMeta, Volume4D};
