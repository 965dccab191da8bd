//! Minimal forward + backward neural operators.
//!
//! Just enough machinery to train the toy converted networks used by the
//! benchmark: depth-1 3D convolution, spatial max pooling, per-channel
//! normalization, ReLU, the depth-squeeze projection, a per-pixel linear
//! head, binary cross-entropy, and plain SGD. There is no autodiff graph;
//! every operator carries its own backward pass, and all of them are
//! checked against central finite differences in the test suite.

mod net;
mod ops;

pub use net::{HeatmapModel, Network3d, OpNode, ShiftedLayer};
pub use ops::{
    bce_with_logits, conv3d_1kk_backward, conv3d_1kk_forward, depth_squeeze,
    depth_squeeze_backward, linear_head_backward, linear_head_forward, norm3d_backward,
    norm3d_forward, pool3d_1kk_backward, pool3d_1kk_forward, relu_backward, relu_forward,
    Conv3dOp, DepthSqueezeOp, LinearHeadOp, Norm3dOp, NormMode, Pool3dOp, ReluOp, SqueezeWeights,
    NORM_EPS,
};

use thiserror::Error;

use crate::shift::ShiftError;
use crate::volume::VolumeError;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("operator expects {expected} input channels, got {got}")]
    ChannelMismatch { expected: usize, got: usize },
    #[error("bias has {got} entries for {expected} output channels")]
    BiasLength { expected: usize, got: usize },
    #[error("spatial kernel must be odd for same-padding, got {0}")]
    EvenKernel(usize),
    #[error("pool kernel {kernel} exceeds plane {height}x{width}")]
    PoolTooLarge {
        kernel: usize,
        height: usize,
        width: usize,
    },
    #[error("squeeze weights cover depth {expected}, volume has depth {got}")]
    DepthMismatch { expected: usize, got: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("backward called before forward cached an input")]
    BackwardBeforeForward,
    #[error("network contains an unconverted 2D layer at index {0}")]
    NotConverted(usize),
    #[error(transparent)]
    Shift(#[from] ShiftError),
    #[error(transparent)]
    Volume(#[from] VolumeError),
}

/// Owned `C x H x W` feature map, row-major, produced by the depth squeeze.
#[derive(Debug, Clone, PartialEq)]
pub struct Feature3 {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Feature3 {
    pub fn new(channels: usize, height: usize, width: usize, fill: f64) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![fill; channels * height * width],
        }
    }

    pub fn from_vec(
        channels: usize,
        height: usize,
        width: usize,
        data: Vec<f64>,
    ) -> Result<Self, NnError> {
        if data.len() != channels * height * width {
            return Err(NnError::Shape(format!(
                "feature data length {} != {channels}x{height}x{width}",
                data.len()
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn get(&self, c: usize, h: usize, w: usize) -> f64 {
        self.data[(c * self.height + h) * self.width + w]
    }

    #[inline]
    pub fn set(&mut self, c: usize, h: usize, w: usize, value: f64) {
        self.data[(c * self.height + h) * self.width + w] = value;
    }

    #[inline]
    pub fn plane(&self, c: usize) -> &[f64] {
        let hw = self.height * self.width;
        &self.data[c * hw..(c + 1) * hw]
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// Hyperparameters of a deterministic training run. The same configuration
/// on the same data produces a bitwise-identical trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            epochs: 10,
            batch_size: 1,
            seed: 0,
        }
    }
}

/// One plain gradient-descent update, `p -= lr * g`.
pub fn sgd_step(params: &mut [f64], grads: &[f64], learning_rate: f64) {
    assert_eq!(params.len(), grads.len(), "parameter/gradient length mismatch");
    for (p, g) in params.iter_mut().zip(grads) {
        *p -= learning_rate * g;
    }
}
