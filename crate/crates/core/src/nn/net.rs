//! Layer sequencing: a 3D backbone with optional shift prefixes, and the
//! full heat-map model used by the benchmark.

use crate::convert::{LayerSpec, NetworkSpec};
use crate::nn::ops::{Conv3dOp, DepthSqueezeOp, LinearHeadOp, Norm3dOp, NormMode, Pool3dOp, ReluOp};
use crate::nn::NnError;
use crate::shift::{align_shift, align_shift_adjoint, ShiftConfig};
use crate::volume::{ThicknessMeta, Volume4D};

/// One backbone stage: an optional in-place shift followed by an operator.
#[derive(Debug, Clone)]
pub struct ShiftedLayer {
    pub shift: Option<ShiftConfig>,
    pub op: OpNode,
}

impl ShiftedLayer {
    pub fn plain(op: OpNode) -> Self {
        Self { shift: None, op }
    }

    pub fn shifted(cfg: ShiftConfig, op: OpNode) -> Self {
        Self {
            shift: Some(cfg),
            op,
        }
    }
}

/// The operator kinds a backbone can hold.
#[derive(Debug, Clone)]
pub enum OpNode {
    Conv3d(Conv3dOp),
    Relu(ReluOp),
    Pool3d(Pool3dOp),
    Norm3d(Norm3dOp),
}

impl OpNode {
    fn forward(&mut self, x: &Volume4D) -> Result<Volume4D, NnError> {
        match self {
            OpNode::Conv3d(op) => op.forward(x),
            OpNode::Relu(op) => op.forward(x),
            OpNode::Pool3d(op) => op.forward(x),
            OpNode::Norm3d(op) => op.forward(x),
        }
    }

    fn backward(&mut self, grad: &Volume4D) -> Result<Volume4D, NnError> {
        match self {
            OpNode::Conv3d(op) => op.backward(grad),
            OpNode::Relu(op) => op.backward(grad),
            OpNode::Pool3d(op) => op.backward(grad),
            OpNode::Norm3d(op) => op.backward(grad),
        }
    }

    fn visit_params<F: FnMut(&[f64])>(&self, f: &mut F) {
        match self {
            OpNode::Conv3d(op) => {
                f(&op.weights.data);
                f(&op.bias);
            }
            OpNode::Norm3d(op) => {
                f(&op.stats.scale);
                f(&op.stats.offset);
            }
            OpNode::Relu(_) | OpNode::Pool3d(_) => {}
        }
    }

    fn visit_params_mut<F: FnMut(&mut [f64])>(&mut self, f: &mut F) {
        match self {
            OpNode::Conv3d(op) => {
                f(&mut op.weights.data);
                f(&mut op.bias);
            }
            OpNode::Norm3d(op) => {
                f(&mut op.stats.scale);
                f(&mut op.stats.offset);
            }
            OpNode::Relu(_) | OpNode::Pool3d(_) => {}
        }
    }

    fn visit_grads<F: FnMut(&[f64])>(&self, f: &mut F) {
        match self {
            OpNode::Conv3d(op) => {
                f(&op.grad_weights);
                f(&op.grad_bias);
            }
            OpNode::Norm3d(op) => {
                f(&op.grad_scale);
                f(&op.grad_offset);
            }
            OpNode::Relu(_) | OpNode::Pool3d(_) => {}
        }
    }

    fn zero_grad(&mut self) {
        match self {
            OpNode::Conv3d(op) => {
                op.grad_weights.fill(0.0);
                op.grad_bias.fill(0.0);
            }
            OpNode::Norm3d(op) => {
                op.grad_scale.fill(0.0);
                op.grad_offset.fill(0.0);
            }
            OpNode::Relu(_) | OpNode::Pool3d(_) => {}
        }
    }
}

/// Sequential 3D network threading `(volume, thickness)` through its
/// layers. Shift prefixes are applied in place before their operator on
/// the forward pass; the backward pass applies the matching adjoints in
/// reverse order.
#[derive(Debug, Clone, Default)]
pub struct Network3d {
    layers: Vec<ShiftedLayer>,
    last_spacing: Option<ThicknessMeta>,
}

impl Network3d {
    pub fn new(layers: Vec<ShiftedLayer>) -> Self {
        Self {
            layers,
            last_spacing: None,
        }
    }

    /// Builds the runtime network for a fully converted (3D) specification.
    /// Norm layers run with the mode given here.
    pub fn from_spec(spec: &NetworkSpec, norm_mode: NormMode) -> Result<Self, NnError> {
        let mut layers = Vec::with_capacity(spec.layers.len());
        for (index, layer) in spec.layers.iter().enumerate() {
            let stage = match layer {
                LayerSpec::Conv3d {
                    weights,
                    bias,
                    shift_prefix,
                } => ShiftedLayer {
                    shift: *shift_prefix,
                    op: OpNode::Conv3d(Conv3dOp::new(weights.clone(), bias.clone())?),
                },
                LayerSpec::Pool3d { kernel } => ShiftedLayer::plain(OpNode::Pool3d(Pool3dOp::new(*kernel))),
                LayerSpec::Norm3d { stats } => {
                    ShiftedLayer::plain(OpNode::Norm3d(Norm3dOp::new(stats.clone(), norm_mode)))
                }
                LayerSpec::Conv2d { .. } | LayerSpec::Pool2d { .. } | LayerSpec::Norm2d { .. } => {
                    return Err(NnError::NotConverted(index))
                }
            };
            layers.push(stage);
        }
        Ok(Self::new(layers))
    }

    pub fn push(&mut self, layer: ShiftedLayer) {
        self.layers.push(layer);
    }

    pub fn layers(&self) -> &[ShiftedLayer] {
        &self.layers
    }

    /// Number of shift-prefixed stages, i.e. the interior margin the
    /// network needs along depth.
    pub fn shift_count(&self) -> usize {
        self.layers.iter().filter(|l| l.shift.is_some()).count()
    }

    pub fn forward(&mut self, x: &Volume4D, spacing: ThicknessMeta) -> Result<Volume4D, NnError> {
        let mut cur = x.clone();
        for layer in &mut self.layers {
            if let Some(cfg) = &layer.shift {
                align_shift(&mut cur, spacing, cfg)?;
            }
            cur = layer.op.forward(&cur)?;
        }
        self.last_spacing = Some(spacing);
        Ok(cur)
    }

    /// Backpropagates through the layers of the last `forward` call and
    /// returns the gradient with respect to the network input. Parameter
    /// gradients accumulate inside each operator.
    pub fn backward(&mut self, grad_out: &Volume4D) -> Result<Volume4D, NnError> {
        let spacing = self.last_spacing.ok_or(NnError::BackwardBeforeForward)?;
        let mut grad = grad_out.clone();
        for layer in self.layers.iter_mut().rev() {
            grad = layer.op.backward(&grad)?;
            if let Some(cfg) = &layer.shift {
                align_shift_adjoint(&mut grad, spacing, cfg)?;
            }
        }
        Ok(grad)
    }

    pub fn param_count(&self) -> usize {
        let mut n = 0;
        for layer in &self.layers {
            layer.op.visit_params(&mut |p| n += p.len());
        }
        n
    }

    /// Flattened copy of all learnable parameters, in layer order.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            layer.op.visit_params(&mut |p| out.extend_from_slice(p));
        }
        out
    }

    /// Overwrites all learnable parameters from a flat slice.
    pub fn set_params(&mut self, flat: &[f64]) {
        let mut offset = 0;
        for layer in &mut self.layers {
            layer.op.visit_params_mut(&mut |p| {
                p.copy_from_slice(&flat[offset..offset + p.len()]);
                offset += p.len();
            });
        }
        assert_eq!(offset, flat.len(), "parameter vector length mismatch");
    }

    /// Flattened copy of the accumulated gradients, aligned with `params`.
    pub fn grads(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            layer.op.visit_grads(&mut |g| out.extend_from_slice(g));
        }
        out
    }

    pub fn zero_grad(&mut self) {
        for layer in &mut self.layers {
            layer.op.zero_grad();
        }
    }

    /// Plain gradient step on every learnable parameter.
    pub fn sgd_step(&mut self, learning_rate: f64) {
        let grads = self.grads();
        let mut params = self.params();
        super::sgd_step(&mut params, &grads, learning_rate);
        self.set_params(&params);
    }
}

/// Backbone + depth squeeze + per-pixel linear head: maps an input volume
/// to a flat heat-map prediction over the key slice.
#[derive(Debug, Clone)]
pub struct HeatmapModel {
    pub backbone: Network3d,
    pub squeeze: DepthSqueezeOp,
    pub head: LinearHeadOp,
}

impl HeatmapModel {
    pub fn new(backbone: Network3d, squeeze: DepthSqueezeOp, head: LinearHeadOp) -> Self {
        Self {
            backbone,
            squeeze,
            head,
        }
    }

    /// Prediction vector (row-major `H * W` logits) for one input volume.
    pub fn forward(&mut self, x: &Volume4D, spacing: ThicknessMeta) -> Result<Vec<f64>, NnError> {
        let features = self.backbone.forward(x, spacing)?;
        let squeezed = self.squeeze.forward(&features)?;
        self.head.forward(&squeezed)
    }

    /// Backpropagates a prediction gradient down to the input, accumulating
    /// parameter gradients along the way.
    pub fn backward(&mut self, grad_pred: &[f64]) -> Result<Volume4D, NnError> {
        let grad_feat = self.head.backward(grad_pred)?;
        let grad_vol = self.squeeze.backward(&grad_feat)?;
        self.backbone.backward(&grad_vol)
    }

    pub fn param_count(&self) -> usize {
        self.backbone.param_count() + self.squeeze.weights.data.len() + self.head.weights.len() + 1
    }

    pub fn params(&self) -> Vec<f64> {
        let mut out = self.backbone.params();
        out.extend_from_slice(&self.squeeze.weights.data);
        out.extend_from_slice(&self.head.weights);
        out.push(self.head.bias);
        out
    }

    pub fn set_params(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count(), "parameter vector length mismatch");
        let nb = self.backbone.param_count();
        self.backbone.set_params(&flat[..nb]);
        let ns = self.squeeze.weights.data.len();
        self.squeeze.weights.data.copy_from_slice(&flat[nb..nb + ns]);
        let nh = self.head.weights.len();
        self.head.weights.copy_from_slice(&flat[nb + ns..nb + ns + nh]);
        self.head.bias = flat[nb + ns + nh];
    }

    pub fn grads(&self) -> Vec<f64> {
        let mut out = self.backbone.grads();
        out.extend_from_slice(&self.squeeze.grad_weights);
        out.extend_from_slice(&self.head.grad_weights);
        out.push(self.head.grad_bias);
        out
    }

    pub fn zero_grad(&mut self) {
        self.backbone.zero_grad();
        self.squeeze.grad_weights.fill(0.0);
        self.head.grad_weights.fill(0.0);
        self.head.grad_bias = 0.0;
    }

    pub fn sgd_step(&mut self, learning_rate: f64) {
        let grads = self.grads();
        let mut params = self.params();
        super::sgd_step(&mut params, &grads, learning_rate);
        self.set_params(&params);
    }
}
