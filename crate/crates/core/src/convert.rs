//! Mechanical 2D-to-3D layer conversion with weight inflation.
//!
//! The recipe converts a 2D backbone layer by layer:
//!
//! | 2D layer        | 3D counterpart                      |
//! |-----------------|-------------------------------------|
//! | Conv2D `KxK`    | (shift +) Conv3D `1xKxK`            |
//! | Pool2D `KxK`    | Pool3D `1xKxK` (depth untouched)    |
//! | Norm2D          | Norm3D, statistics shared over depth|
//!
//! Every 3D conv kernel has depth extent exactly 1, so inflation is a
//! value-preserving reshape and the converted network has the same
//! parameter count as the source: the shift prefix itself is parameter
//! free.
//!
//! # Manifest format
//!
//! [`write_network`] serializes a [`NetworkSpec`] as a line-oriented UTF-8
//! manifest plus a sidecar weights file:
//!
//! ```text
//! NETSPEC 1 <input_channels> <n_layers> <shift_up> <shift_down> <reference_mm>
//! <kind> <K> <in_channels> <out_channels> <shift_flag>
//! ...
//! ```
//!
//! `kind` is one of `conv2d pool2d norm2d conv3d pool3d norm3d`. Fields a
//! layer does not use are written as `0`; `shift_flag` is `1` only on 3D
//! convs with a shift prefix, and the prefix configuration lives in the
//! header (one configuration per network). The weights file is the
//! little-endian 64-bit floats of each layer concatenated in layer order:
//! convs contribute kernel weights then bias, norms contribute scale,
//! offset, running mean, then running variance, pools contribute nothing.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::shift::ShiftConfig;

#[derive(Debug, Error)]
pub enum ConvertError {
    #[error("layer {index} is already 3D; conversion takes 2D layers only")]
    Already3d { index: usize },
    #[error("conv weights length {got} does not match {out}x{in_c}x{k}x{k}")]
    WeightShape {
        out: usize,
        in_c: usize,
        k: usize,
        got: usize,
    },
    #[error("bias length {got} does not match {out} output channels")]
    BiasShape { out: usize, got: usize },
    #[error("norm statistics lengths {got:?} disagree")]
    NormShape { got: [usize; 4] },
    #[error("kernel size must be at least 1")]
    ZeroKernel,
    #[error("layer {index} expects {expected} input channels but receives {got}")]
    ChannelMismatch {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("shift policy has {got} flags for {layers} layers")]
    PolicyLength { layers: usize, got: usize },
    #[error("shift requested on layer {index}, which is not a 2D convolution")]
    ShiftOnNonConv { index: usize },
    #[error("manifest mixes distinct shift configurations; one per network is supported")]
    MixedShiftConfigs,
    #[error("malformed manifest: {0}")]
    BadManifest(String),
    #[error("weights sidecar ends early: {0} more values expected")]
    WeightsTooShort(usize),
    #[error("weights sidecar has trailing bytes")]
    WeightsTooLong,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Per-channel affine normalization statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub scale: Vec<f64>,
    pub offset: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

impl NormStats {
    pub fn new(
        scale: Vec<f64>,
        offset: Vec<f64>,
        running_mean: Vec<f64>,
        running_var: Vec<f64>,
    ) -> Result<Self, ConvertError> {
        let lens = [scale.len(), offset.len(), running_mean.len(), running_var.len()];
        if lens.iter().any(|&l| l != lens[0] || l == 0) {
            return Err(ConvertError::NormShape { got: lens });
        }
        Ok(Self {
            scale,
            offset,
            running_mean,
            running_var,
        })
    }

    /// Identity transform for `channels` channels.
    pub fn identity(channels: usize) -> Self {
        Self {
            scale: vec![1.0; channels],
            offset: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.scale.len()
    }
}

/// `out x in x K x K` kernel of a 2D convolution, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvWeights2d {
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel: usize,
    pub data: Vec<f64>,
}

impl ConvWeights2d {
    pub fn new(
        out_channels: usize,
        in_channels: usize,
        kernel: usize,
        data: Vec<f64>,
    ) -> Result<Self, ConvertError> {
        if kernel == 0 {
            return Err(ConvertError::ZeroKernel);
        }
        let expected = out_channels * in_channels * kernel * kernel;
        if data.len() != expected || expected == 0 {
            return Err(ConvertError::WeightShape {
                out: out_channels,
                in_c: in_channels,
                k: kernel,
                got: data.len(),
            });
        }
        Ok(Self {
            out_channels,
            in_channels,
            kernel,
            data,
        })
    }
}

/// `out x in x 1 x K x K` kernel of a depth-1 3D convolution, row-major.
///
/// The depth extent is structurally fixed at 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvWeights3d {
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel: usize,
    pub data: Vec<f64>,
}

impl ConvWeights3d {
    pub fn new(
        out_channels: usize,
        in_channels: usize,
        kernel: usize,
        data: Vec<f64>,
    ) -> Result<Self, ConvertError> {
        if kernel == 0 {
            return Err(ConvertError::ZeroKernel);
        }
        let expected = out_channels * in_channels * kernel * kernel;
        if data.len() != expected || expected == 0 {
            return Err(ConvertError::WeightShape {
                out: out_channels,
                in_c: in_channels,
                k: kernel,
                got: data.len(),
            });
        }
        Ok(Self {
            out_channels,
            in_channels,
            kernel,
            data,
        })
    }

    /// Flat offset of `w[o][i][0][u][v]`.
    #[inline]
    pub fn at(&self, o: usize, i: usize, u: usize, v: usize) -> f64 {
        let k = self.kernel;
        self.data[((o * self.in_channels + i) * k + u) * k + v]
    }
}

/// Inserts a depth axis of extent 1; the flat values are untouched.
pub fn inflate_conv_weights(w2d: &ConvWeights2d) -> ConvWeights3d {
    ConvWeights3d {
        out_channels: w2d.out_channels,
        in_channels: w2d.in_channels,
        kernel: w2d.kernel,
        data: w2d.data.clone(),
    }
}

/// Declarative description of one layer, 2D or 3D.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    Conv2d {
        weights: ConvWeights2d,
        bias: Vec<f64>,
    },
    Pool2d {
        kernel: usize,
    },
    Norm2d {
        stats: NormStats,
    },
    Conv3d {
        weights: ConvWeights3d,
        bias: Vec<f64>,
        shift_prefix: Option<ShiftConfig>,
    },
    Pool3d {
        kernel: usize,
    },
    Norm3d {
        stats: NormStats,
    },
}

impl LayerSpec {
    pub fn is_2d(&self) -> bool {
        matches!(
            self,
            LayerSpec::Conv2d { .. } | LayerSpec::Pool2d { .. } | LayerSpec::Norm2d { .. }
        )
    }

    /// Number of learnable parameters (running statistics excluded).
    pub fn param_count(&self) -> usize {
        match self {
            LayerSpec::Conv2d { weights, bias } => weights.data.len() + bias.len(),
            LayerSpec::Conv3d { weights, bias, .. } => weights.data.len() + bias.len(),
            LayerSpec::Norm2d { stats } | LayerSpec::Norm3d { stats } => {
                stats.scale.len() + stats.offset.len()
            }
            LayerSpec::Pool2d { .. } | LayerSpec::Pool3d { .. } => 0,
        }
    }

    /// Output channel count given the input channel count, checking
    /// compatibility.
    fn propagate_channels(&self, index: usize, input: usize) -> Result<usize, ConvertError> {
        match self {
            LayerSpec::Conv2d { weights, bias } => {
                if weights.in_channels != input {
                    return Err(ConvertError::ChannelMismatch {
                        index,
                        expected: weights.in_channels,
                        got: input,
                    });
                }
                if bias.len() != weights.out_channels {
                    return Err(ConvertError::BiasShape {
                        out: weights.out_channels,
                        got: bias.len(),
                    });
                }
                Ok(weights.out_channels)
            }
            LayerSpec::Conv3d { weights, bias, .. } => {
                if weights.in_channels != input {
                    return Err(ConvertError::ChannelMismatch {
                        index,
                        expected: weights.in_channels,
                        got: input,
                    });
                }
                if bias.len() != weights.out_channels {
                    return Err(ConvertError::BiasShape {
                        out: weights.out_channels,
                        got: bias.len(),
                    });
                }
                Ok(weights.out_channels)
            }
            LayerSpec::Norm2d { stats } | LayerSpec::Norm3d { stats } => {
                if stats.channels() != input {
                    return Err(ConvertError::ChannelMismatch {
                        index,
                        expected: stats.channels(),
                        got: input,
                    });
                }
                Ok(input)
            }
            LayerSpec::Pool2d { .. } | LayerSpec::Pool3d { .. } => Ok(input),
        }
    }
}

/// Converts one 2D layer into its 3D counterpart.
///
/// `attach_shift` prefixes the produced 3D conv with `cfg`; it is an error
/// on non-conv layers and on layers that are already 3D.
pub fn convert_layer(
    layer: &LayerSpec,
    attach_shift: bool,
    cfg: &ShiftConfig,
) -> Result<LayerSpec, ConvertError> {
    match layer {
        LayerSpec::Conv2d { weights, bias } => Ok(LayerSpec::Conv3d {
            weights: inflate_conv_weights(weights),
            bias: bias.clone(),
            shift_prefix: attach_shift.then_some(*cfg),
        }),
        LayerSpec::Pool2d { kernel } if !attach_shift => Ok(LayerSpec::Pool3d { kernel: *kernel }),
        LayerSpec::Norm2d { stats } if !attach_shift => Ok(LayerSpec::Norm3d {
            stats: stats.clone(),
        }),
        LayerSpec::Pool2d { .. } | LayerSpec::Norm2d { .. } => {
            Err(ConvertError::ShiftOnNonConv { index: 0 })
        }
        _ => Err(ConvertError::Already3d { index: 0 }),
    }
}

/// Ordered layer list with a declared input channel count.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub input_channels: usize,
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    pub fn new(input_channels: usize, layers: Vec<LayerSpec>) -> Result<Self, ConvertError> {
        let spec = Self {
            input_channels,
            layers,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Checks adjacent-layer channel compatibility.
    pub fn validate(&self) -> Result<(), ConvertError> {
        let mut channels = self.input_channels;
        for (index, layer) in self.layers.iter().enumerate() {
            channels = layer.propagate_channels(index, channels)?;
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(LayerSpec::param_count).sum()
    }

    pub fn is_2d(&self) -> bool {
        self.layers.iter().all(LayerSpec::is_2d)
    }
}

/// Applies [`convert_layer`] across a 2D network.
///
/// `shift_policy` holds one flag per layer; `true` attaches `cfg` to that
/// layer's conv. The converted network has exactly the same number of
/// learnable parameters.
pub fn convert_network(
    net: &NetworkSpec,
    shift_policy: &[bool],
    cfg: &ShiftConfig,
) -> Result<NetworkSpec, ConvertError> {
    if shift_policy.len() != net.layers.len() {
        return Err(ConvertError::PolicyLength {
            layers: net.layers.len(),
            got: shift_policy.len(),
        });
    }
    net.validate()?;
    let mut layers = Vec::with_capacity(net.layers.len());
    for (index, (layer, &flag)) in net.layers.iter().zip(shift_policy).enumerate() {
        let converted = convert_layer(layer, flag, cfg).map_err(|e| match e {
            ConvertError::Already3d { .. } => ConvertError::Already3d { index },
            ConvertError::ShiftOnNonConv { .. } => ConvertError::ShiftOnNonConv { index },
            other => other,
        })?;
        layers.push(converted);
    }
    NetworkSpec::new(net.input_channels, layers)
}

const MANIFEST_MAGIC: &str = "NETSPEC";
const MANIFEST_VERSION: u32 = 1;

/// Writes the manifest and weights sidecar for a network.
pub fn write_network<M: Write, W: Write>(
    mut manifest: M,
    mut weights: W,
    net: &NetworkSpec,
) -> Result<(), ConvertError> {
    net.validate()?;
    let shift_cfg = uniform_shift_config(net)?;
    let (up, down, reference) = match shift_cfg {
        Some(cfg) => (cfg.shift_up, cfg.shift_down, cfg.reference_mm),
        None => (0, 0, 0.0),
    };
    writeln!(
        manifest,
        "{MANIFEST_MAGIC} {MANIFEST_VERSION} {} {} {up} {down} {reference}",
        net.input_channels,
        net.layers.len()
    )?;
    for layer in &net.layers {
        let (kind, k, in_c, out_c, flag) = match layer {
            LayerSpec::Conv2d { weights, .. } => {
                ("conv2d", weights.kernel, weights.in_channels, weights.out_channels, 0)
            }
            LayerSpec::Pool2d { kernel } => ("pool2d", *kernel, 0, 0, 0),
            LayerSpec::Norm2d { stats } => ("norm2d", 0, stats.channels(), stats.channels(), 0),
            LayerSpec::Conv3d {
                weights,
                shift_prefix,
                ..
            } => (
                "conv3d",
                weights.kernel,
                weights.in_channels,
                weights.out_channels,
                usize::from(shift_prefix.is_some()),
            ),
            LayerSpec::Pool3d { kernel } => ("pool3d", *kernel, 0, 0, 0),
            LayerSpec::Norm3d { stats } => ("norm3d", 0, stats.channels(), stats.channels(), 0),
        };
        writeln!(manifest, "{kind} {k} {in_c} {out_c} {flag}")?;
        write_layer_values(&mut weights, layer)?;
    }
    Ok(())
}

/// Reads a network back from its manifest and weights sidecar.
pub fn read_network<M: BufRead, W: Read>(
    manifest: M,
    mut weights: W,
) -> Result<NetworkSpec, ConvertError> {
    let mut lines = manifest.lines();
    let header = lines
        .next()
        .ok_or_else(|| ConvertError::BadManifest("empty manifest".into()))??;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 7 || fields[0] != MANIFEST_MAGIC || fields[1] != "1" {
        return Err(ConvertError::BadManifest(format!(
            "bad header {header:?}"
        )));
    }
    let parse_count = |s: &str| -> Result<usize, ConvertError> {
        s.parse()
            .map_err(|_| ConvertError::BadManifest(format!("bad count {s:?}")))
    };
    let input_channels = parse_count(fields[2])?;
    let n_layers = parse_count(fields[3])?;
    let up = parse_count(fields[4])?;
    let down = parse_count(fields[5])?;
    let reference: f64 = fields[6]
        .parse()
        .map_err(|_| ConvertError::BadManifest(format!("bad reference {:?}", fields[6])))?;
    let shift_cfg = if reference > 0.0 {
        Some(ShiftConfig::new(up, down, reference).map_err(|e| {
            ConvertError::BadManifest(format!("bad shift configuration: {e}"))
        })?)
    } else {
        None
    };

    let mut layers = Vec::with_capacity(n_layers);
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 5 {
            return Err(ConvertError::BadManifest(format!("bad layer line {line:?}")));
        }
        let k = parse_count(f[1])?;
        let in_c = parse_count(f[2])?;
        let out_c = parse_count(f[3])?;
        let flag = parse_count(f[4])? != 0;
        let layer = match f[0] {
            "conv2d" => LayerSpec::Conv2d {
                weights: ConvWeights2d::new(out_c, in_c, k, read_values(&mut weights, out_c * in_c * k * k)?)?,
                bias: read_values(&mut weights, out_c)?,
            },
            "conv3d" => LayerSpec::Conv3d {
                weights: ConvWeights3d::new(out_c, in_c, k, read_values(&mut weights, out_c * in_c * k * k)?)?,
                bias: read_values(&mut weights, out_c)?,
                shift_prefix: if flag {
                    Some(shift_cfg.ok_or_else(|| {
                        ConvertError::BadManifest("shift flag set but header has no configuration".into())
                    })?)
                } else {
                    None
                },
            },
            "pool2d" => LayerSpec::Pool2d { kernel: k },
            "pool3d" => LayerSpec::Pool3d { kernel: k },
            "norm2d" | "norm3d" => {
                let stats = NormStats::new(
                    read_values(&mut weights, in_c)?,
                    read_values(&mut weights, in_c)?,
                    read_values(&mut weights, in_c)?,
                    read_values(&mut weights, in_c)?,
                )?;
                if f[0] == "norm2d" {
                    LayerSpec::Norm2d { stats }
                } else {
                    LayerSpec::Norm3d { stats }
                }
            }
            other => {
                return Err(ConvertError::BadManifest(format!("unknown kind {other:?}")))
            }
        };
        layers.push(layer);
    }
    if layers.len() != n_layers {
        return Err(ConvertError::BadManifest(format!(
            "header declares {n_layers} layers, manifest has {}",
            layers.len()
        )));
    }
    let mut trailing = [0u8; 1];
    if weights.read(&mut trailing)? != 0 {
        return Err(ConvertError::WeightsTooLong);
    }
    NetworkSpec::new(input_channels, layers)
}

pub fn save_network<P: AsRef<Path>, Q: AsRef<Path>>(
    manifest_path: P,
    weights_path: Q,
    net: &NetworkSpec,
) -> Result<(), ConvertError> {
    let mut manifest = BufWriter::new(File::create(manifest_path)?);
    let mut weights = BufWriter::new(File::create(weights_path)?);
    write_network(&mut manifest, &mut weights, net)?;
    manifest.flush()?;
    weights.flush()?;
    Ok(())
}

pub fn load_network<P: AsRef<Path>, Q: AsRef<Path>>(
    manifest_path: P,
    weights_path: Q,
) -> Result<NetworkSpec, ConvertError> {
    read_network(
        BufReader::new(File::open(manifest_path)?),
        BufReader::new(File::open(weights_path)?),
    )
}

fn uniform_shift_config(net: &NetworkSpec) -> Result<Option<ShiftConfig>, ConvertError> {
    let mut found: Option<ShiftConfig> = None;
    for layer in &net.layers {
        if let LayerSpec::Conv3d {
            shift_prefix: Some(cfg),
            ..
        } = layer
        {
            match found {
                None => found = Some(*cfg),
                Some(prev) if prev == *cfg => {}
                Some(_) => return Err(ConvertError::MixedShiftConfigs),
            }
        }
    }
    Ok(found)
}

fn write_layer_values<W: Write>(out: &mut W, layer: &LayerSpec) -> Result<(), ConvertError> {
    let mut emit = |values: &[f64]| -> Result<(), ConvertError> {
        for v in values {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    };
    match layer {
        LayerSpec::Conv2d { weights, bias } => {
            emit(&weights.data)?;
            emit(bias)?;
        }
        LayerSpec::Conv3d { weights, bias, .. } => {
            emit(&weights.data)?;
            emit(bias)?;
        }
        LayerSpec::Norm2d { stats } | LayerSpec::Norm3d { stats } => {
            emit(&stats.scale)?;
            emit(&stats.offset)?;
            emit(&stats.running_mean)?;
            emit(&stats.running_var)?;
        }
        LayerSpec::Pool2d { .. } | LayerSpec::Pool3d { .. } => {}
    }
    Ok(())
}

fn read_values<R: Read>(input: &mut R, n: usize) -> Result<Vec<f64>, ConvertError> {
    let mut out = Vec::with_capacity(n);
    let mut buf = [0u8; 8];
    for i in 0..n {
        input
            .read_exact(&mut buf)
            .map_err(|_| ConvertError::WeightsTooShort(n - i))?;
        out.push(f64::from_le_bytes(buf));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ShiftConfig {
        ShiftConfig::new(1, 1, 2.0).unwrap()
    }

    fn conv2d(in_c: usize, out_c: usize, k: usize) -> LayerSpec {
        let n = out_c * in_c * k * k;
        LayerSpec::Conv2d {
            weights: ConvWeights2d::new(out_c, in_c, k, (0..n).map(|i| i as f64 * 0.1).collect())
                .unwrap(),
            bias: vec![0.5; out_c],
        }
    }

    #[test]
    fn conv_conversion_attaches_shift() {
        let layer = conv2d(1, 4, 3);
        let out = convert_layer(&layer, true, &cfg()).unwrap();
        match out {
            LayerSpec::Conv3d {
                weights,
                shift_prefix,
                ..
            } => {
                assert_eq!(weights.kernel, 3);
                assert_eq!(shift_prefix, Some(cfg()));
            }
            other => panic!("expected conv3d, got {other:?}"),
        }
    }

    #[test]
    fn pool_and_norm_conversion() {
        let out = convert_layer(&LayerSpec::Pool2d { kernel: 2 }, false, &cfg()).unwrap();
        assert_eq!(out, LayerSpec::Pool3d { kernel: 2 });

        let stats = NormStats::new(
            vec![1.0, 2.0],
            vec![0.1, 0.2],
            vec![0.0, -1.0],
            vec![1.0, 4.0],
        )
        .unwrap();
        let out = convert_layer(&LayerSpec::Norm2d { stats: stats.clone() }, false, &cfg()).unwrap();
        assert_eq!(out, LayerSpec::Norm3d { stats });
    }

    #[test]
    fn converting_3d_layer_fails() {
        let layer = convert_layer(&conv2d(1, 2, 3), false, &cfg()).unwrap();
        assert!(matches!(
            convert_layer(&layer, false, &cfg()),
            Err(ConvertError::Already3d { .. })
        ));
    }

    #[test]
    fn shift_on_non_conv_fails() {
        assert!(matches!(
            convert_layer(&LayerSpec::Pool2d { kernel: 2 }, true, &cfg()),
            Err(ConvertError::ShiftOnNonConv { .. })
        ));
    }

    #[test]
    fn inflation_preserves_values() {
        let w = ConvWeights2d::new(1, 1, 3, (0..9).map(f64::from).collect()).unwrap();
        let w3 = inflate_conv_weights(&w);
        assert_eq!(w3.data, w.data);
        assert_eq!((w3.out_channels, w3.in_channels, w3.kernel), (1, 1, 3));

        let w = ConvWeights2d::new(4, 2, 3, (0..72).map(|i| i as f64 * 0.25).collect()).unwrap();
        let w3 = inflate_conv_weights(&w);
        // Flat-index equality under the shape map: the depth-1 axis does not
        // move any element.
        assert_eq!(w3.data, w.data);
    }

    #[test]
    fn network_conversion_composition_and_param_count() {
        let stats = NormStats::identity(4);
        let net = NetworkSpec::new(
            1,
            vec![conv2d(1, 4, 3), LayerSpec::Norm2d { stats }],
        )
        .unwrap();
        let converted = convert_network(&net, &[true, false], &cfg()).unwrap();
        assert!(matches!(
            converted.layers[0],
            LayerSpec::Conv3d {
                shift_prefix: Some(_),
                ..
            }
        ));
        assert!(matches!(converted.layers[1], LayerSpec::Norm3d { .. }));
        assert_eq!(converted.param_count(), net.param_count());

        // All-false policy gives a plain slice-wise 3D net.
        let plain = convert_network(&net, &[false, false], &cfg()).unwrap();
        assert!(plain.layers.iter().all(|l| !matches!(
            l,
            LayerSpec::Conv3d {
                shift_prefix: Some(_),
                ..
            }
        )));
    }

    #[test]
    fn channel_mismatch_detected() {
        let err = NetworkSpec::new(2, vec![conv2d(1, 4, 3)]);
        assert!(matches!(err, Err(ConvertError::ChannelMismatch { .. })));
    }

    #[test]
    fn policy_length_checked() {
        let net = NetworkSpec::new(1, vec![conv2d(1, 4, 3)]).unwrap();
        assert!(matches!(
            convert_network(&net, &[], &cfg()),
            Err(ConvertError::PolicyLength { layers: 1, got: 0 })
        ));
    }

    #[test]
    fn manifest_round_trip() {
        let net = NetworkSpec::new(
            1,
            vec![
                conv2d(1, 4, 3),
                LayerSpec::Norm2d {
                    stats: NormStats::identity(4),
                },
                LayerSpec::Pool2d { kernel: 2 },
            ],
        )
        .unwrap();
        let converted = convert_network(&net, &[true, false, false], &cfg()).unwrap();

        let mut manifest = Vec::new();
        let mut weights = Vec::new();
        write_network(&mut manifest, &mut weights, &converted).unwrap();
        let loaded = read_network(manifest.as_slice(), weights.as_slice()).unwrap();
        assert_eq!(loaded, converted);
    }

    #[test]
    fn truncated_weights_rejected() {
        let net = NetworkSpec::new(1, vec![conv2d(1, 2, 3)]).unwrap();
        let mut manifest = Vec::new();
        let mut weights = Vec::new();
        write_network(&mut manifest, &mut weights, &net).unwrap();
        weights.truncate(weights.len() - 1);
        assert!(matches!(
            read_network(manifest.as_slice(), weights.as_slice()),
            Err(ConvertError::WeightsTooShort(_))
        ));
    }
}
