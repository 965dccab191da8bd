//! Seeded thin-vs-thick gap experiment.
//!
//! The experiment measures how much a detection model's quality depends on
//! acquisition thickness under three training strategies:
//!
//! * `2.5D`: every volume is normalized to the reference spacing, and the
//!   context slices are stacked as input channels of a depth-1 network.
//! * `TSM`: every volume is normalized to the reference spacing and
//!   processed by a 3D network whose convs are prefixed with whole-slice
//!   shifts (the align factor is exactly 1 on the normalized grid).
//! * `AlignShift`: thin volumes are normalized, thick volumes keep their
//!   native spacing, and the shift prefixes interpolate by the align
//!   factor so the shift distance is always the reference thickness in
//!   millimeters.
//!
//! Each strategy trains the same toy heat-map detector on a mixed
//! thin/thick cohort of synthetic phantoms and is evaluated with FROC on
//! the `All`, `Thin`, and `Thick` cohorts. The report's `diff` column is
//! the cohort average sensitivity minus the `All` average: a thickness-
//! robust model shows small diffs of both signs.
//!
//! Everything is a pure function of the configuration: reruns produce
//! byte-identical CSV.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::convert::ConvWeights3d;
use crate::froc::{froc_sensitivity, Detection, DetectionRecord, FrocError, AVG_LEVELS};
use crate::nn::{
    bce_with_logits, Conv3dOp, DepthSqueezeOp, HeatmapModel, LinearHeadOp, Network3d, NnError,
    OpNode, ReluOp, ShiftedLayer, SqueezeWeights, TrainConfig,
};
use crate::phantom::{acquire, generate_phantom, PhantomError, PhantomSize};
use crate::resample::{resample_depth, thickness_policy, ResampleError, ThicknessPolicyDecision};
use crate::shift::{ShiftConfig, ShiftError};
use crate::volume::{ThicknessMeta, Volume4D, VolumeError};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("bad config: {0}")]
    Config(String),
    #[error(transparent)]
    Phantom(#[from] PhantomError),
    #[error(transparent)]
    Resample(#[from] ResampleError),
    #[error(transparent)]
    Shift(#[from] ShiftError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Froc(#[from] FrocError),
    #[error(transparent)]
    Volume(#[from] VolumeError),
}

/// Flat key=value configuration of one benchmark run.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub seed: u64,
    pub n_phantoms: usize,
    pub thin_mm: f64,
    pub thick_mm: f64,
    pub reference_mm: f64,
    pub epochs: usize,
    pub lr: f64,
    pub slices_per_sample: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            seed: 2024,
            n_phantoms: 48,
            thin_mm: 1.0,
            thick_mm: 5.0,
            reference_mm: 2.0,
            epochs: 32,
            lr: 0.12,
            slices_per_sample: 7,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let err = |m: String| Err(ExperimentError::Config(m));
        if self.n_phantoms < 4 {
            return err(format!("n_phantoms must be at least 4, got {}", self.n_phantoms));
        }
        for (name, v) in [
            ("thin_mm", self.thin_mm),
            ("thick_mm", self.thick_mm),
            ("reference_mm", self.reference_mm),
            ("lr", self.lr),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return err(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if self.epochs == 0 {
            return err("epochs must be at least 1".into());
        }
        if self.slices_per_sample == 0 || self.slices_per_sample % 2 == 0 {
            return err(format!(
                "slices_per_sample must be odd, got {}",
                self.slices_per_sample
            ));
        }
        Ok(())
    }
}

/// Parses the flat `key=value` config format. Unknown and duplicate keys
/// are errors; missing keys keep their defaults. `#` starts a comment.
pub fn parse_config(text: &str) -> Result<BenchConfig, ExperimentError> {
    let mut cfg = BenchConfig::default();
    let mut seen: HashSet<String> = HashSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = |m: String| ExperimentError::Config(format!("line {}: {m}", idx + 1));
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| bad("expected key=value".into()))?;
        let key = key.trim();
        let value = value.trim();
        if !seen.insert(key.to_string()) {
            return Err(bad(format!("duplicate key {key:?}")));
        }
        let parse_u64 = || value.parse::<u64>().map_err(|_| bad(format!("bad integer {value:?}")));
        let parse_usize = || value.parse::<usize>().map_err(|_| bad(format!("bad count {value:?}")));
        let parse_f64 = || value.parse::<f64>().map_err(|_| bad(format!("bad number {value:?}")));
        match key {
            "seed" => cfg.seed = parse_u64()?,
            "n_phantoms" => cfg.n_phantoms = parse_usize()?,
            "thin_mm" => cfg.thin_mm = parse_f64()?,
            "thick_mm" => cfg.thick_mm = parse_f64()?,
            "reference_mm" => cfg.reference_mm = parse_f64()?,
            "epochs" => cfg.epochs = parse_usize()?,
            "lr" => cfg.lr = parse_f64()?,
            "slices_per_sample" => cfg.slices_per_sample = parse_usize()?,
            other => return Err(bad(format!("unknown key {other:?}"))),
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// The three training strategies under comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    TwoPointFiveD,
    Tsm,
    AlignShift,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::TwoPointFiveD, Strategy::Tsm, Strategy::AlignShift];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::TwoPointFiveD => "2.5D",
            Strategy::Tsm => "TSM",
            Strategy::AlignShift => "AlignShift",
        }
    }
}

/// Evaluation cohorts. `All` is the union evaluation, not a mean of the
/// other two.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cohort {
    All,
    Thin,
    Thick,
}

impl Cohort {
    pub const ALL: [Cohort; 3] = [Cohort::All, Cohort::Thin, Cohort::Thick];

    pub fn as_str(self) -> &'static str {
        match self {
            Cohort::All => "All",
            Cohort::Thin => "Thin",
            Cohort::Thick => "Thick",
        }
    }
}

/// One row of the gap report: a (strategy, cohort, FP level) cell plus the
/// cohort's average sensitivity and its diff against the All cohort.
#[derive(Debug, Clone, PartialEq)]
pub struct GapRow {
    pub strategy: Strategy,
    pub cohort: Cohort,
    pub fp_level: f64,
    pub sensitivity: f64,
    pub avg: f64,
    pub diff: Option<f64>,
}

/// Full gap report over strategies x cohorts x FP levels.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GapReport {
    pub rows: Vec<GapRow>,
}

impl GapReport {
    /// Average sensitivity of a (strategy, cohort) pair.
    pub fn avg(&self, strategy: Strategy, cohort: Cohort) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.strategy == strategy && r.cohort == cohort)
            .map(|r| r.avg)
    }

    /// `|diff Thin| + |diff Thick|`: the thickness gap of one strategy.
    pub fn gap_magnitude(&self, strategy: Strategy) -> Option<f64> {
        let all = self.avg(strategy, Cohort::All)?;
        let thin = self.avg(strategy, Cohort::Thin)?;
        let thick = self.avg(strategy, Cohort::Thick)?;
        Some((thin - all).abs() + (thick - all).abs())
    }

    /// Fixed-schema CSV: `strategy,cohort,fp_level,sensitivity,avg,diff`.
    /// The diff column is empty on All rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("strategy,cohort,fp_level,sensitivity,avg,diff\n");
        for row in &self.rows {
            let diff = match row.diff {
                Some(d) => format!("{d}"),
                None => String::new(),
            };
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                row.strategy.as_str(),
                row.cohort.as_str(),
                row.fp_level,
                row.sensitivity,
                row.avg,
                diff
            ));
        }
        out
    }
}

/// One acquired phantom with everything the harness needs: the volume,
/// its grid origin, the key-plane annotations, and the training target.
#[derive(Debug, Clone)]
pub struct AcquiredSample {
    pub phantom_index: usize,
    pub thin: bool,
    pub train: bool,
    pub volume: Volume4D,
    pub spacing: ThicknessMeta,
    /// Physical position (mm) of the center of slice 0.
    pub origin_mm: f64,
    pub key_z_mm: f64,
    /// Key-plane lesions as (center_y, center_x, radius) in pixels.
    pub lesions: Vec<(f64, f64, f64)>,
    /// Row-major `H x W` disk mask over the key plane.
    pub target: Vec<f64>,
}

// Harness constants. These are properties of the shipped benchmark task,
// not of the config file schema.
const NET_CHANNELS: usize = 8;
const N_SHIFT_LAYERS: usize = 3;
const N_BLOBS: usize = 4;
const POS_WEIGHT: f64 = 12.0;
const DETECT_THRESHOLD: f64 = 0.3;
const HEAD_BIAS_INIT: f64 = -2.0;
const CLIP_NORM: f64 = 3.0;
const LR_DECAY: f64 = 0.06;

/// Generates, acquires, and annotates the full cohort for a config.
///
/// Even phantom indices are acquired thin, odd ones thick; the first half
/// of the list is the training split. Both halves therefore hold equal
/// thin/thick mixes.
pub fn build_cohort(cfg: &BenchConfig) -> Result<Vec<AcquiredSample>, ExperimentError> {
    cfg.validate()?;
    let size = PhantomSize::default();
    let mut samples = Vec::with_capacity(cfg.n_phantoms);
    for index in 0..cfg.n_phantoms {
        let phantom = generate_phantom(derive_seed(cfg.seed, index as u64), &size, N_BLOBS)?;
        let thin = index % 2 == 0;
        let slice_mm = if thin { cfg.thin_mm } else { cfg.thick_mm };
        let (volume, spacing) = acquire(&phantom, slice_mm)?;
        let lesions: Vec<(f64, f64, f64)> = phantom
            .lesions()
            .map(|b| (b.center_y, b.center_x, b.radius_px))
            .collect();
        let target = disk_mask(volume.height(), volume.width(), &lesions);
        samples.push(AcquiredSample {
            phantom_index: index,
            thin,
            train: index < cfg.n_phantoms / 2,
            volume,
            spacing,
            origin_mm: 0.5 * slice_mm,
            key_z_mm: phantom.key_z_mm,
            lesions,
            target,
        });
    }
    Ok(samples)
}

fn disk_mask(height: usize, width: usize, lesions: &[(f64, f64, f64)]) -> Vec<f64> {
    let mut mask = vec![0.0; height * width];
    for &(cy, cx, radius) in lesions {
        let r2 = radius * radius;
        for y in 0..height {
            let dy = y as f64 + 0.5 - cy;
            for x in 0..width {
                let dx = x as f64 + 0.5 - cx;
                if dy * dy + dx * dx <= r2 {
                    mask[y * width + x] = 1.0;
                }
            }
        }
    }
    mask
}

/// Strategy-specific preprocessing: spacing routing, key-window
/// extraction, and (for 2.5D) the slices-to-channels reshape.
pub fn prepare_input(
    strategy: Strategy,
    sample: &AcquiredSample,
    cfg: &BenchConfig,
) -> Result<(Volume4D, ThicknessMeta), ExperimentError> {
    let r = cfg.reference_mm;
    let half = cfg.slices_per_sample / 2;
    let (vol, meta) = match strategy {
        // Standard pipeline: everything onto the reference grid.
        Strategy::TwoPointFiveD | Strategy::Tsm => {
            normalize_to(&sample.volume, sample.spacing, r)?
        }
        // Thickness-aware routing: normalize thin, keep thick.
        Strategy::AlignShift => match thickness_policy(sample.spacing, r)? {
            ThicknessPolicyDecision::Normalize { target_mm } => {
                normalize_to(&sample.volume, sample.spacing, target_mm)?
            }
            ThicknessPolicyDecision::KeepOriginal => (sample.volume.clone(), sample.spacing),
        },
    };
    let key = key_index(sample.key_z_mm, sample.origin_mm, meta, vol.depth());
    let window = extract_window(&vol, key, half)?;
    match strategy {
        Strategy::TwoPointFiveD => {
            let [_, d, h, w] = window.dims();
            Ok((window.reshape(d, 1, h, w)?, meta))
        }
        _ => Ok((window, meta)),
    }
}

fn normalize_to(
    volume: &Volume4D,
    spacing: ThicknessMeta,
    target_mm: f64,
) -> Result<(Volume4D, ThicknessMeta), ExperimentError> {
    if spacing.spacing_mm() == target_mm {
        Ok((volume.clone(), spacing))
    } else {
        Ok(resample_depth(volume, spacing, target_mm)?)
    }
}

/// Grid index whose physical position is nearest to `key_z_mm`.
fn key_index(key_z_mm: f64, origin_mm: f64, spacing: ThicknessMeta, depth: usize) -> usize {
    let idx = ((key_z_mm - origin_mm) / spacing.spacing_mm()).round();
    idx.clamp(0.0, (depth - 1) as f64) as usize
}

/// Copies `2 * half + 1` depth slices centered on `center`, zero-padding
/// outside the volume.
fn extract_window(vol: &Volume4D, center: usize, half: usize) -> Result<Volume4D, ExperimentError> {
    let [c_n, d_n, h_n, w_n] = vol.dims();
    let d_out = 2 * half + 1;
    let mut out = Volume4D::new(c_n, d_out, h_n, w_n, 0.0)?;
    for j in 0..d_out {
        let src = center as isize + j as isize - half as isize;
        if src < 0 || src >= d_n as isize {
            continue;
        }
        for c in 0..c_n {
            out.plane_mut(c, j).copy_from_slice(vol.plane(c, src as usize));
        }
    }
    Ok(out)
}

/// Builds the toy heat-map detector for one strategy. All strategies share
/// the architecture; they differ in input layout and shift prefixes.
pub fn build_model(
    strategy: Strategy,
    cfg: &BenchConfig,
    rng: &mut ChaCha8Rng,
) -> Result<HeatmapModel, ExperimentError> {
    let in_channels = match strategy {
        Strategy::TwoPointFiveD => cfg.slices_per_sample,
        _ => 1,
    };
    let depth = match strategy {
        Strategy::TwoPointFiveD => 1,
        _ => cfg.slices_per_sample,
    };
    let shift = match strategy {
        Strategy::TwoPointFiveD => None,
        _ => Some(ShiftConfig::default_for_channels(NET_CHANNELS, cfg.reference_mm)?),
    };

    let mut conv = |in_c: usize, out_c: usize| -> Result<Conv3dOp, ExperimentError> {
        let fan_in = (in_c * 9) as f64;
        let bound = (1.0 / fan_in).sqrt();
        let n = out_c * in_c * 9;
        let data: Vec<f64> = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
        let weights = ConvWeights3d::new(out_c, in_c, 3, data)
            .expect("constructed shape is consistent");
        Ok(Conv3dOp::new(weights, vec![0.0; out_c])?)
    };

    let mut backbone = Network3d::default();
    backbone.push(ShiftedLayer::plain(OpNode::Conv3d(conv(in_channels, NET_CHANNELS)?)));
    backbone.push(ShiftedLayer::plain(OpNode::Relu(ReluOp::new())));
    for _ in 0..N_SHIFT_LAYERS {
        let conv_op = OpNode::Conv3d(conv(NET_CHANNELS, NET_CHANNELS)?);
        backbone.push(match shift {
            Some(cfg) => ShiftedLayer::shifted(cfg, conv_op),
            None => ShiftedLayer::plain(conv_op),
        });
        backbone.push(ShiftedLayer::plain(OpNode::Relu(ReluOp::new())));
    }

    // Key-slice extraction: a fixed one-hot depth collapse. Depth context
    // reaches the head only through the shift prefixes, whose displacement
    // is physically aligned; a learned depth mix would instead latch onto
    // grid-index patterns whose physical meaning varies with spacing.
    let mut squeeze_data = vec![0.0; NET_CHANNELS * NET_CHANNELS * depth];
    for c in 0..NET_CHANNELS {
        squeeze_data[(c * NET_CHANNELS + c) * depth + depth / 2] = 1.0;
    }
    let squeeze = DepthSqueezeOp::new(
        SqueezeWeights::new(NET_CHANNELS, NET_CHANNELS, depth, squeeze_data)
            .expect("constructed shape is consistent"),
    );

    let head_bound = (1.0 / NET_CHANNELS as f64).sqrt();
    let head_weights: Vec<f64> = (0..NET_CHANNELS)
        .map(|_| rng.random_range(-head_bound..head_bound))
        .collect();
    let head = LinearHeadOp::new(head_weights, HEAD_BIAS_INIT);

    Ok(HeatmapModel::new(backbone, squeeze, head))
}

/// Trains one strategy's model on the training split. Returns the summed
/// BCE loss per epoch, which doubles as a determinism fingerprint: the
/// same [`TrainConfig`] on the same data gives a bitwise-identical
/// trajectory.
///
/// Plain SGD over shuffled mini-batches with a hyperbolic learning-rate
/// decay and global-norm gradient clipping; without the clip an unlucky
/// initialization can diverge and poison the whole comparison.
pub fn train_strategy(
    model: &mut HeatmapModel,
    inputs: &[(Volume4D, ThicknessMeta)],
    targets: &[&[f64]],
    cfg: &TrainConfig,
) -> Result<Vec<f64>, ExperimentError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let batch = cfg.batch_size.max(1);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let lr = cfg.learning_rate / (1.0 + LR_DECAY * epoch as f64);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch) {
            model.zero_grad();
            for &i in chunk {
                let (x, spacing) = &inputs[i];
                let logits = model.forward(x, *spacing)?;
                let (loss, grad) = bce_with_logits(&logits, targets[i], POS_WEIGHT)?;
                model.backward(&grad)?;
                epoch_loss += loss;
            }
            // The depth collapse stays the fixed key-slice extraction.
            model.squeeze.grad_weights.fill(0.0);
            // Mean over the batch and global-norm clip, both folded into
            // the step size.
            let scale = 1.0 / chunk.len() as f64;
            let norm = scale * model.grads().iter().map(|g| g * g).sum::<f64>().sqrt();
            let step = if norm > CLIP_NORM {
                scale * lr * CLIP_NORM / norm
            } else {
                scale * lr
            };
            model.sgd_step(step);
        }
        curve.push(epoch_loss);
    }
    Ok(curve)
}

/// A connected component of the thresholded probability map.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Peak {
    score: f64,
    y: usize,
    x: usize,
}

/// Extracts scored peaks: 4-connected components of `prob >= threshold`,
/// each scored by its maximum probability at the first-in-row-major argmax.
fn detect_peaks(probs: &[f64], height: usize, width: usize, threshold: f64) -> Vec<Peak> {
    let mut seen = vec![false; probs.len()];
    let mut peaks = Vec::new();
    let mut stack = Vec::new();
    for start in 0..probs.len() {
        if seen[start] || probs[start] < threshold {
            continue;
        }
        let mut best = start;
        stack.push(start);
        seen[start] = true;
        while let Some(idx) = stack.pop() {
            if probs[idx] > probs[best] {
                best = idx;
            }
            let (y, x) = (idx / width, idx % width);
            let mut visit = |ny: usize, nx: usize| {
                let nidx = ny * width + nx;
                if !seen[nidx] && probs[nidx] >= threshold {
                    seen[nidx] = true;
                    stack.push(nidx);
                }
            };
            if y > 0 {
                visit(y - 1, x);
            }
            if y + 1 < height {
                visit(y + 1, x);
            }
            if x > 0 {
                visit(y, x - 1);
            }
            if x + 1 < width {
                visit(y, x + 1);
            }
        }
        peaks.push(Peak {
            score: probs[best],
            y: best / width,
            x: best % width,
        });
    }
    // Highest score first; ties resolved by position for determinism.
    peaks.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| (a.y, a.x).cmp(&(b.y, b.x)))
    });
    peaks
}

/// Greedy matching by descending score: a peak within a lesion's radius of
/// its center claims that lesion; everything else is a false positive.
fn match_detections(peaks: &[Peak], lesions: &[(f64, f64, f64)]) -> DetectionRecord {
    let mut claimed = vec![false; lesions.len()];
    let mut detections = Vec::with_capacity(peaks.len());
    for peak in peaks {
        let py = peak.y as f64 + 0.5;
        let px = peak.x as f64 + 0.5;
        let mut hit = None;
        for (li, &(cy, cx, radius)) in lesions.iter().enumerate() {
            if claimed[li] {
                continue;
            }
            let d2 = (py - cy) * (py - cy) + (px - cx) * (px - cx);
            if d2 <= radius * radius {
                hit = Some(li);
                break;
            }
        }
        match hit {
            Some(li) => {
                claimed[li] = true;
                detections.push(Detection {
                    score: peak.score,
                    is_true_positive: true,
                });
            }
            None => detections.push(Detection {
                score: peak.score,
                is_true_positive: false,
            }),
        }
    }
    DetectionRecord {
        detections,
        n_positives: lesions.len(),
    }
}

/// Runs one strategy end to end and returns the per-image records of the
/// evaluation split, tagged thin or thick.
fn run_strategy(
    strategy: Strategy,
    samples: &[AcquiredSample],
    cfg: &BenchConfig,
) -> Result<Vec<(bool, DetectionRecord)>, ExperimentError> {
    let strat_salt = 0x1000 + Strategy::ALL.iter().position(|&s| s == strategy).unwrap() as u64;
    let mut init_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, strat_salt));
    let mut model = build_model(strategy, cfg, &mut init_rng)?;

    let train: Vec<&AcquiredSample> = samples.iter().filter(|s| s.train).collect();
    let eval: Vec<&AcquiredSample> = samples.iter().filter(|s| !s.train).collect();

    let mut inputs = Vec::with_capacity(train.len());
    let mut targets = Vec::with_capacity(train.len());
    for sample in &train {
        inputs.push(prepare_input(strategy, sample, cfg)?);
        targets.push(sample.target.as_slice());
    }
    let train_cfg = TrainConfig {
        learning_rate: cfg.lr,
        epochs: cfg.epochs,
        batch_size: 1,
        seed: derive_seed(cfg.seed, strat_salt + 0x100),
    };
    train_strategy(&mut model, &inputs, &targets, &train_cfg)?;

    let mut records = Vec::with_capacity(eval.len());
    for sample in &eval {
        let (x, spacing) = prepare_input(strategy, sample, cfg)?;
        let logits = model.forward(&x, spacing)?;
        let probs: Vec<f64> = logits.iter().map(|&z| 1.0 / (1.0 + (-z).exp())).collect();
        let peaks = detect_peaks(&probs, sample.volume.height(), sample.volume.width(), DETECT_THRESHOLD);
        records.push((sample.thin, match_detections(&peaks, &sample.lesions)));
    }
    Ok(records)
}

/// Runs the full experiment: every strategy trained on the shared cohort,
/// evaluated per cohort, assembled into the gap report.
pub fn run_gap_experiment(cfg: &BenchConfig) -> Result<GapReport, ExperimentError> {
    cfg.validate()?;
    let samples = build_cohort(cfg)?;
    let mut rows = Vec::new();
    for strategy in Strategy::ALL {
        let tagged = run_strategy(strategy, &samples, cfg)?;
        let select = |cohort: Cohort| -> Vec<DetectionRecord> {
            tagged
                .iter()
                .filter(|(thin, _)| match cohort {
                    Cohort::All => true,
                    Cohort::Thin => *thin,
                    Cohort::Thick => !*thin,
                })
                .map(|(_, r)| r.clone())
                .collect()
        };
        let avg_all = froc_sensitivity(&select(Cohort::All), &AVG_LEVELS)?.avg;
        for cohort in Cohort::ALL {
            let result = froc_sensitivity(&select(cohort), &AVG_LEVELS)?;
            let diff = match cohort {
                Cohort::All => None,
                _ => Some(result.avg - avg_all),
            };
            for &(level, sensitivity) in &result.sensitivities {
                rows.push(GapRow {
                    strategy,
                    cohort,
                    fp_level: level,
                    sensitivity,
                    avg: result.avg,
                    diff,
                });
            }
        }
    }
    Ok(GapReport { rows })
}

/// Stable per-purpose seed derivation (splitmix64 finalizer).
fn derive_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_parsing() {
        let cfg = parse_config("seed = 9\nn_phantoms = 8\n# comment\nlr=0.5\n").unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.n_phantoms, 8);
        assert_eq!(cfg.lr, 0.5);
        assert_eq!(cfg.thin_mm, BenchConfig::default().thin_mm);

        assert!(parse_config("bogus = 1\n").is_err());
        assert!(parse_config("seed = 1\nseed = 2\n").is_err());
        assert!(parse_config("seed\n").is_err());
        assert!(parse_config("slices_per_sample = 4\n").is_err());
        assert!(parse_config("epochs = 0\n").is_err());
    }

    #[test]
    fn detect_peaks_finds_separated_components() {
        let mut probs = vec![0.0; 36];
        // Two plateaus with distinct maxima.
        probs[7] = 0.9;
        probs[8] = 0.8;
        probs[28] = 0.6;
        let peaks = detect_peaks(&probs, 6, 6, 0.5);
        assert_eq!(peaks.len(), 2);
        assert_eq!((peaks[0].y, peaks[0].x), (1, 1));
        assert!((peaks[0].score - 0.9).abs() < 1e-12);
        assert_eq!((peaks[1].y, peaks[1].x), (4, 4));
    }

    #[test]
    fn match_claims_each_lesion_once() {
        let peaks = vec![
            Peak { score: 0.9, y: 4, x: 4 },
            Peak { score: 0.8, y: 5, x: 4 },
            Peak { score: 0.7, y: 20, x: 20 },
        ];
        let lesions = vec![(4.5, 4.5, 3.0)];
        let record = match_detections(&peaks, &lesions);
        assert_eq!(record.n_positives, 1);
        let flags: Vec<bool> = record.detections.iter().map(|d| d.is_true_positive).collect();
        // Second in-radius peak is a duplicate -> false positive.
        assert_eq!(flags, vec![true, false, false]);
    }

    #[test]
    fn window_extraction_pads_with_zeros() {
        let v = Volume4D::from_vec(1, 3, 1, 1, vec![1.0, 2.0, 3.0]).unwrap();
        let w = extract_window(&v, 0, 1).unwrap();
        assert_eq!(w.as_slice(), &[0.0, 1.0, 2.0]);
        let w = extract_window(&v, 2, 1).unwrap();
        assert_eq!(w.as_slice(), &[2.0, 3.0, 0.0]);
    }

    #[test]
    fn cohort_is_balanced() {
        let cfg = BenchConfig {
            n_phantoms: 8,
            ..BenchConfig::default()
        };
        let samples = build_cohort(&cfg).unwrap();
        assert_eq!(samples.len(), 8);
        assert_eq!(samples.iter().filter(|s| s.train).count(), 4);
        assert_eq!(samples.iter().filter(|s| s.thin && s.train).count(), 2);
        assert_eq!(samples.iter().filter(|s| s.thin && !s.train).count(), 2);
        for s in &samples {
            assert!(!s.lesions.is_empty());
            assert!(s.target.iter().any(|&v| v > 0.0));
        }
    }

    #[test]
    fn prepare_input_shapes() {
        let cfg = BenchConfig {
            n_phantoms: 4,
            ..BenchConfig::default()
        };
        let samples = build_cohort(&cfg).unwrap();
        let thin = samples.iter().find(|s| s.thin).unwrap();
        let thick = samples.iter().find(|s| !s.thin).unwrap();

        // 2.5D stacks slices as channels.
        let (x, _) = prepare_input(Strategy::TwoPointFiveD, thin, &cfg).unwrap();
        assert_eq!(x.dims(), [7, 1, 32, 32]);

        // TSM normalizes thick data onto the reference grid.
        let (x, m) = prepare_input(Strategy::Tsm, thick, &cfg).unwrap();
        assert_eq!(x.dims(), [1, 7, 32, 32]);
        assert_eq!(m.spacing_mm(), 2.0);

        // AlignShift keeps thick data native.
        let (x, m) = prepare_input(Strategy::AlignShift, thick, &cfg).unwrap();
        assert_eq!(x.dims(), [1, 7, 32, 32]);
        assert_eq!(m.spacing_mm(), 5.0);

        // ...and normalizes thin data.
        let (_, m) = prepare_input(Strategy::AlignShift, thin, &cfg).unwrap();
        assert_eq!(m.spacing_mm(), 2.0);
    }

    #[test]
    fn strategy_and_cohort_labels() {
        assert_eq!(Strategy::TwoPointFiveD.as_str(), "2.5D");
        assert_eq!(Strategy::Tsm.as_str(), "TSM");
        assert_eq!(Strategy::AlignShift.as_str(), "AlignShift");
        assert_eq!(Cohort::All.as_str(), "All");
    }

    #[test]
    fn csv_schema() {
        let report = GapReport {
            rows: vec![GapRow {
                strategy: Strategy::Tsm,
                cohort: Cohort::Thin,
                fp_level: 0.5,
                sensitivity: 0.75,
                avg: 0.8,
                diff: Some(-0.05),
            }],
        };
        let csv = report.to_csv();
        assert!(csv.starts_with("strategy,cohort,fp_level,sensitivity,avg,diff\n"));
        assert!(csv.contains("TSM,Thin,0.5,0.75,0.8,-0.05\n"));
    }
}
