//! Shared test oracles, independent of the library's implementation paths.

#![allow(dead_code)]

pub mod gradcheck;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use alignshift::convert::{ConvWeights2d, LayerSpec, NetworkSpec, NormStats};
use alignshift::froc::DetectionRecord;
use alignshift::nn::{Feature3, NORM_EPS};
use alignshift::volume::Volume4D;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_volume(rng: &mut ChaCha8Rng, c: usize, d: usize, h: usize, w: usize) -> Volume4D {
    let data: Vec<f64> = (0..c * d * h * w).map(|_| rng.random_range(-1.0..1.0)).collect();
    Volume4D::from_vec(c, d, h, w, data).unwrap()
}

pub fn dot(a: &Volume4D, b: &Volume4D) -> f64 {
    assert_eq!(a.dims(), b.dims());
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).sum()
}

pub fn max_abs_diff(a: &Volume4D, b: &Volume4D) -> f64 {
    assert_eq!(a.dims(), b.dims());
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Straight transcription of the fractional-shift definition as a
/// quadruple nested loop reading only from the untouched input.
///
/// Up channels `[0, up)`: `out[d] = alpha * in[d+1] + (1-alpha) * in[d]`
/// with `in[D] = 0`; down channels `[up, up+down)` mirror it with
/// `in[-1] = 0`; the rest copy through.
pub fn align_shift_loop_oracle(x: &Volume4D, alpha: f64, up: usize, down: usize) -> Volume4D {
    let [c_n, d_n, h_n, w_n] = x.dims();
    let mut out = x.clone();
    for c in 0..c_n {
        for d in 0..d_n {
            for h in 0..h_n {
                for w in 0..w_n {
                    let value = if c < up {
                        let next = if d + 1 < d_n { x.get(c, d + 1, h, w) } else { 0.0 };
                        alpha * next + (1.0 - alpha) * x.get(c, d, h, w)
                    } else if c < up + down {
                        let prev = if d > 0 { x.get(c, d - 1, h, w) } else { 0.0 };
                        alpha * prev + (1.0 - alpha) * x.get(c, d, h, w)
                    } else {
                        x.get(c, d, h, w)
                    };
                    out.set(c, d, h, w, value);
                }
            }
        }
    }
    out
}

/// Random, internally consistent detection-record sets: at least one
/// ground-truth positive, no more recalled positives than exist, and a
/// coarse score grid so ties actually occur.
pub fn random_froc_records(r: &mut ChaCha8Rng) -> Vec<DetectionRecord> {
    use alignshift::froc::Detection;
    loop {
        let n_images = r.random_range(1..=5);
        let records: Vec<DetectionRecord> = (0..n_images)
            .map(|_| {
                let n_dets = r.random_range(0..=8);
                let detections = (0..n_dets)
                    .map(|_| Detection {
                        score: r.random_range(0..=10) as f64 / 10.0,
                        is_true_positive: r.random_range(0.0..1.0) < 0.4,
                    })
                    .collect();
                DetectionRecord {
                    detections,
                    n_positives: r.random_range(0..=3),
                }
            })
            .collect();
        let total: usize = records.iter().map(|rec| rec.n_positives).sum();
        let tp_count: usize = records
            .iter()
            .flat_map(|rec| rec.detections.iter())
            .filter(|d| d.is_true_positive)
            .count();
        if total > 0 && tp_count <= total {
            return records;
        }
    }
}

/// Exhaustive-threshold FROC oracle: enumerate every distinct score as an
/// inclusive threshold (plus the empty set) and take the best recall whose
/// false positives per image stay within the level.
pub fn froc_brute_force(records: &[DetectionRecord], level: f64) -> f64 {
    let n_images = records.len() as f64;
    let total_positives: usize = records.iter().map(|r| r.n_positives).sum();
    let mut thresholds: Vec<f64> = records
        .iter()
        .flat_map(|r| r.detections.iter().map(|d| d.score))
        .collect();
    thresholds.push(f64::INFINITY);
    let mut best = 0.0f64;
    for &tau in &thresholds {
        let mut tp = 0usize;
        let mut fp = 0usize;
        for record in records {
            for det in &record.detections {
                if det.score >= tau {
                    if det.is_true_positive {
                        tp += 1;
                    } else {
                        fp += 1;
                    }
                }
            }
        }
        if fp as f64 / n_images <= level {
            best = best.max(tp as f64 / total_positives as f64);
        }
    }
    best
}

/// Random 4-layer 2D network (conv, norm, conv, pool) and the policy that
/// puts shift prefixes on both convolutions after conversion.
pub fn four_layer_net(r: &mut ChaCha8Rng) -> (NetworkSpec, Vec<bool>) {
    let conv = |r: &mut ChaCha8Rng, in_c: usize, out_c: usize, k: usize| {
        let data: Vec<f64> = (0..out_c * in_c * k * k)
            .map(|_| r.random_range(-0.5..0.5))
            .collect();
        LayerSpec::Conv2d {
            weights: ConvWeights2d::new(out_c, in_c, k, data).unwrap(),
            bias: (0..out_c).map(|_| r.random_range(-0.3..0.3)).collect(),
        }
    };
    let stats = NormStats::new(
        (0..5).map(|_| r.random_range(0.5..1.5)).collect(),
        (0..5).map(|_| r.random_range(-0.5..0.5)).collect(),
        (0..5).map(|_| r.random_range(-0.5..0.5)).collect(),
        (0..5).map(|_| r.random_range(0.5..2.0)).collect(),
    )
    .unwrap();
    let layers = vec![
        conv(r, 3, 5, 3),
        LayerSpec::Norm2d { stats },
        conv(r, 5, 4, 3),
        LayerSpec::Pool2d { kernel: 2 },
    ];
    (
        NetworkSpec::new(3, layers).unwrap(),
        vec![true, false, true, false],
    )
}

/// Runs a 2D network specification on one `C x H x W` slice with the
/// reference ops below.
pub fn forward_2d(spec: &NetworkSpec, slice: &Feature3) -> Feature3 {
    let mut cur = slice.clone();
    for layer in &spec.layers {
        cur = match layer {
            LayerSpec::Conv2d { weights, bias } => net2d::conv2d(&cur, weights, bias),
            LayerSpec::Pool2d { kernel } => net2d::pool2d(&cur, *kernel),
            LayerSpec::Norm2d { stats } => net2d::norm2d(&cur, stats),
            other => panic!("2D reference cannot run {other:?}"),
        };
    }
    cur
}

/// Stacks one slice `depth` times along the depth axis.
pub fn constant_depth_volume(slice: &Feature3, depth: usize) -> Volume4D {
    let (c, h, w) = (slice.channels(), slice.height(), slice.width());
    let mut vol = Volume4D::new(c, depth, h, w, 0.0).unwrap();
    for ci in 0..c {
        for d in 0..depth {
            vol.plane_mut(ci, d).copy_from_slice(slice.plane(ci));
        }
    }
    vol
}

/// Reference 2D forward pass used to check the conversion recipe: plain
/// per-slice implementations of the three convertible layer kinds.
pub mod net2d {
    use super::*;

    /// Same-padded KxK cross-correlation on a `C x H x W` feature map.
    pub fn conv2d(x: &Feature3, w: &ConvWeights2d, bias: &[f64]) -> Feature3 {
        assert_eq!(x.channels(), w.in_channels);
        assert_eq!(bias.len(), w.out_channels);
        assert_eq!(w.kernel % 2, 1);
        let (h_n, w_n) = (x.height(), x.width());
        let k = w.kernel;
        let half = (k / 2) as isize;
        let mut out = Feature3::new(w.out_channels, h_n, w_n, 0.0);
        for o in 0..w.out_channels {
            for y in 0..h_n {
                for xx in 0..w_n {
                    let mut acc = bias[o];
                    for i in 0..w.in_channels {
                        for u in 0..k {
                            for v in 0..k {
                                let sy = y as isize + u as isize - half;
                                let sx = xx as isize + v as isize - half;
                                if sy < 0 || sx < 0 || sy >= h_n as isize || sx >= w_n as isize {
                                    continue;
                                }
                                let wt = w.data[((o * w.in_channels + i) * k + u) * k + v];
                                acc += wt * x.get(i, sy as usize, sx as usize);
                            }
                        }
                    }
                    out.set(o, y, xx, acc);
                }
            }
        }
        out
    }

    /// KxK max pooling with stride K, floor semantics.
    pub fn pool2d(x: &Feature3, kernel: usize) -> Feature3 {
        let h_out = x.height() / kernel;
        let w_out = x.width() / kernel;
        let mut out = Feature3::new(x.channels(), h_out, w_out, 0.0);
        for c in 0..x.channels() {
            for yo in 0..h_out {
                for xo in 0..w_out {
                    let mut best = f64::NEG_INFINITY;
                    for y in yo * kernel..yo * kernel + kernel {
                        for xx in xo * kernel..xo * kernel + kernel {
                            best = best.max(x.get(c, y, xx));
                        }
                    }
                    out.set(c, yo, xo, best);
                }
            }
        }
        out
    }

    /// Inference-mode per-channel affine normalization.
    pub fn norm2d(x: &Feature3, stats: &NormStats) -> Feature3 {
        assert_eq!(x.channels(), stats.channels());
        let mut out = x.clone();
        for c in 0..x.channels() {
            let inv = 1.0 / (stats.running_var[c] + NORM_EPS).sqrt();
            for y in 0..x.height() {
                for xx in 0..x.width() {
                    let v = stats.scale[c] * (x.get(c, y, xx) - stats.running_mean[c]) * inv
                        + stats.offset[c];
                    out.set(c, y, xx, v);
                }
            }
        }
        out
    }
}
