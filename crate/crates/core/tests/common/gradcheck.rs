//! Central finite-difference harness shared by the per-operator gradient
//! tests and the acceptance suite. Every function builds its own seeded
//! fixture and returns the worst relative error it observed.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use alignshift::convert::{
    convert_network, ConvWeights2d, ConvWeights3d, LayerSpec, NetworkSpec, NormStats,
};
use alignshift::nn::{
    bce_with_logits, conv3d_1kk_backward, conv3d_1kk_forward, depth_squeeze,
    depth_squeeze_backward, linear_head_backward, linear_head_forward, norm3d_backward,
    norm3d_forward, pool3d_1kk_backward, pool3d_1kk_forward, relu_backward, relu_forward,
    DepthSqueezeOp, Feature3, HeatmapModel, LinearHeadOp, Network3d, NormMode, SqueezeWeights,
};
use alignshift::shift::ShiftConfig;
use alignshift::volume::{ThicknessMeta, Volume4D};

use super::{random_volume, rng};

pub const EPS: f64 = 1e-5;

/// Relative error with a floor, so near-zero gradients are compared
/// absolutely at `tol * floor`.
fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3)
}

fn central_diff<F: FnMut(f64) -> f64>(mut f: F, x0: f64) -> f64 {
    (f(x0 + EPS) - f(x0 - EPS)) / (2.0 * EPS)
}

fn dot_slice(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn conv3d_max_rel_err() -> f64 {
    let mut r = rng(31);
    let x = random_volume(&mut r, 2, 3, 4, 4);
    let wdata: Vec<f64> = (0..3 * 2 * 9).map(|_| r.random_range(-0.5..0.5)).collect();
    let w = ConvWeights3d::new(3, 2, 3, wdata).unwrap();
    let bias: Vec<f64> = (0..3).map(|_| r.random_range(-0.5..0.5)).collect();
    let cot = random_volume(&mut r, 3, 3, 4, 4);

    let (grad_x, grad_w, grad_b) = conv3d_1kk_backward(&cot, &x, &w).unwrap();
    let loss = |x: &Volume4D, w: &ConvWeights3d, b: &[f64]| -> f64 {
        dot_slice(conv3d_1kk_forward(x, w, b).unwrap().as_slice(), cot.as_slice())
    };

    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let numeric = central_diff(
            |v| {
                let mut xp = x.clone();
                xp.as_mut_slice()[i] = v;
                loss(&xp, &w, &bias)
            },
            x.as_slice()[i],
        );
        worst = worst.max(rel_err(grad_x.as_slice()[i], numeric));
    }
    for i in 0..w.data.len() {
        let numeric = central_diff(
            |v| {
                let mut wp = w.clone();
                wp.data[i] = v;
                loss(&x, &wp, &bias)
            },
            w.data[i],
        );
        worst = worst.max(rel_err(grad_w[i], numeric));
    }
    for i in 0..bias.len() {
        let numeric = central_diff(
            |v| {
                let mut bp = bias.clone();
                bp[i] = v;
                loss(&x, &w, &bp)
            },
            bias[i],
        );
        worst = worst.max(rel_err(grad_b[i], numeric));
    }
    worst
}

pub fn relu_max_rel_err() -> f64 {
    let mut r = rng(32);
    // Keep inputs away from the kink at zero.
    let data: Vec<f64> = (0..2 * 2 * 3 * 3)
        .map(|_| {
            let magnitude = r.random_range(0.1..1.0);
            if r.random_range(0.0..1.0) < 0.5 {
                -magnitude
            } else {
                magnitude
            }
        })
        .collect();
    let x = Volume4D::from_vec(2, 2, 3, 3, data).unwrap();
    let cot = random_volume(&mut r, 2, 2, 3, 3);
    let grad = relu_backward(&cot, &x).unwrap();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let numeric = central_diff(
            |v| {
                let mut xp = x.clone();
                xp.as_mut_slice()[i] = v;
                dot_slice(relu_forward(&xp).as_slice(), cot.as_slice())
            },
            x.as_slice()[i],
        );
        worst = worst.max(rel_err(grad.as_slice()[i], numeric));
    }
    worst
}

/// Random volume whose pooling windows have well-separated values, so the
/// argmax is stable under the finite-difference perturbation.
fn pool_safe_volume(r: &mut ChaCha8Rng, c: usize, d: usize, h: usize, w: usize) -> Volume4D {
    loop {
        let x = random_volume(r, c, d, h, w);
        let mut ok = true;
        'outer: for ci in 0..c {
            for di in 0..d {
                for yo in 0..h / 2 {
                    for xo in 0..w / 2 {
                        let mut vals = Vec::new();
                        for y in yo * 2..yo * 2 + 2 {
                            for xx in xo * 2..xo * 2 + 2 {
                                vals.push(x.get(ci, di, y, xx));
                            }
                        }
                        vals.sort_by(f64::total_cmp);
                        if vals.windows(2).any(|p| p[1] - p[0] < 1e-3) {
                            ok = false;
                            break 'outer;
                        }
                    }
                }
            }
        }
        if ok {
            return x;
        }
    }
}

pub fn pool_max_rel_err() -> f64 {
    let mut r = rng(33);
    let x = pool_safe_volume(&mut r, 2, 2, 4, 4);
    let (_, argmax) = pool3d_1kk_forward(&x, 2).unwrap();
    let cot = random_volume(&mut r, 2, 2, 2, 2);
    let grad = pool3d_1kk_backward(&cot, x.dims(), 2, &argmax).unwrap();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let numeric = central_diff(
            |v| {
                let mut xp = x.clone();
                xp.as_mut_slice()[i] = v;
                let (o, _) = pool3d_1kk_forward(&xp, 2).unwrap();
                dot_slice(o.as_slice(), cot.as_slice())
            },
            x.as_slice()[i],
        );
        worst = worst.max(rel_err(grad.as_slice()[i], numeric));
    }
    worst
}

pub fn random_stats(r: &mut ChaCha8Rng, channels: usize) -> NormStats {
    NormStats::new(
        (0..channels).map(|_| r.random_range(0.5..1.5)).collect(),
        (0..channels).map(|_| r.random_range(-0.5..0.5)).collect(),
        (0..channels).map(|_| r.random_range(-0.5..0.5)).collect(),
        (0..channels).map(|_| r.random_range(0.5..2.0)).collect(),
    )
    .unwrap()
}

pub fn norm_max_rel_err(mode: NormMode) -> f64 {
    let mut r = rng(34);
    let x = random_volume(&mut r, 2, 2, 3, 3);
    let stats = random_stats(&mut r, 2);
    let cot = random_volume(&mut r, 2, 2, 3, 3);
    let (_, used) = norm3d_forward(&x, &stats, mode).unwrap();
    let (grad_x, grad_scale, grad_offset) =
        norm3d_backward(&cot, &x, &stats, mode, &used).unwrap();

    let loss = |x: &Volume4D, stats: &NormStats| -> f64 {
        let (out, _) = norm3d_forward(x, stats, mode).unwrap();
        dot_slice(out.as_slice(), cot.as_slice())
    };
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let numeric = central_diff(
            |v| {
                let mut xp = x.clone();
                xp.as_mut_slice()[i] = v;
                loss(&xp, &stats)
            },
            x.as_slice()[i],
        );
        worst = worst.max(rel_err(grad_x.as_slice()[i], numeric));
    }
    for c in 0..2 {
        let numeric = central_diff(
            |v| {
                let mut sp = stats.clone();
                sp.scale[c] = v;
                loss(&x, &sp)
            },
            stats.scale[c],
        );
        worst = worst.max(rel_err(grad_scale[c], numeric));
        let numeric = central_diff(
            |v| {
                let mut sp = stats.clone();
                sp.offset[c] = v;
                loss(&x, &sp)
            },
            stats.offset[c],
        );
        worst = worst.max(rel_err(grad_offset[c], numeric));
    }
    worst
}

pub fn squeeze_max_rel_err() -> f64 {
    let mut r = rng(35);
    let x = random_volume(&mut r, 2, 3, 3, 3);
    let w = SqueezeWeights::new(2, 2, 3, (0..12).map(|_| r.random_range(-0.5..0.5)).collect())
        .unwrap();
    let cot: Vec<f64> = (0..2 * 9).map(|_| r.random_range(-1.0..1.0)).collect();
    let cot_f = Feature3::from_vec(2, 3, 3, cot.clone()).unwrap();

    let (grad_x, grad_w) = depth_squeeze_backward(&cot_f, &x, &w).unwrap();
    let loss = |x: &Volume4D, w: &SqueezeWeights| -> f64 {
        dot_slice(depth_squeeze(x, w).unwrap().as_slice(), &cot)
    };
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let numeric = central_diff(
            |v| {
                let mut xp = x.clone();
                xp.as_mut_slice()[i] = v;
                loss(&xp, &w)
            },
            x.as_slice()[i],
        );
        worst = worst.max(rel_err(grad_x.as_slice()[i], numeric));
    }
    for i in 0..w.data.len() {
        let numeric = central_diff(
            |v| {
                let mut wp = w.clone();
                wp.data[i] = v;
                loss(&x, &wp)
            },
            w.data[i],
        );
        worst = worst.max(rel_err(grad_w[i], numeric));
    }
    worst
}

pub fn head_max_rel_err() -> f64 {
    let mut r = rng(36);
    let x = Feature3::from_vec(3, 4, 4, (0..48).map(|_| r.random_range(-1.0..1.0)).collect())
        .unwrap();
    let weights: Vec<f64> = (0..3).map(|_| r.random_range(-1.0..1.0)).collect();
    let bias: f64 = r.random_range(-0.5..0.5);
    let cot: Vec<f64> = (0..16).map(|_| r.random_range(-1.0..1.0)).collect();

    let (grad_x, grad_w, grad_b) = linear_head_backward(&cot, &x, &weights).unwrap();
    let loss = |x: &Feature3, w: &[f64], b: f64| -> f64 {
        dot_slice(&linear_head_forward(x, w, b).unwrap(), &cot)
    };
    let mut worst = 0.0f64;
    for i in 0..x.as_slice().len() {
        let numeric = central_diff(
            |v| {
                let mut xp = x.clone();
                xp.as_mut_slice()[i] = v;
                loss(&xp, &weights, bias)
            },
            x.as_slice()[i],
        );
        worst = worst.max(rel_err(grad_x.as_slice()[i], numeric));
    }
    for c in 0..3 {
        let numeric = central_diff(
            |v| {
                let mut wp = weights.clone();
                wp[c] = v;
                loss(&x, &wp, bias)
            },
            weights[c],
        );
        worst = worst.max(rel_err(grad_w[c], numeric));
    }
    worst.max(rel_err(grad_b, central_diff(|v| loss(&x, &weights, v), bias)))
}

pub fn bce_max_rel_err() -> f64 {
    let mut r = rng(37);
    let logits: Vec<f64> = (0..20).map(|_| r.random_range(-2.0..2.0)).collect();
    let targets: Vec<f64> = (0..20)
        .map(|_| f64::from(r.random_range(0.0..1.0) < 0.3))
        .collect();
    let (_, grad) = bce_with_logits(&logits, &targets, 3.0).unwrap();
    let mut worst = 0.0f64;
    for i in 0..logits.len() {
        let numeric = central_diff(
            |v| {
                let mut lp = logits.clone();
                lp[i] = v;
                bce_with_logits(&lp, &targets, 3.0).unwrap().0
            },
            logits[i],
        );
        worst = worst.max(rel_err(grad[i], numeric));
    }
    worst
}

/// 3-layer converted model (shifted conv, training-mode norm, shifted 1x1
/// conv) plus squeeze and head.
fn converted_model(r: &mut ChaCha8Rng, cfg: &ShiftConfig) -> HeatmapModel {
    let w1 = ConvWeights2d::new(
        4,
        3,
        3,
        (0..4 * 3 * 9).map(|_| r.random_range(-0.3..0.3)).collect(),
    )
    .unwrap();
    let w2 = ConvWeights2d::new(3, 4, 1, (0..12).map(|_| r.random_range(-0.5..0.5)).collect())
        .unwrap();
    let spec = NetworkSpec::new(
        3,
        vec![
            LayerSpec::Conv2d {
                weights: w1,
                bias: (0..4).map(|_| r.random_range(-0.2..0.2)).collect(),
            },
            LayerSpec::Norm2d {
                stats: random_stats(r, 4),
            },
            LayerSpec::Conv2d {
                weights: w2,
                bias: (0..3).map(|_| r.random_range(-0.2..0.2)).collect(),
            },
        ],
    )
    .unwrap();
    let converted = convert_network(&spec, &[true, false, true], cfg).unwrap();
    let backbone = Network3d::from_spec(&converted, NormMode::Training).unwrap();
    let squeeze = DepthSqueezeOp::new(
        SqueezeWeights::new(2, 3, 5, (0..30).map(|_| r.random_range(-0.4..0.4)).collect())
            .unwrap(),
    );
    let head = LinearHeadOp::new(
        (0..2).map(|_| r.random_range(-0.7..0.7)).collect(),
        r.random_range(-0.2..0.2),
    );
    HeatmapModel::new(backbone, squeeze, head)
}

/// End-to-end check through shifts, convs, training-mode norm, squeeze,
/// and head: worst relative error over all parameters and input elements.
pub fn end_to_end_max_rel_err() -> f64 {
    let mut r = rng(38);
    let cfg = ShiftConfig::new(1, 1, 2.0).unwrap();
    let spacing = ThicknessMeta::new(4.0).unwrap(); // alpha = 0.5
    let mut model = converted_model(&mut r, &cfg);
    let x = random_volume(&mut r, 3, 5, 6, 6);
    let cot: Vec<f64> = (0..36).map(|_| r.random_range(-1.0..1.0)).collect();

    model.zero_grad();
    model.forward(&x, spacing).unwrap();
    let grad_input = model.backward(&cot).unwrap();
    let analytic = model.grads();

    let params = model.params();
    let loss_at = |flat: &[f64], input: &Volume4D| -> f64 {
        let mut probe = model.clone();
        probe.set_params(flat);
        dot_slice(&probe.forward(input, spacing).unwrap(), &cot)
    };

    let mut worst = 0.0f64;
    for i in 0..params.len() {
        let numeric = central_diff(
            |v| {
                let mut p = params.clone();
                p[i] = v;
                loss_at(&p, &x)
            },
            params[i],
        );
        worst = worst.max(rel_err(analytic[i], numeric));
    }
    for i in 0..x.len() {
        let numeric = central_diff(
            |v| {
                let mut xp = x.clone();
                xp.as_mut_slice()[i] = v;
                loss_at(&params, &xp)
            },
            x.as_slice()[i],
        );
        worst = worst.max(rel_err(grad_input.as_slice()[i], numeric));
    }
    worst
}
