use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use alignshift::convert::ConvWeights3d;
use alignshift::nn::conv3d_1kk_forward;
use alignshift::resample::resample_depth;
use alignshift::shift::{align_shift, align_shift_adjoint, tsm_shift, ShiftConfig};
use alignshift::volume::{ThicknessMeta, Volume4D};

fn random_volume(seed: u64, c: usize, d: usize, h: usize, w: usize) -> Volume4D {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<f64> = (0..c * d * h * w).map(|_| rng.random_range(-1.0..1.0)).collect();
    Volume4D::from_vec(c, d, h, w, data).unwrap()
}

fn bench_shift_ops(c: &mut Criterion) {
    let volume = random_volume(1, 16, 12, 64, 64);
    let cfg = ShiftConfig::default_for_channels(16, 2.0).unwrap();
    let native = ThicknessMeta::new(5.0).unwrap();
    let reference = ThicknessMeta::new(2.0).unwrap();

    let mut group = c.benchmark_group("shift_16x12x64x64");
    group.bench_function("tsm_shift", |b| {
        b.iter_batched(
            || volume.clone(),
            |mut v| tsm_shift(&mut v, &cfg).unwrap(),
            BatchSize::LargeInput,
        )
    });
    group.bench_function("align_shift_alpha_1", |b| {
        b.iter_batched(
            || volume.clone(),
            |mut v| align_shift(&mut v, reference, &cfg).unwrap(),
            BatchSize::LargeInput,
        )
    });
    group.bench_function("align_shift_alpha_0_4", |b| {
        b.iter_batched(
            || volume.clone(),
            |mut v| align_shift(&mut v, native, &cfg).unwrap(),
            BatchSize::LargeInput,
        )
    });
    group.bench_function("align_shift_adjoint", |b| {
        b.iter_batched(
            || volume.clone(),
            |mut v| align_shift_adjoint(&mut v, native, &cfg).unwrap(),
            BatchSize::LargeInput,
        )
    });
    group.finish();
}

fn bench_resample(c: &mut Criterion) {
    let volume = random_volume(2, 1, 64, 64, 64);
    let thin = ThicknessMeta::new(1.0).unwrap();
    c.bench_function("resample_depth_1mm_to_2mm_64x64x64", |b| {
        b.iter(|| resample_depth(&volume, thin, 2.0).unwrap())
    });
}

fn bench_conv(c: &mut Criterion) {
    let volume = random_volume(3, 8, 7, 32, 32);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let weights = ConvWeights3d::new(
        8,
        8,
        3,
        (0..8 * 8 * 9).map(|_| rng.random_range(-0.5..0.5)).collect(),
    )
    .unwrap();
    let bias = vec![0.0; 8];
    c.bench_function("conv3d_1x3x3_8ch_7x32x32", |b| {
        b.iter(|| conv3d_1kk_forward(&volume, &weights, &bias).unwrap())
    });
}

criterion_group!(benches, bench_shift_ops, bench_resample, bench_conv);
criterion_main!(benches);
