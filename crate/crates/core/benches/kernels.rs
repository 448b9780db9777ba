//! Parallel vs sequential execution of the heavy kernels.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

use cmfdnet::blocks::{CmfdNet, Mode, ModelConfig};
use cmfdnet::metrics::{evaluate_dataset, Map};
use cmfdnet::nn::{Conv2d, Scope};
use cmfdnet::scan::VssScanBlock;
use cmfdnet::tensor::{ConvSpec, ParamBuilder};
use cmfdnet::train::seg_loss;
use cmfdnet::{parallel, Graph, ParamStore, Tensor};

const PATHS: [(&str, bool); 2] = [("parallel", true), ("sequential", false)];

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f32> {
    let n = shape.iter().product();
    Tensor::from_vec(
        shape.to_vec(),
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

fn conv(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut store = ParamStore::<f32>::new();
    let spec = ConvSpec {
        stride: 1,
        padding: 1,
        groups: 1,
    };
    let layer = Conv2d::new(
        &mut ParamBuilder::new(&mut store, &mut rng),
        "conv",
        (32, 32),
        3,
        spec,
        true,
    )
    .unwrap();
    let x = random(&mut rng, &[8, 32, 32, 32]);
    let mut group = c.benchmark_group("conv3x3_8x32x32x32");
    for (name, on) in PATHS {
        parallel::set_enabled(on);
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                let g = Graph::inference();
                let s = Scope::new(&g, &store);
                black_box(layer.forward(s, s.constant(x.clone())).unwrap().value())
            })
        });
    }
    group.finish();
}

fn vss(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut store = ParamStore::<f32>::new();
    let block = VssScanBlock::new(&mut ParamBuilder::new(&mut store, &mut rng), 32, 4).unwrap();
    let x = random(&mut rng, &[8, 32, 16, 16]);
    let mut group = c.benchmark_group("vss_forward_backward_8x32x16x16");
    for (name, on) in PATHS {
        parallel::set_enabled(on);
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                let g = Graph::new();
                let s = Scope::new(&g, &store);
                let y = block.forward(s, s.constant(x.clone())).unwrap().sum_all();
                black_box(g.backward(y, &store).unwrap().global_norm())
            })
        });
    }
    group.finish();
}

fn train_step(c: &mut Criterion) {
    let (net, store) = CmfdNet::init::<f32>(ModelConfig::desk(), 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let images = random(&mut rng, &[8, 3, 64, 64]).map(|v| 0.5 + 0.5 * v);
    let masks = random(&mut rng, &[8, 1, 64, 64]).map(|v| if v > 0.5 { 1.0 } else { 0.0 });
    let mut group = c.benchmark_group("desk_train_step_batch8");
    group.sample_size(10);
    for (name, on) in PATHS {
        parallel::set_enabled(on);
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                let g = Graph::new();
                let s = Scope::new(&g, &store);
                let maps = net
                    .forward(s, s.constant(images.clone()), Mode::Train)
                    .unwrap();
                let loss = seg_loss(&maps, &masks, &[]).unwrap();
                black_box(g.backward(loss, &store).unwrap().global_norm())
            })
        });
    }
    group.finish();
}

fn metrics(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 16;
    let ids: Vec<String> = (0..n).map(|i| format!("m{i}")).collect();
    let gts: Vec<Map> = (0..n)
        .map(|_| {
            let (cy, cx) = (rng.gen_range(20.0..44.0), rng.gen_range(20.0..44.0));
            let mask: Vec<bool> = (0..64 * 64)
                .map(|i| {
                    let (y, x) = ((i / 64) as f64 - cy, (i % 64) as f64 - cx);
                    x * x + y * y < 150.0
                })
                .collect();
            Map::from_mask(64, 64, &mask).unwrap()
        })
        .collect();
    let preds: Vec<Map> = gts
        .iter()
        .map(|g| {
            Map::new(
                64,
                64,
                g.data
                    .iter()
                    .map(|v| (0.7 * v + rng.gen_range(0.0..0.3)).min(1.0))
                    .collect(),
            )
            .unwrap()
        })
        .collect();
    let mut group = c.benchmark_group("metrics_16x64x64");
    for (name, on) in PATHS {
        parallel::set_enabled(on);
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| black_box(evaluate_dataset(&ids, &preds, &gts).unwrap().means))
        });
    }
    group.finish();
}

criterion_group!(benches, conv, vss, train_step, metrics);
criterion_main!(benches);
