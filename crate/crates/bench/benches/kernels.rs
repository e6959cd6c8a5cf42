use criterion::{black_box, criterion_group, criterion_main, Criterion};
use gbx_core::interp::{apply_mask, filter_loss_exact, FeatureMap, TemplateBank, TemplateParams};
use gbx_core::net::{ArchitectureSpec, Network};
use gbx_core::ops::{conv2d_backward, conv2d_forward, TaskLossKind};
use gbx_core::Tensor;

fn ramp(shape: &[usize], k: usize) -> Tensor {
    let len: usize = shape.iter().product();
    Tensor::new(shape, (0..len).map(|i| ((i * 31 + k) % 23) as f64 / 23.0 - 0.4).collect()).unwrap()
}

fn maps(n: usize, count: usize) -> Vec<FeatureMap> {
    (0..count)
        .map(|k| FeatureMap::new(n, (0..n * n).map(|i| ((i * 7 + k * 13) % 19) as f64 / 3.0).collect()).unwrap())
        .collect()
}

fn conv(c: &mut Criterion) {
    let x = ramp(&[8, 16, 16], 1);
    let w = ramp(&[16, 8, 3, 3], 2);
    let b = ramp(&[16], 3);
    c.bench_function("conv2d_forward 8x16x16 -> 16", |bench| {
        bench.iter(|| conv2d_forward(black_box(&x), &w, &b, 1, 1).unwrap())
    });
    let g = ramp(&[16, 16, 16], 4);
    c.bench_function("conv2d_backward 8x16x16 -> 16", |bench| {
        bench.iter(|| conv2d_backward(black_box(&g), &x, &w, 1, 1).unwrap())
    });
}

fn interp(c: &mut Criterion) {
    let bank = TemplateBank::from_params(TemplateParams::defaults(6)).unwrap();
    let set = maps(6, 64);
    c.bench_function("apply_mask n=6", |bench| bench.iter(|| apply_mask(black_box(&set[0]), &bank).unwrap()));
    c.bench_function("filter_loss_exact 64 maps n=6", |bench| {
        bench.iter(|| filter_loss_exact(black_box(&set), &bank).unwrap())
    });
}

fn network(c: &mut Criterion) {
    let net = Network::new(ArchitectureSpec::desk_default(6, TaskLossKind::SoftmaxMulticlass), 1).unwrap();
    let img = ramp(&[1, 32, 32], 5);
    c.bench_function("forward_one default net", |bench| bench.iter(|| net.forward_one(black_box(&img)).unwrap()));
    let trace = net.forward_one(&img).unwrap();
    let g = [0.1, -0.2, 0.05, 0.0, 0.3, -0.25];
    c.bench_function("backward_one default net", |bench| {
        bench.iter(|| net.backward_one(black_box(&trace), &g, &[None]).unwrap())
    });
}

criterion_group!(benches, conv, interp, network);
criterion_main!(benches);
