//! Self-contained numerical checks on seeded random fixtures: analytic
//! gradients against central finite differences, the entropy decomposition
//! of the filter loss, and the template and prior invariants.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::interp::{
    decompose_loss, filter_loss_exact, filter_loss_grad_approx, filter_loss_surrogate, fitness_all, log_sum_exp,
    FeatureMap, FilterState, FitTarget, Location, TemplateBank, TemplateParams,
};
use crate::ops::{
    conv2d_backward, conv2d_forward, fc_backward, fc_forward, task_loss, Label, TaskLossKind,
};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct VerifyOptions {
    /// Negates the analytic filter-loss gradient before comparing it; the
    /// suite must then fail.
    pub flip_gradient_sign: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            out.push_str(&format!("{} {}: {}\n", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail));
        }
        let failed = self.failures().len();
        out.push_str(&format!("{} checks, {} failed\n", self.checks.len(), failed));
        out
    }
}

pub const FD_STEP: f64 = 1e-5;

/// `|a − b| / max(|a|, |b|, 1e-8)`.
pub fn rel_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| rel_error(x, y)).fold(0.0, f64::max)
}

/// Central differences of `f` at `x` with step `FD_STEP`.
pub fn central_diff(x: &[f64], f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    diff_with(x, f, |_| FD_STEP)
}

/// Central differences with step `FD_STEP·max(1, |x_i|)`, for inputs whose
/// magnitude is far from one.
pub fn central_diff_relative(x: &[f64], f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    diff_with(x, f, |v| FD_STEP * v.abs().max(1.0))
}

fn diff_with(x: &[f64], f: impl Fn(&[f64]) -> f64, step: impl Fn(f64) -> f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            let v = p[i];
            let h = step(v);
            p[i] = v + h;
            let up = f(&p);
            p[i] = v - h;
            let down = f(&p);
            p[i] = v;
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn random_map(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> FeatureMap {
    // keep entries away from zero so differences stay inside the domain
    let v = (0..n * n).map(|_| rng.gen_range(0.05..1.0) * scale).collect();
    FeatureMap::new(n, v).expect("positive entries")
}

/// A random bump of height about `scale` over a low positive floor.
fn peaked_map(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> FeatureMap {
    let (pr, pc) = (rng.gen_range(0..n), rng.gen_range(0..n));
    let height = scale * rng.gen_range(0.2..1.0);
    let v = (0..n * n)
        .map(|k| {
            let d = (k / n).abs_diff(pr) + (k % n).abs_diff(pc);
            height * 0.5f64.powi(d as i32) + rng.gen_range(0.05..0.2) * scale / (n * n) as f64
        })
        .collect();
    FeatureMap::new(n, v).expect("positive entries")
}

fn bank(n: usize) -> TemplateBank {
    TemplateBank::from_params(TemplateParams::defaults(n)).expect("default parameters are valid")
}

/// Exact filter-loss gradients against differences of the Z-frozen
/// surrogate over `fixtures` random sets.
pub fn exact_gradient_check(fixtures: usize, seed: u64, flip: bool) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..fixtures {
        let n = rng.gen_range(3..=6);
        let size = rng.gen_range(2..=8);
        let b = bank(n);
        let scale = rng.gen_range(1.0..4.0) / b.tau();
        let maps: Vec<FeatureMap> = (0..size).map(|_| peaked_map(&mut rng, n, scale)).collect();
        let exact = filter_loss_exact(&maps, &b).expect("valid fixture");
        for (i, g) in exact.gradients.iter().enumerate() {
            let numeric = central_diff_relative(maps[i].values(), |v| {
                let mut m = maps.clone();
                m[i] = FeatureMap::new(n, v.to_vec()).expect("perturbation stays positive");
                filter_loss_surrogate(&m, &b, &exact.log_z).expect("valid fixture")
            });
            let analytic: Vec<f64> = g.iter().map(|v| if flip { -v } else { *v }).collect();
            worst = worst.max(max_rel(&analytic, &numeric));
        }
    }
    Check {
        name: "filter-loss gradient vs finite differences",
        passed: worst < 1e-5,
        detail: format!("{fixtures} fixtures, max relative error {worst:.3e} (limit 1e-5)"),
    }
}

/// The loss equals `−H(Ω) + H(Ω'|X) + Σ_x p(Ω⁺,x)·H(Ω⁺|X=x)`.
pub fn decomposition_check(fixtures: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..fixtures {
        let n = rng.gen_range(2..=6);
        let size = rng.gen_range(1..=10);
        let b = bank(n);
        let scale = rng.gen_range(0.5..8.0) / b.tau() / (n * n) as f64;
        let maps: Vec<FeatureMap> = (0..size).map(|_| random_map(&mut rng, n, scale)).collect();
        let loss = filter_loss_exact(&maps, &b).expect("valid fixture").loss;
        let d = decompose_loss(&maps, &b).expect("valid fixture");
        worst = worst.max((loss - d.reconstructed_loss).abs());
    }
    Check {
        name: "loss decomposition identity",
        passed: worst < 1e-9,
        detail: format!("{fixtures} fixtures, max absolute gap {worst:.3e} (limit 1e-9)"),
    }
}

/// A set with one zero map plus one map per cell, each spiked hard enough
/// that its own component leads every other trace by at least `gap` nats.
pub fn dominant_fixture(rng: &mut ChaCha8Rng, n: usize, gap: f64) -> (TemplateBank, Vec<FeatureMap>) {
    let b = bank(n);
    // the runner-up component sits one cell away, at τ/3 of the peak weight
    let third = (1.0 - b.params().beta / n as f64).max(-1.0);
    let spike = gap / (b.tau() * (1.0 - third));
    let mut maps = vec![FeatureMap::zeros(n)];
    for cell in 0..n * n {
        let mut v: Vec<f64> = (0..n * n).map(|_| rng.gen_range(0.0..0.01)).collect();
        v[cell] = spike * rng.gen_range(1.25..1.5);
        maps.push(FeatureMap::new(n, v).expect("non-negative entries"));
    }
    (b, maps)
}

/// Smallest lead of a map's best trace over its others, across a set.
pub fn trace_gap(maps: &[FeatureMap], bank: &TemplateBank) -> f64 {
    maps.iter()
        .filter(|m| m.peak() > 0.0)
        .map(|m| {
            let mut f = fitness_all(m, bank).expect("matching sizes");
            f.sort_by(|a, b| b.total_cmp(a));
            f[0] - f[1]
        })
        .fold(f64::INFINITY, f64::min)
}

/// Single-component gradients against the exact per-map gradients in
/// dominant-peak sets, with the running estimates set to the exact values.
pub fn approx_consistency_check(fixtures: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut min_gap = f64::INFINITY;
    for _ in 0..fixtures {
        let n = rng.gen_range(3..=6);
        let (b, maps) = dominant_fixture(&mut rng, n, 20.0);
        min_gap = min_gap.min(trace_gap(&maps, &b));
        let exact = filter_loss_exact(&maps, &b).expect("valid fixture");
        for (x, g) in maps.iter().zip(&exact.gradients).skip(1) {
            let fits = fitness_all(x, &b).expect("matching sizes");
            let joint: Vec<f64> = fits
                .iter()
                .zip(&exact.log_z)
                .zip(b.log_prior())
                .map(|((t, z), p)| p + t - z)
                .collect();
            let state = FilterState::from_parts(exact.log_z.clone(), log_sum_exp(&joint), Some(0), 1, 0.99)
                .expect("valid decay");
            let approx = filter_loss_grad_approx(x, FitTarget::Peak(x.argmax()), &state, &b).expect("valid state");
            let scale = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let dev = approx.iter().zip(g).map(|(a, e)| (a - e).abs()).fold(0.0, f64::max) / scale;
            worst = worst.max(dev);
        }
    }
    Check {
        name: "single-component gradient in dominant-peak regime",
        passed: worst < 1e-6 && min_gap >= 20.0,
        detail: format!("{fixtures} fixtures, trace gap >= {min_gap:.1}, max relative deviation {worst:.3e} (limit 1e-6)"),
    }
}

/// Prior normalization, peak value, clamp and the constant negative template
/// for every `n` in `2..=12`.
pub fn template_invariants_check() -> Check {
    let mut problems = Vec::new();
    for n in 2..=12 {
        let b = bank(n);
        let tau = b.tau();
        let mass = b.prior_mass();
        if (mass - 1.0).abs() > 1e-15 {
            problems.push(format!("n={n}: prior mass {mass}"));
        }
        for r in 0..n {
            for c in 0..n {
                let t = b.positive(Location::new(r, c));
                if t[r * n + c] != tau {
                    problems.push(format!("n={n}: template [{r},{c}] peak {}", t[r * n + c]));
                }
                if t.iter().any(|&v| v > tau || v < -tau) {
                    problems.push(format!("n={n}: template [{r},{c}] leaves [-tau, tau]"));
                }
                for (k, &v) in t.iter().enumerate() {
                    let d = (k / n).abs_diff(r) + (k % n).abs_diff(c);
                    if 1.0 - b.params().beta * d as f64 / n as f64 <= -1.0 && v != -tau {
                        problems.push(format!("n={n}: template [{r},{c}] not clamped at cell {k}"));
                    }
                }
            }
        }
        if b.negative_value() != -tau || b.component(b.negative_index()).iter().any(|&v| v != -tau) {
            problems.push(format!("n={n}: negative template not constant -tau"));
        }
    }
    Check {
        name: "template and prior invariants",
        passed: problems.is_empty(),
        detail: if problems.is_empty() {
            "n = 2..12 exact".to_string()
        } else {
            problems.join("; ")
        },
    }
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let len = shape.iter().product();
    Tensor::new(shape, (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()).expect("finite values")
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Convolution, fully-connected and task-loss backward passes against
/// differences of a random linear scalarization.
pub fn layer_gradient_check(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let (cin, cout, h, k) = (rng.gen_range(1..=3), rng.gen_range(1..=3), rng.gen_range(4..=7), rng.gen_range(1..=3));
        let (stride, pad) = (rng.gen_range(1..=2), rng.gen_range(0..=1));
        let x = random_tensor(&mut rng, &[cin, h, h]);
        let w = random_tensor(&mut rng, &[cout, cin, k, k]);
        let bias = random_tensor(&mut rng, &[cout]);
        let y = conv2d_forward(&x, &w, &bias, stride, pad).expect("valid geometry");
        let probe = random_tensor(&mut rng, y.shape());
        let g = conv2d_backward(&probe, &x, &w, stride, pad).expect("valid geometry");
        let f_x = central_diff(x.data(), |v| {
            let xi = Tensor::new(&[cin, h, h], v.to_vec()).expect("finite");
            dot(conv2d_forward(&xi, &w, &bias, stride, pad).expect("valid").data(), probe.data())
        });
        let f_w = central_diff(w.data(), |v| {
            let wi = Tensor::new(&[cout, cin, k, k], v.to_vec()).expect("finite");
            dot(conv2d_forward(&x, &wi, &bias, stride, pad).expect("valid").data(), probe.data())
        });
        worst = worst.max(max_rel(g.input.data(), &f_x)).max(max_rel(g.weights.data(), &f_w));

        let (din, dout) = (rng.gen_range(1..=6), rng.gen_range(1..=4));
        let x = random_tensor(&mut rng, &[din]);
        let w = random_tensor(&mut rng, &[dout, din]);
        let bias = random_tensor(&mut rng, &[dout]);
        let probe = random_tensor(&mut rng, &[dout]);
        let g = fc_backward(&probe, &x, &w).expect("valid shapes");
        let f_w = central_diff(w.data(), |v| {
            let wi = Tensor::new(&[dout, din], v.to_vec()).expect("finite");
            dot(fc_forward(&x, &wi, &bias).expect("valid").data(), probe.data())
        });
        worst = worst.max(max_rel(g.weights.data(), &f_w));

        for kind in [TaskLossKind::LogisticBinary, TaskLossKind::SoftmaxMulticlass] {
            let (rows, cats) = (rng.gen_range(1..=4), rng.gen_range(2..=4));
            let logits = random_tensor(&mut rng, &[rows, cats]);
            let labels: Vec<Label> = (0..rows).map(|_| Label::Category(rng.gen_range(0..cats))).collect();
            let (_, g) = task_loss(&logits, &labels, kind).expect("valid labels");
            let f = central_diff(logits.data(), |v| {
                let l = Tensor::new(&[rows, cats], v.to_vec()).expect("finite");
                task_loss(&l, &labels, kind).expect("valid labels").0
            });
            worst = worst.max(max_rel(g.data(), &f));
        }
    }
    Check {
        name: "layer gradients vs finite differences",
        passed: worst < 1e-6,
        detail: format!("conv, fc, task losses; max relative error {worst:.3e} (limit 1e-6)"),
    }
}

/// Runs the whole suite with fixed seeds.
pub fn run(options: VerifyOptions) -> VerifyReport {
    VerifyReport {
        checks: vec![
            exact_gradient_check(50, 11, options.flip_gradient_sign),
            decomposition_check(50, 12),
            approx_consistency_check(10, 13),
            template_invariants_check(),
            layer_gradient_check(14),
        ],
    }
}
