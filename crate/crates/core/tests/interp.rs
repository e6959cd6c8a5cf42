use gbx_core::interp::*;
use gbx_core::verify::{central_diff, rel_error};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bank(n: usize) -> TemplateBank {
    TemplateBank::from_params(TemplateParams::defaults(n)).unwrap()
}

fn random_map(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> FeatureMap {
    FeatureMap::new(n, (0..n * n).map(|_| rng.gen_range(0.0..scale)).collect()).unwrap()
}

// tr(x·T) = Σ_ij x_ij t_ji, by definition of the trace.
fn trace_oracle(x: &FeatureMap, t: &[f64]) -> f64 {
    let n = x.n();
    let mut s = 0.0;
    for i in 0..n {
        for k in 0..n {
            s += x.get(i, k) * t[k * n + i];
        }
    }
    s
}

fn template_oracle(n: usize, tau: f64, beta: f64, mu: (usize, usize), cell: (usize, usize)) -> f64 {
    let d = mu.0.abs_diff(cell.0) + mu.1.abs_diff(cell.1);
    tau * f64::max(1.0 - beta * d as f64 / n as f64, -1.0)
}

struct Probabilities {
    prior: Vec<f64>,
    /// p(x|μ), indexed [μ][x]
    cond: Vec<Vec<f64>>,
    px: Vec<f64>,
}

fn probabilities(maps: &[FeatureMap], b: &TemplateBank) -> Probabilities {
    let comps = b.components();
    let prior = b.prior().to_vec();
    let cond: Vec<Vec<f64>> = (0..comps)
        .map(|mu| {
            let t = b.component(mu);
            let w: Vec<f64> = maps.iter().map(|x| trace_oracle(x, &t).exp()).collect();
            let z: f64 = w.iter().sum();
            w.into_iter().map(|v| v / z).collect()
        })
        .collect();
    let px = (0..maps.len())
        .map(|x| (0..comps).map(|mu| prior[mu] * cond[mu][x]).sum())
        .collect();
    Probabilities { prior, cond, px }
}

fn loss_oracle(maps: &[FeatureMap], b: &TemplateBank) -> f64 {
    let p = probabilities(maps, b);
    let mut mi = 0.0;
    for (mu, row) in p.cond.iter().enumerate() {
        for (x, &q) in row.iter().enumerate() {
            if q > 0.0 {
                mi += p.prior[mu] * q * (q / p.px[x]).ln();
            }
        }
    }
    -mi
}

fn entropy(ps: impl Iterator<Item = f64>) -> f64 {
    -ps.filter(|&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>()
}

#[test]
fn templates_match_direct_formula_for_all_sizes() {
    for n in 2..=12 {
        let b = bank(n);
        let p = TemplateParams::defaults(n);
        for mi in 0..n {
            for mj in 0..n {
                let t = b.positive(Location::new(mi, mj));
                for i in 0..n {
                    for j in 0..n {
                        assert_eq!(t[i * n + j], template_oracle(n, p.tau, p.beta, (mi, mj), (i, j)));
                    }
                }
                assert_eq!(t[mi * n + mj], p.tau);
                assert!(t.iter().all(|&v| v >= -p.tau && v <= p.tau));
            }
        }
        assert!(b.component(b.negative_index()).iter().all(|&v| v == -p.tau));
        let total = b.prior_mass();
        assert!((total - 1.0).abs() <= 1e-15, "n={n} prior sums to {total}");
    }
}

#[test]
fn three_by_three_corner_template() {
    let b = TemplateBank::build(3, 0.5, 4.0, 0.5).unwrap();
    let t = b.positive(Location::new(0, 0));
    for i in 0..3 {
        for j in 0..3 {
            let d = (i + j) as f64;
            assert_eq!(t[i * 3 + j], 0.5 * f64::max(1.0 - 4.0 * d / 3.0, -1.0));
        }
    }
}

#[test]
fn fitness_matches_double_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for n in 2..=6 {
        let x = FeatureMap::new(n, (0..n * n).map(|_| rng.gen_range(0.0..2.0)).collect()).unwrap();
        let t: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        assert!((template_fitness(&x, &t).unwrap() - trace_oracle(&x, &t)).abs() <= 1e-12);
    }
}

#[test]
fn mask_matches_elementwise_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for n in 2..=7 {
        let b = bank(n);
        let x = FeatureMap::new(n, (0..n * n).map(|_| rng.gen_range(0.0..3.0)).collect()).unwrap();
        let sel = apply_mask(&x, &b).unwrap();
        assert_eq!(sel.mu_hat, x.argmax());
        let t = b.positive(sel.mu_hat);
        for (k, &v) in sel.masked.values().iter().enumerate() {
            assert_eq!(v, (x.values()[k] * t[k]).max(0.0));
        }
    }
}

#[test]
fn exact_gradient_matches_frozen_partition_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let b = bank(4);
    let maps: Vec<FeatureMap> = (0..5).map(|_| random_map(&mut rng, 4, 30.0)).collect();
    let exact = filter_loss_exact(&maps, &b).unwrap();
    for (k, g) in exact.gradients.iter().enumerate() {
        let fd = central_diff(maps[k].values(), |v| {
            let mut m = maps.clone();
            m[k] = FeatureMap::new(4, v.to_vec()).unwrap();
            filter_loss_surrogate(&m, &b, &exact.log_z).unwrap()
        });
        let err = g.iter().zip(&fd).map(|(a, b)| rel_error(*a, *b)).fold(0.0, f64::max);
        assert!(err < 1e-5, "map {k}: {err}");
    }
}

#[test]
fn exact_loss_matches_probability_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    for n in 3..=6 {
        let b = bank(n);
        let maps: Vec<FeatureMap> = (0..6).map(|_| random_map(&mut rng, n, 20.0)).collect();
        let got = filter_loss_exact(&maps, &b).unwrap().loss;
        let want = loss_oracle(&maps, &b);
        assert!((got - want).abs() < 1e-9, "n={n}: {got} vs {want}");
    }
}

#[test]
fn decomposition_matches_entropy_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    let b = bank(4);
    let neg = b.negative_index();
    let maps: Vec<FeatureMap> = (0..7).map(|_| random_map(&mut rng, 4, 25.0)).collect();
    let p = probabilities(&maps, &b);
    let h_omega = entropy(p.prior.iter().copied());
    let (mut h_binary, mut spatial) = (0.0, 0.0);
    for x in 0..maps.len() {
        let post: Vec<f64> = (0..b.components()).map(|mu| p.prior[mu] * p.cond[mu][x] / p.px[x]).collect();
        let pos: f64 = post[..neg].iter().sum();
        h_binary += p.px[x] * entropy([pos, post[neg]].into_iter());
        spatial += p.px[x] * pos * entropy(post[..neg].iter().map(|q| q / pos));
    }
    let d = decompose_loss(&maps, &b).unwrap();
    assert!((d.neg_h_omega + h_omega).abs() < 1e-12);
    assert!((d.h_cond_binary - h_binary).abs() < 1e-9);
    assert!((d.weighted_spatial_entropy - spatial).abs() < 1e-9);
    let exact = filter_loss_exact(&maps, &b).unwrap().loss;
    assert!((d.reconstructed_loss - exact).abs() < 1e-9);
    assert!((-h_omega + h_binary + spatial - loss_oracle(&maps, &b)).abs() < 1e-9);
}

#[test]
fn approx_gradient_agrees_in_dominant_regime() {
    let mut rng = ChaCha8Rng::seed_from_u64(26);
    for _ in 0..5 {
        let (b, maps) = gbx_core::verify::dominant_fixture(&mut rng, 5, 20.0);
        assert!(gbx_core::verify::trace_gap(&maps, &b) >= 20.0);
        let exact = filter_loss_exact(&maps, &b).unwrap();
        // a state holding the set's own partition terms
        for (k, x) in maps.iter().enumerate().skip(1) {
            let joint: Vec<f64> = fitness_all(x, &b)
                .unwrap()
                .iter()
                .zip(&exact.log_z)
                .zip(b.log_prior())
                .map(|((t, z), p)| t - z + p)
                .collect();
            let state = FilterState::from_parts(exact.log_z.clone(), log_sum_exp(&joint), None, 1, DEFAULT_DECAY).unwrap();
            let approx = filter_loss_grad_approx(x, FitTarget::Peak(x.argmax()), &state, &b).unwrap();
            let scale = exact.gradients[k].iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let dev = approx
                .iter()
                .zip(&exact.gradients[k])
                .map(|(a, e)| (a - e).abs())
                .fold(0.0, f64::max)
                / scale;
            assert!(dev < 1e-6, "map {k}: {dev}");
        }
    }
}

#[test]
fn state_follows_explicit_ema_recurrence() {
    let mut rng = ChaCha8Rng::seed_from_u64(27);
    let b = bank(3);
    let comps = b.components();
    let mut state = FilterState::with_decay(&b, 0.99).unwrap();
    let (mut z, mut px) = (vec![0.0; comps], 0.0);
    for step in 0..100 {
        let x = random_map(&mut rng, 3, 4.0);
        let w: Vec<f64> = (0..comps).map(|mu| trace_oracle(&x, &b.component(mu)).exp()).collect();
        if step == 0 {
            z = w.clone();
        } else {
            for (zi, wi) in z.iter_mut().zip(&w) {
                *zi = 0.99 * *zi + 0.01 * wi;
            }
        }
        let sample: f64 = (0..comps).map(|mu| b.prior()[mu] * w[mu] / z[mu]).sum();
        px = if step == 0 { sample } else { 0.99 * px + 0.01 * sample };
        state = update_state(&state, &x, &b).unwrap();
        for (a, o) in state.z_estimates().iter().zip(&z) {
            assert!(rel_error(*a, *o) < 1e-10, "step {step}");
        }
        assert!(rel_error(state.px_estimate(), px) < 1e-10);
    }
    assert_eq!(state.update_count(), 100);
}

#[test]
fn category_assignment_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(28);
    for _ in 0..20 {
        let mut acc = CategoryAccumulator::new(3);
        let mut sums = [0.0; 3];
        let mut counts = [0usize; 3];
        for _ in 0..30 {
            let c = rng.gen_range(0..3);
            let v = rng.gen_range(0.0..10.0);
            acc.record(c, v);
            sums[c] += v;
            counts[c] += 1;
        }
        let mut best = None;
        for c in 0..3 {
            if counts[c] == 0 {
                continue;
            }
            let m = sums[c] / counts[c] as f64;
            if best.is_none_or(|(_, bm)| m > bm) {
                best = Some((c, m));
            }
        }
        assert_eq!(acc.assign().unwrap(), best.unwrap().0);
    }
}

fn maps_strategy() -> impl Strategy<Value = (usize, Vec<Vec<f64>>)> {
    (3usize..=6, 2usize..=8).prop_flat_map(|(n, count)| {
        (Just(n), prop::collection::vec(prop::collection::vec(0.0f64..40.0, n * n), count))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn prior_is_normalized(n in 2usize..=16, alpha in 0.01f64..0.99) {
        let b = TemplateBank::build(n, 0.5 / (n * n) as f64, 4.0, alpha).unwrap();
        let total = b.prior_mass();
        prop_assert!((total - 1.0).abs() <= 1e-15);
    }

    #[test]
    fn template_depends_only_on_l1_offset(n in 2usize..=9, a in 0usize..81, c in 0usize..81) {
        let b = bank(n);
        let (mu, cell) = (a % (n * n), c % (n * n));
        let (mu, cell) = (Location::new(mu / n, mu % n), Location::new(cell / n, cell % n));
        let d = mu.l1(cell);
        // mirrored anchor and cell keep the offset norm
        let v = b.entry(mu.row * n + mu.col, cell.row, cell.col);
        let w = b.entry(mu.col * n + mu.row, cell.col, cell.row);
        prop_assert_eq!(v, w);
        let p = TemplateParams::defaults(n);
        prop_assert_eq!(v, p.tau * f64::max(1.0 - p.beta * d as f64 / n as f64, -1.0));
    }

    #[test]
    fn mask_keeps_aligned_peak(n in 3usize..=7, r in 0usize..7, c in 0usize..7, seed in any::<u64>()) {
        let b = bank(n);
        let mu = Location::new(r % n, c % n);
        let t = b.positive(mu);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v: Vec<f64> = t.iter().map(|&t| if t > 0.0 { rng.gen_range(0.0..1.0) } else { 0.0 }).collect();
        v[mu.row * n + mu.col] = 2.0;
        let x = FeatureMap::new(n, v).unwrap();
        let sel = apply_mask(&x, &b).unwrap();
        prop_assert_eq!(sel.mu_hat, mu);
        prop_assert_eq!(sel.masked.argmax(), mu);
    }

    #[test]
    fn loss_is_never_positive((n, raw) in maps_strategy()) {
        let b = bank(n);
        let maps: Vec<FeatureMap> = raw.into_iter().map(|v| FeatureMap::new(n, v).unwrap()).collect();
        let out = filter_loss_exact(&maps, &b).unwrap();
        prop_assert!(out.loss <= 1e-12);
        let d = decompose_loss(&maps, &b).unwrap();
        prop_assert!((d.reconstructed_loss - out.loss).abs() < 1e-9);
    }

    #[test]
    fn identical_likelihoods_give_zero_loss(n in 2usize..=6, count in 1usize..=6, seed in any::<u64>()) {
        let b = bank(n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_map(&mut rng, n, 10.0);
        let out = filter_loss_exact(&vec![x; count], &b).unwrap();
        prop_assert!(out.loss.abs() < 1e-12);
    }

    #[test]
    fn distinct_maps_give_negative_loss(n in 3usize..=6, seed in any::<u64>()) {
        let b = bank(n);
        let mut maps = vec![FeatureMap::zeros(n)];
        let mut v = vec![0.0; n * n];
        v[(seed % (n * n) as u64) as usize] = 50.0;
        maps.push(FeatureMap::new(n, v).unwrap());
        prop_assert!(filter_loss_exact(&maps, &b).unwrap().loss < -1e-6);
    }
}
