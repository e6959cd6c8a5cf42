use gbx_core::checkpoint;
use gbx_core::interp::{apply_mask, filter_loss_exact, filter_loss_surrogate, FeatureMap};
use gbx_core::net::*;
use gbx_core::ops::{task_loss, Label, TaskLossKind};
use gbx_core::synth::{generate, generate_range, GeneratorConfig, SyntheticScene};
use gbx_core::verify::rel_error;
use gbx_core::Tensor;

fn samples(scenes: &[SyntheticScene]) -> Vec<Sample> {
    scenes
        .iter()
        .map(|s| Sample {
            image: s.image(),
            label: s.category.map_or(Label::Negative, Label::Category),
        })
        .collect()
}

fn small_set(count: usize) -> Vec<Sample> {
    samples(&generate(&GeneratorConfig { seed: 8, ..GeneratorConfig::default() }, count).unwrap())
}

fn quick(epochs: usize) -> TrainConfig {
    TrainConfig { epochs, ..TrainConfig::default() }
}

fn plain_cnn(mut spec: ArchitectureSpec) -> ArchitectureSpec {
    spec.layers = spec
        .layers
        .into_iter()
        .filter(|l| *l != LayerSpec::Mask)
        .map(|l| match l {
            LayerSpec::InterpConv { filters, kernel, stride, pad } => LayerSpec::Conv { filters, kernel, stride, pad },
            other => other,
        })
        .collect();
    spec
}

#[test]
fn zero_weight_without_masks_matches_plain_cnn_bitwise() {
    let data = small_set(48);
    let mut spec = ArchitectureSpec::desk_default(6, TaskLossKind::SoftmaxMulticlass);
    spec.masks = false;
    let mut interp = Network::new(spec.clone(), 4).unwrap();
    let mut plain = Network::new(plain_cnn(spec), 4).unwrap();
    assert!(plain.interp.is_empty());
    let cfg = TrainConfig { lambda_k: 0.0, ..quick(2) };
    let a = train(&mut interp, &data, cfg).unwrap();
    let b = train(&mut plain, &data, TrainConfig { filter_loss: false, ..cfg }).unwrap();
    assert_eq!(interp.params(), plain.params());
    let task = |l: &[EpochLog]| l.iter().map(|e| (e.task_loss, e.train_acc)).collect::<Vec<_>>();
    assert_eq!(task(&a), task(&b));
}

#[test]
fn zero_weight_matches_filter_loss_free_run() {
    let data = small_set(48);
    let spec = ArchitectureSpec::desk_default(6, TaskLossKind::SoftmaxMulticlass);
    let mut a = Network::new(spec.clone(), 5).unwrap();
    let mut b = Network::new(spec, 5).unwrap();
    train(&mut a, &data, TrainConfig { lambda_k: 0.0, ..quick(2) }).unwrap();
    train(&mut b, &data, TrainConfig { filter_loss: false, ..quick(2) }).unwrap();
    assert_eq!(a.params(), b.params());
}

#[test]
fn zero_learning_rate_leaves_parameters() {
    let data = small_set(24);
    let spec = ArchitectureSpec::desk_default(6, TaskLossKind::SoftmaxMulticlass);
    let mut net = Network::new(spec, 6).unwrap();
    let before = net.params().to_vec();
    train(&mut net, &data, TrainConfig { lr: 0.0, ..quick(1) }).unwrap();
    assert_eq!(net.params(), &before[..]);
}

#[test]
fn training_is_deterministic_across_thread_counts() {
    let data = small_set(40);
    let spec = ArchitectureSpec::desk_default(6, TaskLossKind::SoftmaxMulticlass);
    let run = |threads| {
        let mut net = Network::new(spec.clone(), 7).unwrap();
        let log = train(&mut net, &data, TrainConfig { threads, ..quick(3) }).unwrap();
        (log, net)
    };
    let (l1, n1) = run(1);
    let (l2, n2) = run(1);
    let (l3, n3) = run(3);
    assert_eq!(l1, l2);
    assert_eq!(l1, l3);
    assert_eq!(n1, n2);
    assert_eq!(n1, n3);
    assert!(l1.iter().all(|e| e.filter_loss <= 1e-12));
}

#[test]
fn recorded_masks_equal_recomputed_masks() {
    let data = small_set(12);
    let mut net = Network::new(ArchitectureSpec::desk_two_layer(6, TaskLossKind::SoftmaxMulticlass), 2).unwrap();
    train(&mut net, &data, quick(1)).unwrap();
    let images: Vec<Tensor> = data.iter().map(|s| s.image.clone()).collect();
    for t in record(&net, &images, 2).unwrap() {
        assert_eq!(t.maps.len(), 2);
        for (l, layer) in net.interp.iter().enumerate() {
            for (m, sel) in t.maps[l].iter().zip(&t.selections[l]) {
                assert_eq!(*sel, apply_mask(m, &layer.bank).unwrap());
                assert!(sel.masked.values().iter().all(|&v| v >= 0.0));
            }
        }
    }
}

#[test]
fn zero_injected_map_gradients_change_nothing() {
    let net = Network::new(ArchitectureSpec::desk_default(6, TaskLossKind::SoftmaxMulticlass), 3).unwrap();
    let img = small_set(1).remove(0).image;
    let trace = net.forward_one(&img).unwrap();
    let g = [0.3, -0.1, 0.2, 0.0, -0.4, 0.05];
    let cells = 16 * 36;
    let a = net.backward_one(&trace, &g, &[None]).unwrap();
    let b = net.backward_one(&trace, &g, &[Some(vec![0.0; cells])]).unwrap();
    assert_eq!(a, b);
}

fn toy_spec() -> ArchitectureSpec {
    ArchitectureSpec {
        input: [1, 6, 6],
        layers: vec![
            LayerSpec::InterpConv { filters: 2, kernel: 3, stride: 1, pad: 0 },
            LayerSpec::Relu,
            LayerSpec::Mask,
            LayerSpec::Fc { outputs: 2 },
        ],
        num_categories: 2,
        loss: TaskLossKind::SoftmaxMulticlass,
        masks: true,
        normalize_mask: true,
        templates: TemplateConfig::default(),
    }
}

// task loss over the batch plus λ times every filter's frozen-partition loss
fn combined_loss(net: &Network, images: &[Tensor], labels: &[Label], lambda: f64, log_z: &[Vec<f64>]) -> f64 {
    let traces: Vec<ForwardTrace> = images.iter().map(|i| net.forward_one(i).unwrap()).collect();
    let logits: Vec<f64> = traces.iter().flat_map(|t| t.logits.data().to_vec()).collect();
    let (task, _) = task_loss(&Tensor::new(&[images.len(), 2], logits).unwrap(), labels, TaskLossKind::SoftmaxMulticlass).unwrap();
    let bank = &net.interp[0].bank;
    let filt: f64 = (0..2)
        .map(|f| {
            let maps: Vec<FeatureMap> = traces.iter().map(|t| t.maps[0][f].clone()).collect();
            filter_loss_surrogate(&maps, bank, &log_z[f]).unwrap()
        })
        .sum();
    task + lambda * filt
}

#[test]
fn combined_gradient_matches_finite_differences_on_toy_net() {
    let images: Vec<Tensor> = (0..3)
        .map(|k| Tensor::new(&[1, 6, 6], (0..36).map(|v| ((v * 7 + k * 5) % 11) as f64 / 3.0).collect()).unwrap())
        .collect();
    let labels = vec![Label::Category(0), Label::Category(1), Label::Category(0)];
    let lambda = 0.7;
    let net = Network::new(toy_spec(), 9).unwrap();
    let bank = net.interp[0].bank.clone();
    let traces: Vec<ForwardTrace> = images.iter().map(|i| net.forward_one(i).unwrap()).collect();
    let logits: Vec<f64> = traces.iter().flat_map(|t| t.logits.data().to_vec()).collect();
    let (_, gl) = task_loss(&Tensor::new(&[3, 2], logits).unwrap(), &labels, TaskLossKind::SoftmaxMulticlass).unwrap();
    let mut log_z = Vec::new();
    let mut per_image: Vec<Vec<f64>> = vec![Vec::new(); 3];
    for f in 0..2 {
        let maps: Vec<FeatureMap> = traces.iter().map(|t| t.maps[0][f].clone()).collect();
        let exact = filter_loss_exact(&maps, &bank).unwrap();
        for (img, g) in exact.gradients.iter().enumerate() {
            per_image[img].extend(g.iter().map(|v| v * lambda));
        }
        log_z.push(exact.log_z);
    }
    let mut total: Vec<Tensor> = net.params().iter().map(|p| Tensor::zeros(p.shape())).collect();
    for (i, t) in traces.iter().enumerate() {
        let g = net.backward_one(t, &gl.data()[i * 2..i * 2 + 2], &[Some(per_image[i].clone())]).unwrap();
        for (a, b) in total.iter_mut().zip(&g) {
            a.add_assign(b).unwrap();
        }
    }
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for (p, grad) in total.iter().enumerate() {
        for k in 0..grad.len() {
            let shifted = |d: f64| {
                let mut n = net.clone();
                let mut params = n.params().to_vec();
                params[p].data_mut()[k] += d;
                n.set_params(params).unwrap();
                combined_loss(&n, &images, &labels, lambda, &log_z)
            };
            let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
            worst = worst.max(rel_error(grad.data()[k], fd));
        }
    }
    assert!(worst < 1e-4, "max relative error {worst}");
}

#[test]
fn binary_task_reaches_high_training_accuracy() {
    let config = GeneratorConfig {
        seed: 13,
        categories: vec![gbx_core::synth::default_archetypes().remove(0)],
        negatives: true,
        ..GeneratorConfig::default()
    };
    let data = samples(&generate(&config, 160).unwrap());
    let spec = ArchitectureSpec::desk_default(1, TaskLossKind::LogisticBinary);
    let mut net = Network::new(spec, 1).unwrap();
    // the default k is tuned for six categories and swamps the binary task
    let logs = train(&mut net, &data, TrainConfig { lambda_k: 1.0, ..quick(30) }).unwrap();
    let last = logs.last().unwrap();
    eprintln!("binary task: final training accuracy {:.3}", last.train_acc);
    assert!(last.train_acc > 0.9);
    let held = samples(&generate_range(&config, 1000, 100).unwrap());
    eprintln!("binary task: held-out accuracy {:.3}", accuracy(&net, &held, 1).unwrap());
}

#[test]
fn two_layer_network_trains_and_round_trips() {
    let data = small_set(24);
    let mut net = Network::new(ArchitectureSpec::desk_two_layer(6, TaskLossKind::SoftmaxMulticlass), 10).unwrap();
    let logs = train(&mut net, &data, quick(2)).unwrap();
    assert!(logs.iter().all(|l| l.task_loss.is_finite()));
    assert!(net.interp.iter().all(|l| l.states.iter().all(|s| s.target_category().is_some())));
    let bytes = checkpoint::encode(&net, 2, serde_json::json!({"note": "two-layer"}));
    let (back, info) = checkpoint::decode(&bytes).unwrap();
    assert_eq!(back, net);
    assert_eq!(info.epoch, 2);
    assert_eq!(checkpoint::encode(&back, 2, info.meta), bytes);
}

#[test]
fn empty_dataset_is_rejected() {
    let mut net = Network::new(ArchitectureSpec::desk_default(6, TaskLossKind::SoftmaxMulticlass), 1).unwrap();
    assert!(train(&mut net, &[], quick(1)).is_err());
}
