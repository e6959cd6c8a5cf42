use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{ForwardTrace, Network};
use crate::error::{Error, Result};
use crate::interp::{filter_loss_exact, filter_loss_grad_approx, CategoryAccumulator, FeatureMap, Phase};
use crate::ops::{task_loss, Label, Sgd, TaskLossKind};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    /// Proportionality constant of the filter-loss weight schedule.
    pub lambda_k: f64,
    /// When false the filter-loss gradient is never applied.
    pub filter_loss: bool,
    pub seed: u64,
    /// Worker threads for the per-image passes of a batch.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 40,
            batch_size: 16,
            lr: 0.02,
            momentum: 0.9,
            lambda_k: 10.0,
            filter_loss: true,
            seed: 1,
            threads: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid(format!("learning rate must be non-negative, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid(format!("momentum must lie in [0, 1), got {}", self.momentum)));
        }
        if !(self.lambda_k >= 0.0 && self.lambda_k.is_finite()) {
            return Err(Error::invalid(format!("lambda k must be non-negative, got {}", self.lambda_k)));
        }
        if self.threads == 0 {
            return Err(Error::invalid("thread count must be at least 1"));
        }
        Ok(())
    }
}

/// One training example.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub image: Tensor,
    pub label: Label,
}

impl Sample {
    pub fn category(&self) -> Option<usize> {
        match self.label {
            Label::Category(c) => Some(c),
            Label::Negative => None,
        }
    }
}

/// Per-epoch record; field order is the serialized key order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub task_loss: f64,
    pub filter_loss: f64,
    pub train_acc: f64,
    pub lambda: f64,
}

/// Scalars reported by one optimization step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepMetrics {
    pub task_loss: f64,
    /// Mean over filters of the exact filter loss on this batch's maps.
    pub filter_loss: f64,
    pub correct: usize,
}

/// Whether `logits` predicts `label`. The logistic kind with one output
/// reads the sign; otherwise the argmax, and negatives need every logit < 0.
pub fn is_correct(logits: &[f64], label: Label, kind: TaskLossKind) -> bool {
    let best = argmax(logits);
    match (label, kind) {
        (Label::Negative, _) => logits.iter().all(|&z| z < 0.0),
        (Label::Category(c), TaskLossKind::LogisticBinary) if logits.len() == 1 => c == 0 && logits[0] >= 0.0,
        (Label::Category(c), _) => best == c,
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Runs `f` over `items`, splitting contiguous chunks across `threads`
/// workers; results come back in input order.
fn par_map<T: Sync, R: Send>(items: &[T], threads: usize, f: impl Fn(&T) -> Result<R> + Sync) -> Result<Vec<R>> {
    if threads <= 1 || items.len() <= 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(threads);
    let f = &f;
    let parts: Vec<Result<Vec<R>>> = std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|c| s.spawn(move || c.iter().map(f).collect::<Result<Vec<R>>>()))
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let mut out = Vec::with_capacity(items.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// Mean of each map's peak over every filter of every interpretable layer.
fn mean_peak(traces: &[ForwardTrace]) -> f64 {
    let (mut sum, mut count) = (0.0, 0usize);
    for t in traces {
        for layer in &t.maps {
            for m in layer {
                sum += m.peak();
                count += 1;
            }
        }
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Training driver: owns the optimizer, the weight schedule and the
/// per-filter category statistics between batches.
pub struct Trainer {
    pub config: TrainConfig,
    sgd: Sgd,
    phase: Phase,
    lambda: f64,
    peak_sum: f64,
    peak_count: usize,
    accumulators: Vec<Vec<CategoryAccumulator>>,
    epoch: usize,
}

impl Trainer {
    pub fn new(net: &Network, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let c = net.spec().num_categories;
        let accumulators = net
            .interp
            .iter()
            .map(|l| (0..l.states.len()).map(|_| CategoryAccumulator::new(c)).collect())
            .collect();
        Ok(Self {
            sgd: Sgd::new(config.lr, config.momentum)?,
            config,
            phase: Phase::WarmUp,
            lambda: 0.0,
            peak_sum: 0.0,
            peak_count: 0,
            accumulators,
            epoch: 0,
        })
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn set_lambda(&mut self, lambda: f64) {
        self.lambda = lambda;
    }

    fn filter_active(&self) -> bool {
        self.config.filter_loss && self.lambda > 0.0
    }

    /// Forward pass over `data` that seeds the running partition estimates
    /// and the first epoch's weight.
    pub fn prime(&mut self, net: &mut Network, data: &[Sample]) -> Result<()> {
        if data.is_empty() {
            return Err(Error::Empty("training set"));
        }
        let mut peaks = 0.0;
        let mut count = 0usize;
        for chunk in data.chunks(self.config.batch_size) {
            let traces = par_map(chunk, self.config.threads, |s| net.forward_one(&s.image))?;
            peaks += mean_peak(&traces) * traces.len() as f64;
            count += traces.len();
            absorb(net, &traces)?;
        }
        self.lambda = self.config.lambda_k * peaks / count as f64;
        Ok(())
    }

    /// One optimization step on a batch; the filter states absorb the
    /// batch's maps afterwards.
    pub fn step(&mut self, net: &mut Network, batch: &[Sample]) -> Result<StepMetrics> {
        if batch.is_empty() {
            return Err(Error::Empty("batch"));
        }
        let threads = self.config.threads;
        let kind = net.spec().loss;
        let traces = par_map(batch, threads, |s| net.forward_one(&s.image))?;
        let k = traces[0].logits.len();
        let mut logits = Vec::with_capacity(batch.len() * k);
        for t in &traces {
            logits.extend_from_slice(t.logits.data());
        }
        let logits = Tensor::from_parts(vec![batch.len(), k], logits);
        let labels: Vec<Label> = batch.iter().map(|s| s.label).collect();
        let (loss, grad_logits) = task_loss(&logits, &labels, kind)?;
        if !loss.is_finite() {
            return Err(Error::Diverged(format!("task loss became {loss} at epoch {}", self.epoch + 1)));
        }
        let correct = (0..batch.len())
            .filter(|&i| is_correct(&logit_row(logits.data(), i, k), labels[i], kind))
            .count();

        let filter_loss = batch_filter_loss(net, &traces)?;
        if !filter_loss.is_finite() {
            return Err(Error::Diverged(format!("filter loss became {filter_loss} at epoch {}", self.epoch + 1)));
        }

        let map_grads: Vec<Vec<Option<Vec<f64>>>> = if self.filter_active() {
            let scale = self.lambda / batch.len() as f64;
            let phase = self.phase;
            let jobs: Vec<usize> = (0..batch.len()).collect();
            par_map(&jobs, threads, |&i| {
                filter_grads(net, &traces[i], batch[i].category(), phase, scale).map(|v| v.into_iter().map(Some).collect())
            })?
        } else {
            vec![Vec::new(); batch.len()]
        };

        let jobs: Vec<usize> = (0..batch.len()).collect();
        let grads = par_map(&jobs, threads, |&i| {
            net.backward_one(&traces[i], &grad_logits.data()[i * k..(i + 1) * k], &map_grads[i])
        })?;
        let mut total = grads[0].clone();
        for g in &grads[1..] {
            for (t, gi) in total.iter_mut().zip(g) {
                t.add_assign(gi)?;
            }
        }
        let names = net.param_names().to_vec();
        {
            let mut params: Vec<&mut Tensor> = net.params_mut().iter_mut().collect();
            self.sgd.step(&mut params, &total, &names).map_err(|e| match e {
                Error::NonFinite(d) => Error::Diverged(d),
                other => other,
            })?;
        }
        absorb(net, &traces)?;
        for (t, s) in traces.iter().zip(batch) {
            if let Some(c) = s.category() {
                for (accs, layer) in self.accumulators.iter_mut().zip(&t.maps) {
                    for (acc, m) in accs.iter_mut().zip(layer) {
                        acc.record(c, m.total());
                    }
                }
            }
        }
        self.peak_sum += mean_peak(&traces) * traces.len() as f64;
        self.peak_count += traces.len();
        Ok(StepMetrics {
            task_loss: loss,
            filter_loss,
            correct,
        })
    }

    /// End-of-epoch bookkeeping: reassigns target categories, enters the
    /// supervised phase and sets the next epoch's weight.
    pub fn finish_epoch(&mut self, net: &mut Network) -> Result<()> {
        self.epoch += 1;
        for (layer, accs) in net.interp.iter_mut().zip(self.accumulators.iter_mut()) {
            for (state, acc) in layer.states.iter_mut().zip(accs.iter_mut()) {
                if let Ok(c) = acc.assign() {
                    state.set_target_category(Some(c));
                }
                acc.clear();
            }
        }
        if net.interp.iter().all(|l| l.states.iter().all(|s| s.target_category().is_some())) {
            self.phase = Phase::Supervised;
        }
        let mean = if self.peak_count == 0 {
            0.0
        } else {
            self.peak_sum / self.peak_count as f64
        };
        self.lambda = self.config.lambda_k / (self.epoch + 1) as f64 * mean;
        self.peak_sum = 0.0;
        self.peak_count = 0;
        Ok(())
    }

    /// Runs one full epoch over `data` in a seeded shuffled order.
    pub fn run_epoch(&mut self, net: &mut Network, data: &[Sample]) -> Result<EpochLog> {
        if data.is_empty() {
            return Err(Error::Empty("training set"));
        }
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ (self.epoch as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        order.shuffle(&mut rng);
        let lambda = if self.config.filter_loss { self.lambda } else { 0.0 };
        let (mut task, mut filt, mut correct) = (0.0, 0.0, 0usize);
        for idx in order.chunks(self.config.batch_size) {
            let batch: Vec<Sample> = idx.iter().map(|&i| data[i].clone()).collect();
            let m = self.step(net, &batch)?;
            task += m.task_loss * batch.len() as f64;
            filt += m.filter_loss * batch.len() as f64;
            correct += m.correct;
        }
        let n = data.len() as f64;
        let log = EpochLog {
            epoch: self.epoch + 1,
            task_loss: task / n,
            filter_loss: filt / n,
            train_acc: correct as f64 / n,
            lambda,
        };
        self.finish_epoch(net)?;
        Ok(log)
    }
}

fn logit_row(data: &[f64], i: usize, k: usize) -> Vec<f64> {
    data[i * k..(i + 1) * k].to_vec()
}

fn absorb(net: &mut Network, traces: &[ForwardTrace]) -> Result<()> {
    for t in traces {
        for (layer, maps) in net.interp.iter_mut().zip(&t.maps) {
            for (state, m) in layer.states.iter_mut().zip(maps) {
                state.absorb(m, &layer.bank)?;
            }
        }
    }
    Ok(())
}

/// Mean over all interpretable filters of the exact filter loss of the batch.
fn batch_filter_loss(net: &Network, traces: &[ForwardTrace]) -> Result<f64> {
    let (mut sum, mut count) = (0.0, 0usize);
    for (l, layer) in net.interp.iter().enumerate() {
        for f in 0..layer.states.len() {
            let maps: Vec<FeatureMap> = traces.iter().map(|t| t.maps[l][f].clone()).collect();
            sum += filter_loss_exact(&maps, &layer.bank)?.loss;
            count += 1;
        }
    }
    Ok(if count == 0 { 0.0 } else { sum / count as f64 })
}

/// Filter-loss gradient at every interpretable layer's raw maps for one
/// image, scaled by `scale`.
fn filter_grads(
    net: &Network,
    trace: &ForwardTrace,
    category: Option<usize>,
    phase: Phase,
    scale: f64,
) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(net.interp.len());
    for (layer, maps) in net.interp.iter().zip(&trace.maps) {
        let cells = layer.bank.n() * layer.bank.n();
        let mut g = Vec::with_capacity(maps.len() * cells);
        for (state, m) in layer.states.iter().zip(maps) {
            let target = state.target_for(m, category, phase)?;
            g.extend(filter_loss_grad_approx(m, target, state, &layer.bank)?.into_iter().map(|v| v * scale));
        }
        out.push(g);
    }
    Ok(out)
}

/// Trains `net` from its current parameters; returns one log per epoch.
pub fn train(net: &mut Network, data: &[Sample], config: TrainConfig) -> Result<Vec<EpochLog>> {
    train_with(net, data, config, |_| Ok(()))
}

/// [`train`] with a callback after every epoch.
pub fn train_with(
    net: &mut Network,
    data: &[Sample],
    config: TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog) -> Result<()>,
) -> Result<Vec<EpochLog>> {
    if data.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let mut trainer = Trainer::new(net, config)?;
    trainer.prime(net, data)?;
    let mut logs = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        let log = trainer.run_epoch(net, data)?;
        on_epoch(&log)?;
        logs.push(log);
    }
    Ok(logs)
}

/// Fraction of `data` the network classifies correctly.
pub fn accuracy(net: &Network, data: &[Sample], threads: usize) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let kind = net.spec().loss;
    let hits = par_map(data, threads, |s| {
        let t = net.forward_one(&s.image)?;
        Ok(is_correct(t.logits.data(), s.label, kind))
    })?;
    Ok(hits.iter().filter(|&&h| h).count() as f64 / data.len() as f64)
}

/// Forward traces of every sample, in order.
pub fn record(net: &Network, images: &[Tensor], threads: usize) -> Result<Vec<ForwardTrace>> {
    par_map(images, threads, |img| net.forward_one(img))
}
