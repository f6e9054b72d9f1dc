//! Secure SGD with a plaintext fixed-point twin.

use std::ops::Range;
use std::time::Instant;

use falcon_core::nn::{quantize, Dataset, NetworkSpec, SecureNet, Weights};
use falcon_core::oracle::{oracle_argmax, FxNet};
use falcon_core::transport::Cost;
use falcon_core::{Error, PartyId, Result, RingParams};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::runner::Runner;

pub const MODEL_OWNER: PartyId = PartyId::ALL[0];
pub const DATA_OWNER: PartyId = PartyId::ALL[1];

#[derive(Clone, Debug, Serialize)]
pub struct TrainConfig {
    pub iters: usize,
    pub batch: usize,
    /// (first iteration, learning-rate shift) pairs in ascending order.
    pub lr: Vec<(usize, u32)>,
    pub seed: u64,
    /// Per weighted layer Xavier multipliers.
    pub init_scales: Vec<f64>,
    pub train: Range<usize>,
    pub test: Range<usize>,
    /// Evaluate after every this many iterations; 0 evaluates only at the end.
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iters: 200,
            batch: 32,
            lr: vec![(0, 6), (100, 8)],
            seed: 1,
            init_scales: vec![1.5, 1.5, 0.5],
            train: 0..8000,
            test: 8000..9000,
            eval_every: 50,
        }
    }
}

impl TrainConfig {
    pub fn lr_shift(&self, it: usize) -> u32 {
        self.lr.iter().rev().find(|(start, _)| it >= *start).map_or(0, |l| l.1)
    }

    /// Sample indices of every batch: a seeded reshuffle of the training
    /// range per epoch, with the tail of an epoch dropped.
    pub fn schedule(&self) -> Vec<Vec<usize>> {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed ^ 0x5eed_ba7c);
        let per_epoch = self.train.len() / self.batch.max(1);
        let mut out = Vec::with_capacity(self.iters);
        let mut order: Vec<usize> = Vec::new();
        for it in 0..self.iters {
            let k = it % per_epoch.max(1);
            if k == 0 {
                order = self.train.clone().collect();
                order.shuffle(&mut rng);
            }
            out.push(order[k * self.batch..(k + 1) * self.batch].to_vec());
        }
        out
    }

    /// Whether to snapshot after iteration `it` (1-based count of finished steps).
    fn evaluates(&self, done: usize) -> bool {
        done == self.iters || (self.eval_every > 0 && done.is_multiple_of(self.eval_every))
    }
}

/// Initial raw weights: scaled Xavier with zero biases.
pub fn initial_weights(spec: &NetworkSpec, cfg: &TrainConfig, params: &RingParams) -> Result<Weights<u64>> {
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let mut w = Weights::xavier(spec, &cfg.init_scales, &mut rng)?;
    for (l, p) in spec.layers.iter().zip(&mut w.layers) {
        if !matches!(l, falcon_core::nn::LayerSpec::BatchNorm) {
            p.b.iter_mut().for_each(|b| *b = 0.0);
        }
    }
    quantize(&w, params)
}

pub fn onehot(data: &Dataset, idx: &[usize], classes: usize, params: &RingParams) -> Vec<u64> {
    let one = params.constant(1.0);
    idx.iter()
        .flat_map(|&i| (0..classes).map(move |c| if c == data.labels[i] as usize { one } else { 0 }))
        .collect()
}

/// Held-out accuracy of raw weights, evaluated in the clear.
pub fn evaluate(spec: &NetworkSpec, params: RingParams, w: &Weights<u64>, data: &Dataset, range: Range<usize>) -> Result<f64> {
    let mut net = FxNet::new(spec, params, w)?;
    let idx: Vec<usize> = range.collect();
    let mut correct = 0;
    for chunk in idx.chunks(100) {
        let x: Vec<i64> = data.batch_raw(chunk, params.fp).iter().map(|&v| v as i64).collect();
        let y = net.forward(&x, chunk.len())?;
        for (k, &i) in chunk.iter().enumerate() {
            let (_, arg) = oracle_argmax(&y[k * spec.classes..(k + 1) * spec.classes]);
            correct += (arg == data.labels[i] as usize) as usize;
        }
    }
    Ok(correct as f64 / idx.len().max(1) as f64)
}

#[derive(Clone, Debug, Serialize)]
pub struct Checkpointed {
    pub iteration: usize,
    pub accuracy: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct TrainReport {
    pub network: String,
    pub threat: String,
    pub config: TrainConfig,
    pub curve: Vec<Checkpointed>,
    pub initial_accuracy: f64,
    pub final_accuracy: f64,
    #[serde(skip)]
    pub weights: Weights<u64>,
    pub cost: Cost,
    pub seconds: f64,
}

impl TrainReport {
    pub fn summary(&self) -> String {
        format!(
            "{} {}: {} iterations, batch {}, held-out accuracy {:.2}% (initial {:.2}%), {} rounds, {:.1} MB sent per party, {:.1}s",
            self.network,
            self.threat,
            self.config.iters,
            self.config.batch,
            self.final_accuracy * 100.0,
            self.initial_accuracy * 100.0,
            self.cost.rounds,
            self.cost.bytes as f64 / 1e6,
            self.seconds
        )
    }
}

fn at_iteration(e: Error, it: usize) -> Error {
    match e {
        Error::Abort { party, reason } => Error::Abort {
            party,
            reason: format!("iteration {it}: {reason}"),
        },
        e => e,
    }
}

/// Secure training: P1 holds the initial model, P2 the data. Weights are
/// opened only at evaluation points, and accuracy is measured in the clear.
pub fn train(runner: &Runner, spec: &NetworkSpec, data: &Dataset, cfg: &TrainConfig) -> Result<TrainReport> {
    let params = runner.session.params;
    let schedule = cfg.schedule();
    let init = initial_weights(spec, cfg, &params)?;
    let runner = runner.clone().with_context(&spec.digest());
    let t0 = Instant::now();
    let (snapshots, cost) = runner.run(|p| {
        let mut net = SecureNet::share(p, spec, MODEL_OWNER, (p.id == MODEL_OWNER).then_some(&init))?;
        let mut snaps = Vec::new();
        for (it, idx) in schedule.iter().enumerate() {
            let step = |p: &mut falcon_core::Party, net: &mut SecureNet| -> Result<()> {
                let mine = p.id == DATA_OWNER;
                let x = mine.then(|| data.batch_raw(idx, params.fp));
                let y = mine.then(|| onehot(data, idx, spec.classes, &params));
                let xs = p.share_input(DATA_OWNER, x.as_deref(), idx.len() * spec.input.len(), params.l())?;
                let ys = p.share_input(DATA_OWNER, y.as_deref(), idx.len() * spec.classes, params.l())?;
                let logits = net.forward(p, &xs, idx.len())?;
                let delta = p.loss_grad_approx(&logits, &ys, spec.classes)?;
                let grads = net.backward(p, &delta)?;
                net.sgd_step(p, &grads, cfg.lr_shift(it))
            };
            step(p, &mut net).map_err(|e| at_iteration(e, it))?;
            if cfg.evaluates(it + 1) {
                let w = net.reveal_weights(p).map_err(|e| at_iteration(e, it))?;
                snaps.push((it + 1, w));
            }
        }
        if snaps.is_empty() {
            snaps.push((0, net.reveal_weights(p)?));
        }
        Ok((snaps, p.cost()))
    })?;
    let seconds = t0.elapsed().as_secs_f64();
    let mut curve = Vec::new();
    for (iteration, w) in &snapshots {
        curve.push(Checkpointed {
            iteration: *iteration,
            accuracy: evaluate(spec, params, w, data, cfg.test.clone())?,
        });
    }
    Ok(TrainReport {
        network: spec.name.clone(),
        threat: runner.session.threat.to_string(),
        config: cfg.clone(),
        initial_accuracy: evaluate(spec, params, &init, data, cfg.test.clone())?,
        final_accuracy: curve.last().map_or(0.0, |c| c.accuracy),
        curve,
        weights: snapshots.into_iter().last().map(|s| s.1).unwrap_or(init),
        cost,
        seconds,
    })
}

/// The same schedule run on the plaintext fixed-point twin.
pub fn train_oracle(spec: &NetworkSpec, params: RingParams, data: &Dataset, cfg: &TrainConfig) -> Result<Weights<u64>> {
    let mut net = FxNet::new(spec, params, &initial_weights(spec, cfg, &params)?)?;
    for (it, idx) in cfg.schedule().iter().enumerate() {
        let x: Vec<i64> = data.batch_raw(idx, params.fp).iter().map(|&v| v as i64).collect();
        let y: Vec<i64> = onehot(data, idx, spec.classes, &params).iter().map(|&v| v as i64).collect();
        let logits = net.forward(&x, idx.len())?;
        let delta = net.fx.loss_grad(&logits, &y, spec.classes)?;
        let grads = net.backward(&delta)?;
        net.sgd_step(&grads, cfg.lr_shift(it));
    }
    Ok(net.raw_weights())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_is_deterministic_and_in_range() {
        let cfg = TrainConfig {
            iters: 10,
            batch: 4,
            train: 0..20,
            ..TrainConfig::default()
        };
        let a = cfg.schedule();
        assert_eq!(a, cfg.schedule());
        assert_eq!(a.len(), 10);
        assert!(a.iter().flatten().all(|&i| i < 20));
        let epoch: std::collections::BTreeSet<usize> = a[..5].iter().flatten().copied().collect();
        assert_eq!(epoch.len(), 20);
    }

    #[test]
    fn lr_schedule_steps() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.lr_shift(0), 6);
        assert_eq!(cfg.lr_shift(99), 6);
        assert_eq!(cfg.lr_shift(100), 8);
    }
}
