//! Secure inference against the float reference.

use std::time::Instant;

use falcon_core::nn::{quantize, Dataset, NetworkSpec, SecureNet, Weights};
use falcon_core::oracle::{argmax_f64, FloatNet};
use falcon_core::transport::Cost;
use falcon_core::{PartyId, Result};
use serde::Serialize;

use crate::runner::Runner;

/// The model owner; the data owner is the next party.
pub const MODEL_OWNER: PartyId = PartyId::ALL[0];
pub const DATA_OWNER: PartyId = PartyId::ALL[1];

#[derive(Clone, Debug, Serialize)]
pub struct ImageResult {
    pub index: usize,
    pub label: u8,
    pub secure: usize,
    pub float: usize,
    pub relative_error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct InferReport {
    pub network: String,
    pub threat: String,
    pub images: Vec<ImageResult>,
    pub agreement: usize,
    pub correct: usize,
    pub mean_relative_error: f64,
    /// Everything sent, preprocessing and verification included.
    pub cost: Cost,
    /// Online forward pass only.
    pub online: Cost,
    pub seconds: f64,
}

impl InferReport {
    pub fn summary(&self) -> String {
        let n = self.images.len();
        format!(
            "{} {}: agreement {}/{n}, secure accuracy {}/{n}, mean relative error {:.4}%, online {} rounds {:.3} MB, total {:.3} MB sent per party, {:.2}s",
            self.network,
            self.threat,
            self.agreement,
            self.correct,
            self.mean_relative_error * 100.0,
            self.online.rounds,
            self.online.bytes as f64 / 1e6,
            self.cost.bytes as f64 / 1e6,
            self.seconds
        )
    }
}

/// ‖a − b‖₂ / ‖b‖₂.
pub fn relative_error(secure: &[f64], reference: &[f64]) -> f64 {
    let num: f64 = secure.iter().zip(reference).map(|(a, b)| (a - b).powi(2)).sum();
    let den: f64 = reference.iter().map(|b| b * b).sum();
    (num / den.max(f64::MIN_POSITIVE)).sqrt()
}

/// Classifies `indices` of `data` in batches of `batch` with the weights held
/// by the model owner, and compares with the float network on the same weights.
pub fn infer(
    runner: &Runner,
    spec: &NetworkSpec,
    weights: &Weights<f64>,
    data: &Dataset,
    indices: &[usize],
    batch: usize,
) -> Result<InferReport> {
    let params = runner.session.params;
    let raw = quantize(weights, &params)?;
    let secure_spec = spec.optimized();
    let runner = runner.clone().with_context(&spec.digest());
    let t0 = Instant::now();
    let (logits, cost, online) = runner.run(|p| {
        let w = (p.id == MODEL_OWNER).then_some(&raw);
        let mut net = SecureNet::share(p, &secure_spec, MODEL_OWNER, w)?;
        let mut out = Vec::with_capacity(indices.len() * spec.classes);
        for chunk in indices.chunks(batch.max(1)) {
            let x = (p.id == DATA_OWNER).then(|| data.batch_raw(chunk, params.fp));
            let len = chunk.len() * spec.input.len();
            let xs = p.share_input(DATA_OWNER, x.as_deref(), len, params.l())?;
            let y = net.forward(p, &xs, chunk.len())?;
            out.extend(p.reveal_fixed(&y)?);
        }
        Ok((out, p.cost(), p.cost_of("forward")))
    })?;
    let seconds = t0.elapsed().as_secs_f64();
    let mut float = FloatNet::new(spec, weights.clone())?;
    let mut images = Vec::with_capacity(indices.len());
    for (chunk, sec) in indices.chunks(batch.max(1)).zip(logits.chunks(batch.max(1) * spec.classes)) {
        let reference = float.forward(&data.batch(chunk), chunk.len())?;
        for (k, &i) in chunk.iter().enumerate() {
            let s = &sec[k * spec.classes..(k + 1) * spec.classes];
            let f = &reference[k * spec.classes..(k + 1) * spec.classes];
            images.push(ImageResult {
                index: i,
                label: data.labels[i],
                secure: argmax_f64(s),
                float: argmax_f64(f),
                relative_error: relative_error(s, f),
            });
        }
    }
    let n = images.len().max(1) as f64;
    Ok(InferReport {
        network: spec.name.clone(),
        threat: runner.session.threat.to_string(),
        agreement: images.iter().filter(|r| r.secure == r.float).count(),
        correct: images.iter().filter(|r| r.secure == r.label as usize).count(),
        mean_relative_error: images.iter().map(|r| r.relative_error).sum::<f64>() / n,
        images,
        cost,
        online,
        seconds,
    })
}
