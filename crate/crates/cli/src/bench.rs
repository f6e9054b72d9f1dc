//! Protocol micro-benchmarks against the closed-form cost model.

use std::time::Instant;

use falcon_core::transport::Cost;
use falcon_core::{Error, Party, PartyId, Result, RingParams, Shares};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::costmodel::{predicted, Dims, Predicted};
use crate::runner::Runner;

pub const PROTOCOLS: &[&str] = &[
    "matmul", "mult", "pc", "wa", "drelu", "relu", "maxpool", "pow", "div", "bn", "trunc",
];

#[derive(Clone, Debug, Serialize)]
pub struct BenchRow {
    pub protocol: String,
    pub threat: String,
    pub ell: u32,
    pub dims: Dims,
    /// Online rounds of the slowest party.
    pub rounds: u64,
    /// Online payload bytes sent by the busiest party.
    pub bytes: u64,
    /// Bytes sent by each local party, in party order.
    pub bytes_per_party: Vec<u64>,
    pub prep_bytes: u64,
    pub verify_bytes: u64,
    pub seconds: f64,
    pub predicted: Option<Predicted>,
}

impl BenchRow {
    pub fn round_ratio(&self) -> Option<f64> {
        self.predicted.map(|p| self.rounds as f64 / p.rounds as f64)
    }

    pub fn byte_ratio(&self) -> Option<f64> {
        self.predicted.map(|p| self.bytes as f64 / p.bytes as f64)
    }

    pub fn line(&self) -> String {
        let d = match self.dims {
            Dims::N(n) => format!("n={n}"),
            Dims::MatMul(x, y, z) => format!("{x}x{y}*{y}x{z}"),
            Dims::Pool(n, w, h) => format!("n={n} {w}x{h}"),
            Dims::Batch(r, n) => format!("r={r} n={n}"),
        };
        let mut s = format!(
            "{:<8} {:<12} l={:<2} {:<14} rounds {:>5} bytes {:>9} wall {:>8.4}s",
            self.protocol, self.threat, self.ell, d, self.rounds, self.bytes, self.seconds
        );
        if let Some(p) = self.predicted {
            s += &format!(
                " | model rounds {:>5} bytes {:>9} | ratio {:.2} {:.2}",
                p.rounds,
                p.bytes,
                self.round_ratio().unwrap_or(0.0),
                self.byte_ratio().unwrap_or(0.0)
            );
        }
        s
    }
}

/// Default sizes per protocol for a vector length `n`.
pub fn default_dims(protocol: &str, n: usize) -> Dims {
    match protocol {
        "matmul" => Dims::MatMul(4, 4, 4),
        "maxpool" => Dims::Pool(n, 2, 2),
        "bn" => Dims::Batch(n, 8),
        _ => Dims::N(n),
    }
}

fn random_inputs(protocol: &str, dims: Dims, seed: u64, params: RingParams) -> Vec<u64> {
    let mut r = ChaCha20Rng::seed_from_u64(seed);
    let one = 1u64 << params.fp;
    let mask = params.l().mask();
    let len = match dims {
        Dims::N(n) => n,
        Dims::MatMul(x, y, z) => x * y + y * z,
        Dims::Pool(n, w, h) => n * w * h,
        Dims::Batch(r, n) => r * n,
    };
    let positive = protocol == "pow" || protocol == "div";
    (0..len)
        .map(|_| {
            if positive {
                // operands in [0.05, 8)
                r.gen_range(one / 20..8 * one)
            } else {
                // squares in batch norm must stay inside the truncation range
                let v = r.gen_range(0..if protocol == "bn" { one } else { 16 * one });
                if r.gen() { v } else { v.wrapping_neg() & mask }
            }
        })
        .collect()
}

fn run_protocol(p: &mut Party, protocol: &str, dims: Dims, x: &Shares) -> Result<()> {
    let l = p.params.l();
    match (protocol, dims) {
        ("matmul", Dims::MatMul(a, b, c)) => {
            let (u, v) = (x.slice(0, a * b), x.slice(a * b, a * b + b * c));
            p.matmul(&u, &v, a, b, c)?;
        }
        ("mult", _) => {
            p.mult(x, x)?;
        }
        ("pc", Dims::N(n)) => {
            let ell = p.params.ell as usize;
            let bits: Vec<u64> = (0..n * ell).map(|k| x_bits(&x_plain(n), k, ell)).collect();
            let own = (p.id == PartyId::ALL[0]).then_some(&bits[..]);
            let b = p.share_input(PartyId::ALL[0], own, bits.len(), p.params.zp())?;
            let t: Vec<u64> = (0..n as u64).map(|i| i.wrapping_mul(0x9e37_79b9) & l.mask()).collect();
            p.reset_meter();
            p.compare_public(&b, ell, &t)?;
        }
        ("wa", _) => {
            p.wrap3(x)?;
        }
        ("drelu", _) => {
            p.drelu(x)?;
        }
        ("relu", _) => {
            p.relu(x)?;
        }
        ("maxpool", Dims::Pool(n, w, h)) => {
            p.maxpool_argmax(x, n, w * h)?;
        }
        ("pow", _) => {
            p.bounding_power(x)?;
        }
        ("div", Dims::N(n)) => {
            let a = p.public(l, &vec![p.params.constant(1.0); n]);
            p.divide(&a, x)?;
        }
        ("bn", Dims::Batch(r, n)) => {
            let g = p.public(l, &vec![p.params.constant(1.0); r]);
            let b = p.public(l, &vec![0; r]);
            p.batch_norm_forward(x, n, r, &g, &b)?;
        }
        ("trunc", _) => {
            p.truncate(x, p.params.fp)?;
        }
        _ => return Err(Error::Config(format!("unknown benchmark {protocol} for {dims:?}"))),
    }
    Ok(())
}

fn x_plain(n: usize) -> Vec<u64> {
    (0..n as u64).map(|i| i.wrapping_mul(0x2545_f491_4f6c_dd1d)).collect()
}

fn x_bits(x: &[u64], k: usize, ell: usize) -> u64 {
    x[k / ell] >> (k % ell) & 1
}

pub fn bench(runner: &Runner, protocol: &str, dims: Dims) -> Result<BenchRow> {
    if !PROTOCOLS.contains(&protocol) {
        return Err(Error::Config(format!(
            "unknown protocol {protocol}; choose from {}",
            PROTOCOLS.join(", ")
        )));
    }
    let s = &runner.session;
    let inputs = random_inputs(protocol, dims, s.seed, s.params);
    let n = inputs.len();
    let outs = runner.run_parties(|p| {
        let own = (p.id == PartyId::ALL[0]).then_some(&inputs[..]);
        let x = p.share_input(PartyId::ALL[0], own, n, p.params.l())?;
        p.verify()?;
        p.reset_meter();
        let t0 = Instant::now();
        run_protocol(p, protocol, dims, &x)?;
        p.verify()?;
        let secs = t0.elapsed().as_secs_f64();
        Ok((p.cost_of(protocol), p.cost_of("prep"), p.cost_of("verify"), secs))
    })?;
    let pick = |f: fn(&(Cost, Cost, Cost, f64)) -> u64| outs.iter().map(|(_, o)| f(o)).max().unwrap_or(0);
    Ok(BenchRow {
        protocol: protocol.into(),
        threat: s.threat.to_string(),
        ell: s.params.ell,
        dims,
        rounds: pick(|o| o.0.rounds),
        bytes: pick(|o| o.0.bytes),
        bytes_per_party: outs.iter().map(|(_, o)| o.0.bytes).collect(),
        prep_bytes: pick(|o| o.1.bytes),
        verify_bytes: pick(|o| o.2.bytes),
        seconds: outs.iter().map(|(_, o)| o.3).fold(0.0, f64::max),
        predicted: predicted(protocol, s.params.ell, dims, s.threat),
    })
}
