//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Runs without the libtest harness so the report is always printed. The
//! process fails only when a criterion outside `KNOWN_GAPS` fails; the gaps
//! are still evaluated in full and reported as FAIL.
//!
//! Pass criterion ids as arguments to run a subset, e.g. `-- 1 3a 7`.

use std::path::{Path, PathBuf};
use std::time::Instant;

use falcon_cli::bench::{bench, default_dims, BenchRow};
use falcon_cli::costmodel::Dims;
use falcon_cli::infer::infer;
use falcon_cli::reference;
use falcon_cli::runner::Runner;
use falcon_cli::train::{train, train_oracle, TrainConfig};
use falcon_core::harness::{run_each, run_local, Backend};
use falcon_core::nn::{load_dataset, quantize, Checkpoint, Dataset, NetworkSpec, SecureNet};
use falcon_core::oracle::{oracle_argmax, oracle_compare, oracle_drelu, oracle_wrap3};
use falcon_core::protocols::BN_EPSILON;
use falcon_core::rings::{to_signed, Modulus};
use falcon_core::transport::Tamper;
use falcon_core::{Party, PartyId, Result, RingParams, SessionConfig, Shares, ThreatModel};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Criteria this implementation does not meet. They are run and printed like
/// the rest; only an unexpected failure fails the process.
const KNOWN_GAPS: &[&str] = &["3b", "5 inv_sqrt f13", "10 bytes"];

struct Report {
    lines: Vec<(String, bool)>,
    only: Vec<String>,
}

impl Report {
    fn wants(&self, id: &str) -> bool {
        let major = id.split(|c: char| !c.is_ascii_digit()).next().unwrap_or(id);
        self.only.is_empty() || self.only.iter().any(|o| o == id || o == major)
    }

    fn record(&mut self, id: &str, pass: bool, detail: String) {
        println!("{} {id}: {detail}", if pass { "PASS" } else { "FAIL" });
        self.lines.push((id.to_string(), pass));
    }

    fn run(&mut self, id: &str, f: impl FnOnce() -> Result<(bool, String)>) {
        if !self.wants(id) {
            return;
        }
        let t0 = Instant::now();
        match f() {
            Ok((pass, detail)) => self.record(id, pass, format!("{detail} [{:.1}s]", t0.elapsed().as_secs_f64())),
            Err(e) => self.record(id, false, format!("error: {e}")),
        }
    }
}

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn params(ell: u32, fp: u32) -> RingParams {
    RingParams::with_bits(ell, fp).unwrap()
}

fn session(ell: u32, fp: u32, threat: ThreatModel, seed: u64) -> SessionConfig {
    SessionConfig::new(params(ell, fp), threat).with_seed(seed)
}

/// P1 shares each input vector, `body` runs, and all outputs are revealed.
/// Returns the revealed outputs after checking every party saw the same.
fn eval<T, F>(cfg: &SessionConfig, m: Modulus, inputs: &[Vec<u64>], body: F) -> Result<T>
where
    T: Send + PartialEq + std::fmt::Debug,
    F: Fn(&mut Party, &[Shares]) -> Result<T> + Sync,
{
    let outs = run_local(cfg, |p| {
        let mut xs = Vec::new();
        for v in inputs {
            let own = (p.id == PartyId::ALL[0]).then_some(&v[..]);
            xs.push(p.share_input(PartyId::ALL[0], own, v.len(), m)?);
        }
        body(p, &xs)
    })?;
    assert!(outs[0] == outs[1] && outs[1] == outs[2], "parties disagree on outputs");
    Ok(outs.into_iter().next().unwrap())
}

fn reveal_all(p: &mut Party, ys: &[Shares]) -> Result<Vec<Vec<u64>>> {
    ys.iter().map(|y| p.reveal(y)).collect()
}

fn log_uniform(r: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    r.gen_range(lo.ln()..hi.ln()).exp()
}

fn c1() -> Result<(bool, String)> {
    let mut failures = 0;
    let mut total = 0;
    for seed in 1..=4u64 {
        let cfg = session(8, 4, ThreatModel::SemiHonest, seed);
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let rs: Vec<u64> = (0..64).map(|_| r.gen_range(0..256)).collect();
        let mut bits = Vec::new();
        let mut ts = Vec::new();
        for x in 0..256u64 {
            for &t in &rs {
                bits.extend((0..8).map(|i| (x >> i) & 1));
                ts.push(t);
            }
        }
        let out = eval(&cfg, cfg.params.zp(), &[bits], |p, s| {
            let y = p.compare_public(&s[0], 8, &ts)?;
            p.reveal(&y)
        })?;
        for (k, &got) in out.iter().enumerate() {
            let (x, t) = ((k / 64) as u128, ts[k] as u128);
            failures += (got != oracle_compare(x, t) as u64) as usize;
            total += 1;
        }
    }
    Ok((failures == 0, format!("private compare at l=8 p=37: {failures} failures in {total} (x, r) pairs over 4 seeds")))
}

fn wrap_case(ell: u32, n: usize, seed: u64) -> Result<(usize, usize)> {
    let cfg = session(ell, if ell >= 32 { 13 } else { 4 }, ThreatModel::SemiHonest, seed);
    let l = cfg.params.l();
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let vals: Vec<u64> = (0..n).map(|_| r.gen::<u64>() & l.mask()).collect();
    let (comps, theta, betas, eta, alpha, xc, delta) = eval(&cfg, l, &[vals], |p, s| {
        let comps = p.open_components(&s[0])?;
        let wr = p.wrap_rand(n)?;
        let cr = p.compare_rand(n)?;
        let parts = p.wrap3_parts(&s[0], &wr, &cr)?;
        let theta = p.open(&parts.theta)?;
        let betas: Vec<Vec<u64>> = parts.beta.iter().map(|b| p.open(b)).collect::<Result<_>>()?;
        let eta = p.open(&parts.eta)?;
        let alpha = p.open(&parts.alpha)?;
        let xc = p.open_components(&wr.x)?;
        Ok((comps, theta, betas, eta, alpha, xc, parts.delta))
    })?;
    let modulus = 1u128 << ell;
    let (mut wrong, mut identity) = (0, 0);
    for k in 0..n {
        let want = oracle_wrap3(comps[0][k], comps[1][k], comps[2][k], modulus) as u64;
        wrong += (theta[k] != want) as usize;
        let sum = betas[0][k] ^ betas[1][k] ^ betas[2][k] ^ delta[k] ^ eta[k] ^ alpha[k];
        identity += (sum != theta[k]) as usize;
        identity += (alpha[k] != oracle_wrap3(xc[0][k], xc[1][k], xc[2][k], modulus) as u64) as usize;
    }
    Ok((wrong, identity))
}

fn c2() -> Result<(bool, String)> {
    let (w16, i16) = wrap_case(16, 10_000, 16)?;
    let (w32, i32_) = wrap_case(32, 10_000, 32)?;
    let pass = w16 + w32 + i16 + i32_ == 0;
    Ok((
        pass,
        format!("wrap3 vs exact over 10^4 sharings: l=16 {w16} failures, l=32 {w32}; decomposition identity violations {}", i16 + i32_),
    ))
}

fn c3a() -> Result<(bool, String)> {
    let mut bad = 0;
    for seed in 1..=3 {
        let cfg = session(8, 4, ThreatModel::SemiHonest, seed);
        let vals: Vec<u64> = (0..256).collect();
        let out = eval(&cfg, cfg.params.l(), std::slice::from_ref(&vals), |p, s| {
            let d = p.drelu(&s[0])?;
            let (y, d2) = p.relu(&s[0])?;
            reveal_all(p, &[d, y, d2])
        })?;
        for v in 0..256u64 {
            let pos = oracle_drelu(v, 8) as u64;
            let k = v as usize;
            bad += (out[0][k] != pos) as usize + (out[1][k] != pos * v) as usize + (out[2][k] != pos) as usize;
        }
    }
    let cfg = session(32, 13, ThreatModel::SemiHonest, 7);
    let mut r = ChaCha8Rng::seed_from_u64(7);
    let vals: Vec<u64> = (0..100_000).map(|_| r.gen::<u32>() as u64).collect();
    let (out, rounds) = eval(&cfg, cfg.params.l(), std::slice::from_ref(&vals), |p, s| {
        p.reset_meter();
        let (y, d) = p.relu(&s[0])?;
        let rounds = p.cost_of("relu").rounds;
        Ok((reveal_all(p, &[y, d])?, rounds))
    })?;
    let mut bad32 = 0;
    for (k, &v) in vals.iter().enumerate() {
        let pos = oracle_drelu(v, 32) as u64;
        bad32 += (out[0][k] != pos * v) as usize + (out[1][k] != pos) as usize;
    }
    Ok((
        bad + bad32 == 0 && rounds == 10,
        format!("exhaustive l=8 mismatches {bad}, 10^5 random l=32 mismatches {bad32}, ReLU rounds {rounds} (want 10)"),
    ))
}

fn c3b() -> Result<(bool, String)> {
    let mut pass = true;
    let mut parts = Vec::new();
    for threat in [ThreatModel::SemiHonest, ThreatModel::Malicious] {
        for name in ["relu", "drelu"] {
            let row = bench(&Runner::local(session(32, 13, threat, 3)), name, Dims::N(1000))?;
            let model = row.predicted.expect("relu has a formula").bytes;
            let ratio = row.bytes as f64 / model as f64;
            pass &= ratio <= 1.25;
            parts.push(format!("{name} {threat} {} bytes vs {model} ({ratio:.2}x)", row.bytes));
        }
    }
    Ok((pass, format!("n=1000 l=32, limit 1.25x: {}", parts.join(", "))))
}

fn c4() -> Result<(bool, String)> {
    let cfg = session(32, 13, ThreatModel::SemiHonest, 4);
    let l = cfg.params.l();
    let mut r = ChaCha8Rng::seed_from_u64(4);
    let (mut vectors, mut bad) = (0, 0);
    for len in 2..=16usize {
        let count = if len == 16 { 1000 - 14 * 66 } else { 66 };
        let rows: Vec<Vec<i64>> = (0..count)
            .map(|i| {
                (0..len)
                    .map(|_| if i % 2 == 0 { r.gen_range(-3..=3) << 13 } else { r.gen_range(-(1i64 << 20)..1 << 20) })
                    .collect()
            })
            .collect();
        let flat: Vec<u64> = rows.iter().flatten().map(|&v| l.from_i64(v)).collect();
        let out = eval(&cfg, l, &[flat], |p, s| {
            let (m, i) = p.maxpool_argmax(&s[0], count, len)?;
            reveal_all(p, &[m, i])
        })?;
        for (w, row) in rows.iter().enumerate() {
            let (max, arg) = oracle_argmax(row);
            let onehot = &out[1][w * len..(w + 1) * len];
            let ok = to_signed(out[0][w], 32) == max && onehot.iter().enumerate().all(|(j, &b)| b == (j == arg) as u64);
            bad += !ok as usize;
        }
        vectors += count;
    }
    Ok((bad == 0, format!("{bad} mismatches over {vectors} vectors of length 2..16")))
}

/// Worst relative errors of divide, inv_sqrt and sqrt at one precision.
fn numerics(ell: u32, fp: u32) -> Result<[f64; 3]> {
    let cfg = session(ell, fp, ThreatModel::SemiHonest, fp as u64);
    let prm = cfg.params;
    let mut r = ChaCha8Rng::seed_from_u64(ell as u64 + fp as u64);
    let n = 1000;
    let b: Vec<f64> = (0..n).map(|_| log_uniform(&mut r, 0.01, 50.0)).collect();
    let a: Vec<f64> = b.iter().map(|&b| r.gen_range((b / 8.0).max(0.01)..7.9)).collect();
    let mut s: Vec<f64> = (0..n).map(|_| log_uniform(&mut r, 2f64.powi(-6), 2f64.powi(10))).collect();
    s[0] = 2f64.powi(-6);
    s[1] = 2f64.powi(10) - 1.0 / 64.0;
    let (ra, rb, rs) = (prm.encode_all(&a)?, prm.encode_all(&b)?, prm.encode_all(&s)?);
    let out = eval(&cfg, prm.l(), &[ra.clone(), rb.clone(), rs.clone()], |p, x| {
        let ys = [p.divide(&x[0], &x[1])?, p.inv_sqrt(&x[2])?, p.sqrt(&x[2])?];
        reveal_all(p, &ys)
    })?;
    let mut worst = [0f64; 3];
    for k in 0..n {
        let (a, b, s) = (prm.decode(ra[k]), prm.decode(rb[k]), prm.decode(rs[k]));
        let want = [a / b, 1.0 / s.sqrt(), s.sqrt()];
        for j in 0..3 {
            let got = prm.decode(out[j][k]);
            worst[j] = worst[j].max(((got - want[j]) / want[j]).abs());
        }
    }
    Ok(worst)
}

fn bounding_power_check() -> Result<(bool, String)> {
    let cfg = session(32, 13, ThreatModel::SemiHonest, 11);
    let mut r = ChaCha8Rng::seed_from_u64(11);
    let vals: Vec<u64> = (0..10_000)
        .map(|_| {
            let e = r.gen_range(0..30);
            r.gen_range(1u64 << e..1u64 << (e + 1))
        })
        .collect();
    let alpha = eval(&cfg, cfg.params.l(), std::slice::from_ref(&vals), |p, s| p.bounding_power(&s[0]))?;
    let bad = vals
        .iter()
        .zip(&alpha)
        .filter(|(&x, &a)| !(1u64 << a <= x && x < 1u64 << (a + 1)))
        .count();
    Ok((bad == 0, format!("2^a <= x < 2^(a+1) violated on {bad} of 10^4 samples")))
}

fn c6() -> Result<(bool, String)> {
    let mut pass = true;
    let mut parts = Vec::new();
    for (i, m) in [8usize, 32, 128].into_iter().enumerate() {
        let cfg = session(32, 13, ThreatModel::SemiHonest, 60 + i as u64);
        let prm = cfg.params;
        let features = 8;
        let mut r = ChaCha8Rng::seed_from_u64(60 + i as u64);
        let centre: Vec<f64> = (0..features).map(|_| r.gen_range(-1.0..1.0)).collect();
        let spread: Vec<f64> = (0..features).map(|_| r.gen_range(0.05..0.5)).collect();
        let x: Vec<f64> = (0..m * features)
            .map(|k| centre[k % features] + spread[k % features] * r.gen_range(-1.0..1.0))
            .collect();
        let raw = prm.encode_all(&x)?;
        let y = eval(&cfg, prm.l(), std::slice::from_ref(&raw), |p, s| {
            let g = p.public(prm.l(), &vec![prm.constant(1.0); features]);
            let b = p.public(prm.l(), &vec![0; features]);
            let (y, _) = p.batch_norm_forward(&s[0], m, features, &g, &b)?;
            p.reveal_fixed(&y)
        })?;
        let (mut worst_mean, mut worst_var) = (0f64, 0f64);
        for j in 0..features {
            let col: Vec<f64> = (0..m).map(|k| prm.decode(raw[k * features + j])).collect();
            let mu = col.iter().sum::<f64>() / m as f64;
            let var = col.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / m as f64;
            let z: Vec<f64> = (0..m).map(|k| y[k * features + j]).collect();
            let zm = z.iter().sum::<f64>() / m as f64;
            let zv = z.iter().map(|v| (v - zm).powi(2)).sum::<f64>() / m as f64;
            let want = var / (var + BN_EPSILON);
            worst_mean = worst_mean.max(zm.abs());
            worst_var = worst_var.max((zv / want - 1.0).abs());
        }
        pass &= worst_mean <= 1e-2 && worst_var <= 0.05;
        parts.push(format!("m={m} |mean| {worst_mean:.2e} variance off by {:.2}%", worst_var * 100.0));
    }
    Ok((pass, parts.join(", ")))
}

fn c7() -> Result<(bool, String)> {
    let spec = NetworkSpec::network_b();
    let w = Checkpoint::load(&data_dir().join("pretrained/network-b.ckpt"))?.to_float(&spec)?;
    let data = load_dataset(&data_dir().join("mnist-10k-images-idx3-ubyte.gz"))?;
    let mut base = session(32, 13, ThreatModel::Malicious, 77);
    let raw = quantize(&w, &base.params)?;
    let secure_spec = spec.optimized();
    let prm = base.params;
    let job = |p: &mut Party| -> Result<(Vec<u64>, Vec<(u32, PartyId)>)> {
        let mut net = SecureNet::share(p, &secure_spec, PartyId::ALL[0], (p.id == PartyId::ALL[0]).then_some(&raw))?;
        let x = (p.id == PartyId::ALL[1]).then(|| data.batch_raw(&[9000], prm.fp));
        let xs = p.share_input(PartyId::ALL[1], x.as_deref(), spec.input.len(), prm.l())?;
        let y = net.forward(p, &xs, 1)?;
        let out = p.reveal(&y)?;
        Ok((out, p.transcript().iter().map(|r| (r.round, r.receiver)).collect()))
    };
    base.record_transcript = true;
    let honest = run_local(&base, job)?;
    // Every message except the final output confirmation, which carries no data.
    let mut sites = Vec::new();
    for (i, (_, sent)) in honest.iter().enumerate() {
        let last = sent.iter().map(|s| s.0).max().unwrap_or(0);
        sites.extend(sent.iter().filter(|s| s.0 != last).map(|&(round, to)| (PartyId::ALL[i], to, round)));
    }
    let available = sites.len();
    sites.shuffle(&mut ChaCha8Rng::seed_from_u64(7));
    sites.truncate(100);
    base.record_transcript = false;
    let (mut aborted, mut released) = (0, 0);
    for &(sender, receiver, round) in &sites {
        let mut c = base.clone();
        c.tamper = Some(Tamper {
            sender,
            receiver,
            round,
            byte: (round as usize * 7) % 4,
            mask: 1 << (round % 8),
        });
        let results = run_each([c.clone(), c.clone(), c], Backend::Memory, job);
        released += results.iter().filter(|r| r.is_ok()).count();
        aborted += results.iter().all(|r| matches!(r, Err(e) if e.is_abort())) as usize;
    }
    Ok((
        aborted == 100 && released == 0,
        format!("{aborted}/100 tampered messages (sampled from {available}) aborted at every party, {released} outputs released"),
    ))
}

fn c8(net: &str) -> Result<(bool, String)> {
    let spec = NetworkSpec::load(net)?;
    let w = Checkpoint::load(&data_dir().join(format!("pretrained/{net}.ckpt")))?.to_float(&spec)?;
    let data = load_dataset(&data_dir().join("mnist-10k-images-idx3-ubyte.gz"))?;
    let idx: Vec<usize> = (9000..9100).collect();
    let runner = Runner::local(session(32, 13, ThreatModel::SemiHonest, 8));
    let rep = infer(&runner, &spec, &w, &data, &idx, 10)?;
    Ok((
        rep.agreement >= 99 && rep.mean_relative_error <= 0.01 && rep.seconds <= 600.0,
        format!(
            "{net}: agreement {}/100, mean relative error {:.3}%, secure accuracy {}/100, {:.1}s",
            rep.agreement,
            rep.mean_relative_error * 100.0,
            rep.correct,
            rep.seconds
        ),
    ))
}

fn c9(data: &Dataset) -> Result<(bool, String)> {
    let spec = NetworkSpec::network_a();
    let prm = params(64, 13);
    let cfg = TrainConfig::default();
    let runner = Runner::local(SessionConfig::new(prm, ThreatModel::SemiHonest).with_seed(cfg.seed));
    let (secure, oracle) = std::thread::scope(|s| {
        let oracle = s.spawn(|| train_oracle(&spec, prm, data, &cfg));
        (train(&runner, &spec, data, &cfg), oracle.join().expect("oracle thread"))
    });
    let (rep, oracle) = (secure?, oracle?);
    let same = rep.weights == oracle;
    let curve: Vec<String> = rep.curve.iter().map(|c| format!("{}:{:.3}", c.iteration, c.accuracy)).collect();
    Ok((
        rep.final_accuracy >= 0.85 && same,
        format!(
            "200 iterations batch 32: held-out accuracy {:.2}% (curve {}), weights bit-identical to oracle: {same}",
            rep.final_accuracy * 100.0,
            curve.join(" ")
        ),
    ))
}

const COST_ROWS: &[&str] = &["matmul", "pc", "wa", "relu", "pow", "div", "bn"];

fn cost_rows() -> Result<Vec<(BenchRow, BenchRow)>> {
    let mut rows = Vec::new();
    for &name in COST_ROWS.iter().chain(&["mult"]) {
        let dims = default_dims(name, 1000);
        let semi = bench(&Runner::local(session(32, 13, ThreatModel::SemiHonest, 10)), name, dims)?;
        let mal = bench(&Runner::local(session(32, 13, ThreatModel::Malicious, 10)), name, dims)?;
        println!("     {}", semi.line());
        println!("     {}", mal.line());
        rows.push((semi, mal));
    }
    Ok(rows)
}

/// Measured cost may not exceed the formula by more than 1.25x.
fn within(ratio: f64) -> bool {
    ratio <= 1.25
}

fn c10(report: &mut Report) {
    let rows = match cost_rows() {
        Ok(r) => r,
        Err(e) => {
            for id in ["10 rounds", "10 bytes", "10 ratio"] {
                report.record(id, false, format!("error: {e}"));
            }
            return;
        }
    };
    let listed: Vec<&(BenchRow, BenchRow)> = rows.iter().filter(|r| COST_ROWS.contains(&r.0.protocol.as_str())).collect();
    let describe = |f: fn(&BenchRow) -> Option<f64>| {
        let off: Vec<String> = listed
            .iter()
            .flat_map(|(s, m)| [s, m])
            .filter(|r| !within(f(r).unwrap_or(0.0)))
            .map(|r| format!("{} {} {:.2}x", r.protocol, r.threat, f(r).unwrap_or(0.0)))
            .collect();
        let under: Vec<String> = listed
            .iter()
            .map(|(s, _)| s)
            .filter(|r| f(r).unwrap_or(1.0) < 1.0)
            .map(|r| format!("{} {:.2}x", r.protocol, f(r).unwrap_or(0.0)))
            .collect();
        let mut d = if off.is_empty() { "all rows within 1.25x".to_string() } else { format!("above 1.25x: {}", off.join(", ")) };
        if !under.is_empty() {
            d += &format!("; below the model: {}", under.join(", "));
        }
        (off.is_empty(), d)
    };
    let (ok, d) = describe(BenchRow::round_ratio);
    report.record("10 rounds", ok, d);
    let (ok, d) = describe(BenchRow::byte_ratio);
    report.record("10 bytes", ok, d);
    let ratios: Vec<String> = rows
        .iter()
        .filter(|r| r.0.protocol == "mult" || r.0.protocol == "matmul")
        .map(|(s, m)| format!("{} {}", s.protocol, m.bytes as f64 / s.bytes as f64))
        .collect();
    let exact = rows
        .iter()
        .filter(|r| r.0.protocol == "mult" || r.0.protocol == "matmul")
        .all(|(s, m)| m.bytes == 2 * s.bytes);
    report.record("10 ratio", exact, format!("malicious/semi-honest bytes: {}", ratios.join(", ")));
}

fn c11() -> Result<(bool, String)> {
    let lines = reference::lines();
    for l in &lines {
        println!("     {l}");
    }
    let informational = lines.first().is_some_and(|h| h.contains("not an acceptance target"));
    Ok((informational && lines.len() > 1, "published figures printed for reference only".into()))
}

fn main() {
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut rep = Report { lines: Vec::new(), only };
    let t0 = Instant::now();

    rep.run("1", c1);
    rep.run("2", c2);
    rep.run("3a", c3a);
    rep.run("3b", c3b);
    rep.run("4", c4);
    if rep.wants("5") {
        for (ell, fp) in [(32, 13), (64, 16)] {
            let id = |what: &str| format!("5 {what} f{fp}");
            match numerics(ell, fp) {
                Ok(w) => {
                    for (j, name) in ["divide", "inv_sqrt", "sqrt"].iter().enumerate() {
                        rep.record(&id(name), w[j] <= 1e-3, format!("l={ell}: worst relative error {:.2e} (limit 1e-3)", w[j]));
                    }
                }
                Err(e) => rep.record(&id("numerics"), false, format!("error: {e}")),
            }
        }
        rep.run("5 pow", bounding_power_check);
    }
    rep.run("6", c6);
    rep.run("7", c7);
    for net in ["network-a", "network-b", "network-c"] {
        rep.run(&format!("8 {}", &net[8..]), || c8(net));
    }
    if rep.wants("9") {
        match load_dataset(&data_dir().join("mnist-10k-images-idx3-ubyte.gz")) {
            Ok(data) => rep.run("9", || c9(&data)),
            Err(e) => rep.record("9", false, format!("error: {e}")),
        }
    }
    if rep.wants("10") {
        c10(&mut rep);
    }
    rep.run("11", c11);

    let failed: Vec<&String> = rep.lines.iter().filter(|l| !l.1).map(|l| &l.0).collect();
    let unexpected: Vec<&&String> = failed.iter().filter(|id| !KNOWN_GAPS.contains(&id.as_str())).collect();
    println!(
        "acceptance: {} passed, {} failed ({} known gaps), {:.0}s",
        rep.lines.len() - failed.len(),
        failed.len(),
        failed.len() - unexpected.len(),
        t0.elapsed().as_secs_f64()
    );
    if !unexpected.is_empty() {
        println!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
