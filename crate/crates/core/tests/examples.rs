//! Worked examples for the secure protocols and layers.

use falcon_core::harness::run_local;
use falcon_core::nn::{NetworkSpec, SecureNet, Weights};
use falcon_core::{Party, PartyId, RingParams, SessionConfig, Shares, ThreatModel};

const P1: PartyId = PartyId::ALL[0];

fn cfg() -> SessionConfig {
    SessionConfig::new(RingParams::with_bits(32, 13).unwrap(), ThreatModel::SemiHonest)
}

/// Shares the reals `x`, applies `f`, reveals and decodes.
fn on_reals(x: &[f64], f: impl Fn(&mut Party, &Shares) -> falcon_core::Result<Shares> + Sync) -> Vec<f64> {
    let c = cfg();
    let outs = run_local(&c, |p| {
        let s = p.share_fixed(P1, (p.id == P1).then_some(x), x.len())?;
        let y = f(p, &s)?;
        p.reveal_fixed(&y)
    })
    .unwrap();
    outs[0].clone()
}

fn close(got: &[f64], want: &[f64], tol: f64) {
    assert_eq!(got.len(), want.len());
    for (g, w) in got.iter().zip(want) {
        assert!((g - w).abs() <= tol, "{got:?} vs {want:?}");
    }
}

#[test]
fn relu_examples() {
    close(&on_reals(&[-5.0, 3.25], |p, s| Ok(p.relu(s)?.0)), &[0.0, 3.25], 0.0);
}

#[test]
fn truncation_examples() {
    let c = cfg();
    let prm = c.params;
    let outs = run_local(&c, |p| {
        let five = p.share_fixed(P1, (p.id == P1).then_some(&[5.0][..]), 1)?;
        let ab = p.share_fixed(P1, (p.id == P1).then_some(&[2.5, 2.0][..]), 2)?;
        let r = p.truncate(&five, 13)?;
        let prod = p.mul_fixed(&ab.slice(0, 1), &ab.slice(1, 2))?;
        Ok((p.reveal(&r)?, p.reveal(&prod)?))
    })
    .unwrap();
    assert_eq!(outs[0].0, vec![5]);
    assert_eq!(outs[0].1, vec![prm.constant(5.0)]);
}

#[test]
fn maxpool_examples() {
    let c = cfg();
    let outs = run_local(&c, |p| {
        let a = p.share_input(P1, (p.id == P1).then_some(&[1, 5, 3][..]), 3, p.params.l())?;
        let (m, ind) = p.maxpool_argmax(&a, 1, 3)?;
        let (m1, ind1) = p.maxpool_argmax(&a.slice(0, 1), 1, 1)?;
        Ok([p.reveal(&m)?, p.reveal(&ind)?, p.reveal(&m1)?, p.reveal(&ind1)?])
    })
    .unwrap();
    assert_eq!(outs[0], [vec![5], vec![0, 1, 0], vec![1], vec![1]]);
}

#[test]
fn bounding_power_examples() {
    let c = cfg();
    let outs = run_local(&c, |p| {
        let x = p.share_input(P1, (p.id == P1).then_some(&[1, 8, 40960][..]), 3, p.params.l())?;
        p.bounding_power(&x)
    })
    .unwrap();
    assert_eq!(outs[0], vec![0, 3, 15]);
}

#[test]
fn divide_examples() {
    let got = on_reals(&[1.0, 6.0, 1.0, 3.0], |p, s| {
        let a = s.gather(&[0, 1]);
        let b = s.gather(&[2, 3]);
        p.divide(&a, &b)
    });
    close(&got[..1], &[1.0], 2f64.powi(-11));
    close(&got[1..], &[2.0], 1e-3);
}

#[test]
fn inverse_square_root_examples() {
    close(&on_reals(&[1.0, 4.0], |p, s| p.inv_sqrt(s)), &[1.0, 0.5], 1e-3);
}

#[test]
fn square_root_examples() {
    close(&on_reals(&[4.0, 2.0, 1.0], |p, s| p.sqrt(s)), &[2.0, 2f64.sqrt(), 1.0], 1e-3);
}

fn bn(batch: &[f64], gamma: f64, beta: f64) -> Vec<f64> {
    let prm = cfg().params;
    let m = batch.len();
    on_reals(batch, move |p, s| {
        let g = p.public(prm.l(), &[prm.constant(gamma)]);
        let b = p.public(prm.l(), &[prm.constant(beta)]);
        Ok(p.batch_norm_forward(s, m, 1, &g, &b)?.0)
    })
}

#[test]
fn batch_norm_examples() {
    close(&bn(&[2.0; 4], 1.0, 0.0), &[0.0; 4], 1e-2);
    // σ² = 1, so z = ±1/√(1 + 2^{−10}).
    close(&bn(&[1.0, 3.0], 1.0, 0.0), &[-1.0, 1.0], 2e-2);
    close(&bn(&[1.0, 3.0], 2.0, 1.0), &[-1.0, 3.0], 4e-2);
}

#[test]
fn zero_input_through_relu_net_gives_zero_logits() {
    let c = cfg();
    let prm = c.params;
    let spec = NetworkSpec::network_a();
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(1);
    let mut w = Weights::xavier(&spec, &[], &mut rng).unwrap();
    for l in &mut w.layers {
        l.b.iter_mut().for_each(|b| *b = 0.0);
    }
    let raw = falcon_core::nn::quantize(&w, &prm).unwrap();
    let outs = run_local(&c, |p| {
        let mut net = SecureNet::share(p, &spec, P1, (p.id == P1).then_some(&raw))?;
        let x = p.share_input(P1, (p.id == P1).then_some(&[0u64; 784][..]), 784, prm.l())?;
        let y = net.forward(p, &x, 1)?;
        p.reveal(&y)
    })
    .unwrap();
    assert_eq!(outs[0], vec![0; 10]);
}
