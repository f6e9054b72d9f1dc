use crate::error::Result;
use crate::party::{Party, Round};
use crate::prep::{CompareRand, WrapRand};
use crate::rings::{msb, wrap2, wrap3, Modulus};
use crate::rss::Shares;

use super::compare::pc_output;

/// Every bit of one wrap computation, kept for transcript checks.
#[derive(Clone, Debug)]
pub struct WrapParts {
    /// ⟦θ⟧ with θ = wrap3 of the input's components, mod 2.
    pub theta: Shares,
    /// ⟦β_j⟧ = wrap2(a_j, x_j) as local Z_2 sharings.
    pub beta: [Shares; 3],
    /// δ = wrap3(r_1, r_2, r_3), public.
    pub delta: Vec<u64>,
    /// ⟦η⟧ = ⟦x ≥ r + 1⟧.
    pub eta: Shares,
    /// ⟦α⟧ = wrap3 of the mask's components.
    pub alpha: Shares,
}

impl Party {
    /// Z_2 sharing of a bit known to the two holders of component `j`.
    fn component_bits(&self, a: &Shares, j: usize, f: impl Fn(u64) -> u64) -> Result<Shares> {
        let vals: Option<Vec<u64>> = a.component(self.id, j).map(|c| c.iter().map(|&v| f(v)).collect());
        Shares::from_component(self.id, j, vals.as_deref(), a.len(), Modulus::BINARY)
    }

    /// wrap3 of the components of `a` with all intermediate bits.
    pub fn wrap3_parts(&mut self, a: &Shares, wr: &WrapRand, cr: &CompareRand) -> Result<WrapParts> {
        self.scope("wa", |p| {
            let l = p.params.l();
            let ell = p.params.ell as usize;
            let id = p.id;
            let mut beta = Vec::with_capacity(3);
            for j in 0..3 {
                let held = match (a.component(id, j), wr.x.component(id, j)) {
                    (Some(aj), Some(xj)) => Some(
                        aj.iter()
                            .zip(xj)
                            .map(|(&u, &v)| wrap2(u, v, l) as u64)
                            .collect::<Vec<u64>>(),
                    ),
                    _ => None,
                };
                beta.push(Shares::from_component(id, j, held.as_deref(), a.len(), Modulus::BINARY)?);
            }
            let masked = a.add(&wr.x)?;
            let mut round = Round::new();
            let hr = round.open(&masked);
            let hb = p.pc_round_products(&mut round, &wr.x_bits, ell, cr)?;
            let mut out = p.run_round(round)?;
            let [r0, r1, r2] = out.components(hr);
            let bx = out.shares(hb);
            let mut delta = Vec::with_capacity(a.len());
            let mut t = Vec::with_capacity(a.len());
            for k in 0..a.len() {
                delta.push(wrap3(r0[k], r1[k], r2[k], l) as u64);
                t.push(l.add(l.add(r0[k], r1[k]), r2[k]) as u128 + 1);
            }
            let beta_pub = p.pc_reveal(&wr.x_bits, ell, &bx, &t, cr)?;
            let eta = pc_output(id, &cr.beta_2, &beta_pub, &t, ell)?;
            let theta = beta[0]
                .add(&beta[1])?
                .add(&beta[2])?
                .add(&eta)?
                .add(&wr.alpha)?
                .add_public(id, &delta)?;
            let beta: [Shares; 3] = beta.try_into().expect("three components");
            Ok(WrapParts {
                theta,
                beta,
                delta,
                eta,
                alpha: wr.alpha.clone(),
            })
        })
    }

    /// ⟦wrap3(a_1, a_2, a_3, L) mod 2⟧ in Z_2.
    pub fn wrap3(&mut self, a: &Shares) -> Result<Shares> {
        let wr = self.wrap_rand(a.len())?;
        let cr = self.compare_rand(a.len())?;
        Ok(self.wrap3_parts(a, &wr, &cr)?.theta)
    }

    /// ⟦DReLU(a)⟧ in Z_2: 1 iff the MSB of a is 0.
    pub fn drelu(&mut self, a: &Shares) -> Result<Shares> {
        let n = a.len();
        let wr = self.wrap_rand(n)?;
        let cr = self.compare_rand(n)?;
        self.scope("drelu", |p| {
            let ell = p.params.ell;
            let mut acc = p.component_bits(a, 0, |v| msb(v, ell) as u64)?;
            for j in 1..3 {
                acc = acc.add(&p.component_bits(a, j, |v| msb(v, ell) as u64)?)?;
            }
            let theta = p.wrap3_parts(&a.mul_const(2), &wr, &cr)?.theta;
            Ok(acc.add(&theta)?.add_scalar(p.id, 1))
        })
    }

    /// Converts a Z_2-shared bit to Z_L with one opening of b ⊕ c.
    pub fn bit_to_ring(&mut self, b: &Shares) -> Result<Shares> {
        let bp = self.bit_pairs(b.len())?;
        let e = self.open(&b.add(&bp.c2)?)?;
        bp.cl.xor_public(self.id, &e)
    }

    /// x where b = 0 and y where b = 1. Also returns b lifted to Z_L.
    pub fn select_shares(&mut self, x: &Shares, y: &Shares, b: &Shares) -> Result<(Shares, Shares)> {
        self.scope("ss", |p| {
            let d = p.bit_to_ring(b)?;
            let z = x.add(&p.mult(&y.sub(x)?, &d)?)?;
            Ok((z, d))
        })
    }

    /// ReLU(a) and the DReLU bit in Z_L for the backward pass.
    pub fn relu(&mut self, a: &Shares) -> Result<(Shares, Shares)> {
        self.scope("relu", |p| {
            let b = p.drelu(a)?;
            p.select_shares(&Shares::zeros(a.modulus, a.len()), a, &b)
        })
    }
}
