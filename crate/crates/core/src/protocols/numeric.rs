//! Bounding power, division, Newton square roots and batch normalization.
//!
//! Internal truncations in these kernels round half up.

use crate::error::{Error, Result};
use crate::party::Party;
use crate::rss::Shares;

/// BN stabilizer ε = 2^{−10}.
pub const BN_EPSILON: f64 = 1.0 / 1024.0;

const NEWTON_ITERS: usize = 4;
const DIV_W0: f64 = 2.9142;

/// Forward values kept for the batch-norm backward pass.
#[derive(Clone, Debug)]
pub struct BnCache {
    pub xhat: Shares,
    pub inv: Shares,
    pub gamma: Shares,
    pub batch: usize,
    pub features: usize,
}

fn split(s: &Shares, lens: &[usize]) -> Vec<Shares> {
    let mut out = Vec::with_capacity(lens.len());
    let mut at = 0;
    for &n in lens {
        out.push(s.slice(at, at + n));
        at += n;
    }
    out
}

/// Per-feature sums over the batch of a row-major [batch × features] tensor.
fn sum_rows(x: &Shares, batch: usize, features: usize) -> Shares {
    let m = x.modulus;
    let mut out = Shares::zeros(m, features);
    for b in 0..batch {
        for f in 0..features {
            let k = b * features + f;
            out.lo[f] = m.add(out.lo[f], x.lo[k]);
            out.hi[f] = m.add(out.hi[f], x.hi[k]);
        }
    }
    out
}

fn tile_rows(x: &Shares, batch: usize) -> Shares {
    let f = x.len();
    x.gather(&(0..batch * f).map(|k| k % f).collect::<Vec<_>>())
}

impl Party {
    /// Products of several pairs in one round, then one rounded truncation by `d`.
    pub fn mul_trunc_batch(&mut self, pairs: &[(&Shares, &Shares)], d: u32) -> Result<Vec<Shares>> {
        let prods = self.mult_batch(pairs)?;
        let lens: Vec<usize> = prods.iter().map(Shares::len).collect();
        let all = Shares::concat(&prods.iter().collect::<Vec<_>>())?;
        let t = self.truncate_round(&all, d)?;
        Ok(split(&t, &lens))
    }

    fn mul_round(&mut self, x: &Shares, y: &Shares) -> Result<Shares> {
        let fp = self.params.fp;
        Ok(self.mul_trunc_batch(&[(x, y)], fp)?.remove(0))
    }

    /// Public α with 2^α ≤ x < 2^{α+1} for each raw x ≥ 1.
    pub fn bounding_power(&mut self, x: &Shares) -> Result<Vec<u32>> {
        let n = x.len();
        let l = self.params.l();
        let ell = self.params.ell;
        self.scope("pow", |p| {
            let id = p.id;
            let mut alpha = vec![0u32; n];
            let dummy = l.neg(1);
            for (it, i) in (0..p.params.log_ell()).rev().enumerate() {
                let step = 1u32 << i;
                let mut v = x.clone();
                let mut consts = vec![0u64; n];
                for k in 0..n {
                    let e = step + alpha[k];
                    if e >= ell - 1 {
                        v.lo[k] = 0;
                        v.hi[k] = 0;
                        consts[k] = dummy;
                    } else {
                        consts[k] = l.neg(1u64 << e);
                    }
                }
                let mut v = v.add_public(id, &consts)?;
                if it == 0 {
                    // Precondition x ≥ 1 checked alongside the first comparison.
                    v = Shares::concat(&[&v, &x.add_scalar(id, l.neg(1))])?;
                }
                let b = p.drelu(&v)?;
                let c = p.open(&b)?;
                if it == 0 && c[n..].contains(&0) {
                    return Err(Error::Domain("bounding power needs a positive input".into()));
                }
                for k in 0..n {
                    if c[k] == 1 {
                        alpha[k] += step;
                    }
                }
            }
            Ok(alpha)
        })
    }

    /// a / b in fixed point for b > 0.
    pub fn divide(&mut self, a: &Shares, b: &Shares) -> Result<Shares> {
        self.scope("div", |p| {
            let f = p.params.fp;
            let id = p.id;
            let one = 1u64 << f;
            let alpha = p.bounding_power(b)?;
            let norm: Vec<i32> = alpha.iter().map(|&a| f as i32 - a as i32 - 1).collect();
            let x = p.scale_pow2(b, &norm, false)?;
            let w0 = x.mul_const(2).neg().add_scalar(id, p.params.constant(DIV_W0));
            let e0 = p.mul_round(&x, &w0)?.neg().add_scalar(id, one);
            let e0p = e0.add_scalar(id, one);
            let r = p.mul_trunc_batch(&[(&e0, &e0), (&w0, &e0p)], f)?;
            let e1p = r[0].add_scalar(id, one);
            let inv = p.mul_round(&r[1], &e1p)?;
            let prod = p.mult(a, &inv)?;
            let shifts: Vec<u32> = alpha.iter().map(|&a| a + 1).collect();
            p.truncate_by(&prod, &shifts, true)
        })
    }

    /// Exponents k = round-half-up((α − f)/2) that bring b·2^{−2k} into [0.5, 2).
    fn half_scale(&mut self, b: &Shares) -> Result<Vec<i32>> {
        let f = self.params.fp as i32;
        let alpha = self.bounding_power(b)?;
        Ok(alpha.iter().map(|&a| (a as i32 - f + 1).div_euclid(2)).collect())
    }

    /// 1/√b by four Newton steps x ← x(3 − b x²)/2 on the normalized input.
    pub fn inv_sqrt(&mut self, b: &Shares) -> Result<Shares> {
        self.scope("inv_sqrt", |p| {
            let f = p.params.fp;
            let id = p.id;
            let k = p.half_scale(b)?;
            let e: Vec<i32> = k.iter().map(|&k| -2 * k).collect();
            let bn = p.scale_pow2(b, &e, true)?;
            let mut x = p.public(b.modulus, &vec![1u64 << f; b.len()]);
            for _ in 0..NEWTON_ITERS {
                let x2 = p.mul_round(&x, &x)?;
                let t = p.mul_round(&bn, &x2)?;
                let u = t.neg().add_scalar(id, 3u64 << f);
                x = p.mul_trunc_batch(&[(&x, &u)], f + 1)?.remove(0);
            }
            let back: Vec<i32> = k.iter().map(|&k| -k).collect();
            p.scale_pow2(&x, &back, true)
        })
    }

    /// √a by four Newton steps x ← (x + a/x)/2 on the normalized input.
    pub fn sqrt(&mut self, a: &Shares) -> Result<Shares> {
        self.scope("sqrt", |p| {
            let f = p.params.fp;
            let k = p.half_scale(a)?;
            let e: Vec<i32> = k.iter().map(|&k| -2 * k).collect();
            let an = p.scale_pow2(a, &e, true)?;
            let mut x = p.public(a.modulus, &vec![1u64 << f; a.len()]);
            for _ in 0..NEWTON_ITERS {
                let q = p.divide(&an, &x)?;
                x = p.truncate_round(&x.add(&q)?, 1)?;
            }
            p.scale_pow2(&x, &k, true)
        })
    }

    /// Batch normalization of a row-major [batch × features] tensor over the batch.
    pub fn batch_norm_forward(
        &mut self,
        a: &Shares,
        batch: usize,
        features: usize,
        gamma: &Shares,
        beta: &Shares,
    ) -> Result<(Shares, BnCache)> {
        if a.len() != batch * features || gamma.len() != features || beta.len() != features || batch == 0 {
            return Err(Error::Shape("batch norm operand sizes disagree".into()));
        }
        self.scope("bn", |p| {
            let id = p.id;
            let f = p.params.fp;
            let inv_m = p.params.constant(1.0 / batch as f64);
            let mean = p.truncate_round(&sum_rows(a, batch, features).mul_const(inv_m), f)?;
            let diff = a.sub(&tile_rows(&mean, batch))?;
            let sq = p.mul_round(&diff, &diff)?;
            let var = p.truncate_round(&sum_rows(&sq, batch, features).mul_const(inv_m), f)?;
            let b = var.add_scalar(id, p.params.constant(BN_EPSILON));
            let inv = p.inv_sqrt(&b)?;
            let xhat = p.mul_round(&diff, &tile_rows(&inv, batch))?;
            let out = p
                .mul_round(&xhat, &tile_rows(gamma, batch))?
                .add(&tile_rows(beta, batch))?;
            Ok((
                out,
                BnCache {
                    xhat,
                    inv,
                    gamma: gamma.clone(),
                    batch,
                    features,
                },
            ))
        })
    }

    /// Returns (dx, dγ, dβ) for upstream gradient `dy`.
    pub fn batch_norm_backward(&mut self, dy: &Shares, cache: &BnCache) -> Result<(Shares, Shares, Shares)> {
        let (m, c) = (cache.batch, cache.features);
        if dy.len() != m * c {
            return Err(Error::Shape("batch norm gradient size".into()));
        }
        self.scope("bn", |p| {
            let f = p.params.fp;
            let inv_m = p.params.constant(1.0 / m as f64);
            let dbeta = sum_rows(dy, m, c);
            let r = p.mul_trunc_batch(
                &[(dy, &cache.xhat), (dy, &tile_rows(&cache.gamma, m))],
                f,
            )?;
            let dgamma = sum_rows(&r[0], m, c);
            let dxhat = &r[1];
            let t = p.mul_round(dxhat, &cache.xhat)?;
            let means = Shares::concat(&[&sum_rows(dxhat, m, c), &sum_rows(&t, m, c)])?.mul_const(inv_m);
            let means = p.truncate_round(&means, f)?;
            let (mean_d, mean_dx) = (means.slice(0, c), means.slice(c, 2 * c));
            let corr = p.mul_round(&cache.xhat, &tile_rows(&mean_dx, m))?;
            let centered = dxhat.sub(&tile_rows(&mean_d, m))?.sub(&corr)?;
            let dx = p.mul_round(&centered, &tile_rows(&cache.inv, m))?;
            Ok((dx, dgamma, dbeta))
        })
    }
}
