//! Exact truncation by public powers of two.
//!
//! With z = x + 2^{ℓ−2} ≥ 0 and a pair r, r ≫ d, the parties open y = z + r
//! (no wrap since both lie below 2^{ℓ−1}) and compute
//! ⌊z/2^d⌋ = ⌊y/2^d⌋ − (r ≫ d) − [y mod 2^d < r mod 2^d],
//! where the borrow bit comes from Private Compare on the low bits of r.

use crate::error::{Error, Result};
use crate::party::{Party, Round};
use crate::prep::CompareRand;
use crate::rss::Shares;

use super::compare::pc_output;

impl Party {
    /// Arithmetic shift right by `d`, exact for |x| < 2^{ℓ−2}.
    pub fn truncate(&mut self, x: &Shares, d: u32) -> Result<Shares> {
        self.truncate_by(x, &vec![d; x.len()], false)
    }

    /// Shift right by `d` rounding half up.
    pub fn truncate_round(&mut self, x: &Shares, d: u32) -> Result<Shares> {
        self.truncate_by(x, &vec![d; x.len()], true)
    }

    /// Per-element shifts; zero shifts pass through unchanged.
    pub fn truncate_by(&mut self, x: &Shares, shifts: &[u32], round: bool) -> Result<Shares> {
        if shifts.len() != x.len() {
            return Err(Error::Shape(format!("{} shifts for {} values", shifts.len(), x.len())));
        }
        let l = self.params.l();
        l.check_same(x.modulus)?;
        let active: Vec<usize> = (0..x.len()).filter(|&i| shifts[i] > 0).collect();
        if active.is_empty() {
            return Ok(x.clone());
        }
        let ds: Vec<u32> = active.iter().map(|&i| shifts[i]).collect();
        let tp = self.trunc_pairs(&ds)?;
        let ell = self.params.ell;
        let out = self.scope("trunc", |p| {
            let id = p.id;
            let mut xs = x.gather(&active);
            if round {
                let half: Vec<u64> = ds.iter().map(|&d| 1u64 << (d - 1)).collect();
                xs = xs.add_public(id, &half)?;
            }
            let masked = xs.add_scalar(id, 1u64 << (ell - 2)).add(&tp.r)?;
            let rand = CompareRand {
                beta_2: tp.beta_l.clone(),
                beta_p: tp.beta_p.clone(),
                m: tp.m.clone(),
            };
            let mut r = Round::new();
            let hy = r.open(&masked);
            let hb = p.pc_round_products(&mut r, &tp.r_bits, tp.width, &rand)?;
            let mut out = p.run_round(r)?;
            let y = out.opened(hy, l);
            let bx = out.shares(hb);
            let t: Vec<u128> = y
                .iter()
                .zip(&ds)
                .map(|(&y, &d)| (y & ((1u64 << d) - 1)) as u128 + 1)
                .collect();
            let beta_pub = p.pc_reveal(&tp.r_bits, tp.width, &bx, &t, &rand)?;
            let borrow = pc_output(id, &tp.beta_l, &beta_pub, &t, tp.width)?;
            let public: Vec<u64> = y
                .iter()
                .zip(&ds)
                .map(|(&y, &d)| l.sub(y >> d, 1u64 << (ell - 2 - d)))
                .collect();
            tp.r_shift.add(&borrow)?.neg().add_public(id, &public)
        })?;
        let mut res = x.clone();
        for (k, &i) in active.iter().enumerate() {
            res.lo[i] = out.lo[k];
            res.hi[i] = out.hi[k];
        }
        Ok(res)
    }

    /// x · 2^{e} for public per-element exponents; negative exponents truncate.
    pub fn scale_pow2(&mut self, x: &Shares, exps: &[i32], round: bool) -> Result<Shares> {
        if exps.len() != x.len() {
            return Err(Error::Shape(format!("{} exponents for {} values", exps.len(), x.len())));
        }
        let l = x.modulus;
        let up: Vec<u64> = exps
            .iter()
            .map(|&e| if e > 0 { l.reduce(1u64 << e) } else { 1 })
            .collect();
        let shifts: Vec<u32> = exps.iter().map(|&e| if e < 0 { (-e) as u32 } else { 0 }).collect();
        let scaled = x.mul_public(&up)?;
        self.truncate_by(&scaled, &shifts, round)
    }
}
