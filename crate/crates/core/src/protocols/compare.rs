//! Private Compare: (x ≥ t) for x given by Z_p-shared bits and public t.
//!
//! The comparison runs on 2x+1 against 2t: an extra lowest position holds a
//! bit that is 1 for x and 0 for t, so the two never tie and the ≥ relation
//! becomes strict.

use crate::error::{Error, Result};
use crate::party::{Party, Round};
use crate::prep::CompareRand;
use crate::rings::Modulus;
use crate::rss::{PartyId, Shares, SmallMod};

impl Party {
    /// Local cross terms of β·x[i]; reshared by the caller in any round.
    pub(crate) fn pc_products(&self, bits: &Shares, width: usize, rand: &CompareRand) -> Result<Vec<u64>> {
        if bits.len() != rand.beta_p.len() * width {
            return Err(Error::Shape(format!(
                "{} bits for {} values of width {width}",
                bits.len(),
                rand.beta_p.len()
            )));
        }
        rand.beta_p.repeat_each(width).mul_local(bits)
    }

    /// Builds the c-values from `bx` = ⟦β·x[i]⟧, multiplies them together with
    /// m in a tree and opens the product. Returns β' = (d ≠ 0) per value.
    pub(crate) fn pc_reveal(
        &mut self,
        bits: &Shares,
        width: usize,
        bx: &Shares,
        t: &[u128],
        rand: &CompareRand,
    ) -> Result<Vec<u64>> {
        let zp = bits.modulus;
        let n = t.len();
        let mut all = pc_factors(self.id, bits, width, bx, t, &rand.beta_p)?;
        all.lo.extend_from_slice(&rand.m.lo);
        all.hi.extend_from_slice(&rand.m.hi);
        // factor-major: factor j occupies [j·n, (j+1)·n)
        let mut count = width + 2;
        while count > 1 {
            let half = count / 2;
            let z = mul_halves(&all, half * n);
            let mut prod = self.scope("mult", |p| p.reshare(z, zp))?;
            if count % 2 == 1 {
                let tail = (count - 1) * n;
                prod.lo.extend_from_slice(&all.lo[tail..]);
                prod.hi.extend_from_slice(&all.hi[tail..]);
            }
            all = prod;
            count = half + count % 2;
        }
        let d = self.open(&all)?;
        Ok(d.into_iter().map(|d| (d != 0) as u64).collect())
    }

    /// ⟦x ≥ t⟧ in Z_2. `bits` holds `width` Z_p bits per value, LSB first.
    pub fn private_compare(
        &mut self,
        bits: &Shares,
        width: usize,
        t: &[u64],
        rand: &CompareRand,
    ) -> Result<Shares> {
        self.scope("pc", |p| {
            let z = p.pc_products(bits, width, rand)?;
            let bx = p.reshare(z, bits.modulus)?;
            let t: Vec<u128> = t.iter().map(|&t| t as u128).collect();
            let beta_pub = p.pc_reveal(bits, width, &bx, &t, rand)?;
            pc_output(p.id, &rand.beta_2, &beta_pub, &t, width)
        })
    }

    /// Standalone compare that fetches its own randomness.
    pub fn compare_public(&mut self, bits: &Shares, width: usize, t: &[u64]) -> Result<Shares> {
        let rand = self.compare_rand(t.len())?;
        self.private_compare(bits, width, t, &rand)
    }

    /// Opens the round of β·x products alongside other segments.
    pub(crate) fn pc_round_products(
        &self,
        round: &mut Round,
        bits: &Shares,
        width: usize,
        rand: &CompareRand,
    ) -> Result<usize> {
        Ok(round.reshare(self.pc_products(bits, width, rand)?, bits.modulus))
    }
}

/// β ⊕ β' in β's ring; values with t ≥ 2^width are known to compare false.
pub(crate) fn pc_output(id: PartyId, beta: &Shares, beta_pub: &[u64], t: &[u128], width: usize) -> Result<Shares> {
    let mut out = beta.xor_public(id, beta_pub)?;
    for (k, &tk) in t.iter().enumerate() {
        if tk >> width != 0 {
            out.lo[k] = 0;
            out.hi[k] = 0;
        }
    }
    Ok(out)
}

/// Local cross terms of the first `len` elements times the next `len`.
fn mul_halves(s: &Shares, len: usize) -> Vec<u64> {
    let (xl, yl) = s.lo.split_at(len);
    let (xh, yh) = s.hi.split_at(len);
    match s.modulus {
        Modulus::Prime(p) if p < 1 << 16 => {
            let r = SmallMod::new(p);
            (0..len).map(|i| r.reduce(xl[i] * (yl[i] + yh[i]) + xh[i] * yl[i])).collect()
        }
        m => (0..len)
            .map(|i| m.reduce_wide(xl[i] as u128 * (yl[i] as u128 + yh[i] as u128) + xh[i] as u128 * yl[i] as u128))
            .collect(),
    }
}

/// The width+1 c-vectors of the comparison, factor-major with position 0
/// (the extra bit) first.
fn pc_factors(
    id: PartyId,
    bits: &Shares,
    width: usize,
    bx: &Shares,
    t: &[u128],
    beta: &Shares,
) -> Result<Shares> {
    let zp = bits.modulus;
    let n = t.len();
    if bx.len() != n * width || beta.len() != n {
        return Err(Error::Shape("compare inputs disagree in length".into()));
    }
    let Modulus::Prime(p) = zp else {
        return Err(Error::Invalid("compare bits must live in Z_p".into()));
    };
    if p >= 1 << 16 {
        return Err(Error::Invalid(format!("compare prime {p} too large")));
    }
    let r = SmallMod::new(p);
    let mut out = Shares::zeros(zp, (width + 1) * n);
    // (values, betas, products, output, owns component 0)
    let sides = [
        (&bits.lo, &beta.lo, &bx.lo, &mut out.lo, id.index() == 0),
        (&bits.hi, &beta.hi, &bx.hi, &mut out.hi, id.index() == 2),
    ];
    for (xs, bs, bxs, dst, c0) in sides {
        let one = c0 as u64;
        for k in 0..n {
            let tk = t[k];
            let b = bs[k];
            let mut suffix = 0u64;
            for i in (0..width).rev() {
                let ti = (tk >> i) & 1 == 1;
                let x = xs[k * width + i];
                let bxv = bxs[k * width + i];
                // c = u + 1 + Σ_{j>i} w_j, u = x − t − 2βx + 2βt
                let mut c = x + 2 * (p - bxv) + one + suffix;
                if ti {
                    c += p - one + 2 * b;
                }
                dst[(i + 1) * n + k] = r.reduce(c);
                // w = x ⊕ t, summed unreduced
                suffix += if ti { one + p - x } else { x };
            }
            // extra position: x' = 1, t' = 0, so u = 1 − 2β
            dst[k] = r.reduce(2 * one + 2 * (p - b) + suffix);
        }
    }
    Ok(out)
}

/// Rounds of a standalone compare over `width` bits: the product round, the
/// multiplication tree over width+2 factors, and the opening.
pub fn pc_rounds(width: usize) -> u32 {
    let factors = width + 2;
    2 + (usize::BITS - (factors - 1).leading_zeros())
}
