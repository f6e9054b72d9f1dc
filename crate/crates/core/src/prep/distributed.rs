//! Preprocessing generated by the parties themselves from PRF randomness.

use super::{BitPairs, CompareRand, TruncPairs, WrapRand};
use crate::error::Result;
use crate::party::Party;
use crate::rings::Modulus;
use crate::rss::Shares;

impl Party {
    /// Converts Z_2-shared bits into arithmetic sharings. Each request is a
    /// bit vector and a target modulus; all requests share the same two rounds.
    pub fn bit_inject(&mut self, reqs: &[(&Shares, Modulus)]) -> Result<Vec<Shares>> {
        let id = self.id;
        let lift = |b: &Shares, j: usize, m: Modulus| {
            Shares::from_component(id, j, b.component(id, j), b.len(), m)
        };
        let mut lifted = Vec::with_capacity(reqs.len());
        for &(b, m) in reqs {
            lifted.push([lift(b, 0, m)?, lift(b, 1, m)?, lift(b, 2, m)?]);
        }
        let prods = {
            let pairs: Vec<(&Shares, &Shares)> = lifted.iter().map(|c| (&c[0], &c[1])).collect();
            self.mult_batch(&pairs)?
        };
        // u = c0 ⊕ c1 = c0 + c1 − 2·c0·c1
        let us: Vec<Shares> = lifted
            .iter()
            .zip(&prods)
            .map(|(c, pr)| c[0].add(&c[1])?.sub(&pr.mul_const(2)))
            .collect::<Result<_>>()?;
        let prods = {
            let pairs: Vec<(&Shares, &Shares)> = us.iter().zip(&lifted).map(|(u, c)| (u, &c[2])).collect();
            self.mult_batch(&pairs)?
        };
        us.iter()
            .zip(&lifted)
            .zip(&prods)
            .map(|((u, c), pr)| u.add(&c[2])?.sub(&pr.mul_const(2)))
            .collect()
    }

    /// Random nonzero elements of Z_p. Candidates are raised to p − 1 and the
    /// 0/1 result is opened, so only zero-ness leaks.
    pub(crate) fn nonzero_zp(&mut self, n: usize) -> Result<Shares> {
        let zp = self.params.zp();
        let mut out = Shares::zeros(zp, 0);
        while out.len() < n {
            let want = n - out.len();
            let cand_n = want + want / 8 + 4;
            let cand = self.random_2of3(cand_n, zp);
            let pw = self.pow_shared(&cand, self.params.p - 1)?;
            let nz = self.open(&pw)?;
            let keep: Vec<usize> = (0..cand_n).filter(|&i| nz[i] == 1).take(want).collect();
            out = Shares::concat(&[&out, &cand.gather(&keep)])?;
        }
        Ok(out)
    }

    /// x^e by square-and-multiply; squarings and the running product share rounds.
    fn pow_shared(&mut self, x: &Shares, e: u64) -> Result<Shares> {
        let mut acc: Option<Shares> = None;
        let mut sq = x.clone();
        let mut e = e;
        while e > 0 {
            let take = e & 1 == 1;
            e >>= 1;
            match (take, acc.take(), e > 0) {
                (true, None, more) => {
                    acc = Some(sq.clone());
                    if more {
                        sq = self.mult(&sq, &sq)?;
                    }
                }
                (true, Some(a), true) => {
                    let r = self.mult_batch(&[(&a, &sq), (&sq, &sq)])?;
                    let [a, s]: [Shares; 2] = r.try_into().expect("two products");
                    acc = Some(a);
                    sq = s;
                }
                (true, Some(a), false) => acc = Some(self.mult(&a, &sq)?),
                (false, a, _) => {
                    acc = a;
                    sq = self.mult(&sq, &sq)?;
                }
            }
        }
        Ok(acc.unwrap_or_else(|| self.public(x.modulus, &vec![1; x.len()])))
    }

    pub(crate) fn gen_bit_pairs(&mut self, n: usize) -> Result<BitPairs> {
        let c2 = self.random_2of3(n, Modulus::BINARY);
        let cl = self.bit_inject(&[(&c2, self.params.l())])?.remove(0);
        Ok(BitPairs { c2, cl })
    }

    pub(crate) fn gen_compare_rand(&mut self, n: usize) -> Result<CompareRand> {
        let beta_2 = self.random_2of3(n, Modulus::BINARY);
        let beta_p = self.bit_inject(&[(&beta_2, self.params.zp())])?.remove(0);
        let m = self.nonzero_zp(n)?;
        Ok(CompareRand { beta_2, beta_p, m })
    }

    pub(crate) fn gen_trunc_pairs(&mut self, shifts: &[u32]) -> Result<TruncPairs> {
        let (l, zp) = (self.params.l(), self.params.zp());
        let n = shifts.len();
        let nb = self.params.ell as usize - 1;
        let width = shifts.iter().copied().max().unwrap_or(0) as usize;
        let bits = self.random_2of3(n * nb, Modulus::BINARY);
        let low_idx: Vec<usize> = (0..n)
            .flat_map(|k| (0..shifts[k] as usize).map(move |i| k * nb + i))
            .collect();
        let low = bits.gather(&low_idx);
        let beta = self.random_2of3(n, Modulus::BINARY);
        let mut inj = self.bit_inject(&[(&bits, l), (&low, zp), (&beta, l), (&beta, zp)])?;
        let beta_p = inj.pop().expect("4 outputs");
        let beta_l = inj.pop().expect("4 outputs");
        let low_p = inj.pop().expect("4 outputs");
        let bits_l = inj.pop().expect("4 outputs");

        let mut r = Shares::zeros(l, n);
        let mut r_shift = Shares::zeros(l, n);
        for k in 0..n {
            let d = shifts[k] as usize;
            for i in 0..nb {
                let (lo, hi) = (bits_l.lo[k * nb + i], bits_l.hi[k * nb + i]);
                let w = 1u64 << i;
                r.lo[k] = l.add(r.lo[k], l.mul(lo, w));
                r.hi[k] = l.add(r.hi[k], l.mul(hi, w));
                if i >= d {
                    let w = 1u64 << (i - d);
                    r_shift.lo[k] = l.add(r_shift.lo[k], l.mul(lo, w));
                    r_shift.hi[k] = l.add(r_shift.hi[k], l.mul(hi, w));
                }
            }
        }
        let mut r_bits = Shares::zeros(zp, n * width);
        let mut src = 0;
        for k in 0..n {
            for i in 0..shifts[k] as usize {
                r_bits.lo[k * width + i] = low_p.lo[src];
                r_bits.hi[k * width + i] = low_p.hi[src];
                src += 1;
            }
        }
        let m = self.nonzero_zp(n)?;
        Ok(TruncPairs {
            shifts: shifts.to_vec(),
            width,
            r,
            r_shift,
            r_bits,
            beta_p,
            beta_l,
            m,
        })
    }

    /// Random x with its bits in Z_p and the parity of the wrap of its three
    /// components, computed by a carry-save step and a ripple-carry adder in Z_2.
    pub(crate) fn gen_wrap_rand(&mut self, n: usize) -> Result<WrapRand> {
        let ell = self.params.ell as usize;
        let l = self.params.l();
        let z2 = Modulus::BINARY;
        let id = self.id;
        let x = self.random_2of3(n, l);

        // Component bits, position-major: bit i of element k at i·n + k.
        let comp_bits = |j: usize| -> Result<Shares> {
            let vals = x.component(id, j).map(|c| {
                (0..ell)
                    .flat_map(|i| c.iter().map(move |&v| (v >> i) & 1))
                    .collect::<Vec<u64>>()
            });
            Shares::from_component(id, j, vals.as_deref(), n * ell, z2)
        };
        let (a, b, c) = (comp_bits(0)?, comp_bits(1)?, comp_bits(2)?);
        let s = a.add(&b)?.add(&c)?;
        let ac = a.add(&c)?;
        let bc = b.add(&c)?;
        let maj = self.mult(&ac, &bc)?.add(&c)?;

        let col = |v: &Shares, i: usize| v.slice(i * n, (i + 1) * n);
        let mut carry = Shares::zeros(z2, n);
        let mut out_bits: Vec<Shares> = Vec::with_capacity(ell);
        for i in 0..ell {
            let si = col(&s, i);
            let ti = if i == 0 { Shares::zeros(z2, n) } else { col(&maj, i - 1) };
            out_bits.push(si.add(&ti)?.add(&carry)?);
            if i > 0 {
                let g = self.mult(&si.add(&carry)?, &ti.add(&carry)?)?;
                carry = g.add(&carry)?;
            }
        }
        let alpha = col(&maj, ell - 1).add(&carry)?;

        // Element-major for consumers: bit i of element k at k·ℓ + i.
        let idx: Vec<usize> = (0..n).flat_map(|k| (0..ell).map(move |i| i * n + k)).collect();
        let all = Shares::concat(&out_bits.iter().collect::<Vec<_>>())?.gather(&idx);
        let x_bits = self.bit_inject(&[(&all, self.params.zp())])?.remove(0);
        Ok(WrapRand { x, x_bits, alpha })
    }
}
