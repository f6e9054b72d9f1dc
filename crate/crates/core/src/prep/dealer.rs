use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{BitPairs, CompareRand, TruncPairs, WrapRand};
use crate::rings::{bit_decompose, wrap3, Modulus, RingParams};
use crate::rss::{random_element, share_secret, views_from_components, Shares};

/// Trusted-dealer generator. Every party runs an identical copy from the
/// common seed and keeps only its own view.
pub struct Dealer {
    params: RingParams,
    rng: ChaCha8Rng,
}

impl Dealer {
    pub fn new(params: RingParams, seed: u64, session: u64) -> Self {
        let mut h = Sha256::new();
        h.update(b"falcon-dealer");
        h.update(seed.to_le_bytes());
        h.update(session.to_le_bytes());
        Dealer {
            params,
            rng: ChaCha8Rng::from_seed(h.finalize().into()),
        }
    }

    fn share(&mut self, vals: &[u64], m: Modulus) -> [Shares; 3] {
        share_secret(vals, m, &mut self.rng)
    }

    /// Truncation material built from the given `r` values.
    pub fn trunc_pairs_from(&mut self, r: &[u64], shifts: &[u32]) -> Vec<TruncPairs> {
        let p = self.params;
        let width = shifts.iter().copied().max().unwrap_or(0) as usize;
        let n = r.len();
        let r_shift: Vec<u64> = r.iter().zip(shifts).map(|(&r, &d)| r >> d).collect();
        let mut bits = vec![0u64; n * width];
        for (k, (&r, &d)) in r.iter().zip(shifts).enumerate() {
            for i in 0..d as usize {
                bits[k * width + i] = (r >> i) & 1;
            }
        }
        let beta: Vec<u64> = (0..n).map(|_| self.rng.gen_range(0..2)).collect();
        let m: Vec<u64> = (0..n).map(|_| self.rng.gen_range(1..p.p)).collect();
        let sr = self.share(r, p.l());
        let ss = self.share(&r_shift, p.l());
        let sb = self.share(&bits, p.zp());
        let sbp = self.share(&beta, p.zp());
        let sbl = self.share(&beta, p.l());
        let sm = self.share(&m, p.zp());
        let parts = sr.into_iter().zip(ss).zip(sb).zip(sbp).zip(sbl).zip(sm);
        parts
            .map(|(((((r, r_shift), r_bits), beta_p), beta_l), m)| TruncPairs {
                shifts: shifts.to_vec(),
                width,
                r,
                r_shift,
                r_bits,
                beta_p,
                beta_l,
                m,
            })
            .collect()
    }

    pub fn trunc_pairs(&mut self, shifts: &[u32]) -> Vec<TruncPairs> {
        let half = 1u64 << (self.params.ell - 1);
        let r: Vec<u64> = (0..shifts.len()).map(|_| self.rng.gen_range(0..half)).collect();
        self.trunc_pairs_from(&r, shifts)
    }

    pub fn compare_rand(&mut self, n: usize) -> Vec<CompareRand> {
        let p = self.params;
        let beta: Vec<u64> = (0..n).map(|_| self.rng.gen_range(0..2)).collect();
        let m: Vec<u64> = (0..n).map(|_| self.rng.gen_range(1..p.p)).collect();
        let s2 = self.share(&beta, p.z2());
        let sp = self.share(&beta, p.zp());
        let sm = self.share(&m, p.zp());
        (0..3)
            .map(|i| CompareRand {
                beta_2: s2[i].clone(),
                beta_p: sp[i].clone(),
                m: sm[i].clone(),
            })
            .collect()
    }

    pub fn wrap_rand(&mut self, n: usize) -> Vec<WrapRand> {
        let p = self.params;
        let l = p.l();
        let comps: [Vec<u64>; 3] =
            std::array::from_fn(|_| (0..n).map(|_| random_element(&mut self.rng, l)).collect());
        let mut x = Vec::with_capacity(n);
        let mut alpha = Vec::with_capacity(n);
        let mut bits = Vec::with_capacity(n * p.ell as usize);
        for k in 0..n {
            let (a, b, c) = (comps[0][k], comps[1][k], comps[2][k]);
            let v = l.add(l.add(a, b), c);
            x.push(v);
            alpha.push(wrap3(a, b, c, l) as u64);
            bits.extend(bit_decompose(v, p.ell).into_iter().map(u64::from));
        }
        let sx = views_from_components(l, comps);
        let sb = self.share(&bits, p.zp());
        let sa = self.share(&alpha, p.z2());
        (0..3)
            .map(|i| WrapRand {
                x: sx[i].clone(),
                x_bits: sb[i].clone(),
                alpha: sa[i].clone(),
            })
            .collect()
    }

    pub fn bit_pairs(&mut self, n: usize) -> Vec<BitPairs> {
        let p = self.params;
        let c: Vec<u64> = (0..n).map(|_| self.rng.gen_range(0..2)).collect();
        let s2 = self.share(&c, p.z2());
        let sl = self.share(&c, p.l());
        (0..3)
            .map(|i| BitPairs {
                c2: s2[i].clone(),
                cl: sl[i].clone(),
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rings::wrap3_exact;
    use crate::rss::combine;

    fn all(v: &[TruncPairs], f: impl Fn(&TruncPairs) -> &Shares) -> Vec<u64> {
        combine(&[f(&v[0]).clone(), f(&v[1]).clone(), f(&v[2]).clone()]).unwrap()
    }

    #[test]
    fn trunc_pair_examples() {
        let mut d = Dealer::new(RingParams::default(), 3, 1);
        let v = d.trunc_pairs_from(&[8192 * 5, 0], &[13, 13]);
        assert_eq!(all(&v, |t| &t.r_shift), vec![5, 0]);
        assert_eq!(all(&v, |t| &t.r), vec![40960, 0]);
    }

    #[test]
    fn trunc_pairs_reconstruct() {
        let params = RingParams::default();
        let mut d = Dealer::new(params, 4, 1);
        let shifts: Vec<u32> = (0..1000).map(|i| 1 + (i % 20) as u32).collect();
        let v = d.trunc_pairs(&shifts);
        let r = all(&v, |t| &t.r);
        let rs = all(&v, |t| &t.r_shift);
        let bits = all(&v, |t| &t.r_bits);
        let bp = all(&v, |t| &t.beta_p);
        let bl = all(&v, |t| &t.beta_l);
        let m = all(&v, |t| &t.m);
        let w = v[0].width;
        for k in 0..shifts.len() {
            assert!(r[k] < 1 << 31);
            assert_eq!(rs[k], r[k] >> shifts[k]);
            let low: u64 = (0..w).map(|i| bits[k * w + i] << i).sum();
            assert_eq!(low, r[k] & ((1 << shifts[k]) - 1));
            assert_eq!(bp[k], bl[k]);
            assert!(m[k] != 0);
        }
    }

    #[test]
    fn wrap_rand_alpha_matches_components() {
        let params = RingParams::new(8, 37, 4).unwrap();
        let mut d = Dealer::new(params, 5, 1);
        let v = d.wrap_rand(100);
        let x = combine(&[v[0].x.clone(), v[1].x.clone(), v[2].x.clone()]).unwrap();
        let bits = combine(&[v[0].x_bits.clone(), v[1].x_bits.clone(), v[2].x_bits.clone()]).unwrap();
        let alpha = combine(&[v[0].alpha.clone(), v[1].alpha.clone(), v[2].alpha.clone()]).unwrap();
        for k in 0..100 {
            let comps = [v[0].x.lo[k], v[1].x.lo[k], v[2].x.lo[k]];
            let l = Modulus::Pow2(8);
            assert_eq!(alpha[k], (wrap3_exact(comps[0], comps[1], comps[2], l) % 2) as u64);
            let composed: u64 = (0..8).map(|i| bits[k * 8 + i] << i).sum();
            assert_eq!(composed, x[k]);
        }
    }

    #[test]
    fn same_seed_same_stream() {
        let p = RingParams::default();
        let a = Dealer::new(p, 9, 2).bit_pairs(10);
        let b = Dealer::new(p, 9, 2).bit_pairs(10);
        assert_eq!(a, b);
        let c = Dealer::new(p, 10, 2).bit_pairs(10);
        assert_ne!(a, c);
    }
}
