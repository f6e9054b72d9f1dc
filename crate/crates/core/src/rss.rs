//! 2-out-of-3 replicated secret sharing: share containers, local linear
//! algebra, dealer-side sharing and the keyed PRF streams.

use std::fmt;

use aes::cipher::{generic_array::GenericArray, BlockEncrypt, KeyInit};
use aes::Aes128;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rings::{Modulus, RingElement};

/// Party index, stored 0-based and printed as P1..P3.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PartyId(u8);

impl PartyId {
    pub const ALL: [PartyId; 3] = [PartyId(0), PartyId(1), PartyId(2)];

    pub fn new(index: usize) -> Result<Self> {
        if index < 3 {
            Ok(PartyId(index as u8))
        } else {
            Err(Error::Config(format!("party index {index} not in 0..3")))
        }
    }

    /// From the 1-based number used on the command line.
    pub fn from_number(n: usize) -> Result<Self> {
        if (1..=3).contains(&n) {
            Ok(PartyId((n - 1) as u8))
        } else {
            Err(Error::Config(format!("party number {n} not in 1..=3")))
        }
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn number(self) -> usize {
        self.0 as usize + 1
    }

    pub fn next(self) -> PartyId {
        PartyId((self.0 + 1) % 3)
    }

    pub fn prev(self) -> PartyId {
        PartyId((self.0 + 2) % 3)
    }

    /// Whether this party holds RSS component `j` (as lo or hi).
    pub fn holds(self, j: usize) -> bool {
        j == self.index() || j == (self.index() + 1) % 3
    }
}

impl fmt::Display for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P{}", self.number())
    }
}

/// One party's view of a single shared scalar: components (x_i, x_{i+1}).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RssShare {
    pub lo: RingElement,
    pub hi: RingElement,
}

impl RssShare {
    pub fn modulus(&self) -> Modulus {
        self.lo.modulus
    }
}

/// One party's view of a vector of shared values.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shares {
    pub modulus: Modulus,
    pub lo: Vec<u64>,
    pub hi: Vec<u64>,
}

impl Shares {
    pub fn new(modulus: Modulus, lo: Vec<u64>, hi: Vec<u64>) -> Self {
        debug_assert_eq!(lo.len(), hi.len());
        Shares { modulus, lo, hi }
    }

    pub fn zeros(modulus: Modulus, n: usize) -> Self {
        Shares::new(modulus, vec![0; n], vec![0; n])
    }

    pub fn len(&self) -> usize {
        self.lo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lo.is_empty()
    }

    pub fn get(&self, i: usize) -> RssShare {
        RssShare {
            lo: RingElement::new(self.lo[i], self.modulus),
            hi: RingElement::new(self.hi[i], self.modulus),
        }
    }

    pub fn from_scalars(items: &[RssShare]) -> Result<Self> {
        let m = items
            .first()
            .map(|s| s.modulus())
            .ok_or_else(|| Error::Invalid("empty share list".into()))?;
        let mut out = Shares::zeros(m, 0);
        for s in items {
            m.check_same(s.lo.modulus)?;
            m.check_same(s.hi.modulus)?;
            out.lo.push(s.lo.value);
            out.hi.push(s.hi.value);
        }
        Ok(out)
    }

    fn zip(&self, other: &Shares, f: impl Fn(u64, u64) -> u64) -> Result<Shares> {
        self.modulus.check_same(other.modulus)?;
        if self.len() != other.len() {
            return Err(Error::Shape(format!("lengths {} and {}", self.len(), other.len())));
        }
        Ok(Shares::new(
            self.modulus,
            self.lo.iter().zip(&other.lo).map(|(&a, &b)| f(a, b)).collect(),
            self.hi.iter().zip(&other.hi).map(|(&a, &b)| f(a, b)).collect(),
        ))
    }

    pub fn add(&self, other: &Shares) -> Result<Shares> {
        let m = self.modulus;
        self.zip(other, |a, b| m.add(a, b))
    }

    pub fn sub(&self, other: &Shares) -> Result<Shares> {
        let m = self.modulus;
        self.zip(other, |a, b| m.sub(a, b))
    }

    pub fn neg(&self) -> Shares {
        self.map(|v| self.modulus.neg(v))
    }

    pub fn map(&self, f: impl Fn(u64) -> u64) -> Shares {
        Shares::new(
            self.modulus,
            self.lo.iter().map(|&v| f(v)).collect(),
            self.hi.iter().map(|&v| f(v)).collect(),
        )
    }

    pub fn mul_const(&self, c: u64) -> Shares {
        let m = self.modulus;
        let c = m.reduce(c);
        self.map(|v| m.mul(v, c))
    }

    /// Element-wise product with public values.
    pub fn mul_public(&self, c: &[u64]) -> Result<Shares> {
        if c.len() != self.len() {
            return Err(Error::Shape(format!("lengths {} and {}", self.len(), c.len())));
        }
        let m = self.modulus;
        Ok(Shares::new(
            m,
            self.lo.iter().zip(c).map(|(&v, &c)| m.mul(v, c)).collect(),
            self.hi.iter().zip(c).map(|(&v, &c)| m.mul(v, c)).collect(),
        ))
    }

    /// Adds public constants through component 0 (P1's lo and P3's hi).
    pub fn add_public(&self, party: PartyId, c: &[u64]) -> Result<Shares> {
        if c.len() != self.len() {
            return Err(Error::Shape(format!("lengths {} and {}", self.len(), c.len())));
        }
        let m = self.modulus;
        let mut out = self.clone();
        match party.index() {
            0 => out.lo.iter_mut().zip(c).for_each(|(v, &c)| *v = m.add(*v, m.reduce(c))),
            2 => out.hi.iter_mut().zip(c).for_each(|(v, &c)| *v = m.add(*v, m.reduce(c))),
            _ => {}
        }
        Ok(out)
    }

    pub fn add_scalar(&self, party: PartyId, c: u64) -> Shares {
        self.add_public(party, &vec![c; self.len()]).expect("lengths match")
    }

    /// Sharing of public values with zero communication.
    pub fn public(party: PartyId, modulus: Modulus, c: &[u64]) -> Shares {
        Shares::zeros(modulus, c.len())
            .add_public(party, c)
            .expect("lengths match")
    }

    /// ⟦a·x + b·y + c⟧.
    pub fn linear_combine(
        party: PartyId,
        a: u64,
        x: &Shares,
        b: u64,
        y: &Shares,
        c: u64,
    ) -> Result<Shares> {
        Ok(x.mul_const(a).add(&y.mul_const(b))?.add_scalar(party, c))
    }

    /// XOR with public bits: x + b − 2bx, local.
    pub fn xor_public(&self, party: PartyId, bits: &[u64]) -> Result<Shares> {
        let m = self.modulus;
        let factors: Vec<u64> = bits
            .iter()
            .map(|&b| if b & 1 == 1 { m.neg(1) } else { 1 })
            .collect();
        let consts: Vec<u64> = bits.iter().map(|&b| b & 1).collect();
        self.mul_public(&factors)?.add_public(party, &consts)
    }

    /// Sharing whose component `j` carries `values` and whose other components
    /// are zero; only the two holders of component `j` pass `Some`.
    pub fn from_component(
        party: PartyId,
        j: usize,
        values: Option<&[u64]>,
        n: usize,
        modulus: Modulus,
    ) -> Result<Shares> {
        let mut out = Shares::zeros(modulus, n);
        if !party.holds(j) {
            return Ok(out);
        }
        let values = values.ok_or_else(|| {
            Error::Invalid(format!("{party} holds component {j} but passed no values"))
        })?;
        if values.len() != n {
            return Err(Error::Shape(format!("{} values for {n} slots", values.len())));
        }
        let slot = if j == party.index() { &mut out.lo } else { &mut out.hi };
        for (s, &v) in slot.iter_mut().zip(values) {
            *s = modulus.reduce(v);
        }
        Ok(out)
    }

    /// The value of component `j` if this party holds it.
    pub fn component(&self, party: PartyId, j: usize) -> Option<&[u64]> {
        if j == party.index() {
            Some(&self.lo)
        } else if j == (party.index() + 1) % 3 {
            Some(&self.hi)
        } else {
            None
        }
    }

    pub fn gather(&self, idx: &[usize]) -> Shares {
        Shares::new(
            self.modulus,
            idx.iter().map(|&i| self.lo[i]).collect(),
            idx.iter().map(|&i| self.hi[i]).collect(),
        )
    }

    pub fn slice(&self, start: usize, end: usize) -> Shares {
        Shares::new(
            self.modulus,
            self.lo[start..end].to_vec(),
            self.hi[start..end].to_vec(),
        )
    }

    pub fn concat(parts: &[&Shares]) -> Result<Shares> {
        let m = parts
            .first()
            .map(|s| s.modulus)
            .ok_or_else(|| Error::Invalid("nothing to concatenate".into()))?;
        let mut out = Shares::zeros(m, 0);
        for p in parts {
            m.check_same(p.modulus)?;
            out.lo.extend_from_slice(&p.lo);
            out.hi.extend_from_slice(&p.hi);
        }
        Ok(out)
    }

    pub fn repeat_each(&self, times: usize) -> Shares {
        let idx: Vec<usize> = (0..self.len()).flat_map(|i| std::iter::repeat_n(i, times)).collect();
        self.gather(&idx)
    }

    /// Local cross terms of a product: the 3-of-3 additive share z_i.
    pub fn mul_local(&self, other: &Shares) -> Result<Vec<u64>> {
        self.modulus.check_same(other.modulus)?;
        if self.len() != other.len() {
            return Err(Error::Shape(format!("lengths {} and {}", self.len(), other.len())));
        }
        let m = self.modulus;
        let cross = |i: usize| {
            let (xl, xh, yl, yh) = (self.lo[i], self.hi[i], other.lo[i], other.hi[i]);
            xl.wrapping_mul(yl.wrapping_add(yh)).wrapping_add(xh.wrapping_mul(yl))
        };
        Ok(match m {
            Modulus::Pow2(_) => (0..self.len()).map(|i| cross(i) & m.mask()).collect(),
            // components are below p < 2^31, so the sum of products fits
            Modulus::Prime(p) if p < 1 << 16 => {
                let r = SmallMod::new(p);
                (0..self.len()).map(|i| r.reduce(cross(i))).collect()
            }
            Modulus::Prime(_) => (0..self.len())
                .map(|i| {
                    let (xl, xh, yl, yh) = (self.lo[i], self.hi[i], other.lo[i], other.hi[i]);
                    m.add(m.mul(xl, m.add(yl, yh)), m.mul(xh, yl))
                })
                .collect(),
        })
    }
}

/// Multiply-shift reduction by a small modulus, exact for inputs below 2^32.
#[derive(Clone, Copy, Debug)]
pub struct SmallMod {
    p: u64,
    m: u64,
}

impl SmallMod {
    pub fn new(p: u64) -> Self {
        debug_assert!(p > 1 && p < 1 << 32);
        SmallMod { p, m: u64::MAX / p + 1 }
    }

    #[inline]
    pub fn reduce(self, a: u64) -> u64 {
        debug_assert!(a >> 32 == 0);
        let low = self.m.wrapping_mul(a);
        ((low as u128 * self.p as u128) >> 64) as u64
    }
}

/// Dealer-side sharing of plaintext values into three party views.
pub fn share_secret<R: Rng + ?Sized>(values: &[u64], modulus: Modulus, rng: &mut R) -> [Shares; 3] {
    let n = values.len();
    let mut a = vec![0u64; n];
    let mut b = vec![0u64; n];
    rng.fill(&mut a[..]);
    rng.fill(&mut b[..]);
    let reduce = |v: &mut u64| {
        *v = match modulus {
            Modulus::Pow2(_) => *v & modulus.mask(),
            Modulus::Prime(p) => *v % p,
        }
    };
    a.iter_mut().for_each(reduce);
    b.iter_mut().for_each(reduce);
    let c: Vec<u64> = values
        .iter()
        .zip(a.iter().zip(&b))
        .map(|(&v, (&a, &b))| modulus.sub(modulus.sub(modulus.reduce(v), a), b))
        .collect();
    views_from_components(modulus, [a, b, c])
}

pub fn random_element<R: Rng + ?Sized>(rng: &mut R, modulus: Modulus) -> u64 {
    match modulus {
        Modulus::Pow2(_) => rng.gen::<u64>() & modulus.mask(),
        Modulus::Prime(p) => rng.next_u64() % p,
    }
}

/// Builds the three views (x_i, x_{i+1}) from full component vectors.
pub fn views_from_components(modulus: Modulus, c: [Vec<u64>; 3]) -> [Shares; 3] {
    let [c0, c1, c2] = c;
    [
        Shares::new(modulus, c0.clone(), c1.clone()),
        Shares::new(modulus, c1, c2.clone()),
        Shares::new(modulus, c2, c0),
    ]
}

/// Reconstructs from all three views, checking that replicated components agree.
pub fn combine(views: &[Shares; 3]) -> Result<Vec<u64>> {
    let m = views[0].modulus;
    for i in 0..3 {
        m.check_same(views[i].modulus)?;
        if views[i].hi != views[(i + 1) % 3].lo {
            return Err(Error::Invalid(format!(
                "views of P{} and P{} disagree on component {}",
                i + 1,
                (i + 1) % 3 + 1,
                (i + 1) % 3
            )));
        }
    }
    Ok((0..views[0].len())
        .map(|k| m.add(m.add(views[0].lo[k], views[1].lo[k]), views[2].lo[k]))
        .collect())
}

/// An AES-128 counter-mode stream keyed by a seed shared between two parties.
#[derive(Clone)]
pub struct PrfStream {
    cipher: Aes128,
    counter: u64,
}

impl PrfStream {
    pub fn new(seed: [u8; 16]) -> Self {
        PrfStream {
            cipher: Aes128::new(&GenericArray::from(seed)),
            counter: 0,
        }
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    pub fn words(&mut self, n: usize) -> Vec<u64> {
        let mut blocks: Vec<_> = (0..n.div_ceil(2) as u64)
            .map(|i| GenericArray::from(((self.counter + i) as u128).to_le_bytes()))
            .collect();
        self.counter += blocks.len() as u64;
        self.cipher.encrypt_blocks(&mut blocks);
        let mut out: Vec<u64> = blocks
            .iter()
            .flat_map(|b| [0, 8].map(|o| u64::from_le_bytes(b[o..o + 8].try_into().expect("8 bytes"))))
            .collect();
        out.truncate(n);
        out
    }

    /// `n` pseudorandom elements of `modulus`.
    pub fn elements(&mut self, n: usize, modulus: Modulus) -> Vec<u64> {
        match modulus {
            Modulus::Pow2(1) => {
                let words = self.words(n.div_ceil(64));
                (0..n).map(|i| (words[i / 64] >> (i % 64)) & 1).collect()
            }
            Modulus::Pow2(_) => self.words(n).into_iter().map(|w| w & modulus.mask()).collect(),
            Modulus::Prime(p) => self.words(n).into_iter().map(|w| w % p).collect(),
        }
    }
}

/// A party's two PRF streams: k_i (shared with next) and k_{i−1} (shared with prev).
#[derive(Clone)]
pub struct PrfState {
    pub with_next: PrfStream,
    pub with_prev: PrfStream,
}

impl PrfState {
    pub fn new(key_with_next: [u8; 16], key_with_prev: [u8; 16]) -> Self {
        PrfState {
            with_next: PrfStream::new(key_with_next),
            with_prev: PrfStream::new(key_with_prev),
        }
    }

    /// α_i = F_{k_i} − F_{k_{i−1}}; the three values sum to zero.
    pub fn zero_3of3(&mut self, n: usize, modulus: Modulus) -> Vec<u64> {
        let a = self.with_next.elements(n, modulus);
        let b = self.with_prev.elements(n, modulus);
        a.iter().zip(&b).map(|(&a, &b)| modulus.sub(a, b)).collect()
    }

    /// A random RSS sharing: component i from k_{i−1}, component i+1 from k_i.
    pub fn random_2of3(&mut self, n: usize, modulus: Modulus) -> Shares {
        let hi = self.with_next.elements(n, modulus);
        let lo = self.with_prev.elements(n, modulus);
        Shares::new(modulus, lo, hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    const M: Modulus = Modulus::Pow2(8);

    fn keyed_states() -> [PrfState; 3] {
        let k = [[1u8; 16], [2u8; 16], [3u8; 16]];
        [
            PrfState::new(k[0], k[2]),
            PrfState::new(k[1], k[0]),
            PrfState::new(k[2], k[1]),
        ]
    }

    #[test]
    fn party_ring() {
        for p in PartyId::ALL {
            assert_eq!(p.next().next().next(), p);
            assert_eq!(p.next().prev(), p);
        }
        assert_eq!(PartyId::from_number(1).unwrap().to_string(), "P1");
        assert!(PartyId::from_number(4).is_err());
    }

    #[test]
    fn small_mod_matches_remainder() {
        for p in [2u64, 37, 67, 65521] {
            let r = SmallMod::new(p);
            for a in (0..200_000u64).chain([u32::MAX as u64 - 1, u32::MAX as u64]) {
                assert_eq!(r.reduce(a), a % p);
            }
        }
    }

    #[test]
    fn share_examples() {
        let views = views_from_components(M, [vec![3], vec![5], vec![250]]);
        assert_eq!(combine(&views).unwrap(), vec![2]);
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        for v in [0u64, 255, 17] {
            assert_eq!(combine(&share_secret(&[v], M, &mut rng)).unwrap(), vec![v]);
        }
    }

    #[test]
    fn linear_examples() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let x = share_secret(&[2], M, &mut rng);
        let y = share_secret(&[3], M, &mut rng);
        let run = |a: u64, b: u64, c: u64| {
            let v: Vec<Shares> = PartyId::ALL
                .iter()
                .map(|&p| Shares::linear_combine(p, a, &x[p.index()], b, &y[p.index()], c).unwrap())
                .collect();
            combine(&[v[0].clone(), v[1].clone(), v[2].clone()]).unwrap()[0]
        };
        assert_eq!(run(1, 1, 0), 5);
        assert_eq!(run(0, 0, 7), 7);
        let x5 = share_secret(&[5], M, &mut rng);
        let neg: Vec<Shares> = PartyId::ALL
            .iter()
            .map(|&p| Shares::linear_combine(p, M.neg(1), &x5[p.index()], 0, &x5[p.index()], 0).unwrap())
            .collect();
        assert_eq!(combine(&[neg[0].clone(), neg[1].clone(), neg[2].clone()]).unwrap(), vec![251]);
    }

    #[test]
    fn local_bit_share_examples() {
        let z2 = Modulus::BINARY;
        let build = |j: usize, b: u64| -> [Shares; 3] {
            let v: Vec<Shares> = PartyId::ALL
                .iter()
                .map(|&p| {
                    let vals = if p.holds(j) { Some(&[b][..]) } else { None };
                    Shares::from_component(p, j, vals, 1, z2).unwrap()
                })
                .collect();
            [v[0].clone(), v[1].clone(), v[2].clone()]
        };
        assert_eq!(combine(&build(0, 1)).unwrap(), vec![1]);
        assert_eq!(combine(&build(1, 0)).unwrap(), vec![0]);
        for bits in 0..8u64 {
            let parts: Vec<[Shares; 3]> = (0..3).map(|j| build(j, (bits >> j) & 1)).collect();
            let sum: Vec<Shares> = (0..3)
                .map(|p| parts[0][p].add(&parts[1][p]).unwrap().add(&parts[2][p]).unwrap())
                .collect();
            let expect = (bits & 1) ^ ((bits >> 1) & 1) ^ ((bits >> 2) & 1);
            assert_eq!(combine(&[sum[0].clone(), sum[1].clone(), sum[2].clone()]).unwrap(), vec![expect]);
        }
    }

    #[test]
    fn zero_sharing_sums_to_zero() {
        let mut st = keyed_states();
        for m in [M, Modulus::Pow2(64), Modulus::Prime(37), Modulus::BINARY] {
            let a: Vec<Vec<u64>> = st.iter_mut().map(|s| s.zero_3of3(50, m)).collect();
            for k in 0..50 {
                assert_eq!(m.add(m.add(a[0][k], a[1][k]), a[2][k]), 0);
            }
        }
    }

    #[test]
    fn random_2of3_is_consistent() {
        let mut st = keyed_states();
        let v: Vec<Shares> = st.iter_mut().map(|s| s.random_2of3(20, M)).collect();
        assert!(combine(&[v[0].clone(), v[1].clone(), v[2].clone()]).is_ok());
    }

    #[test]
    fn prf_is_deterministic_per_counter() {
        let mut a = PrfStream::new([7; 16]);
        let mut b = PrfStream::new([7; 16]);
        assert_eq!(a.words(5), b.words(5));
        assert_eq!(a.counter(), 3);
        let mut c = PrfStream::new([8; 16]);
        assert_ne!(PrfStream::new([7; 16]).words(4), c.words(4));
    }

    #[test]
    fn mixing_moduli_rejected() {
        let a = Shares::zeros(M, 2);
        let b = Shares::zeros(Modulus::Prime(37), 2);
        assert!(a.add(&b).is_err());
        assert!(a.add(&Shares::zeros(M, 3)).is_err());
    }
}
