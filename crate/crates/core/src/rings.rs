//! Arithmetic over Z_{2^ℓ}, Z_p and Z_2, fixed-point encoding, and the plain
//! wrap functions.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A ring modulus. `Pow2(1)` is the binary field.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Modulus {
    Pow2(u32),
    Prime(u64),
}

impl fmt::Display for Modulus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Modulus::Pow2(b) => write!(f, "Z_2^{b}"),
            Modulus::Prime(p) => write!(f, "Z_{p}"),
        }
    }
}

impl Modulus {
    pub const BINARY: Modulus = Modulus::Pow2(1);

    /// The modulus as an integer (2^64 fits in u128).
    pub fn order(self) -> u128 {
        match self {
            Modulus::Pow2(b) => 1u128 << b,
            Modulus::Prime(p) => p as u128,
        }
    }

    pub fn is_binary(self) -> bool {
        self == Modulus::BINARY
    }

    #[inline]
    pub fn mask(self) -> u64 {
        match self {
            Modulus::Pow2(64) => u64::MAX,
            Modulus::Pow2(b) => (1u64 << b) - 1,
            Modulus::Prime(_) => u64::MAX,
        }
    }

    #[inline]
    pub fn reduce(self, v: u64) -> u64 {
        match self {
            Modulus::Pow2(_) => v & self.mask(),
            Modulus::Prime(p) => v % p,
        }
    }

    #[inline]
    pub fn reduce_wide(self, v: u128) -> u64 {
        match self {
            Modulus::Pow2(_) => v as u64 & self.mask(),
            Modulus::Prime(p) if v >> 64 == 0 => v as u64 % p,
            Modulus::Prime(p) => (v % p as u128) as u64,
        }
    }

    /// Reduces a signed integer into `[0, m)`.
    pub fn from_i64(self, v: i64) -> u64 {
        match self {
            Modulus::Pow2(_) => (v as u64) & self.mask(),
            Modulus::Prime(p) => v.rem_euclid(p as i64) as u64,
        }
    }

    #[inline]
    pub fn add(self, a: u64, b: u64) -> u64 {
        match self {
            Modulus::Pow2(_) => a.wrapping_add(b) & self.mask(),
            Modulus::Prime(p) => {
                let s = a + b;
                if s >= p {
                    s - p
                } else {
                    s
                }
            }
        }
    }

    #[inline]
    pub fn sub(self, a: u64, b: u64) -> u64 {
        match self {
            Modulus::Pow2(_) => a.wrapping_sub(b) & self.mask(),
            Modulus::Prime(p) => {
                if a >= b {
                    a - b
                } else {
                    a + p - b
                }
            }
        }
    }

    #[inline]
    pub fn neg(self, a: u64) -> u64 {
        self.sub(0, a)
    }

    #[inline]
    pub fn mul(self, a: u64, b: u64) -> u64 {
        match self {
            Modulus::Pow2(_) => a.wrapping_mul(b) & self.mask(),
            Modulus::Prime(p) if (a | b) >> 32 == 0 => (a * b) % p,
            Modulus::Prime(p) => ((a as u128 * b as u128) % p as u128) as u64,
        }
    }

    pub fn pow(self, mut base: u64, mut exp: u64) -> u64 {
        let mut acc = self.reduce(1);
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            exp >>= 1;
        }
        acc
    }

    /// Bytes used to serialize `n` elements.
    pub fn wire_len(self, n: usize) -> usize {
        match self {
            Modulus::Pow2(1) => n.div_ceil(8),
            Modulus::Pow2(b) => n * (b as usize).div_ceil(8),
            Modulus::Prime(p) => n * elem_bytes_prime(p),
        }
    }

    /// Appends the little-endian wire form of `vals`.
    pub fn write(self, vals: &[u64], out: &mut Vec<u8>) {
        match self {
            Modulus::Pow2(1) => {
                for chunk in vals.chunks(8) {
                    let mut byte = 0u8;
                    for (i, v) in chunk.iter().enumerate() {
                        byte |= ((v & 1) as u8) << i;
                    }
                    out.push(byte);
                }
            }
            _ => match self.wire_len(1) {
                1 => out.extend(vals.iter().map(|&v| v as u8)),
                8 => out.extend(vals.iter().flat_map(|v| v.to_le_bytes())),
                w => {
                    for v in vals {
                        out.extend_from_slice(&v.to_le_bytes()[..w]);
                    }
                }
            },
        }
    }

    /// Parses `n` elements, rejecting out-of-range values and stray padding bits.
    pub fn read(self, buf: &[u8], n: usize) -> Result<Vec<u64>> {
        if buf.len() != self.wire_len(n) {
            return Err(Error::Format(format!(
                "expected {} bytes for {n} elements of {self}, got {}",
                self.wire_len(n),
                buf.len()
            )));
        }
        let mut vals = Vec::with_capacity(n);
        match self {
            Modulus::Pow2(1) => {
                for i in 0..n {
                    vals.push(((buf[i / 8] >> (i % 8)) & 1) as u64);
                }
                if !n.is_multiple_of(8) && buf[n / 8] >> (n % 8) != 0 {
                    return Err(Error::Format("nonzero padding bits".into()));
                }
            }
            _ => {
                let w = self.wire_len(1);
                let order = self.order();
                match w {
                    1 => vals.extend(buf.iter().map(|&b| b as u64)),
                    8 => vals.extend(
                        buf.chunks_exact(8)
                            .map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes"))),
                    ),
                    _ => vals.extend(buf.chunks_exact(w).map(|chunk| {
                        let mut le = [0u8; 8];
                        le[..w].copy_from_slice(chunk);
                        u64::from_le_bytes(le)
                    })),
                }
                if let Some(v) = vals.iter().find(|&&v| v as u128 >= order) {
                    return Err(Error::Format(format!("value {v} out of range for {self}")));
                }
            }
        }
        Ok(vals)
    }

    pub fn check_same(self, other: Modulus) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::ModulusMismatch(self.to_string(), other.to_string()))
        }
    }
}

fn elem_bytes_prime(p: u64) -> usize {
    let bits = 64 - (p - 1).leading_zeros() as usize;
    bits.div_ceil(8).max(1)
}

pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    true
}

pub fn next_prime_above(n: u64) -> u64 {
    let mut c = n + 1;
    while !is_prime(c) {
        c += 1;
    }
    c
}

/// Ring configuration shared by every party of a session.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RingParams {
    pub ell: u32,
    pub p: u64,
    pub fp: u32,
}

impl Default for RingParams {
    fn default() -> Self {
        RingParams {
            ell: 32,
            p: 37,
            fp: 13,
        }
    }
}

impl RingParams {
    pub fn new(ell: u32, p: u64, fp: u32) -> Result<Self> {
        let params = RingParams { ell, p, fp };
        params.validate()?;
        Ok(params)
    }

    /// Picks the default prime: 37, or the smallest prime above ℓ+2 when that is larger.
    pub fn with_bits(ell: u32, fp: u32) -> Result<Self> {
        let p = next_prime_above(ell as u64 + 2).max(37);
        Self::new(ell, p, fp)
    }

    pub fn validate(&self) -> Result<()> {
        if !(8..=64).contains(&self.ell) {
            return Err(Error::Config(format!("ring bits {} outside [8, 64]", self.ell)));
        }
        if !is_prime(self.p) || self.p > u32::MAX as u64 {
            return Err(Error::Config(format!("{} is not a usable prime", self.p)));
        }
        if self.p <= self.ell as u64 + 2 {
            return Err(Error::Config(format!(
                "prime {} must exceed ell + 2 = {}",
                self.p,
                self.ell + 2
            )));
        }
        if self.fp == 0 || self.fp + 2 >= self.ell {
            return Err(Error::Config(format!(
                "fixed-point bits {} must lie in (0, {})",
                self.fp,
                self.ell - 2
            )));
        }
        Ok(())
    }

    pub fn l(&self) -> Modulus {
        Modulus::Pow2(self.ell)
    }

    pub fn zp(&self) -> Modulus {
        Modulus::Prime(self.p)
    }

    pub fn z2(&self) -> Modulus {
        Modulus::BINARY
    }

    /// Bytes per Z_L element on the wire.
    pub fn k(&self) -> usize {
        (self.ell as usize).div_ceil(8)
    }

    /// ⌈log2 ℓ⌉.
    pub fn log_ell(&self) -> u32 {
        32 - (self.ell - 1).leading_zeros()
    }

    pub fn signed(&self, v: u64) -> i64 {
        to_signed(v, self.ell)
    }

    pub fn from_signed(&self, v: i64) -> u64 {
        self.l().from_i64(v)
    }

    pub fn encode(&self, real: f64) -> Result<u64> {
        encode_fixed(real, self).map(|e| e.value)
    }

    pub fn encode_all(&self, reals: &[f64]) -> Result<Vec<u64>> {
        reals.iter().map(|&r| self.encode(r)).collect()
    }

    pub fn decode(&self, raw: u64) -> f64 {
        self.signed(raw) as f64 / (1u64 << self.fp) as f64
    }

    pub fn decode_all(&self, raws: &[u64]) -> Vec<f64> {
        raws.iter().map(|&r| self.decode(r)).collect()
    }

    /// Raw value of a public fixed-point constant, rounded to nearest.
    pub fn constant(&self, real: f64) -> u64 {
        self.from_signed((real * (1u64 << self.fp) as f64).round() as i64)
    }
}

/// Two's-complement reading of an ℓ-bit value.
pub fn to_signed(v: u64, ell: u32) -> i64 {
    if ell == 64 {
        v as i64
    } else {
        let shift = 64 - ell;
        ((v << shift) as i64) >> shift
    }
}

/// A scalar tagged with its modulus.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RingElement {
    pub value: u64,
    pub modulus: Modulus,
}

impl RingElement {
    pub fn new(value: u64, modulus: Modulus) -> Self {
        RingElement {
            value: modulus.reduce(value),
            modulus,
        }
    }

    pub fn add(self, other: RingElement) -> Result<RingElement> {
        self.modulus.check_same(other.modulus)?;
        Ok(RingElement::new(self.modulus.add(self.value, other.value), self.modulus))
    }

    pub fn sub(self, other: RingElement) -> Result<RingElement> {
        self.modulus.check_same(other.modulus)?;
        Ok(RingElement::new(self.modulus.sub(self.value, other.value), self.modulus))
    }

    pub fn mul(self, other: RingElement) -> Result<RingElement> {
        self.modulus.check_same(other.modulus)?;
        Ok(RingElement::new(self.modulus.mul(self.value, other.value), self.modulus))
    }

    pub fn neg(self) -> RingElement {
        RingElement::new(self.modulus.neg(self.value), self.modulus)
    }
}

/// Encodes a real as round(real · 2^{f_p}) in two's complement over Z_L.
pub fn encode_fixed(real: f64, params: &RingParams) -> Result<RingElement> {
    let half = 2f64.powi(params.ell as i32 - 1);
    let scaled = (real * 2f64.powi(params.fp as i32)).round();
    if !scaled.is_finite() || scaled >= half || scaled < -half {
        let bound = 2f64.powi((params.ell - 1 - params.fp) as i32);
        return Err(Error::Overflow(format!(
            "{real} outside [-{bound}, {bound}) for ell={} fp={}",
            params.ell, params.fp
        )));
    }
    Ok(RingElement::new(params.from_signed(scaled as i64), params.l()))
}

pub fn decode_fixed(e: RingElement, params: &RingParams) -> Result<f64> {
    params.l().check_same(e.modulus)?;
    Ok(params.decode(e.value))
}

/// 1 iff a1 + a2 ≥ m as integers.
pub fn wrap2(a1: u64, a2: u64, m: Modulus) -> u8 {
    (a1 as u128 + a2 as u128 >= m.order()) as u8
}

/// Number of times a1 + a2 + a3 overflows m.
pub fn wrap3_exact(a1: u64, a2: u64, a3: u64, m: Modulus) -> u8 {
    ((a1 as u128 + a2 as u128 + a3 as u128) / m.order()) as u8
}

pub fn wrap3(a1: u64, a2: u64, a3: u64, m: Modulus) -> u8 {
    wrap3_exact(a1, a2, a3, m) & 1
}

/// Bits of `x`, least significant first.
pub fn bit_decompose(x: u64, ell: u32) -> Vec<u8> {
    (0..ell).map(|i| ((x >> i) & 1) as u8).collect()
}

pub fn bit_compose(bits: &[u8]) -> u64 {
    bits.iter()
        .enumerate()
        .fold(0u64, |acc, (i, &b)| acc | ((b as u64 & 1) << i))
}

pub fn msb(x: u64, ell: u32) -> u8 {
    ((x >> (ell - 1)) & 1) as u8
}
