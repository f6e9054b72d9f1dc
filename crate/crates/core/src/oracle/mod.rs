//! Plaintext references for the secure computations. Nothing here depends on
//! the protocol layer: the fixed-point twin re-derives every rounding rule
//! from plain integer arithmetic, and convolution is evaluated from its
//! definition rather than through im2col.

mod float;
mod fx;

pub use float::{accuracy, pretrain, rebalance, FloatNet, PretrainConfig};
pub use fx::{Fx, FxBn, FxCache, FxNet};

/// (x ≥ r).
pub fn oracle_compare(x: u128, r: u128) -> u8 {
    (x >= r) as u8
}

/// (a1 + a2 + a3 − (a1 + a2 + a3 mod L)) / L mod 2, over the integers.
pub fn oracle_wrap3(a1: u64, a2: u64, a3: u64, modulus: u128) -> u8 {
    let s = a1 as u128 + a2 as u128 + a3 as u128;
    ((s / modulus) % 2) as u8
}

/// 1 iff a, read in two's complement over ℓ bits, is non-negative.
pub fn oracle_drelu(a: u64, ell: u32) -> u8 {
    ((a >> (ell - 1)) & 1 == 0) as u8
}

/// Maximum and the first index attaining it.
pub fn oracle_argmax(v: &[i64]) -> (i64, usize) {
    let mut best = (v[0], 0);
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > best.0 {
            best = (x, i);
        }
    }
    best
}

/// Index of the largest value, first on ties.
pub fn argmax_f64(v: &[f64]) -> usize {
    let mut k = 0;
    for i in 1..v.len() {
        if v[i] > v[k] {
            k = i;
        }
    }
    k
}
