//! Closed-form round and byte counts per party for the vectorized protocols.
//! k is the byte size of a ring element, n the vector length.

use falcon_core::ThreatModel;
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Predicted {
    pub rounds: u64,
    pub bytes: u64,
}

/// Sizes a benchmark runs at.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Dims {
    /// Vector length.
    N(usize),
    /// (x × y)(y × z) product.
    MatMul(usize, usize, usize),
    /// n windows of w × h.
    Pool(usize, usize, usize),
    /// r features over a batch of n.
    Batch(usize, usize),
}

fn log2(ell: u32) -> u64 {
    ell.trailing_zeros() as u64
}

/// Formula for `protocol` at ring size 2^ℓ, or `None` if the protocol has no
/// published formula.
pub fn predicted(protocol: &str, ell: u32, dims: Dims, threat: ThreatModel) -> Option<Predicted> {
    let l = ell as u64;
    let k = l / 8;
    let lg = log2(ell);
    let pow_rounds = 5 * l + l * lg;
    let (rounds, bytes) = match (protocol, dims) {
        ("matmul", Dims::MatMul(x, _, z)) => (1, k * (x * z) as u64),
        ("mult", Dims::N(n)) => (1, k * n as u64),
        ("pc", Dims::N(n)) => (2 + lg, 2 * k * n as u64),
        ("wa", Dims::N(n)) => (3 + lg, 3 * k * n as u64),
        ("relu" | "drelu", Dims::N(n)) => (5 + lg, 4 * k * n as u64),
        ("maxpool", Dims::Pool(n, w, h)) => {
            let wh = (w * h) as u64;
            ((wh - 1) * (7 + lg), n as u64 * (5 * k + wh))
        }
        ("pow", Dims::N(n)) => (pow_rounds, 4 * k * n as u64 * l),
        ("div", Dims::N(n)) => (7 + pow_rounds, 4 * k * n as u64 * l + 7 * k * n as u64),
        ("bn", Dims::Batch(r, n)) => {
            let (r, n) = (r as u64, n as u64);
            (15 + pow_rounds, k * r + 4 * k * r * l + 14 * k * r * n)
        }
        _ => return None,
    };
    let factor = match threat {
        ThreatModel::SemiHonest => 1,
        ThreatModel::Malicious => 2,
    };
    Some(Predicted {
        rounds,
        bytes: bytes * factor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_row() {
        let p = predicted("relu", 32, Dims::N(1000), ThreatModel::SemiHonest).unwrap();
        assert_eq!(p, Predicted { rounds: 10, bytes: 16000 });
        let m = predicted("relu", 32, Dims::N(1000), ThreatModel::Malicious).unwrap();
        assert_eq!(m.bytes, 32000);
    }

    #[test]
    fn matmul_and_division_rows() {
        let p = predicted("matmul", 32, Dims::MatMul(4, 4, 4), ThreatModel::SemiHonest).unwrap();
        assert_eq!(p, Predicted { rounds: 1, bytes: 64 });
        let d = predicted("div", 32, Dims::N(1), ThreatModel::SemiHonest).unwrap();
        assert_eq!(d.rounds, 7 + 160 + 160);
        assert_eq!(d.bytes, 4 * 4 * 32 + 28);
        assert!(predicted("trunc", 32, Dims::N(1), ThreatModel::SemiHonest).is_none());
    }
}
