//! Data-independent preprocessing: truncation pairs, compare and wrap
//! randomness, and bit pairs. Material comes from a common-seed dealer, from
//! the distributed generation protocols, or from a recorded file.

mod dealer;
mod distributed;
mod file;

use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use dealer::Dealer;
pub use file::{prep_path, Recorder, Replay};

use crate::error::{Error, Result};
use crate::party::{Party, SessionConfig};
use crate::rss::{PartyId, Shares};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PrepMode {
    Dealer,
    Distributed,
    File(PathBuf),
}

impl PrepMode {
    pub fn kind(&self) -> &'static str {
        match self {
            PrepMode::Dealer => "dealer",
            PrepMode::Distributed => "distributed",
            PrepMode::File(_) => "file",
        }
    }
}

impl FromStr for PrepMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dealer" => Ok(PrepMode::Dealer),
            "distributed" => Ok(PrepMode::Distributed),
            _ => match s.strip_prefix("file:") {
                Some(path) if !path.is_empty() => Ok(PrepMode::File(PathBuf::from(path))),
                _ => Err(Error::Config(format!("unknown prep mode {s}"))),
            },
        }
    }
}

/// Truncation material for `shifts.len()` values.
///
/// `r` is uniform in [0, 2^{ℓ−1}); `r_shift` = r ≫ d; `r_bits` holds the low
/// `d` bits of r in Z_p, least significant first, zero-padded to `width`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TruncPairs {
    pub shifts: Vec<u32>,
    pub width: usize,
    pub r: Shares,
    pub r_shift: Shares,
    pub r_bits: Shares,
    pub beta_p: Shares,
    pub beta_l: Shares,
    pub m: Shares,
}

/// Blinding bit in Z_2 and Z_p plus a nonzero multiplier in Z_p.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CompareRand {
    pub beta_2: Shares,
    pub beta_p: Shares,
    pub m: Shares,
}

/// A random x in Z_L, its bits in Z_p (ℓ per value, LSB first), and
/// α = wrap3 of its three components.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WrapRand {
    pub x: Shares,
    pub x_bits: Shares,
    pub alpha: Shares,
}

/// The same random bit shared in Z_2 and Z_L.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BitPairs {
    pub c2: Shares,
    pub cl: Shares,
}

pub(crate) enum Source {
    Dealer(Dealer),
    Distributed,
    Replay(Replay),
}

pub(crate) struct PrepSource {
    source: Source,
    recorder: Option<Recorder>,
}

impl PrepSource {
    pub(crate) fn open(cfg: &SessionConfig, me: PartyId) -> Result<Self> {
        let source = match &cfg.prep {
            PrepMode::Dealer => Source::Dealer(Dealer::new(cfg.params, cfg.seed, cfg.session_id)),
            PrepMode::Distributed => Source::Distributed,
            PrepMode::File(dir) => Source::Replay(Replay::open(dir, me, &cfg.params)?),
        };
        let recorder = match &cfg.record_prep {
            Some(dir) => Some(Recorder::create(dir, me, &cfg.params)?),
            None => None,
        };
        Ok(PrepSource { source, recorder })
    }

    fn is_distributed(&self) -> bool {
        matches!(self.source, Source::Distributed)
    }
}

impl Party {
    pub fn trunc_pairs(&mut self, shifts: &[u32]) -> Result<TruncPairs> {
        if let Some(&d) = shifts.iter().find(|&&d| d > self.params.ell - 2) {
            return Err(Error::Invalid(format!(
                "shift {d} exceeds ell - 2 = {}",
                self.params.ell - 2
            )));
        }
        self.isolated("prep", |p| {
            let (me, params) = (p.id.index(), p.params);
            let out = if p.prep.is_distributed() {
                p.gen_trunc_pairs(shifts)?
            } else {
                match &mut p.prep.source {
                    Source::Dealer(d) => d.trunc_pairs(shifts).swap_remove(me),
                    Source::Replay(r) => r.trunc_pairs(shifts, &params)?,
                    Source::Distributed => unreachable!(),
                }
            };
            if let Some(rec) = p.prep.recorder.as_mut() {
                rec.trunc_pairs(&out)?;
            }
            Ok(out)
        })
    }

    pub fn compare_rand(&mut self, n: usize) -> Result<CompareRand> {
        self.isolated("prep", |p| {
            let (me, params) = (p.id.index(), p.params);
            let out = if p.prep.is_distributed() {
                p.gen_compare_rand(n)?
            } else {
                match &mut p.prep.source {
                    Source::Dealer(d) => d.compare_rand(n).swap_remove(me),
                    Source::Replay(r) => r.compare_rand(n, &params)?,
                    Source::Distributed => unreachable!(),
                }
            };
            if let Some(rec) = p.prep.recorder.as_mut() {
                rec.compare_rand(&out)?;
            }
            Ok(out)
        })
    }

    pub fn wrap_rand(&mut self, n: usize) -> Result<WrapRand> {
        self.isolated("prep", |p| {
            let (me, params) = (p.id.index(), p.params);
            let out = if p.prep.is_distributed() {
                p.gen_wrap_rand(n)?
            } else {
                match &mut p.prep.source {
                    Source::Dealer(d) => d.wrap_rand(n).swap_remove(me),
                    Source::Replay(r) => r.wrap_rand(n, &params)?,
                    Source::Distributed => unreachable!(),
                }
            };
            if let Some(rec) = p.prep.recorder.as_mut() {
                rec.wrap_rand(&out)?;
            }
            Ok(out)
        })
    }

    pub fn bit_pairs(&mut self, n: usize) -> Result<BitPairs> {
        self.isolated("prep", |p| {
            let (me, params) = (p.id.index(), p.params);
            let out = if p.prep.is_distributed() {
                p.gen_bit_pairs(n)?
            } else {
                match &mut p.prep.source {
                    Source::Dealer(d) => d.bit_pairs(n).swap_remove(me),
                    Source::Replay(r) => r.bit_pairs(n, &params)?,
                    Source::Distributed => unreachable!(),
                }
            };
            if let Some(rec) = p.prep.recorder.as_mut() {
                rec.bit_pairs(&out)?;
            }
            Ok(out)
        })
    }

    /// Flushes any recorded preprocessing to disk.
    pub fn finish_prep(&mut self) -> Result<()> {
        if let Some(rec) = self.prep.recorder.as_mut() {
            rec.flush()?;
        }
        Ok(())
    }
}
