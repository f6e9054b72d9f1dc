//! Recording and replay of per-party preprocessing material.
//!
//! Layout of `prep-p{n}.bin`: an 8-byte magic, the party index and ring
//! parameters, then one record per request in call order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use super::{BitPairs, CompareRand, TruncPairs, WrapRand};
use crate::error::{Error, Result};
use crate::rings::{Modulus, RingParams};
use crate::rss::{PartyId, Shares};

const MAGIC: &[u8; 8] = b"FPREP1\0\0";

const KIND_TRUNC: u8 = 1;
const KIND_COMPARE: u8 = 2;
const KIND_WRAP: u8 = 3;
const KIND_BITS: u8 = 4;

pub fn prep_path(dir: &Path, me: PartyId) -> PathBuf {
    dir.join(format!("prep-p{}.bin", me.number()))
}

fn header(me: PartyId, params: &RingParams) -> Vec<u8> {
    let mut h = MAGIC.to_vec();
    h.push(me.index() as u8);
    h.extend_from_slice(&params.ell.to_le_bytes());
    h.extend_from_slice(&params.p.to_le_bytes());
    h.extend_from_slice(&params.fp.to_le_bytes());
    h
}

fn put_shares(out: &mut Vec<u8>, s: &Shares) {
    match s.modulus {
        Modulus::Pow2(b) => {
            out.push(0);
            out.extend_from_slice(&(b as u64).to_le_bytes());
        }
        Modulus::Prime(p) => {
            out.push(1);
            out.extend_from_slice(&p.to_le_bytes());
        }
    }
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    s.modulus.write(&s.lo, out);
    s.modulus.write(&s.hi, out);
}

pub struct Recorder {
    out: BufWriter<File>,
    buf: Vec<u8>,
}

impl Recorder {
    pub fn create(dir: &Path, me: PartyId, params: &RingParams) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        let mut out = BufWriter::new(File::create(prep_path(dir, me))?);
        out.write_all(&header(me, params))?;
        Ok(Recorder {
            out,
            buf: Vec::new(),
        })
    }

    fn record(&mut self, kind: u8, n: usize, parts: &[&Shares]) -> Result<()> {
        self.buf.push(kind);
        self.buf.extend_from_slice(&(n as u32).to_le_bytes());
        for s in parts {
            put_shares(&mut self.buf, s);
        }
        self.out.write_all(&self.buf)?;
        self.buf.clear();
        Ok(())
    }

    pub fn trunc_pairs(&mut self, t: &TruncPairs) -> Result<()> {
        self.buf.push(KIND_TRUNC);
        self.buf.extend_from_slice(&(t.shifts.len() as u32).to_le_bytes());
        self.buf.extend_from_slice(&(t.width as u32).to_le_bytes());
        for &d in &t.shifts {
            self.buf.push(d as u8);
        }
        for s in [&t.r, &t.r_shift, &t.r_bits, &t.beta_p, &t.beta_l, &t.m] {
            put_shares(&mut self.buf, s);
        }
        self.out.write_all(&self.buf)?;
        self.buf.clear();
        Ok(())
    }

    pub fn compare_rand(&mut self, c: &CompareRand) -> Result<()> {
        self.record(KIND_COMPARE, c.m.len(), &[&c.beta_2, &c.beta_p, &c.m])
    }

    pub fn wrap_rand(&mut self, w: &WrapRand) -> Result<()> {
        self.record(KIND_WRAP, w.x.len(), &[&w.x, &w.x_bits, &w.alpha])
    }

    pub fn bit_pairs(&mut self, b: &BitPairs) -> Result<()> {
        self.record(KIND_BITS, b.c2.len(), &[&b.c2, &b.cl])
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

impl Drop for Recorder {
    fn drop(&mut self) {
        let _ = self.out.flush();
    }
}

pub struct Replay {
    input: BufReader<File>,
}

fn desync(what: &str) -> Error {
    Error::Format(format!("prep file out of sync: {what}"))
}

impl Replay {
    pub fn open(dir: &Path, me: PartyId, params: &RingParams) -> Result<Self> {
        let path = prep_path(dir, me);
        let mut input = BufReader::new(
            File::open(&path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?,
        );
        let expect = header(me, params);
        let mut got = vec![0u8; expect.len()];
        input
            .read_exact(&mut got)
            .map_err(|_| Error::Format("truncated prep file header".into()))?;
        if got[..8] != MAGIC[..] {
            return Err(Error::Format(format!("{} is not a prep file", path.display())));
        }
        if got != expect {
            return Err(Error::Config(
                "prep file was recorded for another party or ring".into(),
            ));
        }
        Ok(Replay { input })
    }

    fn bytes(&mut self, n: usize) -> Result<Vec<u8>> {
        let mut b = vec![0u8; n];
        self.input
            .read_exact(&mut b)
            .map_err(|_| desync("file exhausted"))?;
        Ok(b)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes(8)?.try_into().expect("8 bytes")))
    }

    fn shares(&mut self, m: Modulus, n: usize) -> Result<Shares> {
        let tag = self.bytes(1)?[0];
        let v = self.u64()?;
        let got = match tag {
            0 => Modulus::Pow2(v as u32),
            1 => Modulus::Prime(v),
            _ => return Err(desync("bad modulus tag")),
        };
        if got != m {
            return Err(desync("modulus differs"));
        }
        if self.u32()? as usize != n {
            return Err(desync("length differs"));
        }
        let w = m.wire_len(n);
        let lo = m.read(&self.bytes(w)?, n)?;
        let hi = m.read(&self.bytes(w)?, n)?;
        Ok(Shares::new(m, lo, hi))
    }

    fn expect(&mut self, kind: u8, n: usize) -> Result<()> {
        if self.bytes(1)?[0] != kind {
            return Err(desync("request kind differs"));
        }
        if self.u32()? as usize != n {
            return Err(desync("request size differs"));
        }
        Ok(())
    }

    pub fn trunc_pairs(&mut self, shifts: &[u32], params: &RingParams) -> Result<TruncPairs> {
        let n = shifts.len();
        self.expect(KIND_TRUNC, n)?;
        let width = self.u32()? as usize;
        let got: Vec<u32> = self.bytes(n)?.into_iter().map(u32::from).collect();
        if got != shifts {
            return Err(desync("shifts differ"));
        }
        let (l, zp) = (params.l(), params.zp());
        Ok(TruncPairs {
            shifts: got,
            width,
            r: self.shares(l, n)?,
            r_shift: self.shares(l, n)?,
            r_bits: self.shares(zp, n * width)?,
            beta_p: self.shares(zp, n)?,
            beta_l: self.shares(l, n)?,
            m: self.shares(zp, n)?,
        })
    }

    pub fn compare_rand(&mut self, n: usize, params: &RingParams) -> Result<CompareRand> {
        self.expect(KIND_COMPARE, n)?;
        Ok(CompareRand {
            beta_2: self.shares(params.z2(), n)?,
            beta_p: self.shares(params.zp(), n)?,
            m: self.shares(params.zp(), n)?,
        })
    }

    pub fn wrap_rand(&mut self, n: usize, params: &RingParams) -> Result<WrapRand> {
        self.expect(KIND_WRAP, n)?;
        Ok(WrapRand {
            x: self.shares(params.l(), n)?,
            x_bits: self.shares(params.zp(), n * params.ell as usize)?,
            alpha: self.shares(params.z2(), n)?,
        })
    }

    pub fn bit_pairs(&mut self, n: usize, params: &RingParams) -> Result<BitPairs> {
        self.expect(KIND_BITS, n)?;
        Ok(BitPairs {
            c2: self.shares(params.z2(), n)?,
            cl: self.shares(params.l(), n)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prep::Dealer;

    #[test]
    fn record_then_replay() {
        let dir = tempfile::tempdir().unwrap();
        let params = RingParams::default();
        let me = PartyId::new(1).unwrap();
        let mut d = Dealer::new(params, 7, 1);
        let t = d.trunc_pairs(&[13, 5, 13]).swap_remove(1);
        let c = d.compare_rand(4).swap_remove(1);
        let w = d.wrap_rand(2).swap_remove(1);
        let b = d.bit_pairs(70).swap_remove(1);
        {
            let mut rec = Recorder::create(dir.path(), me, &params).unwrap();
            rec.trunc_pairs(&t).unwrap();
            rec.compare_rand(&c).unwrap();
            rec.wrap_rand(&w).unwrap();
            rec.bit_pairs(&b).unwrap();
            rec.flush().unwrap();
        }
        let mut r = Replay::open(dir.path(), me, &params).unwrap();
        assert_eq!(r.trunc_pairs(&[13, 5, 13], &params).unwrap(), t);
        assert_eq!(r.compare_rand(4, &params).unwrap(), c);
        assert_eq!(r.wrap_rand(2, &params).unwrap(), w);
        assert_eq!(r.bit_pairs(70, &params).unwrap(), b);
        assert!(r.bit_pairs(1, &params).is_err());
    }

    #[test]
    fn replay_rejects_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let params = RingParams::default();
        let me = PartyId::new(0).unwrap();
        let mut d = Dealer::new(params, 7, 1);
        {
            let mut rec = Recorder::create(dir.path(), me, &params).unwrap();
            rec.compare_rand(&d.compare_rand(3).swap_remove(0)).unwrap();
        }
        let mut r = Replay::open(dir.path(), me, &params).unwrap();
        assert!(matches!(r.wrap_rand(3, &params), Err(Error::Format(_))));
        let other = RingParams::with_bits(64, 13).unwrap();
        assert!(Replay::open(dir.path(), me, &other).is_err());
        assert!(Replay::open(dir.path(), PartyId::new(2).unwrap(), &params).is_err());
    }
}
