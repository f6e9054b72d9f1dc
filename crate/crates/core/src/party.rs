//! A party's protocol session: identity, links, PRF state, preprocessing
//! source, threat model and the round builder every protocol runs on.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::prep::{PrepMode, PrepSource};
use crate::rings::{Modulus, RingParams};
use crate::rss::{PartyId, PrfState, Shares};
use crate::transport::{Cost, Endpoints, Net, SentRecord, Tamper, DEFAULT_TIMEOUT};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ThreatModel {
    SemiHonest,
    Malicious,
}

impl FromStr for ThreatModel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "semi" | "semi-honest" | "semihonest" => Ok(ThreatModel::SemiHonest),
            "malicious" | "mal" => Ok(ThreatModel::Malicious),
            other => Err(Error::Config(format!("unknown threat model {other}"))),
        }
    }
}

impl fmt::Display for ThreatModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ThreatModel::SemiHonest => "semi-honest",
            ThreatModel::Malicious => "malicious",
        })
    }
}

/// Everything the three parties must agree on, plus local knobs.
#[derive(Clone, Debug)]
pub struct SessionConfig {
    pub params: RingParams,
    pub threat: ThreatModel,
    pub prep: PrepMode,
    pub seed: u64,
    pub session_id: u64,
    pub timeout: Duration,
    /// Extra agreed context, e.g. a hash of the network spec.
    pub context: String,
    pub record_prep: Option<PathBuf>,
    pub tamper: Option<Tamper>,
    pub record_transcript: bool,
}

impl SessionConfig {
    pub fn new(params: RingParams, threat: ThreatModel) -> Self {
        SessionConfig {
            params,
            threat,
            prep: PrepMode::Dealer,
            seed: 1,
            session_id: 1,
            timeout: DEFAULT_TIMEOUT,
            context: String::new(),
            record_prep: None,
            tamper: None,
            record_transcript: false,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_prep(mut self, prep: PrepMode) -> Self {
        self.prep = prep;
        self
    }

    pub fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(b"falcon-session-v1");
        h.update(self.params.ell.to_le_bytes());
        h.update(self.params.p.to_le_bytes());
        h.update(self.params.fp.to_le_bytes());
        h.update([self.threat as u8]);
        h.update(self.prep.kind().as_bytes());
        if self.prep == PrepMode::Dealer {
            h.update(self.seed.to_le_bytes());
        }
        h.update(self.session_id.to_le_bytes());
        h.update(self.context.as_bytes());
        h.finalize().into()
    }

    fn party_rng(&self, me: PartyId, purpose: &str) -> ChaCha20Rng {
        let mut h = Sha256::new();
        h.update(purpose.as_bytes());
        h.update(self.seed.to_le_bytes());
        h.update(self.session_id.to_le_bytes());
        h.update([me.index() as u8]);
        ChaCha20Rng::from_seed(h.finalize().into())
    }
}

enum Seg {
    Open { m: Modulus, n: usize },
    Reshare { m: Modulus, v: Vec<u64>, mask_recv: Vec<u64> },
}

/// Messages of several sub-protocols sent together in one round.
#[derive(Default)]
pub struct Round {
    items: Vec<Pending>,
}

enum Pending {
    Open { lo: Vec<u64>, hi: Vec<u64>, m: Modulus },
    Reshare { z: Vec<u64>, m: Modulus },
}

impl Round {
    pub fn new() -> Self {
        Self::default()
    }

    /// Opens `x` to every party; the result holds all three components.
    pub fn open(&mut self, x: &Shares) -> usize {
        self.items.push(Pending::Open {
            lo: x.lo.clone(),
            hi: x.hi.clone(),
            m: x.modulus,
        });
        self.items.len() - 1
    }

    /// Turns 3-of-3 additive shares into an RSS sharing.
    pub fn reshare(&mut self, z: Vec<u64>, m: Modulus) -> usize {
        self.items.push(Pending::Reshare { z, m });
        self.items.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

pub enum SegOut {
    Opened([Vec<u64>; 3]),
    Shares(Shares),
    Taken,
}

pub struct RoundOut {
    outs: Vec<SegOut>,
}

impl RoundOut {
    pub fn components(&mut self, h: usize) -> [Vec<u64>; 3] {
        match std::mem::replace(&mut self.outs[h], SegOut::Taken) {
            SegOut::Opened(c) => c,
            _ => panic!("segment {h} is not an opening"),
        }
    }

    pub fn opened(&mut self, h: usize, m: Modulus) -> Vec<u64> {
        let [a, b, c] = self.components(h);
        a.iter()
            .zip(&b)
            .zip(&c)
            .map(|((&a, &b), &c)| m.add(m.add(a, b), c))
            .collect()
    }

    pub fn shares(&mut self, h: usize) -> Shares {
        match std::mem::replace(&mut self.outs[h], SegOut::Taken) {
            SegOut::Shares(s) => s,
            _ => panic!("segment {h} is not a reshare"),
        }
    }
}

pub struct Party {
    pub id: PartyId,
    pub params: RingParams,
    pub threat: ThreatModel,
    pub(crate) net: Net,
    pub(crate) prf: PrfState,
    pub(crate) prep: PrepSource,
    dig_next: Sha256,
    dig_prev: Sha256,
    unverified: bool,
}

impl Party {
    /// Handshake, PRF key setup and preprocessing source initialization.
    pub fn connect(cfg: &SessionConfig, endpoints: Endpoints) -> Result<Party> {
        cfg.params.validate()?;
        let id = endpoints.me;
        let strict = cfg.threat == ThreatModel::Malicious;
        let mut net = Net::new(endpoints, cfg.session_id, cfg.timeout, strict);
        net.handshake(&cfg.digest())?;

        let mut rng = cfg.party_rng(id, "prf-key");
        let k_next: [u8; 16] = rng.gen();
        net.meter.enter_isolated("setup");
        let (_, from_prev) = net.exchange(Some(k_next.to_vec()), None, false, true)?;
        net.meter.exit_isolated();
        let k_prev: [u8; 16] = from_prev
            .and_then(|v| v.try_into().ok())
            .ok_or_else(|| Error::Format("malformed PRF key".into()))?;
        net.set_tamper(cfg.tamper);
        net.record_transcript(cfg.record_transcript);

        let prep = PrepSource::open(cfg, id)?;
        Ok(Party {
            id,
            params: cfg.params,
            threat: cfg.threat,
            net,
            prf: PrfState::new(k_next, k_prev),
            prep,
            dig_next: Sha256::new(),
            dig_prev: Sha256::new(),
            unverified: false,
        })
    }

    pub fn malicious(&self) -> bool {
        self.threat == ThreatModel::Malicious
    }

    pub fn cost(&self) -> Cost {
        self.net.meter.total()
    }

    pub fn cost_of(&self, label: &str) -> Cost {
        self.net.meter.label(label)
    }

    pub fn meter(&self) -> &crate::transport::CostMeter {
        &self.net.meter
    }

    pub fn reset_meter(&mut self) {
        self.net.meter.reset();
    }

    pub fn transcript(&self) -> &[SentRecord] {
        self.net.transcript()
    }

    pub fn round_index(&self) -> u32 {
        self.net.round()
    }

    /// Runs `f` with its communication charged to `label` (and enclosing labels).
    pub fn scope<T>(&mut self, label: &str, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        self.net.meter.enter(label);
        let r = f(self);
        self.net.meter.exit();
        r
    }

    /// Runs `f` charged only to `label`, hidden from enclosing labels.
    pub fn isolated<T>(&mut self, label: &str, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        self.net.meter.enter_isolated(label);
        let r = f(self);
        self.net.meter.exit_isolated();
        r
    }

    pub(crate) fn abort(&self, reason: impl Into<String>) -> Error {
        Error::abort(self.id.number(), reason)
    }

    /// Sends all segments of `round` in a single exchange.
    pub fn run_round(&mut self, round: Round) -> Result<RoundOut> {
        let mal = self.malicious();
        let mut to_next = Vec::new();
        let mut to_prev = Vec::new();
        let mut segs = Vec::with_capacity(round.items.len());
        let mut own = Vec::with_capacity(round.items.len());
        let (mut need_next, mut need_prev) = (false, false);
        for item in round.items {
            match item {
                Pending::Open { lo, hi, m } => {
                    let n = lo.len();
                    m.write(&lo, &mut to_next);
                    need_prev |= n > 0;
                    if mal {
                        m.write(&hi, &mut to_prev);
                        need_next |= n > 0;
                    }
                    segs.push(Seg::Open { m, n });
                    own.push((lo, hi));
                }
                Pending::Reshare { z, m } => {
                    let n = z.len();
                    let alpha = self.prf.zero_3of3(n, m);
                    let v: Vec<u64> = z.iter().zip(&alpha).map(|(&z, &a)| m.add(z, a)).collect();
                    m.write(&v, &mut to_prev);
                    need_next |= n > 0;
                    let mut mask_recv = Vec::new();
                    if mal {
                        let mask_send = self.prf.with_prev.elements(n, m);
                        mask_recv = self.prf.with_next.elements(n, m);
                        let mirror: Vec<u64> =
                            v.iter().zip(&mask_send).map(|(&v, &k)| m.add(v, k)).collect();
                        m.write(&mirror, &mut to_next);
                        need_prev |= n > 0;
                    }
                    segs.push(Seg::Reshare { m, v, mask_recv });
                    own.push((Vec::new(), Vec::new()));
                }
            }
        }
        if !need_next && !need_prev && to_next.is_empty() && to_prev.is_empty() {
            return Ok(RoundOut {
                outs: segs
                    .into_iter()
                    .zip(own)
                    .map(|(s, (lo, hi))| match s {
                        Seg::Open { .. } => SegOut::Opened([lo.clone(), hi, lo]),
                        Seg::Reshare { m, .. } => SegOut::Shares(Shares::zeros(m, 0)),
                    })
                    .collect(),
            });
        }
        let (from_next, from_prev) = self.net.exchange(
            (!to_next.is_empty()).then_some(to_next),
            (!to_prev.is_empty()).then_some(to_prev),
            need_next,
            need_prev,
        )?;
        let from_next = from_next.unwrap_or_default();
        let from_prev = from_prev.unwrap_or_default();
        let (mut off_next, mut off_prev) = (0usize, 0usize);
        let take = |buf: &[u8], off: &mut usize, m: Modulus, n: usize| -> Result<Vec<u64>> {
            let w = m.wire_len(n);
            if *off + w > buf.len() {
                return Err(Error::Format("message shorter than expected".into()));
            }
            let v = m.read(&buf[*off..*off + w], n)?;
            *off += w;
            Ok(v)
        };
        let me = self.id.index();
        let mut outs = Vec::with_capacity(segs.len());
        for (seg, (lo, hi)) in segs.into_iter().zip(own) {
            match seg {
                Seg::Open { m, n } => {
                    let missing = take(&from_prev, &mut off_prev, m, n).map_err(|e| self.net.escalate(e))?;
                    if mal {
                        let copy = take(&from_next, &mut off_next, m, n).map_err(|e| self.net.escalate(e))?;
                        if copy != missing {
                            return Err(self.abort("opened values from the two peers disagree"));
                        }
                    }
                    let mut comps: [Vec<u64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
                    comps[me] = lo;
                    comps[(me + 1) % 3] = hi;
                    comps[(me + 2) % 3] = missing;
                    outs.push(SegOut::Opened(comps));
                }
                Seg::Reshare { m, v, mask_recv } => {
                    let v_next = take(&from_next, &mut off_next, m, v.len()).map_err(|e| self.net.escalate(e))?;
                    if mal {
                        let w = m.wire_len(v.len());
                        if off_prev + w > from_prev.len() {
                            return Err(self.abort("mirror message shorter than expected"));
                        }
                        let mirror = &from_prev[off_prev..off_prev + w];
                        m.read(mirror, v.len()).map_err(|e| self.net.escalate(e))?;
                        self.dig_next.update(mirror);
                        off_prev += w;
                        let expect: Vec<u64> =
                            v_next.iter().zip(&mask_recv).map(|(&a, &k)| m.add(a, k)).collect();
                        let mut bytes = Vec::with_capacity(w);
                        m.write(&expect, &mut bytes);
                        self.dig_prev.update(&bytes);
                        self.unverified = true;
                    }
                    outs.push(SegOut::Shares(Shares::new(m, v, v_next)));
                }
            }
        }
        if off_next != from_next.len() || off_prev != from_prev.len() {
            return Err(self.net.escalate(Error::Format("message longer than expected".into())));
        }
        Ok(RoundOut { outs })
    }

    /// Reconstructs `x` at every party.
    pub fn open(&mut self, x: &Shares) -> Result<Vec<u64>> {
        let mut r = Round::new();
        let h = r.open(x);
        Ok(self.run_round(r)?.opened(h, x.modulus))
    }

    /// Reconstructs the three additive components of `x`.
    pub fn open_components(&mut self, x: &Shares) -> Result<[Vec<u64>; 3]> {
        let mut r = Round::new();
        let h = r.open(x);
        Ok(self.run_round(r)?.components(h))
    }

    /// Reshares 3-of-3 additive shares as RSS (one element per party per value).
    pub fn reshare(&mut self, z: Vec<u64>, m: Modulus) -> Result<Shares> {
        let mut r = Round::new();
        let h = r.reshare(z, m);
        Ok(self.run_round(r)?.shares(h))
    }

    /// Element-wise product, one round.
    pub fn mult(&mut self, x: &Shares, y: &Shares) -> Result<Shares> {
        self.scope("mult", |p| {
            let z = x.mul_local(y)?;
            p.reshare(z, x.modulus)
        })
    }

    /// Several independent products in one round; moduli may differ.
    pub fn mult_batch(&mut self, pairs: &[(&Shares, &Shares)]) -> Result<Vec<Shares>> {
        self.scope("mult", |p| {
            let mut r = Round::new();
            let mut hs = Vec::with_capacity(pairs.len());
            for (x, y) in pairs {
                hs.push(r.reshare(x.mul_local(y)?, x.modulus));
            }
            let mut out = p.run_round(r)?;
            Ok(hs.into_iter().map(|h| out.shares(h)).collect())
        })
    }

    /// Shares `values` held by `owner`; the others pass `None` and the length.
    pub fn share_input(
        &mut self,
        owner: PartyId,
        values: Option<&[u64]>,
        n: usize,
        m: Modulus,
    ) -> Result<Shares> {
        self.scope("input", |p| {
            let mut s = p.prf.random_2of3(n, m);
            let me = p.id;
            if me == owner {
                let vals = values.ok_or_else(|| Error::Invalid("owner must supply its input".into()))?;
                if vals.len() != n {
                    return Err(Error::Shape(format!("{} inputs for length {n}", vals.len())));
                }
                let missing: Vec<u64> = vals
                    .iter()
                    .zip(s.lo.iter().zip(&s.hi))
                    .map(|(&x, (&a, &b))| m.sub(m.sub(m.reduce(x), a), b))
                    .collect();
                let mut buf = Vec::new();
                m.write(&missing, &mut buf);
                p.net.exchange(Some(buf.clone()), Some(buf), false, false)?;
            } else if me == owner.next() {
                let (_, got) = p.net.exchange(None, None, false, true)?;
                let got = got.unwrap_or_default();
                s.hi = m.read(&got, n).map_err(|e| p.net.escalate(e))?;
                if p.malicious() {
                    p.dig_next.update(&got);
                    p.unverified = true;
                }
            } else {
                let (got, _) = p.net.exchange(None, None, true, false)?;
                let got = got.unwrap_or_default();
                s.lo = m.read(&got, n).map_err(|e| p.net.escalate(e))?;
                if p.malicious() {
                    p.dig_prev.update(&got);
                    p.unverified = true;
                }
            }
            Ok(s)
        })
    }

    /// Fixed-point input sharing of reals.
    pub fn share_fixed(&mut self, owner: PartyId, values: Option<&[f64]>, n: usize) -> Result<Shares> {
        let raw = match values {
            Some(v) if self.id == owner => Some(self.params.encode_all(v)?),
            _ => None,
        };
        self.share_input(owner, raw.as_deref(), n, self.params.l())
    }

    /// Compares the running consistency digests with the neighbours.
    /// A no-op in the semi-honest model.
    pub fn verify(&mut self) -> Result<()> {
        if !self.malicious() {
            return Ok(());
        }
        let mine = self.dig_next.clone().finalize().to_vec();
        let expect = self.dig_prev.clone().finalize().to_vec();
        let (_, got) = self.isolated("verify", |p| p.net.exchange(Some(mine), None, false, true))?;
        if got.as_deref() != Some(&expect[..]) {
            return Err(self.abort("consistency digests disagree"));
        }
        self.unverified = false;
        Ok(())
    }

    /// Output reconstruction: verifies consistency first in the malicious model.
    /// In the malicious model the values are only returned once both peers
    /// confirm that their own checks passed.
    pub fn reveal(&mut self, x: &Shares) -> Result<Vec<u64>> {
        self.verify()?;
        let vals = self.open(x)?;
        self.confirm()?;
        Ok(vals)
    }

    fn confirm(&mut self) -> Result<()> {
        if !self.malicious() {
            return Ok(());
        }
        let (a, b) = self.isolated("verify", |p| p.net.exchange(Some(vec![1]), Some(vec![1]), true, true))?;
        if a.as_deref() != Some(&[1u8][..]) || b.as_deref() != Some(&[1u8][..]) {
            return Err(self.abort("a peer did not confirm the output"));
        }
        Ok(())
    }

    pub fn reveal_fixed(&mut self, x: &Shares) -> Result<Vec<f64>> {
        let raw = self.reveal(x)?;
        Ok(self.params.decode_all(&raw))
    }

    pub fn has_unverified(&self) -> bool {
        self.unverified
    }

    /// Random RSS sharing from the PRF keys, no communication.
    pub fn random_2of3(&mut self, n: usize, m: Modulus) -> Shares {
        self.prf.random_2of3(n, m)
    }

    /// 3-of-3 zero sharing from the PRF keys, no communication.
    pub fn zero_3of3(&mut self, n: usize, m: Modulus) -> Vec<u64> {
        self.prf.zero_3of3(n, m)
    }

    /// Z_2 (or other) sharing of values known to the two holders of component `j`.
    pub fn local_share(&self, j: usize, values: Option<&[u64]>, n: usize, m: Modulus) -> Result<Shares> {
        Shares::from_component(self.id, j, values, n, m)
    }

    pub fn public(&self, m: Modulus, c: &[u64]) -> Shares {
        Shares::public(self.id, m, c)
    }
}
