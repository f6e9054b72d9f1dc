//! Round-synchronous messaging between the three parties.
//!
//! Every frame is a 16-byte header (session, round, sender, receiver, two
//! reserved bytes), a 4-byte little-endian payload length, then the payload.

mod meter;
pub mod tcp;

use std::time::Duration;

use crossbeam_channel::{unbounded, Receiver, RecvTimeoutError, Sender};
use serde::{Deserialize, Serialize};

pub use meter::{Cost, CostMeter};

use crate::error::{Error, Result};
use crate::rss::PartyId;

pub const HEADER_LEN: usize = 16;
pub const FRAME_OVERHEAD: usize = HEADER_LEN + 4;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub session: u64,
    pub round: u32,
    pub sender: u8,
    pub receiver: u8,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(FRAME_OVERHEAD + self.payload.len());
        out.extend_from_slice(&self.session.to_le_bytes());
        out.extend_from_slice(&self.round.to_le_bytes());
        out.push(self.sender);
        out.push(self.receiver);
        out.extend_from_slice(&[0, 0]);
        out.extend_from_slice(&(self.payload.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn decode(buf: &[u8]) -> Result<Frame> {
        if buf.len() < FRAME_OVERHEAD {
            return Err(Error::Format(format!("frame of {} bytes is too short", buf.len())));
        }
        let len = u32::from_le_bytes(buf[16..20].try_into().expect("4 bytes")) as usize;
        if buf.len() != FRAME_OVERHEAD + len {
            return Err(Error::Format(format!(
                "length prefix {len} does not match payload of {} bytes",
                buf.len() - FRAME_OVERHEAD
            )));
        }
        if buf[14] != 0 || buf[15] != 0 {
            return Err(Error::Format("reserved header bytes are nonzero".into()));
        }
        Ok(Frame {
            session: u64::from_le_bytes(buf[0..8].try_into().expect("8 bytes")),
            round: u32::from_le_bytes(buf[8..12].try_into().expect("4 bytes")),
            sender: buf[12],
            receiver: buf[13],
            payload: buf[FRAME_OVERHEAD..].to_vec(),
        })
    }
}

/// Outgoing half of a link to one peer.
pub trait FrameSink: Send {
    fn send_frame(&mut self, frame: Vec<u8>) -> Result<()>;
}

struct MemorySink {
    tx: Sender<Vec<u8>>,
    peer: usize,
}

impl FrameSink for MemorySink {
    fn send_frame(&mut self, frame: Vec<u8>) -> Result<()> {
        self.tx.send(frame).map_err(|_| Error::ChannelClosed(self.peer))
    }
}

/// A bidirectional link to one peer: a sink plus an ordered queue of whole frames.
pub struct PeerLink {
    pub peer: PartyId,
    pub sink: Box<dyn FrameSink>,
    pub rx: Receiver<Vec<u8>>,
}

/// Links of one party: index 0 goes to `next`, index 1 to `prev`.
pub struct Endpoints {
    pub me: PartyId,
    pub links: [PeerLink; 2],
}

/// In-process links for all three parties.
pub fn memory_mesh() -> [Endpoints; 3] {
    // chans[a][b]: a -> b
    let mut tx: Vec<Vec<Option<Sender<Vec<u8>>>>> = (0..3).map(|_| vec![None, None, None]).collect();
    let mut rx: Vec<Vec<Option<Receiver<Vec<u8>>>>> = (0..3).map(|_| vec![None, None, None]).collect();
    for a in 0..3 {
        for b in 0..3 {
            if a != b {
                let (s, r) = unbounded();
                tx[a][b] = Some(s);
                rx[b][a] = Some(r);
            }
        }
    }
    PartyId::ALL.map(|me| {
        let link = |peer: PartyId, tx: &mut Vec<Vec<Option<Sender<Vec<u8>>>>>, rx: &mut Vec<Vec<Option<Receiver<Vec<u8>>>>>| PeerLink {
            peer,
            sink: Box::new(MemorySink {
                tx: tx[me.index()][peer.index()].take().expect("unused channel"),
                peer: peer.number(),
            }),
            rx: rx[me.index()][peer.index()].take().expect("unused channel"),
        };
        let next = link(me.next(), &mut tx, &mut rx);
        let prev = link(me.prev(), &mut tx, &mut rx);
        Endpoints {
            me,
            links: [next, prev],
        }
    })
}

/// Flips bits of one outgoing payload byte; used for fault injection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tamper {
    pub sender: PartyId,
    pub receiver: PartyId,
    pub round: u32,
    pub byte: usize,
    pub mask: u8,
}

/// A message this party sent, kept when transcript recording is on.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SentRecord {
    pub round: u32,
    pub receiver: PartyId,
    pub frame: Vec<u8>,
}

/// Direction of a peer relative to this party.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dir {
    Next = 0,
    Prev = 1,
}

pub struct Net {
    me: PartyId,
    session: u64,
    round: u32,
    links: [PeerLink; 2],
    timeout: Duration,
    strict: bool,
    pub meter: CostMeter,
    tamper: Option<Tamper>,
    transcript: Option<Vec<SentRecord>>,
}

impl Net {
    pub fn new(endpoints: Endpoints, session: u64, timeout: Duration, strict: bool) -> Self {
        Net {
            me: endpoints.me,
            session,
            round: 0,
            links: endpoints.links,
            timeout,
            strict,
            meter: CostMeter::new(),
            tamper: None,
            transcript: None,
        }
    }

    pub fn me(&self) -> PartyId {
        self.me
    }

    pub fn round(&self) -> u32 {
        self.round
    }

    pub fn set_tamper(&mut self, t: Option<Tamper>) {
        self.tamper = t;
    }

    pub fn record_transcript(&mut self, on: bool) {
        self.transcript = if on { Some(Vec::new()) } else { None };
    }

    pub fn transcript(&self) -> &[SentRecord] {
        self.transcript.as_deref().unwrap_or(&[])
    }

    pub fn send(&mut self, to: PartyId, payload: Vec<u8>) -> Result<()> {
        let dir = self.dir_of(to)?;
        self.round += 1;
        let len = payload.len() as u64;
        self.push(dir, self.round, payload)?;
        self.meter.record(Cost {
            rounds: 0,
            bytes: len,
            wire_bytes: len + FRAME_OVERHEAD as u64,
            messages: 1,
        });
        Ok(())
    }

    fn dir_of(&self, to: PartyId) -> Result<Dir> {
        if to == self.me.next() {
            Ok(Dir::Next)
        } else if to == self.me.prev() {
            Ok(Dir::Prev)
        } else {
            Err(Error::Invalid(format!("{} cannot send to itself", self.me)))
        }
    }

    fn push(&mut self, dir: Dir, round: u32, mut payload: Vec<u8>) -> Result<()> {
        let receiver = self.links[dir as usize].peer;
        if let Some(t) = self.tamper {
            if t.sender == self.me && t.receiver == receiver && t.round == round && !payload.is_empty() {
                let i = t.byte % payload.len();
                payload[i] ^= t.mask;
            }
        }
        let frame = Frame {
            session: self.session,
            round,
            sender: self.me.index() as u8,
            receiver: receiver.index() as u8,
            payload,
        }
        .encode();
        if let Some(tr) = self.transcript.as_mut() {
            tr.push(SentRecord {
                round,
                receiver,
                frame: frame.clone(),
            });
        }
        let me = self.me.number();
        self.links[dir as usize].sink.send_frame(frame).map_err(|e| match e {
            Error::ChannelClosed(_) => Error::abort(me, format!("{receiver} closed the channel")),
            e => e,
        })
    }

    fn pull(&mut self, dir: Dir, round: u32) -> Result<Vec<u8>> {
        let peer = self.links[dir as usize].peer;
        let raw = match self.links[dir as usize].rx.recv_timeout(self.timeout) {
            Ok(raw) => raw,
            Err(RecvTimeoutError::Timeout) => {
                return Err(Error::Timeout {
                    party: self.me.number(),
                    peer: peer.number(),
                })
            }
            Err(RecvTimeoutError::Disconnected) => {
                return Err(Error::abort(
                    self.me.number(),
                    format!("{peer} closed the channel"),
                ))
            }
        };
        let frame = Frame::decode(&raw).map_err(|e| self.escalate(e))?;
        if frame.session != self.session
            || frame.round != round
            || frame.sender as usize != peer.index()
            || frame.receiver as usize != self.me.index()
        {
            let e = Error::Desync {
                party: self.me.number(),
                detail: format!(
                    "expected session {} round {} from {peer}, got session {} round {} from P{} to P{}",
                    self.session,
                    round,
                    frame.session,
                    frame.round,
                    frame.sender as usize + 1,
                    frame.receiver as usize + 1
                ),
            };
            return Err(self.escalate(e));
        }
        Ok(frame.payload)
    }

    /// In malicious mode every malformed or out-of-order message is an abort.
    pub fn escalate(&self, e: Error) -> Error {
        if self.strict && !e.is_abort() {
            Error::abort(self.me.number(), e.to_string())
        } else {
            e
        }
    }

    /// One communication round: optional payloads to next/prev, then the
    /// expected payloads from next/prev. Charged as a single round.
    pub fn exchange(
        &mut self,
        to_next: Option<Vec<u8>>,
        to_prev: Option<Vec<u8>>,
        from_next: bool,
        from_prev: bool,
    ) -> Result<(Option<Vec<u8>>, Option<Vec<u8>>)> {
        self.round += 1;
        let round = self.round;
        let mut cost = Cost {
            rounds: 1,
            ..Cost::default()
        };
        for (dir, payload) in [(Dir::Next, to_next), (Dir::Prev, to_prev)] {
            if let Some(p) = payload {
                cost.bytes += p.len() as u64;
                cost.wire_bytes += (p.len() + FRAME_OVERHEAD) as u64;
                cost.messages += 1;
                self.push(dir, round, p)?;
            }
        }
        self.meter.record(cost);
        let n = if from_next { Some(self.pull(Dir::Next, round)?) } else { None };
        let p = if from_prev { Some(self.pull(Dir::Prev, round)?) } else { None };
        Ok((n, p))
    }

    /// Receives a single payload sent with [`Net::send`].
    pub fn recv(&mut self, from: PartyId) -> Result<Vec<u8>> {
        let dir = self.dir_of(from)?;
        self.round += 1;
        self.pull(dir, self.round)
    }

    /// Exchanges a configuration digest with both peers outside the metered rounds.
    pub fn handshake(&mut self, digest: &[u8; 32]) -> Result<()> {
        self.push(Dir::Next, 0, digest.to_vec())?;
        self.push(Dir::Prev, 0, digest.to_vec())?;
        for dir in [Dir::Next, Dir::Prev] {
            let got = self.pull(dir, 0)?;
            if got != digest {
                return Err(Error::Config(format!(
                    "{} and {} disagree on the session configuration",
                    self.me, self.links[dir as usize].peer
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::thread;

    fn nets() -> Vec<Net> {
        memory_mesh()
            .into_iter()
            .map(|e| Net::new(e, 7, Duration::from_secs(5), false))
            .collect()
    }

    #[test]
    fn frame_round_trip() {
        let f = Frame {
            session: 3,
            round: 9,
            sender: 1,
            receiver: 2,
            payload: vec![1, 2, 3],
        };
        let enc = f.encode();
        assert_eq!(enc.len(), 23);
        assert_eq!(Frame::decode(&enc).unwrap(), f);
        let mut bad = enc.clone();
        bad[16] = 9;
        assert!(Frame::decode(&bad).is_err());
        assert!(Frame::decode(&enc[..10]).is_err());
    }

    #[test]
    fn exchange_counts_one_round() {
        let handles: Vec<_> = nets()
            .into_iter()
            .map(|mut net| {
                thread::spawn(move || {
                    let me = net.me().index() as u8;
                    let (n, p) = net.exchange(Some(vec![me; 4]), None, false, true).unwrap();
                    assert!(n.is_none());
                    assert_eq!(p.unwrap(), vec![(me + 2) % 3; 4]);
                    net.meter.total()
                })
            })
            .collect();
        for h in handles {
            let c = h.join().unwrap();
            assert_eq!(c.rounds, 1);
            assert_eq!(c.bytes, 4);
            assert_eq!(c.wire_bytes, 4 + FRAME_OVERHEAD as u64);
        }
    }

    #[test]
    fn many_sends_meter_header_overhead() {
        let mut v = nets();
        let mut a = v.remove(0);
        let mut b = v.remove(0);
        let t = thread::spawn(move || {
            for _ in 0..1000 {
                b.recv(b.me().prev()).unwrap();
            }
        });
        for _ in 0..1000 {
            a.send(a.me().next(), vec![0; 4]).unwrap();
        }
        t.join().unwrap();
        assert_eq!(a.meter.total().bytes, 4000);
        assert_eq!(a.meter.total().wire_bytes, 4000 + 1000 * FRAME_OVERHEAD as u64);
    }

    #[test]
    fn send_to_self_is_rejected() {
        let mut v = nets();
        let me = v[0].me();
        assert!(v[0].send(me, vec![1]).is_err());
    }

    #[test]
    fn mismatched_round_is_desync() {
        let mut v = nets();
        let mut a = v.remove(0);
        let mut b = v.remove(0);
        a.exchange(Some(vec![1]), None, false, false).unwrap();
        a.exchange(Some(vec![2]), None, false, false).unwrap();
        b.exchange(None, None, false, true).unwrap();
        b.round = 5;
        let err = b.exchange(None, None, false, true).unwrap_err();
        assert!(matches!(err, Error::Desync { .. }));
    }

    #[test]
    fn strict_mode_turns_desync_into_abort() {
        let mut v: Vec<Net> = memory_mesh()
            .into_iter()
            .map(|e| Net::new(e, 7, Duration::from_secs(5), true))
            .collect();
        let mut a = v.remove(0);
        let mut b = v.remove(0);
        a.exchange(Some(vec![1]), None, false, false).unwrap();
        b.round = 3;
        assert!(b.exchange(None, None, false, true).unwrap_err().is_abort());
    }

    #[test]
    fn dropped_peer_is_an_abort() {
        let mut v = nets();
        let mut a = v.remove(0);
        drop(v);
        let err = a.exchange(None, None, true, false).unwrap_err();
        assert!(err.is_abort());
    }

    #[test]
    fn timeout_is_reported() {
        let mut v: Vec<Net> = memory_mesh()
            .into_iter()
            .map(|e| Net::new(e, 7, Duration::from_millis(20), false))
            .collect();
        let err = v[0].exchange(None, None, true, false).unwrap_err();
        assert!(matches!(err, Error::Timeout { .. }));
    }

    #[test]
    fn handshake_detects_mismatch() {
        let handles: Vec<_> = nets()
            .into_iter()
            .map(|mut net| {
                thread::spawn(move || {
                    let d = if net.me().index() == 2 { [1u8; 32] } else { [0u8; 32] };
                    net.handshake(&d)
                })
            })
            .collect();
        let results: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
        assert!(results.iter().all(|r| matches!(r, Err(Error::Config(_)))));
    }

    #[test]
    fn tamper_flips_one_byte() {
        let mut v = nets();
        let mut a = v.remove(0);
        let mut b = v.remove(0);
        a.set_tamper(Some(Tamper {
            sender: a.me(),
            receiver: b.me(),
            round: 1,
            byte: 1,
            mask: 0xff,
        }));
        a.exchange(Some(vec![0, 0, 0]), None, false, false).unwrap();
        let (_, got) = b.exchange(None, None, false, true).unwrap();
        assert_eq!(got.unwrap(), vec![0, 0xff, 0]);
    }
}
