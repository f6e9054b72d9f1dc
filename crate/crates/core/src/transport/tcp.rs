//! TCP links. Each connection gets a reader thread that pushes whole frames
//! into the same ordered queue type the in-memory backend uses.

use std::io::{ErrorKind, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::Path;
use std::thread;
use std::time::{Duration, Instant};

use crossbeam_channel::{unbounded, Sender};
use serde::{Deserialize, Serialize};

use super::{Endpoints, FrameSink, PeerLink, FRAME_OVERHEAD};
use crate::error::{Error, Result};
use crate::rss::PartyId;

/// Peer addresses, indexed by party (P1 first).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeerConfig {
    pub parties: Vec<String>,
}

impl PeerConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg: PeerConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.apply_env_overrides();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn localhost(base_port: u16) -> Self {
        PeerConfig {
            parties: (0..3).map(|i| format!("127.0.0.1:{}", base_port + i)).collect(),
        }
    }

    /// `FALCON_PORT_P1`..`FALCON_PORT_P3` replace the port of a party's address.
    pub fn apply_env_overrides(&mut self) {
        for (i, addr) in self.parties.iter_mut().enumerate() {
            if let Ok(port) = std::env::var(format!("FALCON_PORT_P{}", i + 1)) {
                let host = addr.rsplit_once(':').map(|(h, _)| h).unwrap_or("127.0.0.1");
                *addr = format!("{host}:{port}");
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.parties.len() != 3 {
            return Err(Error::Config(format!(
                "expected 3 party addresses, found {}",
                self.parties.len()
            )));
        }
        for a in &self.parties {
            resolve(a)?;
        }
        Ok(())
    }
}

fn resolve(addr: &str) -> Result<SocketAddr> {
    addr.to_socket_addrs()
        .map_err(|e| Error::Config(format!("bad address {addr}: {e}")))?
        .next()
        .ok_or_else(|| Error::Config(format!("address {addr} did not resolve")))
}

struct TcpSink {
    stream: TcpStream,
    peer: usize,
}

impl FrameSink for TcpSink {
    fn send_frame(&mut self, frame: Vec<u8>) -> Result<()> {
        self.stream
            .write_all(&frame)
            .map_err(|_| Error::ChannelClosed(self.peer))
    }
}

impl Drop for TcpSink {
    fn drop(&mut self) {
        let _ = self.stream.shutdown(Shutdown::Write);
    }
}

fn spawn_reader(mut stream: TcpStream, tx: Sender<Vec<u8>>) {
    thread::spawn(move || loop {
        let mut head = [0u8; FRAME_OVERHEAD];
        if stream.read_exact(&mut head).is_err() {
            return;
        }
        let len = u32::from_le_bytes(head[16..20].try_into().expect("4 bytes")) as usize;
        let mut frame = head.to_vec();
        frame.resize(FRAME_OVERHEAD + len, 0);
        if stream.read_exact(&mut frame[FRAME_OVERHEAD..]).is_err() {
            return;
        }
        if tx.send(frame).is_err() {
            return;
        }
    });
}

fn link(peer: PartyId, stream: TcpStream) -> Result<PeerLink> {
    stream.set_nodelay(true)?;
    let reader = stream.try_clone()?;
    let (tx, rx) = unbounded();
    spawn_reader(reader, tx);
    Ok(PeerLink {
        peer,
        sink: Box::new(TcpSink {
            stream,
            peer: peer.number(),
        }),
        rx,
    })
}

/// Connects party `me` to both peers. Lower-numbered parties listen, higher
/// ones dial; each dialer announces itself with one byte.
pub fn connect(me: PartyId, cfg: &PeerConfig, timeout: Duration) -> Result<Endpoints> {
    cfg.validate()?;
    let listener = TcpListener::bind(resolve(&cfg.parties[me.index()])?)?;
    listener.set_nonblocking(true)?;
    let deadline = Instant::now() + timeout;
    let mut streams: [Option<TcpStream>; 3] = [None, None, None];

    for j in 0..me.index() {
        let addr = resolve(&cfg.parties[j])?;
        let mut stream = loop {
            match TcpStream::connect_timeout(&addr, Duration::from_millis(200)) {
                Ok(s) => break s,
                Err(_) if Instant::now() < deadline => thread::sleep(Duration::from_millis(20)),
                Err(e) => {
                    return Err(Error::Config(format!("{me} could not reach P{}: {e}", j + 1)))
                }
            }
        };
        stream.write_all(&[me.index() as u8])?;
        streams[j] = Some(stream);
    }
    let mut pending = 2 - me.index();
    while pending > 0 {
        match listener.accept() {
            Ok((mut s, _)) => {
                s.set_nonblocking(false)?;
                let mut id = [0u8];
                s.read_exact(&mut id)?;
                let j = id[0] as usize;
                if j <= me.index() || j > 2 || streams[j].is_some() {
                    return Err(Error::Config(format!("unexpected peer id {j} at {me}")));
                }
                streams[j] = Some(s);
                pending -= 1;
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => {
                if Instant::now() > deadline {
                    return Err(Error::Timeout {
                        party: me.number(),
                        peer: 0,
                    });
                }
                thread::sleep(Duration::from_millis(5));
            }
            Err(e) => return Err(e.into()),
        }
    }
    let take = |streams: &mut [Option<TcpStream>; 3], p: PartyId| {
        streams[p.index()].take().expect("connected above")
    };
    let next = take(&mut streams, me.next());
    let prev = take(&mut streams, me.prev());
    Ok(Endpoints {
        me,
        links: [link(me.next(), next)?, link(me.prev(), prev)?],
    })
}

/// A fresh block of three consecutive free localhost ports.
pub fn free_local_config() -> Result<PeerConfig> {
    for _ in 0..50 {
        let l = TcpListener::bind("127.0.0.1:0")?;
        let base = l.local_addr()?.port();
        drop(l);
        if base > 65530 {
            continue;
        }
        let ok = (0..3).all(|i| TcpListener::bind(("127.0.0.1", base + i)).is_ok());
        if ok {
            return Ok(PeerConfig::localhost(base));
        }
    }
    Err(Error::Config("no free local ports".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::Net;

    #[test]
    fn parses_config_and_env_override() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("peers.toml");
        std::fs::write(
            &path,
            "parties = [\"127.0.0.1:9001\", \"127.0.0.1:9002\", \"127.0.0.1:9003\"]\n",
        )
        .unwrap();
        let cfg = PeerConfig::load(&path).unwrap();
        assert_eq!(cfg.parties[1], "127.0.0.1:9002");
        let mut c = cfg.clone();
        std::env::set_var("FALCON_PORT_P3", "9100");
        c.apply_env_overrides();
        std::env::remove_var("FALCON_PORT_P3");
        assert_eq!(c.parties[2], "127.0.0.1:9100");
        let bad = PeerConfig {
            parties: vec!["127.0.0.1:1".into()],
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn tcp_exchange_round_trip() {
        let cfg = free_local_config().unwrap();
        let handles: Vec<_> = PartyId::ALL
            .into_iter()
            .map(|me| {
                let cfg = cfg.clone();
                thread::spawn(move || {
                    let ep = connect(me, &cfg, Duration::from_secs(10)).unwrap();
                    let mut net = Net::new(ep, 1, Duration::from_secs(10), false);
                    net.handshake(&[5; 32]).unwrap();
                    let (n, p) = net
                        .exchange(Some(vec![me.index() as u8]), Some(vec![9]), true, true)
                        .unwrap();
                    (me, n.unwrap(), p.unwrap())
                })
            })
            .collect();
        for h in handles {
            let (me, n, p) = h.join().unwrap();
            assert_eq!(n, vec![9]);
            assert_eq!(p, vec![me.prev().index() as u8]);
        }
    }
}
