//! Runs the three parties of a session as threads of one process.

use std::thread;

use crate::error::{Error, Result};
use crate::party::{Party, SessionConfig};
use crate::rss::PartyId;
use crate::transport::tcp::{self, PeerConfig};
use crate::transport::{memory_mesh, Endpoints};

/// Which links a local run uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Backend {
    Memory,
    Tcp,
}

impl std::str::FromStr for Backend {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "memory" => Ok(Backend::Memory),
            "tcp" => Ok(Backend::Tcp),
            other => Err(Error::Config(format!("unknown backend {other}"))),
        }
    }
}

fn endpoints(backend: Backend, cfg: &SessionConfig) -> Result<Vec<Box<dyn FnOnce() -> Result<Endpoints> + Send>>> {
    match backend {
        Backend::Memory => Ok(memory_mesh()
            .into_iter()
            .map(|ep| Box::new(move || Ok(ep)) as Box<dyn FnOnce() -> Result<Endpoints> + Send>)
            .collect()),
        Backend::Tcp => {
            let peers: PeerConfig = tcp::free_local_config()?;
            let timeout = cfg.timeout;
            Ok(PartyId::ALL
                .into_iter()
                .map(|me| {
                    let peers = peers.clone();
                    Box::new(move || tcp::connect(me, &peers, timeout))
                        as Box<dyn FnOnce() -> Result<Endpoints> + Send>
                })
                .collect())
        }
    }
}

/// Runs `f` at all three parties, each with its own configuration, and returns
/// every party's outcome.
pub fn run_each<T, F>(cfgs: [SessionConfig; 3], backend: Backend, f: F) -> [Result<T>; 3]
where
    T: Send,
    F: Fn(&mut Party) -> Result<T> + Sync,
{
    let eps = match endpoints(backend, &cfgs[0]) {
        Ok(e) => e,
        Err(e) => {
            let msg = e.to_string();
            return [Err(e), Err(Error::Config(msg.clone())), Err(Error::Config(msg))];
        }
    };
    let f = &f;
    let out: Vec<Result<T>> = thread::scope(|s| {
        let handles: Vec<_> = eps
            .into_iter()
            .zip(cfgs.iter())
            .map(|(ep, cfg)| {
                s.spawn(move || {
                    let mut party = Party::connect(cfg, ep()?)?;
                    let r = f(&mut party);
                    if r.is_ok() {
                        party.finish_prep()?;
                    }
                    r
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::Invalid("party thread panicked".into()))))
            .collect()
    });
    out.try_into().unwrap_or_else(|_| unreachable!("three parties"))
}

/// Picks the most informative error: a party's own failure rather than the
/// disconnects and timeouts it caused at its peers.
pub fn root_cause(errors: Vec<Error>) -> Option<Error> {
    fn rank(e: &Error) -> u8 {
        match e {
            Error::Abort { reason, .. } if reason.contains("closed the channel") => 1,
            Error::Timeout { .. } | Error::ChannelClosed(_) => 1,
            Error::Abort { .. } => 3,
            _ => 2,
        }
    }
    let mut errors = errors;
    errors.sort_by_key(|e| std::cmp::Reverse(rank(e)));
    errors.into_iter().next()
}

/// Runs `f` at all three parties with one configuration.
pub fn run_local<T, F>(cfg: &SessionConfig, f: F) -> Result<[T; 3]>
where
    T: Send,
    F: Fn(&mut Party) -> Result<T> + Sync,
{
    run_with(cfg, Backend::Memory, f)
}

pub fn run_with<T, F>(cfg: &SessionConfig, backend: Backend, f: F) -> Result<[T; 3]>
where
    T: Send,
    F: Fn(&mut Party) -> Result<T> + Sync,
{
    let outs = run_each([cfg.clone(), cfg.clone(), cfg.clone()], backend, f);
    let mut ok = Vec::with_capacity(3);
    let mut errs = Vec::new();
    for o in outs {
        match o {
            Ok(v) => ok.push(v),
            Err(e) => errs.push(e),
        }
    }
    match root_cause(errs) {
        Some(e) => Err(e),
        None => Ok(ok.try_into().unwrap_or_else(|_| unreachable!("three parties"))),
    }
}
