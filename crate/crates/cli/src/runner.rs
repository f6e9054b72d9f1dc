use std::path::{Path, PathBuf};
use std::time::Duration;

use falcon_core::harness::{run_each, root_cause, Backend};
use falcon_core::prep::PrepMode;
use falcon_core::transport::tcp::{self, PeerConfig};
use falcon_core::{Error, Party, PartyId, Result, RingParams, SessionConfig, ThreatModel};
use serde::Deserialize;

/// Settings shared by every command, from flags and an optional TOML file.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub party: Option<usize>,
    pub parties: Option<Vec<String>>,
    pub threat: Option<String>,
    pub ring_bits: Option<u32>,
    pub fp_bits: Option<u32>,
    pub prep: Option<String>,
    pub backend: Option<String>,
    pub seed: Option<u64>,
    pub timeout_secs: Option<u64>,
    pub record_prep: Option<PathBuf>,
    pub network: Option<String>,
    pub dataset: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Fields set in `over` win.
    pub fn merge(self, over: RunConfig) -> RunConfig {
        RunConfig {
            party: over.party.or(self.party),
            parties: over.parties.or(self.parties),
            threat: over.threat.or(self.threat),
            ring_bits: over.ring_bits.or(self.ring_bits),
            fp_bits: over.fp_bits.or(self.fp_bits),
            prep: over.prep.or(self.prep),
            backend: over.backend.or(self.backend),
            seed: over.seed.or(self.seed),
            timeout_secs: over.timeout_secs.or(self.timeout_secs),
            record_prep: over.record_prep.or(self.record_prep),
            network: over.network.or(self.network),
            dataset: over.dataset.or(self.dataset),
        }
    }

    /// Session and runner, with `default_bits` used when no ring size was given.
    pub fn runner(&self, default_bits: u32) -> Result<Runner> {
        let ell = self.ring_bits.unwrap_or(default_bits);
        let fp = self.fp_bits.unwrap_or(13);
        let threat: ThreatModel = self.threat.as_deref().unwrap_or("semi").parse()?;
        let mut s = SessionConfig::new(RingParams::with_bits(ell, fp)?, threat);
        s.prep = self.prep.as_deref().unwrap_or("dealer").parse::<PrepMode>()?;
        s.seed = self.seed.unwrap_or(1);
        if let Some(t) = self.timeout_secs {
            s.timeout = Duration::from_secs(t);
        }
        s.record_prep = self.record_prep.clone();
        let backend: Backend = self.backend.as_deref().unwrap_or("memory").parse()?;
        let party = match self.party {
            None => None,
            Some(n) => {
                let me = PartyId::from_number(n)?;
                let mut peers = match &self.parties {
                    Some(p) => PeerConfig { parties: p.clone() },
                    None => PeerConfig::localhost(7000),
                };
                peers.apply_env_overrides();
                peers.validate()?;
                Some((me, peers))
            }
        };
        Ok(Runner {
            session: s,
            backend,
            party,
        })
    }
}

/// Runs a job at all three parties in this process, or at one party that
/// talks to the others over TCP.
#[derive(Clone, Debug)]
pub struct Runner {
    pub session: SessionConfig,
    pub backend: Backend,
    pub party: Option<(PartyId, PeerConfig)>,
}

impl Runner {
    pub fn local(session: SessionConfig) -> Self {
        Runner {
            session,
            backend: Backend::Memory,
            party: None,
        }
    }

    pub fn with_context(mut self, context: &str) -> Self {
        self.session.context = context.to_string();
        self
    }

    /// Outcomes of the parties run here, in party order.
    pub fn run_parties<T, F>(&self, f: F) -> Result<Vec<(PartyId, T)>>
    where
        T: Send,
        F: Fn(&mut Party) -> Result<T> + Sync,
    {
        match &self.party {
            None => {
                let outs = run_each(
                    [self.session.clone(), self.session.clone(), self.session.clone()],
                    self.backend,
                    f,
                );
                let mut ok = Vec::new();
                let mut errs = Vec::new();
                for (id, o) in PartyId::ALL.into_iter().zip(outs) {
                    match o {
                        Ok(v) => ok.push((id, v)),
                        Err(e) => errs.push(e),
                    }
                }
                match root_cause(errs) {
                    Some(e) => Err(e),
                    None => Ok(ok),
                }
            }
            Some((me, peers)) => {
                let ep = tcp::connect(*me, peers, self.session.timeout)?;
                let mut p = Party::connect(&self.session, ep)?;
                let v = f(&mut p)?;
                p.finish_prep()?;
                Ok(vec![(*me, v)])
            }
        }
    }

    /// The first local party's outcome.
    pub fn run<T, F>(&self, f: F) -> Result<T>
    where
        T: Send,
        F: Fn(&mut Party) -> Result<T> + Sync,
    {
        Ok(self.run_parties(f)?.remove(0).1)
    }
}
