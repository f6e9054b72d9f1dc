//! Three-party honest-majority secure computation over replicated secret
//! sharing, with the protocol suite needed to evaluate and train small
//! neural networks under semi-honest or malicious-with-abort security.

pub mod error;
pub mod harness;
pub mod nn;
pub mod oracle;
pub mod party;
pub mod protocols;
pub mod prep;
pub mod rings;
pub mod rss;
pub mod transport;

pub use error::{Error, Result};
pub use party::{Party, Round, SessionConfig, ThreatModel};
pub use rings::{Modulus, RingParams};
pub use rss::{PartyId, Shares};
