use std::collections::BTreeMap;
use std::ops::{Add, AddAssign, Sub};

use serde::{Deserialize, Serialize};

/// Communication consumed by one party.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cost {
    pub rounds: u64,
    /// Protocol payload bytes sent.
    pub bytes: u64,
    /// Payload plus framing bytes sent.
    pub wire_bytes: u64,
    pub messages: u64,
}

impl Add for Cost {
    type Output = Cost;
    fn add(self, o: Cost) -> Cost {
        Cost {
            rounds: self.rounds + o.rounds,
            bytes: self.bytes + o.bytes,
            wire_bytes: self.wire_bytes + o.wire_bytes,
            messages: self.messages + o.messages,
        }
    }
}

impl AddAssign for Cost {
    fn add_assign(&mut self, o: Cost) {
        *self = *self + o;
    }
}

impl Sub for Cost {
    type Output = Cost;
    fn sub(self, o: Cost) -> Cost {
        Cost {
            rounds: self.rounds - o.rounds,
            bytes: self.bytes - o.bytes,
            wire_bytes: self.wire_bytes - o.wire_bytes,
            messages: self.messages - o.messages,
        }
    }
}

/// Round and byte counters with a per-label breakdown.
///
/// Labels form a stack; a round is charged once to every distinct label on
/// the stack. An isolated scope (used for preprocessing and verification)
/// hides the enclosing labels so their counts stay purely online.
#[derive(Clone, Debug, Default)]
pub struct CostMeter {
    stack: Vec<String>,
    saved: Vec<Vec<String>>,
    labels: BTreeMap<String, Cost>,
    total: Cost,
}

impl CostMeter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn enter(&mut self, label: &str) {
        self.stack.push(label.to_string());
    }

    pub fn exit(&mut self) {
        self.stack.pop();
    }

    pub fn enter_isolated(&mut self, label: &str) {
        let prev = std::mem::replace(&mut self.stack, vec![label.to_string()]);
        self.saved.push(prev);
    }

    pub fn exit_isolated(&mut self) {
        self.stack = self.saved.pop().unwrap_or_default();
    }

    pub fn current_labels(&self) -> &[String] {
        &self.stack
    }

    pub fn record(&mut self, cost: Cost) {
        self.total += cost;
        let mut seen: Vec<&String> = Vec::with_capacity(self.stack.len());
        for l in &self.stack {
            if !seen.contains(&l) {
                seen.push(l);
                *self.labels.entry(l.clone()).or_default() += cost;
            }
        }
    }

    pub fn total(&self) -> Cost {
        self.total
    }

    pub fn label(&self, label: &str) -> Cost {
        self.labels.get(label).copied().unwrap_or_default()
    }

    pub fn labels(&self) -> &BTreeMap<String, Cost> {
        &self.labels
    }

    pub fn reset(&mut self) {
        self.labels.clear();
        self.total = Cost::default();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(bytes: u64) -> Cost {
        Cost {
            rounds: 1,
            bytes,
            wire_bytes: bytes + 20,
            messages: 1,
        }
    }

    #[test]
    fn nested_labels_charge_once() {
        let mut m = CostMeter::new();
        m.enter("relu");
        m.enter("wrap");
        m.enter("wrap");
        m.record(one(4));
        m.exit();
        m.exit();
        m.record(one(2));
        m.exit();
        assert_eq!(m.label("relu").rounds, 2);
        assert_eq!(m.label("wrap").rounds, 1);
        assert_eq!(m.label("wrap").bytes, 4);
        assert_eq!(m.total().bytes, 6);
    }

    #[test]
    fn isolated_scope_hides_outer_labels() {
        let mut m = CostMeter::new();
        m.enter("relu");
        m.enter_isolated("prep");
        m.record(one(100));
        m.exit_isolated();
        m.record(one(1));
        m.exit();
        assert_eq!(m.label("relu").bytes, 1);
        assert_eq!(m.label("prep").bytes, 100);
        assert_eq!(m.total().rounds, 2);
    }
}
