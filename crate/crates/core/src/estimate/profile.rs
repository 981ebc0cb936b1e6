//! Event intensities as a function of the queue size they act on, in
//! orders per second against queue size in AES.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::book::{AgentId, Direction, Side};
use crate::sim::EventLog;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlowKind {
    /// Limit order at the best quote.
    Insert,
    /// Cancellation or market order at the best quote.
    Consume,
    /// Limit order inside the spread.
    Improve,
}

impl FlowKind {
    fn label(self) -> &'static str {
        match self {
            FlowKind::Insert => "insert",
            FlowKind::Consume => "consume",
            FlowKind::Improve => "improve",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    /// `None` pools both sides.
    pub side: Option<Side>,
    pub kind: FlowKind,
    /// `None` is the whole market.
    pub agent: Option<AgentId>,
    /// Own-side queue before the event, in AES.
    pub queue_aes: f64,
    pub events: u64,
    pub time_s: f64,
    pub rate_per_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensityProfile {
    pub units_per_aes: u32,
    pub rows: Vec<ProfileRow>,
}

type Key = (Option<Side>, FlowKind, Option<AgentId>, u32);

/// Counts events by own-side queue size and divides by the time each side's
/// queue spent at that size. Time and events with a spread above
/// `spread_filter` are ignored.
pub fn intensity_profile(logs: &[EventLog], spread_filter: Option<u32>) -> IntensityProfile {
    let units_per_aes = logs.first().map_or(1, |l| l.meta.units_per_aes.max(1));
    // Time at each queue size, per side.
    let mut time: BTreeMap<(Side, u32), f64> = BTreeMap::new();
    let mut counts: BTreeMap<Key, u64> = BTreeMap::new();
    for log in logs {
        let mut t = log.meta.start;
        let mut book = log.initial;
        let ok = |s: u32| spread_filter.is_none_or(|f| s <= f);
        let mut hold = |book: &crate::book::OrderBookState, dt: f64| {
            if ok(book.spread) {
                *time.entry((Side::Bid, book.q1)).or_insert(0.0) += dt;
                *time.entry((Side::Ask, book.q2)).or_insert(0.0) += dt;
            }
        };
        for r in &log.records {
            hold(&book, r.time - t);
            if ok(book.spread) {
                let kind = match r.direction {
                    Direction::Consume => FlowKind::Consume,
                    Direction::Insert if r.level == book.best_level(r.side) => FlowKind::Insert,
                    Direction::Insert => FlowKind::Improve,
                };
                let q = book.queue(r.side);
                for side in [Some(r.side), None] {
                    for agent in [None, Some(r.agent)] {
                        *counts.entry((side, kind, agent, q)).or_insert(0) += 1;
                    }
                }
            }
            book = r.post;
            t = r.time;
        }
        hold(&book, (log.meta.end - t).max(0.0));
    }
    let rows = counts
        .into_iter()
        .map(|((side, kind, agent, q), events)| {
            let time_s = match side {
                Some(s) => time.get(&(s, q)).copied().unwrap_or(0.0),
                None => [Side::Bid, Side::Ask].iter().map(|s| time.get(&(*s, q)).copied().unwrap_or(0.0)).sum(),
            };
            ProfileRow {
                side,
                kind,
                agent,
                queue_aes: q as f64 / units_per_aes as f64,
                events,
                time_s,
                rate_per_s: if time_s > 0.0 { events as f64 / time_s } else { 0.0 },
            }
        })
        .collect();
    IntensityProfile { units_per_aes, rows }
}

impl IntensityProfile {
    /// `side,kind,agent,queue_aes,events,time_s,rate_per_s`; pooled rows
    /// have side `both` and market rows agent `*`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("side,kind,agent,queue_aes,events,time_s,rate_per_s\n");
        for r in &self.rows {
            let side = match r.side {
                Some(Side::Bid) => "bid",
                Some(Side::Ask) => "ask",
                None => "both",
            };
            let agent = r.agent.map_or_else(|| "*".to_string(), |a| a.to_string());
            let _ = writeln!(
                s,
                "{side},{},{agent},{},{},{},{}",
                r.kind.label(),
                r.queue_aes,
                r.events,
                r.time_s,
                r.rate_per_s
            );
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::book::{OrderBookState, UnitTickMove};
    use crate::presets;
    use crate::sim::{simulate, Horizon, SimConfig};

    #[test]
    fn recovers_constant_rates() {
        let m = presets::birth_death(1.0, 2.0);
        let log = simulate(&m, &SimConfig::new(OrderBookState::new(1, 1, 1).unwrap(), Horizon::Events(200_000), 9), &UnitTickMove).unwrap();
        let p = intensity_profile(&[log], None);
        for r in p.rows.iter().filter(|r| r.agent.is_none() && r.side == Some(Side::Bid) && r.events > 5000) {
            let target = if r.kind == FlowKind::Insert { 1.0 } else { 2.0 };
            assert!((r.rate_per_s - target).abs() < 0.1, "{r:?}");
        }
        let pooled = p.rows.iter().find(|r| r.side.is_none() && r.agent.is_none() && r.kind == FlowKind::Consume && r.queue_aes == 1.0).unwrap();
        assert!((pooled.rate_per_s - 2.0).abs() < 0.1);
        assert!(p.to_csv().lines().any(|l| l.starts_with("bid,insert,*,1,")));
    }
}
