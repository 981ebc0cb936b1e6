//! States of the Markov chain analysed by the estimators and solvers.
//!
//! A chain state is the observable book right after an event together with
//! the price move that event caused. States with `eta != 0` are the price-move
//! markers: the book just passed through an empty best queue.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::book::{OrderBookState, Side};
use crate::sim::EventRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ChainState {
    pub q1: u32,
    pub q2: u32,
    pub spread: u32,
    pub eta: i32,
}

impl ChainState {
    pub const MIN: ChainState = ChainState { q1: 0, q2: 0, spread: 0, eta: i32::MIN };
    pub const MAX: ChainState = ChainState { q1: u32::MAX, q2: u32::MAX, spread: u32::MAX, eta: i32::MAX };

    pub fn new(book: OrderBookState, eta: i32) -> Self {
        ChainState {
            q1: book.q1,
            q2: book.q2,
            spread: book.spread,
            eta,
        }
    }

    pub fn is_marker(&self) -> bool {
        self.eta != 0
    }
}

impl fmt::Display for ChainState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}:{}", self.q1, self.q2, self.spread, self.eta)
    }
}

impl FromStr for ChainState {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let p: Vec<&str> = s.trim().split(':').collect();
        if p.len() != 4 {
            return Err(format!("state label `{s}` must be q1:q2:spread:eta"));
        }
        let num = |x: &str| x.parse::<u32>().map_err(|_| format!("bad state label `{s}`"));
        Ok(ChainState {
            q1: num(p[0])?,
            q2: num(p[1])?,
            spread: num(p[2])?,
            eta: p[3].parse().map_err(|_| format!("bad state label `{s}`"))?,
        })
    }
}

/// Reduction of the book to the chain state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StateMap {
    /// Full book plus price-move marker.
    #[default]
    Full,
    /// One queue only, stored in its own field (`q1` for the bid, `q2` for
    /// the ask); the state is 0 with the move marker right after that queue
    /// was depleted.
    QueueOnly(Side),
}

impl StateMap {
    /// State before any event.
    pub fn initial(&self, book: &OrderBookState) -> ChainState {
        self.map(book, None)
    }

    /// State after `record`.
    pub fn after(&self, record: &EventRecord) -> ChainState {
        self.map(&record.post, record.depleted.then_some((record.side, record.eta)))
    }

    fn map(&self, book: &OrderBookState, depleted: Option<(Side, i32)>) -> ChainState {
        match self {
            StateMap::Full => ChainState::new(*book, depleted.map_or(0, |d| d.1)),
            StateMap::QueueOnly(side) => {
                let mut z = ChainState {
                    q1: 0,
                    q2: 0,
                    spread: 0,
                    eta: 0,
                };
                match depleted {
                    Some((s, eta)) if s == *side => z.eta = eta,
                    _ => match side {
                        Side::Bid => z.q1 = book.q1,
                        Side::Ask => z.q2 = book.q2,
                    },
                }
                z
            }
        }
    }

    pub fn is_full(&self) -> bool {
        matches!(self, StateMap::Full)
    }
}

impl fmt::Display for StateMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StateMap::Full => f.write_str("full"),
            StateMap::QueueOnly(Side::Bid) => f.write_str("bid-queue"),
            StateMap::QueueOnly(Side::Ask) => f.write_str("ask-queue"),
        }
    }
}

impl FromStr for StateMap {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(StateMap::Full),
            "bid-queue" => Ok(StateMap::QueueOnly(Side::Bid)),
            "ask-queue" => Ok(StateMap::QueueOnly(Side::Ask)),
            _ => Err(format!("unknown state map `{s}` (full | bid-queue | ask-queue)")),
        }
    }
}

/// Signed imbalance increment of one event in minimum-order units: inserted
/// bid volume counts positive, inserted ask volume negative, consumption the
/// other way round. Consumption is capped at the queue it empties.
pub fn imbalance_increment(pre: &OrderBookState, record: &EventRecord) -> i64 {
    signed_flow(pre, record.side, record.direction, record.size)
}

/// [`imbalance_increment`] for an event given by its fields.
pub fn signed_flow(pre: &OrderBookState, side: Side, direction: crate::book::Direction, size: u32) -> i64 {
    use crate::book::Direction;
    let n = size as i64;
    match (side, direction) {
        (Side::Bid, Direction::Insert) => n,
        (Side::Ask, Direction::Insert) => -n,
        (Side::Bid, Direction::Consume) => -n.min(pre.q1 as i64),
        (Side::Ask, Direction::Consume) => n.min(pre.q2 as i64),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::book::Direction;

    fn rec(side: Side, direction: Direction, size: u32, post: (u32, u32, u32), eta: i32) -> EventRecord {
        EventRecord {
            time: 1.0,
            agent: 1,
            side,
            direction,
            level: 0,
            size,
            post: OrderBookState {
                q1: post.0,
                q2: post.1,
                spread: post.2,
            },
            depleted: eta != 0,
            eta,
        }
    }

    #[test]
    fn label_round_trip() {
        let z = ChainState {
            q1: 3,
            q2: 0,
            spread: 2,
            eta: -1,
        };
        assert_eq!(z.to_string().parse::<ChainState>().unwrap(), z);
        assert!("1:2:3".parse::<ChainState>().is_err());
    }

    #[test]
    fn queue_only_marks_own_depletion() {
        let map = StateMap::QueueOnly(Side::Bid);
        let dep = rec(Side::Bid, Direction::Consume, 2, (4, 5, 1), -1);
        assert_eq!(map.after(&dep), ChainState { q1: 0, q2: 0, spread: 0, eta: -1 });
        let other = rec(Side::Ask, Direction::Consume, 2, (4, 5, 1), 1);
        assert_eq!(map.after(&other), ChainState { q1: 4, q2: 0, spread: 0, eta: 0 });
        assert_eq!(StateMap::Full.after(&dep), ChainState { q1: 4, q2: 5, spread: 1, eta: -1 });
    }

    #[test]
    fn imbalance_signs() {
        let pre = OrderBookState { q1: 2, q2: 3, spread: 1 };
        assert_eq!(imbalance_increment(&pre, &rec(Side::Bid, Direction::Insert, 2, (4, 3, 1), 0)), 2);
        assert_eq!(imbalance_increment(&pre, &rec(Side::Bid, Direction::Consume, 5, (1, 3, 1), -1)), -2);
        assert_eq!(imbalance_increment(&pre, &rec(Side::Ask, Direction::Insert, 1, (2, 4, 1), 0)), -1);
        assert_eq!(imbalance_increment(&pre, &rec(Side::Ask, Direction::Consume, 1, (2, 2, 1), 0)), 1);
    }
}
