//! Best-limit order book state and the event algebra.
//!
//! The book is tracked only at the first limits: the best bid queue, the best
//! ask queue and the spread. Quantities are integers in units of the minimum
//! order size and the spread is an integer number of ticks. Every event is
//! described by its size, its price level (offset in ticks from the best bid),
//! its direction, the side it modifies first and the agent who sent it.
//!
//! When a consumption empties a best queue the book goes through a fictitious
//! state (one queue at zero) that only marks the price move; the observable
//! state is immediately replaced by the replenishment state carried by the
//! event.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Agent identifier. `0` is reserved for flow that could not be attributed.
pub type AgentId = u32;

/// Reserved agent id for unattributed flow.
pub const UNATTRIBUTED: AgentId = 0;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BookError {
    #[error("state ({q1}, {q2}, {spread}) is not observable")]
    NotObservable { q1: u32, q2: u32, spread: u32 },
    #[error("event size must be positive")]
    ZeroSize,
    #[error("spread is one tick: there is no price level inside the spread")]
    NoInteriorLevel,
    #[error("price level {level} is not valid for a {side} {direction} with spread {spread}")]
    LevelOutOfRange {
        level: u32,
        side: Side,
        direction: Direction,
        spread: u32,
    },
    #[error("event depletes the {0} queue but carries no replenishment state")]
    MissingReplenishment(Side),
    #[error("replenishment state ({q1}, {q2}, {spread}) is not observable")]
    InvalidReplenishment { q1: u32, q2: u32, spread: u32 },
}

/// Side of the book an event modifies first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Bid,
    Ask,
}

impl Side {
    /// Numeric code used in event logs (`1` bid, `2` ask).
    pub fn code(self) -> u8 {
        match self {
            Side::Bid => 1,
            Side::Ask => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(Side::Bid),
            2 => Some(Side::Ask),
            _ => None,
        }
    }

    pub fn opposite(self) -> Self {
        match self {
            Side::Bid => Side::Ask,
            Side::Ask => Side::Bid,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Bid => "bid",
            Side::Ask => "ask",
        })
    }
}

/// `Insert` provides liquidity (+1), `Consume` removes it (-1). Cancellations
/// and market orders are both consumptions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Insert,
    Consume,
}

impl Direction {
    pub fn sign(self) -> i8 {
        match self {
            Direction::Insert => 1,
            Direction::Consume => -1,
        }
    }

    pub fn from_sign(sign: i8) -> Option<Self> {
        match sign {
            1 => Some(Direction::Insert),
            -1 => Some(Direction::Consume),
            _ => None,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Insert => "insertion",
            Direction::Consume => "consumption",
        })
    }
}

/// Book state at the first limits.
///
/// Observable states have both queues positive and a spread of at least one
/// tick. States with exactly one empty queue are fictitious price-move
/// markers; both queues empty is unreachable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct OrderBookState {
    pub q1: u32,
    pub q2: u32,
    pub spread: u32,
}

impl OrderBookState {
    /// Builds an observable state.
    pub fn new(q1: u32, q2: u32, spread: u32) -> Result<Self, BookError> {
        let s = OrderBookState { q1, q2, spread };
        if s.is_observable() {
            Ok(s)
        } else {
            Err(BookError::NotObservable { q1, q2, spread })
        }
    }

    pub fn is_observable(&self) -> bool {
        self.q1 > 0 && self.q2 > 0 && self.spread >= 1
    }

    pub fn is_fictitious(&self) -> bool {
        (self.q1 == 0) != (self.q2 == 0)
    }

    pub fn queue(&self, side: Side) -> u32 {
        match side {
            Side::Bid => self.q1,
            Side::Ask => self.q2,
        }
    }

    fn with_queue(mut self, side: Side, value: u32) -> Self {
        match side {
            Side::Bid => self.q1 = value,
            Side::Ask => self.q2 = value,
        }
        self
    }

    /// Price level (offset from the best bid, in ticks) of the best quote on
    /// `side`.
    pub fn best_level(&self, side: Side) -> u32 {
        match side {
            Side::Bid => 0,
            Side::Ask => self.spread,
        }
    }
}

impl fmt::Display for OrderBookState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.q1, self.q2, self.spread)
    }
}

/// One book event without its post-state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventDescriptor {
    /// Size in minimum-order units.
    pub size: u32,
    /// Offset in ticks from the best bid price.
    pub level: u32,
    pub direction: Direction,
    pub side: Side,
    pub agent: AgentId,
    /// State the book jumps to when this event empties a best queue. Ignored
    /// otherwise.
    pub replenish: Option<OrderBookState>,
}

impl EventDescriptor {
    /// Insertion or consumption at the best quote of `side`.
    pub fn at_best(
        state: &OrderBookState,
        side: Side,
        direction: Direction,
        size: u32,
        agent: AgentId,
    ) -> Self {
        EventDescriptor {
            size,
            level: state.best_level(side),
            direction,
            side,
            agent,
            replenish: None,
        }
    }

    pub fn with_replenish(mut self, state: OrderBookState) -> Self {
        self.replenish = Some(state);
        self
    }

    /// True when the event is a limit order placed strictly inside the spread.
    pub fn is_inside_spread(&self, state: &OrderBookState) -> bool {
        self.direction == Direction::Insert && self.level != state.best_level(self.side)
    }
}

/// Maps a depleted (fictitious) state to a mid-price move in ticks.
pub trait MidPriceMove: Send + Sync {
    fn price_move(&self, depleted: &OrderBookState) -> i32;
}

/// One-tick moves: down when the bid empties, up when the ask empties.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct UnitTickMove;

impl MidPriceMove for UnitTickMove {
    fn price_move(&self, u: &OrderBookState) -> i32 {
        match (u.q1, u.q2) {
            (0, q2) if q2 > 0 => -1,
            (q1, 0) if q1 > 0 => 1,
            _ => 0,
        }
    }
}

impl<F> MidPriceMove for F
where
    F: Fn(&OrderBookState) -> i32 + Send + Sync,
{
    fn price_move(&self, depleted: &OrderBookState) -> i32 {
        self(depleted)
    }
}

/// Outcome of applying one event to the book.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Transition {
    pub post: OrderBookState,
    /// The fictitious state reached when a best queue was emptied.
    pub depleted: Option<OrderBookState>,
    /// Mid-price move in ticks; non-zero only on depletion.
    pub eta: i32,
}

impl Transition {
    /// Price-move indicator.
    pub fn epsilon(&self) -> bool {
        self.depleted.is_some()
    }

    pub fn depleted_side(&self) -> Option<Side> {
        self.depleted
            .map(|d| if d.q1 == 0 { Side::Bid } else { Side::Ask })
    }
}

/// Applies `event` to `state`.
///
/// Orders at the best quote change that queue; a consumption of at least the
/// queue size empties it, the book passes through the fictitious state and
/// jumps to the replenishment state. A limit order inside the spread opens a
/// new best level holding the order size and narrows the spread.
pub fn apply_event<F: MidPriceMove + ?Sized>(
    state: &OrderBookState,
    event: &EventDescriptor,
    price_move: &F,
) -> Result<Transition, BookError> {
    if !state.is_observable() {
        return Err(BookError::NotObservable {
            q1: state.q1,
            q2: state.q2,
            spread: state.spread,
        });
    }
    if event.size == 0 {
        return Err(BookError::ZeroSize);
    }
    let side = event.side;
    let spread = state.spread;
    let best = state.best_level(side);
    let at_best = event.level == best;

    if !at_best {
        // Interior levels: strictly between the best bid (0) and best ask.
        let interior = event.level > 0 && event.level < spread;
        if event.direction == Direction::Consume || !interior {
            if spread == 1 && event.direction == Direction::Insert {
                return Err(BookError::NoInteriorLevel);
            }
            return Err(BookError::LevelOutOfRange {
                level: event.level,
                side,
                direction: event.direction,
                spread,
            });
        }
    }

    let queue = state.queue(side);
    if event.direction == Direction::Consume && event.size >= queue {
        let replenish = event
            .replenish
            .ok_or(BookError::MissingReplenishment(side))?;
        if !replenish.is_observable() {
            return Err(BookError::InvalidReplenishment {
                q1: replenish.q1,
                q2: replenish.q2,
                spread: replenish.spread,
            });
        }
        let depleted = state.with_queue(side, 0);
        return Ok(Transition {
            post: replenish,
            depleted: Some(depleted),
            eta: price_move.price_move(&depleted),
        });
    }

    let post = match (event.direction, at_best) {
        (Direction::Insert, true) => state.with_queue(side, queue + event.size),
        (Direction::Consume, _) => state.with_queue(side, queue - event.size),
        (Direction::Insert, false) => {
            let narrowed = match side {
                Side::Bid => event.level,
                Side::Ask => spread - event.level,
            };
            OrderBookState {
                spread: spread - narrowed,
                ..state.with_queue(side, event.size)
            }
        }
    };
    Ok(Transition {
        post,
        depleted: None,
        eta: 0,
    })
}
