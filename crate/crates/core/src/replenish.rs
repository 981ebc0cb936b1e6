//! Laws for the book state drawn after a best queue is depleted.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::book::{OrderBookState, Side};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReplenishError {
    #[error("replenishment law for the {0} side is empty or has zero mass")]
    Empty(Side),
    #[error("replenishment weight must be finite and non-negative")]
    BadWeight,
    #[error("replenishment state {0} is not observable")]
    NotObservable(OrderBookState),
    #[error("empirical replenishment has no closed-form law; it is only usable in simulation")]
    NotMarkov,
    #[error("empirical replenishment requested before any state was visited")]
    NoHistory,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedState {
    pub q1: u32,
    pub q2: u32,
    pub spread: u32,
    pub weight: f64,
}

impl WeightedState {
    fn state(&self) -> OrderBookState {
        OrderBookState {
            q1: self.q1,
            q2: self.q2,
            spread: self.spread,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "type")]
pub enum Replenishment {
    /// Full book state drawn from a fixed categorical law per depleted side.
    Categorical {
        bid: Vec<WeightedState>,
        ask: Vec<WeightedState>,
    },
    /// Only the depleted queue and the spread are redrawn; the opposite queue
    /// is kept. `queue[i]` weights size `i + 1`, `spread[j]` weights `j + 1`
    /// ticks.
    DepletedSide { queue: Vec<f64>, spread: Vec<f64> },
    /// Uniform draw among the post-event states visited so far.
    Empirical,
}

fn check_weights(w: &[f64]) -> Result<f64, ReplenishError> {
    if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(ReplenishError::BadWeight);
    }
    Ok(w.iter().sum())
}

impl Replenishment {
    pub fn validate(&self) -> Result<(), ReplenishError> {
        match self {
            Replenishment::Categorical { bid, ask } => {
                for (side, law) in [(Side::Bid, bid), (Side::Ask, ask)] {
                    let w: Vec<f64> = law.iter().map(|s| s.weight).collect();
                    if !(check_weights(&w)? > 0.0) {
                        return Err(ReplenishError::Empty(side));
                    }
                    if let Some(s) = law.iter().find(|s| s.weight > 0.0 && !s.state().is_observable()) {
                        return Err(ReplenishError::NotObservable(s.state()));
                    }
                }
                Ok(())
            }
            Replenishment::DepletedSide { queue, spread } => {
                if !(check_weights(queue)? > 0.0) || !(check_weights(spread)? > 0.0) {
                    return Err(ReplenishError::Empty(Side::Bid));
                }
                Ok(())
            }
            Replenishment::Empirical => Ok(()),
        }
    }

    /// Normalized law of the replenishment state after `side` is depleted in
    /// `depleted` (the fictitious state with that queue at zero).
    pub fn outcomes(
        &self,
        depleted: &OrderBookState,
        side: Side,
    ) -> Result<Vec<(OrderBookState, f64)>, ReplenishError> {
        match self {
            Replenishment::Categorical { bid, ask } => {
                let law = match side {
                    Side::Bid => bid,
                    Side::Ask => ask,
                };
                let total: f64 = law.iter().map(|s| s.weight).sum();
                if !(total > 0.0) {
                    return Err(ReplenishError::Empty(side));
                }
                Ok(law
                    .iter()
                    .filter(|s| s.weight > 0.0)
                    .map(|s| (s.state(), s.weight / total))
                    .collect())
            }
            Replenishment::DepletedSide { queue, spread } => {
                let qt: f64 = queue.iter().sum();
                let st: f64 = spread.iter().sum();
                if !(qt > 0.0 && st > 0.0) {
                    return Err(ReplenishError::Empty(side));
                }
                let mut out = Vec::new();
                for (j, ws) in spread.iter().enumerate().filter(|(_, w)| **w > 0.0) {
                    for (i, wq) in queue.iter().enumerate().filter(|(_, w)| **w > 0.0) {
                        let q = i as u32 + 1;
                        let s = j as u32 + 1;
                        let state = match side {
                            Side::Bid => OrderBookState {
                                q1: q,
                                q2: depleted.q2,
                                spread: s,
                            },
                            Side::Ask => OrderBookState {
                                q1: depleted.q1,
                                q2: q,
                                spread: s,
                            },
                        };
                        out.push((state, wq / qt * ws / st));
                    }
                }
                Ok(out)
            }
            Replenishment::Empirical => Err(ReplenishError::NotMarkov),
        }
    }

    pub fn is_markov(&self) -> bool {
        !matches!(self, Replenishment::Empirical)
    }

    /// Largest spread the law can produce, if bounded.
    pub fn max_spread(&self) -> Option<u32> {
        match self {
            Replenishment::Categorical { bid, ask } => {
                bid.iter().chain(ask).filter(|s| s.weight > 0.0).map(|s| s.spread).max()
            }
            Replenishment::DepletedSide { spread, .. } => {
                spread.iter().rposition(|w| *w > 0.0).map(|j| j as u32 + 1)
            }
            Replenishment::Empirical => None,
        }
    }
}

/// Draws replenishment states with one uniform variate per draw.
#[derive(Debug, Clone)]
pub struct ReplenishSampler {
    law: Replenishment,
    visited: Vec<OrderBookState>,
}

impl ReplenishSampler {
    pub fn new(law: Replenishment) -> Result<Self, ReplenishError> {
        law.validate()?;
        Ok(ReplenishSampler {
            law,
            visited: Vec::new(),
        })
    }

    /// Record a visited observable state (only kept for the empirical law).
    pub fn observe(&mut self, state: OrderBookState) {
        if matches!(self.law, Replenishment::Empirical) {
            self.visited.push(state);
        }
    }

    pub fn sample<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        depleted: &OrderBookState,
        side: Side,
    ) -> Result<OrderBookState, ReplenishError> {
        let u: f64 = rng.random();
        if let Replenishment::Empirical = self.law {
            if self.visited.is_empty() {
                return Err(ReplenishError::NoHistory);
            }
            let i = ((u * self.visited.len() as f64) as usize).min(self.visited.len() - 1);
            return Ok(self.visited[i]);
        }
        let outcomes = self.law.outcomes(depleted, side)?;
        let mut acc = 0.0;
        for (state, p) in &outcomes {
            acc += p;
            if u < acc {
                return Ok(*state);
            }
        }
        Ok(outcomes.last().expect("validated law is non-empty").0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn depleted_side_keeps_other_queue() {
        let law = Replenishment::DepletedSide {
            queue: vec![0.0, 1.0, 1.0],
            spread: vec![1.0],
        };
        let depleted = OrderBookState {
            q1: 0,
            q2: 7,
            spread: 1,
        };
        let out = law.outcomes(&depleted, Side::Bid).unwrap();
        assert_eq!(out.len(), 2);
        assert!(out.iter().all(|(s, p)| s.q2 == 7 && (*p - 0.5).abs() < 1e-15));
        assert_eq!(out[0].0.q1, 2);
    }

    #[test]
    fn categorical_rejects_unobservable() {
        let law = Replenishment::Categorical {
            bid: vec![WeightedState {
                q1: 0,
                q2: 1,
                spread: 1,
                weight: 1.0,
            }],
            ask: vec![],
        };
        assert!(matches!(law.validate(), Err(ReplenishError::NotObservable(_))));
    }

    #[test]
    fn sampler_frequencies() {
        let law = Replenishment::DepletedSide {
            queue: vec![3.0, 1.0],
            spread: vec![1.0],
        };
        let sampler = ReplenishSampler::new(law).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = OrderBookState {
            q1: 4,
            q2: 0,
            spread: 1,
        };
        let n = 20_000;
        let ones = (0..n)
            .filter(|_| sampler.sample(&mut rng, &d, Side::Ask).unwrap().q2 == 1)
            .count();
        let p = ones as f64 / n as f64;
        assert!((p - 0.75).abs() < 4.0 * (0.75f64 * 0.25 / n as f64).sqrt());
    }

    #[test]
    fn empirical_needs_history() {
        let mut s = ReplenishSampler::new(Replenishment::Empirical).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = OrderBookState {
            q1: 0,
            q2: 2,
            spread: 1,
        };
        assert_eq!(s.sample(&mut rng, &d, Side::Bid), Err(ReplenishError::NoHistory));
        let seen = OrderBookState::new(3, 3, 2).unwrap();
        s.observe(seen);
        assert_eq!(s.sample(&mut rng, &d, Side::Bid).unwrap(), seen);
    }
}
