use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::book::{apply_event, BookError, MidPriceMove, OrderBookState, Transition};
use crate::intensity::{IntensityError, IntensityModel};
use crate::replenish::{ReplenishError, Replenishment};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error(transparent)]
    Intensity(#[from] IntensityError),
    #[error(transparent)]
    Replenish(#[from] ReplenishError),
    #[error(transparent)]
    Book(#[from] BookError),
    #[error("tick size must be positive")]
    TickSize,
    #[error("units per AES must be positive")]
    Units,
}

/// Complete book dynamics: event intensities, the replenishment law and the
/// unit conventions used when reporting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketModel {
    pub intensity: IntensityModel,
    pub replenishment: Replenishment,
    /// Price units per tick.
    pub tick_size: f64,
    /// Minimum-order units per average event size.
    pub units_per_aes: u32,
}

/// One possible jump from a book state: the event class, the probability of
/// this replenishment outcome given the class fires, and the transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub class: usize,
    pub prob: f64,
    pub transition: Transition,
}

impl MarketModel {
    pub fn new(
        intensity: IntensityModel,
        replenishment: Replenishment,
        tick_size: f64,
        units_per_aes: u32,
    ) -> Result<Self, ModelError> {
        let m = MarketModel {
            intensity,
            replenishment,
            tick_size,
            units_per_aes,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.intensity.validate()?;
        self.replenishment.validate()?;
        if !(self.tick_size > 0.0 && self.tick_size.is_finite()) {
            return Err(ModelError::TickSize);
        }
        if self.units_per_aes == 0 {
            return Err(ModelError::Units);
        }
        Ok(())
    }

    /// Every jump class `i` can produce from `state`, with replenishment
    /// outcomes expanded. Requires a Markov replenishment law.
    pub fn outcomes_of(
        &self,
        i: usize,
        state: &OrderBookState,
        price_move: &dyn MidPriceMove,
    ) -> Result<Vec<Outcome>, ModelError> {
        let class = self.intensity.class(i);
        let Some(desc) = class.descriptor(state) else {
            return Ok(Vec::new());
        };
        let depletes = desc.direction == crate::book::Direction::Consume
            && desc.size >= state.queue(desc.side);
        if !depletes {
            let transition = apply_event(state, &desc, price_move)?;
            return Ok(vec![Outcome {
                class: i,
                prob: 1.0,
                transition,
            }]);
        }
        let fictitious = {
            let mut d = *state;
            match desc.side {
                crate::book::Side::Bid => d.q1 = 0,
                crate::book::Side::Ask => d.q2 = 0,
            }
            d
        };
        self.replenishment
            .outcomes(&fictitious, desc.side)?
            .into_iter()
            .map(|(r, p)| {
                let transition = apply_event(state, &desc.with_replenish(r), price_move)?;
                Ok(Outcome {
                    class: i,
                    prob: p,
                    transition,
                })
            })
            .collect()
    }

    /// Outcomes of all classes from `state`.
    pub fn outcomes(
        &self,
        state: &OrderBookState,
        price_move: &dyn MidPriceMove,
    ) -> Result<Vec<Outcome>, ModelError> {
        let mut out = Vec::new();
        for i in 0..self.intensity.n_classes() {
            out.extend(self.outcomes_of(i, state, price_move)?);
        }
        Ok(out)
    }
}
