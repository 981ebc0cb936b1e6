//! Exact event-by-event simulation by thinning.
//!
//! Between events the book is frozen and every kernel summary decays, so the
//! total intensity just after the last accepted (or rejected) candidate bounds
//! the intensity until the next event. Candidates are drawn from a Poisson
//! clock at that bound and accepted with probability `λ(candidate) / bound`.
//!
//! Random stream (ChaCha8 seeded from a `u64`), per candidate:
//! 1. one standard exponential variate for the waiting time;
//! 2. one uniform for acceptance, drawn only for history-driven models;
//! 3. on acceptance, one uniform selecting the event class;
//! 4. on depletion, one uniform selecting the replenishment state.

mod log;
pub mod replay;

pub use log::{EventLog, EventRecord, LogError, LogMeta, LOG_COLUMNS};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::book::{apply_event, BookError, Direction, MidPriceMove, OrderBookState};
use crate::model::MarketModel;
use crate::replenish::{ReplenishError, ReplenishSampler};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("horizon must be positive")]
    BadHorizon,
    #[error("initial state {0} is not observable")]
    BadInitial(OrderBookState),
    #[error("head-room factor must be at least 1")]
    BadHeadroom,
    #[error("dominating rate {rate} exceeds the cap {cap} at t={time}")]
    RateExplosion { time: f64, rate: f64, cap: f64 },
    #[error("intensity {rate} exceeded the thinning bound {bound} at t={time}; raise the head-room factor")]
    BoundViolated { time: f64, rate: f64, bound: f64 },
    #[error("total intensity is zero at t={time} after {events} events; the event horizon cannot be reached")]
    Stalled { time: f64, events: usize },
    #[error(transparent)]
    Book(#[from] BookError),
    #[error(transparent)]
    Replenish(#[from] ReplenishError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Horizon {
    Events(usize),
    Time(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub initial: OrderBookState,
    pub horizon: Horizon,
    pub seed: u64,
    /// Abort when the dominating rate exceeds this many events per second.
    pub rate_cap: f64,
    /// Multiplier on the current rate used as the thinning bound when the
    /// kernel summaries can grow between events.
    pub headroom: f64,
    pub model_id: String,
}

impl SimConfig {
    pub fn new(initial: OrderBookState, horizon: Horizon, seed: u64) -> Self {
        SimConfig {
            initial,
            horizon,
            seed,
            rate_cap: 1e7,
            headroom: 2.0,
            model_id: String::new(),
        }
    }

    fn validate(&self) -> Result<(), SimError> {
        match self.horizon {
            Horizon::Events(0) => return Err(SimError::BadHorizon),
            Horizon::Time(t) if !(t > 0.0 && t.is_finite()) => return Err(SimError::BadHorizon),
            _ => {}
        }
        if !self.initial.is_observable() {
            return Err(SimError::BadInitial(self.initial));
        }
        if !(self.headroom >= 1.0) {
            return Err(SimError::BadHeadroom);
        }
        Ok(())
    }
}

/// Simulates the order book until the configured horizon.
pub fn simulate(
    model: &MarketModel,
    cfg: &SimConfig,
    price_move: &dyn MidPriceMove,
) -> Result<EventLog, SimError> {
    cfg.validate()?;
    let im = &model.intensity;
    let n = im.n_classes();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut sampler = ReplenishSampler::new(model.replenishment.clone())?;
    let mut ex = im.excitation();
    let history = im.family.uses_history() && ex.is_active();
    let headroom = if ex.is_monotone_between_events() { 1.0 } else { cfg.headroom };

    let (max_events, t_end) = match cfg.horizon {
        Horizon::Events(k) => (k, f64::INFINITY),
        Horizon::Time(t) => (usize::MAX, t),
    };
    let mut records = Vec::with_capacity(max_events.min(1 << 22));
    let mut state = cfg.initial;
    sampler.observe(state);
    let mut t = 0.0_f64;
    let mut rates = vec![0.0; n];

    let total_rate = |rates: &mut [f64], state: &OrderBookState, z: &[f64]| -> f64 {
        let mut total = 0.0;
        for (e, r) in rates.iter_mut().enumerate() {
            *r = im.psi(e, state, if history { z[e] } else { 0.0 });
            total += *r;
        }
        total
    };

    let mut current = total_rate(&mut rates, &state, ex.values());
    while records.len() < max_events {
        let bound = current * headroom;
        if bound == 0.0 {
            if t_end.is_finite() {
                break;
            }
            return Err(SimError::Stalled {
                time: t,
                events: records.len(),
            });
        }
        if !(bound <= cfg.rate_cap) {
            return Err(SimError::RateExplosion {
                time: t,
                rate: bound,
                cap: cfg.rate_cap,
            });
        }
        let wait: f64 = rng.sample::<f64, _>(Exp1) / bound;
        let cand = t + wait;
        if cand > t_end {
            break;
        }
        if cand == t {
            // Waiting time below the clock resolution; drop the candidate.
            continue;
        }
        if history {
            ex.advance_to(cand);
            current = total_rate(&mut rates, &state, ex.values());
            if current > bound * (1.0 + 1e-12) {
                return Err(SimError::BoundViolated {
                    time: cand,
                    rate: current,
                    bound,
                });
            }
            let u: f64 = rng.random();
            if u * bound >= current {
                t = cand;
                continue;
            }
        }
        let pick = rng.random::<f64>() * current;
        let mut acc = 0.0;
        let mut class = n - 1;
        for (e, r) in rates.iter().enumerate() {
            acc += r;
            if pick < acc {
                class = e;
                break;
            }
        }
        while rates[class] == 0.0 && class > 0 {
            class -= 1;
        }
        let spec = im.class(class);
        let mut desc = spec
            .descriptor(&state)
            .expect("classes with positive rate can occur");
        let queue = state.queue(desc.side);
        if desc.direction == Direction::Consume && desc.size >= queue {
            let mut fictitious = state;
            match desc.side {
                crate::book::Side::Bid => fictitious.q1 = 0,
                crate::book::Side::Ask => fictitious.q2 = 0,
            }
            desc = desc.with_replenish(sampler.sample(&mut rng, &fictitious, desc.side)?);
        }
        let tr = apply_event(&state, &desc, price_move)?;
        records.push(EventRecord {
            time: cand,
            agent: desc.agent,
            side: desc.side,
            direction: desc.direction,
            level: desc.level,
            size: desc.size,
            post: tr.post,
            depleted: tr.epsilon(),
            eta: tr.eta,
        });
        if history {
            ex.record(cand, class);
        }
        state = tr.post;
        sampler.observe(state);
        t = cand;
        current = total_rate(&mut rates, &state, ex.values());
    }
    let end = if t_end.is_finite() { t_end } else { t };
    Ok(EventLog {
        meta: LogMeta {
            seed: Some(cfg.seed),
            model: cfg.model_id.clone(),
            units_per_aes: model.units_per_aes,
            start: 0.0,
            end,
        },
        initial: cfg.initial,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::book::{Side, UnitTickMove};
    use crate::intensity::{
        BaseTable, ClassSpec, EventClass, EventKind, Family, IntensityModel, KernelShape, KernelSpec,
    };
    use crate::replenish::Replenishment;

    fn single(rate: f64) -> MarketModel {
        MarketModel::new(
            IntensityModel::new(
                Family::Poisson,
                vec![ClassSpec {
                    class: EventClass {
                        kind: EventKind::Insert,
                        side: Side::Bid,
                        size: 1,
                        agent: 1,
                    },
                    base: BaseTable::Constant { rate },
                }],
                KernelSpec::Zero,
            )
            .unwrap(),
            Replenishment::DepletedSide {
                queue: vec![1.0],
                spread: vec![1.0],
            },
            1.0,
            4,
        )
        .unwrap()
    }

    fn start() -> OrderBookState {
        OrderBookState::new(1, 1, 1).unwrap()
    }

    #[test]
    fn zero_model_gives_empty_log() {
        let log = simulate(&single(0.0), &SimConfig::new(start(), Horizon::Time(100.0), 1), &UnitTickMove).unwrap();
        assert!(log.is_empty());
        assert_eq!(log.meta.end, 100.0);
        let err = simulate(&single(0.0), &SimConfig::new(start(), Horizon::Events(5), 1), &UnitTickMove);
        assert!(matches!(err, Err(SimError::Stalled { .. })));
    }

    #[test]
    fn seed_determinism() {
        let cfg = SimConfig::new(start(), Horizon::Events(500), 42);
        let a = simulate(&single(2.0), &cfg, &UnitTickMove).unwrap();
        let b = simulate(&single(2.0), &cfg, &UnitTickMove).unwrap();
        assert_eq!(a.to_text(), b.to_text());
        let c = simulate(&single(2.0), &SimConfig { seed: 43, ..cfg }, &UnitTickMove).unwrap();
        assert_ne!(a.to_text(), c.to_text());
    }

    #[test]
    fn rate_cap_aborts() {
        let cfg = SimConfig {
            rate_cap: 1.0,
            ..SimConfig::new(start(), Horizon::Events(5), 1)
        };
        assert!(matches!(
            simulate(&single(2.0), &cfg, &UnitTickMove),
            Err(SimError::RateExplosion { .. })
        ));
    }

    #[test]
    fn explosive_hawkes_hits_cap() {
        let im = IntensityModel::new(
            Family::Quadratic,
            vec![ClassSpec {
                class: EventClass {
                    kind: EventKind::Insert,
                    side: Side::Ask,
                    size: 1,
                    agent: 1,
                },
                base: BaseTable::Constant { rate: 1.0 },
            }],
            KernelSpec::Separable {
                shape: KernelShape::Exponential { beta: 0.1 },
                alpha: vec![vec![3.0]],
            },
        )
        .unwrap();
        let m = MarketModel::new(
            im,
            Replenishment::DepletedSide {
                queue: vec![1.0],
                spread: vec![1.0],
            },
            1.0,
            1,
        )
        .unwrap();
        let cfg = SimConfig {
            rate_cap: 1e5,
            ..SimConfig::new(start(), Horizon::Time(1e3), 3)
        };
        assert!(matches!(simulate(&m, &cfg, &UnitTickMove), Err(SimError::RateExplosion { .. })));
    }

    #[test]
    fn increasing_table_kernel_needs_headroom() {
        let im = IntensityModel::new(
            Family::HawkesQr,
            vec![ClassSpec {
                class: EventClass {
                    kind: EventKind::Insert,
                    side: Side::Bid,
                    size: 1,
                    agent: 1,
                },
                base: BaseTable::Constant { rate: 0.1 },
            }],
            KernelSpec::Separable {
                shape: KernelShape::Table {
                    edges: vec![0.0, 0.1, 5.0],
                    values: vec![0.0, 50.0],
                },
                alpha: vec![vec![1.0]],
            },
        )
        .unwrap();
        let m = MarketModel::new(
            im,
            Replenishment::DepletedSide {
                queue: vec![1.0],
                spread: vec![1.0],
            },
            1.0,
            1,
        )
        .unwrap();
        let cfg = SimConfig {
            headroom: 1.5,
            ..SimConfig::new(start(), Horizon::Events(50), 5)
        };
        assert!(matches!(simulate(&m, &cfg, &UnitTickMove), Err(SimError::BoundViolated { .. })));
    }

    #[test]
    fn book_consistency() {
        let log = simulate(
            &crate::presets::default_queue_reactive(),
            &SimConfig::new(OrderBookState::new(4, 4, 1).unwrap(), Horizon::Events(20_000), 11),
            &UnitTickMove,
        )
        .unwrap();
        log.verify(&UnitTickMove).unwrap();
        assert!(log.records.iter().any(|r| r.depleted));
        assert!(log.records.iter().all(|r| (r.eta != 0) == r.depleted));
    }
}
