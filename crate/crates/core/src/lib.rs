//! Limit order book dynamics driven by state-dependent, possibly
//! self-exciting order flow: simulation, generator estimation, stationary
//! analysis and counterfactual market-maker ranking.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod book;
pub mod chain;
pub mod config;
pub mod estimate;
pub mod intensity;
pub mod model;
pub mod presets;
pub mod rank;
pub mod replenish;
pub mod sim;
pub mod stats;
pub mod steady;

pub use book::{
    apply_event, AgentId, BookError, Direction, EventDescriptor, MidPriceMove, OrderBookState,
    Side, Transition, UnitTickMove, UNATTRIBUTED,
};
pub use chain::{ChainState, StateMap};
pub use config::{ConfigError, Preset, RunConfig, CONFIG_SCHEMA};
pub use estimate::{
    estimate_conditional_price_move, estimate_generator, estimate_mean_interarrival, EstimateConfig,
    EstimateError, GeneratorEstimate,
};
pub use intensity::{
    BaseTable, ClassSpec, EventClass, EventKind, Excitation, Family, IntensityError,
    IntensityModel, KernelShape, KernelSpec,
};
pub use model::{MarketModel, ModelError, Outcome};
pub use rank::{rank_assets, rank_market_makers, RankConfig, RankError, RankingReport, ShareBasis};
pub use replenish::{ReplenishError, ReplenishSampler, Replenishment, WeightedState};
pub use steady::{
    analyse, solve_stationary, AnalysisConfig, StationaryReport, SteadyError, Truncation,
    TruncatedGenerator,
};
pub use sim::{simulate, EventLog, EventRecord, Horizon, SimConfig, SimError};
