//! Fixtures shared by the benchmarks.

use qrhawkes::steady::TruncatedGenerator;
use qrhawkes::{presets, simulate, EventLog, Horizon, OrderBookState, SimConfig, Truncation, UnitTickMove};

/// The default queue-reactive market simulated for `events` events.
pub fn default_log(events: usize, seed: u64) -> EventLog {
    let model = presets::default_queue_reactive();
    let cfg = SimConfig::new(OrderBookState::new(2, 2, 1).expect("valid state"), Horizon::Events(events), seed);
    simulate(&model, &cfg, &UnitTickMove).expect("default model simulates")
}

/// Generator of the default market on a `q_max_aes` by `s_max` box.
pub fn default_generator(q_max_aes: u32, s_max: u32) -> TruncatedGenerator {
    TruncatedGenerator::from_model(
        &presets::default_queue_reactive(),
        &Truncation { q_max_aes, s_max },
        OrderBookState::new(2, 2, 1).expect("valid state"),
        &UnitTickMove,
    )
    .expect("default model is Markov")
}
