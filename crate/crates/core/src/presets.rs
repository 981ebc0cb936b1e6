//! Ready-made models used by the CLI defaults, tests and benchmarks.

use crate::book::{AgentId, Side};
use crate::intensity::{BaseTable, ClassSpec, EventClass, EventKind, Family, IntensityModel, KernelShape, KernelSpec};
use crate::model::MarketModel;
use crate::replenish::Replenishment;

fn class(kind: EventKind, side: Side, size: u32, agent: AgentId) -> EventClass {
    EventClass {
        kind,
        side,
        size,
        agent,
    }
}

fn both_sides(kind: EventKind, size: u32, agent: AgentId, base: BaseTable) -> [ClassSpec; 2] {
    [Side::Bid, Side::Ask].map(|side| ClassSpec {
        class: class(kind, side, size, agent),
        base: base.clone(),
    })
}

/// Unit orders at the best quotes with constant rates per side; a depleted
/// queue is refilled with one unit and the spread stays at one tick.
pub fn birth_death(insert: f64, consume: f64) -> MarketModel {
    let mut classes = Vec::new();
    classes.extend(both_sides(EventKind::Insert, 1, 1, BaseTable::Constant { rate: insert }));
    classes.extend(both_sides(EventKind::Consume, 1, 1, BaseTable::Constant { rate: consume }));
    MarketModel::new(
        IntensityModel::new(Family::QueueReactive, classes, KernelSpec::Zero).expect("valid preset"),
        Replenishment::DepletedSide {
            queue: vec![1.0],
            spread: vec![1.0],
        },
        1.0,
        1,
    )
    .expect("valid preset")
}

/// Multi-agent birth–death market: each agent inserts and consumes unit
/// orders at constant rates on both sides.
pub fn birth_death_agents(rates: &[(AgentId, f64, f64)]) -> MarketModel {
    let mut classes = Vec::new();
    for &(agent, insert, consume) in rates {
        classes.extend(both_sides(EventKind::Insert, 1, agent, BaseTable::Constant { rate: insert }));
        classes.extend(both_sides(EventKind::Consume, 1, agent, BaseTable::Constant { rate: consume }));
    }
    MarketModel::new(
        IntensityModel::new(Family::QueueReactive, classes, KernelSpec::Zero).expect("valid preset"),
        Replenishment::DepletedSide {
            queue: vec![1.0],
            spread: vec![1.0],
        },
        1.0,
        1,
    )
    .expect("valid preset")
}

/// Three-agent queue-reactive market.
///
/// * agent 1 (market maker): unit limit orders whose rate falls with the
///   queue, cancellations proportional to the queue and one-tick price
///   improvements when the spread is wide;
/// * agent 2: unit limit orders at a constant rate and unit consumption that
///   grows with the queue;
/// * agent 3 (taker): occasional two-unit limit orders and three-unit market
///   orders.
///
/// A depleted queue is refilled with one to four units and the spread is
/// redrawn in one to three ticks.
pub fn default_queue_reactive() -> MarketModel {
    let mm_insert = BaseTable::Queue {
        rates: vec![1.2, 1.2, 1.1, 1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4],
    };
    let mm_cancel = BaseTable::Queue {
        rates: (0..=20).map(|q| 0.15 * q as f64).collect(),
    };
    let improve = BaseTable::Spread {
        rates: vec![0.0, 2.0, 2.5],
    };
    let flow_consume = BaseTable::Queue {
        rates: vec![0.5, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0],
    };
    let mut classes = Vec::new();
    classes.extend(both_sides(EventKind::Insert, 1, 1, mm_insert));
    classes.extend(both_sides(EventKind::Consume, 1, 1, mm_cancel));
    classes.extend(both_sides(EventKind::InsertInSpread { improvement: 1 }, 1, 1, improve));
    classes.extend(both_sides(EventKind::Insert, 1, 2, BaseTable::Constant { rate: 0.5 }));
    classes.extend(both_sides(EventKind::Consume, 1, 2, flow_consume));
    classes.extend(both_sides(EventKind::Insert, 2, 3, BaseTable::Constant { rate: 0.2 }));
    classes.extend(both_sides(EventKind::Consume, 3, 3, BaseTable::Constant { rate: 0.25 }));
    MarketModel::new(
        IntensityModel::new(Family::QueueReactive, classes, KernelSpec::Zero).expect("valid preset"),
        Replenishment::DepletedSide {
            queue: vec![0.4, 0.3, 0.2, 0.1],
            spread: vec![0.7, 0.25, 0.05],
        },
        0.01,
        2,
    )
    .expect("valid preset")
}

/// The default market with exponential cross-excitation added on top of the
/// queue-reactive base rates (`ψ = h + z`).
pub fn default_hawkes(alpha: f64, beta: f64) -> MarketModel {
    let mut m = default_queue_reactive();
    let n = m.intensity.n_classes();
    m.intensity.family = Family::HawkesQr;
    m.intensity.kernel = KernelSpec::Separable {
        shape: KernelShape::Exponential { beta },
        alpha: vec![vec![alpha; n]; n],
    };
    m.validate().expect("valid preset");
    m
}
