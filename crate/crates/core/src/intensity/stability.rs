//! Numeric checks of the stability conditions: kernel growth (`q < 1`),
//! negative drift of queues and spread, and bounds on the overall flow.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{IntensityError, IntensityModel, KernelSpec};
use crate::book::{MidPriceMove, OrderBookState, Side};
use crate::model::{MarketModel, ModelError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StabilityError {
    #[error(transparent)]
    Intensity(#[from] IntensityError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("drift scan needs finite queue and spread caps")]
    UnboundedScan,
    #[error("z0 and z1 must be greater than one")]
    BadRate,
}

/// Integer partitions of `n` as block sizes, each paired with the number of
/// ways to split `n` labelled jumps into blocks of those sizes.
pub fn partitions_with_counts(n: u32) -> Vec<(Vec<u32>, u64)> {
    fn rec(rest: u32, max: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if rest == 0 {
            out.push(cur.clone());
            return;
        }
        for k in (1..=rest.min(max)).rev() {
            cur.push(k);
            rec(rest - k, k, cur, out);
            cur.pop();
        }
    }
    let fact = |k: u32| (1..=k as u64).product::<u64>();
    let mut parts = Vec::new();
    rec(n, n, &mut Vec::new(), &mut parts);
    parts
        .into_iter()
        .map(|p| {
            let mut denom: u64 = p.iter().map(|&k| fact(k)).product();
            let mut j = 0;
            while j < p.len() {
                let run = p[j..].iter().take_while(|&&k| k == p[j]).count();
                denom *= fact(run as u32);
                j += run;
            }
            let count = fact(n) / denom;
            (p, count)
        })
        .collect()
}

/// Kernel growth sum for one class given `∫(φ*)^k` for `k = 1..=n`.
pub fn growth_sum(exponent: u32, d: f64, power_integrals: &[f64]) -> f64 {
    if exponent == 0 || d == 0.0 {
        return 0.0;
    }
    let total: f64 = partitions_with_counts(exponent)
        .iter()
        .map(|(blocks, count)| {
            *count as f64
                * blocks
                    .iter()
                    .map(|&k| power_integrals[k as usize - 1])
                    .product::<f64>()
        })
        .sum();
    d * total
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    /// `sup_e d(e) Σ_partitions coef Π ∫ (φ*)^{k_i}`.
    pub q_value: f64,
    pub per_class: Vec<f64>,
    pub pass: bool,
}

/// Kernel growth condition; fails on a divergent kernel integral.
pub fn check_assumption1(model: &IntensityModel) -> Result<GrowthReport, StabilityError> {
    let n = model.family.exponent();
    if n > 3 {
        return Err(IntensityError::ExponentTooLarge(n).into());
    }
    let mut per_class = Vec::with_capacity(model.n_classes());
    for e in 0..model.n_classes() {
        let (_, d) = model.growth_bound(e);
        let integrals: Vec<f64> = (1..=n.max(1))
            .map(|k| model.kernel.star_power_integral(e, k))
            .collect();
        if integrals.iter().any(|v| !v.is_finite()) {
            return Err(IntensityError::DivergentKernel(e).into());
        }
        per_class.push(growth_sum(n, d, &integrals));
    }
    let q_value = per_class.iter().copied().fold(0.0, f64::max);
    Ok(GrowthReport {
        q_value,
        per_class,
        pass: q_value < 1.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilityConfig {
    pub z0: f64,
    pub z1: f64,
    /// Queue threshold above which queues must drift down.
    pub c_bound: u32,
    /// Spread threshold; defaults to `c_bound`.
    pub c_bound_spread: Option<u32>,
    pub scan_queue_max: Option<u32>,
    pub scan_spread_max: Option<u32>,
    pub delta: f64,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        StabilityConfig {
            z0: 1.2,
            z1: 1.2,
            c_bound: 5,
            c_bound_spread: None,
            scan_queue_max: Some(30),
            scan_spread_max: Some(5),
            delta: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Coordinate {
    BidQueue,
    AskQueue,
    Spread,
}

impl Coordinate {
    fn of(self, u: &OrderBookState) -> i64 {
        match self {
            Coordinate::BidQueue => u.q1 as i64,
            Coordinate::AskQueue => u.q2 as i64,
            Coordinate::Spread => u.spread as i64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordinateDrift {
    pub coordinate: Coordinate,
    pub states_scanned: usize,
    /// Largest drift margin of the base rates (no excitation).
    pub max_margin: Option<f64>,
    pub worst_state: Option<OrderBookState>,
    /// Largest drift coefficient of the excitation term (history models).
    pub max_history_coefficient: Option<f64>,
    /// Excitation received by increasing events never exceeds that received
    /// by decreasing events of the same jump size.
    pub kernel_monotone: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub z0: f64,
    pub delta: f64,
    pub coordinates: Vec<CoordinateDrift>,
    pub pass: bool,
}

/// Drift margin `Σ rate · (z^Δ - 1)` for one state and coordinate, given
/// per-class rates.
fn margin_at(
    model: &MarketModel,
    u: &OrderBookState,
    coord: Coordinate,
    z: f64,
    rate: &dyn Fn(usize) -> f64,
    price_move: &dyn MidPriceMove,
) -> Result<f64, StabilityError> {
    let base = coord.of(u);
    let mut m = 0.0;
    for o in model.outcomes(u, price_move)? {
        let jump = coord.of(&o.transition.post) - base;
        if jump != 0 {
            m += rate(o.class) * o.prob * (z.powi(jump as i32) - 1.0);
        }
    }
    Ok(m)
}

fn scan_caps(cfg: &StabilityConfig) -> Result<(u32, u32), StabilityError> {
    match (cfg.scan_queue_max, cfg.scan_spread_max) {
        (Some(q), Some(s)) if q >= 1 && s >= 1 => Ok((q, s)),
        _ => Err(StabilityError::UnboundedScan),
    }
}

fn scanned_states(qmax: u32, smax: u32) -> impl Iterator<Item = OrderBookState> {
    (1..=smax).flat_map(move |s| {
        (1..=qmax).flat_map(move |q1| {
            (1..=qmax).map(move |q2| OrderBookState {
                q1,
                q2,
                spread: s,
            })
        })
    })
}

/// Signed jump sizes class `e` can cause on `coord` from `u`.
fn jumps_of(
    model: &MarketModel,
    u: &OrderBookState,
    coord: Coordinate,
    e: usize,
    price_move: &dyn MidPriceMove,
) -> Result<Vec<i64>, StabilityError> {
    let base = coord.of(u);
    Ok(model
        .outcomes_of(e, u, price_move)?
        .iter()
        .map(|o| coord.of(&o.transition.post) - base)
        .filter(|d| *d != 0)
        .collect())
}

/// Negative-drift check over the bounded scan window.
///
/// For history-driven families the margin must hold for every excitation
/// level: the base-rate margin must be at most `-δ`, the excitation term must
/// not push upward, and past events must excite decreasing events at least
/// as much as increasing ones of the same jump size.
pub fn check_drift(
    model: &MarketModel,
    cfg: &StabilityConfig,
    price_move: &dyn MidPriceMove,
) -> Result<DriftReport, StabilityError> {
    if !(cfg.z0 > 1.0) {
        return Err(StabilityError::BadRate);
    }
    let (qmax, smax) = scan_caps(cfg)?;
    let im = &model.intensity;
    let history = im.family.uses_history();
    let n_psi = im.family.exponent();
    let strict = |m: f64| m < 0.0 && m <= -cfg.delta;
    let mut coordinates = Vec::new();
    for coord in [Coordinate::BidQueue, Coordinate::AskQueue, Coordinate::Spread] {
        let threshold = match coord {
            Coordinate::Spread => cfg.c_bound_spread.unwrap_or(cfg.c_bound),
            _ => cfg.c_bound,
        };
        let mut scanned = 0;
        let mut worst: Option<(f64, OrderBookState)> = None;
        let mut hist_coef: Option<f64> = None;
        let mut monotone = true;
        for u in scanned_states(qmax, smax).filter(|u| coord.of(u) >= threshold as i64) {
            scanned += 1;
            let base = margin_at(model, &u, coord, cfg.z0, &|e| im.base_rate(e, &u), price_move)?;
            if worst.is_none_or(|(w, _)| base > w) {
                worst = Some((base, u));
            }
            if history {
                // Each reachable class contributes z^{n_ψ} with unit weight.
                let c = margin_at(model, &u, coord, cfg.z0, &|_| 1.0, price_move)?;
                hist_coef = Some(hist_coef.map_or(c, |h: f64| h.max(c)));
                if n_psi > 0 {
                    monotone &= kernel_monotone_at(model, &u, coord, price_move)?;
                }
            }
        }
        let pass = match worst {
            None => true,
            Some((m, _)) => {
                strict(m) && hist_coef.is_none_or(|c| c <= 0.0) && monotone
            }
        };
        coordinates.push(CoordinateDrift {
            coordinate: coord,
            states_scanned: scanned,
            max_margin: worst.map(|w| w.0),
            worst_state: worst.map(|w| w.1),
            max_history_coefficient: hist_coef,
            kernel_monotone: monotone,
            pass,
        });
    }
    let pass = coordinates.iter().all(|c| c.pass);
    Ok(DriftReport {
        z0: cfg.z0,
        delta: cfg.delta,
        coordinates,
        pass,
    })
}

fn kernel_monotone_at(
    model: &MarketModel,
    u: &OrderBookState,
    coord: Coordinate,
    price_move: &dyn MidPriceMove,
) -> Result<bool, StabilityError> {
    let im = &model.intensity;
    let KernelSpec::Separable { alpha, .. } = &im.kernel else {
        return Ok(true);
    };
    let n = im.n_classes();
    let jumps: Vec<Vec<i64>> = (0..n)
        .map(|e| jumps_of(model, u, coord, e, price_move))
        .collect::<Result<_, _>>()?;
    let sizes: std::collections::BTreeSet<i64> = jumps.iter().flatten().map(|d| d.abs()).collect();
    for size in sizes {
        let up: Vec<usize> = (0..n).filter(|&e| jumps[e].contains(&size)).collect();
        let down: Vec<usize> = (0..n).filter(|&e| jumps[e].contains(&-size)).collect();
        if up.is_empty() || down.is_empty() {
            continue;
        }
        // Column `x` of the kernel: excitation caused by class `x`.
        #[allow(clippy::needless_range_loop)]
        for x in 0..n {
            let sup_up = up.iter().map(|&e| alpha[e][x]).fold(f64::MIN, f64::max);
            let inf_down = down.iter().map(|&e| alpha[e][x]).fold(f64::MAX, f64::min);
            if sup_up > inf_down {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowBounds {
    /// `Σ_e c(e)`, events per second.
    pub c_star: f64,
    /// `Σ_e d(e) Σ_partitions coef Π ∫ (φ*)^{k_i}`.
    pub lambda_star: f64,
    /// Smallest total base rate over the scan window.
    pub psi_lower: f64,
    /// Largest queue drift with rate `z1` below the threshold.
    pub queue_drift_max: f64,
    /// Largest spread drift with rate `z1` below the threshold.
    pub spread_drift_max: f64,
    pub pass: bool,
}

/// Overall flow bounds. Queue and spread drifts below the threshold are
/// taken at zero excitation over the scan window.
pub fn check_flow_bounds(
    model: &MarketModel,
    cfg: &StabilityConfig,
    price_move: &dyn MidPriceMove,
) -> Result<FlowBounds, StabilityError> {
    if !(cfg.z1 > 1.0) {
        return Err(StabilityError::BadRate);
    }
    let (qmax, smax) = scan_caps(cfg)?;
    let im = &model.intensity;
    let n_psi = im.family.exponent();
    let mut c_star = 0.0;
    let mut lambda_star = 0.0;
    for e in 0..im.n_classes() {
        let (c, d) = im.growth_bound(e);
        c_star += c;
        if d > 0.0 {
            let integrals: Vec<f64> = (1..=n_psi.max(1))
                .map(|k| im.kernel.star_power_integral(e, k))
                .collect();
            lambda_star += growth_sum(n_psi, d, &integrals);
        }
    }
    let mut psi_lower = f64::INFINITY;
    let mut queue_drift_max = f64::NEG_INFINITY;
    let mut spread_drift_max = f64::NEG_INFINITY;
    let spread_threshold = cfg.c_bound_spread.unwrap_or(cfg.c_bound);
    for u in scanned_states(qmax, smax) {
        let total: f64 = (0..im.n_classes()).map(|e| im.psi(e, &u, 0.0)).sum();
        psi_lower = psi_lower.min(total);
        let rate = |e: usize| im.base_rate(e, &u);
        for (coord, side) in [(Coordinate::BidQueue, Side::Bid), (Coordinate::AskQueue, Side::Ask)] {
            if u.queue(side) <= cfg.c_bound {
                let m = margin_at(model, &u, coord, cfg.z1, &rate, price_move)?;
                queue_drift_max = queue_drift_max.max(m);
            }
        }
        if u.spread <= spread_threshold {
            let m = margin_at(model, &u, Coordinate::Spread, cfg.z1, &rate, price_move)?;
            spread_drift_max = spread_drift_max.max(m);
        }
    }
    let finite = c_star.is_finite()
        && lambda_star.is_finite()
        && queue_drift_max.is_finite()
        && spread_drift_max.is_finite();
    Ok(FlowBounds {
        c_star,
        lambda_star,
        psi_lower,
        queue_drift_max,
        spread_drift_max,
        pass: finite && psi_lower > 0.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub lipschitz_constant: f64,
    pub growth_power: u32,
    /// Largest `|ψ(x) - ψ(y)| / (K |x - y| (1 + x^n + y^n))` on the grid.
    pub max_ratio: f64,
    pub pass: bool,
}

/// Local Lipschitz regularity of ψ in the excitation argument, probed on a
/// grid of excitation levels.
pub fn check_regularity(model: &IntensityModel, grid: &[f64]) -> RegularityReport {
    let n = model.family.exponent();
    let k = n.max(1) as f64;
    let p = n.saturating_sub(1);
    let u = OrderBookState {
        q1: 1,
        q2: 1,
        spread: 1,
    };
    let mut max_ratio: f64 = 0.0;
    for e in 0..model.n_classes() {
        for &x in grid {
            for &y in grid {
                if x == y {
                    continue;
                }
                let lhs = (model.psi(e, &u, x) - model.psi(e, &u, y)).abs();
                let rhs = k * (x - y).abs() * (1.0 + x.powi(p as i32) + y.powi(p as i32));
                max_ratio = max_ratio.max(lhs / rhs);
            }
        }
    }
    RegularityReport {
        lipschitz_constant: k,
        growth_power: p,
        max_ratio,
        pass: max_ratio <= 1.0 + 1e-12,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub growth: GrowthReport,
    pub drift: DriftReport,
    pub flow: FlowBounds,
    pub regularity: RegularityReport,
    pub pass: bool,
}

pub fn validate_model(
    model: &MarketModel,
    cfg: &StabilityConfig,
    price_move: &dyn MidPriceMove,
) -> Result<StabilityReport, StabilityError> {
    let growth = check_assumption1(&model.intensity)?;
    let drift = check_drift(model, cfg, price_move)?;
    let flow = check_flow_bounds(model, cfg, price_move)?;
    let grid: Vec<f64> = (0..=20).map(|i| i as f64 * 0.5).collect();
    let regularity = check_regularity(&model.intensity, &grid);
    let pass = growth.pass && drift.pass && flow.pass && regularity.pass;
    Ok(StabilityReport {
        growth,
        drift,
        flow,
        regularity,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::book::UnitTickMove;
    use crate::intensity::{BaseTable, ClassSpec, EventClass, EventKind, Family, KernelShape};
    use crate::replenish::Replenishment;

    #[test]
    fn partition_counts() {
        let p3 = partitions_with_counts(3);
        assert_eq!(p3, vec![(vec![3], 1), (vec![2, 1], 3), (vec![1, 1, 1], 1)]);
        let p2 = partitions_with_counts(2);
        assert_eq!(p2, vec![(vec![2], 1), (vec![1, 1], 1)]);
        // Bell numbers.
        for (n, bell) in [(1, 1), (2, 2), (3, 5), (4, 15)] {
            let total: u64 = partitions_with_counts(n).iter().map(|p| p.1).sum();
            assert_eq!(total, bell);
        }
    }

    fn one_sided(family: Family, up: f64, down: f64, alpha: Option<(f64, f64)>) -> MarketModel {
        let class = |kind, side| EventClass {
            kind,
            side,
            size: 1,
            agent: 1,
        };
        let mut classes = Vec::new();
        for side in [Side::Bid, Side::Ask] {
            classes.push(ClassSpec {
                class: class(EventKind::Insert, side),
                base: BaseTable::Constant { rate: up },
            });
            classes.push(ClassSpec {
                class: class(EventKind::Consume, side),
                base: BaseTable::Constant { rate: down },
            });
        }
        let kernel = match alpha {
            None => KernelSpec::Zero,
            Some((a_up, a_down)) => KernelSpec::Separable {
                shape: KernelShape::Exponential { beta: 1.0 },
                alpha: (0..4)
                    .map(|e| vec![if e % 2 == 0 { a_up } else { a_down }; 4])
                    .collect(),
            },
        };
        MarketModel::new(
            IntensityModel::new(family, classes, kernel).unwrap(),
            Replenishment::DepletedSide {
                queue: vec![1.0],
                spread: vec![1.0],
            },
            1.0,
            4,
        )
        .unwrap()
    }

    fn cfg() -> StabilityConfig {
        StabilityConfig {
            c_bound: 2,
            scan_queue_max: Some(6),
            scan_spread_max: Some(1),
            ..Default::default()
        }
    }

    #[test]
    fn drift_margin_example() {
        let m = one_sided(Family::QueueReactive, 1.0, 2.0, None);
        let r = check_drift(&m, &cfg(), &UnitTickMove).unwrap();
        let bid = &r.coordinates[0];
        let expected = (1.2 - 1.0) * (1.0 - 2.0 / 1.2);
        assert!((bid.max_margin.unwrap() - expected).abs() < 1e-14);
        assert!(r.pass);
    }

    #[test]
    fn balanced_or_growing_queues_fail() {
        let even = check_drift(&one_sided(Family::QueueReactive, 1.0, 1.0, None), &cfg(), &UnitTickMove).unwrap();
        let m = even.coordinates[0].max_margin.unwrap();
        assert!((m - 0.2 * 0.2 / 1.2).abs() < 1e-14);
        assert!(!even.pass);
        let grow = check_drift(&one_sided(Family::QueueReactive, 2.0, 1.0, None), &cfg(), &UnitTickMove).unwrap();
        assert!(grow.coordinates[0].max_margin.unwrap() > 0.0);
        assert!(!grow.pass);
    }

    #[test]
    fn slack_is_enforced() {
        let m = one_sided(Family::QueueReactive, 1.0, 2.0, None);
        let c = StabilityConfig { delta: 0.2, ..cfg() };
        assert!(!check_drift(&m, &c, &UnitTickMove).unwrap().pass);
    }

    #[test]
    fn unbounded_scan_rejected() {
        let m = one_sided(Family::QueueReactive, 1.0, 2.0, None);
        let c = StabilityConfig { scan_queue_max: None, ..cfg() };
        assert_eq!(check_drift(&m, &c, &UnitTickMove).unwrap_err(), StabilityError::UnboundedScan);
    }

    #[test]
    fn hawkes_drift_needs_monotone_kernel() {
        // Insert and consume excited equally: the excitation term pushes up
        // (z0 - 1) + (1/z0 - 1) > 0 per unit z.
        let m = one_sided(Family::HawkesQr, 0.0, 2.0, Some((0.1, 0.1)));
        let r = check_drift(&m, &cfg(), &UnitTickMove).unwrap();
        assert!(r.coordinates[0].kernel_monotone);
        assert!(r.coordinates[0].max_history_coefficient.unwrap() > 0.0);
        assert!(!r.pass);
        let m = one_sided(Family::HawkesQr, 0.0, 2.0, Some((0.2, 0.1)));
        assert!(!check_drift(&m, &cfg(), &UnitTickMove).unwrap().coordinates[0].kernel_monotone);
    }

    #[test]
    fn flow_bounds_basic() {
        let m = one_sided(Family::Poisson, 0.7, 0.3, None);
        let f = check_flow_bounds(&m, &cfg(), &UnitTickMove).unwrap();
        assert!((f.c_star - 2.0).abs() < 1e-15);
        assert_eq!(f.lambda_star, 0.0);
        assert!(f.pass);
        let zero = one_sided(Family::QueueReactive, 0.0, 0.0, None);
        let f = check_flow_bounds(&zero, &cfg(), &UnitTickMove).unwrap();
        assert_eq!(f.psi_lower, 0.0);
        assert!(!f.pass);
        let h = one_sided(Family::HawkesQr, 0.5, 1.0, Some((0.1, 0.2)));
        let f = check_flow_bounds(&h, &cfg(), &UnitTickMove).unwrap();
        assert!((f.lambda_star - (2.0 * 0.4 + 2.0 * 0.8)).abs() < 1e-14);
    }

    #[test]
    fn growth_of_exponential_kernel() {
        let m = one_sided(Family::HawkesQr, 0.5, 1.0, Some((0.125, 0.125)));
        let g = check_assumption1(&m.intensity).unwrap();
        assert!((g.q_value - 0.5).abs() < 1e-15);
        assert!(g.pass);
    }

    #[test]
    fn regularity_holds_for_polynomial_families() {
        let grid: Vec<f64> = (0..=10).map(|i| i as f64).collect();
        for fam in [Family::QueueReactive, Family::HawkesQr, Family::Quadratic] {
            let alpha = if fam.uses_history() { Some((0.1, 0.1)) } else { None };
            let m = one_sided(fam, 1.0, 1.0, alpha);
            assert!(check_regularity(&m.intensity, &grid).pass, "{fam}");
        }
    }
}
