//! Generator estimation from event logs.
//!
//! `Q̂(z, z') = N(z, z') / t(z)`: transitions counted over occupation time,
//! market-wide and per agent. Confidence intervals treat `Q̂` as a ratio of
//! event-indexed sums and estimate the variance of `Σ (x_i - Q̂ y_i)` with a
//! Bartlett-tapered long-run variance, where `x_i` flags the transition and
//! `y_i` is the time spent in `z` before event `i`.

pub mod ingest;
mod io;
pub mod profile;

pub use io::GeneratorIoError;

use std::collections::{BTreeMap, HashMap, VecDeque};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::book::AgentId;
use crate::chain::{imbalance_increment, ChainState, StateMap};
use crate::sim::EventLog;
use crate::stats::{newey_west, Z95};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimateError {
    #[error("no in-scope events to estimate from")]
    Empty,
    #[error("lag window must be at least 0 and k at least 1")]
    BadParameter,
    #[error("need at least {needed} events, found {found}")]
    TooShort { needed: usize, found: usize },
    #[error("agent {0} appears in more than one estimate")]
    DuplicateAgent(AgentId),
    #[error("estimates do not share the same occupation times or state map")]
    Mismatch,
    #[error("removing agent {agent} leaves a negative count on {from} -> {to}")]
    NegativeCell {
        agent: AgentId,
        from: ChainState,
        to: ChainState,
    },
}

/// Transition count with the imbalance increments it carried.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowCounts {
    pub count: u64,
    /// Sum of imbalance increments (minimum-order units).
    pub inc_sum: i64,
    /// Sum of squared imbalance increments.
    pub inc_sq: u64,
}

impl FlowCounts {
    fn push(&mut self, inc: i64) {
        self.count += 1;
        self.inc_sum += inc;
        self.inc_sq += (inc * inc) as u64;
    }

    fn merge(&mut self, o: &FlowCounts) {
        self.count += o.count;
        self.inc_sum += o.inc_sum;
        self.inc_sq += o.inc_sq;
    }

    fn checked_sub(&self, o: &FlowCounts) -> Option<FlowCounts> {
        Some(FlowCounts {
            count: self.count.checked_sub(o.count)?,
            inc_sum: self.inc_sum - o.inc_sum,
            inc_sq: self.inc_sq.checked_sub(o.inc_sq)?,
        })
    }

    pub fn is_zero(&self) -> bool {
        self.count == 0
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub total: FlowCounts,
    pub by_agent: BTreeMap<AgentId, FlowCounts>,
    /// 95% interval for the market rate, per second.
    pub ci: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentTotals {
    pub events: u64,
    /// Traded or posted size in minimum-order units.
    pub volume: u64,
}

/// Sparse generator estimate over chain states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorEstimate {
    pub map: StateMap,
    /// Seconds spent in each state (in scope only).
    pub occupation: BTreeMap<ChainState, f64>,
    /// `(from, to)` counts; `from == to` holds events that leave the chain
    /// state unchanged.
    pub cells: BTreeMap<(ChainState, ChainState), Cell>,
    /// In-scope observation time in seconds.
    pub horizon: f64,
    pub agents: BTreeMap<AgentId, AgentTotals>,
    /// Minimum-order units per AES in the source logs.
    pub units_per_aes: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateConfig {
    pub map: StateMap,
    /// Ignore time and events while the spread exceeds this many ticks.
    pub spread_filter: Option<u32>,
    /// Lag window of the long-run variance (events).
    pub ci_lag: usize,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        EstimateConfig {
            map: StateMap::Full,
            spread_filter: None,
            ci_lag: 50,
        }
    }
}

impl GeneratorEstimate {
    pub fn empty(map: StateMap) -> Self {
        GeneratorEstimate {
            map,
            occupation: BTreeMap::new(),
            cells: BTreeMap::new(),
            horizon: 0.0,
            agents: BTreeMap::new(),
            units_per_aes: 1,
        }
    }

    /// Builds an estimate from explicit counts and occupation times.
    pub fn from_counts(
        map: StateMap,
        occupation: impl IntoIterator<Item = (ChainState, f64)>,
        counts: impl IntoIterator<Item = (ChainState, ChainState, AgentId, FlowCounts)>,
    ) -> Self {
        let mut est = GeneratorEstimate::empty(map);
        for (z, t) in occupation {
            *est.occupation.entry(z).or_insert(0.0) += t;
        }
        est.horizon = est.occupation.values().sum();
        for (from, to, agent, fc) in counts {
            let cell = est.cells.entry((from, to)).or_default();
            cell.total.merge(&fc);
            cell.by_agent.entry(agent).or_default().merge(&fc);
            let a = est.agents.entry(agent).or_default();
            a.events += fc.count;
        }
        est
    }

    pub fn states(&self) -> impl Iterator<Item = &ChainState> {
        self.occupation.keys()
    }

    pub fn occupation_of(&self, z: &ChainState) -> f64 {
        self.occupation.get(z).copied().unwrap_or(0.0)
    }

    /// Market rate `Q̂(z, z')`, `None` when `z` was never occupied.
    pub fn rate(&self, from: &ChainState, to: &ChainState) -> Option<f64> {
        let t = self.occupation_of(from);
        if t <= 0.0 {
            return None;
        }
        let n = self.cells.get(&(*from, *to)).map_or(0, |c| c.total.count);
        Some(n as f64 / t)
    }

    /// 95% interval for `Q̂(z, z')`; a transition never observed from an
    /// occupied state gets the zero-count interval `[0, z²/t^z]`. `None`
    /// when `z` was never occupied or intervals were not computed.
    pub fn rate_ci(&self, from: &ChainState, to: &ChainState) -> Option<(f64, f64)> {
        let t = self.occupation_of(from);
        if t <= 0.0 {
            return None;
        }
        match self.cells.get(&(*from, *to)) {
            Some(c) => c.ci,
            None => Some((0.0, Z95 * Z95 / t)),
        }
    }

    /// Agent rate `Q̂(z, z', a)`.
    pub fn agent_rate(&self, from: &ChainState, to: &ChainState, agent: AgentId) -> Option<f64> {
        let t = self.occupation_of(from);
        if t <= 0.0 {
            return None;
        }
        let n = self
            .cells
            .get(&(*from, *to))
            .and_then(|c| c.by_agent.get(&agent))
            .map_or(0, |f| f.count);
        Some(n as f64 / t)
    }

    pub fn total_events(&self) -> u64 {
        self.cells.values().map(|c| c.total.count).sum()
    }

    /// Agents with recorded flow, sorted.
    pub fn agent_ids(&self) -> Vec<AgentId> {
        self.agents.keys().copied().collect()
    }

    /// Adds the counts and occupation of `other` (same state map).
    pub fn merge(&mut self, other: &GeneratorEstimate) {
        for (z, t) in &other.occupation {
            *self.occupation.entry(*z).or_insert(0.0) += t;
        }
        for (k, c) in &other.cells {
            let cell = self.cells.entry(*k).or_default();
            cell.total.merge(&c.total);
            for (a, f) in &c.by_agent {
                cell.by_agent.entry(*a).or_default().merge(f);
            }
            cell.ci = None;
        }
        for (a, t) in &other.agents {
            let e = self.agents.entry(*a).or_default();
            e.events += t.events;
            e.volume += t.volume;
        }
        self.horizon += other.horizon;
    }

    /// Estimate restricted to one agent's flow, with the market occupation.
    pub fn agent_part(&self, agent: AgentId) -> GeneratorEstimate {
        let mut est = GeneratorEstimate {
            cells: BTreeMap::new(),
            agents: self.agents.get(&agent).map(|t| (agent, *t)).into_iter().collect(),
            ..self.clone()
        };
        for (k, c) in &self.cells {
            if let Some(f) = c.by_agent.get(&agent) {
                est.cells.insert(
                    *k,
                    Cell {
                        total: *f,
                        by_agent: BTreeMap::from([(agent, *f)]),
                        ci: None,
                    },
                );
            }
        }
        est
    }

    /// Market estimate without one agent's flow; occupation times are kept.
    pub fn remove_agent(&self, agent: AgentId) -> Result<GeneratorEstimate, EstimateError> {
        let mut est = self.clone();
        est.agents.remove(&agent);
        est.cells.clear();
        for (k, c) in &self.cells {
            let mut c = c.clone();
            c.ci = None;
            if let Some(f) = c.by_agent.remove(&agent) {
                c.total = c.total.checked_sub(&f).ok_or(EstimateError::NegativeCell {
                    agent,
                    from: k.0,
                    to: k.1,
                })?;
            }
            if !c.total.is_zero() {
                est.cells.insert(*k, c);
            }
        }
        Ok(est)
    }

    /// Per-agent estimates summed back into a market estimate. Parts must
    /// share occupation times and must not share agents.
    pub fn reconstitute(parts: &[GeneratorEstimate]) -> Result<GeneratorEstimate, EstimateError> {
        let Some(first) = parts.first() else {
            return Ok(GeneratorEstimate::empty(StateMap::Full));
        };
        let mut out = GeneratorEstimate {
            cells: BTreeMap::new(),
            agents: BTreeMap::new(),
            ..first.clone()
        };
        for p in parts {
            if p.map != first.map || p.units_per_aes != first.units_per_aes || p.occupation != first.occupation || p.horizon.to_bits() != first.horizon.to_bits() {
                return Err(EstimateError::Mismatch);
            }
            for (a, t) in &p.agents {
                if out.agents.insert(*a, *t).is_some() {
                    return Err(EstimateError::DuplicateAgent(*a));
                }
            }
            for (k, c) in &p.cells {
                let cell = out.cells.entry(*k).or_default();
                for (a, f) in &c.by_agent {
                    cell.total.merge(f);
                    cell.by_agent.entry(*a).or_default().merge(f);
                }
            }
        }
        Ok(out)
    }

    /// Multiplies all counts' time base by `factor` (occupation divided),
    /// i.e. speeds the market up uniformly.
    pub fn rescale_time(&self, factor: f64) -> GeneratorEstimate {
        let mut est = self.clone();
        for t in est.occupation.values_mut() {
            *t /= factor;
        }
        est.horizon /= factor;
        for c in est.cells.values_mut() {
            c.ci = None;
        }
        est
    }
}

/// Counts transitions and occupation times in `logs` (independent segments).
pub fn estimate_generator(
    logs: &[EventLog],
    cfg: &EstimateConfig,
) -> Result<GeneratorEstimate, EstimateError> {
    let parts: Vec<GeneratorEstimate> = logs.par_iter().map(|log| count_log(log, cfg)).collect();
    let mut est = GeneratorEstimate::empty(cfg.map);
    est.units_per_aes = logs.first().map_or(1, |l| l.meta.units_per_aes);
    for p in &parts {
        est.merge(p);
    }
    if est.total_events() == 0 {
        return Err(EstimateError::Empty);
    }
    attach_intervals(&mut est, logs, cfg);
    Ok(est)
}

fn in_scope(cfg: &EstimateConfig, spread: u32) -> bool {
    cfg.spread_filter.is_none_or(|s| spread <= s)
}

/// Walks a log: `(from, dest, dt, agent, increment, size)` per event plus the
/// trailing segment with no destination. Out-of-scope segments are skipped.
fn walk(
    log: &EventLog,
    cfg: &EstimateConfig,
    mut visit: impl FnMut(usize, ChainState, Option<(ChainState, AgentId, i64, u32)>, f64),
) {
    let mut z = cfg.map.initial(&log.initial);
    let mut t = log.meta.start;
    for (i, r) in log.records.iter().enumerate() {
        let pre = log.pre_state(i);
        let next = cfg.map.after(r);
        if in_scope(cfg, pre.spread) {
            let inc = imbalance_increment(&pre, r);
            visit(i, z, Some((next, r.agent, inc, r.size)), r.time - t);
        }
        z = next;
        t = r.time;
    }
    let last = log.records.last().map_or(log.initial, |r| r.post);
    if in_scope(cfg, last.spread) && log.meta.end > t {
        visit(log.records.len(), z, None, log.meta.end - t);
    }
}

fn count_log(log: &EventLog, cfg: &EstimateConfig) -> GeneratorEstimate {
    let mut est = GeneratorEstimate::empty(cfg.map);
    walk(log, cfg, |_, from, dest, dt| {
        *est.occupation.entry(from).or_insert(0.0) += dt;
        est.horizon += dt;
        if let Some((to, agent, inc, size)) = dest {
            let cell = est.cells.entry((from, to)).or_default();
            cell.total.push(inc);
            cell.by_agent.entry(agent).or_default().push(inc);
            let a = est.agents.entry(agent).or_default();
            a.events += 1;
            a.volume += size as u64;
        }
    });
    est
}

#[derive(Default)]
struct DestAccum {
    /// Σ y_i over events going to this destination.
    s_xy: f64,
    /// Tapered cross sums over lagged pairs.
    a_xy: f64,
    a_xx: f64,
}

#[derive(Default)]
struct FromAccum {
    s_yy: f64,
    a_yy: f64,
    dests: HashMap<ChainState, DestAccum>,
    window: VecDeque<(usize, Option<ChainState>, f64)>,
}

fn attach_intervals(est: &mut GeneratorEstimate, logs: &[EventLog], cfg: &EstimateConfig) {
    let lag = cfg.ci_lag;
    let weight = |l: usize| 1.0 - l as f64 / (lag as f64 + 1.0);
    let per_log: Vec<HashMap<ChainState, FromAccum>> = logs
        .par_iter()
        .map(|log| {
            let mut acc: HashMap<ChainState, FromAccum> = HashMap::new();
            walk(log, cfg, |i, from, dest, y| {
                let to = dest.map(|d| d.0);
                let fa = acc.entry(from).or_default();
                while fa.window.front().is_some_and(|(j, _, _)| i - j > lag) {
                    fa.window.pop_front();
                }
                fa.s_yy += y * y;
                if let Some(d) = to {
                    fa.dests.entry(d).or_default().s_xy += y;
                }
                for &(j, to_j, y_j) in &fa.window {
                    let w = weight(i - j);
                    fa.a_yy += w * y * y_j;
                    if let Some(d) = to_j {
                        fa.dests.entry(d).or_default().a_xy += w * y;
                    }
                    if let Some(d) = to {
                        let da = fa.dests.entry(d).or_default();
                        da.a_xy += w * y_j;
                        if to_j == Some(d) {
                            da.a_xx += w;
                        }
                    }
                }
                fa.window.push_back((i, to, y));
            });
            acc
        })
        .collect();

    let mut merged: HashMap<ChainState, FromAccum> = HashMap::new();
    for acc in per_log {
        for (z, fa) in acc {
            let m = merged.entry(z).or_default();
            m.s_yy += fa.s_yy;
            m.a_yy += fa.a_yy;
            for (d, da) in fa.dests {
                let md = m.dests.entry(d).or_default();
                md.s_xy += da.s_xy;
                md.a_xy += da.a_xy;
                md.a_xx += da.a_xx;
            }
        }
    }
    for ((from, to), cell) in est.cells.iter_mut() {
        let t = est.occupation.get(from).copied().unwrap_or(0.0);
        let (Some(fa), true) = (merged.get(from), t > 0.0) else {
            cell.ci = None;
            continue;
        };
        let da = fa.dests.get(to);
        let n = cell.total.count as f64;
        let (s_xy, a_xy, a_xx) = da.map_or((0.0, 0.0, 0.0), |d| (d.s_xy, d.a_xy, d.a_xx));
        // Long-run variance of Σ (x_i - q y_i) as a quadratic in q.
        let v = [fa.s_yy + 2.0 * fa.a_yy, -2.0 * (s_xy + a_xy), n + 2.0 * a_xx];
        cell.ci = Some(score_interval(n, t, v));
    }
}

/// 95% score interval for a rate `n / t`: the rates `q` with
/// `(n - q t)² <= z² max(V(q), q t)`, where `V(q) = v[0] q² + v[1] q + v[2]`
/// is the long-run variance of the compensated count and `q t` its
/// martingale part.
fn score_interval(n: f64, t: f64, v: [f64; 3]) -> (f64, f64) {
    let z2 = Z95 * Z95;
    let q = n / t;
    let root = (z2 * (4.0 * n + z2)).sqrt();
    let (mut lo, mut hi) = ((2.0 * n + z2 - root) / (2.0 * t), (2.0 * n + z2 + root) / (2.0 * t));
    let a = t * t - z2 * v[0];
    let b = -(2.0 * n * t + z2 * v[1]);
    let c = n * n - z2 * v[2];
    let disc = b * b - 4.0 * a * c;
    let (l, h) = if a > 0.0 && disc >= 0.0 {
        ((-b - disc.sqrt()) / (2.0 * a), (-b + disc.sqrt()) / (2.0 * a))
    } else {
        let half = Z95 * (v[0] * q * q + v[1] * q + v[2]).max(0.0).sqrt() / t;
        (q - half, q + half)
    };
    lo = lo.min(l);
    hi = hi.max(h);
    (lo.max(0.0), hi)
}

/// Mean time between consecutive events, with a 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanInterarrival {
    pub mean: f64,
    pub ci: (f64, f64),
    pub samples: usize,
}

pub fn estimate_mean_interarrival(logs: &[EventLog], lag: usize) -> Result<MeanInterarrival, EstimateError> {
    let gaps: Vec<f64> = logs
        .iter()
        .flat_map(|l| l.records.windows(2).map(|w| w[1].time - w[0].time))
        .collect();
    if gaps.is_empty() {
        let found = logs.iter().map(|l| l.len()).sum();
        return Err(EstimateError::TooShort { needed: 2, found });
    }
    let n = gaps.len() as f64;
    let mean = gaps.iter().sum::<f64>() / n;
    let centred: Vec<f64> = gaps.iter().map(|g| g - mean).collect();
    let half = Z95 * (newey_west(&centred, lag) / n).sqrt();
    Ok(MeanInterarrival {
        mean,
        ci: (mean - half, mean + half),
        samples: gaps.len(),
    })
}

/// `Ê[η_k | η_0 = η]` for one conditioning value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionalMove {
    pub eta: i32,
    pub k: usize,
    /// Number of conditioning events.
    pub count: usize,
    pub mean: f64,
    pub ci: (f64, f64),
}

/// Mean price move `k` events after a move of each observed size.
pub fn estimate_conditional_price_move(
    logs: &[EventLog],
    k: usize,
    lag: usize,
) -> Result<Vec<ConditionalMove>, EstimateError> {
    if k == 0 {
        return Err(EstimateError::BadParameter);
    }
    let longest = logs.iter().map(|l| l.len()).max().unwrap_or(0);
    if longest <= k {
        return Err(EstimateError::TooShort {
            needed: k + 1,
            found: longest,
        });
    }
    let mut follow: BTreeMap<i32, Vec<f64>> = BTreeMap::new();
    for log in logs {
        let r = &log.records;
        for i in 0..r.len().saturating_sub(k) {
            follow.entry(r[i].eta).or_default().push(r[i + k].eta as f64);
        }
    }
    Ok(follow
        .into_iter()
        .map(|(eta, xs)| {
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let centred: Vec<f64> = xs.iter().map(|x| x - mean).collect();
            let half = Z95 * (newey_west(&centred, lag) / n).sqrt();
            ConditionalMove {
                eta,
                k,
                count: xs.len(),
                mean,
                ci: (mean - half, mean + half),
            }
        })
        .collect())
}
