use std::collections::hash_map::Entry;
use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use petgraph::algo::kosaraju_scc;
use petgraph::graph::{DiGraph, NodeIndex};
use serde::{Deserialize, Serialize};

use super::SteadyError;
use crate::book::{Direction, MidPriceMove, OrderBookState};
use crate::chain::{signed_flow, ChainState};
use crate::estimate::GeneratorEstimate;
use crate::intensity::EventKind;
use crate::model::MarketModel;

/// State-space box: queues up to `q_max_aes` AES, spreads up to `s_max`
/// ticks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Truncation {
    pub q_max_aes: u32,
    pub s_max: u32,
}

impl Default for Truncation {
    fn default() -> Self {
        Truncation {
            q_max_aes: 30,
            s_max: 5,
        }
    }
}

impl Truncation {
    fn contains(&self, z: &ChainState, units_per_aes: u32) -> bool {
        let q = self.q_max_aes.saturating_mul(units_per_aes);
        z.q1 <= q && z.q2 <= q && z.spread <= self.s_max
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Model,
    Estimated,
    Explicit,
}

/// One outgoing rate with its imbalance moments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jump {
    pub to: usize,
    /// Events per second.
    pub rate: f64,
    /// `Σ rate · n` over the events behind this jump.
    pub inc1: f64,
    /// `Σ rate · n²`.
    pub inc2: f64,
}

/// Finite generator on chain states. Rows keep jumps back to the same state
/// (events that leave the chain state unchanged); they do not enter the
/// diagonal `Q(z, z) = -Σ_{z' != z} Q(z, z')`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedGenerator {
    states: Vec<ChainState>,
    index: HashMap<ChainState, usize>,
    rows: Vec<Vec<Jump>>,
    truncated: Vec<bool>,
    pub provenance: Provenance,
    pub units_per_aes: u32,
}

#[derive(Default)]
struct Builder {
    states: Vec<ChainState>,
    index: HashMap<ChainState, usize>,
    rows: Vec<BTreeMap<usize, (f64, f64, f64)>>,
    truncated: Vec<bool>,
}

impl Builder {
    fn add_state(&mut self, z: ChainState) -> (usize, bool) {
        if let Some(&i) = self.index.get(&z) {
            return (i, false);
        }
        let i = self.states.len();
        self.states.push(z);
        self.index.insert(z, i);
        self.rows.push(BTreeMap::new());
        self.truncated.push(false);
        (i, true)
    }

    fn add_jump(&mut self, from: usize, to: usize, rate: f64, inc1: f64, inc2: f64) {
        let e = self.rows[from].entry(to).or_insert((0.0, 0.0, 0.0));
        e.0 += rate;
        e.1 += inc1;
        e.2 += inc2;
    }

    fn finish(self, provenance: Provenance, units_per_aes: u32) -> TruncatedGenerator {
        let rows = self
            .rows
            .into_iter()
            .map(|r| {
                r.into_iter()
                    .filter(|(_, v)| v.0 > 0.0)
                    .map(|(to, (rate, inc1, inc2))| Jump { to, rate, inc1, inc2 })
                    .collect()
            })
            .collect();
        TruncatedGenerator {
            states: self.states,
            index: self.index,
            rows,
            truncated: self.truncated,
            provenance,
            units_per_aes,
        }
    }
}

impl TruncatedGenerator {
    /// Generator from explicit rates `(from, to, rate)` on `states`.
    pub fn from_rates(
        states: Vec<ChainState>,
        rates: impl IntoIterator<Item = (ChainState, ChainState, f64)>,
    ) -> Result<Self, SteadyError> {
        Self::from_jumps(states, rates.into_iter().map(|(a, b, r)| (a, b, r, 0.0, 0.0)))
    }

    /// Like [`from_rates`](Self::from_rates) with imbalance moments
    /// `(from, to, rate, Σ rate·n, Σ rate·n²)`.
    pub fn from_jumps(
        states: Vec<ChainState>,
        jumps: impl IntoIterator<Item = (ChainState, ChainState, f64, f64, f64)>,
    ) -> Result<Self, SteadyError> {
        if states.is_empty() {
            return Err(SteadyError::Empty);
        }
        let mut b = Builder::default();
        for z in states {
            if !b.add_state(z).1 {
                return Err(SteadyError::DuplicateState(z));
            }
        }
        for (from, to, rate, inc1, inc2) in jumps {
            if !(rate.is_finite() && rate >= 0.0) {
                return Err(SteadyError::NegativeRate { from, to });
            }
            let i = *b.index.get(&from).ok_or(SteadyError::UnknownState(from))?;
            let j = *b.index.get(&to).ok_or(SteadyError::UnknownState(to))?;
            b.add_jump(i, j, rate, inc1, inc2);
        }
        Ok(b.finish(Provenance::Explicit, 1))
    }

    /// Generator on the occupied states of an estimate, restricted to the
    /// communicating class holding the most occupation time. Transitions
    /// leaving that class are dropped and flagged as truncated. When no
    /// state has a departure every occupied state is kept (each one is
    /// absorbing).
    pub fn from_estimate(est: &GeneratorEstimate, truncation: Option<&Truncation>) -> Result<Self, SteadyError> {
        let upa = est.units_per_aes.max(1);
        let occupied: Vec<ChainState> = est
            .occupation
            .iter()
            .filter(|(z, &t)| t > 0.0 && truncation.is_none_or(|tr| tr.contains(z, upa)))
            .map(|(z, _)| *z)
            .collect();
        if occupied.is_empty() {
            return Err(SteadyError::Empty);
        }
        let mut graph = DiGraph::<ChainState, ()>::new();
        let nodes: HashMap<ChainState, NodeIndex> = occupied.iter().map(|z| (*z, graph.add_node(*z))).collect();
        for ((a, b), c) in &est.cells {
            if a != b && c.total.count > 0 {
                if let (Some(&i), Some(&j)) = (nodes.get(a), nodes.get(b)) {
                    graph.add_edge(i, j, ());
                }
            }
        }
        let time = |class: &[NodeIndex]| class.iter().map(|&n| est.occupation[&graph[n]]).sum::<f64>();
        let first = |class: &[NodeIndex]| class.iter().map(|&n| graph[n]).min();
        let support: BTreeSet<ChainState> = kosaraju_scc(&graph)
            .into_iter()
            .filter(|c| c.len() > 1)
            .max_by(|a, b| time(a).total_cmp(&time(b)).then_with(|| first(b).cmp(&first(a))))
            .map_or_else(|| occupied.iter().copied().collect(), |c| c.iter().map(|&n| graph[n]).collect());
        let mut b = Builder::default();
        for z in &support {
            b.add_state(*z);
        }
        for ((from, to), c) in &est.cells {
            let Some(&i) = b.index.get(from) else {
                continue;
            };
            let Some(&j) = b.index.get(to) else {
                b.truncated[i] = true;
                continue;
            };
            let t = est.occupation[from];
            let f = &c.total;
            b.add_jump(i, j, f.count as f64 / t, f.inc_sum as f64 / t, f.inc_sq as f64 / t);
        }
        Ok(b.finish(Provenance::Estimated, upa))
    }

    /// Generator of a Markov model on the states reachable from `seed`
    /// inside `truncation`. Jumps leaving the box are dropped and flagged.
    pub fn from_model(
        model: &MarketModel,
        truncation: &Truncation,
        seed: OrderBookState,
        price_move: &dyn MidPriceMove,
    ) -> Result<Self, SteadyError> {
        let im = &model.intensity;
        if im.family.uses_history() || !model.replenishment.is_markov() {
            return Err(SteadyError::NotMarkov);
        }
        let upa = model.units_per_aes;
        let seed = ChainState::new(seed, 0);
        if !seed_ok(&seed) || !truncation.contains(&seed, upa) {
            return Err(SteadyError::BadSeed(seed));
        }
        let mut b = Builder::default();
        let mut queue = VecDeque::from([b.add_state(seed).0]);
        let mut cache: HashMap<OrderBookState, Vec<(ChainState, f64, f64)>> = HashMap::new();
        while let Some(i) = queue.pop_front() {
            let z = b.states[i];
            let book = OrderBookState {
                q1: z.q1,
                q2: z.q2,
                spread: z.spread,
            };
            if let Entry::Vacant(slot) = cache.entry(book) {
                let mut jumps = Vec::new();
                for o in model.outcomes(&book, price_move)? {
                    let rate = im.base_rate(o.class, &book) * o.prob;
                    if rate <= 0.0 {
                        continue;
                    }
                    let class = im.class(o.class);
                    let direction = match class.kind {
                        EventKind::Consume => Direction::Consume,
                        _ => Direction::Insert,
                    };
                    let n = signed_flow(&book, class.side, direction, class.size) as f64;
                    jumps.push((ChainState::new(o.transition.post, o.transition.eta), rate, n));
                }
                slot.insert(jumps);
            }
            for &(to, rate, n) in &cache[&book] {
                if !truncation.contains(&to, upa) {
                    b.truncated[i] = true;
                    continue;
                }
                let (j, new) = b.add_state(to);
                if new {
                    queue.push_back(j);
                }
                b.add_jump(i, j, rate, rate * n, rate * n * n);
            }
        }
        Ok(b.finish(Provenance::Model, upa))
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[ChainState] {
        &self.states
    }

    pub fn index_of(&self, z: &ChainState) -> Option<usize> {
        self.index.get(z).copied()
    }

    pub fn row(&self, i: usize) -> &[Jump] {
        &self.rows[i]
    }

    /// Whether some jump out of state `i` was cut by the truncation.
    pub fn is_truncated(&self, i: usize) -> bool {
        self.truncated[i]
    }

    /// `-Q(z, z)`: rate of leaving the state.
    pub fn exit_rate(&self, i: usize) -> f64 {
        self.rows[i].iter().filter(|j| j.to != i).map(|j| j.rate).sum()
    }

    /// Total event rate, including events that keep the state.
    pub fn event_rate(&self, i: usize) -> f64 {
        self.rows[i].iter().map(|j| j.rate).sum()
    }

    /// Off-diagonal rate `Q(z, z')`, `z != z'`.
    pub fn rate(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return -self.exit_rate(i);
        }
        self.rows[i].iter().find(|x| x.to == j).map_or(0.0, |x| x.rate)
    }

    /// `max |Q(z, z')|` over all entries.
    pub fn max_abs_rate(&self) -> f64 {
        (0..self.len()).map(|i| self.exit_rate(i)).fold(0.0, f64::max)
    }

    /// Price move carried by each state, in ticks.
    pub fn price_moves(&self) -> Vec<f64> {
        self.states.iter().map(|z| z.eta as f64).collect()
    }

    pub fn has_markers(&self) -> bool {
        self.states.iter().any(|z| z.is_marker())
    }

    /// Dense generator matrix (diagonal completed), row-major.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        let mut q = vec![vec![0.0; n]; n];
        for (i, row) in self.rows.iter().enumerate() {
            for j in row.iter().filter(|j| j.to != i) {
                q[i][j.to] += j.rate;
                q[i][i] -= j.rate;
            }
        }
        q
    }
}

fn seed_ok(z: &ChainState) -> bool {
    z.q1 > 0 && z.q2 > 0 && z.spread > 0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::book::UnitTickMove;
    use crate::presets;

    fn s(q1: u32) -> ChainState {
        ChainState {
            q1,
            q2: 0,
            spread: 0,
            eta: 0,
        }
    }

    #[test]
    fn explicit_rates_validate() {
        let g = TruncatedGenerator::from_rates(vec![s(0), s(1)], [(s(0), s(1), 3.0), (s(1), s(0), 1.0)]).unwrap();
        assert_eq!(g.to_dense(), vec![vec![-3.0, 3.0], vec![1.0, -1.0]]);
        assert!(matches!(
            TruncatedGenerator::from_rates(vec![s(0)], [(s(0), s(1), 1.0)]),
            Err(SteadyError::UnknownState(_))
        ));
        assert!(matches!(
            TruncatedGenerator::from_rates(vec![s(0), s(1)], [(s(0), s(1), -1.0)]),
            Err(SteadyError::NegativeRate { .. })
        ));
        assert!(matches!(TruncatedGenerator::from_rates(vec![s(0), s(0)], []), Err(SteadyError::DuplicateState(_))));
    }

    #[test]
    fn model_generator_rows() {
        let m = presets::birth_death(1.0, 2.0);
        let tr = Truncation { q_max_aes: 5, s_max: 1 };
        let g = TruncatedGenerator::from_model(&m, &tr, OrderBookState::new(1, 1, 1).unwrap(), &UnitTickMove).unwrap();
        // 25 book states plus markers (1, q2, 1, -1) and (q1, 1, 1, +1).
        assert_eq!(g.len(), 25 + 10);
        let i = g.index_of(&ChainState { q1: 2, q2: 3, spread: 1, eta: 0 }).unwrap();
        assert_eq!(g.exit_rate(i), 6.0);
        let up = g.index_of(&ChainState { q1: 3, q2: 3, spread: 1, eta: 0 }).unwrap();
        assert_eq!(g.rate(i, up), 1.0);
        let j = g.row(i).iter().find(|j| j.to == up).unwrap();
        assert_eq!((j.inc1, j.inc2), (1.0, 1.0));
        let edge = g.index_of(&ChainState { q1: 5, q2: 3, spread: 1, eta: 0 }).unwrap();
        assert!(g.is_truncated(edge));
        assert!(!g.is_truncated(i));
        // Depletion from q1 = 1 refills one unit with a one-tick move down.
        let k = g.index_of(&ChainState { q1: 1, q2: 3, spread: 1, eta: 0 }).unwrap();
        let dep = g.index_of(&ChainState { q1: 1, q2: 3, spread: 1, eta: -1 }).unwrap();
        assert_eq!(g.rate(k, dep), 2.0);
        assert!(matches!(
            TruncatedGenerator::from_model(&presets::default_hawkes(0.1, 1.0), &tr, OrderBookState::new(1, 1, 1).unwrap(), &UnitTickMove),
            Err(SteadyError::NotMarkov)
        ));
    }
}
