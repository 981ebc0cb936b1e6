//! Event intensities `λ_t(e) = ψ(e, U_{t-}, t, z_t(e))` with
//! `z_t(e) = Σ_{T_i < t} φ(e, t - T_i, X_i)`.
//!
//! The countable event alphabet is reduced to a finite list of
//! [`EventClass`]es (event kind × side × size × agent). Each class carries a
//! base table `h(class, book)` and the model family fixes how the kernel
//! summary `z` enters `ψ`:
//!
//! | family          | ψ                         |
//! |-----------------|---------------------------|
//! | poisson         | `h̃(class) · 1{size = 1, at best}` |
//! | queue-reactive  | `h(class, u)`             |
//! | hawkes-qr       | `h(class, u) + z`         |
//! | quadratic       | `h(class, u) + z²`        |

mod excitation;
pub mod stability;

pub use excitation::Excitation;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::book::{AgentId, Direction, EventDescriptor, OrderBookState, Side};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntensityError {
    #[error("model has no event classes")]
    NoClasses,
    #[error("class {0}: {1}")]
    InvalidClass(usize, String),
    #[error("base table for class {0} has a negative or non-finite entry")]
    NegativeBase(usize),
    #[error("kernel: {0}")]
    InvalidKernel(String),
    #[error("family {0} requires a non-zero excitation kernel")]
    MissingKernel(Family),
    #[error("negative input to intensity evaluation: {0}")]
    NegativeInput(&'static str),
    #[error("class index {0} out of range")]
    UnknownClass(usize),
    #[error("kernel power integral diverges for class {0}")]
    DivergentKernel(usize),
    #[error("ψ exponent {0} is above the supported maximum of 3")]
    ExponentTooLarge(u32),
}

/// Kind of order an event class represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum EventKind {
    /// Limit order at the best quote.
    Insert,
    /// Cancellation or market order at the best quote.
    Consume,
    /// Limit order inside the spread that narrows it by `improvement` ticks.
    InsertInSpread { improvement: u32 },
}

/// A finite feature class of events sharing one intensity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EventClass {
    #[serde(flatten)]
    pub kind: EventKind,
    pub side: Side,
    pub size: u32,
    pub agent: AgentId,
}

impl EventClass {
    /// Concrete event in `state`, or `None` when the class cannot occur there
    /// (an inside-spread order needs `improvement < spread`).
    pub fn descriptor(&self, state: &OrderBookState) -> Option<EventDescriptor> {
        let (direction, level) = match self.kind {
            EventKind::Insert => (Direction::Insert, state.best_level(self.side)),
            EventKind::Consume => (Direction::Consume, state.best_level(self.side)),
            EventKind::InsertInSpread { improvement } => {
                if improvement == 0 || improvement >= state.spread {
                    return None;
                }
                let level = match self.side {
                    Side::Bid => improvement,
                    Side::Ask => state.spread - improvement,
                };
                (Direction::Insert, level)
            }
        };
        Some(EventDescriptor {
            size: self.size,
            level,
            direction,
            side: self.side,
            agent: self.agent,
            replenish: None,
        })
    }

    /// Class of an observed event given the book before it.
    pub fn of_event(pre: &OrderBookState, event: &EventDescriptor) -> EventClass {
        let kind = match event.direction {
            Direction::Consume => EventKind::Consume,
            Direction::Insert if event.level == pre.best_level(event.side) => EventKind::Insert,
            Direction::Insert => EventKind::InsertInSpread {
                improvement: match event.side {
                    Side::Bid => event.level,
                    Side::Ask => pre.spread.saturating_sub(event.level),
                },
            },
        };
        EventClass {
            kind,
            side: event.side,
            size: event.size,
            agent: event.agent,
        }
    }

    /// Whether the class can occur in `state`.
    #[inline]
    pub fn possible_in(&self, state: &OrderBookState) -> bool {
        match self.kind {
            EventKind::InsertInSpread { improvement } => improvement >= 1 && improvement < state.spread,
            _ => true,
        }
    }

    fn at_best_unit(&self) -> bool {
        self.size == 1 && !matches!(self.kind, EventKind::InsertInSpread { .. })
    }
}

/// Model family; fixes the exponent of the kernel summary inside ψ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Poisson,
    QueueReactive,
    HawkesQr,
    Quadratic,
}

impl Family {
    /// Exponent `n_ψ` of `z` in ψ (0 when ψ ignores the history).
    pub fn exponent(self) -> u32 {
        match self {
            Family::Poisson | Family::QueueReactive => 0,
            Family::HawkesQr => 1,
            Family::Quadratic => 2,
        }
    }

    pub fn uses_history(self) -> bool {
        self.exponent() > 0
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Family::Poisson => "poisson",
            Family::QueueReactive => "queue-reactive",
            Family::HawkesQr => "hawkes-qr",
            Family::Quadratic => "quadratic",
        })
    }
}

/// State-dependent base rate `h(class, u)` in events per second. Queue
/// indices are in minimum-order units; lookups past the end of a table reuse
/// its last entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "type")]
pub enum BaseTable {
    Constant { rate: f64 },
    /// Indexed by the queue size on the class's own side.
    Queue { rates: Vec<f64> },
    /// Indexed by the spread in ticks (entry 0 is spread 1).
    Spread { rates: Vec<f64> },
    /// `rates[spread - 1][own queue]`.
    QueueSpread { rates: Vec<Vec<f64>> },
}

fn capped(table: &[f64], index: usize) -> f64 {
    match table.get(index) {
        Some(v) => *v,
        None => table.last().copied().unwrap_or(0.0),
    }
}

impl BaseTable {
    pub fn eval(&self, side: Side, u: &OrderBookState) -> f64 {
        let own = u.queue(side) as usize;
        let s = u.spread.saturating_sub(1) as usize;
        match self {
            BaseTable::Constant { rate } => *rate,
            BaseTable::Queue { rates } => capped(rates, own),
            BaseTable::Spread { rates } => capped(rates, s),
            BaseTable::QueueSpread { rates } => {
                let row = rates.get(s).or(rates.last());
                row.map(|r| capped(r, own)).unwrap_or(0.0)
            }
        }
    }

    /// Supremum over all book states.
    pub fn sup(&self) -> f64 {
        let max = |v: &[f64]| v.iter().copied().fold(0.0_f64, f64::max);
        match self {
            BaseTable::Constant { rate } => *rate,
            BaseTable::Queue { rates } | BaseTable::Spread { rates } => max(rates),
            BaseTable::QueueSpread { rates } => rates.iter().map(|r| max(r)).fold(0.0, f64::max),
        }
    }

    fn entries(&self) -> Vec<f64> {
        match self {
            BaseTable::Constant { rate } => vec![*rate],
            BaseTable::Queue { rates } | BaseTable::Spread { rates } => rates.clone(),
            BaseTable::QueueSpread { rates } => rates.iter().flatten().copied().collect(),
        }
    }
}

/// Lag shape of the excitation kernel: `φ(e, s, x) = α(e, x) · g(s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "type")]
pub enum KernelShape {
    /// `g(s) = exp(-β s)`.
    Exponential { beta: f64 },
    /// Piecewise-constant `g`: `values[j]` on `[edges[j], edges[j+1])`, zero
    /// past the last edge. `edges[0]` must be 0.
    Table { edges: Vec<f64>, values: Vec<f64> },
}

impl KernelShape {
    pub fn eval(&self, lag: f64) -> f64 {
        if lag < 0.0 {
            return 0.0;
        }
        match self {
            KernelShape::Exponential { beta } => (-beta * lag).exp(),
            KernelShape::Table { edges, values } => {
                if lag >= *edges.last().unwrap_or(&0.0) {
                    return 0.0;
                }
                let j = edges.partition_point(|&e| e <= lag).saturating_sub(1);
                values.get(j).copied().unwrap_or(0.0)
            }
        }
    }

    /// `∫_0^∞ g(s)^k ds`.
    pub fn power_integral(&self, k: u32) -> f64 {
        match self {
            KernelShape::Exponential { beta } => {
                if *beta > 0.0 {
                    1.0 / (k as f64 * beta)
                } else {
                    f64::INFINITY
                }
            }
            KernelShape::Table { edges, values } => edges
                .windows(2)
                .zip(values)
                .map(|(w, v)| (w[1] - w[0]) * v.powi(k as i32))
                .sum(),
        }
    }

    /// Largest lag with non-zero `g`.
    pub fn support(&self) -> f64 {
        match self {
            KernelShape::Exponential { .. } => f64::INFINITY,
            KernelShape::Table { edges, .. } => *edges.last().unwrap_or(&0.0),
        }
    }
}

/// Hawkes kernel over the class alphabet. `alpha[e][x]` is the excitation a
/// past event of class `x` adds to class `e`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "type")]
pub enum KernelSpec {
    #[default]
    Zero,
    Separable {
        shape: KernelShape,
        alpha: Vec<Vec<f64>>,
    },
}

impl KernelSpec {
    pub fn is_zero(&self) -> bool {
        match self {
            KernelSpec::Zero => true,
            KernelSpec::Separable { alpha, .. } => alpha.iter().flatten().all(|&a| a == 0.0),
        }
    }

    /// `α*(e) = Σ_x α(e, x)`, so that `φ*(e, s) = α*(e) g(s)`.
    pub fn alpha_star(&self, class: usize) -> f64 {
        match self {
            KernelSpec::Zero => 0.0,
            KernelSpec::Separable { alpha, .. } => alpha[class].iter().sum(),
        }
    }

    /// `∫ φ*(e, s)^k ds`.
    pub fn star_power_integral(&self, class: usize, k: u32) -> f64 {
        match self {
            KernelSpec::Zero => 0.0,
            KernelSpec::Separable { shape, .. } => {
                let a = self.alpha_star(class);
                if a == 0.0 {
                    0.0
                } else {
                    a.powi(k as i32) * shape.power_integral(k)
                }
            }
        }
    }

    pub fn alpha(&self, e: usize, x: usize) -> f64 {
        match self {
            KernelSpec::Zero => 0.0,
            KernelSpec::Separable { alpha, .. } => alpha[e][x],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    #[serde(flatten)]
    pub class: EventClass,
    pub base: BaseTable,
}

/// The pair (ψ, φ) over a finite class alphabet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensityModel {
    pub family: Family,
    pub classes: Vec<ClassSpec>,
    pub kernel: KernelSpec,
}

impl IntensityModel {
    pub fn new(
        family: Family,
        classes: Vec<ClassSpec>,
        kernel: KernelSpec,
    ) -> Result<Self, IntensityError> {
        let model = IntensityModel {
            family,
            classes,
            kernel,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<(), IntensityError> {
        if self.classes.is_empty() {
            return Err(IntensityError::NoClasses);
        }
        for (i, c) in self.classes.iter().enumerate() {
            if c.class.size == 0 {
                return Err(IntensityError::InvalidClass(i, "size must be positive".into()));
            }
            if matches!(c.class.kind, EventKind::InsertInSpread { improvement: 0 }) {
                return Err(IntensityError::InvalidClass(
                    i,
                    "inside-spread improvement must be at least one tick".into(),
                ));
            }
            if c.base.entries().iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(IntensityError::NegativeBase(i));
            }
        }
        let n = self.classes.len();
        if let KernelSpec::Separable { shape, alpha } = &self.kernel {
            if alpha.len() != n || alpha.iter().any(|row| row.len() != n) {
                return Err(IntensityError::InvalidKernel(format!(
                    "excitation matrix must be {n}x{n}"
                )));
            }
            if alpha.iter().flatten().any(|a| !a.is_finite() || *a < 0.0) {
                return Err(IntensityError::InvalidKernel(
                    "excitation entries must be finite and non-negative".into(),
                ));
            }
            match shape {
                KernelShape::Exponential { beta } if !(*beta > 0.0 && beta.is_finite()) => {
                    return Err(IntensityError::InvalidKernel("decay must be positive".into()))
                }
                KernelShape::Table { edges, values } => {
                    if edges.len() != values.len() + 1 || edges.first() != Some(&0.0) {
                        return Err(IntensityError::InvalidKernel(
                            "table needs edges starting at 0 and one more edge than values".into(),
                        ));
                    }
                    if edges.windows(2).any(|w| !(w[1] > w[0])) || !edges.iter().all(|e| e.is_finite()) {
                        return Err(IntensityError::InvalidKernel(
                            "table edges must be finite and strictly increasing".into(),
                        ));
                    }
                    if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
                        return Err(IntensityError::InvalidKernel(
                            "table values must be finite and non-negative".into(),
                        ));
                    }
                }
                _ => {}
            }
        }
        if self.family.uses_history() && self.kernel.is_zero() {
            return Err(IntensityError::MissingKernel(self.family));
        }
        Ok(())
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class(&self, i: usize) -> &EventClass {
        &self.classes[i].class
    }

    /// Index of `class` in the alphabet.
    pub fn find_class(&self, class: &EventClass) -> Option<usize> {
        self.classes.iter().position(|c| &c.class == class)
    }

    /// Agents appearing in the alphabet, sorted.
    pub fn agents(&self) -> Vec<AgentId> {
        let mut a: Vec<_> = self.classes.iter().map(|c| c.class.agent).collect();
        a.sort_unstable();
        a.dedup();
        a
    }

    /// Base rate `h(class, u)`, zero when the class cannot occur in `u`.
    #[inline]
    pub fn base_rate(&self, i: usize, u: &OrderBookState) -> f64 {
        let spec = &self.classes[i];
        if !spec.class.possible_in(u) {
            return 0.0;
        }
        if self.family == Family::Poisson && !spec.class.at_best_unit() {
            return 0.0;
        }
        spec.base.eval(spec.class.side, u)
    }

    /// `ψ(class, u, z)` without input checks; used on the simulation hot path.
    #[inline]
    pub fn psi(&self, i: usize, u: &OrderBookState, z: f64) -> f64 {
        if !self.classes[i].class.possible_in(u) {
            return 0.0;
        }
        let h = self.base_rate(i, u);
        match self.family.exponent() {
            0 => h,
            1 => h + z,
            n => h + z.powi(n as i32),
        }
    }

    /// Intensity of class `i` in book `u` at clock time `t` given the kernel
    /// summary `z` for that class.
    pub fn evaluate_intensity(
        &self,
        i: usize,
        u: &OrderBookState,
        t: f64,
        z: f64,
    ) -> Result<f64, IntensityError> {
        if i >= self.classes.len() {
            return Err(IntensityError::UnknownClass(i));
        }
        if !(t >= 0.0) {
            return Err(IntensityError::NegativeInput("time"));
        }
        if !(z >= 0.0) {
            return Err(IntensityError::NegativeInput("kernel summary"));
        }
        Ok(self.psi(i, u, z))
    }

    /// Growth bound `ψ(e, ·, ·, z) ≤ c(e) + d(e) z^{n_ψ}`.
    pub fn growth_bound(&self, i: usize) -> (f64, f64) {
        let spec = &self.classes[i];
        let c = if self.family == Family::Poisson && !spec.class.at_best_unit() {
            0.0
        } else {
            spec.base.sup()
        };
        let d = if self.family.uses_history() { 1.0 } else { 0.0 };
        (c, d)
    }

    /// New excitation tracker for one simulation path.
    pub fn excitation(&self) -> Excitation {
        Excitation::new(self)
    }
}
