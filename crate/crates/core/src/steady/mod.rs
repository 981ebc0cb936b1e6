//! Stationary analysis of the book-state chain: the stationary law, the
//! expected spread, per-event and per-second price volatility and the
//! imbalance variance.
//!
//! Per-event quantities average over events, so they use the law of the
//! state seen by a typical event, `π_J(z) ∝ π(z) · event rate(z)`.

mod generator;
mod metrics;
mod solve;

pub use generator::{Jump, Provenance, Truncation, TruncatedGenerator};
pub use metrics::{
    embedded_chain, event_chain, event_stationary, expected_spread, imbalance_volatility,
    mean_interarrival, volatility_g, volatility_m, volatility_per_second, SparseChain,
};
pub use solve::{solve_stationary, ComponentSolution, SolveOptions, SolverMethod, Stationary};

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::ChainState;
use crate::estimate::profile::IntensityProfile;
use crate::model::ModelError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SteadyError {
    #[error("generator has no states")]
    Empty,
    #[error("state {0} listed twice")]
    DuplicateState(ChainState),
    #[error("state {0} is not in the state list")]
    UnknownState(ChainState),
    #[error("rate {from} -> {to} is negative or not finite")]
    NegativeRate { from: ChainState, to: ChainState },
    #[error("the model depends on its event history; its book state alone is not Markov")]
    NotMarkov,
    #[error("seed state {0} is not observable or lies outside the truncation")]
    BadSeed(ChainState),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("generator is reducible: {} closed classes", components.len())]
    Reducible { components: Vec<ComponentSolution> },
    #[error("stationary solve did not converge (residual {residual:e})")]
    NoConvergence { residual: f64 },
    #[error("no price-move states: every move is zero")]
    NoMarkers,
    #[error("the stationary law carries no events")]
    NoEvents,
    #[error("{0}")]
    BadParameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Lag of the corrected volatility.
    pub k: usize,
    /// Boundary mass above which a truncation warning is raised.
    pub boundary_threshold: f64,
    pub solve: SolveOptions,
    /// Price units per tick, for reporting only.
    pub tick_size: Option<f64>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            k: 10,
            boundary_threshold: 1e-6,
            solve: SolveOptions::default(),
            tick_size: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateProbability {
    pub state: ChainState,
    pub pi: f64,
    /// Probability of the state as seen by an event.
    pub pi_event: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub method: SolverMethod,
    /// `‖πQ‖∞ / max|Q|`.
    pub residual: f64,
    pub transient_states: usize,
    /// Stationary mass on states with a jump cut by the truncation.
    pub boundary_mass: f64,
    /// `2 · max η² · boundary_mass`, tick² per event.
    pub truncation_bound: f64,
    pub sigma2_mk_negative: bool,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryReport {
    pub provenance: Provenance,
    pub n_states: usize,
    pub units_per_aes: u32,
    pub expected_spread_ticks: f64,
    pub expected_spread_price: Option<f64>,
    pub mean_interarrival_s: f64,
    pub k: usize,
    pub sigma2_g_tick2_per_event: f64,
    /// Entry `j` is the lag-`j` corrected volatility, `j = 0..=k`.
    pub sigma2_m_tick2_per_event: Vec<f64>,
    pub sigma2_g_tick2_per_s: f64,
    pub sigma2_mk_tick2_per_s: f64,
    /// Lag-`k` imbalance variance, squared minimum-order units.
    pub imbalance_var_units2_per_event: f64,
    pub imbalance_var_units2_per_s: f64,
    pub diagnostics: Diagnostics,
    pub states: Vec<StateProbability>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intensity_profile: Option<IntensityProfile>,
}

impl StationaryReport {
    pub fn sigma2_mk(&self) -> f64 {
        self.sigma2_m_tick2_per_event[self.k]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    /// `state,q1_units,q2_units,spread_ticks,eta_ticks,pi,pi_event`.
    pub fn states_csv(&self) -> String {
        let mut s = String::from("state,q1_units,q2_units,spread_ticks,eta_ticks,pi,pi_event\n");
        for p in &self.states {
            let z = p.state;
            let _ = writeln!(s, "{z},{},{},{},{},{},{}", z.q1, z.q2, z.spread, z.eta, p.pi, p.pi_event);
        }
        s
    }

    /// Scalar metrics as `metric,value,unit` rows.
    pub fn summary_csv(&self) -> String {
        let mut s = String::from("metric,value,unit\n");
        let mut row = |m: &str, v: f64, u: &str| {
            let _ = writeln!(s, "{m},{v},{u}");
        };
        row("expected_spread", self.expected_spread_ticks, "ticks");
        row("mean_interarrival", self.mean_interarrival_s, "s");
        row("sigma2_g", self.sigma2_g_tick2_per_event, "tick^2/event");
        row(&format!("sigma2_m_{}", self.k), self.sigma2_mk(), "tick^2/event");
        row("sigma2_g_per_s", self.sigma2_g_tick2_per_s, "tick^2/s");
        row(&format!("sigma2_m_{}_per_s", self.k), self.sigma2_mk_tick2_per_s, "tick^2/s");
        row(&format!("imbalance_var_{}", self.k), self.imbalance_var_units2_per_event, "units^2/event");
        row(&format!("imbalance_var_{}_per_s", self.k), self.imbalance_var_units2_per_s, "units^2/s");
        row("boundary_mass", self.diagnostics.boundary_mass, "probability");
        s
    }
}

/// Solves for `π` and derives every stationary metric.
pub fn analyse(gen: &TruncatedGenerator, cfg: &AnalysisConfig) -> Result<StationaryReport, SteadyError> {
    let st = solve_stationary(gen, &cfg.solve)?;
    let pi = &st.pi;
    let pj = event_stationary(gen, pi)?;
    let eta = gen.price_moves();
    let chain = event_chain(gen);
    let sigma_m = volatility_m(&pj, &chain, &eta, cfg.k)?;
    let sigma_g = sigma_m[0];
    let dt = mean_interarrival(gen, pi)?;
    let imbalance = imbalance_volatility(gen, &pj, cfg.k)[cfg.k];
    let spread = expected_spread(gen, pi);

    let boundary_mass = (0..gen.len()).filter(|&i| gen.is_truncated(i)).fold(0.0, |m, i| m + pi[i]);
    let max_eta2 = eta.iter().map(|e| e * e).fold(0.0, f64::max);
    let mut warnings = Vec::new();
    if boundary_mass > cfg.boundary_threshold {
        warnings.push(format!(
            "boundary mass {boundary_mass:e} exceeds {:e}; enlarge the truncation",
            cfg.boundary_threshold
        ));
    }
    let sigma_mk = sigma_m[cfg.k];
    if sigma_mk < 0.0 {
        warnings.push(format!("lag-{} corrected volatility is negative ({sigma_mk})", cfg.k));
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(StationaryReport {
        provenance: gen.provenance,
        n_states: gen.len(),
        units_per_aes: gen.units_per_aes,
        expected_spread_ticks: spread,
        expected_spread_price: cfg.tick_size.map(|t| t * spread),
        mean_interarrival_s: dt,
        k: cfg.k,
        sigma2_g_tick2_per_event: sigma_g,
        sigma2_g_tick2_per_s: volatility_per_second(sigma_g, dt)?,
        sigma2_mk_tick2_per_s: volatility_per_second(sigma_mk, dt)?,
        sigma2_m_tick2_per_event: sigma_m,
        imbalance_var_units2_per_event: imbalance,
        imbalance_var_units2_per_s: imbalance / dt,
        diagnostics: Diagnostics {
            method: st.method,
            residual: st.residual,
            transient_states: st.transient_states,
            boundary_mass,
            truncation_bound: 2.0 * max_eta2 * boundary_mass,
            sigma2_mk_negative: sigma_mk < 0.0,
            warnings,
        },
        states: gen
            .states()
            .iter()
            .zip(pi.iter().zip(&pj))
            .map(|(z, (p, q))| StateProbability {
                state: *z,
                pi: *p,
                pi_event: *q,
            })
            .collect(),
        intensity_profile: None,
    })
}
