//! Sparse text format for generator estimates.
//!
//! ```text
//! # qrhawkes-generator 1
//! # map=full
//! # horizon_s=...
//! # units_per_aes=...
//! # agents=1:events:volume;2:events:volume
//! from,to,count,occupation_s,qhat_per_s,ci_low,ci_high,agent,inc_sum,inc_sq
//! ```
//!
//! States are `q1:q2:spread:eta` (queues in minimum-order units, spread in
//! ticks). Market rows carry `agent=*`; per-agent rows follow with the agent
//! id and no interval. A state with no departures has one row with an empty
//! `to`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};

use thiserror::Error;

use super::{AgentTotals, Cell, FlowCounts, GeneratorEstimate};
use crate::chain::{ChainState, StateMap};

const MAGIC: &str = "# qrhawkes-generator 1";
pub const GENERATOR_COLUMNS: &str =
    "from,to,count,occupation_s,qhat_per_s,ci_low,ci_high,agent,inc_sum,inc_sq";

#[derive(Debug, Error)]
pub enum GeneratorIoError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("missing `{0}` header")]
    MissingHeader(&'static str),
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| v.to_string())
}

impl GeneratorEstimate {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{MAGIC}");
        let _ = writeln!(s, "# map={}", self.map);
        let _ = writeln!(s, "# horizon_s={}", self.horizon);
        let _ = writeln!(s, "# units_per_aes={}", self.units_per_aes);
        let agents: Vec<String> = self
            .agents
            .iter()
            .map(|(a, t)| format!("{a}:{}:{}", t.events, t.volume))
            .collect();
        let _ = writeln!(s, "# agents={}", agents.join(";"));
        let _ = writeln!(s, "{GENERATOR_COLUMNS}");
        for (z, &t) in &self.occupation {
            let mut any = false;
            for ((_, to), c) in self.cells.range((*z, ChainState::MIN)..=(*z, ChainState::MAX)) {
                any = true;
                let q = self.rate(z, to);
                let (lo, hi) = (c.ci.map(|c| c.0), c.ci.map(|c| c.1));
                let _ = writeln!(
                    s,
                    "{z},{to},{},{t},{},{},{},*,{},{}",
                    c.total.count,
                    opt(q),
                    opt(lo),
                    opt(hi),
                    c.total.inc_sum,
                    c.total.inc_sq
                );
                for (a, f) in &c.by_agent {
                    let qa = self.agent_rate(z, to, *a);
                    let _ = writeln!(s, "{z},{to},{},{t},{},,,{a},{},{}", f.count, opt(qa), f.inc_sum, f.inc_sq);
                }
            }
            if !any {
                let _ = writeln!(s, "{z},,0,{t},,,,*,0,0");
            }
        }
        s
    }

    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(self.to_text().as_bytes())
    }

    pub fn read<R: Read>(r: R) -> Result<GeneratorEstimate, GeneratorIoError> {
        let mut map = None;
        let mut horizon = None;
        let mut units_per_aes = 1;
        let mut agents = BTreeMap::new();
        let mut occupation = BTreeMap::new();
        let mut cells: BTreeMap<(ChainState, ChainState), Cell> = BTreeMap::new();
        let mut seen_magic = false;
        let mut seen_columns = false;
        for (i, line) in BufReader::new(r).lines().enumerate() {
            let line = line?;
            let n = i + 1;
            let err = |msg: String| GeneratorIoError::Parse { line: n, msg };
            let l = line.trim();
            if l.is_empty() {
                continue;
            }
            if l == MAGIC {
                seen_magic = true;
                continue;
            }
            if let Some(h) = l.strip_prefix('#') {
                let h = h.trim();
                if let Some(v) = h.strip_prefix("map=") {
                    map = Some(v.parse::<StateMap>().map_err(err)?);
                } else if let Some(v) = h.strip_prefix("horizon_s=") {
                    horizon = Some(v.parse::<f64>().map_err(|e| err(e.to_string()))?);
                } else if let Some(v) = h.strip_prefix("units_per_aes=") {
                    units_per_aes = v.parse().map_err(|_| err(format!("bad units_per_aes `{v}`")))?;
                } else if let Some(v) = h.strip_prefix("agents=") {
                    for part in v.split(';').filter(|p| !p.is_empty()) {
                        let f: Vec<&str> = part.split(':').collect();
                        let parsed = (f.len() == 3)
                            .then(|| Some((f[0].parse().ok()?, f[1].parse().ok()?, f[2].parse().ok()?)))
                            .flatten()
                            .ok_or_else(|| err(format!("bad agent entry `{part}`")))?;
                        agents.insert(parsed.0, AgentTotals { events: parsed.1, volume: parsed.2 });
                    }
                }
                continue;
            }
            if l == GENERATOR_COLUMNS {
                seen_columns = true;
                continue;
            }
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 10 {
                return Err(err(format!("expected 10 fields, found {}", f.len())));
            }
            let from: ChainState = f[0].parse().map_err(err)?;
            let occ: f64 = f[3].parse().map_err(|_| err(format!("bad occupation `{}`", f[3])))?;
            occupation.insert(from, occ);
            if f[1].is_empty() {
                continue;
            }
            let to: ChainState = f[1].parse().map_err(err)?;
            let num = |x: &str| x.parse::<u64>().map_err(|_| err(format!("bad integer `{x}`")));
            let flow = FlowCounts {
                count: num(f[2])?,
                inc_sum: f[8].parse().map_err(|_| err(format!("bad integer `{}`", f[8])))?,
                inc_sq: num(f[9])?,
            };
            let cell = cells.entry((from, to)).or_default();
            if f[7] == "*" {
                cell.total = flow;
                if !f[5].is_empty() && !f[6].is_empty() {
                    let lo = f[5].parse().map_err(|_| err("bad ci_low".into()))?;
                    let hi = f[6].parse().map_err(|_| err("bad ci_high".into()))?;
                    cell.ci = Some((lo, hi));
                }
            } else {
                let a = f[7].parse().map_err(|_| err(format!("bad agent `{}`", f[7])))?;
                cell.by_agent.insert(a, flow);
            }
        }
        if !seen_magic {
            return Err(GeneratorIoError::MissingHeader("qrhawkes-generator"));
        }
        if !seen_columns {
            return Err(GeneratorIoError::MissingHeader("columns"));
        }
        Ok(GeneratorEstimate {
            map: map.ok_or(GeneratorIoError::MissingHeader("map"))?,
            occupation,
            cells,
            horizon: horizon.ok_or(GeneratorIoError::MissingHeader("horizon_s"))?,
            agents,
            units_per_aes,
        })
    }

    pub fn from_text(s: &str) -> Result<GeneratorEstimate, GeneratorIoError> {
        Self::read(s.as_bytes())
    }
}
