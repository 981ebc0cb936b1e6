//! Event log records and their delimited text format.
//!
//! ```text
//! # qrhawkes-eventlog 1
//! # seed=7
//! # model=default-queue-reactive
//! # units=time:s size:min-order level:ticks-from-best-bid spread:ticks eta:ticks
//! # units_per_aes=4
//! # initial=5:5:1
//! # start=0
//! # end=12.5
//! timestamp,agent,side,direction,price_level,size,q1_post,q2_post,spread_post,epsilon,eta
//! 0.25,1,1,1,0,1,6,5,1,0,0
//! ```
//!
//! Sides are 1 (bid) and 2 (ask), directions +1 (insert) and -1 (consume).
//! Floats are written in shortest round-trip form, so reading a written log
//! gives back identical values.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::book::{
    apply_event, AgentId, BookError, Direction, EventDescriptor, MidPriceMove, OrderBookState, Side,
};

pub const LOG_MAGIC: &str = "qrhawkes-eventlog";
pub const LOG_VERSION: u32 = 1;
pub const LOG_COLUMNS: &str =
    "timestamp,agent,side,direction,price_level,size,q1_post,q2_post,spread_post,epsilon,eta";
const UNITS: &str = "time:s size:min-order level:ticks-from-best-bid spread:ticks eta:ticks";

#[derive(Debug, Error)]
pub enum LogError {
    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("missing header field `{0}`")]
    MissingHeader(&'static str),
    #[error("record {index}: timestamps must be strictly increasing")]
    NonMonotone { index: usize },
    #[error("record {index}: post state {found} differs from replayed {expected}")]
    Inconsistent {
        index: usize,
        expected: OrderBookState,
        found: OrderBookState,
    },
    #[error("record {index}: {source}")]
    Book { index: usize, source: BookError },
}

/// One accepted event with the book right after it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub time: f64,
    pub agent: AgentId,
    pub side: Side,
    pub direction: Direction,
    pub level: u32,
    pub size: u32,
    pub post: OrderBookState,
    /// The event emptied a best queue.
    pub depleted: bool,
    pub eta: i32,
}

impl EventRecord {
    pub fn descriptor(&self) -> EventDescriptor {
        EventDescriptor {
            size: self.size,
            level: self.level,
            direction: self.direction,
            side: self.side,
            agent: self.agent,
            replenish: self.depleted.then_some(self.post),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogMeta {
    pub seed: Option<u64>,
    pub model: String,
    pub units_per_aes: u32,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    pub meta: LogMeta,
    pub initial: OrderBookState,
    pub records: Vec<EventRecord>,
}

impl EventLog {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Book in force just before record `i`.
    pub fn pre_state(&self, i: usize) -> OrderBookState {
        if i == 0 {
            self.initial
        } else {
            self.records[i - 1].post
        }
    }

    /// Observed time span covered by the log.
    pub fn horizon(&self) -> f64 {
        self.meta.end - self.meta.start
    }

    /// Checks timestamps and replays every record through [`apply_event`].
    pub fn verify(&self, price_move: &dyn MidPriceMove) -> Result<(), LogError> {
        let mut prev = self.meta.start;
        for (i, r) in self.records.iter().enumerate() {
            if !(r.time > prev) && !(i == 0 && r.time >= prev) {
                return Err(LogError::NonMonotone { index: i });
            }
            prev = r.time;
            let pre = self.pre_state(i);
            let t = apply_event(&pre, &r.descriptor(), price_move)
                .map_err(|source| LogError::Book { index: i, source })?;
            if t.post != r.post || t.epsilon() != r.depleted || t.eta != r.eta {
                return Err(LogError::Inconsistent {
                    index: i,
                    expected: t.post,
                    found: r.post,
                });
            }
        }
        if self.meta.end < prev {
            return Err(LogError::NonMonotone {
                index: self.records.len(),
            });
        }
        Ok(())
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<(), LogError> {
        writeln!(w, "# {LOG_MAGIC} {LOG_VERSION}")?;
        if let Some(seed) = self.meta.seed {
            writeln!(w, "# seed={seed}")?;
        }
        writeln!(w, "# model={}", self.meta.model)?;
        writeln!(w, "# units={UNITS}")?;
        writeln!(w, "# units_per_aes={}", self.meta.units_per_aes)?;
        let u = self.initial;
        writeln!(w, "# initial={}:{}:{}", u.q1, u.q2, u.spread)?;
        writeln!(w, "# start={}", self.meta.start)?;
        writeln!(w, "# end={}", self.meta.end)?;
        writeln!(w, "{LOG_COLUMNS}")?;
        let mut line = String::with_capacity(64);
        for r in &self.records {
            line.clear();
            let _ = writeln!(
                line,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.time,
                r.agent,
                r.side.code(),
                r.direction.sign(),
                r.level,
                r.size,
                r.post.q1,
                r.post.q2,
                r.post.spread,
                r.depleted as u8,
                r.eta
            );
            w.write_all(line.as_bytes())?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("log text is ASCII")
    }

    pub fn read<R: BufRead>(r: R) -> Result<EventLog, LogError> {
        let mut seed = None;
        let mut model = None;
        let mut units_per_aes = None;
        let mut initial = None;
        let mut start = None;
        let mut end = None;
        let mut magic = false;
        let mut records = Vec::new();
        let mut header_seen = false;
        for (n, line) in r.lines().enumerate() {
            let line = line?;
            let lineno = n + 1;
            let bad = |msg: String| LogError::Parse { line: lineno, msg };
            let line = line.trim_end();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim();
                if let Some(v) = rest.strip_prefix(LOG_MAGIC) {
                    let version: u32 = v.trim().parse().map_err(|_| bad("bad version".into()))?;
                    if version != LOG_VERSION {
                        return Err(bad(format!("unsupported log version {version}")));
                    }
                    magic = true;
                    continue;
                }
                let Some((k, v)) = rest.split_once('=') else {
                    continue;
                };
                let num = |v: &str| -> Result<f64, LogError> {
                    v.parse().map_err(|_| bad(format!("bad number `{v}`")))
                };
                match k.trim() {
                    "seed" => seed = Some(v.parse().map_err(|_| bad("bad seed".into()))?),
                    "model" => model = Some(v.to_string()),
                    "units_per_aes" => {
                        units_per_aes = Some(v.parse().map_err(|_| bad("bad units_per_aes".into()))?)
                    }
                    "initial" => initial = Some(parse_state(v).ok_or_else(|| bad("bad initial state".into()))?),
                    "start" => start = Some(num(v)?),
                    "end" => end = Some(num(v)?),
                    _ => {}
                }
                continue;
            }
            if !header_seen {
                if line != LOG_COLUMNS {
                    return Err(bad("unexpected column header".into()));
                }
                header_seen = true;
                continue;
            }
            records.push(parse_record(line).map_err(bad)?);
        }
        if !magic {
            return Err(LogError::MissingHeader("version"));
        }
        let initial = initial.ok_or(LogError::MissingHeader("initial"))?;
        let start = start.ok_or(LogError::MissingHeader("start"))?;
        let end = end.ok_or(LogError::MissingHeader("end"))?;
        Ok(EventLog {
            meta: LogMeta {
                seed,
                model: model.unwrap_or_default(),
                units_per_aes: units_per_aes.unwrap_or(1),
                start,
                end,
            },
            initial,
            records,
        })
    }

    pub fn from_text(s: &str) -> Result<EventLog, LogError> {
        EventLog::read(s.as_bytes())
    }
}

fn parse_state(s: &str) -> Option<OrderBookState> {
    let mut it = s.trim().split(':').map(|p| p.parse::<u32>().ok());
    let st = OrderBookState {
        q1: it.next()??,
        q2: it.next()??,
        spread: it.next()??,
    };
    (it.next().is_none() && st.is_observable()).then_some(st)
}

fn parse_record(line: &str) -> Result<EventRecord, String> {
    let f: Vec<&str> = line.split(',').collect();
    if f.len() != 11 {
        return Err(format!("expected 11 fields, found {}", f.len()));
    }
    fn p<T: std::str::FromStr>(s: &str, what: &str) -> Result<T, String> {
        s.trim().parse().map_err(|_| format!("bad {what} `{s}`"))
    }
    let side = Side::from_code(p(f[2], "side")?).ok_or("side must be 1 or 2")?;
    let direction = Direction::from_sign(p(f[3], "direction")?).ok_or("direction must be 1 or -1")?;
    let depleted = match f[9].trim() {
        "0" => false,
        "1" => true,
        other => return Err(format!("bad epsilon `{other}`")),
    };
    Ok(EventRecord {
        time: p(f[0], "timestamp")?,
        agent: p(f[1], "agent")?,
        side,
        direction,
        level: p(f[4], "price_level")?,
        size: p(f[5], "size")?,
        post: OrderBookState {
            q1: p(f[6], "q1_post")?,
            q2: p(f[7], "q2_post")?,
            spread: p(f[8], "spread_post")?,
        },
        depleted,
        eta: p(f[10], "eta")?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::book::UnitTickMove;
    use proptest::prelude::*;

    fn sample() -> EventLog {
        let initial = OrderBookState::new(2, 3, 2).unwrap();
        EventLog {
            meta: LogMeta {
                seed: Some(9),
                model: "hand".into(),
                units_per_aes: 4,
                start: 0.0,
                end: 1.0,
            },
            initial,
            records: vec![
                EventRecord {
                    time: 0.1,
                    agent: 2,
                    side: Side::Bid,
                    direction: Direction::Insert,
                    level: 1,
                    size: 1,
                    post: OrderBookState::new(1, 3, 1).unwrap(),
                    depleted: false,
                    eta: 0,
                },
                EventRecord {
                    time: 0.30000000000000004,
                    agent: 1,
                    side: Side::Bid,
                    direction: Direction::Consume,
                    level: 0,
                    size: 1,
                    post: OrderBookState::new(4, 3, 1).unwrap(),
                    depleted: true,
                    eta: -1,
                },
            ],
        }
    }

    #[test]
    fn round_trip_and_verify() {
        let log = sample();
        log.verify(&UnitTickMove).unwrap();
        let back = EventLog::from_text(&log.to_text()).unwrap();
        assert_eq!(back, log);
    }

    #[test]
    fn inconsistent_post_state_detected() {
        let mut log = sample();
        log.records[0].post.q2 = 9;
        assert!(matches!(log.verify(&UnitTickMove), Err(LogError::Inconsistent { index: 0, .. })));
    }

    #[test]
    fn rejects_bad_rows() {
        let mut text = sample().to_text();
        text.push_str("0.5,1,3,1,0,1,1,1,1,0,0\n");
        assert!(matches!(EventLog::from_text(&text), Err(LogError::Parse { .. })));
    }

    proptest! {
        #[test]
        fn float_timestamps_round_trip(ts in prop::collection::vec(0.0f64..1e9, 1..50)) {
            let mut log = sample();
            let mut ts = ts;
            ts.sort_by(f64::total_cmp);
            let proto = log.records[0];
            log.records = ts.iter().map(|&t| EventRecord { time: t, ..proto }).collect();
            let back = EventLog::from_text(&log.to_text()).unwrap();
            for (a, b) in back.records.iter().zip(&log.records) {
                prop_assert_eq!(a.time.to_bits(), b.time.to_bits());
            }
        }
    }
}
