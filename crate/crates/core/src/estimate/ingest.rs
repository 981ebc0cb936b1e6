//! Raw market data adapter.
//!
//! Rows `timestamp,side,action,price,volume,member` are replayed on a
//! full-depth book. Volumes are normalised by the average event size (AES)
//! and each row that changes the discretised best-limit state becomes one
//! event of the alphabet; cancellations and trades both consume liquidity.
//! The output is one consistent [`EventLog`] per contiguous observable
//! stretch of a trading day.

use std::collections::{BTreeMap, HashMap};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::book::{
    apply_event, AgentId, Direction, EventDescriptor, MidPriceMove, OrderBookState, Side,
    UnitTickMove, UNATTRIBUTED,
};
use crate::sim::{EventLog, EventRecord, LogMeta};

const SECONDS_PER_DAY: f64 = 86_400.0;
/// Ids handed to non-numeric member codes start here.
const NAMED_MEMBER_BASE: AgentId = 1_000_000;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("invalid ingestion config: {0}")]
    Config(String),
    #[error("day {day}: no positive volume to compute the average event size")]
    NoVolume { day: i64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum AesMode {
    /// Mean size of the day's events at the best limits.
    PerDay,
    Fixed { aes: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Discretization {
    /// Smallest integer at least `volume / unit`.
    #[default]
    Ceil,
    /// Nearest integer, at least one for a non-empty queue.
    Round,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestionConfig {
    pub aes: AesMode,
    /// Minimum-order units per AES.
    pub units_per_aes: u32,
    pub discretization: Discretization,
    pub tick_size: f64,
    /// Spread filter in ticks, applied when estimating.
    pub spread_filter: Option<u32>,
    /// Seconds dropped at the start and end of each trading day.
    pub session_trim: f64,
}

impl Default for IngestionConfig {
    fn default() -> Self {
        IngestionConfig {
            aes: AesMode::PerDay,
            units_per_aes: 1,
            discretization: Discretization::Ceil,
            tick_size: 0.01,
            spread_filter: Some(1),
            session_trim: 3600.0,
        }
    }
}

impl IngestionConfig {
    pub fn validate(&self) -> Result<(), IngestError> {
        let bad = |m: &str| Err(IngestError::Config(m.to_string()));
        if let AesMode::Fixed { aes } = self.aes {
            if !(aes.is_finite() && aes > 0.0) {
                return bad("AES must be positive");
            }
        }
        if self.units_per_aes == 0 {
            return bad("units_per_aes must be at least 1");
        }
        if !(self.tick_size.is_finite() && self.tick_size > 0.0) {
            return bad("tick size must be positive");
        }
        if self.spread_filter == Some(0) {
            return bad("spread filter must be at least one tick");
        }
        if !(self.session_trim.is_finite() && self.session_trim >= 0.0) {
            return bad("session trim must be non-negative");
        }
        Ok(())
    }
}

/// Queue size in minimum-order units for a raw volume.
pub fn discretize(volume: f64, aes: f64, units_per_aes: u32, rule: Discretization) -> u32 {
    if volume <= 0.0 {
        return 0;
    }
    let x = volume * units_per_aes as f64 / aes;
    let q = match rule {
        Discretization::Ceil => (x - 1e-9).ceil(),
        Discretization::Round => x.round().max(1.0),
    };
    q.max(1.0) as u32
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct RawRow {
    pub timestamp: f64,
    pub side: String,
    pub action: String,
    pub price: f64,
    pub volume: f64,
    #[serde(default)]
    pub member: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Action {
    Insert,
    Remove,
}

#[derive(Debug, Clone, Copy)]
struct Row {
    time: f64,
    side: Side,
    action: Action,
    price: i64,
    volume: f64,
    agent: AgentId,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows: usize,
    pub accepted: usize,
    pub rejected_non_monotone: usize,
    /// Unknown side/action, crossing inserts, removals at empty prices.
    pub rejected_invalid: usize,
    /// Accepted rows that left the discretised state unchanged.
    pub unchanged: usize,
    pub unattributed: usize,
    pub events: usize,
    /// AES per day index (`floor(t / 86400)`).
    pub aes: BTreeMap<i64, f64>,
    /// Non-numeric member codes and their agent ids.
    pub members: BTreeMap<String, AgentId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub segments: Vec<EventLog>,
    pub report: IngestReport,
}

#[derive(Debug, Default, Clone)]
struct RawBook {
    bids: BTreeMap<i64, f64>,
    asks: BTreeMap<i64, f64>,
}

impl RawBook {
    fn best(&self, side: Side) -> Option<(i64, f64)> {
        match side {
            Side::Bid => self.bids.last_key_value(),
            Side::Ask => self.asks.first_key_value(),
        }
        .map(|(p, v)| (*p, *v))
    }

    fn levels(&mut self, side: Side) -> &mut BTreeMap<i64, f64> {
        match side {
            Side::Bid => &mut self.bids,
            Side::Ask => &mut self.asks,
        }
    }

    /// Applies a row; `None` if the row is invalid for the current book.
    /// Returns whether the row acted at or inside the best limit.
    fn apply(&mut self, row: &Row) -> Option<bool> {
        let best = self.best(row.side).map(|b| b.0);
        let opposite = self.best(row.side.opposite()).map(|b| b.0);
        let improves = |p: i64, b: i64| match row.side {
            Side::Bid => p > b,
            Side::Ask => p < b,
        };
        let at_best = best.is_none_or(|b| row.price == b || improves(row.price, b));
        match row.action {
            Action::Insert => {
                let crosses = opposite.is_some_and(|o| match row.side {
                    Side::Bid => row.price >= o,
                    Side::Ask => row.price <= o,
                });
                if crosses {
                    return None;
                }
                *self.levels(row.side).entry(row.price).or_insert(0.0) += row.volume;
            }
            Action::Remove => {
                let levels = self.levels(row.side);
                let v = levels.get_mut(&row.price)?;
                *v -= row.volume.min(*v);
                if *v <= 1e-9 {
                    levels.remove(&row.price);
                }
            }
        }
        Some(at_best)
    }
}

fn parse_side(s: &str) -> Option<Side> {
    match s.trim().to_ascii_lowercase().as_str() {
        "bid" | "b" | "buy" | "1" => Some(Side::Bid),
        "ask" | "a" | "sell" | "s" | "2" => Some(Side::Ask),
        _ => None,
    }
}

fn parse_action(s: &str) -> Option<Action> {
    match s.trim().to_ascii_lowercase().as_str() {
        "insert" | "add" | "new" => Some(Action::Insert),
        "cancel" | "delete" | "trade" | "execute" => Some(Action::Remove),
        _ => None,
    }
}

fn day_of(t: f64) -> i64 {
    (t / SECONDS_PER_DAY).floor() as i64
}

pub fn ingest_path(path: &Path, cfg: &IngestionConfig) -> Result<Ingested, IngestError> {
    ingest_csv(std::fs::File::open(path)?, cfg)
}

pub fn ingest_csv<R: Read>(reader: R, cfg: &IngestionConfig) -> Result<Ingested, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let rows = rdr.deserialize::<RawRow>().collect::<Result<Vec<_>, _>>()?;
    ingest_rows(&rows, cfg)
}

pub fn ingest_rows(raw: &[RawRow], cfg: &IngestionConfig) -> Result<Ingested, IngestError> {
    cfg.validate()?;
    let mut report = IngestReport {
        rows: raw.len(),
        ..Default::default()
    };

    // Pass 1: validation, agent ids and AES.
    let mut names: HashMap<String, AgentId> = HashMap::new();
    let mut book = RawBook::default();
    let mut rows = Vec::with_capacity(raw.len());
    let mut best_volume: BTreeMap<i64, (f64, usize)> = BTreeMap::new();
    let mut last_t = f64::NEG_INFINITY;
    for r in raw {
        if !r.timestamp.is_finite() || r.timestamp < last_t {
            report.rejected_non_monotone += 1;
            continue;
        }
        let (Some(side), Some(action)) = (parse_side(&r.side), parse_action(&r.action)) else {
            report.rejected_invalid += 1;
            continue;
        };
        if !(r.volume.is_finite() && r.volume >= 0.0 && r.price.is_finite()) {
            report.rejected_invalid += 1;
            continue;
        }
        let agent = match r.member.as_deref().map(str::trim).filter(|m| !m.is_empty()) {
            None => {
                report.unattributed += 1;
                UNATTRIBUTED
            }
            Some(m) => match m.parse::<AgentId>() {
                Ok(id) if id < NAMED_MEMBER_BASE => id,
                _ => {
                    let next = NAMED_MEMBER_BASE + names.len() as AgentId;
                    *names.entry(m.to_string()).or_insert(next)
                }
            },
        };
        let row = Row {
            time: r.timestamp,
            side,
            action,
            price: (r.price / cfg.tick_size).round() as i64,
            volume: r.volume,
            agent,
        };
        let Some(at_best) = book.apply(&row) else {
            report.rejected_invalid += 1;
            continue;
        };
        if at_best && row.volume > 0.0 {
            let e = best_volume.entry(day_of(row.time)).or_default();
            e.0 += row.volume;
            e.1 += 1;
        }
        last_t = row.time;
        rows.push(row);
    }
    report.accepted = rows.len();
    report.members = names.into_iter().collect();

    let mut days: BTreeMap<i64, (f64, f64)> = BTreeMap::new();
    for r in &rows {
        let d = days.entry(day_of(r.time)).or_insert((r.time, r.time));
        d.1 = r.time;
    }
    for &day in days.keys() {
        let aes = match cfg.aes {
            AesMode::Fixed { aes } => aes,
            AesMode::PerDay => match best_volume.get(&day) {
                Some(&(v, n)) if v > 0.0 => v / n as f64,
                _ => return Err(IngestError::NoVolume { day }),
            },
        };
        report.aes.insert(day, aes);
    }

    // Pass 2: replay with discretisation and segmenting.
    let mut book = RawBook::default();
    let mut segments = Vec::new();
    let mut open: Option<EventLog> = None;
    let mut observable_since: Option<f64> = None;
    let mut current_day = None;
    for row in &rows {
        let day = day_of(row.time);
        let (first, last) = days[&day];
        let window = (first + cfg.session_trim, last - cfg.session_trim);
        if current_day != Some(day) {
            if let (Some(log), Some(prev)) = (open.take(), current_day) {
                let (_, l) = days[&prev];
                close(log, l - cfg.session_trim, &mut segments);
            }
            current_day = Some(day);
            book = RawBook::default();
            observable_since = None;
        }
        let aes = report.aes[&day];
        let pre_raw = (book.best(Side::Bid), book.best(Side::Ask));
        let pre = discrete_state(&book, aes, cfg);
        book.apply(row).expect("row validated in the first pass");
        let post = discrete_state(&book, aes, cfg);

        let in_window = row.time >= window.0 && row.time <= window.1;
        if !in_window {
            if let Some(log) = open.take() {
                close(log, window.1.min(row.time), &mut segments);
            }
        } else if open.is_none() {
            if let (Some(pre), Some(since)) = (pre, observable_since) {
                open = Some(new_segment(pre, since.max(window.0), cfg));
            }
        }
        if let Some(log) = open.as_mut() {
            let pre = pre.expect("open segments have an observable book");
            match post {
                None => {
                    let log = open.take().expect("segment is open");
                    close(log, row.time, &mut segments);
                }
                Some(post) if post == pre => report.unchanged += 1,
                Some(post) => match derive_record(row, &pre, &post, pre_raw, (book.best(Side::Bid), book.best(Side::Ask))) {
                    Some(rec) => {
                        log.records.push(rec);
                        report.events += 1;
                    }
                    None => {
                        let log = open.take().expect("segment is open");
                        close(log, row.time, &mut segments);
                        open = Some(new_segment(post, row.time, cfg));
                    }
                },
            }
        } else if pre.is_some() && pre == post {
            report.unchanged += 1;
        }
        observable_since = match post {
            None => None,
            Some(_) => observable_since.or(Some(row.time)),
        };
    }
    if let (Some(log), Some(day)) = (open.take(), current_day) {
        let (_, last) = days[&day];
        close(log, last - cfg.session_trim, &mut segments);
    }
    Ok(Ingested { segments, report })
}

fn discrete_state(book: &RawBook, aes: f64, cfg: &IngestionConfig) -> Option<OrderBookState> {
    let (bp, bv) = book.best(Side::Bid)?;
    let (ap, av) = book.best(Side::Ask)?;
    let q = |v| discretize(v, aes, cfg.units_per_aes, cfg.discretization);
    OrderBookState::new(q(bv), q(av), u32::try_from(ap - bp).ok()?).ok()
}

fn new_segment(initial: OrderBookState, start: f64, cfg: &IngestionConfig) -> EventLog {
    EventLog {
        meta: LogMeta {
            seed: None,
            model: "raw-csv".to_string(),
            units_per_aes: cfg.units_per_aes,
            start,
            end: start,
        },
        initial,
        records: Vec::new(),
    }
}

fn close(mut log: EventLog, end: f64, out: &mut Vec<EventLog>) {
    let last = log.records.last().map_or(log.meta.start, |r| r.time);
    log.meta.end = end.max(last);
    if log.meta.end > log.meta.start || !log.records.is_empty() {
        out.push(log);
    }
}

type Best = Option<(i64, f64)>;

/// Maps a state change caused by `row` to an event of the alphabet.
fn derive_record(
    row: &Row,
    pre: &OrderBookState,
    post: &OrderBookState,
    pre_raw: (Best, Best),
    post_raw: (Best, Best),
) -> Option<EventRecord> {
    let side = row.side;
    let pick = |b: (Best, Best)| match side {
        Side::Bid => b.0,
        Side::Ask => b.1,
    };
    let before = pick(pre_raw)?.0;
    let after = pick(post_raw)?.0;
    let improved = match side {
        Side::Bid => after > before,
        Side::Ask => after < before,
    };
    let queue = pre.queue(side);
    let best_level = pre.best_level(side);
    let (direction, level, size, replenish) = if after == before {
        let new = post.queue(side);
        if new > queue {
            (Direction::Insert, best_level, new - queue, None)
        } else {
            (Direction::Consume, best_level, queue - new, None)
        }
    } else if improved {
        let improvement = u32::try_from((after - before).abs()).ok()?;
        let level = match side {
            Side::Bid => improvement,
            Side::Ask => pre.spread.checked_sub(improvement)?,
        };
        (Direction::Insert, level, post.queue(side), None)
    } else {
        (Direction::Consume, best_level, queue, Some(*post))
    };
    let desc = EventDescriptor {
        size,
        level,
        direction,
        side,
        agent: row.agent,
        replenish,
    };
    let t = apply_event(pre, &desc, &UnitTickMove).ok()?;
    if t.post != *post {
        return None;
    }
    Some(EventRecord {
        time: row.time,
        agent: row.agent,
        side,
        direction,
        level,
        size,
        post: t.post,
        depleted: t.depleted.is_some(),
        eta: t.depleted.map_or(0, |d| UnitTickMove.price_move(&d)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(t: f64, side: &str, action: &str, price: f64, volume: f64, member: &str) -> RawRow {
        RawRow {
            timestamp: t,
            side: side.into(),
            action: action.into(),
            price,
            volume,
            member: (!member.is_empty()).then(|| member.to_string()),
        }
    }

    fn cfg() -> IngestionConfig {
        IngestionConfig {
            aes: AesMode::Fixed { aes: 100.0 },
            session_trim: 0.0,
            ..Default::default()
        }
    }

    #[test]
    fn discretization_rules() {
        assert_eq!(discretize(350.0, 200.0, 1, Discretization::Ceil), 2);
        assert_eq!(discretize(0.0, 200.0, 1, Discretization::Ceil), 0);
        assert_eq!(discretize(401.0, 200.0, 1, Discretization::Ceil), 3);
        assert_eq!(discretize(400.0, 200.0, 1, Discretization::Ceil), 2);
        assert_eq!(discretize(350.0, 200.0, 2, Discretization::Ceil), 4);
        assert_eq!(discretize(10.0, 200.0, 1, Discretization::Round), 1);
    }

    fn seeded_book() -> Vec<RawRow> {
        vec![
            row(0.0, "bid", "insert", 10.00, 200.0, "7"),
            row(0.0, "ask", "insert", 10.01, 300.0, "7"),
            row(0.0, "bid", "insert", 9.99, 100.0, "7"),
            row(0.0, "ask", "insert", 10.02, 100.0, "7"),
        ]
    }

    #[test]
    fn rows_become_consistent_events() {
        let mut rows = seeded_book();
        rows.extend([
            row(1.0, "bid", "insert", 10.00, 50.0, "7"),   // 250 -> 3 units
            row(2.0, "ask", "trade", 10.01, 150.0, "mm"),  // 300 -> 150 -> 2
            row(3.0, "bid", "insert", 9.98, 500.0, ""),    // deeper level, no change
            row(4.0, "ask", "cancel", 10.01, 150.0, "7"),  // ask depleted, refill 10.02
            row(5.0, "bid", "insert", 10.01, 100.0, "8"),  // improvement inside spread
            row(4.5, "bid", "insert", 10.00, 1.0, "8"),    // non-monotone
            row(6.0, "bid", "insert", 10.05, 1.0, "8"),    // crosses
        ]);
        let out = ingest_rows(&rows, &cfg()).unwrap();
        assert_eq!(out.report.rejected_non_monotone, 1);
        assert_eq!(out.report.rejected_invalid, 1);
        assert_eq!(out.report.unattributed, 1);
        assert_eq!(out.report.members["mm"], NAMED_MEMBER_BASE);
        assert_eq!(out.segments.len(), 1);
        let log = &out.segments[0];
        log.verify(&UnitTickMove).unwrap();
        assert_eq!(log.initial, OrderBookState::new(2, 3, 1).unwrap());
        let r = &log.records;
        assert!(r.iter().any(|e| e.time == 1.0 && e.direction == Direction::Insert && e.size == 1));
        let dep = r.iter().find(|e| e.depleted).unwrap();
        assert_eq!(dep.eta, 1);
        assert_eq!(dep.post, OrderBookState::new(3, 1, 2).unwrap());
        let inside = r.last().unwrap();
        assert_eq!((inside.level, inside.post), (1, OrderBookState::new(1, 1, 1).unwrap()));
        assert_eq!(inside.agent, 8);
    }

    #[test]
    fn per_day_aes_and_session_trim() {
        let mut rows = seeded_book();
        for i in 1..=20 {
            rows.push(row(i as f64 * 100.0, "bid", if i % 2 == 0 { "cancel" } else { "insert" }, 10.00, 100.0, "1"));
        }
        let c = IngestionConfig {
            session_trim: 500.0,
            ..cfg()
        };
        let out = ingest_rows(&rows, &IngestionConfig { aes: AesMode::PerDay, ..c }).unwrap();
        // Best-limit rows: 200, 300 and twenty of 100.
        assert!((out.report.aes[&0] - 2500.0 / 22.0).abs() < 1e-12);
        let log = &out.segments[0];
        assert_eq!(log.meta.start, 500.0);
        assert_eq!(log.meta.end, 1500.0);
        assert!(log.records.iter().all(|r| r.time >= 500.0 && r.time <= 1500.0));
    }

    #[test]
    fn empty_side_splits_segments() {
        let mut rows = seeded_book();
        rows.extend([
            row(1.0, "bid", "cancel", 10.00, 200.0, "1"),
            row(2.0, "bid", "cancel", 9.99, 100.0, "1"),
            row(3.0, "bid", "insert", 10.00, 100.0, "1"),
            row(4.0, "bid", "insert", 10.00, 100.0, "1"),
        ]);
        let out = ingest_rows(&rows, &cfg()).unwrap();
        assert_eq!(out.segments.len(), 2);
        assert_eq!(out.segments[0].meta.end, 2.0);
        assert_eq!(out.segments[1].meta.start, 3.0);
        for s in &out.segments {
            s.verify(&UnitTickMove).unwrap();
        }
    }

    #[test]
    fn csv_reader_and_bad_config() {
        let text = "timestamp,side,action,price,volume,member\n0,bid,insert,10.00,100,1\n0,ask,insert,10.01,100,\n1,bid,insert,10.00,100,2\n";
        let out = ingest_csv(text.as_bytes(), &cfg()).unwrap();
        assert_eq!(out.report.accepted, 3);
        assert_eq!(out.segments[0].records.len(), 1);
        let bad = IngestionConfig {
            aes: AesMode::Fixed { aes: 0.0 },
            ..cfg()
        };
        assert!(matches!(ingest_csv(text.as_bytes(), &bad), Err(IngestError::Config(_))));
    }
}
