//! Time-rescaling diagnostics: replays a log under a model and integrates
//! the intensities between events. Under the right model the compensator
//! increments are i.i.d. unit exponentials.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::EventLog;
use crate::book::OrderBookState;
use crate::intensity::EventClass;
use crate::model::MarketModel;
use crate::stats::{ks_exponential, mean, KsResult};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReplayError {
    #[error("record {index}: event class {class:?} is not in the model alphabet")]
    UnknownClass { index: usize, class: EventClass },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassResiduals {
    pub class: EventClass,
    pub events: usize,
    /// Compensator over the whole log.
    pub compensator: f64,
    /// Rescaled waiting times between consecutive events of this class.
    pub mean_increment: Option<f64>,
    pub ks: Option<KsResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    /// Total compensator between consecutive events, one per event.
    pub increments: Vec<f64>,
    pub mean_increment: Option<f64>,
    pub ks: Option<KsResult>,
    pub per_class: Vec<ClassResiduals>,
}

/// Replays `log` under `model` and returns compensator increments.
pub fn replay(log: &EventLog, model: &MarketModel) -> Result<ReplayReport, ReplayError> {
    let im = &model.intensity;
    let n = im.n_classes();
    let mut ex = im.excitation();
    ex.reset(log.meta.start);
    let history = im.family.uses_history();
    let mut state: OrderBookState = log.initial;
    let mut t = log.meta.start;
    let mut buf = vec![0.0; n];
    let mut since_last = vec![0.0; n];
    let mut seen = vec![false; n];
    let mut class_incs: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut class_total = vec![0.0; n];
    let mut class_events = vec![0usize; n];
    let mut increments = Vec::with_capacity(log.len());

    for (i, r) in log.records.iter().enumerate() {
        let class = EventClass::of_event(&state, &r.descriptor());
        let e = im
            .find_class(&class)
            .ok_or(ReplayError::UnknownClass { index: i, class })?;
        ex.compensator(im, &state, r.time - t, &mut buf);
        let mut total = 0.0;
        for c in 0..n {
            total += buf[c];
            since_last[c] += buf[c];
            class_total[c] += buf[c];
        }
        increments.push(total);
        if seen[e] {
            class_incs[e].push(since_last[e]);
        }
        seen[e] = true;
        since_last[e] = 0.0;
        class_events[e] += 1;
        if history {
            ex.record(r.time, e);
        } else {
            ex.advance_to(r.time);
        }
        state = r.post;
        t = r.time;
    }
    if log.meta.end > t {
        ex.compensator(im, &state, log.meta.end - t, &mut buf);
        for c in 0..n {
            class_total[c] += buf[c];
        }
    }
    let per_class = (0..n)
        .map(|c| ClassResiduals {
            class: *im.class(c),
            events: class_events[c],
            compensator: class_total[c],
            mean_increment: mean(&class_incs[c]),
            ks: ks_exponential(&class_incs[c], 1.0),
        })
        .collect();
    Ok(ReplayReport {
        mean_increment: mean(&increments),
        ks: ks_exponential(&increments, 1.0),
        increments,
        per_class,
    })
}
