use std::collections::VecDeque;

use super::{IntensityModel, KernelShape, KernelSpec};
use crate::book::OrderBookState;

/// Running kernel summaries `z_t(e)` for every class of one model.
///
/// Exponential kernels are updated in O(classes) per event by exact decay;
/// table kernels keep the events still inside the kernel support and sum
/// them on demand.
#[derive(Debug, Clone)]
pub struct Excitation {
    clock: f64,
    z: Vec<f64>,
    mode: Mode,
}

#[derive(Debug, Clone)]
enum Mode {
    Off,
    Exponential {
        beta: f64,
        /// `by_source[x][e] = α(e, x)`
        by_source: Vec<Vec<f64>>,
    },
    Table {
        shape: KernelShape,
        by_source: Vec<Vec<f64>>,
        history: VecDeque<(f64, usize)>,
    },
}

fn transpose(alpha: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = alpha.len();
    (0..n).map(|x| (0..n).map(|e| alpha[e][x]).collect()).collect()
}

impl Excitation {
    pub fn new(model: &IntensityModel) -> Self {
        let n = model.n_classes();
        let mode = match &model.kernel {
            _ if model.kernel.is_zero() => Mode::Off,
            KernelSpec::Zero => Mode::Off,
            KernelSpec::Separable {
                shape: KernelShape::Exponential { beta },
                alpha,
            } => Mode::Exponential {
                beta: *beta,
                by_source: transpose(alpha),
            },
            KernelSpec::Separable { shape, alpha } => Mode::Table {
                shape: shape.clone(),
                by_source: transpose(alpha),
                history: VecDeque::new(),
            },
        };
        Excitation {
            clock: 0.0,
            z: vec![0.0; n],
            mode,
        }
    }

    pub fn is_active(&self) -> bool {
        !matches!(self.mode, Mode::Off)
    }

    /// True when every summary is non-increasing between events, so the
    /// current total rate bounds the rate until the next event.
    pub fn is_monotone_between_events(&self) -> bool {
        match &self.mode {
            Mode::Off | Mode::Exponential { .. } => true,
            Mode::Table { shape, .. } => match shape {
                KernelShape::Table { values, .. } => values.windows(2).all(|w| w[1] <= w[0]),
                KernelShape::Exponential { .. } => true,
            },
        }
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    /// Summaries at the current clock, indexed by class.
    pub fn values(&self) -> &[f64] {
        &self.z
    }

    pub fn value(&self, class: usize) -> f64 {
        self.z[class]
    }

    /// Move the clock forward to `t` (left limit: events at `t` itself are
    /// not yet counted).
    pub fn advance_to(&mut self, t: f64) {
        debug_assert!(t >= self.clock);
        let dt = t - self.clock;
        self.clock = t;
        match &mut self.mode {
            Mode::Off => {}
            Mode::Exponential { beta, .. } => {
                if dt > 0.0 {
                    let decay = (-*beta * dt).exp();
                    for z in &mut self.z {
                        *z *= decay;
                    }
                }
            }
            Mode::Table {
                shape,
                by_source,
                history,
            } => {
                let support = shape.support();
                while let Some(&(ti, _)) = history.front() {
                    if t - ti >= support {
                        history.pop_front();
                    } else {
                        break;
                    }
                }
                self.z.iter_mut().for_each(|z| *z = 0.0);
                for &(ti, x) in history.iter() {
                    let g = shape.eval(t - ti);
                    if g == 0.0 {
                        continue;
                    }
                    for (z, a) in self.z.iter_mut().zip(&by_source[x]) {
                        *z += a * g;
                    }
                }
            }
        }
    }

    /// Register an event of class `source` at time `t` (advances the clock).
    pub fn record(&mut self, t: f64, source: usize) {
        self.advance_to(t);
        match &mut self.mode {
            Mode::Off => {}
            Mode::Exponential { by_source, .. } => {
                for (z, a) in self.z.iter_mut().zip(&by_source[source]) {
                    *z += a;
                }
            }
            Mode::Table {
                shape,
                by_source,
                history,
            } => {
                history.push_back((t, source));
                let g = shape.eval(0.0);
                for (z, a) in self.z.iter_mut().zip(&by_source[source]) {
                    *z += a * g;
                }
            }
        }
    }

    /// Writes `∫_{clock}^{clock+dt} ψ(e, u, z_e(s)) ds` for every class into
    /// `out`, with the book frozen at `u` and no new events.
    pub fn compensator(&self, model: &IntensityModel, u: &OrderBookState, dt: f64, out: &mut [f64]) {
        let n_psi = model.family.exponent();
        match &self.mode {
            Mode::Off => {
                for (e, o) in out.iter_mut().enumerate() {
                    *o = model.psi(e, u, 0.0) * dt;
                }
            }
            Mode::Exponential { beta, .. } => {
                for (e, o) in out.iter_mut().enumerate() {
                    if !model.class(e).possible_in(u) {
                        *o = 0.0;
                        continue;
                    }
                    let h = model.base_rate(e, u) * dt;
                    let z = self.z[e];
                    *o = match n_psi {
                        0 => h,
                        k => {
                            let kb = k as f64 * beta;
                            h + z.powi(k as i32) * -(-kb * dt).exp_m1() / kb
                        }
                    };
                }
            }
            Mode::Table {
                shape, history, ..
            } => {
                let KernelShape::Table { edges, .. } = shape else {
                    unreachable!("table mode always holds a table shape")
                };
                let (a, b) = (self.clock, self.clock + dt);
                let mut cuts = vec![a, b];
                for &(ti, _) in history {
                    cuts.extend(edges.iter().map(|e| ti + e).filter(|c| *c > a && *c < b));
                }
                cuts.sort_by(f64::total_cmp);
                cuts.dedup();
                out.iter_mut().for_each(|o| *o = 0.0);
                let mut probe = self.clone();
                for w in cuts.windows(2) {
                    let mid = 0.5 * (w[0] + w[1]);
                    probe.advance_to(mid);
                    for (e, o) in out.iter_mut().enumerate() {
                        *o += model.psi(e, u, probe.z[e]) * (w[1] - w[0]);
                    }
                }
            }
        }
    }

    /// Forget all past events and reset the clock to `t`.
    pub fn reset(&mut self, t: f64) {
        self.clock = t;
        self.z.iter_mut().for_each(|z| *z = 0.0);
        if let Mode::Table { history, .. } = &mut self.mode {
            history.clear();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::book::Side;
    use crate::intensity::{BaseTable, ClassSpec, EventClass, EventKind, Family};
    use proptest::prelude::*;

    fn model(shape: KernelShape, alpha: Vec<Vec<f64>>) -> IntensityModel {
        let n = alpha.len();
        let classes = (0..n)
            .map(|i| ClassSpec {
                class: EventClass {
                    kind: if i % 2 == 0 {
                        EventKind::Insert
                    } else {
                        EventKind::Consume
                    },
                    side: Side::Bid,
                    size: 1 + (i / 2) as u32,
                    agent: 1,
                },
                base: BaseTable::Constant { rate: 1.0 },
            })
            .collect();
        IntensityModel::new(
            Family::HawkesQr,
            classes,
            KernelSpec::Separable { shape, alpha },
        )
        .unwrap()
    }

    fn naive(m: &IntensityModel, events: &[(f64, usize)], t: f64, e: usize) -> f64 {
        let KernelSpec::Separable { shape, alpha } = &m.kernel else {
            return 0.0;
        };
        events
            .iter()
            .filter(|(ti, _)| *ti < t)
            .map(|&(ti, x)| alpha[e][x] * shape.eval(t - ti))
            .sum()
    }

    #[test]
    fn single_event_decays_exponentially() {
        let m = model(KernelShape::Exponential { beta: 2.0 }, vec![vec![0.5]]);
        let mut ex = m.excitation();
        ex.record(1.0, 0);
        ex.advance_to(1.5);
        assert!((ex.value(0) - 0.5 * (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn table_kernel_drops_expired_events() {
        let m = model(
            KernelShape::Table {
                edges: vec![0.0, 1.0, 2.0],
                values: vec![1.0, 0.25],
            },
            vec![vec![2.0]],
        );
        let mut ex = m.excitation();
        ex.record(0.0, 0);
        ex.advance_to(0.5);
        assert_eq!(ex.value(0), 2.0);
        ex.advance_to(1.5);
        assert_eq!(ex.value(0), 0.5);
        ex.advance_to(2.5);
        assert_eq!(ex.value(0), 0.0);
        assert!(ex.is_monotone_between_events());
    }

    #[test]
    fn compensator_matches_quadrature() {
        let u = OrderBookState { q1: 2, q2: 2, spread: 1 };
        for fam in [crate::intensity::Family::HawkesQr, crate::intensity::Family::Quadratic] {
            let mut m = model(KernelShape::Exponential { beta: 1.5 }, vec![vec![0.4, 0.1], vec![0.2, 0.3]]);
            m.family = fam;
            let mut ex = m.excitation();
            ex.record(0.0, 0);
            ex.record(0.3, 1);
            let dt = 0.8;
            let mut out = [0.0; 2];
            ex.compensator(&m, &u, dt, &mut out);
            let steps = 20_000;
            let h = dt / steps as f64;
            #[allow(clippy::needless_range_loop)]
            for e in 0..2 {
                let mut probe = ex.clone();
                let mut acc = 0.0;
                for i in 0..steps {
                    probe.advance_to(0.3 + (i as f64 + 0.5) * h);
                    acc += m.psi(e, &u, probe.value(e)) * h;
                }
                assert!((acc - out[e]).abs() < 1e-8, "{fam} class {e}: {acc} vs {}", out[e]);
            }
        }
        let m = model(
            KernelShape::Table { edges: vec![0.0, 0.5, 1.0], values: vec![1.0, 0.5] },
            vec![vec![1.0]],
        );
        let mut ex = m.excitation();
        ex.record(0.0, 0);
        ex.advance_to(0.25);
        let mut out = [0.0];
        ex.compensator(&m, &u, 1.0, &mut out);
        // h = 1 over 1.0 s plus 0.25 s at 1.0 and 0.5 s at 0.5.
        assert!((out[0] - (1.0 + 0.25 + 0.25)).abs() < 1e-14);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn incremental_matches_naive_sum(
            beta in 0.1f64..10.0,
            a in prop::collection::vec(0.0f64..2.0, 9),
            gaps in prop::collection::vec((1e-4f64..0.05, 0usize..3), 1..10_000),
            tail in 0.0f64..1.0,
        ) {
            let alpha: Vec<Vec<f64>> = a.chunks(3).map(|c| c.to_vec()).collect();
            let m = model(KernelShape::Exponential { beta }, alpha);
            let mut ex = m.excitation();
            let mut t = 0.0;
            let mut events = Vec::with_capacity(gaps.len());
            for (dt, x) in gaps {
                t += dt;
                ex.record(t, x);
                events.push((t, x));
            }
            let t_end = t + tail;
            ex.advance_to(t_end);
            for e in 0..3 {
                let direct = naive(&m, &events, t_end, e);
                let inc = ex.value(e);
                let scale = direct.abs().max(f64::MIN_POSITIVE);
                prop_assert!((inc - direct).abs() / scale <= 1e-12 || (inc - direct).abs() < 1e-300,
                    "class {e}: incremental {inc} vs naive {direct}");
            }
        }

        #[test]
        fn table_matches_naive_sum(
            gaps in prop::collection::vec((1e-3f64..0.7, 0usize..2), 1..200),
        ) {
            let m = model(
                KernelShape::Table { edges: vec![0.0, 0.5, 1.0, 3.0], values: vec![1.0, 0.6, 0.1] },
                vec![vec![0.3, 0.2], vec![0.1, 0.4]],
            );
            let mut ex = m.excitation();
            let mut t = 0.0;
            let mut events = Vec::new();
            for (dt, x) in gaps {
                t += dt;
                ex.advance_to(t);
                for e in 0..2 {
                    let d = naive(&m, &events, t, e);
                    prop_assert!((ex.value(e) - d).abs() <= 1e-12 * d.max(1.0));
                }
                ex.record(t, x);
                events.push((t, x));
            }
        }
    }
}
