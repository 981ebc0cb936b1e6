use super::{SteadyError, TruncatedGenerator};

/// Row-stochastic matrix with sparse rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseChain {
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseChain {
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        SparseChain { rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.rows[i].iter().map(|x| x.1).sum()
    }

    /// `P v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.iter().map(|&(j, p)| p * v[j]).sum())
            .collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        let mut p = vec![vec![0.0; n]; n];
        for (i, r) in self.rows.iter().enumerate() {
            for &(j, x) in r {
                p[i][j] += x;
            }
        }
        p
    }
}

/// Jump chain: `P(z, z') = Q(z, z') / -Q(z, z)` for `z != z'`, and
/// `P(z, z) = 1` when the state has no exits.
pub fn embedded_chain(gen: &TruncatedGenerator) -> SparseChain {
    let rows = (0..gen.len())
        .map(|i| {
            let exit = gen.exit_rate(i);
            if exit == 0.0 {
                return vec![(i, 1.0)];
            }
            gen.row(i)
                .iter()
                .filter(|j| j.to != i)
                .map(|j| (j.to, j.rate / exit))
                .collect()
        })
        .collect();
    SparseChain { rows }
}

/// Chain of the state seen after each event, counting events that keep the
/// state: `P(z, z') = rate(z → z') / total event rate of z`. Equal to the
/// jump chain when no such events exist.
pub fn event_chain(gen: &TruncatedGenerator) -> SparseChain {
    let rows = (0..gen.len())
        .map(|i| {
            let total = gen.event_rate(i);
            if total == 0.0 {
                return vec![(i, 1.0)];
            }
            gen.row(i).iter().map(|j| (j.to, j.rate / total)).collect()
        })
        .collect();
    SparseChain { rows }
}

/// Stationary law of the event chain, `π_J(z) ∝ π(z) · event rate(z)`.
pub fn event_stationary(gen: &TruncatedGenerator, pi: &[f64]) -> Result<Vec<f64>, SteadyError> {
    let w: Vec<f64> = pi.iter().enumerate().map(|(i, p)| p * gen.event_rate(i)).collect();
    let s: f64 = w.iter().sum();
    if s <= 0.0 {
        return Err(SteadyError::NoEvents);
    }
    Ok(w.into_iter().map(|x| x / s).collect())
}

/// Mean time between events under `π`, `1 / Σ π(z) · event rate(z)`.
pub fn mean_interarrival(gen: &TruncatedGenerator, pi: &[f64]) -> Result<f64, SteadyError> {
    let r: f64 = pi.iter().enumerate().map(|(i, p)| p * gen.event_rate(i)).sum();
    if r <= 0.0 {
        return Err(SteadyError::NoEvents);
    }
    Ok(1.0 / r)
}

/// `Σ dist(z) · η(z)²`, in squared ticks per event.
pub fn volatility_g(dist: &[f64], eta: &[f64]) -> Result<f64, SteadyError> {
    if eta.iter().all(|&e| e == 0.0) {
        return Err(SteadyError::NoMarkers);
    }
    Ok(dist.iter().zip(eta).map(|(p, e)| p * e * e).sum())
}

/// `σ²_k = E[η₀²] + 2 Σ_{j=1..k} E[η₀ η_j]` for every `k` up to `k_max`
/// (entry `k` of the result). Cross terms use `E_z[η_j] = (P^j η)(z)`.
pub fn volatility_m(dist: &[f64], chain: &SparseChain, eta: &[f64], k_max: usize) -> Result<Vec<f64>, SteadyError> {
    let g = volatility_g(dist, eta)?;
    let weighted: Vec<f64> = dist.iter().zip(eta).map(|(p, e)| p * e).collect();
    let mut out = Vec::with_capacity(k_max + 1);
    out.push(g);
    let mut v = eta.to_vec();
    let mut acc = g;
    for _ in 1..=k_max {
        v = chain.apply(&v);
        let cross: f64 = weighted.iter().zip(&v).map(|(w, x)| w * x).sum();
        acc += 2.0 * cross;
        out.push(acc);
    }
    Ok(out)
}

/// Per-event variance rescaled to calendar time.
pub fn volatility_per_second(sigma2: f64, mean_interarrival: f64) -> Result<f64, SteadyError> {
    if !(mean_interarrival > 0.0 && mean_interarrival.is_finite()) {
        return Err(SteadyError::BadParameter("mean inter-arrival must be positive".into()));
    }
    Ok(sigma2 / mean_interarrival)
}

/// `σ̃²_k = E[n₀²] + 2 Σ_{j=1..k} E[n₀ n_j]` for the signed imbalance
/// increment `n` of each event, entry `k` for every `k` up to `k_max`.
/// `dist` is the event-chain law.
pub fn imbalance_volatility(gen: &TruncatedGenerator, dist: &[f64], k_max: usize) -> Vec<f64> {
    let n = gen.len();
    let chain = event_chain(gen);
    let totals: Vec<f64> = (0..n).map(|i| gen.event_rate(i)).collect();
    // Mean next increment from each state.
    let g: Vec<f64> = (0..n)
        .map(|i| {
            if totals[i] == 0.0 {
                0.0
            } else {
                gen.row(i).iter().map(|j| j.inc1).sum::<f64>() / totals[i]
            }
        })
        .collect();
    let second: f64 = (0..n)
        .filter(|&i| totals[i] > 0.0)
        .map(|i| dist[i] * gen.row(i).iter().map(|j| j.inc2).sum::<f64>() / totals[i])
        .sum();
    let mut out = Vec::with_capacity(k_max + 1);
    out.push(second);
    let mut acc = second;
    // v = P^{j-1} g; cross_j = Σ_z dist(z) Σ_z' (inc1(z,z') / total(z)) v(z').
    let mut v = g;
    for _ in 1..=k_max {
        let cross: f64 = (0..n)
            .filter(|&i| totals[i] > 0.0)
            .map(|i| dist[i] * gen.row(i).iter().map(|j| j.inc1 * v[j.to]).sum::<f64>() / totals[i])
            .sum();
        acc += 2.0 * cross;
        out.push(acc);
        v = chain.apply(&v);
    }
    out
}

/// `E_π[S]` in ticks.
pub fn expected_spread(gen: &TruncatedGenerator, pi: &[f64]) -> f64 {
    gen.states().iter().zip(pi).map(|(z, p)| p * z.spread as f64).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::ChainState;

    fn s(i: u32, eta: i32) -> ChainState {
        ChainState {
            q1: i,
            q2: 0,
            spread: 0,
            eta,
        }
    }

    #[test]
    fn embedded_chain_rows() {
        let g = TruncatedGenerator::from_rates(vec![s(0, 0), s(1, 0), s(2, 0)], [(s(0, 0), s(1, 0), 3.0), (s(1, 0), s(0, 0), 1.0)]).unwrap();
        let p = embedded_chain(&g).to_dense();
        assert_eq!(p[0], vec![0.0, 1.0, 0.0]);
        assert_eq!(p[1], vec![1.0, 0.0, 0.0]);
        assert_eq!(p[2], vec![0.0, 0.0, 1.0]);
        // Interior birth-death state.
        let bd = TruncatedGenerator::from_rates(
            vec![s(0, 0), s(1, 0), s(2, 0)],
            [(s(1, 0), s(2, 0), 1.0), (s(1, 0), s(0, 0), 2.0), (s(0, 0), s(1, 0), 1.0), (s(2, 0), s(1, 0), 2.0)],
        )
        .unwrap();
        let p = embedded_chain(&bd);
        assert_eq!(p.to_dense()[1][2], 1.0 / 3.0);
        for i in 0..3 {
            assert!((p.row_sum(i) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn volatility_examples() {
        // Two marker aggregates with 0.01 each.
        assert!((volatility_g(&[0.01, 0.01, 0.98], &[1.0, -1.0, 0.0]).unwrap() - 0.02).abs() < 1e-15);
        assert_eq!(volatility_g(&[0.0, 0.0, 1.0], &[1.0, -1.0, 0.0]).unwrap(), 0.0);
        assert!(matches!(volatility_g(&[1.0], &[0.0]), Err(SteadyError::NoMarkers)));

        // Deterministic alternation of +1 and -1.
        let alt = SparseChain::from_rows(vec![vec![(1, 1.0)], vec![(0, 1.0)]]);
        let m = volatility_m(&[0.5, 0.5], &alt, &[1.0, -1.0], 1).unwrap();
        assert_eq!(m, vec![1.0, -1.0]);

        // Identical rows with zero mean move: cross terms vanish.
        let iid = SparseChain::from_rows(vec![vec![(0, 0.25), (1, 0.25), (2, 0.5)]; 3]);
        let m = volatility_m(&[0.25, 0.25, 0.5], &iid, &[1.0, -1.0, 0.0], 6).unwrap();
        for x in &m {
            assert!((x - 0.5).abs() < 1e-15);
        }

        assert!((volatility_per_second(0.2, 0.5).unwrap() - 0.4).abs() < 1e-15);
        assert_eq!(volatility_per_second(0.0, 0.5).unwrap(), 0.0);
        assert!(volatility_per_second(0.2, 0.0).is_err());
    }

    #[test]
    fn imbalance_moments_by_enumeration() {
        // Two states, jumps with increments +1 and -2, and a self event of +3.
        let a = s(0, 0);
        let b = s(1, 0);
        let g = TruncatedGenerator::from_jumps(
            vec![a, b],
            [(a, b, 2.0, 2.0, 2.0), (b, a, 1.0, -2.0, 4.0), (b, b, 1.0, 3.0, 9.0)],
        )
        .unwrap();
        let pi = crate::steady::solve_stationary(&g, &Default::default()).unwrap().pi;
        let pj = event_stationary(&g, &pi).unwrap();
        // Direct enumeration of E[n₀²] = Σ π_J(z) P(z, z') n².
        let direct = pj[0] * 1.0 + pj[1] * (0.5 * 4.0 + 0.5 * 9.0);
        let v = imbalance_volatility(&g, &pj, 2);
        assert!((v[0] - direct).abs() < 1e-14);
        // Lag-one cross term by enumeration over pairs of events.
        let p = event_chain(&g).to_dense();
        let n = |i: usize, j: usize| match (i, j) {
            (0, 1) => 1.0,
            (1, 0) => -2.0,
            (1, 1) => 3.0,
            _ => 0.0,
        };
        let mut cross = 0.0;
        #[allow(clippy::needless_range_loop)]
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    cross += pj[i] * p[i][j] * n(i, j) * p[j][k] * n(j, k);
                }
            }
        }
        assert!((v[1] - (v[0] + 2.0 * cross)).abs() < 1e-14);
        let zero = TruncatedGenerator::from_rates(vec![a, b], [(a, b, 1.0), (b, a, 1.0)]).unwrap();
        assert_eq!(imbalance_volatility(&zero, &[0.5, 0.5], 3), vec![0.0; 4]);
    }

    #[test]
    fn spread_expectation() {
        let z = |spread| ChainState { q1: 1, q2: 1, spread, eta: 0 };
        let g = TruncatedGenerator::from_rates(vec![z(1), z(2)], [(z(1), z(2), 1.0), (z(2), z(1), 1.0)]).unwrap();
        assert_eq!(expected_spread(&g, &[1.0, 0.0]), 1.0);
        assert_eq!(expected_spread(&g, &[0.5, 0.5]), 1.5);
    }
}
