use nalgebra::{DMatrix, DVector};
use petgraph::algo::kosaraju_scc;
use petgraph::graph::DiGraph;
use serde::{Deserialize, Serialize};

use super::{SteadyError, TruncatedGenerator};
use crate::chain::ChainState;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveOptions {
    /// Required `‖πQ‖∞ / max|Q|`.
    pub tolerance: f64,
    /// Largest recurrent class solved with a dense LU factorisation.
    pub dense_limit: usize,
    /// Sweep budget of the iterative solvers.
    pub max_iterations: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tolerance: 1e-10,
            dense_limit: 800,
            max_iterations: 200_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverMethod {
    DenseLu,
    GaussSeidel,
    PowerIteration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stationary {
    /// Probability of each generator state, zero on transient states.
    pub pi: Vec<f64>,
    pub method: SolverMethod,
    /// `‖πQ‖∞ / max|Q|`.
    pub residual: f64,
    pub transient_states: usize,
}

/// Stationary law of one closed class of a reducible generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSolution {
    pub states: Vec<ChainState>,
    pub pi: Vec<f64>,
}

/// Solves `πQ = 0`, `Σπ = 1`. The generator must have a single closed
/// communicating class; transient states get zero mass.
pub fn solve_stationary(gen: &TruncatedGenerator, opts: &SolveOptions) -> Result<Stationary, SteadyError> {
    if gen.is_empty() {
        return Err(SteadyError::Empty);
    }
    let closed = closed_classes(gen);
    if closed.len() > 1 {
        let components = closed
            .iter()
            .map(|c| {
                let (pi, _, _) = solve_class(gen, c, opts)?;
                Ok(ComponentSolution {
                    states: c.iter().map(|&i| gen.states()[i]).collect(),
                    pi,
                })
            })
            .collect::<Result<Vec<_>, SteadyError>>()?;
        return Err(SteadyError::Reducible { components });
    }
    let class = &closed[0];
    let (local, method, residual) = solve_class(gen, class, opts)?;
    let mut pi = vec![0.0; gen.len()];
    for (&i, p) in class.iter().zip(local) {
        pi[i] = p;
    }
    let transient_states = gen.len() - class.len();
    if transient_states > 0 {
        log::warn!("{transient_states} transient states carry no stationary mass");
    }
    Ok(Stationary {
        pi,
        method,
        residual,
        transient_states,
    })
}

/// Closed communicating classes, each sorted by state index.
fn closed_classes(gen: &TruncatedGenerator) -> Vec<Vec<usize>> {
    let n = gen.len();
    let mut g = DiGraph::<(), ()>::with_capacity(n, 0);
    let nodes: Vec<_> = (0..n).map(|_| g.add_node(())).collect();
    for i in 0..n {
        for j in gen.row(i).iter().filter(|j| j.to != i) {
            g.add_edge(nodes[i], nodes[j.to], ());
        }
    }
    let sccs = kosaraju_scc(&g);
    let mut comp = vec![0; n];
    for (c, scc) in sccs.iter().enumerate() {
        for v in scc {
            comp[v.index()] = c;
        }
    }
    let mut classes: Vec<Vec<usize>> = sccs
        .iter()
        .enumerate()
        .filter(|(c, scc)| {
            scc.iter().all(|v| {
                gen.row(v.index())
                    .iter()
                    .all(|j| comp[j.to] == *c)
            })
        })
        .map(|(_, scc)| {
            let mut s: Vec<usize> = scc.iter().map(|v| v.index()).collect();
            s.sort_unstable();
            s
        })
        .collect();
    classes.sort();
    classes
}

/// Sparse generator restricted to one closed class, stored by column.
struct Local {
    exit: Vec<f64>,
    /// Incoming `(from, rate)` per state.
    incoming: Vec<Vec<(usize, f64)>>,
    scale: f64,
}

impl Local {
    fn new(gen: &TruncatedGenerator, class: &[usize]) -> Self {
        let mut pos = std::collections::HashMap::with_capacity(class.len());
        for (l, &i) in class.iter().enumerate() {
            pos.insert(i, l);
        }
        let mut incoming = vec![Vec::new(); class.len()];
        let mut exit = vec![0.0; class.len()];
        for (l, &i) in class.iter().enumerate() {
            for j in gen.row(i).iter().filter(|j| j.to != i) {
                let t = pos[&j.to];
                incoming[t].push((l, j.rate));
                exit[l] += j.rate;
            }
        }
        let scale = exit.iter().copied().fold(0.0, f64::max);
        Local { exit, incoming, scale }
    }

    fn residual(&self, pi: &[f64]) -> f64 {
        if self.scale == 0.0 {
            return 0.0;
        }
        let r = (0..pi.len())
            .map(|j| {
                let inflow: f64 = self.incoming[j].iter().map(|&(i, q)| pi[i] * q).sum();
                (inflow - pi[j] * self.exit[j]).abs()
            })
            .fold(0.0, f64::max);
        r / self.scale
    }
}

fn normalise(pi: &mut [f64]) {
    for p in pi.iter_mut() {
        if *p < 0.0 {
            *p = 0.0;
        }
    }
    let s: f64 = pi.iter().sum();
    if s > 0.0 {
        pi.iter_mut().for_each(|p| *p /= s);
    }
}

fn solve_class(
    gen: &TruncatedGenerator,
    class: &[usize],
    opts: &SolveOptions,
) -> Result<(Vec<f64>, SolverMethod, f64), SteadyError> {
    let n = class.len();
    let local = Local::new(gen, class);
    if n == 1 || local.scale == 0.0 {
        return Ok((vec![1.0 / n as f64; n], SolverMethod::DenseLu, 0.0));
    }
    let mut method = SolverMethod::GaussSeidel;
    let mut pi = vec![1.0 / n as f64; n];
    if n <= opts.dense_limit {
        if let Some(x) = dense_solve(&local) {
            pi = x;
            method = SolverMethod::DenseLu;
        }
    }
    let mut residual = local.residual(&pi);
    if residual > opts.tolerance {
        residual = gauss_seidel(&local, &mut pi, opts);
    }
    if residual > opts.tolerance {
        method = SolverMethod::PowerIteration;
        residual = power_iteration(&local, &mut pi, opts);
    }
    if residual > opts.tolerance {
        return Err(SteadyError::NoConvergence { residual });
    }
    Ok((pi, method, residual))
}

fn dense_solve(local: &Local) -> Option<Vec<f64>> {
    let n = local.exit.len();
    // Qᵀπ = 0 with the last equation replaced by Σπ = 1.
    let mut a = DMatrix::<f64>::zeros(n, n);
    for (j, inc) in local.incoming.iter().enumerate() {
        for &(i, q) in inc {
            a[(j, i)] += q;
        }
        a[(j, j)] -= local.exit[j];
    }
    for i in 0..n {
        a[(n - 1, i)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(n);
    b[n - 1] = 1.0;
    let x = a.lu().solve(&b)?;
    let mut pi: Vec<f64> = x.iter().copied().collect();
    if pi.iter().any(|p| !p.is_finite()) {
        return None;
    }
    normalise(&mut pi);
    Some(pi)
}

/// Iterates past the requested tolerance: a small residual alone does not
/// bound the error of slowly mixing chains.
fn target(opts: &SolveOptions) -> f64 {
    (opts.tolerance * 1e-4).max(1e-16)
}

fn gauss_seidel(local: &Local, pi: &mut [f64], opts: &SolveOptions) -> f64 {
    let mut residual = local.residual(pi);
    let mut best = residual;
    let mut stalled = 0;
    for sweep in 1..=opts.max_iterations {
        for j in 0..pi.len() {
            let inflow: f64 = local.incoming[j].iter().map(|&(i, q)| pi[i] * q).sum();
            pi[j] = inflow / local.exit[j];
        }
        normalise(pi);
        if sweep % 10 == 0 {
            residual = local.residual(pi);
            if residual <= target(opts) {
                break;
            }
            if residual < 0.99 * best {
                best = residual;
                stalled = 0;
            } else {
                stalled += 1;
                if stalled > 50 && residual <= opts.tolerance {
                    break;
                }
            }
        }
    }
    residual
}

/// `π ← π (I + Q/Λ)` with `Λ` above every exit rate.
fn power_iteration(local: &Local, pi: &mut Vec<f64>, opts: &SolveOptions) -> f64 {
    let lambda = 1.05 * local.scale;
    let mut next = vec![0.0; pi.len()];
    let mut residual = local.residual(pi);
    for it in 1..=opts.max_iterations {
        for j in 0..pi.len() {
            let inflow: f64 = local.incoming[j].iter().map(|&(i, q)| pi[i] * q).sum();
            next[j] = pi[j] + (inflow - pi[j] * local.exit[j]) / lambda;
        }
        std::mem::swap(pi, &mut next);
        normalise(pi);
        if it % 50 == 0 {
            residual = local.residual(pi);
            if residual <= target(opts) {
                break;
            }
        }
    }
    residual
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn s(i: u32) -> ChainState {
        ChainState {
            q1: i,
            q2: 0,
            spread: 0,
            eta: 0,
        }
    }

    fn gen(n: u32, rates: &[(u32, u32, f64)]) -> TruncatedGenerator {
        TruncatedGenerator::from_rates((0..n).map(s).collect(), rates.iter().map(|&(a, b, r)| (s(a), s(b), r))).unwrap()
    }

    #[test]
    fn small_symmetric_chains() {
        let two = solve_stationary(&gen(2, &[(0, 1, 1.0), (1, 0, 1.0)]), &SolveOptions::default()).unwrap();
        assert_eq!(two.pi, vec![0.5, 0.5]);
        let cyc = solve_stationary(&gen(3, &[(0, 1, 2.0), (1, 2, 2.0), (2, 0, 2.0)]), &SolveOptions::default()).unwrap();
        for p in cyc.pi {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn transient_states_get_no_mass() {
        let g = gen(3, &[(0, 1, 1.0), (1, 2, 1.0), (2, 1, 3.0)]);
        let st = solve_stationary(&g, &SolveOptions::default()).unwrap();
        assert_eq!(st.transient_states, 1);
        assert_eq!(st.pi[0], 0.0);
        assert!((st.pi[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn reducible_reports_components() {
        let g = gen(4, &[(0, 1, 1.0), (1, 0, 1.0), (2, 3, 1.0), (3, 2, 2.0)]);
        match solve_stationary(&g, &SolveOptions::default()) {
            Err(SteadyError::Reducible { components }) => {
                assert_eq!(components.len(), 2);
                assert!((components[1].pi[0] - 2.0 / 3.0).abs() < 1e-15);
            }
            other => panic!("{other:?}"),
        }
        // A zero generator is one absorbing class per state.
        let z = gen(2, &[]);
        assert!(matches!(solve_stationary(&z, &SolveOptions::default()), Err(SteadyError::Reducible { .. })));
    }

    #[test]
    fn iterative_solvers_agree_with_lu() {
        // Birth-death ring with 300 states forces the sparse path.
        let n = 300u32;
        let mut rates = Vec::new();
        for i in 0..n {
            rates.push((i, (i + 1) % n, 1.0 + (i % 7) as f64 * 0.1));
            rates.push((i, (i + n - 1) % n, 0.5 + (i % 5) as f64 * 0.2));
        }
        let g = gen(n, &rates);
        let lu = solve_stationary(&g, &SolveOptions::default()).unwrap();
        assert_eq!(lu.method, SolverMethod::DenseLu);
        let gs = solve_stationary(&g, &SolveOptions { dense_limit: 10, ..Default::default() }).unwrap();
        assert_eq!(gs.method, SolverMethod::GaussSeidel);
        let local = Local::new(&g, &(0..n as usize).collect::<Vec<_>>());
        let mut pw = vec![1.0 / n as f64; n as usize];
        let r = power_iteration(&local, &mut pw, &SolveOptions { max_iterations: 2_000_000, ..Default::default() });
        assert!(r <= 1e-10);
        #[allow(clippy::needless_range_loop)]
        for i in 0..n as usize {
            assert!((lu.pi[i] - gs.pi[i]).abs() < 1e-9, "{} {} {} {}", lu.pi[i], gs.pi[i], pw[i], gs.residual);
            assert!((lu.pi[i] - pw[i]).abs() < 1e-9);
        }
    }

    /// Null space of Qᵀ from the SVD as an independent oracle.
    fn null_space_oracle(q: &[Vec<f64>]) -> Vec<f64> {
        let n = q.len();
        let qt = DMatrix::from_fn(n, n, |i, j| q[j][i]);
        let svd = qt.svd(true, true);
        let (k, _) = svd
            .singular_values
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
        let v = svd.v_t.unwrap().row(k).transpose();
        let s: f64 = v.iter().sum();
        v.iter().map(|x| x / s).collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn matches_null_space_oracle(
            n in 2u32..40,
            seed_rates in proptest::collection::vec(0.05f64..5.0, 160),
            extra in proptest::collection::vec((0u32..40, 0u32..40, 0.0f64..3.0), 0..80),
        ) {
            // A ring keeps the chain irreducible; random chords on top.
            let mut rates = Vec::new();
            for i in 0..n {
                rates.push((i, (i + 1) % n, seed_rates[i as usize]));
                rates.push((i, (i + n - 1) % n, seed_rates[80 + i as usize]));
            }
            for (a, b, r) in extra {
                if a % n != b % n {
                    rates.push((a % n, b % n, r));
                }
            }
            let g = gen(n, &rates);
            let st = solve_stationary(&g, &SolveOptions::default()).unwrap();
            let oracle = null_space_oracle(&g.to_dense());
            for (a, b) in st.pi.iter().zip(&oracle) {
                prop_assert!((a - b).abs() < 1e-9, "{a} vs {b}");
            }
            prop_assert!((st.pi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(st.residual <= 1e-10);
        }
    }
}
