//! Discounted optimal control of the attacker MDP and long-run analysis of
//! the chain induced by the optimal policy.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::mdp_model::{Action, Mdp, State, ROW_TOLERANCE};
use crate::surface::ZoneId;

/// Relative slack used when comparing action values for ties.
const TIE_EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum SolverError {
    #[error(
        "value iteration did not converge after {iterations} iterations (residual {residual:e})"
    )]
    NotConverged { iterations: usize, residual: f64 },
    #[error("stationary distribution did not converge after {iterations} iterations (residual {residual:e})")]
    StationaryNotConverged { iterations: usize, residual: f64 },
    #[error("invalid solver input: {0}")]
    Input(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction {
    pub values: Vec<f64>,
}

impl ValueFunction {
    pub fn get(&self, state: usize) -> f64 {
        self.values[state]
    }
}

#[derive(Debug, Clone)]
pub struct ValueIteration {
    pub values: ValueFunction,
    pub iterations: usize,
    /// Sup-norm change of each sweep, in order.
    pub residuals: Vec<f64>,
}

impl ValueIteration {
    /// Checks `res[k+1] <= discount * res[k] + slack` for every sweep.
    pub fn contracts(&self, discount: f64, slack: f64) -> bool {
        self.residuals
            .windows(2)
            .all(|w| w[1] <= discount * w[0] + slack)
    }
}

/// One-step lookahead value of every choice at `state`.
pub fn action_values(mdp: &Mdp, values: &[f64], state: usize) -> Vec<f64> {
    let d = mdp.discount();
    mdp.choices(state)
        .iter()
        .map(|c| {
            c.outcomes
                .iter()
                .map(|o| o.prob * (o.reward + d * values[o.next]))
                .sum()
        })
        .collect()
}

/// Synchronous value iteration from zero, stopped once a sweep changes no
/// value by more than `tol`.
pub fn value_iteration(
    mdp: &Mdp,
    tol: f64,
    max_iter: usize,
) -> Result<ValueIteration, SolverError> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(SolverError::Input(format!(
            "tol must be positive, got {tol}"
        )));
    }
    let n = mdp.len();
    let mut v = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut residuals = Vec::new();
    for it in 1..=max_iter {
        let mut res: f64 = 0.0;
        for (s, slot) in next.iter_mut().enumerate() {
            let best = action_values(mdp, &v, s)
                .into_iter()
                .fold(f64::NEG_INFINITY, f64::max);
            res = res.max((best - v[s]).abs());
            *slot = best;
        }
        std::mem::swap(&mut v, &mut next);
        residuals.push(res);
        if res <= tol {
            return Ok(ValueIteration {
                values: ValueFunction { values: v },
                iterations: it,
                residuals,
            });
        }
    }
    Err(SolverError::NotConverged {
        iterations: max_iter,
        residual: residuals.last().copied().unwrap_or(f64::INFINITY),
    })
}

/// Deterministic stationary policy indexed like the MDP's states.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Policy {
    actions: Vec<Action>,
}

impl Policy {
    pub fn new(mdp: &Mdp, actions: Vec<Action>) -> Result<Self, SolverError> {
        if actions.len() != mdp.len() {
            return Err(SolverError::Input(format!(
                "policy has {} entries for {} states",
                actions.len(),
                mdp.len()
            )));
        }
        for (s, a) in actions.iter().enumerate() {
            if mdp.choice(s, a).is_none() {
                return Err(SolverError::Input(format!(
                    "action {a} not available at {}",
                    mdp.states()[s]
                )));
            }
        }
        Ok(Policy { actions })
    }

    pub fn action(&self, state: usize) -> Action {
        self.actions[state]
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }
}

/// Greedy policy. Near-ties resolve to the earliest action in
/// `SH < MH(t) < MS(t)` order, targets ascending.
pub fn extract_policy(mdp: &Mdp, values: &ValueFunction) -> Policy {
    let actions = (0..mdp.len())
        .map(|s| {
            let q = action_values(mdp, &values.values, s);
            let best = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let slack = TIE_EPS * (1.0 + best.abs());
            let pick = q.iter().position(|&x| x >= best - slack).unwrap_or(0);
            mdp.choices(s)[pick].action
        })
        .collect();
    Policy { actions }
}

/// Sparse row-stochastic matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    rows: Vec<Vec<(usize, f64)>>,
}

impl Chain {
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Result<Self, SolverError> {
        let n = rows.len();
        for (i, r) in rows.iter().enumerate() {
            let sum: f64 = r.iter().map(|e| e.1).sum();
            if r.iter().any(|&(j, p)| j >= n || !(0.0..=1.0).contains(&p))
                || (sum - 1.0).abs() > ROW_TOLERANCE
            {
                return Err(SolverError::Input(format!("row {i} is not a distribution")));
            }
        }
        Ok(Chain { rows })
    }

    pub fn from_dense(matrix: &[Vec<f64>]) -> Result<Self, SolverError> {
        Self::from_rows(
            matrix
                .iter()
                .map(|r| {
                    r.iter()
                        .copied()
                        .enumerate()
                        .filter(|e| e.1 > 0.0)
                        .collect()
                })
                .collect(),
        )
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

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        self.rows
            .iter()
            .map(|r| {
                let mut d = vec![0.0; n];
                for &(j, p) in r {
                    d[j] += p;
                }
                d
            })
            .collect()
    }

    /// `x P`
    pub fn step(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        for (i, r) in self.rows.iter().enumerate() {
            if x[i] != 0.0 {
                for &(j, p) in r {
                    out[j] += x[i] * p;
                }
            }
        }
        out
    }

    /// `|| x P - x ||_1`
    pub fn fixed_point_residual(&self, x: &[f64]) -> f64 {
        self.step(x).iter().zip(x).map(|(a, b)| (a - b).abs()).sum()
    }
}

pub fn induced_chain(mdp: &Mdp, policy: &Policy) -> Result<Chain, SolverError> {
    if policy.actions.len() != mdp.len() {
        return Err(SolverError::Input("policy does not match the MDP".into()));
    }
    let rows = (0..mdp.len())
        .map(|s| {
            let choice = mdp.choice(s, &policy.action(s)).ok_or_else(|| {
                SolverError::Input(format!("policy action unavailable at {}", mdp.states()[s]))
            })?;
            Ok(choice.outcomes.iter().map(|o| (o.next, o.prob)).collect())
        })
        .collect::<Result<Vec<_>, SolverError>>()?;
    Chain::from_rows(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationaryDistribution {
    pub pi: Vec<f64>,
    /// States of the closed classes reachable from the start, ascending.
    pub recurrent_class: Vec<usize>,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct StationaryOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for StationaryOptions {
    fn default() -> Self {
        StationaryOptions {
            tol: 1e-12,
            max_iter: 1_000_000,
        }
    }
}

fn reachable(chain: &Chain, start: usize) -> Vec<bool> {
    let mut seen = vec![false; chain.len()];
    let mut stack = vec![start];
    seen[start] = true;
    while let Some(i) = stack.pop() {
        for &(j, p) in chain.row(i) {
            if p > 0.0 && !seen[j] {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    seen
}

/// Long-run occupancy of the chain started at `start`.
///
/// Closed communicating classes reachable from `start` are found first. Each
/// class is solved directly and refined on the lazy chain `(I + P) / 2`,
/// which has the same stationary vector and is aperiodic. When several
/// classes are reachable, they are mixed by their absorption probabilities.
pub fn stationary_distribution(
    chain: &Chain,
    start: usize,
    opts: StationaryOptions,
) -> Result<StationaryDistribution, SolverError> {
    let n = chain.len();
    if start >= n {
        return Err(SolverError::Input(format!("start {start} out of range")));
    }
    let seen = reachable(chain, start);
    let mut graph = DiGraph::<usize, ()>::new();
    let nodes: Vec<_> = (0..n).map(|i| graph.add_node(i)).collect();
    for i in (0..n).filter(|&i| seen[i]) {
        for &(j, p) in chain.row(i) {
            if p > 0.0 {
                graph.add_edge(nodes[i], nodes[j], ());
            }
        }
    }
    let mut component = vec![usize::MAX; n];
    let sccs: Vec<Vec<usize>> = tarjan_scc(&graph)
        .into_iter()
        .map(|c| {
            c.into_iter()
                .map(|ix| graph[ix])
                .filter(|&i| seen[i])
                .collect::<Vec<_>>()
        })
        .filter(|c| !c.is_empty())
        .collect();
    for (ci, c) in sccs.iter().enumerate() {
        for &i in c {
            component[i] = ci;
        }
    }
    let mut closed: Vec<Vec<usize>> = sccs
        .iter()
        .enumerate()
        .filter(|(ci, c)| {
            c.iter().all(|&i| {
                chain
                    .row(i)
                    .iter()
                    .all(|&(j, p)| p == 0.0 || component[j] == *ci)
            })
        })
        .map(|(_, c)| {
            let mut c = c.clone();
            c.sort_unstable();
            c
        })
        .collect();
    closed.sort();

    let weights = if closed.len() == 1 {
        vec![1.0]
    } else {
        absorption_weights(chain, start, &closed)?
    };

    let mut pi = vec![0.0; n];
    for (class, w) in closed.iter().zip(&weights) {
        if *w == 0.0 {
            continue;
        }
        let local = class_stationary(chain, class, opts)?;
        for (&i, p) in class.iter().zip(local) {
            pi[i] += w * p;
        }
    }
    let total: f64 = pi.iter().sum();
    for p in &mut pi {
        *p /= total;
    }
    let mut recurrent_class: Vec<usize> = closed.into_iter().flatten().collect();
    recurrent_class.sort_unstable();
    let residual = chain.fixed_point_residual(&pi);
    Ok(StationaryDistribution {
        pi,
        recurrent_class,
        residual,
    })
}

fn absorption_weights(
    chain: &Chain,
    start: usize,
    closed: &[Vec<usize>],
) -> Result<Vec<f64>, SolverError> {
    let n = chain.len();
    let mut owner = vec![usize::MAX; n];
    for (ci, c) in closed.iter().enumerate() {
        for &i in c {
            owner[i] = ci;
        }
    }
    if owner[start] != usize::MAX {
        let mut w = vec![0.0; closed.len()];
        w[owner[start]] = 1.0;
        return Ok(w);
    }
    // Expected visits to each transient state: x^T (I - Q) = e_start^T.
    let seen = reachable(chain, start);
    let transient: Vec<usize> = (0..n)
        .filter(|&i| seen[i] && owner[i] == usize::MAX)
        .collect();
    let pos: BTreeMap<usize, usize> = transient.iter().enumerate().map(|(k, &i)| (i, k)).collect();
    let t = transient.len();
    let mut a = DMatrix::<f64>::identity(t, t);
    for (r, &i) in transient.iter().enumerate() {
        for &(j, p) in chain.row(i) {
            if let Some(&c) = pos.get(&j) {
                a[(c, r)] -= p;
            }
        }
    }
    let mut rhs = DVector::<f64>::zeros(t);
    rhs[pos[&start]] = 1.0;
    let visits = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| SolverError::Input("transient block is singular".into()))?;
    let mut w = vec![0.0; closed.len()];
    for (r, &i) in transient.iter().enumerate() {
        for &(j, p) in chain.row(i) {
            if owner[j] != usize::MAX {
                w[owner[j]] += visits[r] * p;
            }
        }
    }
    let total: f64 = w.iter().sum();
    Ok(w.into_iter().map(|x| (x / total).max(0.0)).collect())
}

/// Solves `pi^T (P - I) = 0` with one balance equation swapped for the
/// normalization, then polishes with lazy power steps until the residual
/// reaches `opts.tol`.
fn class_stationary(
    chain: &Chain,
    class: &[usize],
    opts: StationaryOptions,
) -> Result<Vec<f64>, SolverError> {
    let local: BTreeMap<usize, usize> = class.iter().enumerate().map(|(k, &i)| (i, k)).collect();
    let rows: Vec<Vec<(usize, f64)>> = class
        .iter()
        .map(|&i| {
            chain
                .row(i)
                .iter()
                .filter(|e| e.1 > 0.0)
                .map(|&(j, p)| (local[&j], p))
                .collect()
        })
        .collect();
    let sub = Chain { rows };
    let m = class.len();
    let mut a = DMatrix::<f64>::zeros(m, m);
    for (i, row) in sub.rows.iter().enumerate() {
        for &(j, p) in row {
            a[(j, i)] += p;
        }
        a[(i, i)] -= 1.0;
    }
    a.row_mut(m - 1).fill(1.0);
    let mut rhs = DVector::<f64>::zeros(m);
    rhs[m - 1] = 1.0;
    let mut x: Vec<f64> = match a.lu().solve(&rhs) {
        Some(v) => v.iter().map(|&p| p.max(0.0)).collect(),
        None => vec![1.0 / m as f64; m],
    };
    let total: f64 = x.iter().sum();
    for xi in &mut x {
        *xi /= total;
    }
    let mut residual = sub.fixed_point_residual(&x);
    for _ in 0..opts.max_iter {
        if residual <= opts.tol {
            return Ok(x);
        }
        let stepped = sub.step(&x);
        for (xi, si) in x.iter_mut().zip(&stepped) {
            *xi = 0.5 * (*xi + si);
        }
        let total: f64 = x.iter().sum();
        for xi in &mut x {
            *xi /= total;
        }
        residual = sub.fixed_point_residual(&x);
    }
    Err(SolverError::StationaryNotConverged {
        iterations: opts.max_iter,
        residual,
    })
}

/// Stationary mass per zone, normalized to sum to one. Every location that
/// appears in `states` is present, possibly with zero mass.
pub fn sojourn_by_location(
    dist: &StationaryDistribution,
    states: &[State],
) -> BTreeMap<ZoneId, f64> {
    let mut out: BTreeMap<ZoneId, f64> = BTreeMap::new();
    for (s, p) in states.iter().zip(&dist.pi) {
        *out.entry(s.location).or_insert(0.0) += p;
    }
    let total: f64 = out.values().sum();
    if total > 0.0 {
        for v in out.values_mut() {
            *v /= total;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZoneSummary {
    pub zone: ZoneId,
    /// Chosen actions with their stationary mass, most frequent first.
    /// Forced relocations from detected states are not counted.
    pub ranked: Vec<(Action, f64)>,
}

impl ZoneSummary {
    pub fn dominant(&self) -> Option<(Action, f64)> {
        self.ranked.first().copied()
    }

    pub fn secondary(&self) -> Option<(Action, f64)> {
        self.ranked.get(1).copied()
    }

    pub fn is_unvisited(&self) -> bool {
        self.ranked.is_empty()
    }
}

/// Ranks each zone's chosen actions by the stationary mass of the states
/// choosing them.
pub fn policy_summary(
    policy: &Policy,
    dist: &StationaryDistribution,
    states: &[State],
) -> Vec<ZoneSummary> {
    let mut mass: BTreeMap<ZoneId, BTreeMap<Action, f64>> = BTreeMap::new();
    for (i, s) in states.iter().enumerate() {
        let per_zone = mass.entry(s.location).or_default();
        let a = policy.action(i);
        if a == Action::Relocate || dist.pi[i] <= 0.0 {
            continue;
        }
        *per_zone.entry(a).or_insert(0.0) += dist.pi[i];
    }
    mass.into_iter()
        .map(|(zone, acts)| {
            let mut ranked: Vec<(Action, f64)> = acts.into_iter().collect();
            // Stable sort keeps action order among equal masses.
            ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
            ranked.truncate(2);
            ZoneSummary { zone, ranked }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RolloutEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub n_trials: usize,
}

impl RolloutEstimate {
    /// Whether `value` lies within `sigmas` standard errors of the mean.
    pub fn covers(&self, value: f64, sigmas: f64) -> bool {
        (value - self.mean).abs() <= sigmas * self.std_err
    }
}

pub(crate) fn sample_index<R: Rng>(rng: &mut R, probs: impl Iterator<Item = f64>) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (k, p) in probs.enumerate() {
        acc += p;
        last = k;
        if u < acc {
            return k;
        }
    }
    last
}

/// Monte-Carlo estimate of the discounted return of `policy` from `start`.
/// Trial `i` draws from its own stream seeded with `seed + i`.
pub fn rollout_value_check(
    mdp: &Mdp,
    policy: &Policy,
    start: usize,
    horizon: usize,
    n_trials: usize,
    seed: u64,
) -> Result<RolloutEstimate, SolverError> {
    if n_trials == 0 || start >= mdp.len() {
        return Err(SolverError::Input(
            "need n_trials >= 1 and a valid start".into(),
        ));
    }
    let choices: Vec<_> = (0..mdp.len())
        .map(|s| {
            mdp.choice(s, &policy.action(s))
                .ok_or_else(|| SolverError::Input("policy does not match the MDP".into()))
        })
        .collect::<Result<_, _>>()?;
    let d = mdp.discount();
    let returns: Vec<f64> = (0..n_trials as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i));
            let mut s = start;
            let mut total = 0.0;
            let mut weight = 1.0;
            for _ in 0..horizon {
                let c = choices[s];
                let k = sample_index(&mut rng, c.outcomes.iter().map(|o| o.prob));
                let o = &c.outcomes[k];
                total += weight * o.reward;
                weight *= d;
                s = o.next;
            }
            total
        })
        .collect();
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = if returns.len() > 1 {
        returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok(RolloutEstimate {
        mean,
        std_err: (var / n).sqrt(),
        n_trials,
    })
}
