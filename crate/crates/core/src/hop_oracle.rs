//! Monte-Carlo oracles for the channel-search model.
//!
//! The kernel oracle replays one slot of the attacker's activity as a chain
//! of elementary coin flips (radar on during sensing, victim found, radar
//! interrupts one of the `q` mini-slots, IDS raises an alarm) so that the
//! closed-form rows of [`crate::mdp_model::transition_row`] can be checked
//! against an independent construction. The sweep and drop-chain oracles
//! simulate channel permutations directly.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::mdp_model::Mdp;
use crate::mdp_model::{
    available_actions, transition_row, Action, ModelError, ModelParams, State, StateKind,
};
use crate::mdp_solver::Policy;
use crate::surface::{Surface, SurfaceError};

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("invalid oracle parameters: {0}")]
    Params(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Surface(#[from] SurfaceError),
}

fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ trial)
}

/// Settings for trajectory sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialConfig {
    pub n_trials: usize,
    pub horizon: usize,
    pub seed: u64,
    pub start: State,
}

/// Transition counts keyed by `(state, action)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EmpiricalKernel {
    pub counts: BTreeMap<(State, Action), BTreeMap<State, u64>>,
    pub totals: BTreeMap<(State, Action), u64>,
}

impl EmpiricalKernel {
    pub fn record(&mut self, from: State, action: Action, to: State) {
        *self
            .counts
            .entry((from, action))
            .or_default()
            .entry(to)
            .or_insert(0) += 1;
        *self.totals.entry((from, action)).or_insert(0) += 1;
    }

    /// Relative frequencies for one `(state, action)` pair.
    pub fn distribution(&self, from: &State, action: &Action) -> Vec<(State, f64)> {
        let key = (*from, *action);
        let Some(total) = self.totals.get(&key).copied().filter(|&t| t > 0) else {
            return Vec::new();
        };
        self.counts[&key]
            .iter()
            .map(|(s, &c)| (*s, c as f64 / total as f64))
            .collect()
    }

    /// Largest gap to the analytic row, scaled by the binomial standard
    /// deviation of each entry. Entries the model forbids but that were
    /// observed count as an infinite gap.
    pub fn max_sigma_gap(
        &self,
        params: &ModelParams,
        surface: &Surface,
    ) -> Result<f64, OracleError> {
        let mut worst: f64 = 0.0;
        for ((from, action), &n) in &self.totals {
            let analytic: BTreeMap<State, f64> = transition_row(from, action, params, surface)?
                .into_iter()
                .collect();
            let observed = &self.counts[&(*from, *action)];
            let keys: BTreeSet<State> = analytic.keys().chain(observed.keys()).copied().collect();
            for k in keys {
                let p = analytic.get(&k).copied().unwrap_or(0.0);
                let f = observed.get(&k).copied().unwrap_or(0) as f64 / n as f64;
                let sd = (p * (1.0 - p) / n as f64).sqrt();
                let gap = (f - p).abs();
                if gap == 0.0 {
                    continue;
                }
                worst = worst.max(if sd > 0.0 { gap / sd } else { f64::INFINITY });
            }
        }
        Ok(worst)
    }
}

/// One slot of attacker activity simulated from elementary events.
pub fn sample_step<R: Rng>(
    params: &ModelParams,
    surface: &Surface,
    state: &State,
    action: &Action,
    rng: &mut R,
) -> Result<State, OracleError> {
    if !available_actions(state, surface)?.contains(action) {
        return Err(ModelError::Unavailable {
            state: *state,
            action: *action,
        }
        .into());
    }
    let big_m = f64::from(params.channels);
    let m = f64::from(params.sensed_per_slot);
    let sweep_slots = params.channels.div_ceil(params.sensed_per_slot);
    let g = params.drop_threshold;
    let rho = params.alpha / (params.alpha + params.beta);
    let alarm = |j: u32| {
        let n = f64::from(j.saturating_sub(1));
        n / (n + params.ids_c)
    };

    struct Slot {
        location: u32,
        find: f64,
        miss: StateKind,
        hit: StateKind,
        alarm: f64,
    }

    let slot = match (*action, state.kind) {
        (Action::Relocate, _) => {
            let nbrs = surface.neighbors(state.location)?;
            let to = nbrs.choose(rng).copied().unwrap_or(state.location);
            return Ok(State::new(to, StateKind::Hop(1)));
        }
        (Action::MoveHop(t) | Action::MoveStay(t), _) => Slot {
            location: t,
            find: m / big_m,
            miss: StateKind::Hop(1),
            hit: StateKind::Attack(1),
            alarm: 0.0,
        },
        (Action::StayHop, StateKind::Busy) => Slot {
            location: state.location,
            find: m / big_m,
            miss: StateKind::Hop(1),
            hit: StateKind::Attack(1),
            alarm: 0.0,
        },
        (Action::StayHop, StateKind::Hop(i)) => Slot {
            location: state.location,
            // The last slot of a period is the only one with a certain find.
            find: if i + 1 < sweep_slots { m / big_m } else { 1.0 },
            miss: StateKind::Hop(i + 1),
            hit: StateKind::Attack(1),
            alarm: 0.0,
        },
        (Action::StayHop, StateKind::Attack(j)) if j < g => Slot {
            location: state.location,
            find: m / (big_m - f64::from(j)),
            miss: StateKind::Hop(1),
            hit: StateKind::Attack(j + 1),
            alarm: alarm(j),
        },
        (Action::StayHop, StateKind::Attack(j)) => Slot {
            location: state.location,
            find: m / big_m,
            miss: StateKind::Hop(1),
            hit: StateKind::Attack(1),
            alarm: alarm(j),
        },
        _ => {
            return Err(ModelError::Unavailable {
                state: *state,
                action: *action,
            }
            .into())
        }
    };

    let at = |k| State::new(slot.location, k);
    if rng.gen::<f64>() < rho {
        return Ok(at(StateKind::Busy));
    }
    if rng.gen::<f64>() >= slot.find {
        return Ok(at(slot.miss));
    }
    for _ in 0..params.mini_slots {
        if rng.gen::<f64>() < params.alpha {
            return Ok(at(StateKind::Busy));
        }
    }
    if rng.gen::<f64>() < slot.alarm {
        return Ok(at(StateKind::Detected));
    }
    Ok(at(slot.hit))
}

/// Empirical next-state frequencies for a single `(state, action)` pair,
/// trial `i` seeded with `seed ^ i`.
pub fn empirical_transition_frequencies(
    params: &ModelParams,
    surface: &Surface,
    state: &State,
    action: &Action,
    n_trials: usize,
    seed: u64,
) -> Result<EmpiricalKernel, OracleError> {
    params.validate()?;
    let outcomes: Vec<State> = (0..n_trials as u64)
        .into_par_iter()
        .map(|i| sample_step(params, surface, state, action, &mut trial_rng(seed, i)))
        .collect::<Result<_, _>>()?;
    let mut kernel = EmpiricalKernel::default();
    for to in outcomes {
        kernel.record(*state, *action, to);
    }
    Ok(kernel)
}

/// Runs `n_trials` trajectories of `horizon` slots under `policy`, counting
/// every transition.
pub fn simulate_trajectories(
    params: &ModelParams,
    surface: &Surface,
    mdp: &Mdp,
    policy: &Policy,
    cfg: &TrialConfig,
) -> Result<EmpiricalKernel, OracleError> {
    if cfg.n_trials == 0 || cfg.horizon == 0 {
        return Err(OracleError::Params(
            "need n_trials >= 1 and horizon >= 1".into(),
        ));
    }
    let pick = |s: &State| -> Result<Action, OracleError> {
        let idx = mdp.index_of(s).ok_or(ModelError::UnknownState(*s))?;
        Ok(policy.action(idx))
    };
    pick(&cfg.start)?;
    let paths: Vec<Vec<(State, Action, State)>> = (0..cfg.n_trials as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_rng(cfg.seed, i);
            let mut s = cfg.start;
            let mut path = Vec::with_capacity(cfg.horizon);
            for _ in 0..cfg.horizon {
                let a = pick(&s)?;
                let next = sample_step(params, surface, &s, &a, &mut rng)?;
                path.push((s, a, next));
                s = next;
            }
            Ok(path)
        })
        .collect::<Result<_, OracleError>>()?;
    let mut kernel = EmpiricalKernel::default();
    for (from, a, to) in paths.into_iter().flatten() {
        kernel.record(from, a, to);
    }
    Ok(kernel)
}

/// Histogram of the sweep slot in which the victim's channel is visited.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepHistogram {
    /// `counts[s - 1]` is the number of trials detected in slot `s`.
    pub counts: Vec<u64>,
}

impl SweepHistogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        let n = self.total() as f64;
        self.counts.iter().map(|&c| c as f64 / n).collect()
    }

    pub fn mean_slot(&self) -> f64 {
        let n = self.total() as f64;
        self.counts
            .iter()
            .enumerate()
            .map(|(i, &c)| (i + 1) as f64 * c as f64)
            .sum::<f64>()
            / n
    }
}

fn check_sweep(channels: u32, sensed: u32) -> Result<(), OracleError> {
    if sensed < 1 || sensed > channels {
        return Err(OracleError::Params(format!(
            "need 1 <= m <= M, got m={sensed}, M={channels}"
        )));
    }
    Ok(())
}

/// Random hopping sequence over `channels`, `sensed` channels per slot,
/// victim on a uniform channel.
pub fn simulate_physical_sweep(
    channels: u32,
    sensed: u32,
    n_trials: usize,
    seed: u64,
) -> Result<SweepHistogram, OracleError> {
    check_sweep(channels, sensed)?;
    let slots = channels.div_ceil(sensed) as usize;
    let found: Vec<usize> = (0..n_trials as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_rng(seed, i);
            let mut order: Vec<u32> = (0..channels).collect();
            order.shuffle(&mut rng);
            let victim = rng.gen_range(0..channels);
            let pos = order
                .iter()
                .position(|&c| c == victim)
                .expect("victim channel listed");
            pos / sensed as usize
        })
        .collect();
    let mut counts = vec![0u64; slots];
    for s in found {
        counts[s] += 1;
    }
    Ok(SweepHistogram { counts })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DropEstimate {
    pub drops: u64,
    pub n_trials: u64,
    /// Product of per-attack catch probabilities.
    pub closed_form: f64,
}

impl DropEstimate {
    pub fn probability(&self) -> f64 {
        self.drops as f64 / self.n_trials as f64
    }

    /// Binomial standard error at the closed-form probability.
    pub fn sigma(&self) -> f64 {
        let p = self.closed_form;
        (p * (1.0 - p) / self.n_trials as f64).sqrt()
    }
}

/// `prod_{j=1}^{G-1} m / (M - j)`
pub fn drop_closed_form(channels: u32, sensed: u32, drop_threshold: u32) -> f64 {
    (1..drop_threshold)
        .map(|j| f64::from(sensed) / f64::from(channels - j))
        .product()
}

/// Packet-drop probability given a first successful attack, radar disabled.
///
/// After each attack the victim hops to a uniformly chosen channel it has not
/// been attacked on; the attacker shuffles the same eligible set and must hit
/// the victim in the very next slot.
pub fn simulate_drop_chain(
    channels: u32,
    sensed: u32,
    drop_threshold: u32,
    n_trials: usize,
    seed: u64,
) -> Result<DropEstimate, OracleError> {
    if drop_threshold < 1
        || drop_threshold >= channels
        || sensed < 1
        || sensed > channels - drop_threshold
    {
        return Err(OracleError::Params(format!(
            "need 1 <= G < M and 1 <= m <= M - G, got M={channels}, m={sensed}, G={drop_threshold}"
        )));
    }
    let dropped: u64 = (0..n_trials as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_rng(seed, i);
            let mut eligible: Vec<u32> = (0..channels).collect();
            let mut victim = rng.gen_range(0..channels);
            for _ in 1..drop_threshold {
                eligible.retain(|&c| c != victim);
                victim = *eligible.choose(&mut rng).expect("eligible channels remain");
                let mut sequence = eligible.clone();
                sequence.shuffle(&mut rng);
                if !sequence[..sensed as usize].contains(&victim) {
                    return 0;
                }
            }
            1
        })
        .sum();
    Ok(DropEstimate {
        drops: dropped,
        n_trials: n_trials as u64,
        closed_form: drop_closed_form(channels, sensed, drop_threshold),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapRow {
    pub slot: u32,
    /// First-detection probability under the per-slot `m/M` model.
    pub analytic: f64,
    /// Exact first-detection probability of the physical sweep.
    pub physical: f64,
    pub physical_empirical: f64,
    /// Conditional detection probability given no earlier detection.
    pub analytic_hazard: f64,
    pub physical_hazard: f64,
}

/// Per-slot comparison of the analytic hop model with the physical sweep
/// over one period.
pub fn kernel_gap_report(
    channels: u32,
    sensed: u32,
    n_trials: usize,
    seed: u64,
) -> Result<Vec<GapRow>, OracleError> {
    check_sweep(channels, sensed)?;
    let hist = simulate_physical_sweep(channels, sensed, n_trials, seed)?;
    let empirical = hist.probabilities();
    let slots = channels.div_ceil(sensed);
    let f = f64::from(sensed) / f64::from(channels);
    let mut survive = 1.0;
    let mut rows = Vec::with_capacity(slots as usize);
    for s in 1..=slots {
        let analytic_hazard = if s < slots { f } else { 1.0 };
        let analytic = survive * analytic_hazard;
        survive -= analytic;
        let before = (s - 1) * sensed;
        let here = sensed.min(channels - before);
        rows.push(GapRow {
            slot: s,
            analytic,
            physical: f64::from(here) / f64::from(channels),
            physical_empirical: empirical[(s - 1) as usize],
            analytic_hazard,
            physical_hazard: f64::from(here) / f64::from(channels - before),
        });
    }
    Ok(rows)
}
