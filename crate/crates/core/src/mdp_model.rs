//! The attacker's decision process over (location, channel-search status).
//!
//! Each zone contributes a busy state `P`, hop states `H_1..H_K`, attack
//! states `A_1..A_G` and a detected state `D`. Actions combine location and
//! frequency mobility: stay and hop (`sh`), move and hop (`mh`), move and
//! stay on the current channels (`ms`). A detected attacker is relocated to
//! a uniformly random neighbor.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::surface::{Surface, SurfaceError, ZoneId};

/// Row sums must match 1 within this bound.
pub const ROW_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("index {index} outside 1..={max} for {what}")]
    IndexOutOfRange {
        what: &'static str,
        index: u32,
        max: u32,
    },
    #[error("detection streak must be >= 1 and c > 0 (got j={j}, c={c})")]
    Detection { j: u32, c: f64 },
    #[error("state {0} is not part of the model")]
    UnknownState(State),
    #[error("action {action} is not available at {state}")]
    Unavailable { state: State, action: Action },
    #[error("transition {from} --{action}--> {to} has zero probability")]
    ZeroProbability {
        from: State,
        action: Action,
        to: State,
    },
    #[error("row for {state} / {action} sums to {sum}")]
    RowSum {
        state: State,
        action: Action,
        sum: f64,
    },
    #[error("malformed model: {0}")]
    Malformed(String),
    #[error("cannot parse {0:?}")]
    Parse(String),
    #[error(transparent)]
    Surface(#[from] SurfaceError),
}

/// Scalar model parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelParams {
    /// Channels available in a zone (M).
    pub channels: u32,
    /// Channels sensed per slot (m).
    pub sensed_per_slot: u32,
    /// Mini-slots per victim transmission (q).
    pub mini_slots: u32,
    /// Consecutive failures after which the victim drops its packet (G).
    pub drop_threshold: u32,
    /// Radar OFF -> ON probability.
    pub alpha: f64,
    /// Radar ON -> OFF probability.
    pub beta: f64,
    pub discount: f64,
    /// IDS performance parameter, lower is a better IDS.
    pub ids_c: f64,
    pub reward_attack: f64,
    pub reward_drop: f64,
    pub cost_busy: f64,
    pub cost_move: f64,
    pub cost_hop: f64,
    pub cost_detect: f64,
    pub penalty_forbidden: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            channels: 10,
            sensed_per_slot: 2,
            mini_slots: 2,
            drop_threshold: 4,
            alpha: 0.1,
            beta: 0.9,
            discount: 0.9,
            ids_c: 1.0,
            reward_attack: 1.0,
            reward_drop: 5.0,
            cost_busy: 0.5,
            cost_move: 0.2,
            cost_hop: 0.1,
            cost_detect: 15.0,
            penalty_forbidden: 100.0,
        }
    }
}

impl ModelParams {
    /// Number of hop states, one less than the slots in a sweep period.
    pub fn hop_states(&self) -> u32 {
        if self.sensed_per_slot == 0 {
            return 0;
        }
        self.channels
            .div_ceil(self.sensed_per_slot)
            .saturating_sub(1)
    }

    /// Stationary probability that the radar occupies the channel.
    pub fn busy_prob(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }

    /// Probability that the radar stays off for a whole victim transmission.
    pub fn clear_prob(&self) -> f64 {
        (1.0 - self.alpha).powi(self.mini_slots as i32)
    }

    /// Probability of locating the victim with a fresh sweep.
    pub fn fresh_attack_prob(&self) -> f64 {
        f64::from(self.sensed_per_slot) / f64::from(self.channels)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let (big_m, m, g) = (self.channels, self.sensed_per_slot, self.drop_threshold);
        let bad = |s: String| Err(ModelError::Param(s));
        if m < 1 || m > big_m {
            return bad(format!("need 1 <= m <= M, got m={m}, M={big_m}"));
        }
        if g < 1 || g >= big_m {
            return bad(format!("need 1 <= G < M, got G={g}, M={big_m}"));
        }
        if m > big_m - g {
            return bad(format!(
                "need m <= M - G so that m/(M-j) <= 1, got m={m}, M-G={}",
                big_m - g
            ));
        }
        if self.hop_states() < 1 {
            return bad(format!("need ceil(M/m) - 1 >= 1, got M={big_m}, m={m}"));
        }
        if self.mini_slots < 1 {
            return bad("need q >= 1".into());
        }
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(v > 0.0 && v < 1.0) {
                return bad(format!("{name} must lie in (0,1), got {v}"));
            }
        }
        if !(self.discount >= 0.0 && self.discount < 1.0) {
            return bad(format!("discount must lie in [0,1), got {}", self.discount));
        }
        if !(self.ids_c > 0.0 && self.ids_c.is_finite()) {
            return bad(format!("ids_c must be positive, got {}", self.ids_c));
        }
        for (name, v) in [
            ("reward_attack", self.reward_attack),
            ("reward_drop", self.reward_drop),
        ] {
            if !v.is_finite() {
                return bad(format!("{name} must be finite"));
            }
        }
        for (name, v) in [
            ("cost_busy", self.cost_busy),
            ("cost_move", self.cost_move),
            ("cost_hop", self.cost_hop),
            ("cost_detect", self.cost_detect),
            ("penalty_forbidden", self.penalty_forbidden),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be finite and nonnegative, got {v}"));
            }
        }
        Ok(())
    }

    /// Probability of locating the victim in the slot after `i` misses.
    pub fn attack_prob_hop(&self, i: u32) -> Result<f64, ModelError> {
        let k = self.hop_states();
        if i < 1 || i > k {
            return Err(ModelError::IndexOutOfRange {
                what: "hop streak",
                index: i,
                max: k,
            });
        }
        Ok(if i < k { self.fresh_attack_prob() } else { 1.0 })
    }

    /// Probability of catching the victim again after `j` consecutive
    /// attacks: it avoids the `j` channels it was attacked on.
    pub fn attack_prob_streak(&self, j: u32) -> Result<f64, ModelError> {
        let g = self.drop_threshold;
        if j < 1 || j > g {
            return Err(ModelError::IndexOutOfRange {
                what: "attack streak",
                index: j,
                max: g,
            });
        }
        let remaining = self.channels.saturating_sub(j);
        if self.sensed_per_slot > remaining {
            return Err(ModelError::Param(format!(
                "m={} exceeds M-j={remaining}",
                self.sensed_per_slot
            )));
        }
        Ok(f64::from(self.sensed_per_slot) / f64::from(remaining))
    }
}

/// IDS detection probability after the `j`-th consecutive attack.
pub fn detection_prob(j: u32, c: f64) -> Result<f64, ModelError> {
    if j < 1 || c.is_nan() || c <= 0.0 {
        return Err(ModelError::Detection { j, c });
    }
    let n = f64::from(j - 1);
    Ok(n / (n + c))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StateKind {
    /// Channel occupied by the primary user.
    Busy,
    /// `i` consecutive slots without finding the victim.
    Hop(u32),
    /// `j` consecutive successful attacks.
    Attack(u32),
    /// Caught by the IDS.
    Detected,
}

impl StateKind {
    pub fn code(&self) -> &'static str {
        match self {
            StateKind::Busy => "P",
            StateKind::Hop(_) => "H",
            StateKind::Attack(_) => "A",
            StateKind::Detected => "D",
        }
    }

    pub fn index(&self) -> u32 {
        match *self {
            StateKind::Hop(i) | StateKind::Attack(i) => i,
            _ => 0,
        }
    }
}

/// Ordering is by location, then P, H_1..H_K, A_1..A_G, D.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct State {
    pub location: ZoneId,
    pub kind: StateKind,
}

impl State {
    pub const fn new(location: ZoneId, kind: StateKind) -> Self {
        State { location, kind }
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            StateKind::Busy | StateKind::Detected => {
                write!(f, "{}@{}", self.kind.code(), self.location)
            }
            k => write!(f, "{}{}@{}", k.code(), k.index(), self.location),
        }
    }
}

/// Parses the display form, e.g. `H3@2`, `P@1`, `D@7`.
impl FromStr for State {
    type Err = ModelError;

    fn from_str(text: &str) -> Result<Self, ModelError> {
        let bad = || ModelError::Parse(text.to_string());
        let (kind, loc) = text.split_once('@').ok_or_else(bad)?;
        let location = loc.parse::<ZoneId>().map_err(|_| bad())?;
        let index = || kind[1..].parse::<u32>().map_err(|_| bad());
        let kind = match kind.chars().next().ok_or_else(bad)? {
            'P' if kind.len() == 1 => StateKind::Busy,
            'D' if kind.len() == 1 => StateKind::Detected,
            'H' => StateKind::Hop(index()?),
            'A' => StateKind::Attack(index()?),
            _ => return Err(bad()),
        };
        Ok(State::new(location, kind))
    }
}

/// Variant order doubles as the tie-break order used by the solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    StayHop,
    MoveHop(ZoneId),
    MoveStay(ZoneId),
    /// Forced move out of a detected state.
    Relocate,
    /// Staying on both location and channel. Never offered; costs the
    /// forbidden-action penalty if scored.
    StayStay,
}

impl Action {
    pub fn code(&self) -> &'static str {
        match self {
            Action::StayHop => "sh",
            Action::MoveHop(_) => "mh",
            Action::MoveStay(_) => "ms",
            Action::Relocate => "relocate",
            Action::StayStay => "ss",
        }
    }

    pub fn target(&self) -> Option<ZoneId> {
        match *self {
            Action::MoveHop(t) | Action::MoveStay(t) => Some(t),
            _ => None,
        }
    }

    pub fn is_move(&self) -> bool {
        self.target().is_some()
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.target() {
            Some(t) => write!(f, "{}:{}", self.code(), t),
            None => f.write_str(self.code()),
        }
    }
}

/// Parses the display form, e.g. `sh`, `mh:3`, `relocate`.
impl FromStr for Action {
    type Err = ModelError;

    fn from_str(text: &str) -> Result<Self, ModelError> {
        let bad = || ModelError::Parse(text.to_string());
        let target = |t: &str| t.parse::<ZoneId>().map_err(|_| bad());
        Ok(match text.split_once(':') {
            None => match text {
                "sh" => Action::StayHop,
                "relocate" => Action::Relocate,
                "ss" => Action::StayStay,
                _ => return Err(bad()),
            },
            Some(("mh", t)) => Action::MoveHop(target(t)?),
            Some(("ms", t)) => Action::MoveStay(target(t)?),
            Some(_) => return Err(bad()),
        })
    }
}

/// All states in canonical order.
pub fn state_space(params: &ModelParams, surface: &Surface) -> Vec<State> {
    let k = params.hop_states();
    let g = params.drop_threshold;
    let mut out = Vec::with_capacity(surface.len() * (k + g + 2) as usize);
    for loc in surface.ids() {
        out.push(State::new(loc, StateKind::Busy));
        out.extend((1..=k).map(|i| State::new(loc, StateKind::Hop(i))));
        out.extend((1..=g).map(|j| State::new(loc, StateKind::Attack(j))));
        out.push(State::new(loc, StateKind::Detected));
    }
    out
}

fn check_state(state: &State, params: &ModelParams, surface: &Surface) -> Result<(), ModelError> {
    let ok = surface.contains(state.location)
        && match state.kind {
            StateKind::Busy | StateKind::Detected => true,
            StateKind::Hop(i) => (1..=params.hop_states()).contains(&i),
            StateKind::Attack(j) => (1..=params.drop_threshold).contains(&j),
        };
    if ok {
        Ok(())
    } else {
        Err(ModelError::UnknownState(*state))
    }
}

/// Actions offered at `state`, in tie-break order.
pub fn available_actions(state: &State, surface: &Surface) -> Result<Vec<Action>, ModelError> {
    if state.kind == StateKind::Detected {
        return Ok(vec![Action::Relocate]);
    }
    let nbrs = surface.neighbors(state.location)?;
    let mut out = Vec::with_capacity(1 + 2 * nbrs.len());
    out.push(Action::StayHop);
    out.extend(nbrs.iter().map(|&t| Action::MoveHop(t)));
    out.extend(nbrs.iter().map(|&t| Action::MoveStay(t)));
    Ok(out)
}

struct Attempt {
    location: ZoneId,
    /// Probability of locating the victim this slot.
    p: f64,
    miss: Option<StateKind>,
    hit: StateKind,
    detect: f64,
}

fn attempt_row(params: &ModelParams, a: Attempt) -> Vec<(State, f64)> {
    let rho = params.busy_prob();
    let clear = params.clear_prob();
    let at = |k| State::new(a.location, k);
    let mut row = Vec::with_capacity(4);
    if let Some(miss) = a.miss {
        row.push((at(miss), (1.0 - rho) * (1.0 - a.p)));
    }
    row.push((at(a.hit), (1.0 - rho) * clear * a.p * (1.0 - a.detect)));
    row.push((
        at(StateKind::Detected),
        (1.0 - rho) * clear * a.p * a.detect,
    ));
    row.push((at(StateKind::Busy), rho + (1.0 - rho) * (1.0 - clear) * a.p));
    row
}

fn tidy(mut row: Vec<(State, f64)>) -> Vec<(State, f64)> {
    row.retain(|&(_, p)| p > 0.0);
    row.sort_by_key(|a| a.0);
    row.dedup_by(|later, earlier| {
        if later.0 == earlier.0 {
            earlier.1 += later.1;
            true
        } else {
            false
        }
    });
    row
}

/// Next-state distribution for `(state, action)`, sorted in canonical state
/// order with zero-probability entries omitted.
pub fn transition_row(
    state: &State,
    action: &Action,
    params: &ModelParams,
    surface: &Surface,
) -> Result<Vec<(State, f64)>, ModelError> {
    check_state(state, params, surface)?;
    if !available_actions(state, surface)?.contains(action) {
        return Err(ModelError::Unavailable {
            state: *state,
            action: *action,
        });
    }
    let k = params.hop_states();
    let g = params.drop_threshold;
    let loc = state.location;
    let fresh = params.fresh_attack_prob();

    let row = match (*action, state.kind) {
        (Action::Relocate, _) => {
            let nbrs = surface.neighbors(loc)?;
            if nbrs.is_empty() {
                vec![(State::new(loc, StateKind::Hop(1)), 1.0)]
            } else {
                let p = 1.0 / nbrs.len() as f64;
                nbrs.into_iter()
                    .map(|t| (State::new(t, StateKind::Hop(1)), p))
                    .collect()
            }
        }
        (Action::MoveHop(t), _) | (Action::MoveStay(t), _) => attempt_row(
            params,
            Attempt {
                location: t,
                p: fresh,
                miss: Some(StateKind::Hop(1)),
                hit: StateKind::Attack(1),
                detect: 0.0,
            },
        ),
        (Action::StayHop, StateKind::Busy) => attempt_row(
            params,
            Attempt {
                location: loc,
                p: fresh,
                miss: Some(StateKind::Hop(1)),
                hit: StateKind::Attack(1),
                detect: 0.0,
            },
        ),
        (Action::StayHop, StateKind::Hop(i)) => attempt_row(
            params,
            Attempt {
                location: loc,
                p: params.attack_prob_hop(i)?,
                miss: (i < k).then_some(StateKind::Hop(i + 1)),
                hit: StateKind::Attack(1),
                detect: 0.0,
            },
        ),
        (Action::StayHop, StateKind::Attack(j)) if j < g => attempt_row(
            params,
            Attempt {
                location: loc,
                p: params.attack_prob_streak(j)?,
                miss: Some(StateKind::Hop(1)),
                hit: StateKind::Attack(j + 1),
                detect: detection_prob(j, params.ids_c)?,
            },
        ),
        // After a drop the victim starts a new transmission, so the
        // attacker restarts from a full channel list.
        (Action::StayHop, StateKind::Attack(_)) => attempt_row(
            params,
            Attempt {
                location: loc,
                p: fresh,
                miss: Some(StateKind::Hop(1)),
                hit: StateKind::Attack(1),
                detect: detection_prob(g, params.ids_c)?,
            },
        ),
        _ => {
            return Err(ModelError::Unavailable {
                state: *state,
                action: *action,
            })
        }
    };
    Ok(tidy(row))
}

fn reward_unchecked(
    _state: &State,
    action: &Action,
    next: &State,
    params: &ModelParams,
    surface: &Surface,
) -> Result<f64, ModelError> {
    let w = surface.weight(next.location)?;
    let gain = |j: u32| {
        if j == params.drop_threshold {
            w * params.reward_drop
        } else {
            w * params.reward_attack
        }
    };
    let outcome = match next.kind {
        StateKind::Hop(_) => 0.0,
        StateKind::Attack(j) => gain(j),
        StateKind::Busy => -params.cost_busy,
        StateKind::Detected => -params.cost_detect,
    };
    Ok(match action {
        Action::StayHop => outcome - params.cost_hop,
        Action::MoveHop(_) => outcome - params.cost_hop - params.cost_move,
        Action::MoveStay(_) => outcome - params.cost_move,
        Action::Relocate => -params.cost_move,
        Action::StayStay => -params.penalty_forbidden,
    })
}

/// Immediate reward of a transition with nonzero probability. Gains earned
/// at a zone scale with its weight; costs do not.
pub fn reward(
    state: &State,
    action: &Action,
    next: &State,
    params: &ModelParams,
    surface: &Surface,
) -> Result<f64, ModelError> {
    if *action == Action::StayStay {
        check_state(state, params, surface)?;
        return Ok(-params.penalty_forbidden);
    }
    let row = transition_row(state, action, params, surface)?;
    if !row.iter().any(|(s, _)| s == next) {
        return Err(ModelError::ZeroProbability {
            from: *state,
            action: *action,
            to: *next,
        });
    }
    reward_unchecked(state, action, next, params, surface)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub next: usize,
    pub prob: f64,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Choice {
    pub action: Action,
    pub outcomes: Vec<Outcome>,
}

impl Choice {
    pub fn expected_reward(&self) -> f64 {
        self.outcomes.iter().map(|o| o.prob * o.reward).sum()
    }
}

/// A finite discounted MDP with states in canonical order and, per state,
/// the available choices in tie-break order.
#[derive(Debug, Clone)]
pub struct Mdp {
    states: Vec<State>,
    index: HashMap<State, usize>,
    choices: Vec<Vec<Choice>>,
    discount: f64,
}

impl Mdp {
    /// Assembles an MDP from explicit parts, checking that every choice is a
    /// probability distribution over known states.
    pub fn from_parts(
        states: Vec<State>,
        mut choices: Vec<Vec<Choice>>,
        discount: f64,
    ) -> Result<Self, ModelError> {
        if states.len() != choices.len() {
            return Err(ModelError::Malformed(format!(
                "{} states but {} choice lists",
                states.len(),
                choices.len()
            )));
        }
        if !(0.0..1.0).contains(&discount) {
            return Err(ModelError::Param(format!(
                "discount must lie in [0,1), got {discount}"
            )));
        }
        let mut index = HashMap::with_capacity(states.len());
        for (i, s) in states.iter().enumerate() {
            if index.insert(*s, i).is_some() {
                return Err(ModelError::Malformed(format!("duplicate state {s}")));
            }
        }
        for (i, list) in choices.iter_mut().enumerate() {
            if list.is_empty() {
                return Err(ModelError::Malformed(format!(
                    "no actions at {}",
                    states[i]
                )));
            }
            list.sort_by_key(|c| c.action);
            for c in list.iter() {
                let mut sum = 0.0;
                for o in &c.outcomes {
                    if o.next >= states.len() || !(0.0..=1.0).contains(&o.prob) {
                        return Err(ModelError::Malformed(format!(
                            "bad outcome {o:?} at {}",
                            states[i]
                        )));
                    }
                    if !o.reward.is_finite() {
                        return Err(ModelError::Malformed(format!(
                            "non-finite reward at {}",
                            states[i]
                        )));
                    }
                    sum += o.prob;
                }
                if (sum - 1.0).abs() > ROW_TOLERANCE {
                    return Err(ModelError::RowSum {
                        state: states[i],
                        action: c.action,
                        sum,
                    });
                }
            }
        }
        Ok(Mdp {
            states,
            index,
            choices,
            discount,
        })
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn index_of(&self, state: &State) -> Option<usize> {
        self.index.get(state).copied()
    }

    pub fn choices(&self, state: usize) -> &[Choice] {
        &self.choices[state]
    }

    pub fn choice(&self, state: usize, action: &Action) -> Option<&Choice> {
        self.choices[state].iter().find(|c| c.action == *action)
    }

    /// Largest absolute one-step reward.
    pub fn max_abs_reward(&self) -> f64 {
        self.choices
            .iter()
            .flatten()
            .flat_map(|c| c.outcomes.iter().map(|o| o.reward.abs()))
            .fold(0.0, f64::max)
    }

    /// Same kernel with every reward multiplied by `factor`.
    pub fn with_scaled_rewards(&self, factor: f64) -> Mdp {
        let mut out = self.clone();
        for c in out.choices.iter_mut().flatten() {
            for o in &mut c.outcomes {
                o.reward *= factor;
            }
        }
        out
    }

    pub fn with_discount(&self, discount: f64) -> Result<Mdp, ModelError> {
        Mdp::from_parts(self.states.clone(), self.choices.clone(), discount)
    }
}

/// Builds the full attacker MDP over `surface`.
pub fn build_mdp(params: &ModelParams, surface: &Surface) -> Result<Mdp, ModelError> {
    params.validate()?;
    surface.validate().map_err(SurfaceError::Invalid)?;
    let states = state_space(params, surface);
    let index: HashMap<State, usize> = states.iter().enumerate().map(|(i, s)| (*s, i)).collect();
    let mut choices = Vec::with_capacity(states.len());
    for s in &states {
        let mut list = Vec::new();
        for a in available_actions(s, surface)? {
            let row = transition_row(s, &a, params, surface)?;
            let outcomes = row
                .iter()
                .map(|(next, prob)| {
                    Ok(Outcome {
                        next: index[next],
                        prob: *prob,
                        reward: reward_unchecked(s, &a, next, params, surface)?,
                    })
                })
                .collect::<Result<Vec<_>, ModelError>>()?;
            list.push(Choice {
                action: a,
                outcomes,
            });
        }
        choices.push(list);
    }
    Mdp::from_parts(states, choices, params.discount)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_params() -> ModelParams {
        ModelParams {
            channels: 10,
            sensed_per_slot: 2,
            mini_slots: 2,
            drop_threshold: 4,
            alpha: 0.1,
            beta: 0.9,
            ..ModelParams::default()
        }
    }

    fn prob(row: &[(State, f64)], s: State) -> f64 {
        row.iter().find(|(x, _)| *x == s).map_or(0.0, |(_, p)| *p)
    }

    #[test]
    fn state_counts() {
        let p = reference_params();
        assert_eq!(p.hop_states(), 4);
        let hex = Surface::hex7(&[1.0; 7]).unwrap();
        assert_eq!(state_space(&p, &hex).len(), 70);

        let single = Surface::single(0, 1.0).unwrap();
        let minimal = ModelParams {
            channels: 3,
            sensed_per_slot: 2,
            drop_threshold: 1,
            ..p.clone()
        };
        assert_eq!(minimal.hop_states(), 1);
        assert_eq!(state_space(&minimal, &single).len(), 4);

        let line = Surface::new(
            vec![
                crate::surface::Zone {
                    id: 0,
                    label: "a".into(),
                    weight: 1.0,
                },
                crate::surface::Zone {
                    id: 1,
                    label: "b".into(),
                    weight: 1.0,
                },
            ],
            &[(0, 1)],
        )
        .unwrap();
        let two = ModelParams {
            channels: 6,
            sensed_per_slot: 2,
            drop_threshold: 2,
            ..p
        };
        assert_eq!(two.hop_states(), 2);
        assert_eq!(state_space(&two, &line).len(), 12);
    }

    #[test]
    fn canonical_order() {
        let p = reference_params();
        let states = state_space(&p, &Surface::single(3, 1.0).unwrap());
        let kinds: Vec<_> = states.iter().map(|s| s.to_string()).collect();
        assert_eq!(
            kinds,
            ["P@3", "H1@3", "H2@3", "H3@3", "H4@3", "A1@3", "A2@3", "A3@3", "A4@3", "D@3"]
        );
        let mut sorted = states.clone();
        sorted.sort();
        assert_eq!(sorted, states);
    }

    #[test]
    fn detection_values() {
        assert_eq!(detection_prob(1, 0.3).unwrap(), 0.0);
        assert_eq!(detection_prob(1, 50.0).unwrap(), 0.0);
        assert_eq!(detection_prob(2, 1.0).unwrap(), 0.5);
        assert!((detection_prob(11, 1.0).unwrap() - 10.0 / 11.0).abs() < 1e-15);
        assert!(detection_prob(0, 1.0).is_err());
        assert!(detection_prob(2, 0.0).is_err());
        assert!(detection_prob(2, -1.0).is_err());
    }

    #[test]
    fn hop_and_streak_probs() {
        let p = reference_params();
        assert_eq!(p.attack_prob_hop(1).unwrap(), 0.2);
        assert_eq!(p.attack_prob_hop(3).unwrap(), 0.2);
        assert_eq!(p.attack_prob_hop(4).unwrap(), 1.0);
        assert!(p.attack_prob_hop(0).is_err());
        assert!(p.attack_prob_hop(5).is_err());
        assert!((p.attack_prob_streak(4).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!((p.attack_prob_streak(1).unwrap() - 2.0 / 9.0).abs() < 1e-15);
        assert!(p.attack_prob_streak(5).is_err());
    }

    #[test]
    fn param_validation() {
        assert!(reference_params().validate().is_ok());
        let bad = ModelParams {
            sensed_per_slot: 9,
            ..reference_params()
        };
        assert!(matches!(bad.validate(), Err(ModelError::Param(_))));
        let full = ModelParams {
            sensed_per_slot: 10,
            drop_threshold: 0,
            ..reference_params()
        };
        assert!(full.validate().is_err());
        let g_too_big = ModelParams {
            drop_threshold: 10,
            ..reference_params()
        };
        assert!(g_too_big.validate().is_err());
        let undiscounted = ModelParams {
            discount: 1.0,
            ..reference_params()
        };
        assert!(undiscounted.validate().is_err());
        let negative_cost = ModelParams {
            cost_move: -1.0,
            ..reference_params()
        };
        assert!(negative_cost.validate().is_err());
        let hex = Surface::hex7(&[1.0; 7]).unwrap();
        assert!(build_mdp(&bad, &hex).is_err());
    }

    #[test]
    fn hop_rows_match_hand_values() {
        let p = reference_params();
        let s = Surface::single(1, 1.0).unwrap();
        let h = |i| State::new(1, StateKind::Hop(i));
        let a1 = State::new(1, StateKind::Attack(1));
        let busy = State::new(1, StateKind::Busy);

        let row = transition_row(&h(1), &Action::StayHop, &p, &s).unwrap();
        assert_eq!(row.len(), 3);
        assert!((prob(&row, h(2)) - 0.72).abs() < 1e-12);
        assert!((prob(&row, a1) - 0.1458).abs() < 1e-12);
        assert!((prob(&row, busy) - 0.1342).abs() < 1e-12);

        let row = transition_row(&h(4), &Action::StayHop, &p, &s).unwrap();
        assert_eq!(row.len(), 2);
        assert!((prob(&row, a1) - 0.729).abs() < 1e-12);
        assert!((prob(&row, busy) - 0.271).abs() < 1e-12);
    }

    #[test]
    fn attack_rows() {
        let p = reference_params();
        let s = Surface::single(1, 1.0).unwrap();
        let a = |j| State::new(1, StateKind::Attack(j));
        let d = State::new(1, StateKind::Detected);
        let h1 = State::new(1, StateKind::Hop(1));

        // A_1: no detection possible yet.
        let row = transition_row(&a(1), &Action::StayHop, &p, &s).unwrap();
        assert!(prob(&row, d) == 0.0);
        assert!((prob(&row, h1) - 0.9 * (7.0 / 9.0)).abs() < 1e-12);

        let row = transition_row(&a(2), &Action::StayHop, &p, &s).unwrap();
        let hit = 0.9 * 0.81 * 0.25;
        assert!((prob(&row, a(3)) - hit * 0.5).abs() < 1e-12);
        assert!((prob(&row, d) - hit * 0.5).abs() < 1e-12);

        // A_G restarts the sweep but keeps the detection exposure.
        let row = transition_row(&a(4), &Action::StayHop, &p, &s).unwrap();
        let hit = 0.9 * 0.81 * 0.2;
        assert!((prob(&row, a(1)) - hit * 0.25).abs() < 1e-12);
        assert!((prob(&row, d) - hit * 0.75).abs() < 1e-12);
    }

    #[test]
    fn move_and_relocate_rows() {
        let p = reference_params();
        let hex = Surface::hex7(&[1.0; 7]).unwrap();
        let from = State::new(7, StateKind::Attack(3));
        let mh = transition_row(&from, &Action::MoveHop(6), &p, &hex).unwrap();
        let ms = transition_row(&from, &Action::MoveStay(6), &p, &hex).unwrap();
        assert_eq!(mh, ms);
        assert!((prob(&mh, State::new(6, StateKind::Hop(1))) - 0.72).abs() < 1e-12);
        assert!(transition_row(&from, &Action::MoveStay(4), &p, &hex).is_err());

        let d = State::new(1, StateKind::Detected);
        let row = transition_row(&d, &Action::Relocate, &p, &hex).unwrap();
        assert_eq!(row.len(), 6);
        assert!(row
            .iter()
            .all(|(s, q)| s.kind == StateKind::Hop(1) && (*q - 1.0 / 6.0).abs() < 1e-15));
        assert!(transition_row(&d, &Action::StayHop, &p, &hex).is_err());

        let lone = Surface::single(1, 1.0).unwrap();
        let row = transition_row(&d, &Action::Relocate, &p, &lone).unwrap();
        assert_eq!(row, vec![(State::new(1, StateKind::Hop(1)), 1.0)]);
    }

    #[test]
    fn reward_table() {
        let p = reference_params();
        let s = Surface::single(1, 1.0).unwrap();
        let st = |k| State::new(1, k);
        use StateKind::*;
        assert_eq!(
            reward(&st(Hop(1)), &Action::StayHop, &st(Hop(2)), &p, &s).unwrap(),
            -p.cost_hop
        );
        assert_eq!(
            reward(&st(Attack(3)), &Action::StayHop, &st(Attack(4)), &p, &s).unwrap(),
            p.reward_drop - p.cost_hop
        );
        assert_eq!(
            reward(&st(Attack(2)), &Action::StayHop, &st(Detected), &p, &s).unwrap(),
            -p.cost_detect - p.cost_hop
        );
        assert_eq!(
            reward(&st(Hop(1)), &Action::StayHop, &st(Busy), &p, &s).unwrap(),
            -p.cost_busy - p.cost_hop
        );
        assert!(matches!(
            reward(&st(Hop(1)), &Action::StayHop, &st(Hop(3)), &p, &s),
            Err(ModelError::ZeroProbability { .. })
        ));
        assert_eq!(
            reward(&st(Hop(1)), &Action::StayStay, &st(Hop(1)), &p, &s).unwrap(),
            -p.penalty_forbidden
        );

        let hex = Surface::hex7(&[1.0, 1.0, 1.0, 1.0, 1.0, 3.0, 7.0]).unwrap();
        let from = State::new(7, Hop(2));
        let a1_6 = State::new(6, Attack(1));
        assert_eq!(
            reward(&from, &Action::MoveStay(6), &a1_6, &p, &hex).unwrap(),
            3.0 * p.reward_attack - p.cost_move
        );
        assert_eq!(
            reward(&from, &Action::MoveHop(6), &a1_6, &p, &hex).unwrap(),
            3.0 * p.reward_attack - p.cost_hop - p.cost_move
        );
        assert_eq!(
            reward(&from, &Action::MoveHop(6), &State::new(6, Hop(1)), &p, &hex).unwrap(),
            -p.cost_hop - p.cost_move
        );
        assert_eq!(
            reward(
                &State::new(7, Detected),
                &Action::Relocate,
                &State::new(1, Hop(1)),
                &p,
                &hex
            )
            .unwrap(),
            -p.cost_move
        );
    }

    #[test]
    fn built_mdp_shape() {
        let p = reference_params();
        let hex = Surface::hex7(&[1.0; 7]).unwrap();
        let mdp = build_mdp(&p, &hex).unwrap();
        assert_eq!(mdp.len(), 70);
        let center_d = mdp.index_of(&State::new(1, StateKind::Detected)).unwrap();
        assert_eq!(mdp.choices(center_d).len(), 1);
        assert_eq!(mdp.choices(center_d)[0].outcomes.len(), 6);
        let h = mdp.index_of(&State::new(7, StateKind::Hop(1))).unwrap();
        assert_eq!(mdp.choices(h).len(), 7);

        let lone = build_mdp(&p, &Surface::single(1, 1.0).unwrap()).unwrap();
        for (i, s) in lone.states().iter().enumerate() {
            let acts: Vec<_> = lone.choices(i).iter().map(|c| c.action).collect();
            if s.kind == StateKind::Detected {
                assert_eq!(acts, vec![Action::Relocate]);
            } else {
                assert_eq!(acts, vec![Action::StayHop]);
            }
        }
    }

    #[test]
    fn from_parts_rejects_bad_rows() {
        let s = State::new(0, StateKind::Hop(1));
        let bad = vec![vec![Choice {
            action: Action::StayHop,
            outcomes: vec![Outcome {
                next: 0,
                prob: 0.9,
                reward: 0.0,
            }],
        }]];
        assert!(matches!(
            Mdp::from_parts(vec![s], bad, 0.9),
            Err(ModelError::RowSum { .. })
        ));
        let ok = vec![vec![Choice {
            action: Action::StayHop,
            outcomes: vec![Outcome {
                next: 0,
                prob: 1.0,
                reward: 1.0,
            }],
        }]];
        assert!(Mdp::from_parts(vec![s], ok.clone(), 1.0).is_err());
        assert!(Mdp::from_parts(vec![s], ok, 0.5).is_ok());
    }

    #[test]
    fn display_roundtrips() {
        let p = ModelParams::default();
        let surface = Surface::hex7(&[1.0; 7]).unwrap();
        for st in state_space(&p, &surface) {
            assert_eq!(st.to_string().parse::<State>().unwrap(), st);
            for a in available_actions(&st, &surface).unwrap() {
                assert_eq!(a.to_string().parse::<Action>().unwrap(), a);
            }
        }
        for bad in ["", "X1@1", "H@1", "P2@1", "H1@", "H1"] {
            assert!(bad.parse::<State>().is_err(), "{bad}");
        }
        for bad in ["", "mh", "mh:x", "zz:1", "stay"] {
            assert!(bad.parse::<Action>().is_err(), "{bad}");
        }
    }
}
