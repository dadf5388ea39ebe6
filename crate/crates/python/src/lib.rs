//! Python bindings for the attack model, solver, oracles and MAC simulator.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use pacman_core::cli::{self, CliError, MacConfig, RunOptions, ScenarioConfig, SolverOptions};
use pacman_core::hop_oracle;
use pacman_core::mdp_model::{self, Action, ModelParams, State};
use pacman_core::surface::{self, Zone, ZoneId};

fn err(e: CliError) -> PyErr {
    match e {
        CliError::Config(m) => PyValueError::new_err(m),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Zone adjacency graph with per-zone importance weights.
#[pyclass(name = "Surface", module = "pacman", frozen)]
struct PySurface {
    inner: surface::Surface,
}

#[pymethods]
impl PySurface {
    /// `zones` is a list of `(id, label, weight)`; `edges` lists undirected pairs.
    #[new]
    fn new(zones: Vec<(ZoneId, String, f64)>, edges: Vec<(ZoneId, ZoneId)>) -> PyResult<Self> {
        let zones = zones
            .into_iter()
            .map(|(id, label, weight)| Zone { id, label, weight })
            .collect();
        let inner = surface::Surface::new(zones, &edges).map_err(value_err)?;
        Ok(PySurface { inner })
    }

    /// Seven-cell hexagon: zone 1 in the center, 2..7 around it.
    #[staticmethod]
    #[pyo3(signature = (weights = None))]
    fn hex7(weights: Option<Vec<f64>>) -> PyResult<Self> {
        let w = weights.unwrap_or_else(|| cli::DEFAULT_WEIGHTS.to_vec());
        let inner = surface::Surface::hex7(&w).map_err(value_err)?;
        Ok(PySurface { inner })
    }

    fn ids(&self) -> Vec<ZoneId> {
        self.inner.ids()
    }

    fn neighbors(&self, id: ZoneId) -> PyResult<Vec<ZoneId>> {
        self.inner.neighbors(id).map_err(value_err)
    }

    fn weight(&self, id: ZoneId) -> PyResult<f64> {
        self.inner.weight(id).map_err(value_err)
    }

    fn edges(&self) -> Vec<(ZoneId, ZoneId)> {
        self.inner.edges()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Surface(zones={:?})", self.inner.ids())
    }
}

/// Scalar model parameters; every argument is optional.
#[pyclass(name = "ModelParams", module = "pacman", get_all, set_all)]
struct PyModelParams {
    channels: u32,
    sensed_per_slot: u32,
    mini_slots: u32,
    drop_threshold: u32,
    alpha: f64,
    beta: f64,
    discount: f64,
    ids_c: f64,
    reward_attack: f64,
    reward_drop: f64,
    cost_busy: f64,
    cost_move: f64,
    cost_hop: f64,
    cost_detect: f64,
    penalty_forbidden: f64,
}

impl From<&ModelParams> for PyModelParams {
    fn from(p: &ModelParams) -> Self {
        PyModelParams {
            channels: p.channels,
            sensed_per_slot: p.sensed_per_slot,
            mini_slots: p.mini_slots,
            drop_threshold: p.drop_threshold,
            alpha: p.alpha,
            beta: p.beta,
            discount: p.discount,
            ids_c: p.ids_c,
            reward_attack: p.reward_attack,
            reward_drop: p.reward_drop,
            cost_busy: p.cost_busy,
            cost_move: p.cost_move,
            cost_hop: p.cost_hop,
            cost_detect: p.cost_detect,
            penalty_forbidden: p.penalty_forbidden,
        }
    }
}

impl PyModelParams {
    fn to_core(&self) -> ModelParams {
        ModelParams {
            channels: self.channels,
            sensed_per_slot: self.sensed_per_slot,
            mini_slots: self.mini_slots,
            drop_threshold: self.drop_threshold,
            alpha: self.alpha,
            beta: self.beta,
            discount: self.discount,
            ids_c: self.ids_c,
            reward_attack: self.reward_attack,
            reward_drop: self.reward_drop,
            cost_busy: self.cost_busy,
            cost_move: self.cost_move,
            cost_hop: self.cost_hop,
            cost_detect: self.cost_detect,
            penalty_forbidden: self.penalty_forbidden,
        }
    }
}

macro_rules! param_fields {
    ($mac:ident) => {
        $mac!(
            channels,
            sensed_per_slot,
            mini_slots,
            drop_threshold,
            alpha,
            beta,
            discount,
            ids_c,
            reward_attack,
            reward_drop,
            cost_busy,
            cost_move,
            cost_hop,
            cost_detect,
            penalty_forbidden
        )
    };
}

#[pymethods]
impl PyModelParams {
    #[new]
    #[pyo3(signature = (**kwargs))]
    fn new(kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let mut p = Self::from(&ModelParams::default());
        for (k, v) in kwargs.into_iter().flat_map(|d| d.iter()) {
            let key: String = k.extract()?;
            macro_rules! assign {
                ($($f:ident),*) => {
                    match key.as_str() {
                        $(stringify!($f) => p.$f = v.extract()?,)*
                        other => return Err(PyValueError::new_err(format!("unknown parameter {other:?}"))),
                    }
                };
            }
            param_fields!(assign);
        }
        Ok(p)
    }

    /// Raises `ValueError` when the parameters are inconsistent.
    fn validate(&self) -> PyResult<()> {
        self.to_core().validate().map_err(value_err)
    }

    fn hop_states(&self) -> u32 {
        self.to_core().hop_states()
    }

    fn busy_prob(&self) -> f64 {
        self.to_core().busy_prob()
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.to_core()).expect("serializable")
    }

    fn __repr__(&self) -> String {
        format!("ModelParams({})", self.to_json())
    }
}

/// Outcome of an end-to-end solve.
#[pyclass(name = "Solution", module = "pacman", frozen, get_all)]
struct PySolution {
    states: Vec<String>,
    values: Vec<f64>,
    policy: Vec<String>,
    stationary: Vec<f64>,
    sojourn: BTreeMap<ZoneId, f64>,
    start_state: String,
    v_start: f64,
    iterations: usize,
    top_zone: ZoneId,
    top_share: f64,
    /// zone -> list of (action, mass), largest first.
    action_mix: BTreeMap<ZoneId, Vec<(String, f64)>>,
}

#[pymethods]
impl PySolution {
    fn __repr__(&self) -> String {
        format!(
            "Solution(v_start={}, top_zone={}, top_share={:.4}, iterations={})",
            self.v_start, self.top_zone, self.top_share, self.iterations
        )
    }
}

/// Value iteration, greedy policy and stationary analysis.
#[pyfunction]
#[pyo3(signature = (params, surface, start_zone = None, tol = 1e-10, max_iter = 100_000))]
fn solve(
    py: Python<'_>,
    params: &PyModelParams,
    surface: &PySurface,
    start_zone: Option<ZoneId>,
    tol: f64,
    max_iter: usize,
) -> PyResult<PySolution> {
    let p = params.to_core();
    let s = surface.inner.clone();
    let zone = start_zone.unwrap_or_else(|| s.ids()[0]);
    let opts = SolverOptions {
        tol,
        max_iter,
        rollout_trials: 0,
        ..SolverOptions::default()
    };
    let out = py
        .detach(|| cli::solve_pipeline(&p, &s, &opts, zone, 0))
        .map_err(err)?;
    let (top_zone, top_share) = out.top_zone();
    Ok(PySolution {
        states: out.mdp.states().iter().map(ToString::to_string).collect(),
        values: out.values.clone(),
        policy: out
            .policy
            .actions()
            .iter()
            .map(ToString::to_string)
            .collect(),
        stationary: out.stationary.pi.clone(),
        sojourn: out.sojourn.iter().copied().collect(),
        start_state: out.mdp.states()[out.start].to_string(),
        v_start: out.v_start(),
        iterations: out.iterations,
        top_zone,
        top_share,
        action_mix: out
            .summary
            .iter()
            .map(|z| {
                (
                    z.zone,
                    z.ranked.iter().map(|(a, m)| (a.to_string(), *m)).collect(),
                )
            })
            .collect(),
    })
}

fn parse_pair(state: &str, action: &str) -> PyResult<(State, Action)> {
    Ok((
        state.parse().map_err(value_err)?,
        action.parse().map_err(value_err)?,
    ))
}

/// Analytic next-state distribution, e.g. `transition_row(p, s, "H1@1", "sh")`.
#[pyfunction]
fn transition_row(
    params: &PyModelParams,
    surface: &PySurface,
    state: &str,
    action: &str,
) -> PyResult<Vec<(String, f64)>> {
    let (st, a) = parse_pair(state, action)?;
    let row =
        mdp_model::transition_row(&st, &a, &params.to_core(), &surface.inner).map_err(value_err)?;
    Ok(row.into_iter().map(|(s, p)| (s.to_string(), p)).collect())
}

/// Next-state frequencies from the generative oracle.
#[pyfunction]
#[pyo3(signature = (params, surface, state, action, n_trials = 100_000, seed = 0))]
fn empirical_row(
    py: Python<'_>,
    params: &PyModelParams,
    surface: &PySurface,
    state: &str,
    action: &str,
    n_trials: usize,
    seed: u64,
) -> PyResult<Vec<(String, f64)>> {
    let (st, a) = parse_pair(state, action)?;
    let p = params.to_core();
    let s = surface.inner.clone();
    let k = py
        .detach(|| hop_oracle::empirical_transition_frequencies(&p, &s, &st, &a, n_trials, seed))
        .map_err(value_err)?;
    Ok(k.distribution(&st, &a)
        .into_iter()
        .map(|(s, p)| (s.to_string(), p))
        .collect())
}

/// Closed-form drop probability given a first successful attack.
#[pyfunction]
fn drop_probability(channels: u32, sensed: u32, drop_threshold: u32) -> f64 {
    hop_oracle::drop_closed_form(channels, sensed, drop_threshold)
}

/// Monte-Carlo drop estimate; returns `(estimate, sigma, closed_form)`.
#[pyfunction]
#[pyo3(signature = (channels, sensed, drop_threshold, n_trials = 1_000_000, seed = 0))]
fn simulate_drop(
    py: Python<'_>,
    channels: u32,
    sensed: u32,
    drop_threshold: u32,
    n_trials: usize,
    seed: u64,
) -> PyResult<(f64, f64, f64)> {
    let e = py
        .detach(|| {
            hop_oracle::simulate_drop_chain(channels, sensed, drop_threshold, n_trials, seed)
        })
        .map_err(value_err)?;
    Ok((e.probability(), e.sigma(), e.closed_form))
}

/// Attack and counterfactual MAC runs. `config` is the JSON `mac` section;
/// returns the impact percentages.
#[pyfunction]
#[pyo3(signature = (config = None, seed = 1))]
fn mac_impact(py: Python<'_>, config: Option<&str>, seed: u64) -> PyResult<BTreeMap<String, f64>> {
    let mac: MacConfig = match config {
        Some(text) => serde_json::from_str(text).map_err(value_err)?,
        None => MacConfig::default(),
    };
    let sc = mac.scenario(seed);
    sc.validate().map_err(value_err)?;
    let (_, r) = py.detach(|| cli::run_macsim(&sc)).map_err(err)?;
    Ok(BTreeMap::from([
        ("zonal_drop".to_string(), r.zonal_drop),
        ("global_drop".to_string(), r.global_drop),
        ("zonal_delay_rise".to_string(), r.zonal_delay_rise),
        ("global_delay_rise".to_string(), r.global_delay_rise),
    ]))
}

/// Runs a CLI command and returns `{file: sha256}` from its manifest.
#[pyfunction]
#[pyo3(signature = (command, out, config = None, seed = None, axis = None, values = None))]
fn run(
    py: Python<'_>,
    command: &str,
    out: PathBuf,
    config: Option<&str>,
    seed: Option<u64>,
    axis: Option<&str>,
    values: Option<Vec<f64>>,
) -> PyResult<BTreeMap<String, String>> {
    let cfg = match config {
        Some(text) => ScenarioConfig::from_json(text).map_err(err)?,
        None => ScenarioConfig::default(),
    };
    let opts = RunOptions {
        out: Some(out),
        seed,
    };
    let manifest = py
        .detach(|| match command {
            "solve" => cli::cmd_solve(cfg, &opts),
            "hopsim" => cli::cmd_hopsim(cfg, &opts),
            "macsim" => cli::cmd_macsim(cfg, &opts),
            "sweep" => cli::cmd_sweep(
                cfg,
                axis.unwrap_or("c"),
                values.as_deref().unwrap_or(&[]),
                &opts,
            ),
            other => Err(CliError::Config(format!("unknown command {other:?}"))),
        })
        .map_err(err)?;
    Ok(manifest
        .files
        .into_iter()
        .map(|f| (f.name, f.sha256))
        .collect())
}

#[pymodule]
fn pacman(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", cli::TOOL_VERSION)?;
    m.add_class::<PySurface>()?;
    m.add_class::<PyModelParams>()?;
    m.add_class::<PySolution>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(transition_row, m)?)?;
    m.add_function(wrap_pyfunction!(empirical_row, m)?)?;
    m.add_function(wrap_pyfunction!(drop_probability, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_drop, m)?)?;
    m.add_function(wrap_pyfunction!(mac_impact, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
