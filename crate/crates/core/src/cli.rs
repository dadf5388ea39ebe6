//! Scenario configuration and the `solve`, `hopsim`, `macsim` and `sweep`
//! commands. Every command writes plot-ready CSV plus a `manifest.json`
//! carrying a digest of the effective configuration and a SHA-256 per file.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::hop_oracle::{self, OracleError};
use crate::mac_sim::{self, MacError, MacScenario, MacZone};
use crate::mdp_model::{build_mdp, Action, Mdp, ModelError, ModelParams, State, StateKind};
use crate::mdp_solver::{
    self, Policy, RolloutEstimate, SolverError, StationaryDistribution, StationaryOptions,
    ZoneSummary,
};
use crate::surface::{Surface, SurfaceError, Zone, ZoneId};

pub const TOOL_NAME: &str = "pacman";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Importance weights for S1..S7 on the default surface.
pub const DEFAULT_WEIGHTS: [f64; 7] = [1.0, 2.0, 2.0, 1.0, 3.0, 4.0, 7.0];

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Io { .. } => 1,
        }
    }
}

impl From<SurfaceError> for CliError {
    fn from(e: SurfaceError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<MacError> for CliError {
    fn from(e: MacError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::Input(m) => CliError::Config(m),
            other => CliError::Numeric(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceConfig {
    pub zones: Vec<Zone>,
    pub edges: Vec<(ZoneId, ZoneId)>,
}

impl Default for SurfaceConfig {
    fn default() -> Self {
        let s = Surface::hex7(&DEFAULT_WEIGHTS).expect("default weights are valid");
        SurfaceConfig {
            zones: s.zones().to_vec(),
            edges: s.edges(),
        }
    }
}

impl SurfaceConfig {
    pub fn build(&self) -> Result<Surface, SurfaceError> {
        Surface::new(self.zones.clone(), &self.edges)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Zone whose `H_1` state starts the chain; defaults to the lowest id.
    pub start_zone: Option<ZoneId>,
    pub stationary_tol: f64,
    pub stationary_max_iter: usize,
    /// Monte-Carlo cross-check of `V(start)`; zero disables it.
    pub rollout_trials: usize,
    pub rollout_horizon: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-10,
            max_iter: 100_000,
            start_zone: None,
            stationary_tol: 1e-12,
            stationary_max_iter: 1_000_000,
            rollout_trials: 10_000,
            rollout_horizon: 400,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleOptions {
    pub n_trials: usize,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions {
            n_trials: 1_000_000,
        }
    }
}

/// MAC scenario as configured; the seed comes from the root seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MacConfig {
    pub zones: Vec<MacZone>,
    pub slot_time_us: u32,
    pub payload_bytes: u32,
    pub phy_rate_bps: f64,
    pub overhead_us: u32,
    pub sim_duration_s: f64,
    pub attack_start_s: f64,
    pub attack_zone: ZoneId,
    pub sample_interval_s: f64,
}

impl Default for MacConfig {
    fn default() -> Self {
        let d = MacScenario::default();
        MacConfig {
            zones: d.zones,
            slot_time_us: d.slot_time_us,
            payload_bytes: d.payload_bytes,
            phy_rate_bps: d.phy_rate_bps,
            overhead_us: d.overhead_us,
            sim_duration_s: d.sim_duration_s,
            attack_start_s: d.attack_start_s,
            attack_zone: d.attack_zone,
            sample_interval_s: d.sample_interval_s,
        }
    }
}

impl MacConfig {
    pub fn scenario(&self, seed: u64) -> MacScenario {
        MacScenario {
            zones: self.zones.clone(),
            slot_time_us: self.slot_time_us,
            payload_bytes: self.payload_bytes,
            phy_rate_bps: self.phy_rate_bps,
            overhead_us: self.overhead_us,
            sim_duration_s: self.sim_duration_s,
            attack_start_s: self.attack_start_s,
            attack_zone: self.attack_zone,
            sample_interval_s: self.sample_interval_s,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub surface: SurfaceConfig,
    pub model: ModelParams,
    pub solver: SolverOptions,
    pub oracle: OracleOptions,
    pub mac: MacConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            seed: 20240601,
            output_dir: None,
            surface: SurfaceConfig::default(),
            model: ModelParams::default(),
            solver: SolverOptions::default(),
            oracle: OracleOptions::default(),
            mac: MacConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// SHA-256 over the canonical JSON serialization.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }

    /// Deterministic per-component seed derived from the root seed.
    pub fn sub_seed(&self, component: &str) -> u64 {
        let h = Sha256::digest(format!("{}:{component}", self.seed).as_bytes());
        u64::from_le_bytes(h[..8].try_into().expect("8 bytes"))
    }

    fn start_zone(&self, surface: &Surface) -> Result<ZoneId, CliError> {
        match self.solver.start_zone {
            Some(z) if surface.contains(z) => Ok(z),
            Some(z) => Err(CliError::Config(format!(
                "start zone {z} not on the surface"
            ))),
            None => Ok(surface.ids()[0]),
        }
    }

    fn validate_solver(&self) -> Result<(), CliError> {
        let s = &self.solver;
        if s.tol.is_nan()
            || s.tol <= 0.0
            || s.max_iter == 0
            || s.stationary_tol.is_nan()
            || s.stationary_tol <= 0.0
        {
            return Err(CliError::Config(
                "solver tolerances must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Everything produced by one end-to-end solve.
#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub surface: Surface,
    pub mdp: Mdp,
    pub values: Vec<f64>,
    pub iterations: usize,
    pub residuals: Vec<f64>,
    pub policy: Policy,
    pub start: usize,
    pub stationary: StationaryDistribution,
    pub sojourn: Vec<(ZoneId, f64)>,
    pub summary: Vec<ZoneSummary>,
    pub rollout: Option<RolloutEstimate>,
}

impl SolveOutcome {
    pub fn v_start(&self) -> f64 {
        self.values[self.start]
    }

    /// Zone with the largest share; ties go to the lower id.
    pub fn top_zone(&self) -> (ZoneId, f64) {
        self.sojourn
            .iter()
            .copied()
            .fold((self.sojourn[0].0, f64::NEG_INFINITY), |best, z| {
                if z.1 > best.1 {
                    z
                } else {
                    best
                }
            })
    }
}

pub fn solve_pipeline(
    params: &ModelParams,
    surface: &Surface,
    opts: &SolverOptions,
    start_zone: ZoneId,
    rollout_seed: u64,
) -> Result<SolveOutcome, CliError> {
    let mdp = build_mdp(params, surface)?;
    let vi = mdp_solver::value_iteration(&mdp, opts.tol, opts.max_iter)?;
    let policy = mdp_solver::extract_policy(&mdp, &vi.values);
    let chain = mdp_solver::induced_chain(&mdp, &policy)?;
    let start = mdp
        .index_of(&State::new(start_zone, StateKind::Hop(1)))
        .ok_or_else(|| CliError::Config(format!("no start state in zone {start_zone}")))?;
    let stationary = mdp_solver::stationary_distribution(
        &chain,
        start,
        StationaryOptions {
            tol: opts.stationary_tol,
            max_iter: opts.stationary_max_iter,
        },
    )?;
    let sojourn = mdp_solver::sojourn_by_location(&stationary, mdp.states())
        .into_iter()
        .collect();
    let summary = mdp_solver::policy_summary(&policy, &stationary, mdp.states());
    let rollout = if opts.rollout_trials > 0 {
        Some(mdp_solver::rollout_value_check(
            &mdp,
            &policy,
            start,
            opts.rollout_horizon,
            opts.rollout_trials,
            rollout_seed,
        )?)
    } else {
        None
    };
    Ok(SolveOutcome {
        surface: surface.clone(),
        values: vi.values.values,
        iterations: vi.iterations,
        residuals: vi.residuals,
        mdp,
        policy,
        start,
        stationary,
        sojourn,
        summary,
        rollout,
    })
}

/// Collects output files in memory and writes them with a manifest.
struct OutputSet {
    dir: PathBuf,
    files: Vec<(String, Vec<u8>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_digest: String,
    pub seed: u64,
    pub files: Vec<ManifestEntry>,
}

impl OutputSet {
    fn new(dir: &Path) -> Self {
        OutputSet {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        }
    }

    fn add(&mut self, name: &str, body: String) {
        self.files.push((name.to_string(), body.into_bytes()));
    }

    fn add_json<T: Serialize>(&mut self, name: &str, value: &T) {
        let mut body = serde_json::to_string_pretty(value).expect("serializable");
        body.push('\n');
        self.add(name, body);
    }

    fn write(self, command: &str, config: &ScenarioConfig) -> Result<RunManifest, CliError> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| CliError::Io { path, source }
        };
        fs::create_dir_all(&self.dir).map_err(io(&self.dir))?;
        let mut entries = Vec::with_capacity(self.files.len());
        for (name, body) in &self.files {
            let path = self.dir.join(name);
            fs::write(&path, body).map_err(io(&path))?;
            entries.push(ManifestEntry {
                name: name.clone(),
                bytes: body.len() as u64,
                sha256: hex::encode(Sha256::digest(body)),
            });
        }
        let manifest = RunManifest {
            tool: TOOL_NAME.into(),
            version: TOOL_VERSION.into(),
            command: command.into(),
            config_digest: config.digest(),
            seed: config.seed,
            files: entries,
        };
        let mut text = serde_json::to_string_pretty(&manifest).expect("serializable");
        text.push('\n');
        let tmp = self.dir.join("manifest.json.tmp");
        let dst = self.dir.join("manifest.json");
        fs::write(&tmp, text).map_err(io(&tmp))?;
        fs::rename(&tmp, &dst).map_err(io(&dst))?;
        Ok(manifest)
    }
}

fn state_cols(s: &State) -> String {
    format!("{},{},{}", s.location, s.kind.code(), s.kind.index())
}

fn action_cols(a: &Action) -> String {
    match a.target() {
        Some(t) => format!("{},{t}", a.code()),
        None => format!("{},", a.code()),
    }
}

fn opt_action(a: Option<(Action, f64)>, unvisited: bool) -> String {
    match a {
        Some((a, m)) => format!("{a},{m}"),
        None if unvisited => "unvisited,0".into(),
        None => "none,0".into(),
    }
}

pub fn values_csv(out: &SolveOutcome) -> String {
    let mut s = String::from("state_id,location,kind,index,value\n");
    for (i, st) in out.mdp.states().iter().enumerate() {
        let _ = writeln!(s, "{i},{},{}", state_cols(st), out.values[i]);
    }
    s
}

pub fn policy_csv(out: &SolveOutcome) -> String {
    let mut s = String::from("state_id,location,kind,index,action,target\n");
    for (i, st) in out.mdp.states().iter().enumerate() {
        let _ = writeln!(
            s,
            "{i},{},{}",
            state_cols(st),
            action_cols(&out.policy.action(i))
        );
    }
    s
}

pub fn stationary_csv(out: &SolveOutcome) -> String {
    let mut s = String::from("state_id,location,kind,index,pi\n");
    for (i, st) in out.mdp.states().iter().enumerate() {
        let _ = writeln!(s, "{i},{},{}", state_cols(st), out.stationary.pi[i]);
    }
    s
}

fn label(surface: &Surface, id: ZoneId) -> String {
    surface
        .zone(id)
        .map(|z| z.label.clone())
        .unwrap_or_default()
}

pub fn sojourn_csv(out: &SolveOutcome) -> String {
    let mut s = String::from("zone,label,share\n");
    for (z, share) in &out.sojourn {
        let _ = writeln!(s, "{z},{},{share}", label(&out.surface, *z));
    }
    s
}

pub fn policy_summary_csv(out: &SolveOutcome) -> String {
    let mut s = String::from("zone,label,dominant,dominant_mass,secondary,secondary_mass\n");
    for z in &out.summary {
        let u = z.is_unvisited();
        let _ = writeln!(
            s,
            "{},{},{},{}",
            z.zone,
            label(&out.surface, z.zone),
            opt_action(z.dominant(), u),
            opt_action(z.secondary(), u)
        );
    }
    s
}

#[derive(Debug, Serialize)]
struct SolveResult {
    start_state: String,
    v_start: f64,
    iterations: usize,
    final_residual: f64,
    stationary_residual: f64,
    top_zone: ZoneId,
    top_share: f64,
    rollout: Option<RolloutEstimate>,
}

/// Options shared by every command.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

fn prepare(mut config: ScenarioConfig, opts: &RunOptions) -> (ScenarioConfig, PathBuf) {
    if let Some(seed) = opts.seed {
        config.seed = seed;
    }
    let dir = opts
        .out
        .clone()
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    (config, dir)
}

pub fn cmd_solve(config: ScenarioConfig, opts: &RunOptions) -> Result<RunManifest, CliError> {
    let (config, dir) = prepare(config, opts);
    config.validate_solver()?;
    let surface = config.surface.build()?;
    config.model.validate()?;
    let start_zone = config.start_zone(&surface)?;
    let out = solve_pipeline(
        &config.model,
        &surface,
        &config.solver,
        start_zone,
        config.sub_seed("rollout"),
    )?;

    let mut files = OutputSet::new(&dir);
    files.add("values.csv", values_csv(&out));
    files.add("policy.csv", policy_csv(&out));
    files.add("stationary.csv", stationary_csv(&out));
    files.add("sojourn.csv", sojourn_csv(&out));
    files.add("policy_summary.csv", policy_summary_csv(&out));
    let (top_zone, top_share) = out.top_zone();
    files.add_json(
        "result.json",
        &SolveResult {
            start_state: out.mdp.states()[out.start].to_string(),
            v_start: out.v_start(),
            iterations: out.iterations,
            final_residual: out.residuals.last().copied().unwrap_or(0.0),
            stationary_residual: out.stationary.residual,
            top_zone,
            top_share,
            rollout: out.rollout,
        },
    );
    files.write("solve", &config)
}

/// Reference rows checked by `hopsim`: `H_1`, `H_K`, `P`, `A_1`, `A_{G-1}`
/// under `sh`, and the forced move out of `D`.
pub fn reference_pairs(params: &ModelParams, zone: ZoneId) -> Vec<(State, Action)> {
    let k = params.hop_states();
    let g = params.drop_threshold;
    let mut kinds = vec![
        StateKind::Hop(1),
        StateKind::Hop(k),
        StateKind::Busy,
        StateKind::Attack(1),
    ];
    if g >= 2 {
        kinds.push(StateKind::Attack(g - 1));
    }
    kinds.dedup();
    let mut pairs: Vec<_> = kinds
        .into_iter()
        .map(|k| (State::new(zone, k), Action::StayHop))
        .collect();
    pairs.push((State::new(zone, StateKind::Detected), Action::Relocate));
    pairs
}

pub fn cmd_hopsim(config: ScenarioConfig, opts: &RunOptions) -> Result<RunManifest, CliError> {
    let (config, dir) = prepare(config, opts);
    let p = &config.model;
    let n = config.oracle.n_trials;
    if n == 0 {
        return Err(CliError::Config("oracle.n_trials must be >= 1".into()));
    }
    let surface = config.surface.build()?;
    let (big_m, m, g) = (p.channels, p.sensed_per_slot, p.drop_threshold);
    let mut files = OutputSet::new(&dir);

    let hist = hop_oracle::simulate_physical_sweep(big_m, m, n, config.sub_seed("sweep"))?;
    let mut s = String::from("slot,count,probability\n");
    for (i, (c, pr)) in hist.counts.iter().zip(hist.probabilities()).enumerate() {
        let _ = writeln!(s, "{},{c},{pr}", i + 1);
    }
    files.add("sweep_hist.csv", s);

    // Rows stay empty when the parameters fall outside a component's domain.
    let mut s =
        String::from("channels,sensed,drop_threshold,trials,drops,estimate,closed_form,sigma\n");
    if g >= 1 && g < big_m && m <= big_m - g {
        let e = hop_oracle::simulate_drop_chain(big_m, m, g, n, config.sub_seed("drop"))?;
        let _ = writeln!(
            s,
            "{big_m},{m},{g},{},{},{},{},{}",
            e.n_trials,
            e.drops,
            e.probability(),
            e.closed_form,
            e.sigma()
        );
    }
    files.add("drop_prob.csv", s);

    let rows = hop_oracle::kernel_gap_report(big_m, m, n, config.sub_seed("gap"))?;
    let mut s =
        String::from("slot,analytic,physical,physical_empirical,analytic_hazard,physical_hazard\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.slot,
            r.analytic,
            r.physical,
            r.physical_empirical,
            r.analytic_hazard,
            r.physical_hazard
        );
    }
    files.add("kernel_gap.csv", s);

    let mut s = String::from("state,action,next_state,analytic,empirical,count,trials\n");
    if p.validate().is_ok() {
        let zone = surface.ids()[0];
        for (idx, (st, a)) in reference_pairs(p, zone).into_iter().enumerate() {
            let seed = config.sub_seed(&format!("kernel:{idx}"));
            let emp = hop_oracle::empirical_transition_frequencies(p, &surface, &st, &a, n, seed)?;
            let analytic = crate::mdp_model::transition_row(&st, &a, p, &surface)?;
            let counts = emp.counts.get(&(st, a)).cloned().unwrap_or_default();
            let mut keys: Vec<State> = analytic
                .iter()
                .map(|x| x.0)
                .chain(counts.keys().copied())
                .collect();
            keys.sort();
            keys.dedup();
            for k in keys {
                let ap = analytic.iter().find(|x| x.0 == k).map_or(0.0, |x| x.1);
                let c = counts.get(&k).copied().unwrap_or(0);
                let _ = writeln!(s, "{st},{a},{k},{ap},{},{c},{n}", c as f64 / n as f64);
            }
        }
    }
    files.add("empirical_kernel.csv", s);
    files.write("hopsim", &config)
}

pub fn timeseries_csv(t: &mac_sim::Timeline) -> String {
    let mut s = String::from("scenario,time_s,zone,normalized_throughput,mean_delay_s,phase\n");
    for (name, m) in [("attack", &t.attacked), ("baseline", &t.baseline)] {
        for z in &m.zones {
            for x in &z.series {
                let _ = writeln!(
                    s,
                    "{name},{},{},{},{},{}",
                    x.time_s,
                    z.zone,
                    x.throughput,
                    x.mean_delay_s,
                    x.phase.as_str()
                );
            }
        }
        for x in &m.global {
            let _ = writeln!(
                s,
                "{name},{},global,{},{},{}",
                x.time_s,
                x.throughput,
                x.mean_delay_s,
                x.phase.as_str()
            );
        }
    }
    s
}

pub fn impact_csv(r: &mac_sim::ImpactReport) -> String {
    format!(
        "zonal_drop,global_drop,zonal_delay_rise,global_delay_rise\n{},{},{},{}\n",
        r.zonal_drop, r.global_drop, r.zonal_delay_rise, r.global_delay_rise
    )
}

#[derive(Debug, Serialize)]
struct ZoneSummaryDoc {
    zone: ZoneId,
    benign_throughput: f64,
    attack_throughput: f64,
    benign_delay_s: f64,
    attack_delay_s: f64,
    baseline_attack_window_throughput: f64,
    baseline_attack_window_delay_s: f64,
    idle_ns: u64,
    success_ns: u64,
    collision_ns: u64,
    elapsed_ns: u64,
}

#[derive(Debug, Serialize)]
struct MacSummaryDoc {
    impact: mac_sim::ImpactReport,
    zones: Vec<ZoneSummaryDoc>,
}

pub fn run_macsim(
    scenario: &MacScenario,
) -> Result<(mac_sim::Timeline, mac_sim::ImpactReport), CliError> {
    let t = mac_sim::benign_vs_attack_timeline(scenario)?;
    let r = mac_sim::zonal_vs_global(&t)?;
    Ok((t, r))
}

pub fn cmd_macsim(config: ScenarioConfig, opts: &RunOptions) -> Result<RunManifest, CliError> {
    let (config, dir) = prepare(config, opts);
    let sc = config.mac.scenario(config.sub_seed("mac"));
    sc.validate()?;
    let (t, r) = run_macsim(&sc)?;
    let mut files = OutputSet::new(&dir);
    files.add("timeseries.csv", timeseries_csv(&t));
    files.add("impact.csv", impact_csv(&r));
    let zones = t
        .attacked
        .zones
        .iter()
        .zip(&t.baseline.zones)
        .map(|(a, b)| ZoneSummaryDoc {
            zone: a.zone,
            benign_throughput: a.benign.throughput(),
            attack_throughput: a.attack.throughput(),
            benign_delay_s: a.benign.mean_delay_s(),
            attack_delay_s: a.attack.mean_delay_s(),
            baseline_attack_window_throughput: b.attack.throughput(),
            baseline_attack_window_delay_s: b.attack.mean_delay_s(),
            idle_ns: a.idle_ns,
            success_ns: a.success_ns,
            collision_ns: a.collision_ns,
            elapsed_ns: a.elapsed_ns,
        })
        .collect();
    files.add_json("summary.json", &MacSummaryDoc { impact: r, zones });
    files.write("macsim", &config)
}

/// Scalar knobs accepted by `sweep`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    IdsC,
    Discount,
    Channels,
    Sensed,
    DropThreshold,
    MiniSlots,
    Alpha,
    Beta,
    RewardAttack,
    RewardDrop,
    CostBusy,
    CostMove,
    CostHop,
    CostDetect,
    Weight(ZoneId),
    MaliciousCw,
}

impl SweepAxis {
    pub fn parse(name: &str) -> Result<Self, CliError> {
        use SweepAxis::*;
        Ok(match name {
            "c" | "ids_c" => IdsC,
            "delta" | "discount" => Discount,
            "M" | "channels" => Channels,
            "m" | "sensed_per_slot" => Sensed,
            "G" | "drop_threshold" => DropThreshold,
            "q" | "mini_slots" => MiniSlots,
            "alpha" => Alpha,
            "beta" => Beta,
            "reward_attack" => RewardAttack,
            "reward_drop" => RewardDrop,
            "cost_busy" => CostBusy,
            "cost_move" => CostMove,
            "cost_hop" => CostHop,
            "cost_detect" => CostDetect,
            "malicious_cw" => MaliciousCw,
            other => match other.strip_prefix("weight:").map(str::parse::<ZoneId>) {
                Some(Ok(id)) => Weight(id),
                _ => return Err(CliError::Config(format!("unknown sweep axis {other:?}"))),
            },
        })
    }

    fn is_integer(self) -> bool {
        use SweepAxis::*;
        matches!(
            self,
            Channels | Sensed | DropThreshold | MiniSlots | MaliciousCw
        )
    }

    fn apply(self, cfg: &mut ScenarioConfig, v: f64) -> Result<(), CliError> {
        use SweepAxis::*;
        if self.is_integer() && (v.fract() != 0.0 || v < 0.0 || v > f64::from(u32::MAX)) {
            return Err(CliError::Config(format!(
                "axis needs a nonnegative integer, got {v}"
            )));
        }
        let p = &mut cfg.model;
        match self {
            IdsC => p.ids_c = v,
            Discount => p.discount = v,
            Channels => p.channels = v as u32,
            Sensed => p.sensed_per_slot = v as u32,
            DropThreshold => p.drop_threshold = v as u32,
            MiniSlots => p.mini_slots = v as u32,
            Alpha => p.alpha = v,
            Beta => p.beta = v,
            RewardAttack => p.reward_attack = v,
            RewardDrop => p.reward_drop = v,
            CostBusy => p.cost_busy = v,
            CostMove => p.cost_move = v,
            CostHop => p.cost_hop = v,
            CostDetect => p.cost_detect = v,
            Weight(id) => {
                let z = cfg
                    .surface
                    .zones
                    .iter_mut()
                    .find(|z| z.id == id)
                    .ok_or_else(|| CliError::Config(format!("no zone {id} to reweight")))?;
                z.weight = v;
            }
            MaliciousCw => {
                let w = v as u32;
                for s in cfg.mac.zones.iter_mut().flat_map(|z| z.stations.iter_mut()) {
                    if s.role.is_malicious() {
                        s.cw_min = w;
                        s.cw_max = w;
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub v_start: Option<f64>,
    pub top_zone: Option<ZoneId>,
    pub top_share: Option<f64>,
    pub drop_prob: Option<f64>,
    pub zonal_drop: Option<f64>,
    pub global_drop: Option<f64>,
}

/// Evaluates every point of a sweep. Points run concurrently and come back
/// in input order.
pub fn run_sweep(
    config: &ScenarioConfig,
    axis: SweepAxis,
    values: &[f64],
) -> Result<Vec<SweepRow>, CliError> {
    if values.is_empty() {
        return Err(CliError::Config("sweep needs at least one value".into()));
    }
    let mut points = Vec::with_capacity(values.len());
    for &v in values {
        let mut c = config.clone();
        axis.apply(&mut c, v)?;
        points.push((v, c));
    }
    points
        .into_par_iter()
        .map(|(v, c)| {
            if axis == SweepAxis::MaliciousCw {
                let sc = c.mac.scenario(c.sub_seed("mac"));
                sc.validate()?;
                let (_, r) = run_macsim(&sc)?;
                return Ok(SweepRow {
                    value: v,
                    v_start: None,
                    top_zone: None,
                    top_share: None,
                    drop_prob: None,
                    zonal_drop: Some(r.zonal_drop),
                    global_drop: Some(r.global_drop),
                });
            }
            c.validate_solver()?;
            let surface = c.surface.build()?;
            c.model.validate()?;
            let opts = SolverOptions {
                rollout_trials: 0,
                ..c.solver.clone()
            };
            let out = solve_pipeline(&c.model, &surface, &opts, c.start_zone(&surface)?, 0)?;
            let (z, share) = out.top_zone();
            let p = &c.model;
            Ok(SweepRow {
                value: v,
                v_start: Some(out.v_start()),
                top_zone: Some(z),
                top_share: Some(share),
                drop_prob: Some(hop_oracle::drop_closed_form(
                    p.channels,
                    p.sensed_per_slot,
                    p.drop_threshold,
                )),
                zonal_drop: None,
                global_drop: None,
            })
        })
        .collect()
}

fn cell<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn sweep_csv(axis_name: &str, rows: &[SweepRow]) -> String {
    let mut s =
        String::from("axis,value,v_start,top_zone,top_share,drop_prob,zonal_drop,global_drop\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{axis_name},{},{},{},{},{},{},{}",
            r.value,
            cell(r.v_start),
            cell(r.top_zone),
            cell(r.top_share),
            cell(r.drop_prob),
            cell(r.zonal_drop),
            cell(r.global_drop)
        );
    }
    s
}

pub fn cmd_sweep(
    config: ScenarioConfig,
    axis_name: &str,
    values: &[f64],
    opts: &RunOptions,
) -> Result<RunManifest, CliError> {
    let (config, dir) = prepare(config, opts);
    let axis = SweepAxis::parse(axis_name)?;
    let rows = run_sweep(&config, axis, values)?;
    let mut files = OutputSet::new(&dir);
    files.add("sweep.csv", sweep_csv(axis_name, &rows));
    files.write("sweep", &config)
}

/// Parses a comma-separated list of numbers.
pub fn parse_values(list: &str) -> Result<Vec<f64>, CliError> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| CliError::Config(format!("not a number: {s:?}")))
        })
        .collect()
}

/// Re-hashes every file listed in a manifest and reports mismatches.
pub fn verify_manifest(dir: &Path, manifest: &RunManifest) -> Vec<String> {
    manifest
        .files
        .iter()
        .filter_map(|e| match fs::read(dir.join(&e.name)) {
            Ok(b) if hex::encode(Sha256::digest(&b)) == e.sha256 => None,
            Ok(_) => Some(format!("{}: checksum mismatch", e.name)),
            Err(err) => Some(format!("{}: {err}", e.name)),
        })
        .collect()
}
