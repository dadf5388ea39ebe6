//! Slotted CSMA/CA coexistence simulator.
//!
//! Every zone is an interference-isolated channel shared by saturated
//! stations. Each station draws a backoff uniformly from `[0, CW-1]`, counts
//! it down over idle slots and transmits when it reaches zero. Two or more
//! simultaneous transmitters collide. Honest stations double CW on a
//! collision and drop the packet after `retry_limit` failures; the malicious
//! AP keeps a fixed, small CW. A station's access delay runs from the moment
//! it starts contending until its next successful transmission, so time
//! spent on dropped packets is charged to the packet that finally gets
//! through. Time is kept in integer nanoseconds so that
//! the idle/success/collision split of every zone is exact.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::surface::ZoneId;

const NS_PER_S: f64 = 1e9;

#[derive(Debug, Error, PartialEq)]
pub enum MacError {
    #[error("invalid MAC scenario: {0}")]
    Scenario(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    VictimBs,
    VictimUe,
    BenignAp,
    MaliciousAp,
}

impl Role {
    pub fn is_malicious(self) -> bool {
        self == Role::MaliciousAp
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationConfig {
    pub role: Role,
    pub cw_min: u32,
    pub cw_max: u32,
    pub retry_limit: u32,
}

impl StationConfig {
    pub fn honest(role: Role, retry_limit: u32) -> Self {
        StationConfig {
            role,
            cw_min: 16,
            cw_max: 1024,
            retry_limit,
        }
    }

    /// Selfish AP with a fixed contention window.
    pub fn malicious(cw: u32) -> Self {
        StationConfig {
            role: Role::MaliciousAp,
            cw_min: cw,
            cw_max: cw,
            retry_limit: u32::MAX,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MacZone {
    pub id: ZoneId,
    pub stations: Vec<StationConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MacScenario {
    pub zones: Vec<MacZone>,
    pub slot_time_us: u32,
    pub payload_bytes: u32,
    pub phy_rate_bps: f64,
    /// Fixed per-transmission overhead (DIFS plus the ACK exchange).
    pub overhead_us: u32,
    pub sim_duration_s: f64,
    pub attack_start_s: f64,
    pub attack_zone: ZoneId,
    pub sample_interval_s: f64,
    pub seed: u64,
}

/// Victim cell of one base station and four UEs.
fn victim_cell(retry_limit: u32) -> Vec<StationConfig> {
    let mut v = vec![StationConfig::honest(Role::VictimBs, retry_limit)];
    v.extend((0..4).map(|_| StationConfig::honest(Role::VictimUe, retry_limit)));
    v
}

impl Default for MacScenario {
    fn default() -> Self {
        let retry = 4;
        let mut zones: Vec<MacZone> = (1..=3)
            .map(|id| MacZone {
                id,
                stations: victim_cell(retry),
            })
            .collect();
        zones[0].stations.push(StationConfig::malicious(2));
        MacScenario {
            zones,
            slot_time_us: 9,
            payload_bytes: 1000,
            phy_rate_bps: 155e6,
            overhead_us: 60,
            sim_duration_s: 40.0,
            attack_start_s: 20.0,
            attack_zone: 1,
            sample_interval_s: 0.5,
            seed: 1,
        }
    }
}

impl MacScenario {
    pub fn slot_ns(&self) -> u64 {
        u64::from(self.slot_time_us) * 1000
    }

    pub fn payload_ns(&self) -> u64 {
        (f64::from(self.payload_bytes) * 8.0 * NS_PER_S / self.phy_rate_bps).ceil() as u64
    }

    pub fn overhead_ns(&self) -> u64 {
        u64::from(self.overhead_us) * 1000
    }

    /// Channel occupancy of one transmission attempt, successful or not.
    pub fn tx_ns(&self) -> u64 {
        self.payload_ns() + self.overhead_ns()
    }

    fn duration_ns(&self) -> u64 {
        (self.sim_duration_s * NS_PER_S).round() as u64
    }

    fn attack_ns(&self) -> u64 {
        (self.attack_start_s * NS_PER_S).round() as u64
    }

    /// Saturated single-station throughput for a window of `cw` slots.
    pub fn single_station_throughput(&self, cw: u32) -> f64 {
        let p = self.payload_ns() as f64;
        let backoff = f64::from(cw - 1) / 2.0 * self.slot_ns() as f64;
        p / (p + self.overhead_ns() as f64 + backoff)
    }

    /// Upper bound on any zone's normalized throughput (zero backoff).
    pub fn throughput_bound(&self) -> f64 {
        self.single_station_throughput(1)
    }

    pub fn has_attacker(&self) -> bool {
        self.zones
            .iter()
            .flat_map(|z| &z.stations)
            .any(|s| s.role.is_malicious())
    }

    /// Sets the fixed window of every malicious station.
    pub fn with_malicious_cw(mut self, cw: u32) -> Self {
        for s in self.zones.iter_mut().flat_map(|z| z.stations.iter_mut()) {
            if s.role.is_malicious() {
                s.cw_min = cw;
                s.cw_max = cw;
            }
        }
        self
    }

    /// Same roster with every malicious station removed.
    pub fn without_attacker(mut self) -> Self {
        for z in &mut self.zones {
            z.stations.retain(|s| !s.role.is_malicious());
        }
        self
    }

    pub fn validate(&self) -> Result<(), MacError> {
        let bad = |s: String| Err(MacError::Scenario(s));
        if self.zones.is_empty() {
            return bad("at least one zone is required".into());
        }
        let mut ids: Vec<_> = self.zones.iter().map(|z| z.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return bad("duplicate zone ids".into());
        }
        if !ids.contains(&self.attack_zone) {
            return bad(format!("attack zone {} is not listed", self.attack_zone));
        }
        if self.slot_time_us == 0 || self.payload_bytes == 0 {
            return bad("slot time and payload must be positive".into());
        }
        if !(self.phy_rate_bps > 0.0 && self.phy_rate_bps.is_finite()) {
            return bad("phy rate must be positive".into());
        }
        if !(self.sim_duration_s > 0.0 && self.sim_duration_s.is_finite()) {
            return bad("duration must be positive".into());
        }
        if !(self.attack_start_s >= 0.0 && self.attack_start_s <= self.sim_duration_s) {
            return bad("attack start must lie in [0, duration]".into());
        }
        if !(self.sample_interval_s > 0.0 && self.sample_interval_s <= self.sim_duration_s) {
            return bad("sample interval must lie in (0, duration]".into());
        }
        for z in &self.zones {
            for s in &z.stations {
                if s.cw_min < 1 || s.cw_min > s.cw_max || s.retry_limit < 1 {
                    return bad(format!("bad station {s:?} in zone {}", z.id));
                }
                if s.role.is_malicious() {
                    if z.id != self.attack_zone {
                        return bad(format!("malicious AP outside attack zone in {}", z.id));
                    }
                    if s.cw_min != s.cw_max {
                        return bad("malicious AP needs cw_min == cw_max".into());
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Benign,
    Attack,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Benign => "benign",
            Phase::Attack => "attack",
        }
    }
}

/// Running averages from t = 0 at one sample time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sample {
    pub time_s: f64,
    pub throughput: f64,
    pub mean_delay_s: f64,
    pub phase: Phase,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct PhaseStats {
    pub duration_ns: u64,
    pub delivered_ns: u64,
    pub delay_sum_ns: u128,
    pub delay_count: u64,
}

impl PhaseStats {
    pub fn throughput(&self) -> f64 {
        if self.duration_ns == 0 {
            0.0
        } else {
            self.delivered_ns as f64 / self.duration_ns as f64
        }
    }

    pub fn mean_delay_s(&self) -> f64 {
        if self.delay_count == 0 {
            0.0
        } else {
            self.delay_sum_ns as f64 / self.delay_count as f64 / NS_PER_S
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct StationStats {
    pub successes: u64,
    pub collisions: u64,
    pub drops: u64,
    pub delivered_ns: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZoneMetrics {
    pub zone: ZoneId,
    /// Zone clock at the end of the run; the last transmission may overrun
    /// the nominal duration.
    pub elapsed_ns: u64,
    pub idle_ns: u64,
    pub success_ns: u64,
    pub collision_ns: u64,
    pub stations: Vec<StationStats>,
    pub benign: PhaseStats,
    pub attack: PhaseStats,
    pub series: Vec<Sample>,
}

impl ZoneMetrics {
    /// Honest-station normalized throughput over the whole run.
    pub fn throughput(&self) -> f64 {
        let delivered = self.benign.delivered_ns + self.attack.delivered_ns;
        delivered as f64 / self.elapsed_ns as f64
    }

    pub fn station_throughput(&self, idx: usize) -> f64 {
        self.stations[idx].delivered_ns as f64 / self.elapsed_ns as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub zones: Vec<ZoneMetrics>,
    /// Global series: zone throughputs and zone mean delays, each averaged
    /// over zones.
    pub global: Vec<Sample>,
}

impl Metrics {
    pub fn zone(&self, id: ZoneId) -> Option<&ZoneMetrics> {
        self.zones.iter().find(|z| z.zone == id)
    }
}

struct Station {
    cfg: StationConfig,
    rng: ChaCha8Rng,
    cw: u32,
    backoff: u32,
    retries: u32,
    hol_ns: u64,
    active: bool,
}

impl Station {
    fn redraw(&mut self) {
        self.backoff = self.rng.gen_range(0..self.cw);
    }
}

#[derive(Default, Clone, Copy)]
struct Running {
    delivered_ns: u64,
    delay_sum_ns: u128,
    delay_count: u64,
}

fn simulate_zone(sc: &MacScenario, zone: &MacZone, attacker: bool) -> ZoneMetrics {
    let slot = sc.slot_ns();
    let tx = sc.tx_ns();
    let payload = sc.payload_ns();
    let end = sc.duration_ns();
    let attack_at = sc.attack_ns().min(end);
    let interval = (sc.sample_interval_s * NS_PER_S).round() as u64;

    let mut stations: Vec<Station> = zone
        .stations
        .iter()
        .enumerate()
        .map(|(i, cfg)| {
            let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
            rng.set_stream((u64::from(zone.id) << 32) | i as u64);
            let mut s = Station {
                cfg: cfg.clone(),
                rng,
                cw: cfg.cw_min,
                backoff: 0,
                retries: 0,
                hol_ns: 0,
                active: !cfg.role.is_malicious(),
            };
            if s.active {
                s.redraw();
            }
            s
        })
        .collect();
    let mut pending_attacker = attacker && stations.iter().any(|s| !s.active);

    let mut clock: u64 = 0;
    let (mut idle, mut success_t, mut collision_t) = (0u64, 0u64, 0u64);
    let mut stats = vec![StationStats::default(); stations.len()];
    let mut benign = PhaseStats::default();
    let mut attack = PhaseStats::default();
    let mut run = Running::default();
    let mut series = Vec::new();
    let mut next_sample = interval;

    let record = |series: &mut Vec<Sample>, t: u64, run: &Running| {
        series.push(Sample {
            time_s: t as f64 / NS_PER_S,
            throughput: run.delivered_ns as f64 / t as f64,
            mean_delay_s: if run.delay_count == 0 {
                0.0
            } else {
                run.delay_sum_ns as f64 / run.delay_count as f64 / NS_PER_S
            },
            phase: if t <= attack_at {
                Phase::Benign
            } else {
                Phase::Attack
            },
        });
    };

    while clock < end {
        if pending_attacker && clock >= attack_at {
            for s in stations.iter_mut().filter(|s| s.cfg.role.is_malicious()) {
                s.active = true;
                s.hol_ns = clock;
                s.redraw();
            }
            pending_attacker = false;
        }
        let min_backoff = stations
            .iter()
            .filter(|s| s.active)
            .map(|s| s.backoff)
            .min();
        let remaining_slots = (end - clock).div_ceil(slot);
        let idle_slots = match min_backoff {
            Some(0) => 0,
            Some(b) => u64::from(b).min(remaining_slots),
            None => remaining_slots,
        };
        let idle_slots = if pending_attacker && idle_slots > 0 {
            idle_slots.min((attack_at - clock).div_ceil(slot).max(1))
        } else {
            idle_slots
        };

        if idle_slots > 0 {
            let next = clock + idle_slots * slot;
            while next_sample <= end && next_sample < next {
                record(&mut series, next_sample, &run);
                next_sample += interval;
            }
            for s in stations.iter_mut().filter(|s| s.active) {
                s.backoff -= idle_slots as u32;
            }
            idle += idle_slots * slot;
            clock = next;
            continue;
        }

        let done = clock + tx;
        while next_sample <= end && next_sample < done {
            record(&mut series, next_sample, &run);
            next_sample += interval;
        }
        let phase = if done <= attack_at {
            &mut benign
        } else {
            &mut attack
        };
        let senders: Vec<usize> = (0..stations.len())
            .filter(|&i| stations[i].active && stations[i].backoff == 0)
            .collect();
        if let [only] = senders[..] {
            success_t += tx;
            let s = &mut stations[only];
            stats[only].successes += 1;
            stats[only].delivered_ns += payload;
            if !s.cfg.role.is_malicious() {
                let delay = u128::from(done - s.hol_ns);
                phase.delivered_ns += payload;
                phase.delay_sum_ns += delay;
                phase.delay_count += 1;
                run.delivered_ns += payload;
                run.delay_sum_ns += delay;
                run.delay_count += 1;
            }
            s.hol_ns = done;
            s.retries = 0;
            s.cw = s.cfg.cw_min;
            s.redraw();
        } else {
            collision_t += tx;
            for &i in &senders {
                let s = &mut stations[i];
                stats[i].collisions += 1;
                s.retries += 1;
                if s.retries >= s.cfg.retry_limit {
                    stats[i].drops += 1;
                    s.retries = 0;
                    s.cw = s.cfg.cw_min;
                } else {
                    s.cw = (s.cw.saturating_mul(2)).min(s.cfg.cw_max);
                }
                s.redraw();
            }
        }
        clock = done;
    }
    while next_sample <= end {
        record(&mut series, next_sample, &run);
        next_sample += interval;
    }
    benign.duration_ns = attack_at;
    attack.duration_ns = clock - attack_at;

    ZoneMetrics {
        zone: zone.id,
        elapsed_ns: clock,
        idle_ns: idle,
        success_ns: success_t,
        collision_ns: collision_t,
        stations: stats,
        benign,
        attack,
        series,
    }
}

fn global_series(zones: &[ZoneMetrics], attack_at_s: f64) -> Vec<Sample> {
    let n = zones.first().map_or(0, |z| z.series.len());
    (0..n)
        .map(|k| {
            let time_s = zones[0].series[k].time_s;
            let throughput =
                zones.iter().map(|z| z.series[k].throughput).sum::<f64>() / zones.len() as f64;
            let mean_delay_s =
                zones.iter().map(|z| z.series[k].mean_delay_s).sum::<f64>() / zones.len() as f64;
            Sample {
                time_s,
                throughput,
                mean_delay_s,
                phase: if time_s <= attack_at_s {
                    Phase::Benign
                } else {
                    Phase::Attack
                },
            }
        })
        .collect()
}

fn run(sc: &MacScenario, attacker: bool) -> Result<Metrics, MacError> {
    sc.validate()?;
    let zones: Vec<ZoneMetrics> = sc
        .zones
        .iter()
        .map(|z| simulate_zone(sc, z, attacker))
        .collect();
    let global = global_series(&zones, sc.attack_start_s);
    Ok(Metrics { zones, global })
}

/// Runs the scenario. Malicious stations stay silent until `attack_start_s`.
pub fn run_mac_sim(scenario: &MacScenario) -> Result<Metrics, MacError> {
    run(scenario, true)
}

/// Attacked run together with the benign counterfactual of the same seed,
/// in which malicious stations never activate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Timeline {
    pub attack_start_s: f64,
    pub attack_zone: ZoneId,
    pub attacked: Metrics,
    pub baseline: Metrics,
}

pub fn benign_vs_attack_timeline(scenario: &MacScenario) -> Result<Timeline, MacError> {
    Ok(Timeline {
        attack_start_s: scenario.attack_start_s,
        attack_zone: scenario.attack_zone,
        attacked: run(scenario, true)?,
        baseline: run(scenario, false)?,
    })
}

/// Percent changes over the attack window, attacked run against baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ImpactReport {
    pub zonal_drop: f64,
    pub global_drop: f64,
    pub zonal_delay_rise: f64,
    pub global_delay_rise: f64,
}

/// Percent change from `from` to `to`; zero when `from` is zero.
fn pct(from: f64, to: f64) -> f64 {
    if from == 0.0 || to == from {
        0.0
    } else {
        (to - from) / from * 100.0
    }
}

/// Percent decrease from `base` to `now`.
fn drop_pct(base: f64, now: f64) -> f64 {
    if base == 0.0 || now == base {
        0.0
    } else {
        (base - now) / base * 100.0
    }
}

fn mean_zone_delay(zones: &[ZoneMetrics]) -> f64 {
    zones.iter().map(|z| z.attack.mean_delay_s()).sum::<f64>() / zones.len() as f64
}

pub fn zonal_vs_global(t: &Timeline) -> Result<ImpactReport, MacError> {
    let zone = |m: &Metrics| {
        m.zone(t.attack_zone).cloned().ok_or_else(|| {
            MacError::Scenario(format!(
                "attack zone {} missing from metrics",
                t.attack_zone
            ))
        })
    };
    let (za, zb) = (zone(&t.attacked)?, zone(&t.baseline)?);
    let mean_tp = |m: &Metrics| {
        m.zones.iter().map(|z| z.attack.throughput()).sum::<f64>() / m.zones.len() as f64
    };
    Ok(ImpactReport {
        zonal_drop: drop_pct(zb.attack.throughput(), za.attack.throughput()),
        global_drop: drop_pct(mean_tp(&t.baseline), mean_tp(&t.attacked)),
        zonal_delay_rise: pct(zb.attack.mean_delay_s(), za.attack.mean_delay_s()),
        global_delay_rise: pct(
            mean_zone_delay(&t.baseline.zones),
            mean_zone_delay(&t.attacked.zones),
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_zone(stations: Vec<StationConfig>, duration: f64) -> MacScenario {
        MacScenario {
            zones: vec![MacZone { id: 1, stations }],
            sim_duration_s: duration,
            attack_start_s: 0.0,
            sample_interval_s: 1.0,
            ..MacScenario::default()
        }
    }

    #[test]
    fn single_station_matches_closed_form() {
        let sc = one_zone(vec![StationConfig::honest(Role::VictimBs, 4)], 20.0);
        let m = run_mac_sim(&sc).unwrap();
        let z = &m.zones[0];
        assert_eq!(z.collision_ns, 0);
        let expect = sc.single_station_throughput(16);
        assert!(
            (z.throughput() - expect).abs() / expect < 0.01,
            "{} vs {expect}",
            z.throughput()
        );
    }

    #[test]
    fn time_is_conserved() {
        let m = run_mac_sim(&MacScenario {
            sim_duration_s: 5.0,
            attack_start_s: 2.0,
            ..MacScenario::default()
        })
        .unwrap();
        for z in &m.zones {
            assert_eq!(z.idle_ns + z.success_ns + z.collision_ns, z.elapsed_ns);
            assert!(z.collision_ns > 0);
        }
    }

    #[test]
    fn empty_zone_idles() {
        let sc = one_zone(vec![], 1.0);
        let m = run_mac_sim(&sc).unwrap();
        assert_eq!(m.zones[0].idle_ns, m.zones[0].elapsed_ns);
        assert_eq!(m.zones[0].throughput(), 0.0);
    }

    #[test]
    fn fixed_cw_one_starves_victim() {
        let sc = one_zone(
            vec![
                StationConfig::honest(Role::VictimBs, 4),
                StationConfig::malicious(1),
            ],
            2.0,
        );
        let m = run_mac_sim(&sc).unwrap();
        // The victim's backoff never sees an idle slot, so it never transmits.
        let v = &m.zones[0].stations[0];
        assert_eq!((v.successes, v.collisions, v.drops), (0, 0, 0));
        assert_eq!(m.zones[0].idle_ns, 0);
    }

    #[test]
    fn validation() {
        assert!(MacScenario::default().validate().is_ok());
        let sc = MacScenario {
            attack_start_s: 50.0,
            ..MacScenario::default()
        };
        assert!(sc.validate().is_err());
        let mut sc = MacScenario::default();
        sc.zones[1].stations.push(StationConfig::malicious(2));
        assert!(sc.validate().is_err());
        let mut sc = MacScenario::default();
        sc.zones[0].stations[0].cw_min = 0;
        assert!(sc.validate().is_err());
        let sc = MacScenario {
            attack_zone: 9,
            ..MacScenario::default()
        };
        assert!(sc.validate().is_err());
        let sc = MacScenario {
            payload_bytes: 0,
            ..MacScenario::default()
        };
        assert!(sc.validate().is_err());
    }

    #[test]
    fn samples_are_ordered_and_bounded() {
        let sc = MacScenario {
            sim_duration_s: 4.0,
            attack_start_s: 2.0,
            sample_interval_s: 0.25,
            ..MacScenario::default()
        };
        let m = run_mac_sim(&sc).unwrap();
        let bound = sc.throughput_bound();
        for z in &m.zones {
            assert_eq!(z.series.len(), 16);
            assert!(z.series.windows(2).all(|w| w[0].time_s < w[1].time_s));
            assert!(z
                .series
                .iter()
                .all(|s| s.throughput <= bound && s.mean_delay_s >= 0.0));
            assert_eq!(z.series[7].phase, Phase::Benign);
            assert_eq!(z.series[8].phase, Phase::Attack);
        }
        assert_eq!(m.global.len(), 16);
    }
}
