//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use pacman_core::cli::{self, ScenarioConfig, DEFAULT_WEIGHTS};
use pacman_core::hop_oracle;
use pacman_core::mac_sim::{self, MacScenario, MacZone, Role, StationConfig};
use pacman_core::mdp_model::{
    build_mdp, transition_row, Action, Choice, Mdp, ModelParams, Outcome, State, StateKind,
};
use pacman_core::mdp_solver;
use pacman_core::surface::Surface;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(ok: bool, msg: String) -> Check {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn within(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    if elapsed.as_secs_f64() <= limit_s {
        Ok(())
    } else {
        Err(format!(
            "took {:.2}s, limit {limit_s}s",
            elapsed.as_secs_f64()
        ))
    }
}

fn hex7() -> Surface {
    Surface::hex7(&DEFAULT_WEIGHTS).unwrap()
}

fn kernel_rows() -> Check {
    let t = Instant::now();
    let surface = hex7();
    let mdp = build_mdp(&ModelParams::default(), &surface).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    let mut rows = 0;
    for s in 0..mdp.len() {
        for c in mdp.choices(s) {
            let sum: f64 = c.outcomes.iter().map(|o| o.prob).sum();
            worst = worst.max((sum - 1.0).abs());
            if c.outcomes.iter().any(|o| !(0.0..=1.0).contains(&o.prob)) {
                return Err(format!("entry outside [0,1] at {}", mdp.states()[s]));
            }
            rows += 1;
        }
    }
    within(t.elapsed(), 1.0)?;
    ensure(
        mdp.len() == 70 && worst <= 1e-12,
        format!("{} states, {rows} rows, max |sum-1| = {worst:e}", mdp.len()),
    )
}

fn streak_monotone() -> Check {
    let surface = Surface::single(1, 1.0).unwrap();
    let mut checked = 0;
    for big_m in [6, 10, 20] {
        for m in [1, 2] {
            for g in [2, 4] {
                let p = ModelParams {
                    channels: big_m,
                    sensed_per_slot: m,
                    drop_threshold: g,
                    ..ModelParams::default()
                };
                let h1 = |j| -> Result<f64, String> {
                    let row = transition_row(
                        &State::new(1, StateKind::Attack(j)),
                        &Action::StayHop,
                        &p,
                        &surface,
                    )
                    .map_err(|e| e.to_string())?;
                    Ok(row
                        .iter()
                        .find(|(s, _)| s.kind == StateKind::Hop(1))
                        .map_or(0.0, |r| r.1))
                };
                for j in 1..g - 1 {
                    let (a, b) = (h1(j)?, h1(j + 1)?);
                    if a <= b {
                        return Err(format!("(M,m,G)=({big_m},{m},{g}) j={j}: {a} <= {b}"));
                    }
                    checked += 1;
                }
            }
        }
    }
    Ok(format!("{checked} strict decreases over 12 grid points"))
}

fn oracle_rows() -> Check {
    let p = ModelParams::default();
    let surface = hex7();
    let n = 1_000_000;
    let mut worst = 0.0f64;
    let h1 = transition_row(
        &State::new(1, StateKind::Hop(1)),
        &Action::StayHop,
        &p,
        &surface,
    )
    .map_err(|e| e.to_string())?;
    let mut h1_probs: Vec<f64> = h1.iter().map(|r| r.1).collect();
    h1_probs.sort_by(f64::total_cmp);
    let expect = [0.1342, 0.1458, 0.72];
    if h1_probs.len() != 3
        || h1_probs
            .iter()
            .zip(expect)
            .any(|(a, b)| (a - b).abs() > 1e-12)
    {
        return Err(format!("H1 row is {h1_probs:?}"));
    }
    for (idx, (state, action)) in cli::reference_pairs(&p, 1)
        .into_iter()
        .filter(|(s, _)| s.kind != StateKind::Detected)
        .enumerate()
    {
        let row = transition_row(&state, &action, &p, &surface).map_err(|e| e.to_string())?;
        let emp = hop_oracle::empirical_transition_frequencies(
            &p,
            &surface,
            &state,
            &action,
            n,
            77 + idx as u64,
        )
        .map_err(|e| e.to_string())?;
        let freq: BTreeMap<State, f64> = emp.distribution(&state, &action).into_iter().collect();
        for k in row.iter().map(|r| r.0).chain(freq.keys().copied()) {
            let a = row.iter().find(|r| r.0 == k).map_or(0.0, |r| r.1);
            let e = freq.get(&k).copied().unwrap_or(0.0);
            worst = worst.max((a - e).abs());
        }
    }
    ensure(
        worst <= 0.005,
        format!("max |empirical - analytic| = {worst:.5} over 5 rows"),
    )
}

fn drop_chain() -> Check {
    let t = Instant::now();
    let e =
        hop_oracle::simulate_drop_chain(10, 2, 4, 1_000_000, 4242).map_err(|e| e.to_string())?;
    within(t.elapsed(), 30.0)?;
    let target = 1.0 / 63.0;
    let z = (e.probability() - target) / e.sigma();
    ensure(
        (e.closed_form - target).abs() < 1e-15 && z.abs() <= 3.0,
        format!("estimate {:.6} vs 1/63, z = {z:.2}", e.probability()),
    )
}

fn solver() -> Check {
    let single = Mdp::from_parts(
        vec![State::new(1, StateKind::Hop(1))],
        vec![vec![Choice {
            action: Action::StayHop,
            outcomes: vec![Outcome {
                next: 0,
                prob: 1.0,
                reward: 3.0,
            }],
        }]],
        0.95,
    )
    .map_err(|e| e.to_string())?;
    let v = mdp_solver::value_iteration(&single, 1e-13, 100_000).map_err(|e| e.to_string())?;
    let gap_a = (v.values.get(0) - 3.0 / 0.05).abs();
    if gap_a > 1e-9 {
        return Err(format!("(a) self-loop gap {gap_a:e}"));
    }

    let p = ModelParams::default();
    let mdp = build_mdp(&p, &hex7()).map_err(|e| e.to_string())?;
    let vi = mdp_solver::value_iteration(&mdp, 1e-10, 100_000).map_err(|e| e.to_string())?;
    if !vi.contracts(p.discount, 1e-9) {
        return Err("(b) residuals do not contract by the discount".into());
    }

    let policy = mdp_solver::extract_policy(&mdp, &vi.values);
    let start = mdp.index_of(&State::new(1, StateKind::Hop(1))).unwrap();
    let r = mdp_solver::rollout_value_check(&mdp, &policy, start, 500, 100_000, 99)
        .map_err(|e| e.to_string())?;
    let v0 = vi.values.get(start);
    if !r.covers(v0, 3.0) {
        return Err(format!(
            "(c) rollout {} +- {} vs V = {v0}",
            r.mean, r.std_err
        ));
    }

    let scaled = mdp.with_scaled_rewards(2.0);
    let vs = mdp_solver::value_iteration(&scaled, 1e-10, 100_000).map_err(|e| e.to_string())?;
    if mdp_solver::extract_policy(&scaled, &vs.values) != policy {
        return Err("(d) policy changed under reward scaling".into());
    }
    Ok(format!(
        "(a) gap {gap_a:.1e}; (b) {} iterations contract; (c) z = {:.2}; (d) policy invariant",
        vi.iterations,
        (r.mean - v0) / r.std_err
    ))
}

fn s7_sojourn() -> Check {
    let c = ScenarioConfig::default();
    let surface = c.surface.build().map_err(|e| e.to_string())?;
    let out =
        cli::solve_pipeline(&c.model, &surface, &c.solver, 1, 1).map_err(|e| e.to_string())?;
    let (zone, share) = out.top_zone();
    let s7 = out
        .summary
        .iter()
        .find(|z| z.zone == 7)
        .ok_or("no S7 summary")?;
    let dom = s7.dominant().map(|d| d.0);
    let sec = s7.secondary().map(|d| d.0);
    let show = |a: Option<Action>| a.map_or("none".to_string(), |a| a.to_string());
    ensure(
        zone == 7
            && share > 0.5
            && dom == Some(Action::StayHop)
            && sec.is_some_and(|a| a.is_move()),
        format!(
            "argmax S{zone} share {share:.3}; S7 dominant {}, secondary {}",
            show(dom),
            show(sec)
        ),
    )
}

fn zone1_attack(sc: &MacScenario) -> Result<mac_sim::PhaseStats, String> {
    let m = mac_sim::run_mac_sim(sc).map_err(|e| e.to_string())?;
    Ok(m.zone(sc.attack_zone).ok_or("attack zone missing")?.attack)
}

fn mac_delay_throughput() -> Check {
    let sc = MacScenario::default();
    let fast = zone1_attack(&sc.clone().with_malicious_cw(2))?;
    let slow = zone1_attack(&sc.with_malicious_cw(16))?;
    let rise = fast.mean_delay_s() / slow.mean_delay_s() - 1.0;
    let fall = 1.0 - fast.throughput() / slow.throughput();
    ensure(
        rise >= 0.5 && fall >= 0.15,
        format!(
            "CW 2 vs 16: delay +{:.0}%, throughput -{:.0}%",
            rise * 100.0,
            fall * 100.0
        ),
    )
}

fn zonal_vs_global() -> Check {
    let t =
        mac_sim::benign_vs_attack_timeline(&MacScenario::default()).map_err(|e| e.to_string())?;
    let r = mac_sim::zonal_vs_global(&t).map_err(|e| e.to_string())?;
    ensure(
        r.global_drop > 0.0 && r.zonal_drop >= 2.0 * r.global_drop,
        format!(
            "zonal drop {:.1}% vs global {:.1}%",
            r.zonal_drop, r.global_drop
        ),
    )
}

fn read_tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect()
}

fn cli_determinism() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let runs: [&[&str]; 4] = [
        &["solve"],
        &["hopsim"],
        &["macsim"],
        &["sweep", "--axis", "c", "--values", "0.5,1,4"],
    ];
    let mut files = 0;
    for args in runs {
        let mut trees = Vec::new();
        for rep in 0..2 {
            let out = tmp.path().join(format!("{}-{rep}", args[0]));
            let status = Command::new(env!("CARGO_BIN_EXE_pacman"))
                .args(args)
                .args(["--quiet", "--seed", "7", "--out"])
                .arg(&out)
                .status()
                .map_err(|e| e.to_string())?;
            if !status.success() {
                return Err(format!("{} exited with {status}", args[0]));
            }
            trees.push(read_tree(&out));
        }
        if trees[0] != trees[1] {
            return Err(format!("{} output differs between runs", args[0]));
        }
        files += trees[0].len();
    }
    Ok(format!("4 commands, {files} files identical across reruns"))
}

fn mac_conservation() -> Check {
    let m = mac_sim::run_mac_sim(&MacScenario::default()).map_err(|e| e.to_string())?;
    for z in &m.zones {
        if z.idle_ns + z.success_ns + z.collision_ns != z.elapsed_ns {
            return Err(format!("zone {} time not conserved", z.zone));
        }
    }
    let sc = MacScenario {
        zones: vec![MacZone {
            id: 1,
            stations: vec![
                StationConfig::honest(Role::BenignAp, 4),
                StationConfig::honest(Role::VictimUe, 4),
            ],
        }],
        sim_duration_s: 20.0,
        attack_start_s: 0.0,
        sample_interval_s: 1.0,
        ..MacScenario::default()
    };
    let slots = sc.sim_duration_s * 1e9 / sc.slot_ns() as f64;
    let pair = mac_sim::run_mac_sim(&sc).map_err(|e| e.to_string())?;
    let z = &pair.zones[0];
    let (a, b) = (z.station_throughput(0), z.station_throughput(1));
    let gap = (a - b).abs() / a.max(b);
    ensure(
        slots >= 1e6 && gap <= 0.05,
        format!(
            "conserved in {} zones; honest pair gap {:.2}% over {slots:.1e} slots",
            m.zones.len(),
            gap * 100.0
        ),
    )
}

fn main() {
    let checks: [Criterion; 10] = [
        ("kernel rows stochastic on hex7", kernel_rows),
        ("re-catch probability falls with streak", streak_monotone),
        ("oracle frequencies match analytic rows", oracle_rows),
        ("drop chain matches 1/63", drop_chain),
        ("value iteration and policy checks", solver),
        ("S7 sojourn and policy mix", s7_sojourn),
        ("selfish CW harms attacked zone", mac_delay_throughput),
        ("zonal impact exceeds global", zonal_vs_global),
        ("CLI byte-identical on rerun", cli_determinism),
        ("slot-time conservation and fairness", mac_conservation),
    ];
    let mut failed = 0;
    for (i, (name, f)) in checks.iter().enumerate() {
        let t = Instant::now();
        let res = f();
        let secs = t.elapsed().as_secs_f64();
        match res {
            Ok(msg) => println!("criterion {:>2} PASS  {name}: {msg} [{secs:.2}s]", i + 1),
            Err(msg) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {msg} [{secs:.2}s]", i + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        checks.len() - failed,
        checks.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
