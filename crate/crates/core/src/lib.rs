//! Mobility-powered MAC-layer attack toolkit.
//!
//! The attacker is a mobile Wi-Fi access point that moves between zones of a
//! factory floor, sweeps the unlicensed channels to find the victim cellular
//! network, and then contends with a selfishly small backoff window.
//!
//! * [`surface`] holds the zone graph.
//! * [`mdp_model`] and [`mdp_solver`] build and solve the attacker's MDP.
//! * [`hop_oracle`] checks the analytic kernel against Monte-Carlo sampling.
//! * [`mac_sim`] is a slotted CSMA/CA simulator for the coexistence impact.
//! * [`cli`] wires everything to the `pacman` command-line tool.

pub mod cli;
pub mod hop_oracle;
pub mod mac_sim;
pub mod mdp_model;
pub mod mdp_solver;
pub mod surface;

pub use mdp_model::{build_mdp, Action, Mdp, ModelParams, State, StateKind};
pub use surface::{Surface, Zone, ZoneId};
