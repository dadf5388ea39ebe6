//! Physical attack surface: a graph of hexagonal zones with importance weights.
//!
//! Zones are abstract graph nodes. Geometry only matters through adjacency,
//! which decides where the attacker can move in a single slot.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type ZoneId = u32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Zone {
    pub id: ZoneId,
    pub label: String,
    /// Relative importance of the zone. Multiplies the attacker's gains there.
    pub weight: f64,
}

/// Structural problems found by [`Surface::validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    Empty,
    DuplicateId(ZoneId),
    NonPositiveWeight(ZoneId),
    UnknownZone(ZoneId),
    SelfLoop(ZoneId),
    Asymmetric(ZoneId, ZoneId),
    Disconnected { unreachable: Vec<ZoneId> },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Empty => write!(f, "surface has no zones"),
            Violation::DuplicateId(id) => write!(f, "duplicate zone id {id}"),
            Violation::NonPositiveWeight(id) => write!(f, "nonpositive weight at {id}"),
            Violation::UnknownZone(id) => write!(f, "edge references unknown zone {id}"),
            Violation::SelfLoop(id) => write!(f, "self-loop at {id}"),
            Violation::Asymmetric(a, b) => write!(f, "asymmetric edge {a}->{b}"),
            Violation::Disconnected { unreachable } => {
                write!(f, "disconnected: zones {unreachable:?} unreachable")
            }
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SurfaceError {
    #[error("expected {expected} weights, got {got}")]
    WeightCount { expected: usize, got: usize },
    #[error("weight of zone {id} must be positive and finite, got {weight}")]
    BadWeight { id: ZoneId, weight: f64 },
    #[error("unknown zone id {0}")]
    UnknownZone(ZoneId),
    #[error("invalid surface: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
}

/// Zones plus a directed arc set. A valid surface has a symmetric,
/// irreflexive, connected arc set.
#[derive(Debug, Clone, PartialEq)]
pub struct Surface {
    zones: Vec<Zone>,
    arcs: BTreeMap<ZoneId, BTreeSet<ZoneId>>,
}

impl Surface {
    /// Builds a surface from undirected edges and rejects anything that fails
    /// [`Surface::validate`].
    pub fn new(zones: Vec<Zone>, edges: &[(ZoneId, ZoneId)]) -> Result<Self, SurfaceError> {
        let arcs = edges.iter().flat_map(|&(a, b)| [(a, b), (b, a)]);
        let surface = Self::from_arcs(zones, arcs);
        surface.validate().map_err(SurfaceError::Invalid)?;
        Ok(surface)
    }

    /// Unchecked constructor from directed arcs. Use [`Surface::validate`] to
    /// inspect the result.
    pub fn from_arcs(zones: Vec<Zone>, arcs: impl IntoIterator<Item = (ZoneId, ZoneId)>) -> Self {
        let mut map: BTreeMap<ZoneId, BTreeSet<ZoneId>> = BTreeMap::new();
        for z in &zones {
            map.entry(z.id).or_default();
        }
        for (a, b) in arcs {
            map.entry(a).or_default().insert(b);
        }
        Surface { zones, arcs: map }
    }

    /// Single zone with no neighbors.
    pub fn single(id: ZoneId, weight: f64) -> Result<Self, SurfaceError> {
        Self::new(
            vec![Zone {
                id,
                label: format!("S{id}"),
                weight,
            }],
            &[],
        )
    }

    /// Hex-flower layout: S1 is the center, S2..S7 form the ring in cyclic
    /// order. Weights are given in S1..S7 order.
    pub fn hex7(weights: &[f64]) -> Result<Self, SurfaceError> {
        if weights.len() != 7 {
            return Err(SurfaceError::WeightCount {
                expected: 7,
                got: weights.len(),
            });
        }
        let mut zones = Vec::with_capacity(7);
        for (i, &w) in weights.iter().enumerate() {
            let id = i as ZoneId + 1;
            if !(w.is_finite() && w > 0.0) {
                return Err(SurfaceError::BadWeight { id, weight: w });
            }
            zones.push(Zone {
                id,
                label: format!("S{id}"),
                weight: w,
            });
        }
        let mut edges = Vec::with_capacity(12);
        for ring in 2..=7 {
            edges.push((1, ring));
            let next = if ring == 7 { 2 } else { ring + 1 };
            edges.push((ring, next));
        }
        Self::new(zones, &edges)
    }

    pub fn zones(&self) -> &[Zone] {
        &self.zones
    }

    pub fn len(&self) -> usize {
        self.zones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zones.is_empty()
    }

    pub fn zone(&self, id: ZoneId) -> Option<&Zone> {
        self.zones.iter().find(|z| z.id == id)
    }

    pub fn contains(&self, id: ZoneId) -> bool {
        self.zone(id).is_some()
    }

    pub fn weight(&self, id: ZoneId) -> Result<f64, SurfaceError> {
        self.zone(id)
            .map(|z| z.weight)
            .ok_or(SurfaceError::UnknownZone(id))
    }

    /// Zone ids in ascending order.
    pub fn ids(&self) -> Vec<ZoneId> {
        let mut ids: Vec<_> = self.zones.iter().map(|z| z.id).collect();
        ids.sort_unstable();
        ids
    }

    /// Sorted neighbor list, excluding `id` itself.
    pub fn neighbors(&self, id: ZoneId) -> Result<Vec<ZoneId>, SurfaceError> {
        if !self.contains(id) {
            return Err(SurfaceError::UnknownZone(id));
        }
        Ok(self
            .arcs
            .get(&id)
            .map(|s| s.iter().copied().filter(|&n| n != id).collect())
            .unwrap_or_default())
    }

    /// Undirected edge list with `a < b`, sorted.
    pub fn edges(&self) -> Vec<(ZoneId, ZoneId)> {
        self.arcs
            .iter()
            .flat_map(|(&a, set)| set.iter().filter(move |&&b| a < b).map(move |&b| (a, b)))
            .collect()
    }

    pub fn validate(&self) -> Result<(), Vec<Violation>> {
        let mut out = Vec::new();
        if self.zones.is_empty() {
            out.push(Violation::Empty);
            return Err(out);
        }
        let mut seen = BTreeSet::new();
        for z in &self.zones {
            if !seen.insert(z.id) {
                out.push(Violation::DuplicateId(z.id));
            }
            if !(z.weight.is_finite() && z.weight > 0.0) {
                out.push(Violation::NonPositiveWeight(z.id));
            }
        }
        for (&a, set) in &self.arcs {
            if !seen.contains(&a) {
                out.push(Violation::UnknownZone(a));
            }
            for &b in set {
                if a == b {
                    out.push(Violation::SelfLoop(a));
                } else if !seen.contains(&b) {
                    out.push(Violation::UnknownZone(b));
                } else if !self.arcs.get(&b).is_some_and(|s| s.contains(&a)) {
                    out.push(Violation::Asymmetric(a, b));
                }
            }
        }

        // Connectivity over the symmetric closure, so that an asymmetric edge
        // is reported once and not also as a disconnection.
        let mut undirected: BTreeMap<ZoneId, BTreeSet<ZoneId>> = BTreeMap::new();
        for (&a, set) in &self.arcs {
            for &b in set {
                if a != b && seen.contains(&a) && seen.contains(&b) {
                    undirected.entry(a).or_default().insert(b);
                    undirected.entry(b).or_default().insert(a);
                }
            }
        }
        let start = *seen.iter().next().expect("nonempty");
        let mut reached = BTreeSet::from([start]);
        let mut queue = VecDeque::from([start]);
        while let Some(z) = queue.pop_front() {
            for &n in undirected.get(&z).into_iter().flatten() {
                if reached.insert(n) {
                    queue.push_back(n);
                }
            }
        }
        let unreachable: Vec<_> = seen.difference(&reached).copied().collect();
        if !unreachable.is_empty() {
            out.push(Violation::Disconnected { unreachable });
        }

        if out.is_empty() {
            Ok(())
        } else {
            Err(out)
        }
    }
}
