//! Zone-graph model of the instrumented building.
//!
//! A [`FloorPlan`] is a directed graph: zones are nodes and portals are the
//! doorways between them. Visitors only ever move by crossing portals, which
//! is also the only thing the sensors observe.

use serde::{Deserialize, Serialize};
use std::collections::{HashMap, VecDeque};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZoneKind {
    Entrance,
    Corridor,
    Room,
    Exit,
}

impl ZoneKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ZoneKind::Entrance => "entrance",
            ZoneKind::Corridor => "corridor",
            ZoneKind::Room => "room",
            ZoneKind::Exit => "exit",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Zone {
    pub id: String,
    pub kind: ZoneKind,
    /// Walking distance through the zone, meters.
    pub length: f64,
    /// Walkable floor area, square meters.
    pub area: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub visit_order: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Portal {
    pub id: String,
    pub from_zone: String,
    pub to_zone: String,
    /// Door width, meters.
    pub width: f64,
    /// Maximum throughput, persons per second.
    pub service_rate: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpaceError {
    #[error("floor plan parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("duplicate zone id `{0}`")]
    DuplicateZone(String),
    #[error("duplicate portal id `{0}`")]
    DuplicatePortal(String),
    #[error("zone `{zone}`: {field} must be > 0")]
    NonPositiveDimension { zone: String, field: &'static str },
    #[error("portal `{portal}`: {field} must be > 0")]
    NonPositivePortal { portal: String, field: &'static str },
    #[error("portal `{portal}` references unknown zone `{zone}`")]
    UnknownZone { portal: String, zone: String },
    #[error("portal `{0}` connects a zone to itself")]
    SelfLoop(String),
    #[error("floor plan declares no entrance")]
    NoEntrance,
    #[error("floor plan declares no exit")]
    NoExit,
    #[error("`{id}` is listed as {role} but is not a zone of kind {role}")]
    WrongKind { id: String, role: &'static str },
    #[error("unreachable zone `{0}`")]
    UnreachableZone(String),
    #[error("exit `{exit}` is not reachable from entrance `{entrance}`")]
    ExitUnreachable { entrance: String, exit: String },
    #[error("unknown zone `{0}`")]
    NoSuchZone(String),
    #[error("no path visits the tour from `{from}` to `{to}`")]
    NoPath { from: String, to: String },
}

/// On-disk shape of a floor plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FloorPlanDocument {
    pub zones: Vec<Zone>,
    pub portals: Vec<Portal>,
    pub entrances: Vec<String>,
    pub exits: Vec<String>,
}

/// A validated, immutable floor plan with index lookups.
#[derive(Debug, Clone, PartialEq)]
pub struct FloorPlan {
    zones: Vec<Zone>,
    portals: Vec<Portal>,
    entrances: Vec<usize>,
    exits: Vec<usize>,
    zone_index: HashMap<String, usize>,
    portal_index: HashMap<String, usize>,
    portal_from: Vec<usize>,
    portal_to: Vec<usize>,
    /// Outgoing portal indices per zone, in document order.
    outgoing: Vec<Vec<usize>>,
}

pub fn load_floor_plan(document: &str) -> Result<FloorPlan, SpaceError> {
    let doc: FloorPlanDocument = serde_json::from_str(document).map_err(|e| SpaceError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    FloorPlan::from_document(doc)
}

impl FloorPlan {
    pub fn from_document(doc: FloorPlanDocument) -> Result<Self, SpaceError> {
        let mut zone_index = HashMap::with_capacity(doc.zones.len());
        for (i, z) in doc.zones.iter().enumerate() {
            if zone_index.insert(z.id.clone(), i).is_some() {
                return Err(SpaceError::DuplicateZone(z.id.clone()));
            }
            if !(z.length > 0.0) {
                return Err(SpaceError::NonPositiveDimension {
                    zone: z.id.clone(),
                    field: "length",
                });
            }
            if !(z.area > 0.0) {
                return Err(SpaceError::NonPositiveDimension {
                    zone: z.id.clone(),
                    field: "area",
                });
            }
        }

        let mut portal_index = HashMap::with_capacity(doc.portals.len());
        let mut portal_from = Vec::with_capacity(doc.portals.len());
        let mut portal_to = Vec::with_capacity(doc.portals.len());
        let mut outgoing = vec![Vec::new(); doc.zones.len()];
        for (i, p) in doc.portals.iter().enumerate() {
            if portal_index.insert(p.id.clone(), i).is_some() {
                return Err(SpaceError::DuplicatePortal(p.id.clone()));
            }
            let lookup = |zone: &str| {
                zone_index.get(zone).copied().ok_or_else(|| SpaceError::UnknownZone {
                    portal: p.id.clone(),
                    zone: zone.to_string(),
                })
            };
            let from = lookup(&p.from_zone)?;
            let to = lookup(&p.to_zone)?;
            if from == to {
                return Err(SpaceError::SelfLoop(p.id.clone()));
            }
            if !(p.width > 0.0) {
                return Err(SpaceError::NonPositivePortal {
                    portal: p.id.clone(),
                    field: "width",
                });
            }
            if !(p.service_rate > 0.0) {
                return Err(SpaceError::NonPositivePortal {
                    portal: p.id.clone(),
                    field: "service_rate",
                });
            }
            portal_from.push(from);
            portal_to.push(to);
            outgoing[from].push(i);
        }

        let resolve = |ids: &[String], kind: ZoneKind, role: &'static str| {
            ids.iter()
                .map(|id| match zone_index.get(id) {
                    Some(&i) if doc.zones[i].kind == kind => Ok(i),
                    _ => Err(SpaceError::WrongKind {
                        id: id.clone(),
                        role,
                    }),
                })
                .collect::<Result<Vec<_>, _>>()
        };
        let entrances = resolve(&doc.entrances, ZoneKind::Entrance, "entrance")?;
        let exits = resolve(&doc.exits, ZoneKind::Exit, "exit")?;
        if entrances.is_empty() {
            return Err(SpaceError::NoEntrance);
        }
        if exits.is_empty() {
            return Err(SpaceError::NoExit);
        }

        let plan = FloorPlan {
            zones: doc.zones,
            portals: doc.portals,
            entrances,
            exits,
            zone_index,
            portal_index,
            portal_from,
            portal_to,
            outgoing,
        };
        plan.check_connectivity()?;
        Ok(plan)
    }

    fn check_connectivity(&self) -> Result<(), SpaceError> {
        let mut reached_any = vec![false; self.zones.len()];
        for &entrance in &self.entrances {
            let reached = self.reachable_from(entrance);
            for &exit in &self.exits {
                if !reached[exit] {
                    return Err(SpaceError::ExitUnreachable {
                        entrance: self.zones[entrance].id.clone(),
                        exit: self.zones[exit].id.clone(),
                    });
                }
            }
            for (any, r) in reached_any.iter_mut().zip(reached) {
                *any |= r;
            }
        }
        if let Some(i) = reached_any.iter().position(|r| !r) {
            return Err(SpaceError::UnreachableZone(self.zones[i].id.clone()));
        }
        Ok(())
    }

    fn reachable_from(&self, start: usize) -> Vec<bool> {
        let mut seen = vec![false; self.zones.len()];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(z) = queue.pop_front() {
            for &p in &self.outgoing[z] {
                let next = self.portal_to[p];
                if !seen[next] {
                    seen[next] = true;
                    queue.push_back(next);
                }
            }
        }
        seen
    }

    pub fn to_document(&self) -> FloorPlanDocument {
        FloorPlanDocument {
            zones: self.zones.clone(),
            portals: self.portals.clone(),
            entrances: self.entrances.iter().map(|&i| self.zones[i].id.clone()).collect(),
            exits: self.exits.iter().map(|&i| self.zones[i].id.clone()).collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("floor plan serializes")
    }

    pub fn zones(&self) -> &[Zone] {
        &self.zones
    }

    pub fn portals(&self) -> &[Portal] {
        &self.portals
    }

    pub fn entrances(&self) -> &[usize] {
        &self.entrances
    }

    pub fn exits(&self) -> &[usize] {
        &self.exits
    }

    pub fn zone_idx(&self, id: &str) -> Option<usize> {
        self.zone_index.get(id).copied()
    }

    pub fn portal_idx(&self, id: &str) -> Option<usize> {
        self.portal_index.get(id).copied()
    }

    /// Zone index a portal leads out of.
    pub fn portal_source(&self, portal: usize) -> usize {
        self.portal_from[portal]
    }

    /// Zone index a portal leads into.
    pub fn portal_target(&self, portal: usize) -> usize {
        self.portal_to[portal]
    }

    pub fn outgoing(&self, zone: usize) -> &[usize] {
        &self.outgoing[zone]
    }

    /// Portals leading directly from `from` to `to`, in document order.
    pub fn portals_between(&self, from: usize, to: usize) -> impl Iterator<Item = usize> + '_ {
        self.outgoing[from]
            .iter()
            .copied()
            .filter(move |&p| self.portal_to[p] == to)
    }

    pub fn is_entrance_portal(&self, portal: usize) -> bool {
        self.zones[self.portal_from[portal]].kind == ZoneKind::Entrance
    }

    pub fn is_exit_portal(&self, portal: usize) -> bool {
        self.zones[self.portal_to[portal]].kind == ZoneKind::Exit
    }

    /// Shortest directed zone path from `from` to `to`, both inclusive.
    fn shortest_path(&self, from: usize, to: usize) -> Option<Vec<usize>> {
        let mut parent = vec![usize::MAX; self.zones.len()];
        let mut queue = VecDeque::from([from]);
        parent[from] = from;
        while let Some(z) = queue.pop_front() {
            if z == to {
                let mut path = vec![to];
                let mut cur = to;
                while cur != from {
                    cur = parent[cur];
                    path.push(cur);
                }
                path.reverse();
                return Some(path);
            }
            for &p in &self.outgoing[z] {
                let next = self.portal_to[p];
                if parent[next] == usize::MAX {
                    parent[next] = z;
                    queue.push_back(next);
                }
            }
        }
        None
    }

    /// Index form of [`tour_route`].
    pub fn tour_indices(&self, entrance: usize, exit: usize) -> Result<Vec<usize>, SpaceError> {
        if self.zones[entrance].kind != ZoneKind::Entrance {
            return Err(SpaceError::WrongKind {
                id: self.zones[entrance].id.clone(),
                role: "entrance",
            });
        }
        if self.zones[exit].kind != ZoneKind::Exit {
            return Err(SpaceError::WrongKind {
                id: self.zones[exit].id.clone(),
                role: "exit",
            });
        }
        let mut stops: Vec<(u32, usize)> = self
            .zones
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != entrance && i != exit)
            .filter_map(|(i, z)| z.visit_order.map(|o| (o, i)))
            .collect();
        stops.sort();

        let mut route = vec![entrance];
        let waypoints = stops.into_iter().map(|(_, i)| i).chain(std::iter::once(exit));
        for target in waypoints {
            let here = *route.last().expect("route starts at the entrance");
            let leg = self.shortest_path(here, target).ok_or_else(|| SpaceError::NoPath {
                from: self.zones[here].id.clone(),
                to: self.zones[target].id.clone(),
            })?;
            route.extend_from_slice(&leg[1..]);
        }
        Ok(route)
    }
}

/// Tour from `entrance` to `exit` through every ordered zone, by zone id.
pub fn tour_route(plan: &FloorPlan, entrance: &str, exit: &str) -> Result<Vec<String>, SpaceError> {
    let e = plan
        .zone_idx(entrance)
        .ok_or_else(|| SpaceError::NoSuchZone(entrance.to_string()))?;
    let x = plan
        .zone_idx(exit)
        .ok_or_else(|| SpaceError::NoSuchZone(exit.to_string()))?;
    Ok(plan
        .tour_indices(e, x)?
        .into_iter()
        .map(|i| plan.zones[i].id.clone())
        .collect())
}
