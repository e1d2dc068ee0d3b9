//! Scenario description: map layout, simulation settings and agent placement.

use crate::error::{Error, Result};
use crate::geometry::{ConvexPolygon, Polyline, Vec2};
use crate::reward::RewardKind;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Victim,
    Adversary,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Victim => "victim",
            Role::Adversary => "adversary",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapLayout {
    TIntersection,
    Corridor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapConfig {
    pub layout: MapLayout,
    pub lane_width: f64,
    /// Paved margin beyond the outer lane edges that still counts as drivable.
    pub shoulder: f64,
}

impl Default for MapConfig {
    fn default() -> Self {
        Self {
            layout: MapLayout::TIntersection,
            lane_width: 3.5,
            shoulder: 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub dt: f64,
    pub max_steps: usize,
    /// Half-width of the uniform spawn perturbation in metres; 0 disables it.
    pub spawn_jitter: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 0.05,
            max_steps: 2000,
            spawn_jitter: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub id: String,
    pub role: Role,
    pub spawn: [f64; 2],
    pub goal: [f64; 2],
    pub reward_kind: RewardKind,
    /// Route waypoints from spawn to goal. A straight segment is used when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub route: Option<Vec<[f64; 2]>>,
}

impl AgentSpec {
    pub fn route_polyline(&self) -> Polyline {
        match &self.route {
            Some(points) if points.len() >= 2 => {
                Polyline::new(points.iter().copied().map(Vec2::from).collect())
            }
            _ => Polyline::new(vec![self.spawn.into(), self.goal.into()]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub map: MapConfig,
    pub sim: SimConfig,
    pub agents: Vec<AgentSpec>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::t_intersection()
    }
}

pub const VICTIM_1: &str = "victim1";
pub const VICTIM_2: &str = "victim2";
pub const ADVERSARY: &str = "adversary";

const MAIN_WEST_Y: f64 = 59.0;
const MAIN_EAST_Y: f64 = 62.6;
const STEM_OUT_X: f64 = 167.0;
const STEM_IN_X: f64 = 170.5;
const TURN_RADIUS: f64 = 6.0;
const ARC_SEGMENTS: usize = 12;

fn arc(center: Vec2, radius: f64, from: f64, to: f64) -> Vec<[f64; 2]> {
    (0..=ARC_SEGMENTS)
        .map(|i| {
            let a = from + (to - from) * i as f64 / ARC_SEGMENTS as f64;
            [center.x + radius * a.cos(), center.y + radius * a.sin()]
        })
        .collect()
}

impl ScenarioConfig {
    /// Two victims crossing a T-junction and an adversary turning out of the stem.
    pub fn t_intersection() -> Self {
        let r = TURN_RADIUS;
        // Westbound on the main road, right turn into the outbound stem lane.
        let mut victim1_route = vec![[188.0, MAIN_WEST_Y]];
        victim1_route.extend(arc(
            Vec2::new(STEM_OUT_X + r, MAIN_WEST_Y + r),
            r,
            -PI / 2.0,
            -PI,
        ));
        victim1_route.push([STEM_OUT_X, 75.7]);
        // Down the inbound stem lane, right turn onto the westbound lane.
        let mut adversary_route = vec![[STEM_IN_X, 80.0]];
        adversary_route.extend(arc(
            Vec2::new(STEM_IN_X - r, MAIN_WEST_Y + r),
            r,
            0.0,
            -PI / 2.0,
        ));
        adversary_route.push([144.0, MAIN_WEST_Y]);
        Self {
            map: MapConfig::default(),
            sim: SimConfig::default(),
            agents: vec![
                AgentSpec {
                    id: VICTIM_1.into(),
                    role: Role::Victim,
                    spawn: [188.0, 59.0],
                    goal: [167.0, 75.7],
                    reward_kind: RewardKind::Victim,
                    route: Some(victim1_route),
                },
                AgentSpec {
                    id: VICTIM_2.into(),
                    role: Role::Victim,
                    spawn: [147.6, 62.6],
                    goal: [191.2, 62.7],
                    reward_kind: RewardKind::Victim,
                    route: None,
                },
                AgentSpec {
                    id: ADVERSARY.into(),
                    role: Role::Adversary,
                    spawn: [170.5, 80.0],
                    goal: [144.0, 59.0],
                    reward_kind: RewardKind::AdvOffroad,
                    route: Some(adversary_route),
                },
            ],
        }
    }

    /// Single victim on a straight 60 m road.
    pub fn corridor() -> Self {
        Self {
            map: MapConfig {
                layout: MapLayout::Corridor,
                ..MapConfig::default()
            },
            sim: SimConfig {
                max_steps: 200,
                ..SimConfig::default()
            },
            agents: vec![AgentSpec {
                id: VICTIM_1.into(),
                role: Role::Victim,
                spawn: [0.0, 0.0],
                goal: [60.0, 0.0],
                reward_kind: RewardKind::Victim,
                route: None,
            }],
        }
    }

    pub fn agent(&self, id: &str) -> Option<&AgentSpec> {
        self.agents.iter().find(|a| a.id == id)
    }

    /// Copy keeping only the listed agents, in scenario order.
    pub fn with_agents(&self, ids: &[&str]) -> Result<Self> {
        for id in ids {
            if self.agent(id).is_none() {
                return Err(Error::Config(format!("scenario has no agent `{id}`")));
            }
        }
        Ok(Self {
            agents: self
                .agents
                .iter()
                .filter(|a| ids.contains(&a.id.as_str()))
                .cloned()
                .collect(),
            ..self.clone()
        })
    }

    pub fn ids_with_role(&self, role: Role) -> Vec<String> {
        self.agents
            .iter()
            .filter(|a| a.role == role)
            .map(|a| a.id.clone())
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.map.lane_width.is_nan() || self.map.lane_width <= crate::world::VEHICLE_WIDTH {
            return Err(Error::Config(format!(
                "map.lane_width must exceed the vehicle width {} m",
                crate::world::VEHICLE_WIDTH
            )));
        }
        if self.map.shoulder.is_nan() || self.map.shoulder < 0.0 {
            return Err(Error::Config("map.shoulder must be >= 0".into()));
        }
        if !(self.sim.dt > 0.0 && self.sim.dt <= 1.0) {
            return Err(Error::Config("sim.dt must be in (0, 1]".into()));
        }
        if self.sim.max_steps == 0 {
            return Err(Error::Config("sim.max_steps must be positive".into()));
        }
        if !(self.sim.spawn_jitter >= 0.0 && self.sim.spawn_jitter <= 2.0) {
            return Err(Error::Config("sim.spawn_jitter must be in [0, 2]".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for a in &self.agents {
            if !seen.insert(a.id.as_str()) {
                return Err(Error::Config(format!("duplicate agent id `{}`", a.id)));
            }
            if a.role == Role::Victim && a.reward_kind != RewardKind::Victim {
                return Err(Error::Config(format!(
                    "agents[{}].reward_kind: victims use the victim reward",
                    a.id
                )));
            }
            if a.role == Role::Adversary && a.reward_kind == RewardKind::Victim {
                return Err(Error::Config(format!(
                    "agents[{}].reward_kind: adversaries need adv_collision or adv_offroad",
                    a.id
                )));
            }
            if a.route_polyline().length() <= 0.0 {
                return Err(Error::Config(format!(
                    "agents[{}]: route has zero length",
                    a.id
                )));
            }
        }
        Ok(())
    }
}

/// A lane: centreline plus width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaneSegment {
    pub centerline: Polyline,
    pub width: f64,
}

/// Static road geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapGeometry {
    pub lanes: Vec<LaneSegment>,
    /// Painted divider lines.
    pub markings: Vec<Polyline>,
    pub intersection: Option<ConvexPolygon>,
    /// The drivable area is the union of these convex pieces.
    pub drivable: Vec<ConvexPolygon>,
}

impl MapGeometry {
    pub fn build(cfg: &MapConfig) -> Self {
        match cfg.layout {
            MapLayout::TIntersection => Self::t_intersection(cfg.lane_width, cfg.shoulder),
            MapLayout::Corridor => Self::corridor(cfg.lane_width, cfg.shoulder),
        }
    }

    fn t_intersection(w: f64, shoulder: f64) -> Self {
        let (x_min, x_max, y_top) = (125.0, 210.0, 95.0);
        let main_lo = MAIN_WEST_Y - w / 2.0;
        let main_hi = MAIN_EAST_Y + w / 2.0;
        let stem_lo = STEM_OUT_X - w / 2.0;
        let stem_hi = STEM_IN_X + w / 2.0;
        let junction = ConvexPolygon::rect(
            Vec2::new(stem_lo - w, main_lo),
            Vec2::new(stem_hi + w, main_hi + w),
        );
        let divider_y = (MAIN_WEST_Y + MAIN_EAST_Y) / 2.0;
        let divider_x = (STEM_OUT_X + STEM_IN_X) / 2.0;
        let line = |a: [f64; 2], b: [f64; 2]| Polyline::new(vec![a.into(), b.into()]);
        Self {
            lanes: vec![
                LaneSegment {
                    centerline: line([x_max, MAIN_WEST_Y], [x_min, MAIN_WEST_Y]),
                    width: w,
                },
                LaneSegment {
                    centerline: line([x_min, MAIN_EAST_Y], [x_max, MAIN_EAST_Y]),
                    width: w,
                },
                LaneSegment {
                    centerline: line([STEM_OUT_X, main_hi], [STEM_OUT_X, y_top]),
                    width: w,
                },
                LaneSegment {
                    centerline: line([STEM_IN_X, y_top], [STEM_IN_X, main_hi]),
                    width: w,
                },
            ],
            markings: vec![
                line([x_min, divider_y], [stem_lo - w, divider_y]),
                line([stem_hi + w, divider_y], [x_max, divider_y]),
                line([divider_x, main_hi + w], [divider_x, y_top]),
            ],
            intersection: Some(junction),
            drivable: vec![
                ConvexPolygon::rect(
                    Vec2::new(x_min, main_lo - shoulder),
                    Vec2::new(x_max, main_hi + shoulder),
                ),
                ConvexPolygon::rect(
                    Vec2::new(stem_lo - shoulder, main_hi),
                    Vec2::new(stem_hi + shoulder, y_top),
                ),
            ],
        }
    }

    fn corridor(w: f64, shoulder: f64) -> Self {
        let (x_min, x_max) = (-20.0, 120.0);
        Self {
            lanes: vec![LaneSegment {
                centerline: Polyline::new(vec![Vec2::new(x_min, 0.0), Vec2::new(x_max, 0.0)]),
                width: w,
            }],
            markings: Vec::new(),
            intersection: None,
            drivable: vec![ConvexPolygon::rect(
                Vec2::new(x_min, -w / 2.0 - shoulder),
                Vec2::new(x_max, w / 2.0 + shoulder),
            )],
        }
    }

    pub fn is_drivable(&self, p: Vec2) -> bool {
        self.drivable.iter().any(|poly| poly.contains(p))
    }

    pub fn in_intersection(&self, p: Vec2) -> bool {
        self.intersection.as_ref().is_some_and(|poly| poly.contains(p))
    }

    /// The same map rotated about `center`.
    pub fn rotated(&self, center: Vec2, angle: f64) -> Self {
        Self {
            lanes: self
                .lanes
                .iter()
                .map(|l| LaneSegment {
                    centerline: l.centerline.rotated(center, angle),
                    width: l.width,
                })
                .collect(),
            markings: self.markings.iter().map(|m| m.rotated(center, angle)).collect(),
            intersection: self.intersection.as_ref().map(|p| p.rotated(center, angle)),
            drivable: self.drivable.iter().map(|p| p.rotated(center, angle)).collect(),
        }
    }
}
