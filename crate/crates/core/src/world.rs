//! Deterministic driving world: kinematic bicycle vehicles on a static map.

use crate::error::{Error, Result};
use crate::geometry::{normalize_angle, OrientedBox, Polyline, Vec2};
use crate::scenario::{MapGeometry, Role, ScenarioConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::Arc;

pub const VEHICLE_LENGTH: f64 = 4.5;
pub const VEHICLE_WIDTH: f64 = 2.0;
/// Distance to goal below which the goal counts as reached.
pub const GOAL_TOLERANCE: f64 = 1.0;

pub type AgentId = String;

/// Kinematic bicycle parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dynamics {
    pub wheelbase: f64,
    pub max_accel: f64,
    pub max_brake: f64,
    pub max_steer: f64,
    pub drag: f64,
    pub max_speed: f64,
}

impl Default for Dynamics {
    fn default() -> Self {
        Self {
            wheelbase: 2.7,
            max_accel: 4.0,
            max_brake: 8.0,
            max_steer: 35f64.to_radians(),
            drag: 0.1,
            max_speed: 15.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub position: Vec2,
    /// Radians in (-pi, pi].
    pub heading: f64,
    /// Metres per second, within [0, max_speed].
    pub speed: f64,
    pub goal: Vec2,
}

impl VehicleState {
    pub fn footprint(&self) -> OrientedBox {
        OrientedBox::new(self.position, self.heading, VEHICLE_LENGTH, VEHICLE_WIDTH)
    }
}

/// Steering, throttle and brake command for one tick.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionCommand {
    /// [-1, 1], positive turns counterclockwise.
    pub steer: f64,
    /// [0, 1]
    pub throttle: f64,
    /// [0, 1]
    pub brake: f64,
}

impl ActionCommand {
    pub const IDLE: ActionCommand = ActionCommand {
        steer: 0.0,
        throttle: 0.0,
        brake: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        let ok = (-1.0..=1.0).contains(&self.steer)
            && (0.0..=1.0).contains(&self.throttle)
            && (0.0..=1.0).contains(&self.brake);
        if ok {
            Ok(())
        } else {
            Err(Error::Contract(format!("action out of range: {self:?}")))
        }
    }
}

/// Per-agent outcome of one tick.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepFlags {
    /// Collision with another vehicle.
    pub cv: bool,
    /// Collision with a non-vehicle object (left the drivable area).
    pub co: bool,
    /// Outside the route lane while inside the intersection.
    pub io: bool,
    /// Outside the route lane.
    pub iol: bool,
    /// Forward speed, m/s.
    pub forward_speed: f64,
    /// Remaining route distance to goal, m.
    pub remaining: f64,
}

impl StepFlags {
    pub fn collided(&self) -> bool {
        self.cv || self.co
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Collision,
    GoalReached,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentBody {
    pub role: Role,
    pub state: VehicleState,
    pub route: Arc<Polyline>,
    pub terminated: Option<Termination>,
}

/// Full simulator state at one tick.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub tick: u64,
    pub dt: f64,
    pub lane_width: f64,
    pub dynamics: Dynamics,
    pub agents: BTreeMap<AgentId, AgentBody>,
    pub map: Arc<MapGeometry>,
    rng: ChaCha8Rng,
}

impl WorldState {
    /// Places every scenario agent at its spawn, at rest and facing along its route.
    pub fn new(scenario: &ScenarioConfig, seed: u64) -> Result<Self> {
        scenario.validate()?;
        let map = Arc::new(MapGeometry::build(&scenario.map));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let jitter = scenario.sim.spawn_jitter;
        let mut agents = BTreeMap::new();
        for spec in &scenario.agents {
            let route = spec.route_polyline();
            let mut position = Vec2::from(spec.spawn);
            if jitter > 0.0 {
                position.x += rng.random_range(-jitter..=jitter);
                position.y += rng.random_range(-jitter..=jitter);
            }
            if !map.is_drivable(position) {
                return Err(Error::Config(format!(
                    "agent `{}` spawns outside the drivable region at ({:.2}, {:.2})",
                    spec.id, position.x, position.y
                )));
            }
            let body = AgentBody {
                role: spec.role,
                state: VehicleState {
                    position,
                    heading: normalize_angle(route.start_heading()),
                    speed: 0.0,
                    goal: spec.goal.into(),
                },
                route: Arc::new(route),
                terminated: None,
            };
            agents.insert(spec.id.clone(), body);
        }
        let ids: Vec<&AgentId> = agents.keys().collect();
        for (i, a) in ids.iter().enumerate() {
            for b in &ids[i + 1..] {
                if agents[*a]
                    .state
                    .footprint()
                    .overlaps(&agents[*b].state.footprint())
                {
                    return Err(Error::Config(format!(
                        "spawns of `{a}` and `{b}` overlap"
                    )));
                }
            }
        }
        Ok(Self {
            tick: 0,
            dt: scenario.sim.dt,
            lane_width: scenario.map.lane_width,
            dynamics: Dynamics::default(),
            agents,
            map,
            rng,
        })
    }

    pub fn vehicle(&self, id: &str) -> Option<&VehicleState> {
        self.agents.get(id).map(|b| &b.state)
    }

    pub fn is_terminated(&self, id: &str) -> bool {
        self.agents.get(id).is_some_and(|b| b.terminated.is_some())
    }

    pub fn active_ids(&self) -> impl Iterator<Item = &AgentId> {
        self.agents
            .iter()
            .filter(|(_, b)| b.terminated.is_none())
            .map(|(id, _)| id)
    }

    pub fn all_terminated(&self) -> bool {
        self.agents.values().all(|b| b.terminated.is_some())
    }

    fn body(&self, id: &str) -> Result<&AgentBody> {
        self.agents
            .get(id)
            .ok_or_else(|| Error::Contract(format!("unknown agent `{id}`")))
    }

    /// `(io, iol)`: lane departure generally and inside the intersection.
    pub fn offroad_flags(&self, id: &str) -> Result<(bool, bool)> {
        let body = self.body(id)?;
        let lateral = body.route.distance(body.state.position);
        let iol = lateral > self.lane_width / 2.0;
        let io = iol && self.map.in_intersection(body.state.position);
        Ok((io, iol))
    }

    /// Route arc length left to the goal; zero once within the goal tolerance.
    pub fn remaining_distance(&self, id: &str) -> Result<f64> {
        let body = self.body(id)?;
        Ok(remaining_on_route(&body.route, body.state.position, body.state.goal))
    }

    /// Flags describing the current state with no collision this tick.
    pub fn observe_flags(&self, id: &str) -> Result<StepFlags> {
        let (io, iol) = self.offroad_flags(id)?;
        let body = self.body(id)?;
        Ok(StepFlags {
            cv: false,
            co: false,
            io,
            iol,
            forward_speed: body.state.speed,
            remaining: self.remaining_distance(id)?,
        })
    }

    /// Advances one tick. Every active agent must have an action and no other agent may.
    pub fn step(
        &mut self,
        actions: &BTreeMap<AgentId, ActionCommand>,
    ) -> Result<BTreeMap<AgentId, StepFlags>> {
        for (id, action) in actions {
            let body = self.body(id)?;
            if body.terminated.is_some() {
                return Err(Error::Contract(format!(
                    "action supplied for terminated agent `{id}`"
                )));
            }
            action.validate()?;
        }
        let active: Vec<AgentId> = self.active_ids().cloned().collect();
        if let Some(missing) = active.iter().find(|id| !actions.contains_key(*id)) {
            return Err(Error::Contract(format!("no action for agent `{missing}`")));
        }

        let dyn_ = self.dynamics;
        let dt = self.dt;
        for id in &active {
            let a = actions[id];
            let s = &mut self.agents.get_mut(id).expect("active agent").state;
            let accel = dyn_.max_accel * a.throttle - dyn_.max_brake * a.brake - dyn_.drag * s.speed;
            s.speed = (s.speed + accel * dt).clamp(0.0, dyn_.max_speed);
            let yaw_rate = s.speed / dyn_.wheelbase * (a.steer * dyn_.max_steer).tan();
            s.heading = normalize_angle(s.heading + yaw_rate * dt);
            s.position = s.position + Vec2::from_angle(s.heading) * (s.speed * dt);
        }

        let mut flags = BTreeMap::new();
        let boxes: BTreeMap<&AgentId, OrientedBox> = self
            .agents
            .iter()
            .map(|(id, b)| (id, b.state.footprint()))
            .collect();
        for id in &active {
            let own = &boxes[id];
            let cv = boxes
                .iter()
                .any(|(other, bx)| *other != id && own.overlaps(bx));
            let co = !self.map.is_drivable(self.agents[id].state.position);
            let (io, iol) = self.offroad_flags(id)?;
            let f = StepFlags {
                cv,
                co,
                io,
                iol,
                forward_speed: self.agents[id].state.speed,
                remaining: self.remaining_distance(id)?,
            };
            flags.insert(id.clone(), f);
        }
        for (id, f) in &flags {
            let body = self.agents.get_mut(id).expect("active agent");
            if f.collided() {
                body.terminated = Some(Termination::Collision);
            } else if f.remaining == 0.0 {
                body.terminated = Some(Termination::GoalReached);
            }
        }
        self.tick += 1;
        Ok(flags)
    }

    /// Whole world rotated about `center`; used to check frame independence.
    pub fn rotated(&self, center: Vec2, angle: f64) -> Self {
        let mut out = self.clone();
        out.map = Arc::new(self.map.rotated(center, angle));
        for body in out.agents.values_mut() {
            body.route = Arc::new(body.route.rotated(center, angle));
            body.state.position = body.state.position.rotate_about(center, angle);
            body.state.goal = body.state.goal.rotate_about(center, angle);
            body.state.heading = normalize_angle(body.state.heading + angle);
        }
        out
    }

    /// Test and tooling hook for placing a vehicle directly.
    pub fn set_vehicle(&mut self, id: &str, state: VehicleState) -> Result<()> {
        let body = self
            .agents
            .get_mut(id)
            .ok_or_else(|| Error::Contract(format!("unknown agent `{id}`")))?;
        body.state = state;
        Ok(())
    }
}

pub(crate) fn remaining_on_route(route: &Polyline, position: Vec2, goal: Vec2) -> f64 {
    if position.distance(goal) <= GOAL_TOLERANCE {
        return 0.0;
    }
    let proj = route.project(position);
    if proj.at_end {
        position.distance(goal)
    } else {
        (route.length() - proj.arc_length).max(0.0)
    }
}
