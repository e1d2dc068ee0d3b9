//! Multi-agent episode execution and the three training phases.

use crate::error::{Error, Result};
use crate::nn::{action_command, AdamState, Categorical, NetworkParams};
use crate::ppo::{update_policy, PpoHyper, RolloutBatch, Trajectory, Transition, UpdateStats};
use crate::raster::{render, RasterConfig};
use crate::reward::{RewardKind, RewardParams};
use crate::scenario::{MapConfig, Role, ScenarioConfig};
use crate::world::{ActionCommand, AgentId, StepFlags, Termination, WorldState};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

/// Splits a master seed into an independent sub-seed for the given path.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    path.iter().fold(mix(master), |acc, &p| mix(acc ^ mix(p)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentPolicy {
    pub agent_id: AgentId,
    pub role: Role,
    pub reward_kind: RewardKind,
    pub params: NetworkParams,
    pub frozen: bool,
}

impl AgentPolicy {
    pub fn validate(&self) -> Result<()> {
        let ok = match self.role {
            Role::Victim => self.reward_kind == RewardKind::Victim,
            Role::Adversary => self.reward_kind != RewardKind::Victim,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "agent `{}` with role {} cannot use reward kind {}",
                self.agent_id, self.role, self.reward_kind
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionMode {
    #[default]
    Sample,
    Greedy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlagKind {
    Cv,
    Co,
    Io,
    Iol,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionRow {
    pub tick: u64,
    pub agent: AgentId,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlagEvent {
    pub tick: u64,
    pub agent: AgentId,
    pub flag: FlagKind,
    pub x: f64,
    pub y: f64,
}

/// Per-agent counts over the ticks the agent was simulated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSummary {
    pub agent_id: AgentId,
    pub role: Role,
    pub reward_kind: RewardKind,
    pub ticks: u64,
    pub cv_ticks: u64,
    pub co_ticks: u64,
    pub io_ticks: u64,
    pub iol_ticks: u64,
    /// Post-step tick index of the first CV or CO flag.
    pub first_collision_tick: Option<u64>,
    pub total_reward: f64,
    pub termination: Option<Termination>,
}

/// Everything needed to replay an episode on a plot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub seed: u64,
    pub dt: f64,
    pub ticks: u64,
    pub map: MapConfig,
    pub agents: Vec<AgentSummary>,
    /// One row per agent per simulated tick, including frozen terminated vehicles.
    pub positions: Vec<PositionRow>,
    pub events: Vec<FlagEvent>,
}

impl EpisodeLog {
    pub fn summary(&self, id: &str) -> Option<&AgentSummary> {
        self.agents.iter().find(|a| a.agent_id == id)
    }
}

#[derive(Debug, Clone)]
pub struct EpisodeOutcome {
    /// Trajectories of the non-frozen policies.
    pub trajectories: BTreeMap<AgentId, Trajectory>,
    pub log: EpisodeLog,
}

#[derive(Debug, Clone, Copy)]
pub struct EpisodeSpec<'a> {
    pub scenario: &'a ScenarioConfig,
    pub raster: &'a RasterConfig,
    pub reward: &'a RewardParams,
    pub max_steps: usize,
    pub seed: u64,
    pub episode: u64,
    pub action_mode: ActionMode,
}

fn match_policies<'p>(
    policies: &'p [AgentPolicy],
    scenario: &ScenarioConfig,
) -> Result<Vec<&'p AgentPolicy>> {
    if policies.len() != scenario.agents.len() {
        return Err(Error::Config(format!(
            "{} policies supplied for {} scenario agents",
            policies.len(),
            scenario.agents.len()
        )));
    }
    let mut out = Vec::with_capacity(policies.len());
    for spec in &scenario.agents {
        let p = policies
            .iter()
            .find(|p| p.agent_id == spec.id)
            .ok_or_else(|| Error::Config(format!("no policy for agent `{}`", spec.id)))?;
        if p.role != spec.role {
            return Err(Error::Config(format!(
                "policy for `{}` has role {}, scenario says {}",
                spec.id, p.role, spec.role
            )));
        }
        p.validate()?;
        out.push(p);
    }
    Ok(out)
}

/// Runs one episode. All agents act on the same pre-step world, each from its
/// own rendered observation.
pub fn run_episode(policies: &[AgentPolicy], spec: &EpisodeSpec) -> Result<EpisodeOutcome> {
    let ordered = match_policies(policies, spec.scenario)?;
    let by_id: BTreeMap<&str, &AgentPolicy> =
        ordered.iter().map(|p| (p.agent_id.as_str(), *p)).collect();
    let mut world = WorldState::new(spec.scenario, derive_seed(spec.seed, &[0]))?;
    let mut rngs: BTreeMap<&str, ChaCha8Rng> = ordered
        .iter()
        .enumerate()
        .map(|(i, p)| {
            (
                p.agent_id.as_str(),
                ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &[1, i as u64])),
            )
        })
        .collect();
    let mut prev: BTreeMap<AgentId, StepFlags> = BTreeMap::new();
    for id in world.agents.keys() {
        prev.insert(id.clone(), world.observe_flags(id)?);
    }
    let mut summaries: BTreeMap<AgentId, AgentSummary> = ordered
        .iter()
        .map(|p| {
            (
                p.agent_id.clone(),
                AgentSummary {
                    agent_id: p.agent_id.clone(),
                    role: p.role,
                    reward_kind: p.reward_kind,
                    ticks: 0,
                    cv_ticks: 0,
                    co_ticks: 0,
                    io_ticks: 0,
                    iol_ticks: 0,
                    first_collision_tick: None,
                    total_reward: 0.0,
                    termination: None,
                },
            )
        })
        .collect();
    let mut trajectories: BTreeMap<AgentId, Trajectory> = ordered
        .iter()
        .filter(|p| !p.frozen)
        .map(|p| {
            (
                p.agent_id.clone(),
                Trajectory {
                    agent_id: p.agent_id.clone(),
                    episode: spec.episode,
                    transitions: Vec::new(),
                    bootstrap_value: 0.0,
                },
            )
        })
        .collect();
    let mut positions = Vec::new();
    let mut events = Vec::new();

    for _ in 0..spec.max_steps {
        if world.all_terminated() {
            break;
        }
        let active: Vec<AgentId> = world.active_ids().cloned().collect();
        let mut actions: BTreeMap<AgentId, ActionCommand> = BTreeMap::new();
        let mut pending: BTreeMap<AgentId, Transition> = BTreeMap::new();
        for id in &active {
            let policy = by_id[id.as_str()];
            let obs = render(&world, id, spec.raster)?;
            let out = policy.params.forward(&obs)?;
            let dist = Categorical::from_logits(&out.logits);
            let index = match spec.action_mode {
                ActionMode::Sample => dist.sample(rngs.get_mut(id.as_str()).expect("agent rng")),
                ActionMode::Greedy => dist.mode(),
            };
            actions.insert(id.clone(), action_command(index));
            if !policy.frozen {
                pending.insert(
                    id.clone(),
                    Transition {
                        obs,
                        action: index,
                        log_prob: dist.log_prob(index),
                        logits: out.logits,
                        value: out.value,
                        reward: 0.0,
                        done: false,
                    },
                );
            }
        }
        let flags = world.step(&actions)?;
        let tick = world.tick;
        for (id, f) in &flags {
            let policy = by_id[id.as_str()];
            let r = policy.reward_kind.reward(&prev[id], f, spec.reward);
            prev.insert(id.clone(), *f);
            let pos = world.agents[id].state.position;
            let s = summaries.get_mut(id).expect("summary");
            s.ticks += 1;
            s.total_reward += r;
            for (set, kind, counter) in [
                (f.cv, FlagKind::Cv, &mut s.cv_ticks),
                (f.co, FlagKind::Co, &mut s.co_ticks),
                (f.io, FlagKind::Io, &mut s.io_ticks),
                (f.iol, FlagKind::Iol, &mut s.iol_ticks),
            ] {
                if set {
                    *counter += 1;
                    events.push(FlagEvent {
                        tick,
                        agent: id.clone(),
                        flag: kind,
                        x: pos.x,
                        y: pos.y,
                    });
                }
            }
            if f.collided() && s.first_collision_tick.is_none() {
                s.first_collision_tick = Some(tick);
            }
            s.termination = world.agents[id].terminated;
            if let Some(mut t) = pending.remove(id) {
                t.reward = r;
                t.done = world.is_terminated(id);
                trajectories
                    .get_mut(id)
                    .expect("trajectory")
                    .transitions
                    .push(t);
            }
        }
        for (id, body) in &world.agents {
            positions.push(PositionRow {
                tick,
                agent: id.clone(),
                x: body.state.position.x,
                y: body.state.position.y,
                heading: body.state.heading,
                speed: body.state.speed,
            });
        }
    }

    for (id, traj) in trajectories.iter_mut() {
        if !world.is_terminated(id) && !traj.is_empty() {
            let obs = render(&world, id, spec.raster)?;
            traj.bootstrap_value = by_id[id.as_str()].params.forward(&obs)?.value;
        }
    }
    trajectories.retain(|_, t| !t.is_empty());
    Ok(EpisodeOutcome {
        trajectories,
        log: EpisodeLog {
            seed: spec.seed,
            dt: world.dt,
            ticks: world.tick,
            map: spec.scenario.map.clone(),
            agents: summaries.into_values().collect(),
            positions,
            events,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Baseline,
    AdversaryTraining,
    Retraining,
    Evaluation,
}

impl Phase {
    pub fn as_str(&self) -> &'static str {
        match self {
            Phase::Baseline => "baseline",
            Phase::AdversaryTraining => "adversary_training",
            Phase::Retraining => "retraining",
            Phase::Evaluation => "evaluation",
        }
    }

    /// Stable number used when deriving per-phase seeds.
    pub fn tag(&self) -> u64 {
        match self {
            Phase::Baseline => 1,
            Phase::AdversaryTraining => 2,
            Phase::Retraining => 3,
            Phase::Evaluation => 4,
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Phase {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "baseline" => Ok(Phase::Baseline),
            "adversary_training" => Ok(Phase::AdversaryTraining),
            "retraining" => Ok(Phase::Retraining),
            "evaluation" => Ok(Phase::Evaluation),
            other => Err(format!("unknown phase `{other}`")),
        }
    }
}

/// Episode and step budget of one phase together with who trains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePlan {
    pub phase: Phase,
    pub episodes: usize,
    pub max_steps: usize,
    /// Cap on simulated world ticks summed over the phase; `None` means episodes only.
    pub step_budget: Option<u64>,
    pub trainable: Vec<AgentId>,
    pub frozen: Vec<AgentId>,
}

impl PhasePlan {
    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 || self.max_steps == 0 {
            return Err(Error::Config(format!(
                "{} phase needs positive episodes and max_steps",
                self.phase
            )));
        }
        if let Some(id) = self.trainable.iter().find(|id| self.frozen.contains(id)) {
            return Err(Error::Config(format!(
                "agent `{id}` is both trainable and frozen in the {} phase",
                self.phase
            )));
        }
        Ok(())
    }
}

/// A trainable policy with its optimiser and PPO state.
#[derive(Debug, Clone)]
pub struct Learner {
    pub policy: AgentPolicy,
    pub adam: AdamState,
    pub kl_coef: f64,
    pub episodes: u64,
    pub steps: u64,
    rng: ChaCha8Rng,
    buffer: Vec<Trajectory>,
    buffered_steps: usize,
}

impl Learner {
    pub fn new(policy: AgentPolicy, adam: AdamState, kl_coef: f64, seed: u64) -> Self {
        Self {
            policy: AgentPolicy {
                frozen: false,
                ..policy
            },
            adam,
            kl_coef,
            episodes: 0,
            steps: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            buffer: Vec::new(),
            buffered_steps: 0,
        }
    }

    pub fn id(&self) -> &str {
        &self.policy.agent_id
    }

    fn push(&mut self, traj: Trajectory) {
        self.buffered_steps += traj.len();
        self.episodes += 1;
        self.steps += traj.len() as u64;
        self.buffer.push(traj);
    }

    fn ready(&self, hyper: &PpoHyper) -> bool {
        self.buffered_steps >= hyper.train_batch
    }

    fn update(&mut self, hyper: &PpoHyper) -> Result<UpdateStats> {
        let batch = RolloutBatch::from_trajectories(
            &self.buffer,
            self.policy.params.architecture(),
            hyper,
        )?;
        self.buffer.clear();
        self.buffered_steps = 0;
        update_policy(
            &mut self.policy.params,
            &mut self.adam,
            &batch,
            hyper,
            &mut self.kl_coef,
            &mut self.rng,
        )
    }
}

/// One line of the per-update training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRecord {
    pub phase: Phase,
    pub agent_id: AgentId,
    /// Phase episodes completed when the update ran.
    pub episode: u64,
    pub agent_steps: u64,
    #[serde(flatten)]
    pub stats: UpdateStats,
}

/// Observer callbacks fired by [`run_training_phase`].
pub trait PhaseHooks {
    fn on_episode(&mut self, _episode: u64, _log: &EpisodeLog) -> Result<()> {
        Ok(())
    }
    fn on_update(&mut self, _record: &StatsRecord) -> Result<()> {
        Ok(())
    }
    /// Called every `checkpoint_every` episodes and once at phase end.
    fn on_checkpoint(&mut self, _episode: u64, _learners: &[Learner], _final: bool) -> Result<()> {
        Ok(())
    }
}

pub struct NoHooks;
impl PhaseHooks for NoHooks {}

#[derive(Debug, Clone)]
pub struct TrainSettings {
    pub hyper: PpoHyper,
    pub raster: RasterConfig,
    pub reward: RewardParams,
    pub seed: u64,
    /// Episodes collected with the same parameters before any update is considered.
    pub episodes_per_round: usize,
    pub checkpoint_every: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSummary {
    pub phase: Phase,
    pub episodes: u64,
    pub steps: u64,
    pub updates: u64,
    pub frozen_checksums: BTreeMap<AgentId, String>,
    pub trained_checksums: BTreeMap<AgentId, String>,
    pub mean_episode_reward: BTreeMap<AgentId, f64>,
}

fn checksums<'a>(policies: impl Iterator<Item = &'a AgentPolicy>) -> BTreeMap<AgentId, String> {
    policies
        .map(|p| (p.agent_id.clone(), p.params.checksum()))
        .collect()
}

/// Trains `learners` against `frozen` for the plan's budget.
///
/// Frozen parameters are checksummed before and after; any change aborts with
/// [`Error::Freeze`].
pub fn run_training_phase(
    plan: &PhasePlan,
    scenario: &ScenarioConfig,
    learners: &mut [Learner],
    frozen: &[AgentPolicy],
    settings: &TrainSettings,
    hooks: &mut dyn PhaseHooks,
) -> Result<PhaseSummary> {
    plan.validate()?;
    settings.hyper.validate()?;
    for (ids, group) in [
        (&plan.trainable, learners.iter().map(|l| l.policy.agent_id.clone()).collect::<Vec<_>>()),
        (&plan.frozen, frozen.iter().map(|p| p.agent_id.clone()).collect()),
    ] {
        let mut a = ids.clone();
        let mut b = group;
        a.sort();
        b.sort();
        if a != b {
            return Err(Error::Config(format!(
                "{} phase plan lists {a:?} but {b:?} were supplied",
                plan.phase
            )));
        }
    }
    let frozen: Vec<AgentPolicy> = frozen
        .iter()
        .map(|p| AgentPolicy {
            frozen: true,
            ..p.clone()
        })
        .collect();
    let before = checksums(frozen.iter());

    let round = settings.episodes_per_round.max(1);
    let mut episode: u64 = 0;
    let mut steps: u64 = 0;
    let mut updates: u64 = 0;
    let mut reward_sums: BTreeMap<AgentId, f64> = BTreeMap::new();
    let mut since_checkpoint = 0usize;
    while (episode as usize) < plan.episodes && plan.step_budget.is_none_or(|b| steps < b) {
        let n = round.min(plan.episodes - episode as usize);
        let mut policies: Vec<AgentPolicy> = learners.iter().map(|l| l.policy.clone()).collect();
        policies.extend(frozen.iter().cloned());
        let outcomes: Vec<Result<EpisodeOutcome>> = (0..n as u64)
            .into_par_iter()
            .map(|k| {
                let ep = episode + k;
                run_episode(
                    &policies,
                    &EpisodeSpec {
                        scenario,
                        raster: &settings.raster,
                        reward: &settings.reward,
                        max_steps: plan.max_steps,
                        seed: derive_seed(settings.seed, &[plan.phase.tag(), ep]),
                        episode: ep,
                        action_mode: ActionMode::Sample,
                    },
                )
            })
            .collect();
        for outcome in outcomes {
            let mut outcome = outcome?;
            for s in &outcome.log.agents {
                *reward_sums.entry(s.agent_id.clone()).or_default() += s.total_reward;
            }
            for learner in learners.iter_mut() {
                if let Some(t) = outcome.trajectories.remove(learner.id()) {
                    learner.push(t);
                }
            }
            steps += outcome.log.ticks;
            hooks.on_episode(episode, &outcome.log)?;
            episode += 1;
            since_checkpoint += 1;
        }
        for learner in learners.iter_mut() {
            if !learner.ready(&settings.hyper) {
                continue;
            }
            let stats = learner.update(&settings.hyper).map_err(|e| match e {
                Error::Divergence(msg) | Error::Numerical(msg) => Error::Divergence(format!(
                    "{} update for `{}` after episode {episode}: {msg}",
                    plan.phase,
                    learner.id()
                )),
                other => other,
            })?;
            updates += 1;
            hooks.on_update(&StatsRecord {
                phase: plan.phase,
                agent_id: learner.policy.agent_id.clone(),
                episode,
                agent_steps: learner.steps,
                stats,
            })?;
        }
        if settings.checkpoint_every > 0 && since_checkpoint >= settings.checkpoint_every {
            since_checkpoint = 0;
            hooks.on_checkpoint(episode, learners, false)?;
        }
        let now = checksums(frozen.iter());
        if now != before {
            return Err(Error::Freeze(format!(
                "frozen parameters changed during the {} phase",
                plan.phase
            )));
        }
    }
    hooks.on_checkpoint(episode, learners, true)?;
    let after = checksums(frozen.iter());
    if after != before {
        return Err(Error::Freeze(format!(
            "frozen parameters changed during the {} phase",
            plan.phase
        )));
    }
    let mean = reward_sums
        .into_iter()
        .map(|(id, s)| (id, s / episode.max(1) as f64))
        .collect();
    Ok(PhaseSummary {
        phase: plan.phase,
        episodes: episode,
        steps,
        updates,
        frozen_checksums: after,
        trained_checksums: checksums(learners.iter().map(|l| &l.policy)),
        mean_episode_reward: mean,
    })
}

/// Runs `episodes` evaluation episodes with every policy frozen.
#[allow(clippy::too_many_arguments)]
pub fn run_evaluation_episodes(
    policies: &[AgentPolicy],
    scenario: &ScenarioConfig,
    raster: &RasterConfig,
    reward: &RewardParams,
    episodes: usize,
    max_steps: usize,
    seed: u64,
    action_mode: ActionMode,
) -> Result<Vec<EpisodeLog>> {
    let policies: Vec<AgentPolicy> = policies
        .iter()
        .map(|p| AgentPolicy {
            frozen: true,
            ..p.clone()
        })
        .collect();
    (0..episodes as u64)
        .into_par_iter()
        .map(|ep| {
            run_episode(
                &policies,
                &EpisodeSpec {
                    scenario,
                    raster,
                    reward,
                    max_steps,
                    seed: derive_seed(seed, &[Phase::Evaluation.tag(), ep]),
                    episode: ep,
                    action_mode,
                },
            )
            .map(|o| o.log)
        })
        .collect()
}
