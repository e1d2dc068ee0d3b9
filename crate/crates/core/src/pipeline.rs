//! End-to-end runs on disk: phases, evaluations, reports and the run manifest.
//!
//! Run directory layout:
//!
//! ```text
//! <out>/config.toml                      effective configuration
//! <out>/manifest.json                    phases, seeds, checkpoint checksums, warnings
//! <out>/checkpoints/<label>/<agent>.ckpt
//! <out>/stats/<label>.jsonl              one record per PPO update
//! <out>/reports/<label>.json             metrics report per evaluation condition
//! <out>/reports/comparison.{json,txt}
//! <out>/plots/<label>.{svg,csv,episode.json}
//! ```

use crate::checkpoint::{file_checksum, load_checkpoint, save_checkpoint, write_atomic, Checkpoint, CheckpointMeta};
use crate::config::{Budget, RunConfig};
use crate::error::{Error, Result};
use crate::metrics::{compare, evaluate, trajectory_csv, trajectory_svg, Column, ComparisonTable, EvalSettings, MetricsReport};
use crate::nn::{AdamState, Architecture, NetworkParams};
use crate::orchestrator::{
    derive_seed, run_training_phase, AgentPolicy, EpisodeLog, Learner, Phase, PhaseHooks, PhasePlan, StatsRecord,
    TrainSettings,
};
use crate::reward::RewardKind;
use crate::scenario::{Role, ScenarioConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

pub const CODE_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointRef {
    pub agent_id: String,
    pub path: PathBuf,
    pub sha256: String,
}

impl CheckpointRef {
    fn of(agent_id: &str, path: &Path) -> Result<Self> {
        Ok(Self {
            agent_id: agent_id.to_string(),
            path: path.to_path_buf(),
            sha256: file_checksum(path)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseRecord {
    pub phase: Phase,
    pub label: String,
    pub seed: u64,
    pub budget: Budget,
    pub episodes: u64,
    pub steps: u64,
    pub updates: u64,
    pub inputs: Vec<CheckpointRef>,
    pub outputs: Vec<CheckpointRef>,
    /// Frozen checkpoint file checksums after the phase; equal to the inputs'.
    pub frozen_after: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub label: String,
    pub seed: u64,
    pub fingerprint: String,
    pub report: PathBuf,
    pub report_sha256: String,
    pub inputs: Vec<CheckpointRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub code_version: String,
    pub command: String,
    /// Command line that repeats this run from its echoed configuration.
    pub reproduce: String,
    pub seed: u64,
    pub workers: usize,
    pub config: RunConfig,
    pub phases: Vec<PhaseRecord>,
    pub evaluations: Vec<EvalRecord>,
    pub warnings: Vec<String>,
}

/// A run rooted at one output directory.
pub struct Pipeline {
    pub cfg: RunConfig,
    pub out: PathBuf,
    pub manifest: Manifest,
    pool: rayon::ThreadPool,
}

struct DiskHooks<'a> {
    label: &'a str,
    phase: Phase,
    dir: PathBuf,
    stats: fs::File,
    stats_path: PathBuf,
    saved: Vec<PathBuf>,
}

impl PhaseHooks for DiskHooks<'_> {
    fn on_episode(&mut self, episode: u64, log: &EpisodeLog) -> Result<()> {
        log::debug!(
            "{} episode {episode}: {} ticks, rewards {:?}",
            self.label,
            log.ticks,
            log.agents.iter().map(|a| (a.agent_id.as_str(), a.total_reward)).collect::<Vec<_>>()
        );
        Ok(())
    }

    fn on_update(&mut self, record: &StatsRecord) -> Result<()> {
        let line = serde_json::to_string(record).expect("stats serialise");
        writeln!(self.stats, "{line}").map_err(|e| Error::io(&self.stats_path, e))?;
        log::info!(
            "{} {} ep {} reward {:.2} kl {:.4} entropy {:.3} loss {:.3}",
            self.label,
            record.agent_id,
            record.episode,
            record.stats.mean_episode_reward,
            record.stats.kl,
            record.stats.entropy,
            record.stats.total_loss
        );
        Ok(())
    }

    fn on_checkpoint(&mut self, episode: u64, learners: &[Learner], last: bool) -> Result<()> {
        self.saved.clear();
        for l in learners {
            let path = self.dir.join(format!("{}.ckpt", l.policy.agent_id));
            save_checkpoint(&path, &learner_checkpoint(l))?;
            self.saved.push(path);
        }
        log::info!(
            "{} {} checkpoint at episode {episode}{}",
            self.label,
            self.phase,
            if last { " (final)" } else { "" }
        );
        Ok(())
    }
}

fn learner_checkpoint(l: &Learner) -> Checkpoint {
    Checkpoint {
        meta: CheckpointMeta {
            agent_id: l.policy.agent_id.clone(),
            role: l.policy.role,
            reward_kind: l.policy.reward_kind,
            architecture: l.policy.params.architecture().clone(),
            episodes: l.episodes,
            steps: l.steps,
            adam_step: Some(l.adam.step),
            kl_coef: Some(l.kl_coef),
        },
        params: l.policy.params.clone(),
        adam: Some(l.adam.clone()),
    }
}

/// The demo's evaluation reports and their comparison.
#[derive(Debug, Clone)]
pub struct DemoOutcome {
    pub reports: Vec<MetricsReport>,
    pub table: ComparisonTable,
    pub checkpoints: BTreeMap<String, Vec<CheckpointRef>>,
}

impl DemoOutcome {
    pub fn report(&self, label: &str) -> Option<&MetricsReport> {
        self.reports.iter().find(|r| r.label == label)
    }
}

pub fn attack_label(kind: RewardKind) -> String {
    format!("attack_{kind}")
}

pub fn retrained_label(kind: RewardKind) -> String {
    format!("retrained_{kind}")
}

pub fn adversary_label(kind: RewardKind) -> String {
    format!("adversary_{kind}")
}

impl Pipeline {
    /// Validates `cfg`, creates `out` and echoes the effective configuration into it.
    pub fn new(cfg: RunConfig, out: &Path, command: &str) -> Result<Self> {
        cfg.validate()?;
        fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        let config_path = out.join("config.toml");
        write_atomic(&config_path, cfg.to_toml().as_bytes())?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {} workers: {e}", cfg.workers)))?;
        let manifest = Manifest {
            code_version: CODE_VERSION.to_string(),
            command: command.to_string(),
            reproduce: format!(
                "advdrive {command} --config {} --out {}",
                config_path.display(),
                out.display()
            ),
            seed: cfg.seed,
            workers: cfg.workers,
            config: cfg.clone(),
            phases: Vec::new(),
            evaluations: Vec::new(),
            warnings: Vec::new(),
        };
        let p = Self {
            cfg,
            out: out.to_path_buf(),
            manifest,
            pool,
        };
        p.write_manifest()?;
        Ok(p)
    }

    /// Overrides the recorded command line used to repeat the run.
    pub fn set_reproduce(&mut self, cmd: String) -> Result<()> {
        self.manifest.reproduce = cmd;
        self.write_manifest()
    }

    pub fn write_manifest(&self) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.manifest).expect("manifest serialises");
        write_atomic(&self.out.join("manifest.json"), text.as_bytes())
    }

    fn warn(&mut self, msg: String) {
        log::warn!("{msg}");
        self.manifest.warnings.push(msg);
    }

    fn arch(&self) -> Architecture {
        Architecture::for_mode(self.cfg.raster.resolution_mode)
    }

    fn agent_index(&self, id: &str) -> u64 {
        self.cfg
            .scenario
            .agents
            .iter()
            .position(|a| a.id == id)
            .unwrap_or(usize::MAX) as u64
    }

    fn fresh_policy(&self, id: &str, role: Role, reward_kind: RewardKind) -> AgentPolicy {
        let seed = derive_seed(self.cfg.seed, &[100, self.agent_index(id)]);
        AgentPolicy {
            agent_id: id.to_string(),
            role,
            reward_kind,
            params: NetworkParams::init(&self.arch(), &mut ChaCha8Rng::seed_from_u64(seed)),
            frozen: false,
        }
    }

    fn learner_seed(&self, phase: Phase, id: &str) -> u64 {
        derive_seed(self.cfg.seed, &[200, phase.tag(), self.agent_index(id)])
    }

    fn adversary_id(&self) -> Result<String> {
        self.cfg
            .scenario
            .ids_with_role(Role::Adversary)
            .into_iter()
            .next()
            .ok_or_else(|| Error::Config("scenario has no adversary agent".into()))
    }

    fn load_policy(&self, path: &Path) -> Result<(AgentPolicy, Checkpoint)> {
        let ckpt = load_checkpoint(path)?;
        let arch = self.arch();
        if *ckpt.params.architecture() != arch {
            return Err(Error::Config(format!(
                "{} holds a network for a different observation mode than {}",
                path.display(),
                self.cfg.raster.resolution_mode
            )));
        }
        let spec = self.cfg.scenario.agent(&ckpt.meta.agent_id).ok_or_else(|| {
            Error::Config(format!(
                "{} belongs to `{}`, which the scenario does not contain",
                path.display(),
                ckpt.meta.agent_id
            ))
        })?;
        if spec.role != ckpt.meta.role {
            return Err(Error::Config(format!(
                "{} is a {} checkpoint but `{}` is a {} in the scenario",
                path.display(),
                ckpt.meta.role,
                spec.id,
                spec.role
            )));
        }
        let policy = AgentPolicy {
            agent_id: ckpt.meta.agent_id.clone(),
            role: ckpt.meta.role,
            reward_kind: ckpt.meta.reward_kind,
            params: ckpt.params.clone(),
            frozen: true,
        };
        Ok((policy, ckpt))
    }

    fn load_victims(&self, paths: &[PathBuf]) -> Result<Vec<(AgentPolicy, Checkpoint, PathBuf)>> {
        let mut out = Vec::new();
        for p in paths {
            let (policy, ckpt) = self.load_policy(p)?;
            if policy.role != Role::Victim {
                return Err(Error::Config(format!("{} is not a victim checkpoint", p.display())));
            }
            out.push((policy, ckpt, p.clone()));
        }
        let mut ids: Vec<&str> = out.iter().map(|(p, _, _)| p.agent_id.as_str()).collect();
        ids.sort();
        let mut want = self.cfg.scenario.ids_with_role(Role::Victim);
        want.sort();
        if ids != want.iter().map(String::as_str).collect::<Vec<_>>() {
            return Err(Error::Config(format!(
                "expected checkpoints for victims {want:?}, got {ids:?}"
            )));
        }
        Ok(out)
    }

    fn settings(&self) -> TrainSettings {
        TrainSettings {
            hyper: self.cfg.ppo.clone(),
            raster: self.cfg.raster.clone(),
            reward: self.cfg.reward,
            seed: self.cfg.seed,
            episodes_per_round: self.cfg.train.episodes_per_round,
            checkpoint_every: self.cfg.train.checkpoint_every,
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn run_phase(
        &mut self,
        phase: Phase,
        label: &str,
        budget: &Budget,
        scenario: &ScenarioConfig,
        learners: &mut [Learner],
        frozen: &[AgentPolicy],
        inputs: Vec<CheckpointRef>,
        frozen_files: &[(String, PathBuf)],
    ) -> Result<Vec<CheckpointRef>> {
        let dir = self.out.join("checkpoints").join(label);
        let stats_dir = self.out.join("stats");
        fs::create_dir_all(&stats_dir).map_err(|e| Error::io(&stats_dir, e))?;
        let stats_path = stats_dir.join(format!("{label}.jsonl"));
        let stats = fs::File::create(&stats_path).map_err(|e| Error::io(&stats_path, e))?;
        let before = frozen_checksums(frozen_files)?;
        let plan = PhasePlan {
            phase,
            episodes: budget.episodes,
            max_steps: budget.max_steps,
            step_budget: budget.step_cap,
            trainable: learners.iter().map(|l| l.policy.agent_id.clone()).collect(),
            frozen: frozen.iter().map(|p| p.agent_id.clone()).collect(),
        };
        let mut hooks = DiskHooks {
            label,
            phase,
            dir,
            stats,
            stats_path,
            saved: Vec::new(),
        };
        let settings = self.settings();
        log::info!("{label}: {} phase, {} episodes", phase, budget.episodes);
        let summary = self
            .pool
            .install(|| run_training_phase(&plan, scenario, learners, frozen, &settings, &mut hooks));
        let summary = summary.map_err(|e| match e {
            Error::Divergence(msg) => {
                let last: Vec<String> = hooks.saved.iter().map(|p| p.display().to_string()).collect();
                Error::Divergence(if last.is_empty() {
                    format!("{msg}; no checkpoint was written yet")
                } else {
                    format!("{msg}; last good checkpoints: {}", last.join(", "))
                })
            }
            other => other,
        })?;
        let frozen_after = verify_frozen(phase, frozen_files, &before)?;
        let outputs = hooks
            .saved
            .iter()
            .zip(learners.iter())
            .map(|(p, l)| CheckpointRef::of(&l.policy.agent_id, p))
            .collect::<Result<Vec<_>>>()?;
        self.manifest.phases.push(PhaseRecord {
            phase,
            label: label.to_string(),
            seed: self.cfg.seed,
            budget: budget.clone(),
            episodes: summary.episodes,
            steps: summary.steps,
            updates: summary.updates,
            inputs,
            outputs: outputs.clone(),
            frozen_after,
        });
        self.write_manifest()?;
        Ok(outputs)
    }

    /// Trains every victim from scratch with no adversary present.
    pub fn train_baseline(&mut self) -> Result<Vec<CheckpointRef>> {
        let victims = self.cfg.scenario.ids_with_role(Role::Victim);
        let ids: Vec<&str> = victims.iter().map(String::as_str).collect();
        let scenario = self.cfg.scenario.with_agents(&ids)?;
        let mut learners: Vec<Learner> = victims
            .iter()
            .map(|id| {
                let policy = self.fresh_policy(id, Role::Victim, RewardKind::Victim);
                let adam = AdamState::new(&policy.params);
                Learner::new(policy, adam, self.cfg.ppo.kl_coef_init, self.learner_seed(Phase::Baseline, id))
            })
            .collect();
        let budget = self.cfg.phases.baseline.clone();
        self.run_phase(Phase::Baseline, "baseline", &budget, &scenario, &mut learners, &[], Vec::new(), &[])
    }

    /// Trains a fresh adversary of `kind` against the frozen opponent victim.
    pub fn train_adversary(&mut self, victim_ckpts: &[PathBuf], kind: RewardKind) -> Result<CheckpointRef> {
        if kind == RewardKind::Victim {
            return Err(Error::Config("adversary reward kind must be adv_collision or adv_offroad".into()));
        }
        let victims = self.load_victims(victim_ckpts)?;
        let adversary = self.adversary_id()?;
        let opponent = self.cfg.train.adversary_opponent.clone();
        let scenario = self.cfg.scenario.with_agents(&[opponent.as_str(), adversary.as_str()])?;
        let frozen: Vec<AgentPolicy> = victims
            .iter()
            .filter(|(p, _, _)| p.agent_id == opponent)
            .map(|(p, _, _)| p.clone())
            .collect();
        let inputs = victims
            .iter()
            .map(|(p, _, path)| CheckpointRef::of(&p.agent_id, path))
            .collect::<Result<Vec<_>>>()?;
        let frozen_files: Vec<(String, PathBuf)> = victims
            .iter()
            .map(|(p, _, path)| (p.agent_id.clone(), path.clone()))
            .collect();
        let policy = self.fresh_policy(&adversary, Role::Adversary, kind);
        let adam = AdamState::new(&policy.params);
        let mut learners = vec![Learner::new(
            policy,
            adam,
            self.cfg.ppo.kl_coef_init,
            self.learner_seed(Phase::AdversaryTraining, &adversary),
        )];
        let budget = self.cfg.phases.adversary.clone();
        let label = adversary_label(kind);
        let mut out = self.run_phase(
            Phase::AdversaryTraining,
            &label,
            &budget,
            &scenario,
            &mut learners,
            &frozen,
            inputs,
            &frozen_files,
        )?;
        Ok(out.remove(0))
    }

    /// Continues victim training from `victim_ckpts` with the frozen adversary present.
    pub fn retrain(&mut self, victim_ckpts: &[PathBuf], adversary_ckpt: &Path, label: &str) -> Result<Vec<CheckpointRef>> {
        let victims = self.load_victims(victim_ckpts)?;
        let (adversary, _) = self.load_policy(adversary_ckpt)?;
        if adversary.role != Role::Adversary {
            return Err(Error::Config(format!("{} is not an adversary checkpoint", adversary_ckpt.display())));
        }
        let mut inputs = victims
            .iter()
            .map(|(p, _, path)| CheckpointRef::of(&p.agent_id, path))
            .collect::<Result<Vec<_>>>()?;
        inputs.push(CheckpointRef::of(&adversary.agent_id, adversary_ckpt)?);
        let mut learners = Vec::new();
        for (policy, ckpt, _) in victims {
            let (adam, warning) = ckpt.adam_or_fresh();
            if let Some(w) = warning {
                self.warn(w);
            }
            let kl = ckpt.meta.kl_coef.unwrap_or(self.cfg.ppo.kl_coef_init);
            let seed = self.learner_seed(Phase::Retraining, &policy.agent_id);
            let mut l = Learner::new(policy, adam, kl, seed);
            l.episodes = ckpt.meta.episodes;
            l.steps = ckpt.meta.steps;
            learners.push(l);
        }
        let scenario = self.cfg.scenario.clone();
        let frozen_files = vec![(adversary.agent_id.clone(), adversary_ckpt.to_path_buf())];
        let budget = self.cfg.phases.retraining.clone();
        self.run_phase(
            Phase::Retraining,
            label,
            &budget,
            &scenario,
            &mut learners,
            &[adversary],
            inputs,
            &frozen_files,
        )
    }

    /// Evaluates the victims, with the adversary when one is given, and writes
    /// the report and one trajectory plot.
    pub fn evaluate(&mut self, label: &str, victim_ckpts: &[PathBuf], adversary_ckpt: Option<&Path>) -> Result<MetricsReport> {
        let victims = self.load_victims(victim_ckpts)?;
        let mut inputs = victims
            .iter()
            .map(|(p, _, path)| CheckpointRef::of(&p.agent_id, path))
            .collect::<Result<Vec<_>>>()?;
        let mut policies: Vec<AgentPolicy> = victims.into_iter().map(|(p, _, _)| p).collect();
        let mut ids: Vec<String> = policies.iter().map(|p| p.agent_id.clone()).collect();
        if let Some(path) = adversary_ckpt {
            let (adv, _) = self.load_policy(path)?;
            if adv.role != Role::Adversary {
                return Err(Error::Config(format!("{} is not an adversary checkpoint", path.display())));
            }
            inputs.push(CheckpointRef::of(&adv.agent_id, path)?);
            ids.push(adv.agent_id.clone());
            policies.push(adv);
        }
        let id_refs: Vec<&str> = ids.iter().map(String::as_str).collect();
        let scenario = self.cfg.scenario.with_agents(&id_refs)?;
        let settings = EvalSettings {
            label,
            raster: &self.cfg.raster,
            reward: &self.cfg.reward,
            episodes: self.cfg.eval.episodes,
            max_steps: self.cfg.eval.max_steps,
            seed: self.cfg.seed,
            action_mode: self.cfg.eval.action_mode,
        };
        log::info!("evaluating {label}: {} episodes x {} steps", settings.episodes, settings.max_steps);
        let (report, logs) = self.pool.install(|| evaluate(&policies, &scenario, &settings))?;
        let report_path = self.out.join("reports").join(format!("{label}.json"));
        write_atomic(&report_path, report.to_json().as_bytes())?;
        let log = &logs[self.cfg.eval.plot_episode];
        write_plot(&self.out.join("plots"), label, log)?;
        self.manifest.evaluations.push(EvalRecord {
            label: label.to_string(),
            seed: self.cfg.seed,
            fingerprint: report.fingerprint.clone(),
            report_sha256: file_checksum(&report_path)?,
            report: report_path,
            inputs,
        });
        self.write_manifest()?;
        Ok(report)
    }

    /// All phases at the configured budgets, five evaluation conditions and the comparison table.
    pub fn run_demo(&mut self) -> Result<DemoOutcome> {
        let mut checkpoints = BTreeMap::new();
        let baseline = self.train_baseline()?;
        let baseline_paths: Vec<PathBuf> = baseline.iter().map(|c| c.path.clone()).collect();
        checkpoints.insert("baseline".to_string(), baseline);
        let mut reports = vec![self.evaluate("baseline", &baseline_paths, None)?];

        let kinds = self.cfg.train.adversary_kinds.clone();
        let mut adversaries = Vec::new();
        for kind in &kinds {
            let adv = self.train_adversary(&baseline_paths, *kind)?;
            checkpoints.insert(adversary_label(*kind), vec![adv.clone()]);
            reports.push(self.evaluate(&attack_label(*kind), &baseline_paths, Some(&adv.path))?);
            adversaries.push(adv);
        }
        for (kind, adv) in kinds.iter().zip(&adversaries) {
            let label = retrained_label(*kind);
            let retrained = self.retrain(&baseline_paths, &adv.path, &label)?;
            let paths: Vec<PathBuf> = retrained.iter().map(|c| c.path.clone()).collect();
            checkpoints.insert(label.clone(), retrained);
            reports.push(self.evaluate(&label, &paths, Some(&adv.path))?);
        }

        let mut columns = vec![Column {
            label: "baseline".into(),
            reference: None,
            report: &reports[0],
        }];
        for (i, kind) in kinds.iter().enumerate() {
            columns.push(Column {
                label: attack_label(*kind),
                reference: Some("baseline".into()),
                report: &reports[1 + i],
            });
        }
        for (i, kind) in kinds.iter().enumerate() {
            columns.push(Column {
                label: retrained_label(*kind),
                reference: Some(attack_label(*kind)),
                report: &reports[1 + kinds.len() + i],
            });
        }
        let table = compare(&columns)?;
        write_comparison(&self.out.join("reports"), &table)?;
        self.write_manifest()?;
        Ok(DemoOutcome {
            reports,
            table,
            checkpoints,
        })
    }
}

/// SHA-256 of each frozen checkpoint file, keyed by agent.
pub fn frozen_checksums(files: &[(String, PathBuf)]) -> Result<BTreeMap<String, String>> {
    files
        .iter()
        .map(|(id, p)| Ok((id.clone(), file_checksum(p)?)))
        .collect()
}

/// Re-hashes the frozen files; any difference from `before` aborts with [`Error::Freeze`].
pub fn verify_frozen(
    phase: Phase,
    files: &[(String, PathBuf)],
    before: &BTreeMap<String, String>,
) -> Result<BTreeMap<String, String>> {
    let now = frozen_checksums(files)?;
    for (id, p) in files {
        if before.get(id) != now.get(id) {
            return Err(Error::Freeze(format!(
                "frozen checkpoint {} changed during the {phase} phase",
                p.display()
            )));
        }
    }
    Ok(now)
}

/// Writes `comparison.json` and `comparison.txt` into `dir`.
pub fn write_comparison(dir: &Path, table: &ComparisonTable) -> Result<()> {
    write_atomic(&dir.join("comparison.json"), table.to_json().as_bytes())?;
    write_atomic(&dir.join("comparison.txt"), table.render_text().as_bytes())
}

/// Writes `<label>.svg`, `<label>.csv` and the source `<label>.episode.json` into `dir`.
pub fn write_plot(dir: &Path, label: &str, log: &EpisodeLog) -> Result<()> {
    write_atomic(&dir.join(format!("{label}.svg")), trajectory_svg(log).as_bytes())?;
    write_atomic(&dir.join(format!("{label}.csv")), trajectory_csv(log).as_bytes())?;
    let json = serde_json::to_string(log).expect("episode log serialises");
    write_atomic(&dir.join(format!("{label}.episode.json")), json.as_bytes())
}

pub fn read_episode_log(path: &Path) -> Result<EpisodeLog> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: not an episode log: {e}", path.display())))
}

pub fn read_report(path: &Path) -> Result<MetricsReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    MetricsReport::from_json(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}
