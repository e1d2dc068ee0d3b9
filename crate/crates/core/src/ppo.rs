//! On-policy PPO: complete-episode batches, GAE, clipped surrogate with an
//! adaptive KL penalty, entropy bonus and squared-error value loss.

use crate::error::{Error, Result};
use crate::nn::{adam_update, AdamConfig, AdamState, Architecture, Categorical, NetworkParams};
use crate::raster::ObservationImage;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoHyper {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip: f64,
    pub kl_target: f64,
    pub kl_coef_init: f64,
    pub vf_coef: f64,
    pub ent_coef: f64,
    pub minibatch: usize,
    pub epochs: usize,
    /// Minimum timesteps per update; rounded up to whole episodes.
    pub train_batch: usize,
    pub lr: f64,
}

impl Default for PpoHyper {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            gae_lambda: 1.0,
            clip: 0.3,
            kl_target: 0.03,
            kl_coef_init: 0.3,
            vf_coef: 1.0,
            ent_coef: 0.01,
            minibatch: 64,
            epochs: 8,
            train_batch: 128,
            lr: 0.0006,
        }
    }
}

impl PpoHyper {
    pub fn validate(&self) -> Result<()> {
        let range = |key: &str, v: f64, lo: f64, hi: f64, lo_open: bool| -> Result<()> {
            let ok = if lo_open { v > lo } else { v >= lo } && v <= hi;
            if ok {
                Ok(())
            } else {
                let open = if lo_open { "(" } else { "[" };
                Err(Error::Config(format!("ppo.{key} = {v} is outside {open}{lo}, {hi}]")))
            }
        };
        range("gamma", self.gamma, 0.0, 1.0, false)?;
        range("gae_lambda", self.gae_lambda, 0.0, 1.0, false)?;
        range("clip", self.clip, 0.0, 1.0, true)?;
        range("kl_target", self.kl_target, 0.0, f64::MAX, true)?;
        range("kl_coef_init", self.kl_coef_init, 0.0, f64::MAX, false)?;
        range("vf_coef", self.vf_coef, 0.0, f64::MAX, false)?;
        range("ent_coef", self.ent_coef, 0.0, f64::MAX, false)?;
        range("lr", self.lr, 0.0, 1.0, true)?;
        for (key, v) in [
            ("minibatch", self.minibatch),
            ("epochs", self.epochs),
            ("train_batch", self.train_batch),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("ppo.{key} must be positive")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Transition {
    pub obs: ObservationImage,
    pub action: usize,
    pub log_prob: f64,
    /// Full behaviour-policy logits, kept for the KL term.
    pub logits: Vec<f64>,
    pub value: f64,
    pub reward: f64,
    pub done: bool,
}

/// One agent's transitions from one episode.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub agent_id: String,
    pub episode: u64,
    pub transitions: Vec<Transition>,
    /// Value estimate after the last transition: zero when the agent
    /// terminated, the critic's estimate when the episode was cut off.
    pub bootstrap_value: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn total_reward(&self) -> f64 {
        self.transitions.iter().map(|t| t.reward).sum()
    }

    pub fn advantages(&self, gamma: f64, lambda: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let rewards: Vec<f64> = self.transitions.iter().map(|t| t.reward).collect();
        let values: Vec<f64> = self.transitions.iter().map(|t| t.value).collect();
        compute_advantages(&rewards, &values, self.bootstrap_value, gamma, lambda)
    }
}

/// GAE(gamma, lambda) advantages and the matching returns (advantage + value).
pub fn compute_advantages(
    rewards: &[f64],
    values: &[f64],
    bootstrap_value: f64,
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if rewards.is_empty() {
        return Err(Error::Contract("cannot compute advantages of an empty trajectory".into()));
    }
    if rewards.len() != values.len() {
        return Err(Error::Contract("rewards and values differ in length".into()));
    }
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut next_value = bootstrap_value;
    let mut running = 0.0;
    for t in (0..n).rev() {
        let delta = rewards[t] + gamma * next_value - values[t];
        running = delta + gamma * lambda * running;
        adv[t] = running;
        next_value = values[t];
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}

#[derive(Debug, Clone)]
pub struct Sample {
    /// Network input, channel-first at the architecture's resolution.
    pub input: Vec<f64>,
    pub action: usize,
    pub old_log_prob: f64,
    pub old_logits: Vec<f64>,
    pub old_value: f64,
    pub advantage: f64,
    pub ret: f64,
}

/// Whole episodes flattened into samples with normalised advantages.
#[derive(Debug, Clone)]
pub struct RolloutBatch {
    pub samples: Vec<Sample>,
    pub episode_rewards: Vec<f64>,
}

const ADV_EPS: f64 = 1e-8;

impl RolloutBatch {
    pub fn from_trajectories(trajs: &[Trajectory], arch: &Architecture, hyper: &PpoHyper) -> Result<Self> {
        let mut samples = Vec::new();
        let mut episode_rewards = Vec::with_capacity(trajs.len());
        for traj in trajs {
            let (adv, ret) = traj.advantages(hyper.gamma, hyper.gae_lambda)?;
            episode_rewards.push(traj.total_reward());
            for ((t, a), r) in traj.transitions.iter().zip(adv).zip(ret) {
                samples.push(Sample {
                    input: t.obs.planar(arch.input_size)?,
                    action: t.action,
                    old_log_prob: t.log_prob,
                    old_logits: t.logits.clone(),
                    old_value: t.value,
                    advantage: a,
                    ret: r,
                });
            }
        }
        normalize_advantages(&mut samples);
        Ok(Self {
            samples,
            episode_rewards,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

pub fn normalize_advantages(samples: &mut [Sample]) {
    if samples.is_empty() {
        return;
    }
    let n = samples.len() as f64;
    let mean = samples.iter().map(|s| s.advantage).sum::<f64>() / n;
    let var = samples.iter().map(|s| (s.advantage - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    for s in samples {
        s.advantage = (s.advantage - mean) / (std + ADV_EPS);
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub total: f64,
    /// Negated mean clipped surrogate.
    pub surrogate: f64,
    /// Mean squared value error.
    pub vf: f64,
    pub entropy: f64,
    pub kl: f64,
}

fn loss_impl(
    params: &NetworkParams,
    samples: &[&Sample],
    hyper: &PpoHyper,
    kl_coef: f64,
    mut grads: Option<&mut NetworkParams>,
) -> Result<LossParts> {
    if samples.is_empty() {
        return Err(Error::Contract("empty minibatch".into()));
    }
    let n = samples.len() as f64;
    let mut parts = LossParts::default();
    for (i, s) in samples.iter().enumerate() {
        let out = params.forward_input(s.input.clone())?;
        let new = Categorical::from_logits(&out.logits);
        let old = Categorical::from_logits(&s.old_logits);
        let ratio = (new.log_prob(s.action) - s.old_log_prob).exp();
        if !ratio.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite probability ratio at minibatch transition {i}"
            )));
        }
        let a = s.advantage;
        let unclipped = ratio * a;
        let clipped = ratio.clamp(1.0 - hyper.clip, 1.0 + hyper.clip) * a;
        let surr = unclipped.min(clipped);
        let entropy = new.entropy();
        let kl = old.kl(&new);
        let verr = out.value - s.ret;
        parts.surrogate -= surr / n;
        parts.vf += verr * verr / n;
        parts.entropy += entropy / n;
        parts.kl += kl / n;

        if let Some(g) = grads.as_deref_mut() {
            let p_new = new.probs();
            let p_old = old.probs();
            let dsurr_dlogp = if unclipped <= clipped { ratio * a } else { 0.0 };
            let mut dlogits = vec![0.0; p_new.len()];
            for j in 0..p_new.len() {
                let onehot = if j == s.action { 1.0 } else { 0.0 };
                let lp = new.log_probs()[j];
                let dentropy = if p_new[j] > 0.0 { -p_new[j] * (lp + entropy) } else { 0.0 };
                dlogits[j] = (-dsurr_dlogp * (onehot - p_new[j])
                    - hyper.ent_coef * dentropy
                    + kl_coef * (p_new[j] - p_old[j]))
                    / n;
            }
            let dvalue = 2.0 * hyper.vf_coef * verr / n;
            params.backward(&out.cache, &dlogits, dvalue, g);
        }
    }
    parts.total = parts.surrogate + hyper.vf_coef * parts.vf - hyper.ent_coef * parts.entropy
        + kl_coef * parts.kl;
    Ok(parts)
}

/// Minibatch PPO loss and its components.
pub fn ppo_loss(params: &NetworkParams, samples: &[&Sample], hyper: &PpoHyper, kl_coef: f64) -> Result<LossParts> {
    loss_impl(params, samples, hyper, kl_coef, None)
}

/// Loss together with its exact parameter gradient.
pub fn ppo_loss_and_grad(
    params: &NetworkParams,
    samples: &[&Sample],
    hyper: &PpoHyper,
    kl_coef: f64,
) -> Result<(LossParts, NetworkParams)> {
    let mut grads = params.zeros_like();
    let parts = loss_impl(params, samples, hyper, kl_coef, Some(&mut grads))?;
    Ok((parts, grads))
}

/// Grows the KL coefficient by 1.5x above twice the target, halves it below half the target.
pub fn adapt_kl_coef(kl_coef: f64, mean_kl: f64, kl_target: f64) -> f64 {
    if mean_kl > 2.0 * kl_target {
        kl_coef * 1.5
    } else if mean_kl < 0.5 * kl_target {
        kl_coef * 0.5
    } else {
        kl_coef
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub timesteps: usize,
    pub episodes: usize,
    pub mean_episode_reward: f64,
    /// Batch-mean KL(old || new) after the last epoch.
    pub kl: f64,
    /// Batch-mean policy entropy after the last epoch.
    pub entropy: f64,
    pub kl_coef_before: f64,
    pub kl_coef: f64,
    pub policy_loss: f64,
    pub vf_loss: f64,
    pub total_loss: f64,
    pub minibatches: usize,
}

/// Tolerance on the ratio check that catches batches collected under other weights.
pub const ON_POLICY_TOLERANCE: f64 = 1e-9;

/// Largest |ratio - 1| over the batch under `params`.
pub fn max_ratio_deviation(params: &NetworkParams, batch: &RolloutBatch) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for s in &batch.samples {
        let out = params.forward_input(s.input.clone())?;
        let lp = Categorical::from_logits(&out.logits).log_prob(s.action);
        worst = worst.max(((lp - s.old_log_prob).exp() - 1.0).abs());
    }
    Ok(worst)
}

/// Runs `epochs` passes of shuffled minibatch Adam steps, then adapts `kl_coef`.
pub fn update_policy<R: Rng + ?Sized>(
    params: &mut NetworkParams,
    adam: &mut AdamState,
    batch: &RolloutBatch,
    hyper: &PpoHyper,
    kl_coef: &mut f64,
    rng: &mut R,
) -> Result<UpdateStats> {
    if batch.is_empty() {
        return Err(Error::Contract("empty rollout batch".into()));
    }
    let dev = max_ratio_deviation(params, batch)?;
    if dev > ON_POLICY_TOLERANCE {
        return Err(Error::Contract(format!(
            "batch was not collected under the current parameters (max |ratio - 1| = {dev:e})"
        )));
    }
    let adam_cfg = AdamConfig::default();
    let mut order: Vec<usize> = (0..batch.len()).collect();
    let mut last = LossParts::default();
    let mut minibatches = 0;
    for epoch in 0..hyper.epochs {
        order.shuffle(rng);
        let mut acc = LossParts::default();
        let mut count = 0.0;
        for chunk in order.chunks(hyper.minibatch) {
            let mb: Vec<&Sample> = chunk.iter().map(|&i| &batch.samples[i]).collect();
            let (parts, grads) = ppo_loss_and_grad(params, &mb, hyper, *kl_coef)?;
            if !parts.total.is_finite() {
                return Err(Error::Divergence(format!("non-finite loss in epoch {epoch}")));
            }
            adam_update(params, &grads, adam, hyper.lr, &adam_cfg)?;
            if !params.is_finite() {
                return Err(Error::Divergence(format!("non-finite parameters in epoch {epoch}")));
            }
            let w = mb.len() as f64;
            acc.surrogate += parts.surrogate * w;
            acc.vf += parts.vf * w;
            acc.total += parts.total * w;
            count += w;
            minibatches += 1;
        }
        last = LossParts {
            surrogate: acc.surrogate / count,
            vf: acc.vf / count,
            total: acc.total / count,
            ..LossParts::default()
        };
    }
    let (mut kl, mut entropy) = (0.0, 0.0);
    for s in &batch.samples {
        let out = params.forward_input(s.input.clone())?;
        let new = Categorical::from_logits(&out.logits);
        kl += Categorical::from_logits(&s.old_logits).kl(&new);
        entropy += new.entropy();
    }
    let n = batch.len() as f64;
    kl /= n;
    entropy /= n;
    let before = *kl_coef;
    *kl_coef = adapt_kl_coef(before, kl, hyper.kl_target);
    let episodes = batch.episode_rewards.len();
    Ok(UpdateStats {
        timesteps: batch.len(),
        episodes,
        mean_episode_reward: batch.episode_rewards.iter().sum::<f64>() / episodes.max(1) as f64,
        kl,
        entropy,
        kl_coef_before: before,
        kl_coef: *kl_coef,
        policy_loss: last.surrogate,
        vf_loss: last.vf,
        total_loss: last.total,
        minibatches,
    })
}
