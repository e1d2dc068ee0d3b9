//! Categorical action distribution over the nine discrete driving actions.

use crate::world::ActionCommand;
use rand::Rng;

pub const ACTION_COUNT: usize = 9;
const STEER_LEVELS: [f64; 3] = [-0.5, 0.0, 0.5];
const PEDAL_LEVEL: f64 = 0.6;

/// Maps an action index to a command. Index = 3 * steer + pedal, where steer
/// is {left -0.5, straight, right +0.5} and pedal is {throttle, coast, brake}.
pub fn action_command(index: usize) -> ActionCommand {
    assert!(index < ACTION_COUNT, "action index {index} out of range");
    let steer = STEER_LEVELS[index / 3];
    let (throttle, brake) = match index % 3 {
        0 => (PEDAL_LEVEL, 0.0),
        1 => (0.0, 0.0),
        _ => (0.0, PEDAL_LEVEL),
    };
    ActionCommand {
        steer,
        throttle,
        brake,
    }
}

/// Softmax distribution stored as normalised log-probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Categorical {
    log_probs: Vec<f64>,
}

impl Categorical {
    pub fn from_logits(logits: &[f64]) -> Self {
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        Self {
            log_probs: logits.iter().map(|l| l - lse).collect(),
        }
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    pub fn log_prob(&self, action: usize) -> f64 {
        self.log_probs[action]
    }

    pub fn probs(&self) -> Vec<f64> {
        self.log_probs.iter().map(|l| l.exp()).collect()
    }

    pub fn entropy(&self) -> f64 {
        -self
            .log_probs
            .iter()
            .map(|&l| if l == f64::NEG_INFINITY { 0.0 } else { l.exp() * l })
            .sum::<f64>()
    }

    /// KL(self || other)
    pub fn kl(&self, other: &Categorical) -> f64 {
        self.log_probs
            .iter()
            .zip(&other.log_probs)
            .map(|(&p, &q)| if p == f64::NEG_INFINITY { 0.0 } else { p.exp() * (p - q) })
            .sum()
    }

    pub fn mode(&self) -> usize {
        self.log_probs
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &l)| if l > best.1 { (i, l) } else { best })
            .0
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, l) in self.log_probs.iter().enumerate() {
            acc += l.exp();
            if u < acc {
                return i;
            }
        }
        // Rounding left the cumulative sum just under 1.
        self.log_probs
            .iter()
            .rposition(|l| *l > f64::NEG_INFINITY)
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampledAction {
    pub index: usize,
    pub log_prob: f64,
    pub entropy: f64,
}

pub fn sample_action<R: Rng + ?Sized>(logits: &[f64], rng: &mut R) -> SampledAction {
    let dist = Categorical::from_logits(logits);
    let index = dist.sample(rng);
    SampledAction {
        index,
        log_prob: dist.log_prob(index),
        entropy: dist.entropy(),
    }
}
