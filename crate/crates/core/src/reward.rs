//! Per-tick reward functions for victims and the two adversary variants.

use crate::world::StepFlags;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

pub const VICTIM_COLLISION_PENALTY: f64 = 100.0;
pub const VICTIM_OFFROAD_PENALTY: f64 = 0.5;
pub const ADVERSARY_COLLISION_BONUS: f64 = 5.0;
pub const ADVERSARY_OFFROAD_BONUS: f64 = 0.05;
pub const SPEED_DIVISOR: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardKind {
    Victim,
    AdvCollision,
    AdvOffroad,
}

impl RewardKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            RewardKind::Victim => "victim",
            RewardKind::AdvCollision => "adv_collision",
            RewardKind::AdvOffroad => "adv_offroad",
        }
    }

    pub fn reward(&self, prev: &StepFlags, cur: &StepFlags, p: &RewardParams) -> f64 {
        match self {
            RewardKind::Victim => victim_reward(prev, cur, p),
            RewardKind::AdvCollision => adversary_collision_reward(prev, cur, p),
            RewardKind::AdvOffroad => adversary_offroad_reward(prev, cur, p),
        }
    }
}

impl fmt::Display for RewardKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RewardKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "victim" => Ok(RewardKind::Victim),
            "adv_collision" => Ok(RewardKind::AdvCollision),
            "adv_offroad" => Ok(RewardKind::AdvOffroad),
            other => Err(format!(
                "unknown reward kind `{other}` (expected victim, adv_collision or adv_offroad)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardParams {
    /// Per-tick lane-keeping bonus for victims.
    pub beta: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        Self { beta: 0.5 }
    }
}

fn b(flag: bool) -> f64 {
    if flag {
        1.0
    } else {
        0.0
    }
}

fn progress(prev: &StepFlags, cur: &StepFlags) -> f64 {
    (prev.remaining - cur.remaining) + cur.forward_speed / SPEED_DIVISOR
}

/// Progress and speed, heavy collision penalty, mild lane penalty, and
/// `beta` on every tick spent inside the route lane.
pub fn victim_reward(prev: &StepFlags, cur: &StepFlags, p: &RewardParams) -> f64 {
    let lane_bonus = if cur.iol { 0.0 } else { p.beta };
    progress(prev, cur) - VICTIM_COLLISION_PENALTY * (b(cur.cv) + b(cur.co))
        - VICTIM_OFFROAD_PENALTY * (b(cur.io) + b(cur.iol))
        + lane_bonus
}

pub fn adversary_collision_reward(prev: &StepFlags, cur: &StepFlags, _p: &RewardParams) -> f64 {
    progress(prev, cur)
        + ADVERSARY_COLLISION_BONUS * (b(cur.cv) + b(cur.co))
        + ADVERSARY_OFFROAD_BONUS * (b(cur.io) + b(cur.iol))
}

pub fn adversary_offroad_reward(prev: &StepFlags, cur: &StepFlags, _p: &RewardParams) -> f64 {
    progress(prev, cur) + ADVERSARY_OFFROAD_BONUS * (b(cur.io) + b(cur.iol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn flags(remaining: f64, f: f64, cv: bool, co: bool, io: bool, iol: bool) -> StepFlags {
        StepFlags {
            cv,
            co,
            io,
            iol,
            forward_speed: f,
            remaining,
        }
    }

    #[test]
    fn victim_collision_example() {
        let p = RewardParams { beta: 0.0 };
        let prev = flags(10.0, 0.0, false, false, false, false);
        let cur = flags(9.5, 5.0, true, false, false, false);
        assert!((victim_reward(&prev, &cur, &p) - -99.0).abs() < 1e-9);
    }

    #[test]
    fn victim_lane_bonus_only() {
        let p = RewardParams::default();
        let f = flags(10.0, 0.0, false, false, false, false);
        assert!((victim_reward(&f, &f, &p) - 0.5).abs() < 1e-12);
        let off = flags(10.0, 0.0, false, false, false, true);
        assert!((victim_reward(&f, &off, &p) - -0.5).abs() < 1e-12);
    }

    #[test]
    fn adversary_examples() {
        let p = RewardParams::default();
        let prev = flags(10.0, 0.0, false, false, false, false);
        let cur = flags(9.8, 4.0, true, false, true, false);
        assert!((adversary_collision_reward(&prev, &cur, &p) - 5.65).abs() < 1e-9);
        let cur = flags(9.8, 4.0, false, false, true, true);
        assert!((adversary_offroad_reward(&prev, &cur, &p) - 0.7).abs() < 1e-9);
    }

    #[test]
    fn reward_kind_parses() {
        for k in [RewardKind::Victim, RewardKind::AdvCollision, RewardKind::AdvOffroad] {
            assert_eq!(k.as_str().parse::<RewardKind>().unwrap(), k);
        }
        assert!("collision".parse::<RewardKind>().is_err());
    }

    fn any_flags() -> impl Strategy<Value = StepFlags> {
        (
            0.0..100.0f64,
            0.0..15.0f64,
            any::<bool>(),
            any::<bool>(),
            any::<bool>(),
            any::<bool>(),
        )
            .prop_map(|(d, f, cv, co, io, iol)| flags(d, f, cv, co, io, iol))
    }

    proptest! {
        #[test]
        fn victim_penalises_every_failure_flag(prev in any_flags(), cur in any_flags(), beta in 0.0..2.0f64) {
            let p = RewardParams { beta };
            let mut clean = cur;
            clean.cv = false; clean.co = false; clean.io = false; clean.iol = false;
            let base = victim_reward(&prev, &clean, &p);
            for set in [
                |f: &mut StepFlags| f.cv = true,
                |f: &mut StepFlags| f.co = true,
                |f: &mut StepFlags| f.io = true,
                |f: &mut StepFlags| f.iol = true,
            ] {
                let mut bad = clean;
                set(&mut bad);
                prop_assert!(victim_reward(&prev, &bad, &p) < base);
            }
        }

        #[test]
        fn offroad_reward_ignores_collisions(prev in any_flags(), cur in any_flags()) {
            let p = RewardParams::default();
            let mut other = cur;
            other.cv = !cur.cv;
            other.co = !cur.co;
            prop_assert_eq!(adversary_offroad_reward(&prev, &cur, &p), adversary_offroad_reward(&prev, &other, &p));
        }

        #[test]
        fn adversary_rewards_differ_by_collision_bonus(prev in any_flags(), cur in any_flags()) {
            let p = RewardParams::default();
            let diff = adversary_collision_reward(&prev, &cur, &p) - adversary_offroad_reward(&prev, &cur, &p);
            let expected = 5.0 * (b(cur.cv) + b(cur.co));
            prop_assert!((diff - expected).abs() < 1e-9);
        }
    }
}
