//! Reward terms and their aggregation.

use crate::error::{DicrError, Result};
use crate::kg::{EntityId, ReasonPath};

/// Maps a probability-like score to a reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RewardTransform {
    /// `log x − log(1 − x)`: grows with agreement.
    #[default]
    Logit,
    /// `log x + log(1 − x)`: peaks at `x = 0.5`.
    AsWritten,
}

impl RewardTransform {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            RewardTransform::Logit => x.ln() - (1.0 - x).ln(),
            RewardTransform::AsWritten => x.ln() + (1.0 - x).ln(),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "logit" => Ok(RewardTransform::Logit),
            "as-written" => Ok(RewardTransform::AsWritten),
            other => Err(DicrError::config(format!(
                "unknown reward transform `{other}` (expected logit or as-written)"
            ))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RewardTransform::Logit => "logit",
            RewardTransform::AsWritten => "as-written",
        }
    }
}

/// `−(log(1 − fake) + log real)`.
pub fn disc_loss(score_fake: f64, score_real: f64) -> f64 {
    -((1.0 - score_fake).ln() + score_real.ln())
}

/// Logit of the discriminator score.
pub fn path_reward(score: f64) -> f64 {
    RewardTransform::Logit.apply(score)
}

/// 1 when a finished path ends on a gold item.
pub fn terminal_reward(path: &ReasonPath, gold_items: &[EntityId]) -> f64 {
    if !path.terminal {
        return 0.0;
    }
    if gold_items.is_empty() {
        log::debug!("terminal reward requested without gold items");
        return 0.0;
    }
    if gold_items.contains(&path.last()) {
        1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl RewardWeights {
    pub fn validate(&self) -> Result<()> {
        let ws = [self.alpha, self.beta, self.gamma];
        if ws.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || ws.iter().sum::<f64>() > 1.0 {
            return Err(DicrError::config(format!(
                "reward weights must be non-negative with sum at most 1, got {ws:?}"
            )));
        }
        Ok(())
    }
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights {
            alpha: 0.006,
            beta: 0.001,
            gamma: 0.006,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardBundle {
    pub r_terminal: f64,
    pub r_path: f64,
    pub r_knowledge: f64,
    pub r_semantic: f64,
    pub weights: RewardWeights,
}

/// Combines the reward terms of one step.
///
/// Before joint training only the path and terminal terms are used:
/// `α R_p + (1 − α) R_T`. In joint mode the knowledge weight is dropped for
/// paths shorter than `max_len`.
pub fn aggregate_reward(
    b: &RewardBundle,
    path_len: usize,
    max_len: usize,
    joint: bool,
) -> Result<f64> {
    b.weights.validate()?;
    let w = b.weights;
    if !joint {
        return Ok(w.alpha * b.r_path + (1.0 - w.alpha) * b.r_terminal);
    }
    let beta = if path_len < max_len { 0.0 } else { w.beta };
    Ok(w.alpha * b.r_path
        + beta * b.r_knowledge
        + w.gamma * b.r_semantic
        + (1.0 - w.alpha - beta - w.gamma) * b.r_terminal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn disc_loss_values() {
        assert!((disc_loss(0.5, 0.5) - 1.3862943611198906).abs() < 1e-12);
        assert!(disc_loss(1e-9, 1.0 - 1e-9) < 1e-8);
    }

    #[test]
    fn path_reward_values() {
        assert_eq!(path_reward(0.5), 0.0);
        assert!((path_reward(0.9) - 9f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn transforms() {
        assert!((RewardTransform::AsWritten.apply(0.5) + 1.3862943611198906).abs() < 1e-12);
        assert!(
            (RewardTransform::AsWritten.apply(0.9) - (0.9f64.ln() + 0.1f64.ln())).abs() < 1e-12
        );
        assert!((RewardTransform::AsWritten.apply(0.9) + 2.408).abs() < 1e-3);
        assert_eq!(
            RewardTransform::parse("logit").unwrap(),
            RewardTransform::Logit
        );
        assert!(RewardTransform::parse("nope").is_err());
    }

    #[test]
    fn terminal_reward_cases() {
        let mut p = ReasonPath::from_hops(EntityId(0), &[(crate::kg::RelationId(0), EntityId(1))]);
        assert_eq!(terminal_reward(&p, &[EntityId(1)]), 0.0);
        p.terminal = true;
        assert_eq!(terminal_reward(&p, &[EntityId(1)]), 1.0);
        assert_eq!(terminal_reward(&p, &[EntityId(2)]), 0.0);
        assert_eq!(terminal_reward(&p, &[]), 0.0);
    }

    #[test]
    fn aggregation() {
        let b = RewardBundle {
            r_terminal: 1.0,
            r_path: 1.0,
            r_knowledge: 0.0,
            r_semantic: 0.0,
            weights: RewardWeights::default(),
        };
        assert!((aggregate_reward(&b, 3, 3, true).unwrap() - 0.993).abs() < 1e-12);
        let b2 = RewardBundle {
            r_knowledge: 1.0,
            ..b
        };
        let full = aggregate_reward(&b2, 3, 3, true).unwrap();
        let short = aggregate_reward(&b2, 2, 3, true).unwrap();
        assert!((full - (0.006 + 0.001 + 0.987)).abs() < 1e-12);
        assert!((short - (0.006 + 0.988)).abs() < 1e-12);
        let zero = RewardBundle {
            r_terminal: 0.0,
            r_path: 0.0,
            ..b
        };
        assert_eq!(aggregate_reward(&zero, 3, 3, true).unwrap(), 0.0);
        let bad = RewardBundle {
            weights: RewardWeights {
                alpha: 0.5,
                beta: 0.4,
                gamma: 0.2,
            },
            ..b
        };
        assert!(aggregate_reward(&bad, 3, 3, true).is_err());
    }

    #[test]
    fn pre_joint_equals_joint_with_zero_extra_weights() {
        let w = RewardWeights {
            alpha: 0.3,
            beta: 0.0,
            gamma: 0.0,
        };
        let b = RewardBundle {
            r_terminal: 1.0,
            r_path: -0.7,
            r_knowledge: 5.0,
            r_semantic: 2.0,
            weights: w,
        };
        assert_eq!(
            aggregate_reward(&b, 3, 3, true).unwrap().to_bits(),
            aggregate_reward(&b, 3, 3, false).unwrap().to_bits()
        );
    }

    proptest! {
        #[test]
        fn logit_antisymmetry(s in 1e-6f64..(1.0 - 1e-6)) {
            prop_assert!((path_reward(s) + path_reward(1.0 - s)).abs() < 1e-9);
        }

        #[test]
        fn disc_loss_non_negative(f in 1e-6f64..(1.0 - 1e-6), r in 1e-6f64..(1.0 - 1e-6)) {
            prop_assert!(disc_loss(f, r) >= 0.0);
        }
    }
}
