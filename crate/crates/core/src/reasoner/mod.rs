//! Path reasoning over the knowledge graph: state encoding, action spaces,
//! actor/critic/discriminator networks, rewards, rollouts and beam search.

pub mod action;
pub mod beam;
pub mod nets;
pub mod reward;
pub mod rollout;
pub mod state;
pub mod train;

pub use action::{action_space, Action, ActionSpace};
pub use nets::{PolicyConfig, PolicyNetworks, DISC_EPS};
pub use reward::{
    aggregate_reward, disc_loss, path_reward, terminal_reward, RewardBundle, RewardTransform,
    RewardWeights,
};
pub use rollout::{rank_items, ReasoningEnv, RecExample, Rollout, RolloutMode, StepRecord};
pub use state::{encode_state, state_dim};
pub use train::{
    actor_critic_loss, compute_targets, curves_csv, discriminator_loss, episode_gradients,
    fit_threshold, greedy_recall1, segment_scores, step_rewards, threshold_accuracy, train_epoch,
    train_rec, BridgeRewards, EpisodeTargets, RecConfig, RecEpochStats,
};
