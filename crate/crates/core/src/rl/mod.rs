//! Rewiring MDP and its PPO agent.
//!
//! The state holds, per node, how many entropy-ranked candidates to connect
//! (`k`) and how many current neighbours to drop (`d`). Each step nudges
//! every count by -1, 0 or +1, and the rewired graph is rebuilt from the
//! original edges as a pure function of the state.

mod mdp;
mod policy;
mod ppo;

pub use mdp::{
    apply_rewire, reward, rewired_edges, transition, RewardParams, RewireAction, RewireState, StateBounds,
    DEFAULT_K_MAX,
};
pub use policy::{PolicyForward, PolicyNet, PolicyOptimizer, CHOICES};
pub use ppo::{
    clipped_surrogate, gae, greedy_rollout, normalize_advantages, ppo_loss, ppo_update, train_on_evaluator, Agent,
    AgentStep, PpoConfig, PpoLoss, RolloutBuffer, Transition,
};
