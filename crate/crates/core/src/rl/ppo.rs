use ndarray::{Array1, Array2};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{RareError, Result};
use crate::rl::mdp::{transition, RewireAction, RewireState, StateBounds, DEFAULT_K_MAX};
use crate::rl::policy::{PolicyNet, CHOICES};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PpoConfig {
    pub clip_eps: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub rollout_len: usize,
    pub update_epochs: usize,
    pub learning_rate: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    /// Global gradient-norm clip; 0 disables it.
    pub max_grad_norm: f64,
    /// Steps per episode before the state resets to zeros.
    pub horizon: usize,
    pub hidden: usize,
    pub k_max: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip_eps: 0.2,
            gamma: 0.99,
            gae_lambda: 0.95,
            rollout_len: 16,
            update_epochs: 4,
            learning_rate: 3e-4,
            entropy_coef: 0.01,
            value_coef: 0.5,
            max_grad_norm: 0.5,
            horizon: 32,
            hidden: 64,
            k_max: DEFAULT_K_MAX,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !(self.clip_eps > 0.0 && unit(self.gamma) && unit(self.gae_lambda)) {
            return Err(RareError::invalid("PPO needs clip_eps > 0 and gamma, gae_lambda in [0, 1]"));
        }
        if self.rollout_len == 0 || self.update_epochs == 0 || self.horizon == 0 || self.hidden == 0 {
            return Err(RareError::invalid("PPO rollout, epochs, horizon and hidden width must be positive"));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 || self.entropy_coef < 0.0 || self.value_coef < 0.0 || self.max_grad_norm < 0.0 {
            return Err(RareError::invalid("PPO learning rate must be positive and coefficients nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: RewireState,
    pub choices: Vec<usize>,
    pub log_prob: f64,
    pub value: f64,
    pub reward: f64,
    /// Episode ended after this step; no bootstrapping across it.
    pub done: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RolloutBuffer {
    pub transitions: Vec<Transition>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl RolloutBuffer {
    pub fn push(&mut self, t: Transition) {
        self.transitions.push(t);
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn clear(&mut self) {
        self.transitions.clear();
        self.advantages.clear();
        self.returns.clear();
    }

    pub fn mean_reward(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.transitions.iter().map(|t| t.reward).sum::<f64>() / self.len() as f64
    }

    /// Generalised advantage estimates and returns. `last_value` bootstraps
    /// the step after the final transition unless that transition is terminal.
    pub fn compute_advantages(&mut self, last_value: f64, gamma: f64, lambda: f64) {
        let (adv, ret) = gae(&self.transitions, last_value, gamma, lambda);
        self.advantages = adv;
        self.returns = ret;
    }
}

pub fn gae(transitions: &[Transition], last_value: f64, gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let n = transitions.len();
    let mut adv = vec![0.0; n];
    let mut next_value = last_value;
    let mut running = 0.0;
    for t in (0..n).rev() {
        let tr = &transitions[t];
        let live = if tr.done { 0.0 } else { 1.0 };
        let delta = tr.reward + gamma * next_value * live - tr.value;
        running = delta + gamma * lambda * live * running;
        adv[t] = running;
        next_value = tr.value;
    }
    let ret = adv.iter().zip(transitions).map(|(a, t)| a + t.value).collect();
    (adv, ret)
}

/// Shifts to zero mean and scales to unit variance. An all-equal input maps
/// to zeros.
pub fn normalize_advantages(adv: &mut [f64]) {
    if adv.is_empty() {
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    for a in adv.iter_mut() {
        *a = if std > 1e-12 { (*a - mean) / std } else { 0.0 };
    }
}

pub fn clipped_surrogate(ratio: f64, advantage: f64, eps: f64) -> f64 {
    (ratio * advantage).min(ratio.clamp(1.0 - eps, 1.0 + eps) * advantage)
}

/// Derivative of [`clipped_surrogate`] with respect to the log-ratio.
fn surrogate_log_grad(ratio: f64, advantage: f64, eps: f64) -> f64 {
    let clipped = (advantage >= 0.0 && ratio > 1.0 + eps) || (advantage < 0.0 && ratio < 1.0 - eps);
    if clipped {
        0.0
    } else {
        ratio * advantage
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PpoLoss {
    pub total: f64,
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

/// Loss to minimise: `-surrogate + c_v * (V - R)^2 - c_e * H`, averaged over
/// the batch, where `H` is the joint (summed) head entropy. Returns the flat
/// parameter gradient with it.
pub fn ppo_loss(
    policy: &PolicyNet,
    transitions: &[Transition],
    advantages: &[f64],
    returns: &[f64],
    config: &PpoConfig,
) -> Result<(PpoLoss, Array1<f64>)> {
    let batch = transitions.len();
    if batch == 0 {
        return Err(RareError::invalid("PPO loss over an empty batch"));
    }
    if advantages.len() != batch || returns.len() != batch {
        return Err(RareError::DimensionMismatch("advantages/returns misaligned with transitions".into()));
    }
    let states: Vec<&RewireState> = transitions.iter().map(|t| &t.state).collect();
    let fwd = policy.forward(&states)?;
    let heads = policy.num_heads();
    let bf = batch as f64;
    let mut dlogits = Array2::zeros(fwd.logits.dim());
    let mut dvalues = Array1::zeros(batch);
    let mut loss = PpoLoss::default();

    for (b, tr) in transitions.iter().enumerate() {
        if tr.choices.len() != heads {
            return Err(RareError::DimensionMismatch("stored action length differs from head count".into()));
        }
        let logps: Vec<[f64; CHOICES]> = (0..heads).map(|j| fwd.head_log_probs(b, j)).collect();
        let new_lp: f64 = tr.choices.iter().zip(&logps).map(|(&c, lp)| lp[c]).sum();
        let log_ratio = new_lp - tr.log_prob;
        let ratio = log_ratio.exp();
        let adv = advantages[b];
        loss.policy -= clipped_surrogate(ratio, adv, config.clip_eps) / bf;
        loss.approx_kl += ((ratio - 1.0) - log_ratio) / bf;
        if (ratio - 1.0).abs() > config.clip_eps {
            loss.clip_fraction += 1.0 / bf;
        }
        let g_logp = -surrogate_log_grad(ratio, adv, config.clip_eps) / bf;

        for (j, lp) in logps.iter().enumerate() {
            let p = lp.map(f64::exp);
            let h: f64 = -p.iter().zip(lp).map(|(p, l)| p * l).sum::<f64>();
            loss.entropy += h / bf;
            for c in 0..CHOICES {
                let onehot = if c == tr.choices[j] { 1.0 } else { 0.0 };
                let d_policy = g_logp * (onehot - p[c]);
                // dH/dz_c = -p_c (ln p_c + H)
                let d_entropy = config.entropy_coef * p[c] * (lp[c] + h) / bf;
                dlogits[[b, j * CHOICES + c]] = d_policy + d_entropy;
            }
        }
        let err = fwd.values[b] - returns[b];
        loss.value += err * err / bf;
        dvalues[b] = 2.0 * config.value_coef * err / bf;
    }
    loss.total = loss.policy + config.value_coef * loss.value - config.entropy_coef * loss.entropy;
    let grad = policy.backward(&fwd, &dlogits, &dvalues);
    Ok((loss, grad))
}

/// Normalises advantages, then runs `update_epochs` full-batch Adam steps on
/// the clipped objective. Returns the loss from the last epoch.
pub fn ppo_update(policy: &mut PolicyNet, buffer: &mut RolloutBuffer, config: &PpoConfig) -> Result<PpoLoss> {
    if buffer.is_empty() {
        return Err(RareError::invalid("PPO update with an empty rollout buffer"));
    }
    if buffer.advantages.len() != buffer.len() {
        return Err(RareError::invalid("advantages must be computed before the update"));
    }
    let mut adv = buffer.advantages.clone();
    normalize_advantages(&mut adv);
    let mut last = PpoLoss::default();
    for _ in 0..config.update_epochs {
        let (loss, mut grad) = ppo_loss(policy, &buffer.transitions, &adv, &buffer.returns, config)?;
        if !loss.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(RareError::NonFinite("PPO loss or gradient".into()));
        }
        if config.max_grad_norm > 0.0 {
            let norm = grad.dot(&grad).sqrt();
            if norm > config.max_grad_norm {
                grad *= config.max_grad_norm / norm;
            }
        }
        policy.adam_step(&grad);
        last = loss;
    }
    Ok(last)
}

/// Sampling side of the agent: tracks the current state and episode step,
/// attributes rewards to the pending transition and triggers updates on
/// rollout boundaries.
#[derive(Debug, Clone)]
pub struct Agent {
    pub policy: PolicyNet,
    pub buffer: RolloutBuffer,
    pub config: PpoConfig,
    pub bounds: StateBounds,
    pending: Option<(RewireState, Vec<usize>, f64, f64)>,
    episode_step: usize,
    pub updates: usize,
    pub episode_rewards: Vec<f64>,
    episode_return: f64,
}

/// Outcome of one agent step.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentStep {
    /// State produced by the transition.
    pub reached: RewireState,
    /// State to act from next: `reached`, or zeros after a horizon reset.
    pub next: RewireState,
    pub reset: bool,
}

impl Agent {
    pub fn new(policy: PolicyNet, bounds: StateBounds, config: PpoConfig) -> Result<Self> {
        config.validate()?;
        if policy.num_nodes() != bounds.num_nodes() {
            return Err(RareError::DimensionMismatch("policy and bounds disagree on node count".into()));
        }
        Ok(Self {
            policy,
            buffer: RolloutBuffer::default(),
            config,
            bounds,
            pending: None,
            episode_step: 0,
            updates: 0,
            episode_rewards: Vec::new(),
            episode_return: 0.0,
        })
    }

    /// Samples an action in `state` and returns the successor. When the
    /// episode horizon is reached the successor is the zero state.
    pub fn act(&mut self, state: &RewireState, rng: &mut dyn RngCore) -> Result<(RewireAction, AgentStep)> {
        let (action, log_prob, value) = self.policy.sample_action(state, rng)?;
        self.pending = Some((state.clone(), action.choices(), log_prob, value));
        self.episode_step += 1;
        let reached = transition(state, &action, &self.bounds)?;
        let reset = self.episode_step >= self.config.horizon;
        let next = if reset {
            RewireState { step: reached.step, ..RewireState::zeros(state.num_nodes()) }
        } else {
            reached.clone()
        };
        Ok((action, AgentStep { reached, next, reset }))
    }

    /// Records the reward of the last action. `next` is the state the agent
    /// will act from; it bootstraps the value when a rollout closes.
    pub fn observe(&mut self, reward: f64, next: &RewireState) -> Result<Option<PpoLoss>> {
        let Some((state, choices, log_prob, value)) = self.pending.take() else {
            return Err(RareError::invalid("reward observed without a pending action"));
        };
        let done = self.episode_step >= self.config.horizon;
        self.buffer.push(Transition { state, choices, log_prob, value, reward, done });
        self.episode_return += reward;
        if done {
            self.episode_rewards.push(self.episode_return);
            self.episode_return = 0.0;
            self.episode_step = 0;
        }
        if self.buffer.len() < self.config.rollout_len {
            return Ok(None);
        }
        let last_value = if done { 0.0 } else { self.policy.value(next)? };
        self.buffer.compute_advantages(last_value, self.config.gamma, self.config.gae_lambda);
        let loss = ppo_update(&mut self.policy, &mut self.buffer, &self.config)?;
        self.buffer.clear();
        self.updates += 1;
        Ok(Some(loss))
    }

    pub fn has_pending(&self) -> bool {
        self.pending.is_some()
    }
}

/// Trains an agent on a fixed state evaluator, rewarding the change in
/// score from one state to the next, until `updates` PPO updates have run.
pub fn train_on_evaluator<F>(
    policy: PolicyNet,
    bounds: StateBounds,
    config: PpoConfig,
    updates: usize,
    rng: &mut dyn RngCore,
    mut evaluate: F,
) -> Result<Agent>
where
    F: FnMut(&RewireState) -> Result<f64>,
{
    let n = bounds.num_nodes();
    let mut agent = Agent::new(policy, bounds, config)?;
    let mut state = RewireState::zeros(n);
    let mut score = evaluate(&state)?;
    while agent.updates < updates {
        let (_, step) = agent.act(&state, rng)?;
        let reached = evaluate(&step.reached)?;
        let reward = reached - score;
        agent.observe(reward, &step.next)?;
        state = step.next;
        score = if step.reset { evaluate(&state)? } else { reached };
    }
    Ok(agent)
}

/// Follows the greedy policy from the zero state for `steps` transitions.
pub fn greedy_rollout(policy: &PolicyNet, bounds: &StateBounds, steps: usize) -> Result<RewireState> {
    let mut state = RewireState::zeros(bounds.num_nodes());
    for _ in 0..steps {
        let action = policy.greedy(&state)?;
        state = transition(&state, &action, bounds)?;
    }
    Ok(state)
}
