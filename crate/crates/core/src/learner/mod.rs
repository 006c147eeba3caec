//! Gradient-based learners: SAC, advantage-weighted actor-critic, and
//! behavior cloning, sharing one twin-critic model.
//!
//! The policy update of the advantage-weighted learner maximizes
//! `E[log pi(a|s) * clip(exp(A(s,a)/lambda), 0, w_max)]` with the advantage
//! treated as a constant; with all weights forced to one it reduces exactly to
//! behavior cloning (the two code paths are shared).

pub mod trajectory;

use ndarray::{s, Array1, Array2, ArrayView1};
use rand::Rng;

use crate::nn::{Activation, AdamState, GaussianPolicyHead, Mlp};
use crate::replay::Transition;
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct AcConfig {
    pub obs_dim: usize,
    pub act_dim: usize,
    pub hidden: Vec<usize>,
    pub discount: f64,
    pub soft_update_rate: f64,
    pub awac_lambda: f64,
    pub entropy_alpha: f64,
    pub advantage_samples: usize,
    pub weight_clip: f64,
    pub learning_rate: f64,
}

impl Default for AcConfig {
    fn default() -> Self {
        AcConfig {
            obs_dim: crate::env::OBS_DIM,
            act_dim: crate::env::ACT_DIM,
            hidden: vec![64, 64],
            discount: 0.99,
            soft_update_rate: 0.005,
            awac_lambda: 1.0,
            entropy_alpha: 0.05,
            advantage_samples: 4,
            weight_clip: 20.0,
            learning_rate: 3e-4,
        }
    }
}

impl AcConfig {
    fn validate(&self) -> Result<()> {
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return Err(Error::Config(format!("discount must be in (0,1), got {}", self.discount)));
        }
        if !(self.soft_update_rate > 0.0 && self.soft_update_rate <= 1.0) {
            return Err(Error::Config(format!(
                "soft_update_rate must be in (0,1], got {}",
                self.soft_update_rate
            )));
        }
        if self.awac_lambda <= 0.0 || self.entropy_alpha < 0.0 || self.advantage_samples == 0 {
            return Err(Error::Config("invalid learner hyperparameters".into()));
        }
        Ok(())
    }
}

/// Per-update diagnostics.
#[derive(Debug, Clone, Default)]
pub struct LossReport {
    pub critic_loss: f64,
    pub policy_loss: f64,
    pub mean_advantage: f64,
    pub mean_weight: f64,
}

#[derive(Debug, Clone)]
pub struct ActorCritic {
    pub cfg: AcConfig,
    pub actor: Mlp,
    pub head: GaussianPolicyHead,
    pub critic1: Mlp,
    pub critic2: Mlp,
    pub target_critic1: Mlp,
    pub target_critic2: Mlp,
    pub actor_opt: AdamState,
    pub critic1_opt: AdamState,
    pub critic2_opt: AdamState,
    /// Counts updates skipped because of non-finite losses/gradients.
    pub warning_count: u64,
}

/// Columns of a training batch.
struct Batch {
    states: Array2<f64>,
    actions: Array2<f64>,
    rewards: Array1<f64>,
    next_states: Array2<f64>,
    terminals: Vec<bool>,
}

impl Batch {
    fn from_transitions(batch: &[&Transition], obs_dim: usize, act_dim: usize) -> Result<Batch> {
        if batch.is_empty() {
            return Err(Error::Sampling("empty batch".into()));
        }
        let b = batch.len();
        let mut states = Array2::zeros((b, obs_dim));
        let mut actions = Array2::zeros((b, act_dim));
        let mut next_states = Array2::zeros((b, obs_dim));
        let mut rewards = Array1::zeros(b);
        let mut terminals = Vec::with_capacity(b);
        for (i, t) in batch.iter().enumerate() {
            if t.state.len() != obs_dim || t.action.len() != act_dim {
                return Err(Error::DimMismatch {
                    expected: obs_dim,
                    got: t.state.len(),
                    context: "batch transition",
                });
            }
            for j in 0..obs_dim {
                states[(i, j)] = t.state[j];
                next_states[(i, j)] = t.next_state[j];
            }
            for j in 0..act_dim {
                actions[(i, j)] = t.action[j];
            }
            rewards[i] = t.reward;
            terminals.push(t.terminal);
        }
        Ok(Batch {
            states,
            actions,
            rewards,
            next_states,
            terminals,
        })
    }

    fn len(&self) -> usize {
        self.terminals.len()
    }
}

impl ActorCritic {
    pub fn new<R: Rng + ?Sized>(cfg: AcConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let mut actor_sizes = vec![cfg.obs_dim];
        actor_sizes.extend(&cfg.hidden);
        actor_sizes.push(2 * cfg.act_dim);
        let mut critic_sizes = vec![cfg.obs_dim + cfg.act_dim];
        critic_sizes.extend(&cfg.hidden);
        critic_sizes.push(1);

        let actor = Mlp::new(&actor_sizes, Activation::Relu, rng)?;
        let critic1 = Mlp::new(&critic_sizes, Activation::Relu, rng)?;
        let critic2 = Mlp::new(&critic_sizes, Activation::Relu, rng)?;
        let target_critic1 = critic1.clone();
        let target_critic2 = critic2.clone();
        let lr = cfg.learning_rate;
        Ok(ActorCritic {
            head: GaussianPolicyHead::unit(cfg.act_dim),
            actor_opt: AdamState::for_net(&actor, lr),
            critic1_opt: AdamState::for_net(&critic1, lr),
            critic2_opt: AdamState::for_net(&critic2, lr),
            actor,
            critic1,
            critic2,
            target_critic1,
            target_critic2,
            cfg,
            warning_count: 0,
        })
    }

    /// Re-randomizes critics, their targets, and all optimizer state while
    /// keeping the actor (transfer initialization).
    pub fn reinit_critics<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let mut sizes = vec![self.cfg.obs_dim + self.cfg.act_dim];
        sizes.extend(&self.cfg.hidden);
        sizes.push(1);
        self.critic1 = Mlp::new(&sizes, Activation::Relu, rng)?;
        self.critic2 = Mlp::new(&sizes, Activation::Relu, rng)?;
        self.target_critic1 = self.critic1.clone();
        self.target_critic2 = self.critic2.clone();
        self.critic1_opt = AdamState::for_net(&self.critic1, self.cfg.learning_rate);
        self.critic2_opt = AdamState::for_net(&self.critic2, self.cfg.learning_rate);
        self.actor_opt = AdamState::for_net(&self.actor, self.cfg.learning_rate);
        Ok(())
    }

    pub fn sample_action<R: Rng + ?Sized>(&self, obs: ArrayView1<f64>, rng: &mut R) -> Result<Array1<f64>> {
        let o = self.actor.forward(obs)?;
        Ok(self.head.sample(o.view(), rng)?.action)
    }

    pub fn mean_action(&self, obs: ArrayView1<f64>) -> Result<Array1<f64>> {
        let o = self.actor.forward(obs)?;
        self.head.mean_action(o.view())
    }

    fn q_input(states: &Array2<f64>, actions: &Array2<f64>) -> Array2<f64> {
        let b = states.nrows();
        let mut x = Array2::zeros((b, states.ncols() + actions.ncols()));
        x.slice_mut(s![.., ..states.ncols()]).assign(states);
        x.slice_mut(s![.., states.ncols()..]).assign(actions);
        x
    }

    pub fn q1(&self, state: ArrayView1<f64>, action: ArrayView1<f64>) -> Result<f64> {
        let mut input = Vec::with_capacity(state.len() + action.len());
        input.extend(state.iter());
        input.extend(action.iter());
        Ok(self.critic1.forward(Array1::from_vec(input).view())?[0])
    }

    /// Regression target `y` for every batch row: `r` on terminal rows, else
    /// `r + gamma * min(targetQ1, targetQ2)(s', a')` with one action sampled
    /// from the current actor. With `entropy` the target subtracts
    /// `alpha * log pi(a'|s')`.
    fn critic_targets<R: Rng + ?Sized>(
        &self,
        batch: &Batch,
        entropy: bool,
        rng: &mut R,
    ) -> Result<Array1<f64>> {
        let b = batch.len();
        let actor_out = self.actor.forward_batch(&batch.next_states)?;
        let mut next_actions = Array2::zeros((b, self.cfg.act_dim));
        let mut logps = Array1::zeros(b);
        for i in 0..b {
            let sample = self.head.sample(actor_out.row(i), rng)?;
            next_actions.row_mut(i).assign(&sample.action);
            logps[i] = sample.log_prob;
        }
        let x = Self::q_input(&batch.next_states, &next_actions);
        let q1 = self.target_critic1.forward_batch(&x)?;
        let q2 = self.target_critic2.forward_batch(&x)?;
        let mut y = Array1::zeros(b);
        for i in 0..b {
            if batch.terminals[i] {
                y[i] = batch.rewards[i];
            } else {
                let mut v = q1[(i, 0)].min(q2[(i, 0)]);
                if entropy {
                    v -= self.cfg.entropy_alpha * logps[i];
                }
                y[i] = batch.rewards[i] + self.cfg.discount * v;
            }
        }
        Ok(y)
    }

    /// Single-transition regression target (no entropy term).
    pub fn critic_target<R: Rng + ?Sized>(&self, t: &Transition, rng: &mut R) -> Result<f64> {
        let batch = Batch::from_transitions(&[t], self.cfg.obs_dim, self.cfg.act_dim)?;
        Ok(self.critic_targets(&batch, false, rng)?[0])
    }

    fn critic_regression(&mut self, x: &Array2<f64>, y: &Array1<f64>) -> Result<f64> {
        let b = x.nrows() as f64;
        let mut loss_total = 0.0;
        for which in 0..2 {
            let (critic, opt) = if which == 0 {
                (&mut self.critic1, &mut self.critic1_opt)
            } else {
                (&mut self.critic2, &mut self.critic2_opt)
            };
            let cache = critic.forward_cached(x)?;
            let q = cache.output();
            let mut grad = Array2::zeros(q.dim());
            let mut loss = 0.0;
            for i in 0..x.nrows() {
                let r = q[(i, 0)] - y[i];
                loss += r * r;
                grad[(i, 0)] = 2.0 * r / b;
            }
            loss /= b;
            if !loss.is_finite() {
                self.warning_count += 1;
                continue;
            }
            let (grads, _) = critic.backward(&cache, &grad);
            if !opt.step(critic, &grads) {
                self.warning_count += 1;
            }
            loss_total += loss;
        }
        Ok(loss_total / 2.0)
    }

    fn soft_update_targets(&mut self) {
        let tau = self.cfg.soft_update_rate;
        for (target, critic) in [
            (&mut self.target_critic1, &self.critic1),
            (&mut self.target_critic2, &self.critic2),
        ] {
            let mut t = target.to_flat();
            let c = critic.to_flat();
            for i in 0..t.len() {
                t[i] = (1.0 - tau) * t[i] + tau * c[i];
            }
            target.set_flat(&t);
        }
    }

    /// One MSE step on both critics toward the bootstrap targets, followed by
    /// the soft target update.
    pub fn critic_update<R: Rng + ?Sized>(
        &mut self,
        batch: &[&Transition],
        rng: &mut R,
    ) -> Result<LossReport> {
        self.critic_update_inner(batch, false, rng)
    }

    fn critic_update_inner<R: Rng + ?Sized>(
        &mut self,
        batch: &[&Transition],
        entropy: bool,
        rng: &mut R,
    ) -> Result<LossReport> {
        let b = Batch::from_transitions(batch, self.cfg.obs_dim, self.cfg.act_dim)?;
        let y = self.critic_targets(&b, entropy, rng)?;
        let x = Self::q_input(&b.states, &b.actions);
        let loss = self.critic_regression(&x, &y)?;
        self.soft_update_targets();
        Ok(LossReport {
            critic_loss: loss,
            ..LossReport::default()
        })
    }

    /// Advantage estimate `Q1(s,a) - mean_i Q1(s, a_i)`, `a_i ~ pi(.|s)`,
    /// batched over rows.
    pub fn advantages<R: Rng + ?Sized>(
        &self,
        states: &Array2<f64>,
        actions: &Array2<f64>,
        rng: &mut R,
    ) -> Result<Array1<f64>> {
        let b = states.nrows();
        let m = self.cfg.advantage_samples;
        let q = self.critic1.forward_batch(&Self::q_input(states, actions))?;
        let actor_out = self.actor.forward_batch(states)?;
        // stack the M policy samples for all rows into one critic batch
        let mut rep_states = Array2::zeros((b * m, states.ncols()));
        let mut rep_actions = Array2::zeros((b * m, actions.ncols()));
        for i in 0..b {
            for k in 0..m {
                let sample = self.head.sample(actor_out.row(i), rng)?;
                rep_states.row_mut(i * m + k).assign(&states.row(i));
                rep_actions.row_mut(i * m + k).assign(&sample.action);
            }
        }
        let qs = self
            .critic1
            .forward_batch(&Self::q_input(&rep_states, &rep_actions))?;
        let mut out = Array1::zeros(b);
        for i in 0..b {
            let baseline: f64 = (0..m).map(|k| qs[(i * m + k, 0)]).sum::<f64>() / m as f64;
            out[i] = q[(i, 0)] - baseline;
        }
        Ok(out)
    }

    pub fn advantage<R: Rng + ?Sized>(
        &self,
        state: ArrayView1<f64>,
        action: ArrayView1<f64>,
        rng: &mut R,
    ) -> Result<f64> {
        let s2 = state
            .to_owned()
            .into_shape_with_order((1, state.len()))
            .unwrap();
        let a2 = action
            .to_owned()
            .into_shape_with_order((1, action.len()))
            .unwrap();
        Ok(self.advantages(&s2, &a2, rng)?[0])
    }

    pub fn awac_weight(&self, advantage: f64) -> f64 {
        (advantage / self.cfg.awac_lambda).exp().min(self.cfg.weight_clip)
    }

    /// Shared weighted max-likelihood step on the actor:
    /// one Adam step on `-mean(w_i * log pi(a_i|s_i))`.
    fn weighted_likelihood_step(
        &mut self,
        states: &Array2<f64>,
        actions: &Array2<f64>,
        weights: &Array1<f64>,
    ) -> Result<f64> {
        let b = states.nrows();
        let cache = self.actor.forward_cached(states)?;
        let out = cache.output();
        let mut grad = Array2::zeros(out.dim());
        let mut loss = 0.0;
        for i in 0..b {
            let (logp, g) = self
                .head
                .log_prob_with_output_grad(out.row(i), actions.row(i))?;
            loss -= weights[i] * logp;
            let scale = -weights[i] / b as f64;
            for j in 0..g.len() {
                grad[(i, j)] = scale * g[j];
            }
        }
        loss /= b as f64;
        if !loss.is_finite() {
            self.warning_count += 1;
            return Ok(loss);
        }
        let (grads, _) = self.actor.backward(&cache, &grad);
        if !self.actor_opt.step(&mut self.actor, &grads) {
            self.warning_count += 1;
        }
        Ok(loss)
    }

    /// Advantage-weighted policy update (advantages are constants, no
    /// gradient flows into the critics).
    pub fn awac_policy_update<R: Rng + ?Sized>(
        &mut self,
        batch: &[&Transition],
        rng: &mut R,
    ) -> Result<LossReport> {
        let b = Batch::from_transitions(batch, self.cfg.obs_dim, self.cfg.act_dim)?;
        let adv = self.advantages(&b.states, &b.actions, rng)?;
        let weights = adv.mapv(|a| self.awac_weight(a));
        let loss = self.weighted_likelihood_step(&b.states, &b.actions, &weights)?;
        Ok(LossReport {
            policy_loss: loss,
            mean_advantage: adv.mean().unwrap_or(0.0),
            mean_weight: weights.mean().unwrap_or(0.0),
            ..LossReport::default()
        })
    }

    /// Full advantage-weighted update: critic regression then policy step.
    pub fn awac_update<R: Rng + ?Sized>(
        &mut self,
        batch: &[&Transition],
        rng: &mut R,
    ) -> Result<LossReport> {
        let critic = self.critic_update_inner(batch, false, rng)?;
        let mut report = self.awac_policy_update(batch, rng)?;
        report.critic_loss = critic.critic_loss;
        Ok(report)
    }

    /// Supervised behavior cloning on a demo batch: the weighted likelihood
    /// step with all weights equal to one.
    pub fn bc_update(&mut self, batch: &[&Transition]) -> Result<LossReport> {
        let b = Batch::from_transitions(batch, self.cfg.obs_dim, self.cfg.act_dim)?;
        let weights = Array1::ones(b.len());
        let loss = self.weighted_likelihood_step(&b.states, &b.actions, &weights)?;
        Ok(LossReport {
            policy_loss: loss,
            mean_weight: 1.0,
            ..LossReport::default()
        })
    }

    /// One SAC update: entropy-regularized critic regression plus the
    /// reparameterized actor step.
    pub fn sac_update<R: Rng + ?Sized>(
        &mut self,
        batch: &[&Transition],
        rng: &mut R,
    ) -> Result<LossReport> {
        let critic = self.critic_update_inner(batch, true, rng)?;
        let b = Batch::from_transitions(batch, self.cfg.obs_dim, self.cfg.act_dim)?;
        let n = b.len();
        let alpha = self.cfg.entropy_alpha;

        let actor_cache = self.actor.forward_cached(&b.states)?;
        let actor_out = actor_cache.output();
        let mut samples = Vec::with_capacity(n);
        let mut fresh_actions = Array2::zeros((n, self.cfg.act_dim));
        for i in 0..n {
            let sample = self.head.sample(actor_out.row(i), rng)?;
            fresh_actions.row_mut(i).assign(&sample.action);
            samples.push(sample);
        }
        let x = Self::q_input(&b.states, &fresh_actions);
        let c1 = self.critic1.forward_cached(&x)?;
        let c2 = self.critic2.forward_cached(&x)?;
        let q1 = c1.output();
        let q2 = c2.output();

        // dQmin/da via the argmin critic on each row
        let mut sel1 = Array2::zeros((n, 1));
        let mut sel2 = Array2::zeros((n, 1));
        let mut policy_loss = 0.0;
        for i in 0..n {
            let (qa, qb) = (q1[(i, 0)], q2[(i, 0)]);
            if qa <= qb {
                sel1[(i, 0)] = 1.0;
            } else {
                sel2[(i, 0)] = 1.0;
            }
            policy_loss += alpha * samples[i].log_prob - qa.min(qb);
        }
        policy_loss /= n as f64;
        if !policy_loss.is_finite() {
            self.warning_count += 1;
            return Ok(LossReport {
                critic_loss: critic.critic_loss,
                policy_loss,
                ..LossReport::default()
            });
        }
        let (_, dx1) = self.critic1.backward(&c1, &sel1);
        let (_, dx2) = self.critic2.backward(&c2, &sel2);
        let dq_da = (&dx1 + &dx2)
            .slice(s![.., self.cfg.obs_dim..])
            .to_owned();

        let mut actor_grad = Array2::zeros(actor_out.dim());
        for i in 0..n {
            let g = self
                .head
                .sac_actor_output_grad(&samples[i], dq_da.row(i), alpha);
            for j in 0..g.len() {
                actor_grad[(i, j)] = g[j] / n as f64;
            }
        }
        let (grads, _) = self.actor.backward(&actor_cache, &actor_grad);
        if !self.actor_opt.step(&mut self.actor, &grads) {
            self.warning_count += 1;
        }
        Ok(LossReport {
            critic_loss: critic.critic_loss,
            policy_loss,
            ..LossReport::default()
        })
    }
}

#[cfg(test)]
mod tests;
