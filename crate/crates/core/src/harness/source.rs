//! Source-task pretraining: SAC with the dense distance-shaped reward until an
//! evaluation success threshold is reached.

use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::env::{self, Family, RewardMode, ScenarioSpec, ACT_DIM, OBS_DIM};
use crate::harness::transfer::evaluate;
use crate::learner::{AcConfig, ActorCritic};
use crate::nn::{save_checkpoint, Checkpoint};
use crate::replay::{sample_balanced, ReplayBuffer, SourceTag, Transition};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct SourceConfig {
    pub budget_steps: usize,
    pub eval_every: usize,
    pub eval_episodes: usize,
    pub success_threshold: f64,
    pub batch_size: usize,
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub entropy_alpha: f64,
    pub replay_capacity: usize,
    /// Environment steps taken with uniform-random actions (and no gradient
    /// updates) before SAC training starts, so the replay buffer seeds the
    /// critics with diverse transitions instead of early-policy collapse.
    pub warmup_steps: usize,
}

impl Default for SourceConfig {
    fn default() -> Self {
        SourceConfig {
            budget_steps: 200_000,
            eval_every: 5000,
            eval_episodes: 20,
            success_threshold: 0.9,
            batch_size: 128,
            hidden: vec![64, 64],
            learning_rate: 3e-4,
            entropy_alpha: 0.05,
            replay_capacity: 1_000_000,
            warmup_steps: 2000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SourceOutcome {
    pub env_steps: usize,
    pub final_success_rate: f64,
    /// (env_step, eval success rate) pairs at each evaluation tick.
    pub log: Vec<(usize, f64)>,
}

pub fn training_log_csv(log: &[(usize, f64)]) -> String {
    let mut out = String::from("env_step,success_rate\n");
    for (step, sr) in log {
        let _ = writeln!(out, "{step},{sr}");
    }
    out
}

fn eval_seed(seed: u64, env_step: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (env_step as u64).wrapping_mul(0xD1B5_4A32_D192_ED03)
}

/// Trains a source policy; stops early once greedy evaluation success (on the
/// sparse criterion) reaches the threshold, then saves the checkpoint. Not
/// reaching the threshold within the budget is an error carrying the final
/// success rate.
pub fn train_source(
    family: Family,
    seed: u64,
    cfg: &SourceConfig,
    out_checkpoint: &Path,
    out_log: Option<&Path>,
) -> Result<SourceOutcome> {
    let mut spec = ScenarioSpec::source(family);
    spec.reward_mode = RewardMode::Dense;
    let eval_spec = {
        let mut s = spec.clone();
        s.reward_mode = RewardMode::Sparse;
        s
    };
    let ac = AcConfig {
        obs_dim: OBS_DIM,
        act_dim: ACT_DIM,
        hidden: cfg.hidden.clone(),
        entropy_alpha: cfg.entropy_alpha,
        learning_rate: cfg.learning_rate,
        ..AcConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = ActorCritic::new(ac, &mut rng)?;
    let demo = ReplayBuffer::new(1, OBS_DIM, ACT_DIM); // stays empty
    let mut rollout_buf = ReplayBuffer::new(cfg.replay_capacity, OBS_DIM, ACT_DIM);

    let mut log = Vec::new();
    let mut env_step = 0usize;
    let mut reached = None;

    'training: while env_step < cfg.budget_steps {
        let mut state = env::reset_with_rng(&spec, &mut rng);
        loop {
            let obs = state.observation();
            let action = if env_step < cfg.warmup_steps {
                use rand::Rng as _;
                ndarray::Array1::from_iter((0..ACT_DIM).map(|_| rng.gen_range(-1.0..=1.0)))
            } else {
                model.sample_action(obs.view(), &mut rng)?
            };
            let r = env::step(&spec, &state, [action[0], action[1]]);
            rollout_buf.push(Transition {
                state: obs.to_vec(),
                action: action.to_vec(),
                reward: r.reward,
                next_state: r.next_state.observation().to_vec(),
                // a step-limit truncation is not an absorbing state
                terminal: r.terminal && !r.truncated,
                source_tag: SourceTag::Rollout,
            })?;
            env_step += 1;
            if env_step >= cfg.warmup_steps {
                let batch = sample_balanced(&demo, &rollout_buf, cfg.batch_size, &mut rng)?;
                model.sac_update(&batch, &mut rng)?;
            }

            if env_step % cfg.eval_every == 0 {
                let sr = evaluate(&model, &eval_spec, cfg.eval_episodes, eval_seed(seed, env_step))?;
                log.push((env_step, sr));
                if sr >= cfg.success_threshold {
                    reached = Some(sr);
                    break 'training;
                }
            }
            state = r.next_state;
            if r.terminal || env_step >= cfg.budget_steps {
                break;
            }
        }
    }

    if let Some(path) = out_log {
        std::fs::write(path, training_log_csv(&log)).map_err(|e| Error::io(path, e))?;
    }
    let final_sr = log.last().map(|&(_, sr)| sr).unwrap_or(0.0);
    match reached {
        Some(sr) => {
            let ckpt = Checkpoint {
                nets: vec![
                    ("actor".into(), model.actor.clone()),
                    ("critic1".into(), model.critic1.clone()),
                    ("critic2".into(), model.critic2.clone()),
                ],
                vectors: vec![("final_success_rate".into(), vec![sr])],
            };
            save_checkpoint(&ckpt, out_checkpoint)?;
            Ok(SourceOutcome {
                env_steps: env_step,
                final_success_rate: sr,
                log,
            })
        }
        None => Err(Error::Training(format!(
            "source training on {:?} did not reach {:.0}% success within {} steps \
             (final evaluation success rate {final_sr})",
            family,
            cfg.success_threshold * 100.0,
            cfg.budget_steps
        ))),
    }
}
