//! The four transfer methods, evaluation, and per-run CSV artifacts.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::{self, EnvState, ScenarioSpec, ACT_DIM, OBS_DIM};
use crate::expert::{load_pool, retrieve_nearest, DemoPool};
use crate::harness::config::{ExperimentConfig, Method};
use crate::learner::trajectory::{Trajectory, TrajectoryStep};
use crate::learner::{AcConfig, ActorCritic};
use crate::nn::{load_checkpoint, save_checkpoint, Checkpoint};
use crate::query::{rollout_uncertainty, QueryDecision, QueryState};
use crate::replay::{sample_balanced, ReplayBuffer, SourceTag, Transition};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub scenario: String,
    pub method: Method,
    pub seed: u64,
    pub env_step: usize,
    pub success_rate: f64,
    pub queries_so_far: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub env_step: usize,
    pub rollout_index: usize,
    pub uncertainty: f64,
    /// `None` during the warm-up phase, before the history is full.
    pub threshold: Option<f64>,
    pub query: bool,
}

/// One accepted query with the initial state handed to the demonstrator.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryRecord {
    pub env_step: usize,
    pub rollout_index: usize,
    pub uncertainty: f64,
    pub threshold: f64,
    pub initial_state: EnvState,
}

#[derive(Debug)]
pub struct SeedOutput {
    pub records: Vec<EvalRecord>,
    pub events: Vec<EventRecord>,
    pub queries: Vec<QueryRecord>,
    pub model: ActorCritic,
}

pub fn ac_config_from(cfg: &ExperimentConfig) -> AcConfig {
    AcConfig {
        obs_dim: OBS_DIM,
        act_dim: ACT_DIM,
        hidden: cfg.hidden.clone(),
        discount: cfg.discount,
        soft_update_rate: cfg.soft_update_rate,
        awac_lambda: cfg.awac_lambda,
        entropy_alpha: cfg.entropy_alpha,
        advantage_samples: cfg.advantage_samples,
        weight_clip: cfg.weight_clip,
        learning_rate: cfg.learning_rate,
    }
}

/// Source-initialized model: actor from the checkpoint, critics random.
fn build_model<R: Rng + ?Sized>(cfg: &ExperimentConfig, rng: &mut R) -> Result<ActorCritic> {
    let mut model = ActorCritic::new(ac_config_from(cfg), rng)?;
    let ckpt = load_checkpoint(&cfg.source_checkpoint_path)?;
    model.actor = ckpt.net("actor")?.clone();
    model.reinit_critics(rng)?;
    Ok(model)
}

/// Greedy (mean-action) evaluation on freshly seeded resets; touches neither
/// buffers nor the training step counter.
pub fn evaluate(model: &ActorCritic, spec: &ScenarioSpec, episodes: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ok = 0usize;
    for _ in 0..episodes {
        let mut state = env::reset_with_rng(spec, &mut rng);
        loop {
            let a = model.mean_action(state.observation().view())?;
            let r = env::step(spec, &state, [a[0], a[1]]);
            state = r.next_state;
            if r.terminal {
                ok += usize::from(r.success);
                break;
            }
        }
    }
    Ok(ok as f64 / episodes as f64)
}

fn eval_seed(seed: u64, env_step: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (env_step as u64).wrapping_mul(0xD1B5_4A32_D192_ED03)
}

/// Uniform without-replacement episode indices for the offline preload.
fn preload_offline<R: Rng + ?Sized>(
    pool: &DemoPool,
    count: usize,
    demo: &mut ReplayBuffer,
    rng: &mut R,
) -> Result<()> {
    if count > pool.episodes.len() {
        return Err(Error::Pool(format!(
            "cannot preload {count} episodes from a pool of {}",
            pool.episodes.len()
        )));
    }
    let mut idx: Vec<usize> = (0..pool.episodes.len()).collect();
    for i in 0..count {
        let j = rng.gen_range(i..idx.len());
        idx.swap(i, j);
    }
    for &i in &idx[..count] {
        for t in &pool.episodes[i].transitions {
            demo.push(t.clone())?;
        }
    }
    Ok(())
}

fn demo_only_batch<'a, R: Rng + ?Sized>(
    demo: &'a ReplayBuffer,
    batch_size: usize,
    rng: &mut R,
) -> Result<Vec<&'a Transition>> {
    if demo.is_empty() {
        return Err(Error::Sampling("demo buffer is empty".into()));
    }
    Ok((0..batch_size)
        .map(|_| demo.get(rng.gen_range(0..demo.len())))
        .collect())
}

/// Runs one (config, seed) cell and returns its records without touching disk.
pub fn run_transfer_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedOutput> {
    cfg.validate()?;
    let spec = ScenarioSpec::by_name(&cfg.scenario_name)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = build_model(cfg, &mut rng)?;
    let pool = if cfg.method == Method::Early {
        None
    } else {
        let p = load_pool(&cfg.pool_path)?;
        if p.scenario_name != cfg.scenario_name {
            return Err(Error::Config(format!(
                "pool is for '{}', config asks for '{}'",
                p.scenario_name, cfg.scenario_name
            )));
        }
        Some(p)
    };

    if cfg.method == Method::Bc {
        return run_bc(cfg, seed, model, pool.as_ref().expect("bc pool"), &spec, rng);
    }

    let mut demo = ReplayBuffer::new(cfg.replay_capacity, OBS_DIM, ACT_DIM);
    let mut rollout_buf = ReplayBuffer::new(cfg.replay_capacity, OBS_DIM, ACT_DIM);
    if cfg.method == Method::AwacOffline {
        preload_offline(
            pool.as_ref().expect("offline pool"),
            cfg.demo_budget,
            &mut demo,
            &mut rng,
        )?;
    }
    let mut query_state = if cfg.method.uses_queries() {
        Some(QueryState::new(cfg.history_len, cfg.ratio_threshold, cfg.demo_budget)?)
    } else {
        None
    };
    let u_discount = cfg.discounted_uncertainty.then_some(cfg.discount);

    let mut records = Vec::new();
    let mut events = Vec::new();
    let mut queries = Vec::new();
    let mut env_step = 0usize;
    let mut rollout_index = 0usize;

    while env_step < cfg.total_env_steps {
        let initial = env::reset_with_rng(&spec, &mut rng);
        let mut state = initial.clone();
        let mut steps: Vec<TrajectoryStep> = Vec::new();
        let mut terminated = false;
        let mut success = false;
        let mut final_pair = None;

        loop {
            let obs = state.observation();
            let action = model.sample_action(obs.view(), &mut rng)?;
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
            steps.push(TrajectoryStep {
                state: obs,
                action: action.clone(),
                reward: r.reward,
            });
            env_step += 1;

            // one gradient update per environment step
            let batch = sample_balanced(&demo, &rollout_buf, cfg.batch_size, &mut rng)?;
            match cfg.method {
                Method::Early => model.sac_update(&batch, &mut rng)?,
                _ => model.awac_update(&batch, &mut rng)?,
            };

            if env_step % cfg.eval_every == 0 {
                let sr = evaluate(&model, &spec, cfg.eval_episodes, eval_seed(seed, env_step))?;
                records.push(EvalRecord {
                    scenario: cfg.scenario_name.clone(),
                    method: cfg.method,
                    seed,
                    env_step,
                    success_rate: sr,
                    queries_so_far: queries.len(),
                });
            }

            let done = r.terminal;
            let truncated = r.truncated;
            state = r.next_state;
            if done {
                if truncated {
                    // step-limit truncation: bootstrap with the next pair
                    let next_obs = state.observation();
                    let next_action = model.sample_action(next_obs.view(), &mut rng)?;
                    final_pair = Some((next_obs, next_action));
                } else {
                    terminated = true;
                    success = r.success;
                }
                break;
            }
            if env_step >= cfg.total_env_steps {
                // truncated by the step budget: bootstrap with the next pair
                let next_obs = state.observation();
                let next_action = model.sample_action(next_obs.view(), &mut rng)?;
                final_pair = Some((next_obs, next_action));
                break;
            }
        }
        let env_steps = steps.len();
        rollout_index += 1;

        if let Some(qs) = &mut query_state {
            let traj = Trajectory {
                steps,
                terminated,
                final_pair,
                initial_state: initial.clone(),
                env_steps,
                success,
            };
            let u = rollout_uncertainty(&model.critic1, &traj, u_discount)?;
            let pending = qs.pending_threshold();
            match qs.observe_rollout(initial, u)? {
                QueryDecision::NoQuery => events.push(EventRecord {
                    env_step,
                    rollout_index: rollout_index - 1,
                    uncertainty: u,
                    threshold: pending,
                    query: false,
                }),
                QueryDecision::Query {
                    initial_state,
                    uncertainty,
                    threshold,
                } => {
                    events.push(EventRecord {
                        env_step,
                        rollout_index: rollout_index - 1,
                        uncertainty: u,
                        threshold: Some(threshold),
                        query: true,
                    });
                    let pool = pool.as_ref().ok_or_else(|| {
                        Error::Config("query method requires a demo pool".into())
                    })?;
                    let episode = retrieve_nearest(pool, initial_state.observation().view())?;
                    for t in &episode.transitions {
                        demo.push(t.clone())?;
                    }
                    for _ in 0..cfg.post_demo_updates {
                        let batch = sample_balanced(&demo, &rollout_buf, cfg.batch_size, &mut rng)?;
                        match cfg.method {
                            Method::Early => model.sac_update(&batch, &mut rng)?,
                            _ => model.awac_update(&batch, &mut rng)?,
                        };
                    }
                    queries.push(QueryRecord {
                        env_step,
                        rollout_index: rollout_index - 1,
                        uncertainty,
                        threshold,
                        initial_state,
                    });
                }
            }
        }
    }

    Ok(SeedOutput {
        records,
        events,
        queries,
        model,
    })
}

/// Behavior cloning: no environment interaction; `eval_every` gradient updates
/// per evaluation tick so curves align with the online methods.
fn run_bc(
    cfg: &ExperimentConfig,
    seed: u64,
    mut model: ActorCritic,
    pool: &DemoPool,
    spec: &ScenarioSpec,
    mut rng: ChaCha8Rng,
) -> Result<SeedOutput> {
    let mut demo = ReplayBuffer::new(cfg.replay_capacity, OBS_DIM, ACT_DIM);
    preload_offline(pool, cfg.demo_budget, &mut demo, &mut rng)?;
    let mut records = Vec::new();
    let env_step_counter = 0usize; // bc never advances the environment
    let ticks = cfg.total_env_steps / cfg.eval_every;
    for tick in 1..=ticks {
        for _ in 0..cfg.eval_every {
            let batch = demo_only_batch(&demo, cfg.batch_size, &mut rng)?;
            model.bc_update(&batch)?;
        }
        let env_step = tick * cfg.eval_every;
        let sr = evaluate(&model, spec, cfg.eval_episodes, eval_seed(seed, env_step))?;
        records.push(EvalRecord {
            scenario: cfg.scenario_name.clone(),
            method: cfg.method,
            seed,
            env_step,
            success_rate: sr,
            queries_so_far: 0,
        });
    }
    debug_assert_eq!(env_step_counter, 0);
    Ok(SeedOutput {
        records,
        events: Vec::new(),
        queries: Vec::new(),
        model,
    })
}

// -- CSV artifacts ----------------------------------------------------------

pub fn eval_csv(records: &[EvalRecord]) -> String {
    let mut out = String::from("scenario,method,seed,env_step,success_rate,queries_so_far\n");
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.scenario,
            r.method.as_str(),
            r.seed,
            r.env_step,
            r.success_rate,
            r.queries_so_far
        );
    }
    out
}

pub fn events_csv(events: &[EventRecord]) -> String {
    let mut out = String::from("env_step,rollout_index,uncertainty,threshold,event\n");
    for e in events {
        let thres = e.threshold.map(|t| t.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            e.env_step,
            e.rollout_index,
            e.uncertainty,
            thres,
            if e.query { "query" } else { "noquery" }
        );
    }
    out
}

pub fn queries_csv(queries: &[QueryRecord]) -> String {
    let mut out = String::from(
        "env_step,rollout_index,uncertainty,threshold,\
         agent_x,agent_y,object_x,object_y,goal_x,goal_y\n",
    );
    for q in queries {
        let s = &q.initial_state;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            q.env_step,
            q.rollout_index,
            q.uncertainty,
            q.threshold,
            s.agent_pos[0],
            s.agent_pos[1],
            s.object_pos[0],
            s.object_pos[1],
            s.goal_pos[0],
            s.goal_pos[1]
        );
    }
    out
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn run_base_name(cfg: &ExperimentConfig, seed: u64) -> String {
    format!("{}_{}_seed{}", cfg.scenario_name, cfg.method.as_str(), seed)
}

/// Runs every configured seed and writes the per-seed artifacts
/// (`<base>_eval.csv`, `<base>_events.csv`, `<base>_queries.csv`,
/// `<base>_final.ckpt`) into the output directory.
pub fn run_transfer(cfg: &ExperimentConfig) -> Result<Vec<EvalRecord>> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
    let mut all = Vec::new();
    for &seed in &cfg.seeds {
        let out = run_transfer_seed(cfg, seed)?;
        let base: PathBuf = cfg.output_dir.join(run_base_name(cfg, seed));
        let with = |suffix: &str| -> PathBuf {
            let mut s = base.as_os_str().to_owned();
            s.push(suffix);
            PathBuf::from(s)
        };
        write(&with("_eval.csv"), &eval_csv(&out.records))?;
        write(&with("_events.csv"), &events_csv(&out.events))?;
        write(&with("_queries.csv"), &queries_csv(&out.queries))?;
        let ckpt = Checkpoint {
            nets: vec![
                ("actor".into(), out.model.actor.clone()),
                ("critic1".into(), out.model.critic1.clone()),
                ("critic2".into(), out.model.critic2.clone()),
            ],
            vectors: vec![("queries_so_far".into(), vec![out.queries.len() as f64])],
        };
        save_checkpoint(&ckpt, &with("_final.ckpt"))?;
        all.extend(out.records);
    }
    Ok(all)
}
