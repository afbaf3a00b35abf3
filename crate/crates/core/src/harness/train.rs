use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{eval_seeds, Algorithm, IterationRecord, RngStreams, RunMetrics, TrainConfig};
use crate::envs::EnvInstance;
use crate::error::{Error, Result};
use crate::rl::{
    collect_episode, collect_trajectory, trajectory_advantages, uniform_partition, Environment, Learner, PolicyParams,
    SampleMode, TrainingBatch, Trajectory, UniformSampler,
};
use crate::rnd::{combined_reward, RndPair};
use crate::sipp::{
    match_weights, replay_prepare_batch, replay_select, BufferMode, ImitationBuffer, MatchSampler, TrajectorySource,
};

pub const TRAINED_STEP_CAP: u64 = 3;

pub const CHECKPOINT_SCHEMA: &str = "sipp-checkpoint/1";

/// Where an interrupted fixed-length rollout resumes: the live observation and the
/// partial episode collected so far.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RolloutCursor {
    obs: Vec<f64>,
    episode: Trajectory,
}

/// Complete state of a training run. Serializing it is checkpointing it: a restored
/// trainer continues bit-for-bit as the original would have.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trainer {
    config: TrainConfig,
    learner: Learner,
    /// The imitation buffer. Plain PPO keeps a MATCH-mode one purely to report the best
    /// return seen, so its traces line up with MATCH at `xi = 0`.
    buffer: ImitationBuffer,
    rnd: Option<RndPair>,
    env: EnvInstance,
    rngs: RngStreams,
    eval_seeds: Vec<u64>,
    cursor: RolloutCursor,
    iteration: u64,
    timesteps: u64,
    env_steps: u64,
    metrics: RunMetrics,
    /// Wall-clock seconds accumulated before the current process picked the run up.
    wall_time_s: f64,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    schema: String,
    trainer: Trainer,
}

/// Mean and population standard deviation.
fn moments(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    Some((mean, (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt()))
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let mut rngs = RngStreams::new(config.seed);
        let mut env = EnvInstance::build(config.env, &config.env_options()?)?;
        let spec = env.spec();
        let params = PolicyParams::new(spec.obs_dim, spec.action_space.clone(), &config.hidden, &mut rngs.init)?;
        let rnd = match config.algorithm {
            Algorithm::SippReplayRnd => Some(RndPair::new(spec.obs_dim, config.rnd_lr, &mut rngs.init)?),
            _ => None,
        };
        let buffer = if config.algorithm.is_replay() {
            ImitationBuffer::replay(config.buffer_capacity, config.reward_threshold)?
        } else {
            ImitationBuffer::matching()
        };
        let eval_seeds = eval_seeds(config.seed, config.eval_episodes);
        let obs = env.reset(rngs.env.gen());
        Ok(Self {
            learner: Learner::new(params, config.lr),
            buffer,
            rnd,
            env,
            eval_seeds,
            cursor: RolloutCursor {
                obs,
                episode: Trajectory::new(spec.obs_dim),
            },
            iteration: 0,
            timesteps: 0,
            env_steps: 0,
            metrics: RunMetrics::new(config.clone()),
            wall_time_s: 0.0,
            rngs,
            config,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn metrics(&self) -> &RunMetrics {
        &self.metrics
    }

    pub fn into_metrics(self) -> RunMetrics {
        self.metrics
    }

    pub fn params(&self) -> &PolicyParams {
        &self.learner.params
    }

    pub fn learner(&self) -> &Learner {
        &self.learner
    }

    pub fn buffer(&self) -> &ImitationBuffer {
        &self.buffer
    }

    pub fn rnd(&self) -> Option<&RndPair> {
        self.rnd.as_ref()
    }

    pub fn env(&self) -> &EnvInstance {
        &self.env
    }

    /// Reset seeds of the held-out evaluation episodes.
    pub fn eval_seeds(&self) -> &[u64] {
        &self.eval_seeds
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn timesteps(&self) -> u64 {
        self.timesteps
    }

    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    /// The budget counts real environment interactions. Replayed transitions are free, so
    /// trained transitions are capped separately at [`TRAINED_STEP_CAP`] times the budget;
    /// otherwise a run that only imitates (`xi = 1` with a nonempty buffer) would never end.
    pub fn is_done(&self) -> bool {
        self.env_steps >= self.config.total_steps || self.timesteps >= TRAINED_STEP_CAP * self.config.total_steps
    }

    /// Changes the env-step budget, e.g. to continue a finished run after loading it.
    pub fn extend_budget(&mut self, total_steps: u64) -> Result<()> {
        let config = TrainConfig {
            total_steps,
            ..self.config.clone()
        };
        config.validate()?;
        self.config = config.clone();
        self.metrics.header.config = config;
        Ok(())
    }

    /// Runs one outer iteration and returns its record.
    pub fn step(&mut self) -> Result<&IterationRecord> {
        let started = Instant::now();
        let mut rec = IterationRecord {
            iteration: self.iteration + 1,
            timesteps: 0,
            env_steps: 0,
            episodes: 0,
            mean_return: None,
            std_return: None,
            success_rate: None,
            eval_return: None,
            eval_success: None,
            buffer_best: None,
            buffer_min: None,
            buffer_len: 0,
            sinkhorn_converged: None,
            sinkhorn_iterations: None,
            imitation_trajectories: 0,
            exploration_trajectories: 0,
            uniform_batches: 0,
            prioritized_batches: 0,
            grad_steps: 0,
            mean_loss: 0.0,
            value_loss: 0.0,
            entropy: 0.0,
            clip_fraction: 0.0,
            intrinsic_mean: None,
            wall_time_s: 0.0,
        };
        let finished = if self.config.algorithm.is_replay() {
            self.replay_iteration(&mut rec)?
        } else {
            self.rollout_iteration(&mut rec)?
        };

        self.iteration += 1;
        rec.timesteps = self.timesteps;
        rec.env_steps = self.env_steps;
        rec.episodes = finished.len() as u64;
        if let Some((mean, std)) = moments(&finished) {
            rec.mean_return = Some(mean);
            rec.std_return = Some(std);
            if self.config.env.is_sparse() {
                rec.success_rate = Some(finished.iter().filter(|r| **r > 0.0).count() as f64 / finished.len() as f64);
            }
        }
        if self.iteration.is_multiple_of(self.config.eval_interval) || self.is_done() {
            let (ret, success) = self.evaluate()?;
            rec.eval_return = Some(ret);
            rec.eval_success = success;
        }
        rec.buffer_best = self.buffer.best_return();
        rec.buffer_min = self.buffer.min_return();
        rec.buffer_len = self.buffer.len();
        self.wall_time_s += started.elapsed().as_secs_f64();
        rec.wall_time_s = self.wall_time_s;
        self.metrics.records.push(rec);
        Ok(self.metrics.records.last().expect("just pushed"))
    }

    /// Iterates until the step budget is spent.
    pub fn run(&mut self) -> Result<()> {
        while !self.is_done() {
            self.step()?;
        }
        Ok(())
    }

    /// Like [`Trainer::run`], streaming metrics to `dir/metrics.csv` and writing the
    /// resolved config and checkpoints next to them.
    pub fn run_with_output(&mut self, dir: &Path) -> Result<()> {
        self.run_observed(dir, |_| {})
    }

    /// [`Trainer::run_with_output`], calling `observe` with every new record.
    pub fn run_observed(&mut self, dir: &Path, mut observe: impl FnMut(&IterationRecord)) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("config.toml"), self.config.to_toml())?;
        let metrics_path = dir.join("metrics.csv");
        self.metrics.write_csv(&metrics_path)?;
        let every = self.config.checkpoint_interval;
        while !self.is_done() {
            let rec = self.step()?;
            RunMetrics::append_csv(&metrics_path, rec)?;
            observe(rec);
            if every > 0 && self.iteration.is_multiple_of(every) {
                self.save_checkpoint(&dir.join("checkpoint.json"))?;
            }
        }
        self.save_checkpoint(&dir.join("checkpoint.json"))
    }

    /// Mean deterministic-policy return over the held-out evaluation seeds, and the
    /// success fraction on sparse envs.
    pub fn evaluate(&self) -> Result<(f64, Option<f64>)> {
        self.evaluate_on(&self.eval_seeds)
    }

    /// [`Trainer::evaluate`] on explicit episode seeds.
    pub fn evaluate_on(&self, seeds: &[u64]) -> Result<(f64, Option<f64>)> {
        let mut env = self.env.clone();
        // Deterministic actions draw no randomness; the generator only satisfies the signature.
        let mut unused = ChaCha8Rng::seed_from_u64(0);
        let mut returns = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let traj = collect_episode(&mut env, seed, &self.learner.params, SampleMode::Deterministic, &mut unused)?;
            returns.push(traj.episode_return);
        }
        let (mean, _) = moments(&returns).unwrap_or((0.0, 0.0));
        let success = self
            .config
            .env
            .is_sparse()
            .then(|| returns.iter().filter(|r| **r > 0.0).count() as f64 / returns.len().max(1) as f64);
        Ok((mean, success))
    }

    /// PPO and MATCH: one fixed-length rollout, buffer update, advantages, then the inner
    /// loop with OT-prioritized (MATCH) or uniform (PPO, `xi = 0`) minibatches. Returns the
    /// returns of episodes that finished during the rollout.
    fn rollout_iteration(&mut self, rec: &mut IterationRecord) -> Result<Vec<f64>> {
        let Self {
            config,
            learner,
            buffer,
            env,
            rngs,
            cursor,
            ..
        } = self;
        let n_steps = config.n_steps;
        let obs_dim = cursor.obs.len();
        let mut segments = Vec::new();
        let mut finished = Vec::new();
        let mut steps = 0;
        while steps < n_steps {
            let start = std::mem::take(&mut cursor.obs);
            let seg = collect_trajectory(env, start, &learner.params, n_steps - steps, SampleMode::Stochastic, &mut rngs.policy)?;
            steps += seg.len();
            cursor.episode.extend(seg.clone());
            if seg.is_complete() {
                finished.push(std::mem::replace(&mut cursor.episode, Trajectory::new(obs_dim)));
                cursor.obs = env.reset(rngs.env.gen());
            } else {
                cursor.obs = seg.final_observation.clone();
            }
            segments.push(seg);
        }
        self.timesteps += steps as u64;
        self.env_steps += steps as u64;
        for ep in &finished {
            buffer.offer(ep);
        }
        rec.exploration_trajectories = finished.len() as u64;

        let mut batch = TrainingBatch::default();
        for seg in &segments {
            let last = seg.bootstrap_value(&learner.params)?;
            let adv = trajectory_advantages(seg, &seg.rewards, &seg.values, last, config.gamma, config.lam)?;
            batch.push(seg, &seg.log_probs, &adv)?;
        }

        let xi = if config.algorithm == Algorithm::SippMatch { config.xi } else { 0.0 };
        let mut weights = None;
        if xi > 0.0 {
            if let Some(best) = buffer.best() {
                match match_weights(&batch.observations, &best.trajectory.observations, config.sinkhorn_params(), config.temperature) {
                    Ok(mw) => {
                        rec.sinkhorn_converged = Some(mw.converged);
                        rec.sinkhorn_iterations = Some(mw.sinkhorn_iterations);
                        if mw.converged {
                            weights = Some(mw.weights);
                        } else {
                            log::warn!(
                                "iteration {}: sinkhorn did not converge in {} iterations; sampling uniformly",
                                rec.iteration,
                                mw.sinkhorn_iterations
                            );
                        }
                    }
                    Err(Error::Numeric(msg)) => {
                        rec.sinkhorn_converged = Some(false);
                        log::warn!("iteration {}: {msg}; sampling uniformly", rec.iteration);
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        let mut sampler = MatchSampler::new(weights.as_deref(), xi, &mut rngs.sampler, &mut rngs.source)?;
        let stats = learner.update(&batch, &config.update_config(), &mut sampler)?;
        record_update(rec, &stats);
        Ok(finished.iter().map(|t| t.episode_return).collect())
    }

    /// REPLAY: fill the data buffer with whole episodes, each replayed from the
    /// imitation buffer with probability `xi` or freshly collected, re-score them under the
    /// current parameters, update with uniform minibatches, then offer the fresh episodes
    /// to the imitation buffer.
    fn replay_iteration(&mut self, rec: &mut IterationRecord) -> Result<Vec<f64>> {
        let Self {
            config,
            learner,
            buffer,
            rnd,
            env,
            rngs,
            ..
        } = self;
        let mut slots = Vec::new();
        let mut transitions = 0;
        while transitions < config.n_steps {
            // Drawn for every slot so episode seeds do not depend on xi.
            let seed: u64 = rngs.env.gen();
            let (traj, source) = replay_select(buffer, &learner.params, env, seed, config.xi, &mut rngs.source, &mut rngs.policy)?;
            transitions += traj.len();
            slots.push((traj, source));
        }
        let fresh = |source: &TrajectorySource| *source == TrajectorySource::Exploration;
        rec.exploration_trajectories = slots.iter().filter(|(_, s)| fresh(s)).count() as u64;
        rec.imitation_trajectories = slots.len() as u64 - rec.exploration_trajectories;
        let fresh_steps: usize = slots.iter().filter(|(_, s)| fresh(s)).map(|(t, _)| t.len()).sum();
        self.timesteps += transitions as u64;
        self.env_steps += fresh_steps as u64;

        // Intrinsic rewards score the state each transition leads to.
        let next_obs = |t: &Trajectory| -> Vec<Vec<f64>> {
            t.observations[1..].iter().chain(std::iter::once(&t.final_observation)).cloned().collect()
        };
        let fresh_next: Vec<Vec<f64>> = slots.iter().filter(|(_, s)| fresh(s)).flat_map(|(t, _)| next_obs(t)).collect();
        let mut rewards: Vec<Option<Vec<f64>>> = vec![None; slots.len()];
        if let Some(rnd) = rnd.as_mut() {
            rnd.obs_normalizer.update(&fresh_next);
            let raw: Vec<Vec<f64>> = slots
                .iter()
                .map(|(t, _)| next_obs(t).iter().map(|o| rnd.prediction_error(o)).collect::<Result<_>>())
                .collect::<Result<_>>()?;
            let fresh_raw: Vec<f64> = slots
                .iter()
                .zip(&raw)
                .filter(|((_, s), _)| fresh(s))
                .flat_map(|(_, r)| r.iter().copied())
                .collect();
            rnd.intrinsic_normalizer.update_scalars(&fresh_raw);
            let scale = rnd.intrinsic_scale();
            let mut total = 0.0;
            let mut count = 0usize;
            for (slot, (r, (t, _))) in rewards.iter_mut().zip(raw.iter().zip(&slots)) {
                let combined = t
                    .rewards
                    .iter()
                    .zip(r)
                    .map(|(ext, err)| {
                        total += err / scale;
                        count += 1;
                        combined_reward(*ext, err / scale, config.rnd_coef)
                    })
                    .collect();
                *slot = Some(combined);
            }
            rec.intrinsic_mean = Some(total / count.max(1) as f64);
        }

        let mut batch = TrainingBatch::default();
        for ((traj, _), r) in slots.iter().zip(&rewards) {
            let prepared = replay_prepare_batch(traj, &learner.params, r.as_deref(), config.gamma, config.lam)?;
            batch.push(traj, &prepared.log_probs, &prepared.advantages)?;
        }
        let mut sampler = UniformSampler { rng: &mut rngs.sampler };
        let stats = learner.update(&batch, &config.update_config(), &mut sampler)?;
        record_update(rec, &stats);

        if let Some(rnd) = rnd.as_mut() {
            if !fresh_next.is_empty() {
                for _ in 0..config.n_epochs {
                    for idx in uniform_partition(fresh_next.len(), config.batch_size, &mut rngs.sampler) {
                        let mb: Vec<Vec<f64>> = idx.iter().map(|&i| fresh_next[i].clone()).collect();
                        rnd.update(&mb)?;
                    }
                }
            }
        }

        let mut finished = Vec::new();
        for (traj, source) in &slots {
            if fresh(source) {
                debug_assert_eq!(traj.episode_return, traj.rewards.iter().sum::<f64>());
                buffer.offer(traj);
                finished.push(traj.episode_return);
            }
        }
        debug_assert!(buffer.mode() == BufferMode::Replay);
        Ok(finished)
    }

    pub fn to_checkpoint_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&Checkpoint {
            schema: CHECKPOINT_SCHEMA.to_string(),
            trainer: self.clone(),
        })?)
    }

    pub fn from_checkpoint_json(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text).map_err(|e| Error::format("checkpoint", e.to_string()))?;
        if ck.schema != CHECKPOINT_SCHEMA {
            return Err(Error::format("checkpoint", format!("unsupported schema {:?}", ck.schema)));
        }
        ck.trainer.config.validate()?;
        Ok(ck.trainer)
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, self.to_checkpoint_json()?)?;
        fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load_checkpoint(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::format(path.display().to_string(), e.to_string()))?;
        Self::from_checkpoint_json(&text).map_err(|e| match e {
            Error::Format { reason, .. } => Error::format(path.display().to_string(), reason),
            other => other,
        })
    }
}

fn record_update(rec: &mut IterationRecord, stats: &crate::rl::UpdateStats) {
    rec.uniform_batches = stats.uniform_batches;
    rec.prioritized_batches = stats.prioritized_batches;
    rec.grad_steps = stats.grad_steps;
    rec.mean_loss = stats.mean_loss;
    rec.value_loss = stats.mean_value_loss;
    rec.entropy = stats.mean_entropy;
    rec.clip_fraction = stats.clip_fraction;
}

fn require(config: &TrainConfig, allowed: &[Algorithm], op: &str) -> Result<()> {
    if allowed.contains(&config.algorithm) {
        Ok(())
    } else {
        Err(Error::Config(format!("{op} cannot run algorithm {}", config.algorithm)))
    }
}

/// Runs MATCH to completion in memory; the returned trainer is the final checkpoint.
pub fn train_match(config: TrainConfig) -> Result<Trainer> {
    require(&config, &[Algorithm::SippMatch], "train_match")?;
    let mut t = Trainer::new(config)?;
    t.run()?;
    Ok(t)
}

/// Runs REPLAY (optionally with the RND bonus) to completion in memory.
pub fn train_replay(config: TrainConfig) -> Result<Trainer> {
    require(&config, &[Algorithm::SippReplay, Algorithm::SippReplayRnd], "train_replay")?;
    let mut t = Trainer::new(config)?;
    t.run()?;
    Ok(t)
}

/// Runs vanilla PPO: the MATCH loop with `xi` forced to 0.
pub fn train_ppo(config: TrainConfig) -> Result<Trainer> {
    let config = TrainConfig {
        algorithm: Algorithm::Ppo,
        xi: 0.0,
        buffer_capacity: 1,
        ..config
    };
    let mut t = Trainer::new(config)?;
    t.run()?;
    Ok(t)
}

/// Dispatches on `config.algorithm`.
pub fn train(config: TrainConfig) -> Result<Trainer> {
    match config.algorithm {
        Algorithm::Ppo => train_ppo(config),
        Algorithm::SippMatch => train_match(config),
        Algorithm::SippReplay | Algorithm::SippReplayRnd => train_replay(config),
    }
}
