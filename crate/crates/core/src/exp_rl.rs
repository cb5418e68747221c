//! Cart-pole with a difficulty ladder, REINFORCE training on the easiest
//! rung, and zero-shot evaluation on all four.
//!
//! Two constraint pathways are compared: encoding-level agents see each
//! observation as a Duffing trajectory at damping δ; architecture-level
//! agents see raw observations through LIF layers whose membrane (leak β)
//! persists across environment steps within an episode.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffcore::{clip_global_norm, Adam, Checkpoint, DResult, Graph, ParamStore, Tensor, Var};
use crate::dynsys::{encode_features, EncodingConfig, SystemSpec};
use crate::error::{invalid, Error, Result};
use crate::mlp::Mlp;
use crate::rng::{self, fkey, Rng};
use crate::snn::{BoundLayer, Readout, SnnState, SpikingModel};
use crate::stats;

pub const GRAVITY: f64 = 9.8;
pub const CART_MASS: f64 = 1.0;
pub const FORCE_MAG: f64 = 10.0;
pub const TAU: f64 = 0.02;
pub const MAX_STEPS: usize = 200;
pub const THETA_LIMIT: f64 = 12.0 * std::f64::consts::PI / 180.0;
pub const X_LIMIT: f64 = 2.4;
pub const SOLVED_REWARD: f64 = 195.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DifficultyConfig {
    pub name: String,
    /// Half-length of the pole, as in the classic environment.
    pub pole_length: f64,
    pub pole_mass: f64,
    /// Std of the multiplicative Gaussian perturbation of the force.
    pub force_noise: f64,
    /// Reset draws every state variable from U(−init_range, init_range).
    pub init_range: f64,
}

impl DifficultyConfig {
    fn new(name: &str, pole_length: f64, pole_mass: f64, force_noise: f64, init_range: f64) -> Self {
        DifficultyConfig { name: name.into(), pole_length, pole_mass, force_noise, init_range }
    }

    pub fn easy() -> Self {
        Self::new("Easy", 0.5, 0.1, 0.0, 0.05)
    }

    pub fn ladder() -> Vec<Self> {
        vec![
            Self::easy(),
            Self::new("Medium", 0.8, 0.3, 0.005, 0.08),
            Self::new("Hard", 1.2, 0.5, 0.01, 0.10),
            Self::new("VeryHard", 1.5, 0.7, 0.015, 0.12),
        ]
    }
}

/// Cart acceleration and pole angular acceleration of the standard
/// cart-pole equations (pole as a uniform rod of half-length `l`).
pub fn accelerations(state: &[f64; 4], force: f64, cfg: &DifficultyConfig) -> (f64, f64) {
    let [_, _, theta, theta_dot] = *state;
    let (m_p, l) = (cfg.pole_mass, cfg.pole_length);
    let total = CART_MASS + m_p;
    let pml = m_p * l;
    let (s, c) = theta.sin_cos();
    let temp = (force + pml * theta_dot * theta_dot * s) / total;
    let theta_acc = (GRAVITY * s - c * temp) / (l * (4.0 / 3.0 - m_p * c * c / total));
    let x_acc = temp - pml * theta_acc * c / total;
    (x_acc, theta_acc)
}

/// Semi-implicit Euler step of length `dt`: velocities first, then positions
/// with the updated velocities.
pub fn physics_step(state: &[f64; 4], force: f64, cfg: &DifficultyConfig, dt: f64) -> [f64; 4] {
    let (xa, ta) = accelerations(state, force, cfg);
    let xd = state[1] + dt * xa;
    let td = state[3] + dt * ta;
    [state[0] + dt * xd, xd, state[2] + dt * td, td]
}

/// Mechanical energy of cart and rod.
pub fn energy(state: &[f64; 4], cfg: &DifficultyConfig) -> f64 {
    let [_, xd, th, thd] = *state;
    let (m_p, l) = (cfg.pole_mass, cfg.pole_length);
    0.5 * (CART_MASS + m_p) * xd * xd
        + m_p * l * xd * thd * th.cos()
        + 0.5 * (4.0 / 3.0) * m_p * l * l * thd * thd
        + m_p * GRAVITY * l * th.cos()
}

pub struct CartPole {
    pub cfg: DifficultyConfig,
    pub state: [f64; 4],
    pub steps: usize,
    pub done: bool,
    rng: Rng,
}

impl CartPole {
    pub fn new(cfg: DifficultyConfig, seed: u64) -> Self {
        let mut env = CartPole { cfg, state: [0.0; 4], steps: 0, done: false, rng: rng::named(seed, "cartpole", &[]) };
        env.reset();
        env
    }

    pub fn reset(&mut self) -> [f64; 4] {
        let r = self.cfg.init_range;
        for v in self.state.iter_mut() {
            *v = if r > 0.0 { self.rng.gen_range(-r..r) } else { 0.0 };
        }
        self.steps = 0;
        self.done = false;
        self.state
    }

    /// Applies ±10 N (times 1 + ε) and returns (state, reward, done).
    pub fn step(&mut self, action: usize) -> Result<([f64; 4], f64, bool)> {
        if self.done {
            return invalid("step called on a finished episode");
        }
        if action > 1 {
            return invalid(format!("action {action} is not 0 or 1"));
        }
        let dir = if action == 1 { 1.0 } else { -1.0 };
        let eps = if self.cfg.force_noise > 0.0 {
            Normal::new(0.0, self.cfg.force_noise).unwrap().sample(&mut self.rng)
        } else {
            0.0
        };
        self.state = physics_step(&self.state, dir * FORCE_MAG * (1.0 + eps), &self.cfg, TAU);
        self.steps += 1;
        let fell = self.state[2].abs() > THETA_LIMIT || self.state[0].abs() > X_LIMIT;
        self.done = fell || self.steps >= MAX_STEPS;
        Ok((self.state, 1.0, self.done))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pathway {
    Encoding,
    Architecture,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum AgentKind {
    #[serde(rename = "MLP_raw")]
    MlpRaw,
    #[serde(rename = "MLP_encoded")]
    MlpEncoded { delta: f64 },
    #[serde(rename = "SNN_encoded")]
    SnnEncoded { delta: f64 },
    #[serde(rename = "SNN_leaky")]
    SnnLeaky { beta: f64 },
    RLeaky { beta: f64 },
}

impl AgentKind {
    pub fn name(&self) -> &'static str {
        match self {
            AgentKind::MlpRaw => "MLP_raw",
            AgentKind::MlpEncoded { .. } => "MLP_encoded",
            AgentKind::SnnEncoded { .. } => "SNN_encoded",
            AgentKind::SnnLeaky { .. } => "SNN_leaky",
            AgentKind::RLeaky { .. } => "RLeaky",
        }
    }

    /// δ or β, NaN for the raw MLP.
    pub fn param(&self) -> f64 {
        match *self {
            AgentKind::MlpRaw => f64::NAN,
            AgentKind::MlpEncoded { delta } | AgentKind::SnnEncoded { delta } => delta,
            AgentKind::SnnLeaky { beta } | AgentKind::RLeaky { beta } => beta,
        }
    }

    fn index(&self) -> u64 {
        match self {
            AgentKind::MlpRaw => 0,
            AgentKind::MlpEncoded { .. } => 1,
            AgentKind::SnnEncoded { .. } => 2,
            AgentKind::SnnLeaky { .. } => 3,
            AgentKind::RLeaky { .. } => 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub kind: AgentKind,
    pub pathway: Pathway,
    pub hidden: usize,
    pub lr: f64,
    pub grad_clip: f64,
    /// LIF leak of encoded SNN agents.
    pub snn_beta: f64,
}

impl AgentSpec {
    /// Encoding-level agents: width 128, lr 1e-3. Architecture-level: width
    /// 256, lr 5e-4. Gradient clip 1.0 in both.
    pub fn new(kind: AgentKind, pathway: Pathway) -> Self {
        let (hidden, lr) = match pathway {
            Pathway::Encoding => (128, 1e-3),
            Pathway::Architecture => (256, 5e-4),
        };
        AgentSpec { kind, pathway, hidden, lr, grad_clip: 1.0, snn_beta: 0.95 }
    }

    /// The pathway an agent kind belongs to, with the raw MLP counted as an
    /// architecture-level baseline.
    pub fn default_for(kind: AgentKind) -> Self {
        let pathway = match kind {
            AgentKind::MlpEncoded { .. } | AgentKind::SnnEncoded { .. } => Pathway::Encoding,
            _ => Pathway::Architecture,
        };
        Self::new(kind, pathway)
    }
}

/// Observation encoding of encoded agents: 4 features, T = 8, N = 5.
pub fn observation_encoding() -> EncodingConfig {
    EncodingConfig::efficient()
}

#[derive(Clone, Debug)]
pub enum Policy {
    Mlp { net: Mlp, encode: Option<SystemSpec> },
    Snn { net: SpikingModel, encode: Option<SystemSpec>, persistent: bool },
}

/// Per-episode state: membranes of persistent spiking policies.
pub struct EpisodeState {
    snn: Option<SnnState>,
    bound: Option<Vec<BoundLayer>>,
}

impl Policy {
    pub fn new(spec: &AgentSpec, store: &mut ParamStore, rng: &mut Rng) -> Self {
        let h = spec.hidden;
        match spec.kind {
            AgentKind::MlpRaw => Policy::Mlp { net: Mlp::new(store, rng, "pi", &[4, h, h, 2], true), encode: None },
            AgentKind::MlpEncoded { delta } => {
                Policy::Mlp { net: Mlp::new(store, rng, "pi", &[12, h, h, 2], true), encode: Some(SystemSpec::duffing(delta)) }
            }
            AgentKind::SnnEncoded { delta } => Policy::Snn {
                net: SpikingModel::new(store, rng, "pi", &[12, h, h, 2], spec.snn_beta, false, Readout::IntegratedMembrane),
                encode: Some(SystemSpec::duffing(delta)),
                persistent: false,
            },
            AgentKind::SnnLeaky { beta } => Policy::Snn {
                net: SpikingModel::new(store, rng, "pi", &[4, h, h, 2], beta, false, Readout::IntegratedMembrane),
                encode: None,
                persistent: true,
            },
            AgentKind::RLeaky { beta } => Policy::Snn {
                net: SpikingModel::new(store, rng, "pi", &[4, h, h, 2], beta, true, Readout::IntegratedMembrane),
                encode: None,
                persistent: true,
            },
        }
    }

    pub fn begin_episode(&self) -> EpisodeState {
        match self {
            Policy::Snn { net, persistent: true, .. } => EpisodeState { snn: Some(net.reset()), bound: None },
            _ => EpisodeState { snn: None, bound: None },
        }
    }

    /// Action logits (`1 × 2`) for one observation.
    pub fn logits(&self, g: &mut Graph, store: &ParamStore, st: &mut EpisodeState, obs: &[f64; 4]) -> Result<Var> {
        match self {
            Policy::Mlp { net, encode } => {
                let x = match encode {
                    None => obs.to_vec(),
                    Some(spec) => {
                        let tr = encode_features(obs, spec, &observation_encoding())?;
                        let mut m = vec![0.0; 12];
                        for k in 0..tr.n {
                            m.iter_mut().zip(tr.frame(k)).for_each(|(a, b)| *a += b / tr.n as f64);
                        }
                        m
                    }
                };
                let x = g.input(Tensor::new(&[1, x.len()], x)?)?;
                Ok(net.forward(g, store, x)?)
            }
            Policy::Snn { net, encode, persistent } => {
                if st.bound.is_none() {
                    st.bound = Some(net.bind(g, store));
                }
                let bound = st.bound.as_ref().unwrap();
                if *persistent {
                    let x = g.input(Tensor::new(&[1, 4], obs.to_vec())?)?;
                    let out = net.step(g, bound, st.snn.as_mut().unwrap(), x)?;
                    Ok(out.out)
                } else {
                    let spec = encode.as_ref().expect("encoded spiking policy");
                    let tr = encode_features(obs, spec, &observation_encoding())?;
                    let inputs: Vec<Var> = (0..tr.n)
                        .map(|k| g.input(Tensor::new(&[1, 12], tr.frame(k))?))
                        .collect::<DResult<_>>()?;
                    Ok(net.run_sequence(g, bound, &inputs)?.readout)
                }
            }
        }
    }
}

/// Softmax of a logit row.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Discounted returns standardized within the episode. `None` when they are
/// constant (no learning signal).
pub fn normalized_returns(rewards: &[f64], gamma: f64) -> Option<Vec<f64>> {
    let mut g = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        acc = rewards[t] + gamma * acc;
        g[t] = acc;
    }
    let sd = stats::std_pop(&g);
    if !(sd > 1e-8) {
        return None;
    }
    let m = stats::mean(&g);
    Some(g.into_iter().map(|v| (v - m) / sd).collect())
}

/// Runs one episode. With `sample_rng` actions are drawn from the policy,
/// otherwise chosen greedily. Returns the graph so the caller can
/// differentiate through it.
pub struct Rollout {
    pub graph: Graph,
    pub logits: Vec<Var>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
}

pub fn rollout(policy: &Policy, store: &ParamStore, env: &mut CartPole, mut sample_rng: Option<&mut Rng>) -> Result<Rollout> {
    let mut g = Graph::new();
    let mut st = policy.begin_episode();
    let mut obs = env.reset();
    let (mut logits, mut actions, mut rewards) = (Vec::new(), Vec::new(), Vec::new());
    loop {
        let l = policy.logits(&mut g, store, &mut st, &obs)?;
        let z = g.value(l).data.clone();
        let a = match sample_rng.as_deref_mut() {
            Some(r) => {
                let p = softmax(&z);
                if r.gen::<f64>() < p[0] {
                    0
                } else {
                    1
                }
            }
            None => usize::from(z[1] > z[0]),
        };
        let (next, rew, done) = env.step(a)?;
        logits.push(l);
        actions.push(a);
        rewards.push(rew);
        obs = next;
        if done {
            break;
        }
    }
    Ok(Rollout { graph: g, logits, actions, rewards })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// Train for the full budget; convergence is still tracked.
    FixedBudget,
    /// Stop once the solve criterion is met.
    Sufficient,
}

impl Protocol {
    pub fn name(&self) -> &'static str {
        match self {
            Protocol::FixedBudget => "fixed_budget",
            Protocol::Sufficient => "sufficient",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RlTrainConfig {
    pub protocol: Protocol,
    pub episodes: usize,
    pub gamma: f64,
    pub eval_every: usize,
    /// Greedy Easy episodes per periodic evaluation.
    pub eval_episodes: usize,
    /// Consecutive periodic evaluations at or above 195 that count as solved.
    pub solve_streak: usize,
}

impl RlTrainConfig {
    pub fn fixed_budget(episodes: usize) -> Self {
        RlTrainConfig { protocol: Protocol::FixedBudget, episodes, gamma: 0.99, eval_every: 20, eval_episodes: 10, solve_streak: 5 }
    }

    pub fn sufficient(max_episodes: usize) -> Self {
        RlTrainConfig { protocol: Protocol::Sufficient, ..Self::fixed_budget(max_episodes) }
    }
}

impl Default for RlTrainConfig {
    fn default() -> Self {
        Self::fixed_budget(2000)
    }
}

pub struct TrainedAgent {
    pub spec: AgentSpec,
    pub policy: Policy,
    pub store: ParamStore,
    /// Reward of every training episode.
    pub curve: Vec<f64>,
    /// (episode, mean greedy Easy reward) at each periodic evaluation.
    pub evals: Vec<(usize, f64)>,
    /// Episode count at which the solve streak was first completed.
    pub convergence_episode: Option<usize>,
}

impl TrainedAgent {
    pub fn converged(&self) -> bool {
        self.convergence_episode.is_some()
    }
}

/// Mean greedy reward over `episodes` fresh environments.
pub fn greedy_mean(policy: &Policy, store: &ParamStore, cfg: &DifficultyConfig, episodes: usize, seed: u64, tag: u64) -> Result<(f64, Vec<f64>)> {
    let mut rewards = Vec::with_capacity(episodes);
    for ep in 0..episodes {
        let mut env = CartPole::new(cfg.clone(), rng::derive(seed, &[rng::label("greedy-env"), tag, ep as u64]));
        let r = rollout(policy, store, &mut env, None)?;
        rewards.push(r.rewards.iter().sum());
    }
    Ok((stats::mean(&rewards), rewards))
}

/// REINFORCE on the Easy rung: loss −Σ_t log π(a_t)·Ĝ_t with per-episode
/// standardized returns, global-norm clipping and Adam.
pub fn reinforce_train(spec: &AgentSpec, cfg: &RlTrainConfig, seed: u64) -> Result<TrainedAgent> {
    let mut store = ParamStore::new();
    let policy = Policy::new(spec, &mut store, &mut rng::named(seed, "rl-init", &[spec.kind.index()]));
    let mut adam = Adam::new(&store, spec.lr);
    let easy = DifficultyConfig::easy();
    let mut curve = Vec::with_capacity(cfg.episodes);
    let mut evals = Vec::new();
    let mut streak = 0;
    let mut convergence_episode = None;
    for ep in 0..cfg.episodes {
        let mut env = CartPole::new(easy.clone(), rng::derive(seed, &[rng::label("train-env"), ep as u64]));
        let mut act = rng::named(seed, "rl-action", &[ep as u64]);
        let mut ro = rollout(&policy, &store, &mut env, Some(&mut act))?;
        curve.push(ro.rewards.iter().sum());
        if let Some(w) = normalized_returns(&ro.rewards, cfg.gamma) {
            let g = &mut ro.graph;
            let all = g.concat(&ro.logits, 0)?;
            let nll = g.cross_entropy_rows(all, &ro.actions)?;
            let wv = g.input(Tensor::new(&[w.len()], w)?)?;
            let weighted = g.mul(nll, wv)?;
            let loss = g.sum(weighted)?;
            let mut grads = g.backward(loss, &store)?;
            clip_global_norm(&mut grads, spec.grad_clip);
            adam.step(&mut store, &grads)?;
        }
        if cfg.eval_every > 0 && (ep + 1) % cfg.eval_every == 0 {
            let (m, _) = greedy_mean(&policy, &store, &easy, cfg.eval_episodes, seed, ep as u64)?;
            evals.push((ep + 1, m));
            streak = if m >= SOLVED_REWARD { streak + 1 } else { 0 };
            if streak >= cfg.solve_streak && convergence_episode.is_none() {
                convergence_episode = Some(ep + 1);
                if cfg.protocol == Protocol::Sufficient {
                    break;
                }
            }
        }
    }
    Ok(TrainedAgent { spec: spec.clone(), policy, store, curve, evals, convergence_episode })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DifficultyStats {
    pub name: String,
    pub mean: f64,
    pub std: f64,
    /// Fraction of episodes with reward ≥ 195.
    pub success_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_difficulty: Vec<DifficultyStats>,
    pub converged: bool,
    pub convergence_episode: Option<usize>,
    /// Easy mean minus VeryHard mean; only for converged agents.
    pub gap: Option<f64>,
}

impl EvalReport {
    pub fn easy(&self) -> &DifficultyStats {
        &self.per_difficulty[0]
    }

    pub fn hardest(&self) -> &DifficultyStats {
        self.per_difficulty.last().unwrap()
    }
}

/// Greedy zero-shot evaluation on every rung of `ladder`.
pub fn evaluate_zero_shot(agent: &TrainedAgent, ladder: &[DifficultyConfig], episodes: usize, seed: u64) -> Result<EvalReport> {
    if ladder.is_empty() {
        return invalid("empty difficulty ladder");
    }
    let mut per_difficulty = Vec::with_capacity(ladder.len());
    for (i, d) in ladder.iter().enumerate() {
        let (_, rewards) = greedy_mean(&agent.policy, &agent.store, d, episodes, seed, u64::MAX - i as u64)?;
        per_difficulty.push(DifficultyStats {
            name: d.name.clone(),
            mean: stats::mean(&rewards),
            std: stats::std_pop(&rewards),
            success_rate: rewards.iter().filter(|&&r| r >= SOLVED_REWARD).count() as f64 / rewards.len().max(1) as f64,
        });
    }
    let converged = agent.converged();
    let gap = converged.then(|| per_difficulty[0].mean - per_difficulty.last().unwrap().mean);
    Ok(EvalReport { per_difficulty, converged, convergence_episode: agent.convergence_episode, gap })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RlRunRow {
    pub pathway: Pathway,
    pub kind: String,
    pub delta_or_beta: f64,
    pub seed: u64,
    pub protocol: Protocol,
    pub easy_mean: f64,
    pub easy_std: f64,
    pub vhard_mean: f64,
    pub vhard_std: f64,
    /// NaN when the run did not converge.
    pub gap: f64,
    pub converged: bool,
    pub convergence_episode: Option<usize>,
    /// "ok" or the failure cause.
    pub status: String,
}

pub struct RlRun {
    pub row: RlRunRow,
    pub curve: Vec<f64>,
    pub report: Option<EvalReport>,
    /// Trained agent, reloadable for later evaluation.
    pub saved: Option<SavedAgent>,
}

/// Serialized trained agent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SavedAgent {
    pub spec: AgentSpec,
    pub job_seed: u64,
    pub convergence_episode: Option<usize>,
    pub checkpoint: Checkpoint,
}

impl SavedAgent {
    pub fn from_trained(agent: &TrainedAgent, job_seed: u64) -> Self {
        SavedAgent {
            spec: agent.spec.clone(),
            job_seed,
            convergence_episode: agent.convergence_episode,
            checkpoint: agent.store.to_checkpoint(),
        }
    }

    /// Rebuilds the policy structure and loads the stored parameters.
    pub fn restore(&self) -> Result<TrainedAgent> {
        let mut scratch = ParamStore::new();
        let policy = Policy::new(&self.spec, &mut scratch, &mut rng::named(0, "restore", &[]));
        let store = ParamStore::from_checkpoint(&self.checkpoint)?;
        let same = store.len() == scratch.len()
            && scratch.ids().all(|id| store.name(id) == scratch.name(id) && store.get(id).shape == scratch.get(id).shape);
        if !same {
            return Err(Error::Checkpoint("parameters do not match the agent spec".into()));
        }
        Ok(TrainedAgent { spec: self.spec.clone(), policy, store, curve: vec![], evals: vec![], convergence_episode: self.convergence_episode })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RlExperimentConfig {
    pub train: RlTrainConfig,
    pub eval_episodes: usize,
}

impl Default for RlExperimentConfig {
    fn default() -> Self {
        RlExperimentConfig { train: RlTrainConfig::default(), eval_episodes: 100 }
    }
}

/// Train + zero-shot evaluation for one (agent, seed). Failures are recorded.
pub fn run_agent(spec: &AgentSpec, cfg: &RlExperimentConfig, seed: u64) -> RlRun {
    let job_seed = rng::derive(seed, &[rng::label("rl-run"), spec.kind.index(), fkey(spec.kind.param())]);
    let mut row = RlRunRow {
        pathway: spec.pathway,
        kind: spec.kind.name().into(),
        delta_or_beta: spec.kind.param(),
        seed,
        protocol: cfg.train.protocol,
        easy_mean: f64::NAN,
        easy_std: f64::NAN,
        vhard_mean: f64::NAN,
        vhard_std: f64::NAN,
        gap: f64::NAN,
        converged: false,
        convergence_episode: None,
        status: "ok".into(),
    };
    let result = reinforce_train(spec, &cfg.train, job_seed)
        .and_then(|agent| evaluate_zero_shot(&agent, &DifficultyConfig::ladder(), cfg.eval_episodes, job_seed).map(|r| (agent, r)));
    match result {
        Ok((agent, report)) => {
            row.easy_mean = report.easy().mean;
            row.easy_std = report.easy().std;
            row.vhard_mean = report.hardest().mean;
            row.vhard_std = report.hardest().std;
            row.gap = report.gap.unwrap_or(f64::NAN);
            row.converged = report.converged;
            row.convergence_episode = report.convergence_episode;
            let saved = SavedAgent::from_trained(&agent, job_seed);
            RlRun { row, curve: agent.curve, report: Some(report), saved: Some(saved) }
        }
        Err(e) => {
            row.status = e.to_string();
            RlRun { row, curve: vec![], report: None, saved: None }
        }
    }
}

/// Every (agent, seed) pair, in parallel.
pub fn run_agents(specs: &[AgentSpec], seeds: &[u64], cfg: &RlExperimentConfig) -> Vec<RlRun> {
    let jobs: Vec<(&AgentSpec, u64)> = specs.iter().flat_map(|s| seeds.iter().map(move |&seed| (s, seed))).collect();
    jobs.par_iter().map(|(s, seed)| run_agent(s, cfg, *seed)).collect()
}

pub const BETA_GRID: [f64; 6] = [0.1, 0.3, 0.5, 0.7, 0.9, 1.0];

/// Leaky SNN agents over a β grid.
pub fn beta_sweep(betas: &[f64], seeds: &[u64], cfg: &RlExperimentConfig) -> Vec<RlRun> {
    let specs: Vec<AgentSpec> = betas.iter().map(|&b| AgentSpec::default_for(AgentKind::SnnLeaky { beta: b })).collect();
    run_agents(&specs, seeds, cfg)
}

/// Mean gap over converged runs of one kind and parameter.
pub fn mean_gap(rows: &[RlRunRow], kind: &str, param: f64) -> (f64, usize) {
    let v: Vec<f64> = rows
        .iter()
        .filter(|r| r.kind == kind && (r.delta_or_beta == param || (r.delta_or_beta.is_nan() && param.is_nan())))
        .filter(|r| r.converged && r.gap.is_finite())
        .map(|r| r.gap)
        .collect();
    (stats::mean(&v), v.len())
}
