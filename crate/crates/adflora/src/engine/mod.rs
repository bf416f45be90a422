//! The federated round loop.
//!
//! One round is: every client takes `local_steps` optimizer steps on the
//! block(s) its method trains, against its own shard; then the method's
//! mixing rule runs with that round's mixing matrix. Five methods share the
//! loop and differ only in which blocks train and which stacks mix:
//!
//! | method | trains | mixes |
//! |--------|--------|-------|
//! | `naive` | both blocks | both stacks |
//! | `ffa` | the non-frozen block | that block's stack |
//! | `rolora_cfl` | alternating | active stack, uniform all-to-all |
//! | `rolora_dfl` | alternating | active stack only |
//! | `adf` | alternating | both stacks |
//!
//! Mixing the frozen stack is the whole difference between `rolora_dfl` and
//! `adf`: active-only mixing leaves each client's copy of the frozen block
//! untouched (bitwise), so disagreement in it persists through the phase
//! and re-enters as cross-client interference, while joint mixing contracts
//! it every round.
//!
//! Everything is deterministic given the config and a seed: two runs
//! produce bitwise-identical traces.

mod checks;
mod metrics;

pub use checks::{check_descent, check_lemma1, check_theorem2_bound, DescentReport, Lemma1Report, Theorem2Report};
pub use metrics::{
    consensus_error, read_trace_csv, write_trace_csv, MetricsRecord, ParamStack, PhaseLabel,
    CSV_HEADER,
};

use crate::config::{
    ExperimentConfig, InitScheme, MethodKind, OptimizerKind, TaskKind, TopologyKind,
};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::lora::{self, cross_term, init_pair, AggregationWeights, Block, LoRAPair, PhaseSchedule};
use crate::optim::{self, AdamConfig, BlockMoments, SgdConfig};
use crate::rng::{self, Domain};
use crate::tasks::{EvalSplit, GradPair, LogisticTask, MatFactTask};
use crate::topology::{GossipProcess, MixingMatrix};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// The objective a federation optimizes.
#[derive(Debug, Clone)]
pub enum Task {
    MatFact(MatFactTask),
    Logistic(LogisticTask),
}

impl Task {
    pub fn n_clients(&self) -> usize {
        match self {
            Task::MatFact(t) => t.n_clients(),
            Task::Logistic(t) => t.n_clients(),
        }
    }

    /// `(n, m)` such that a pair's `a` is `r×n` and `b` is `m×r`.
    pub fn pair_dims(&self) -> (usize, usize) {
        match self {
            Task::MatFact(t) => {
                let (m, n) = t.dims();
                (n, m)
            }
            Task::Logistic(t) => (t.n_classes(), t.n_features()),
        }
    }

    pub fn client_loss(&self, client: usize, pair: &LoRAPair) -> Result<f64> {
        match self {
            Task::MatFact(t) => Ok(t.loss(client, pair)),
            Task::Logistic(t) => Ok(t.loss_grad(client, pair)?.0),
        }
    }

    /// The global objective (mean over every client's data) at one pair.
    pub fn global_loss(&self, pair: &LoRAPair) -> Result<f64> {
        match self {
            Task::MatFact(t) => Ok(t.global_loss(pair)),
            Task::Logistic(t) => {
                let mut acc = 0.0;
                for c in 0..t.n_clients() {
                    acc += t.loss_grad(c, pair)?.0;
                }
                Ok(acc / t.n_clients() as f64)
            }
        }
    }

    fn client_grad(
        &self,
        client: usize,
        pair: &LoRAPair,
        minibatch: Option<(&mut ChaCha8Rng, usize)>,
    ) -> Result<GradPair> {
        match self {
            Task::MatFact(t) => Ok(t.grad(client, pair)),
            Task::Logistic(t) => {
                if let Some((rng, size)) = minibatch {
                    let shard_len = t.client(client).train_y.len();
                    let indices: Vec<usize> =
                        (0..size).map(|_| rng.gen_range(0..shard_len)).collect();
                    Ok(t.loss_grad_minibatch(client, &indices, pair)?.1)
                } else {
                    Ok(t.loss_grad(client, pair)?.1)
                }
            }
        }
    }

    /// Full-batch gradient of the global objective (mean over clients).
    pub fn global_grad(&self, pair: &LoRAPair) -> Result<GradPair> {
        match self {
            Task::MatFact(t) => Ok(t.global_grad(pair)),
            Task::Logistic(t) => {
                let n = t.n_clients() as f64;
                let mut g_a = Matrix::zeros(pair.a.rows(), pair.a.cols());
                let mut g_b = Matrix::zeros(pair.b.rows(), pair.b.cols());
                for c in 0..t.n_clients() {
                    let (_, g) = t.loss_grad(c, pair)?;
                    g_a = g_a.add(&g.g_a);
                    g_b = g_b.add(&g.g_b);
                }
                Ok(GradPair {
                    g_a: g_a.scale(1.0 / n),
                    g_b: g_b.scale(1.0 / n),
                })
            }
        }
    }
}

/// One client's live state.
#[derive(Debug, Clone)]
pub struct ClientState {
    pub id: usize,
    pub pair: LoRAPair,
    pub moments: BlockMoments,
    /// Minibatch sampling stream, present only in stochastic runs.
    minibatch_rng: Option<ChaCha8Rng>,
}

/// A method resolved to its engine behavior.
#[derive(Debug, Clone)]
pub enum Method {
    Naive,
    Ffa { frozen: Block },
    RoloraCfl { schedule: PhaseSchedule },
    RoloraDfl { schedule: PhaseSchedule },
    Adf { schedule: PhaseSchedule },
}

impl Method {
    pub fn from_config(cfg: &ExperimentConfig) -> Method {
        let schedule = || {
            let t = cfg.method.t.unwrap_or(5);
            let rounds = cfg.run.rounds.unwrap_or(150).max(1);
            PhaseSchedule::new(t, rounds.div_ceil(2 * t).max(1))
        };
        match cfg.method.kind {
            MethodKind::Naive => Method::Naive,
            MethodKind::Ffa => Method::Ffa {
                frozen: cfg
                    .method
                    .ffa_frozen_block
                    .map(Block::from)
                    .unwrap_or(Block::A),
            },
            MethodKind::RoloraCfl => Method::RoloraCfl { schedule: schedule() },
            MethodKind::RoloraDfl => Method::RoloraDfl { schedule: schedule() },
            MethodKind::Adf => Method::Adf { schedule: schedule() },
        }
    }

    pub fn schedule(&self) -> Option<&PhaseSchedule> {
        match self {
            Method::RoloraCfl { schedule }
            | Method::RoloraDfl { schedule }
            | Method::Adf { schedule } => Some(schedule),
            _ => None,
        }
    }

    /// Blocks trained in the given round.
    pub fn trained_blocks(&self, round: usize) -> Vec<Block> {
        match self {
            Method::Naive => vec![Block::B, Block::A],
            Method::Ffa { frozen } => vec![match frozen {
                Block::A => Block::B,
                Block::B => Block::A,
            }],
            Method::RoloraCfl { schedule }
            | Method::RoloraDfl { schedule }
            | Method::Adf { schedule } => vec![lora::phase_at(round, schedule)],
        }
    }

    pub fn phase_label(&self, round: usize) -> PhaseLabel {
        let blocks = self.trained_blocks(round);
        if blocks.len() == 2 {
            PhaseLabel::Both
        } else {
            match blocks[0] {
                Block::A => PhaseLabel::A,
                Block::B => PhaseLabel::B,
            }
        }
    }
}

/// Static or per-round-drawn communication structure.
#[derive(Debug, Clone)]
pub enum Topology {
    Static(MixingMatrix),
    Gossip(GossipProcess),
}

impl Topology {
    pub fn from_config(cfg: &ExperimentConfig, seed: u64) -> Topology {
        let n = cfg.run.n_clients.unwrap_or(10);
        match cfg.topology.kind.unwrap_or(TopologyKind::Complete) {
            TopologyKind::Complete => Topology::Static(MixingMatrix::complete_uniform(n)),
            TopologyKind::Identity => Topology::Static(MixingMatrix::identity_topology(n)),
            TopologyKind::Ring => Topology::Static(MixingMatrix::ring_lazy(n)),
            TopologyKind::Gossip => Topology::Gossip(GossipProcess::new(
                n,
                cfg.topology.p.unwrap_or(0.1),
                seed,
            )),
        }
    }

    pub fn round_matrix(&self, round: usize) -> MixingMatrix {
        match self {
            Topology::Static(w) => w.clone(),
            Topology::Gossip(g) => g.draw_gossip_round(round as u64),
        }
    }
}

#[derive(Debug, Clone)]
enum Optimizer {
    Sgd(SgdConfig),
    Adam {
        cfg: AdamConfig,
        reset_moments_on_switch: bool,
    },
    /// SGD with the automatic step size, re-derived at every phase switch.
    Theory { safety: f64 },
}

impl Optimizer {
    fn from_config(cfg: &ExperimentConfig) -> Optimizer {
        match cfg.optimizer.kind.unwrap_or(OptimizerKind::Adam) {
            OptimizerKind::Sgd => Optimizer::Sgd(SgdConfig {
                eta: cfg.optimizer.eta.unwrap_or(1e-3),
                safety: cfg.optimizer.safety.unwrap_or(0.9),
            }),
            OptimizerKind::Adam => Optimizer::Adam {
                cfg: AdamConfig {
                    eta: cfg.optimizer.eta.unwrap_or(1e-3),
                    beta1: cfg.optimizer.beta1.unwrap_or(0.9),
                    beta2: cfg.optimizer.beta2.unwrap_or(0.999),
                    epsilon: cfg.optimizer.epsilon.unwrap_or(1e-8),
                    weight_decay: cfg.optimizer.weight_decay.unwrap_or(0.01),
                },
                reset_moments_on_switch: cfg.optimizer.reset_moments_on_switch.unwrap_or(false),
            },
            OptimizerKind::Theory => Optimizer::Theory {
                safety: cfg.optimizer.safety.unwrap_or(0.9),
            },
        }
    }
}

/// Mix both stacks with one matrix: `U ← U·Wᵀ` for each block.
pub fn mix_joint(states: &mut [ClientState], w: &MixingMatrix) {
    mix_block(states, w, Block::A);
    mix_block(states, w, Block::B);
}

/// Mix only the active block's stack; the other stack is untouched
/// (bitwise).
pub fn mix_active_only(states: &mut [ClientState], w: &MixingMatrix, active: Block) {
    mix_block(states, w, active);
}

fn mix_block(states: &mut [ClientState], w: &MixingMatrix, which: Block) {
    let n = states.len();
    assert_eq!(n, w.n_clients(), "state count differs from matrix size");
    let (rows, cols) = states[0].pair.block(which).shape();
    let stack = Matrix::from_fn(rows * cols, n, |d, i| states[i].pair.block(which).entries()[d]);
    let mixed = w.apply_to_stack(&stack);
    for (i, state) in states.iter_mut().enumerate() {
        let block = state.pair.block_mut(which);
        *block = Matrix::from_fn(rows, cols, |r, c| mixed.get(r * cols + c, i));
    }
}

/// A live federation: task, client states, and the method/topology/optimizer
/// wiring, steppable one round at a time.
pub struct Federation {
    pub task: Task,
    pub states: Vec<ClientState>,
    pub method: Method,
    pub topology: Topology,
    optimizer: Optimizer,
    local_steps: usize,
    batch_size: Option<usize>,
    round: usize,
    /// Current automatic step size (theory mode), re-derived at switches.
    eta_current: f64,
}

impl Federation {
    /// Build the initial federation for `(config, seed)`.
    pub fn new(cfg: &ExperimentConfig, seed: u64) -> Result<Federation> {
        let task_seed = cfg.task_seed(seed);
        let mut task_rng = rng::stream(task_seed, Domain::TaskGen, 0);
        let task = match cfg.task.kind {
            TaskKind::Matfact => Task::MatFact(MatFactTask::generate(
                &cfg.matfact_params(),
                &mut task_rng,
            )?),
            TaskKind::Logistic => Task::Logistic(LogisticTask::generate(
                &cfg.logistic_params(),
                &mut task_rng,
            )?),
        };

        let n = cfg.run.n_clients.unwrap_or(10);
        let rank = cfg.lora.rank.unwrap_or(8);
        let alpha = cfg.lora.alpha.unwrap_or(16.0);
        let (a_cols, b_rows) = task.pair_dims();
        let init = cfg.run.init.unwrap_or(InitScheme::Shared);
        let batch_size = cfg.run.batch_size;

        let mut states = Vec::with_capacity(n);
        let shared = match init {
            InitScheme::Shared => {
                let mut r = rng::stream(seed, Domain::Init, 0);
                Some(init_pair(rank, a_cols, b_rows, alpha, &mut r))
            }
            InitScheme::Heterogeneous => None,
        };
        for id in 0..n {
            let pair = match &shared {
                Some(p) => p.clone(),
                None => {
                    // independent draws for both blocks
                    let mut r = rng::stream(seed, Domain::Init, id as u64);
                    let sd = (1.0 / rank as f64).sqrt();
                    let a = Matrix::from_fn(rank, a_cols, |_, _| sd * rng::normal(&mut r));
                    let b = Matrix::from_fn(b_rows, rank, |_, _| sd * rng::normal(&mut r));
                    LoRAPair::new(a, b, alpha)
                }
            };
            let moments = BlockMoments::zeros_like(&pair);
            let minibatch_rng =
                batch_size.map(|_| rng::stream(seed, Domain::Minibatch, id as u64));
            states.push(ClientState {
                id,
                pair,
                moments,
                minibatch_rng,
            });
        }

        Ok(Federation {
            task,
            states,
            method: Method::from_config(cfg),
            topology: Topology::from_config(cfg, seed),
            optimizer: Optimizer::from_config(cfg),
            local_steps: cfg.run.local_steps.unwrap_or(20),
            batch_size,
            round: 0,
            eta_current: 0.0,
        })
    }

    pub fn round(&self) -> usize {
        self.round
    }

    /// Step size the next round will use (after [`Federation::prepare_round`]).
    pub fn current_eta(&self) -> f64 {
        self.eta_current
    }

    pub fn n_clients(&self) -> usize {
        self.states.len()
    }

    pub fn pairs(&self) -> Vec<LoRAPair> {
        self.states.iter().map(|s| s.pair.clone()).collect()
    }

    pub fn mean_pair(&self) -> LoRAPair {
        let weights = AggregationWeights::uniform(self.states.len());
        let pairs = self.pairs();
        lora::naive_aggregate(&pairs, &weights).expect("uniform pairs always aggregate")
    }

    fn is_phase_start(&self, round: usize) -> bool {
        match self.method.schedule() {
            Some(s) => round % s.interval == 0,
            None => round == 0,
        }
    }

    /// Derive the round's step size (theory mode re-derives at phase
    /// switches, taking the min over clients so every local step is safe).
    pub fn prepare_round(&mut self) -> Result<()> {
        match &self.optimizer {
            Optimizer::Theory { safety } => {
                if self.round == 0 || self.is_phase_start(self.round) {
                    let task = match &self.task {
                        Task::MatFact(t) => t,
                        Task::Logistic(_) => {
                            return Err(Error::Precondition(
                                "theory step size needs the matfact task".into(),
                            ))
                        }
                    };
                    let mut eta = f64::INFINITY;
                    for s in &self.states {
                        eta = eta.min(optim::theory_step_size(&s.pair, task, *safety)?);
                    }
                    self.eta_current = eta;
                }
            }
            Optimizer::Sgd(cfg) => self.eta_current = cfg.eta,
            Optimizer::Adam { cfg, .. } => self.eta_current = cfg.eta,
        }
        Ok(())
    }

    /// Run all clients' local updates for the current round.
    pub fn local_update_all(&mut self) -> Result<()> {
        let round = self.round;
        let blocks = self.method.trained_blocks(round);

        // optional moment reset for the newly frozen block at a switch
        if let Optimizer::Adam {
            reset_moments_on_switch: true,
            ..
        } = self.optimizer
        {
            if round > 0 && self.is_phase_start(round) && blocks.len() == 1 {
                let newly_frozen = match blocks[0] {
                    Block::A => Block::B,
                    Block::B => Block::A,
                };
                for s in &mut self.states {
                    s.moments.reset_block(newly_frozen);
                }
            }
        }

        let eta = self.eta_current;
        for idx in 0..self.states.len() {
            self.local_update_one(idx, &blocks, eta).map_err(|e| {
                Error::NonFinite(format!("client {idx}, round {round}: {e}"))
            })?;
        }
        Ok(())
    }

    fn local_update_one(&mut self, idx: usize, blocks: &[Block], eta: f64) -> Result<()> {
        for _step in 0..self.local_steps {
            let state = &mut self.states[idx];
            let grads = self.task.client_grad(
                state.id,
                &state.pair,
                state
                    .minibatch_rng
                    .as_mut()
                    .map(|r| (r, self.batch_size.unwrap_or(32))),
            )?;
            for &block in blocks {
                match &self.optimizer {
                    Optimizer::Sgd(cfg) => {
                        state.pair = optim::sgd_step(
                            &state.pair,
                            &grads,
                            block,
                            &SgdConfig {
                                eta: cfg.eta,
                                safety: cfg.safety,
                            },
                        )?;
                    }
                    Optimizer::Theory { .. } => {
                        state.pair = optim::sgd_step(
                            &state.pair,
                            &grads,
                            block,
                            &SgdConfig { eta, safety: 1.0 },
                        )?;
                    }
                    Optimizer::Adam { cfg, .. } => {
                        let (pair, moments) =
                            optim::adam_step(&state.pair, &grads, block, cfg, &state.moments)?;
                        state.pair = pair;
                        state.moments = moments;
                    }
                }
            }
        }
        Ok(())
    }

    /// The mixing matrix governing the current round.
    pub fn round_matrix(&self) -> MixingMatrix {
        match &self.method {
            Method::RoloraCfl { .. } => MixingMatrix::complete_uniform(self.states.len()),
            _ => self.topology.round_matrix(self.round),
        }
    }

    /// Apply the method's mixing rule for the current round.
    pub fn apply_mixing(&mut self, w: &MixingMatrix) {
        let round = self.round;
        match &self.method {
            Method::Naive | Method::Adf { .. } => mix_joint(&mut self.states, w),
            Method::Ffa { .. } => {
                let trained = self.method.trained_blocks(round)[0];
                mix_active_only(&mut self.states, w, trained);
            }
            Method::RoloraCfl { .. } | Method::RoloraDfl { .. } => {
                let active = self.method.trained_blocks(round)[0];
                mix_active_only(&mut self.states, w, active);
            }
        }
    }

    /// One full round: step-size prep, local updates, mixing.
    pub fn step_round(&mut self) -> Result<()> {
        self.prepare_round()?;
        self.local_update_all()?;
        let w = self.round_matrix();
        self.apply_mixing(&w);
        self.round += 1;
        Ok(())
    }

    /// Advance the round counter when driving the sub-steps manually
    /// (prepare, local update, mix) instead of [`Federation::step_round`].
    pub fn finish_round(&mut self) {
        self.round += 1;
    }

    /// Measure the current state. `step` is the number of completed rounds;
    /// the phase label belongs to the round that produced this state (or
    /// round 0 at init).
    pub fn compute_metrics(&self, step: usize) -> Result<MetricsRecord> {
        let n = self.states.len();
        // the label belongs to the round that produced this state
        let phase = self.method.phase_label(step.saturating_sub(1));

        // the evaluation protocol: every client's model against the global
        // objective, averaged across clients
        let mut mean_loss = 0.0;
        for s in &self.states {
            mean_loss += self.task.global_loss(&s.pair)?;
        }
        mean_loss /= n as f64;

        let mean_pair = self.mean_pair();
        let g = self.task.global_grad(&mean_pair)?;
        let grad_a_norm_sq = g.block_norm_sq(Block::A);
        let grad_b_norm_sq = g.block_norm_sq(Block::B);

        let pairs = self.pairs();
        let stack = ParamStack::from_pairs(&pairs);
        let cross = cross_term(&pairs, &AggregationWeights::uniform(n))
            .expect("uniform same-shape pairs");

        let mean_accuracy = match &self.task {
            Task::Logistic(t) => {
                let mut acc = 0.0;
                let mut ok = true;
                for s in &self.states {
                    match t.accuracy(EvalSplit::GlobalHeldOut, &s.pair) {
                        Ok(a) => acc += a,
                        Err(_) => {
                            ok = false;
                            break;
                        }
                    }
                }
                ok.then(|| acc / n as f64)
            }
            Task::MatFact(_) => None,
        };

        let record = MetricsRecord {
            step,
            phase,
            mean_loss,
            grad_norm_sq: grad_a_norm_sq + grad_b_norm_sq,
            consensus_err_a: stack.consensus_err_a(),
            consensus_err_b: stack.consensus_err_b(),
            cross_term_norm: cross.frobenius_norm(),
            mean_accuracy,
            grad_a_norm_sq,
            grad_b_norm_sq,
            eta: if step == 0 { 0.0 } else { self.eta_current },
        };
        if !record.all_finite() {
            return Err(Error::NonFinite(format!(
                "metrics after round {} (loss {})",
                step, record.mean_loss
            )));
        }
        Ok(record)
    }
}

/// A completed run: the init record, the per-round trace, and timing.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub init: MetricsRecord,
    pub trace: Vec<MetricsRecord>,
    pub seed: u64,
    pub wall_time_s: f64,
}

impl RunOutput {
    /// The last recorded state (init when the trace is empty).
    pub fn final_record(&self) -> &MetricsRecord {
        self.trace.last().unwrap_or(&self.init)
    }
}

/// Execute the configured number of rounds and record metrics on the
/// configured cadence (the final round is always recorded). Deterministic
/// in `(config, seed)`.
pub fn run_experiment(cfg: &ExperimentConfig, seed: u64) -> Result<RunOutput> {
    let started = std::time::Instant::now();
    let mut fed = Federation::new(cfg, seed)?;
    let rounds = cfg.run.rounds.unwrap_or(150);
    let eval_every = cfg.run.eval_every.unwrap_or(1).max(1);

    let init = fed.compute_metrics(0)?;
    let mut trace = Vec::new();
    for t in 0..rounds {
        fed.step_round().map_err(|e| match e {
            Error::NonFinite(msg) => Error::NonFinite(format!("round {t}: {msg}")),
            other => other,
        })?;
        if (t + 1) % eval_every == 0 || t + 1 == rounds {
            trace.push(fed.compute_metrics(t + 1)?);
        }
    }

    Ok(RunOutput {
        init,
        trace,
        seed,
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}
