//! Softmax classification over label-skewed client shards.
//!
//! Features are class-conditional Gaussians with means sitting on scaled
//! coordinate axes, so the problem is separable enough that accuracy
//! differences between methods are informative within a short run. Each
//! client's class mix follows its row of the partition spec by
//! largest-remainder rounding; a fixed fraction of every shard is held out
//! at generation time for evaluation.

use super::GradPair;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::lora::LoRAPair;
use crate::rng;
use rand::seq::SliceRandom;
use rand::Rng;

/// The 10-client binary skew used by the experiment defaults:
/// three clients at `[0.9, 0.1]`, three at `[0.1, 0.9]`, four balanced.
pub fn skewed_binary_partition() -> Vec<Vec<f64>> {
    let mut spec = Vec::with_capacity(10);
    for _ in 0..3 {
        spec.push(vec![0.9, 0.1]);
    }
    for _ in 0..3 {
        spec.push(vec![0.1, 0.9]);
    }
    for _ in 0..4 {
        spec.push(vec![0.5, 0.5]);
    }
    spec
}

/// The 10-client three-class skew: four clients at `[0.9, 0.05, 0.05]`,
/// three at `[0.05, 0.9, 0.05]`, three at `[0.05, 0.05, 0.9]`.
pub fn skewed_three_class_partition() -> Vec<Vec<f64>> {
    let mut spec = Vec::with_capacity(10);
    for _ in 0..4 {
        spec.push(vec![0.9, 0.05, 0.05]);
    }
    for _ in 0..3 {
        spec.push(vec![0.05, 0.9, 0.05]);
    }
    for _ in 0..3 {
        spec.push(vec![0.05, 0.05, 0.9]);
    }
    spec
}

/// Largest-remainder label counts for one shard, expanded to a label list
/// and shuffled.
pub fn partition_labels(
    n_clients: usize,
    proportions: &[Vec<f64>],
    samples_per_client: usize,
    rng: &mut impl Rng,
) -> Result<Vec<Vec<usize>>> {
    if proportions.len() != n_clients {
        return Err(Error::Precondition(format!(
            "partition spec has {} rows for {n_clients} clients",
            proportions.len()
        )));
    }
    let n_classes = proportions.first().map(|p| p.len()).unwrap_or(0);
    let mut out = Vec::with_capacity(n_clients);
    for (client, p) in proportions.iter().enumerate() {
        if p.len() != n_classes || n_classes < 1 {
            return Err(Error::Precondition(format!(
                "partition row {client} has {} entries, expected {n_classes}",
                p.len()
            )));
        }
        let sum: f64 = p.iter().sum();
        if p.iter().any(|&x| !(0.0..=1.0).contains(&x)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Precondition(format!(
                "partition row {client} is not a probability vector (sum {sum})"
            )));
        }
        // largest-remainder rounding
        let exact: Vec<f64> = p.iter().map(|x| x * samples_per_client as f64).collect();
        let mut counts: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
        let mut assigned: usize = counts.iter().sum();
        let mut order: Vec<usize> = (0..n_classes).collect();
        order.sort_by(|&i, &j| {
            let ri = exact[i] - exact[i].floor();
            let rj = exact[j] - exact[j].floor();
            rj.partial_cmp(&ri).unwrap().then(i.cmp(&j))
        });
        let mut cursor = 0;
        while assigned < samples_per_client {
            counts[order[cursor % n_classes]] += 1;
            assigned += 1;
            cursor += 1;
        }
        let mut labels = Vec::with_capacity(samples_per_client);
        for (class, &count) in counts.iter().enumerate() {
            labels.extend(std::iter::repeat(class).take(count));
        }
        labels.shuffle(rng);
        out.push(labels);
    }
    Ok(out)
}

/// Generation recipe for a [`LogisticTask`].
#[derive(Debug, Clone)]
pub struct LogisticParams {
    pub n_features: usize,
    pub n_classes: usize,
    pub samples_per_client: usize,
    /// Fraction of each shard held out for evaluation, fixed at generation.
    pub holdout_fraction: f64,
    /// Distance of class means from the origin along coordinate axes.
    pub separation: f64,
    /// Per-client class proportions; one row per client.
    pub partition: Vec<Vec<f64>>,
    /// Entry scale of the frozen base weights.
    pub base_scale: f64,
}

impl Default for LogisticParams {
    fn default() -> Self {
        LogisticParams {
            n_features: 8,
            n_classes: 2,
            samples_per_client: 100,
            holdout_fraction: 0.2,
            separation: 2.0,
            partition: skewed_binary_partition(),
            base_scale: 0.1,
        }
    }
}

/// One client's data, already split.
#[derive(Debug, Clone)]
pub struct ClientShard {
    pub train_x: Matrix,
    pub train_y: Vec<usize>,
    pub eval_x: Option<Matrix>,
    pub eval_y: Vec<usize>,
}

/// Softmax classifier task: logits are `x·(W₀ + ΔW)` with `W₀` frozen.
#[derive(Debug, Clone)]
pub struct LogisticTask {
    base: Matrix,
    clients: Vec<ClientShard>,
    n_classes: usize,
}

/// Which samples an accuracy evaluation runs over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalSplit {
    ClientTrain(usize),
    ClientHeldOut(usize),
    /// Union of every client's held-out split.
    GlobalHeldOut,
}

impl LogisticTask {
    pub fn generate(params: &LogisticParams, rng: &mut impl Rng) -> Result<Self> {
        let n_clients = params.partition.len();
        if n_clients == 0 {
            return Err(Error::Precondition("logistic task needs clients".into()));
        }
        if params.n_classes < 2 {
            return Err(Error::Precondition("need at least two classes".into()));
        }
        if params.n_classes > params.n_features {
            return Err(Error::Precondition(format!(
                "class means need one axis each: {} classes > {} features",
                params.n_classes, params.n_features
            )));
        }
        if !(0.0..1.0).contains(&params.holdout_fraction) {
            return Err(Error::Precondition(
                "holdout fraction must lie in [0, 1)".into(),
            ));
        }
        let labels = partition_labels(
            n_clients,
            &params.partition,
            params.samples_per_client,
            rng,
        )?;
        if labels
            .iter()
            .flat_map(|l| l.iter())
            .any(|&y| y >= params.n_classes)
        {
            return Err(Error::Precondition(
                "partition spec names more classes than the task".into(),
            ));
        }

        let base = Matrix::from_fn(params.n_features, params.n_classes, |_, _| {
            params.base_scale * rng::normal(rng)
        });

        let mut clients = Vec::with_capacity(n_clients);
        for shard_labels in labels {
            let total = shard_labels.len();
            if total == 0 {
                return Err(Error::Precondition("empty client shard".into()));
            }
            let features = Matrix::from_fn(total, params.n_features, |i, j| {
                let mean = if j == shard_labels[i] {
                    params.separation
                } else {
                    0.0
                };
                mean + rng::normal(rng)
            });
            let holdout = ((total as f64) * params.holdout_fraction).round() as usize;
            let holdout = holdout.min(total.saturating_sub(1));
            let train = total - holdout;
            let row = |src: &Matrix, i: usize, j: usize| src.get(i, j);
            let train_x = Matrix::from_fn(train, params.n_features, |i, j| row(&features, i, j));
            let train_y = shard_labels[..train].to_vec();
            let (eval_x, eval_y) = if holdout > 0 {
                (
                    Some(Matrix::from_fn(holdout, params.n_features, |i, j| {
                        row(&features, train + i, j)
                    })),
                    shard_labels[train..].to_vec(),
                )
            } else {
                (None, Vec::new())
            };
            clients.push(ClientShard {
                train_x,
                train_y,
                eval_x,
                eval_y,
            });
        }

        Ok(LogisticTask {
            base,
            clients,
            n_classes: params.n_classes,
        })
    }

    pub fn from_parts(base: Matrix, clients: Vec<ClientShard>, n_classes: usize) -> Self {
        LogisticTask {
            base,
            clients,
            n_classes,
        }
    }

    pub fn n_clients(&self) -> usize {
        self.clients.len()
    }

    pub fn n_features(&self) -> usize {
        self.base.rows()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn base(&self) -> &Matrix {
        &self.base
    }

    pub fn client(&self, i: usize) -> &ClientShard {
        &self.clients[i]
    }

    fn effective_weights(&self, pair: &LoRAPair) -> Matrix {
        assert_eq!(
            pair.out_shape(),
            self.base.shape(),
            "pair update shape {:?} does not match weight shape {:?}",
            pair.out_shape(),
            self.base.shape()
        );
        self.base.add(&pair.delta_w())
    }

    /// Mean cross-entropy and its exact gradient over one client's full
    /// training shard.
    pub fn loss_grad(&self, client: usize, pair: &LoRAPair) -> Result<(f64, GradPair)> {
        let shard = &self.clients[client];
        self.loss_grad_on(&shard.train_x, &shard.train_y, pair)
    }

    /// Same, restricted to the given sample indices (minibatch mode).
    pub fn loss_grad_minibatch(
        &self,
        client: usize,
        indices: &[usize],
        pair: &LoRAPair,
    ) -> Result<(f64, GradPair)> {
        let shard = &self.clients[client];
        if indices.is_empty() {
            return Err(Error::Precondition("empty minibatch".into()));
        }
        let x = Matrix::from_fn(indices.len(), shard.train_x.cols(), |i, j| {
            shard.train_x.get(indices[i], j)
        });
        let y: Vec<usize> = indices.iter().map(|&i| shard.train_y[i]).collect();
        self.loss_grad_on(&x, &y, pair)
    }

    fn loss_grad_on(&self, x: &Matrix, y: &[usize], pair: &LoRAPair) -> Result<(f64, GradPair)> {
        if y.is_empty() {
            return Err(Error::Precondition("empty shard".into()));
        }
        let batch = y.len();
        let weights = self.effective_weights(pair);
        let logits = x.mat_mul(&weights);

        // stable softmax cross-entropy; dL/dlogits = (softmax - onehot)/batch
        let mut loss = 0.0;
        let mut dlogits = Matrix::zeros(batch, self.n_classes);
        for i in 0..batch {
            let row_max = (0..self.n_classes)
                .map(|c| logits.get(i, c))
                .fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for c in 0..self.n_classes {
                z += (logits.get(i, c) - row_max).exp();
            }
            let log_z = z.ln() + row_max;
            loss += log_z - logits.get(i, y[i]);
            for c in 0..self.n_classes {
                let p = (logits.get(i, c) - log_z).exp();
                let indicator = if c == y[i] { 1.0 } else { 0.0 };
                dlogits.set(i, c, (p - indicator) / batch as f64);
            }
        }
        loss /= batch as f64;

        // chain rule through delta_w = s·b·a
        let d_weights = x.transpose().mat_mul(&dlogits);
        let s = pair.scaling();
        let grad = GradPair {
            g_a: pair.b.transpose().mat_mul(&d_weights).scale(s),
            g_b: d_weights.mat_mul(&pair.a.transpose()).scale(s),
        };
        Ok((loss, grad))
    }

    /// Fraction of argmax-correct predictions on a split. Ties resolve to
    /// the lowest class index, deterministically.
    pub fn accuracy(&self, split: EvalSplit, pair: &LoRAPair) -> Result<f64> {
        let weights = self.effective_weights(pair);
        let mut correct = 0usize;
        let mut total = 0usize;
        let mut score = |x: &Matrix, y: &[usize]| {
            let logits = x.mat_mul(&weights);
            for i in 0..y.len() {
                let mut best = 0;
                for c in 1..self.n_classes {
                    if logits.get(i, c) > logits.get(i, best) {
                        best = c;
                    }
                }
                if best == y[i] {
                    correct += 1;
                }
                total += 1;
            }
        };
        match split {
            EvalSplit::ClientTrain(i) => {
                let shard = &self.clients[i];
                score(&shard.train_x, &shard.train_y);
            }
            EvalSplit::ClientHeldOut(i) => {
                let shard = &self.clients[i];
                if let Some(x) = &shard.eval_x {
                    score(x, &shard.eval_y);
                }
            }
            EvalSplit::GlobalHeldOut => {
                for shard in &self.clients {
                    if let Some(x) = &shard.eval_x {
                        score(x, &shard.eval_y);
                    }
                }
            }
        }
        if total == 0 {
            return Err(Error::Precondition("empty evaluation split".into()));
        }
        Ok(correct as f64 / total as f64)
    }

}
