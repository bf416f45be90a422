//! Experiment configuration: a single TOML document, parsed, validated, and
//! echoed back with every default resolved.
//!
//! The grammar is a key-value tree with six tables — `[task]`, `[method]`,
//! `[topology]`, `[optimizer]`, `[run]`, `[lora]` — of which only `[task]`
//! and `[method]` are mandatory (each needs its `kind`). Unknown keys are
//! rejected at parse time with their path; constraint violations are
//! collected and reported all at once. Fields that belong to a different
//! `kind` than the configured one are violations too, so a config never
//! silently carries dead settings.
//!
//! ```
//! use adflora::config::parse_config;
//! let cfg = parse_config(r#"
//!     [task]
//!     kind = "matfact"
//!     [method]
//!     kind = "adf"
//! "#).unwrap();
//! assert_eq!(cfg.run.n_clients, Some(10));
//! assert_eq!(cfg.run.rounds, Some(150));
//! assert_eq!(cfg.run.local_steps, Some(20));
//! assert_eq!(cfg.lora.rank, Some(8));
//! ```

use crate::error::{Error, Result};
use crate::lora::Block;
use crate::tasks::{
    skewed_binary_partition, skewed_three_class_partition, LogisticParams, MatFactParams,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Matfact,
    Logistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    /// Both blocks trained and mixed every round.
    Naive,
    /// One block frozen at init everywhere; the other trained and mixed.
    Ffa,
    /// Alternating blocks, centralized uniform averaging of the active block.
    RoloraCfl,
    /// Alternating blocks, peer mixing of the active block only.
    RoloraDfl,
    /// Alternating blocks, peer mixing of both blocks every round.
    Adf,
}

impl MethodKind {
    pub fn is_alternating(self) -> bool {
        matches!(
            self,
            MethodKind::RoloraCfl | MethodKind::RoloraDfl | MethodKind::Adf
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyKind {
    Complete,
    Identity,
    Ring,
    Gossip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
    /// SGD with the automatic `η ≤ 1/L` step size; matfact only.
    Theory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    /// Every client starts from one broadcast pair (standard init, `b = 0`).
    Shared,
    /// Independent Gaussian draws per client for both blocks, giving
    /// positive initial consensus error on both stacks.
    Heterogeneous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    pub kind: TaskKind,
    // matfact
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rows: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cols: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_rank: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub heterogeneity: Option<f64>,
    // logistic
    #[serde(skip_serializing_if = "Option::is_none")]
    pub features: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classes: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples_per_client: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub holdout_fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub separation: Option<f64>,
    /// `uniform`, `binary_skew`, or `three_class_skew`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub partition_preset: Option<String>,
    /// Explicit per-client class proportions; alternative to the preset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub partition: Option<Vec<Vec<f64>>>,
    // both kinds
    #[serde(skip_serializing_if = "Option::is_none")]
    pub base_scale: Option<f64>,
    /// Fix the dataset independently of the run seed (defaults to deriving
    /// it from each run seed).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodConfig {
    pub kind: MethodKind,
    /// Switching interval T for alternating methods.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<usize>,
    /// Which block FFA freezes (`a` by convention).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ffa_frozen_block: Option<FrozenBlock>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrozenBlock {
    A,
    B,
}

impl From<FrozenBlock> for Block {
    fn from(f: FrozenBlock) -> Block {
        match f {
            FrozenBlock::A => Block::A,
            FrozenBlock::B => Block::B,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct TopologyConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<TopologyKind>,
    /// Per-round encounter probability (gossip only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<OptimizerKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub safety: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight_decay: Option<f64>,
    /// Zero the newly frozen block's Adam moments at each phase switch.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reset_moments_on_switch: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_clients: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rounds: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub local_steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init: Option<InitScheme>,
    /// Minibatch size for logistic runs; absent means full batch.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    /// Record metrics every this many rounds.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval_every: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct LoraConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
}

/// The whole experiment document. After [`parse_config`] every field
/// relevant to the configured kinds is `Some`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: TaskConfig,
    pub method: MethodConfig,
    #[serde(default)]
    pub topology: TopologyConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub lora: LoraConfig,
}

/// Parse, fill defaults, and validate. Violations are collected and
/// reported together, each naming its field path.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Malformed {
        what: "config".into(),
        detail: e.to_string(),
    })?;
    cfg.normalize();
    cfg.validate()?;
    Ok(cfg)
}

/// Parse with `key=value` overrides applied onto the document tree before
/// deserialization. Values are parsed as TOML fragments, falling back to
/// strings, so `run.rounds=10`, `topology.p=0.25`, and `run.seeds=[1,2,3]`
/// all work.
pub fn parse_config_with_overrides(text: &str, overrides: &[String]) -> Result<ExperimentConfig> {
    let mut doc: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Malformed {
        what: "config".into(),
        detail: e.to_string(),
    })?;
    for spec in overrides {
        let (path, raw) = spec.split_once('=').ok_or_else(|| Error::Malformed {
            what: "override".into(),
            detail: format!("expected key=value, got `{spec}`"),
        })?;
        let value = parse_override_value(raw);
        insert_at_path(&mut doc, path.trim(), value)?;
    }
    let rendered = toml::to_string(&doc).map_err(|e| Error::Malformed {
        what: "config".into(),
        detail: e.to_string(),
    })?;
    parse_config(&rendered)
}

fn parse_override_value(raw: &str) -> toml::Value {
    let fragment = format!("v = {}", raw.trim());
    if let Ok(table) = fragment.parse::<toml::Table>() {
        if let Some(v) = table.get("v") {
            return v.clone();
        }
    }
    toml::Value::String(raw.trim().to_string())
}

fn insert_at_path(doc: &mut toml::Table, path: &str, value: toml::Value) -> Result<()> {
    let parts: Vec<&str> = path.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Malformed {
            what: "override".into(),
            detail: format!("bad key path `{path}`"),
        });
    }
    let mut table = doc;
    for part in &parts[..parts.len() - 1] {
        table = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::Malformed {
                what: "override".into(),
                detail: format!("`{part}` in `{path}` is not a table"),
            })?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

impl ExperimentConfig {
    /// Fill in every default relevant to the configured kinds. Idempotent.
    pub fn normalize(&mut self) {
        let t = &mut self.task;
        match t.kind {
            TaskKind::Matfact => {
                t.rows.get_or_insert(8);
                t.cols.get_or_insert(8);
                t.heterogeneity.get_or_insert(1.0);
                t.base_scale.get_or_insert(1.0);
            }
            TaskKind::Logistic => {
                t.features.get_or_insert(8);
                t.classes.get_or_insert(2);
                t.samples_per_client.get_or_insert(100);
                t.holdout_fraction.get_or_insert(0.2);
                t.separation.get_or_insert(2.0);
                t.base_scale.get_or_insert(0.1);
                if t.partition.is_none() {
                    t.partition_preset.get_or_insert_with(|| "uniform".into());
                }
            }
        }

        if self.method.kind.is_alternating() {
            self.method.t.get_or_insert(5);
        }
        if self.method.kind == MethodKind::Ffa {
            self.method.ffa_frozen_block.get_or_insert(FrozenBlock::A);
        }

        self.topology.kind.get_or_insert(TopologyKind::Complete);
        if self.topology.kind == Some(TopologyKind::Gossip) {
            self.topology.p.get_or_insert(0.1);
        }

        let o = &mut self.optimizer;
        o.kind.get_or_insert(OptimizerKind::Adam);
        match o.kind.unwrap() {
            OptimizerKind::Sgd => {
                o.eta.get_or_insert(1e-3);
            }
            OptimizerKind::Adam => {
                o.eta.get_or_insert(1e-3);
                o.beta1.get_or_insert(0.9);
                o.beta2.get_or_insert(0.999);
                o.epsilon.get_or_insert(1e-8);
                o.weight_decay.get_or_insert(0.01);
            }
            OptimizerKind::Theory => {
                o.safety.get_or_insert(0.9);
            }
        }
        if self.method.kind.is_alternating() && o.kind == Some(OptimizerKind::Adam) {
            o.reset_moments_on_switch.get_or_insert(false);
        }

        let task_kind = self.task.kind;
        let r = &mut self.run;
        r.n_clients.get_or_insert(10);
        r.rounds.get_or_insert(150);
        r.local_steps.get_or_insert(20);
        r.seeds.get_or_insert_with(|| vec![0]);
        r.init.get_or_insert(InitScheme::Shared);
        r.eval_every.get_or_insert(match task_kind {
            TaskKind::Matfact => 1,
            TaskKind::Logistic => 5,
        });
        r.output_dir.get_or_insert_with(|| "runs".into());

        self.lora.rank.get_or_insert(8);
        self.lora.alpha.get_or_insert(16.0);
    }

    /// Check every constraint, reporting all violations at once.
    pub fn validate(&self) -> Result<()> {
        let mut v: Vec<String> = Vec::new();
        let mut flag = |cond: bool, msg: String| {
            if cond {
                v.push(msg);
            }
        };

        let n_clients = self.run.n_clients.unwrap_or(10);
        flag(n_clients == 0, "run.n_clients: must be at least 1".into());

        // task
        let t = &self.task;
        match t.kind {
            TaskKind::Matfact => {
                for (name, set) in [
                    ("features", t.features.is_some()),
                    ("classes", t.classes.is_some()),
                    ("samples_per_client", t.samples_per_client.is_some()),
                    ("holdout_fraction", t.holdout_fraction.is_some()),
                    ("separation", t.separation.is_some()),
                    ("partition_preset", t.partition_preset.is_some()),
                    ("partition", t.partition.is_some()),
                ] {
                    flag(
                        set,
                        format!("task.{name}: only meaningful for kind = logistic"),
                    );
                }
                let rows = t.rows.unwrap_or(8);
                let cols = t.cols.unwrap_or(8);
                flag(
                    rows == 0 || cols == 0,
                    "task.rows/cols: must be positive".into(),
                );
                if let Some(k) = t.target_rank {
                    flag(
                        k == 0 || k > rows.min(cols),
                        format!("task.target_rank: {k} outside 1..={}", rows.min(cols)),
                    );
                }
                flag(
                    t.heterogeneity.unwrap_or(1.0) < 0.0,
                    "task.heterogeneity: must be nonnegative".into(),
                );
            }
            TaskKind::Logistic => {
                for (name, set) in [
                    ("rows", t.rows.is_some()),
                    ("cols", t.cols.is_some()),
                    ("target_rank", t.target_rank.is_some()),
                    ("heterogeneity", t.heterogeneity.is_some()),
                ] {
                    flag(
                        set,
                        format!("task.{name}: only meaningful for kind = matfact"),
                    );
                }
                let features = t.features.unwrap_or(8);
                let classes = t.classes.unwrap_or(2);
                flag(classes < 2, "task.classes: need at least 2".into());
                flag(
                    features < classes,
                    format!("task.features: {features} < classes {classes} (class means need one axis each)"),
                );
                flag(
                    t.samples_per_client.unwrap_or(100) == 0,
                    "task.samples_per_client: must be positive".into(),
                );
                let h = t.holdout_fraction.unwrap_or(0.2);
                flag(
                    !(0.0..1.0).contains(&h),
                    format!("task.holdout_fraction: {h} outside [0, 1)"),
                );
                if let Some(preset) = &t.partition_preset {
                    flag(
                        !matches!(
                            preset.as_str(),
                            "uniform" | "binary_skew" | "three_class_skew"
                        ),
                        format!("task.partition_preset: unknown preset `{preset}` (expected uniform | binary_skew | three_class_skew)"),
                    );
                    flag(
                        t.partition.is_some(),
                        "task.partition: give either a preset or explicit rows, not both".into(),
                    );
                    if preset == "binary_skew" || preset == "three_class_skew" {
                        flag(
                            n_clients != 10,
                            format!("task.partition_preset: `{preset}` is defined for 10 clients, run.n_clients is {n_clients}"),
                        );
                        let want = if preset == "binary_skew" { 2 } else { 3 };
                        flag(
                            classes != want,
                            format!("task.partition_preset: `{preset}` needs {want} classes, task.classes is {classes}"),
                        );
                    }
                }
                if let Some(rows) = &t.partition {
                    flag(
                        rows.len() != n_clients,
                        format!(
                            "task.partition: {} rows for {n_clients} clients",
                            rows.len()
                        ),
                    );
                    for (i, row) in rows.iter().enumerate() {
                        let sum: f64 = row.iter().sum();
                        flag(
                            row.len() != classes,
                            format!(
                                "task.partition[{i}]: {} entries for {classes} classes",
                                row.len()
                            ),
                        );
                        flag(
                            row.iter().any(|&x| !(0.0..=1.0).contains(&x))
                                || (sum - 1.0).abs() > 1e-9,
                            format!("task.partition[{i}]: not a probability vector"),
                        );
                    }
                }
            }
        }
        if let Some(s) = t.base_scale {
            flag(s < 0.0, "task.base_scale: must be nonnegative".into());
        }

        // lora against the task's update shape
        let rank = self.lora.rank.unwrap_or(8);
        let alpha = self.lora.alpha.unwrap_or(16.0);
        flag(rank == 0, "lora.rank: must be at least 1".into());
        flag(alpha <= 0.0, "lora.alpha: must be positive".into());
        let min_dim = match t.kind {
            TaskKind::Matfact => t.rows.unwrap_or(8).min(t.cols.unwrap_or(8)),
            TaskKind::Logistic => t.features.unwrap_or(8).min(t.classes.unwrap_or(2)),
        };
        flag(
            rank > min_dim && rank > 0 && min_dim > 0,
            format!("lora.rank: {rank} exceeds the update's min dimension {min_dim}"),
        );

        // method
        let m = &self.method;
        if m.kind.is_alternating() {
            flag(
                m.t == Some(0),
                "method.t: alternating methods need an interval of at least 1".into(),
            );
        } else {
            flag(
                m.t.is_some(),
                "method.t: only meaningful for alternating methods".into(),
            );
        }
        flag(
            m.ffa_frozen_block.is_some() && m.kind != MethodKind::Ffa,
            "method.ffa_frozen_block: only meaningful for kind = ffa".into(),
        );

        // topology
        let topo = self.topology.kind.unwrap_or(TopologyKind::Complete);
        match topo {
            TopologyKind::Gossip => {
                let p = self.topology.p.unwrap_or(0.1);
                flag(
                    !(0.0..=1.0).contains(&p),
                    format!("topology.p: {p} outside [0, 1]"),
                );
            }
            _ => {
                flag(
                    self.topology.p.is_some(),
                    "topology.p: only meaningful for kind = gossip".into(),
                );
            }
        }
        flag(
            topo == TopologyKind::Identity && n_clients < 2,
            "topology.kind: identity needs at least 2 clients".into(),
        );
        flag(
            topo == TopologyKind::Ring && n_clients < 3,
            "topology.kind: ring needs at least 3 clients".into(),
        );

        // optimizer
        let o = &self.optimizer;
        let okind = o.kind.unwrap_or(OptimizerKind::Adam);
        if let Some(eta) = o.eta {
            flag(eta <= 0.0, "optimizer.eta: must be positive".into());
        }
        if let Some(s) = o.safety {
            flag(
                !(s > 0.0 && s <= 1.0),
                format!("optimizer.safety: {s} outside (0, 1]"),
            );
        }
        for (name, val) in [("beta1", o.beta1), ("beta2", o.beta2)] {
            if let Some(x) = val {
                flag(
                    !(0.0..1.0).contains(&x),
                    format!("optimizer.{name}: {x} outside [0, 1)"),
                );
            }
        }
        if let Some(e) = o.epsilon {
            flag(e <= 0.0, "optimizer.epsilon: must be positive".into());
        }
        match okind {
            OptimizerKind::Theory => {
                flag(
                    t.kind != TaskKind::Matfact,
                    "optimizer.kind: theory mode requires task.kind = matfact".into(),
                );
                flag(
                    self.run.local_steps.unwrap_or(20) != 1,
                    "run.local_steps: theory mode requires exactly 1 local step".into(),
                );
                flag(
                    o.eta.is_some(),
                    "optimizer.eta: theory mode derives the step size; drop eta or use kind = sgd"
                        .into(),
                );
                for (name, set) in [
                    ("beta1", o.beta1.is_some()),
                    ("beta2", o.beta2.is_some()),
                    ("epsilon", o.epsilon.is_some()),
                    ("weight_decay", o.weight_decay.is_some()),
                ] {
                    flag(
                        set,
                        format!("optimizer.{name}: only meaningful for kind = adam"),
                    );
                }
            }
            OptimizerKind::Sgd => {
                for (name, set) in [
                    ("beta1", o.beta1.is_some()),
                    ("beta2", o.beta2.is_some()),
                    ("epsilon", o.epsilon.is_some()),
                    ("weight_decay", o.weight_decay.is_some()),
                    ("safety", o.safety.is_some()),
                    ("reset_moments_on_switch", o.reset_moments_on_switch.is_some()),
                ] {
                    flag(
                        set,
                        format!("optimizer.{name}: only meaningful for kind = adam/theory"),
                    );
                }
            }
            OptimizerKind::Adam => {
                flag(
                    o.safety.is_some(),
                    "optimizer.safety: only meaningful for kind = theory".into(),
                );
            }
        }

        // run
        let r = &self.run;
        flag(
            r.seeds.as_ref().map(|s| s.is_empty()).unwrap_or(false),
            "run.seeds: need at least one seed".into(),
        );
        flag(
            r.eval_every == Some(0),
            "run.eval_every: must be at least 1".into(),
        );
        if let Some(b) = r.batch_size {
            flag(b == 0, "run.batch_size: must be positive".into());
            flag(
                t.kind != TaskKind::Logistic,
                "run.batch_size: minibatches only apply to the logistic task".into(),
            );
        }

        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(v))
        }
    }

    /// Serialize the resolved document back to TOML.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("resolved config always serializes")
    }

    /// Resolved matfact generation parameters. Panics if the task kind is
    /// not matfact (validation precedes use).
    pub fn matfact_params(&self) -> MatFactParams {
        assert_eq!(self.task.kind, TaskKind::Matfact);
        MatFactParams {
            m: self.task.rows.unwrap_or(8),
            n: self.task.cols.unwrap_or(8),
            n_clients: self.run.n_clients.unwrap_or(10),
            target_rank: self.task.target_rank,
            heterogeneity: self.task.heterogeneity.unwrap_or(1.0),
            base_scale: self.task.base_scale.unwrap_or(1.0),
        }
    }

    /// Resolved logistic generation parameters.
    pub fn logistic_params(&self) -> LogisticParams {
        assert_eq!(self.task.kind, TaskKind::Logistic);
        let n_clients = self.run.n_clients.unwrap_or(10);
        let classes = self.task.classes.unwrap_or(2);
        let partition = if let Some(rows) = &self.task.partition {
            rows.clone()
        } else {
            match self.task.partition_preset.as_deref() {
                Some("binary_skew") => skewed_binary_partition(),
                Some("three_class_skew") => skewed_three_class_partition(),
                _ => vec![vec![1.0 / classes as f64; classes]; n_clients],
            }
        };
        LogisticParams {
            n_features: self.task.features.unwrap_or(8),
            n_classes: classes,
            samples_per_client: self.task.samples_per_client.unwrap_or(100),
            holdout_fraction: self.task.holdout_fraction.unwrap_or(0.2),
            separation: self.task.separation.unwrap_or(2.0),
            partition,
            base_scale: self.task.base_scale.unwrap_or(0.1),
        }
    }

    /// Dataset seed for one run seed: explicit `task.seed` if set, otherwise
    /// the run seed itself.
    pub fn task_seed(&self, run_seed: u64) -> u64 {
        self.task.seed.unwrap_or(run_seed)
    }
}
