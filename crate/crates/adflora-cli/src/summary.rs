//! The versioned `summary.json` document written next to trace files.

use adflora::config::ExperimentConfig;
use adflora::engine::RunOutput;
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub run_id: String,
    pub seeds: Vec<u64>,
    /// The resolved config echo.
    pub config: ExperimentConfig,
    pub per_seed: Vec<SeedSummary>,
    pub aggregate: Aggregate,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub wall_time_s: f64,
    pub rounds_recorded: usize,
    pub final_metrics: FinalMetrics,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FinalMetrics {
    pub step: usize,
    pub mean_loss: f64,
    pub grad_norm_sq: f64,
    pub consensus_err_a: f64,
    pub consensus_err_b: f64,
    pub cross_term_norm: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_accuracy: Option<f64>,
}

/// Mean and (population) standard deviation across seeds of each final
/// metric.
#[derive(Debug, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean_loss: Stat,
    pub grad_norm_sq: Stat,
    pub consensus_err_a: Stat,
    pub consensus_err_b: Stat,
    pub cross_term_norm: Stat,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_accuracy: Option<Stat>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

pub fn stat_of(values: &[f64]) -> Stat {
    // bit-identical inputs (e.g. duplicated seeds) aggregate exactly
    if values.windows(2).all(|w| w[0].to_bits() == w[1].to_bits()) {
        return Stat {
            mean: values[0],
            std: 0.0,
        };
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Stat {
        mean,
        std: var.sqrt(),
    }
}

impl RunSummary {
    pub fn build(cfg: &ExperimentConfig, run_id: &str, outputs: &[RunOutput]) -> RunSummary {
        let per_seed: Vec<SeedSummary> = outputs
            .iter()
            .map(|o| {
                let f = o.final_record();
                SeedSummary {
                    seed: o.seed,
                    wall_time_s: o.wall_time_s,
                    rounds_recorded: o.trace.len(),
                    final_metrics: FinalMetrics {
                        step: f.step,
                        mean_loss: f.mean_loss,
                        grad_norm_sq: f.grad_norm_sq,
                        consensus_err_a: f.consensus_err_a,
                        consensus_err_b: f.consensus_err_b,
                        cross_term_norm: f.cross_term_norm,
                        mean_accuracy: f.mean_accuracy,
                    },
                }
            })
            .collect();

        let pick = |f: &dyn Fn(&FinalMetrics) -> f64| -> Stat {
            stat_of(
                &per_seed
                    .iter()
                    .map(|s| f(&s.final_metrics))
                    .collect::<Vec<_>>(),
            )
        };
        let accuracies: Option<Vec<f64>> = per_seed
            .iter()
            .map(|s| s.final_metrics.mean_accuracy)
            .collect();
        let aggregate = Aggregate {
            mean_loss: pick(&|m| m.mean_loss),
            grad_norm_sq: pick(&|m| m.grad_norm_sq),
            consensus_err_a: pick(&|m| m.consensus_err_a),
            consensus_err_b: pick(&|m| m.consensus_err_b),
            cross_term_norm: pick(&|m| m.cross_term_norm),
            mean_accuracy: accuracies.map(|a| stat_of(&a)),
        };

        RunSummary {
            schema_version: SCHEMA_VERSION,
            run_id: run_id.to_string(),
            seeds: outputs.iter().map(|o| o.seed).collect(),
            config: cfg.clone(),
            per_seed,
            aggregate,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stat_of_duplicates_has_zero_std() {
        let s = stat_of(&[0.7, 0.7, 0.7]);
        assert_eq!(s.mean, 0.7);
        assert_eq!(s.std, 0.0);
    }

    #[test]
    fn stat_of_simple_pair() {
        let s = stat_of(&[1.0, 3.0]);
        assert_eq!(s.mean, 2.0);
        assert_eq!(s.std, 1.0);
    }
}
