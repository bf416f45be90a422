//! Per-block optimizers.
//!
//! Plain SGD is the theory-mode optimizer: with the step size from
//! [`theory_step_size`] each block update is a textbook descent step and the
//! per-step inequality checked by the engine holds exactly. Adam with
//! decoupled weight decay is the behavioral optimizer. Both touch only the
//! active block; the frozen block's parameters and moments come back
//! bit-identical.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::lora::{Block, LoRAPair};
use crate::tasks::{GradPair, MatFactTask};

#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct SgdConfig {
    pub eta: f64,
    /// Multiplier under the `η ≤ 1/L` rule used by [`theory_step_size`].
    pub safety: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            eta: 1e-2,
            safety: 0.9,
        }
    }
}

#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct AdamConfig {
    pub eta: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            eta: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// First/second moment estimates per block, with per-block step counters
/// for bias correction. Moments are strictly client-local and never mixed.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockMoments {
    pub m_a: Matrix,
    pub v_a: Matrix,
    pub m_b: Matrix,
    pub v_b: Matrix,
    pub step_count_a: u64,
    pub step_count_b: u64,
}

impl BlockMoments {
    pub fn zeros_like(pair: &LoRAPair) -> Self {
        let (ar, ac) = pair.a.shape();
        let (br, bc) = pair.b.shape();
        BlockMoments {
            m_a: Matrix::zeros(ar, ac),
            v_a: Matrix::zeros(ar, ac),
            m_b: Matrix::zeros(br, bc),
            v_b: Matrix::zeros(br, bc),
            step_count_a: 0,
            step_count_b: 0,
        }
    }

    /// Drop one block's moments back to zero (the optional behavior at a
    /// phase switch).
    pub fn reset_block(&mut self, which: Block) {
        match which {
            Block::A => {
                self.m_a = Matrix::zeros(self.m_a.rows(), self.m_a.cols());
                self.v_a = Matrix::zeros(self.v_a.rows(), self.v_a.cols());
                self.step_count_a = 0;
            }
            Block::B => {
                self.m_b = Matrix::zeros(self.m_b.rows(), self.m_b.cols());
                self.v_b = Matrix::zeros(self.v_b.rows(), self.v_b.cols());
                self.step_count_b = 0;
            }
        }
    }
}

fn check_finite(g: &Matrix, what: &str) -> Result<()> {
    if !g.all_finite() {
        return Err(Error::NonFinite(what.into()));
    }
    Ok(())
}

/// One SGD step on the active block; the other block is returned untouched.
pub fn sgd_step(
    pair: &LoRAPair,
    grads: &GradPair,
    active: Block,
    cfg: &SgdConfig,
) -> Result<LoRAPair> {
    let g = grads.block(active);
    check_finite(g, "gradient")?;
    let mut next = pair.clone();
    let block = next.block_mut(active);
    *block = block.sub(&g.scale(cfg.eta));
    check_finite(next.block(active), "updated parameters")?;
    Ok(next)
}

/// One bias-corrected Adam step with decoupled weight decay on the active
/// block. The inactive block's parameters and moments are untouched and the
/// active block's step counter advances.
pub fn adam_step(
    pair: &LoRAPair,
    grads: &GradPair,
    active: Block,
    cfg: &AdamConfig,
    moments: &BlockMoments,
) -> Result<(LoRAPair, BlockMoments)> {
    let g = grads.block(active);
    check_finite(g, "gradient")?;
    let mut next = pair.clone();
    let mut next_moments = moments.clone();

    let (m, v, count) = match active {
        Block::A => (
            &mut next_moments.m_a,
            &mut next_moments.v_a,
            &mut next_moments.step_count_a,
        ),
        Block::B => (
            &mut next_moments.m_b,
            &mut next_moments.v_b,
            &mut next_moments.step_count_b,
        ),
    };
    *count += 1;
    let t = *count as i32;
    let bias1 = 1.0 - cfg.beta1.powi(t);
    let bias2 = 1.0 - cfg.beta2.powi(t);

    let block = next.block_mut(active);
    let mut out = Vec::with_capacity(g.entries().len());
    for ((&theta, &grad), (m_e, v_e)) in block
        .entries()
        .iter()
        .zip(g.entries())
        .zip(m.entries().iter().zip(v.entries()))
    {
        let m_new = cfg.beta1 * m_e + (1.0 - cfg.beta1) * grad;
        let v_new = cfg.beta2 * v_e + (1.0 - cfg.beta2) * grad * grad;
        let m_hat = m_new / bias1;
        let v_hat = v_new / bias2;
        let step = cfg.eta * m_hat / (v_hat.sqrt() + cfg.epsilon);
        out.push((theta - step - cfg.eta * cfg.weight_decay * theta, m_new, v_new));
    }
    let (rows, cols) = block.shape();
    *block = Matrix::new(rows, cols, out.iter().map(|x| x.0).collect());
    *m = Matrix::new(rows, cols, out.iter().map(|x| x.1).collect());
    *v = Matrix::new(rows, cols, out.iter().map(|x| x.2).collect());
    check_finite(next.block(active), "updated parameters")?;

    Ok((next, next_moments))
}

/// Floor on the smoothness constant, guarding the zero-init degeneracy.
const SMOOTHNESS_FLOOR: f64 = 1e-12;
/// Hard cap on the automatic step size.
const STEP_SIZE_CAP: f64 = 1.0;

/// The `η ≤ 1/L` step size for the matrix-factorization task, evaluated at
/// the current pair: `safety / max(L_a, L_b)`, floored and capped.
pub fn theory_step_size(pair: &LoRAPair, task: &MatFactTask, safety: f64) -> Result<f64> {
    assert!(safety > 0.0 && safety <= 1.0, "safety must lie in (0, 1]");
    let (l_a, l_b) = task.block_smoothness(pair)?;
    Ok((safety / l_a.max(l_b).max(SMOOTHNESS_FLOOR)).min(STEP_SIZE_CAP))
}
