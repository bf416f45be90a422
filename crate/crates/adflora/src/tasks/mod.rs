//! Desk-scale objectives with exact gradients.
//!
//! Two tasks, two jobs. [`MatFactTask`] fits a low-rank correction to
//! per-client target matrices; its block smoothness constants and global
//! optimum are computable in closed form, which is what the descent and
//! stationarity checks need. [`LogisticTask`] is a softmax classifier over
//! class-skewed client shards and plays the role of the behavioral workload:
//! heterogeneous in exactly the label-skew way the federation protocol cares
//! about, with a held-out split for accuracy.

pub mod dataset_io;
mod logistic;
mod matfact;

pub use logistic::{
    partition_labels, skewed_binary_partition, skewed_three_class_partition, ClientShard,
    EvalSplit, LogisticParams, LogisticTask,
};
pub use matfact::{MatFactParams, MatFactTask};

use crate::linalg::Matrix;
use crate::lora::Block;

/// Gradient of a loss with respect to both factors of a [`crate::lora::LoRAPair`].
#[derive(Debug, Clone)]
pub struct GradPair {
    /// `r × n`, same shape as the pair's `a`.
    pub g_a: Matrix,
    /// `m × r`, same shape as the pair's `b`.
    pub g_b: Matrix,
}

impl GradPair {
    pub fn zeros(r: usize, n: usize, m: usize) -> Self {
        GradPair {
            g_a: Matrix::zeros(r, n),
            g_b: Matrix::zeros(m, r),
        }
    }

    pub fn block(&self, which: Block) -> &Matrix {
        match which {
            Block::A => &self.g_a,
            Block::B => &self.g_b,
        }
    }

    /// `‖g_a‖² + ‖g_b‖²`.
    pub fn norm_sq(&self) -> f64 {
        self.g_a.frobenius_norm().powi(2) + self.g_b.frobenius_norm().powi(2)
    }

    pub fn block_norm_sq(&self, which: Block) -> f64 {
        self.block(which).frobenius_norm().powi(2)
    }

    pub fn is_finite(&self) -> bool {
        self.g_a.entries().iter().all(|x| x.is_finite())
            && self.g_b.entries().iter().all(|x| x.is_finite())
    }
}
