//! Decentralized federated fine-tuning with alternating low-rank (LoRA) updates.
//!
//! This crate simulates a fleet of clients that each hold a low-rank adapter
//! pair `(A, B)` with update `ΔW = (α/r)·B·A`, train one block at a time on
//! heterogeneous local data, and average parameters peer-to-peer through
//! doubly-stochastic mixing matrices. It implements the joint-mixing
//! alternating scheme (ADF-LoRA) next to its baselines (naive LoRA averaging,
//! FFA-LoRA, centralized and decentralized RoLoRA) and ships an executable
//! check battery for the algebra and convergence behavior the scheme relies
//! on: the cross-client interference identity, consensus contraction under
//! mixing, per-step descent, and the stationarity bound.
//!
//! # Layout
//!
//! | Module | What it holds |
//! |--------|---------------|
//! | [`linalg`] | dense `f64` matrices, norms, Jacobi eigen/singular values |
//! | [`topology`] | mixing matrices (complete, ring, identity) and random pairwise gossip |
//! | [`lora`] | adapter pairs, phase schedule, aggregation and cross-term algebra |
//! | [`tasks`] | matrix-factorization and logistic objectives with exact gradients |
//! | [`optim`] | per-block SGD and Adam with decoupled weight decay |
//! | [`engine`] | the federated round loop, metrics, and lemma/theorem checks |
//! | [`config`] | the TOML experiment configuration and its validation |
//! | [`verify`] | the named pass/fail check battery used by `adflora verify` |
//!
//! # Quick start
//!
//! ```
//! use adflora::lora::{init_pair, naive_aggregate, cross_term, AggregationWeights};
//! use adflora::rng;
//!
//! // Two clients with independently trained adapters.
//! let mut r0 = rng::stream(7, rng::Domain::Init, 0);
//! let mut r1 = rng::stream(7, rng::Domain::Init, 1);
//! let mut p0 = init_pair(2, 4, 4, 2.0, &mut r0);
//! let mut p1 = init_pair(2, 4, 4, 2.0, &mut r1);
//! p0.b = adflora::linalg::Matrix::from_fn(4, 2, |i, j| (i + j) as f64 * 0.1);
//! p1.b = adflora::linalg::Matrix::from_fn(4, 2, |i, j| (i * j) as f64 * 0.1);
//!
//! // Averaging factors and then forming the product is NOT the average of
//! // the products; the gap is the cross-client interference term.
//! let w = AggregationWeights::uniform(2);
//! let agg = naive_aggregate(&[p0.clone(), p1.clone()], &w).unwrap();
//! let interference = cross_term(&[p0, p1], &w).unwrap();
//! assert!(interference.frobenius_norm() > 0.0);
//! assert_eq!(agg.delta_w().shape(), interference.shape());
//! ```

pub mod config;
pub mod engine;
pub mod error;
pub mod linalg;
pub mod lora;
pub mod optim;
pub mod rng;
pub mod tasks;
pub mod topology;
pub mod verify;

pub use error::{Error, Result};
pub use linalg::Matrix;
pub use lora::{Block, LoRAPair, PhaseSchedule};
pub use topology::MixingMatrix;
