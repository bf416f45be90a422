//! Low-rank adapter pairs, the alternating phase schedule, and the
//! cross-client interference algebra.
//!
//! An adapter holds factors `A (r×n)` and `B (m×r)` whose product, scaled by
//! `α/r`, is the weight update `ΔW`. Federated averaging operates on the
//! factors, not the product, and the two do not commute: averaging `N`
//! clients' factors and multiplying gives
//!
//! ```text
//! (Σᵢ wᵢBᵢ)(Σⱼ wⱼAⱼ) = Σᵢ wᵢ²·BᵢAᵢ  +  Σ_{i≠j} wᵢwⱼ·BᵢAⱼ
//! ```
//!
//! The second sum pairs one client's `B` with another's `A` — update
//! directions no client ever computed. [`cross_term`] materializes it,
//! [`naive_aggregate`] the factor average, and the exact identity between
//! them is what the `verify` battery asserts on random instances.
//!
//! When every client holds the *same* `A`, the interference collapses:
//! `Σᵢ wᵢBᵢ·A` is just the weighted average of the per-client products.
//! Alternating schedules exploit exactly this, freezing one block per phase
//! so that block can stay shared; [`phase_at`] maps a step counter to the
//! active block.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng;
use rand::Rng;

/// Which factor of the pair a phase trains (or an operation targets).
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Block {
    A,
    B,
}

impl std::fmt::Display for Block {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Block::A => write!(f, "A"),
            Block::B => write!(f, "B"),
        }
    }
}

/// One client's adapter: `ΔW = (alpha/rank)·b·a` of shape `m×n`.
#[derive(Debug, Clone, PartialEq)]
pub struct LoRAPair {
    /// Down-projection, `rank × n`.
    pub a: Matrix,
    /// Up-projection, `m × rank`.
    pub b: Matrix,
    pub rank: usize,
    pub alpha: f64,
}

impl LoRAPair {
    pub fn new(a: Matrix, b: Matrix, alpha: f64) -> Self {
        assert_eq!(
            a.rows(),
            b.cols(),
            "rank mismatch: a is {}x{}, b is {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        );
        assert!(alpha > 0.0, "alpha must be positive");
        let rank = a.rows();
        LoRAPair { a, b, rank, alpha }
    }

    /// `alpha / rank`, folded into `delta_w` and gradients, never into the
    /// stored factors.
    pub fn scaling(&self) -> f64 {
        self.alpha / self.rank as f64
    }

    /// The effective weight update `scaling · b · a`.
    pub fn delta_w(&self) -> Matrix {
        self.b.mat_mul(&self.a).scale(self.scaling())
    }

    /// Output shape `(m, n)` of `delta_w`.
    pub fn out_shape(&self) -> (usize, usize) {
        (self.b.rows(), self.a.cols())
    }

    pub fn block(&self, which: Block) -> &Matrix {
        match which {
            Block::A => &self.a,
            Block::B => &self.b,
        }
    }

    pub fn block_mut(&mut self, which: Block) -> &mut Matrix {
        match which {
            Block::A => &mut self.a,
            Block::B => &mut self.b,
        }
    }

    fn same_shape_as(&self, other: &LoRAPair) -> bool {
        self.a.shape() == other.a.shape()
            && self.b.shape() == other.b.shape()
            && self.alpha == other.alpha
    }
}

/// Standard LoRA initialization: `a` i.i.d. Gaussian with variance `1/r`,
/// `b` zero, so the initial update is exactly zero.
pub fn init_pair(rank: usize, n: usize, m: usize, alpha: f64, rng: &mut impl Rng) -> LoRAPair {
    assert!(rank >= 1, "rank must be at least 1");
    assert!(
        rank <= m.min(n),
        "rank {rank} exceeds min dimension {}",
        m.min(n)
    );
    let sd = (1.0 / rank as f64).sqrt();
    let a = Matrix::from_fn(rank, n, |_, _| sd * rng::normal(rng));
    let b = Matrix::zeros(m, rank);
    LoRAPair::new(a, b, alpha)
}

/// Alternating schedule: steps come in periods of `2T`, the first `T` of
/// each period training `B`, the next `T` training `A`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhaseSchedule {
    /// Switching interval `T`.
    pub interval: usize,
    /// Number of full periods `K`; the total budget is `2·K·T` block updates.
    pub total_periods: usize,
}

impl PhaseSchedule {
    pub fn new(interval: usize, total_periods: usize) -> Self {
        assert!(interval >= 1, "interval T must be at least 1");
        assert!(total_periods >= 1, "need at least one period");
        PhaseSchedule {
            interval,
            total_periods,
        }
    }

    /// `2·K·T`.
    pub fn total_steps(&self) -> usize {
        2 * self.total_periods * self.interval
    }
}

/// The block trained at step `t`: `B` iff `⌊t/T⌋` is even, i.e. iff
/// `t mod 2T < T`.
pub fn phase_at(t: usize, schedule: &PhaseSchedule) -> Block {
    if (t / schedule.interval) % 2 == 0 {
        Block::B
    } else {
        Block::A
    }
}

/// Normalized nonnegative client weights.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregationWeights(Vec<f64>);

impl AggregationWeights {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Precondition("empty weight vector".into()));
        }
        if weights.iter().any(|&w| !w.is_finite() || w < 0.0) {
            return Err(Error::Precondition(
                "aggregation weights must be finite and nonnegative".into(),
            ));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::Precondition(format!(
                "aggregation weights sum to {sum}, expected 1"
            )));
        }
        Ok(AggregationWeights(weights))
    }

    pub fn uniform(n: usize) -> Self {
        assert!(n >= 1);
        AggregationWeights(vec![1.0 / n as f64; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

fn check_pairs(pairs: &[LoRAPair], weights: &AggregationWeights) -> Result<()> {
    if pairs.is_empty() {
        return Err(Error::Precondition("no pairs to aggregate".into()));
    }
    if pairs.len() != weights.len() {
        return Err(Error::Precondition(format!(
            "{} pairs but {} weights",
            pairs.len(),
            weights.len()
        )));
    }
    let first = &pairs[0];
    if let Some(bad) = pairs.iter().position(|p| !p.same_shape_as(first)) {
        return Err(Error::Precondition(format!(
            "pair {bad} has mismatched shape or scaling"
        )));
    }
    Ok(())
}

/// Entrywise weighted average of the factors — the aggregation a parameter
/// server (or a mixing step) actually performs.
pub fn naive_aggregate(pairs: &[LoRAPair], weights: &AggregationWeights) -> Result<LoRAPair> {
    check_pairs(pairs, weights)?;
    let (ra, ca) = pairs[0].a.shape();
    let (rb, cb) = pairs[0].b.shape();
    let mut a = Matrix::zeros(ra, ca);
    let mut b = Matrix::zeros(rb, cb);
    for (pair, &w) in pairs.iter().zip(weights.as_slice()) {
        a = a.add(&pair.a.scale(w));
        b = b.add(&pair.b.scale(w));
    }
    Ok(LoRAPair::new(a, b, pairs[0].alpha))
}

/// The mixed-client residue `scaling · Σ_{i≠j} wᵢwⱼ·bᵢaⱼ`.
///
/// Satisfies exactly:
/// `naive_aggregate(pairs).delta_w() == diagonal_term(pairs) + cross_term(pairs)`.
pub fn cross_term(pairs: &[LoRAPair], weights: &AggregationWeights) -> Result<Matrix> {
    check_pairs(pairs, weights)?;
    let (m, n) = pairs[0].out_shape();
    let mut acc = Matrix::zeros(m, n);
    for (i, (pi, &wi)) in pairs.iter().zip(weights.as_slice()).enumerate() {
        for (j, (pj, &wj)) in pairs.iter().zip(weights.as_slice()).enumerate() {
            if i == j {
                continue;
            }
            acc = acc.add(&pi.b.mat_mul(&pj.a).scale(wi * wj));
        }
    }
    Ok(acc.scale(pairs[0].scaling()))
}

/// The same-client part `scaling · Σᵢ wᵢ²·bᵢaᵢ` of the aggregated product.
pub fn diagonal_term(pairs: &[LoRAPair], weights: &AggregationWeights) -> Result<Matrix> {
    check_pairs(pairs, weights)?;
    let (m, n) = pairs[0].out_shape();
    let mut acc = Matrix::zeros(m, n);
    for (pair, &w) in pairs.iter().zip(weights.as_slice()) {
        acc = acc.add(&pair.b.mat_mul(&pair.a).scale(w * w));
    }
    Ok(acc.scale(pairs[0].scaling()))
}

/// Tolerance below which a block counts as shared across clients.
const SHARED_BLOCK_TOL: f64 = 1e-15;
/// Tolerance for the interference-free aggregation identity.
const EXACTNESS_TOL: f64 = 1e-13;

/// Aggregation in the interference-free case.
///
/// Requires the designated block to be identical across all pairs (to
/// `1e-15` per entry); returns the aggregated update after confirming it
/// equals the weighted average of the per-client updates to `1e-13` — the
/// linearity that makes alternating schemes aggregate cleanly.
pub fn shared_block_exactness(
    pairs: &[LoRAPair],
    weights: &AggregationWeights,
    which: Block,
) -> Result<Matrix> {
    check_pairs(pairs, weights)?;
    let reference = pairs[0].block(which);
    for (idx, pair) in pairs.iter().enumerate().skip(1) {
        let dev = pair
            .block(which)
            .entries()
            .iter()
            .zip(reference.entries())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        if dev > SHARED_BLOCK_TOL {
            return Err(Error::Precondition(format!(
                "block {which} of pair {idx} deviates from pair 0 by {dev:.3e}"
            )));
        }
    }

    let aggregated = naive_aggregate(pairs, weights)?.delta_w();
    let mut averaged = Matrix::zeros(aggregated.rows(), aggregated.cols());
    for (pair, &w) in pairs.iter().zip(weights.as_slice()) {
        averaged = averaged.add(&pair.delta_w().scale(w));
    }
    let dev = aggregated.sub(&averaged).frobenius_norm();
    if dev > EXACTNESS_TOL {
        return Err(Error::Precondition(format!(
            "shared-{which} aggregation deviates from the averaged update by {dev:.3e}"
        )));
    }
    Ok(aggregated)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{self, Domain};
    use rand::Rng;

    fn random_pair(rank: usize, n: usize, m: usize, alpha: f64, r: &mut impl Rng) -> LoRAPair {
        let a = Matrix::from_fn(rank, n, |_, _| rng::normal(r));
        let b = Matrix::from_fn(m, rank, |_, _| rng::normal(r));
        LoRAPair::new(a, b, alpha)
    }

    fn random_weights(n: usize, r: &mut impl Rng) -> AggregationWeights {
        let raw: Vec<f64> = (0..n).map(|_| r.gen::<f64>() + 0.05).collect();
        let sum: f64 = raw.iter().sum();
        AggregationWeights::new(raw.iter().map(|x| x / sum).collect()).unwrap()
    }

    fn max_abs(m: &Matrix) -> f64 {
        m.entries().iter().map(|x| x.abs()).fold(0.0, f64::max)
    }

    #[test]
    fn init_pair_starts_at_zero_update() {
        let mut r = rng::stream(1, Domain::Init, 0);
        let p = init_pair(2, 4, 4, 16.0, &mut r);
        assert_eq!(p.a.shape(), (2, 4));
        assert_eq!(p.b.shape(), (4, 2));
        assert_eq!(p.delta_w(), Matrix::zeros(4, 4));
    }

    #[test]
    fn init_statistics_match_declared_law() {
        // Monte-Carlo over the stated init law: mean 0, variance 1/r.
        let rank = 4;
        let mut r = rng::stream(2, Domain::Init, 0);
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        let mut count = 0usize;
        for _ in 0..400 {
            let p = init_pair(rank, 8, 8, 1.0, &mut r);
            for &x in p.a.entries() {
                sum += x;
                sum_sq += x * x;
                count += 1;
            }
        }
        let mean = sum / count as f64;
        let var = sum_sq / count as f64 - mean * mean;
        assert!(mean.abs() < 0.05 / (rank as f64).sqrt());
        assert!((var - 1.0 / rank as f64).abs() / (1.0 / rank as f64) < 0.05);
    }

    #[test]
    fn delta_w_outer_product_case() {
        let p = LoRAPair::new(
            Matrix::from_rows(&[&[1.0, 0.0]]),
            Matrix::from_rows(&[&[1.0], &[0.0]]),
            1.0,
        );
        assert_eq!(
            p.delta_w(),
            Matrix::from_rows(&[&[1.0, 0.0], &[0.0, 0.0]])
        );
    }

    #[test]
    fn delta_w_matches_scaled_product_oracle() {
        let mut r = rng::stream(3, Domain::Battery, 0);
        let p = random_pair(3, 5, 4, 7.5, &mut r);
        let oracle = p.b.mat_mul(&p.a).scale(7.5 / 3.0);
        assert!(max_abs(&p.delta_w().sub(&oracle)) <= 1e-14);
    }

    #[test]
    fn phase_schedule_from_step_counter() {
        let s = PhaseSchedule::new(5, 3);
        assert_eq!(phase_at(0, &s), Block::B);
        assert_eq!(phase_at(4, &s), Block::B);
        assert_eq!(phase_at(5, &s), Block::A);
        assert_eq!(phase_at(9, &s), Block::A);
        assert_eq!(phase_at(10, &s), Block::B);
        assert_eq!(s.total_steps(), 30);

        let strict = PhaseSchedule::new(1, 1);
        let pattern: Vec<Block> = (0..6).map(|t| phase_at(t, &strict)).collect();
        assert_eq!(
            pattern,
            vec![Block::B, Block::A, Block::B, Block::A, Block::B, Block::A]
        );
    }

    #[test]
    fn phase_runs_have_length_exactly_t() {
        for t_int in [1usize, 2, 5, 8] {
            let s = PhaseSchedule::new(t_int, 4);
            let mut run = 1;
            let mut prev = phase_at(0, &s);
            for t in 1..s.total_steps() {
                let cur = phase_at(t, &s);
                if cur == prev {
                    run += 1;
                } else {
                    assert_eq!(run, t_int, "run ending at t={t} for T={t_int}");
                    run = 1;
                    prev = cur;
                }
                // periodicity with period 2T
                assert_eq!(cur, phase_at(t + 2 * t_int, &s));
            }
        }
    }

    #[test]
    fn aggregate_of_identical_pairs_is_identity() {
        let mut r = rng::stream(4, Domain::Battery, 0);
        let p = random_pair(2, 3, 3, 2.0, &mut r);
        let pairs = vec![p.clone(), p.clone(), p.clone()];
        let agg = naive_aggregate(&pairs, &AggregationWeights::uniform(3)).unwrap();
        assert!(max_abs(&agg.a.sub(&p.a)) <= 1e-15);
        assert!(max_abs(&agg.b.sub(&p.b)) <= 1e-15);
    }

    #[test]
    fn aggregate_cancellation() {
        let mut r = rng::stream(5, Domain::Battery, 0);
        let p = random_pair(2, 3, 3, 2.0, &mut r);
        let neg = LoRAPair::new(p.a.scale(-1.0), p.b.scale(-1.0), p.alpha);
        let agg = naive_aggregate(&[p, neg], &AggregationWeights::uniform(2)).unwrap();
        assert_eq!(agg.a, Matrix::zeros(2, 3));
        assert_eq!(agg.b, Matrix::zeros(3, 2));
    }

    #[test]
    fn aggregate_matches_per_entry_oracle() {
        let mut r = rng::stream(6, Domain::Battery, 0);
        let pairs: Vec<LoRAPair> = (0..5).map(|_| random_pair(2, 4, 3, 2.0, &mut r)).collect();
        let w = random_weights(5, &mut r);
        let agg = naive_aggregate(&pairs, &w).unwrap();
        for i in 0..2 {
            for j in 0..4 {
                let expect: f64 = pairs
                    .iter()
                    .zip(w.as_slice())
                    .map(|(p, &wk)| wk * p.a.get(i, j))
                    .sum();
                assert!((agg.a.get(i, j) - expect).abs() <= 1e-14);
            }
        }
    }

    #[test]
    fn aggregate_rejects_mismatched_shapes() {
        let mut r = rng::stream(7, Domain::Battery, 0);
        let p1 = random_pair(2, 3, 3, 2.0, &mut r);
        let p2 = random_pair(2, 4, 3, 2.0, &mut r);
        assert!(naive_aggregate(&[p1, p2], &AggregationWeights::uniform(2)).is_err());
    }

    #[test]
    fn scalar_interference_example() {
        // Two rank-1 scalar adapters at (1,1) and (-1,-1): the naive product
        // is 0 while the true average of products is 1; the interference
        // accounts for exactly -0.5 and the same-client part for +0.5.
        let p1 = LoRAPair::new(
            Matrix::from_rows(&[&[1.0]]),
            Matrix::from_rows(&[&[1.0]]),
            1.0,
        );
        let p2 = LoRAPair::new(
            Matrix::from_rows(&[&[-1.0]]),
            Matrix::from_rows(&[&[-1.0]]),
            1.0,
        );
        let w = AggregationWeights::uniform(2);
        let cross = cross_term(&[p1.clone(), p2.clone()], &w).unwrap();
        let diag = diagonal_term(&[p1.clone(), p2.clone()], &w).unwrap();
        assert!((cross.get(0, 0) + 0.5).abs() <= 1e-15);
        assert!((diag.get(0, 0) - 0.5).abs() <= 1e-15);
        let naive = naive_aggregate(&[p1.clone(), p2.clone()], &w).unwrap().delta_w();
        assert!(naive.get(0, 0).abs() <= 1e-15);
        let true_avg = 0.5 * (p1.delta_w().get(0, 0) + p2.delta_w().get(0, 0));
        assert!((true_avg - 1.0).abs() <= 1e-15);
    }

    #[test]
    fn identical_clients_have_no_interference_relative_to_average() {
        let mut r = rng::stream(8, Domain::Battery, 0);
        let p = random_pair(2, 3, 4, 2.0, &mut r);
        let pairs = vec![p.clone(), p.clone(), p.clone()];
        let w = AggregationWeights::uniform(3);
        let naive = naive_aggregate(&pairs, &w).unwrap().delta_w();
        let avg = p.delta_w();
        assert!(max_abs(&naive.sub(&avg)) <= 1e-13);
    }

    /// Brute-force expansion oracle: form the aggregated product directly
    /// and compare against same-client part + interference.
    #[test]
    fn interference_identity_brute_force() {
        let mut r = rng::stream(9, Domain::Battery, 0);
        let pairs: Vec<LoRAPair> = (0..4).map(|_| random_pair(2, 4, 3, 2.0, &mut r)).collect();
        let w = random_weights(4, &mut r);
        let naive = naive_aggregate(&pairs, &w).unwrap().delta_w();
        let recon = diagonal_term(&pairs, &w)
            .unwrap()
            .add(&cross_term(&pairs, &w).unwrap());
        assert!(max_abs(&naive.sub(&recon)) <= 1e-13);
    }

    #[test]
    fn shared_block_aggregates_cleanly() {
        let mut r = rng::stream(10, Domain::Battery, 0);
        // shared A, distinct B
        let shared_a = Matrix::from_fn(2, 4, |_, _| rng::normal(&mut r));
        let pairs: Vec<LoRAPair> = (0..3)
            .map(|_| {
                LoRAPair::new(
                    shared_a.clone(),
                    Matrix::from_fn(3, 2, |_, _| rng::normal(&mut r)),
                    2.0,
                )
            })
            .collect();
        let w = random_weights(3, &mut r);
        assert!(shared_block_exactness(&pairs, &w, Block::A).is_ok());

        // shared B, distinct A
        let shared_b = Matrix::from_fn(3, 2, |_, _| rng::normal(&mut r));
        let pairs_b: Vec<LoRAPair> = (0..3)
            .map(|_| {
                LoRAPair::new(
                    Matrix::from_fn(2, 4, |_, _| rng::normal(&mut r)),
                    shared_b.clone(),
                    2.0,
                )
            })
            .collect();
        assert!(shared_block_exactness(&pairs_b, &w, Block::B).is_ok());

        // shared both is trivially fine
        let twin = vec![pairs[0].clone(), pairs[0].clone()];
        assert!(
            shared_block_exactness(&twin, &AggregationWeights::uniform(2), Block::A).is_ok()
        );
    }

    #[test]
    fn shared_block_violation_is_reported() {
        let mut r = rng::stream(11, Domain::Battery, 0);
        let pairs: Vec<LoRAPair> = (0..3).map(|_| random_pair(2, 4, 3, 2.0, &mut r)).collect();
        let w = AggregationWeights::uniform(3);
        let err = shared_block_exactness(&pairs, &w, Block::A).unwrap_err();
        assert!(err.to_string().contains("block A"));
    }

    /// With a shared block and uniform weights the interference collapses to
    /// `(1 − Σwᵢ²)` times the clean averaged product; with general weights
    /// the same holds for the tilted average with weights `wᵢ(1−wᵢ)`.
    #[test]
    fn cross_term_collapses_when_block_is_shared() {
        let mut r = rng::stream(12, Domain::Battery, 0);
        let n_clients = 4;
        let shared_a = Matrix::from_fn(2, 4, |_, _| rng::normal(&mut r));
        let pairs: Vec<LoRAPair> = (0..n_clients)
            .map(|_| {
                LoRAPair::new(
                    shared_a.clone(),
                    Matrix::from_fn(3, 2, |_, _| rng::normal(&mut r)),
                    2.0,
                )
            })
            .collect();
        let scaling = pairs[0].scaling();

        // uniform weights: averaged other block = the naive aggregate's b
        let w = AggregationWeights::uniform(n_clients);
        let cross = cross_term(&pairs, &w).unwrap();
        let w_sq: f64 = w.as_slice().iter().map(|x| x * x).sum();
        let b_avg = naive_aggregate(&pairs, &w).unwrap().b;
        let collapsed = b_avg.mat_mul(&shared_a).scale(scaling * (1.0 - w_sq));
        assert!(cross.sub(&collapsed).frobenius_norm() <= 1e-13);

        // general weights: tilted average with weights w_i(1-w_i)
        let w = random_weights(n_clients, &mut r);
        let cross = cross_term(&pairs, &w).unwrap();
        let w_sq: f64 = w.as_slice().iter().map(|x| x * x).sum();
        let mut b_tilted = Matrix::zeros(3, 2);
        for (pair, &wi) in pairs.iter().zip(w.as_slice()) {
            b_tilted = b_tilted.add(&pair.b.scale(wi * (1.0 - wi) / (1.0 - w_sq)));
        }
        let collapsed = b_tilted.mat_mul(&shared_a).scale(scaling * (1.0 - w_sq));
        assert!(cross.sub(&collapsed).frobenius_norm() <= 1e-13);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            /// The interference identity holds for every client count and
            /// weight vector.
            #[test]
            fn interference_identity(
                n in 2usize..=10,
                rank in 1usize..=4,
                seed in 0u64..10_000,
            ) {
                let mut r = rng::stream(seed, Domain::Battery, 4);
                let pairs: Vec<LoRAPair> =
                    (0..n).map(|_| random_pair(rank, 5, 4, rank as f64, &mut r)).collect();
                let w = random_weights(n, &mut r);
                let naive = naive_aggregate(&pairs, &w).unwrap().delta_w();
                let recon = diagonal_term(&pairs, &w)
                    .unwrap()
                    .add(&cross_term(&pairs, &w).unwrap());
                prop_assert!(max_abs(&naive.sub(&recon)) <= 1e-13);
            }

            /// `delta_w` is bilinear in the factors.
            #[test]
            fn delta_w_is_bilinear(seed in 0u64..10_000) {
                let mut r = rng::stream(seed, Domain::Battery, 5);
                let p1 = random_pair(2, 4, 3, 2.0, &mut r);
                let p2 = LoRAPair::new(
                    Matrix::from_fn(2, 4, |_, _| rng::normal(&mut r)),
                    p1.b.clone(),
                    p1.alpha,
                );
                let summed = LoRAPair::new(p1.a.add(&p2.a), p1.b.clone(), p1.alpha);
                let lhs = summed.delta_w();
                let rhs = p1.delta_w().add(&p2.delta_w());
                prop_assert!(max_abs(&lhs.sub(&rhs)) <= 1e-13);
            }
        }
    }
}
