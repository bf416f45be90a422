//! Matrix-factorization objective with closed-form constants.
//!
//! Client `i` pays `½‖Mᵢ − (W₀ + ΔW)‖_F²`. Averaging over clients splits
//! into a fit term against the mean target plus a constant spread term:
//!
//! ```text
//! (1/N)·Σᵢ Lᵢ = ½‖M̄ − (W₀ + ΔW)‖_F² + (1/2N)·Σᵢ‖Mᵢ − M̄‖_F²
//! ```
//!
//! so the global optimum over rank-r updates is the truncated-SVD residual
//! of `M̄ − W₀` plus that offset, and both block Lipschitz constants are
//! squared spectral norms of the frozen factor. The identity is re-verified
//! numerically every time a task is built.

use super::GradPair;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::lora::LoRAPair;
use crate::rng;
use rand::Rng;

/// Generation recipe for a [`MatFactTask`].
#[derive(Debug, Clone)]
pub struct MatFactParams {
    pub m: usize,
    pub n: usize,
    pub n_clients: usize,
    /// When set, the mean residual `M̄ − W₀` is planted with exactly this
    /// rank, making the global optimum (nearly) the spread term alone.
    pub target_rank: Option<usize>,
    /// Scale of per-client deviation from the mean target; 0 makes all
    /// clients share one target.
    pub heterogeneity: f64,
    /// Entry scale of the frozen base `W₀`.
    pub base_scale: f64,
}

impl Default for MatFactParams {
    fn default() -> Self {
        MatFactParams {
            m: 8,
            n: 8,
            n_clients: 10,
            target_rank: None,
            heterogeneity: 1.0,
            base_scale: 1.0,
        }
    }
}

/// Per-client quadratic fit targets around a frozen base.
#[derive(Debug, Clone)]
pub struct MatFactTask {
    base: Matrix,
    targets: Vec<Matrix>,
    mean_target: Matrix,
    variance_offset: f64,
}

impl MatFactTask {
    /// Build from explicit targets, verifying the global-loss identity on a
    /// random probe pair.
    pub fn new(base: Matrix, targets: Vec<Matrix>) -> Result<Self> {
        if targets.is_empty() {
            return Err(Error::Precondition("matfact task needs clients".into()));
        }
        let (m, n) = base.shape();
        if targets.iter().any(|t| t.shape() != (m, n)) {
            return Err(Error::Precondition(
                "target shape differs from base shape".into(),
            ));
        }
        let n_clients = targets.len() as f64;
        let mut mean = Matrix::zeros(m, n);
        for t in &targets {
            mean = mean.add(t);
        }
        let mean_target = mean.scale(1.0 / n_clients);
        let variance_offset = targets
            .iter()
            .map(|t| t.sub(&mean_target).frobenius_norm().powi(2))
            .sum::<f64>()
            / (2.0 * n_clients);

        let task = MatFactTask {
            base,
            targets,
            mean_target,
            variance_offset,
        };
        task.verify_identity()?;
        Ok(task)
    }

    /// Draw a task from a generation recipe.
    pub fn generate(params: &MatFactParams, rng: &mut impl Rng) -> Result<Self> {
        let MatFactParams {
            m,
            n,
            n_clients,
            target_rank,
            heterogeneity,
            base_scale,
        } = *params;
        let base = Matrix::from_fn(m, n, |_, _| base_scale * rng::normal(rng));
        let residual = match target_rank {
            Some(k) => {
                assert!(k >= 1 && k <= m.min(n), "planted rank out of range");
                let g1 = Matrix::from_fn(m, k, |_, _| rng::normal(rng));
                let g2 = Matrix::from_fn(k, n, |_, _| rng::normal(rng));
                g1.mat_mul(&g2).scale(1.0 / (k as f64).sqrt())
            }
            None => Matrix::from_fn(m, n, |_, _| rng::normal(rng)),
        };
        let mean = base.add(&residual);
        // Per-client deviations are centered so the realized mean target is
        // exactly the planted one.
        let mut noises: Vec<Matrix> = (0..n_clients)
            .map(|_| Matrix::from_fn(m, n, |_, _| heterogeneity * rng::normal(rng)))
            .collect();
        if heterogeneity > 0.0 && n_clients > 1 {
            let mut avg = Matrix::zeros(m, n);
            for e in &noises {
                avg = avg.add(e);
            }
            let avg = avg.scale(1.0 / n_clients as f64);
            for e in &mut noises {
                *e = e.sub(&avg);
            }
        }
        let targets = noises.into_iter().map(|e| mean.add(&e)).collect();
        MatFactTask::new(base, targets)
    }

    fn verify_identity(&self) -> Result<()> {
        let (m, n) = self.base.shape();
        let mut probe_rng = rng::stream(0x1dea, rng::Domain::TaskGen, 0);
        let r = m.min(n).min(2);
        let probe = LoRAPair::new(
            Matrix::from_fn(r, n, |_, _| rng::normal(&mut probe_rng)),
            Matrix::from_fn(m, r, |_, _| rng::normal(&mut probe_rng)),
            r as f64,
        );
        let direct: f64 = (0..self.n_clients())
            .map(|i| self.loss(i, &probe))
            .sum::<f64>()
            / self.n_clients() as f64;
        let via_mean = self.global_loss(&probe);
        let dev = (direct - via_mean).abs();
        if dev > 1e-10 * direct.abs().max(1.0) {
            return Err(Error::Precondition(format!(
                "global-loss identity violated by {dev:.3e}"
            )));
        }
        Ok(())
    }

    pub fn n_clients(&self) -> usize {
        self.targets.len()
    }

    /// `(m, n)` of the base and targets.
    pub fn dims(&self) -> (usize, usize) {
        self.base.shape()
    }

    pub fn base(&self) -> &Matrix {
        &self.base
    }

    pub fn target(&self, client: usize) -> &Matrix {
        &self.targets[client]
    }

    pub fn mean_target(&self) -> &Matrix {
        &self.mean_target
    }

    pub fn variance_offset(&self) -> f64 {
        self.variance_offset
    }

    fn residual(&self, target: &Matrix, pair: &LoRAPair) -> Matrix {
        assert_eq!(
            pair.out_shape(),
            self.base.shape(),
            "pair update shape {:?} does not match task dims {:?}",
            pair.out_shape(),
            self.base.shape()
        );
        self.base.add(&pair.delta_w()).sub(target)
    }

    /// `½‖Mᵢ − (W₀ + ΔW)‖_F²`.
    pub fn loss(&self, client: usize, pair: &LoRAPair) -> f64 {
        0.5 * self.residual(&self.targets[client], pair).frobenius_norm().powi(2)
    }

    /// Exact gradient of [`MatFactTask::loss`]: with `R = (W₀ + ΔW) − Mᵢ`
    /// and `s` the pair scaling, `g_b = s·R·Aᵀ` and `g_a = s·Bᵀ·R`.
    pub fn grad(&self, client: usize, pair: &LoRAPair) -> GradPair {
        self.grad_against(&self.targets[client], pair)
    }

    /// Mean loss across clients, via the mean-target identity.
    pub fn global_loss(&self, pair: &LoRAPair) -> f64 {
        0.5 * self.residual(&self.mean_target, pair).frobenius_norm().powi(2)
            + self.variance_offset
    }

    /// Gradient of the mean loss; same chain rule against the mean target.
    pub fn global_grad(&self, pair: &LoRAPair) -> GradPair {
        self.grad_against(&self.mean_target, pair)
    }

    fn grad_against(&self, target: &Matrix, pair: &LoRAPair) -> GradPair {
        let s = pair.scaling();
        let r = self.residual(target, pair);
        GradPair {
            g_a: pair.b.transpose().mat_mul(&r).scale(s),
            g_b: r.mat_mul(&pair.a.transpose()).scale(s),
        }
    }

    /// The exact global minimum of the mean loss over rank-`rank` updates:
    /// `½·Σ_{k>rank} σ_k(M̄ − W₀)² + variance_offset` (truncated SVD).
    pub fn optimum(&self, rank: usize) -> Result<f64> {
        let (m, n) = self.dims();
        assert!(rank <= m.min(n), "rank {rank} exceeds min dimension");
        let sv = self.mean_target.sub(&self.base).singular_values()?;
        let tail: f64 = sv.iter().skip(rank).map(|s| s * s).sum();
        Ok(0.5 * tail + self.variance_offset)
    }

    /// Exact per-block gradient Lipschitz constants at the current pair:
    /// `L_a = (s·‖B‖₂)²`, `L_b = (s·‖A‖₂)²`.
    pub fn block_smoothness(&self, pair: &LoRAPair) -> Result<(f64, f64)> {
        let s = pair.scaling();
        let l_a = (s * pair.b.spectral_norm()?).powi(2);
        let l_b = (s * pair.a.spectral_norm()?).powi(2);
        Ok((l_a, l_b))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lora::Block;
    use crate::rng::{self, Domain};

    fn random_pair(rank: usize, n: usize, m: usize, alpha: f64, r: &mut impl Rng) -> LoRAPair {
        LoRAPair::new(
            Matrix::from_fn(rank, n, |_, _| rng::normal(r)),
            Matrix::from_fn(m, rank, |_, _| rng::normal(r)),
            alpha,
        )
    }

    fn random_task(seed: u64, params: &MatFactParams) -> MatFactTask {
        let mut r = rng::stream(seed, Domain::TaskGen, 0);
        MatFactTask::generate(params, &mut r).unwrap()
    }

    #[test]
    fn loss_is_zero_at_perfect_fit() {
        // one client, target exactly reachable: M = W0 + delta_w(pair)
        let mut r = rng::stream(20, Domain::Battery, 0);
        let pair = random_pair(2, 4, 4, 2.0, &mut r);
        let base = Matrix::from_fn(4, 4, |_, _| rng::normal(&mut r));
        let target = base.add(&pair.delta_w());
        let task = MatFactTask::new(base, vec![target]).unwrap();
        assert!(task.loss(0, &pair).abs() <= 1e-20);
        let g = task.grad(0, &pair);
        assert!(g.norm_sq() <= 1e-20);
    }

    #[test]
    fn loss_of_zero_pair_with_zero_base() {
        let mut r = rng::stream(21, Domain::Battery, 0);
        let target = Matrix::from_fn(3, 3, |_, _| rng::normal(&mut r));
        let task = MatFactTask::new(Matrix::zeros(3, 3), vec![target.clone()]).unwrap();
        let pair = LoRAPair::new(
            Matrix::from_fn(1, 3, |_, _| rng::normal(&mut r)),
            Matrix::zeros(3, 1),
            1.0,
        );
        let expect = 0.5 * target.frobenius_norm().powi(2);
        assert!((task.loss(0, &pair) - expect).abs() <= 1e-12);
    }

    #[test]
    fn loss_matches_direct_formula_oracle() {
        let task = random_task(22, &MatFactParams::default());
        let mut r = rng::stream(23, Domain::Battery, 0);
        let pair = random_pair(2, 8, 8, 2.0, &mut r);
        for client in 0..task.n_clients() {
            // direct evaluation from the definition
            let fitted = task.base().add(&pair.delta_w());
            let mut acc = 0.0;
            for i in 0..8 {
                for j in 0..8 {
                    let d = task.target(client).get(i, j) - fitted.get(i, j);
                    acc += d * d;
                }
            }
            assert!((task.loss(client, &pair) - 0.5 * acc).abs() <= 1e-12);
        }
    }

    #[test]
    fn grad_with_zero_b_block() {
        let mut r = rng::stream(24, Domain::Battery, 0);
        let base = Matrix::from_fn(4, 4, |_, _| rng::normal(&mut r));
        let target = Matrix::from_fn(4, 4, |_, _| rng::normal(&mut r));
        let task = MatFactTask::new(base.clone(), vec![target.clone()]).unwrap();
        let a = Matrix::from_fn(2, 4, |_, _| rng::normal(&mut r));
        let pair = LoRAPair::new(a.clone(), Matrix::zeros(4, 2), 2.0);
        let g = task.grad(0, &pair);
        let s = pair.scaling();
        let expect_gb = base.sub(&target).mat_mul(&a.transpose()).scale(s);
        assert!(g.g_b.sub(&expect_gb).frobenius_norm() <= 1e-13);
        assert!(g.g_a.frobenius_norm() == 0.0);
    }

    /// Central finite differences against the analytic gradient.
    fn finite_difference_check(task: &MatFactTask, pair: &LoRAPair, h: f64) -> f64 {
        let g = task.grad(0, pair);
        let mut norm_fd = 0.0;
        let mut norm_dev = 0.0;
        for which in [Block::A, Block::B] {
            let block = pair.block(which);
            for i in 0..block.rows() {
                for j in 0..block.cols() {
                    let mut plus = pair.clone();
                    plus.block_mut(which).set(i, j, block.get(i, j) + h);
                    let mut minus = pair.clone();
                    minus.block_mut(which).set(i, j, block.get(i, j) - h);
                    let fd = (task.loss(0, &plus) - task.loss(0, &minus)) / (2.0 * h);
                    let an = g.block(which).get(i, j);
                    norm_fd += fd * fd;
                    norm_dev += (fd - an) * (fd - an);
                }
            }
        }
        (norm_dev / norm_fd.max(1e-30)).sqrt()
    }

    #[test]
    fn grad_matches_central_finite_differences() {
        for seed in 0..20u64 {
            let mut r = rng::stream(seed, Domain::Battery, 6);
            let base = Matrix::from_fn(4, 4, |_, _| rng::normal(&mut r));
            let target = Matrix::from_fn(4, 4, |_, _| rng::normal(&mut r));
            let task = MatFactTask::new(base, vec![target]).unwrap();
            let pair = random_pair(2, 4, 4, 2.0, &mut r);
            let rel = finite_difference_check(&task, &pair, 1e-5);
            assert!(rel < 1e-6, "seed {seed}: relative error {rel:.3e}");
        }
    }

    #[test]
    fn global_loss_identity_on_random_pairs() {
        let task = random_task(25, &MatFactParams::default());
        let mut r = rng::stream(26, Domain::Battery, 0);
        for _ in 0..10 {
            let pair = random_pair(3, 8, 8, 3.0, &mut r);
            let direct: f64 = (0..task.n_clients())
                .map(|i| task.loss(i, &pair))
                .sum::<f64>()
                / task.n_clients() as f64;
            let via_mean = task.global_loss(&pair);
            assert!((direct - via_mean).abs() <= 1e-10 * direct.max(1.0));
        }
    }

    #[test]
    fn optimum_trivial_cases() {
        // reachable target, single client: optimum 0
        let mut r = rng::stream(27, Domain::Battery, 0);
        let pair = random_pair(2, 5, 5, 2.0, &mut r);
        let base = Matrix::from_fn(5, 5, |_, _| rng::normal(&mut r));
        let target = base.add(&pair.delta_w());
        let task = MatFactTask::new(base, vec![target]).unwrap();
        assert!(task.optimum(2).unwrap().abs() <= 1e-12);

        // diagonal residual: tail singular value 1 at rank 2
        let base = Matrix::zeros(3, 3);
        let target = Matrix::from_rows(&[
            &[3.0, 0.0, 0.0],
            &[0.0, 2.0, 0.0],
            &[0.0, 0.0, 1.0],
        ]);
        let task = MatFactTask::new(base, vec![target]).unwrap();
        assert!((task.optimum(2).unwrap() - 0.5).abs() <= 1e-10);
    }

    /// Long-run optimization oracle: the truncated-SVD value is a true lower
    /// bound and is attained by alternating full-gradient descent.
    #[test]
    fn optimum_matches_long_run_descent() {
        let params = MatFactParams {
            m: 6,
            n: 6,
            n_clients: 5,
            target_rank: None,
            heterogeneity: 0.5,
            base_scale: 1.0,
        };
        let task = random_task(28, &params);
        let rank = 2;
        let lstar = task.optimum(rank).unwrap();

        let mut r = rng::stream(29, Domain::Battery, 0);
        let mut pair = random_pair(rank, 6, 6, rank as f64, &mut r);
        for step in 0..100_000 {
            let (l_a, l_b) = task.block_smoothness(&pair).unwrap();
            let eta = 0.9 / l_a.max(l_b).max(1e-12);
            let eta = eta.min(1.0);
            let g = task.global_grad(&pair);
            if step % 2 == 0 {
                pair.b = pair.b.sub(&g.g_b.scale(eta));
            } else {
                pair.a = pair.a.sub(&g.g_a.scale(eta));
            }
        }
        let reached = task.global_loss(&pair);
        assert!(
            reached >= lstar - 1e-9,
            "descent got below the claimed optimum: {reached} < {lstar}"
        );
        assert!(
            reached - lstar <= 1e-6,
            "descent stalled at {reached}, optimum {lstar}"
        );
    }

    #[test]
    fn block_smoothness_closed_forms() {
        // a = 0 gives L_b = 0
        let pair = LoRAPair::new(Matrix::zeros(2, 4), Matrix::zeros(4, 2), 2.0);
        let task = random_task(30, &MatFactParams { m: 4, n: 4, ..Default::default() });
        let (_, l_b) = task.block_smoothness(&pair).unwrap();
        assert_eq!(l_b, 0.0);

        // orthonormal rows and unit scaling give L_b = 1
        let a = Matrix::from_rows(&[&[1.0, 0.0, 0.0, 0.0], &[0.0, 1.0, 0.0, 0.0]]);
        let pair = LoRAPair::new(a, Matrix::zeros(4, 2), 2.0);
        assert_eq!(pair.scaling(), 1.0);
        let (_, l_b) = task.block_smoothness(&pair).unwrap();
        assert!((l_b - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn planted_rank_makes_optimum_the_spread_term() {
        let params = MatFactParams {
            m: 8,
            n: 8,
            n_clients: 4,
            target_rank: Some(2),
            heterogeneity: 0.3,
            base_scale: 1.0,
        };
        let task = random_task(31, &params);
        let opt = task.optimum(2).unwrap();
        assert!((opt - task.variance_offset()).abs() <= 1e-9);
    }
}
