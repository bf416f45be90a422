//! Communication structures: fixed mixing matrices and random pairwise gossip.
//!
//! A mixing step replaces every client's parameters with a weighted average
//! of its neighbors', weights given by one row of a symmetric
//! doubly-stochastic matrix `W`. The speed of consensus is governed by
//! `ρ = ‖W − (1/N)·𝟏𝟏ᵀ‖₂`: stacking client parameters as columns of `U`,
//! one mixing step contracts the deviation from the mean by at least `ρ`,
//!
//! ```text
//! ‖U·Wᵀ − Ū𝟏ᵀ‖_F ≤ ρ · ‖U − Ū𝟏ᵀ‖_F
//! ```
//!
//! which is the contraction the whole convergence story leans on. `ρ = 0`
//! is a single averaging server in disguise; `ρ = 1` is no communication.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::{self, Domain};
use rand::Rng;

const SYMMETRY_TOL: f64 = 1e-12;
const STOCHASTICITY_TOL: f64 = 1e-12;
const ENTRY_FLOOR: f64 = -1e-15;

/// A validated symmetric doubly-stochastic mixing matrix with its cached
/// contraction factor `rho`.
#[derive(Debug, Clone)]
pub struct MixingMatrix {
    w: Matrix,
    rho: f64,
}

impl MixingMatrix {
    /// Validate an arbitrary square matrix as a mixing matrix and cache its
    /// contraction factor.
    pub fn new(w: Matrix) -> Result<Self> {
        if w.rows() != w.cols() {
            return Err(Error::InvalidMixingMatrix(format!(
                "not square: {}x{}",
                w.rows(),
                w.cols()
            )));
        }
        let n = w.rows();
        for i in 0..n {
            for j in 0..n {
                let e = w.get(i, j);
                if e < ENTRY_FLOOR || e > 1.0 + SYMMETRY_TOL {
                    return Err(Error::InvalidMixingMatrix(format!(
                        "entry ({i},{j}) = {e} outside [0, 1]"
                    )));
                }
                if (w.get(i, j) - w.get(j, i)).abs() > SYMMETRY_TOL {
                    return Err(Error::InvalidMixingMatrix(format!(
                        "asymmetric at ({i},{j}): {} vs {}",
                        w.get(i, j),
                        w.get(j, i)
                    )));
                }
            }
        }
        for i in 0..n {
            let row: f64 = (0..n).map(|j| w.get(i, j)).sum();
            let col: f64 = (0..n).map(|j| w.get(j, i)).sum();
            if (row - 1.0).abs() > STOCHASTICITY_TOL || (col - 1.0).abs() > STOCHASTICITY_TOL {
                return Err(Error::InvalidMixingMatrix(format!(
                    "row/column {i} sums {row}/{col} differ from 1"
                )));
            }
        }
        // Clamp the tiny negatives the tolerance admits.
        let clamped = Matrix::from_fn(n, n, |i, j| w.get(i, j).clamp(0.0, 1.0));
        let rho = rho_of(&clamped)?;
        Ok(MixingMatrix { w: clamped, rho })
    }

    /// Uniform all-to-all averaging: every entry `1/n`, `rho = 0`. One step
    /// lands every client exactly on the mean — the centralized-server case.
    pub fn complete_uniform(n: usize) -> Self {
        assert!(n >= 1, "need at least one client");
        let w = Matrix::from_fn(n, n, |_, _| 1.0 / n as f64);
        MixingMatrix::new(w).expect("complete uniform matrix is always valid")
    }

    /// No communication at all: the identity, `rho = 1`.
    pub fn identity_topology(n: usize) -> Self {
        assert!(n >= 2, "an identity topology needs at least two clients");
        MixingMatrix::new(Matrix::identity(n)).expect("identity matrix is always valid")
    }

    /// Lazy ring: each client averages itself with its two neighbors at
    /// weight 1/3 each. Sparse but connected, so `rho < 1` strictly.
    pub fn ring_lazy(n: usize) -> Self {
        assert!(n >= 3, "a ring needs at least three clients");
        let third = 1.0 / 3.0;
        let w = Matrix::from_fn(n, n, |i, j| {
            if i == j || (i + 1) % n == j || (j + 1) % n == i {
                third
            } else {
                0.0
            }
        });
        MixingMatrix::new(w).expect("lazy ring matrix is always valid")
    }

    pub fn n_clients(&self) -> usize {
        self.w.rows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.w
    }

    /// The cached contraction factor `ρ = ‖W − (1/N)𝟏𝟏ᵀ‖₂`.
    pub fn spectral_gap(&self) -> f64 {
        self.rho
    }

    /// Apply one mixing step to a stacked matrix whose column `i` holds
    /// client `i`'s flattened parameters: returns `U·Wᵀ`.
    pub fn apply_to_stack(&self, u: &Matrix) -> Matrix {
        u.mat_mul(&self.w.transpose())
    }
}

fn rho_of(w: &Matrix) -> Result<f64> {
    let n = w.rows();
    let deflated = w.sub(&Matrix::from_fn(n, n, |_, _| 1.0 / n as f64));
    let rho = deflated.spectral_norm()?;
    if rho > 1.0 + 1e-9 {
        return Err(Error::InvalidMixingMatrix(format!(
            "contraction factor {rho} exceeds 1"
        )));
    }
    Ok(rho.min(1.0))
}

/// Per-round random pairwise gossip.
///
/// Each round, clients are visited in index order; a not-yet-matched client
/// activates with the encounter probability and grabs a uniformly random
/// not-yet-matched partner. Matched pairs average symmetrically (weight 1/2
/// each); everyone else keeps their own parameters. The draw for round `t`
/// is a pure function of `(rng_seed, t)`.
#[derive(Debug, Clone)]
pub struct GossipProcess {
    n_clients: usize,
    encounter_probability: f64,
    rng_seed: u64,
}

impl GossipProcess {
    pub fn new(n_clients: usize, encounter_probability: f64, rng_seed: u64) -> Self {
        assert!(n_clients >= 1, "need at least one client");
        assert!(
            (0.0..=1.0).contains(&encounter_probability),
            "encounter probability must lie in [0, 1]"
        );
        GossipProcess {
            n_clients,
            encounter_probability,
            rng_seed,
        }
    }

    pub fn n_clients(&self) -> usize {
        self.n_clients
    }

    /// Draw the mixing matrix for one round.
    pub fn draw_gossip_round(&self, round: u64) -> MixingMatrix {
        let mut rng = rng::stream(self.rng_seed, Domain::Gossip, round);
        let n = self.n_clients;
        let mut matched = vec![false; n];
        let mut w = Matrix::identity(n);
        for i in 0..n {
            if matched[i] {
                continue;
            }
            if rng.gen::<f64>() >= self.encounter_probability {
                continue;
            }
            let candidates: Vec<usize> = (0..n).filter(|&j| j != i && !matched[j]).collect();
            if candidates.is_empty() {
                continue;
            }
            let j = candidates[rng.gen_range(0..candidates.len())];
            matched[i] = true;
            matched[j] = true;
            w.set(i, i, 0.5);
            w.set(j, j, 0.5);
            w.set(i, j, 0.5);
            w.set(j, i, 0.5);
        }
        MixingMatrix::new(w).expect("pairwise averaging rounds are always valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn column_means(u: &Matrix) -> Vec<f64> {
        // mean across columns for every row
        (0..u.rows())
            .map(|i| (0..u.cols()).map(|j| u.get(i, j)).sum::<f64>() / u.cols() as f64)
            .collect()
    }

    fn deviation_from_mean(u: &Matrix) -> f64 {
        let means = column_means(u);
        let mut s = 0.0;
        for i in 0..u.rows() {
            for j in 0..u.cols() {
                let d = u.get(i, j) - means[i];
                s += d * d;
            }
        }
        s.sqrt()
    }

    #[test]
    fn complete_uniform_small_cases() {
        let w = MixingMatrix::complete_uniform(2);
        assert!(w.matrix().entries().iter().all(|&e| (e - 0.5).abs() == 0.0));
        assert!(w.spectral_gap().abs() <= 1e-12);

        let w1 = MixingMatrix::complete_uniform(1);
        assert_eq!(w1.matrix().entries(), &[1.0]);
        assert!(w1.spectral_gap().abs() <= 1e-12);
    }

    #[test]
    fn complete_uniform_ten_clients() {
        let w = MixingMatrix::complete_uniform(10);
        for i in 0..10 {
            let row: f64 = (0..10).map(|j| w.matrix().get(i, j)).sum();
            assert!((row - 1.0).abs() <= 1e-12);
        }
        assert!(w.spectral_gap() < 1e-10);
    }

    #[test]
    fn identity_topology_has_rho_one() {
        for n in [2, 5] {
            let w = MixingMatrix::identity_topology(n);
            assert_eq!(w.matrix(), &Matrix::identity(n));
            assert!((w.spectral_gap() - 1.0).abs() <= 1e-10);
        }
    }

    #[test]
    fn identity_topology_fixes_stacks() {
        let w = MixingMatrix::identity_topology(4);
        let mut r = rng::stream(3, rng::Domain::Battery, 1);
        let u = Matrix::from_fn(6, 4, |_, _| rng::normal(&mut r));
        let before = deviation_from_mean(&u);
        let mut v = u.clone();
        for _ in 0..5 {
            v = w.apply_to_stack(&v);
        }
        assert!((deviation_from_mean(&v) - before).abs() <= 1e-12);
    }

    #[test]
    fn ring_rho_matches_circulant_eigenvalues() {
        // (1 + 2 cos(2πk/n))/3 for k = 1..n-1, in absolute value.
        let w4 = MixingMatrix::ring_lazy(4);
        assert!((w4.spectral_gap() - 1.0 / 3.0).abs() <= 1e-10);

        // n = 3 lazy ring is the complete uniform matrix.
        let w3 = MixingMatrix::ring_lazy(3);
        assert!(w3.spectral_gap().abs() <= 1e-10);

        let w6 = MixingMatrix::ring_lazy(6);
        assert!((w6.spectral_gap() - 2.0 / 3.0).abs() <= 1e-10);
    }

    #[test]
    fn ring_sums_are_exact() {
        let w = MixingMatrix::ring_lazy(10);
        for i in 0..10 {
            let row: f64 = (0..10).map(|j| w.matrix().get(i, j)).sum();
            let col: f64 = (0..10).map(|j| w.matrix().get(j, i)).sum();
            assert!((row - 1.0).abs() <= 1e-15);
            assert!((col - 1.0).abs() <= 1e-15);
        }
    }

    #[test]
    fn rejects_non_doubly_stochastic() {
        let bad = Matrix::from_rows(&[&[0.9, 0.2], &[0.2, 0.9]]);
        assert!(MixingMatrix::new(bad).is_err());
        let asym = Matrix::from_rows(&[&[0.5, 0.5], &[0.4, 0.6]]);
        assert!(MixingMatrix::new(asym).is_err());
    }

    #[test]
    fn gossip_p_zero_is_identity() {
        let g = GossipProcess::new(6, 0.0, 99);
        for t in 0..20 {
            assert_eq!(g.draw_gossip_round(t).matrix(), &Matrix::identity(6));
        }
    }

    #[test]
    fn gossip_p_one_two_clients_is_complete() {
        let g = GossipProcess::new(2, 1.0, 5);
        let c = MixingMatrix::complete_uniform(2);
        for t in 0..20 {
            assert_eq!(g.draw_gossip_round(t).matrix(), c.matrix());
        }
    }

    #[test]
    fn gossip_rounds_are_deterministic_in_seed_and_round() {
        let g1 = GossipProcess::new(10, 0.3, 1234);
        let g2 = GossipProcess::new(10, 0.3, 1234);
        for t in [0, 1, 57, 9000] {
            assert_eq!(
                g1.draw_gossip_round(t).matrix(),
                g2.draw_gossip_round(t).matrix()
            );
        }
        let other_seed = GossipProcess::new(10, 0.3, 4321);
        let differs = (0..50)
            .any(|t| g1.draw_gossip_round(t).matrix() != other_seed.draw_gossip_round(t).matrix());
        assert!(differs);
    }

    /// Independent Monte-Carlo oracle for the sequential-activation matching
    /// rule, written against a hand-rolled generator so it shares no code
    /// with `draw_gossip_round`.
    #[test]
    fn gossip_match_frequency_matches_monte_carlo_oracle() {
        let n = 10;
        let p = 0.1;
        let rounds = 10_000u64;

        let g = GossipProcess::new(n, p, 77);
        let mut matched_count = vec![0u64; n];
        for t in 0..rounds {
            let w = g.draw_gossip_round(t);
            for i in 0..n {
                if w.matrix().get(i, i) < 1.0 {
                    matched_count[i] += 1;
                }
            }
        }

        // splitmix64-driven re-simulation of the stated rule.
        let mut state: u64 = 0x9e37_79b9_7f4a_7c15;
        let mut next_f64 = move || {
            state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
            let mut z = state;
            z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
            z ^= z >> 31;
            (z >> 11) as f64 / (1u64 << 53) as f64
        };
        let oracle_rounds = 200_000;
        let mut oracle_count = vec![0u64; n];
        for _ in 0..oracle_rounds {
            let mut matched = vec![false; n];
            for i in 0..n {
                if matched[i] {
                    continue;
                }
                if next_f64() >= p {
                    continue;
                }
                let candidates: Vec<usize> = (0..n).filter(|&j| j != i && !matched[j]).collect();
                if candidates.is_empty() {
                    continue;
                }
                let j = candidates[(next_f64() * candidates.len() as f64) as usize];
                matched[i] = true;
                matched[j] = true;
            }
            for i in 0..n {
                if matched[i] {
                    oracle_count[i] += 1;
                }
            }
        }

        for i in 0..n {
            let observed = matched_count[i] as f64 / rounds as f64;
            let expected = oracle_count[i] as f64 / oracle_rounds as f64;
            assert!(
                (observed - expected).abs() <= 0.03,
                "client {i}: observed {observed:.4}, oracle {expected:.4}"
            );
        }
    }

    #[test]
    fn every_gossip_round_is_a_valid_mixing_matrix() {
        let g = GossipProcess::new(7, 0.5, 2024);
        for t in 0..200 {
            // `new` re-runs the validity checks.
            let w = g.draw_gossip_round(t);
            assert!(MixingMatrix::new(w.matrix().clone()).is_ok());
        }
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            /// Executable contraction: one mixing step shrinks the deviation
            /// from the mean by at least the cached factor.
            #[test]
            fn mixing_contracts_deviation(
                seed in 0u64..1000,
                topo in 0usize..4,
            ) {
                let w = match topo {
                    0 => MixingMatrix::complete_uniform(6),
                    1 => MixingMatrix::identity_topology(6),
                    2 => MixingMatrix::ring_lazy(6),
                    _ => GossipProcess::new(6, 0.4, seed).draw_gossip_round(seed),
                };
                let mut r = rng::stream(seed, rng::Domain::Battery, 2);
                let u = Matrix::from_fn(5, 6, |_, _| rng::normal(&mut r));
                let before = deviation_from_mean(&u);
                let after = deviation_from_mean(&w.apply_to_stack(&u));
                prop_assert!(after <= w.spectral_gap() * before + 1e-10);
            }

            /// Double stochasticity preserves the mean.
            #[test]
            fn mixing_preserves_mean(seed in 0u64..1000) {
                let w = GossipProcess::new(8, 0.6, seed).draw_gossip_round(0);
                let mut r = rng::stream(seed, rng::Domain::Battery, 3);
                let u = Matrix::from_fn(4, 8, |_, _| rng::normal(&mut r));
                let before = column_means(&u);
                let after = column_means(&w.apply_to_stack(&u));
                for (b, a) in before.iter().zip(&after) {
                    prop_assert!((b - a).abs() <= 1e-12);
                }
            }
        }
    }
}
