//! Leave-one-query-out stability.
//!
//! The full basis `U` and every leave-one-query-out basis `U^{-i}` are
//! trained with the same configuration (and so the same initialization). The
//! empirical stability `beta_hat` is the largest change in any available
//! pair's unweighted loss between `U` and some `U^{-i}`; it is a lower
//! estimate of the supremum over the whole query space. It is compared with
//!
//! ```text
//! 2 s_max lambda_u (rho + sqrt(K) c lambda_u) + s_max^2 lambda_u^2,
//! s_max = max_i ||U - U^{-i}||_2.
//! ```

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::cone::{pair_loss, ConeBasis, PairSample};
use crate::data::{standardize, Dataset};
use crate::error::{Error, Result};
use crate::solver::{train_pairs, TrainConfig};

const POWER_MAX_ITERS: usize = 10_000;
const POWER_REL_TOL: f64 = 1e-10;
const POWER_SEED: u64 = 0x5eed_c0de;

/// Largest singular value, by power iteration on `M'M` from a seeded start.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() || m.amax() == 0.0 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(POWER_SEED);
    let mut v = DVector::from_fn(m.ncols(), |_, _| StandardNormal.sample(&mut rng));
    v.normalize_mut();
    let mut sigma = 0.0;
    for _ in 0..POWER_MAX_ITERS {
        let mv = m * &v;
        let next_sigma = mv.norm();
        let mut next = m.tr_mul(&mv);
        let len = next.norm();
        if len == 0.0 {
            return next_sigma;
        }
        next /= len;
        v = next;
        let done = (next_sigma - sigma).abs() <= POWER_REL_TOL * next_sigma;
        sigma = next_sigma;
        if done {
            break;
        }
    }
    (m * &v).norm().max(sigma)
}

/// The leave-one-query-out stability bound for losses constrained to
/// `||w||_1 <= lambda_u`.
pub fn stability_bound(s_max: f64, lambda_u: f64, rho: f64, k: usize, cap: f64) -> f64 {
    2.0 * s_max * lambda_u * (rho + (k as f64).sqrt() * cap * lambda_u) + s_max * s_max * lambda_u * lambda_u
}

/// High-probability bound on the expected risk,
/// `R_hat + 2 beta + (4 P beta + gamma) sqrt(ln(1/eps) / (2P))`.
/// Reported only.
pub fn generalization_bound(risk: f64, beta: f64, gamma: f64, p: usize, epsilon: f64) -> f64 {
    let p = p as f64;
    risk + 2.0 * beta + (4.0 * p * beta + gamma) * ((1.0 / epsilon).ln() / (2.0 * p)).sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub struct FoldStability {
    /// Index of the left-out query among the queries with pairs.
    pub left_out: usize,
    pub query_id: String,
    /// `||U - U^{-i}||_2`.
    pub basis_shift: f64,
    /// Largest unweighted pair-loss change for this fold.
    pub max_loss_change: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StabilityReport {
    pub queries: usize,
    pub beta_hat: f64,
    /// Same maximum over `phi`-weighted losses.
    pub beta_hat_weighted: f64,
    pub max_phi: f64,
    pub s_max: f64,
    pub bound: f64,
    pub lambda_u: f64,
    /// Largest unweighted pair loss under the full model.
    pub gamma_hat: f64,
    /// Unweighted empirical risk of the full model.
    pub risk: f64,
    pub epsilon: f64,
    pub generalization_bound: f64,
    pub holds: bool,
    pub per_fold: Vec<FoldStability>,
}

pub const DEFAULT_EPSILON: f64 = 0.05;

/// Runs the experiment on a dataset, standardized once with statistics of the
/// full dataset so all models see the same pair differences.
pub fn loqo_experiment(dataset: &Dataset, config: &TrainConfig) -> Result<StabilityReport> {
    config.validate()?;
    let (standardized, _) = standardize(dataset, None)?;
    let groups = standardized.pair_groups(config.hyper.normalization())?;
    loqo_pairs(&groups, dataset.dim, config)
}

/// The experiment on normalized pair groups; groups without pairs are
/// ignored.
pub fn loqo_pairs(groups: &[Vec<PairSample>], dim: usize, config: &TrainConfig) -> Result<StabilityReport> {
    let groups: Vec<Vec<PairSample>> = groups.iter().filter(|g| !g.is_empty()).cloned().collect();
    let p = groups.len();
    if p < 2 {
        return Err(Error::input(format!("need at least 2 queries with pairs, got {p}")));
    }
    let (full, _) = train_pairs(&groups, dim, config)?;
    let pairs: Vec<&PairSample> = groups.iter().flatten().collect();
    let losses = pair_losses(&full, &pairs)?;

    let folds: Vec<Result<(FoldStability, f64)>> = (0..p)
        .into_par_iter()
        .map(|i| {
            let rest: Vec<Vec<PairSample>> =
                groups.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, g)| g.clone()).collect();
            let (loo, _) = train_pairs(&rest, dim, config)?;
            let loo_losses = pair_losses(&loo, &pairs)?;
            let mut max_change = 0.0f64;
            let mut max_weighted = 0.0f64;
            for ((a, b), s) in losses.iter().zip(&loo_losses).zip(&pairs) {
                let d = (a - b).abs();
                max_change = max_change.max(d);
                max_weighted = max_weighted.max(s.phi * d);
            }
            let shift = spectral_norm(&(full.matrix() - loo.matrix()));
            let fold = FoldStability {
                left_out: i,
                query_id: groups[i][0].query_id.clone(),
                basis_shift: shift,
                max_loss_change: max_change,
            };
            Ok((fold, max_weighted))
        })
        .collect();

    let mut per_fold = Vec::with_capacity(p);
    let mut beta_hat_weighted = 0.0f64;
    for f in folds {
        let (fold, weighted) = f?;
        beta_hat_weighted = beta_hat_weighted.max(weighted);
        per_fold.push(fold);
    }
    let beta_hat = per_fold.iter().map(|f| f.max_loss_change).fold(0.0, f64::max);
    let s_max = per_fold.iter().map(|f| f.basis_shift).fold(0.0, f64::max);
    let hyper = &config.hyper;
    let bound = stability_bound(s_max, hyper.lambda_u, hyper.rho, full.order(), full.cap());
    let gamma_hat = losses.iter().copied().fold(0.0, f64::max);
    let max_phi = pairs.iter().map(|s| s.phi).fold(0.0, f64::max);

    let mut risk = 0.0;
    let mut offset = 0;
    for g in &groups {
        risk += losses[offset..offset + g.len()].iter().sum::<f64>() / g.len() as f64;
        offset += g.len();
    }
    risk /= p as f64;

    Ok(StabilityReport {
        queries: p,
        beta_hat,
        beta_hat_weighted,
        max_phi,
        s_max,
        bound,
        lambda_u: hyper.lambda_u,
        gamma_hat,
        risk,
        epsilon: DEFAULT_EPSILON,
        generalization_bound: generalization_bound(risk, beta_hat, gamma_hat, p, DEFAULT_EPSILON),
        holds: beta_hat <= bound,
        per_fold,
    })
}

fn pair_losses(basis: &ConeBasis, pairs: &[&PairSample]) -> Result<Vec<f64>> {
    pairs.par_iter().map(|s| pair_loss(basis, s, false)).collect()
}
