//! Alternating minimization of the relaxed cone objective
//!
//! ```text
//! min_U  1/P sum_q 1/n_q sum_j  phi_j ||z_j - U w_j||^2
//! s.t.   ||u_k|| <= c,  w_j >= 0,  ||w_j||_1 = 1
//! ```
//!
//! Each outer epoch folds pairs into the current basis (coefficients with `U`
//! fixed) and takes gradient steps on the basis (`U` with coefficients fixed).
//! The fold-in is solved by projected stochastic gradient (SG), by
//! exponentiated gradient (EG, exact or first-order approximate
//! multiplicative update), or exactly by the active-set solver.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::cone::{
    check_proper, empirical_risk, enforce_cap, ConeBasis, ConicCoefficients, HyperParams,
    PairSample, ProperDiagnostic, DEFAULT_PROPER_TOL,
};
use crate::data::{standardize, Dataset};
use crate::error::{Error, Result};
use crate::model::ConeModel;
use crate::projection::{fold_in_exact, gram_bound, project_simplex};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FoldInVariant {
    /// Additive projected gradient steps.
    Sg,
    /// Multiplicative update `w <- w * exp(-mu * grad)`.
    Eg,
    /// First-order approximation of the EG update (no exponential).
    EgApprox,
    /// Active-set solver; the fold-in is solved to optimality.
    Exact,
}

impl FoldInVariant {
    pub fn name(self) -> &'static str {
        match self {
            FoldInVariant::Sg => "sg",
            FoldInVariant::Eg => "eg",
            FoldInVariant::EgApprox => "eg-approx",
            FoldInVariant::Exact => "exact",
        }
    }
}

impl std::str::FromStr for FoldInVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sg" => Ok(FoldInVariant::Sg),
            "eg" => Ok(FoldInVariant::Eg),
            "eg-approx" | "eg_approx" => Ok(FoldInVariant::EgApprox),
            "exact" => Ok(FoldInVariant::Exact),
            other => Err(Error::InvalidConfig(format!("unknown fold-in variant '{other}'"))),
        }
    }
}

/// When the basis moves.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Schedule {
    /// One stochastic basis step after every pair's fold-in.
    PerPair,
    /// Fold in every pair, then one backtracking-line-searched full-gradient
    /// basis step per epoch.
    FullBatch,
}

/// How an SG step is brought back onto the simplex.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SimplexStep {
    /// Euclidean projection: shift by a threshold, clip at zero. The sum is
    /// one afterwards without rescaling.
    #[default]
    Projection,
    /// Clip at zero, then divide by the L1 norm. Its fixed points are biased
    /// away from the constrained optimum whenever the gradient has a nonzero
    /// component along the all-ones direction.
    ClipRenormalize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub hyper: HyperParams,
    pub variant: FoldInVariant,
    pub schedule: Schedule,
    pub simplex_step: SimplexStep,
    /// Scale pair losses by their relevance gap.
    pub weighted: bool,
    pub max_outer_epochs: usize,
    pub max_inner_iters: usize,
    /// Relative change of the empirical risk over one epoch.
    pub outer_tol: f64,
    /// Relative change of the fold-in objective over one step.
    pub inner_tol: f64,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(hyper: HyperParams) -> Self {
        TrainConfig {
            hyper,
            variant: FoldInVariant::Sg,
            schedule: Schedule::PerPair,
            simplex_step: SimplexStep::Projection,
            weighted: true,
            max_outer_epochs: 200,
            max_inner_iters: 1000,
            outer_tol: 1e-5,
            inner_tol: 1e-8,
            seed: 0,
        }
    }

    /// Learning rate of the configured variant.
    pub fn mu(&self) -> f64 {
        match self.variant {
            FoldInVariant::Sg | FoldInVariant::Exact => self.hyper.mu_sg,
            FoldInVariant::Eg | FoldInVariant::EgApprox => self.hyper.mu_eg,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        if self.max_outer_epochs == 0 || self.max_inner_iters == 0 {
            return Err(Error::InvalidConfig("iteration limits must be at least 1".into()));
        }
        if !(self.outer_tol > 0.0) || !(self.inner_tol > 0.0) {
            return Err(Error::InvalidConfig("tolerances must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    /// `(epoch, empirical risk)`; epoch 0 is the initial basis.
    pub risk_trace: Vec<(usize, f64)>,
    pub converged: bool,
    pub epochs_run: usize,
    pub proper: ProperDiagnostic,
}

impl TrainReport {
    pub fn initial_risk(&self) -> f64 {
        self.risk_trace.first().map(|t| t.1).unwrap_or(f64::NAN)
    }

    pub fn final_risk(&self) -> f64 {
        self.risk_trace.last().map(|t| t.1).unwrap_or(f64::NAN)
    }
}

/// Seeded standard-normal basis with every column rescaled to norm `c / 2`.
pub fn init_basis(n: usize, config: &TrainConfig) -> Result<ConeBasis> {
    let k = config.hyper.k;
    if k == 0 || k > n {
        return Err(Error::InvalidConfig(format!("need 1 <= K <= N, got K={k}, N={n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut u = DMatrix::from_fn(n, k, |_, _| rng.sample::<f64, _>(StandardNormal));
    let target = config.hyper.cap / 2.0;
    for (j, mut col) in u.column_iter_mut().enumerate() {
        let norm = col.norm();
        if norm > 0.0 {
            col *= target / norm;
        } else {
            col[j] = target;
        }
    }
    ConeBasis::new(u, config.hyper.cap)
}

/// Seeded `uniform(0,1)` draw, L1-normalized.
fn random_simplex_point<R: Rng + ?Sized>(k: usize, rng: &mut R) -> DVector<f64> {
    let mut w = DVector::from_fn(k, |_, _| rng.random::<f64>());
    let s = w.sum();
    if s > 0.0 {
        w /= s;
    } else {
        w.fill(1.0 / k as f64);
    }
    w
}

/// The fold-in objective `phi ||z - Uw||^2` for a fixed basis.
pub struct FoldInProblem<'a> {
    u: &'a DMatrix<f64>,
    z: &'a DVector<f64>,
    gram: DMatrix<f64>,
    utz: DVector<f64>,
    zz: f64,
    phi: f64,
}

impl<'a> FoldInProblem<'a> {
    pub fn new(basis: &'a ConeBasis, z: &'a DVector<f64>, phi: f64) -> Self {
        let u = basis.matrix();
        FoldInProblem { u, z, gram: u.tr_mul(u), utz: u.tr_mul(z), zz: z.norm_squared(), phi }
    }

    pub fn objective(&self, w: &DVector<f64>) -> f64 {
        let v = self.zz - 2.0 * w.dot(&self.utz) + w.dot(&(&self.gram * w));
        self.phi * v.max(0.0)
    }

    /// `dR/dw = -2 phi U'(z - Uw)`.
    pub fn gradient(&self, w: &DVector<f64>) -> DVector<f64> {
        (&self.gram * w - &self.utz) * (2.0 * self.phi)
    }

    /// Step size actually used by SG: `min(mu, 1/L)` with `L` an upper bound
    /// on the curvature `2 phi lambda_max(U'U)`.
    pub fn sg_step(&self, mu: f64) -> f64 {
        let l = 2.0 * self.phi * gram_bound(&self.gram);
        if l > 0.0 {
            mu.min(1.0 / l)
        } else {
            mu
        }
    }

    pub fn sg_update(&self, w: &mut DVector<f64>, step: f64, mode: SimplexStep) {
        let g = self.gradient(w);
        w.axpy(-step, &g, 1.0);
        match mode {
            SimplexStep::Projection => project_simplex(w),
            SimplexStep::ClipRenormalize => {
                w.iter_mut().for_each(|v| *v = v.max(0.0));
                let s = w.sum();
                if s > 0.0 {
                    *w /= s;
                } else {
                    w.fill(1.0 / w.len() as f64);
                }
            }
        }
    }

    /// `w_k <- w_k exp(-mu g_k)`, renormalized.
    pub fn eg_update(&self, w: &mut DVector<f64>, mu: f64) {
        let g = self.gradient(w);
        let gmin = g.min();
        for (wk, gk) in w.iter_mut().zip(g.iter()) {
            *wk = (*wk * (-mu * (gk - gmin)).exp()).max(f64::MIN_POSITIVE);
        }
        *w /= w.sum();
    }

    /// `w_k <- w_k (1 - mu (dR/dzhat)'(u_k - zhat))` with `zhat = Uw`; clamped
    /// at 1e-12 and renormalized.
    pub fn eg_approx_update(&self, w: &mut DVector<f64>, mu: f64) {
        let zhat = self.u * &*w;
        let dzhat = (&zhat - self.z) * (2.0 * self.phi);
        let base = dzhat.dot(&zhat);
        for (k, wk) in w.iter_mut().enumerate() {
            let dir = dzhat.dot(&self.u.column(k)) - base;
            *wk = (*wk * (1.0 - mu * dir)).max(1e-12);
        }
        *w /= w.sum();
    }
}

fn inner_converged(prev: f64, next: f64, tol: f64, floor: f64) -> bool {
    (prev - next).abs() <= tol * prev.abs().max(next.abs()) || next <= floor
}

/// Runs `step` from `w` until the relative objective change drops below
/// `inner_tol` or `max_inner_iters` steps. Returns the objective after every
/// step, starting with the initial one.
fn iterate<F>(problem: &FoldInProblem<'_>, w: &mut DVector<f64>, config: &TrainConfig, mut step: F) -> Vec<f64>
where
    F: FnMut(&FoldInProblem<'_>, &mut DVector<f64>),
{
    let floor = 1e-30 * (1.0 + problem.phi * problem.zz);
    let mut f = problem.objective(w);
    let mut trace = vec![f];
    for _ in 0..config.max_inner_iters {
        step(problem, w);
        let next = problem.objective(w);
        trace.push(next);
        let done = inner_converged(f, next, config.inner_tol, floor);
        f = next;
        if done {
            break;
        }
    }
    trace
}

/// Projected stochastic-gradient fold-in from a random simplex point.
pub fn sg_fold_in<R: Rng + ?Sized>(
    basis: &ConeBasis,
    z: &DVector<f64>,
    phi: f64,
    mu: f64,
    config: &TrainConfig,
    rng: &mut R,
) -> ConicCoefficients {
    sg_fold_in_traced(basis, z, phi, mu, config, rng).0
}

/// [`sg_fold_in`] that also returns the objective trace.
pub fn sg_fold_in_traced<R: Rng + ?Sized>(
    basis: &ConeBasis,
    z: &DVector<f64>,
    phi: f64,
    mu: f64,
    config: &TrainConfig,
    rng: &mut R,
) -> (ConicCoefficients, Vec<f64>) {
    let problem = FoldInProblem::new(basis, z, phi);
    let mut w = random_simplex_point(basis.order(), rng);
    let step = problem.sg_step(mu);
    let mode = config.simplex_step;
    let trace = iterate(&problem, &mut w, config, |p, w| p.sg_update(w, step, mode));
    (ConicCoefficients(w), trace)
}

/// Exponentiated-gradient fold-in from a random (strictly positive) simplex
/// point; `approx` selects the first-order update.
pub fn eg_fold_in<R: Rng + ?Sized>(
    basis: &ConeBasis,
    z: &DVector<f64>,
    phi: f64,
    mu: f64,
    config: &TrainConfig,
    approx: bool,
    rng: &mut R,
) -> ConicCoefficients {
    eg_fold_in_traced(basis, z, phi, mu, config, approx, rng).0
}

pub fn eg_fold_in_traced<R: Rng + ?Sized>(
    basis: &ConeBasis,
    z: &DVector<f64>,
    phi: f64,
    mu: f64,
    config: &TrainConfig,
    approx: bool,
    rng: &mut R,
) -> (ConicCoefficients, Vec<f64>) {
    let problem = FoldInProblem::new(basis, z, phi);
    let mut w = random_simplex_point(basis.order(), rng);
    w.iter_mut().for_each(|v| *v = v.max(1e-12));
    w /= w.sum();
    let trace = if approx {
        iterate(&problem, &mut w, config, |p, w| p.eg_approx_update(w, mu))
    } else {
        iterate(&problem, &mut w, config, |p, w| p.eg_update(w, mu))
    };
    (ConicCoefficients(w), trace)
}

fn fold_in<R: Rng + ?Sized>(
    basis: &ConeBasis,
    z: &DVector<f64>,
    phi: f64,
    config: &TrainConfig,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let mu = config.mu();
    Ok(match config.variant {
        FoldInVariant::Sg => sg_fold_in(basis, z, phi, mu, config, rng).0,
        FoldInVariant::Eg => eg_fold_in(basis, z, phi, mu, config, false, rng).0,
        FoldInVariant::EgApprox => eg_fold_in(basis, z, phi, mu, config, true, rng).0,
        FoldInVariant::Exact => fold_in_exact(basis, z)?.0 .0,
    })
}

/// A pair with frozen coefficients, contributing `weight * phi * ||z - Uw||^2`
/// to the basis objective.
#[derive(Clone, Copy, Debug)]
pub struct FoldedPair<'a> {
    pub z: &'a DVector<f64>,
    pub w: &'a DVector<f64>,
    pub phi: f64,
    /// Query-level averaging factor, `1 / (P n_q)` for the empirical risk.
    pub weight: f64,
}

/// Basis objective with coefficients held fixed.
pub fn folded_risk(u: &DMatrix<f64>, batch: &[FoldedPair<'_>]) -> f64 {
    batch.iter().map(|p| p.weight * p.phi * (p.z - u * p.w).norm_squared()).sum()
}

/// Gradient of [`folded_risk`] in `U`: column `k` is
/// `-2 sum weight phi (z - Uw) w_k`.
pub fn basis_gradient(u: &DMatrix<f64>, batch: &[FoldedPair<'_>]) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(u.nrows(), u.ncols());
    for p in batch {
        let r = p.z - u * p.w;
        g.ger(-2.0 * p.weight * p.phi, &r, p.w, 1.0);
    }
    g
}

/// One gradient step `u_k <- u_k - mu dR/du_k`, after which columns longer
/// than `c` are scaled back to norm `c`.
pub fn basis_update(basis: &ConeBasis, batch: &[FoldedPair<'_>], mu: f64) -> ConeBasis {
    let g = basis_gradient(basis.matrix(), batch);
    let mut out = basis.clone();
    out.set_capped(basis.matrix() - g * mu);
    out
}

/// Projected-gradient basis step with backtracking. Returns the accepted
/// step (0 if no decrease was found, in which case the basis is unchanged).
fn line_search_update(basis: &mut ConeBasis, batch: &[FoldedPair<'_>], initial: f64) -> f64 {
    let u = basis.matrix().clone();
    let f0 = folded_risk(&u, batch);
    let g = basis_gradient(&u, batch);
    let mut t = initial;
    for _ in 0..80 {
        let mut cand = &u - &g * t;
        enforce_cap(&mut cand, basis.cap());
        let d = &cand - &u;
        let f = folded_risk(&cand, batch);
        let model = f0 + g.dot(&d) + d.norm_squared() / (2.0 * t);
        if f <= model && f <= f0 {
            basis.set_capped(cand);
            return t;
        }
        t *= 0.5;
    }
    0.0
}

/// Trains on a standardized copy of `dataset`; the returned model carries
/// the standardization statistics.
pub fn train(dataset: &Dataset, config: &TrainConfig) -> Result<(ConeModel, TrainReport)> {
    config.validate()?;
    let (standardized, stats) = standardize(dataset, None)?;
    let norm = config.hyper.normalization();
    let groups = standardized.pair_groups(norm)?;
    let (basis, report) = train_pairs(&groups, dataset.dim, config)?;
    Ok((ConeModel::new(basis, stats, norm)?, report))
}

/// Trains on already-normalized pair groups (one group per query).
pub fn train_pairs(groups: &[Vec<PairSample>], dim: usize, config: &TrainConfig) -> Result<(ConeBasis, TrainReport)> {
    config.validate()?;
    let groups: Vec<&Vec<PairSample>> = groups.iter().filter(|g| !g.is_empty()).collect();
    if groups.is_empty() {
        return Err(Error::input("no query has any ordered pair"));
    }
    if let Some(p) = groups.iter().flat_map(|g| g.iter()).find(|p| p.z.len() != dim) {
        return Err(Error::input(format!("pair of dimension {} in a {dim}-dimensional problem", p.z.len())));
    }
    let owned: Vec<Vec<PairSample>> = groups.iter().map(|g| (*g).clone()).collect();
    let mut basis = init_basis(dim, config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);

    let p_count = groups.len() as f64;
    let pairs: Vec<(&PairSample, f64)> = groups
        .iter()
        .flat_map(|g| {
            let weight = 1.0 / (p_count * g.len() as f64);
            g.iter().map(move |s| (s, weight))
        })
        .collect();
    let total = pairs.len() as f64;
    let phi_of = |s: &PairSample| if config.weighted { s.phi } else { 1.0 };
    let mu = config.mu();

    let risk = |b: &ConeBasis| -> Result<f64> {
        let r = empirical_risk(b, &owned, config.weighted)?;
        if r.is_finite() {
            Ok(r)
        } else {
            Err(Error::Numerical("empirical risk is not finite".into()))
        }
    };

    let mut trace = vec![(0, risk(&basis)?)];
    let mut converged = false;
    let mut epochs_run = 0;
    let mut step = mu;
    let mut order: Vec<usize> = (0..pairs.len()).collect();

    for epoch in 1..=config.max_outer_epochs {
        match config.schedule {
            Schedule::PerPair => {
                shuffle(&mut order, &mut rng);
                for &i in &order {
                    let (s, weight) = pairs[i];
                    let phi = phi_of(s);
                    let w = fold_in(&basis, &s.z, phi, config, &mut rng)?;
                    // scaled so that the expected step follows the risk gradient
                    let item = FoldedPair { z: &s.z, w: &w, phi, weight: weight * total };
                    basis = basis_update(&basis, &[item], mu);
                }
            }
            Schedule::FullBatch => {
                let ws = pairs
                    .iter()
                    .map(|(s, _)| fold_in(&basis, &s.z, phi_of(s), config, &mut rng))
                    .collect::<Result<Vec<_>>>()?;
                let batch: Vec<FoldedPair<'_>> = pairs
                    .iter()
                    .zip(&ws)
                    .map(|((s, weight), w)| FoldedPair { z: &s.z, w, phi: phi_of(s), weight: *weight })
                    .collect();
                let accepted = line_search_update(&mut basis, &batch, step * 2.0);
                if accepted > 0.0 {
                    step = accepted;
                }
            }
        }
        epochs_run = epoch;
        let prev = trace.last().map(|t| t.1).unwrap_or(f64::INFINITY);
        let r = risk(&basis)?;
        trace.push((epoch, r));
        if (prev - r).abs() <= config.outer_tol * prev.abs() {
            converged = true;
            break;
        }
    }

    let proper = check_proper(&basis, DEFAULT_PROPER_TOL);
    Ok((basis, TrainReport { risk_trace: trace, converged, epochs_run, proper }))
}

/// Fisher-Yates with the training generator.
fn shuffle<R: Rng + ?Sized>(v: &mut [usize], rng: &mut R) {
    for i in (1..v.len()).rev() {
        let j = rng.random_range(0..=i);
        v.swap(i, j);
    }
}
