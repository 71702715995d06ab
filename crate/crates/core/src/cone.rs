//! Domain types and the cone primitives: pair normalization, losses and
//! the query-level empirical risk.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::projection::fold_in_exact;

/// A document's standardized feature vector.
pub type FeatureVector = DVector<f64>;

/// Relative slack allowed on the column-norm cap when validating a basis.
const CAP_SLACK: f64 = 1e-12;

/// Shrinkage applied to pair differences: `z <- rho * z / (alpha + ||z||)`.
///
/// Large differences saturate towards norm `rho`; small (noisy) ones are
/// damped by `alpha`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Normalization {
    pub alpha: f64,
    pub rho: f64,
}

impl Normalization {
    pub fn new(alpha: f64, rho: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) || !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "normalization needs alpha > 0 and rho > 0, got alpha={alpha}, rho={rho}"
            )));
        }
        Ok(Normalization { alpha, rho })
    }

    /// `alpha = 1`, `rho = sqrt(n)`.
    pub fn for_dim(n: usize) -> Self {
        Normalization { alpha: 1.0, rho: (n as f64).sqrt() }
    }

    pub fn apply(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        normalize_pair(z, self.alpha, self.rho)
    }
}

pub fn normalize_pair(z: &DVector<f64>, alpha: f64, rho: f64) -> Result<DVector<f64>> {
    if !(alpha > 0.0) || !(rho > 0.0) || !alpha.is_finite() || !rho.is_finite() {
        return Err(Error::input(format!("alpha and rho must be positive, got {alpha}, {rho}")));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("pair difference has non-finite entries"));
    }
    let scale = rho / (alpha + z.norm());
    Ok(z * scale)
}

/// An ordered document-pair difference with its relevance gap.
///
/// `z = x[doc_hi] - x[doc_lo]` (usually normalized) where the relevance of
/// `doc_hi` exceeds that of `doc_lo` by `phi > 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct PairSample {
    pub z: DVector<f64>,
    pub phi: f64,
    pub query_id: String,
    pub doc_hi: usize,
    pub doc_lo: usize,
}

impl PairSample {
    fn weight(&self, weighted: bool) -> f64 {
        if weighted {
            self.phi
        } else {
            1.0
        }
    }
}

/// The basis `U = [u_1 .. u_K]` (an `N x K` matrix) of a polyhedral cone,
/// together with the cap `c` on every column norm.
#[derive(Clone, Debug, PartialEq)]
pub struct ConeBasis {
    u: DMatrix<f64>,
    cap: f64,
}

impl ConeBasis {
    pub fn new(u: DMatrix<f64>, cap: f64) -> Result<Self> {
        let (n, k) = u.shape();
        if k == 0 {
            return Err(Error::InvalidModel("basis has no columns (K = 0)".into()));
        }
        if k > n {
            return Err(Error::InvalidModel(format!("basis order K={k} exceeds dimension N={n}")));
        }
        if !(cap > 0.0 && cap.is_finite()) {
            return Err(Error::InvalidModel(format!("column-norm cap must be positive, got {cap}")));
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel("basis has non-finite entries".into()));
        }
        for (j, col) in u.column_iter().enumerate() {
            let norm = col.norm();
            if norm > cap * (1.0 + CAP_SLACK) {
                return Err(Error::InvalidModel(format!(
                    "column {j} has norm {norm} above the cap {cap}"
                )));
            }
        }
        Ok(ConeBasis { u, cap })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn cap(&self) -> f64 {
        self.cap
    }

    /// Feature dimension `N`.
    pub fn dim(&self) -> usize {
        self.u.nrows()
    }

    /// Number of basis vectors `K`.
    pub fn order(&self) -> usize {
        self.u.ncols()
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.u
    }

    /// Replaces the matrix, rescaling any column whose norm exceeds the cap
    /// back to norm exactly `cap`. Columns within the cap are untouched.
    pub(crate) fn set_capped(&mut self, mut u: DMatrix<f64>) {
        debug_assert_eq!(u.shape(), self.u.shape());
        enforce_cap(&mut u, self.cap);
        self.u = u;
    }
}

pub(crate) fn enforce_cap(u: &mut DMatrix<f64>, cap: f64) {
    for mut col in u.column_iter_mut() {
        let norm = col.norm();
        if norm > cap {
            col *= cap / norm;
        }
    }
}

/// Non-negative combination weights of the basis vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct ConicCoefficients(pub DVector<f64>);

impl ConicCoefficients {
    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }

    pub fn l1(&self) -> f64 {
        self.0.iter().map(|v| v.abs()).sum()
    }

    /// `w >= 0` and `| ||w||_1 - 1 | <= tol`.
    pub fn on_simplex(&self, tol: f64) -> bool {
        self.0.iter().all(|&v| v >= 0.0) && (self.l1() - 1.0).abs() <= tol
    }
}

/// Model and optimizer hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct HyperParams {
    pub k: usize,
    pub alpha: f64,
    pub rho: f64,
    /// Column-norm cap `c`.
    pub cap: f64,
    pub mu_sg: f64,
    pub mu_eg: f64,
    /// Upper bound on `||w||_1`; training fixes `||w||_1 = 1`, so this only
    /// enters the stability bound.
    pub lambda_u: f64,
}

impl HyperParams {
    /// Defaults for an `n`-dimensional feature space: `alpha = 1`,
    /// `rho = sqrt(n)`, `c = 2 rho`, `K = min(10, n)`, `mu = 0.001` (SG) and
    /// `0.005` (EG).
    pub fn for_dim(n: usize) -> Self {
        let rho = (n as f64).sqrt();
        HyperParams {
            k: n.min(10),
            alpha: 1.0,
            rho,
            cap: 2.0 * rho,
            mu_sg: 0.001,
            mu_eg: 0.005,
            lambda_u: 1.0,
        }
    }

    pub fn normalization(&self) -> Normalization {
        Normalization { alpha: self.alpha, rho: self.rho }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} must be positive and finite, got {v}")))
            }
        };
        if self.k == 0 {
            return Err(Error::InvalidConfig("K must be at least 1".into()));
        }
        positive("alpha", self.alpha)?;
        positive("rho", self.rho)?;
        positive("c", self.cap)?;
        positive("mu_sg", self.mu_sg)?;
        positive("mu_eg", self.mu_eg)?;
        positive("lambda_u", self.lambda_u)
    }
}

/// Squared distance from the pair difference to the simplex face of the cone,
/// scaled by `phi` when `weighted`.
pub fn pair_loss(basis: &ConeBasis, sample: &PairSample, weighted: bool) -> Result<f64> {
    let (_, residual) = fold_in_exact(basis, &sample.z)?;
    Ok(sample.weight(weighted) * residual * residual)
}

/// Mean pair loss over one query's pairs.
pub fn query_loss(basis: &ConeBasis, samples: &[PairSample], weighted: bool) -> Result<f64> {
    let first = samples.first().ok_or_else(|| Error::input("query has no pairs"))?;
    let mut total = 0.0;
    for s in samples {
        if s.query_id != first.query_id {
            return Err(Error::input(format!(
                "pairs from queries {} and {} mixed in one query loss",
                first.query_id, s.query_id
            )));
        }
        total += pair_loss(basis, s, weighted)?;
    }
    Ok(total / samples.len() as f64)
}

/// Mean of the query losses. Queries without pairs do not count.
pub fn empirical_risk(basis: &ConeBasis, groups: &[Vec<PairSample>], weighted: bool) -> Result<f64> {
    let mut total = 0.0;
    let mut used = 0usize;
    for g in groups.iter().filter(|g| !g.is_empty()) {
        total += query_loss(basis, g, weighted)?;
        used += 1;
    }
    if used == 0 {
        return Err(Error::input("no query has any ordered pair"));
    }
    Ok(total / used as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProperDiagnostic {
    pub proper: bool,
    /// Smallest over largest singular value (0 for a zero matrix).
    pub ratio: f64,
    pub singular_values: Vec<f64>,
}

/// A polyhedral cone with `K <= N` generators is proper when the generators
/// are linearly independent; judged numerically by the singular-value ratio.
pub fn check_proper(basis: &ConeBasis, tol: f64) -> ProperDiagnostic {
    let mut sv: Vec<f64> = basis.matrix().clone().singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    let max = sv.first().copied().unwrap_or(0.0);
    let min = sv.last().copied().unwrap_or(0.0);
    let ratio = if max > 0.0 { min / max } else { 0.0 };
    ProperDiagnostic {
        proper: basis.order() <= basis.dim() && ratio > tol,
        ratio,
        singular_values: sv,
    }
}

pub const DEFAULT_PROPER_TOL: f64 = 1e-10;

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    fn sample(z: DVector<f64>, phi: f64, q: &str) -> PairSample {
        PairSample { z, phi, query_id: q.into(), doc_hi: 0, doc_lo: 1 }
    }

    #[test]
    fn normalize_zero_vector() {
        let z = DVector::zeros(4);
        assert_eq!(normalize_pair(&z, 0.5, 3.0).unwrap(), z);
    }

    #[test]
    fn normalize_three_four() {
        let out = normalize_pair(&dvector![3.0, 4.0], 1.0, 2.0).unwrap();
        assert!((out[0] - 1.0).abs() < 1e-15);
        assert!((out[1] - 4.0 / 3.0).abs() < 1e-15);
        assert!((out.norm() - 5.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn normalize_rejects_non_finite() {
        assert!(matches!(
            normalize_pair(&dvector![1.0, f64::NAN], 1.0, 1.0),
            Err(Error::InvalidInput(_))
        ));
        assert!(normalize_pair(&dvector![1.0], 0.0, 1.0).is_err());
    }

    #[test]
    fn defaults_follow_dimension() {
        let h = HyperParams::for_dim(46);
        assert_eq!(h.k, 10);
        assert_eq!(h.alpha, 1.0);
        assert!((h.rho - 46f64.sqrt()).abs() < 1e-15);
        assert!((h.cap - 2.0 * 46f64.sqrt()).abs() < 1e-15);
        assert_eq!((h.mu_sg, h.mu_eg), (0.001, 0.005));
        h.validate().unwrap();
    }

    #[test]
    fn basis_validation() {
        assert!(ConeBasis::new(DMatrix::zeros(3, 0), 1.0).is_err());
        assert!(ConeBasis::new(DMatrix::identity(2, 3), 1.0).is_err());
        assert!(ConeBasis::new(DMatrix::identity(3, 2) * 2.0, 1.0).is_err());
        assert!(ConeBasis::new(DMatrix::identity(3, 2), 1.0).is_ok());
    }

    #[test]
    fn weighted_loss_scales_by_phi() {
        let basis = ConeBasis::new(DMatrix::identity(2, 2), 1.0).unwrap();
        let s = sample(dvector![-1.0, 0.5], 2.0, "q");
        let plain = pair_loss(&basis, &s, false).unwrap();
        let weighted = pair_loss(&basis, &s, true).unwrap();
        assert!(plain > 0.0);
        assert_eq!(weighted, 2.0 * plain);
    }

    #[test]
    fn loss_zero_inside_simplex() {
        let basis = ConeBasis::new(DMatrix::identity(2, 2), 1.0).unwrap();
        let s = sample(dvector![0.3, 0.7], 1.0, "q");
        assert!(pair_loss(&basis, &s, true).unwrap() < 1e-20);
    }

    #[test]
    fn query_loss_means() {
        let basis = ConeBasis::new(DMatrix::identity(2, 2), 1.0).unwrap();
        let a = sample(dvector![-1.0, 0.0], 1.0, "q");
        let b = sample(dvector![2.0, 0.0], 1.0, "q");
        let la = pair_loss(&basis, &a, false).unwrap();
        let lb = pair_loss(&basis, &b, false).unwrap();
        assert_eq!(query_loss(&basis, std::slice::from_ref(&a), false).unwrap(), la);
        let q = query_loss(&basis, &[a.clone(), b.clone()], false).unwrap();
        assert!((q - (la + lb) / 2.0).abs() < 1e-15);
        assert!(query_loss(&basis, &[], false).is_err());
        let other = sample(dvector![0.0, 1.0], 1.0, "r");
        assert!(query_loss(&basis, &[a, other], false).is_err());
    }

    #[test]
    fn risk_skips_empty_queries() {
        let basis = ConeBasis::new(DMatrix::identity(2, 2), 1.0).unwrap();
        let a = vec![sample(dvector![-1.0, 0.0], 1.0, "a")];
        let b = vec![sample(dvector![0.0, 3.0], 2.0, "b")];
        let la = query_loss(&basis, &a, true).unwrap();
        let lb = query_loss(&basis, &b, true).unwrap();
        let r = empirical_risk(&basis, &[a.clone(), vec![], b], true).unwrap();
        assert!((r - (la + lb) / 2.0).abs() < 1e-15);
        assert_eq!(empirical_risk(&basis, &[a], true).unwrap(), la);
        assert!(empirical_risk(&basis, &[vec![], vec![]], true).is_err());
    }

    #[test]
    fn proper_identity_and_duplicates() {
        let id = ConeBasis::new(DMatrix::identity(3, 3), 1.0).unwrap();
        let d = check_proper(&id, DEFAULT_PROPER_TOL);
        assert!(d.proper);
        assert!((d.ratio - 1.0).abs() < 1e-12);

        let dup = DMatrix::from_column_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let d = check_proper(&ConeBasis::new(dup, 1.0).unwrap(), DEFAULT_PROPER_TOL);
        assert!(!d.proper);
    }
}
