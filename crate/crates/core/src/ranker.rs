//! Query-level prediction.
//!
//! A candidate difference is folded into the trained basis by unconstrained
//! least squares. A positive coefficient sum means the difference looks like
//! a cone member, i.e. the presented order is the preferred one. Each
//! unordered document pair casts one vote and the ranking sorts documents by
//! votes.

use nalgebra::{DMatrix, DVector};

use crate::cone::{ConeBasis, FeatureVector, Normalization};
use crate::error::{Error, Result};

/// Ridge added to `U'U`, relative to its mean diagonal.
const RIDGE: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Orientation {
    /// The presented order `(l, m)` is preferred.
    Forward,
    Reverse,
}

impl Orientation {
    pub fn sign(self) -> i8 {
        match self {
            Orientation::Forward => 1,
            Orientation::Reverse => -1,
        }
    }
}

/// Precomputed `(U'U + eps I)^{-1} U'` for a frozen basis.
#[derive(Clone, Debug)]
pub struct Predictor {
    solve: DMatrix<f64>,
}

impl Predictor {
    pub fn new(basis: &ConeBasis) -> Self {
        let u = basis.matrix();
        let k = u.ncols();
        let mut gram = u.tr_mul(u);
        let eps = RIDGE * (gram.trace() / k as f64).max(f64::MIN_POSITIVE);
        for i in 0..k {
            gram[(i, i)] += eps;
        }
        let ut = u.transpose();
        let solve = match gram.clone().cholesky() {
            Some(ch) => ch.solve(&ut),
            None => gram
                .pseudo_inverse(1e-14)
                .map(|p| p * &ut)
                .unwrap_or_else(|_| DMatrix::zeros(k, u.nrows())),
        };
        Predictor { solve }
    }

    /// Least-squares coefficients without sign or sum constraints.
    pub fn coefficients(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.solve * z
    }

    /// `Forward` iff the coefficient sum is non-negative.
    pub fn predict(&self, z: &DVector<f64>) -> Orientation {
        if self.coefficients(z).sum() >= 0.0 {
            Orientation::Forward
        } else {
            Orientation::Reverse
        }
    }
}

pub fn predict_pair(basis: &ConeBasis, z: &DVector<f64>) -> Orientation {
    Predictor::new(basis).predict(z)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RankingResult {
    /// Document indices, best first.
    pub ordered_doc_indices: Vec<usize>,
    /// Votes per document, indexed by original document index.
    pub scores: Vec<u32>,
}

/// Ranks the (standardized) documents of one query by pairwise votes.
/// Ties in votes go to the lower document index.
pub fn rank_query(basis: &ConeBasis, docs: &[FeatureVector], norm: Normalization) -> Result<RankingResult> {
    if docs.is_empty() {
        return Err(Error::input("cannot rank a query without documents"));
    }
    let predictor = Predictor::new(basis);
    let mut votes = vec![0u32; docs.len()];
    for l in 0..docs.len() {
        for m in (l + 1)..docs.len() {
            let z = norm.apply(&(&docs[l] - &docs[m]))?;
            match predictor.predict(&z) {
                Orientation::Forward => votes[l] += 1,
                Orientation::Reverse => votes[m] += 1,
            }
        }
    }
    let mut order: Vec<usize> = (0..docs.len()).collect();
    order.sort_by(|&a, &b| votes[b].cmp(&votes[a]).then(a.cmp(&b)));
    Ok(RankingResult { ordered_doc_indices: order, scores: votes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;
    use proptest::prelude::*;

    fn basis() -> ConeBasis {
        ConeBasis::new(DMatrix::from_column_slice(3, 2, &[1.0, 0.2, 0.0, 0.1, 1.0, 0.3]), 2.0).unwrap()
    }

    #[test]
    fn conic_member_is_forward() {
        let b = basis();
        let z = b.matrix() * dvector![0.3, 2.0];
        assert_eq!(predict_pair(&b, &z), Orientation::Forward);
        assert_eq!(predict_pair(&b, &-z), Orientation::Reverse);
    }

    #[test]
    fn zero_sum_counts_forward() {
        let b = basis();
        assert_eq!(predict_pair(&b, &DVector::zeros(3)), Orientation::Forward);
    }

    #[test]
    fn unconstrained_coefficients_recover_combination() {
        let b = basis();
        let w = dvector![-0.7, 1.3];
        let c = Predictor::new(&b).coefficients(&(b.matrix() * &w));
        assert!((c - w).amax() < 1e-8);
    }

    #[test]
    fn single_and_two_documents() {
        let b = basis();
        let norm = Normalization::for_dim(3);
        let r = rank_query(&b, &[dvector![1.0, 2.0, 3.0]], norm).unwrap();
        assert_eq!(r.ordered_doc_indices, vec![0]);
        assert_eq!(r.scores, vec![0]);

        let lo = dvector![0.0, 0.0, 0.0];
        let hi = b.matrix() * dvector![1.0, 1.0];
        let r = rank_query(&b, &[lo, hi], norm).unwrap();
        assert_eq!(r.ordered_doc_indices, vec![1, 0]);
        assert_eq!(r.scores, vec![0, 1]);
        assert!(rank_query(&b, &[], norm).is_err());
    }

    proptest! {
        #[test]
        fn votes_conserved_and_permutation(xs in proptest::collection::vec(proptest::collection::vec(-3.0f64..3.0, 3), 1..9)) {
            let b = basis();
            let docs: Vec<FeatureVector> = xs.iter().map(|x| DVector::from_column_slice(x)).collect();
            let r = rank_query(&b, &docs, Normalization::for_dim(3)).unwrap();
            let n = docs.len();
            prop_assert_eq!(r.scores.iter().map(|&v| v as usize).sum::<usize>(), n * (n - 1) / 2);
            let mut seen = r.ordered_doc_indices.clone();
            seen.sort_unstable();
            prop_assert_eq!(seen, (0..n).collect::<Vec<_>>());
            for w in r.ordered_doc_indices.windows(2) {
                prop_assert!(r.scores[w[0]] >= r.scores[w[1]]);
            }
        }

        #[test]
        fn reversing_document_order_preserves_votes(xs in proptest::collection::vec(proptest::collection::vec(-3.0f64..3.0, 3), 2..8)) {
            let b = basis();
            let docs: Vec<FeatureVector> = xs.iter().map(|x| DVector::from_column_slice(x)).collect();
            let rev: Vec<FeatureVector> = docs.iter().rev().cloned().collect();
            let norm = Normalization::for_dim(3);
            let a = rank_query(&b, &docs, norm).unwrap();
            let r = rank_query(&b, &rev, norm).unwrap();
            let n = docs.len();
            // votes can only differ on exact zero sums, which random data does not hit
            for i in 0..n {
                prop_assert_eq!(a.scores[i], r.scores[n - 1 - i]);
            }
        }
    }
}
