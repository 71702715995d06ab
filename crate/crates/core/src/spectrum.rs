//! Eigenvalues of the non-centered second moment `(1/M) sum z z'` of the
//! normalized pair differences.

use nalgebra::DMatrix;

use crate::cone::PairSample;
use crate::error::{Error, Result};

/// Descending eigenvalues; round-off negatives are clamped to zero.
pub fn pair_spectrum(groups: &[Vec<PairSample>]) -> Result<Vec<f64>> {
    let mut pairs = groups.iter().flatten().peekable();
    let n = match pairs.peek() {
        Some(s) => s.z.len(),
        None => return Err(Error::input("no ordered pairs: every query has a single relevance level")),
    };
    let mut moment = DMatrix::<f64>::zeros(n, n);
    let mut m = 0usize;
    for s in pairs {
        if s.z.len() != n {
            return Err(Error::input(format!("pair of dimension {} among pairs of dimension {n}", s.z.len())));
        }
        moment.syger(1.0, &s.z, &s.z, 1.0);
        m += 1;
    }
    moment /= m as f64;
    // syger fills only the lower triangle
    moment.fill_upper_triangle_with_lower_triangle();
    let mut eig: Vec<f64> = moment.symmetric_eigenvalues().iter().map(|&v| v.max(0.0)).collect();
    eig.sort_unstable_by(|a, b| b.total_cmp(a));
    Ok(eig)
}
