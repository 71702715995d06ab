//! Planted-cone synthetic data.
//!
//! A ground-truth basis `U*` (orthonormal columns scaled to norm `c / 2`,
//! `c = 2 sqrt(N)`) is drawn first. In each query the documents, sorted by a
//! latent score, sit at `o + U* t_j + e_j` where `o` is a per-query offset and
//! `t_{j+1} = t_j + d_j` with `d_j` drawn from `uniform(0,1)^K`. Any higher
//! minus lower document difference is therefore `U* w + noise` with `w >= 0`.
//! Per-document noise has standard deviation `noise_std / sqrt(2)`, so pair
//! differences carry noise of standard deviation `noise_std`. Labels are
//! latent-score terciles mapped to {0, 1, 2}.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::cone::ConeBasis;
use crate::data::{Dataset, QueryGroup};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub dim: usize,
    pub k_true: usize,
    pub num_queries: usize,
    pub docs_per_query: usize,
    pub noise_std: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.k_true == 0 || self.k_true > self.dim {
            return Err(Error::InvalidConfig(format!(
                "need 1 <= K_true <= N, got K_true={}, N={}",
                self.k_true, self.dim
            )));
        }
        if self.num_queries == 0 || self.docs_per_query == 0 {
            return Err(Error::InvalidConfig("need at least one query and one document per query".into()));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::InvalidConfig(format!("noise_std must be >= 0, got {}", self.noise_std)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthData {
    pub dataset: Dataset,
    pub truth: ConeBasis,
    /// Latent score of every document (higher is better), per query.
    pub latent: Vec<Vec<f64>>,
}

pub fn synth_generate(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let (n, k) = (spec.dim, spec.k_true);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    // training uses streams 0 and 1 of its seed; keep data draws independent
    rng.set_stream(2);
    let cap = 2.0 * (n as f64).sqrt();

    let raw = DMatrix::from_fn(n, k, |_, _| rng.sample::<f64, _>(StandardNormal));
    let q = raw.qr().q();
    let truth = ConeBasis::new(q.columns(0, k) * (cap / 2.0), cap)?;

    let doc_noise = spec.noise_std / std::f64::consts::SQRT_2;
    let d = spec.docs_per_query;
    let mut queries = Vec::with_capacity(spec.num_queries);
    let mut latent = Vec::with_capacity(spec.num_queries);
    for qi in 0..spec.num_queries {
        let offset = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut t = DVector::from_fn(k, |_, _| rng.random::<f64>());
        let mut by_rank = Vec::with_capacity(d);
        for _ in 0..d {
            let noise = DVector::from_fn(n, |_, _| doc_noise * rng.sample::<f64, _>(StandardNormal));
            by_rank.push(&offset + truth.matrix() * &t + noise);
            t += DVector::from_fn(k, |_, _| rng.random::<f64>());
        }
        // present documents in a random order
        let mut perm: Vec<usize> = (0..d).collect();
        for i in (1..d).rev() {
            let j = rng.random_range(0..=i);
            perm.swap(i, j);
        }
        let docs = perm.iter().map(|&r| by_rank[r].clone()).collect();
        let rels = perm.iter().map(|&r| (3 * r / d) as u32).collect();
        latent.push(perm.iter().map(|&r| r as f64).collect());
        queries.push(QueryGroup::new(format!("{}", qi + 1), docs, rels));
    }
    Ok(SynthData { dataset: Dataset::new(n, queries)?, truth, latent })
}

impl SynthData {
    /// Splits off the last `count` queries (with their latent scores).
    pub fn split_off(&mut self, count: usize) -> SynthData {
        let at = self.dataset.queries.len().saturating_sub(count);
        SynthData {
            dataset: Dataset { dim: self.dataset.dim, queries: self.dataset.queries.split_off(at) },
            truth: self.truth.clone(),
            latent: self.latent.split_off(at),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cone::Normalization;
    use crate::projection::fold_in_cone;

    fn spec(noise: f64) -> SynthSpec {
        SynthSpec { dim: 6, k_true: 2, num_queries: 4, docs_per_query: 7, noise_std: noise, seed: 11 }
    }

    #[test]
    fn deterministic() {
        assert_eq!(synth_generate(&spec(0.1)).unwrap(), synth_generate(&spec(0.1)).unwrap());
        let mut other = spec(0.1);
        other.seed = 12;
        assert_ne!(synth_generate(&other).unwrap(), synth_generate(&spec(0.1)).unwrap());
    }

    #[test]
    fn noiseless_pairs_lie_in_truth_cone() {
        let data = synth_generate(&spec(0.0)).unwrap();
        let norm = Normalization::for_dim(6);
        for (q, lat) in data.dataset.queries.iter().zip(&data.latent) {
            for l in 0..q.len() {
                for m in 0..q.len() {
                    if lat[l] > lat[m] {
                        let z = norm.apply(&(&q.docs[l] - &q.docs[m])).unwrap();
                        let (_, r) = fold_in_cone(&data.truth, &z).unwrap();
                        assert!(r < 1e-8, "residual {r}");
                    }
                }
            }
        }
    }

    #[test]
    fn labels_are_terciles() {
        let data = synth_generate(&SynthSpec { docs_per_query: 10, ..spec(0.0) }).unwrap();
        for (q, lat) in data.dataset.queries.iter().zip(&data.latent) {
            let mut counts = [0; 3];
            for (&r, &s) in q.relevances.iter().zip(lat) {
                counts[r as usize] += 1;
                assert_eq!(r, (3 * s as usize / 10) as u32);
            }
            assert_eq!(counts, [4, 3, 3]);
        }
    }

    #[test]
    fn truth_columns_orthogonal_with_half_cap() {
        let data = synth_generate(&spec(0.0)).unwrap();
        let u = data.truth.matrix();
        let g = u.tr_mul(u);
        let half = data.truth.cap() / 2.0;
        assert!((g - DMatrix::identity(2, 2) * half * half).amax() < 1e-10);
    }

    #[test]
    fn invalid_specs() {
        assert!(synth_generate(&SynthSpec { k_true: 7, ..spec(0.0) }).is_err());
        assert!(synth_generate(&SynthSpec { noise_std: -1.0, ..spec(0.0) }).is_err());
        assert!(synth_generate(&SynthSpec { num_queries: 0, ..spec(0.0) }).is_err());
    }
}
