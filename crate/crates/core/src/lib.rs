//! Pairwise learning-to-rank by learning a polyhedral cone.
//!
//! Ordered document-pair differences `z = x_l - x_m` (document `l` more
//! relevant than `m`) are modelled as members of a cone spanned by `K`
//! learned basis vectors. Training alternates between folding each pair into
//! the current basis (non-negative coefficients on the unit simplex) and a
//! gradient step on the basis. Prediction folds candidate differences in
//! without sign constraints and lets the sign of the coefficient sum vote for
//! an orientation; the votes of all pairs in a query give the ranking.
//!
//! Module map:
//! - [`cone`]: domain types, pair normalization, losses and empirical risk.
//! - [`projection`]: exact constrained least-squares fold-in.
//! - [`solver`]: stochastic and exponentiated gradient training.
//! - [`ranker`]: query-level prediction by pairwise votes.
//! - [`data`]: LETOR text format, standardization, pair generation.
//! - [`synth`]: planted-cone synthetic datasets with known ground truth.
//! - [`metrics`]: MAP and NDCG.
//! - [`stability`]: leave-one-query-out stability measurement.
//! - [`model`]: persistent model files.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cone;
pub mod data;
pub mod error;
pub mod metrics;
pub mod model;
pub mod projection;
pub mod ranker;
pub mod solver;
pub mod spectrum;
pub mod stability;
pub mod synth;
pub mod tsv;

pub use cone::{
    check_proper, empirical_risk, normalize_pair, pair_loss, query_loss, ConeBasis,
    ConicCoefficients, FeatureVector, HyperParams, PairSample, ProperDiagnostic,
};
pub use data::{generate_pairs, parse_letor, standardize, Dataset, FeatureStats, QueryGroup};
pub use error::{Error, Result};
pub use metrics::{average_precision, evaluate, ndcg_at_k, EvalReport};
pub use model::ConeModel;
pub use projection::{fold_in_cone, fold_in_exact};
pub use ranker::{predict_pair, rank_query, Orientation, RankingResult};
pub use solver::{train, train_pairs, FoldInVariant, Schedule, TrainConfig, TrainReport};
pub use spectrum::pair_spectrum;
pub use stability::{loqo_experiment, loqo_pairs, spectral_norm, StabilityReport};
pub use synth::{synth_generate, SynthData, SynthSpec};
