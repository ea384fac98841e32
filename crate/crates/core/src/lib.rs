//! Post-hoc refinement of cross-lingual word embedding alignments.
//!
//! Given two embedding spaces that already live in a shared vector space,
//! this crate bootstraps a synthetic translation dictionary by mutual
//! nearest-neighbour (or CSLS) retrieval, composes row-aligned matrices
//! from it, and re-estimates the orthogonal map between the spaces under
//! either loss:
//!
//! * **L2**: the classic closed-form solution via SVD of `AᵀB`, and
//! * **L1**: a smoothed-gradient flow integrated on the orthogonal
//!   manifold, which is far less sensitive to outlier word pairs.
//!
//! The crate also ships BLI evaluation (accuracy and MRR), per-pair
//! distance-change analysis with IQR outlier detection, and a seeded
//! generator of planted-truth alignment problems for benchmarking the
//! robustness of both solvers.
//!
//! Entry points: [`pipeline::l1_refine`] and [`pipeline::l2_refine`] for
//! the end-to-end flow, or the individual modules for the pieces.

pub mod embed;
pub mod error;
pub mod eval;
pub mod pipeline;
pub mod procrustes;
pub mod retrieval;
pub mod solver;
pub mod synth;

mod linalg;

pub use embed::{load_embeddings, load_gold_dictionary, save_embeddings, EmbeddingMatrix, GoldDictionary};
pub use error::{Error, Result};
pub use eval::{bli_accuracy, bli_mrr, distance_delta, iqr_outliers, BliResult, DistanceDeltaTable, Metric};
pub use pipeline::{l1_refine, l2_refine, LossKind, RefineOutcome, RefineRequest};
pub use procrustes::{
    l1_gradient, l1_loss, l2_opa, orthogonality_error, smoothed_l1_objective, tangent_project,
    AlignedPairMatrices, OrthogonalMap,
};
pub use retrieval::{
    compose_pair_matrices, csls_dictionary, mutual_intersection, nn_dictionary, BilingualDictionary,
    RetrievalMethod,
};
pub use solver::{integrate_l1_flow, IntegratorMode, RefinementReport, SolverConfig, StopReason};
pub use synth::{gen_synthetic, recovery_error, SyntheticProblem};
