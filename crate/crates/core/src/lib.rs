//! Doubly network-regularized generalized linear models.
//!
//! Fits GLMs with per-unit intercepts fused over a unit graph and
//! coefficients fused over a feature graph, supports out-of-sample
//! prediction by harmonic extension of the fitted intercepts,
//! cross-validated hyperparameter tuning, de-biased high-dimensional
//! inference, and a simulation toolkit for benchmarking the estimators.

pub mod family;
pub mod graph;
pub mod infer;
pub mod sim;
pub mod solver;
pub mod sparse;
pub mod stats;
pub mod tune;

pub use family::{alr_transform, Family, FamilyError, LinearPredictor};
pub use graph::{
    constrained_folds, harmonic_extend, incidence, laplacian, FoldAssignment, Graph, GraphError,
    HarmonicExtension, IncidenceView, LaplacianView,
};
pub use infer::{
    debias, inference_table, m_matrix, m_matrix_auto, run_inference, sandwich_variance,
    scaled_lasso_sigma, sigma_hat, InferError, InferenceConfig, InferenceResult, InferenceRow,
    MMatrix, MMatrixOptions, Tail,
};
pub use sim::{
    derive_seed, gen_beta, gen_design, gen_outcomes, hub_feature_graph, perturb_graph,
    sample_icar, sbm_graph, sbm_intercepts, standardize_columns, PerturbMode, SimError,
};
pub use solver::{
    fit_l1, fit_l2, kkt_check, linf_project, objective, smoothed_fusion, soft_threshold,
    FitOptions, FitResult, Fusion, Hyperparams, KktReport, Problem, SolverError,
};
pub use tune::{
    coordinate_descent_tune, cv_score, cv_score_prepared, prepare_folds, CvEvaluation, CvScore,
    FoldData, Score, TuneError, TuneResult, TuneSpec,
};
