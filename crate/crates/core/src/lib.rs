//! Metaheuristic hyperparameter optimization over mixed integer/float spaces,
//! paired with a from-scratch second-order gradient boosted trees learner,
//! wrapper feature selection, tabular preprocessing, binary classification
//! metrics, and a sampling-based Shapley explainer.
//!
//! The [`pipeline`] module ties the pieces together into a reproducible
//! experiment runner; the `emberopt` CLI crate is a thin wrapper around it.

pub mod annealer;
pub mod explain;
pub mod feature_select;
pub mod gbt;
pub mod metrics;
pub mod param_space;
pub mod pipeline;
pub mod preprocess;

pub use annealer::{Algorithm, AnnealerConfig, OptimizationResult, TabuList, TraceRow};
pub use explain::{Attribution, AttributionReport};
pub use feature_select::{SelectionCriterion, SelectionResult};
pub use gbt::{BoostedEnsemble, GbtHyperparams, TreeNode};
pub use metrics::{ConfusionMatrix, EvalReport};
pub use param_space::{ParamKind, ParamSpace, ParamSpec, Solution, SolutionKey};
pub use preprocess::{ColumnRole, ColumnSchema, Dataset, Frame};
