//! Classification, cross-validation, t-SNE and region grids over concept
//! responses.

mod classifier;
mod cv;
mod grid;
mod tsne;

pub use classifier::{ClassifierParams, LinearClassifier, LinearLearner, Learner, Predict};
pub use cv::{cross_validate, stratified_split, CvProtocol, CvResult};
pub use grid::{region_grid, GridCell, RegionGrid, DEFAULT_K_FRACTION, DEFAULT_RESOLUTION};
pub use tsne::{joint_probabilities, kl_divergence, kl_gradient, tsne, Embedding2D, TsneParams};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("invalid task: {0}")]
    InvalidTask(String),
    #[error("cannot stratify: {0}")]
    Stratification(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Checks that `x` is a non-empty, rectangular, finite matrix with one label
/// per row; returns the column count.
pub(crate) fn check_matrix(x: &[Vec<f64>], rows: usize) -> Result<usize, EvalError> {
    if x.is_empty() {
        return Err(EvalError::InvalidTask("no samples".into()));
    }
    if x.len() != rows {
        return Err(EvalError::DimensionMismatch {
            expected: rows,
            got: x.len(),
        });
    }
    let dim = x[0].len();
    for row in x {
        if row.len() != dim {
            return Err(EvalError::DimensionMismatch {
                expected: dim,
                got: row.len(),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(EvalError::InvalidParameter("non-finite feature".into()));
        }
    }
    Ok(dim)
}
