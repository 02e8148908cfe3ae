//! Topological space over stimuli vectors and its H0 filtration.

mod filtration;
mod jsd;
mod space;

pub use filtration::{annexation_curve, epsilon_max, filtrate, Bar, CutRule, FEdge, Filtration, MergeEvent, DEFAULT_MAX_STEPS};
pub use jsd::{jsd, normalize_distribution};
pub use space::{build_space, geodesic_heats, SpaceEdge, TopoSpace};

#[derive(Debug, thiserror::Error)]
pub enum TopoError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("invalid space: {0}")]
    InvalidSpace(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("filtration is empty")]
    EmptyFiltration,
}
