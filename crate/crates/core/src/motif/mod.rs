//! Word-motif constellations, the motif hierarchy ensemble, and stimuli.

mod decompose;
mod ensemble;

pub use decompose::{decompose, decompose_object, DecomposedObject, Instance, InstanceMotif, MotifLevel, MAX_INSTANCES_PER_LEVEL};
pub use ensemble::{
    stimuli_vector, stimuli_vector_decomposed, stimulus, train_ensemble, train_ensemble_decomposed, Ensemble,
    MotifHierarchy, MotifVertex, StimuliVector, DEFAULT_SIGMA,
};

use crate::geometry::GeometryError;

#[derive(Debug, thiserror::Error)]
pub enum MotifError {
    #[error("object has no segments")]
    EmptyObject,
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("corrupt model: {0}")]
    CorruptModel(String),
    #[error("model state: {0}")]
    ModelState(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}
