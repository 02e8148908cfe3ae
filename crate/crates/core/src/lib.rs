//! Unsupervised shape concept learning from segmented 2.5D point clouds.
//!
//! The pipeline runs in five layers:
//!
//! * [`geometry`] produces segmented objects (synthetic scans, normals,
//!   region growing, FPFH-style segment descriptors).
//! * [`dictionary`] quantizes segment descriptors into a binary tree of
//!   visual words.
//! * [`motif`] decomposes objects into word-motif constellations, trains the
//!   motif hierarchy ensemble and turns objects into stimuli vectors.
//! * [`topo`] links stimuli vectors into a heat-weighted spanning tree and
//!   runs the H0 filtration over it.
//! * [`concepts`] cuts the filtration graph into concepts, scores them and
//!   computes concept responses; [`eval`] trains classifiers and embeddings
//!   on those responses.

pub mod concepts;
pub mod dictionary;
pub mod eval;
pub mod geometry;
pub mod model;
pub mod motif;
pub mod topo;
pub mod union_find;

pub use concepts::{Concept, ConceptError, ConceptModel, ConceptSet};
pub use dictionary::{Dictionary, DictionaryError, WordId};
pub use eval::EvalError;
pub use geometry::{Descriptor, GeometryError, ObjectGraph, PointCloud, SegmentedObject};
pub use motif::{Ensemble, MotifError, StimuliVector};
pub use topo::{Filtration, TopoError, TopoSpace};

/// Crate-wide error, wrapping the per-module errors.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Dictionary(#[from] DictionaryError),
    #[error(transparent)]
    Motif(#[from] MotifError),
    #[error(transparent)]
    Topo(#[from] TopoError),
    #[error(transparent)]
    Concept(#[from] ConceptError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Model(#[from] model::ModelError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
