//! Unify classifiers that were trained on different, overlapping subsets of a
//! class universe.
//!
//! The pipeline has three steps: run every source classifier on an unlabelled
//! transfer set, fuse their partial predictions into soft labels over the full
//! universe ([`fusion`]), and train a single classifier on those labels
//! ([`trainer`]). [`bench`] generates synthetic worlds for controlled
//! experiments and [`experiment`] runs whole comparisons.

pub mod bench;
pub mod error;
pub mod experiment;
pub mod fusion;
pub mod io;
pub mod label_model;
pub mod oracle;
pub mod trainer;

pub use error::{Result, UhcError};
pub use fusion::Fusion;
pub use label_model::{
    build_profile, restrict, softmax_t, ClassSubset, ClassUniverse, Diagnostics, FusedLabel, FusionKind,
    HCPrediction, Matrix, PredictionProfile,
};
