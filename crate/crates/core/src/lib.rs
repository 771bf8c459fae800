//! Lesion-aware mix augmentation for annotated 3D volumes.
//!
//! CarveMix carves a region around a donor lesion, bounded by a level set of
//! the lesion's signed distance field, and pastes it into a host volume.
//! Mixup and CutMix are provided as baselines. The crate also ships an exact
//! signed Euclidean distance transform, a minimal NIfTI-1 codec and a
//! deterministic offline dataset generator.

pub mod baselines;
pub mod carve;
pub mod cli;
pub mod distance;
pub mod error;
pub mod generator;
pub mod nifti;
pub mod synthetic;
pub mod volume;

pub use baselines::{cutmix_pair, cutmix_with_box, mixup_pair, mixup_with_lambda, CutMixSpec, MixupSpec};
pub use carve::{carve_roi, carve_with_lambda, carvemix_pair, carvemix_pair_with, lambda_bounds, sample_lambda, CarveSpec};
pub use distance::{signed_distance, signed_squared_distance, DistanceUnits, SignedDistanceField};
pub use error::{Error, Result};
pub use generator::{generate_dataset, GenerationConfig, GenerationManifest, Method, Roster, SampleRecord};
pub use volume::{AnnotatedSample, GridShape, LabelMask, SoftLabelMask, Spacing, Volume3D};
