//! Pattern-reconfigurable air-to-ground channel model and dataset container.

pub mod dataset;
pub mod emcsi;
pub mod geometry;
pub mod paths;
pub mod pattern;

pub use dataset::{
    generate_dataset, generate_samples, read_dataset, read_header, write_dataset, Dataset, DatasetHeader,
    FloatWidth, GenerateOptions,
};
pub use emcsi::{apply_pattern, build_emcsi, EmCsiTensor};
pub use geometry::{steering_vector, ArrayGeometry, PatternVector};
pub use paths::{sample_path_set, Path, PathSet};
pub use pattern::{pattern_gain, PatternCodebook, PatternMode};
