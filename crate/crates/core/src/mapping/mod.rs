//! Constellations and set-partition labelling of space-time codebooks.

mod constellation;
mod labeling;

pub use constellation::{make_constellation, Constellation, ConstellationKind};
pub use labeling::{
    distance_matrix, level_protection, pair_distance, quantize_distances, set_merge_labeling,
    Measure, MeasureContext, SetPartitionMap, DEFAULT_REL_THRESHOLD,
};
