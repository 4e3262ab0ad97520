//! Fixtures shared by the benchmarks.

use mlpcm_core::mapping::{make_constellation, set_merge_labeling, ConstellationKind, Measure, MeasureContext};
use mlpcm_core::{enumerate_codebook, Codebook, Family, SetPartitionMap};

pub fn alamouti(kind: ConstellationKind) -> Codebook {
    let spec = mlpcm_core::build_stbc(Family::Alamouti, &[], make_constellation(kind), false).expect("alamouti");
    enumerate_codebook(&spec).expect("codebook")
}

pub fn determinant_labelling(cb: &Codebook) -> SetPartitionMap {
    set_merge_labeling(cb, Measure::Determinant, &MeasureContext::antennas(2), 0.0).expect("labelling")
}

/// Deterministic pseudo-random LLRs, no RNG crate needed.
pub fn llrs(n: usize) -> Vec<f64> {
    let mut s = 0x9e37_79b9_7f4a_7c15u64;
    (0..n)
        .map(|_| {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s >> 11) as f64 / (1u64 << 53) as f64 * 8.0 - 3.0
        })
        .collect()
}
