//! Quasi-static Rayleigh channels and additive noise.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::ComplexMatrix;
use crate::rng::{complex_normal, rng_for};

/// Total complex noise variance per received sample (N0/2 per real
/// dimension).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    n0: f64,
}

impl NoiseSpec {
    pub fn new(n0: f64) -> Result<Self> {
        if !(n0 > 0.0) || !n0.is_finite() {
            return invalid(format!("noise variance must be positive and finite, got {n0}"));
        }
        Ok(Self { n0 })
    }

    /// Noise level for a per-receive-antenna Es/N0 of `snr_db`, where the
    /// unit-energy space-time symbol is spread over `l` time slots:
    /// `N0 = 1 / (L · 10^(snr/10))`.
    pub fn from_snr_db(snr_db: f64, l: usize) -> Result<Self> {
        Self::new(1.0 / (l as f64 * 10f64.powf(snr_db / 10.0)))
    }

    pub fn n0(&self) -> f64 {
        self.n0
    }
}

/// Printed into every manifest.
pub const SNR_CONVENTION: &str =
    "snr_db = 10 log10(1 / (L * N0)): Es/N0 per receive antenna per time slot, E||S||_F^2 = 1";

/// A reproducible set of i.i.d. CN(0, I) channel matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelBatch {
    pub nt: usize,
    pub nr: usize,
    pub seed: u64,
    pub stream_id: u64,
    pub matrices: Vec<ComplexMatrix>,
}

impl ChannelBatch {
    pub fn count(&self) -> usize {
        self.matrices.len()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, ComplexMatrix> {
        self.matrices.iter()
    }
}

/// Draws `count` Nt × Nr matrices with unit-variance circular Gaussian
/// entries. Output depends only on `(seed, stream_id, count)`.
pub fn sample_channel_batch(
    nt: usize,
    nr: usize,
    count: usize,
    seed: u64,
    stream_id: u64,
) -> Result<ChannelBatch> {
    if nt == 0 || nr == 0 || count == 0 {
        return invalid(format!("channel batch needs nt, nr, count >= 1 (got {nt}, {nr}, {count})"));
    }
    let mut rng = rng_for(seed, stream_id);
    let matrices = (0..count)
        .map(|_| sample_gaussian_matrix(&mut rng, nt, nr, 1.0))
        .collect();
    Ok(ChannelBatch {
        nt,
        nr,
        seed,
        stream_id,
        matrices,
    })
}

/// L × Nr matrix of CN(0, n0) noise.
pub fn sample_noise(
    l: usize,
    nr: usize,
    noise: NoiseSpec,
    seed: u64,
    stream_id: u64,
) -> Result<ComplexMatrix> {
    if l == 0 || nr == 0 {
        return invalid("noise matrix needs l, nr >= 1");
    }
    let mut rng = rng_for(seed, stream_id);
    Ok(sample_gaussian_matrix(&mut rng, l, nr, noise.n0()))
}

pub(crate) fn sample_gaussian_matrix<R: rand::Rng + ?Sized>(
    rng: &mut R,
    rows: usize,
    cols: usize,
    variance: f64,
) -> ComplexMatrix {
    let entries = (0..rows * cols)
        .map(|_| complex_normal(rng, variance))
        .collect();
    ComplexMatrix::from_vec(rows, cols, entries).expect("sized above")
}
