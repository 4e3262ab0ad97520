use std::f64::consts::{LN_2, PI, TAU};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{log_sum_exp, RxPoints};
use crate::channel::{ChannelBatch, NoiseSpec};
use crate::error::{invalid, Error, Result};
use crate::linalg::{ComplexMatrix, C64};
use crate::mapping::SetPartitionMap;
use crate::rng::{complex_normal, rng_for, stream, Domain};
use crate::stbc::{Codebook, SpaceTimeSymbol};

/// ln p(Y | S, H) for the Gaussian channel `Y = SH + W`.
pub fn log_likelihood(
    y: &ComplexMatrix,
    s: &SpaceTimeSymbol,
    h: &ComplexMatrix,
    noise: NoiseSpec,
) -> Result<f64> {
    let sh = s.matrix.matmul(h)?;
    if (sh.rows(), sh.cols()) != (y.rows(), y.cols()) {
        return Err(Error::Dimension("received block does not match S·H".into()));
    }
    let n0 = noise.n0();
    let dims = (y.rows() * y.cols()) as f64;
    Ok(-dims * (PI * n0).ln() - (y - &sh).frobenius_sq() / n0)
}

/// Start of the label range sharing the first `level` bits with `label`.
#[inline]
fn prefix_range(label: usize, b: usize, level: usize) -> (usize, usize) {
    let width = 1usize << (b - level);
    let start = (label >> (b - level)) << (b - level);
    (start, start + width)
}

/// Level-`level` LLR from metrics already arranged in label order.
#[inline]
pub(crate) fn llr_from_label_metrics(lm: &[f64], b: usize, level: usize, prefix: usize) -> f64 {
    let half = 1usize << (b - level);
    let start = prefix << (b - level + 1);
    log_sum_exp(&lm[start..start + half]) - log_sum_exp(&lm[start + half..start + 2 * half])
}

/// λ_b = ln p(Y | ĉ¹..ĉᵇ⁻¹, cᵇ = 0) − ln p(Y | ĉ¹..ĉᵇ⁻¹, cᵇ = 1), exact
/// log-sum-exp over the unresolved lower levels. For time-varying codes
/// pass the rotated channel `diag(e^{jθ}) H`.
pub fn level_llr(
    y: &ComplexMatrix,
    h: &ComplexMatrix,
    spm: &SetPartitionMap,
    cb: &Codebook,
    level: usize,
    upper_bits: &[u8],
    noise: NoiseSpec,
) -> Result<f64> {
    let b = cb.bits();
    if level == 0 || level > b {
        return invalid(format!("level {level} outside 1..={b}"));
    }
    if upper_bits.len() != level - 1 {
        return invalid(format!("level {level} needs {} decided bits", level - 1));
    }
    if spm.perm.len() != cb.len() {
        return Err(Error::Dimension("label map and codebook sizes differ".into()));
    }
    let pts = RxPoints::new(cb, h);
    if y.as_slice().len() != pts.dim() {
        return Err(Error::Dimension("received block does not match S·H".into()));
    }
    let mut m = vec![0.0; cb.len()];
    pts.metrics_into(y.as_slice(), 1.0 / noise.n0(), &mut m);
    let lm: Vec<f64> = spm.perm.iter().map(|&i| m[i]).collect();
    let prefix = upper_bits.iter().fold(0usize, |acc, &bit| (acc << 1) | bit as usize);
    Ok(llr_from_label_metrics(&lm, b, level, prefix))
}

/// Scratch space for one Monte-Carlo worker.
pub(crate) struct MiWorkspace {
    pts: RxPoints,
    metrics: Vec<f64>,
    label_metrics: Vec<f64>,
    y: Vec<C64>,
}

impl MiWorkspace {
    pub(crate) fn new(cb: &Codebook, h: &ComplexMatrix) -> Self {
        let pts = RxPoints::new(cb, h);
        let dim = pts.dim();
        Self {
            pts,
            metrics: vec![0.0; cb.len()],
            label_metrics: vec![0.0; cb.len()],
            y: vec![C64::new(0.0, 0.0); dim],
        }
    }

    fn reset(&mut self, cb: &Codebook, h: &ComplexMatrix) {
        self.pts.refill(cb, h, None);
    }

    /// One draw of the information density. Returns the total in bits and,
    /// when `levels` is given, fills the per-level chain-rule terms.
    fn sample(
        &mut self,
        cb: &Codebook,
        h: &ComplexMatrix,
        spm: Option<&SetPartitionMap>,
        n0: f64,
        rng: &mut ChaCha8Rng,
        levels: Option<&mut [f64]>,
    ) -> f64 {
        let b = cb.bits();
        if cb.spec.tv {
            let f: Vec<C64> = (0..cb.nt())
                .map(|_| C64::from_polar(1.0, rng.gen::<f64>() * TAU))
                .collect();
            self.pts.refill(cb, h, Some(&f));
        }
        let label = rng.gen_range(0..cb.len());
        let idx = spm.map_or(label, |s| s.index(label));
        for (y, p) in self.y.iter_mut().zip(self.pts.point(idx)) {
            *y = p + complex_normal(rng, n0);
        }
        self.pts.metrics_into(&self.y, 1.0 / n0, &mut self.metrics);
        let total_lse = log_sum_exp(&self.metrics);
        let own = self.metrics[idx];
        let total = b as f64 + (own - total_lse) / LN_2;
        if let (Some(levels), Some(spm)) = (levels, spm) {
            for (l, &i) in self.label_metrics.iter_mut().zip(&spm.perm) {
                *l = self.metrics[i];
            }
            let mut prev = total_lse;
            for (k, out) in levels.iter_mut().enumerate() {
                let level = k + 1;
                let cur = if level == b {
                    own
                } else {
                    let (s, e) = prefix_range(label, b, level);
                    log_sum_exp(&self.label_metrics[s..e])
                };
                *out = 1.0 + (cur - prev) / LN_2;
                prev = cur;
            }
        }
        total
    }
}

fn check_mc(mc: usize) -> Result<()> {
    if mc == 0 {
        return invalid("Monte-Carlo sample count must be at least one");
    }
    Ok(())
}

/// I(Y; S | H) in bits with uniform priors, by drawing S and then Y.
/// Time-varying codes also draw fresh phases for every sample.
pub fn mutual_information(
    cb: &Codebook,
    h: &ComplexMatrix,
    noise: NoiseSpec,
    mc: usize,
    seed: u64,
) -> Result<f64> {
    check_mc(mc)?;
    let mut rng = rng_for(seed, stream(Domain::MonteCarlo, 0));
    let mut ws = MiWorkspace::new(cb, h);
    let sum: f64 = (0..mc)
        .map(|_| ws.sample(cb, h, None, noise.n0(), &mut rng, None))
        .sum();
    Ok((sum / mc as f64).clamp(0.0, cb.bits() as f64))
}

/// Stopping rule for per-realization information estimates near a
/// decision threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveMc {
    pub min: usize,
    pub max: usize,
    /// Stop once the estimate is this many standard errors from the threshold.
    pub z: f64,
}

impl Default for AdaptiveMc {
    fn default() -> Self {
        Self {
            min: 64,
            max: 4096,
            z: 4.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub samples: usize,
}

fn adaptive_from(
    ws: &mut MiWorkspace,
    cb: &Codebook,
    h: &ComplexMatrix,
    n0: f64,
    threshold: f64,
    budget: AdaptiveMc,
    rng: &mut ChaCha8Rng,
) -> MiEstimate {
    let (mut n, mut s, mut s2) = (0usize, 0.0, 0.0);
    let mut target = budget.min.max(2);
    loop {
        while n < target {
            let v = ws.sample(cb, h, None, n0, rng, None);
            s += v;
            s2 += v * v;
            n += 1;
        }
        let mean = s / n as f64;
        let var = ((s2 / n as f64) - mean * mean).max(0.0) * n as f64 / (n as f64 - 1.0);
        let se = (var / n as f64).sqrt();
        if n >= budget.max || (mean - threshold).abs() > budget.z * se {
            return MiEstimate {
                mean: mean.clamp(0.0, cb.bits() as f64),
                std_err: se,
                samples: n,
            };
        }
        target = (2 * n).min(budget.max);
    }
}

/// Like [`mutual_information`], but keeps sampling only while the estimate
/// cannot be told apart from `threshold`.
pub fn mutual_information_adaptive(
    cb: &Codebook,
    h: &ComplexMatrix,
    noise: NoiseSpec,
    threshold: f64,
    budget: AdaptiveMc,
    seed: u64,
    stream_id: u64,
) -> MiEstimate {
    let mut rng = rng_for(seed, stream_id);
    let mut ws = MiWorkspace::new(cb, h);
    adaptive_from(&mut ws, cb, h, noise.n0(), threshold, budget, &mut rng)
}

fn level_means(
    ws: &mut MiWorkspace,
    spm: &SetPartitionMap,
    cb: &Codebook,
    h: &ComplexMatrix,
    n0: f64,
    mc: usize,
    rng: &mut ChaCha8Rng,
) -> (Vec<f64>, f64) {
    let b = cb.bits();
    let mut acc = vec![0.0; b];
    let mut row = vec![0.0; b];
    let mut total = 0.0;
    for _ in 0..mc {
        total += ws.sample(cb, h, Some(spm), n0, rng, Some(&mut row));
        for (a, r) in acc.iter_mut().zip(&row) {
            *a += r;
        }
    }
    let levels = acc.iter().map(|a| (a / mc as f64).clamp(0.0, 1.0)).collect();
    (levels, (total / mc as f64).clamp(0.0, b as f64))
}

/// Level-wise mutual information I(Y; cᵇ | c¹..cᵇ⁻¹, H), one entry per level.
/// Shares its draws with the total, so the chain rule holds per sample.
pub fn levelwise_mi(
    spm: &SetPartitionMap,
    cb: &Codebook,
    h: &ComplexMatrix,
    noise: NoiseSpec,
    mc: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    check_mc(mc)?;
    check_map(spm, cb)?;
    let mut rng = rng_for(seed, stream(Domain::MonteCarlo, 0));
    let mut ws = MiWorkspace::new(cb, h);
    Ok(level_means(&mut ws, spm, cb, h, noise.n0(), mc, &mut rng).0)
}

fn check_map(spm: &SetPartitionMap, cb: &Codebook) -> Result<()> {
    if spm.perm.len() != cb.len() {
        return Err(Error::Dimension(format!(
            "label map covers {} symbols, codebook has {}",
            spm.perm.len(),
            cb.len()
        )));
    }
    Ok(())
}

/// Per-realization level-wise information, N̂ × B.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiSamples {
    pub values: Vec<Vec<f64>>,
    pub total: Vec<f64>,
    pub seed: u64,
    pub mc: usize,
    pub channel_seed: u64,
    pub channel_stream: u64,
}

impl MiSamples {
    pub fn levels(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    /// Column `level` (1-based) across realizations.
    pub fn level(&self, level: usize) -> Vec<f64> {
        self.values.iter().map(|row| row[level - 1]).collect()
    }
}

pub fn mi_samples(
    spm: &SetPartitionMap,
    cb: &Codebook,
    noise: NoiseSpec,
    batch: &ChannelBatch,
    mc: usize,
    seed: u64,
) -> Result<MiSamples> {
    check_mc(mc)?;
    check_map(spm, cb)?;
    if batch.count() == 0 {
        return invalid("empty channel batch");
    }
    let rows: Vec<(Vec<f64>, f64)> = batch
        .matrices
        .par_iter()
        .enumerate()
        .map_init(
            || None::<MiWorkspace>,
            |slot, (k, h)| {
                let ws = slot.get_or_insert_with(|| MiWorkspace::new(cb, h));
                ws.reset(cb, h);
                let mut rng = rng_for(seed, stream(Domain::MonteCarlo, k as u64));
                level_means(ws, spm, cb, h, noise.n0(), mc, &mut rng)
            },
        )
        .collect();
    let (values, total) = rows.into_iter().unzip();
    Ok(MiSamples {
        values,
        total,
        seed,
        mc,
        channel_seed: batch.seed,
        channel_stream: batch.stream_id,
    })
}

fn check_rate(cb: &Codebook, rate_total: f64) -> Result<()> {
    if !(0.0..=cb.bits() as f64).contains(&rate_total) {
        return invalid(format!(
            "target rate {rate_total} outside [0, {}] bits",
            cb.bits()
        ));
    }
    Ok(())
}

/// Fraction of channel realizations whose information falls below
/// `rate_total` bits per space-time symbol.
pub fn outage_probability(
    cb: &Codebook,
    rate_total: f64,
    noise: NoiseSpec,
    batch: &ChannelBatch,
    mc: usize,
    seed: u64,
) -> Result<f64> {
    check_mc(mc)?;
    check_rate(cb, rate_total)?;
    if rate_total == 0.0 {
        return Ok(0.0);
    }
    let outages: usize = batch
        .matrices
        .par_iter()
        .enumerate()
        .map_init(
            || None::<MiWorkspace>,
            |slot, (k, h)| {
                let ws = slot.get_or_insert_with(|| MiWorkspace::new(cb, h));
                ws.reset(cb, h);
                let mut rng = rng_for(seed, stream(Domain::MonteCarlo, k as u64));
                let sum: f64 = (0..mc)
                    .map(|_| ws.sample(cb, h, None, noise.n0(), &mut rng, None))
                    .sum();
                usize::from((sum / mc as f64).clamp(0.0, cb.bits() as f64) < rate_total)
            },
        )
        .sum();
    Ok(outages as f64 / batch.count() as f64)
}

/// Outage estimate with per-realization sequential sampling: each
/// realization is sampled until its information is resolved against the
/// target rate (or the budget runs out).
pub fn outage_probability_adaptive(
    cb: &Codebook,
    rate_total: f64,
    noise: NoiseSpec,
    batch: &ChannelBatch,
    budget: AdaptiveMc,
    seed: u64,
) -> Result<f64> {
    check_rate(cb, rate_total)?;
    if rate_total == 0.0 {
        return Ok(0.0);
    }
    let outages: usize = batch
        .matrices
        .par_iter()
        .enumerate()
        .map_init(
            || None::<MiWorkspace>,
            |slot, (k, h)| {
                let ws = slot.get_or_insert_with(|| MiWorkspace::new(cb, h));
                ws.reset(cb, h);
                let mut rng = rng_for(seed, stream(Domain::MonteCarlo, k as u64));
                let est = adaptive_from(ws, cb, h, noise.n0(), rate_total, budget, &mut rng);
                usize::from(est.mean < rate_total)
            },
        )
        .sum();
    Ok(outages as f64 / batch.count() as f64)
}

/// Empirical ε-quantile: the ⌊ε·N̂⌋-th order statistic (at least the first).
pub fn outage_capacity(samples: &[f64], eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) {
        return invalid(format!("outage level must lie in (0, 1), got {eps}"));
    }
    if samples.is_empty() {
        return invalid("no samples");
    }
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let k = ((eps * v.len() as f64).floor() as usize).max(1);
    Ok(v[k - 1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapping::{make_constellation, ConstellationKind, SetPartitionMap};
    use crate::stbc::{encode_symbol, enumerate_codebook, vector_code};

    fn bpsk_cb() -> Codebook {
        enumerate_codebook(&vector_code(1, make_constellation(ConstellationKind::Bpsk), false).unwrap()).unwrap()
    }

    fn scalar(z: C64) -> ComplexMatrix {
        ComplexMatrix::from_rows(&[[z]])
    }

    #[test]
    fn likelihood_peak_and_shift() {
        let cb = bpsk_cb();
        let s = encode_symbol(&cb.spec, &[0], None).unwrap();
        let h = scalar(C64::new(0.7, -0.2));
        let n = NoiseSpec::new(0.5).unwrap();
        let y = s.matrix.matmul(&h).unwrap();
        let peak = log_likelihood(&y, &s, &h, n).unwrap();
        assert!((peak + (PI * 0.5).ln()).abs() < 1e-12);
        let shift = (4.0 * 0.5 * LN_2).sqrt();
        let y2 = &y + &scalar(C64::new(0.0, shift));
        let lower = log_likelihood(&y2, &s, &h, n).unwrap();
        assert!((peak - lower - 4.0 * LN_2).abs() < 1e-12);
    }

    #[test]
    fn bpsk_llr_closed_form() {
        let cb = bpsk_cb();
        let spm = SetPartitionMap::identity(1);
        let h = scalar(C64::new(1.0, 0.0));
        let n = NoiseSpec::new(0.8).unwrap();
        for y in [C64::new(0.3, -1.0), C64::new(-2.0, 0.5), C64::new(0.0, 0.0)] {
            let l = level_llr(&scalar(y), &h, &spm, &cb, 1, &[], n).unwrap();
            assert!((l - 4.0 * y.re / 0.8).abs() < 1e-12);
        }
        let big = NoiseSpec::new(1e9).unwrap();
        let l = level_llr(&scalar(C64::new(3.0, 1.0)), &h, &spm, &cb, 1, &[], big).unwrap();
        assert!(l.abs() < 1e-7);
    }

    #[test]
    fn mirrored_subsets_give_zero_llr() {
        let cb = enumerate_codebook(&vector_code(1, make_constellation(ConstellationKind::Qpsk), false).unwrap())
            .unwrap();
        // level-1 bit flip negates the point: pair each point with its negative
        let neg = |i: usize| (0..4).find(|&j| (cb.symbols[i].as_slice()[0] + cb.symbols[j].as_slice()[0]).norm() < 1e-12).unwrap();
        let a = 0;
        let b = (1..4).find(|&j| j != neg(a)).unwrap();
        let perm = vec![a, b, neg(a), neg(b)];
        let spm = SetPartitionMap::from_perm(perm, crate::mapping::Measure::Frobenius, 0.0).unwrap();
        let h = scalar(C64::new(0.4, 0.9));
        let l = level_llr(&scalar(C64::new(0.0, 0.0)), &h, &spm, &cb, 1, &[], NoiseSpec::new(0.3).unwrap()).unwrap();
        assert!(l.abs() < 1e-12);
    }

    #[test]
    fn llr_argument_checks() {
        let cb = bpsk_cb();
        let spm = SetPartitionMap::identity(1);
        let h = scalar(C64::new(1.0, 0.0));
        let n = NoiseSpec::new(1.0).unwrap();
        assert!(level_llr(&h, &h, &spm, &cb, 0, &[], n).is_err());
        assert!(level_llr(&h, &h, &spm, &cb, 1, &[0], n).is_err());
    }

    #[test]
    fn information_limits() {
        let cb = enumerate_codebook(&vector_code(1, make_constellation(ConstellationKind::Qpsk), false).unwrap())
            .unwrap();
        let h = scalar(C64::new(0.8, 0.3));
        let hi = mutual_information(&cb, &h, NoiseSpec::new(1e-6).unwrap(), 2000, 1).unwrap();
        assert!((hi - 2.0).abs() < 0.02);
        let lo = mutual_information(&cb, &h, NoiseSpec::new(1e6).unwrap(), 2000, 1).unwrap();
        assert!(lo < 0.02);
    }

    #[test]
    fn quantile_definition() {
        let xs: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(outage_capacity(&xs, 0.1).unwrap(), 10.0);
        assert_eq!(outage_capacity(&[3.0; 7], 0.37).unwrap(), 3.0);
        assert!(outage_capacity(&xs, 0.0).is_err());
        assert!(outage_capacity(&xs, 1.0).is_err());
        assert_eq!(outage_capacity(&xs, 0.001).unwrap(), 1.0);
    }
}
