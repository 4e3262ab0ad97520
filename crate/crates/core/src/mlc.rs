//! Multilevel polar coding: bit-channel ranking, rate rules, encoding and
//! multistage decoding over a labelled space-time codebook.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{sample_gaussian_matrix, ChannelBatch, NoiseSpec};
use crate::error::{invalid, Error, Result};
use crate::infotheory::mi::llr_from_label_metrics;
use crate::infotheory::{mi_samples, outage_capacity, MiSamples, RxPoints};
use crate::linalg::{ComplexMatrix, C64};
use crate::mapping::SetPartitionMap;
use crate::polar::{transform_in_place, ScDecoder};
use crate::rng::{complex_normal, derive_seed, rng_for, stream, Domain};
use crate::stbc::{sample_tv_phases, Codebook};

/// Per-level polar codes with all-zero frozen bits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpcmCode {
    pub n: usize,
    pub b: usize,
    /// Sorted information positions of each level.
    pub info_sets: Vec<Vec<usize>>,
    pub rates: Vec<f64>,
    pub r_tot: f64,
    pub design_snr: f64,
    #[serde(default)]
    pub ranking_seed: Option<u64>,
    #[serde(default)]
    pub ranking_trials: Option<usize>,
}

impl MlpcmCode {
    pub fn from_info_sets(n: usize, mut info_sets: Vec<Vec<usize>>, design_snr: f64) -> Result<Self> {
        if n == 0 || !n.is_power_of_two() {
            return invalid(format!("block length {n} is not a power of two"));
        }
        if info_sets.is_empty() {
            return invalid("at least one level");
        }
        for set in info_sets.iter_mut() {
            set.sort_unstable();
            set.dedup();
            if set.last().is_some_and(|&i| i >= n) {
                return invalid("information position outside the block");
            }
        }
        let b = info_sets.len();
        let rates: Vec<f64> = info_sets.iter().map(|s| s.len() as f64 / n as f64).collect();
        let k: usize = info_sets.iter().map(Vec::len).sum();
        Ok(Self {
            n,
            b,
            r_tot: k as f64 / (n * b) as f64,
            info_sets,
            rates,
            design_snr,
            ranking_seed: None,
            ranking_trials: None,
        })
    }

    /// Message length K.
    pub fn k(&self) -> usize {
        self.info_sets.iter().map(Vec::len).sum()
    }

    pub fn n_tot(&self) -> usize {
        self.n * self.b
    }

    pub fn frozen_masks(&self) -> Vec<Vec<bool>> {
        self.info_sets
            .iter()
            .map(|set| {
                let mut m = vec![true; self.n];
                for &i in set {
                    m[i] = false;
                }
                m
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let again = Self::from_info_sets(self.n, self.info_sets.clone(), self.design_snr)?;
        if again.info_sets != self.info_sets || again.b != self.b {
            return invalid("information sets must be sorted and unique");
        }
        Ok(())
    }

    fn check_link(&self, spm: &SetPartitionMap, cb: &Codebook) -> Result<()> {
        if self.b != cb.bits() || spm.b != self.b || spm.perm.len() != cb.len() {
            return Err(Error::Dimension(format!(
                "code has {} levels, label map {} bits, codebook {} bits",
                self.b,
                spm.b,
                cb.bits()
            )));
        }
        Ok(())
    }
}

/// Genie-aided error counts per level and bit-channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BitChannelRanking {
    pub error_counts: Vec<Vec<u64>>,
    pub trials: usize,
    pub snr: f64,
    pub seed: u64,
    pub n: usize,
    pub b: usize,
}

/// Space-time link shared by the simulation routines.
#[derive(Debug, Clone, Copy)]
pub struct Link<'a> {
    pub cb: &'a Codebook,
    pub spm: &'a SetPartitionMap,
    pub nr: usize,
}

impl<'a> Link<'a> {
    pub fn new(cb: &'a Codebook, spm: &'a SetPartitionMap, nr: usize) -> Result<Self> {
        if spm.perm.len() != cb.len() {
            return Err(Error::Dimension("label map and codebook sizes differ".into()));
        }
        if nr == 0 {
            return invalid("at least one receive antenna");
        }
        Ok(Self { cb, spm, nr })
    }

    fn dim(&self) -> usize {
        self.cb.l() * self.nr
    }
}

/// Packs level bits into labels, level 1 as the most significant bit.
fn pack_labels(levels: &[Vec<u8>], n: usize) -> Vec<usize> {
    (0..n)
        .map(|i| levels.iter().fold(0usize, |acc, c| (acc << 1) | c[i] as usize))
        .collect()
}

/// One transmitted frame: channel, received samples (flattened L·Nr per
/// symbol) and the phase seed of time-varying codes.
struct FrameRx {
    h: ComplexMatrix,
    y: Vec<C64>,
    tv_seed: Option<u64>,
}

fn transmit(link: &Link, labels: &[usize], noise: NoiseSpec, seed: u64, frame: u64) -> FrameRx {
    let cb = link.cb;
    let mut ch_rng = rng_for(seed, stream(Domain::Channel, frame));
    let h = sample_gaussian_matrix(&mut ch_rng, cb.nt(), link.nr, 1.0);
    let tv_seed = cb.spec.tv.then(|| derive_seed(seed, frame));
    let mut nz = rng_for(seed, stream(Domain::Noise, frame));
    let dim = link.dim();
    let mut y = Vec::with_capacity(labels.len() * dim);
    let static_pts = (!cb.spec.tv).then(|| RxPoints::new(cb, &h));
    let mut tv_pts = None::<RxPoints>;
    for (n, &label) in labels.iter().enumerate() {
        let idx = link.spm.index(label);
        let pts = match (&static_pts, tv_seed) {
            (Some(p), _) => p,
            (None, Some(s)) => {
                let f = sample_tv_phases(cb.nt(), s, n as u64).factors();
                let p = tv_pts.get_or_insert_with(|| RxPoints::new(cb, &h));
                p.refill(cb, &h, Some(&f));
                p
            }
            (None, None) => unreachable!(),
        };
        y.extend(pts.point(idx).iter().map(|&p| p + complex_normal(&mut nz, noise.n0())));
    }
    FrameRx { h, y, tv_seed }
}

/// Label-ordered metrics −‖y_n − S_i H‖²/N0, N rows of 2^B.
fn label_metrics(link: &Link, rx: &FrameRx, noise: NoiseSpec, n: usize) -> Vec<f64> {
    let cb = link.cb;
    let q = cb.len();
    let dim = link.dim();
    let mut pts = RxPoints::new(cb, &rx.h);
    let mut m = vec![0.0; q];
    let mut out = vec![0.0; n * q];
    let inv = 1.0 / noise.n0();
    for (i, row) in out.chunks_exact_mut(q).enumerate() {
        if let Some(s) = rx.tv_seed {
            let f = sample_tv_phases(cb.nt(), s, i as u64).factors();
            pts.refill(cb, &rx.h, Some(&f));
        }
        pts.metrics_into(&rx.y[i * dim..(i + 1) * dim], inv, &mut m);
        for (r, &idx) in row.iter_mut().zip(&link.spm.perm) {
            *r = m[idx];
        }
    }
    out
}

#[derive(Clone, Copy)]
struct Genie<'a> {
    /// True code bits fed forward instead of decisions.
    upper: Option<&'a [Vec<u8>]>,
    /// True message bits forced at every SC leaf.
    leaves: Option<&'a [Vec<u8>]>,
}

const NO_GENIE: Genie = Genie {
    upper: None,
    leaves: None,
};

/// Multistage decoding from label metrics; `on_decision(level, i, llr)`
/// sees every SC leaf.
fn msd_core<F>(
    lm: &[f64],
    b: usize,
    n: usize,
    frozen: &[Vec<bool>],
    dec: &mut ScDecoder,
    genie: Genie,
    mut on_decision: F,
) -> (Vec<Vec<u8>>, Vec<Vec<u8>>)
where
    F: FnMut(usize, usize, f64),
{
    let q = 1usize << b;
    let mut prefix = vec![0usize; n];
    let mut llrs = vec![0.0; n];
    let mut us = Vec::with_capacity(b);
    let mut xs = Vec::with_capacity(b);
    for level in 1..=b {
        for (i, l) in llrs.iter_mut().enumerate() {
            *l = llr_from_label_metrics(&lm[i * q..(i + 1) * q], b, level, prefix[i]);
        }
        let mut u_hat = vec![0u8; n];
        let mask = &frozen[level - 1];
        let leaves = genie.leaves.map(|t| &t[level - 1]);
        let x = dec
            .decode_with(&llrs, &mut u_hat, |i, l| {
                on_decision(level, i, l);
                match leaves {
                    Some(t) => t[i],
                    None if mask[i] => 0,
                    None => u8::from(l < 0.0),
                }
            })
            .to_vec();
        let x = match genie.upper {
            Some(t) => t[level - 1].clone(),
            None => x,
        };
        for (p, &bit) in prefix.iter_mut().zip(&x) {
            *p = (*p << 1) | bit as usize;
        }
        us.push(u_hat);
        xs.push(x);
    }
    (us, xs)
}

/// Genie-aided bit-channel ranking. Every trial draws one quasi-static
/// channel and a random multilevel codeword; within each level SC runs
/// with the true past, so an error at position i is that bit-channel's
/// first-error event.
pub fn rank_bit_channels(
    link: &Link,
    n: usize,
    snr_db: f64,
    trials: usize,
    seed: u64,
) -> Result<BitChannelRanking> {
    if trials == 0 {
        return invalid("ranking needs at least one trial");
    }
    if n == 0 || !n.is_power_of_two() {
        return invalid(format!("block length {n} is not a power of two"));
    }
    let b = link.cb.bits();
    let noise = NoiseSpec::from_snr_db(snr_db, link.cb.l())?;
    let frozen = vec![vec![false; n]; b];
    let counts = (0..trials as u64)
        .into_par_iter()
        .fold(
            || (vec![vec![0u64; n]; b], ScDecoder::new(n).expect("checked")),
            |(mut acc, mut dec), t| {
                let mut rng = rng_for(seed, stream(Domain::Data, t));
                let u: Vec<Vec<u8>> = (0..b).map(|_| (0..n).map(|_| rng.gen_range(0..2)).collect()).collect();
                let x: Vec<Vec<u8>> = u
                    .iter()
                    .map(|u| {
                        let mut x = u.clone();
                        transform_in_place(&mut x);
                        x
                    })
                    .collect();
                let rx = transmit(link, &pack_labels(&x, n), noise, seed, t);
                let lm = label_metrics(link, &rx, noise, n);
                msd_core(&lm, b, n, &frozen, &mut dec, Genie { upper: Some(&x), leaves: Some(&u) }, |level, i, l| {
                    // ties count as errors
                    let hard = if l == 0.0 { 2 } else { u8::from(l < 0.0) };
                    if hard != u[level - 1][i] {
                        acc[level - 1][i] += 1;
                    }
                });
                (acc, dec)
            },
        )
        .map(|(acc, _)| acc)
        .reduce(
            || vec![vec![0u64; n]; b],
            |mut a, c| {
                for (ra, rc) in a.iter_mut().zip(c) {
                    for (x, y) in ra.iter_mut().zip(rc) {
                        *x += y;
                    }
                }
                a
            },
        );
    Ok(BitChannelRanking {
        error_counts: counts,
        trials,
        snr: snr_db,
        seed,
        n,
        b,
    })
}

impl BitChannelRanking {
    /// Positions of one level, most reliable first (ties to lower index).
    pub fn level_order(&self, level: usize) -> Vec<usize> {
        let c = &self.error_counts[level - 1];
        let mut idx: Vec<usize> = (0..self.n).collect();
        idx.sort_by_key(|&i| (c[i], i));
        idx
    }

    fn stamp(&self, mut code: MlpcmCode) -> MlpcmCode {
        code.ranking_seed = Some(self.seed);
        code.ranking_trials = Some(self.trials);
        code
    }
}

/// The K globally most reliable bit-channels (ties: lower level, then lower
/// index).
pub fn select_information_sets(rank: &BitChannelRanking, k: usize) -> Result<MlpcmCode> {
    let (n, b) = (rank.n, rank.b);
    if k > n * b {
        return invalid(format!("K = {k} exceeds N·B = {}", n * b));
    }
    let mut all: Vec<(u64, usize, usize)> = (0..b)
        .flat_map(|l| (0..n).map(move |i| (l, i)))
        .map(|(l, i)| (rank.error_counts[l][i], l, i))
        .collect();
    all.sort_unstable();
    let mut sets = vec![Vec::new(); b];
    for &(_, l, i) in &all[..k] {
        sets[l].push(i);
    }
    Ok(rank.stamp(MlpcmCode::from_info_sets(n, sets, rank.snr)?))
}

/// Fixed per-level sizes, filled with each level's most reliable positions.
pub fn code_from_level_sizes(rank: &BitChannelRanking, sizes: &[usize]) -> Result<MlpcmCode> {
    if sizes.len() != rank.b || sizes.iter().any(|&s| s > rank.n) {
        return invalid("one size per level, each at most N");
    }
    let sets = sizes
        .iter()
        .enumerate()
        .map(|(l, &s)| rank.level_order(l + 1)[..s].to_vec())
        .collect();
    Ok(rank.stamp(MlpcmCode::from_info_sets(rank.n, sets, rank.snr)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutageRates {
    /// Per-level outage capacities C_{ε̂,b}, bits per level symbol.
    pub rates: Vec<f64>,
    /// Outage level at loop exit.
    pub eps: f64,
    pub iterations: usize,
}

/// Rate rule driven by per-level outage capacities: starting from the
/// joint outage ε̂ at R_tot·B, grow ε̂ by `m` until the level capacities
/// sum to R_tot·B.
pub fn outage_rule_rates(samples: &MiSamples, r_tot: f64, m: f64) -> Result<OutageRates> {
    if !(r_tot > 0.0 && r_tot < 1.0) {
        return invalid(format!("R_tot must lie in (0, 1), got {r_tot}"));
    }
    if !(m > 1.0) {
        return invalid(format!("growth factor must exceed 1, got {m}"));
    }
    let count = samples.total.len();
    if count == 0 {
        return invalid("no realizations");
    }
    let b = samples.levels();
    let target = r_tot * b as f64;
    let joint = samples.total.iter().filter(|&&v| v < target).count() as f64 / count as f64;
    // ε̂ = 0 has no empirical quantile; start at the smallest resolvable one
    let mut eps = joint.max(1.0 / count as f64);
    let columns: Vec<Vec<f64>> = (1..=b).map(|l| samples.level(l)).collect();
    let mut iterations = 0;
    while eps < 1.0 {
        iterations += 1;
        let rates = columns
            .iter()
            .map(|c| outage_capacity(c, eps))
            .collect::<Result<Vec<_>>>()?;
        if rates.iter().sum::<f64>() >= target {
            return Ok(OutageRates {
                rates,
                eps,
                iterations,
            });
        }
        eps *= m;
    }
    Err(Error::NoFeasibleRates { eps })
}

/// Convenience wrapper sampling the level-wise information first.
pub fn outage_rule_rates_for(
    spm: &SetPartitionMap,
    cb: &Codebook,
    r_tot: f64,
    batch: &ChannelBatch,
    noise: NoiseSpec,
    m: f64,
    mc: usize,
    seed: u64,
) -> Result<OutageRates> {
    let s = mi_samples(spm, cb, noise, batch, mc, seed)?;
    outage_rule_rates(&s, r_tot, m)
}

/// Integer level sizes summing to `k`: rates are scaled to sum to K/N,
/// floored, and the remainder goes to the largest fractional parts
/// (ties to the higher level).
pub fn allocate_level_sizes(rates: &[f64], n: usize, k: usize) -> Result<Vec<usize>> {
    let b = rates.len();
    if k > n * b {
        return invalid(format!("K = {k} exceeds N·B = {}", n * b));
    }
    if rates.iter().any(|r| !(0.0..=1.0 + 1e-12).contains(r)) {
        return invalid("level rates must lie in [0, 1]");
    }
    let sum: f64 = rates.iter().sum();
    let want: Vec<f64> = if sum > 0.0 {
        rates.iter().map(|r| r / sum * k as f64).collect()
    } else {
        vec![k as f64 / b as f64; b]
    };
    let mut sizes: Vec<usize> = want.iter().map(|w| (w.floor() as usize).min(n)).collect();
    let mut left = k - sizes.iter().sum::<usize>().min(k);
    let mut order: Vec<usize> = (0..b).collect();
    order.sort_by(|&a, &c| {
        let fa = want[a] - want[a].floor();
        let fc = want[c] - want[c].floor();
        fc.total_cmp(&fa).then(c.cmp(&a))
    });
    // levels saturated at N pass their share on
    while left > 0 {
        let before = left;
        for &l in &order {
            if left > 0 && sizes[l] < n {
                sizes[l] += 1;
                left -= 1;
            }
        }
        if before == left {
            break;
        }
    }
    Ok(sizes)
}

/// Pr(every level in outage | some level in outage) for the given rates.
/// Levels with rate 0 carry no data and are left out.
pub fn outage_coupling(samples: &MiSamples, rates: &[f64]) -> f64 {
    let (mut any, mut all) = (0usize, 0usize);
    let active = rates.iter().filter(|&&r| r > 0.0).count();
    for row in &samples.values {
        let out = row.iter().zip(rates).filter(|&(i, &r)| r > 0.0 && *i < r).count();
        if out > 0 {
            any += 1;
            if out == active {
                all += 1;
            }
        }
    }
    if any == 0 {
        1.0
    } else {
        all as f64 / any as f64
    }
}

/// Splits K data bits over the levels, polar-encodes each and returns the
/// N labels.
pub fn mlpcm_encode(code: &MlpcmCode, data: &[u8]) -> Result<Vec<usize>> {
    Ok(pack_labels(&encode_levels(code, data)?, code.n))
}

fn encode_levels(code: &MlpcmCode, data: &[u8]) -> Result<Vec<Vec<u8>>> {
    if data.len() != code.k() {
        return invalid(format!("{} data bits for K = {}", data.len(), code.k()));
    }
    let mut pos = 0;
    Ok(code
        .info_sets
        .iter()
        .map(|set| {
            let mut u = vec![0u8; code.n];
            for &i in set {
                u[i] = data[pos] & 1;
                pos += 1;
            }
            transform_in_place(&mut u);
            u
        })
        .collect())
}

fn extract(code: &MlpcmCode, us: &[Vec<u8>]) -> Vec<u8> {
    code.info_sets
        .iter()
        .zip(us)
        .flat_map(|(set, u)| set.iter().map(move |&i| u[i]))
        .collect()
}

/// Multistage decoding of one frame. `y_seq[n]` is the L × Nr block of
/// symbol n; time-varying codes need the phase seed used at the transmitter.
pub fn msd_decode(
    code: &MlpcmCode,
    spm: &SetPartitionMap,
    cb: &Codebook,
    y_seq: &[ComplexMatrix],
    h: &ComplexMatrix,
    noise: NoiseSpec,
    tv_seed: Option<u64>,
) -> Result<Vec<u8>> {
    code.check_link(spm, cb)?;
    if y_seq.len() != code.n {
        return Err(Error::Dimension(format!("{} received blocks for N = {}", y_seq.len(), code.n)));
    }
    if h.rows() != cb.nt() {
        return Err(Error::Dimension("channel rows must equal transmit antennas".into()));
    }
    if cb.spec.tv != tv_seed.is_some() {
        return invalid("phase seed must be given exactly for time-varying codes");
    }
    let nr = h.cols();
    let mut y = Vec::with_capacity(code.n * cb.l() * nr);
    for m in y_seq {
        if m.rows() != cb.l() || m.cols() != nr {
            return Err(Error::Dimension("received block must be L x Nr".into()));
        }
        y.extend_from_slice(m.as_slice());
    }
    let link = Link::new(cb, spm, nr)?;
    let rx = FrameRx {
        h: h.clone(),
        y,
        tv_seed,
    };
    let lm = label_metrics(&link, &rx, noise, code.n);
    let mut dec = ScDecoder::new(code.n)?;
    let (us, _) = msd_core(&lm, code.b, code.n, &code.frozen_masks(), &mut dec, NO_GENIE, |_, _, _| {});
    Ok(extract(code, &us))
}

/// Frame error statistics at one SNR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FerPoint {
    pub snr_db: f64,
    pub frames: usize,
    pub errors: usize,
    /// Frames whose level-b message bits were wrong.
    pub level_errors: Vec<usize>,
    pub seed: u64,
}

impl FerPoint {
    pub fn fer(&self) -> f64 {
        if self.frames == 0 {
            0.0
        } else {
            self.errors as f64 / self.frames as f64
        }
    }

    /// Binomial standard error of the estimate.
    pub fn std_err(&self) -> f64 {
        let p = self.fer();
        (p * (1.0 - p) / self.frames.max(1) as f64).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FerBudget {
    pub max_frames: usize,
    pub max_errors: usize,
    /// Upper levels decoded with the true bits.
    pub genie: bool,
}

impl Default for FerBudget {
    fn default() -> Self {
        Self {
            max_frames: 10_000,
            max_errors: 100,
            genie: false,
        }
    }
}

const FRAME_BATCH: usize = 64;

/// Monte-Carlo FER. Frame `f` draws its data, channel, noise and phases
/// from streams indexed by `f`, so two codes simulated with the same seed
/// see identical channels. Stops at the frame where the error budget is
/// reached, independent of thread count.
pub fn simulate_fer(code: &MlpcmCode, link: &Link, snr_db: f64, budget: FerBudget, seed: u64) -> Result<FerPoint> {
    code.check_link(link.spm, link.cb)?;
    if budget.max_frames == 0 {
        return invalid("frame budget must be positive");
    }
    let noise = NoiseSpec::from_snr_db(snr_db, link.cb.l())?;
    let frozen = code.frozen_masks();
    let mut point = FerPoint {
        snr_db,
        frames: 0,
        errors: 0,
        level_errors: vec![0; code.b],
        seed,
    };
    let mut next = 0usize;
    while next < budget.max_frames && point.errors < budget.max_errors.max(1) {
        let end = (next + FRAME_BATCH * rayon::current_num_threads()).min(budget.max_frames);
        let outcomes: Vec<Vec<bool>> = (next..end)
            .into_par_iter()
            .map_init(
                || ScDecoder::new(code.n).expect("valid code"),
                |dec, f| simulate_frame(code, link, &frozen, noise, seed, f as u64, budget.genie, dec),
            )
            .collect();
        for lv in outcomes {
            point.frames += 1;
            if lv.iter().any(|&e| e) {
                point.errors += 1;
            }
            for (c, e) in point.level_errors.iter_mut().zip(lv) {
                *c += usize::from(e);
            }
            if point.errors >= budget.max_errors.max(1) {
                break;
            }
        }
        next = end;
    }
    Ok(point)
}

#[allow(clippy::too_many_arguments)]
fn simulate_frame(
    code: &MlpcmCode,
    link: &Link,
    frozen: &[Vec<bool>],
    noise: NoiseSpec,
    seed: u64,
    frame: u64,
    genie: bool,
    dec: &mut ScDecoder,
) -> Vec<bool> {
    let mut rng = rng_for(seed, stream(Domain::Data, frame));
    let data: Vec<u8> = (0..code.k()).map(|_| rng.gen_range(0..2)).collect();
    let x = encode_levels(code, &data).expect("sized data");
    let rx = transmit(link, &pack_labels(&x, code.n), noise, seed, frame);
    let lm = label_metrics(link, &rx, noise, code.n);
    let u_true: Vec<Vec<u8>> = x
        .iter()
        .map(|c| {
            let mut u = c.clone();
            transform_in_place(&mut u);
            u
        })
        .collect();
    let mode = Genie {
        upper: genie.then_some(x.as_slice()),
        leaves: None,
    };
    let (us, _) = msd_core(&lm, code.b, code.n, frozen, dec, mode, |_, _, _| {});
    code.info_sets
        .iter()
        .zip(us.iter().zip(&u_true))
        .map(|(set, (u, t))| set.iter().any(|&i| u[i] != t[i]))
        .collect()
}

/// Frame `frame` as seen by the receiver: labels, channel, received blocks
/// and phase seed. Exposed for diagnostics and tests.
pub fn sample_frame(
    code: &MlpcmCode,
    link: &Link,
    data: &[u8],
    snr_db: f64,
    seed: u64,
    frame: u64,
) -> Result<(ComplexMatrix, Vec<ComplexMatrix>, Option<u64>)> {
    let noise = NoiseSpec::from_snr_db(snr_db, link.cb.l())?;
    let labels = mlpcm_encode(code, data)?;
    let rx = transmit(link, &labels, noise, seed, frame);
    let dim = link.dim();
    let blocks = rx
        .y
        .chunks_exact(dim)
        .map(|c| ComplexMatrix::from_vec(link.cb.l(), link.nr, c.to_vec()))
        .collect::<Result<Vec<_>>>()?;
    Ok((rx.h, blocks, rx.tv_seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapping::{make_constellation, ConstellationKind};
    use crate::stbc::{enumerate_codebook, vector_code};

    fn qpsk_link_parts(tv: bool) -> (Codebook, SetPartitionMap) {
        let cb = enumerate_codebook(&vector_code(2, make_constellation(ConstellationKind::Qpsk), tv).unwrap()).unwrap();
        (cb, SetPartitionMap::identity(4))
    }

    fn synthetic(counts: Vec<Vec<u64>>) -> BitChannelRanking {
        BitChannelRanking {
            n: counts[0].len(),
            b: counts.len(),
            error_counts: counts,
            trials: 100,
            snr: 0.0,
            seed: 0,
        }
    }

    #[test]
    fn selection_extremes_and_order() {
        let r = synthetic(vec![vec![5, 9, 7, 8], vec![1, 2, 0, 3]]);
        let all = select_information_sets(&r, 8).unwrap();
        assert!(all.rates.iter().all(|&x| x == 1.0));
        let none = select_information_sets(&r, 0).unwrap();
        assert!(none.info_sets.iter().all(Vec::is_empty));
        let half = select_information_sets(&r, 4).unwrap();
        assert_eq!(half.info_sets, vec![vec![], vec![0, 1, 2, 3]]);
        assert!(half.rates[0] <= half.rates[1]);
        assert!(select_information_sets(&r, 9).is_err());
        // ties: lower level first
        let t = synthetic(vec![vec![1, 1], vec![1, 1]]);
        assert_eq!(select_information_sets(&t, 2).unwrap().info_sets, vec![vec![0, 1], vec![]]);
    }

    #[test]
    fn level_sizes_sum_to_k() {
        assert_eq!(allocate_level_sizes(&[0.1, 0.4, 0.6, 0.95], 32, 64).unwrap().iter().sum::<usize>(), 64);
        assert_eq!(allocate_level_sizes(&[0.0, 1.0], 8, 8).unwrap(), vec![0, 8]);
        assert_eq!(allocate_level_sizes(&[0.5, 0.5], 8, 8).unwrap(), vec![4, 4]);
        // saturated level hands its share on
        assert_eq!(allocate_level_sizes(&[0.1, 1.0], 4, 6).unwrap().iter().sum::<usize>(), 6);
    }

    #[test]
    fn encode_all_frozen() {
        let code = MlpcmCode::from_info_sets(8, vec![vec![]; 3], 0.0).unwrap();
        assert_eq!(mlpcm_encode(&code, &[]).unwrap(), vec![0; 8]);
        assert!(mlpcm_encode(&code, &[1]).is_err());
    }

    #[test]
    fn noiseless_round_trip() {
        for tv in [false, true] {
            let (cb, spm) = qpsk_link_parts(tv);
            let link = Link::new(&cb, &spm, 2).unwrap();
            let code = MlpcmCode::from_info_sets(16, vec![vec![7, 11, 13, 14, 15], vec![3, 5, 6, 7, 9, 10, 11, 12, 13, 14, 15], vec![15], (0..16).collect()], 0.0).unwrap();
            let mut rng = rng_for(1, 0);
            for f in 0..20 {
                let data: Vec<u8> = (0..code.k()).map(|_| rng.gen_range(0..2)).collect();
                let (h, ys, tvs) = sample_frame(&code, &link, &data, 200.0, 3, f).unwrap();
                let n = NoiseSpec::from_snr_db(200.0, 1).unwrap();
                assert_eq!(msd_decode(&code, &spm, &cb, &ys, &h, n, tvs).unwrap(), data);
            }
        }
    }

    #[test]
    fn ranking_checks() {
        let (cb, spm) = qpsk_link_parts(false);
        let link = Link::new(&cb, &spm, 1).unwrap();
        assert!(rank_bit_channels(&link, 8, 0.0, 0, 1).is_err());
        let quiet = rank_bit_channels(&link, 8, 250.0, 20, 1).unwrap();
        assert!(quiet.error_counts.iter().flatten().all(|&c| c == 0));
        let a = rank_bit_channels(&link, 8, 3.0, 50, 2).unwrap();
        let b = rank_bit_channels(&link, 8, 3.0, 50, 2).unwrap();
        assert_eq!(a, b);
        assert!(a.error_counts.iter().flatten().all(|&c| c <= 50));
    }
}
