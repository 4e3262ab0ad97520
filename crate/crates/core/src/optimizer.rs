//! Particle-swarm search with Monte-Carlo budgets that grow as the best
//! value falls, the outage objective for code design, the SNR line search
//! and the joint code/labelling/polar design loop.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{sample_channel_batch, NoiseSpec};
use crate::error::{invalid, Error, Result};
use crate::infotheory::{outage_probability_adaptive, AdaptiveMc};
use crate::linalg::C64;
use crate::mapping::{set_merge_labeling, Constellation, Measure, MeasureContext, SetPartitionMap};
use crate::mlc::{rank_bit_channels, select_information_sets, simulate_fer, FerBudget, Link, MlpcmCode};
use crate::rng::{derive_seed, rng_for, stream, Domain};
use crate::stbc::{
    build_stbc, enumerate_codebook, shaped_matrix_b_params, shaped_matrix_f_params, shaped_sbc_params, Codebook,
    Family, StbcSpec,
};

/// How a search vector maps to code coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Encoding {
    /// (α1, |β1|, φ°) with α2 = α1, β2 = jβ1. MatrixD and MatrixE.
    ShapedSbc,
    /// (|α2|/α1, φ°) with α1 = β1 = 1, β2 = −jα2.
    ShapedMatrixB,
    /// (|β|, φ1°, φ2°, φ3°) with α from the power constraint.
    ShapedMatrixF,
    /// Real and imaginary part of every coefficient.
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub family: Family,
    pub encoding: Encoding,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl SearchSpace {
    pub fn new(family: Family, encoding: Encoding, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let s = Self {
            family,
            encoding,
            lower,
            upper,
        };
        let want = s.natural_dims();
        if s.lower.len() != want || s.upper.len() != want {
            return invalid(format!("{:?} search vectors have {want} entries", s.encoding));
        }
        if s.lower.iter().zip(&s.upper).any(|(l, u)| !(l < u)) {
            return invalid("every lower bound must be below its upper bound");
        }
        Ok(s)
    }

    /// The shaped space of a family with default bounds.
    pub fn shaped(family: Family) -> Result<Self> {
        let (enc, lo, hi) = match family {
            Family::MatrixD | Family::MatrixE => (Encoding::ShapedSbc, vec![0.05, 0.05, 0.0], vec![1.0, 1.0, 360.0]),
            Family::MatrixB => (Encoding::ShapedMatrixB, vec![0.05, 0.0], vec![2.0, 360.0]),
            Family::MatrixF => (Encoding::ShapedMatrixF, vec![0.05, 0.0, 0.0, 0.0], vec![0.95, 360.0, 360.0, 360.0]),
            other => return invalid(format!("{other:?} has no free coefficients")),
        };
        Self::new(family, enc, lo, hi)
    }

    fn natural_dims(&self) -> usize {
        match self.encoding {
            Encoding::ShapedSbc => 3,
            Encoding::ShapedMatrixB => 2,
            Encoding::ShapedMatrixF => 4,
            Encoding::Raw => 2 * self.family.arity(),
        }
    }

    pub fn dims(&self) -> usize {
        self.lower.len()
    }

    pub fn params(&self, x: &[f64]) -> Result<Vec<C64>> {
        if x.len() != self.dims() {
            return invalid(format!("search vector of length {} for {} dims", x.len(), self.dims()));
        }
        match (self.encoding, self.family) {
            (Encoding::ShapedSbc, Family::MatrixD | Family::MatrixE) => Ok(shaped_sbc_params(x[0], x[1], x[2])),
            (Encoding::ShapedMatrixB, Family::MatrixB) => Ok(shaped_matrix_b_params(x[0], x[1])),
            (Encoding::ShapedMatrixF, Family::MatrixF) => shaped_matrix_f_params(x[0], [x[1], x[2], x[3]]),
            (Encoding::Raw, _) => Ok(x.chunks_exact(2).map(|c| C64::new(c[0], c[1])).collect()),
            (enc, fam) => invalid(format!("{enc:?} does not apply to {fam:?}")),
        }
    }
}

/// Budget tier: used while the best value is below `below` (always when
/// unset).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McTier {
    #[serde(default)]
    pub below: Option<f64>,
    pub samples: usize,
}

impl McTier {
    fn threshold(&self) -> f64 {
        self.below.unwrap_or(f64::INFINITY)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PsoConfig {
    pub particles: usize,
    /// Swarm evaluation rounds, the initial one included.
    pub iterations: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    pub mc_schedule: Vec<McTier>,
    pub seed: u64,
}

impl Default for PsoConfig {
    fn default() -> Self {
        Self {
            particles: 30,
            iterations: 100,
            inertia: 0.72,
            cognitive: 1.49,
            social: 1.49,
            mc_schedule: vec![
                McTier {
                    below: None,
                    samples: 1_000,
                },
                McTier {
                    below: Some(0.1),
                    samples: 10_000,
                },
                McTier {
                    below: Some(0.02),
                    samples: 100_000,
                },
            ],
            seed: 0,
        }
    }
}

impl PsoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.particles == 0 || self.iterations == 0 {
            return invalid("need at least one particle and one iteration");
        }
        if self.mc_schedule.is_empty() {
            return invalid("empty Monte-Carlo schedule");
        }
        for w in self.mc_schedule.windows(2) {
            if !(w[1].threshold() < w[0].threshold() && w[1].samples > w[0].samples) {
                return invalid("schedule thresholds must fall while budgets grow");
            }
        }
        if self.mc_schedule.iter().any(|t| t.samples == 0) {
            return invalid("zero-sample budget");
        }
        Ok(())
    }

    /// Budget for the current global best.
    pub fn samples_for(&self, best: f64) -> usize {
        self.mc_schedule
            .iter()
            .filter(|t| best < t.threshold())
            .map(|t| t.samples)
            .last()
            .unwrap_or(self.mc_schedule[0].samples)
    }

    fn max_samples(&self) -> usize {
        self.mc_schedule.last().map_or(0, |t| t.samples)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub best_value: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsoResult {
    pub best_x: Vec<f64>,
    /// The best vector re-evaluated at the largest budget.
    pub best_value: f64,
    /// Best value as seen during the search, before re-evaluation.
    pub search_value: f64,
    pub trace: Vec<TraceEntry>,
    pub evaluations: usize,
}

fn reflect(x: f64, lo: f64, hi: f64) -> f64 {
    let w = hi - lo;
    let mut t = (x - lo).rem_euclid(2.0 * w);
    if t > w {
        t = 2.0 * w - t;
    }
    lo + t
}

fn checked(value: Result<f64>, particle: usize, x: &[f64]) -> Result<f64> {
    let v = value?;
    if v.is_nan() {
        return Err(Error::Evaluation {
            particle,
            position: x.to_vec(),
            reason: "objective returned NaN".into(),
        });
    }
    Ok(v)
}

/// Minimizes `objective(x, samples, stream)`. Every particle of one round
/// is evaluated with the same stream (common random numbers) and the
/// budget dictated by the current global best.
pub fn pso_minimize<F>(objective: F, space: &SearchSpace, cfg: &PsoConfig) -> Result<PsoResult>
where
    F: Fn(&[f64], usize, u64) -> Result<f64> + Sync,
{
    cfg.validate()?;
    let d = space.dims();
    let (lo, hi) = (&space.lower, &space.upper);
    let mut rng = rng_for(cfg.seed, stream(Domain::Swarm, 0));
    let mut pos: Vec<Vec<f64>> = (0..cfg.particles)
        .map(|_| (0..d).map(|k| rng.gen_range(lo[k]..hi[k])).collect())
        .collect();
    let mut vel: Vec<Vec<f64>> = (0..cfg.particles)
        .map(|_| {
            (0..d)
                .map(|k| 0.25 * (hi[k] - lo[k]) * rng.gen_range(-1.0..1.0))
                .collect()
        })
        .collect();
    let eval_round = |pos: &[Vec<f64>], samples: usize, round: u64| -> Result<Vec<f64>> {
        pos.par_iter()
            .enumerate()
            .map(|(p, x)| checked(objective(x, samples, round), p, x))
            .collect()
    };
    let samples = cfg.samples_for(f64::INFINITY);
    let vals = eval_round(&pos, samples, 0)?;
    let mut evaluations = vals.len();
    let mut pbest = pos.clone();
    let mut pval = vals;
    let (mut g, mut gval) = argmin(&pval);
    let mut gbest = pbest[g].clone();
    let mut trace = vec![TraceEntry {
        iteration: 0,
        best_value: gval,
        samples,
    }];
    let vmax: Vec<f64> = (0..d).map(|k| 0.5 * (hi[k] - lo[k])).collect();
    for it in 1..cfg.iterations {
        for p in 0..cfg.particles {
            for k in 0..d {
                let (r1, r2): (f64, f64) = (rng.gen(), rng.gen());
                let v = cfg.inertia * vel[p][k]
                    + cfg.cognitive * r1 * (pbest[p][k] - pos[p][k])
                    + cfg.social * r2 * (gbest[k] - pos[p][k]);
                vel[p][k] = v.clamp(-vmax[k], vmax[k]);
                let moved = pos[p][k] + vel[p][k];
                let r = reflect(moved, lo[k], hi[k]);
                if r != moved {
                    vel[p][k] = -vel[p][k];
                }
                pos[p][k] = r;
            }
        }
        let samples = cfg.samples_for(gval);
        let vals = eval_round(&pos, samples, it as u64)?;
        evaluations += vals.len();
        for (p, v) in vals.into_iter().enumerate() {
            if v < pval[p] {
                pval[p] = v;
                pbest[p] = pos[p].clone();
            }
        }
        let (cand, cval) = argmin(&pval);
        if cval < gval {
            g = cand;
            gval = cval;
            gbest = pbest[g].clone();
        }
        trace.push(TraceEntry {
            iteration: it,
            best_value: gval,
            samples,
        });
    }
    let final_value = checked(objective(&gbest, cfg.max_samples(), 0), g, &gbest)?;
    Ok(PsoResult {
        best_x: gbest,
        best_value: final_value,
        search_value: gval,
        trace,
        evaluations: evaluations + 1,
    })
}

fn argmin(v: &[f64]) -> (usize, f64) {
    v.iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bv), (i, &x)| if x < bv { (i, x) } else { (bi, bv) })
}

/// Operating point of the outage objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutageTarget {
    pub nr: usize,
    pub snr_db: f64,
    /// Code rate; the target is R_tot·B bits per space-time symbol.
    pub r_tot: f64,
    pub seed: u64,
    #[serde(default)]
    pub mc: Option<AdaptiveMc>,
}

pub const INFEASIBLE_PENALTY: f64 = 1.0;

fn infeasible(e: &Error) -> bool {
    matches!(
        e,
        Error::RankDeficient(_) | Error::Constraint(_) | Error::InvalidArgument(_)
    )
}

/// Outage probability of the code induced by a search vector. The sample
/// budget is the number of channel realizations; `stream` selects the batch.
pub fn objective_outage<'a>(
    space: &'a SearchSpace,
    constellation: &'a Constellation,
    tv: bool,
    target: &'a OutageTarget,
) -> impl Fn(&[f64], usize, u64) -> Result<f64> + Sync + 'a {
    move |x, samples, round| {
        let cb = match space
            .params(x)
            .and_then(|p| build_stbc(space.family, &p, constellation.clone(), tv))
            .and_then(|s| enumerate_codebook(&s))
        {
            Ok(cb) => cb,
            Err(e) if infeasible(&e) => return Ok(INFEASIBLE_PENALTY),
            Err(e) => return Err(e),
        };
        outage_of(&cb, target, samples, round)
    }
}

/// Outage probability of a fixed codebook on the batch `(seed, round)`.
pub fn outage_of(cb: &Codebook, target: &OutageTarget, samples: usize, round: u64) -> Result<f64> {
    let noise = NoiseSpec::from_snr_db(target.snr_db, cb.l())?;
    let batch = sample_channel_batch(cb.nt(), target.nr, samples, target.seed, stream(Domain::Channel, round))?;
    outage_probability_adaptive(
        cb,
        target.r_tot * cb.bits() as f64,
        noise,
        &batch,
        target.mc.unwrap_or_default(),
        derive_seed(target.seed, round),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrSearch {
    pub snr_db: f64,
    pub value: f64,
    /// Grid points visited, in order.
    pub evaluations: Vec<(f64, f64)>,
    /// Set when the evaluated values ever increased with SNR.
    pub non_monotone: bool,
}

/// Smallest grid SNR in `[lo, hi]` (step `step`) whose value meets `target`.
pub fn min_snr_for_target<F>(mut evaluate: F, target: f64, range: (f64, f64), step: f64) -> Result<SnrSearch>
where
    F: FnMut(f64) -> Result<f64>,
{
    let (lo, hi) = range;
    if !(lo < hi) || !(step > 0.0) {
        return invalid("need lo < hi and a positive step");
    }
    let mut evaluations: Vec<(f64, f64)> = Vec::new();
    let mut non_monotone = false;
    let points = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    for k in 0..points {
        let snr = lo + k as f64 * step;
        let v = evaluate(snr)?;
        if let Some(&(_, prev)) = evaluations.last() {
            non_monotone |= v > prev;
        }
        evaluations.push((snr, v));
        if v <= target {
            return Ok(SnrSearch {
                snr_db: snr,
                value: v,
                evaluations,
                non_monotone,
            });
        }
    }
    let best = evaluations.iter().map(|e| e.1).fold(f64::INFINITY, f64::min);
    Err(Error::NotFound { best, snr_db: hi })
}

/// SNR where a decreasing curve crosses `target`, interpolating log(value)
/// linearly between the bracketing grid points.
pub fn crossing_snr(points: &[(f64, f64)], target: f64) -> Option<f64> {
    let first = points.first()?;
    if first.1 <= target {
        return Some(first.0);
    }
    points.windows(2).find_map(|w| {
        let ((s0, v0), (s1, v1)) = (w[0], w[1]);
        if v0 > target && v1 <= target {
            if v1 <= 0.0 {
                return Some(s1);
            }
            let t = (v0.ln() - target.ln()) / (v0.ln() - v1.ln());
            Some(s0 + t * (s1 - s0))
        } else {
            None
        }
    })
}

/// Everything that stays fixed across one joint-design search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointSetup {
    pub constellation: Constellation,
    pub tv: bool,
    pub nr: usize,
    /// Per-level block length.
    pub n: usize,
    pub r_tot: f64,
    pub snr_db: f64,
    pub measure: Measure,
    pub rel_threshold: f64,
    pub ranking_trials: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design {
    pub spec: StbcSpec,
    pub spm: SetPartitionMap,
    pub code: MlpcmCode,
    pub fer: f64,
    pub frames: usize,
}

/// Code → labelling → ranking → information sets → FER, at one vector.
pub fn design_pipeline(space: &SearchSpace, setup: &JointSetup, x: &[f64], frames: usize, round: u64) -> Result<Design> {
    let params = space.params(x)?;
    let spec = build_stbc(space.family, &params, setup.constellation.clone(), setup.tv)?;
    let cb = enumerate_codebook(&spec)?;
    let noise = NoiseSpec::from_snr_db(setup.snr_db, cb.l())?;
    let ctx = MeasureContext {
        noise: Some(noise),
        q: Some(crate::infotheory::q_from_rate(setup.r_tot)?),
        nr: setup.nr,
        omega: None,
    };
    let spm = set_merge_labeling(&cb, setup.measure, &ctx, setup.rel_threshold)?;
    let link = Link::new(&cb, &spm, setup.nr)?;
    let rank = rank_bit_channels(&link, setup.n, setup.snr_db, setup.ranking_trials, setup.seed)?;
    let k = (setup.r_tot * (setup.n * cb.bits()) as f64).round() as usize;
    let code = select_information_sets(&rank, k)?;
    let budget = FerBudget {
        max_frames: frames,
        max_errors: usize::MAX,
        genie: false,
    };
    let pt = simulate_fer(&code, &link, setup.snr_db, budget, derive_seed(setup.seed, round))?;
    Ok(Design {
        fer: pt.fer(),
        frames: pt.frames,
        spec,
        spm,
        code,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointDesign {
    pub design: Design,
    pub search: PsoResult,
}

/// Swarm search over code coefficients where each evaluation runs the full
/// design pipeline and returns its FER (frames = sample budget).
pub fn joint_design(space: &SearchSpace, setup: &JointSetup, cfg: &PsoConfig) -> Result<JointDesign> {
    let objective = |x: &[f64], frames: usize, round: u64| match design_pipeline(space, setup, x, frames, round) {
        Ok(d) => Ok(d.fer),
        Err(e) if infeasible(&e) => Ok(INFEASIBLE_PENALTY),
        Err(e) => Err(e),
    };
    let search = pso_minimize(objective, space, cfg)?;
    let design = design_pipeline(space, setup, &search.best_x, cfg.max_samples(), 0)?;
    Ok(JointDesign { design, search })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn square() -> SearchSpace {
        SearchSpace::new(Family::MatrixD, Encoding::Raw, vec![-1.0; 8], vec![1.0; 8])
            .map(|mut s| {
                s.lower.truncate(2);
                s.upper.truncate(2);
                s
            })
            .unwrap()
    }

    fn one_tier(samples: usize) -> Vec<McTier> {
        vec![McTier {
            below: None,
            samples,
        }]
    }

    #[test]
    fn converges_on_a_bowl() {
        let x0 = [0.3, -0.6];
        let cfg = PsoConfig {
            particles: 20,
            iterations: 200,
            mc_schedule: one_tier(1),
            seed: 5,
            ..PsoConfig::default()
        };
        let f = |x: &[f64], _: usize, _: u64| Ok((x[0] - x0[0]).powi(2) + (x[1] - x0[1]).powi(2));
        let r = pso_minimize(f, &square(), &cfg).unwrap();
        assert!((r.best_x[0] - x0[0]).abs() < 1e-3 && (r.best_x[1] - x0[1]).abs() < 1e-3);
        assert!(r.trace.windows(2).all(|w| w[1].best_value <= w[0].best_value));
        let again = pso_minimize(f, &square(), &cfg).unwrap();
        assert_eq!(r, again);
    }

    #[test]
    fn schedule_switches_budget() {
        let cfg = PsoConfig {
            particles: 6,
            iterations: 40,
            mc_schedule: vec![
                McTier {
                    below: None,
                    samples: 10,
                },
                McTier {
                    below: Some(0.05),
                    samples: 100,
                },
            ],
            seed: 1,
            ..PsoConfig::default()
        };
        let small = AtomicUsize::new(0);
        let f = |x: &[f64], s: usize, _: u64| {
            let v = x[0] * x[0] + x[1] * x[1];
            if s == 10 {
                small.fetch_add(1, Ordering::Relaxed);
            }
            Ok(v)
        };
        let r = pso_minimize(f, &square(), &cfg).unwrap();
        for e in &r.trace {
            assert_eq!(e.samples, if e.iteration == 0 { 10 } else { cfg.samples_for(r.trace[e.iteration - 1].best_value) });
        }
        assert!(small.load(Ordering::Relaxed) > 0);
        assert!(r.trace.iter().any(|e| e.samples == 100));
    }

    #[test]
    fn nan_is_reported() {
        let cfg = PsoConfig {
            particles: 3,
            iterations: 2,
            mc_schedule: one_tier(1),
            ..PsoConfig::default()
        };
        let r = pso_minimize(|_: &[f64], _, _| Ok(f64::NAN), &square(), &cfg);
        assert!(matches!(r, Err(Error::Evaluation { .. })));
    }

    #[test]
    fn bad_schedule_rejected() {
        let mut cfg = PsoConfig::default();
        cfg.mc_schedule.swap(1, 2);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn snr_line_search() {
        let r = min_snr_for_target(|s| Ok(10f64.powf(-s / 10.0)), 0.01, (0.0, 30.0), 1.0).unwrap();
        assert_eq!(r.snr_db, 20.0);
        assert!(!r.non_monotone);
        assert_eq!(min_snr_for_target(|_| Ok(0.5), 2.0, (3.0, 9.0), 1.0).unwrap().snr_db, 3.0);
        let bumpy = [0.5, 0.6, 0.3, 0.001];
        let mut k = 0;
        let r = min_snr_for_target(
            |_| {
                k += 1;
                Ok(bumpy[k - 1])
            },
            0.01,
            (0.0, 3.0),
            1.0,
        )
        .unwrap();
        assert!(r.non_monotone);
        assert!(matches!(
            min_snr_for_target(|_| Ok(0.5), 0.1, (0.0, 2.0), 1.0),
            Err(Error::NotFound { .. })
        ));
    }

    #[test]
    fn crossing_interpolates_in_log() {
        let pts = [(0.0, 1.0), (1.0, 0.1), (2.0, 0.01)];
        assert!((crossing_snr(&pts, 0.1f64.sqrt().powi(3)).unwrap() - 1.5).abs() < 1e-12);
        assert_eq!(crossing_snr(&pts, 2.0), Some(0.0));
        assert_eq!(crossing_snr(&pts, 1e-4), None);
    }

    #[test]
    fn reflection_stays_inside() {
        for x in [-3.7, -1.0, 0.2, 1.0, 2.5, 9.1] {
            let r = reflect(x, -1.0, 1.0);
            assert!((-1.0..=1.0).contains(&r));
        }
        assert!((reflect(1.3, -1.0, 1.0) - 0.7).abs() < 1e-12);
    }

    #[test]
    fn degenerate_vector_is_penalized() {
        let space = SearchSpace::new(Family::MatrixD, Encoding::Raw, vec![-1.0; 8], vec![1.0; 8]).unwrap();
        let c = crate::mapping::make_constellation(crate::mapping::ConstellationKind::Qpsk);
        let t = OutageTarget {
            nr: 2,
            snr_db: 10.0,
            r_tot: 0.5,
            seed: 1,
            mc: None,
        };
        let f = objective_outage(&space, &c, false, &t);
        // α1 β2 − α2 β1 = 0
        let x = [1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0];
        assert_eq!(f(&x, 100, 0).unwrap(), INFEASIBLE_PENALTY);
    }
}
