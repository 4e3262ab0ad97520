//! Experiment configuration, sweeps and result tables.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::channel::{sample_channel_batch, NoiseSpec, SNR_CONVENTION};
use crate::error::{Error, Result};
use crate::infotheory::{
    bhattacharyya, bhattacharyya_tv_avg, mi_samples, omega_moments, outage_probability_adaptive, q_from_rate,
    ubpop_sbc, ubpop_stbc, ubpop_tvsbc, AdaptiveMc,
};
use crate::linalg::{ComplexMatrix, C64};
use crate::mapping::{
    distance_matrix, level_protection, make_constellation, set_merge_labeling, ConstellationKind, Measure,
    MeasureContext, SetPartitionMap, DEFAULT_REL_THRESHOLD,
};
use crate::mlc::{
    allocate_level_sizes, code_from_level_sizes, outage_rule_rates, rank_bit_channels, select_information_sets,
    simulate_fer, BitChannelRanking, FerBudget, Link, MlpcmCode,
};
use crate::optimizer::{joint_design, objective_outage, pso_minimize, JointSetup, OutageTarget, PsoConfig, SearchSpace};
use crate::rng::{derive_seed, stream, Domain, RNG_METHOD};
use crate::stbc::{build_stbc, difference, enumerate_codebook, vector_code, Codebook, Family, StbcSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    OutageSweep,
    FerSweep,
    OptimizeStbc,
    DesignCode,
    Label,
    RankBitchannels,
    JointDesign,
    BoundCheck,
}

/// A code given by explicit coefficients, by a shaped search vector, or
/// neither for the parameter-free families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodeDef {
    pub family: Family,
    pub constellation: ConstellationKind,
    #[serde(default)]
    pub tv: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<Vec<C64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<Vec<f64>>,
    /// Antenna count of the vector code.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nt: Option<usize>,
}

impl CodeDef {
    pub fn build(&self) -> Result<StbcSpec> {
        let c = make_constellation(self.constellation);
        if self.family == Family::MatrixC {
            return vector_code(self.nt.unwrap_or(2), c, self.tv);
        }
        let params = match (&self.params, &self.shape) {
            (Some(_), Some(_)) => return Err(Error::Config("give either params or shape, not both".into())),
            (Some(p), None) => p.clone(),
            (None, Some(x)) => SearchSpace::shaped(self.family)?.params(x)?,
            (None, None) if self.family.arity() == 0 => Vec::new(),
            (None, None) => return Err(Error::Config(format!("{:?} needs params or shape", self.family))),
        };
        build_stbc(self.family, &params, c, self.tv)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelDef {
    pub measure: Measure,
    pub threshold: f64,
    pub omega_samples: usize,
}

impl Default for LabelDef {
    fn default() -> Self {
        Self {
            measure: Measure::Determinant,
            threshold: DEFAULT_REL_THRESHOLD,
            omega_samples: 100_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateRule {
    /// Globally best bit-channels from the genie ranking.
    Ranking,
    /// Level rates from per-level outage capacities.
    Outage,
    /// Equal rate on every level.
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Option<ExperimentKind>,
    pub code: Option<CodeDef>,
    pub nr: usize,
    pub snr_db: Vec<f64>,
    pub r_tot: f64,
    pub realizations: usize,
    pub mc: AdaptiveMc,
    pub max_frames: usize,
    pub min_errors: usize,
    /// Per-level polar block length.
    pub n: usize,
    pub labelling: LabelDef,
    pub rate_rule: RateRule,
    pub design_snr: Option<f64>,
    pub ranking_trials: usize,
    pub outage_growth: f64,
    /// Realizations per level-information sample for the outage rate rule.
    pub mi_samples: usize,
    /// Previously designed labelling and code to reuse.
    pub bundle: Option<PathBuf>,
    pub search: Option<SearchSpace>,
    pub pso: PsoConfig,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            kind: None,
            code: None,
            nr: 2,
            snr_db: Vec::new(),
            r_tot: 0.5,
            realizations: 10_000,
            mc: AdaptiveMc::default(),
            max_frames: 10_000,
            min_errors: 100,
            n: 64,
            labelling: LabelDef::default(),
            rate_rule: RateRule::Ranking,
            design_snr: None,
            ranking_trials: 2_000,
            outage_growth: 1.05,
            mi_samples: 256,
            bundle: None,
            search: None,
            pso: PsoConfig::default(),
            seed: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads JSON or TOML, chosen by extension (JSON first when unknown).
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => Self::from_toml(&text),
            Some("json") => Self::from_json(&text),
            _ => Self::from_json(&text).or_else(|_| Self::from_toml(&text)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.nr == 0 {
            return bad("nr must be positive");
        }
        if self.realizations == 0 || self.max_frames == 0 || self.ranking_trials == 0 || self.mi_samples == 0 {
            return bad("budgets must be positive");
        }
        if !(0.0..=1.0).contains(&self.r_tot) {
            return bad("r_tot must lie in [0, 1]");
        }
        if self.n == 0 || !self.n.is_power_of_two() {
            return bad("n must be a power of two");
        }
        if self.snr_db.iter().any(|s| !s.is_finite()) {
            return bad("SNR values must be finite");
        }
        Ok(())
    }

    fn code_def(&self) -> Result<&CodeDef> {
        self.code.as_ref().ok_or_else(|| Error::Config("missing [code] section".into()))
    }

    fn need_grid(&self) -> Result<()> {
        if self.snr_db.is_empty() {
            return Err(Error::Config("empty SNR grid".into()));
        }
        Ok(())
    }

    fn design_point(&self) -> Result<f64> {
        self.design_snr
            .or_else(|| self.snr_db.first().copied())
            .ok_or_else(|| Error::Config("no design SNR and empty SNR grid".into()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub snr_db: f64,
    pub metric: String,
    pub value: f64,
    pub events: u64,
    pub trials: u64,
    pub seed: u64,
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub rng_method: String,
    pub snr_convention: String,
    pub config: Value,
    #[serde(default)]
    pub artifacts: Value,
}

impl Manifest {
    fn new(cfg: &ExperimentConfig) -> Self {
        Self {
            tool: "mlpcm".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            rng_method: RNG_METHOD.into(),
            snr_convention: SNR_CONVENTION.into(),
            config: serde_json::to_value(cfg).unwrap_or(Value::Null),
            artifacts: Value::Null,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
    pub manifest: Manifest,
}

pub const CSV_HEADER: &str = "snr_db,metric,value,events,trials,seed";

/// `%g`-style formatting with six significant digits.
pub fn format_sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{x:.5e}");
    let (mant, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if !(-4..6).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim(mant), exp.abs())
    } else {
        trim(&format!("{x:.*}", (5 - exp) as usize))
    }
}

impl ResultTable {
    pub fn new(cfg: &ExperimentConfig) -> Self {
        Self {
            rows: Vec::new(),
            manifest: Manifest::new(cfg),
        }
    }

    pub fn push(&mut self, snr_db: f64, metric: &str, value: f64, events: u64, trials: u64, seed: u64, since: Instant) {
        self.rows.push(ResultRow {
            snr_db,
            metric: metric.into(),
            value,
            events,
            trials,
            seed,
            wall_time: since.elapsed().as_secs_f64(),
        });
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                format_sig6(r.snr_db),
                r.metric,
                format_sig6(r.value),
                r.events,
                r.trials,
                r.seed
            );
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data") + "\n"
    }
}

/// Labelling plus code, as written by `design-code` and read by `fer`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignBundle {
    pub spec: StbcSpec,
    pub spm: SetPartitionMap,
    pub code: MlpcmCode,
}

/// Enumerated codebook with its defining spec, for exchange.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodebookFile {
    pub spec: StbcSpec,
    pub symbols: Vec<ComplexMatrix>,
}

impl From<&Codebook> for CodebookFile {
    fn from(cb: &Codebook) -> Self {
        Self {
            spec: cb.spec.clone(),
            symbols: cb.symbols.clone(),
        }
    }
}

impl CodebookFile {
    /// Rebuilds the codebook and checks it against the stored symbols.
    pub fn into_codebook(self) -> Result<Codebook> {
        let cb = enumerate_codebook(&self.spec)?;
        if cb.symbols != self.symbols {
            return Err(Error::Config("stored symbols do not match the spec".into()));
        }
        Ok(cb)
    }
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

pub fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

pub fn build_codebook(cfg: &ExperimentConfig) -> Result<Codebook> {
    enumerate_codebook(&cfg.code_def()?.build()?)
}

/// Measure context at `snr_db` for the configured labelling.
pub fn measure_context(cfg: &ExperimentConfig, cb: &Codebook, snr_db: f64) -> Result<MeasureContext> {
    let omega = match cfg.labelling.measure {
        Measure::UbpopTvsbc => Some(omega_moments(cfg.nr, cfg.labelling.omega_samples, cfg.seed)?),
        _ => None,
    };
    Ok(MeasureContext {
        noise: Some(NoiseSpec::from_snr_db(snr_db, cb.l())?),
        q: Some(q_from_rate(cfg.r_tot)?),
        nr: cfg.nr,
        omega,
    })
}

pub fn build_labelling(cfg: &ExperimentConfig, cb: &Codebook) -> Result<SetPartitionMap> {
    let ctx = measure_context(cfg, cb, cfg.design_point()?)?;
    set_merge_labeling(cb, cfg.labelling.measure, &ctx, cfg.labelling.threshold)
}

pub fn rank(cfg: &ExperimentConfig, cb: &Codebook, spm: &SetPartitionMap) -> Result<BitChannelRanking> {
    let link = Link::new(cb, spm, cfg.nr)?;
    rank_bit_channels(&link, cfg.n, cfg.design_point()?, cfg.ranking_trials, cfg.seed)
}

/// Component code design under the configured rate rule.
pub fn design_code(cfg: &ExperimentConfig, cb: &Codebook, spm: &SetPartitionMap) -> Result<MlpcmCode> {
    let snr = cfg.design_point()?;
    let ranking = rank(cfg, cb, spm)?;
    let b = cb.bits();
    let k = (cfg.r_tot * (cfg.n * b) as f64).round() as usize;
    let mut code = match cfg.rate_rule {
        RateRule::Ranking => select_information_sets(&ranking, k)?,
        RateRule::Uniform => {
            let sizes = allocate_level_sizes(&vec![cfg.r_tot; b], cfg.n, k)?;
            code_from_level_sizes(&ranking, &sizes)?
        }
        RateRule::Outage => {
            let noise = NoiseSpec::from_snr_db(snr, cb.l())?;
            let batch = sample_channel_batch(cb.nt(), cfg.nr, cfg.realizations, cfg.seed, stream(Domain::Channel, 0))?;
            let samples = mi_samples(spm, cb, noise, &batch, cfg.mi_samples, derive_seed(cfg.seed, 1))?;
            let rates = outage_rule_rates(&samples, cfg.r_tot, cfg.outage_growth)?;
            let sizes = allocate_level_sizes(&rates.rates, cfg.n, k)?;
            code_from_level_sizes(&ranking, &sizes)?
        }
    };
    code.design_snr = snr;
    Ok(code)
}

/// Spec, labelling and code: from the bundle when configured, designed
/// otherwise.
pub fn resolve_design(cfg: &ExperimentConfig) -> Result<DesignBundle> {
    if let Some(path) = &cfg.bundle {
        let b: DesignBundle = load_json(path)?;
        b.code.validate()?;
        return Ok(b);
    }
    let cb = build_codebook(cfg)?;
    let spm = build_labelling(cfg, &cb)?;
    let code = design_code(cfg, &cb, &spm)?;
    Ok(DesignBundle {
        spec: cb.spec,
        spm,
        code,
    })
}

pub fn run_fer_sweep(cfg: &ExperimentConfig) -> Result<ResultTable> {
    cfg.validate()?;
    cfg.need_grid()?;
    let bundle = resolve_design(cfg)?;
    let cb = enumerate_codebook(&bundle.spec)?;
    let link = Link::new(&cb, &bundle.spm, cfg.nr)?;
    let mut table = ResultTable::new(cfg);
    let budget = FerBudget {
        max_frames: cfg.max_frames,
        max_errors: cfg.min_errors,
        genie: false,
    };
    for &snr in &cfg.snr_db {
        let t = Instant::now();
        let pt = simulate_fer(&bundle.code, &link, snr, budget, cfg.seed)?;
        table.push(snr, "fer", pt.fer(), pt.errors as u64, pt.frames as u64, cfg.seed, t);
    }
    table.manifest.artifacts = json!({ "design": bundle });
    Ok(table)
}

pub fn run_outage_sweep(cfg: &ExperimentConfig) -> Result<ResultTable> {
    cfg.validate()?;
    cfg.need_grid()?;
    let cb = build_codebook(cfg)?;
    let batch = sample_channel_batch(cb.nt(), cfg.nr, cfg.realizations, cfg.seed, stream(Domain::Channel, 0))?;
    let mut table = ResultTable::new(cfg);
    let rate = cfg.r_tot * cb.bits() as f64;
    for &snr in &cfg.snr_db {
        let t = Instant::now();
        let noise = NoiseSpec::from_snr_db(snr, cb.l())?;
        let p = outage_probability_adaptive(&cb, rate, noise, &batch, cfg.mc, derive_seed(cfg.seed, 1))?;
        let events = (p * batch.count() as f64).round() as u64;
        table.push(snr, "outage", p, events, batch.count() as u64, cfg.seed, t);
    }
    Ok(table)
}

pub fn run_label(cfg: &ExperimentConfig) -> Result<(ResultTable, SetPartitionMap)> {
    cfg.validate()?;
    let cb = build_codebook(cfg)?;
    let snr = cfg.design_point()?;
    let ctx = measure_context(cfg, &cb, snr)?;
    let spm = set_merge_labeling(&cb, cfg.labelling.measure, &ctx, cfg.labelling.threshold)?;
    let t = Instant::now();
    let dist = distance_matrix(&cb, cfg.labelling.measure, &ctx)?;
    let mut table = ResultTable::new(cfg);
    for (b, p) in level_protection(&spm, &dist).into_iter().enumerate() {
        table.push(snr, &format!("level{}_min_distance", b + 1), p, 0, 0, cfg.seed, t);
    }
    table.manifest.artifacts = json!({ "spm": spm });
    Ok((table, spm))
}

pub fn run_rank(cfg: &ExperimentConfig) -> Result<(ResultTable, BitChannelRanking)> {
    cfg.validate()?;
    let cb = build_codebook(cfg)?;
    let spm = build_labelling(cfg, &cb)?;
    let t = Instant::now();
    let r = rank(cfg, &cb, &spm)?;
    let mut table = ResultTable::new(cfg);
    for (b, counts) in r.error_counts.iter().enumerate() {
        let events: u64 = counts.iter().sum();
        let trials = (r.trials * r.n) as u64;
        table.push(r.snr, &format!("level{}_bit_error_rate", b + 1), events as f64 / trials as f64, events, trials, cfg.seed, t);
    }
    table.manifest.artifacts = json!({ "ranking": r });
    Ok((table, r))
}

pub fn run_design_code(cfg: &ExperimentConfig) -> Result<(ResultTable, DesignBundle)> {
    cfg.validate()?;
    let t = Instant::now();
    let cb = build_codebook(cfg)?;
    let spm = build_labelling(cfg, &cb)?;
    let code = design_code(cfg, &cb, &spm)?;
    let mut table = ResultTable::new(cfg);
    for (b, r) in code.rates.iter().enumerate() {
        let k = code.info_sets[b].len() as u64;
        table.push(code.design_snr, &format!("level{}_rate", b + 1), *r, k, code.n as u64, cfg.seed, t);
    }
    let bundle = DesignBundle {
        spec: cb.spec,
        spm,
        code,
    };
    table.manifest.artifacts = json!({ "design": bundle });
    Ok((table, bundle))
}

fn search_space(cfg: &ExperimentConfig) -> Result<SearchSpace> {
    match &cfg.search {
        Some(s) => Ok(s.clone()),
        None => SearchSpace::shaped(cfg.code_def()?.family),
    }
}

pub fn run_optimize_stbc(cfg: &ExperimentConfig) -> Result<ResultTable> {
    cfg.validate()?;
    let def = cfg.code_def()?;
    let space = search_space(cfg)?;
    let snr = cfg.design_point()?;
    let target = OutageTarget {
        nr: cfg.nr,
        snr_db: snr,
        r_tot: cfg.r_tot,
        seed: cfg.seed,
        mc: Some(cfg.mc),
    };
    let c = make_constellation(def.constellation);
    let objective = objective_outage(&space, &c, def.tv, &target);
    let t = Instant::now();
    let result = pso_minimize(objective, &space, &cfg.pso)?;
    let mut table = ResultTable::new(cfg);
    for e in &result.trace {
        let events = (e.best_value * e.samples as f64).round() as u64;
        table.push(snr, "best_outage", e.best_value, events, e.samples as u64, cfg.pso.seed, t);
    }
    let params = space.params(&result.best_x)?;
    table.manifest.artifacts = json!({ "search": result, "space": space, "params": params });
    Ok(table)
}

pub fn run_joint(cfg: &ExperimentConfig) -> Result<ResultTable> {
    cfg.validate()?;
    let def = cfg.code_def()?;
    let space = search_space(cfg)?;
    let setup = JointSetup {
        constellation: make_constellation(def.constellation),
        tv: def.tv,
        nr: cfg.nr,
        n: cfg.n,
        r_tot: cfg.r_tot,
        snr_db: cfg.design_point()?,
        measure: cfg.labelling.measure,
        rel_threshold: cfg.labelling.threshold,
        ranking_trials: cfg.ranking_trials,
        seed: cfg.seed,
    };
    let t = Instant::now();
    let jd = joint_design(&space, &setup, &cfg.pso)?;
    let mut table = ResultTable::new(cfg);
    for e in &jd.search.trace {
        let events = (e.best_value * e.samples as f64).round() as u64;
        table.push(setup.snr_db, "best_fer", e.best_value, events, e.samples as u64, cfg.pso.seed, t);
    }
    table.manifest.artifacts = json!({ "design": jd.design, "search": jd.search, "space": space });
    Ok(table)
}

/// Closed-form pairwise outage bound next to its Monte-Carlo estimate for
/// a few pairs of the configured code.
pub fn run_bound_check(cfg: &ExperimentConfig) -> Result<ResultTable> {
    cfg.validate()?;
    cfg.need_grid()?;
    let cb = build_codebook(cfg)?;
    let q = q_from_rate(cfg.r_tot)?;
    let batch = sample_channel_batch(cb.nt(), cfg.nr, cfg.realizations, cfg.seed, stream(Domain::Channel, 0))?;
    let omega = if cb.spec.tv {
        Some(omega_moments(cfg.nr, cfg.labelling.omega_samples, cfg.seed)?)
    } else {
        None
    };
    let n = cb.len();
    let pairs: Vec<(usize, usize)> = (1..n).step_by((n / 8).max(1)).map(|j| (0, j)).collect();
    let mut table = ResultTable::new(cfg);
    for &snr in &cfg.snr_db {
        let noise = NoiseSpec::from_snr_db(snr, cb.l())?;
        for &(i, j) in &pairs {
            let t = Instant::now();
            let d = difference(&cb, i, j);
            let closed = match (&omega, cb.l()) {
                (Some(om), _) => ubpop_tvsbc(&d, noise, q, om),
                (None, 1) => ubpop_sbc(&d, noise, q, cfg.nr),
                (None, _) => ubpop_stbc(&d, noise, q, cfg.nr),
            };
            let closed = match closed {
                Ok(v) => v,
                Err(Error::DegenerateMoments { .. }) => f64::NAN,
                Err(e) => return Err(e),
            };
            let mut hits = 0u64;
            for h in batch.iter() {
                let rho = if cb.spec.tv {
                    bhattacharyya_tv_avg(&d, h, noise)?
                } else {
                    bhattacharyya(&d, h, noise)?
                };
                hits += u64::from(rho > q);
            }
            let trials = batch.count() as u64;
            table.push(snr, &format!("bound_{i}_{j}"), closed, 0, 0, cfg.seed, t);
            table.push(snr, &format!("monte_carlo_{i}_{j}"), hits as f64 / trials as f64, hits, trials, cfg.seed, t);
        }
    }
    Ok(table)
}

/// Dispatches on the experiment kind.
pub fn run(cfg: &ExperimentConfig, kind: ExperimentKind) -> Result<ResultTable> {
    match kind {
        ExperimentKind::OutageSweep => run_outage_sweep(cfg),
        ExperimentKind::FerSweep => run_fer_sweep(cfg),
        ExperimentKind::OptimizeStbc => run_optimize_stbc(cfg),
        ExperimentKind::DesignCode => run_design_code(cfg).map(|r| r.0),
        ExperimentKind::Label => run_label(cfg).map(|r| r.0),
        ExperimentKind::RankBitchannels => run_rank(cfg).map(|r| r.0),
        ExperimentKind::JointDesign => run_joint(cfg),
        ExperimentKind::BoundCheck => run_bound_check(cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig6_formatting() {
        assert_eq!(format_sig6(0.0), "0");
        assert_eq!(format_sig6(1.0), "1");
        assert_eq!(format_sig6(0.1), "0.1");
        assert_eq!(format_sig6(12.5), "12.5");
        assert_eq!(format_sig6(1.0 / 3.0), "0.333333");
        assert_eq!(format_sig6(123456.7), "123457");
        assert_eq!(format_sig6(1234567.0), "1.23457e+06");
        assert_eq!(format_sig6(0.000012345), "1.2345e-05");
        assert_eq!(format_sig6(-2.5e-3), "-0.0025");
        assert_eq!(format_sig6(9.999996), "10");
    }

    #[test]
    fn config_formats_agree() {
        let j = r#"{"code": {"family": "alamouti", "constellation": "qam16"}, "snr_db": [4, 6], "seed": 9}"#;
        let t = "seed = 9\nsnr_db = [4.0, 6.0]\n[code]\nfamily = \"alamouti\"\nconstellation = \"qam16\"\n";
        assert_eq!(ExperimentConfig::from_json(j).unwrap(), ExperimentConfig::from_toml(t).unwrap());
        assert!(matches!(ExperimentConfig::from_json("{\"bogus\": 1}"), Err(Error::Config(_))));
    }

    #[test]
    fn empty_grid_rejected() {
        let cfg = ExperimentConfig {
            code: Some(CodeDef {
                family: Family::Alamouti,
                constellation: ConstellationKind::Qpsk,
                tv: false,
                params: None,
                shape: None,
                nt: None,
            }),
            ..ExperimentConfig::default()
        };
        assert!(matches!(run_fer_sweep(&cfg), Err(Error::Config(_))));
        assert!(matches!(run_outage_sweep(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn csv_layout() {
        let cfg = ExperimentConfig::default();
        let mut t = ResultTable::new(&cfg);
        t.push(10.0, "fer", 0.0123456789, 12, 1000, 7, Instant::now());
        assert_eq!(t.to_csv(), "snr_db,metric,value,events,trials,seed\n10,fer,0.0123457,12,1000,7\n");
    }
}
