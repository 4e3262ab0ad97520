//! Parameterized space-time block codes and their classical design measures.
//!
//! Families:
//!
//! | family   | L | Nt | symbols | raw coefficients              |
//! |----------|---|----|---------|-------------------------------|
//! | Alamouti | 2 | 2  | 2       | –                             |
//! | MatrixA  | 2 | 2  | 4       | – (Golden code)               |
//! | MatrixB  | 2 | 2  | 4       | α1, α2, β1, β2                |
//! | MatrixC  | 1 | Nt | Nt      | – (vector symbol)             |
//! | MatrixD  | 1 | 2  | 2       | α1, α2, β1, β2                |
//! | MatrixE  | 1 | 2  | 4       | α1, α2, β1, β2                |
//! | MatrixF  | 1 | 3  | 6       | α1, α2, α3, β1, β2, β3        |
//!
//! A space-time symbol is the L × Nt matrix of the family formula scaled by
//! a global `norm` chosen so that the mean of ‖S‖²_F over the enumerated
//! codebook is one. The time-varying variant right-multiplies each
//! transmitted symbol by `diag(e^{jθ_1}, …, e^{jθ_Nt})`.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::NoiseSpec;
use crate::error::{invalid, Error, Result};
use crate::linalg::{ComplexMatrix, C64, J};
use crate::mapping::Constellation;
use crate::rng::{rng_for, stream, Domain};

/// Largest codebook (in label bits) that will be enumerated.
pub const MAX_CODEBOOK_BITS: usize = 20;

const POWER_BALANCE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Alamouti,
    MatrixA,
    MatrixB,
    MatrixC,
    MatrixD,
    MatrixE,
    MatrixF,
}

impl Family {
    pub const ALL: [Family; 7] = [
        Family::Alamouti,
        Family::MatrixA,
        Family::MatrixB,
        Family::MatrixC,
        Family::MatrixD,
        Family::MatrixE,
        Family::MatrixF,
    ];

    /// Number of raw complex coefficients.
    pub fn arity(self) -> usize {
        match self {
            Family::Alamouti | Family::MatrixA | Family::MatrixC => 0,
            Family::MatrixB | Family::MatrixD | Family::MatrixE => 4,
            Family::MatrixF => 6,
        }
    }

    pub fn time_slots(self) -> usize {
        match self {
            Family::Alamouti | Family::MatrixA | Family::MatrixB => 2,
            _ => 1,
        }
    }

    fn default_nt(self) -> usize {
        match self {
            Family::MatrixF => 3,
            _ => 2,
        }
    }

    fn symbols(self, nt: usize) -> usize {
        match self {
            Family::Alamouti | Family::MatrixD => 2,
            Family::MatrixA | Family::MatrixB | Family::MatrixE => 4,
            Family::MatrixC => nt,
            Family::MatrixF => 6,
        }
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace(['_', '-', ' '], "");
        let fam = match key.as_str() {
            "alamouti" => Family::Alamouti,
            "matrixa" | "a" | "golden" => Family::MatrixA,
            "matrixb" | "b" => Family::MatrixB,
            "matrixc" | "c" => Family::MatrixC,
            "matrixd" | "d" => Family::MatrixD,
            "matrixe" | "e" => Family::MatrixE,
            "matrixf" | "f" => Family::MatrixF,
            _ => return invalid(format!("unknown code family {s:?}")),
        };
        Ok(fam)
    }
}

/// A validated, power-normalized code family instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StbcSpec {
    pub family: Family,
    pub params: Vec<C64>,
    pub l: usize,
    pub nt: usize,
    pub n_syms: usize,
    pub constellation: Constellation,
    pub tv: bool,
    pub norm: f64,
}

impl StbcSpec {
    /// Total label bits B.
    pub fn bits(&self) -> usize {
        self.n_syms * self.constellation.bits()
    }

    /// Bits per channel use carried at total code rate `r_tot`.
    pub fn bpcu(&self, r_tot: f64) -> f64 {
        r_tot * self.bits() as f64 / self.l as f64
    }

    /// Family formula before normalization.
    fn raw_matrix(&self, s: &[C64]) -> ComplexMatrix {
        let p = &self.params;
        match self.family {
            Family::Alamouti => ComplexMatrix::from_rows(&[[s[0], s[1]], [-s[1].conj(), s[0].conj()]]),
            Family::MatrixA => {
                let theta = (1.0 + 5f64.sqrt()) / 2.0;
                let theta_bar = 1.0 - theta;
                let alpha = C64::new(1.0, 1.0 - theta);
                let alpha_bar = C64::new(1.0, 1.0 - theta_bar);
                let k = 1.0 / 5f64.sqrt();
                ComplexMatrix::from_rows(&[
                    [alpha * (s[0] + s[1] * theta) * k, alpha * (s[2] + s[3] * theta) * k],
                    [
                        J * alpha_bar * (s[2] + s[3] * theta_bar) * k,
                        alpha_bar * (s[0] + s[1] * theta_bar) * k,
                    ],
                ])
            }
            Family::MatrixB => {
                let (a1, a2, b1, b2) = (p[0], p[1], p[2], p[3]);
                ComplexMatrix::from_rows(&[
                    [a1 * s[0] + a2 * s[2], a1 * s[1] + a2 * s[3]],
                    [-b1 * s[1].conj() - b2 * s[3].conj(), b1 * s[0].conj() + b2 * s[2].conj()],
                ])
            }
            Family::MatrixC => ComplexMatrix::from_rows(&[s]),
            Family::MatrixD => {
                let (a1, a2, b1, b2) = (p[0], p[1], p[2], p[3]);
                ComplexMatrix::from_rows(&[[a1 * s[0] + b1 * s[1], a2 * s[0] + b2 * s[1]]])
            }
            Family::MatrixE => {
                let (a1, a2, b1, b2) = (p[0], p[1], p[2], p[3]);
                ComplexMatrix::from_rows(&[[a1 * s[0] + b1 * s[1], a2 * s[2] + b2 * s[3]]])
            }
            Family::MatrixF => ComplexMatrix::from_rows(&[[
                p[0] * s[0] + p[3] * s[1],
                p[1] * s[2] + p[4] * s[3],
                p[2] * s[4] + p[5] * s[5],
            ]]),
        }
    }

    fn symbols_of(&self, indices: &[usize]) -> Vec<C64> {
        indices.iter().map(|&i| self.constellation.points[i]).collect()
    }

    /// Splits a natural label into constellation indices, s1 most significant.
    pub fn label_to_indices(&self, label: usize) -> Vec<usize> {
        let bits = self.constellation.bits();
        let mask = (1 << bits) - 1;
        (0..self.n_syms)
            .map(|k| (label >> (bits * (self.n_syms - 1 - k))) & mask)
            .collect()
    }

    pub fn indices_to_label(&self, indices: &[usize]) -> usize {
        let bits = self.constellation.bits();
        indices.iter().fold(0, |acc, &i| (acc << bits) | i)
    }
}

/// Builds and validates a code, choosing `norm` by enumerating the codebook.
pub fn build_stbc(
    family: Family,
    params: &[C64],
    constellation: Constellation,
    tv: bool,
) -> Result<StbcSpec> {
    build_with_nt(family, family.default_nt(), params, constellation, tv)
}

/// The vector-symbol code `[s1 … s_nt]` for an arbitrary antenna count.
pub fn vector_code(nt: usize, constellation: Constellation, tv: bool) -> Result<StbcSpec> {
    if nt == 0 {
        return invalid("vector code needs at least one antenna");
    }
    build_with_nt(Family::MatrixC, nt, &[], constellation, tv)
}

fn build_with_nt(
    family: Family,
    nt: usize,
    params: &[C64],
    constellation: Constellation,
    tv: bool,
) -> Result<StbcSpec> {
    if params.len() != family.arity() {
        return invalid(format!(
            "{family:?} takes {} coefficients, got {}",
            family.arity(),
            params.len()
        ));
    }
    if params.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return invalid("non-finite code coefficient");
    }
    validate_shape(family, params)?;
    let mut spec = StbcSpec {
        family,
        params: params.to_vec(),
        l: family.time_slots(),
        nt,
        n_syms: family.symbols(nt),
        constellation,
        tv,
        norm: 1.0,
    };
    let b = spec.bits();
    if b > MAX_CODEBOOK_BITS {
        return Err(Error::TooLarge {
            bits: b,
            limit: MAX_CODEBOOK_BITS,
        });
    }
    let count = 1usize << b;
    let energy: f64 = (0..count)
        .map(|label| {
            let s = spec.symbols_of(&spec.label_to_indices(label));
            spec.raw_matrix(&s).frobenius_sq()
        })
        .sum::<f64>()
        / count as f64;
    if !(energy > 0.0) {
        return Err(Error::Constraint("code has zero average energy".into()));
    }
    spec.norm = energy.sqrt().recip();
    Ok(spec)
}

fn validate_shape(family: Family, p: &[C64]) -> Result<()> {
    let balanced = |pairs: &[(C64, C64)]| -> Result<()> {
        let powers: Vec<f64> = pairs.iter().map(|(a, b)| a.norm_sqr() + b.norm_sqr()).collect();
        let scale = powers.iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        for w in powers.windows(2) {
            if (w[0] - w[1]).abs() > POWER_BALANCE_TOL * scale {
                return Err(Error::Constraint(format!(
                    "per-antenna powers differ: {powers:?}"
                )));
            }
        }
        Ok(())
    };
    match family {
        Family::MatrixD => {
            let (a1, a2, b1, b2) = (p[0], p[1], p[2], p[3]);
            let det = a1 * b2 - a2 * b1;
            let scale = (a1.norm() + b1.norm()) * (a2.norm() + b2.norm());
            if det.norm() <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
                return Err(Error::RankDeficient(format!(
                    "alpha1*beta2 - alpha2*beta1 = {det}"
                )));
            }
            balanced(&[(a1, b1), (a2, b2)])
        }
        Family::MatrixE => balanced(&[(p[0], p[2]), (p[1], p[3])]),
        Family::MatrixF => balanced(&[(p[0], p[3]), (p[1], p[4]), (p[2], p[5])]),
        _ => Ok(()),
    }
}

/// Shaped SBC coefficients: α2 = α1 real, β1 = |β1|·e^{jφ}, β2 = jβ1.
/// Layout matches MatrixD/MatrixE `[α1, α2, β1, β2]`.
pub fn shaped_sbc_params(alpha1: f64, beta1_mag: f64, phi_deg: f64) -> Vec<C64> {
    let a = C64::new(alpha1, 0.0);
    let b1 = C64::from_polar(beta1_mag, phi_deg.to_radians());
    vec![a, a, b1, J * b1]
}

/// MatrixB in the reduced-complexity shape: α1 = β1 = 1, α2 = r·e^{jφ},
/// β2 = −jα2.
pub fn shaped_matrix_b_params(ratio: f64, phi_deg: f64) -> Vec<C64> {
    let one = C64::new(1.0, 0.0);
    let a2 = C64::from_polar(ratio, phi_deg.to_radians());
    vec![one, a2, one, -J * a2]
}

/// MatrixF with equal real α on every antenna, recovered from the power
/// constraint |α|² + |β|² = 1, and equal-magnitude β's.
pub fn shaped_matrix_f_params(beta_mag: f64, phases_deg: [f64; 3]) -> Result<Vec<C64>> {
    if !(0.0..1.0).contains(&beta_mag) {
        return invalid(format!("|beta| must lie in [0, 1), got {beta_mag}"));
    }
    let a = C64::new((1.0 - beta_mag * beta_mag).sqrt(), 0.0);
    let mut p = vec![a, a, a];
    p.extend(phases_deg.iter().map(|ph| C64::from_polar(beta_mag, ph.to_radians())));
    Ok(p)
}

/// MatrixF from three printed β values with the common α recovered from the
/// power constraint.
pub fn matrix_f_from_betas(betas: [C64; 3]) -> Result<Vec<C64>> {
    let mag = betas[0].norm();
    if betas.iter().any(|b| (b.norm() - mag).abs() > 0.01) {
        return Err(Error::Constraint(format!("beta magnitudes differ: {betas:?}")));
    }
    if mag >= 1.0 {
        return invalid("|beta| must be below one");
    }
    let a = C64::new((1.0 - mag * mag).sqrt(), 0.0);
    // rescale so the balance holds exactly
    let betas = betas.map(|b| b * (mag / b.norm()));
    Ok(vec![a, a, a, betas[0], betas[1], betas[2]])
}

/// One transmitted space-time symbol and its natural label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimeSymbol {
    pub matrix: ComplexMatrix,
    pub label: usize,
}

/// Per-symbol random phases of the time-varying wrapper.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TvPhases {
    pub phases: Vec<f64>,
    pub seed: u64,
    pub index: u64,
}

impl TvPhases {
    pub fn factors(&self) -> Vec<C64> {
        self.phases.iter().map(|&t| C64::from_polar(1.0, t)).collect()
    }
}

/// Nt i.i.d. uniform angles for symbol `n`; transmitter and receiver draw
/// identical values from the shared `seed`.
pub fn sample_tv_phases(nt: usize, seed: u64, n: u64) -> TvPhases {
    let mut rng = rng_for(seed, stream(Domain::Phases, n));
    TvPhases {
        phases: (0..nt).map(|_| rng.gen::<f64>() * TAU).collect(),
        seed,
        index: n,
    }
}

pub fn encode_symbol(
    spec: &StbcSpec,
    sym_indices: &[usize],
    tv: Option<&TvPhases>,
) -> Result<SpaceTimeSymbol> {
    if sym_indices.len() != spec.n_syms {
        return invalid(format!(
            "{} symbol indices for a code carrying {}",
            sym_indices.len(),
            spec.n_syms
        ));
    }
    if let Some(&bad) = sym_indices.iter().find(|&&i| i >= spec.constellation.len()) {
        return invalid(format!("constellation index {bad} out of range"));
    }
    match (spec.tv, tv) {
        (true, None) => return invalid("time-varying code needs phases"),
        (false, Some(_)) => return invalid("phases given for a static code"),
        _ => {}
    }
    let s = spec.symbols_of(sym_indices);
    let mut m = spec.raw_matrix(&s).scale(C64::new(spec.norm, 0.0));
    if let Some(ph) = tv {
        if ph.phases.len() != spec.nt {
            return invalid("phase count differs from antenna count");
        }
        m = m.mul_diag(&ph.factors());
    }
    Ok(SpaceTimeSymbol {
        matrix: m,
        label: spec.indices_to_label(sym_indices),
    })
}

/// All 2^B symbols of a code, indexed by natural label. Time-varying codes
/// are enumerated with identity phases.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub spec: StbcSpec,
    pub symbols: Vec<ComplexMatrix>,
}

impl Codebook {
    pub fn bits(&self) -> usize {
        self.spec.bits()
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn l(&self) -> usize {
        self.spec.l
    }

    pub fn nt(&self) -> usize {
        self.spec.nt
    }

    pub fn mean_energy(&self) -> f64 {
        self.symbols.iter().map(|s| s.frobenius_sq()).sum::<f64>() / self.len() as f64
    }
}

pub fn enumerate_codebook(spec: &StbcSpec) -> Result<Codebook> {
    let b = spec.bits();
    if b > MAX_CODEBOOK_BITS {
        return Err(Error::TooLarge {
            bits: b,
            limit: MAX_CODEBOOK_BITS,
        });
    }
    let scale = C64::new(spec.norm, 0.0);
    let symbols = (0..1usize << b)
        .map(|label| {
            let s = spec.symbols_of(&spec.label_to_indices(label));
            spec.raw_matrix(&s).scale(scale)
        })
        .collect();
    Ok(Codebook {
        spec: spec.clone(),
        symbols,
    })
}

/// `S_i − S_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferenceMatrix(pub ComplexMatrix);

impl DifferenceMatrix {
    pub fn matrix(&self) -> &ComplexMatrix {
        &self.0
    }
}

pub fn difference(cb: &Codebook, i: usize, j: usize) -> DifferenceMatrix {
    DifferenceMatrix(&cb.symbols[i] - &cb.symbols[j])
}

/// min over distinct pairs of det(ΔΔᴴ); zero flags a rank-deficient pair.
pub fn min_det_coding_gain(cb: &Codebook) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..cb.len() {
        for j in i + 1..cb.len() {
            let d = difference(cb, i, j).0.gram().det().expect("square").re.max(0.0);
            best = best.min(d);
        }
    }
    best
}

/// Chernoff bound ½·exp(−‖ΔH‖²_F / 4N0) on the pairwise error probability.
pub fn pep_upper_bound(d: &DifferenceMatrix, h: &ComplexMatrix, noise: NoiseSpec) -> Result<f64> {
    let dh = d.0.matmul(h)?;
    Ok(0.5 * (-dh.frobenius_sq() / (4.0 * noise.n0())).exp())
}

/// φ in degrees → radians, wrapped to [0, 2π).
pub fn wrap_angle(rad: f64) -> f64 {
    rad.rem_euclid(2.0 * PI)
}
