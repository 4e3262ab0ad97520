use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use super::metrics::{log_sum_exp, RxPoints};
use crate::channel::NoiseSpec;
use crate::error::{invalid, Error, Result};
use crate::linalg::{ComplexMatrix, C64};
use crate::rng::{complex_normal, rng_for, stream, Domain};
use crate::special::{gamma_p, ln_bessel_i0, normal_cdf};
use crate::stbc::{Codebook, DifferenceMatrix};

/// exp(−‖ΔH‖²_F / 4N0).
pub fn bhattacharyya(d: &DifferenceMatrix, h: &ComplexMatrix, noise: NoiseSpec) -> Result<f64> {
    let dh = d.0.matmul(h)?;
    Ok((-dh.frobenius_sq() / (4.0 * noise.n0())).exp())
}

/// −ln of the phase-averaged Bhattacharyya coefficient of a two-antenna
/// time-varying code, with the exact Bessel term.
pub fn tvsbc_log_metric(d: &DifferenceMatrix, h: &ComplexMatrix, noise: NoiseSpec) -> Result<f64> {
    let (energy, cross) = tv_parts(d, h)?;
    let n0 = noise.n0();
    Ok(energy / (4.0 * n0) - ln_bessel_i0(cross / (2.0 * n0)))
}

/// E_θ exp(−‖Δ diag(e^{jθ}) H‖²_F / 4N0) for Nt = 2. The phase difference
/// is common to all receive antennas, so their cross terms add inside I₀.
pub fn bhattacharyya_tv_avg(d: &DifferenceMatrix, h: &ComplexMatrix, noise: NoiseSpec) -> Result<f64> {
    Ok((-tvsbc_log_metric(d, h, noise)?).exp())
}

/// (Σ|δ_{l,t} h_{t,r}|², |Σ_{l,r} δ_{l,1} h_{1,r} δ*_{l,2} h*_{2,r}|)
fn tv_parts(d: &DifferenceMatrix, h: &ComplexMatrix) -> Result<(f64, f64)> {
    let m = &d.0;
    if m.cols() != 2 {
        return Err(Error::Unsupported(format!(
            "phase averaging is closed-form only for two transmit antennas, got {}",
            m.cols()
        )));
    }
    if h.rows() != 2 {
        return Err(Error::Dimension("channel must have two rows".into()));
    }
    let mut energy = 0.0;
    let mut cross = C64::new(0.0, 0.0);
    for l in 0..m.rows() {
        let (d1, d2) = (m[(l, 0)], m[(l, 1)]);
        for r in 0..h.cols() {
            let a = d1 * h[(0, r)];
            let b = d2 * h[(1, r)];
            energy += a.norm_sqr() + b.norm_sqr();
            cross += a * b.conj();
        }
    }
    Ok((energy, cross.norm()))
}

/// R₀ = −log₂ Σ_i Σ_j 2^{−2B} ρ(S_i, S_j | H). Deterministic.
pub fn cutoff_rate(cb: &Codebook, h: &ComplexMatrix, noise: NoiseSpec) -> Result<f64> {
    if h.rows() != cb.nt() {
        return Err(Error::Dimension("channel rows must equal transmit antennas".into()));
    }
    let pts = RxPoints::new(cb, h);
    let inv = 1.0 / (4.0 * noise.n0());
    let n = cb.len();
    let mut row = vec![0.0; n];
    let mut per_row = Vec::with_capacity(n);
    for i in 0..n {
        pts.metrics_into(pts.point(i), inv, &mut row);
        per_row.push(log_sum_exp(&row));
    }
    let ln_sum = log_sum_exp(&per_row);
    Ok(2.0 * cb.bits() as f64 - ln_sum / std::f64::consts::LN_2)
}

/// Pairwise outage threshold q = 2^{1−r} − 1 for a per-dimension rate r.
pub fn q_from_rate(r_tot: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&r_tot) {
        return invalid(format!("rate {r_tot} outside [0, 1]"));
    }
    Ok(2f64.powf(1.0 - r_tot) - 1.0)
}

fn check_pair(d: &DifferenceMatrix, q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return invalid(format!("q must lie in (0, 1), got {q}"));
    }
    let f = d.0.frobenius_sq();
    if f == 0.0 {
        return invalid("identical pair has no outage bound");
    }
    Ok(f)
}

/// Pr(q < ρ̂) for a space block code: ‖ΔH‖²_F is Gamma(Nr, ‖Δ‖²_F), so the
/// bound is the regularized lower incomplete gamma P(Nr, −4N0 ln q / ‖Δ‖²).
pub fn ubpop_sbc(d: &DifferenceMatrix, noise: NoiseSpec, q: f64, nr: usize) -> Result<f64> {
    let f = check_pair(d, q)?;
    if nr == 0 {
        return invalid("at least one receive antenna");
    }
    gamma_p(nr as f64, -4.0 * noise.n0() * q.ln() / f)
}

/// Mean μ₁ = Nr‖Δ‖²_F and variance μ₂ = Nr‖ΔΔᴴ‖²_F of ‖ΔH‖²_F.
pub fn gamma_moments(d: &DifferenceMatrix, nr: usize) -> Result<(f64, f64)> {
    if nr == 0 {
        return invalid("at least one receive antenna");
    }
    let mu1 = nr as f64 * d.0.frobenius_sq();
    let mu2 = nr as f64 * d.0.gram().frobenius_sq();
    if !(mu2 > 0.0) {
        return Err(Error::DegenerateMoments { mu1, mu2 });
    }
    Ok((mu1, mu2))
}

/// Gamma approximation for general STBCs, matched to [`gamma_moments`].
pub fn ubpop_stbc(d: &DifferenceMatrix, noise: NoiseSpec, q: f64, nr: usize) -> Result<f64> {
    check_pair(d, q)?;
    let (mu1, mu2) = gamma_moments(d, nr)?;
    gamma_p(mu1 * mu1 / mu2, -4.0 * noise.n0() * (mu1 / mu2) * q.ln())
}

/// Moments of Ω = |Σ_r h_{1,r} h*_{2,r}| over i.i.d. CN(0,1) channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmegaMoments {
    pub nr: usize,
    pub e_omega: f64,
    pub e_h2omega: f64,
    pub samples: usize,
    pub seed: u64,
}

pub const MIN_OMEGA_SAMPLES: usize = 10_000;

type OmegaKey = (usize, usize, u64);

fn omega_cache() -> &'static Mutex<HashMap<OmegaKey, OmegaMoments>> {
    static CACHE: OnceLock<Mutex<HashMap<OmegaKey, OmegaMoments>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

pub fn omega_moments(nr: usize, mc: usize, seed: u64) -> Result<OmegaMoments> {
    if nr == 0 {
        return invalid("at least one receive antenna");
    }
    if mc < MIN_OMEGA_SAMPLES {
        return invalid(format!("need at least {MIN_OMEGA_SAMPLES} samples, got {mc}"));
    }
    let key = (nr, mc, seed);
    if let Some(m) = omega_cache().lock().expect("cache lock").get(&key) {
        return Ok(m.clone());
    }
    let mut rng = rng_for(seed, stream(Domain::Omega, nr as u64));
    let (mut s1, mut s2) = (0.0, 0.0);
    let mut h1 = vec![C64::new(0.0, 0.0); nr];
    for _ in 0..mc {
        let mut acc = C64::new(0.0, 0.0);
        for h in h1.iter_mut() {
            *h = complex_normal(&mut rng, 1.0);
            acc += *h * complex_normal(&mut rng, 1.0).conj();
        }
        let omega = acc.norm();
        s1 += omega;
        s2 += h1[0].norm_sqr() * omega;
    }
    let m = OmegaMoments {
        nr,
        e_omega: s1 / mc as f64,
        e_h2omega: s2 / mc as f64,
        samples: mc,
        seed,
    };
    omega_cache().lock().expect("cache lock").insert(key, m.clone());
    Ok(m)
}

/// Coefficients (a₁, a₂) of the piecewise-linear fit ln I₀(x) ≈ a₁x + a₂.
pub(crate) fn ln_i0_coefficients(x: f64) -> (f64, f64) {
    match x {
        x if x <= 0.5 => (0.12, 0.0),
        x if x <= 1.0 => (0.35, -0.12),
        x if x <= 2.0 => (0.59, -0.37),
        x if x <= 4.0 => (0.8, -0.81),
        _ => (0.92, -1.3),
    }
}

pub fn ln_i0_piecewise(x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return invalid(format!("ln I0 approximation needs x >= 0, got {x}"));
    }
    let (a1, a2) = ln_i0_coefficients(x);
    Ok(a1 * x + a2)
}

/// Log-normal moment pair for the time-varying pairwise metric
/// `4N0 · tvsbc_log_metric`, with the fit segment picked at the mean channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TvsbcMoments {
    pub mu1: f64,
    pub mu2: f64,
    pub a1: f64,
    pub a2: f64,
    /// Nominal Bessel argument |δ₁δ₂|·E[Ω]/2N0 that selected the segment.
    pub x: f64,
}

pub fn tvsbc_moments(d: &DifferenceMatrix, noise: NoiseSpec, omega: &OmegaMoments) -> Result<TvsbcMoments> {
    let m = &d.0;
    if m.rows() != 1 || m.cols() != 2 {
        return Err(Error::Unsupported(format!(
            "time-varying bound is for 1x2 differences, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    let n0 = noise.n0();
    let nr = omega.nr as f64;
    let (p1, p2) = (m[(0, 0)].norm_sqr(), m[(0, 1)].norm_sqr());
    let p = (p1 * p2).sqrt();
    let x = p * omega.e_omega / (2.0 * n0);
    let (a1, a2) = ln_i0_coefficients(x);
    let mu1 = nr * (p1 + p2) - 2.0 * a1 * p * omega.e_omega - 4.0 * n0 * a2;
    let mu2 = nr * (p1 * p1 + p2 * p2)
        + 4.0 * a1 * a1 * p * p * (nr - omega.e_omega * omega.e_omega)
        - 4.0 * a1 * nr * (p1 + p2) * p * (omega.e_h2omega - omega.e_omega);
    if !(mu1 > 0.0 && mu2 > 0.0) {
        return Err(Error::DegenerateMoments { mu1, mu2 });
    }
    Ok(TvsbcMoments { mu1, mu2, a1, a2, x })
}

/// Log-normal approximation of Pr(q < ρ̄) for a two-antenna time-varying
/// space block code.
pub fn ubpop_tvsbc(d: &DifferenceMatrix, noise: NoiseSpec, q: f64, omega: &OmegaMoments) -> Result<f64> {
    check_pair(d, q)?;
    let m = tvsbc_moments(d, noise, omega)?;
    let s2 = (1.0 + m.mu2 / (m.mu1 * m.mu1)).ln();
    let z = ((-4.0 * noise.n0() * q.ln()).ln() - m.mu1.ln() + 0.5 * s2) / s2.sqrt();
    Ok(normal_cdf(z))
}

/// Σ p_i log₂(p_i / r_i).
pub fn kl_divergence(p: &[f64], r: &[f64]) -> Result<f64> {
    if p.len() != r.len() {
        return invalid("distributions differ in length");
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-9 || p.iter().any(|&x| x < 0.0) {
        return invalid("first argument is not a probability vector");
    }
    let mut kl = 0.0;
    for (&a, &b) in p.iter().zip(r) {
        if a > 0.0 {
            if !(b > 0.0) {
                return invalid("reference distribution misses part of the support");
            }
            kl += a * (a / b).log2();
        }
    }
    Ok(kl.max(0.0))
}

/// KL from the histogram of positive `samples` to the moment-matched
/// log-normal over the same bins; the model's tails fold into the end bins.
pub fn histogram_kl_to_lognormal(samples: &[f64], bins: usize) -> Result<f64> {
    if bins == 0 || samples.len() < 2 {
        return invalid("need at least one bin and two samples");
    }
    if samples.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
        return invalid("log-normal fit needs positive finite samples");
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let lo = samples.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / bins as f64;
    let mut p = vec![0.0; bins];
    for &x in samples {
        let k = if width > 0.0 {
            (((x - lo) / width) as usize).min(bins - 1)
        } else {
            0
        };
        p[k] += 1.0 / n;
    }
    if !(var > 0.0) {
        // a point mass, matched exactly by the degenerate model
        return Ok(0.0);
    }
    let s2 = (1.0 + var / (mean * mean)).ln();
    let (mu, s) = (mean.ln() - 0.5 * s2, s2.sqrt());
    let cdf = |x: f64| normal_cdf((x.ln() - mu) / s);
    let mut r = Vec::with_capacity(bins);
    let mut prev = 0.0;
    for k in 1..bins {
        let c = cdf(lo + k as f64 * width);
        r.push((c - prev).max(f64::MIN_POSITIVE));
        prev = c;
    }
    r.push((1.0 - prev).max(f64::MIN_POSITIVE));
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= total);
    kl_divergence(&p, &r)
}

pub const FIT_BINS: usize = 50;

/// Average histogram-vs-log-normal KL of the time-varying log metric over
/// all ordered pairs of distinct codebook points.
pub fn fit_quality(cb: &Codebook, noise: NoiseSpec, mc: usize, seed: u64) -> Result<f64> {
    if cb.nt() != 2 || !cb.spec.tv {
        return Err(Error::Unsupported("fit quality is defined for two-antenna time-varying codes".into()));
    }
    if mc < 2 {
        return invalid("need at least two samples per pair");
    }
    let mut rng = rng_for(seed, stream(Domain::Aux, 0));
    let channels: Vec<ComplexMatrix> = (0..mc)
        .map(|_| crate::channel::sample_gaussian_matrix(&mut rng, 2, 1, 1.0))
        .collect();
    let n = cb.len();
    let mut sum = 0.0;
    let mut pairs = 0usize;
    let mut vals = vec![0.0; mc];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let d = crate::stbc::difference(cb, i, j);
            for (v, h) in vals.iter_mut().zip(&channels) {
                *v = tvsbc_log_metric(&d, h, noise)?;
            }
            sum += histogram_kl_to_lognormal(&vals, FIT_BINS)?;
            pairs += 1;
        }
    }
    Ok(sum / pairs.max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::J;

    fn row(a: C64, b: C64) -> DifferenceMatrix {
        DifferenceMatrix(ComplexMatrix::from_rows(&[[a, b]]))
    }

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn bhattacharyya_values() {
        let n = NoiseSpec::new(0.3).unwrap();
        let h = ComplexMatrix::from_rows(&[[c(0.4, 0.1)], [c(-0.7, 1.2)]]);
        assert_eq!(bhattacharyya(&row(c(0.0, 0.0), c(0.0, 0.0)), &h, n).unwrap(), 1.0);
        let d = row(c(1.0, -0.5), J);
        let a = bhattacharyya(&d, &h, n).unwrap();
        let neg = DifferenceMatrix(-&d.0);
        assert!((a - bhattacharyya(&neg, &h, n).unwrap()).abs() < 1e-15);
        let one = ComplexMatrix::from_rows(&[[c(1.0, 0.0)]]);
        let s = (4.0 * 0.3 * 2f64.ln()).sqrt();
        let half = bhattacharyya(&DifferenceMatrix(ComplexMatrix::from_rows(&[[c(s, 0.0)]])), &one, n).unwrap();
        assert!((half - 0.5).abs() < 1e-12);
    }

    #[test]
    fn tv_average_reduces_and_dominates() {
        let n = NoiseSpec::new(0.5).unwrap();
        let h = ComplexMatrix::from_rows(&[[c(0.4, 0.1), c(1.0, 0.0)], [c(-0.7, 1.2), c(0.2, 0.3)]]);
        let d = row(c(1.1, 0.2), c(0.0, 0.0));
        let a = bhattacharyya_tv_avg(&d, &h, n).unwrap();
        assert!((a - bhattacharyya(&d, &h, n).unwrap()).abs() < 1e-14);
        // I0 >= 1: never below the coefficient with the cross term removed
        let d = row(c(1.1, 0.2), c(-0.3, 0.9));
        let (energy, _) = tv_parts(&d, &h).unwrap();
        assert!(bhattacharyya_tv_avg(&d, &h, n).unwrap() >= (-energy / (4.0 * 0.5)).exp());
        let three = DifferenceMatrix(ComplexMatrix::from_rows(&[[c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0)]]));
        assert!(matches!(
            bhattacharyya_tv_avg(&three, &h, n),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn tv_average_matches_phase_quadrature() {
        let n = NoiseSpec::new(0.4).unwrap();
        let h = ComplexMatrix::from_rows(&[[c(0.4, 0.1), c(1.0, -0.2)], [c(-0.7, 1.2), c(0.2, 0.3)]]);
        let d = row(c(0.8, 0.2), c(-0.3, 0.9));
        let k = 20_000;
        let mut acc = 0.0;
        for s in 0..k {
            let t = std::f64::consts::TAU * (s as f64 + 0.5) / k as f64;
            let m = d.0.mul_diag(&[c(1.0, 0.0), C64::from_polar(1.0, t)]);
            acc += bhattacharyya(&DifferenceMatrix(m), &h, n).unwrap();
        }
        let exact = bhattacharyya_tv_avg(&d, &h, n).unwrap();
        assert!((acc / k as f64 - exact).abs() < 1e-10 * exact.max(1.0));
    }

    #[test]
    fn q_values() {
        assert_eq!(q_from_rate(1.0).unwrap(), 0.0);
        assert_eq!(q_from_rate(0.0).unwrap(), 1.0);
        assert!((q_from_rate(0.5).unwrap() - 0.41421).abs() < 1e-5);
        assert!(q_from_rate(1.2).is_err());
    }

    #[test]
    fn sbc_exponential_case() {
        let n0: f64 = 0.25;
        let s = (4.0 * n0).sqrt();
        let d = row(c(s, 0.0), c(0.0, 0.0));
        let v = ubpop_sbc(&d, NoiseSpec::new(n0).unwrap(), 0.5, 1).unwrap();
        assert!((v - 0.5).abs() < 1e-12);
        let near = ubpop_sbc(&d, NoiseSpec::new(n0).unwrap(), 1.0 - 1e-12, 1).unwrap();
        assert!(near < 1e-10);
        assert!(ubpop_sbc(&d, NoiseSpec::new(n0).unwrap(), 1.0, 1).is_err());
        assert!(ubpop_sbc(&row(c(0.0, 0.0), c(0.0, 0.0)), NoiseSpec::new(n0).unwrap(), 0.5, 1).is_err());
    }

    #[test]
    fn stbc_reduces_to_sbc() {
        let n = NoiseSpec::new(0.2).unwrap();
        let d1 = row(c(0.3, 0.4), c(-1.0, 0.5));
        let d2 = DifferenceMatrix(ComplexMatrix::from_rows(&[[c(0.3, 0.4), c(-1.0, 0.5)], [c(0.0, 0.0), c(0.0, 0.0)]]));
        for nr in 1..=3 {
            let a = ubpop_sbc(&d1, n, 0.41, nr).unwrap();
            let b = ubpop_stbc(&d2, n, 0.41, nr).unwrap();
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn piecewise_values() {
        assert_eq!(ln_i0_piecewise(0.0).unwrap(), 0.0);
        assert!((ln_i0_piecewise(1.0).unwrap() - 0.23).abs() < 1e-12);
        assert!((ln_i0_piecewise(3.0).unwrap() - 1.59).abs() < 1e-12);
        assert!(ln_i0_piecewise(-0.1).is_err());
    }

    #[test]
    fn piecewise_error_envelope() {
        let worst = (0..=8000)
            .map(|k| k as f64 * 1e-3)
            .map(|x| (ln_i0_piecewise(x).unwrap() - ln_bessel_i0(x)).abs())
            .fold(0.0, f64::max);
        // regression constant from dense evaluation
        assert!(worst <= 0.12, "{worst}");
    }

    #[test]
    fn kl_values() {
        assert_eq!(kl_divergence(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        assert!((kl_divergence(&[1.0, 0.0], &[0.5, 0.5]).unwrap() - 1.0).abs() < 1e-15);
        assert!(kl_divergence(&[0.5, 0.5], &[1.0, 0.0]).is_err());
        assert!(kl_divergence(&[0.5], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn lognormal_self_fit() {
        use rand_distr::{Distribution, LogNormal};
        let mut rng = rng_for(3, 0);
        let ln = LogNormal::new(0.4, 0.6).unwrap();
        let xs: Vec<f64> = (0..100_000).map(|_| ln.sample(&mut rng)).collect();
        assert!(histogram_kl_to_lognormal(&xs, 50).unwrap() < 0.05);
        assert!(histogram_kl_to_lognormal(&xs, 2).unwrap() < 0.01);
    }

    #[test]
    fn omega_single_antenna() {
        let m = omega_moments(1, 200_000, 9).unwrap();
        assert!((m.e_omega - std::f64::consts::FRAC_PI_4).abs() < 0.01 * std::f64::consts::FRAC_PI_4);
        assert_eq!(omega_moments(1, 200_000, 9).unwrap(), m);
        assert!(omega_moments(2, 200_000, 9).unwrap().e_omega > m.e_omega);
        assert!(omega_moments(1, 100, 9).is_err());
    }

    #[test]
    fn tvsbc_monotone_in_noise() {
        let om = omega_moments(1, 50_000, 1).unwrap();
        let d = row(c(1.2, 0.3), c(-0.4, 0.9));
        let mut prev = 0.0;
        for n0 in [0.05, 0.1, 0.2, 0.4] {
            let v = ubpop_tvsbc(&d, NoiseSpec::new(n0).unwrap(), 0.41, &om).unwrap();
            assert!(v >= prev);
            prev = v;
        }
        assert!(ubpop_tvsbc(&d, NoiseSpec::new(0.1).unwrap(), 1.0 - 1e-15, &om).unwrap() < 1e-6);
    }
}
