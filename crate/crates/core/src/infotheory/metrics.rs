use crate::linalg::{ComplexMatrix, C64};
use crate::stbc::Codebook;

/// Noiseless received points `S_i H` for a whole codebook, flattened
/// row-major (L·Nr entries each) and stored in codebook-index order.
#[derive(Debug, Clone)]
pub struct RxPoints {
    dim: usize,
    pts: Vec<C64>,
}

impl RxPoints {
    pub fn new(cb: &Codebook, h: &ComplexMatrix) -> Self {
        let mut p = Self {
            dim: cb.l() * h.cols(),
            pts: Vec::new(),
        };
        p.refill(cb, h, None);
        p
    }

    /// Points of the phase-rotated code: `S_i · diag(factors) · H`.
    pub fn with_phases(cb: &Codebook, h: &ComplexMatrix, factors: &[C64]) -> Self {
        let mut p = Self {
            dim: cb.l() * h.cols(),
            pts: Vec::new(),
        };
        p.refill(cb, h, Some(factors));
        p
    }

    /// Recomputes in place, reusing the allocation.
    pub fn refill(&mut self, cb: &Codebook, h: &ComplexMatrix, factors: Option<&[C64]>) {
        let (nt, nr, l) = (h.rows(), h.cols(), cb.l());
        assert_eq!(nt, cb.nt(), "channel rows must equal transmit antennas");
        self.dim = l * nr;
        let mut eff = h.clone();
        if let Some(f) = factors {
            for t in 0..nt {
                for r in 0..nr {
                    eff[(t, r)] *= f[t];
                }
            }
        }
        let e = eff.as_slice();
        self.pts.clear();
        self.pts.reserve(cb.len() * self.dim);
        for s in &cb.symbols {
            let s = s.as_slice();
            for row in 0..l {
                for r in 0..nr {
                    let mut acc = C64::new(0.0, 0.0);
                    for t in 0..nt {
                        acc += s[row * nt + t] * e[t * nr + r];
                    }
                    self.pts.push(acc);
                }
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.pts.len() / self.dim.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.pts.is_empty()
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[C64] {
        &self.pts[i * self.dim..(i + 1) * self.dim]
    }

    /// `out[i] = −‖y − p_i‖² / N0`.
    #[inline]
    pub fn metrics_into(&self, y: &[C64], inv_n0: f64, out: &mut [f64]) {
        debug_assert_eq!(y.len(), self.dim);
        for (o, p) in out.iter_mut().zip(self.pts.chunks_exact(self.dim)) {
            let mut d = 0.0;
            for (a, b) in y.iter().zip(p) {
                let re = a.re - b.re;
                let im = a.im - b.im;
                d += re * re + im * im;
            }
            *o = -d * inv_n0;
        }
    }
}

/// ln Σ exp(x_i); −∞ for an empty slice. Terms more than 40 nats below
/// the maximum (relative weight < 5e-18) are skipped.
#[inline]
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let mut s = 0.0;
    for &x in xs {
        let d = x - m;
        if d > -40.0 {
            s += d.exp();
        }
    }
    m + s.ln()
}
