//! Polar transform and successive-cancellation decoding.
//!
//! Natural (non bit-reversed) order with kernel `(u1, u2) -> (u1 ^ u2, u2)`,
//! so a length-N block splits as `x_L = T(u_L) ^ T(u_R)`, `x_R = T(u_R)`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// LLRs are clamped to this magnitude so ±∞ inputs never produce NaN.
pub const LLR_CLAMP: f64 = 1e100;

fn check_len(n: usize) -> Result<()> {
    if n == 0 || !n.is_power_of_two() {
        return invalid(format!("polar block length {n} is not a power of two"));
    }
    Ok(())
}

pub(crate) fn transform_in_place(x: &mut [u8]) {
    let n = x.len();
    let mut h = 1;
    while h < n {
        for block in x.chunks_exact_mut(2 * h) {
            let (l, r) = block.split_at_mut(h);
            for (a, b) in l.iter_mut().zip(r.iter()) {
                *a ^= *b;
            }
        }
        h *= 2;
    }
}

/// `x = u · F^{⊗n}` over GF(2). Self-inverse.
pub fn polar_transform(bits: &[u8]) -> Result<Vec<u8>> {
    check_len(bits.len())?;
    let mut x: Vec<u8> = bits.iter().map(|b| b & 1).collect();
    transform_in_place(&mut x);
    Ok(x)
}

#[inline]
fn f_exact(a: f64, b: f64) -> f64 {
    let s = if (a < 0.0) != (b < 0.0) { -1.0 } else { 1.0 };
    s * a.abs().min(b.abs()) + (-(a + b).abs()).exp().ln_1p() - (-(a - b).abs()).exp().ln_1p()
}

#[inline]
fn f_min_sum(a: f64, b: f64) -> f64 {
    let s = if (a < 0.0) != (b < 0.0) { -1.0 } else { 1.0 };
    s * a.abs().min(b.abs())
}

#[inline]
fn g(a: f64, b: f64, bit: u8) -> f64 {
    if bit == 0 {
        b + a
    } else {
        b - a
    }
}

/// LLR update counts of one decode.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScOps {
    pub f: usize,
    pub g: usize,
}

impl ScOps {
    pub fn total(&self) -> usize {
        self.f + self.g
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScOutput {
    pub u_hat: Vec<u8>,
    pub x_hat: Vec<u8>,
    pub ops: ScOps,
}

/// Reusable SC decoder for a fixed block length.
#[derive(Debug, Clone)]
pub struct ScDecoder {
    n: usize,
    min_sum: bool,
    alpha: Vec<f64>,
    beta: Vec<u8>,
    ops: ScOps,
}

impl ScDecoder {
    pub fn new(n: usize) -> Result<Self> {
        check_len(n)?;
        Ok(Self {
            n,
            min_sum: false,
            alpha: vec![0.0; 2 * n],
            beta: vec![0; 2 * n],
            ops: ScOps::default(),
        })
    }

    /// Min-sum check-node update instead of the exact one.
    pub fn min_sum(mut self, on: bool) -> Self {
        self.min_sum = on;
        self
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn ops(&self) -> ScOps {
        self.ops
    }

    /// Runs SC over `llrs`. `leaf(i, llr)` decides bit `u_i`; a plain decoder
    /// returns the frozen value or the hard decision, a genie returns the
    /// true bit. Writes decisions to `u_hat` and returns the re-encoded word.
    pub fn decode_with<F>(&mut self, llrs: &[f64], u_hat: &mut [u8], mut leaf: F) -> &[u8]
    where
        F: FnMut(usize, f64) -> u8,
    {
        assert_eq!(llrs.len(), self.n, "llr length");
        assert_eq!(u_hat.len(), self.n, "decision buffer length");
        for (a, &l) in self.alpha.iter_mut().zip(llrs) {
            *a = if l.is_nan() { 0.0 } else { l.clamp(-LLR_CLAMP, LLR_CLAMP) };
        }
        self.ops = ScOps::default();
        self.node(0, 0, u_hat, &mut leaf);
        &self.beta[..self.n]
    }

    fn offset(&self, depth: usize) -> usize {
        2 * self.n - 2 * (self.n >> depth)
    }

    fn node<F>(&mut self, depth: usize, start: usize, u_hat: &mut [u8], leaf: &mut F)
    where
        F: FnMut(usize, f64) -> u8,
    {
        let m = self.n >> depth;
        let off = self.offset(depth);
        if m == 1 {
            let u = leaf(start, self.alpha[off]) & 1;
            u_hat[start] = u;
            self.beta[off] = u;
            return;
        }
        let half = m / 2;
        let child = off + m;
        {
            let (cur, next) = self.alpha.split_at_mut(child);
            let cur = &cur[off..off + m];
            let f = if self.min_sum { f_min_sum } else { f_exact };
            for i in 0..half {
                next[i] = f(cur[i], cur[i + half]);
            }
        }
        self.ops.f += half;
        self.node(depth + 1, start, u_hat, leaf);
        {
            let (cur_b, next_b) = self.beta.split_at_mut(child);
            cur_b[off..off + half].copy_from_slice(&next_b[..half]);
            let (cur, next) = self.alpha.split_at_mut(child);
            let cur = &cur[off..off + m];
            for i in 0..half {
                next[i] = g(cur[i], cur[i + half], cur_b[off + i]);
            }
        }
        self.ops.g += half;
        self.node(depth + 1, start + half, u_hat, leaf);
        let (cur_b, next_b) = self.beta.split_at_mut(child);
        for i in 0..half {
            let b = next_b[i];
            cur_b[off + i] ^= b;
            cur_b[off + half + i] = b;
        }
    }
}

/// Successive-cancellation decoding with frozen positions forced to
/// `frozen_values`.
pub fn sc_decode(llrs: &[f64], frozen_mask: &[bool], frozen_values: &[u8]) -> Result<ScOutput> {
    sc_decode_opts(llrs, frozen_mask, frozen_values, false)
}

pub fn sc_decode_opts(
    llrs: &[f64],
    frozen_mask: &[bool],
    frozen_values: &[u8],
    min_sum: bool,
) -> Result<ScOutput> {
    let n = llrs.len();
    check_len(n)?;
    if frozen_mask.len() != n || frozen_values.len() != n {
        return invalid("frozen mask and values must match the block length");
    }
    let mut dec = ScDecoder::new(n)?.min_sum(min_sum);
    let mut u_hat = vec![0; n];
    let x_hat = dec
        .decode_with(llrs, &mut u_hat, |i, l| {
            if frozen_mask[i] {
                frozen_values[i]
            } else {
                u8::from(l < 0.0)
            }
        })
        .to_vec();
    Ok(ScOutput {
        u_hat,
        x_hat,
        ops: dec.ops(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn kernel_and_small_cases() {
        for (u1, u2) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            assert_eq!(polar_transform(&[u1, u2]).unwrap(), vec![u1 ^ u2, u2]);
        }
        assert_eq!(polar_transform(&[0, 0, 0, 1]).unwrap(), vec![1, 1, 1, 1]);
        assert_eq!(polar_transform(&[1, 0, 0, 0]).unwrap(), vec![1, 0, 0, 0]);
        assert!(polar_transform(&[1, 0, 0]).is_err());
        assert!(polar_transform(&[]).is_err());
    }

    #[test]
    fn matches_kronecker_power() {
        // rows of F⊗3 over GF(2), natural order
        let n = 8;
        for k in 0..n {
            let mut u = vec![0u8; n];
            u[k] = 1;
            let x = polar_transform(&u).unwrap();
            for (j, &xj) in x.iter().enumerate() {
                // F⊗m[k][j] = 1 iff j's bits are a subset of k's bits
                assert_eq!(xj, u8::from(j & !k == 0));
            }
        }
    }

    #[test]
    fn exact_f_is_the_tanh_rule() {
        for &(a, b) in &[(0.3, -1.2), (4.0, 2.5), (-7.0, -0.01), (0.0, 3.0), (9.0, -10.0)] {
            let want = 2.0 * ((a / 2.0f64).tanh() * (b / 2.0f64).tanh()).atanh();
            assert!((f_exact(a, b) - want).abs() < 1e-9, "{a} {b}");
        }
        assert_eq!(f_exact(LLR_CLAMP, -3.0), -3.0);
        assert!(f_exact(LLR_CLAMP, -LLR_CLAMP).is_finite());
    }

    #[test]
    fn all_frozen_gives_zero() {
        let n = 16;
        let llrs: Vec<f64> = (0..n).map(|i| (i as f64 - 7.5) * 0.7).collect();
        let out = sc_decode(&llrs, &vec![true; n], &vec![0; n]).unwrap();
        assert!(out.u_hat.iter().all(|&b| b == 0));
        assert!(out.x_hat.iter().all(|&b| b == 0));
    }

    #[test]
    fn noiseless_round_trip_and_op_count() {
        let mut rng = crate::rng::rng_for(4, 0);
        for &n in &[1usize, 2, 8, 64, 256] {
            let frozen: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.4)).collect();
            let u: Vec<u8> = frozen.iter().map(|&f| if f { 0 } else { rng.gen_range(0..2) }).collect();
            let x = polar_transform(&u).unwrap();
            let llrs: Vec<f64> = x.iter().map(|&b| if b == 0 { f64::INFINITY } else { f64::NEG_INFINITY }).collect();
            let out = sc_decode(&llrs, &frozen, &vec![0; n]).unwrap();
            assert_eq!(out.u_hat, u);
            assert_eq!(out.x_hat, x);
            let logn = n.trailing_zeros() as usize;
            assert_eq!(out.ops.total(), n * logn);
        }
    }

    #[test]
    fn min_sum_agrees_on_clean_inputs() {
        let u = [0, 0, 0, 1, 0, 1, 1, 0];
        let frozen = [true, true, true, false, true, false, false, false];
        let x = polar_transform(&u).unwrap();
        let llrs: Vec<f64> = x.iter().map(|&b| if b == 0 { 5.0 } else { -5.0 }).collect();
        let a = sc_decode_opts(&llrs, &frozen, &[0; 8], true).unwrap();
        assert_eq!(a.u_hat, u);
    }
}
