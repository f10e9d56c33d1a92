//! Exact binomial variates.
//!
//! Inversion (sequential search from zero) when the mean after folding
//! `p` into `(0, 1/2]` is at most 30; Hormann's BTRS transformed rejection
//! otherwise. Both produce draws from the exact binomial law, with no normal
//! or Poisson approximation anywhere.

use rand::Rng;

use crate::special::ln_binomial_pmf;

/// Mean at or below which inversion is used.
pub const INVERSION_MAX_MEAN: f64 = 30.0;

/// One draw from `Bin(n, p)`. `p` must lie in `[0, 1]`.
pub fn sample_binomial<R: Rng + ?Sized>(rng: &mut R, n: u64, p: f64) -> u64 {
    debug_assert!((0.0..=1.0).contains(&p));
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    let flipped = p > 0.5;
    let pp = if flipped { 1.0 - p } else { p };
    let k = if n as f64 * pp <= INVERSION_MAX_MEAN { inversion(rng, n, pp) } else { btrs(rng, n, pp) };
    if flipped {
        n - k
    } else {
        k
    }
}

fn inversion<R: Rng + ?Sized>(rng: &mut R, n: u64, p: f64) -> u64 {
    let q = 1.0 - p;
    let s = p / q;
    let a = (n as f64 + 1.0) * s;
    let r0 = (n as f64 * (-p).ln_1p()).exp();
    'restart: loop {
        let mut u: f64 = rng.random();
        let mut r = r0;
        let mut x = 0u64;
        while u > r {
            u -= r;
            x += 1;
            if x > n {
                // rounding left mass beyond the support; draw again
                continue 'restart;
            }
            r *= a / x as f64 - s;
            if r <= 0.0 {
                continue 'restart;
            }
        }
        return x;
    }
}

fn btrs<R: Rng + ?Sized>(rng: &mut R, n: u64, p: f64) -> u64 {
    let nf = n as f64;
    let q = 1.0 - p;
    let spq = (nf * p * q).sqrt();
    let b = 1.15 + 2.53 * spq;
    let a = -0.0873 + 0.0248 * b + 0.01 * p;
    let c = nf * p + 0.5;
    let alpha = (2.83 + 5.1 / b) * spq;
    let v_r = 0.92 - 4.2 / b;
    let mode = ((nf + 1.0) * p).floor().min(nf) as u64;
    let ln_f_mode = ln_binomial_pmf(mode, n, p);
    loop {
        let u: f64 = rng.random::<f64>() - 0.5;
        let v: f64 = rng.random();
        let us = 0.5 - u.abs();
        let kf = ((2.0 * a / us + b) * u + c).floor();
        if kf < 0.0 || kf > nf {
            continue;
        }
        let k = kf as u64;
        if us >= 0.07 && v <= v_r {
            return k;
        }
        let lhs = (v * alpha / (a / (us * us) + b)).ln();
        if lhs <= ln_binomial_pmf(k, n, p) - ln_f_mode {
            return k;
        }
    }
}
