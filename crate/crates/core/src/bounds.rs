//! Explicit Berry-Esseen certificate for the log-normal limit.
//!
//! For `delta` in `(0, 1)` and `eta` in `(0, mu1)`:
//!
//! ```text
//! sup_x |Delta_n(x)| <= 1/sqrt(2 pi sigma^2 L_n) ln((1+delta)/(1-delta) n/(n-1))
//!                     + 3 C*/sqrt(L_n) (mu1^2 + mu0^2)/sqrt(mu1 mu0)
//!                     + 4 exp(-2 L_n eta^2)
//!                     + 2 exp(-Psi(delta) (n-1) (gamma1^(mu1+eta) gamma0^(mu0+eta))^L_n)
//! ```

use std::f64::consts::PI;
use std::io::{self, Write};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{MagError, Result};
use crate::model::{ModelParams, Scaling};
use crate::pmf::fmt17;

/// Best published value of the universal Berry-Esseen constant for i.i.d. sums.
pub const C_STAR_DEFAULT: f64 = 0.4748;

/// Chernoff rate function `(x + 1) ln(x + 1) - x`.
pub fn psi(x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(MagError::range(format!("psi needs x >= 0, got {x}")));
    }
    if x < 1e-3 {
        // x^2/2 - x^3/6 + x^4/12 - x^5/20 avoids cancellation near 0
        let x2 = x * x;
        return Ok(x2 * (0.5 - x / 6.0 + x2 / 12.0 - x2 * x / 20.0));
    }
    Ok((x + 1.0) * x.ln_1p() - x)
}

/// `eta` used when none is given: `min(mu1, mu0) / 4`.
pub fn default_eta(params: &ModelParams) -> f64 {
    params.mu1().min(params.mu0()) / 4.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundCertificate {
    pub n: u64,
    pub l: u32,
    pub delta: f64,
    pub eta: f64,
    pub c_star: f64,
    pub term_clt: f64,
    pub term_be: f64,
    pub term_hoeffding: f64,
    pub term_chernoff: f64,
    pub total: f64,
}

impl BoundCertificate {
    /// A total of at least 1 says nothing about a difference of probabilities.
    pub fn is_vacuous(&self) -> bool {
        self.total >= 1.0
    }

    pub const CSV_HEADER: &'static str = "n,delta,eta,term_clt,term_be,term_hoeffding,term_chernoff,total,vacuous";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.n,
            fmt17(self.delta),
            fmt17(self.eta),
            fmt17(self.term_clt),
            fmt17(self.term_be),
            fmt17(self.term_hoeffding),
            fmt17(self.term_chernoff),
            fmt17(self.total),
            self.is_vacuous()
        )
    }

    pub fn write_csv<W: Write>(certs: &[BoundCertificate], mut w: W) -> io::Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for c in certs {
            writeln!(w, "{}", c.csv_row())?;
        }
        Ok(())
    }
}

fn check_delta_eta(params: &ModelParams, delta: f64, eta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(MagError::range(format!("delta must lie in (0, 1), got {delta}")));
    }
    if !(eta > 0.0 && eta < params.mu1()) {
        return Err(MagError::range(format!("eta must lie in (0, mu1 = {}), got {eta}", params.mu1())));
    }
    Ok(())
}

/// `2 exp(-Psi(delta) (n-1) b^L)` with `ln b = (mu1+eta) ln gamma1 + (mu0+eta) ln gamma0`;
/// the inner power is assembled as one exponent.
fn chernoff_term(params: &ModelParams, n: u64, l: u32, delta: f64, eta: f64) -> Result<f64> {
    let c = params.derive();
    let ln_base = (params.mu1() + eta) * c.ln_gamma1 + (params.mu0() + eta) * c.ln_gamma0;
    let ln_rate = psi(delta)?.ln() + ((n - 1) as f64).ln() + l as f64 * ln_base;
    Ok(2.0 * (-ln_rate.exp()).exp())
}

fn hoeffding_term(l: u32, eta: f64) -> f64 {
    4.0 * (-2.0 * l as f64 * eta * eta).exp()
}

/// `4 exp(-2 L eta^2) + 2 exp(-Psi(delta) (n-1) (gamma1^(mu1+eta) gamma0^(1-mu1+eta))^L)`,
/// an upper bound on `P(|D / E[D | S] - 1| > delta)`.
pub fn ratio_concentration_bound(n: u64, l: u32, params: &ModelParams, delta: f64, eta: f64) -> Result<f64> {
    if n < 2 || l < 1 {
        return Err(MagError::range(format!("need n >= 2 and l >= 1, got n={n}, l={l}")));
    }
    if !(delta > 0.0) {
        return Err(MagError::range(format!("delta must be positive, got {delta}")));
    }
    if !(eta > 0.0 && eta < params.mu1()) {
        return Err(MagError::range(format!("eta must lie in (0, mu1), got {eta}")));
    }
    Ok(hoeffding_term(l, eta) + chernoff_term(params, n, l, delta, eta)?)
}

pub fn berry_esseen_bound(
    n: u64,
    scaling: &Scaling,
    params: &ModelParams,
    delta: f64,
    eta: f64,
    c_star: f64,
) -> Result<BoundCertificate> {
    scaling.regime(params).require_supercritical()?;
    let c = params.derive();
    if c.is_degenerate() {
        return Err(MagError::DegenerateSigma);
    }
    check_delta_eta(params, delta, eta)?;
    if !(c_star > 0.0 && c_star.is_finite()) {
        return Err(MagError::range(format!("c_star must be positive, got {c_star}")));
    }
    let pt = scaling.at(n)?;
    let l = pt.l as f64;
    let (mu1, mu0) = (params.mu1(), params.mu0());
    let nf = n as f64;

    // ln((1+d)/(1-d)) + ln(n/(n-1)), each via log1p
    let log_arg = delta.ln_1p() - (-delta).ln_1p() - (-1.0 / nf).ln_1p();
    let term_clt = log_arg / (2.0 * PI * c.sigma2() * l).sqrt();
    let term_be = 3.0 * c_star / l.sqrt() * (mu1 * mu1 + mu0 * mu0) / (mu1 * mu0).sqrt();
    let term_hoeffding = hoeffding_term(pt.l, eta);
    let term_chernoff = chernoff_term(params, n, pt.l, delta, eta)?;
    Ok(BoundCertificate {
        n,
        l: pt.l,
        delta,
        eta,
        c_star,
        term_clt,
        term_be,
        term_hoeffding,
        term_chernoff,
        total: term_clt + term_be + term_hoeffding + term_chernoff,
    })
}

/// Geometric grid over `(0, 1)` for delta and `(0, mu1)` for eta.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundGrid {
    pub delta_points: usize,
    pub eta_points: usize,
    /// Smallest grid value as a fraction of the interval's upper end.
    pub lower_fraction: f64,
    /// Largest grid value as a fraction of the interval's upper end.
    pub upper_fraction: f64,
}

impl Default for BoundGrid {
    fn default() -> Self {
        BoundGrid { delta_points: 200, eta_points: 200, lower_fraction: 1e-4, upper_fraction: 1.0 - 1e-4 }
    }
}

impl BoundGrid {
    fn points(count: usize, top: f64, lo: f64, hi: f64) -> Vec<f64> {
        if count == 1 {
            return vec![top * (lo * hi).sqrt()];
        }
        let (a, b) = (lo.ln(), hi.ln());
        (0..count).map(|i| top * (a + (b - a) * i as f64 / (count - 1) as f64).exp()).collect()
    }

    fn validate(&self) -> Result<()> {
        if self.delta_points == 0 || self.eta_points == 0 {
            return Err(MagError::param("grid needs at least one point per axis"));
        }
        if !(self.lower_fraction > 0.0 && self.lower_fraction <= self.upper_fraction && self.upper_fraction < 1.0) {
            return Err(MagError::param("grid fractions must satisfy 0 < lower <= upper < 1"));
        }
        Ok(())
    }
}

/// Minimal-total certificate on the grid; ties go to the smaller delta, then the smaller eta.
pub fn optimize_bound(
    n: u64,
    scaling: &Scaling,
    params: &ModelParams,
    c_star: f64,
    grid: &BoundGrid,
) -> Result<BoundCertificate> {
    grid.validate()?;
    let deltas = BoundGrid::points(grid.delta_points, 1.0, grid.lower_fraction, grid.upper_fraction);
    let etas = BoundGrid::points(grid.eta_points, params.mu1(), grid.lower_fraction, grid.upper_fraction);
    // validates regime, sigma and c_star once up front
    berry_esseen_bound(n, scaling, params, deltas[0], etas[0], c_star)?;
    let best = deltas
        .par_iter()
        .map(|&delta| {
            etas.iter()
                .map(|&eta| berry_esseen_bound(n, scaling, params, delta, eta, c_star))
                .collect::<Result<Vec<_>>>()
                .map(|v| v.into_iter().reduce(pick_better).expect("nonempty grid"))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .reduce(pick_better)
        .expect("nonempty grid");
    Ok(best)
}

fn pick_better(a: BoundCertificate, b: BoundCertificate) -> BoundCertificate {
    let key = |c: &BoundCertificate| (c.total, c.delta, c.eta);
    let (ka, kb) = (key(&a), key(&b));
    if kb.0 < ka.0 || (kb.0 == ka.0 && (kb.1, kb.2) < (ka.1, ka.2)) {
        b
    } else {
        a
    }
}

/// `ln(v/u) / sqrt(2 pi sigma^2)`, an upper bound on `P(u < e^(sigma Z) <= v)`.
pub fn lognormal_interval_bound(u: f64, v: f64, sigma: f64) -> Result<f64> {
    if !(u > 0.0 && u < v) {
        return Err(MagError::range(format!("need 0 < u < v, got u={u}, v={v}")));
    }
    if sigma == 0.0 || !sigma.is_finite() {
        return Err(MagError::DegenerateSigma);
    }
    Ok((v / u).ln() / (2.0 * PI * sigma * sigma).sqrt())
}
