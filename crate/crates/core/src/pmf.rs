//! Exact degree law: a binomial mixture over the attribute count.
//!
//! `P(D = d) = sum_s P(S = s) C(n-1, d) p_s^d (1 - p_s)^(n-1-d)` with
//! `S ~ Bin(L, mu1)` and `p_s = gamma1^s gamma0^(L-s)`. Every term is built
//! in log space and the mixture is combined with a fixed-order logsumexp.

use std::io::{self, Write};

use crate::error::{MagError, Result};
use crate::model::ModelParams;
use crate::special::{ln_binomial_pmf, logsumexp};

#[derive(Debug, Clone, PartialEq)]
pub struct DegreePmfTable {
    n: u64,
    l: u32,
    /// `ln P(S = s)`
    log_weights: Vec<f64>,
    /// `ln p_s`
    log_p: Vec<f64>,
    p: Vec<f64>,
}

impl DegreePmfTable {
    pub fn new(params: &ModelParams, n: u64, l: u32) -> Result<Self> {
        if n < 2 {
            return Err(MagError::range(format!("n must be at least 2, got {n}")));
        }
        if l < 1 {
            return Err(MagError::range(format!("l must be at least 1, got {l}")));
        }
        let c = params.derive();
        let log_weights = (0..=l).map(|s| ln_binomial_pmf(s as u64, l as u64, params.mu1())).collect();
        let log_p: Vec<f64> = (0..=l).map(|s| s as f64 * c.ln_gamma1 + (l - s) as f64 * c.ln_gamma0).collect();
        let p = log_p.iter().map(|x| x.exp()).collect();
        Ok(DegreePmfTable { n, l, log_weights, log_p, p })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn l(&self) -> u32 {
        self.l
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn log_p(&self) -> &[f64] {
        &self.log_p
    }

    fn check(&self, d: u64) -> Result<()> {
        if d > self.n - 1 {
            return Err(MagError::range(format!("degree {d} outside [0, {}]", self.n - 1)));
        }
        Ok(())
    }

    fn log_terms(&self, d: u64, buf: &mut Vec<f64>) {
        buf.clear();
        buf.extend(self.log_weights.iter().zip(&self.p).map(|(w, &p)| w + ln_binomial_pmf(d, self.n - 1, p)));
    }

    pub fn ln_pmf(&self, d: u64) -> Result<f64> {
        self.check(d)?;
        let mut buf = Vec::with_capacity(self.log_weights.len());
        self.log_terms(d, &mut buf);
        Ok(logsumexp(&buf))
    }

    pub fn pmf(&self, d: u64) -> Result<f64> {
        Ok(self.ln_pmf(d)?.exp().min(1.0))
    }

    /// `P(D <= d)` by forward summation, O(d L).
    pub fn cdf(&self, d: u64) -> Result<f64> {
        self.check(d)?;
        let mut buf = Vec::with_capacity(self.log_weights.len());
        let mut acc = 0.0;
        for k in 0..=d {
            self.log_terms(k, &mut buf);
            acc += logsumexp(&buf).exp();
        }
        Ok(acc.min(1.0))
    }

    /// `P(D = 0) = sum_s P(S = s) (1 - p_s)^(n - 1)`, with the power taken as
    /// `exp((n - 1) log1p(-p_s))`.
    pub fn prob_zero(&self) -> f64 {
        let nm1 = (self.n - 1) as f64;
        let terms: Vec<f64> = self.log_weights.iter().zip(&self.p).map(|(w, &p)| w + nm1 * (-p).ln_1p()).collect();
        logsumexp(&terms).exp()
    }

    /// pmf for `d = 0..=d_max`.
    pub fn pmf_table(&self, d_max: u64) -> Result<Vec<f64>> {
        self.check(d_max)?;
        let mut buf = Vec::with_capacity(self.log_weights.len());
        Ok((0..=d_max)
            .map(|d| {
                self.log_terms(d, &mut buf);
                logsumexp(&buf).exp()
            })
            .collect())
    }

    /// pmf for `d = 0, 1, ...` until the mass beyond the last entry is below `tol`.
    ///
    /// Past each component's mode the binomial ratio `f(d+1)/f(d)` is
    /// decreasing, so `f(d) r / (1 - r)` bounds that component's tail.
    pub fn pmf_table_truncated(&self, tol: f64) -> Vec<f64> {
        let m = self.n - 1;
        let mf = m as f64;
        let modes: Vec<f64> = self.p.iter().map(|&p| ((mf + 1.0) * p).floor()).collect();
        let max_mode = modes.iter().copied().fold(0.0, f64::max) as u64;
        let mut out = Vec::new();
        let mut buf = Vec::with_capacity(self.p.len());
        for d in 0..=m {
            self.log_terms(d, &mut buf);
            out.push(logsumexp(&buf).exp());
            if d < max_mode || d == m {
                continue;
            }
            let df = d as f64;
            let tail: f64 = buf
                .iter()
                .zip(&self.p)
                .map(|(lt, &p)| {
                    let r = (mf - df) * p / ((df + 1.0) * (1.0 - p));
                    if r >= 1.0 {
                        f64::INFINITY
                    } else {
                        lt.exp() * r / (1.0 - r)
                    }
                })
                .sum();
            if tail < tol {
                break;
            }
        }
        out
    }

    /// `d,pmf,cdf` rows for `d = 0..pmf.len()`, floats with 17 significant digits.
    pub fn write_csv<W: Write>(pmf: &[f64], mut w: W) -> io::Result<()> {
        writeln!(w, "d,pmf,cdf")?;
        let mut cdf = 0.0;
        for (d, &p) in pmf.iter().enumerate() {
            cdf += p;
            writeln!(w, "{d},{},{}", fmt17(p), fmt17(cdf.min(1.0)))?;
        }
        Ok(())
    }
}

/// Scientific notation with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn exact_degree_pmf(params: &ModelParams, n: u64, l: u32, d: u64) -> Result<f64> {
    DegreePmfTable::new(params, n, l)?.pmf(d)
}

pub fn exact_degree_cdf(params: &ModelParams, n: u64, l: u32, d: u64) -> Result<f64> {
    DegreePmfTable::new(params, n, l)?.cdf(d)
}

pub fn prob_degree_zero(params: &ModelParams, n: u64, l: u32) -> Result<f64> {
    Ok(DegreePmfTable::new(params, n, l)?.prob_zero())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Rounding, Scaling};
    use crate::rng::{stream, StreamTag};
    use rand::Rng;

    fn binom_ln_pmf_naive(n: u64, p: f64, d: u64) -> f64 {
        let lc: f64 = (1..=d).map(|i| ((n - d + i) as f64 / i as f64).ln()).sum();
        lc + d as f64 * p.ln() + (n - d) as f64 * (1.0 - p).ln()
    }

    #[test]
    fn frozen_values_reference_params() {
        // 50-digit mpmath values, tests/oracle/oracle_values.py
        let p = ModelParams::reference();
        let t = DegreePmfTable::new(&p, 30, 3).unwrap();
        let want = [
            (0, 0.130_064_483_090_041_6),
            (1, 0.237_768_920_827_850_04),
            (5, 0.058_019_898_717_624_406),
            (10, 0.000_338_024_527_886_992_9),
            (20, 5.643_635_498_230_654e-13),
            (29, 1.395_873_968_570_117_7e-27),
        ];
        for (d, w) in want {
            let got = t.pmf(d).unwrap();
            assert!((got / w - 1.0).abs() < 1e-12, "d={d}: {got} vs {w}");
        }
        let t = DegreePmfTable::new(&p, 1000, 7).unwrap();
        for (d, w) in [
            (0, 0.145_863_212_869_426_74),
            (1, 0.217_653_596_736_589_53),
            (10, 0.005_319_682_030_835_486_6),
            (100, 2.650_031_931_023_293_9e-76),
        ] {
            let got = t.pmf(d).unwrap();
            assert!((got / w - 1.0).abs() < 1e-11, "d={d}: {got} vs {w}");
        }
        // d = 500 underflows double precision; ln is still exact
        let ln_want = 1.875_655_123_422_604_5f64.ln() - 758.0 * 10f64.ln();
        assert!((t.ln_pmf(500).unwrap() - ln_want).abs() < 1e-9);
    }

    #[test]
    fn mixture_weights_normalise() {
        let t = DegreePmfTable::new(&ModelParams::reference(), 100, 40).unwrap();
        assert!(logsumexp(t.log_weights()).abs() < 1e-12);
        assert!(t.log_p().iter().all(|&lp| lp < 0.0));
    }

    #[test]
    fn flat_matrix_collapses_to_binomial() {
        let q = 0.45;
        let p = ModelParams::new(q, q, q, 0.3).unwrap();
        for (n, l) in [(30u64, 3u32), (200, 5), (57, 1)] {
            let t = DegreePmfTable::new(&p, n, l).unwrap();
            let pl = q.powi(l as i32);
            for d in 0..n {
                // log space: the far tail is below the normal double range
                let want = binom_ln_pmf_naive(n - 1, pl, d);
                let got = t.ln_pmf(d).unwrap();
                assert!((got - want).abs() < 1e-12, "n={n} l={l} d={d}");
            }
            assert!((t.prob_zero() - (1.0 - pl).powi((n - 1) as i32)).abs() < 1e-14);
        }
    }

    #[test]
    fn n3_l1_zero_degree_written_out() {
        let p = ModelParams::reference();
        let c = p.derive();
        let want = p.mu1() * (1.0 - c.gamma1).powi(2) + p.mu0() * (1.0 - c.gamma0).powi(2);
        assert!((exact_degree_pmf(&p, 3, 1, 0).unwrap() - want).abs() < 1e-15);
        assert!((prob_degree_zero(&p, 3, 1).unwrap() - want).abs() < 1e-15);
    }

    #[test]
    fn normalisation_random_instances() {
        let mut rng = stream(2024, StreamTag::SelfTest, 0);
        for _ in 0..50 {
            let p = ModelParams::new(
                rng.random_range(0.01..0.99),
                rng.random_range(0.01..0.99),
                rng.random_range(0.01..0.99),
                rng.random_range(0.01..0.99),
            )
            .unwrap();
            let n = rng.random_range(2..=200u64);
            let l = rng.random_range(1..=12u32);
            let t = DegreePmfTable::new(&p, n, l).unwrap();
            let total: f64 = t.pmf_table(n - 1).unwrap().iter().sum();
            assert!((total - 1.0).abs() < 1e-10);
            assert!((t.prob_zero() - t.pmf(0).unwrap()).abs() < 1e-12);
            assert!((t.cdf(n - 1).unwrap() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn cdf_increments_are_pmf() {
        let t = DegreePmfTable::new(&ModelParams::reference(), 30, 3).unwrap();
        let mut prev = 0.0;
        for d in 0..30 {
            let c = t.cdf(d).unwrap();
            assert!(c >= prev);
            assert!((c - prev - t.pmf(d).unwrap()).abs() < 1e-12);
            prev = c;
        }
        assert!(t.pmf(30).is_err());
        assert!(t.cdf(30).is_err());
    }

    #[test]
    fn zero_one_law_trends() {
        let p = ModelParams::reference();
        let trend = |rho: f64| -> Vec<f64> {
            let s = Scaling::new(rho, Rounding::Round).unwrap();
            [100u64, 1000, 10_000].iter().map(|&n| prob_degree_zero(&p, n, s.l_at(n).unwrap()).unwrap()).collect()
        };
        let sub = trend(2.0);
        assert!(sub[0] < sub[1] && sub[1] < sub[2], "{sub:?}");
        let sup = trend(1.0);
        assert!(sup[0] > sup[1] && sup[1] > sup[2], "{sup:?}");
    }

    #[test]
    fn huge_n_zero_probability_is_finite() {
        let p = ModelParams::reference();
        let z = prob_degree_zero(&p, 1_000_000_000, 21).unwrap();
        assert!(z > 0.0 && z < 1.0);
        let t = DegreePmfTable::new(&p, 1_000_000_000, 21).unwrap();
        assert!((t.pmf(0).unwrap() / z - 1.0).abs() < 1e-12);
    }

    #[test]
    fn truncated_table_keeps_all_but_tol() {
        let p = ModelParams::reference();
        let t = DegreePmfTable::new(&p, 1_000_000, 14).unwrap();
        let tab = t.pmf_table_truncated(1e-16);
        let total: f64 = tab.iter().sum();
        assert!((total - 1.0).abs() < 1e-12, "{total}");
        assert!(tab.len() < 10_000);
    }

    #[test]
    fn csv_layout() {
        let t = DegreePmfTable::new(&ModelParams::reference(), 4, 2).unwrap();
        let pmf = t.pmf_table(3).unwrap();
        let mut buf = Vec::new();
        DegreePmfTable::write_csv(&pmf, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "d,pmf,cdf");
        assert_eq!(lines.len(), 5);
        let fields: Vec<&str> = lines[1].split(',').collect();
        assert_eq!(fields[0], "0");
        let mantissa = fields[1].split('e').next().unwrap();
        assert_eq!(mantissa.replace('.', "").len(), 17);
        assert_eq!(fields[1].parse::<f64>().unwrap(), pmf[0]);
    }
}
