//! Empirical distribution statistics used by the experiment harness.

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{MagError, Result};

/// Empirical distribution function; construction sorts, so input order never matters.
#[derive(Debug, Clone, PartialEq)]
pub struct Ecdf {
    sorted: Vec<f64>,
}

impl Ecdf {
    pub fn new(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(MagError::EmptySample("ECDF of an empty sample".into()));
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(MagError::param("ECDF input contains NaN"));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Ecdf { sorted })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    /// Fraction of the sample `<= x`.
    pub fn eval(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= x) as f64 / self.sorted.len() as f64
    }

    pub fn ks_distance<F: Fn(f64) -> f64>(&self, cdf: F) -> f64 {
        ks_statistic_sorted(&self.sorted, cdf).expect("nonempty by construction")
    }
}

/// `max_d |F_N(d) - F(d)|` for integer data against the cdf of a law on `0..cdf.len()`.
pub fn ks_discrete(values: &[u64], cdf: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(MagError::EmptySample("KS statistic of an empty sample".into()));
    }
    if cdf.is_empty() {
        return Err(MagError::param("empty reference cdf"));
    }
    let n = values.len() as f64;
    let (counts, overflow) = histogram(values, cdf.len() as u64 - 1);
    let mut acc = 0u64;
    let mut d: f64 = 0.0;
    for (c, f) in counts.iter().zip(cdf) {
        acc += c;
        d = d.max((acc as f64 / n - f).abs());
    }
    // mass beyond the table
    d = d.max(overflow as f64 / n);
    Ok(d)
}

/// `sup_x |F_N(x) - F(x)|` for sorted `values` against a continuous `cdf`.
/// Ties are handled by comparing both one-sided limits at every jump.
pub fn ks_statistic_sorted<F: Fn(f64) -> f64>(values: &[f64], cdf: F) -> Result<f64> {
    if values.is_empty() {
        return Err(MagError::EmptySample("KS statistic of an empty sample".into()));
    }
    debug_assert!(values.windows(2).all(|w| w[0] <= w[1]));
    let n = values.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in values.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    Ok(d)
}

/// Dvoretzky-Kiefer-Wolfowitz half-width `sqrt(ln(2/alpha) / (2N))`.
pub fn dkw_epsilon(n: usize, alpha: f64) -> f64 {
    ((2.0 / alpha).ln() / (2.0 * n as f64)).sqrt()
}

/// Kolmogorov limiting survival function `P(K > lambda)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.0 {
        // Jacobi-transformed series converges fast for small lambda
        let c = std::f64::consts::PI * std::f64::consts::PI / (8.0 * lambda * lambda);
        let mut s = 0.0;
        for k in 1..50 {
            let j = (2 * k - 1) as f64;
            let term = (-j * j * c).exp();
            s += term;
            if term < 1e-18 {
                break;
            }
        }
        return 1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s;
    }
    let mut s = 0.0;
    for k in 1..100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoSampleKs {
    pub statistic: f64,
    pub p_value: f64,
}

/// Two-sample KS on integer data with the asymptotic Kolmogorov p-value
/// (Stephens' small-sample correction). Conservative for discrete laws.
pub fn ks_two_sample(a: &[u64], b: &[u64]) -> Result<TwoSampleKs> {
    if a.is_empty() || b.is_empty() {
        return Err(MagError::EmptySample("two-sample KS needs two nonempty samples".into()));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_unstable();
    b.sort_unstable();
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() || j < b.len() {
        let x = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        while i < a.len() && a[i] == x {
            i += 1;
        }
        while j < b.len() && b[j] == x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let ne = (na * nb / (na + nb)).sqrt();
    let lambda = (ne + 0.12 + 0.11 / ne) * d;
    Ok(TwoSampleKs { statistic: d, p_value: kolmogorov_sf(lambda) })
}

/// Relative frequencies of `0..=max` in `values`; values beyond `max` are counted in the returned overflow.
pub fn histogram(values: &[u64], max: u64) -> (Vec<u64>, u64) {
    let mut counts = vec![0u64; max as usize + 1];
    let mut overflow = 0;
    for &v in values {
        match counts.get_mut(v as usize) {
            Some(c) if v <= max => *c += 1,
            _ => overflow += 1,
        }
    }
    (counts, overflow)
}

/// `1/2 sum_d |empirical(d) - pmf(d)|`, where `pmf` covers the support `0..pmf.len()`.
pub fn total_variation(values: &[u64], pmf: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(MagError::EmptySample("TV distance of an empty sample".into()));
    }
    let n = values.len() as f64;
    let (counts, overflow) = histogram(values, pmf.len() as u64 - 1);
    let inside: f64 = counts.iter().zip(pmf).map(|(&c, &p)| (c as f64 / n - p).abs()).sum();
    let missing = (1.0 - pmf.iter().sum::<f64>()).max(0.0);
    Ok(0.5 * (inside + overflow as f64 / n + missing))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson goodness of fit; adjacent cells are pooled left to right until
/// each expected count reaches 5, leftovers join the last cell.
pub fn chi_square_gof(values: &[u64], pmf: &[f64]) -> Result<ChiSquareTest> {
    if values.is_empty() {
        return Err(MagError::EmptySample("chi-square of an empty sample".into()));
    }
    let total = values.len() as f64;
    let (counts, overflow) = histogram(values, pmf.len() as u64 - 1);
    let mut obs = Vec::new();
    let mut exp = Vec::new();
    let (mut o, mut e) = (0.0, 0.0);
    for (c, p) in counts.iter().zip(pmf) {
        o += *c as f64;
        e += p * total;
        if e >= 5.0 {
            obs.push(o);
            exp.push(e);
            o = 0.0;
            e = 0.0;
        }
    }
    o += overflow as f64;
    match (obs.last_mut(), exp.last_mut()) {
        (Some(lo), Some(le)) => {
            *lo += o;
            *le += e;
        }
        _ => {
            obs.push(o);
            exp.push(e);
        }
    }
    if obs.len() < 2 {
        return Err(MagError::param("chi-square needs at least two pooled cells"));
    }
    let statistic: f64 = obs.iter().zip(&exp).map(|(o, e)| (o - e) * (o - e) / e).sum();
    let dof = obs.len() - 1;
    let dist = ChiSquared::new(dof as f64).map_err(|e| MagError::param(e.to_string()))?;
    Ok(ChiSquareTest { statistic, dof, p_value: 1.0 - dist.cdf(statistic) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, StreamTag};
    use crate::special::std_normal_cdf;
    use rand::Rng;

    #[test]
    fn ks_known_small_case() {
        // uniform cdf, sample {0.1, 0.4, 0.8}: max(1/3-0.1, 2/3-0.4, 1-0.8, 0.1, 0.4-1/3, 0.8-2/3) = 0.2667
        let d = ks_statistic_sorted(&[0.1, 0.4, 0.8], |x| x).unwrap();
        assert!((d - (2.0 / 3.0 - 0.4)).abs() < 1e-15);
        assert!(ks_statistic_sorted(&[], |x| x).is_err());
    }

    #[test]
    fn ks_ties_use_both_limits() {
        // all mass at 0.5: sup is max(1 - 0.5, 0.5 - 0) = 0.5
        let d = ks_statistic_sorted(&[0.5; 10], |x| x).unwrap();
        assert!((d - 0.5).abs() < 1e-15);
    }

    #[test]
    fn ks_null_is_small() {
        let mut rng = stream(1, StreamTag::SelfTest, 0);
        let mut xs: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>()).collect();
        xs.sort_by(f64::total_cmp);
        let d = ks_statistic_sorted(&xs, |x| x).unwrap();
        assert!(d < 1.36 / 100.0);
    }

    #[test]
    fn kolmogorov_sf_values() {
        // classical critical values
        assert!((kolmogorov_sf(1.3581) - 0.05).abs() < 1e-4);
        assert!((kolmogorov_sf(1.6276) - 0.01).abs() < 1e-4);
        assert!((kolmogorov_sf(0.8276) - 0.5).abs() < 1e-3);
        // both series agree where they meet
        let lo = {
            let l: f64 = 1.0;
            let c = std::f64::consts::PI.powi(2) / (8.0 * l * l);
            1.0 - (2.0 * std::f64::consts::PI).sqrt() / l
                * (1..50).map(|k| (-((2 * k - 1) as f64).powi(2) * c).exp()).sum::<f64>()
        };
        assert!((kolmogorov_sf(1.0) - lo).abs() < 1e-12);
        assert_eq!(kolmogorov_sf(0.0), 1.0);
        assert!(kolmogorov_sf(0.05) > 0.999_999);
    }

    #[test]
    fn two_sample_identical_and_shifted() {
        let mut rng = stream(2, StreamTag::SelfTest, 0);
        let a: Vec<u64> = (0..5000).map(|_| rng.random_range(0..20)).collect();
        let b: Vec<u64> = (0..5000).map(|_| rng.random_range(0..20)).collect();
        let same = ks_two_sample(&a, &b).unwrap();
        assert!(same.p_value > 0.001);
        let c: Vec<u64> = b.iter().map(|x| x + 2).collect();
        let diff = ks_two_sample(&a, &c).unwrap();
        assert!(diff.p_value < 1e-6);
        assert!((ks_two_sample(&a, &a).unwrap().statistic).abs() < 1e-15);
    }

    #[test]
    fn tv_and_chi_square() {
        let pmf = [0.25, 0.5, 0.25];
        let vals = [0, 1, 1, 2];
        assert!(total_variation(&vals, &pmf).unwrap().abs() < 1e-15);
        let vals = [0, 0, 0, 0];
        assert!((total_variation(&vals, &pmf).unwrap() - 0.75).abs() < 1e-15);
        let vals = [5, 5];
        assert!((total_variation(&vals, &pmf).unwrap() - 1.0).abs() < 1e-15);

        let mut rng = stream(3, StreamTag::SelfTest, 0);
        let draws: Vec<u64> = (0..20_000)
            .map(|_| {
                let u: f64 = rng.random();
                if u < 0.25 {
                    0
                } else if u < 0.75 {
                    1
                } else {
                    2
                }
            })
            .collect();
        let t = chi_square_gof(&draws, &pmf).unwrap();
        assert_eq!(t.dof, 2);
        assert!(t.p_value > 0.001);
        let skewed = vec![1u64; 1000];
        assert!(chi_square_gof(&skewed, &pmf).unwrap().p_value < 1e-10);
    }

    #[test]
    fn ecdf_order_independent() {
        let a = Ecdf::new(&[3.0, 1.0, 2.0, 2.0]).unwrap();
        let b = Ecdf::new(&[2.0, 2.0, 1.0, 3.0]).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.eval(0.5), 0.0);
        assert_eq!(a.eval(2.0), 0.75);
        assert_eq!(a.eval(3.0), 1.0);
        assert!(Ecdf::new(&[]).is_err());
        assert!(Ecdf::new(&[f64::NAN]).is_err());
    }

    #[test]
    fn ks_discrete_cases() {
        let cdf = [0.25, 0.75, 1.0];
        assert!(ks_discrete(&[0, 1, 1, 2], &cdf).unwrap().abs() < 1e-15);
        assert!((ks_discrete(&[2, 2, 2, 2], &cdf).unwrap() - 0.75).abs() < 1e-15);
        assert!((ks_discrete(&[7, 7], &cdf).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn dkw_value() {
        let e = dkw_epsilon(100_000, 0.05);
        assert!((e - ((40.0f64).ln() / 200_000.0).sqrt()).abs() < 1e-16);
    }

    #[test]
    fn ks_against_normal() {
        let mut rng = stream(4, StreamTag::SelfTest, 0);
        let mut xs: Vec<f64> = (0..20_000)
            .map(|_| {
                // Box-Muller
                let (u, v): (f64, f64) = (rng.random(), rng.random());
                (-2.0 * (1.0 - u).ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
            })
            .collect();
        xs.sort_by(f64::total_cmp);
        let d = ks_statistic_sorted(&xs, std_normal_cdf).unwrap();
        assert!(d < 1.36 / (20_000f64).sqrt());
    }
}
