//! Log-normal limit of the transformed degree and the approximations built on it.

use serde::Serialize;

use crate::error::{MagError, Result};
use crate::model::{DerivedConstants, ModelParams, Regime, Scaling};
use crate::sampler::DegreeSampleSet;
use crate::special::std_normal_cdf;

/// Law of `exp(m + sigma Z)`, `Z ~ N(0, 1)`; depends on `sigma` only through `sigma2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogNormalSpec {
    pub m: f64,
    pub sigma2: f64,
}

impl LogNormalSpec {
    pub fn new(m: f64, sigma2: f64) -> Result<Self> {
        if !m.is_finite() || !(sigma2 >= 0.0 && sigma2.is_finite()) {
            return Err(MagError::param(format!("invalid log-normal parameters m={m}, sigma2={sigma2}")));
        }
        Ok(LogNormalSpec { m, sigma2 })
    }

    pub fn cdf(&self, x: f64) -> Result<f64> {
        lognormal_cdf(x, self)
    }
}

/// `P(exp(m + sigma Z) <= x)`; a unit step at `e^m` when `sigma2 = 0`.
pub fn lognormal_cdf(x: f64, spec: &LogNormalSpec) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(MagError::range(format!("log-normal cdf needs x >= 0, got {x}")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if spec.sigma2 == 0.0 {
        return Ok(if x.ln() >= spec.m { 1.0 } else { 0.0 });
    }
    Ok(std_normal_cdf((x.ln() - spec.m) / spec.sigma2.sqrt()))
}

/// Kim-Leskovec log-normal parameters at a given `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KlParams {
    pub n: u64,
    pub m_kl: f64,
    pub sigma2_kl: f64,
}

/// `m = ln(n gamma1^L) + L mu0 ln R_KL + (L/2) mu0 mu1 (ln R_KL)^2`,
/// `sigma2 = L mu1 mu0 (ln R_KL)^2`, with `R_KL = gamma0 / gamma1`.
pub fn kl_params(n: u64, scaling: &Scaling, params: &ModelParams) -> Result<KlParams> {
    let pt = scaling.at(n)?;
    let c = params.derive();
    let l = pt.l as f64;
    let ln_rkl = c.ln_gamma0 - c.ln_gamma1;
    let (mu0, mu1) = (params.mu0(), params.mu1());
    let m_kl = (n as f64).ln() + l * c.ln_gamma1 + l * mu0 * ln_rkl + 0.5 * l * mu0 * mu1 * ln_rkl * ln_rkl;
    let sigma2_kl = l * mu1 * mu0 * ln_rkl * ln_rkl;
    Ok(KlParams { n, m_kl, sigma2_kl })
}

/// Law of the large-`n` approximant `n^(-sigma^2 rho_n / 2) exp(m_KL + sigma_KL Z)`.
pub fn kl_reconciled_law(n: u64, scaling: &Scaling, params: &ModelParams) -> Result<LogNormalSpec> {
    scaling.regime(params).require_supercritical()?;
    let kl = kl_params(n, scaling, params)?;
    let pt = scaling.at(n)?;
    let sigma2 = params.derive().sigma2();
    LogNormalSpec::new(kl.m_kl - 0.5 * sigma2 * pt.rho_n * (n as f64).ln(), kl.sigma2_kl)
}

/// A supercritical model along a fixed admissible scaling.
#[derive(Debug, Clone, Copy)]
pub struct LimitModel {
    params: ModelParams,
    consts: DerivedConstants,
    scaling: Scaling,
    regime: Regime,
}

impl LimitModel {
    /// Fails with [`MagError::RegimeViolation`] unless `kappa > 0`.
    pub fn new(params: ModelParams, scaling: Scaling) -> Result<Self> {
        let regime = scaling.regime(&params);
        regime.require_supercritical()?;
        Ok(LimitModel { params, consts: params.derive(), scaling, regime })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn consts(&self) -> &DerivedConstants {
        &self.consts
    }

    pub fn scaling(&self) -> &Scaling {
        &self.scaling
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    /// The limit law `lnN(0, sigma^2)`.
    pub fn limit_law(&self) -> LogNormalSpec {
        LogNormalSpec { m: 0.0, sigma2: self.consts.sigma2() }
    }

    pub fn at(&self, n: u64) -> Result<LimitPoint> {
        let pt = self.scaling.at(n)?;
        let ln_n = (n as f64).ln();
        Ok(LimitPoint {
            model: *self,
            n,
            l: pt.l,
            rho_n: pt.rho_n,
            ln_n,
            growth_exponent: 1.0 + pt.rho_n * self.consts.ln_geometric_gamma,
        })
    }
}

/// A [`LimitModel`] evaluated at one `n`.
#[derive(Debug, Clone, Copy)]
pub struct LimitPoint {
    model: LimitModel,
    pub n: u64,
    pub l: u32,
    pub rho_n: f64,
    pub ln_n: f64,
    /// `1 + rho_n ln(gamma1^mu1 gamma0^mu0)`
    pub growth_exponent: f64,
}

impl LimitPoint {
    pub fn model(&self) -> &LimitModel {
        &self.model
    }

    fn sqrt_l(&self) -> f64 {
        (self.l as f64).sqrt()
    }

    fn abs_sigma(&self) -> Result<f64> {
        let s = self.model.consts.sigma.abs();
        if s == 0.0 {
            Err(MagError::DegenerateSigma)
        } else {
            Ok(s)
        }
    }

    /// `n^(1 + rho_n ln(gamma1^mu1 gamma0^mu0))`, the centring scale of the degree.
    pub fn degree_scale(&self) -> f64 {
        (self.growth_exponent * self.ln_n).exp()
    }

    /// `d^(1/sqrt(L_n)) exp(-sqrt(L_n) (1/rho_n + ln gamma1^mu1 gamma0^mu0))`.
    /// `d = 0` maps to 0.
    pub fn transform_degree(&self, d: f64) -> Result<f64> {
        if !(d >= 0.0) {
            return Err(MagError::range(format!("degree must be nonnegative, got {d}")));
        }
        if d == 0.0 {
            return Ok(0.0);
        }
        let sl = self.sqrt_l();
        Ok((d.ln() / sl - sl * (1.0 / self.rho_n + self.model.consts.ln_geometric_gamma)).exp())
    }

    /// Same value as [`Self::transform_degree`], written as `(d / degree_scale)^(1/sqrt(L_n))`.
    pub fn transform_degree_ratio_form(&self, d: f64) -> Result<f64> {
        if !(d >= 0.0) {
            return Err(MagError::range(format!("degree must be nonnegative, got {d}")));
        }
        if d == 0.0 {
            return Ok(0.0);
        }
        Ok(((d.ln() - self.growth_exponent * self.ln_n) / self.sqrt_l()).exp())
    }

    /// `x^(sqrt(L_n)) * degree_scale`.
    pub fn inverse_transform(&self, x: f64) -> Result<f64> {
        if !(x >= 0.0) {
            return Err(MagError::range(format!("x must be nonnegative, got {x}")));
        }
        if x == 0.0 {
            return Ok(0.0);
        }
        Ok((self.sqrt_l() * x.ln() + self.growth_exponent * self.ln_n).exp())
    }

    /// `ln x_n(t) = (ln t - growth_exponent ln n) / sqrt(L_n)`; `-inf` at `t = 0`.
    pub fn ln_x_n(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(MagError::range(format!("t must be nonnegative, got {t}")));
        }
        if t == 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        Ok((t.ln() - self.growth_exponent * self.ln_n) / self.sqrt_l())
    }

    /// Unique positive solution of `x^(sqrt(L_n)) * degree_scale = t`, with `x_n(0) = 0`.
    pub fn x_n_of_t(&self, t: f64) -> Result<f64> {
        Ok(self.ln_x_n(t)?.exp())
    }

    /// `P(D <= t) ~ Phi(ln x_n(t) / |sigma|)`.
    pub fn cdf_approx(&self, t: f64) -> Result<f64> {
        let s = self.abs_sigma()?;
        Ok(std_normal_cdf(self.ln_x_n(t)? / s))
    }

    /// `P(D = d) ~ Phi(ln x_n(d)/|sigma|) - Phi(ln x_n(d-1)/|sigma|)` for `d >= 1`;
    /// the `d - 1 = 0` endpoint contributes `Phi(-inf) = 0`.
    pub fn pmf_approx(&self, d: u64) -> Result<f64> {
        if d == 0 {
            return Err(MagError::range("pmf approximation is defined for d >= 1"));
        }
        let s = self.abs_sigma()?;
        let hi = self.ln_x_n(d as f64)? / s;
        let lo = self.ln_x_n((d - 1) as f64)? / s;
        // difference of upper tails when both arguments are positive
        let v =
            if lo > 0.0 { std_normal_cdf(-lo) - std_normal_cdf(-hi) } else { std_normal_cdf(hi) - std_normal_cdf(lo) };
        Ok(v.max(0.0))
    }

    pub fn kl_params(&self) -> Result<KlParams> {
        kl_params(self.n, &self.model.scaling, &self.model.params)
    }

    pub fn kl_reconciled_law(&self) -> Result<LogNormalSpec> {
        kl_reconciled_law(self.n, &self.model.scaling, &self.model.params)
    }

    /// `lnN(growth_exponent ln n, rho_n sigma^2 ln n)`: the law of
    /// `degree_scale * (e^(sigma Z))^(sqrt(L_n))`.
    pub fn centred_law(&self) -> LogNormalSpec {
        LogNormalSpec {
            m: self.growth_exponent * self.ln_n,
            sigma2: self.rho_n * self.model.consts.sigma2() * self.ln_n,
        }
    }

    fn check_samples(&self, samples: &DegreeSampleSet) -> Result<()> {
        if samples.is_empty() {
            return Err(MagError::EmptySample("no degree draws".into()));
        }
        if samples.n != self.n || samples.l != self.l {
            return Err(MagError::param(format!(
                "samples drawn at (n={}, L={}), expected (n={}, L={})",
                samples.n, samples.l, self.n, self.l
            )));
        }
        if samples.params != self.model.params {
            return Err(MagError::param("samples drawn under different model parameters"));
        }
        Ok(())
    }

    /// Fraction of draws with `d / degree_scale <= t`.
    pub fn lambda_limit_probe(&self, t: f64, samples: &DegreeSampleSet) -> Result<f64> {
        self.check_samples(samples)?;
        if !(t > 0.0) {
            return Err(MagError::range(format!("t must be positive, got {t}")));
        }
        let scale = self.degree_scale();
        let hits = samples.degrees.iter().filter(|&&d| d as f64 / scale <= t).count();
        Ok(hits as f64 / samples.len() as f64)
    }

    /// Transformed values of the nonzero draws, sorted ascending, and the number of zero draws.
    pub fn transformed_nonzero(&self, samples: &DegreeSampleSet) -> Result<(Vec<f64>, usize)> {
        self.check_samples(samples)?;
        let mut out = Vec::with_capacity(samples.len());
        let mut zeros = 0;
        for &d in &samples.degrees {
            if d == 0 {
                zeros += 1;
            } else {
                out.push(self.transform_degree(d as f64)?);
            }
        }
        out.sort_by(f64::total_cmp);
        Ok((out, zeros))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Rounding;
    use crate::pmf::DegreePmfTable;
    use crate::rng::{stream, StreamTag};
    use crate::sampler::sample_degrees_direct;
    use proptest::prelude::*;
    use rand::Rng;

    fn reference_model() -> LimitModel {
        LimitModel::new(ModelParams::reference(), Scaling::new(1.0, Rounding::Round).unwrap()).unwrap()
    }

    #[test]
    fn lognormal_cdf_examples() {
        let spec = LogNormalSpec::new(0.0, 0.3).unwrap();
        assert_eq!(lognormal_cdf(1.0, &spec).unwrap(), 0.5);
        assert_eq!(lognormal_cdf(0.0, &spec).unwrap(), 0.0);
        assert!(lognormal_cdf(-1.0, &spec).is_err());

        // quadrature oracle: Phi(ln 1.2 / sigma) for the reference sigma
        let sigma = ModelParams::reference().derive().sigma;
        let spec = LogNormalSpec::new(0.0, sigma * sigma).unwrap();
        let got = lognormal_cdf(1.2, &spec).unwrap();
        assert!((got - 0.797_833_544_055_613_1).abs() < 1e-15);

        // cdf(1) = Phi(-m / |sigma|)
        let spec = LogNormalSpec::new(0.4, 0.25).unwrap();
        assert!((spec.cdf(1.0).unwrap() - std_normal_cdf(-0.4 / 0.5)).abs() < 1e-16);

        let point = LogNormalSpec::new(2.0, 0.0).unwrap();
        assert_eq!(point.cdf(2f64.exp() * 0.999).unwrap(), 0.0);
        assert_eq!(point.cdf(2f64.exp()).unwrap(), 1.0);
    }

    #[test]
    fn lognormal_cdf_is_a_distribution_function() {
        let spec = LogNormalSpec::new(-0.3, 0.7).unwrap();
        let mut prev = 0.0;
        for i in 0..5000 {
            let x = i as f64 * 0.01;
            let c = spec.cdf(x).unwrap();
            assert!(c >= prev);
            prev = c;
        }
        assert!(spec.cdf(1e12).unwrap() > 1.0 - 1e-15);
    }

    #[test]
    fn requires_supercritical() {
        let p = ModelParams::reference();
        let err = LimitModel::new(p, Scaling::new(2.0, Rounding::Round).unwrap()).unwrap_err();
        assert!(matches!(err, MagError::RegimeViolation { .. }));
        let q: f64 = 0.3;
        let flat = ModelParams::new(q, q, q, 0.5).unwrap();
        assert!(LimitModel::new(flat, Scaling::new(-1.0 / q.ln(), Rounding::Round).unwrap()).is_err());
        assert!(kl_reconciled_law(1000, &Scaling::new(2.0, Rounding::Round).unwrap(), &p).is_err());
    }

    #[test]
    fn transform_exact_cancellation_and_unit_degree() {
        let pt = reference_model().at(1_000_000).unwrap();
        let scale = pt.degree_scale();
        assert!((pt.transform_degree(scale).unwrap() - 1.0).abs() < 1e-12);
        let want = (-(pt.growth_exponent) * pt.ln_n / (pt.l as f64).sqrt()).exp();
        assert!((pt.transform_degree(1.0).unwrap() / want - 1.0).abs() < 1e-12);
        assert_eq!(pt.transform_degree(0.0).unwrap(), 0.0);
        assert!(pt.transform_degree(-1.0).is_err());
    }

    #[test]
    fn x_n_defining_equation() {
        let pt = reference_model().at(10_000).unwrap();
        assert_eq!(pt.x_n_of_t(0.0).unwrap(), 0.0);
        assert!((pt.x_n_of_t(pt.degree_scale()).unwrap() - 1.0).abs() < 1e-12);
        let mut rng = stream(4, StreamTag::SelfTest, 0);
        let mut prev = 0.0;
        for i in 0..2000 {
            let t = i as f64 * 0.37 + rng.random::<f64>() * 0.3;
            let x = pt.x_n_of_t(t).unwrap();
            if i > 0 {
                assert!(x > prev);
            }
            prev = x;
            if t > 0.0 {
                let back = x.powf((pt.l as f64).sqrt()) * pt.degree_scale();
                assert!((back / t - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn cdf_approx_identities() {
        let m = reference_model();
        let pt = m.at(1_000_000).unwrap();
        assert!((pt.cdf_approx(pt.degree_scale()).unwrap() - 0.5).abs() < 1e-12);
        for t in [0.5, 3.0, 17.0, 400.0] {
            let direct = pt.cdf_approx(t).unwrap();
            let via = lognormal_cdf(pt.x_n_of_t(t).unwrap(), &m.limit_law()).unwrap();
            assert!((direct - via).abs() < 1e-15);
            let kl = pt.kl_reconciled_law().unwrap().cdf(t).unwrap();
            assert!((direct - kl).abs() < 1e-12, "t={t}");
        }
    }

    #[test]
    fn cdf_approx_near_exact_at_median() {
        let m = reference_model();
        let pt = m.at(1_000_000).unwrap();
        let t = DegreePmfTable::new(m.params(), pt.n, pt.l).unwrap();
        let mut acc = 0.0;
        let mut d = 0u64;
        loop {
            acc += t.pmf(d).unwrap();
            if acc >= 0.5 {
                break;
            }
            d += 1;
        }
        let approx = pt.cdf_approx(d as f64).unwrap();
        assert!((approx - acc).abs() < 0.05, "median {d}: exact {acc} approx {approx}");
    }

    #[test]
    fn pmf_approx_telescopes() {
        let pt = reference_model().at(100_000).unwrap();
        let mut acc = 0.0;
        for d in 1..=2000u64 {
            let v = pt.pmf_approx(d).unwrap();
            assert!(v >= 0.0);
            acc += v;
            if [1, 5, 50, 300, 2000].contains(&d) {
                assert!((acc - pt.cdf_approx(d as f64).unwrap()).abs() < 1e-12, "d={d}");
            }
        }
        assert!(pt.pmf_approx(0).is_err());
    }

    #[test]
    fn degenerate_sigma_rejected_by_distribution_ops() {
        let q: f64 = 0.6;
        let flat = ModelParams::new(q, q, q, 0.5).unwrap();
        // kappa = 1 + rho ln q > 0 for rho = 1
        let m = LimitModel::new(flat, Scaling::new(1.0, Rounding::Round).unwrap()).unwrap();
        let pt = m.at(1000).unwrap();
        assert_eq!(pt.cdf_approx(3.0), Err(MagError::DegenerateSigma));
        assert_eq!(pt.pmf_approx(3), Err(MagError::DegenerateSigma));
        // identity-based operations still run
        let kl = pt.kl_params().unwrap();
        assert_eq!(kl.sigma2_kl, 0.0);
        let want = (1000f64).ln() + pt.l as f64 * q.ln();
        assert!((kl.m_kl - want).abs() < 1e-12);
        let law = pt.kl_reconciled_law().unwrap();
        assert_eq!(law.sigma2, 0.0);
        assert!((law.m - pt.growth_exponent * pt.ln_n).abs() < 1e-12);
        assert!((law.m - (1.0 + pt.rho_n * q.ln()) * pt.ln_n).abs() < 1e-12);
    }

    #[test]
    fn lambda_probe_total_mass_and_checks() {
        let m = reference_model();
        let pt = m.at(10_000).unwrap();
        let s = sample_degrees_direct(m.params(), 10_000, pt.l, 2000, 3).unwrap();
        assert_eq!(pt.lambda_limit_probe(1e30, &s).unwrap(), 1.0);
        let wrong = sample_degrees_direct(m.params(), 10_000, pt.l + 1, 10, 3).unwrap();
        assert!(pt.lambda_limit_probe(1.0, &wrong).is_err());
    }

    #[test]
    fn lambda_probe_t1_near_half() {
        let m = reference_model();
        let pt = m.at(1_000_000).unwrap();
        let s = sample_degrees_direct(m.params(), pt.n, pt.l, 10_000, 2718).unwrap();
        let v = pt.lambda_limit_probe(1.0, &s).unwrap();
        assert!((v - 0.5).abs() < 0.05, "{v}");
    }

    #[test]
    fn kl_identities() {
        let mut rng = stream(77, StreamTag::SelfTest, 0);
        let mut checked = 0;
        while checked < 20 {
            let p = ModelParams::new(
                rng.random_range(0.05..0.95),
                rng.random_range(0.05..0.95),
                rng.random_range(0.05..0.95),
                rng.random_range(0.05..0.95),
            )
            .unwrap();
            let s = Scaling::new(rng.random_range(0.2..2.0), Rounding::Round).unwrap();
            let c = p.derive();
            if c.is_degenerate() {
                continue;
            }
            for n in [100u64, 1000, 10_000, 1_000_000] {
                let kl = kl_params(n, &s, &p).unwrap();
                let pt = s.at(n).unwrap();
                let ln_n = (n as f64).ln();
                let s2 = pt.rho_n * c.sigma2() * ln_n;
                assert!((kl.sigma2_kl / s2 - 1.0).abs() < 1e-12);
                let m = (1.0 + pt.rho_n * c.ln_geometric_gamma) * ln_n + 0.5 * c.sigma2() * pt.rho_n * ln_n;
                assert!((kl.m_kl - m).abs() <= 1e-10 * m.abs().max(1.0));
            }
            checked += 1;
        }
    }

    proptest! {
        #[test]
        fn transform_forms_agree(d in 1u64..10_000_000, n in 2u64..1_000_000_000, rho in 0.2f64..1.1) {
            let p = ModelParams::reference();
            if let Ok(m) = LimitModel::new(p, Scaling::new(rho, Rounding::Round).unwrap()) {
                let pt = m.at(n).unwrap();
                let a = pt.transform_degree(d as f64).unwrap();
                let b = pt.transform_degree_ratio_form(d as f64).unwrap();
                prop_assert!((a / b - 1.0).abs() < 1e-12);
                let back = pt.inverse_transform(a).unwrap();
                prop_assert!((back / d as f64 - 1.0).abs() < 1e-9);
            }
        }
    }
}
