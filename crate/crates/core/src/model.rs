//! Model parameters, derived constants, admissible scalings and regimes.

use serde::{Deserialize, Serialize};

use crate::error::{MagError, Result};

/// Half-width of the band around `kappa = 0` that is classified as [`Regime::Boundary`].
pub const BOUNDARY_TOLERANCE: f64 = 1e-12;

/// Affinity matrix entries and attribute law of a homogeneous binary MAG.
///
/// `q(0,1)` is not stored: the matrix is symmetric by construction, so
/// `q10` serves both off-diagonal entries. `mu0` is derived as `1 - mu1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct ModelParams {
    q11: f64,
    q10: f64,
    q00: f64,
    mu1: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParams {
    q11: f64,
    q10: f64,
    q00: f64,
    mu1: f64,
}

impl TryFrom<RawParams> for ModelParams {
    type Error = MagError;
    fn try_from(r: RawParams) -> Result<Self> {
        ModelParams::new(r.q11, r.q10, r.q00, r.mu1)
    }
}

impl From<ModelParams> for RawParams {
    fn from(p: ModelParams) -> Self {
        RawParams { q11: p.q11, q10: p.q10, q00: p.q00, mu1: p.mu1 }
    }
}

fn open_unit(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(MagError::param(format!("{name} must lie in (0, 1), got {v}")))
    }
}

impl ModelParams {
    pub fn new(q11: f64, q10: f64, q00: f64, mu1: f64) -> Result<Self> {
        open_unit("q11", q11)?;
        open_unit("q10", q10)?;
        open_unit("q00", q00)?;
        open_unit("mu1", mu1)?;
        Ok(ModelParams { q11, q10, q00, mu1 })
    }

    /// `q11=0.7, q10=0.2, q00=0.5, mu1=0.6`: supercritical at `rho = 1`, with
    /// `gamma1 = 0.50` and `gamma0 = 0.32`.
    pub fn reference() -> Self {
        ModelParams { q11: 0.7, q10: 0.2, q00: 0.5, mu1: 0.6 }
    }

    pub fn q11(&self) -> f64 {
        self.q11
    }
    pub fn q10(&self) -> f64 {
        self.q10
    }
    pub fn q01(&self) -> f64 {
        self.q10
    }
    pub fn q00(&self) -> f64 {
        self.q00
    }
    pub fn mu1(&self) -> f64 {
        self.mu1
    }
    pub fn mu0(&self) -> f64 {
        1.0 - self.mu1
    }

    /// `q(a, b)` for attribute values `a, b` in `{0, 1}`.
    pub fn q(&self, a: bool, b: bool) -> f64 {
        match (a, b) {
            (true, true) => self.q11,
            (false, false) => self.q00,
            _ => self.q10,
        }
    }

    pub fn derive(&self) -> DerivedConstants {
        derive_constants(self)
    }
}

/// Constants every downstream computation is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivedConstants {
    /// `E[q(0, A)] = q10 mu1 + q00 mu0`
    pub gamma0: f64,
    /// `E[q(1, A)] = q11 mu1 + q10 mu0`
    pub gamma1: f64,
    pub ln_gamma0: f64,
    pub ln_gamma1: f64,
    /// `sqrt(mu0 mu1)`
    pub sigma0: f64,
    /// `sigma0 ln(gamma1 / gamma0)`; signed.
    pub sigma: f64,
    /// `gamma1 / gamma0`
    pub r: f64,
    /// `gamma0 / gamma1`
    pub r_kl: f64,
    /// `mu1 ln gamma1 + mu0 ln gamma0 = ln(gamma1^mu1 gamma0^mu0)`
    pub ln_geometric_gamma: f64,
}

impl DerivedConstants {
    pub fn sigma2(&self) -> f64 {
        self.sigma * self.sigma
    }

    /// `gamma0 == gamma1`, in which case the limit law is degenerate.
    pub fn is_degenerate(&self) -> bool {
        self.sigma == 0.0
    }
}

pub fn derive_constants(params: &ModelParams) -> DerivedConstants {
    let (mu1, mu0) = (params.mu1, params.mu0());
    let gamma1 = params.q11 * mu1 + params.q10 * mu0;
    let gamma0 = params.q10 * mu1 + params.q00 * mu0;
    let (ln_gamma1, ln_gamma0) = (gamma1.ln(), gamma0.ln());
    let sigma0 = (mu0 * mu1).sqrt();
    let ln_r = ln_gamma1 - ln_gamma0;
    DerivedConstants {
        gamma0,
        gamma1,
        ln_gamma0,
        ln_gamma1,
        sigma0,
        sigma: if gamma0 == gamma1 { 0.0 } else { sigma0 * ln_r },
        r: gamma1 / gamma0,
        r_kl: gamma0 / gamma1,
        ln_geometric_gamma: mu1 * ln_gamma1 + mu0 * ln_gamma0,
    }
}

/// Sign class of `kappa = 1 + rho ln(gamma1^mu1 gamma0^mu0)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegimeClass {
    Subcritical,
    Supercritical,
    Boundary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Regime {
    pub class: RegimeClass,
    pub kappa: f64,
}

impl Regime {
    pub fn is_supercritical(&self) -> bool {
        self.class == RegimeClass::Supercritical
    }

    /// `Ok(())` for supercritical regimes, a typed violation otherwise.
    pub fn require_supercritical(&self) -> Result<()> {
        if self.is_supercritical() {
            Ok(())
        } else {
            Err(MagError::RegimeViolation { regime: *self, kappa: self.kappa })
        }
    }
}

pub fn classify_regime(params: &ModelParams, rho: f64) -> Result<Regime> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(MagError::param(format!("rho must be positive and finite, got {rho}")));
    }
    let kappa = 1.0 + rho * params.derive().ln_geometric_gamma;
    let class = if kappa > BOUNDARY_TOLERANCE {
        RegimeClass::Supercritical
    } else if kappa < -BOUNDARY_TOLERANCE {
        RegimeClass::Subcritical
    } else {
        RegimeClass::Boundary
    };
    Ok(Regime { class, kappa })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rounding {
    #[default]
    Round,
    Ceil,
    Floor,
}

/// A rho-admissible scaling `n -> L_n` with `|L_n - rho ln n| <= 1` and `L_n >= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawScaling", into = "RawScaling")]
pub struct Scaling {
    rho: f64,
    rounding: Rounding,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScaling {
    rho: f64,
    #[serde(default)]
    rounding: Rounding,
}

impl TryFrom<RawScaling> for Scaling {
    type Error = MagError;
    fn try_from(r: RawScaling) -> Result<Self> {
        Scaling::new(r.rho, r.rounding)
    }
}

impl From<Scaling> for RawScaling {
    fn from(s: Scaling) -> Self {
        RawScaling { rho: s.rho, rounding: s.rounding }
    }
}

/// `L_n` together with `rho_n = L_n / ln n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingPoint {
    pub n: u64,
    pub l: u32,
    pub rho_n: f64,
}

impl Scaling {
    pub fn new(rho: f64, rounding: Rounding) -> Result<Self> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(MagError::param(format!("rho must be positive and finite, got {rho}")));
        }
        Ok(Scaling { rho, rounding })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn rounding(&self) -> Rounding {
        self.rounding
    }

    pub fn at(&self, n: u64) -> Result<ScalingPoint> {
        scaling_at(self, n)
    }

    pub fn l_at(&self, n: u64) -> Result<u32> {
        Ok(self.at(n)?.l)
    }

    pub fn regime(&self, params: &ModelParams) -> Regime {
        classify_regime(params, self.rho).expect("rho validated at construction")
    }
}

pub fn scaling_at(scaling: &Scaling, n: u64) -> Result<ScalingPoint> {
    if n < 2 {
        return Err(MagError::range(format!("n must be at least 2, got {n}")));
    }
    let ln_n = (n as f64).ln();
    let target = scaling.rho * ln_n;
    let raw = match scaling.rounding {
        Rounding::Round => target.round(),
        Rounding::Ceil => target.ceil(),
        Rounding::Floor => target.floor(),
    };
    if raw > u32::MAX as f64 {
        return Err(MagError::range(format!("L_n = {raw} does not fit in 32 bits")));
    }
    let l = (raw as u32).max(1);
    Ok(ScalingPoint { n, l, rho_n: l as f64 / ln_n })
}
