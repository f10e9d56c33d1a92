//! Reproducible experiments: config parsing and hashing, the sup-Delta estimator,
//! and the report format shared by the CLI.

use std::io::{self, Write};
use std::path::PathBuf;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::bounds::{
    berry_esseen_bound, default_eta, optimize_bound, ratio_concentration_bound, BoundGrid, C_STAR_DEFAULT,
};
use crate::error::{MagError, Result};
use crate::limit::{lognormal_cdf, LimitModel, LogNormalSpec};
use crate::model::{ModelParams, Regime, RegimeClass, Rounding, Scaling};
use crate::pmf::DegreePmfTable;
use crate::rng::{child_seed, stream, StreamTag};
use crate::sampler::{sample_degrees_direct, sample_degrees_full, DegreeSampleSet, SampleMethod};
use crate::stats::{chi_square_gof, dkw_epsilon, ks_discrete, ks_statistic_sorted, ks_two_sample, total_variation};

/// Confidence level used for the DKW error proxy.
pub const DKW_ALPHA: f64 = 0.05;

/// Largest `n` for which experiments build a full exact pmf table over `0..n`.
pub const MAX_TABLE_N: u64 = 10_000_000;

/// Estimate of `sup_x |P(X_n <= x) - P(e^(sigma Z) <= x)|` from one sample set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SupDelta {
    /// `max(zero_fraction, ks_nonzero)`
    pub value: f64,
    /// KS distance between transformed nonzero draws and `lnN(0, sigma^2)`.
    pub ks_nonzero: f64,
    pub zero_fraction: f64,
    /// DKW half-width `sqrt(ln(2/alpha) / (2N))` at `alpha = 0.05`.
    pub proxy: f64,
    pub draws: usize,
    pub nonzero: usize,
}

/// KS distance of the transformed degrees from the log-normal limit. Zero draws
/// are left out of the KS part and their frequency enters as an atom.
pub fn empirical_sup_delta(samples: &DegreeSampleSet, scaling: &Scaling) -> Result<SupDelta> {
    let model = LimitModel::new(samples.params, *scaling)?;
    if model.consts().is_degenerate() {
        return Err(MagError::DegenerateSigma);
    }
    let point = model.at(samples.n)?;
    let (xs, zeros) = point.transformed_nonzero(samples)?;
    if xs.is_empty() {
        return Err(MagError::EmptySample("every draw has degree zero".into()));
    }
    let law = model.limit_law();
    let ks = ks_statistic_sorted(&xs, |x| lognormal_cdf(x, &law).expect("x >= 0"))?;
    Ok(finish_sup_delta(ks, zeros, samples.len()))
}

fn finish_sup_delta(ks: f64, zeros: usize, draws: usize) -> SupDelta {
    let zero_fraction = zeros as f64 / draws as f64;
    SupDelta {
        value: ks.max(zero_fraction),
        ks_nonzero: ks,
        zero_fraction,
        proxy: dkw_epsilon(draws, DKW_ALPHA),
        draws,
        nonzero: draws - zeros,
    }
}

/// The estimator applied to exact `e^(sigma Z)` draws, for calibrating its null behaviour.
pub fn lognormal_self_test(sigma: f64, count: usize, seed: u64) -> Result<SupDelta> {
    if sigma == 0.0 || !sigma.is_finite() {
        return Err(MagError::DegenerateSigma);
    }
    if count == 0 {
        return Err(MagError::EmptySample("self-test needs at least one draw".into()));
    }
    let z = Normal::standard();
    let mut rng = stream(seed, StreamTag::SelfTest, 0);
    let mut xs: Vec<f64> = (0..count)
        .map(|_| {
            // open interval keeps the quantile finite
            let u = (rng.random::<u64>() >> 11) as f64 * (1.0 / (1u64 << 53) as f64) + 0.5 / (1u64 << 53) as f64;
            (sigma * z.inverse_cdf(u)).exp()
        })
        .collect();
    xs.sort_by(f64::total_cmp);
    let law = LogNormalSpec::new(0.0, sigma * sigma)?;
    let ks = ks_statistic_sorted(&xs, |x| lognormal_cdf(x, &law).expect("x > 0"))?;
    Ok(finish_sup_delta(ks, 0, count))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExperimentKind {
    #[serde(rename = "degree_fit")]
    DegreeFit,
    #[serde(rename = "lognormal_ks")]
    LogNormalKs,
    #[serde(rename = "zero_one_law")]
    ZeroOneLaw,
    #[serde(rename = "lambda_probe")]
    LambdaProbe,
    #[serde(rename = "bound_check")]
    BoundCheck,
    #[serde(rename = "kl_reconcile")]
    KlReconcile,
}

fn default_scaling() -> Scaling {
    Scaling::new(1.0, Rounding::Round).expect("valid")
}

fn default_t_values() -> Vec<f64> {
    vec![0.1, 1.0, 10.0]
}

fn default_c_star() -> f64 {
    C_STAR_DEFAULT
}

fn default_delta() -> f64 {
    0.5
}

/// One experiment, read from TOML. The schema is described in the README and `configs/`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: u64,
    /// Draws per grid point.
    pub draws: usize,
    pub n_grid: Vec<u64>,
    #[serde(default = "ModelParams::reference")]
    pub params: ModelParams,
    #[serde(default = "default_scaling")]
    pub scaling: Scaling,
    /// Fixed attribute count; overrides `L_n` for `degree_fit` and the ratio part of `bound_check`.
    #[serde(default)]
    pub l: Option<u32>,
    #[serde(default = "default_t_values")]
    pub t_values: Vec<f64>,
    #[serde(default = "default_c_star")]
    pub c_star: f64,
    /// Also sample full graphs in `degree_fit`.
    #[serde(default)]
    pub full_graph: bool,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub eta: Option<f64>,
    /// Where the CLI writes the report; not part of the hash.
    #[serde(default, skip_serializing)]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(s).map_err(|e| MagError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| MagError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(MagError::Config(m));
        if self.draws < 100 {
            return bad(format!("draws must be at least 100, got {}", self.draws));
        }
        if self.n_grid.is_empty() {
            return bad("n_grid is empty".into());
        }
        if self.n_grid[0] < 2 {
            return bad(format!("n_grid values must be at least 2, got {}", self.n_grid[0]));
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return bad("n_grid must be strictly increasing".into());
        }
        if self.l == Some(0) {
            return bad("l must be at least 1".into());
        }
        if self.t_values.is_empty() || self.t_values.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return bad("t_values must be a nonempty list of positive numbers".into());
        }
        if !(self.c_star > 0.0 && self.c_star.is_finite()) {
            return bad(format!("c_star must be positive, got {}", self.c_star));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        if let Some(eta) = self.eta {
            if !(eta > 0.0 && eta < self.params.mu1()) {
                return bad(format!("eta must lie in (0, mu1), got {eta}"));
            }
        }
        Ok(())
    }

    /// Compact JSON with sorted keys and every default filled in.
    pub fn canonical_json(&self) -> String {
        let v = serde_json::to_value(self).expect("config serializes");
        serde_json::to_string(&v).expect("value serializes")
    }

    /// Hex SHA-256 of [`Self::canonical_json`].
    pub fn config_hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    fn eta_or_default(&self) -> f64 {
        self.eta.unwrap_or_else(|| default_eta(&self.params))
    }

    fn cell_seed(&self, cell: u64) -> u64 {
        child_seed(self.seed, StreamTag::Experiment, cell)
    }
}

/// How a reported number should be read.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "accuracy", rename_all = "snake_case")]
pub enum Accuracy {
    /// Deterministic evaluation, no sampling error.
    Exact,
    /// Monte Carlo estimate with its standard error (or DKW proxy for KS distances).
    MonteCarlo { stderr: f64 },
    /// Output of a hypothesis test on sampled data.
    TestOutput,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Stat {
    pub name: String,
    pub value: f64,
    #[serde(flatten)]
    pub accuracy: Accuracy,
}

impl Stat {
    pub fn exact(name: &str, value: f64) -> Self {
        Stat { name: name.into(), value, accuracy: Accuracy::Exact }
    }

    pub fn mc(name: &str, value: f64, stderr: f64) -> Self {
        Stat { name: name.into(), value, accuracy: Accuracy::MonteCarlo { stderr } }
    }

    pub fn test(name: &str, value: f64) -> Self {
        Stat { name: name.into(), value, accuracy: Accuracy::TestOutput }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub n: u64,
    pub l: u32,
    pub rho_n: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    /// Sampling method and seed when the row consumed randomness.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<SampleMethod>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub stats: Vec<Stat>,
}

impl ReportRow {
    pub fn stat(&self, name: &str) -> Option<f64> {
        self.stats.iter().find(|s| s.name == name).map(|s| s.value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub kind: ExperimentKind,
    pub config_hash: String,
    pub seed: u64,
    pub draws: usize,
    pub params: ModelParams,
    pub scaling: Scaling,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub provenance: Provenance,
    pub regime: Regime,
    pub rows: Vec<ReportRow>,
    pub checks: Vec<Check>,
    pub passed: bool,
}

impl ExperimentReport {
    /// Pretty JSON followed by a newline; identical configs give identical bytes.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn write_json<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(self.to_json().as_bytes())
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let regime = cfg.scaling.regime(&cfg.params);
    let (rows, checks) = match cfg.kind {
        ExperimentKind::DegreeFit => degree_fit(cfg)?,
        ExperimentKind::LogNormalKs => lognormal_ks(cfg)?,
        ExperimentKind::ZeroOneLaw => zero_one_law(cfg, regime)?,
        ExperimentKind::LambdaProbe => lambda_probe(cfg)?,
        ExperimentKind::BoundCheck => bound_check(cfg)?,
        ExperimentKind::KlReconcile => kl_reconcile(cfg)?,
    };
    let passed = checks.iter().all(|c| c.passed);
    Ok(ExperimentReport {
        provenance: Provenance {
            kind: cfg.kind,
            config_hash: cfg.config_hash(),
            seed: cfg.seed,
            draws: cfg.draws,
            params: cfg.params,
            scaling: cfg.scaling,
            version: env!("CARGO_PKG_VERSION").to_string(),
        },
        regime,
        rows,
        checks,
        passed,
    })
}

type Outcome = Result<(Vec<ReportRow>, Vec<Check>)>;

fn check(name: String, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

fn binomial_se(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

/// `1/2 sum sqrt(p (1-p) / N)`: the scale of the TV distance under exact sampling.
fn tv_noise(pmf: &[f64], n: usize) -> f64 {
    0.5 * pmf.iter().map(|&p| binomial_se(p, n)).sum::<f64>()
}

fn supercritical_model(cfg: &ExperimentConfig) -> Result<LimitModel> {
    let model = LimitModel::new(cfg.params, cfg.scaling)?;
    if model.consts().is_degenerate() {
        return Err(MagError::DegenerateSigma);
    }
    Ok(model)
}

fn degree_fit(cfg: &ExperimentConfig) -> Outcome {
    let mut rows = Vec::new();
    let mut checks = Vec::new();
    for (i, &n) in cfg.n_grid.iter().enumerate() {
        if n > MAX_TABLE_N {
            return Err(MagError::Config(format!("degree_fit needs n <= {MAX_TABLE_N}, got {n}")));
        }
        let sp = cfg.scaling.at(n)?;
        let l = cfg.l.unwrap_or(sp.l);
        let rho_n = l as f64 / (n as f64).ln();
        let table = DegreePmfTable::new(&cfg.params, n, l)?;
        let pmf = table.pmf_table(n - 1)?;
        let cdf: Vec<f64> = pmf
            .iter()
            .scan(0.0, |acc, p| {
                *acc += p;
                Some(*acc)
            })
            .collect();

        let seed = cfg.cell_seed(2 * i as u64);
        let direct = sample_degrees_direct(&cfg.params, n, l, cfg.draws, seed)?;
        let tv = total_variation(&direct.degrees, &pmf)?;
        let noise = tv_noise(&pmf, cfg.draws);
        let ks = ks_discrete(&direct.degrees, &cdf)?;
        let chi = chi_square_gof(&direct.degrees, &pmf)?;
        rows.push(ReportRow {
            n,
            l,
            rho_n,
            t: None,
            method: Some(SampleMethod::DirectCompound),
            seed: Some(seed),
            stats: vec![
                Stat::exact("prob_zero", table.prob_zero()),
                Stat::mc("tv", tv, noise),
                Stat::mc("ks", ks, dkw_epsilon(cfg.draws, DKW_ALPHA)),
                Stat::test("chi_square_p", chi.p_value),
            ],
        });
        checks.push(check(format!("tv_direct_below_0.01[n={n}]"), tv < 0.01, format!("tv = {tv:.6}")));

        if cfg.full_graph {
            let seed = cfg.cell_seed(2 * i as u64 + 1);
            let full = sample_degrees_full(&cfg.params, n, l, cfg.draws, seed)?;
            let tv_full = total_variation(&full.degrees, &pmf)?;
            let two = ks_two_sample(&full.degrees, &direct.degrees)?;
            rows.push(ReportRow {
                n,
                l,
                rho_n,
                t: None,
                method: Some(SampleMethod::FullGraph),
                seed: Some(seed),
                stats: vec![
                    Stat::mc("tv", tv_full, noise),
                    Stat::mc("ks", ks_discrete(&full.degrees, &cdf)?, dkw_epsilon(cfg.draws, DKW_ALPHA)),
                    Stat::test("two_sample_ks", two.statistic),
                    Stat::test("two_sample_ks_p", two.p_value),
                ],
            });
            checks.push(check(format!("tv_full_below_0.02[n={n}]"), tv_full < 0.02, format!("tv = {tv_full:.6}")));
            checks.push(check(
                format!("two_sample_ks_p_above_0.001[n={n}]"),
                two.p_value > 0.001,
                format!("D = {:.6}, p = {:.6}", two.statistic, two.p_value),
            ));
        }
    }
    Ok((rows, checks))
}

/// `1/2 sum_{d=1}^{d*} |pmf_approx(d) - pmf(d)|`, `d*` the exact 99.9% quantile.
fn approx_pmf_tv(point: &crate::limit::LimitPoint, table: &DegreePmfTable) -> Result<f64> {
    let pmf = table.pmf_table_truncated(1e-16);
    let mut acc = 0.0;
    let mut tv = 0.0;
    for (d, &p) in pmf.iter().enumerate() {
        acc += p;
        if d >= 1 {
            tv += (point.pmf_approx(d as u64)? - p).abs();
        }
        if acc >= 0.999 {
            break;
        }
    }
    Ok(0.5 * tv)
}

fn lognormal_ks(cfg: &ExperimentConfig) -> Outcome {
    let model = supercritical_model(cfg)?;
    let mut rows = Vec::new();
    let mut deltas = Vec::new();
    for (i, &n) in cfg.n_grid.iter().enumerate() {
        let point = model.at(n)?;
        let seed = cfg.cell_seed(i as u64);
        let samples = sample_degrees_direct(&cfg.params, n, point.l, cfg.draws, seed)?;
        let sd = empirical_sup_delta(&samples, &cfg.scaling)?;
        let table = DegreePmfTable::new(&cfg.params, n, point.l)?;
        rows.push(ReportRow {
            n,
            l: point.l,
            rho_n: point.rho_n,
            t: None,
            method: Some(SampleMethod::DirectCompound),
            seed: Some(seed),
            stats: vec![
                Stat::mc("sup_delta", sd.value, sd.proxy),
                Stat::mc("ks_nonzero", sd.ks_nonzero, dkw_epsilon(sd.nonzero.max(1), DKW_ALPHA)),
                Stat::mc("zero_fraction", sd.zero_fraction, binomial_se(sd.zero_fraction, sd.draws)),
                Stat::exact("prob_zero", table.prob_zero()),
                Stat::exact("approx_pmf_tv", approx_pmf_tv(&point, &table)?),
            ],
        });
        deltas.push((n, sd));
    }
    let mut checks = Vec::new();
    let violations: Vec<String> = deltas
        .windows(2)
        .filter(|w| w[1].1.value > w[0].1.value + 2.0 * w[0].1.proxy.max(w[1].1.proxy))
        .map(|w| format!("{:.4} at n={} -> {:.4} at n={}", w[0].1.value, w[0].0, w[1].1.value, w[1].0))
        .collect();
    checks.push(check(
        "sup_delta_nonincreasing_within_2_proxies".into(),
        violations.is_empty(),
        if violations.is_empty() { "no increase beyond tolerance".into() } else { violations.join("; ") },
    ));
    let (n_last, last) = deltas.last().expect("nonempty grid");
    checks.push(check(
        format!("sup_delta_below_0.1[n={n_last}]"),
        last.value < 0.1,
        format!("sup_delta = {:.6}", last.value),
    ));
    Ok((rows, checks))
}

fn zero_one_law(cfg: &ExperimentConfig, regime: Regime) -> Outcome {
    let mut rows = Vec::new();
    let mut values = Vec::new();
    for &n in &cfg.n_grid {
        let sp = cfg.scaling.at(n)?;
        let p0 = DegreePmfTable::new(&cfg.params, n, sp.l)?.prob_zero();
        rows.push(ReportRow {
            n,
            l: sp.l,
            rho_n: sp.rho_n,
            t: None,
            method: None,
            seed: None,
            stats: vec![Stat::exact("prob_zero", p0)],
        });
        values.push(p0);
    }
    let last = *values.last().expect("nonempty grid");
    let listing = values.iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>().join(", ");
    let mut checks = Vec::new();
    match regime.class {
        RegimeClass::Subcritical => {
            checks.push(check("prob_zero_strictly_increasing".into(), values.windows(2).all(|w| w[1] > w[0]), listing));
            checks.push(check("prob_zero_final_above_0.9".into(), last > 0.9, format!("{last:.6}")));
        }
        RegimeClass::Supercritical => {
            checks.push(check("prob_zero_strictly_decreasing".into(), values.windows(2).all(|w| w[1] < w[0]), listing));
            checks.push(check("prob_zero_final_below_0.1".into(), last < 0.1, format!("{last:.6}")));
        }
        RegimeClass::Boundary => {}
    }
    Ok((rows, checks))
}

fn lambda_probe(cfg: &ExperimentConfig) -> Outcome {
    let model = supercritical_model(cfg)?;
    let mut rows = Vec::new();
    let mut checks = Vec::new();
    let last = cfg.n_grid.len() - 1;
    for (i, &n) in cfg.n_grid.iter().enumerate() {
        let point = model.at(n)?;
        let seed = cfg.cell_seed(i as u64);
        let samples = sample_degrees_direct(&cfg.params, n, point.l, cfg.draws, seed)?;
        for &t in &cfg.t_values {
            let p = point.lambda_limit_probe(t, &samples)?;
            rows.push(ReportRow {
                n,
                l: point.l,
                rho_n: point.rho_n,
                t: Some(t),
                method: Some(SampleMethod::DirectCompound),
                seed: Some(seed),
                stats: vec![Stat::mc("prob_ratio_le_t", p, binomial_se(p, cfg.draws))],
            });
            if i == last {
                checks.push(check(
                    format!("within_0.07_of_half[n={n},t={t}]"),
                    (p - 0.5).abs() <= 0.07,
                    format!("P = {p:.6}"),
                ));
            }
        }
    }
    Ok((rows, checks))
}

fn bound_check(cfg: &ExperimentConfig) -> Outcome {
    let model = supercritical_model(cfg)?;
    let grid = BoundGrid::default();
    let eta = cfg.eta_or_default();
    let mut rows = Vec::new();
    let mut checks = Vec::new();
    let mut totals = Vec::new();
    let mut vacuous = 0usize;
    for (i, &n) in cfg.n_grid.iter().enumerate() {
        let point = model.at(n)?;
        let cert = optimize_bound(n, &cfg.scaling, &cfg.params, cfg.c_star, &grid)?;
        let probe = berry_esseen_bound(n, &cfg.scaling, &cfg.params, cfg.delta, eta, cfg.c_star)?;
        let seed = cfg.cell_seed(2 * i as u64);
        let samples = sample_degrees_direct(&cfg.params, n, point.l, cfg.draws, seed)?;
        let sd = empirical_sup_delta(&samples, &cfg.scaling)?;
        rows.push(ReportRow {
            n,
            l: point.l,
            rho_n: point.rho_n,
            t: None,
            method: Some(SampleMethod::DirectCompound),
            seed: Some(seed),
            stats: vec![
                Stat::exact("delta", cert.delta),
                Stat::exact("eta", cert.eta),
                Stat::exact("term_clt", cert.term_clt),
                Stat::exact("term_be", cert.term_be),
                Stat::exact("term_hoeffding", cert.term_hoeffding),
                Stat::exact("term_chernoff", cert.term_chernoff),
                Stat::exact("total", cert.total),
                Stat::exact("total_sqrt_ln_n", cert.total * (n as f64).ln().sqrt()),
                Stat::exact("probe_total", probe.total),
                Stat::mc("sup_delta", sd.value, sd.proxy),
            ],
        });
        totals.push((n, cert.total));
        if cert.is_vacuous() {
            vacuous += 1;
        } else {
            let lhs = sd.value + 3.0 * sd.proxy;
            checks.push(check(
                format!("certificate_dominates_sup_delta[n={n}]"),
                lhs <= cert.total,
                format!("sup_delta + 3 proxy = {lhs:.6}, total = {:.6}", cert.total),
            ));
        }

        // ratio concentration at (n, l)
        let l = cfg.l.unwrap_or(point.l);
        let seed = cfg.cell_seed(2 * i as u64 + 1);
        let rs = sample_degrees_direct(&cfg.params, n, l, cfg.draws, seed)?;
        let exceed = (0..rs.len())
            .filter(|&k| (rs.degrees[k] as f64 / rs.conditional_mean(k) - 1.0).abs() > cfg.delta)
            .count() as f64
            / rs.len() as f64;
        let bound = ratio_concentration_bound(n, l, &cfg.params, cfg.delta, eta)?;
        rows.push(ReportRow {
            n,
            l,
            rho_n: l as f64 / (n as f64).ln(),
            t: None,
            method: Some(SampleMethod::DirectCompound),
            seed: Some(seed),
            stats: vec![
                Stat::mc("ratio_exceedance", exceed, binomial_se(exceed, rs.len())),
                Stat::exact("ratio_bound", bound),
            ],
        });
        checks.push(check(
            format!("ratio_exceedance_within_bound[n={n},l={l}]"),
            exceed <= bound,
            format!("exceedance = {exceed:.6}, bound = {bound:.6}"),
        ));
    }
    if vacuous > 0 {
        checks.push(check(
            "vacuous_certificates".into(),
            true,
            format!("{vacuous} of {} certificates have total >= 1 and assert nothing", totals.len()),
        ));
    }
    if totals.len() >= 2 {
        let (n0, t0) = totals[0];
        let (n1, t1) = *totals.last().expect("nonempty");
        checks.push(check(format!("total_decreases[n={n0}->{n1}]"), t1 < t0, format!("{t0:.6} -> {t1:.6}")));
    }
    Ok((rows, checks))
}

fn rel_residual(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        a.abs()
    } else {
        ((a - b) / b).abs()
    }
}

fn kl_reconcile(cfg: &ExperimentConfig) -> Outcome {
    let model = supercritical_model(cfg)?;
    let sigma2 = model.consts().sigma2();
    let mut rows = Vec::new();
    let mut worst = [0.0f64; 3];
    for &n in &cfg.n_grid {
        let point = model.at(n)?;
        let kl = point.kl_params()?;
        let target_s2 = point.rho_n * sigma2 * point.ln_n;
        let target_m = point.growth_exponent * point.ln_n + 0.5 * sigma2 * point.rho_n * point.ln_n;
        let law = point.kl_reconciled_law()?;
        let centred = point.centred_law();
        let r = [
            rel_residual(kl.sigma2_kl, target_s2),
            rel_residual(kl.m_kl, target_m),
            rel_residual(law.m, centred.m).max(rel_residual(law.sigma2, centred.sigma2)),
        ];
        for k in 0..3 {
            worst[k] = worst[k].max(r[k]);
        }
        rows.push(ReportRow {
            n,
            l: point.l,
            rho_n: point.rho_n,
            t: None,
            method: None,
            seed: None,
            stats: vec![
                Stat::exact("m_kl", kl.m_kl),
                Stat::exact("sigma2_kl", kl.sigma2_kl),
                Stat::exact("sigma2_residual", r[0]),
                Stat::exact("m_residual", r[1]),
                Stat::exact("law_residual", r[2]),
            ],
        });
    }
    let checks = vec![
        check("sigma2_identity_1e-12".into(), worst[0] <= 1e-12, format!("max residual {:.3e}", worst[0])),
        check("m_identity_1e-10".into(), worst[1] <= 1e-10, format!("max residual {:.3e}", worst[1])),
        check("reconciled_law_1e-10".into(), worst[2] <= 1e-10, format!("max residual {:.3e}", worst[2])),
    ];
    Ok((rows, checks))
}
