use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use magnet_core::bounds::BoundGrid;
use magnet_core::pmf::fmt17;
use magnet_core::sampler::{sample_graph_with_budget, with_threads, DEFAULT_PAIR_BUDGET};
use magnet_core::{
    berry_esseen_bound, optimize_bound, run_experiment, sample_degrees_direct, sample_degrees_full, BoundCertificate,
    DegreePmfTable, ExperimentConfig, LimitModel, MagError, ModelParams, Rounding, Scaling, C_STAR_DEFAULT,
};

#[derive(Parser)]
#[command(name = "magnet", version, about = "Homogeneous binary multiplicative attribute graphs")]
struct Cli {
    /// Worker threads (0 = all cores). Never changes output.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample one graph and write its edge list
    Generate(GenerateArgs),
    /// Sample marginal degrees and write `draw,degree,ones` CSV
    Degrees(DegreesArgs),
    /// Exact degree pmf and cdf as `d,pmf,cdf` CSV
    Pmf(PmfArgs),
    /// Derived constants and regime as JSON
    Regime(RegimeArgs),
    /// Exact cdf against the log-normal approximation as CSV
    Approx(ApproxArgs),
    /// Berry-Esseen certificates as CSV or JSON
    Bound(BoundArgs),
    /// Run an experiment described by a TOML config
    Experiment(ExperimentArgs),
}

#[derive(Args, Clone, Copy)]
struct ModelArgs {
    #[arg(long, default_value_t = 0.7)]
    q11: f64,
    #[arg(long, default_value_t = 0.2)]
    q10: f64,
    #[arg(long, default_value_t = 0.5)]
    q00: f64,
    #[arg(long, default_value_t = 0.6)]
    mu1: f64,
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    #[arg(long, value_enum, default_value_t = RoundingArg::Round)]
    rounding: RoundingArg,
}

#[derive(ValueEnum, Clone, Copy)]
enum RoundingArg {
    Round,
    Ceil,
    Floor,
}

impl ModelArgs {
    fn params(&self) -> Result<ModelParams> {
        Ok(ModelParams::new(self.q11, self.q10, self.q00, self.mu1)?)
    }

    fn scaling(&self) -> Result<Scaling> {
        let r = match self.rounding {
            RoundingArg::Round => Rounding::Round,
            RoundingArg::Ceil => Rounding::Ceil,
            RoundingArg::Floor => Rounding::Floor,
        };
        Ok(Scaling::new(self.rho, r)?)
    }

    /// `l` if given, otherwise `L_n` of the scaling.
    fn l_for(&self, n: u64, l: Option<u32>) -> Result<u32> {
        match l {
            Some(0) => Err(MagError::OutOfRange("l must be at least 1".into()).into()),
            Some(l) => Ok(l),
            None => Ok(self.scaling()?.l_at(n)?),
        }
    }
}

#[derive(Args)]
struct OutArgs {
    /// Output file (default: stdout)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    output: OutArgs,
    #[arg(long)]
    n: u64,
    /// Attribute count (default: L_n from --rho)
    #[arg(long)]
    l: Option<u32>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the attribute matrix, one 0/1 line per node
    #[arg(long)]
    attributes: Option<PathBuf>,
    /// Maximum number of node pairs
    #[arg(long, default_value_t = DEFAULT_PAIR_BUDGET)]
    pair_budget: u128,
}

#[derive(ValueEnum, Clone, Copy)]
enum MethodArg {
    Direct,
    Full,
}

#[derive(Args)]
struct DegreesArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    output: OutArgs,
    #[arg(long)]
    n: u64,
    #[arg(long)]
    l: Option<u32>,
    #[arg(long, default_value_t = 10_000)]
    count: usize,
    #[arg(long, value_enum, default_value_t = MethodArg::Direct)]
    method: MethodArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct PmfArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    output: OutArgs,
    #[arg(long)]
    n: u64,
    #[arg(long)]
    l: Option<u32>,
    /// Last degree to tabulate (default: n - 1, or the truncation point with --tail-tol)
    #[arg(long)]
    d_max: Option<u64>,
    /// Stop once every mixture component has binomial tail mass below this
    #[arg(long)]
    tail_tol: Option<f64>,
}

#[derive(Args)]
struct RegimeArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    output: OutArgs,
    /// Also report L_n and rho_n at these n
    #[arg(long, value_delimiter = ',')]
    n: Vec<u64>,
}

#[derive(Args)]
struct ApproxArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    output: OutArgs,
    #[arg(long, value_delimiter = ',', required = true)]
    n: Vec<u64>,
    /// Evaluation points (default: 0.1, 0.5, 1, 2, 10 times n^(1 + rho_n ln gamma))
    #[arg(long, value_delimiter = ',')]
    t: Vec<f64>,
}

#[derive(ValueEnum, Clone, Copy)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Args)]
struct BoundArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    output: OutArgs,
    #[arg(long, value_delimiter = ',', required = true)]
    n: Vec<u64>,
    /// Fixed delta; with --eta, skips the optimizer
    #[arg(long, requires = "eta")]
    delta: Option<f64>,
    #[arg(long, requires = "delta")]
    eta: Option<f64>,
    #[arg(long, default_value_t = C_STAR_DEFAULT)]
    c_star: f64,
    /// Grid points per axis for the optimizer
    #[arg(long, default_value_t = 200)]
    grid: usize,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
}

#[derive(Args)]
struct ExperimentArgs {
    config: PathBuf,
    /// Overrides the config's output path
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config's seed
    #[arg(long)]
    seed: Option<u64>,
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn params_header(p: &ModelParams, extra: &str) -> String {
    format!("q11={} q10={} q00={} mu1={} {extra}", p.q11(), p.q10(), p.q00(), p.mu1())
}

fn generate(a: &GenerateArgs) -> Result<()> {
    let params = a.model.params()?;
    let l = a.model.l_for(a.n, a.l)?;
    let g = sample_graph_with_budget(&params, a.n, l as u64, a.seed, a.pair_budget)?;
    let header = vec![params_header(&params, &format!("n={} l={l}", a.n)), format!("seed={}", a.seed)];
    let mut w = open_out(a.output.out.as_deref())?;
    g.write_edge_list(&mut w, &header)?;
    w.flush()?;
    if let Some(p) = &a.attributes {
        let mut w = open_out(Some(p))?;
        g.write_attributes(&mut w)?;
        w.flush()?;
    }
    Ok(())
}

fn degrees(a: &DegreesArgs) -> Result<()> {
    let params = a.model.params()?;
    let l = a.model.l_for(a.n, a.l)?;
    let set = match a.method {
        MethodArg::Direct => sample_degrees_direct(&params, a.n, l, a.count, a.seed)?,
        MethodArg::Full => sample_degrees_full(&params, a.n, l, a.count, a.seed)?,
    };
    let mut w = open_out(a.output.out.as_deref())?;
    set.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

fn pmf(a: &PmfArgs) -> Result<()> {
    let params = a.model.params()?;
    let l = a.model.l_for(a.n, a.l)?;
    let table = DegreePmfTable::new(&params, a.n, l)?;
    let values = match (a.d_max, a.tail_tol) {
        (Some(d), _) => table.pmf_table(d)?,
        (None, Some(tol)) => {
            if !(tol > 0.0 && tol < 1.0) {
                bail!(MagError::OutOfRange(format!("tail-tol must lie in (0, 1), got {tol}")));
            }
            table.pmf_table_truncated(tol)
        }
        (None, None) => table.pmf_table(a.n - 1)?,
    };
    let mut w = open_out(a.output.out.as_deref())?;
    DegreePmfTable::write_csv(&values, &mut w)?;
    w.flush()?;
    Ok(())
}

fn regime(a: &RegimeArgs) -> Result<()> {
    let params = a.model.params()?;
    let scaling = a.model.scaling()?;
    let c = params.derive();
    let r = scaling.regime(&params);
    let points =
        a.n.iter()
            .map(|&n| {
                let sp = scaling.at(n)?;
                Ok(json!({ "n": n, "l": sp.l, "rho_n": sp.rho_n }))
            })
            .collect::<Result<Vec<_>>>()?;
    let doc = json!({
        "params": params,
        "rho": scaling.rho(),
        "rounding": scaling.rounding(),
        "class": r.class,
        "kappa": r.kappa,
        "gamma0": c.gamma0,
        "gamma1": c.gamma1,
        "sigma0": c.sigma0,
        "sigma": c.sigma,
        "r": c.r,
        "r_kl": c.r_kl,
        "scaling": points,
    });
    let mut w = open_out(a.output.out.as_deref())?;
    serde_json::to_writer_pretty(&mut w, &doc)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn approx(a: &ApproxArgs) -> Result<()> {
    let params = a.model.params()?;
    let model = LimitModel::new(params, a.model.scaling()?)?;
    let mut w = open_out(a.output.out.as_deref())?;
    writeln!(w, "n,t,cdf_exact,cdf_approx,abs_err")?;
    for &n in &a.n {
        let point = model.at(n)?;
        let table = DegreePmfTable::new(&params, n, point.l)?;
        let ts: Vec<f64> = if a.t.is_empty() {
            [0.1, 0.5, 1.0, 2.0, 10.0].iter().map(|f| f * point.degree_scale()).collect()
        } else {
            a.t.clone()
        };
        for t in ts {
            if t.is_nan() || t < 0.0 {
                bail!(MagError::OutOfRange(format!("t must be nonnegative, got {t}")));
            }
            // P(D <= t) for real t
            let exact = if t >= (n - 1) as f64 { 1.0 } else { table.cdf(t.floor() as u64)? };
            let appr = point.cdf_approx(t)?;
            writeln!(w, "{n},{},{},{},{}", fmt17(t), fmt17(exact), fmt17(appr), fmt17((exact - appr).abs()))?;
        }
    }
    w.flush()?;
    Ok(())
}

fn bound(a: &BoundArgs) -> Result<()> {
    let params = a.model.params()?;
    let scaling = a.model.scaling()?;
    let grid = BoundGrid { delta_points: a.grid, eta_points: a.grid, ..BoundGrid::default() };
    let certs =
        a.n.iter()
            .map(|&n| match (a.delta, a.eta) {
                (Some(d), Some(e)) => berry_esseen_bound(n, &scaling, &params, d, e, a.c_star),
                _ => optimize_bound(n, &scaling, &params, a.c_star, &grid),
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
    let mut w = open_out(a.output.out.as_deref())?;
    match a.format {
        FormatArg::Csv => BoundCertificate::write_csv(&certs, &mut w)?,
        FormatArg::Json => {
            let rows: Vec<_> = certs
                .iter()
                .map(|c| {
                    let mut v = serde_json::to_value(c).expect("certificate serializes");
                    v["vacuous"] = json!(c.is_vacuous());
                    v
                })
                .collect();
            serde_json::to_writer_pretty(&mut w, &rows)?;
            writeln!(w)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn experiment(a: &ExperimentArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.config).with_context(|| format!("reading {}", a.config.display()))?;
    let mut cfg = ExperimentConfig::from_toml_str(&text)?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    let out = a.out.clone().or_else(|| cfg.output.clone());
    let report = run_experiment(&cfg)?;
    let mut w = open_out(out.as_deref())?;
    report.write_json(&mut w)?;
    w.flush()?;
    drop(w);

    if let Some(path) = &out {
        let mut side = path.clone().into_os_string();
        side.push(".meta.json");
        let ts = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let meta = json!({
            "config": a.config.display().to_string(),
            "config_hash": report.provenance.config_hash,
            "report": path.display().to_string(),
            "finished_unix": ts,
        });
        std::fs::write(&side, format!("{}\n", serde_json::to_string_pretty(&meta)?))
            .with_context(|| format!("writing {}", PathBuf::from(&side).display()))?;
    }
    let passed = report.checks.iter().filter(|c| c.passed).count();
    eprintln!("{passed}/{} checks passed", report.checks.len());
    for c in report.checks.iter().filter(|c| !c.passed) {
        eprintln!("  FAILED {}: {}", c.name, c.detail);
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<MagError>() {
        Some(MagError::RegimeViolation { .. }) => 3,
        Some(MagError::BudgetExceeded { .. }) => 4,
        Some(_) => 2,
        None => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = with_threads(cli.threads, || match &cli.command {
        Command::Generate(a) => generate(a),
        Command::Degrees(a) => degrees(a),
        Command::Pmf(a) => pmf(a),
        Command::Regime(a) => regime(a),
        Command::Approx(a) => approx(a),
        Command::Bound(a) => bound(a),
        Command::Experiment(a) => experiment(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
