//! Command-line front end. Every subcommand is byte-deterministic for a fixed
//! seed.
//!
//! Exit codes: 0 on success, 2 on usage errors (bad flags, malformed input
//! files, invalid parameters), 1 on runtime failures.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::adaptive::{dyadic_cutoff_grid, Lepskii, PenalizedBias, PenaltyConfig, Selection};
use crate::densities::{
    make_trig_density, random_theta, rejection_sample, ClippedEstimate, DensitySpec, Fixture, PackingDensity,
    UniformDensity,
};
use crate::error::{Error, Result};
use crate::estimator::{fit_recorded, fit, theoretical_rate, CutoffRule, ProjectionEstimate, RateQuery, Regime};
use crate::experiments::{run_experiment, ExperimentConfig};
use crate::fourier::{data_dim, Point};
use crate::privacy::{seeded_rng, sigma_for_cutoff, BudgetLedger, PrivacyBudget};

#[derive(Debug, Parser)]
#[command(name = "dpdensity", version, about = "Differentially private Fourier density estimation on [0,1]^d")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a projection estimator to a points CSV.
    Fit(FitArgs),
    /// Draw points from a density or fitted estimate JSON.
    Sample(SampleArgs),
    /// Write a ground-truth density JSON.
    GenerateDensity(GenerateArgs),
    /// Run the sweeps of an experiment configuration.
    Experiment(ExperimentArgs),
    /// Print the minimax rate and cut-offs over a grid of (n, rho).
    RateTable(RateTableArgs),
    /// Print a configuration with every field and default spelled out.
    PrintConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AdaptiveRule {
    Lepskii,
    PenalizedBias,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConstantsArg {
    Theory,
    Practical,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Points CSV: no header, one point per row, coordinates in [0,1].
    #[arg(long)]
    pub data: PathBuf,
    /// Total zCDP budget; omit for the non-private estimator.
    #[arg(long)]
    pub rho: Option<f64>,
    /// Fixed spectral cut-off.
    #[arg(long = "M", visible_alias = "cutoff", conflicts_with_all = ["beta", "adaptive"])]
    pub cutoff: Option<usize>,
    /// Known smoothness; the cut-off follows `--cutoff-rule`.
    #[arg(long, conflicts_with = "adaptive")]
    pub beta: Option<f64>,
    #[arg(long, value_enum, default_value_t = CutoffRule::default())]
    pub cutoff_rule: CutoffRule,
    /// Data-driven cut-off selection.
    #[arg(long, value_enum)]
    pub adaptive: Option<AdaptiveRule>,
    /// Lepskii constants.
    #[arg(long, value_enum, default_value_t = ConstantsArg::Theory)]
    pub constants: ConstantsArg,
    /// Sobolev radius entering the theory constant.
    #[arg(long = "L", default_value_t = PenaltyConfig::DEFAULT_RADIUS)]
    pub radius: f64,
    #[arg(long = "C")]
    pub c: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub a: f64,
    #[arg(long, default_value_t = PenaltyConfig::DEFAULT_EPS)]
    pub eps: f64,
    /// Penalized-bias model collection, comma separated; dyadic by default.
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<usize>>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Estimate JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// Selection trace JSON (adaptive fits only).
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Hermitian-symmetrize the released coefficients (post-processing).
    #[arg(long)]
    pub symmetrize: bool,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// Density JSON (with a "kind" field) or estimate JSON.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DensityKind {
    Uniform,
    Trig,
    Packing,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, value_enum)]
    pub kind: DensityKind,
    #[arg(long, default_value_t = 1)]
    pub d: usize,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    #[arg(long = "L", default_value_t = 2.0)]
    pub radius: f64,
    /// Highest frequency of a trig density.
    #[arg(long, default_value_t = 16)]
    pub m_truth: usize,
    /// Bumps per axis of a packing density.
    #[arg(long, default_value_t = 4)]
    pub m: usize,
    /// Packing bits as a 0/1 string; random when omitted.
    #[arg(long)]
    pub theta: Option<String>,
    #[arg(long)]
    pub halve_h: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct RateTableArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    pub n: Vec<f64>,
    #[arg(long, value_delimiter = ',', required = true)]
    pub rho: Vec<f64>,
    #[arg(long)]
    pub beta: f64,
    #[arg(long, default_value_t = 1)]
    pub d: usize,
}

/// Reads a points CSV. Rows must all have the same number of columns.
pub fn read_points(path: &Path) -> Result<Vec<Point>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Data { path: path.into(), line: 0, message: e.to_string() })?;
    let mut points = Vec::new();
    let mut width = None;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::Data { path: path.into(), line, message: e.to_string() }
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let bad = |message: String| Error::Data { path: path.into(), line, message };
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let coords = record
            .iter()
            .map(|f| f.parse::<f64>().map_err(|_| bad(format!("cannot parse {f:?} as a number"))))
            .collect::<Result<Vec<_>>>()?;
        match width {
            None => width = Some(coords.len()),
            Some(w) if w != coords.len() => return Err(bad(format!("expected {w} columns, found {}", coords.len()))),
            _ => {}
        }
        if let Some(v) = coords.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(bad(format!("coordinate {v} lies outside [0, 1]")));
        }
        points.push(Point::new(coords)?);
    }
    data_dim(&points)?;
    Ok(points)
}

pub fn write_points<W: Write>(points: &[Point], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    for p in points {
        w.write_record(p.coords().iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

fn budget_arg(rho: Option<f64>) -> Result<Option<PrivacyBudget>> {
    rho.map(PrivacyBudget::new).transpose()
}

fn penalty_from(args: &FitArgs, dim: usize) -> Result<PenaltyConfig> {
    match args.constants {
        ConstantsArg::Theory => {
            if args.c.is_some() {
                return Err(Error::invalid("--C applies to practical constants only"));
            }
            let mut cfg = PenaltyConfig::theory(dim, args.radius)?;
            if !(args.eps > 0.0 && args.eps.is_finite()) {
                return Err(Error::invalid(format!("eps must be positive, got {}", args.eps)));
            }
            cfg.eps = args.eps;
            Ok(cfg)
        }
        ConstantsArg::Practical => {
            let c = args.c.ok_or_else(|| Error::invalid("practical constants need --C"))?;
            PenaltyConfig::practical(c, args.a, args.eps)
        }
    }
}

fn cmd_fit(args: &FitArgs, stdout: &mut dyn Write) -> Result<()> {
    let data = read_points(&args.data)?;
    let dim = data_dim(&data)?;
    let n = data.len();
    let budget = budget_arg(args.rho)?;
    let mut rng = seeded_rng(args.seed);

    if let Some(rule) = args.adaptive {
        let rho = budget.ok_or_else(|| Error::invalid("adaptive selection needs --rho"))?;
        let sel: Selection = match rule {
            AdaptiveRule::Lepskii => Lepskii::new(penalty_from(args, dim)?).select(&data, rho, &mut rng)?,
            AdaptiveRule::PenalizedBias => {
                let grid = args.grid.clone().unwrap_or_else(|| dyadic_cutoff_grid(n, dim));
                PenalizedBias::new(grid)?.select(&data, rho, &mut rng)?
            }
        };
        let est = if args.symmetrize { sel.estimate.symmetrized() } else { sel.estimate.clone() };
        write_json(&args.out, &est)?;
        if let Some(path) = &args.trace {
            write_json(path, &sel.trace)?;
        }
        writeln!(stdout, "selected M = {} (candidate {})", sel.estimate.cutoff(), sel.trace.selected())?;
        writeln!(stdout, "{}", sel.ledger)?;
        return Ok(());
    }
    if args.trace.is_some() {
        return Err(Error::invalid("--trace applies to adaptive fits only"));
    }
    let cutoff = match (args.cutoff, args.beta) {
        (Some(m), None) => m,
        (None, Some(beta)) => {
            let rho = budget.ok_or_else(|| Error::invalid("--beta needs --rho to choose the cut-off"))?;
            args.cutoff_rule.cutoff(n as f64, rho, beta, dim)?
        }
        _ => return Err(Error::invalid("give exactly one of --M, --beta or --adaptive")),
    };
    let est: ProjectionEstimate = match budget {
        Some(rho) => {
            let mut ledger = BudgetLedger::new(rho);
            let est = fit_recorded(&data, cutoff, rho, &mut ledger, &mut rng)?;
            writeln!(stdout, "M = {cutoff}")?;
            writeln!(stdout, "{ledger}")?;
            est
        }
        None => {
            writeln!(stdout, "M = {cutoff}")?;
            writeln!(stdout, "non-private estimate: no budget spent")?;
            fit(&data, cutoff, None, &mut rng)?
        }
    };
    let est = if args.symmetrize { est.symmetrized() } else { est };
    write_json(&args.out, &est)
}

/// A density JSON has a `kind` field; anything else is read as an estimate.
fn load_sampler(path: &Path) -> Result<Box<dyn crate::densities::Density>> {
    let text = std::fs::read_to_string(path)?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::Data { path: path.into(), line: e.line() as u64, message: e.to_string() })?;
    let invalid = |e: serde_json::Error| Error::Data { path: path.into(), line: 0, message: e.to_string() };
    if value.get("kind").is_some() {
        let spec: DensitySpec = serde_json::from_value(value).map_err(invalid)?;
        Ok(Box::new(spec.build()?))
    } else {
        let est: ProjectionEstimate = serde_json::from_value(value).map_err(invalid)?;
        Ok(Box::new(ClippedEstimate::new(&est)?))
    }
}

fn cmd_sample(args: &SampleArgs, stdout: &mut dyn Write) -> Result<()> {
    let density = load_sampler(&args.input)?;
    let points = rejection_sample(density.as_ref(), args.n, &mut seeded_rng(args.seed))?;
    let file = std::fs::File::create(&args.out)?;
    write_points(&points, std::io::BufWriter::new(file))?;
    writeln!(stdout, "wrote {} points to {}", points.len(), args.out.display())?;
    Ok(())
}

fn cmd_generate(args: &GenerateArgs, stdout: &mut dyn Write) -> Result<()> {
    if args.d == 0 {
        return Err(Error::invalid("dimension must be at least 1"));
    }
    let mut rng = seeded_rng(args.seed);
    let fixture = match args.kind {
        DensityKind::Uniform => Fixture::Uniform(UniformDensity { dim: args.d }),
        DensityKind::Trig => Fixture::Trig(make_trig_density(args.beta, args.radius, args.m_truth, args.d, &mut rng)?),
        DensityKind::Packing => {
            let theta = match &args.theta {
                Some(bits) => bits
                    .chars()
                    .map(|c| match c {
                        '0' => Ok(false),
                        '1' => Ok(true),
                        other => Err(Error::invalid(format!("theta must be a 0/1 string, found {other:?}"))),
                    })
                    .collect::<Result<Vec<_>>>()?,
                None => random_theta(args.m, args.d, &mut rng),
            };
            Fixture::Packing(PackingDensity::new(theta, args.m, args.beta, args.d, args.radius, args.halve_h)?)
        }
    };
    write_json(&args.out, &fixture.to_spec())?;
    writeln!(stdout, "wrote {} density to {}", fixture.kind(), args.out.display())?;
    Ok(())
}

fn cmd_experiment(args: &ExperimentArgs, stdout: &mut dyn Write) -> Result<()> {
    let cfg = ExperimentConfig::load(&args.config)?;
    let base = args.config.parent().unwrap_or(Path::new("."));
    let reports = run_experiment(&cfg, base, &args.out_dir)?;
    for r in &reports {
        let slope = r.slope.map_or("absent".to_string(), |s| match s.std_err {
            Some(se) => format!("{:.4} ± {:.4}", s.slope, se),
            None => format!("{:.4}", s.slope),
        });
        writeln!(stdout, "{} [{}]: {} rows, slope {}", r.name, r.mode, r.records.len(), slope)?;
        for w in &r.warnings {
            writeln!(stdout, "  warning: {w}")?;
        }
    }
    writeln!(stdout, "summary written to {}", args.out_dir.join("summary.json").display())?;
    Ok(())
}

fn cmd_rate_table(args: &RateTableArgs, stdout: &mut dyn Write) -> Result<()> {
    writeln!(stdout, "n,rho,beta,d,rate,sampling_term,privacy_term,regime,M_thm,M_adaptive_form,sigma_M")?;
    for &n in &args.n {
        for &rho in &args.rho {
            let budget = PrivacyBudget::new(rho)?;
            let q = RateQuery::new(n, budget, args.beta, args.d)?;
            let rate = theoretical_rate(&q);
            let m_thm = CutoffRule::Theorem.cutoff(n, budget, args.beta, args.d)?;
            let m_ad = CutoffRule::AdaptiveForm.cutoff(n, budget, args.beta, args.d)?;
            let sigma = sigma_for_cutoff(n.round() as usize, budget, m_ad, args.d).sigma();
            let regime = match rate.regime {
                Regime::Sampling => "sampling",
                Regime::Privacy => "privacy",
            };
            writeln!(
                stdout,
                "{n},{rho},{},{},{:.6e},{:.6e},{:.6e},{regime},{m_thm},{m_ad},{sigma:.6e}",
                args.beta, args.d, rate.value, rate.sampling_term, rate.privacy_term
            )?;
        }
    }
    Ok(())
}

pub fn run(cli: Cli, stdout: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Fit(a) => cmd_fit(a, stdout),
        Command::Sample(a) => cmd_sample(a, stdout),
        Command::GenerateDensity(a) => cmd_generate(a, stdout),
        Command::Experiment(a) => cmd_experiment(a, stdout),
        Command::RateTable(a) => cmd_rate_table(a, stdout),
        Command::PrintConfig => {
            writeln!(stdout, "{}", serde_json::to_string_pretty(&ExperimentConfig::example())?)?;
            Ok(())
        }
    }
}

/// Parses `args`, runs the subcommand and maps the outcome to an exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match run(cli, &mut lock) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage() {
                2
            } else {
                1
            }
        }
    }
}
