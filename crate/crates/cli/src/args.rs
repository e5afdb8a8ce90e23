use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fdrb_core::bounds::{NullModel, Scaling};
use fdrb_core::control::ControlMethod;
use fdrb_core::hlz::DiscoveryPopulation;
use fdrb_core::panel::PanelLayout;

#[derive(Debug, Parser)]
#[command(name = "fdrb", version, about = "False discovery rate bounds for return predictors")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute |t| of mean returns, or of alphas against a factor model.
    Tstats(TstatsArgs),
    /// Shares of |t| above hurdles and inside bins.
    Summary(SummaryArgs),
    /// Upper bound on the FDR from a t-stat file or published summaries.
    Bound(BoundArgs),
    /// Split the |t| histogram into scaled-null and true components.
    Decompose(DecomposeArgs),
    /// Smallest hurdle that controls the FDR at q*.
    Control(ControlArgs),
    /// Bonferroni hurdle for M tests.
    Bonferroni(BonferroniArgs),
    /// Monte Carlo grid of realized FDR against the bounds.
    Simulate(SimulateArgs),
    /// FDR curve of the HLZ factor model.
    Hlz(HlzArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum NullArg {
    Exact,
    Paper,
}

impl From<NullArg> for NullModel {
    fn from(a: NullArg) -> Self {
        match a {
            NullArg::Exact => NullModel::ExactNormal,
            NullArg::Paper => NullModel::PaperMode,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LayoutArg {
    Long,
    Wide,
}

impl From<LayoutArg> for PanelLayout {
    fn from(a: LayoutArg) -> Self {
        match a {
            LayoutArg::Long => PanelLayout::Long,
            LayoutArg::Wide => PanelLayout::Wide,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Easy,
    Storey,
    Extrap,
    Interval,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ScalingArg {
    Easy,
    Storey,
}

impl From<ScalingArg> for Scaling {
    fn from(a: ScalingArg) -> Self {
        match a {
            ScalingArg::Easy => Scaling::Easy,
            ScalingArg::Storey => Scaling::Storey,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ControlArg {
    Bh95,
    By13,
}

impl From<ControlArg> for ControlMethod {
    fn from(a: ControlArg) -> Self {
        match a {
            ControlArg::Bh95 => ControlMethod::Bh95,
            ControlArg::By13 => ControlMethod::By13,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PopulationArg {
    All,
    Published,
}

impl From<PopulationArg> for DiscoveryPopulation {
    fn from(a: PopulationArg) -> Self {
        match a {
            PopulationArg::All => DiscoveryPopulation::AllFactors,
            PopulationArg::Published => DiscoveryPopulation::Published,
        }
    }
}

/// Parses `lo,hi`.
pub fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected `lo,hi`, got `{s}`"))?;
    let lo: f64 = a.trim().parse().map_err(|_| format!("bad number `{a}`"))?;
    let hi: f64 = b.trim().parse().map_err(|_| format!("bad number `{b}`"))?;
    Ok((lo, hi))
}

fn parse_delimiter(s: &str) -> Result<u8, String> {
    match s {
        "tab" | "\\t" => Ok(b'\t'),
        _ if s.len() == 1 && s.is_ascii() => Ok(s.as_bytes()[0]),
        _ => Err(format!("delimiter must be one ASCII character, got `{s}`")),
    }
}

#[derive(Debug, Args)]
pub struct OutArg {
    /// Directory for output files and the run manifest; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TstatsArgs {
    /// Return panel CSV (percent per month).
    #[arg(long)]
    pub panel: PathBuf,
    #[arg(long, value_enum, default_value = "long")]
    pub layout: LayoutArg,
    #[arg(long, default_value = ",", value_parser = parse_delimiter)]
    pub delimiter: u8,
    /// Factor return CSV with a `month` column.
    #[arg(long, requires = "model")]
    pub factors: Option<PathBuf>,
    /// `capm`, `ff3`, `ff5`, or a comma-separated list of factor columns.
    #[arg(long, requires = "factors")]
    pub model: Option<String>,
    #[arg(long, default_value_t = fdrb_core::panel::DEFAULT_MIN_OBS)]
    pub min_obs: usize,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct SummaryArgs {
    /// T-stat CSV with an `abs_t` (or `t`) column.
    #[arg(long)]
    pub tstats: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "2")]
    pub hurdles: Vec<f64>,
    /// Closed |t| bin `lo,hi`; repeatable.
    #[arg(long = "bin", value_parser = parse_pair, default_value = "0,0.5")]
    pub bins: Vec<(f64, f64)>,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    #[arg(long, value_enum)]
    pub method: MethodArg,
    /// T-stat CSV; excludes the summary flags.
    #[arg(long, conflicts_with_all = ["share_above", "bin_share", "mean_pub_t", "share_in"])]
    pub tstats: Option<PathBuf>,
    /// Share of |t| above the hurdle.
    #[arg(long)]
    pub share_above: Option<f64>,
    /// Share of |t| inside the Storey bin.
    #[arg(long)]
    pub bin_share: Option<f64>,
    /// Mean published |t| for exponential extrapolation.
    #[arg(long)]
    pub mean_pub_t: Option<f64>,
    /// Share of signed t inside `--interval`.
    #[arg(long)]
    pub share_in: Option<f64>,
    #[arg(long, default_value_t = 2.0)]
    pub hurdle: f64,
    /// Storey bin `lo,hi` of |t|.
    #[arg(long, value_parser = parse_pair, default_value = "0,0.5")]
    pub bin: (f64, f64),
    /// Signed interval `lo,hi` for the interval Pr(F) bound.
    #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
    pub interval: Option<(f64, f64)>,
    #[arg(long, value_enum, default_value = "exact")]
    pub null: NullArg,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    #[arg(long)]
    pub tstats: PathBuf,
    #[arg(long, value_enum, default_value = "easy")]
    pub scaling: ScalingArg,
    #[arg(long, default_value_t = 0.5)]
    pub bin_width: f64,
    #[arg(long, default_value_t = 2.0)]
    pub hurdle: f64,
    #[arg(long, value_enum, default_value = "exact")]
    pub null: NullArg,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct ControlArgs {
    #[arg(long)]
    pub tstats: PathBuf,
    #[arg(long, value_enum, default_value = "bh95")]
    pub method: ControlArg,
    #[arg(long, default_value_t = 0.05)]
    pub q_star: f64,
    #[arg(long, value_enum, default_value = "exact")]
    pub null: NullArg,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct BonferroniArgs {
    /// Number of tests.
    #[arg(long)]
    pub m: usize,
    #[arg(long, default_value_t = 0.05)]
    pub level: f64,
    #[arg(long, value_enum, default_value = "exact")]
    pub null: NullArg,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct ThreadsArg {
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// JSON simulation config.
    #[arg(long)]
    pub config: PathBuf,
    /// Grid of gamma values in bps per month.
    #[arg(long, value_delimiter = ',')]
    pub gamma_bps: Option<Vec<f64>>,
    /// Grid of false-predictor probabilities.
    #[arg(long, value_delimiter = ',')]
    pub p_false: Option<Vec<f64>>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n_sims: Option<usize>,
    #[arg(long)]
    pub hurdle: Option<f64>,
    #[arg(long, value_parser = parse_pair)]
    pub bin: Option<(f64, f64)>,
    #[arg(long, value_enum)]
    pub null: Option<NullArg>,
    #[command(flatten)]
    pub threads: ThreadsArg,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct HlzArgs {
    #[arg(long)]
    pub p0: Option<f64>,
    /// Mean of the exponential expected returns, bps per month.
    #[arg(long)]
    pub lambda_bps: Option<f64>,
    /// Standard error of a mean return, bps per month.
    #[arg(long)]
    pub se_bps: Option<f64>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub n_factors: Option<usize>,
    #[arg(long)]
    pub s_bar: Option<f64>,
    /// JSON file with any of the parameters above; flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "2,2.27,2.95,3.39,3.8")]
    pub hurdles: Vec<f64>,
    #[arg(long, default_value_t = 1000)]
    pub n_sims: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Count discoveries among all factors or only published ones.
    #[arg(long, value_enum, default_value = "all")]
    pub population: PopulationArg,
    /// Write a factor-level scatter for the first K replications.
    #[arg(long, default_value_t = 0)]
    pub scatter: usize,
    #[command(flatten)]
    pub threads: ThreadsArg,
    #[command(flatten)]
    pub out: OutArg,
}
