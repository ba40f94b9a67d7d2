use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use precinct_forensics::cloud::PointWeight;
use precinct_forensics::histogram::WeightMode;
use precinct_forensics::ingest::ShareDenominator;

#[derive(Debug, Parser)]
#[command(name = "precinct-forensics", version, about = "Precinct-level election forensics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check every record's count identities.
    Validate(ValidateArgs),
    /// Station-voting histogram of one party's share.
    Hist(HistArgs),
    /// Histogram of turnout.
    TurnoutHist(TurnoutHistArgs),
    /// Per-station (turnout, share) points.
    Cloud(CloudArgs),
    /// Per-station (turnout, share of electors) points.
    Compress(CloudArgs),
    /// Local maxima of the cloud density.
    Modes(ModesArgs),
    /// Test round fractions for excess weight in a share histogram.
    Dents(DentsArgs),
    /// Lower bound on the share of a party's votes sitting in dents.
    Bound(BoundArgs),
    /// Share histogram of independent coin flips over a size distribution.
    Coinflip(CoinflipArgs),
    /// Moments and normality diagnostics of the binomial scale mixture.
    Mixture(MixtureArgs),
    /// Per-region totals and shares.
    RegionReport(RegionReportArgs),
    /// Split a party's result into a region set and the rest.
    Decompose(DecomposeArgs),
    /// Synthesise an honest dataset from a model file.
    Generate(GenerateArgs),
    /// Apply a fraud injector to a dataset.
    Inject(InjectArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
    Svg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum Weight {
    Stations,
    Electors,
    PartyVotes,
}

impl From<Weight> for WeightMode {
    fn from(w: Weight) -> Self {
        match w {
            Weight::Stations => WeightMode::Stations,
            Weight::Electors => WeightMode::Electors,
            Weight::PartyVotes => WeightMode::PartyVotes,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum PointWeightArg {
    Unit,
    Electors,
}

impl From<PointWeightArg> for PointWeight {
    fn from(w: PointWeightArg) -> Self {
        match w {
            PointWeightArg::Unit => PointWeight::Unit,
            PointWeightArg::Electors => PointWeight::Electors,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum Denominator {
    BallotsCast,
    ValidBallots,
}

impl From<Denominator> for ShareDenominator {
    fn from(d: Denominator) -> Self {
        match d {
            Denominator::BallotsCast => ShareDenominator::BallotsCast,
            Denominator::ValidBallots => ShareDenominator::ValidBallots,
        }
    }
}

#[derive(Debug, Args)]
pub struct Input {
    /// Precinct CSV.
    #[arg(long)]
    pub input: PathBuf,
    /// Region registry CSV; without it the bundled registry is used and
    /// unknown region ids are registered as ordinary regions.
    #[arg(long)]
    pub regions: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct Output {
    /// Output file; standard output when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

/// Which stations an analysis looks at.
#[derive(Debug, Args)]
pub struct Selection {
    #[arg(long, value_enum, default_value = "ballots_cast")]
    pub denominator: Denominator,
    #[arg(long, default_value_t = 0)]
    pub min_size: u64,
    /// Drop stations in exceptional regions.
    #[arg(long)]
    pub exclude_exceptional: bool,
    /// Keep records that fail validation.
    #[arg(long)]
    pub include_flagged: bool,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub input: Input,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct Binned {
    #[arg(long, default_value_t = 0.005)]
    pub bin_width: f64,
    /// Put a bin centre on this fraction instead of an edge on 0.
    #[arg(long)]
    pub center: Option<f64>,
}

#[derive(Debug, Args)]
pub struct HistArgs {
    #[command(flatten)]
    pub input: Input,
    #[arg(long)]
    pub party: String,
    #[command(flatten)]
    pub bins: Binned,
    #[arg(long, value_enum, default_value = "stations")]
    pub weight: Weight,
    #[command(flatten)]
    pub selection: Selection,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct TurnoutHistArgs {
    #[command(flatten)]
    pub input: Input,
    #[command(flatten)]
    pub bins: Binned,
    #[arg(long, value_enum, default_value = "stations")]
    pub weight: Weight,
    #[command(flatten)]
    pub selection: Selection,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct CloudArgs {
    #[command(flatten)]
    pub input: Input,
    #[arg(long)]
    pub party: String,
    #[arg(long, value_enum, default_value = "unit")]
    pub weight: PointWeightArg,
    #[command(flatten)]
    pub selection: Selection,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
    /// Let the SVG axes stretch independently.
    #[arg(long)]
    pub unequal_scales: bool,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct ModesArgs {
    #[command(flatten)]
    pub input: Input,
    #[arg(long)]
    pub party: String,
    #[arg(long, value_enum, default_value = "unit")]
    pub weight: PointWeightArg,
    #[command(flatten)]
    pub selection: Selection,
    #[arg(long, default_value_t = 0.02)]
    pub cell: f64,
    #[arg(long, default_value_t = 2)]
    pub top_k: usize,
    /// Search the compressed cloud.
    #[arg(long)]
    pub compressed: bool,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct DentsArgs {
    #[command(flatten)]
    pub input: Input,
    #[arg(long)]
    pub party: String,
    #[arg(long, default_value_t = 0.005)]
    pub bin_width: f64,
    #[arg(long, default_value_t = 0.5)]
    pub center: f64,
    #[arg(long, value_enum, default_value = "stations")]
    pub weight: Weight,
    #[command(flatten)]
    pub selection: Selection,
    #[arg(long, default_value_t = 4.0)]
    pub z_threshold: f64,
    /// Comma-separated fractions; multiples of 1/20 from 0.5 to 0.95 by
    /// default.
    #[arg(long, value_delimiter = ',')]
    pub candidates: Option<Vec<f64>>,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    #[command(flatten)]
    pub input: Input,
    #[arg(long)]
    pub party: String,
    #[arg(long, default_value_t = 0.002)]
    pub bin_width: f64,
    #[arg(long, default_value_t = 0.5)]
    pub center: f64,
    #[command(flatten)]
    pub selection: Selection,
    #[arg(long, default_value_t = 4.0)]
    pub z_threshold: f64,
    #[arg(long, value_delimiter = ',')]
    pub candidates: Option<Vec<f64>>,
    #[command(flatten)]
    pub output: Output,
}

/// A size distribution given inline or read off a dataset.
#[derive(Debug, Args)]
pub struct Sizes {
    /// `lo-hi` for equal weight on every size in the range, or
    /// `n:w,n:w,...` for explicit atoms.
    #[arg(long, conflicts_with = "input")]
    pub sizes: Option<String>,
    /// Use the station sizes of this precinct CSV.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, requires = "input")]
    pub regions: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CoinflipArgs {
    #[command(flatten)]
    pub sizes: Sizes,
    #[arg(long, default_value_t = 0.5)]
    pub p: f64,
    /// Draw p per station from a Beta with mean `--p` and this
    /// concentration instead of holding it fixed.
    #[arg(long)]
    pub p_concentration: Option<f64>,
    #[arg(long, default_value_t = 100)]
    pub trials: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub bins: Binned,
    #[arg(long, default_value_t = 0)]
    pub min_size: u64,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct MixtureArgs {
    #[command(flatten)]
    pub sizes: Sizes,
    #[arg(long, default_value_t = 0.5)]
    pub p: f64,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct RegionReportArgs {
    #[command(flatten)]
    pub input: Input,
    #[arg(long)]
    pub party: String,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    #[command(flatten)]
    pub input: Input,
    #[arg(long)]
    pub party: String,
    /// Comma-separated region ids; the exceptional regions plus Mordovia by
    /// default.
    #[arg(long, value_delimiter = ',')]
    pub region_set: Option<Vec<String>>,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Model JSON.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: Output,
    /// Also write the model's region registry here.
    #[arg(long)]
    pub registry_output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InjectArgs {
    #[command(flatten)]
    pub input: Input,
    /// Injector JSON.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: Output,
    /// Ground-truth manifest JSON.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}
