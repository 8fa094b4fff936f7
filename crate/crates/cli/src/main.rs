mod commands;
mod error;
mod provenance;

use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use enhance_core::stats::DEFAULT_SEED;

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "enhance", version, about = "Evaluate enhancing-tumour predictions from non-contrast MRI")]
pub struct Cli {
    /// Print errors as one JSON object on standard error.
    #[arg(long, global = true)]
    pub json_errors: bool,
    /// Worker threads for per-case processing (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
    /// Seed for every random choice (bootstrap, phantoms, allocation).
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-case voxel metrics and cohort detection.
    Evaluate(EvaluateArgs),
    /// Shape features and radiomic category of each lesion.
    Radiomics(RadiomicsArgs),
    /// Stratified equity report with hypothesis tests.
    Equity(EquityArgs),
    /// Logistic fit of detection against lesion volume.
    DetectFit(DetectFitArgs),
    /// Entropy and probability summaries of each case.
    Uncertainty(UncertaintyArgs),
    /// Writes a synthetic phantom cohort with a manifest.
    Phantom(PhantomArgs),
    /// Flags pairs of highly correlated lesion masks.
    Dedup(DedupArgs),
    /// Runs the reader-study HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Cohort manifest (.csv or .json).
    #[arg(long, short = 'm')]
    pub manifest: PathBuf,
    /// Output directory.
    #[arg(long, short = 'o')]
    pub out: PathBuf,
    /// Fail before processing if any referenced file is missing.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ConnectivityArg {
    #[value(name = "6")]
    Six,
    #[value(name = "18")]
    Eighteen,
    #[value(name = "26")]
    TwentySix,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Predicted enhancing volume below this counts as no detection.
    #[arg(long, default_value_t = 0.0, value_name = "CM3")]
    pub min_pred_volume_cm3: f64,
    #[arg(long, value_enum, default_value = "26")]
    pub connectivity: ConnectivityArg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LabelSource {
    Gt,
    Pred,
}

#[derive(Debug, Args)]
pub struct RadiomicsArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Which label map the enhancing lesion is taken from.
    #[arg(long, value_enum, default_value = "gt")]
    pub source: LabelSource,
    #[arg(long, value_enum, default_value = "26")]
    pub connectivity: ConnectivityArg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BinsPreset {
    Decades20,
    Split30,
}

#[derive(Debug, Args)]
pub struct EquityArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Attributes to stratify by (default: all).
    #[arg(long, value_delimiter = ',')]
    pub attributes: Vec<String>,
    /// Age bin preset.
    #[arg(long, value_enum, default_value = "decades20")]
    pub bins: BinsPreset,
    #[arg(long, default_value_t = enhance_core::stats::DEFAULT_ITERATIONS)]
    pub iterations: usize,
    #[arg(long, default_value_t = 0.0, value_name = "CM3")]
    pub min_pred_volume_cm3: f64,
    #[arg(long, value_enum, default_value = "26")]
    pub connectivity: ConnectivityArg,
}

#[derive(Debug, Args)]
pub struct DetectFitArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Points on the fitted curve.
    #[arg(long, default_value_t = 100)]
    pub curve_points: usize,
    #[arg(long, default_value_t = 0.0, value_name = "CM3")]
    pub min_pred_volume_cm3: f64,
}

#[derive(Debug, Args)]
pub struct UncertaintyArgs {
    #[command(flatten)]
    pub input: InputArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    Shift,
    Erode,
}

#[derive(Debug, Args)]
pub struct PhantomArgs {
    /// Output directory.
    #[arg(long, short = 'o')]
    pub out: PathBuf,
    /// Number of cases.
    #[arg(long, default_value_t = 50)]
    pub n: usize,
    /// Edge length of the cubic grid in voxels.
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long, default_value_t = 0.2)]
    pub negative_fraction: f64,
    /// Dice target for every stratum (default: 0.8 and 0.4 for the two sites).
    #[arg(long)]
    pub target_dice: Option<f64>,
    #[arg(long, value_enum, default_value = "shift")]
    pub method: MethodArg,
    /// Write uncompressed .nii files.
    #[arg(long)]
    pub no_gzip: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MaskKind {
    /// Every abnormal label (classes 2 and 3).
    Lesion,
    /// Enhancing tumour only.
    Enhancing,
}

#[derive(Debug, Args)]
pub struct DedupArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value_t = enhance_core::morphology::DUPLICATE_R)]
    pub threshold: f64,
    #[arg(long, value_enum, default_value = "lesion")]
    pub mask: MaskKind,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Cohort manifest; the test split with predictions forms the case pool.
    #[arg(long, short = 'm', env = "ENHANCE_MANIFEST")]
    pub manifest: PathBuf,
    /// Directory for session journals.
    #[arg(long, env = "ENHANCE_JOURNAL_DIR")]
    pub journal_dir: PathBuf,
    #[arg(long, env = "ENHANCE_LISTEN", default_value = "127.0.0.1:8080")]
    pub listen: SocketAddr,
    /// Shared bearer token required on every API call.
    #[arg(long, env = "ENHANCE_TOKEN", hide_env_values = true)]
    pub token: Option<String>,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let json_errors = cli.json_errors;
    if let Err(e) = run(cli) {
        if json_errors {
            eprintln!("{}", e.json());
        } else {
            eprintln!("error: {e}");
        }
        std::process::exit(e.exit_code());
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let seed = cli.seed;
    match cli.command {
        Command::Evaluate(a) => commands::evaluate(&a, seed),
        Command::Radiomics(a) => commands::radiomics(&a, seed),
        Command::Equity(a) => commands::equity(&a, seed),
        Command::DetectFit(a) => commands::detect_fit(&a, seed),
        Command::Uncertainty(a) => commands::uncertainty(&a, seed),
        Command::Phantom(a) => commands::phantom(&a, seed),
        Command::Dedup(a) => commands::dedup(&a, seed),
        Command::Serve(a) => commands::serve(a, seed),
    }
}
