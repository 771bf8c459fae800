//! `carvemix` command line: `generate`, `sdf`, `mix`, `validate`, `stats`.
//!
//! Exit codes are 0 on success, 1 on a runtime error and 2 on a usage
//! error. Errors are printed to stderr as a single JSON object
//! `{"error": <kind>, "message": <text>}`.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{cutmix_pair, mixup_pair, mixup_with_lambda, DEFAULT_MIXUP_ALPHA};
use crate::carve::{carvemix_pair, carvemix_pair_with};
use crate::distance::{signed_distance, DistanceUnits};
use crate::error::Error;
use crate::generator::{
    dataset_stats, generate_dataset, validate_roster, GenerationConfig, GenerationManifest, Method, Roster,
};
use crate::nifti;
use crate::volume::AnnotatedSample;

#[derive(Debug, Parser)]
#[command(name = "carvemix", version, about = "Lesion-aware mix augmentation for annotated 3D volumes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic samples from a training roster
    Generate(GenerateArgs),
    /// Compute the signed distance field of a label
    Sdf(SdfArgs),
    /// Mix one donor/host pair
    Mix(MixArgs),
    /// Check an images/labels directory pair
    Validate(ValidateArgs),
    /// Summarize a generation manifest
    Stats(StatsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Carvemix,
    Mixup,
    Cutmix,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Carvemix => Method::CarveMix,
            MethodArg::Mixup => Method::Mixup,
            MethodArg::Cutmix => Method::CutMix,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum UnitsArg {
    Voxel,
    Mm,
}

impl From<UnitsArg> for DistanceUnits {
    fn from(u: UnitsArg) -> Self {
        match u {
            UnitsArg::Voxel => DistanceUnits::Voxel,
            UnitsArg::Mm => DistanceUnits::Millimeters,
        }
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    /// Number of synthetic samples
    #[arg(long)]
    pub num: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub images: Option<PathBuf>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Output directory; samples go to <out>/images and <out>/labels
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Manifest path (default <out>/manifest.jsonl)
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub units: Option<UnitsArg>,
    /// Mixup Beta concentration
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Worker threads (default: $CARVEMIX_WORKERS or logical cores)
    #[arg(long)]
    pub workers: Option<usize>,
    /// Never pair a sample with itself
    #[arg(long)]
    pub distinct_pairs: bool,
    /// Write plain .nii instead of .nii.gz
    #[arg(long)]
    pub no_gzip: bool,
    /// JSON file with the same keys as the flags; flags take precedence
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Contents of a `--config` file.
#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct GenerateFile {
    pub method: Option<Method>,
    pub num: Option<usize>,
    pub seed: Option<u64>,
    pub images: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub units: Option<DistanceUnits>,
    pub alpha: Option<f64>,
    pub workers: Option<usize>,
    pub distinct_pairs: Option<bool>,
    pub no_gzip: Option<bool>,
}

#[derive(Debug, Args)]
pub struct SdfArgs {
    #[arg(long)]
    pub label: PathBuf,
    #[arg(long, value_enum, default_value = "voxel")]
    pub units: UnitsArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MixArgs {
    #[arg(long, value_enum, default_value = "carvemix")]
    pub method: MethodArg,
    #[arg(long)]
    pub donor_image: PathBuf,
    #[arg(long)]
    pub donor_label: PathBuf,
    #[arg(long)]
    pub host_image: PathBuf,
    #[arg(long)]
    pub host_label: PathBuf,
    #[arg(long)]
    pub out_image: PathBuf,
    #[arg(long)]
    pub out_label: PathBuf,
    /// `auto` to sample, or a literal threshold (carvemix) / weight (mixup)
    #[arg(long, default_value = "auto")]
    pub lambda: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum)]
    pub units: Option<UnitsArg>,
    #[arg(long)]
    pub alpha: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub images: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    /// Write the JSON report here instead of stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Runtime(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    pub fn to_json(&self) -> String {
        let (kind, message) = match self {
            CliError::Usage(m) => ("UsageError", m.clone()),
            CliError::Runtime(e) => (e.kind(), e.to_string()),
        };
        serde_json::json!({ "error": kind, "message": message }).to_string()
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(stdout, "{e}");
                return 0;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or_default().trim_start_matches("error: ");
            let _ = writeln!(stderr, "{}", CliError::Usage(first.to_owned()).to_json());
            return 2;
        }
    };
    match execute(cli.command, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "{}", e.to_json());
            e.exit_code()
        }
    }
}

pub fn execute(command: Command, out: &mut dyn Write) -> CliResult<()> {
    match command {
        Command::Generate(a) => cmd_generate(a, out),
        Command::Sdf(a) => cmd_sdf(a, out),
        Command::Mix(a) => cmd_mix(a, out),
        Command::Validate(a) => cmd_validate(a, out),
        Command::Stats(a) => cmd_stats(a, out),
    }
}

fn say(out: &mut dyn Write, line: impl std::fmt::Display) -> CliResult<()> {
    writeln!(out, "{line}").map_err(|e| CliError::Runtime(Error::io("<stdout>", e)))
}

fn required<T>(value: Option<T>, flag: &str) -> CliResult<T> {
    value.ok_or_else(|| CliError::Usage(format!("missing required --{flag}")))
}

fn usage_from_config(e: Error) -> CliError {
    match e {
        Error::Config(m) => CliError::Usage(m),
        other => CliError::Runtime(other),
    }
}

/// Resolves flags over an optional config file into a generation config plus
/// the input directories and manifest path.
pub fn resolve_generate(args: GenerateArgs) -> CliResult<(GenerationConfig, PathBuf, PathBuf, PathBuf)> {
    let file = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
            serde_json::from_str::<GenerateFile>(&text)
                .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))?
        }
        None => GenerateFile::default(),
    };
    let method = args.method.map(Method::from).or(file.method);
    let method = required(method, "method")?;
    let count = required(args.num.or(file.num), "num")?;
    let seed = required(args.seed.or(file.seed), "seed")?;
    let images = required(args.images.or(file.images), "images")?;
    let labels = required(args.labels.or(file.labels), "labels")?;
    let out = required(args.out.or(file.out), "out")?;
    let manifest = args
        .manifest
        .or(file.manifest)
        .unwrap_or_else(|| out.join("manifest.jsonl"));

    let mut config = GenerationConfig::new(method, count, seed, out);
    config.units = args.units.map(DistanceUnits::from).or(file.units).unwrap_or_default();
    config.alpha = args.alpha.or(file.alpha);
    config.workers = args.workers.or(file.workers);
    config.allow_same_pair = !(args.distinct_pairs || file.distinct_pairs.unwrap_or(false));
    config.gzip = !(args.no_gzip || file.no_gzip.unwrap_or(false));
    config.validate().map_err(usage_from_config)?;
    Ok((config, images, labels, manifest))
}

pub fn cmd_generate(args: GenerateArgs, out: &mut dyn Write) -> CliResult<()> {
    let (config, images, labels, manifest_path) = resolve_generate(args)?;
    let roster = Roster::from_dirs(&images, &labels)?;
    let manifest = generate_dataset(&config, &roster)?;
    if let Some(parent) = manifest_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    manifest.write_jsonl(&manifest_path)?;
    say(out, format_args!("manifest: {}", manifest_path.display()))?;
    say(out, format_args!("method: {}", config.method))?;
    say(out, format_args!("samples: {}", manifest.len()))?;
    say(out, format_args!("originals: {}", roster.len()))?;
    say(out, format_args!("pool: {}", roster.len() + manifest.len()))?;
    Ok(())
}

pub fn cmd_sdf(args: SdfArgs, out: &mut dyn Write) -> CliResult<()> {
    let mask = nifti::read_mask(&args.label)?;
    let field = signed_distance(&mask, args.units.into())?;
    let volume = field.to_volume().with_meta(mask.meta().clone());
    nifti::write_volume(&args.out, &volume)?;
    say(out, format_args!("d_min: {}", field.d_min()))?;
    say(out, format_args!("units: {}", field.units().as_str()))?;
    Ok(())
}

fn load_sample(id: &str, image: &Path, label: &Path) -> CliResult<AnnotatedSample> {
    let img = nifti::read_volume(image)?;
    let lbl = nifti::read_mask(label)?;
    Ok(AnnotatedSample::new(id, img, lbl)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum LambdaArg {
    Auto,
    Fixed(f64),
}

fn parse_lambda(s: &str) -> CliResult<LambdaArg> {
    if s == "auto" {
        return Ok(LambdaArg::Auto);
    }
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .map(LambdaArg::Fixed)
        .ok_or_else(|| CliError::Usage(format!("--lambda must be `auto` or a number, got `{s}`")))
}

pub fn cmd_mix(args: MixArgs, out: &mut dyn Write) -> CliResult<()> {
    let method = Method::from(args.method);
    let lambda = parse_lambda(&args.lambda)?;
    if args.alpha.is_some() && method != Method::Mixup {
        return Err(CliError::Usage("--alpha only applies to mixup".into()));
    }
    if let Some(alpha) = args.alpha {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(CliError::Usage(format!("--alpha must be > 0, got {alpha}")));
        }
    }
    if args.units.is_some() && method != Method::CarveMix {
        return Err(CliError::Usage("--units only applies to carvemix".into()));
    }
    if method == Method::CutMix && lambda != LambdaArg::Auto {
        return Err(CliError::Usage("cutmix derives lambda from the box; --lambda must be auto".into()));
    }
    if let (Method::Mixup, LambdaArg::Fixed(v)) = (method, lambda) {
        if !(0.0..=1.0).contains(&v) {
            return Err(CliError::Usage(format!("mixup --lambda must lie in [0, 1], got {v}")));
        }
    }

    let donor = load_sample("donor", &args.donor_image, &args.donor_label)?;
    let host = load_sample("host", &args.host_image, &args.host_label)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);

    let summary = match method {
        Method::CarveMix => {
            let units = args.units.map(DistanceUnits::from).unwrap_or_default();
            let (image, label, mut spec) = match lambda {
                LambdaArg::Auto => carvemix_pair(&donor, &host, &mut rng, units)?,
                LambdaArg::Fixed(v) => carvemix_pair_with(&donor, &host, units, |_| Ok(v))?,
            };
            if lambda == LambdaArg::Auto {
                spec.rng_seed = Some(args.seed);
            }
            nifti::write_volume(&args.out_image, &image)?;
            nifti::write_mask(&args.out_label, &label)?;
            serde_json::to_value(&spec)
        }
        Method::Mixup => {
            let alpha = args.alpha.unwrap_or(DEFAULT_MIXUP_ALPHA);
            let (image, label, spec) = match lambda {
                LambdaArg::Auto => {
                    let (i, l, mut s) = mixup_pair(&donor, &host, alpha, &mut rng)?;
                    s.rng_seed = Some(args.seed);
                    (i, l, s)
                }
                LambdaArg::Fixed(v) => {
                    let (i, l) = mixup_with_lambda(&donor, &host, v)?;
                    (i, l, crate::baselines::MixupSpec { alpha, lambda: v, rng_seed: None })
                }
            };
            nifti::write_volume(&args.out_image, &image)?;
            nifti::write_soft_mask(&args.out_label, &label)?;
            serde_json::to_value(&spec)
        }
        Method::CutMix => {
            let (image, label, mut spec) = cutmix_pair(&donor, &host, &mut rng)?;
            spec.rng_seed = Some(args.seed);
            nifti::write_volume(&args.out_image, &image)?;
            nifti::write_soft_mask(&args.out_label, &label)?;
            serde_json::to_value(&spec)
        }
    }
    .expect("specs always serialize");
    say(out, summary)
}

pub fn cmd_validate(args: ValidateArgs, out: &mut dyn Write) -> CliResult<()> {
    let report = validate_roster(&args.images, &args.labels)?;
    let json = serde_json::to_string_pretty(&report).expect("report always serializes");
    match &args.out {
        Some(path) => {
            fs::write(path, json).map_err(|e| Error::io(path, e))?;
            say(out, format_args!("report: {}", path.display()))?;
        }
        None => say(out, &json)?,
    }
    say(out, format_args!("samples: {}", report.samples.len()))?;
    say(out, format_args!("eligible hosts: {}", report.eligible_hosts))?;
    say(out, format_args!("eligible donors: {}", report.eligible_donors))?;
    say(out, format_args!("excluded: {}", report.excluded.len()))?;
    Ok(())
}

pub fn cmd_stats(args: StatsArgs, out: &mut dyn Write) -> CliResult<()> {
    let manifest = GenerationManifest::read_jsonl(&args.manifest)?;
    let stats = dataset_stats(&manifest);
    let json = serde_json::to_string_pretty(&stats).expect("stats always serialize");
    fs::write(&args.out, json).map_err(|e| Error::io(&args.out, e))?;
    say(out, format_args!("stats: {}", args.out.display()))?;
    say(out, format_args!("records: {}", stats.total))?;
    for (method, s) in &stats.methods {
        say(out, format_args!("{method}: {}", s.count))?;
    }
    Ok(())
}
