mod commands;
mod error;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::parser::ValueSource;
use clap::{ArgAction, ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use semtraj::config::{BackendKind, PipelineConfig};
use semtraj::eval::NoiseTarget;
use semtraj::poi::PoiFormat;

use crate::error::CliError;

fn d() -> PipelineConfig {
    PipelineConfig::default()
}

fn parse_target(s: &str) -> Result<NoiseTarget, String> {
    match s {
        "pois" => Ok(NoiseTarget::Pois),
        "staypoints" | "stay_points" => Ok(NoiseTarget::StayPoints),
        other => Err(format!("unknown noise target `{other}` (expected pois or staypoints)")),
    }
}

/// Semantic annotation of GPS trajectories with POI-derived activities.
#[derive(Parser, Debug)]
#[command(name = "semtraj", version, propagate_version = true)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// TOML config; flags override its values [default: none]
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Directory holding default inputs and outputs
    #[arg(long, global = true, value_name = "DIR", default_value_os_t = d().output_dir)]
    output_dir: PathBuf,
    /// Top-level seed; every stage derives its own stream from it
    #[arg(long, global = true, default_value_t = d().seed)]
    seed: u64,
    /// Worker threads (0 = one per core, 1 = sequential)
    #[arg(long, global = true, default_value_t = d().workers)]
    workers: usize,
    /// Print the effective configuration as TOML and exit [default: off]
    #[arg(long, global = true)]
    print_config: bool,
    /// Raise log verbosity; repeatable [default: info]
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
    /// Only log warnings and errors [default: off]
    #[arg(short, long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Classify POIs into activity distributions
    #[command(allow_negative_numbers = true)]
    Classify(ClassifyArgs),
    /// Extract stay points from GPS trajectories
    #[command(allow_negative_numbers = true)]
    Staypoints(StaypointsArgs),
    /// Annotate stay points with activities
    #[command(allow_negative_numbers = true)]
    Infer(InferArgs),
    /// Score classifications and annotations against truth files
    #[command(allow_negative_numbers = true)]
    Evaluate(EvaluateArgs),
    /// Generate a synthetic world with known truth
    #[command(allow_negative_numbers = true)]
    Synth(SynthArgs),
    /// Summarise evaluation reports and export annotated stays as GeoJSON
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct PoiArgs {
    /// POI file, CSV or GeoJSON [default: <output-dir>/pois.csv]
    #[arg(long, value_name = "FILE")]
    pois: Option<PathBuf>,
    /// POI file format [default: from the file extension]
    #[arg(long)]
    format: Option<PoiFormat>,
}

#[derive(Args, Debug)]
struct ClassifyArgs {
    #[command(flatten)]
    poi: PoiArgs,
    /// Classification backend: mock, http or openai
    #[arg(long, default_value_t = d().classify.backend)]
    backend: BackendKind,
    /// Backend URL; required unless the backend is mock [default: none]
    #[arg(long, value_name = "URL")]
    endpoint: Option<String>,
    /// Model name sent to the openai backend
    #[arg(long, default_value_t = d().classify.model)]
    model: String,
    /// Per-request timeout in seconds
    #[arg(long, default_value_t = d().classify.timeout_s)]
    timeout_s: u64,
    /// Dataset note added to every prompt; repeatable [default: none]
    #[arg(long = "hint", value_name = "TEXT")]
    hints: Vec<String>,
    /// Retries per POI after a transient failure or bad reply
    #[arg(long, default_value_t = d().classify.max_retries)]
    max_retries: u32,
    /// First retry delay in milliseconds; doubles per retry
    #[arg(long, default_value_t = d().classify.initial_backoff_ms)]
    initial_backoff_ms: u64,
    /// Requests in flight at once
    #[arg(long, default_value_t = d().classify.concurrency)]
    concurrency: usize,
    /// Abort when more than this fraction of POIs fails
    #[arg(long, default_value_t = d().classify.max_failure_fraction)]
    max_failure_fraction: f64,
    /// Backend submissions per second [default: unlimited]
    #[arg(long, value_name = "N")]
    rate_limit_per_s: Option<f64>,
    /// Rescale replies whose probabilities do not sum to 1 [default: off]
    #[arg(long)]
    renormalize: bool,
    /// Prompt/response cache [default: <output-dir>/cache.jsonl]
    #[arg(long, value_name = "FILE")]
    cache: Option<PathBuf>,
    /// Output [default: <output-dir>/classifications.jsonl]
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct StayArgs {
    /// GPS trajectories CSV [default: <output-dir>/trajectories.csv]
    #[arg(long, value_name = "FILE")]
    trajectories: Option<PathBuf>,
    /// Stay-point distance threshold in metres
    #[arg(long, default_value_t = d().staypoint.dist_threshold_m)]
    dist_threshold_m: f64,
    /// Stay-point minimum duration in seconds
    #[arg(long, default_value_t = d().staypoint.min_duration_s)]
    min_duration_s: i64,
}

#[derive(Args, Debug)]
struct StaypointsArgs {
    #[command(flatten)]
    stay: StayArgs,
    /// Output [default: <output-dir>/staypoints.jsonl]
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct InferArgs {
    #[command(flatten)]
    poi: PoiArgs,
    /// POI classifications [default: <output-dir>/classifications.jsonl]
    #[arg(long, value_name = "FILE")]
    classifications: Option<PathBuf>,
    /// Hourly activity profile JSON [default: <output-dir>/profile.json]
    #[arg(long, value_name = "FILE")]
    profile: Option<PathBuf>,
    /// Stay points; extracted from trajectories when absent [default: <output-dir>/staypoints.jsonl]
    #[arg(long, value_name = "FILE")]
    staypoints: Option<PathBuf>,
    #[command(flatten)]
    stay: StayArgs,
    /// Candidate search radius in metres
    #[arg(long, default_value_t = d().infer.radius_m)]
    radius_m: f64,
    /// Maximum candidates per stay point
    #[arg(long, default_value_t = d().infer.k)]
    k: usize,
    /// Distance kernel standard deviation in metres
    #[arg(long, default_value_t = d().infer.kernel_sd_m)]
    kernel_sd_m: f64,
    /// Offset from UTC to local time in seconds
    #[arg(long, default_value_t = d().infer.tz_offset_s)]
    tz_offset_s: i64,
    /// Radius for grouping stays into places, metres
    #[arg(long, default_value_t = d().infer.mandatory.place_radius_m)]
    place_radius_m: f64,
    /// First hour of the home window
    #[arg(long, default_value_t = d().infer.mandatory.off_hours_start)]
    off_hours_start: u32,
    /// Hour the home window ends
    #[arg(long, default_value_t = d().infer.mandatory.off_hours_end)]
    off_hours_end: u32,
    /// First hour of the weekday work window
    #[arg(long, default_value_t = d().infer.mandatory.work_hours_start)]
    work_hours_start: u32,
    /// Hour the weekday work window ends
    #[arg(long, default_value_t = d().infer.mandatory.work_hours_end)]
    work_hours_end: u32,
    /// Minimum work-to-home distance in metres
    #[arg(long, default_value_t = d().infer.mandatory.min_work_dist_m)]
    min_work_dist_m: f64,
    /// Distance from a place to an education POI for School, metres
    #[arg(long, default_value_t = d().infer.mandatory.school_radius_m)]
    school_radius_m: f64,
    /// Weekday visits a place needs to count as Work
    #[arg(long, default_value_t = d().infer.mandatory.min_work_visits)]
    min_work_visits: usize,
    /// Gaussian position noise in metres
    #[arg(long, default_value_t = d().noise.sd_m)]
    noise_sd_m: f64,
    /// What the noise shifts: pois or staypoints
    #[arg(long, value_parser = parse_target, default_value = "pois")]
    noise_target: NoiseTarget,
    /// Output [default: <output-dir>/annotations.jsonl]
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Annotated stays [default: <output-dir>/annotations.jsonl]
    #[arg(long, value_name = "FILE")]
    annotations: Option<PathBuf>,
    /// Stay truth labels [default: <output-dir>/stay_truth.jsonl]
    #[arg(long, value_name = "FILE")]
    stay_truth: Option<PathBuf>,
    /// POI classifications [default: <output-dir>/classifications.jsonl]
    #[arg(long, value_name = "FILE")]
    classifications: Option<PathBuf>,
    /// POI truth labels [default: <output-dir>/poi_truth.jsonl]
    #[arg(long, value_name = "FILE")]
    poi_truth: Option<PathBuf>,
    /// Largest start-time gap when matching truth to annotations, seconds
    #[arg(long, default_value_t = d().eval.alignment_tolerance_s)]
    alignment_tolerance_s: i64,
    /// Output [default: <output-dir>/report.json]
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Number of simulated people
    #[arg(long, default_value_t = d().synth.agents)]
    agents: usize,
    /// Days simulated per person
    #[arg(long, default_value_t = d().synth.days)]
    days: u32,
    /// POI grid spacing in metres
    #[arg(long, default_value_t = d().synth.spacing_m)]
    spacing_m: f64,
    /// GPS sampling interval in seconds
    #[arg(long, default_value_t = d().synth.sample_interval_s)]
    sample_interval_s: i64,
    /// Chance of an evening visit on a weekday
    #[arg(long, default_value_t = d().synth.weekday_visit_prob)]
    weekday_visit_prob: f64,
    /// Chance of each weekend visit slot being used
    #[arg(long, default_value_t = d().synth.weekend_visit_prob)]
    weekend_visit_prob: f64,
    /// Profile to draw visit hours from [default: built-in, written to <output-dir>/profile.json]
    #[arg(long, value_name = "FILE")]
    profile: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Evaluation report; repeat to compare runs [default: <output-dir>/report.json]
    #[arg(long = "report", value_name = "FILE")]
    reports: Vec<PathBuf>,
    /// Annotated stays to export [default: <output-dir>/annotations.jsonl]
    #[arg(long, value_name = "FILE")]
    annotations: Option<PathBuf>,
    /// GeoJSON output [default: <output-dir>/annotations.geojson]
    #[arg(long, value_name = "FILE")]
    geojson: Option<PathBuf>,
    /// Summary text output [default: <output-dir>/summary.txt]
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

fn on_cli(m: &ArgMatches, id: &str) -> bool {
    m.value_source(id) == Some(ValueSource::CommandLine)
}

macro_rules! overlay {
    ($m:expr, $a:expr, { $($field:ident => $dst:expr),* $(,)? }) => {
        $( if on_cli($m, stringify!($field)) { $dst = $a.$field.clone(); } )*
    };
}

macro_rules! overlay_opt {
    ($a:expr, { $($field:ident => $dst:expr),* $(,)? }) => {
        $( if let Some(v) = &$a.$field { $dst = Some(v.clone()); } )*
    };
}

impl PoiArgs {
    fn apply(&self, c: &mut PipelineConfig) {
        overlay_opt!(self, { pois => c.paths.pois, format => c.poi.format });
    }
}

impl StayArgs {
    fn apply(&self, m: &ArgMatches, c: &mut PipelineConfig) {
        overlay_opt!(self, { trajectories => c.paths.trajectories });
        overlay!(m, self, {
            dist_threshold_m => c.staypoint.dist_threshold_m,
            min_duration_s => c.staypoint.min_duration_s,
        });
    }
}

impl Command {
    fn apply(&self, m: &ArgMatches, c: &mut PipelineConfig) {
        match self {
            Command::Classify(a) => {
                a.poi.apply(c);
                overlay_opt!(a, {
                    endpoint => c.classify.endpoint,
                    rate_limit_per_s => c.classify.rate_limit_per_s,
                    cache => c.paths.cache,
                    out => c.paths.classifications,
                });
                overlay!(m, a, {
                    backend => c.classify.backend,
                    model => c.classify.model,
                    timeout_s => c.classify.timeout_s,
                    hints => c.classify.hints,
                    max_retries => c.classify.max_retries,
                    initial_backoff_ms => c.classify.initial_backoff_ms,
                    concurrency => c.classify.concurrency,
                    max_failure_fraction => c.classify.max_failure_fraction,
                    renormalize => c.classify.renormalize,
                });
            }
            Command::Staypoints(a) => {
                a.stay.apply(m, c);
                overlay_opt!(a, { out => c.paths.staypoints });
            }
            Command::Infer(a) => {
                a.poi.apply(c);
                a.stay.apply(m, c);
                overlay_opt!(a, {
                    classifications => c.paths.classifications,
                    profile => c.paths.profile,
                    staypoints => c.paths.staypoints,
                    out => c.paths.annotations,
                });
                let mp = &mut c.infer.mandatory;
                overlay!(m, a, {
                    place_radius_m => mp.place_radius_m,
                    off_hours_start => mp.off_hours_start,
                    off_hours_end => mp.off_hours_end,
                    work_hours_start => mp.work_hours_start,
                    work_hours_end => mp.work_hours_end,
                    min_work_dist_m => mp.min_work_dist_m,
                    school_radius_m => mp.school_radius_m,
                    min_work_visits => mp.min_work_visits,
                });
                overlay!(m, a, {
                    radius_m => c.infer.radius_m,
                    k => c.infer.k,
                    kernel_sd_m => c.infer.kernel_sd_m,
                    tz_offset_s => c.infer.tz_offset_s,
                    noise_sd_m => c.noise.sd_m,
                    noise_target => c.noise.target,
                });
            }
            Command::Evaluate(a) => {
                overlay_opt!(a, {
                    annotations => c.paths.annotations,
                    stay_truth => c.paths.stay_truth,
                    classifications => c.paths.classifications,
                    poi_truth => c.paths.poi_truth,
                    out => c.paths.report,
                });
                overlay!(m, a, { alignment_tolerance_s => c.eval.alignment_tolerance_s });
            }
            Command::Synth(a) => {
                overlay_opt!(a, { profile => c.paths.profile });
                overlay!(m, a, {
                    agents => c.synth.agents,
                    days => c.synth.days,
                    spacing_m => c.synth.spacing_m,
                    sample_interval_s => c.synth.sample_interval_s,
                    weekday_visit_prob => c.synth.weekday_visit_prob,
                    weekend_visit_prob => c.synth.weekend_visit_prob,
                });
            }
            Command::Report(a) => {
                overlay_opt!(a, { annotations => c.paths.annotations });
            }
        }
    }
}

fn init_logging(g: &Global) {
    let level = match (g.quiet, g.verbose) {
        (true, _) => log::LevelFilter::Warn,
        (false, 0) => log::LevelFilter::Info,
        (false, 1) => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .parse_default_env()
        .init();
}

fn resolve(cli: &Cli, top: &ArgMatches, sub: &ArgMatches) -> Result<PipelineConfig, CliError> {
    let mut cfg = match &cli.global.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    let global_set = |id: &str| on_cli(top, id) || on_cli(sub, id);
    if global_set("output_dir") {
        cfg.output_dir = cli.global.output_dir.clone();
    }
    if global_set("seed") {
        cfg.seed = cli.global.seed;
    }
    if global_set("workers") {
        cfg.workers = cli.global.workers;
    }
    cli.command.apply(sub, &mut cfg);
    Ok(cfg)
}

fn run(cli: &Cli, top: &ArgMatches) -> Result<(), CliError> {
    let (_, sub) = top.subcommand().ok_or_else(|| CliError::Usage("missing subcommand".into()))?;
    let cfg = resolve(cli, top, sub)?;
    if cli.global.print_config {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    cfg.validate()?;
    let exec = semtraj::par::configure_workers(cfg.workers);
    match &cli.command {
        Command::Classify(_) => commands::classify(&cfg),
        Command::Staypoints(_) => commands::staypoints(&cfg, exec),
        Command::Infer(_) => commands::infer(&cfg, exec),
        Command::Evaluate(_) => commands::evaluate(&cfg),
        Command::Synth(_) => commands::synth(&cfg),
        Command::Report(a) => commands::report(
            &cfg,
            &commands::ReportPlan {
                reports: a.reports.clone(),
                annotations_explicit: a.annotations.is_some(),
                geojson: a.geojson.clone(),
                summary: a.out.clone(),
            },
        ),
    }
}

fn fail(e: &CliError) -> ExitCode {
    let mut stderr = std::io::stderr().lock();
    let _ = writeln!(stderr, "{}", e.to_json());
    ExitCode::from(e.exit_code())
}

fn main() -> ExitCode {
    let matches = match Cli::command().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    ExitCode::SUCCESS
                }
                _ => fail(&CliError::Usage(e.render().to_string().trim_end().to_string())),
            };
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => return fail(&CliError::Usage(e.to_string())),
    };
    init_logging(&cli.global);
    match run(&cli, &matches) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::debug!("{e:?}");
            fail(&e)
        }
    }
}
