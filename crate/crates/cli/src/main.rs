mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::settings::Settings;

#[derive(Parser, Debug)]
#[command(name = "psd", version, about = "Sparse-to-dense depth completion from a relative depth prediction")]
struct Cli {
    #[command(flatten)]
    tune: TuneArgs,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
pub struct TuneArgs {
    /// `key = value` settings file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// default, cityscapes, vkitti2, tofdc or diml.
    #[arg(long, global = true)]
    preset: Option<String>,
    #[arg(long, global = true)]
    eta: Option<f64>,
    /// 3D neighbors per pixel.
    #[arg(long, global = true)]
    k: Option<usize>,
    /// serial_3d_then_2d, serial_2d_then_3d or parallel_mean.
    #[arg(long, global = true)]
    mode: Option<String>,
    #[arg(long = "iterations-2d", global = true)]
    iterations_2d: Option<usize>,
    /// Residual slice intervals (n; n + 1 slices).
    #[arg(long, global = true)]
    slices: Option<usize>,
    #[arg(long, global = true)]
    tau: Option<f64>,
    #[arg(long = "clamp-min", global = true)]
    clamp_min: Option<f64>,
    #[arg(long = "clamp-max", global = true)]
    clamp_max: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses all cores.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// zero, heuristic or guided.
    #[arg(long, global = true)]
    scorer: Option<String>,
}

impl TuneArgs {
    fn settings(&self) -> anyhow::Result<Settings> {
        let mut overrides: Vec<(&str, String)> = Vec::new();
        let mut put = |k, v: Option<String>| {
            if let Some(v) = v {
                overrides.push((k, v));
            }
        };
        put("eta", self.eta.map(|v| v.to_string()));
        put("k", self.k.map(|v| v.to_string()));
        put("mode", self.mode.clone());
        put("iterations_2d", self.iterations_2d.map(|v| v.to_string()));
        put("slices", self.slices.map(|v| v.to_string()));
        put("tau", self.tau.map(|v| v.to_string()));
        put("clamp_min", self.clamp_min.map(|v| v.to_string()));
        put("clamp_max", self.clamp_max.map(|v| v.to_string()));
        put("seed", self.seed.map(|v| v.to_string()));
        put("workers", self.workers.map(|v| v.to_string()));
        put("scorer", self.scorer.clone());
        Settings::resolve(self.preset.as_deref(), self.config.as_deref(), &overrides)
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Full pipeline: align, pre-fill, propagate, correct.
    Complete(commands::CompleteArgs),
    /// Fit scale and shift and write the aligned metric depth.
    Align(commands::AlignArgs),
    /// Dense pre-fill of sparse depth by normalized Gaussian convolution.
    Prefill(commands::PrefillArgs),
    /// Dual-space propagation to the initial dense depth.
    Propagate(commands::PropagateArgs),
    /// Apply scorer outputs to an initial depth.
    Correct(commands::CorrectArgs),
    /// Evaluate a prediction against ground truth.
    Metrics(commands::MetricsArgs),
    /// Generate sparse depth patterns.
    #[command(subcommand)]
    Sample(commands::SampleCommand),
    /// Render a synthetic scene bundle.
    Synth(commands::SynthArgs),
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let style = if std::env::var_os("PSD_NO_COLOR").is_some() {
        env_logger::WriteStyle::Never
    } else {
        env_logger::WriteStyle::Auto
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .write_style(style)
        .init();
}

/// `error kind=<kind> msg="<context: cause>"` on one line.
fn error_line(err: &anyhow::Error) -> String {
    let kind = err
        .chain()
        .find_map(|e| e.downcast_ref::<psd_core::Error>())
        .map_or("cli", |e| e.kind());
    let msg = err.chain().map(|e| e.to_string()).collect::<Vec<_>>().join(": ");
    format!("error kind={kind} msg={msg:?}")
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    let settings = cli.tune.settings()?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(settings.workers).build()?;
    pool.install(|| match cli.command {
        Command::Complete(a) => commands::complete(&a, &settings),
        Command::Align(a) => commands::align(&a, &settings).map(|_| true),
        Command::Prefill(a) => commands::prefill(&a, &settings).map(|_| true),
        Command::Propagate(a) => commands::propagate(&a, &settings).map(|_| true),
        Command::Correct(a) => commands::correct(&a, &settings).map(|_| true),
        Command::Metrics(a) => commands::metrics(&a).map(|_| true),
        Command::Sample(c) => commands::sample(&c, &settings).map(|_| true),
        Command::Synth(a) => commands::synth(&a, &settings).map(|_| true),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose);
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("{}", error_line(&e));
            ExitCode::FAILURE
        }
    }
}
