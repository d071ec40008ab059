use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use zakharov_core::experiments::{self, config_keys_with_defaults, ExperimentKind, ExperimentSpec, MANIFEST_FILE};
use zakharov_core::{Error, Execution};

#[derive(Parser, Debug)]
#[command(name = "zakharov", version, about = "Solitons and multi-solitons of the 1D Zakharov system")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// JSON spec with optional `kind`, `numerics`, `solitons`, `knobs` and `seed` blocks.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root directory for run directories.
    #[arg(long, global = true, default_value = "runs")]
    output_dir: PathBuf,
    /// Override a config value by dotted path, e.g. `--set numerics.dt=5e-4`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Seed for randomized perturbations; overrides `seed` in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to the available cores.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Run on a single thread without the data-parallel paths.
    #[arg(long, global = true)]
    sequential: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evolve the multi-soliton profile forward and record functionals.
    Simulate,
    /// Backward construction from exact multi-soliton data at t_final.
    BackwardMsw,
    /// Track modulation parameters along a backward run.
    ModulateTrack,
    /// Weinstein functional decomposition, modulation effect on G1 and G0 drift.
    WeinsteinAudit,
    /// Constrained minima of the linearized forms.
    Coercivity {
        /// Pulsation; with --c, computes a single report instead of the knobs sweep.
        #[arg(long, requires = "c")]
        omega: Option<f64>,
        #[arg(long, requires = "omega", allow_negative_numbers = true)]
        c: Option<f64>,
        /// Localization scale of the weighted form.
        #[arg(long = "B")]
        b: Option<f64>,
    },
    /// Localized masses and momenta along a backward run.
    LocalQuantities,
    /// Time-step convergence of the integrator.
    ConvergenceOrder,
    /// Parse and validate a spec, then print it in normalized form.
    ValidateConfig,
}

fn help_footer() -> String {
    let mut s = String::from("Config keys (dotted path = default):\n");
    for (k, v) in config_keys_with_defaults() {
        s.push_str(&format!("  {k} = {v}\n"));
    }
    s.push_str("\nExit codes: 0 success, 1 configuration error, 2 numerical failure.");
    s
}

fn load_spec(common: &Common) -> Result<ExperimentSpec, Error> {
    let mut spec = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::config("--config", format!("{}: {e}", path.display())))?;
            ExperimentSpec::from_json(&text)?
        }
        None => ExperimentSpec::default(),
    };
    let mut pairs = Vec::new();
    for raw in &common.overrides {
        let (k, v) = raw
            .split_once('=')
            .ok_or_else(|| Error::config("--set", format!("expected KEY=VALUE, got `{raw}`")))?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    if !pairs.is_empty() {
        spec = spec.with_overrides(&pairs)?;
    }
    if let Some(seed) = common.seed {
        spec.seed = seed;
    }
    Ok(spec)
}

fn execute(command: &Command, common: &Common) -> Result<Option<PathBuf>, Error> {
    let mut spec = load_spec(common)?;
    let kind = match command {
        Command::ValidateConfig => {
            spec.validate()?;
            println!("{}", serde_json::to_string_pretty(&spec)?);
            return Ok(None);
        }
        Command::Simulate => ExperimentKind::Simulate,
        Command::BackwardMsw => ExperimentKind::BackwardMsw,
        Command::ModulateTrack => ExperimentKind::ModulationTrack,
        Command::WeinsteinAudit => ExperimentKind::WeinsteinAudit,
        Command::LocalQuantities => ExperimentKind::LocalQuantities,
        Command::ConvergenceOrder => ExperimentKind::ConvergenceOrder,
        Command::Coercivity { omega, c, b } => {
            if let (Some(omega), Some(c)) = (omega, c) {
                spec.knobs.sweep_omegas = vec![*omega];
                spec.knobs.sweep_speeds = vec![*c];
            }
            if let Some(b) = b {
                spec.knobs.weights = vec![*b];
            }
            ExperimentKind::CoercivitySweep
        }
    };
    spec.kind = kind;
    spec.validate()?;
    let execution = if common.sequential { Execution::Sequential } else { Execution::Parallel };
    let root = &common.output_dir;
    let dir = experiments::run_dir(&spec, root);
    match experiments::run(&spec, root, execution) {
        Ok(manifest) => {
            summarize(&manifest);
            Ok(Some(dir.join(MANIFEST_FILE)))
        }
        Err(e) => {
            let path = dir.join(MANIFEST_FILE);
            if path.exists() {
                eprintln!("incomplete manifest written to {}", path.display());
            }
            Err(e)
        }
    }
}

fn summarize(m: &experiments::RunManifest) {
    for (name, f) in &m.fits {
        eprintln!(
            "fit {name}: rate {:.6} R^2 {:.6} on t in [{}, {}] ({} points)",
            f.rate, f.r_squared, f.t_window[0], f.t_window[1], f.points
        );
    }
    for (name, v) in &m.values {
        eprintln!("{name} = {v:.6e}");
    }
    for (name, ok) in &m.checks {
        eprintln!("check {name}: {}", if *ok { "pass" } else { "FAIL" });
    }
    for note in &m.notes {
        eprintln!("note: {note}");
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } | Error::Json(_) | Error::Io(_) => 1,
        _ => 2,
    }
}

fn describe(e: &Error) -> String {
    match e {
        Error::Config { .. } => format!("configuration error: {e}"),
        Error::Integrator { .. } => format!("numerical failure in dynamics: {e}"),
        Error::Eigen(_) => format!("numerical failure in spectral: {e}"),
        Error::Fit(_) => format!("numerical failure in experiments: {e}"),
        _ => format!("error: {e}"),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    let matches = Cli::command().after_long_help(help_footer()).after_help(help_footer()).get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    if let Some(w) = cli.common.workers {
        zakharov_core::par::set_workers(w);
    }
    match execute(&cli.command, &cli.common) {
        Ok(Some(path)) => {
            println!("{}", path.display());
            ExitCode::SUCCESS
        }
        Ok(None) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
