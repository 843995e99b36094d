use clap::{Parser, Subcommand};
use guardsim::harness::{run, RunLog, Scenario};
use guardsim::metrics;
use std::path::PathBuf;
use std::process::ExitCode;

const EXIT_CONFIG: u8 = 2;
const EXIT_DIVERGED: u8 = 3;

#[derive(Parser)]
#[command(
    name = "guardsim",
    about = "Simulator for a thruster-guarded flapping-wing robot",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario file and write the run log.
    Run {
        /// Scenario TOML path.
        scenario: PathBuf,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Log output path (defaults to run_log.csv).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the simulated duration, s.
        #[arg(long)]
        duration: Option<f64>,
        /// Override the controller gain preset (test1 .. test5).
        #[arg(long)]
        preset: Option<String>,
    },
    /// Compute the error metrics of a run log.
    Analyze {
        /// Run log CSV path.
        log: PathBuf,
        /// Optional CSV report output path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Inspect the named controller gain presets.
    Presets {
        #[command(subcommand)]
        action: PresetsAction,
    },
    /// Run the verification suite and print one line per criterion.
    Verify,
}

#[derive(Subcommand)]
enum PresetsAction {
    /// List the preset names.
    List,
    /// Print a full scenario TOML for one preset.
    Show { name: String },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            scenario,
            seed,
            out,
            duration,
            preset,
        } => cmd_run(scenario, seed, out, duration, preset),
        Command::Analyze { log, out } => cmd_analyze(log, out),
        Command::Presets { action } => cmd_presets(action),
        Command::Verify => cmd_verify(),
    }
}

fn cmd_run(
    path: PathBuf,
    seed: Option<u64>,
    out: Option<PathBuf>,
    duration: Option<f64>,
    preset: Option<String>,
) -> ExitCode {
    let mut scenario = match Scenario::load(&path) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if let Some(seed) = seed {
        scenario.run.seed = seed;
    }
    if let Some(duration) = duration {
        scenario.run.duration = duration;
    }
    if let Some(preset) = preset {
        scenario.control.preset = preset;
        scenario.control.position = None;
    }
    if let Err(e) = scenario.validate() {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_CONFIG);
    }
    let outcome = match run(&scenario) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let out_path = out.unwrap_or_else(|| PathBuf::from("run_log.csv"));
    if let Err(e) = outcome.log.save(&out_path) {
        eprintln!("error: {e}");
        return ExitCode::FAILURE;
    }
    println!(
        "wrote {} rows to {}",
        outcome.log.rows.len(),
        out_path.display()
    );
    if outcome.diverged {
        eprintln!("run diverged; log is partial");
        return ExitCode::from(EXIT_DIVERGED);
    }
    ExitCode::SUCCESS
}

fn cmd_analyze(path: PathBuf, out: Option<PathBuf>) -> ExitCode {
    let log = match RunLog::load(&path) {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if !log.complete {
        eprintln!("note: log is flagged partial (diverged run)");
    }
    let report = match metrics::analyze(&log) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into());
    let rows = vec![(name, report)];
    print!("{}", metrics::report_table(&rows));
    if let Some(out_path) = out {
        if let Err(e) = std::fs::write(&out_path, metrics::report_csv(&rows)) {
            eprintln!("error: cannot write {}: {e}", out_path.display());
            return ExitCode::FAILURE;
        }
        println!("wrote report to {}", out_path.display());
    }
    ExitCode::SUCCESS
}

fn cmd_presets(action: PresetsAction) -> ExitCode {
    match action {
        PresetsAction::List => {
            for name in guardsim::control::PRESET_NAMES {
                println!("{name}");
            }
            ExitCode::SUCCESS
        }
        PresetsAction::Show { name } => match Scenario::preset(&name) {
            Some(s) => {
                print!("{}", s.to_toml_string().expect("scenario serializes"));
                ExitCode::SUCCESS
            }
            None => {
                eprintln!(
                    "error: unknown preset {name:?}; known: {:?}",
                    guardsim::control::PRESET_NAMES
                );
                ExitCode::from(EXIT_CONFIG)
            }
        },
    }
}

fn cmd_verify() -> ExitCode {
    let outcomes = guardsim::acceptance::run_all();
    let mut all_passed = true;
    for o in &outcomes {
        let tag = if o.passed { "PASS" } else { "FAIL" };
        println!("[{tag}] {} — {}", o.name, o.detail);
        all_passed &= o.passed;
    }
    if all_passed {
        println!("{} criteria passed", outcomes.len());
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
