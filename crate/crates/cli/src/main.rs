use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use phasebal::engine::templates::{generate, TEMPLATES};
use phasebal::engine::{
    load_profiles, read_bus_records, summarize, write_bus_records, write_household_records, write_profiles, ErrorKind,
    RunSummary, ScenarioConfig, SimError, Simulation,
};

#[derive(Parser)]
#[command(name = "phasebal", version, about = "Distributed phase clustering and battery phase balancing for LV buses")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic scenario and its profiles.
    Gen {
        /// One of: nine-house, balanced, single-phase-load.
        template: String,
        #[arg(long, default_value_t = 9)]
        households: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory for scenario.toml and profiles.csv.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Simulate a scenario over its horizon.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        profiles: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Replaces the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        no_balancing: bool,
        /// Also write households.csv.
        #[arg(long)]
        emit_per_household: bool,
        /// Check every step against brute-force and centralized oracles.
        #[arg(long)]
        verify: bool,
    },
    /// Summarize a records file written by `run`.
    Report { records: PathBuf },
}

/// An error with the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

const CONFIG: u8 = 2;
const DATA: u8 = 3;
const RUNTIME: u8 = 4;

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        let code = match e.kind() {
            ErrorKind::Config => CONFIG,
            ErrorKind::Data => DATA,
            ErrorKind::Runtime => RUNTIME,
        };
        Failure { code, error: e.into() }
    }
}

trait ExitWith<T> {
    fn exit_with(self, code: u8) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> ExitWith<T> for Result<T, E> {
    fn exit_with(self, code: u8) -> Result<T, Failure> {
        self.map_err(|e| Failure { code, error: e.into() })
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen {
            template,
            households,
            seed,
            out,
        } => cmd_gen(&template, households, seed, &out),
        Command::Run {
            config,
            profiles,
            out_dir,
            seed,
            no_balancing,
            emit_per_household,
            verify,
        } => cmd_run(&RunArgs {
            config,
            profiles,
            out_dir,
            seed,
            no_balancing,
            emit_per_household,
            verify,
        }),
        Command::Report { records } => cmd_report(&records),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .with_context(|| format!("cannot create {}", path.display()))
        .exit_with(RUNTIME)
}

fn cmd_gen(template: &str, households: usize, seed: u64, out: &Path) -> Result<(), Failure> {
    if !TEMPLATES.contains(&template) {
        return Err(anyhow!("unknown template {template:?}; available: {}", TEMPLATES.join(", "))).exit_with(CONFIG);
    }
    let (config, profiles) = generate(template, households, seed)?;
    fs::create_dir_all(out)
        .with_context(|| format!("cannot create {}", out.display()))
        .exit_with(RUNTIME)?;
    let scenario = out.join("scenario.toml");
    fs::write(&scenario, config.to_toml())
        .with_context(|| format!("cannot write {}", scenario.display()))
        .exit_with(RUNTIME)?;
    let profile_path = out.join("profiles.csv");
    let mut w = create(&profile_path)?;
    write_profiles(&profiles, &mut w)
        .and_then(|_| w.flush())
        .with_context(|| format!("cannot write {}", profile_path.display()))
        .exit_with(RUNTIME)?;
    println!("wrote {} and {}", scenario.display(), profile_path.display());
    Ok(())
}

struct RunArgs {
    config: PathBuf,
    profiles: PathBuf,
    out_dir: PathBuf,
    seed: Option<u64>,
    no_balancing: bool,
    emit_per_household: bool,
    verify: bool,
}

fn cmd_run(args: &RunArgs) -> Result<(), Failure> {
    let mut config = ScenarioConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.simulation.seed = seed;
    }
    if args.no_balancing {
        config.simulation.balancing = false;
    }
    let profiles = load_profiles(&args.profiles).map_err(SimError::from)?;
    let sim = Simulation::new(config, profiles)?.with_verify(args.verify);

    fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("cannot create {}", args.out_dir.display()))
        .exit_with(RUNTIME)?;
    let effective = args.out_dir.join("effective-config.toml");
    fs::write(&effective, sim.resolved_config().to_toml())
        .with_context(|| format!("cannot write {}", effective.display()))
        .exit_with(RUNTIME)?;

    let out = sim.run()?;

    let records = args.out_dir.join("records.csv");
    let mut w = create(&records)?;
    write_bus_records(&out.buses, &mut w)
        .and_then(|_| w.flush())
        .with_context(|| format!("cannot write {}", records.display()))
        .exit_with(RUNTIME)?;
    if args.emit_per_household {
        let path = args.out_dir.join("households.csv");
        let mut w = create(&path)?;
        write_household_records(&out.households, &mut w)
            .and_then(|_| w.flush())
            .with_context(|| format!("cannot write {}", path.display()))
            .exit_with(RUNTIME)?;
    }
    let summary_path = args.out_dir.join("summary.json");
    let json = serde_json::to_string_pretty(&out.summary).exit_with(RUNTIME)?;
    fs::write(&summary_path, json + "\n")
        .with_context(|| format!("cannot write {}", summary_path.display()))
        .exit_with(RUNTIME)?;

    print!("{}", render(&out.summary));
    if args.verify {
        println!("verify: all steps agree with the oracles within 1e-6");
    }
    Ok(())
}

fn cmd_report(path: &Path) -> Result<(), Failure> {
    let file = File::open(path)
        .with_context(|| format!("cannot open {}", path.display()))
        .exit_with(DATA)?;
    let records = read_bus_records(file).map_err(|e| Failure {
        code: DATA,
        error: anyhow::Error::from(e).context(path.display().to_string()),
    })?;
    let summary = summarize(&records)?;
    print!("{}", render(&summary));
    Ok(())
}

fn percent(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.2}%")
    } else {
        "unbounded (no positive-sequence current)".into()
    }
}

fn render(s: &RunSummary) -> String {
    format!(
        "steps: {} (buses: {})\n\
         |I_N| pre: max {:.4} A, mean {:.4} A\n\
         |I_N| post: max {:.4} A, mean {:.4} A\n\
         max CUF pre: {}\n\
         max CUF post: {}\n\
         max NGV proxy pre: {:.4} V\n\
         max NGV proxy post: {:.4} V\n\
         clustering accuracy: mean {:.2}%, min {:.2}%, first step {:.2}%\n\
         battery throughput: {:.3} kWh\n\
         total deficit: {:.3} kWh\n",
        s.steps,
        s.buses,
        s.max_in_pre,
        s.mean_in_pre,
        s.max_in_post,
        s.mean_in_post,
        percent(s.max_cuf_pre),
        percent(s.max_cuf_post),
        s.max_ngv_pre,
        s.max_ngv_post,
        100.0 * s.clustering_accuracy_mean,
        100.0 * s.clustering_accuracy_min,
        100.0 * s.clustering_accuracy_first,
        s.battery_throughput_kwh,
        s.total_deficit_kwh,
    )
}
