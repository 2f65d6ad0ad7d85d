use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dgmm::experiments::{self, ExperimentConfig, SizeKnowledge};
use dgmm::mle::{solve_known_sizes_with, solve_unknown_sizes_with, SolverOptions};
use dgmm::vertexsum::{VertexSumConfig, VertexSumObjective};
use dgmm::{verify, ObservationMatrix, SignalModel};

#[derive(Parser)]
#[command(name = "dgmm", version, about = "Exact maximum-likelihood community detection with dependent Gaussian noise")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw one observation of the vertex-sum model and write it as CSV.
    Simulate {
        /// Model file with keys n, alpha, s and seed.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Write the noiseless signal of the true assignment.
        #[arg(long)]
        noiseless: bool,
    },
    /// Solve for the maximum-likelihood assignment of a CSV observation.
    Mle {
        /// Model file with keys n, alpha, s (seed is ignored).
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_name = "BOOL", default_value_t = false, action = clap::ArgAction::Set)]
        size_known: bool,
        /// Write the estimated assignment (1-based labels) here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a recovery experiment and write per-trial and summary CSVs.
    Experiment {
        /// Experiment file; defaults to the low-noise, unknown-sizes preset.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long, value_name = "BOOL", action = clap::ArgAction::Set)]
        size_known: Option<bool>,
        /// Per-trial CSV; the summary goes next to it as `<stem>_summary.csv`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the self-check suite and print one line per check.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

enum Failure {
    Validation(String),
    Check,
}

impl From<dgmm::Error> for Failure {
    fn from(e: dgmm::Error) -> Self {
        Failure::Validation(e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Validation(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Check) => ExitCode::from(2),
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Simulate { config, seed, out, noiseless } => simulate(&config, seed, &out, noiseless),
        Command::Mle { config, input, size_known, out } => mle(&config, &input, size_known, out.as_deref()),
        Command::Experiment { config, seed, trials, size_known, out } => {
            experiment(config.as_deref(), seed, trials, size_known, &out)
        }
        Command::Verify { seed } => run_verify(seed),
    }
}

fn read_model(path: &Path) -> Result<VertexSumConfig, Failure> {
    Ok(VertexSumConfig::parse(&std::fs::read_to_string(path)?)?)
}

fn simulate(config: &Path, seed: Option<u64>, out: &Path, noiseless: bool) -> Result<(), Failure> {
    let cfg = read_model(config)?;
    let spec = cfg.spec;
    let y = spec.truth();
    let k_obs = if noiseless { spec.signal(&y) } else { spec.observe(&y, seed.unwrap_or(cfg.seed))? };
    k_obs.write_csv(out)?;
    println!("wrote {}x{} observation to {}", k_obs.rows(), k_obs.cols(), out.display());
    println!("truth: {}", y.to_csv_row());
    Ok(())
}

fn mle(config: &Path, input: &Path, size_known: bool, out: Option<&Path>) -> Result<(), Failure> {
    let spec = read_model(config)?.spec;
    let k_obs = ObservationMatrix::read_csv(input)?;
    let obj = VertexSumObjective::new(&spec, &k_obs)?;
    let opts = SolverOptions::default();
    let mut result = if size_known {
        solve_known_sizes_with(&obj, &spec.sizes(), &opts)?
    } else {
        solve_unknown_sizes_with(&obj, 0.0, &opts)?
    };
    let y = spec.truth();
    result.mark_truth(&obj, &y);
    println!("minimizer: {}", result.minimizer.to_csv_row());
    println!("objective: {}", result.objective);
    println!("tied: {} ({} minimal classes)", result.tied, result.minimal_classes);
    println!("recovered: {}", result.recovered(false));
    if let Some(path) = out {
        std::fs::write(path, format!("{}\n", result.minimizer.to_csv_row()))?;
    }
    Ok(())
}

fn experiment(
    config: Option<&Path>,
    seed: Option<u64>,
    trials: Option<usize>,
    size_known: Option<bool>,
    out: &Path,
) -> Result<(), Failure> {
    let mut cfg = match config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = seed {
        cfg.base_seed = seed;
    }
    if let Some(trials) = trials {
        cfg.trials = trials;
    }
    if let Some(known) = size_known {
        cfg.size_knowledge = if known { SizeKnowledge::Known } else { SizeKnowledge::Unknown };
    }
    let result = experiments::run_experiment(&cfg)?;
    experiments::write_records(&result.records, BufWriter::new(File::create(out)?))?;
    let summary_path = experiments::summary_path(out);
    experiments::write_summary(&result.summary, BufWriter::new(File::create(&summary_path)?))?;
    let stdout = io::stdout();
    let mut w = stdout.lock();
    writeln!(w, "n,rate,stderr")?;
    for row in &result.summary {
        writeln!(w, "{},{:.4},{:.4}", row.n, row.rate, row.stderr)?;
    }
    writeln!(w, "records: {}", out.display())?;
    writeln!(w, "summary: {}", summary_path.display())?;
    Ok(())
}

fn run_verify(seed: u64) -> Result<(), Failure> {
    let outcomes = verify::run_all(seed);
    for o in &outcomes {
        println!("{o}");
    }
    if outcomes.iter().all(|o| o.passed) {
        Ok(())
    } else {
        Err(Failure::Check)
    }
}
