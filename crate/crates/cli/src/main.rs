use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dracs_core::config::{self, load_file, LoadedConfig};
use dracs_core::experiment::{read_csv, read_json, resummarize, run_experiment, ExperimentSpec};
use dracs_core::policies::{BaselineMode, PolicyKind};
use dracs_core::solver::{brute_force_round, solve_round, RoundProblem};
use dracs_core::sysmodel::sample_channel;

#[derive(Parser)]
#[command(name = "dracs", version, about = "Simulate client scheduling and resource allocation for blockchain-assisted FL")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation or a sweep over V, seeds and policies.
    Run(RunArgs),
    /// Load a config and print it in SI units.
    Validate(ValidateArgs),
    /// Recompute JSON summaries from the CSVs in an output directory.
    Summarize {
        #[arg(long)]
        output: PathBuf,
    },
    /// Compare the per-round solver with a brute-force grid on random rounds.
    Oracle(OracleArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated policies; defaults to the config's.
    #[arg(long, value_delimiter = ',')]
    policy: Vec<PolicyKind>,
    /// Comma-separated V values; defaults to the config's.
    #[arg(long = "v", value_delimiter = ',')]
    v: Vec<f64>,
    /// Comma-separated seeds; defaults to the config's.
    #[arg(long, value_delimiter = ',')]
    seed: Vec<u64>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    output: PathBuf,
    /// Worker threads for sweep cells (0: one per core).
    #[arg(long, default_value_t = 0)]
    workers: usize,
    #[arg(long)]
    stochastic_mining: bool,
    /// Brute-force cross-check of every DRACS round (at most 3 clients).
    #[arg(long)]
    oracle: bool,
    #[arg(long)]
    baseline_mode: Option<BaselineMode>,
    #[arg(long)]
    metric_every: Option<usize>,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long, required_unless_present = "paper_params")]
    config: Option<PathBuf>,
    /// Validate the bundled parameter-table config instead of a file.
    #[arg(long)]
    paper_params: bool,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 100)]
    instances: usize,
    #[arg(long, default_value_t = 8)]
    levels: usize,
    /// Keep only the first N clients of the config.
    #[arg(long, default_value_t = 2)]
    clients: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Validate(args) => validate(args),
        Command::Summarize { output } => summarize(&output),
        Command::Oracle(args) => oracle(args),
    };
    match result {
        Ok(code) => code,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
    }
}

fn run(args: RunArgs) -> Result<ExitCode, String> {
    let mut base = load_file(&args.config).map_err(|e| e.to_string())?.sim;
    if let Some(rounds) = args.rounds {
        base.rounds = rounds;
    }
    if let Some(mode) = args.baseline_mode {
        base.baseline_mode = mode;
    }
    if let Some(every) = args.metric_every {
        base.metric_every = every;
    }
    base.stochastic_mining |= args.stochastic_mining;
    base.oracle |= args.oracle;
    base.validate().map_err(|e| e.to_string())?;

    let mut spec = ExperimentSpec::single(base, args.output);
    if !args.policy.is_empty() {
        spec.policies = args.policy;
    }
    if !args.v.is_empty() {
        spec.v_values = args.v;
    }
    if !args.seed.is_empty() {
        spec.seeds = args.seed;
    }
    let outcomes = run_experiment(&spec, args.workers).map_err(|e| e.to_string())?;
    let mut failed = 0;
    for o in &outcomes {
        match &o.result {
            Ok(s) => {
                let energy: Vec<String> = s.lta.lta_energy.iter().map(|e| format!("{e:.4}")).collect();
                println!(
                    "{}: rounds={} time={:.1}s D_bar={:.3} E_bar=[{}]",
                    o.cell.stem(),
                    s.lta.rounds,
                    s.lta.total_time,
                    s.lta.lta_data,
                    energy.join(", ")
                );
            }
            Err(e) => {
                failed += 1;
                eprintln!("{}: failed: {e}", o.cell.stem());
            }
        }
    }
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn validate(args: ValidateArgs) -> Result<ExitCode, String> {
    let LoadedConfig { sim, conversions } = match &args.config {
        Some(path) if !args.paper_params => load_file(path).map_err(|e| e.to_string())?,
        _ => config::reference(),
    };
    for c in &conversions {
        println!("{c}");
    }
    let s = &sim.system;
    println!("noise power = {:e} W", s.noise_power());
    println!("mining work = {:e} cycles", s.mining_work());
    println!("clients = {}, rounds = {}, policy = {}, V = {}", sim.profiles.len(), sim.rounds, sim.policy, s.lyapunov_v);
    Ok(ExitCode::SUCCESS)
}

fn summarize(dir: &Path) -> Result<ExitCode, String> {
    let mut jsons: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| format!("{}: {e}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    jsons.sort();
    if jsons.is_empty() {
        return Err(format!("no summaries in {}", dir.display()));
    }
    let mut mismatches = 0;
    for json in &jsons {
        let csv = json.with_extension("csv");
        let stored = read_json(json).map_err(|e| e.to_string())?;
        let records = read_csv(&csv).map_err(|e| e.to_string())?;
        let recomputed = resummarize(&stored, records);
        let ok = recomputed == stored;
        mismatches += usize::from(!ok);
        println!(
            "{}: D_bar={:.6} {}",
            json.file_stem().unwrap_or_default().to_string_lossy(),
            recomputed.lta.lta_data,
            if ok { "reproduced" } else { "MISMATCH" }
        );
    }
    Ok(if mismatches == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn oracle(args: OracleArgs) -> Result<ExitCode, String> {
    let mut sim = load_file(&args.config).map_err(|e| e.to_string())?.sim;
    sim.profiles.truncate(args.clients);
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..args.instances {
        let channel = sample_channel(&mut rng, &sim.profiles, &sim.system);
        let queues: Vec<f64> = sim.profiles.iter().map(|_| rng.random_range(0.0..5e4)).collect();
        let problem = RoundProblem::new(&sim.profiles, &sim.system, &channel, &queues).map_err(|e| e.to_string())?;
        let solved = solve_round(&problem).map_err(|e| e.to_string())?;
        let grid = brute_force_round(&problem, args.levels).map_err(|e| e.to_string())?;
        worst = worst.max((solved.ratio - grid.ratio) / grid.ratio.abs());
    }
    println!("instances = {}, worst relative gap (solver - grid) = {worst:.3e}", args.instances);
    Ok(if worst <= 0.02 { ExitCode::SUCCESS } else { ExitCode::from(1) })
}
