//! `bail` — batch RL from the command line: generate batches, fit upper
//! envelopes, select best actions, clone policies, and run full scored
//! pipelines.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bail_core::dataset::{
    batch_statistics, compute_augmented_returns, compute_returns, export_returns_csv, load_batch,
    save_batch, split_train_validation, ReturnsTable,
};
use bail_core::envelope::{
    envelope_value, load_envelope, save_envelope, train_upper_envelope, EnvelopeConfig,
};
use bail_core::envs::{
    generate_execution_batch, generate_oracle_batch, generate_training_batch, make_env,
};
use bail_core::error::{Error, Result};
use bail_core::harness::{
    compare_runs, evaluate_policy, parse_policy_base, run_pipeline, verify_theorems, Algorithm,
    BatchSource, ReturnsMode, RunConfig, VerifyConfig,
};
use bail_core::imitation::{load_policy, save_policy, train_policy_bc, PolicyConfig};
use bail_core::selection::{
    export_selection_csv, load_selection_indices, select_auto, select_difference, select_ratio,
    select_top_returns, selection_keys, SelectionRule,
};

#[derive(Parser)]
#[command(name = "bail", about = "Batch RL via upper-envelope best-action imitation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a batch file from a toy environment.
    GenBatch(GenBatchArgs),
    /// Fit an upper envelope on a batch file.
    TrainEnvelope(TrainEnvelopeArgs),
    /// Select best state-action pairs and export the selection CSV.
    Select(SelectArgs),
    /// Train a policy by behavior cloning (optionally on a selection).
    Clone(CloneArgs),
    /// Evaluate a policy checkpoint over test episodes.
    Eval(EvalArgs),
    /// Run a full scored pipeline across seeds.
    Run(RunArgs),
    /// Run the progressive (joint envelope + policy) pipeline.
    Progressive(RunArgs),
    /// Check the envelope limit claims and the augmentation heuristic.
    Verify(VerifyArgs),
    /// Compare the final scores of several run directories.
    Compare(CompareArgs),
}

#[derive(Args)]
struct GenBatchArgs {
    #[arg(long, default_value = "hill_climb")]
    env: String,
    /// training | execution | oracle
    #[arg(long, default_value = "training")]
    kind: String,
    #[arg(long, default_value_t = 30_000)]
    m: usize,
    #[arg(long, default_value_t = 0.5)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 150)]
    time_cap: usize,
    /// Base policy for execution batches: expert | mediocre | uniform | <checkpoint>.
    #[arg(long, default_value = "mediocre")]
    policy: String,
    /// Discount for oracle returns (defaults by horizon).
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, default_value_t = 2)]
    time_cap_multiplier: usize,
    #[arg(long)]
    out: PathBuf,
    /// Where to write the oracle returns CSV (oracle kind only).
    #[arg(long)]
    returns_csv: Option<PathBuf>,
}

#[derive(Args)]
struct ReturnsArgs {
    /// plain | augmented
    #[arg(long, default_value = "augmented")]
    returns: String,
    #[arg(long)]
    gamma: Option<f64>,
}

impl ReturnsArgs {
    fn table(&self, batch: &bail_core::dataset::Batch) -> Result<ReturnsTable> {
        let time_cap = batch.metadata().time_cap;
        let gamma = self
            .gamma
            .unwrap_or(if time_cap >= 1000 { 0.99 } else { 0.95 });
        match self.returns.as_str() {
            "plain" => compute_returns(batch, gamma),
            "augmented" => compute_augmented_returns(batch, gamma),
            other => Err(Error::Config(format!(
                "unknown returns kind `{other}` (plain | augmented)"
            ))),
        }
    }
}

#[derive(Args)]
struct EnvelopeFlags {
    #[arg(long, value_delimiter = ',', default_values_t = vec![128, 128])]
    hidden: Vec<usize>,
    #[arg(long, default_value_t = 3e-3)]
    lr: f64,
    #[arg(long, default_value_t = 1000.0)]
    k: f64,
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    #[arg(long, default_value_t = 256)]
    minibatch: usize,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 4)]
    patience: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    normalize: bool,
}

impl EnvelopeFlags {
    fn config(&self) -> EnvelopeConfig {
        EnvelopeConfig {
            hidden_sizes: self.hidden.clone(),
            learning_rate: self.lr,
            penalty_k: self.k,
            lambda: self.lambda,
            minibatch_size: self.minibatch,
            max_epochs: self.epochs,
            patience: self.patience,
            seed: self.seed,
            normalize_inputs: self.normalize,
        }
    }
}

#[derive(Args)]
struct TrainEnvelopeArgs {
    #[arg(long)]
    batch: PathBuf,
    #[command(flatten)]
    returns: ReturnsArgs,
    #[command(flatten)]
    envelope: EnvelopeFlags,
    #[arg(long, default_value_t = 0.8)]
    fraction: f64,
    #[arg(long, default_value_t = 0)]
    split_seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct SelectArgs {
    #[arg(long)]
    batch: PathBuf,
    #[command(flatten)]
    returns: ReturnsArgs,
    /// auto | ratio | difference | top_g
    #[arg(long, default_value = "auto")]
    rule: String,
    /// Envelope checkpoint (required unless rule is top_g).
    #[arg(long)]
    envelope: Option<PathBuf>,
    #[arg(long, default_value_t = 30.0)]
    p: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CloneArgs {
    #[arg(long)]
    batch: PathBuf,
    /// Selection CSV; omitted means vanilla behavior cloning on everything.
    #[arg(long)]
    selection: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![400, 300])]
    hidden: Vec<usize>,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 256)]
    minibatch: usize,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long, default_value = "hill_climb")]
    env: String,
    #[arg(long, default_value_t = 150)]
    time_cap: usize,
    #[arg(long)]
    policy: PathBuf,
    #[arg(long, default_value_t = 10)]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct RunArgs {
    /// JSON run-config file; its fields override the flag defaults below.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "hill_climb")]
    env: String,
    #[arg(long, default_value_t = 150)]
    time_cap: usize,
    #[arg(long)]
    gamma: Option<f64>,
    /// bail | progressive_bail | bc | top_g | regression_value
    #[arg(long, default_value = "bail")]
    algorithm: String,
    /// Batch file to share across seeds (otherwise batches are generated).
    #[arg(long)]
    batch_file: Option<PathBuf>,
    /// Generator for non-file sources: training | execution.
    #[arg(long, default_value = "training")]
    batch_kind: String,
    #[arg(long, default_value_t = 30_000)]
    m: usize,
    #[arg(long, default_value_t = 0.5)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    batch_seed: u64,
    /// Base policy for execution generation.
    #[arg(long, default_value = "mediocre")]
    behavior: String,
    #[arg(long)]
    p: Option<f64>,
    /// plain | augmented
    #[arg(long, default_value = "augmented")]
    returns: String,
    #[command(flatten)]
    envelope: EnvelopeFlags,
    #[arg(long, value_delimiter = ',', default_values_t = vec![400, 300])]
    policy_hidden: Vec<usize>,
    #[arg(long, default_value_t = 1e-3)]
    policy_lr: f64,
    #[arg(long, default_value_t = 256)]
    policy_minibatch: usize,
    #[arg(long, default_value_t = 50)]
    policy_epochs: usize,
    #[arg(long, default_value_t = 0.5)]
    eval_interval: f64,
    #[arg(long, default_value_t = 10)]
    eval_episodes: usize,
    #[arg(long, value_delimiter = ',', default_values_t = vec![0, 1, 2, 3, 4])]
    seeds: Vec<u64>,
    #[arg(long, default_value = "runs/run")]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Where to write the JSON report (in addition to stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Run directories containing summary.json.
    #[arg(long, num_args = 2.., required = true)]
    runs: Vec<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::GenBatch(args) => gen_batch(args),
        Command::TrainEnvelope(args) => train_envelope(args),
        Command::Select(args) => select(args),
        Command::Clone(args) => clone_policy(args),
        Command::Eval(args) => eval(args),
        Command::Run(args) => run(args, None),
        Command::Progressive(args) => run(args, Some(Algorithm::ProgressiveBail)),
        Command::Verify(args) => verify(args),
        Command::Compare(args) => compare(args),
    }
}

fn gen_batch(args: GenBatchArgs) -> Result<()> {
    let env = make_env(&args.env, args.time_cap)?;
    let batch = match args.kind.as_str() {
        "training" => generate_training_batch(&env, args.m, args.sigma, args.seed)?,
        "execution" => {
            let base = parse_policy_base(&args.policy)?;
            generate_execution_batch(&env, args.m, &base, args.sigma, args.seed)?
        }
        "oracle" => {
            let gamma = args
                .gamma
                .unwrap_or(if args.time_cap >= 1000 { 0.99 } else { 0.95 });
            let (batch, oracle) = generate_oracle_batch(
                &env,
                args.m,
                None,
                args.sigma,
                args.seed,
                gamma,
                args.time_cap_multiplier,
            )?;
            if let Some(csv) = &args.returns_csv {
                export_returns_csv(&batch, &oracle, csv)?;
            }
            batch
        }
        other => {
            return Err(Error::Config(format!(
                "unknown batch kind `{other}` (training | execution | oracle)"
            )))
        }
    };
    save_batch(&batch, &args.out)?;
    let stats = batch_statistics(&batch)?;
    println!(
        "wrote {} transitions ({} episodes, mean episode return {:.4}) to {}",
        batch.len(),
        stats.episode_count,
        stats.mean_episode_return,
        args.out.display()
    );
    Ok(())
}

fn train_envelope(args: TrainEnvelopeArgs) -> Result<()> {
    let batch = load_batch(&args.batch)?;
    let returns = args.returns.table(&batch)?;
    let split = split_train_validation(&batch, args.fraction, args.split_seed)?;
    let (envelope, trace) = train_upper_envelope(&batch, &returns, &split, &args.envelope.config())?;
    save_envelope(&envelope, &args.out)?;
    if let Some(trace_path) = &args.trace {
        trace.to_csv(trace_path)?;
    }
    let best = envelope
        .validation_history
        .iter()
        .map(|&(_, l)| l)
        .fold(f64::INFINITY, f64::min);
    println!(
        "trained envelope on {} transitions, best validation loss {best:.6}, wrote {}",
        batch.len(),
        args.out.display()
    );
    Ok(())
}

fn select(args: SelectArgs) -> Result<()> {
    let batch = load_batch(&args.batch)?;
    let returns = args.returns.table(&batch)?;
    let g = returns.returns();
    let values = match &args.envelope {
        Some(path) => {
            let envelope = load_envelope(path)?;
            Some(envelope_value(&envelope, &batch.states_matrix(None))?)
        }
        None => None,
    };
    let need_values = || {
        values.as_deref().ok_or(Error::Config(
            "this rule needs --envelope for the value estimates".into(),
        ))
    };
    let (result, rule) = match args.rule.as_str() {
        "auto" => {
            let (result, fell_back) = select_auto(g, need_values()?, args.p)?;
            if fell_back {
                eprintln!("note: envelope values not strictly positive; used the difference rule");
            }
            let rule = result.rule;
            (result, rule)
        }
        "ratio" => (select_ratio(g, need_values()?, args.p)?, SelectionRule::Ratio),
        "difference" => (
            select_difference(g, need_values()?, args.p)?,
            SelectionRule::Difference,
        ),
        "top_g" => (select_top_returns(g, args.p)?, SelectionRule::TopG),
        other => {
            return Err(Error::Config(format!(
                "unknown rule `{other}` (auto | ratio | difference | top_g)"
            )))
        }
    };
    let keys = selection_keys(rule, g, values.as_deref())?;
    export_selection_csv(&result, &keys, &args.out)?;
    println!(
        "selected {} of {} transitions ({} rule, x = {}), wrote {}",
        result.indices.len(),
        batch.len(),
        result.rule,
        result.threshold_x,
        args.out.display()
    );
    Ok(())
}

fn clone_policy(args: CloneArgs) -> Result<()> {
    let batch = load_batch(&args.batch)?;
    let indices = match &args.selection {
        Some(path) => load_selection_indices(path)?,
        None => (0..batch.len()).collect(),
    };
    let config = PolicyConfig {
        hidden_sizes: args.hidden.clone(),
        learning_rate: args.lr,
        minibatch_size: args.minibatch,
        epochs: args.epochs,
        seed: args.seed,
    };
    let policy = train_policy_bc(&batch, &indices, &config)?;
    save_policy(&policy, &args.out)?;
    println!(
        "cloned {} transitions into a policy, wrote {}",
        indices.len(),
        args.out.display()
    );
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    let env = make_env(&args.env, args.time_cap)?;
    let policy = load_policy(&args.policy)?;
    let record = evaluate_policy(&env, &policy, args.episodes, args.seed);
    println!(
        "mean return {:.4} (std {:.4}) over {} episodes, {} faults",
        record.mean,
        record.std,
        record.returns.len(),
        record.faults
    );
    Ok(())
}

fn run(args: RunArgs, force_algorithm: Option<Algorithm>) -> Result<()> {
    let source = match &args.batch_file {
        Some(path) => BatchSource::File { path: path.clone() },
        None => match args.batch_kind.as_str() {
            "training" => BatchSource::Training {
                m: args.m,
                sigma: args.sigma,
                seed: args.batch_seed,
            },
            "execution" => BatchSource::Execution {
                m: args.m,
                sigma: args.sigma,
                seed: args.batch_seed,
                policy: args.behavior.clone(),
            },
            other => {
                return Err(Error::Config(format!(
                    "unknown batch kind `{other}` (training | execution)"
                )))
            }
        },
    };
    let algorithm = match force_algorithm {
        Some(a) => a,
        None => args.algorithm.parse()?,
    };
    let returns_mode = match args.returns.as_str() {
        "plain" => ReturnsMode::Plain,
        "augmented" => ReturnsMode::Augmented,
        other => {
            return Err(Error::Config(format!(
                "unknown returns kind `{other}` (plain | augmented)"
            )))
        }
    };
    let mut config = RunConfig {
        env: args.env.clone(),
        time_cap: args.time_cap,
        gamma: args.gamma,
        source,
        algorithm,
        envelope: args.envelope.config(),
        policy: PolicyConfig {
            hidden_sizes: args.policy_hidden.clone(),
            learning_rate: args.policy_lr,
            minibatch_size: args.policy_minibatch,
            epochs: args.policy_epochs,
            seed: 0,
        },
        p_percent: args.p,
        returns_mode,
        train_fraction: 0.8,
        eval_interval: args.eval_interval,
        eval_episodes: args.eval_episodes,
        seeds: args.seeds.clone(),
        output_dir: args.out.clone(),
    };
    if let Some(path) = &args.config {
        config = merge_config_file(config, path)?;
    }
    if let Ok(out) = std::env::var("BAIL_OUT") {
        config.output_dir = PathBuf::from(out);
    }
    let summary = run_pipeline(&config)?;
    for report in &summary.per_seed {
        match (&report.final_score, &report.error) {
            (Some(score), _) => println!("seed {}: final score {score:.4}", report.seed),
            (None, Some(err)) => println!("seed {}: failed ({err})", report.seed),
            _ => {}
        }
    }
    println!(
        "{}: final score {:.4} +/- {:.4}, outputs in {}",
        summary.algorithm,
        summary.final_score.mean,
        summary.final_score.std,
        config.output_dir.display()
    );
    Ok(())
}

/// Fields present in the JSON file override the flag-built config.
fn merge_config_file(base: RunConfig, path: &PathBuf) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    let overrides: serde_json::Value = serde_json::from_str(&text)?;
    let mut merged = serde_json::to_value(&base)?;
    merge_json(&mut merged, overrides);
    Ok(serde_json::from_value(merged)?)
}

fn merge_json(base: &mut serde_json::Value, overrides: serde_json::Value) {
    match (base, overrides) {
        (serde_json::Value::Object(base_map), serde_json::Value::Object(over_map)) => {
            for (key, value) in over_map {
                match base_map.get_mut(&key) {
                    Some(slot) => merge_json(slot, value),
                    None => {
                        base_map.insert(key, value);
                    }
                }
            }
        }
        (slot, value) => *slot = value,
    }
}

fn verify(args: VerifyArgs) -> Result<()> {
    let config = VerifyConfig {
        seed: args.seed,
        ..VerifyConfig::default()
    };
    let report = verify_theorems(&config)?;
    print!("{report}");
    if let Some(path) = &args.out {
        std::fs::write(path, serde_json::to_string_pretty(&report)?)?;
    }
    if report.all_passed() {
        Ok(())
    } else {
        Err(Error::Training {
            epoch: 0,
            minibatch: 0,
            message: "verification checks failed".into(),
        })
    }
}

fn compare(args: CompareArgs) -> Result<()> {
    let comparison = compare_runs(&args.runs)?;
    println!("name,algorithm,mean,std,winner");
    for row in &comparison.rows {
        println!(
            "{},{},{:.4},{:.4},{}",
            row.name,
            row.algorithm,
            row.mean,
            row.std,
            if row.winner { "yes" } else { "no" }
        );
    }
    if let Some(path) = &args.out {
        if path.extension().is_some_and(|e| e == "json") {
            std::fs::write(path, serde_json::to_string_pretty(&comparison)?)?;
        } else {
            std::fs::write(path, comparison.to_csv_string())?;
        }
    }
    Ok(())
}
