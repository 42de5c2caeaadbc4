//! Operator entry point: train, evaluate, export and inspect.
//!
//! Exit codes: 0 success, 2 configuration error, 3 runtime error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use uavcombat_core::arena::TRAJECTORY_HEADER;
use uavcombat_core::checkpoint::Checkpoint;
use uavcombat_core::config::RunConfig;
use uavcombat_core::evalharness::{self, MatchRecord, ScriptedKind};
use uavcombat_core::lfmappo::rollout::TeamController;
use uavcombat_core::lfmappo::{OptBundle, PolicyBundle};
use uavcombat_core::trainer;
use uavcombat_core::CoreError;

/// Output root override; the `--out` flag wins over it.
const OUT_ROOT_ENV: &str = "UAVCOMBAT_OUT_ROOT";

#[derive(Parser)]
#[command(name = "uavcombat", version, about = "Multi-UAV combat simulator and trainer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the training loop and write metrics and checkpoints.
    Train(TrainArgs),
    /// Tournament between a checkpoint and another policy.
    Eval(EvalArgs),
    /// Convert a saved match record into tabular trajectory data.
    Export(ExportArgs),
    /// Summarize a checkpoint or match record.
    Inspect(InspectArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// Configuration file (TOML). Defaults to the built-in configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dotted-key overrides, e.g. --set train.gamma=0.95. Unknown keys fail.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig, CoreError> {
        let text = match &self.config {
            Some(path) => std::fs::read_to_string(path)
                .map_err(|e| CoreError::Config(format!("{}: {e}", path.display())))?,
            None => String::new(),
        };
        let mut overrides = Vec::new();
        for entry in &self.set {
            let (k, v) = entry.split_once('=').ok_or_else(|| {
                CoreError::Config(format!("override '{entry}' is not KEY=VALUE"))
            })?;
            overrides.push((k.to_string(), v.to_string()));
        }
        let cfg = RunConfig::from_toml_with_overrides(&text, &overrides)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Total training iterations (overrides train.iters).
    #[arg(long)]
    iters: Option<usize>,
    /// Output directory; defaults to <out-root>/<run-id>.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Resume from a checkpoint produced under the same configuration.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Worker threads for rollouts and tournaments (default: all cores).
    #[arg(long)]
    parallel: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint flying the blue team.
    checkpoint: PathBuf,
    /// Opponent: a checkpoint path or "scripted:<kind>".
    #[arg(long)]
    vs: String,
    /// Matches to play.
    #[arg(short = 'n', long = "matches", default_value_t = 128)]
    n: usize,
    /// Base seed; match k uses seed base+k.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Spawn red as the exact mirror of blue.
    #[arg(long)]
    mirrored: bool,
    /// Proceed despite a configuration-hash mismatch.
    #[arg(long)]
    force: bool,
    /// Sample actions instead of deterministic (mean/argmax) evaluation.
    #[arg(long)]
    stochastic: bool,
    /// Also write one match-record JSON per match.
    #[arg(long)]
    records: bool,
    #[command(flatten)]
    config: ConfigArgs,
    /// Output directory; defaults to <out-root>/eval-<run-id>-<seed>.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    parallel: Option<usize>,
}

#[derive(Args)]
struct ExportArgs {
    /// Match record JSON produced by `eval --records`.
    record: PathBuf,
    /// Output format: "csv" (trajectory table) or "long" (plot-ready).
    #[arg(long, default_value = "csv")]
    format: String,
    /// Output file path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct InspectArgs {
    /// Checkpoint or match-record path.
    path: PathBuf,
}

fn out_root() -> PathBuf {
    std::env::var_os(OUT_ROOT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"))
}

fn configure_threads(parallel: Option<usize>) -> anyhow::Result<()> {
    if let Some(n) = parallel {
        if n == 0 {
            return Err(CoreError::Config("--parallel must be >= 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn cmd_train(args: TrainArgs) -> anyhow::Result<()> {
    configure_threads(args.parallel)?;
    let mut cfg = args.config.load()?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(iters) = args.iters {
        cfg.train.iters = iters;
    }
    let out_dir = args.out.unwrap_or_else(|| out_root().join(cfg.run_id()));
    let outcome = trainer::run_training(&cfg, &out_dir, args.resume.as_deref())?;
    println!(
        "run {} finished: {} iterations, metrics at {}, final checkpoint at {}",
        outcome.run_id,
        outcome.iterations_completed,
        outcome.metrics_path.display(),
        outcome.final_checkpoint.display()
    );
    if let Some(m) = outcome.last_metrics {
        println!(
            "last iteration: mean_return={:.4} actor_loss={:.4} critic_loss={:.4} entropy={:.4}",
            m.mean_return, m.actor_loss, m.critic_loss, m.entropy
        );
    }
    Ok(())
}

enum Opponent {
    Checkpoint(PolicyBundle),
    Scripted(ScriptedKind),
}

fn cmd_eval(args: EvalArgs) -> anyhow::Result<()> {
    configure_threads(args.parallel)?;
    let cfg = args.config.load()?;
    let cfg_hash = cfg.hash();

    let blue_ckpt = Checkpoint::load(&args.checkpoint)?;
    evalharness::ensure_compatible(&cfg_hash, &blue_ckpt.config_hash, args.force)?;
    let run_id = blue_ckpt.run_id.clone();
    let (blue_bundle, _, _): (PolicyBundle, OptBundle, u64) = blue_ckpt.clone().into_state()?;

    let opponent = if let Some(kind) = args.vs.strip_prefix("scripted:") {
        Opponent::Scripted(kind.parse()?)
    } else {
        let ckpt = Checkpoint::load(Path::new(&args.vs))?;
        evalharness::ensure_compatible(&blue_ckpt.config_hash, &ckpt.config_hash, args.force)?;
        let (bundle, _, _) = ckpt.into_state()?;
        Opponent::Checkpoint(bundle)
    };

    let deterministic = cfg.eval.deterministic && !args.stochastic;
    let blue = TeamController::Learned { bundle: &blue_bundle, deterministic };
    let red = match &opponent {
        Opponent::Scripted(kind) => TeamController::Scripted(*kind),
        Opponent::Checkpoint(bundle) => TeamController::Learned { bundle, deterministic },
    };

    let out_dir =
        args.out.unwrap_or_else(|| out_root().join(format!("eval-{run_id}-{}", args.seed)));
    std::fs::create_dir_all(&out_dir)?;

    let mirrored = args.mirrored || cfg.eval.mirrored;
    let (result, records) =
        evalharness::tournament(blue, red, &cfg, args.n, args.seed, mirrored)?;

    let report = trainer::tournament_report(&run_id, &cfg_hash, &[(0, result.clone())]);
    let report_path = out_dir.join("tournament.csv");
    std::fs::write(&report_path, report)?;

    if args.records {
        let records_dir = out_dir.join("records");
        std::fs::create_dir_all(&records_dir)?;
        for record in &records {
            // Re-run with trajectory capture so the record is exportable.
            let full = evalharness::run_match(blue, red, &cfg, record.seed, mirrored, true)?;
            let path = records_dir.join(format!("match_{:06}.json", record.seed));
            std::fs::write(path, serde_json::to_vec(&full)?)?;
        }
    }

    println!(
        "{} matches: {} wins, {} draws, {} losses (win_rate={}, draw_rate={}, loss_rate={})",
        result.matches,
        result.wins,
        result.draws,
        result.losses,
        result.win_rate,
        result.draw_rate,
        result.loss_rate
    );
    println!("report at {}", report_path.display());
    Ok(())
}

fn export_csv(record: &MatchRecord, header: &str) -> String {
    let mut out = String::new();
    out.push_str(header);
    out.push_str(TRAJECTORY_HEADER);
    out.push('\n');
    for row in &record.rows {
        out.push_str(&row.to_csv());
        out.push('\n');
    }
    out
}

fn export_long(record: &MatchRecord, header: &str) -> String {
    let mut out = String::new();
    out.push_str(header);
    out.push_str("time,uav_id,team,role,variable,value\n");
    for r in &record.rows {
        let fields: [(&str, f64); 9] = [
            ("px", r.px),
            ("py", r.py),
            ("pz", r.pz),
            ("v", r.v),
            ("phi", r.phi),
            ("theta", r.theta),
            ("psi", r.psi),
            ("alive", r.alive as u8 as f64),
            ("reward", r.reward),
        ];
        for (name, value) in fields {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.time,
                r.uav_id,
                r.team.label(),
                r.role.label(),
                name,
                value
            ));
        }
    }
    out
}

fn cmd_export(args: ExportArgs) -> anyhow::Result<()> {
    let bytes = std::fs::read(&args.record)
        .map_err(|e| CoreError::Config(format!("{}: {e}", args.record.display())))?;
    let record: MatchRecord = serde_json::from_slice(&bytes)
        .map_err(|e| CoreError::Config(format!("not a match record: {e}")))?;
    let header = format!(
        "# run_id=match-{} config_hash={} mirrored={}\n",
        record.seed, record.config_hash, record.mirrored
    );
    let text = match args.format.as_str() {
        "csv" => export_csv(&record, &header),
        "long" => export_long(&record, &header),
        other => {
            return Err(CoreError::Config(format!(
                "unknown format '{other}' (supported: csv, long)"
            ))
            .into())
        }
    };
    std::fs::write(&args.out, text)?;
    println!("wrote {} rows to {}", record.rows.len(), args.out.display());
    Ok(())
}

fn cmd_inspect(args: InspectArgs) -> anyhow::Result<()> {
    let bytes = std::fs::read(&args.path)
        .map_err(|e| CoreError::Config(format!("{}: {e}", args.path.display())))?;
    if let Ok(ckpt) = serde_json::from_slice::<Checkpoint>(&bytes) {
        println!("checkpoint version {}", ckpt.version);
        println!("run_id       {}", ckpt.run_id);
        println!("config_hash  {}", ckpt.config_hash);
        println!("iteration    {}", ckpt.iteration);
        println!("algo         {:?}", ckpt.algo);
        println!("tensors      {}", ckpt.tensors.len());
        let params: usize = ckpt.tensors.values().map(|t| t.data.len()).sum();
        println!("parameters   {params}");
        return Ok(());
    }
    if let Ok(record) = serde_json::from_slice::<MatchRecord>(&bytes) {
        println!("match record, seed {}", record.seed);
        println!("outcome      {}", record.outcome.result.label());
        println!("duration_s   {}", record.outcome.duration);
        println!(
            "survivors    blue {} / red {}",
            record.outcome.blue_survivors, record.outcome.red_survivors
        );
        println!("rows         {}", record.rows.len());
        return Ok(());
    }
    Err(CoreError::Config("file is neither a checkpoint nor a match record".into()).into())
}

fn exit_code_for(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<CoreError>() {
        Some(CoreError::Config(_)) => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Export(args) => cmd_export(args),
        Command::Inspect(args) => cmd_inspect(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
