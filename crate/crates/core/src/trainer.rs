//! Training-loop orchestration: rollouts, updates, periodic tournament
//! evaluation, metrics CSV and checkpoints.
//!
//! Every output file starts with a `# run_id=... config_hash=...` comment
//! line. All randomness derives from the single run seed, so two runs with
//! the same configuration produce byte-identical metrics and checkpoints.

use std::fmt::Write as FmtWrite;
use std::path::{Path, PathBuf};

use crate::checkpoint::Checkpoint;
use crate::config::{OpponentSpec, RunConfig};
use crate::error::CoreError;
use crate::evalharness::{self, ScriptedKind, TournamentResult};
use crate::lfmappo::rollout::TeamController;
use crate::lfmappo::{self, collect_rollouts, OptBundle, PolicyBundle, TrainMetrics};
use crate::rng::SeedTree;
use crate::Result;

pub const METRICS_HEADER: &str =
    "iteration,mean_return,actor_loss,critic_loss,entropy,clip_fraction,win_rate_eval";

/// Where a finished run left its artifacts.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub run_id: String,
    pub config_hash: String,
    pub iterations_completed: u64,
    pub metrics_path: PathBuf,
    pub final_checkpoint: PathBuf,
    pub last_metrics: Option<TrainMetrics>,
}

fn file_header(run_id: &str, config_hash: &str) -> String {
    format!("# run_id={run_id} config_hash={config_hash}\n")
}

fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Opponent used for training-time win-rate evaluation: the scripted
/// training opponent, or pure pursuit when training against the mirror.
fn eval_opponent(cfg: &RunConfig) -> Result<ScriptedKind> {
    Ok(match crate::config::parse_opponent(&cfg.train.opponent)? {
        OpponentSpec::Scripted(kind) => kind,
        OpponentSpec::Mirror => ScriptedKind::PurePursuit,
    })
}

/// Run the full training loop into `out_dir`, optionally resuming from a
/// checkpoint. Returns after `cfg.train.iters` total iterations.
pub fn run_training(
    cfg: &RunConfig,
    out_dir: &Path,
    resume: Option<&Path>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let run_id = cfg.run_id();
    let config_hash = cfg.hash();
    let seeds = SeedTree::new(cfg.seed);

    std::fs::create_dir_all(out_dir)?;
    let ckpt_dir = out_dir.join("checkpoints");
    std::fs::create_dir_all(&ckpt_dir)?;

    // Frozen copy of the configuration that produced this run.
    let mut config_copy = file_header(&run_id, &config_hash);
    config_copy.push_str(&cfg.to_toml());
    write_atomic(&out_dir.join("config.toml"), config_copy.as_bytes())?;

    let (mut bundle, mut opt, start_iter) = match resume {
        None => {
            let bundle = PolicyBundle::init(cfg, &seeds);
            let opt = OptBundle::for_bundle(&bundle);
            (bundle, opt, 0u64)
        }
        Some(path) => {
            let ckpt = Checkpoint::load(path)?;
            if ckpt.config_hash != config_hash {
                return Err(CoreError::Checkpoint(format!(
                    "resume checkpoint was built under config {} but this run is {}",
                    &ckpt.config_hash[..8],
                    &config_hash[..8]
                )));
            }
            ckpt.into_state()?
        }
    };

    // Metrics stream is append-only so progress survives an interrupted run.
    let metrics_path = out_dir.join("metrics.csv");
    let mut metrics_file = std::io::BufWriter::new(std::fs::File::create(&metrics_path)?);
    {
        use std::io::Write;
        write!(metrics_file, "{}", file_header(&run_id, &config_hash))?;
        writeln!(metrics_file, "{METRICS_HEADER}")?;
    }

    let total_iters = cfg.train.iters as u64;
    let mut win_rate_eval = 0.0f64;
    let mut last_metrics: Option<TrainMetrics> = None;

    for iter in start_iter..total_iters {
        let mut buffer = collect_rollouts(&bundle, cfg, &seeds, iter)?;
        let metrics = lfmappo::train_iteration(&mut bundle, &mut opt, &mut buffer, cfg, &seeds, iter)?;

        let evaluate = cfg.train.eval_every > 0 && (iter + 1) % cfg.train.eval_every as u64 == 0;
        if evaluate {
            let result = evaluate_stage(&bundle, cfg, &seeds, iter)?;
            win_rate_eval = result.win_rate;
        }

        {
            use std::io::Write;
            writeln!(
                metrics_file,
                "{},{},{},{},{},{},{}",
                metrics.iteration,
                metrics.mean_return,
                metrics.actor_loss,
                metrics.critic_loss,
                metrics.entropy,
                metrics.clip_fraction,
                win_rate_eval
            )?;
            metrics_file.flush()?;
        }
        last_metrics = Some(metrics);

        let checkpoint_due = cfg.train.checkpoint_every > 0
            && (iter + 1) % cfg.train.checkpoint_every as u64 == 0;
        if checkpoint_due {
            let ckpt = Checkpoint::from_state(&bundle, &opt, iter + 1, &run_id, &config_hash);
            ckpt.save(&ckpt_dir.join(format!("ckpt_{:05}.json", iter + 1)))?;
        }
    }
    drop(metrics_file);

    let completed = total_iters.max(start_iter);
    let final_path = ckpt_dir.join("final.json");
    Checkpoint::from_state(&bundle, &opt, completed, &run_id, &config_hash)
        .save(&final_path)?;

    let mut summary = file_header(&run_id, &config_hash);
    writeln!(summary, "iterations_completed={completed}").expect("string write");
    if let Some(m) = &last_metrics {
        writeln!(summary, "mean_return={}", m.mean_return).expect("string write");
        writeln!(summary, "win_rate_eval={win_rate_eval}").expect("string write");
    }
    write_atomic(&out_dir.join("summary.txt"), summary.as_bytes())?;

    Ok(TrainOutcome {
        run_id,
        config_hash,
        iterations_completed: completed,
        metrics_path,
        final_checkpoint: final_path,
        last_metrics,
    })
}

/// Deterministic-mode tournament of the current policy against the
/// training-stage opponent.
pub fn evaluate_stage(
    bundle: &PolicyBundle,
    cfg: &RunConfig,
    seeds: &SeedTree,
    iteration: u64,
) -> Result<TournamentResult> {
    let kind = eval_opponent(cfg)?;
    let blue = TeamController::Learned { bundle, deterministic: true };
    let red = TeamController::Scripted(kind);
    let base_seed = seeds.derive("stage-eval", &[iteration]);
    let (result, _) =
        evalharness::tournament(blue, red, cfg, cfg.train.eval_matches, base_seed, false)?;
    Ok(result)
}

/// Render a tournament report CSV (single stage).
pub fn tournament_report(run_id: &str, config_hash: &str, stages: &[(u64, TournamentResult)]) -> String {
    let mut out = file_header(run_id, config_hash);
    out.push_str("stage,wins,draws,losses,win_rate,draw_rate,loss_rate\n");
    for (stage, r) in stages {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            stage, r.wins, r.draws, r.losses, r.win_rate, r.draw_rate, r.loss_rate
        )
        .expect("string write");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cfg() -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.arena.team_size = 2;
        cfg.arena.group_size = 2;
        cfg.net.hidden = vec![8, 8];
        cfg.train.arenas = 2;
        cfg.train.steps_per_arena = 12;
        cfg.train.minibatch_size = 16;
        cfg.train.epochs = 2;
        cfg.train.iters = 2;
        cfg.train.eval_every = 0;
        cfg.train.checkpoint_every = 1;
        cfg.seed = 42;
        cfg
    }

    #[test]
    fn training_runs_and_writes_artifacts() {
        let cfg = tiny_cfg();
        let dir = tempfile::tempdir().unwrap();
        let outcome = run_training(&cfg, dir.path(), None).unwrap();
        assert_eq!(outcome.iterations_completed, 2);

        let metrics = std::fs::read_to_string(&outcome.metrics_path).unwrap();
        let mut lines = metrics.lines();
        assert!(lines.next().unwrap().starts_with("# run_id="));
        assert_eq!(lines.next().unwrap(), METRICS_HEADER);
        assert_eq!(lines.count(), 2);

        assert!(outcome.final_checkpoint.exists());
        assert!(dir.path().join("checkpoints/ckpt_00001.json").exists());
        assert!(dir.path().join("config.toml").exists());
        assert!(dir.path().join("summary.txt").exists());
    }

    #[test]
    fn identical_seeds_reproduce_bytes() {
        let cfg = tiny_cfg();
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let a = run_training(&cfg, dir_a.path(), None).unwrap();
        let b = run_training(&cfg, dir_b.path(), None).unwrap();
        assert_eq!(
            std::fs::read(&a.metrics_path).unwrap(),
            std::fs::read(&b.metrics_path).unwrap()
        );
        assert_eq!(
            std::fs::read(&a.final_checkpoint).unwrap(),
            std::fs::read(&b.final_checkpoint).unwrap()
        );
    }

    #[test]
    fn resume_with_no_extra_iterations_is_identity() {
        let cfg = tiny_cfg();
        let dir = tempfile::tempdir().unwrap();
        let outcome = run_training(&cfg, dir.path(), None).unwrap();
        let original = std::fs::read(&outcome.final_checkpoint).unwrap();

        let dir2 = tempfile::tempdir().unwrap();
        let resumed =
            run_training(&cfg, dir2.path(), Some(&outcome.final_checkpoint)).unwrap();
        let after = std::fs::read(&resumed.final_checkpoint).unwrap();
        assert_eq!(original, after);
    }

    #[test]
    fn resume_rejects_foreign_config() {
        let cfg = tiny_cfg();
        let dir = tempfile::tempdir().unwrap();
        let outcome = run_training(&cfg, dir.path(), None).unwrap();

        let mut other = tiny_cfg();
        other.train.gamma = 0.5;
        let dir2 = tempfile::tempdir().unwrap();
        let err = run_training(&other, dir2.path(), Some(&outcome.final_checkpoint));
        assert!(matches!(err, Err(CoreError::Checkpoint(_))));
    }

    #[test]
    fn report_rates_partition() {
        let r = TournamentResult {
            matches: 3,
            wins: 1,
            draws: 1,
            losses: 1,
            win_rate: 1.0 / 3.0,
            draw_rate: 1.0 / 3.0,
            loss_rate: 1.0 - (1.0 / 3.0 + 1.0 / 3.0),
        };
        let text = tournament_report("run", "hash", &[(0, r)]);
        assert!(text.contains("stage,wins,draws,losses"));
    }
}
