//! Experiment dispatch: owns the worker pool, runs the stats module, and
//! persists CSV artifacts plus a text summary.

use super::config::{ConfigError, ExperimentName, ResolvedConfig};
use super::report;
use crate::limit_process::{default_horizon, default_mesh, sample_integral};
use crate::schedules::{make_schedule, Discount, ScheduleError};
use crate::stats::{self, ExperimentKind, ExperimentReport, Statistic, StatsError};
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug)]
pub struct RunOutput {
    pub report: ExperimentReport,
    pub files: Vec<PathBuf>,
}

fn required_b(cfg: &ResolvedConfig) -> Result<Discount, RunError> {
    let b = cfg.b.ok_or_else(|| ConfigError::Invalid {
        key: "b".into(),
        message: "required for this experiment".into(),
    })?;
    Ok(Discount::from_b(b)?)
}

fn dispatch(cfg: &ResolvedConfig) -> Result<(ExperimentReport, Vec<(PathBuf, String)>), RunError> {
    let model = cfg.model.as_ref();
    let ctrl = &cfg.truncation;
    let mut extra: Vec<(PathBuf, String)> = Vec::new();
    let report = match cfg.experiment {
        ExperimentName::Slln => {
            stats::slln_experiment(model.unwrap(), &required_b(cfg)?, cfg.paths, cfg.seed, ctrl)?
        }
        ExperimentName::Clt | ExperimentName::CltFidi => {
            let u = cfg.u.as_deref().unwrap_or(&[1.0]);
            stats::clt_experiment(model.unwrap(), &required_b(cfg)?, u, cfg.paths, cfg.seed, ctrl)?
        }
        ExperimentName::CltTrunc => stats::trunc_experiment(
            model.unwrap(),
            &required_b(cfg)?,
            cfg.m_trunc,
            cfg.paths,
            cfg.seed,
        )?,
        ExperimentName::Vervaat => {
            let alpha = cfg.alpha.as_deref().unwrap_or(&[0.005]);
            stats::vervaat_check(model.unwrap(), alpha, cfg.paths, cfg.seed, ctrl)?
        }
        ExperimentName::Lil => {
            let sc = cfg.schedule.expect("validated at resolve");
            let schedule = make_schedule(sc.kind, sc.n_max)?;
            let report = stats::lil_scan(model.unwrap(), &schedule, cfg.seed, ctrl)?;
            extra.push((cfg.out.join("scan.csv"), report::scan_csv(&report.scan)));
            report
        }
        ExperimentName::Limitproc => {
            let grid = cfg.u_grid.as_deref().unwrap_or(&[0.5, 1.0, 2.0]);
            let n_samples = cfg.n_samples.unwrap_or(100_000);
            let report = stats::limit_process_check(grid, n_samples, cfg.seed)?;
            // Small plot-ready dump; the full sample set is regenerable.
            let dump = sample_integral(
                grid,
                default_horizon(grid[0]),
                default_mesh(grid[grid.len() - 1]),
                n_samples.min(200),
                cfg.seed,
            )
            .map_err(StatsError::LimitProcess)?;
            extra.push((cfg.out.join("limit_samples.csv"), report::limit_dump_csv(&dump)));
            report
        }
        ExperimentName::Schedule => {
            let sc = cfg.schedule.expect("validated at resolve");
            let schedule = make_schedule(sc.kind, sc.n_max)?;
            let mut statistics: Vec<Statistic> = schedule
                .checks()
                .iter()
                .map(|c| Statistic::flagged(c.kind.to_string(), c.final_value, c.pass))
                .collect();
            statistics.push(Statistic::info("n_materialized", schedule.len() as f64));
            statistics.push(Statistic::info(
                "first_instance_n",
                schedule.first_instance_n() as f64,
            ));
            if let Some(t) = schedule.truncated_at() {
                statistics.push(Statistic::info("truncated_at", t as f64));
            }
            extra.push((cfg.out.join("schedule.csv"), report::schedule_csv(&schedule)));
            extra.push((cfg.out.join("conditions.csv"), report::condition_csv(&schedule)));
            ExperimentReport {
                experiment: ExperimentKind::Schedule,
                config_digest: String::new(),
                statistics,
                scan: Vec::new(),
            }
        }
    };
    Ok((report, extra))
}

/// Runs the experiment on a dedicated worker pool and writes all artifacts.
/// Output bytes are a function of (config, seed) only, never of `workers`.
pub fn run(cfg: &ResolvedConfig) -> Result<RunOutput, RunError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| std::io::Error::other(e.to_string()))?;
    let (mut report, extra) = pool.install(|| dispatch(cfg))?;
    report.config_digest = cfg.digest();

    let mut files = Vec::new();
    let report_path = cfg.out.join("report.csv");
    report::write_file(&report_path, &report::report_csv(&report))?;
    files.push(report_path);
    let summary_path = cfg.out.join("summary.txt");
    report::write_file(&summary_path, &report::summary_text(&report, &cfg.echo()))?;
    files.push(summary_path);
    for (path, contents) in extra {
        report::write_file(&path, &contents)?;
        files.push(path);
    }
    Ok(RunOutput { report, files })
}
