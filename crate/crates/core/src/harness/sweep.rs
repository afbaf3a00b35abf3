use std::fmt::Write as _;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{CurveMetric, RunMetrics, TrainConfig, Trainer};
use crate::error::{Error, Result};

/// One config × seed of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepJob {
    /// Run name without the seed; runs sharing it are aggregated together.
    pub group: String,
    pub config: TrainConfig,
}

/// Expands every config over its `seeds` and, when given, over `xi_grid`.
pub fn expand(configs: &[TrainConfig], xi_grid: Option<&[f64]>) -> Vec<SweepJob> {
    let mut jobs = Vec::new();
    for base in configs {
        let xis = xi_grid.map_or_else(|| vec![base.xi], <[f64]>::to_vec);
        for xi in xis {
            for &seed in &base.seeds {
                let config = TrainConfig { xi, seed, ..base.clone() };
                jobs.push(SweepJob {
                    group: config.group_name(),
                    config,
                });
            }
        }
    }
    jobs
}

#[derive(Debug, Clone, Default)]
pub struct SweepOptions {
    /// Worker threads; 0 or 1 runs sequentially.
    pub jobs: usize,
    /// Where per-run directories and the report go; `None` keeps everything in memory.
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub group: String,
    pub seed: u64,
    pub error: String,
}

/// Mean and population standard deviation across seeds at one evaluation index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// Mean env steps of the seeds at this evaluation.
    pub env_steps: f64,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: CurveMetric,
    /// Final evaluation value per completed seed, in seed order.
    pub finals: Vec<f64>,
    pub final_mean: f64,
    pub final_std: f64,
    /// Normalized area under the curve per completed seed.
    pub aucs: Vec<f64>,
    pub curve: Vec<CurvePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub group: String,
    pub config: TrainConfig,
    /// Seeds that completed.
    pub seeds: Vec<u64>,
    pub metrics: Vec<MetricSummary>,
}

impl GroupSummary {
    pub fn metric(&self, metric: CurveMetric) -> Option<&MetricSummary> {
        self.metrics.iter().find(|m| m.metric == metric)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub groups: Vec<GroupSummary>,
    pub failures: Vec<RunFailure>,
}

/// Completed runs of a sweep plus the aggregated report.
#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub report: SweepReport,
    /// `(group, metrics)` for every completed run, in job order.
    pub runs: Vec<(String, RunMetrics)>,
}

/// Runs every job, quarantining failures (errors and panics alike) instead of aborting,
/// then aggregates per group. With an output directory, each run streams to
/// `runs/<run name>/` and the report is written as `report.json` and `report.md`.
pub fn sweep(configs: &[TrainConfig], xi_grid: Option<&[f64]>, options: &SweepOptions) -> Result<SweepOutcome> {
    if configs.is_empty() {
        return Err(Error::Config("sweep needs at least one config".into()));
    }
    for c in configs {
        c.validate()?;
        if c.seeds.is_empty() {
            return Err(Error::Config(format!("{}: seeds must not be empty", c.group_name())));
        }
    }
    let jobs = expand(configs, xi_grid);
    let results = run_all(&jobs, options);

    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for (job, result) in jobs.iter().zip(results) {
        match result {
            Ok(m) => runs.push((job.group.clone(), m)),
            Err(error) => {
                log::warn!("run {} failed: {error}", job.config.run_name());
                failures.push(RunFailure {
                    group: job.group.clone(),
                    seed: job.config.seed,
                    error,
                });
            }
        }
    }
    let report = SweepReport {
        groups: aggregate(&runs),
        failures,
    };
    if let Some(dir) = &options.output_dir {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.json"), serde_json::to_string_pretty(&report)?)?;
        fs::write(dir.join("report.md"), report.to_markdown())?;
    }
    Ok(SweepOutcome { report, runs })
}

fn run_all(jobs: &[SweepJob], options: &SweepOptions) -> Vec<std::result::Result<RunMetrics, String>> {
    let run_dir = |job: &SweepJob| options.output_dir.as_ref().map(|d| d.join("runs").join(job.config.run_name()));
    let workers = options.jobs.clamp(1, jobs.len().max(1));
    if workers == 1 {
        return jobs.iter().map(|j| run_one(&j.config, run_dir(j).as_deref())).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<std::result::Result<RunMetrics, String>>>> = Mutex::new(vec![None; jobs.len()]);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(job) = jobs.get(i) else { break };
                let result = run_one(&job.config, run_dir(job).as_deref());
                slots.lock().unwrap_or_else(|e| e.into_inner())[i] = Some(result);
            });
        }
    });
    slots
        .into_inner()
        .unwrap_or_else(|e| e.into_inner())
        .into_iter()
        .map(|r| r.unwrap_or_else(|| Err("run did not report a result".into())))
        .collect()
}

fn run_one(config: &TrainConfig, dir: Option<&Path>) -> std::result::Result<RunMetrics, String> {
    let attempt = catch_unwind(AssertUnwindSafe(|| -> Result<RunMetrics> {
        let mut trainer = Trainer::new(config.clone())?;
        match dir {
            Some(d) => trainer.run_with_output(d)?,
            None => trainer.run()?,
        }
        Ok(trainer.into_metrics())
    }));
    match attempt {
        Ok(Ok(m)) => Ok(m),
        Ok(Err(e)) => Err(format!("error[{}]: {e}", e.category())),
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            Err(format!("panic: {msg}"))
        }
    }
}

/// Groups runs by name (first-appearance order) and summarizes each group.
pub fn aggregate(runs: &[(String, RunMetrics)]) -> Vec<GroupSummary> {
    let mut order: Vec<&str> = Vec::new();
    for (g, _) in runs {
        if !order.contains(&g.as_str()) {
            order.push(g);
        }
    }
    order
        .into_iter()
        .map(|group| {
            let members: Vec<&RunMetrics> = runs.iter().filter(|(g, _)| g == group).map(|(_, m)| m).collect();
            let mut metrics = vec![summarize(&members, CurveMetric::Return)];
            if members.iter().any(|m| m.config().env.is_sparse()) {
                metrics.push(summarize(&members, CurveMetric::Success));
            }
            GroupSummary {
                group: group.to_string(),
                config: TrainConfig {
                    seeds: members.iter().map(|m| m.config().seed).collect(),
                    ..members[0].config().clone()
                },
                seeds: members.iter().map(|m| m.config().seed).collect(),
                metrics,
            }
        })
        .collect()
}

/// Aggregates one metric over runs. Curves are aligned by evaluation index and cut to
/// the shortest run, so every point averages the same seeds.
pub fn summarize(runs: &[&RunMetrics], metric: CurveMetric) -> MetricSummary {
    let curves: Vec<Vec<(u64, f64)>> = runs.iter().map(|m| m.curve(metric)).collect();
    let finals: Vec<f64> = runs.iter().filter_map(|m| m.final_value(metric)).collect();
    let aucs: Vec<f64> = runs.iter().filter_map(|m| m.auc(metric)).collect();
    let len = curves.iter().map(Vec::len).min().unwrap_or(0);
    let curve = (0..len)
        .map(|k| {
            let xs: Vec<f64> = curves.iter().map(|c| c[k].0 as f64).collect();
            let ys: Vec<f64> = curves.iter().map(|c| c[k].1).collect();
            let (mean, std) = mean_std(&ys);
            CurvePoint {
                env_steps: mean_std(&xs).0,
                mean,
                std,
            }
        })
        .collect();
    let (final_mean, final_std) = mean_std(&finals);
    MetricSummary {
        metric,
        finals,
        final_mean,
        final_std,
        aucs,
        curve,
    }
}

/// Mean and population standard deviation; `(NaN, NaN)` when empty.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl SweepReport {
    pub fn group(&self, name: &str) -> Option<&GroupSummary> {
        self.groups.iter().find(|g| g.group == name)
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::from("# Sweep report\n\n");
        out.push_str("| run | seeds | final return | return AUC | final success | success AUC |\n");
        out.push_str("|---|---|---|---|---|---|\n");
        for g in &self.groups {
            let cell = |m: Option<&MetricSummary>, auc: bool| match m {
                Some(s) if auc => format!("{:.3} ± {:.3}", mean_std(&s.aucs).0, mean_std(&s.aucs).1),
                Some(s) => format!("{:.3} ± {:.3}", s.final_mean, s.final_std),
                None => "–".into(),
            };
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} | {} |",
                g.group,
                g.seeds.len(),
                cell(g.metric(CurveMetric::Return), false),
                cell(g.metric(CurveMetric::Return), true),
                cell(g.metric(CurveMetric::Success), false),
                cell(g.metric(CurveMetric::Success), true),
            );
        }
        if !self.failures.is_empty() {
            out.push_str("\n## Failed runs\n\n");
            for f in &self.failures {
                let _ = writeln!(out, "- {} seed {}: {}", f.group, f.seed, f.error);
            }
        }
        out
    }
}
