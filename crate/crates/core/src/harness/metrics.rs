use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::error::{Error, Result};

pub const METRICS_SCHEMA: &str = "sipp-metrics/1";

/// One outer iteration. Optional fields are empty when they do not apply (no episode
/// finished, no evaluation this iteration, no OT solve, ...).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: u64,
    /// Transitions trained on so far, replayed ones included.
    pub timesteps: u64,
    /// Real environment interactions so far; the budget counter.
    pub env_steps: u64,
    /// Training episodes finished during this iteration.
    pub episodes: u64,
    pub mean_return: Option<f64>,
    pub std_return: Option<f64>,
    /// Fraction of this iteration's finished episodes with positive return (sparse envs).
    pub success_rate: Option<f64>,
    pub eval_return: Option<f64>,
    pub eval_success: Option<f64>,
    pub buffer_best: Option<f64>,
    pub buffer_min: Option<f64>,
    pub buffer_len: usize,
    pub sinkhorn_converged: Option<bool>,
    pub sinkhorn_iterations: Option<usize>,
    pub imitation_trajectories: u64,
    pub exploration_trajectories: u64,
    pub uniform_batches: usize,
    pub prioritized_batches: usize,
    pub grad_steps: usize,
    pub mean_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub intrinsic_mean: Option<f64>,
    pub wall_time_s: f64,
}

impl IterationRecord {
    /// Equality on everything except wall-clock time.
    pub fn same_trace(&self, other: &Self) -> bool {
        let strip = |r: &Self| Self { wall_time_s: 0.0, ..r.clone() };
        strip(self) == strip(other)
    }
}

/// Quantity on the y-axis of a learning curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurveMetric {
    /// Mean deterministic evaluation return.
    Return,
    /// Deterministic evaluation success rate (sparse envs only).
    Success,
}

impl CurveMetric {
    pub fn label(self) -> &'static str {
        match self {
            CurveMetric::Return => "evaluation return",
            CurveMetric::Success => "success rate",
        }
    }

    fn of(self, r: &IterationRecord) -> Option<f64> {
        match self {
            CurveMetric::Return => r.eval_return,
            CurveMetric::Success => r.eval_success,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsHeader {
    pub schema: String,
    pub config: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub header: MetricsHeader,
    pub records: Vec<IterationRecord>,
}

impl RunMetrics {
    pub fn new(config: TrainConfig) -> Self {
        Self {
            header: MetricsHeader {
                schema: METRICS_SCHEMA.to_string(),
                config,
            },
            records: Vec::new(),
        }
    }

    pub fn config(&self) -> &TrainConfig {
        &self.header.config
    }

    /// Records carrying an evaluation, in order.
    pub fn evaluations(&self) -> impl Iterator<Item = &IterationRecord> {
        self.records.iter().filter(|r| r.eval_return.is_some())
    }

    pub fn final_eval(&self) -> Option<&IterationRecord> {
        self.evaluations().last()
    }

    /// `(env steps, value)` at every evaluation carrying `metric`.
    pub fn curve(&self, metric: CurveMetric) -> Vec<(u64, f64)> {
        self.records.iter().filter_map(|r| metric.of(r).map(|v| (r.env_steps, v))).collect()
    }

    pub fn final_value(&self, metric: CurveMetric) -> Option<f64> {
        self.curve(metric).last().map(|p| p.1)
    }

    /// Trapezoidal area under the evaluation curve, starting from the first evaluation,
    /// divided by the env steps it spans: the curve's mean height.
    pub fn auc(&self, metric: CurveMetric) -> Option<f64> {
        let c = self.curve(metric);
        let (first, last) = (c.first()?, c.last()?);
        if c.len() == 1 || last.0 == first.0 {
            return Some(last.1);
        }
        let area: f64 = c
            .windows(2)
            .map(|w| (w[1].0 - w[0].0) as f64 * (w[0].1 + w[1].1) / 2.0)
            .sum();
        Some(area / (last.0 - first.0) as f64)
    }

    /// Env steps at the first evaluation where `metric >= threshold`.
    pub fn steps_to_reach(&self, metric: CurveMetric, threshold: f64) -> Option<u64> {
        self.curve(metric).into_iter().find(|p| p.1 >= threshold).map(|p| p.0)
    }

    /// Traces equal record by record, ignoring wall-clock time.
    pub fn same_trace(&self, other: &Self) -> bool {
        self.records.len() == other.records.len() && self.records.iter().zip(&other.records).all(|(a, b)| a.same_trace(b))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut file = File::create(path)?;
        writeln!(file, "# {}", serde_json::to_string(&self.header)?)?;
        let mut w = csv::Writer::from_writer(file);
        if self.records.is_empty() {
            w.write_record(CSV_COLUMNS)?;
        }
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Appends one record to an existing file written by [`RunMetrics::write_csv`].
    pub fn append_csv(path: &Path, record: &IterationRecord) -> Result<()> {
        let file = OpenOptions::new().append(true).open(path)?;
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
        w.serialize(record)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let name = path.display().to_string();
        let mut reader = BufReader::new(File::open(path).map_err(|e| Error::format(&name, e.to_string()))?);
        let mut first = String::new();
        reader.read_line(&mut first)?;
        let json = first
            .trim_end()
            .strip_prefix("# ")
            .ok_or_else(|| Error::format(&name, "missing `# {json}` header line"))?;
        let header: MetricsHeader =
            serde_json::from_str(json).map_err(|e| Error::format(&name, format!("bad header: {e}")))?;
        if header.schema != METRICS_SCHEMA {
            return Err(Error::format(&name, format!("unsupported schema {:?}", header.schema)));
        }
        let mut records = Vec::new();
        for (i, row) in csv::Reader::from_reader(reader).deserialize().enumerate() {
            records.push(row.map_err(|e: csv::Error| Error::format(&name, format!("record {}: {e}", i + 1)))?);
        }
        Ok(Self { header, records })
    }
}

const CSV_COLUMNS: &[&str] = &[
    "iteration",
    "timesteps",
    "env_steps",
    "episodes",
    "mean_return",
    "std_return",
    "success_rate",
    "eval_return",
    "eval_success",
    "buffer_best",
    "buffer_min",
    "buffer_len",
    "sinkhorn_converged",
    "sinkhorn_iterations",
    "imitation_trajectories",
    "exploration_trajectories",
    "uniform_batches",
    "prioritized_batches",
    "grad_steps",
    "mean_loss",
    "value_loss",
    "entropy",
    "clip_fraction",
    "intrinsic_mean",
    "wall_time_s",
];

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::format("metrics csv", e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::EnvId;
    use crate::harness::Algorithm;

    fn record(i: u64) -> IterationRecord {
        IterationRecord {
            iteration: i,
            timesteps: 2048 * i,
            env_steps: 2000 * i,
            episodes: 3,
            mean_return: Some(0.1 + 1.0 / 3.0),
            std_return: None,
            success_rate: Some(2.0 / 3.0),
            eval_return: i.is_multiple_of(2).then_some(-1e-300),
            eval_success: None,
            buffer_best: Some(1.0),
            buffer_min: Some(0.5),
            buffer_len: 2,
            sinkhorn_converged: Some(i % 2 == 1),
            sinkhorn_iterations: None,
            imitation_trajectories: 1,
            exploration_trajectories: 7,
            uniform_batches: 300,
            prioritized_batches: 20,
            grad_steps: 320,
            mean_loss: 0.123456789012345,
            value_loss: 1e-17,
            entropy: 1.3862943611198906,
            clip_fraction: 0.0,
            intrinsic_mean: None,
            wall_time_s: 0.5,
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = std::env::temp_dir().join(format!("sipp-metrics-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("m.csv");
        let mut m = RunMetrics::new(TrainConfig::defaults(Algorithm::SippReplay, EnvId::SparseMaze));
        m.records = vec![record(1), record(2)];
        m.write_csv(&path).unwrap();
        RunMetrics::append_csv(&path, &record(3)).unwrap();
        let back = RunMetrics::read_csv(&path).unwrap();
        m.records.push(record(3));
        assert_eq!(back, m);
        std::fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn malformed_file_is_named() {
        let dir = std::env::temp_dir().join(format!("sipp-metrics-bad-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.csv");
        std::fs::write(&path, "iteration,timesteps\n1,2\n").unwrap();
        let err = RunMetrics::read_csv(&path).unwrap_err().to_string();
        assert!(err.contains("bad.csv"), "{err}");
        std::fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn curve_summaries() {
        let mut m = RunMetrics::new(TrainConfig::defaults(Algorithm::SippReplay, EnvId::SparseMaze));
        for (i, s) in [(1, None), (2, Some(0.0)), (3, Some(0.5)), (4, None), (5, Some(1.0))] {
            let mut r = record(i);
            r.env_steps = 100 * i;
            r.eval_success = s;
            m.records.push(r);
        }
        assert_eq!(m.curve(CurveMetric::Success), vec![(200, 0.0), (300, 0.5), (500, 1.0)]);
        assert_eq!(m.final_value(CurveMetric::Success), Some(1.0));
        assert_eq!(m.steps_to_reach(CurveMetric::Success, 0.5), Some(300));
        assert_eq!(m.steps_to_reach(CurveMetric::Success, 1.1), None);
        // (100 * 0.25 + 200 * 0.75) / 300
        assert!((m.auc(CurveMetric::Success).unwrap() - 175.0 / 300.0).abs() < 1e-15);
    }

    #[test]
    fn column_list_matches_serialization() {
        let mut w = csv::Writer::from_writer(vec![]);
        w.serialize(record(1)).unwrap();
        let text = String::from_utf8(w.into_inner().unwrap()).unwrap();
        assert_eq!(text.lines().next().unwrap(), CSV_COLUMNS.join(","));
    }
}
