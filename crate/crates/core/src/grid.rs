//! Fine-tuning grid: expansion, best-run selection and the results table.
//!
//! Running the trainer lives in the `mlmprep` crate; everything here works
//! on already-collected run state.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{defaults, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMetric {
    F1,
    Accuracy,
}

impl SelectionMetric {
    pub fn name(self) -> &'static str {
        match self {
            SelectionMetric::F1 => "f1",
            SelectionMetric::Accuracy => "accuracy",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub task: String,
    pub learning_rates: Vec<f64>,
    pub batch_sizes: Vec<u32>,
    pub epochs: u32,
    pub selection_metric: SelectionMetric,
}

impl GridConfig {
    /// The reference 6 × 4 grid. Accuracy-selected (NLI) tasks train for 10
    /// epochs, everything else for 30.
    pub fn reference(task: impl Into<String>, selection_metric: SelectionMetric) -> Self {
        GridConfig {
            task: task.into(),
            learning_rates: defaults::GRID_LEARNING_RATES.to_vec(),
            batch_sizes: defaults::GRID_BATCH_SIZES.to_vec(),
            epochs: match selection_metric {
                SelectionMetric::Accuracy => defaults::GRID_EPOCHS_NLI,
                SelectionMetric::F1 => defaults::GRID_EPOCHS,
            },
            selection_metric,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.learning_rates.is_empty() || self.batch_sizes.is_empty() {
            return Err(Error::config(
                "learning rate and batch size lists must be non-empty",
            ));
        }
        if self.epochs == 0 {
            return Err(Error::config("epochs must be at least 1"));
        }
        if self
            .learning_rates
            .iter()
            .any(|lr| !(lr.is_finite() && *lr > 0.0))
        {
            return Err(Error::config("learning rates must be positive"));
        }
        if self.batch_sizes.contains(&0) {
            return Err(Error::config("batch sizes must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Pending,
    Running,
    Done,
    Failed,
}

/// What a trainer reports for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerReport {
    pub metric: String,
    pub validation: f64,
    pub test: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRun {
    pub run_id: String,
    /// Position in grid order; fixes tie-breaking.
    pub index: usize,
    pub lr: f64,
    pub batch_size: u32,
    pub epochs: u32,
    pub status: RunStatus,
    /// Present exactly when `status` is `Done`.
    pub report: Option<TrainerReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl GridRun {
    pub fn is_done(&self) -> bool {
        self.status == RunStatus::Done && self.report.is_some()
    }
}

/// Run id such as `lr5e-5_bs16`.
pub fn run_id(lr: f64, batch_size: u32) -> String {
    alloc::format!("lr{lr:e}_bs{batch_size}")
}

/// Cartesian product of unique learning rates (descending) and unique batch
/// sizes (ascending), learning-rate major.
pub fn expand_grid(config: &GridConfig) -> Result<Vec<GridRun>> {
    config.validate()?;
    let mut lrs = config.learning_rates.clone();
    lrs.sort_by(|a, b| b.total_cmp(a));
    lrs.dedup();
    let mut bss = config.batch_sizes.clone();
    bss.sort_unstable();
    bss.dedup();
    let mut runs = Vec::with_capacity(lrs.len() * bss.len());
    for &lr in &lrs {
        for &bs in &bss {
            runs.push(GridRun {
                run_id: run_id(lr, bs),
                index: runs.len(),
                lr,
                batch_size: bs,
                epochs: config.epochs,
                status: RunStatus::Pending,
                report: None,
                error: None,
            });
        }
    }
    Ok(runs)
}

/// Index of the highest validation score; the lowest grid index wins ties.
/// Sees validation values only.
fn argmax_validation(candidates: impl Iterator<Item = (usize, f64)>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (index, v) in candidates {
        best = match best {
            Some((bi, bv)) if bv > v || (bv == v && bi < index) => Some((bi, bv)),
            _ => Some((index, v)),
        };
    }
    best.map(|(i, _)| i)
}

/// The completed run with the best validation score under `metric`.
pub fn select_best(runs: &[GridRun], metric: SelectionMetric) -> Result<&GridRun> {
    let done = runs
        .iter()
        .filter(|r| r.is_done())
        .filter(|r| {
            r.report
                .as_ref()
                .is_some_and(|rep| rep.metric == metric.name())
        })
        .filter(|r| {
            r.report
                .as_ref()
                .is_some_and(|rep| !rep.validation.is_nan())
        });
    let validation_only = done.map(|r| (r.index, r.report.as_ref().unwrap().validation));
    let best = argmax_validation(validation_only).ok_or_else(|| {
        Error::Selection(alloc::format!("no completed run reports {}", metric.name()))
    })?;
    Ok(runs.iter().find(|r| r.index == best).unwrap())
}

/// One row of the results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    pub task: String,
    pub metric: String,
    pub run_id: String,
    pub lr: f64,
    pub batch_size: u32,
    pub validation: f64,
    pub test: f64,
}

impl TaskResult {
    pub fn from_run(task: impl Into<String>, run: &GridRun) -> Result<Self> {
        let report = run
            .report
            .as_ref()
            .ok_or_else(|| Error::Selection(alloc::format!("run {} has no report", run.run_id)))?;
        Ok(TaskResult {
            task: task.into(),
            metric: report.metric.clone(),
            run_id: run.run_id.clone(),
            lr: run.lr,
            batch_size: run.batch_size,
            validation: report.validation,
            test: report.test,
        })
    }
}

pub const TABLE_COLUMNS: [&str; 7] = [
    "task",
    "metric",
    "run_id",
    "lr",
    "batch_size",
    "validation",
    "test",
];

fn cells(r: &TaskResult) -> [String; 7] {
    [
        r.task.clone(),
        r.metric.clone(),
        r.run_id.clone(),
        alloc::format!("{:e}", r.lr),
        r.batch_size.to_string(),
        r.validation.to_string(),
        r.test.to_string(),
    ]
}

/// Results as CSV, rows in the given task order.
pub fn report_csv(rows: &[TaskResult]) -> String {
    let mut out = TABLE_COLUMNS.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&cells(r).join(","));
        out.push('\n');
    }
    out
}

/// Results as an aligned text table.
pub fn report_text(rows: &[TaskResult]) -> String {
    let body: Vec<[String; 7]> = rows.iter().map(cells).collect();
    let mut widths = TABLE_COLUMNS.map(str::len);
    for row in &body {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cols: &[&str]| {
        let mut s = String::new();
        for (i, (c, w)) in cols.iter().zip(widths).enumerate() {
            if i > 0 {
                s.push_str("  ");
            }
            let _ = write!(s, "{c:<w$}");
        }
        out.push_str(s.trim_end());
        out.push('\n');
    };
    line(&mut out, &TABLE_COLUMNS);
    for row in &body {
        let cols: Vec<&str> = row.iter().map(String::as_str).collect();
        line(&mut out, &cols);
    }
    out
}

/// Deterministic train/validation split of `n` examples: a seeded
/// permutation whose first `round(fraction * n)` indices form the validation
/// set. Both index lists are returned sorted.
pub fn validation_split(n: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::config("validation fraction must lie in [0, 1)"));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = libm::round(fraction * n as f64) as usize;
    let mut val = idx[..n_val].to_vec();
    let mut train = idx[n_val..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    Ok((train, val))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn done(mut r: GridRun, validation: f64, test: f64) -> GridRun {
        r.status = RunStatus::Done;
        r.report = Some(TrainerReport {
            metric: "f1".into(),
            validation,
            test,
        });
        r
    }

    #[test]
    fn reference_grid_has_24_runs() {
        let runs = expand_grid(&GridConfig::reference("germeval18", SelectionMetric::F1)).unwrap();
        assert_eq!(runs.len(), 24);
        assert_eq!((runs[0].lr, runs[0].batch_size), (5e-5, 16));
        assert_eq!((runs[1].lr, runs[1].batch_size), (5e-5, 32));
        assert_eq!((runs[23].lr, runs[23].batch_size), (1e-6, 64));
        assert!(runs.iter().enumerate().all(|(i, r)| r.index == i));
        assert_eq!(runs[0].run_id, "lr5e-5_bs16");
        assert_eq!(runs[0].epochs, 30);
        assert_eq!(
            GridConfig::reference("xnli", SelectionMetric::Accuracy).epochs,
            10
        );
    }

    #[test]
    fn small_and_duplicate_grids() {
        let mut c = GridConfig::reference("t", SelectionMetric::F1);
        c.learning_rates = vec![1e-5];
        c.batch_sizes = vec![8];
        assert_eq!(expand_grid(&c).unwrap().len(), 1);
        c.learning_rates = vec![1e-5, 2e-5, 1e-5];
        c.batch_sizes = vec![8, 8, 16];
        assert_eq!(expand_grid(&c).unwrap().len(), 4);
        c.batch_sizes.clear();
        assert!(matches!(expand_grid(&c), Err(Error::Config(_))));
    }

    #[test]
    fn selection() {
        let runs = expand_grid(&GridConfig::reference("t", SelectionMetric::F1)).unwrap();
        let single = vec![done(runs[5].clone(), 0.5, 0.4)];
        assert_eq!(select_best(&single, SelectionMetric::F1).unwrap().index, 5);

        let three = vec![
            done(runs[0].clone(), 0.80, 0.9),
            done(runs[1].clone(), 0.82, 0.1),
            done(runs[2].clone(), 0.79, 0.95),
        ];
        assert_eq!(select_best(&three, SelectionMetric::F1).unwrap().index, 1);

        let mut tied = vec![
            done(runs[7].clone(), 0.82, 0.0),
            done(runs[3].clone(), 0.82, 0.0),
        ];
        assert_eq!(select_best(&tied, SelectionMetric::F1).unwrap().index, 3);
        tied.reverse();
        assert_eq!(select_best(&tied, SelectionMetric::F1).unwrap().index, 3);

        assert!(matches!(
            select_best(&runs, SelectionMetric::F1),
            Err(Error::Selection(_))
        ));
        assert!(select_best(&three, SelectionMetric::Accuracy).is_err());
    }

    #[test]
    fn tables() {
        assert_eq!(
            report_csv(&[]),
            "task,metric,run_id,lr,batch_size,validation,test\n"
        );
        assert_eq!(report_text(&[]).lines().count(), 1);
        let runs = expand_grid(&GridConfig::reference("t", SelectionMetric::F1)).unwrap();
        let rows = vec![
            TaskResult::from_run("conll03", &done(runs[0].clone(), 0.9, 0.8617)).unwrap(),
            TaskResult::from_run("gnad10", &done(runs[4].clone(), 0.91, 0.9089)).unwrap(),
        ];
        let csv = report_csv(&rows);
        assert_eq!(
            csv.lines().nth(1),
            Some("conll03,f1,lr5e-5_bs16,5e-5,16,0.9,0.8617")
        );
        assert_eq!(
            csv.lines().nth(2).unwrap().split(',').next(),
            Some("gnad10")
        );
        let text = report_text(&rows);
        assert!(text.lines().nth(1).unwrap().starts_with("conll03  f1"));
    }

    #[test]
    fn split_is_deterministic() {
        let (train, val) = validation_split(100, 0.1, 7).unwrap();
        assert_eq!((train.len(), val.len()), (90, 10));
        assert_eq!(validation_split(100, 0.1, 7).unwrap().1, val);
        assert_ne!(validation_split(100, 0.1, 8).unwrap().1, val);
        let mut all: Vec<usize> = train.iter().chain(&val).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
    }
}
