//! Running the fine-tuning grid through an external trainer command.
//!
//! A grid directory holds:
//!
//! * `journal.jsonl`: append-only; the first line records the grid, later
//!   lines record run status changes. Replaying it restores the grid state,
//!   so an interrupted grid resumes where it stopped.
//! * `runs/<run_id>/`: the trainer's output directory, with `trainer.log`
//!   (captured stdout and stderr) and the trainer's `report.json`.
//! * `runs.json`: every run in grid order, rewritten after each invocation.
//!
//! Runs that ended `done` or `failed` are never started again; a run left
//! `running` by an interrupted invocation is.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use mlmprep_core::defaults;
use mlmprep_core::grid::{
    expand_grid, report_csv, report_text, select_best, GridConfig, GridRun, RunStatus,
    SelectionMetric, TaskResult, TrainerReport,
};

use crate::{Error, Result};

pub const JOURNAL_FILE: &str = "journal.jsonl";
pub const RUNS_FILE: &str = "runs.json";
pub const REPORT_FILE: &str = "report.json";
pub const LOG_FILE: &str = "trainer.log";

/// Placeholders every trainer template must use.
pub const REQUIRED_PLACEHOLDERS: [&str; 4] = ["{lr}", "{batch_size}", "{epochs}", "{out}"];

/// Grid file contents. Omitted lists and epochs fall back to the reference
/// grid.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridFile {
    pub task: Option<String>,
    pub learning_rates: Option<Vec<f64>>,
    pub batch_sizes: Option<Vec<u32>>,
    pub epochs: Option<u32>,
    pub selection_metric: Option<SelectionMetric>,
    pub split_seed: Option<u64>,
}

/// A grid together with the seed of its validation split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub config: GridConfig,
    pub split_seed: u64,
}

impl GridSpec {
    /// Builds the spec from an optional grid file; `task` and `metric`
    /// override the file.
    pub fn resolve(
        file: Option<&Path>,
        task: Option<&str>,
        metric: Option<SelectionMetric>,
    ) -> Result<Self> {
        let (f, origin) = match file {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                let f: GridFile =
                    toml::from_str(&text).map_err(|e| Error::config(p, e.to_string()))?;
                (f, p.to_path_buf())
            }
            None => (GridFile::default(), PathBuf::from("<command line>")),
        };
        let task = task
            .map(str::to_owned)
            .or(f.task)
            .ok_or_else(|| Error::config(&origin, "no task given"))?;
        let metric = metric.or(f.selection_metric).unwrap_or(SelectionMetric::F1);
        let mut config = GridConfig::reference(task, metric);
        if let Some(v) = f.learning_rates {
            config.learning_rates = v;
        }
        if let Some(v) = f.batch_sizes {
            config.batch_sizes = v;
        }
        if let Some(v) = f.epochs {
            config.epochs = v;
        }
        config.validate().map_err(|e| Error::file(&origin, e))?;
        Ok(GridSpec {
            config,
            split_seed: f.split_seed.unwrap_or(0),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "lowercase")]
enum JournalEntry {
    Grid {
        config: GridConfig,
        split_seed: u64,
        validation_fraction: f64,
        trainer: String,
    },
    Status {
        run_id: String,
        status: RunStatus,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        report: Option<TrainerReport>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        error: Option<String>,
    },
}

struct Journal {
    path: PathBuf,
    file: Mutex<File>,
}

impl Journal {
    fn append(&self, entry: &JournalEntry) -> Result<()> {
        let line = serde_json::to_string(entry).expect("journal entries serialize") + "\n";
        let mut f = self.file.lock().unwrap_or_else(|e| e.into_inner());
        f.write_all(line.as_bytes())
            .and_then(|_| f.sync_data())
            .map_err(|e| Error::io(&self.path, e))
    }
}

/// Checks the template and fills in one run's values.
pub fn render_command(template: &str, task: &str, run: &GridRun, out: &Path) -> Result<String> {
    check_template(template)?;
    Ok(template
        .replace("{lr}", &run.lr.to_string())
        .replace("{batch_size}", &run.batch_size.to_string())
        .replace("{epochs}", &run.epochs.to_string())
        .replace("{out}", &shell_quote(&out.to_string_lossy()))
        .replace("{task}", &shell_quote(task))
        .replace("{run_id}", &run.run_id))
}

pub fn check_template(template: &str) -> Result<()> {
    let missing: Vec<&str> = REQUIRED_PLACEHOLDERS
        .into_iter()
        .filter(|p| !template.contains(p))
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Error::Other(format!(
            "trainer template lacks {}",
            missing.join(", ")
        )))
    }
}

fn shell_quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', r"'\''"))
}

fn read_journal(path: &Path) -> Result<Vec<JournalEntry>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(e) => out.push(e),
            // a torn final line from an interrupted write is dropped
            Err(_) if i + 1 == text.lines().count() && !text.ends_with('\n') => {}
            Err(e) => {
                return Err(Error::Record {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: e.to_string(),
                })
            }
        }
    }
    Ok(out)
}

/// Expands the grid and replays the journal in `dir`, if any, over it.
pub fn load_state(dir: &Path) -> Result<(GridSpec, Vec<GridRun>)> {
    let path = dir.join(JOURNAL_FILE);
    let entries = read_journal(&path)?;
    let Some(JournalEntry::Grid {
        config, split_seed, ..
    }) = entries.first().cloned()
    else {
        return Err(Error::config(
            &path,
            "journal does not start with a grid record",
        ));
    };
    let mut runs = expand_grid(&config).map_err(|e| Error::file(&path, e))?;
    replay(&mut runs, &entries[1..]);
    Ok((GridSpec { config, split_seed }, runs))
}

fn replay(runs: &mut [GridRun], entries: &[JournalEntry]) {
    let by_id: HashMap<String, usize> = runs.iter().map(|r| (r.run_id.clone(), r.index)).collect();
    for e in entries {
        if let JournalEntry::Status {
            run_id,
            status,
            report,
            error,
        } = e
        {
            if let Some(&i) = by_id.get(run_id) {
                runs[i].status = *status;
                runs[i].report = report.clone();
                runs[i].error = error.clone();
            }
        }
    }
}

pub struct GridOptions<'a> {
    pub trainer: &'a str,
    pub max_parallel: usize,
}

/// Runs every grid point that has not yet finished and returns the full run
/// list in grid order.
pub fn run_grid(dir: &Path, spec: &GridSpec, options: &GridOptions) -> Result<Vec<GridRun>> {
    check_template(options.trainer)?;
    if options.max_parallel == 0 {
        return Err(Error::Other("max_parallel must be at least 1".into()));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let journal_path = dir.join(JOURNAL_FILE);
    let mut runs = expand_grid(&spec.config)?;
    let header = JournalEntry::Grid {
        config: spec.config.clone(),
        split_seed: spec.split_seed,
        validation_fraction: defaults::VALIDATION_FRACTION,
        trainer: options.trainer.to_owned(),
    };

    if journal_path.exists() {
        let entries = read_journal(&journal_path)?;
        match entries.first() {
            Some(JournalEntry::Grid {
                config, split_seed, ..
            }) if *config == spec.config && *split_seed == spec.split_seed => {}
            Some(JournalEntry::Grid { .. }) => {
                return Err(Error::config(
                    &journal_path,
                    "journal belongs to a different grid; use a fresh directory",
                ))
            }
            _ => {
                return Err(Error::config(
                    &journal_path,
                    "journal does not start with a grid record",
                ))
            }
        }
        replay(&mut runs, &entries[1..]);
    }
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&journal_path)
        .map_err(|e| Error::io(&journal_path, e))?;
    let journal = Journal {
        path: journal_path,
        file: Mutex::new(file),
    };
    if runs.iter().all(|r| r.status == RunStatus::Pending)
        && std::fs::metadata(&journal.path)
            .map(|m| m.len())
            .unwrap_or(0)
            == 0
    {
        journal.append(&header)?;
    }

    let todo: Vec<GridRun> = runs
        .iter()
        .filter(|r| !matches!(r.status, RunStatus::Done | RunStatus::Failed))
        .cloned()
        .collect();
    if !todo.is_empty() {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(options.max_parallel)
            .build()
            .map_err(|e| Error::Other(format!("cannot start worker pool: {e}")))?;
        let finished: Vec<Result<GridRun>> = pool.install(|| {
            todo.into_par_iter()
                .map(|run| execute(dir, spec, options.trainer, &journal, run))
                .collect()
        });
        for r in finished {
            let r = r?;
            let i = r.index;
            runs[i] = r;
        }
    }
    write_runs(dir, &runs)?;
    Ok(runs)
}

fn execute(
    dir: &Path,
    spec: &GridSpec,
    trainer: &str,
    journal: &Journal,
    mut run: GridRun,
) -> Result<GridRun> {
    let out =
        std::path::absolute(dir.join("runs").join(&run.run_id)).map_err(|e| Error::io(dir, e))?;
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let report_path = out.join(REPORT_FILE);
    if report_path.exists() {
        std::fs::remove_file(&report_path).map_err(|e| Error::io(&report_path, e))?;
    }
    journal.append(&JournalEntry::Status {
        run_id: run.run_id.clone(),
        status: RunStatus::Running,
        report: None,
        error: None,
    })?;
    log::info!("starting run {}", run.run_id);

    let outcome = invoke(spec, trainer, &run, &out).and_then(|()| read_report(&report_path, spec));
    match outcome {
        Ok(report) => {
            run.status = RunStatus::Done;
            run.report = Some(report);
            run.error = None;
        }
        Err(message) => {
            log::warn!("run {} failed: {message}", run.run_id);
            run.status = RunStatus::Failed;
            run.report = None;
            run.error = Some(message);
        }
    }
    journal.append(&JournalEntry::Status {
        run_id: run.run_id.clone(),
        status: run.status,
        report: run.report.clone(),
        error: run.error.clone(),
    })?;
    Ok(run)
}

fn invoke(
    spec: &GridSpec,
    trainer: &str,
    run: &GridRun,
    out: &Path,
) -> std::result::Result<(), String> {
    let cmd = render_command(trainer, &spec.config.task, run, out).map_err(|e| e.to_string())?;
    let log_path = out.join(LOG_FILE);
    let log = File::create(&log_path).map_err(|e| format!("{}: {e}", log_path.display()))?;
    let log_err = log
        .try_clone()
        .map_err(|e| format!("{}: {e}", log_path.display()))?;
    let status = Command::new("sh")
        .arg("-c")
        .arg(&cmd)
        .current_dir(out)
        .stdin(Stdio::null())
        .stdout(log)
        .stderr(log_err)
        .status()
        .map_err(|e| format!("cannot start trainer: {e}"))?;
    if status.success() {
        Ok(())
    } else {
        Err(format!(
            "trainer exited with {status}; see {}",
            log_path.display()
        ))
    }
}

fn read_report(path: &Path, spec: &GridSpec) -> std::result::Result<TrainerReport, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let report: TrainerReport = serde_json::from_str(&text)
        .map_err(|e| format!("{}: unparseable report: {e}", path.display()))?;
    let expected = spec.config.selection_metric.name();
    if report.metric != expected {
        return Err(format!(
            "report metric {:?}, expected {expected:?}",
            report.metric
        ));
    }
    if !report.validation.is_finite() || !report.test.is_finite() {
        return Err("report holds a non-finite score".into());
    }
    Ok(report)
}

fn write_runs(dir: &Path, runs: &[GridRun]) -> Result<()> {
    let path = dir.join(RUNS_FILE);
    let json = serde_json::to_string_pretty(runs).expect("runs serialize") + "\n";
    std::fs::write(&path, json).map_err(|e| Error::io(&path, e))
}

/// The validation-selected run of a grid directory.
pub fn best_run(dir: &Path) -> Result<(GridSpec, GridRun)> {
    let (spec, runs) = load_state(dir)?;
    let best = select_best(&runs, spec.config.selection_metric)
        .map_err(|e| Error::file(dir.join(JOURNAL_FILE), e))?
        .clone();
    Ok((spec, best))
}

/// One results row per grid directory, in the given order.
pub fn results(dirs: &[PathBuf]) -> Result<Vec<TaskResult>> {
    dirs.iter()
        .map(|d| {
            let (spec, best) = best_run(d)?;
            Ok(TaskResult::from_run(spec.config.task, &best)?)
        })
        .collect()
}

pub fn table(dirs: &[PathBuf], csv: bool) -> Result<String> {
    let rows = results(dirs)?;
    Ok(if csv {
        report_csv(&rows)
    } else {
        report_text(&rows)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(lrs: Vec<f64>, bss: Vec<u32>) -> GridSpec {
        let mut config = GridConfig::reference("t", SelectionMetric::F1);
        config.learning_rates = lrs;
        config.batch_sizes = bss;
        GridSpec {
            config,
            split_seed: 5,
        }
    }

    #[test]
    fn template_rendering() {
        let runs = expand_grid(&spec(vec![5e-5], vec![16]).config).unwrap();
        let cmd = render_command(
            "train --lr {lr} --bs {batch_size} -e {epochs} -o {out} {run_id}",
            "t",
            &runs[0],
            Path::new("/x y"),
        )
        .unwrap();
        assert_eq!(
            cmd,
            "train --lr 0.00005 --bs 16 -e 30 -o '/x y' lr5e-5_bs16"
        );
        assert!(check_template("train {lr} {out}")
            .unwrap_err()
            .to_string()
            .contains("{batch_size}"));
    }

    #[test]
    fn run_resume_and_select() {
        let dir = tempfile::tempdir().unwrap();
        let s = spec(vec![2e-5, 1e-5], vec![16, 32]);
        let trainer = "echo x >> ../../calls; if [ {lr} = 0.00001 ] && [ {batch_size} = 32 ]; then exit 3; fi; \
                       printf '{\"metric\":\"f1\",\"validation\":0.{batch_size},\"test\":0.5}' > {out}/report.json; : {epochs}";
        let opts = GridOptions {
            trainer,
            max_parallel: 2,
        };
        let runs = run_grid(dir.path(), &s, &opts).unwrap();
        let failed: Vec<_> = runs
            .iter()
            .filter(|r| r.status == RunStatus::Failed)
            .map(|r| r.run_id.as_str())
            .collect();
        assert_eq!(failed, ["lr1e-5_bs32"]);
        let calls = || {
            std::fs::read_to_string(dir.path().join("calls"))
                .unwrap()
                .lines()
                .count()
        };
        assert_eq!(calls(), 4);

        let before = std::fs::read(dir.path().join(JOURNAL_FILE)).unwrap();
        let runs_before = std::fs::read(dir.path().join(RUNS_FILE)).unwrap();
        run_grid(dir.path(), &s, &opts).unwrap();
        assert_eq!(calls(), 4);
        assert_eq!(
            std::fs::read(dir.path().join(JOURNAL_FILE)).unwrap(),
            before
        );
        assert_eq!(
            std::fs::read(dir.path().join(RUNS_FILE)).unwrap(),
            runs_before
        );

        let (_, best) = best_run(dir.path()).unwrap();
        assert_eq!(best.run_id, "lr2e-5_bs32");
        let other = spec(vec![2e-5], vec![16]);
        assert!(run_grid(dir.path(), &other, &opts).is_err());
    }
}
