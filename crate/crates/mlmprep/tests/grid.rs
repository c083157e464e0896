use std::path::Path;

use mlmprep::grid::{best_run, run_grid, table, GridOptions, GridSpec, JOURNAL_FILE, RUNS_FILE};
use mlmprep_core::grid::{GridConfig, RunStatus, SelectionMetric};

/// Stub trainer: logs each call, fails for lr 1e-6, and reports a validation
/// score that depends on the batch size only.
const STUB: &str = "echo {run_id} >> ../../calls; \
    if [ {lr} = 0.000001 ]; then echo boom >&2; exit 1; fi; \
    printf '{\"metric\":\"f1\",\"validation\":0.{batch_size},\"test\":0.7}' > {out}/report.json; : {epochs}";

fn reference(task: &str) -> GridSpec {
    GridSpec {
        config: GridConfig::reference(task, SelectionMetric::F1),
        split_seed: 1,
    }
}

fn calls(dir: &Path) -> Vec<String> {
    std::fs::read_to_string(dir.join("calls"))
        .unwrap_or_default()
        .lines()
        .map(str::to_owned)
        .collect()
}

#[test]
fn full_grid_with_failing_learning_rate() {
    let dir = tempfile::tempdir().unwrap();
    let runs = run_grid(
        dir.path(),
        &reference("ner"),
        &GridOptions {
            trainer: STUB,
            max_parallel: 4,
        },
    )
    .unwrap();
    assert_eq!(runs.len(), 24);
    let failed: Vec<_> = runs
        .iter()
        .filter(|r| r.status == RunStatus::Failed)
        .collect();
    assert_eq!(failed.len(), 4);
    assert!(failed.iter().all(|r| r.lr == 1e-6));
    assert!(runs
        .iter()
        .all(|r| r.is_done() == (r.status == RunStatus::Done)));
    let log = std::fs::read_to_string(dir.path().join("runs/lr1e-6_bs16/trainer.log")).unwrap();
    assert!(log.contains("boom"));

    // bs 64 reports the highest validation score; the largest lr wins the tie
    let (_, best) = best_run(dir.path()).unwrap();
    assert_eq!(best.run_id, "lr5e-5_bs64");
    let csv = table(&[dir.path().to_path_buf()], true).unwrap();
    assert_eq!(
        csv.lines().nth(1).unwrap(),
        "ner,f1,lr5e-5_bs64,5e-5,64,0.64,0.7"
    );
}

#[test]
fn interrupted_grid_resumes_without_rerunning_finished_runs() {
    let dir = tempfile::tempdir().unwrap();
    let spec = reference("cls");
    let opts = GridOptions {
        trainer: STUB,
        max_parallel: 1,
    };
    run_grid(dir.path(), &spec, &opts).unwrap();
    assert_eq!(calls(dir.path()).len(), 24);
    let runs_json = std::fs::read(dir.path().join(RUNS_FILE)).unwrap();

    // cut the journal back to: header, 5 finished runs, one run in flight
    let journal = dir.path().join(JOURNAL_FILE);
    let text = std::fs::read_to_string(&journal).unwrap();
    let kept: Vec<&str> = text.lines().take(1 + 2 * 5 + 1).collect();
    std::fs::write(&journal, kept.join("\n") + "\n").unwrap();
    std::fs::remove_file(dir.path().join("calls")).unwrap();

    let runs = run_grid(dir.path(), &spec, &opts).unwrap();
    let again = calls(dir.path());
    assert_eq!(again.len(), 19);
    assert_eq!(again[0], "lr2e-5_bs32");
    assert_eq!(
        runs.iter()
            .filter(|r| r.status == RunStatus::Failed)
            .count(),
        4
    );
    assert_eq!(
        std::fs::read(dir.path().join(RUNS_FILE)).unwrap(),
        runs_json
    );

    // a completed grid is a no-op
    let before = std::fs::read(&journal).unwrap();
    run_grid(dir.path(), &spec, &opts).unwrap();
    assert_eq!(calls(dir.path()).len(), 19);
    assert_eq!(std::fs::read(&journal).unwrap(), before);
}

#[test]
fn bad_reports_fail_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = reference("nli");
    spec.config.learning_rates = vec![1e-5];
    spec.config.batch_sizes = vec![16, 32];
    let trainer = "if [ {batch_size} = 16 ]; then echo nonsense > {out}/report.json; \
                   else printf '{\"metric\":\"accuracy\",\"validation\":1,\"test\":1}' > {out}/report.json; fi; : {lr} {epochs}";
    let runs = run_grid(
        dir.path(),
        &spec,
        &GridOptions {
            trainer,
            max_parallel: 2,
        },
    )
    .unwrap();
    assert!(runs.iter().all(|r| r.status == RunStatus::Failed));
    assert!(runs[0].error.as_ref().unwrap().contains("unparseable"));
    assert!(runs[1].error.as_ref().unwrap().contains("metric"));
    assert!(best_run(dir.path()).is_err());
}
