//! The end-to-end preparation run: validate → dedup → shuffle → tokenizer →
//! pack → mask-stats.
//!
//! Every artifact lands under the configured output directory, and
//! `run_manifest.json` records the stages with the SHA-256 of every input
//! and output. The run manifest is rewritten after each stage, so a run that
//! stops early is visibly marked incomplete together with the failed stage.
//!
//! ```toml
//! manifest = "corpus.toml"
//! out_dir = "out"
//! seed = 42
//! # tokenizer_dir = "tok"        # load this model instead of training one
//! vocab_size = 52009
//! min_frequency = 2
//! max_per_shard = 4096
//! shuffle_buckets = 64
//! grids = ["grids/ner.toml"]
//!
//! [mask]
//! enabled = true
//! # policy = "policy.toml"
//! epoch = 0
//! threads = 0
//!
//! [schedule]
//! warmup_steps = 10000
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use mlmprep_core::bbpe::{TrainConfig, MERGES_FILE, VOCAB_FILE};
use mlmprep_core::defaults;
use mlmprep_core::masker::{MaskPolicy, MaskStats};
use mlmprep_core::schedule::LrSchedule;

use crate::grid::GridSpec;
use crate::manifest::{dedup_entries, validate, Manifest};
use crate::{file_sha256, masking, shards, shuffle, tokenizer, Error, Result};

pub const RUN_MANIFEST: &str = "run_manifest.json";
pub const STAGES: [&str; 6] = [
    "validate",
    "dedup",
    "shuffle",
    "tokenizer",
    "pack",
    "mask-stats",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaskStage {
    pub enabled: bool,
    pub policy: Option<PathBuf>,
    pub epoch: u64,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
}

impl Default for MaskStage {
    fn default() -> Self {
        MaskStage {
            enabled: true,
            policy: None,
            epoch: 0,
            threads: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub manifest: PathBuf,
    pub out_dir: PathBuf,
    pub seed: u64,
    #[serde(default)]
    pub tokenizer_dir: Option<PathBuf>,
    #[serde(default = "default_vocab_size")]
    pub vocab_size: usize,
    #[serde(default = "default_min_frequency")]
    pub min_frequency: u64,
    #[serde(default = "default_max_per_shard")]
    pub max_per_shard: usize,
    #[serde(default = "default_buckets")]
    pub shuffle_buckets: u32,
    #[serde(default)]
    pub grids: Vec<PathBuf>,
    #[serde(default)]
    pub mask: MaskStage,
    #[serde(default)]
    pub schedule: LrSchedule,
}

fn default_vocab_size() -> usize {
    defaults::VOCAB_SIZE
}
fn default_min_frequency() -> u64 {
    2
}
fn default_max_per_shard() -> usize {
    4096
}
fn default_buckets() -> u32 {
    defaults::SHUFFLE_BUCKETS
}

impl PipelineConfig {
    /// Reads a config file; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut c: PipelineConfig =
            toml::from_str(&text).map_err(|e| Error::config(path, e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut c.manifest);
        fix(&mut c.out_dir);
        c.tokenizer_dir.iter_mut().for_each(fix);
        c.mask.policy.iter_mut().for_each(fix);
        c.grids.iter_mut().for_each(fix);
        Ok(c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Done,
    Skipped,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub status: StageStatus,
    /// Output path relative to the output directory → SHA-256.
    pub outputs: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub versions: serde_json::Value,
    pub seed: u64,
    pub config: PipelineConfig,
    /// Input path → SHA-256.
    pub inputs: BTreeMap<String, String>,
    pub stages: Vec<StageRecord>,
    pub complete: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed_stage: Option<String>,
}

impl RunManifest {
    /// Checksums of every output of every stage.
    pub fn output_checksums(&self) -> BTreeMap<String, String> {
        self.stages.iter().flat_map(|s| s.outputs.clone()).collect()
    }
}

/// Error of a pipeline run, naming the stage that failed.
#[derive(Debug, thiserror::Error)]
#[error("stage {stage} failed: {source}")]
pub struct StageError {
    pub stage: String,
    #[source]
    pub source: Error,
}

struct Run<'a> {
    config: &'a PipelineConfig,
    out: PathBuf,
    manifest: RunManifest,
}

impl Run<'_> {
    fn rel(&self, p: &Path) -> String {
        p.strip_prefix(&self.out)
            .unwrap_or(p)
            .to_string_lossy()
            .replace('\\', "/")
    }

    fn checksums(&self, paths: &[PathBuf]) -> Result<BTreeMap<String, String>> {
        paths
            .iter()
            .map(|p| Ok((self.rel(p), file_sha256(p)?)))
            .collect()
    }

    fn save(&self) -> Result<()> {
        let path = self.out.join(RUN_MANIFEST);
        let json =
            serde_json::to_string_pretty(&self.manifest).expect("run manifest serializes") + "\n";
        std::fs::write(&path, json).map_err(|e| Error::io(&path, e))
    }

    fn stage(
        &mut self,
        name: &str,
        body: impl FnOnce(&mut Self) -> Result<Option<Vec<PathBuf>>>,
    ) -> std::result::Result<(), StageError> {
        log::info!("stage {name}");
        let fail = |e: Error| StageError {
            stage: name.to_owned(),
            source: e,
        };
        let (status, outputs, error) = match body(self).and_then(|o| match o {
            Some(paths) => Ok((StageStatus::Done, self.checksums(&paths)?)),
            None => Ok((StageStatus::Skipped, BTreeMap::new())),
        }) {
            Ok((s, o)) => (s, o, None),
            Err(e) => (StageStatus::Failed, BTreeMap::new(), Some(e)),
        };
        self.manifest.stages.push(StageRecord {
            name: name.to_owned(),
            status,
            outputs,
            error: error.as_ref().map(|e| e.to_string()),
        });
        if let Some(e) = error {
            self.manifest.failed_stage = Some(name.to_owned());
            // the original failure matters more than a failure to record it
            let _ = self.save();
            return Err(fail(e));
        }
        self.save().map_err(fail)
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let json = serde_json::to_string_pretty(value).expect("values serialize") + "\n";
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

/// Runs every stage in order and returns the final run manifest.
pub fn run_pipeline(config: &PipelineConfig) -> std::result::Result<RunManifest, StageError> {
    let out = config.out_dir.clone();
    let early = |e: Error| StageError {
        stage: STAGES[0].to_owned(),
        source: e,
    };
    std::fs::create_dir_all(&out).map_err(|e| early(Error::io(&out, e)))?;
    let mut run = Run {
        config,
        out: out.clone(),
        manifest: RunManifest {
            versions: crate::version_info(),
            seed: config.seed,
            config: config.clone(),
            inputs: BTreeMap::new(),
            stages: Vec::new(),
            complete: false,
            failed_stage: None,
        },
    };

    let mut manifest: Option<Manifest> = None;
    run.stage("validate", |r| {
        let m = Manifest::load(&r.config.manifest)?;
        let mut inputs = vec![r.config.manifest.clone()];
        for e in &m.corpus.entries {
            inputs.extend(m.entry_files(e)?);
        }
        if let Some(p) = &r.config.mask.policy {
            masking::load_policy(p)?;
            inputs.push(p.clone());
        }
        for g in &r.config.grids {
            GridSpec::resolve(Some(g), None, None)?;
            inputs.push(g.clone());
        }
        r.config.schedule.validate()?;
        if r.config.max_per_shard == 0 || r.config.shuffle_buckets == 0 {
            return Err(Error::Other(
                "max_per_shard and shuffle_buckets must be positive".into(),
            ));
        }
        r.manifest.inputs = inputs
            .iter()
            .map(|p| Ok((p.to_string_lossy().into_owned(), file_sha256(p)?)))
            .collect::<Result<_>>()?;
        let report = validate(&m)?;
        let path = r.out.join("validation.json");
        write_json(&path, &report)?;
        if !report.ok {
            let bad: Vec<String> = report
                .entries
                .iter()
                .filter(|e| !e.mismatches.is_empty())
                .map(|e| format!("{}: {}", e.name, e.mismatches.join("; ")))
                .collect();
            return Err(Error::Other(format!(
                "manifest counts do not match: {}",
                bad.join(" | ")
            )));
        }
        manifest = Some(m);
        Ok(Some(vec![path]))
    })?;
    let manifest = manifest.expect("set by the validate stage");

    let mut deduped: Vec<PathBuf> = Vec::new();
    run.stage("dedup", |r| {
        let res = dedup_entries(&manifest, &r.out.join("dedup"))?;
        let path = r.out.join("dedup.json");
        let rows: Vec<_> = res
            .iter()
            .map(|d| serde_json::json!({"name": d.name, "dedup": d.dedup, "kept": d.counts.kept, "dropped": d.counts.dropped, "output": r.rel(&d.output)}))
            .collect();
        write_json(&path, &rows)?;
        deduped = res.into_iter().map(|d| d.output).collect();
        let mut outs = deduped.clone();
        outs.push(path);
        Ok(Some(outs))
    })?;

    let shuffled = out.join("shuffled.jsonl");
    run.stage("shuffle", |r| {
        let n =
            shuffle::shuffle_files(&deduped, &shuffled, r.config.seed, r.config.shuffle_buckets)?;
        log::info!("shuffled {n} documents");
        Ok(Some(vec![shuffled.clone()]))
    })?;

    let mut model = None;
    run.stage("tokenizer", |r| {
        let dir = match &r.config.tokenizer_dir {
            Some(d) if tokenizer::has_model(d) => {
                model = Some(tokenizer::load_model(d)?);
                d.clone()
            }
            _ => {
                let mut tc = TrainConfig::with_vocab_size(r.config.vocab_size);
                tc.min_frequency = r.config.min_frequency;
                let m = tokenizer::train_from_files(std::slice::from_ref(&shuffled), &tc)?;
                let dir = r.out.join("tokenizer");
                tokenizer::save_model(&m, &dir)?;
                model = Some(m);
                dir
            }
        };
        Ok(Some(vec![dir.join(VOCAB_FILE), dir.join(MERGES_FILE)]))
    })?;
    let model = model.expect("set by the tokenizer stage");

    let shard_dir = out.join("shards");
    run.stage("pack", |r| {
        if shard_dir.exists() {
            std::fs::remove_dir_all(&shard_dir).map_err(|e| Error::io(&shard_dir, e))?;
        }
        shards::pack_files(
            &model,
            std::slice::from_ref(&shuffled),
            &shard_dir,
            r.config.max_per_shard,
            Some(r.config.seed),
        )?;
        let mut outs = shards::shard_paths(&shard_dir)?;
        outs.push(shard_dir.join(shards::INDEX_FILE));
        Ok(Some(outs))
    })?;

    run.stage("mask-stats", |r| {
        if !r.config.mask.enabled {
            return Ok(None);
        }
        let policy = match &r.config.mask.policy {
            Some(p) => masking::load_policy(p)?,
            None => MaskPolicy::default(),
        };
        let stats = if shards::shard_paths(&shard_dir)?.is_empty() {
            MaskStats::default()
        } else {
            masking::mask_shards(&shard_dir, &policy, r.config.seed, r.config.mask.epoch, r.config.mask.threads)?.stats
        };
        let path = r.out.join("mask_stats.json");
        write_json(
            &path,
            &serde_json::json!({"seed": r.config.seed, "epoch": r.config.mask.epoch, "policy": policy, "stats": stats}),
        )?;
        Ok(Some(vec![path]))
    })?;

    run.manifest.complete = true;
    run.save().map_err(|e| StageError {
        stage: "mask-stats".into(),
        source: e,
    })?;
    Ok(run.manifest)
}
