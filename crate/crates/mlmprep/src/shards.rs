//! Packing document files into shard files and reading them back.
//!
//! A shard directory holds `shard-00000.bin`, `shard-00001.bin`, ... plus a
//! `shards.json` index with per-file checksums and the packing statistics.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use mlmprep_core::bbpe::{EncodedText, TokenizerModel};
use mlmprep_core::packer::{
    decode_shard, encode_document, encode_shard, PackStats, PackedSequence, ShardHeader, ShardView,
    SHARD_FORMAT_VERSION,
};

use crate::docs::DocReader;
use crate::{file_sha256, sha256_hex, Error, Result};

pub const INDEX_FILE: &str = "shards.json";

/// Documents tokenized per parallel batch while packing.
const ENCODE_BATCH: usize = 512;

pub fn shard_file_name(index: usize) -> String {
    format!("shard-{index:05}.bin")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardFile {
    pub name: String,
    pub sequences: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardIndex {
    pub format_version: u32,
    pub vocab_size: u32,
    pub sequence_length: u32,
    pub files: Vec<ShardFile>,
    pub stats: PackStats,
    /// Seed of the upstream shuffle, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Writes sequences into consecutive shard files of at most
/// `max_per_shard` rows.
pub struct ShardWriter {
    dir: PathBuf,
    vocab_size: u32,
    max_per_shard: usize,
    pending: Vec<PackedSequence>,
    files: Vec<ShardFile>,
}

impl ShardWriter {
    pub fn create(dir: impl AsRef<Path>, vocab_size: u32, max_per_shard: usize) -> Result<Self> {
        if max_per_shard == 0 {
            return Err(Error::Other(
                "max sequences per shard must be positive".into(),
            ));
        }
        let dir = dir.as_ref().to_path_buf();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(ShardWriter {
            dir,
            vocab_size,
            max_per_shard,
            pending: Vec::new(),
            files: Vec::new(),
        })
    }

    pub fn push(&mut self, seq: PackedSequence) -> Result<()> {
        self.pending.push(seq);
        if self.pending.len() == self.max_per_shard {
            self.flush()?;
        }
        Ok(())
    }

    fn flush(&mut self) -> Result<()> {
        if self.pending.is_empty() {
            return Ok(());
        }
        let name = shard_file_name(self.files.len());
        let path = self.dir.join(&name);
        let bytes =
            encode_shard(self.vocab_size, &self.pending).map_err(|e| Error::file(&path, e))?;
        std::fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
        self.files.push(ShardFile {
            name,
            sequences: self.pending.len() as u64,
            sha256: sha256_hex(&bytes),
        });
        self.pending.clear();
        Ok(())
    }

    /// Flushes the last shard and writes the index.
    pub fn finish(mut self, stats: PackStats, seed: Option<u64>) -> Result<ShardIndex> {
        self.flush()?;
        let index = ShardIndex {
            format_version: SHARD_FORMAT_VERSION,
            vocab_size: self.vocab_size,
            sequence_length: mlmprep_core::defaults::SEQUENCE_LENGTH as u32,
            files: self.files,
            stats,
            seed,
        };
        let path = self.dir.join(INDEX_FILE);
        let json = serde_json::to_string_pretty(&index).expect("index serializes");
        std::fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
        Ok(index)
    }
}

/// Tokenizes and packs every document of `inputs`, in order, into shards
/// under `out_dir`.
pub fn pack_files(
    model: &TokenizerModel,
    inputs: &[PathBuf],
    out_dir: &Path,
    max_per_shard: usize,
    seed: Option<u64>,
) -> Result<ShardIndex> {
    let mut writer = ShardWriter::create(out_dir, model.vocab_size() as u32, max_per_shard)?;
    let mut packer = mlmprep_core::packer::Packer::new();
    let mut batch: Vec<String> = Vec::with_capacity(ENCODE_BATCH);

    let drain_batch = |batch: &mut Vec<String>,
                       packer: &mut mlmprep_core::packer::Packer,
                       writer: &mut ShardWriter|
     -> Result<()> {
        let encoded: Vec<Vec<EncodedText>> = batch
            .par_iter()
            .map(|t| encode_document(model, t))
            .collect();
        batch.clear();
        for doc in &encoded {
            for s in doc {
                packer.push_sentence(s);
            }
            packer.end_document();
            for seq in packer.drain() {
                writer.push(seq)?;
            }
        }
        Ok(())
    };

    for input in inputs {
        for doc in DocReader::open(input)? {
            batch.push(doc?.text);
            if batch.len() == ENCODE_BATCH {
                drain_batch(&mut batch, &mut packer, &mut writer)?;
            }
        }
    }
    drain_batch(&mut batch, &mut packer, &mut writer)?;
    let (rest, stats) = packer.finish();
    for seq in rest {
        writer.push(seq)?;
    }
    writer.finish(stats, seed)
}

pub fn read_shard(path: &Path) -> Result<(ShardHeader, Vec<PackedSequence>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_shard(&bytes).map_err(|e| Error::file(path, e))
}

/// Shard files of a directory in name order.
pub fn shard_paths(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_shard = p
            .file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.starts_with("shard-") && n.ends_with(".bin"));
        if is_shard {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

/// Every sequence of every shard in a directory, in order, together with
/// the vocabulary size recorded in the shard headers.
pub fn read_shards(dir: &Path) -> Result<(u32, Vec<PackedSequence>)> {
    let paths = shard_paths(dir)?;
    if paths.is_empty() {
        return Err(Error::Other(format!("{}: no shard files", dir.display())));
    }
    let mut vocab = None;
    let mut all = Vec::new();
    for p in &paths {
        let (header, seqs) = read_shard(p)?;
        match vocab {
            None => vocab = Some(header.vocab_size),
            Some(v) if v != header.vocab_size => {
                return Err(Error::Other(format!(
                    "{}: vocabulary size {} differs from {v} in earlier shards",
                    p.display(),
                    header.vocab_size
                )))
            }
            _ => {}
        }
        all.extend(seqs);
    }
    Ok((vocab.unwrap(), all))
}

/// Checks the files listed in a shard index against their checksums.
pub fn verify_index(dir: &Path) -> Result<ShardIndex> {
    let path = dir.join(INDEX_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let index: ShardIndex =
        serde_json::from_str(&text).map_err(|e| Error::config(&path, e.to_string()))?;
    for f in &index.files {
        let p = dir.join(&f.name);
        if file_sha256(&p)? != f.sha256 {
            return Err(Error::Other(format!("{}: checksum mismatch", p.display())));
        }
    }
    Ok(index)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShardSummary {
    pub format_version: u32,
    pub vocab_size: u32,
    pub sequence_length: u32,
    pub sequences: u64,
    pub ignore_sentinel: u32,
    pub real_tokens: u64,
    pub payload_tokens: u64,
    pub pad_positions: u64,
    pub word_starts: u64,
    pub fill_ratio: f64,
}

/// Validates a shard file and summarizes its contents.
pub fn inspect(path: &Path) -> Result<ShardSummary> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let view = ShardView::parse(&bytes).map_err(|e| Error::file(path, e))?;
    let h = view.header();
    let mut s = ShardSummary {
        format_version: h.format_version,
        vocab_size: h.vocab_size,
        sequence_length: h.sequence_length,
        sequences: h.sequence_count,
        ignore_sentinel: h.ignore_sentinel,
        real_tokens: 0,
        payload_tokens: 0,
        pad_positions: 0,
        word_starts: 0,
        fill_ratio: 0.0,
    };
    for seq in view.iter() {
        s.real_tokens += seq.n_real as u64;
        s.payload_tokens += seq.n_real as u64 - 2;
        s.pad_positions += (seq.ids.len() - seq.n_real) as u64;
        s.word_starts += seq.word_start.iter().filter(|&&w| w).count() as u64;
    }
    let positions = s.sequences * s.sequence_length as u64;
    if positions > 0 {
        s.fill_ratio = s.real_tokens as f64 / positions as f64;
    }
    Ok(s)
}
