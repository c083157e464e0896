//! Masking over shard directories: policy files, a worker pool and the
//! masked-batch file format.
//!
//! A masked-batch file is little-endian: magic `GMSK`, format version (u32),
//! sequence length (u32), sequence count (u64), seed (u64), epoch (u64),
//! ignore sentinel (u32), reserved (u32), then per sequence the corrupted
//! input ids followed by the labels, each `sequence length` u32 values.

use std::path::Path;

use rayon::prelude::*;

use mlmprep_core::masker::{mask_batch, MaskPolicy, MaskStats, MaskVocab, MaskedBatch};
use mlmprep_core::packer::PackedSequence;

use crate::shards::read_shards;
use crate::{Error, Result};

pub const MASKED_MAGIC: [u8; 4] = *b"GMSK";
pub const MASKED_FORMAT_VERSION: u32 = 1;
pub const MASKED_HEADER_LEN: usize = 44;

/// Sequences handed to a worker at a time.
const CHUNK: usize = 256;

/// Reads a TOML policy file; absent keys take their defaults.
pub fn load_policy(path: &Path) -> Result<MaskPolicy> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let policy: MaskPolicy =
        toml::from_str(&text).map_err(|e| Error::config(path, e.to_string()))?;
    policy.validate().map_err(|e| Error::file(path, e))?;
    Ok(policy)
}

/// Masks `seqs` with `threads` workers (0 = all cores). The result does not
/// depend on the number of workers.
pub fn mask_parallel(
    seqs: &[PackedSequence],
    policy: &MaskPolicy,
    vocab: MaskVocab,
    seed: u64,
    epoch: u64,
    threads: usize,
) -> Result<Vec<MaskedBatch>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Other(format!("cannot start worker pool: {e}")))?;
    pool.install(|| {
        seqs.par_chunks(CHUNK)
            .enumerate()
            .map(|(i, chunk)| mask_batch(chunk, (i * CHUNK) as u64, policy, vocab, seed, epoch))
            .collect::<std::result::Result<Vec<_>, _>>()
    })
    .map_err(Error::from)
}

pub struct MaskRun {
    pub stats: MaskStats,
    pub batches: Vec<MaskedBatch>,
}

/// Masks every sequence of a shard directory.
pub fn mask_shards(
    dir: &Path,
    policy: &MaskPolicy,
    seed: u64,
    epoch: u64,
    threads: usize,
) -> Result<MaskRun> {
    let (vocab_size, seqs) = read_shards(dir)?;
    let batches = mask_parallel(
        &seqs,
        policy,
        MaskVocab::new(vocab_size),
        seed,
        epoch,
        threads,
    )?;
    let stats = mlmprep_core::masker::mask_stats(&batches);
    Ok(MaskRun { stats, batches })
}

pub fn encode_masked(
    batches: &[MaskedBatch],
    policy: &MaskPolicy,
    seed: u64,
    epoch: u64,
) -> Vec<u8> {
    let count: usize = batches.iter().map(|b| b.len()).sum();
    let seq_len = mlmprep_core::defaults::SEQUENCE_LENGTH;
    let mut out = Vec::with_capacity(MASKED_HEADER_LEN + count * seq_len * 8);
    out.extend_from_slice(&MASKED_MAGIC);
    out.extend_from_slice(&MASKED_FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(seq_len as u32).to_le_bytes());
    out.extend_from_slice(&(count as u64).to_le_bytes());
    out.extend_from_slice(&seed.to_le_bytes());
    out.extend_from_slice(&epoch.to_le_bytes());
    out.extend_from_slice(&policy.ignore_sentinel.to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    for b in batches {
        for (ids, labels) in b.input_ids.iter().zip(&b.labels) {
            ids.iter()
                .chain(labels)
                .for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
        }
    }
    debug_assert_eq!(out.len(), MASKED_HEADER_LEN + count * seq_len * 8);
    out
}

pub fn write_masked(
    path: &Path,
    batches: &[MaskedBatch],
    policy: &MaskPolicy,
    seed: u64,
    epoch: u64,
) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, encode_masked(batches, policy, seed, epoch))
        .map_err(|e| Error::io(path, e))
}
