//! Binary shard codec.
//!
//! All integers are little-endian. A shard with `n` sequences is laid out as
//!
//! | offset               | size        | field                                   |
//! |----------------------|-------------|-----------------------------------------|
//! | 0                    | 4           | magic `GSHD`                            |
//! | 4                    | 4           | format version (1)                      |
//! | 8                    | 4           | vocabulary size                         |
//! | 12                   | 4           | sequence length (512)                   |
//! | 16                   | 8           | sequence count `n`                      |
//! | 24                   | 4           | ignore-label sentinel                   |
//! | 28                   | 4           | header check: SHA-256 of bytes 0..28, first 4 bytes |
//! | 32                   | `n*512*4`   | token ids, row-major, `u32`             |
//! | `32+n*2048`          | `n*64`      | word-start bitmap, 512 bits per row, LSB first |
//! | `32+n*2112`          | `n*4`       | `n_real` per row, `u32`                 |
//!
//! Rows have a fixed stride, so a memory-mapped file can be indexed
//! directly.

use alloc::vec::Vec;

use sha2::{Digest, Sha256};

use super::PackedSequence;
use crate::bbpe::SpecialTokens;
use crate::defaults::{IGNORE_SENTINEL, SEQUENCE_LENGTH};
use crate::{Error, Result};

pub const SHARD_MAGIC: [u8; 4] = *b"GSHD";
pub const SHARD_FORMAT_VERSION: u32 = 1;
pub const SHARD_HEADER_LEN: usize = 32;

const ROW_IDS: usize = SEQUENCE_LENGTH * 4;
const ROW_BITS: usize = SEQUENCE_LENGTH / 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShardHeader {
    pub format_version: u32,
    pub vocab_size: u32,
    pub sequence_length: u32,
    pub sequence_count: u64,
    pub ignore_sentinel: u32,
}

impl ShardHeader {
    pub fn new(vocab_size: u32, sequence_count: u64) -> Self {
        ShardHeader {
            format_version: SHARD_FORMAT_VERSION,
            vocab_size,
            sequence_length: SEQUENCE_LENGTH as u32,
            sequence_count,
            ignore_sentinel: IGNORE_SENTINEL,
        }
    }

    pub fn to_bytes(&self) -> [u8; SHARD_HEADER_LEN] {
        let mut b = [0u8; SHARD_HEADER_LEN];
        b[0..4].copy_from_slice(&SHARD_MAGIC);
        b[4..8].copy_from_slice(&self.format_version.to_le_bytes());
        b[8..12].copy_from_slice(&self.vocab_size.to_le_bytes());
        b[12..16].copy_from_slice(&self.sequence_length.to_le_bytes());
        b[16..24].copy_from_slice(&self.sequence_count.to_le_bytes());
        b[24..28].copy_from_slice(&self.ignore_sentinel.to_le_bytes());
        let check = header_check(&b[..28]);
        b[28..32].copy_from_slice(&check);
        b
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < SHARD_HEADER_LEN {
            return Err(Error::Corruption {
                offset: bytes.len() as u64,
                message: alloc::format!("file ends inside the {SHARD_HEADER_LEN}-byte header"),
            });
        }
        if bytes[0..4] != SHARD_MAGIC {
            return Err(Error::Format("bad magic, not a shard file".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let version = u32_at(4);
        if version != SHARD_FORMAT_VERSION {
            return Err(Error::Format(alloc::format!(
                "unsupported shard format version {version}"
            )));
        }
        if bytes[28..32] != header_check(&bytes[..28]) {
            return Err(Error::Format("header check mismatch".into()));
        }
        let header = ShardHeader {
            format_version: version,
            vocab_size: u32_at(8),
            sequence_length: u32_at(12),
            sequence_count: u64::from_le_bytes(bytes[16..24].try_into().unwrap()),
            ignore_sentinel: u32_at(24),
        };
        if header.sequence_length as usize != SEQUENCE_LENGTH {
            return Err(Error::Format(alloc::format!(
                "sequence length {} is not {SEQUENCE_LENGTH}",
                header.sequence_length
            )));
        }
        Ok(header)
    }

    /// Total file size implied by the header.
    pub fn file_len(&self) -> u64 {
        SHARD_HEADER_LEN as u64 + self.sequence_count * (ROW_IDS + ROW_BITS + 4) as u64
    }
}

fn header_check(bytes: &[u8]) -> [u8; 4] {
    Sha256::digest(bytes)[..4].try_into().unwrap()
}

/// Serializes sequences into one shard.
pub fn encode_shard(vocab_size: u32, seqs: &[PackedSequence]) -> Result<Vec<u8>> {
    let header = ShardHeader::new(vocab_size, seqs.len() as u64);
    let mut out = Vec::with_capacity(header.file_len() as usize);
    out.extend_from_slice(&header.to_bytes());
    for s in seqs {
        s.validate()?;
        if let Some(&bad) = s.ids.iter().find(|&&i| i >= vocab_size) {
            return Err(Error::input(alloc::format!(
                "token id {bad} does not fit vocabulary of {vocab_size}"
            )));
        }
        s.ids
            .iter()
            .for_each(|id| out.extend_from_slice(&id.to_le_bytes()));
    }
    for s in seqs {
        let mut bits = [0u8; ROW_BITS];
        for (i, _) in s.word_start.iter().enumerate().filter(|(_, f)| **f) {
            bits[i / 8] |= 1 << (i % 8);
        }
        out.extend_from_slice(&bits);
    }
    for s in seqs {
        out.extend_from_slice(&(s.n_real as u32).to_le_bytes());
    }
    Ok(out)
}

/// Zero-copy view over an encoded shard.
#[derive(Debug, Clone, Copy)]
pub struct ShardView<'a> {
    header: ShardHeader,
    bytes: &'a [u8],
}

impl<'a> ShardView<'a> {
    /// Checks the header, the file length and every row.
    pub fn parse(bytes: &'a [u8]) -> Result<Self> {
        let header = ShardHeader::parse(bytes)?;
        let expected = header.file_len();
        let actual = bytes.len() as u64;
        if actual < expected {
            return Err(Error::Corruption {
                offset: actual,
                message: alloc::format!("file truncated, header implies {expected} bytes"),
            });
        }
        if actual > expected {
            return Err(Error::Corruption {
                offset: expected,
                message: alloc::format!(
                    "{} trailing bytes after the last section",
                    actual - expected
                ),
            });
        }
        let view = ShardView { header, bytes };
        for row in 0..view.len() {
            view.check_row(row)?;
        }
        Ok(view)
    }

    pub fn header(&self) -> ShardHeader {
        self.header
    }

    pub fn len(&self) -> usize {
        self.header.sequence_count as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn ids_offset(&self, row: usize) -> usize {
        SHARD_HEADER_LEN + row * ROW_IDS
    }

    fn bits_offset(&self, row: usize) -> usize {
        SHARD_HEADER_LEN + self.len() * ROW_IDS + row * ROW_BITS
    }

    fn n_real_offset(&self, row: usize) -> usize {
        SHARD_HEADER_LEN + self.len() * (ROW_IDS + ROW_BITS) + row * 4
    }

    pub fn id(&self, row: usize, pos: usize) -> u32 {
        let o = self.ids_offset(row) + pos * 4;
        u32::from_le_bytes(self.bytes[o..o + 4].try_into().unwrap())
    }

    pub fn n_real(&self, row: usize) -> usize {
        let o = self.n_real_offset(row);
        u32::from_le_bytes(self.bytes[o..o + 4].try_into().unwrap()) as usize
    }

    pub fn word_start(&self, row: usize, pos: usize) -> bool {
        self.bytes[self.bits_offset(row) + pos / 8] >> (pos % 8) & 1 == 1
    }

    fn check_row(&self, row: usize) -> Result<()> {
        let corrupt = |offset: usize, message: alloc::string::String| Error::Corruption {
            offset: offset as u64,
            message,
        };
        let n_real = self.n_real(row);
        if !(2..=SEQUENCE_LENGTH).contains(&n_real) {
            return Err(corrupt(
                self.n_real_offset(row),
                alloc::format!("row {row}: n_real {n_real} out of range"),
            ));
        }
        for pos in 0..SEQUENCE_LENGTH {
            let id = self.id(row, pos);
            let expected = match pos {
                0 => Some(SpecialTokens::BOS_ID),
                p if p == n_real - 1 => Some(SpecialTokens::EOS_ID),
                p if p >= n_real => Some(SpecialTokens::PAD_ID),
                _ => None,
            };
            if id >= self.header.vocab_size || expected.is_some_and(|e| e != id) {
                return Err(corrupt(
                    self.ids_offset(row) + pos * 4,
                    alloc::format!("row {row}: unexpected token id {id} at position {pos}"),
                ));
            }
        }
        Ok(())
    }

    pub fn get(&self, row: usize) -> PackedSequence {
        PackedSequence {
            ids: (0..SEQUENCE_LENGTH).map(|p| self.id(row, p)).collect(),
            word_start: (0..SEQUENCE_LENGTH)
                .map(|p| self.word_start(row, p))
                .collect(),
            n_real: self.n_real(row),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = PackedSequence> + '_ {
        (0..self.len()).map(move |r| self.get(r))
    }
}

/// Parses a shard into its header and sequences.
pub fn decode_shard(bytes: &[u8]) -> Result<(ShardHeader, Vec<PackedSequence>)> {
    let view = ShardView::parse(bytes)?;
    Ok((view.header(), view.iter().collect()))
}
