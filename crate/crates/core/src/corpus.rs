//! Documents, exact deduplication, seeded shuffling and corpus statistics.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use hashbrown::HashSet;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentRecord {
    pub id: String,
    pub source: String,
    pub text: String,
}

impl DocumentRecord {
    pub fn new(id: impl Into<String>, source: impl Into<String>, text: impl Into<String>) -> Self {
        DocumentRecord {
            id: id.into(),
            source: source.into(),
            text: text.into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.text.trim().is_empty() {
            return Err(Error::input(alloc::format!(
                "document {:?} has no text",
                self.id
            )));
        }
        Ok(())
    }
}

/// Trims and collapses every internal whitespace run to one space. Case is
/// left alone.
pub fn normalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for word in text.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

/// 128-bit content hash of the normalized text (the first half of its
/// SHA-256).
pub fn content_hash(text: &str) -> u128 {
    let digest = Sha256::digest(normalize(text).as_bytes());
    u128::from_le_bytes(digest[..16].try_into().unwrap())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DedupCounts {
    pub kept: u64,
    pub dropped: u64,
}

/// Streaming exact deduplicator: keeps the first document per content hash.
#[derive(Debug, Default)]
pub struct Deduper {
    seen: HashSet<u128>,
    counts: DedupCounts,
}

impl Deduper {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns `true` if a document with this text has not been seen before.
    pub fn admit(&mut self, text: &str) -> bool {
        self.admit_hash(content_hash(text))
    }

    /// Same as [`Deduper::admit`] for a precomputed [`content_hash`].
    pub fn admit_hash(&mut self, hash: u128) -> bool {
        let fresh = self.seen.insert(hash);
        if fresh {
            self.counts.kept += 1;
        } else {
            self.counts.dropped += 1;
        }
        fresh
    }

    pub fn counts(&self) -> DedupCounts {
        self.counts
    }
}

/// Drops every document whose normalized text was already seen, keeping the
/// order of the survivors.
pub fn dedup<I>(docs: I) -> (Vec<DocumentRecord>, DedupCounts)
where
    I: IntoIterator<Item = DocumentRecord>,
{
    let mut d = Deduper::new();
    let kept = docs.into_iter().filter(|doc| d.admit(&doc.text)).collect();
    (kept, d.counts())
}

/// Bucket of a document in the seeded shuffle.
pub fn bucket_of(seed: u64, id: &str, buckets: u32) -> u32 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(id.as_bytes());
    let digest = h.finalize();
    (u64::from_le_bytes(digest[..8].try_into().unwrap()) % buckets as u64) as u32
}

fn bucket_rng(seed: u64, bucket: u32) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..12].copy_from_slice(&bucket.to_le_bytes());
    key[16..23].copy_from_slice(b"shuffle");
    ChaCha8Rng::from_seed(key)
}

/// Shuffles the contents of one bucket in place. `docs` must be in input
/// order.
pub fn shuffle_bucket<T>(docs: &mut [T], seed: u64, bucket: u32) {
    docs.shuffle(&mut bucket_rng(seed, bucket));
}

/// Seeded document shuffle.
///
/// Documents are assigned to `buckets` buckets by a hash of `(seed, id)`,
/// each bucket is shuffled with a ChaCha8 stream keyed by `(seed, bucket)`,
/// and buckets are concatenated in index order. The same procedure runs
/// bucket by bucket on disk, so corpora larger than memory give the same
/// order as this in-memory version.
pub fn shuffle(docs: Vec<DocumentRecord>, seed: u64, buckets: u32) -> Result<Vec<DocumentRecord>> {
    if buckets == 0 {
        return Err(Error::config("bucket count must be positive"));
    }
    let mut split: Vec<Vec<DocumentRecord>> = (0..buckets).map(|_| Vec::new()).collect();
    for doc in docs {
        split[bucket_of(seed, &doc.id, buckets) as usize].push(doc);
    }
    let mut out = Vec::new();
    for (b, mut bucket) in split.into_iter().enumerate() {
        shuffle_bucket(&mut bucket, seed, b as u32);
        out.append(&mut bucket);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub documents: u64,
    /// UTF-8 bytes of document text.
    pub bytes: u64,
    pub mean_doc_len: f64,
}

impl CorpusStats {
    pub fn from_counts(documents: u64, bytes: u64) -> Self {
        let mean_doc_len = if documents == 0 {
            0.0
        } else {
            bytes as f64 / documents as f64
        };
        CorpusStats {
            documents,
            bytes,
            mean_doc_len,
        }
    }

    pub fn add_document(&mut self, text: &str) {
        *self = Self::from_counts(self.documents + 1, self.bytes + text.len() as u64);
    }

    pub fn merge(self, other: CorpusStats) -> CorpusStats {
        Self::from_counts(self.documents + other.documents, self.bytes + other.bytes)
    }

    /// Size in decimal gigabytes, rounded half-up to two places.
    pub fn size_gb(&self) -> String {
        format_gb(self.bytes)
    }
}

pub fn corpus_stats<'a, I>(docs: I) -> CorpusStats
where
    I: IntoIterator<Item = &'a DocumentRecord>,
{
    let mut s = CorpusStats::default();
    docs.into_iter().for_each(|d| s.add_document(&d.text));
    s
}

/// `bytes` as decimal GB with two decimals, using integer rounding.
pub fn format_gb(bytes: u64) -> String {
    let centi = (bytes as u128 + 5_000_000) / 10_000_000;
    let mut s = String::new();
    let _ = write!(s, "{}.{:02}", centi / 100, centi % 100);
    s
}

/// One sub-corpus of a [`CorpusManifest`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    #[serde(default)]
    pub source: String,
    #[serde(default)]
    pub paths: Vec<String>,
    #[serde(default)]
    pub dedup: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_documents: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_bytes: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusManifest {
    #[serde(default, rename = "entry")]
    pub entries: Vec<ManifestEntry>,
}

impl CorpusManifest {
    /// Structural checks that need no filesystem: unique names.
    pub fn check_names(&self) -> Result<()> {
        for (i, e) in self.entries.iter().enumerate() {
            if e.name.is_empty() {
                return Err(Error::input(alloc::format!(
                    "manifest entry {i} has no name"
                )));
            }
            if self.entries[..i].iter().any(|o| o.name == e.name) {
                return Err(Error::input(alloc::format!(
                    "duplicate manifest entry {:?}",
                    e.name
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryReport {
    pub name: String,
    pub source: String,
    pub dedup: bool,
    pub documents: u64,
    pub bytes: u64,
    pub size_gb: String,
    pub expected_documents: Option<u64>,
    pub expected_bytes: Option<u64>,
    pub mismatches: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub entries: Vec<EntryReport>,
    pub total_documents: u64,
    pub total_bytes: u64,
    pub total_size_gb: String,
    pub ok: bool,
}

impl ValidationReport {
    /// Compares observed statistics (one per manifest entry, same order)
    /// with the expected counts.
    pub fn build(manifest: &CorpusManifest, observed: &[CorpusStats]) -> Result<Self> {
        if manifest.entries.len() != observed.len() {
            return Err(Error::input(alloc::format!(
                "{} manifest entries but {} observations",
                manifest.entries.len(),
                observed.len()
            )));
        }
        let mut total = CorpusStats::default();
        let mut entries = Vec::with_capacity(observed.len());
        for (e, s) in manifest.entries.iter().zip(observed) {
            total = total.merge(*s);
            let mut mismatches = Vec::new();
            if let Some(x) = e.expected_documents.filter(|&x| x != s.documents) {
                mismatches.push(alloc::format!(
                    "documents: expected {x}, found {}",
                    s.documents
                ));
            }
            if let Some(x) = e.expected_bytes.filter(|&x| x != s.bytes) {
                mismatches.push(alloc::format!("bytes: expected {x}, found {}", s.bytes));
            }
            entries.push(EntryReport {
                name: e.name.clone(),
                source: e.source.clone(),
                dedup: e.dedup,
                documents: s.documents,
                bytes: s.bytes,
                size_gb: s.size_gb(),
                expected_documents: e.expected_documents,
                expected_bytes: e.expected_bytes,
                mismatches,
            });
        }
        let ok = entries.iter().all(|e| e.mismatches.is_empty());
        Ok(ValidationReport {
            entries,
            total_documents: total.documents,
            total_bytes: total.bytes,
            total_size_gb: total.size_gb(),
            ok,
        })
    }

    /// Aligned text table in the layout of a corpus overview.
    pub fn table(&self) -> String {
        let name_w = self
            .entries
            .iter()
            .map(|e| e.name.chars().count())
            .chain([12])
            .max()
            .unwrap();
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<name_w$}  {:>15}  {:>10}  {:<12}  {:<12}  status",
            "Corpus", "Documents", "Size (GB)", "Source", "Deduplicated"
        );
        for e in &self.entries {
            let status = if e.mismatches.is_empty() {
                "ok"
            } else {
                "MISMATCH"
            };
            let _ = writeln!(
                out,
                "{:<name_w$}  {:>15}  {:>10}  {:<12}  {:<12}  {status}",
                e.name,
                group_thousands(e.documents),
                e.size_gb,
                e.source,
                if e.dedup { "Yes" } else { "No" }
            );
        }
        let _ = writeln!(
            out,
            "{:<name_w$}  {:>15}  {:>10}",
            "Final corpus",
            group_thousands(self.total_documents),
            self.total_size_gb
        );
        out
    }
}

/// `6172863387` → `6,172,863,387`.
pub fn group_thousands(n: u64) -> String {
    let digits = alloc::format!("{n}");
    let mut out = String::with_capacity(digits.len() + digits.len() / 3);
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(c);
    }
    out
}
