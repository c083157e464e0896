//! Corpus manifests on disk.
//!
//! A manifest is a TOML file with one `[[entry]]` table per sub-corpus:
//!
//! ```toml
//! [[entry]]
//! name = "ECB"
//! source = "OPUS"
//! paths = ["opus/ecb.jsonl"]   # files or directories of *.jsonl
//! dedup = false
//! expected_documents = 1732472 # optional
//! expected_bytes = 291000000   # optional
//! ```
//!
//! Relative paths resolve against the manifest's directory.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use mlmprep_core::corpus::{
    CorpusManifest, CorpusStats, DedupCounts, Deduper, ManifestEntry, ValidationReport,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::docs::{DocReader, DocWriter};
use crate::{Error, Result};

/// The reference manifest with the expected counts of the published corpus
/// mix.
pub const REFERENCE_MANIFEST: &str = include_str!("../data/reference_manifest.toml");

#[derive(Debug, Clone)]
pub struct Manifest {
    pub path: PathBuf,
    pub corpus: CorpusManifest,
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Parses manifest text; `path` locates relative entry paths.
    pub fn parse(text: &str, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let corpus: CorpusManifest =
            toml::from_str(text).map_err(|e| Error::config(path, e.to_string()))?;
        corpus.check_names().map_err(|e| Error::file(path, e))?;
        Ok(Manifest {
            path: path.to_path_buf(),
            corpus,
        })
    }

    pub fn base_dir(&self) -> &Path {
        self.path.parent().unwrap_or(Path::new("."))
    }

    /// Files of an entry in order; directories expand to their `*.jsonl`
    /// files sorted by name.
    pub fn entry_files(&self, entry: &ManifestEntry) -> Result<Vec<PathBuf>> {
        let mut files = Vec::new();
        for p in &entry.paths {
            let full = self.base_dir().join(p);
            if full.is_dir() {
                let mut inner: Vec<PathBuf> = std::fs::read_dir(&full)
                    .map_err(|e| Error::io(&full, e))?
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
                    .collect();
                inner.sort();
                files.extend(inner);
            } else if full.is_file() {
                files.push(full);
            } else {
                return Err(Error::Validation {
                    entry: entry.name.clone(),
                    message: format!("path {} does not exist", full.display()),
                });
            }
        }
        Ok(files)
    }
}

/// Counts documents and bytes of one entry and checks id uniqueness.
pub fn entry_stats(manifest: &Manifest, entry: &ManifestEntry) -> Result<CorpusStats> {
    let mut stats = CorpusStats::default();
    let mut ids = HashSet::new();
    for file in manifest.entry_files(entry)? {
        for doc in DocReader::open(&file)? {
            let doc = doc?;
            if !ids.insert(doc.id.clone()) {
                return Err(Error::Validation {
                    entry: entry.name.clone(),
                    message: format!("duplicate document id {:?}", doc.id),
                });
            }
            stats.add_document(&doc.text);
        }
    }
    Ok(stats)
}

/// Checks that every path exists, then scans all entries.
pub fn validate(manifest: &Manifest) -> Result<ValidationReport> {
    for e in &manifest.corpus.entries {
        manifest.entry_files(e)?;
    }
    let observed = manifest
        .corpus
        .entries
        .par_iter()
        .map(|e| entry_stats(manifest, e))
        .collect::<Result<Vec<_>>>()?;
    Ok(ValidationReport::build(&manifest.corpus, &observed)?)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EntryDedup {
    pub name: String,
    pub dedup: bool,
    pub output: PathBuf,
    #[serde(flatten)]
    pub counts: DedupCounts,
}

/// File name used for an entry's output.
pub fn entry_file_name(entry: &ManifestEntry) -> String {
    let slug: String = entry
        .name
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{slug}.jsonl")
}

/// Writes one file per entry to `out_dir`, deduplicating the entries that
/// ask for it and copying the rest through line for line. Entries run in
/// parallel; each entry is processed in stream order.
pub fn dedup_entries(manifest: &Manifest, out_dir: &Path) -> Result<Vec<EntryDedup>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    manifest
        .corpus
        .entries
        .par_iter()
        .map(|entry| {
            let output = out_dir.join(entry_file_name(entry));
            let mut writer = DocWriter::create(&output)?;
            let mut deduper = Deduper::new();
            let mut copied = 0;
            for file in manifest.entry_files(entry)? {
                for item in DocReader::open(&file)?.raw() {
                    let (line, doc) = item?;
                    if entry.dedup && !deduper.admit(&doc.text) {
                        continue;
                    }
                    writer.write_raw(&line)?;
                    copied += 1;
                }
            }
            writer.finish()?;
            let counts = if entry.dedup {
                deduper.counts()
            } else {
                DedupCounts {
                    kept: copied,
                    dropped: 0,
                }
            };
            Ok(EntryDedup {
                name: entry.name.clone(),
                dedup: entry.dedup,
                output,
                counts,
            })
        })
        .collect()
}
