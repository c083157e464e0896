//! JSON-lines document files: one `{"id","source","text"}` object per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use mlmprep_core::corpus::DocumentRecord;

use crate::{Error, Result};

/// Streaming reader over a JSON-lines document file. Blank lines are
/// skipped; every other line must parse and carry non-blank text.
pub struct DocReader {
    path: PathBuf,
    lines: std::io::Lines<BufReader<File>>,
    line: usize,
}

impl DocReader {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
        Ok(DocReader {
            lines: BufReader::new(file).lines(),
            path,
            line: 0,
        })
    }
}

impl DocReader {
    /// Next document together with its source line.
    pub fn next_raw(&mut self) -> Option<Result<(String, DocumentRecord)>> {
        loop {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => return Some(Err(Error::io(&self.path, e))),
            };
            self.line += 1;
            if line.trim().is_empty() {
                continue;
            }
            let record = |message: String| Error::Record {
                path: self.path.clone(),
                line: self.line,
                message,
            };
            let doc: DocumentRecord = match serde_json::from_str(&line) {
                Ok(d) => d,
                Err(e) => return Some(Err(record(e.to_string()))),
            };
            if let Err(e) = doc.validate() {
                return Some(Err(record(e.to_string())));
            }
            return Some(Ok((line, doc)));
        }
    }

    /// Iterator over `(source line, document)` pairs.
    pub fn raw(self) -> impl Iterator<Item = Result<(String, DocumentRecord)>> {
        let mut r = self;
        std::iter::from_fn(move || r.next_raw())
    }
}

impl Iterator for DocReader {
    type Item = Result<DocumentRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_raw().map(|r| r.map(|(_, d)| d))
    }
}

/// Reads every document of every file, in order.
pub fn read_all(paths: &[PathBuf]) -> Result<Vec<DocumentRecord>> {
    let mut out = Vec::new();
    for p in paths {
        for d in DocReader::open(p)? {
            out.push(d?);
        }
    }
    Ok(out)
}

pub struct DocWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl DocWriter {
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        Ok(DocWriter {
            out: BufWriter::new(file),
            path,
        })
    }

    pub fn write(&mut self, doc: &DocumentRecord) -> Result<()> {
        let line = serde_json::to_string(doc).expect("documents always serialize");
        writeln!(self.out, "{line}").map_err(|e| Error::io(&self.path, e))
    }

    /// Writes a line that already holds a serialized document.
    pub fn write_raw(&mut self, line: &str) -> Result<()> {
        writeln!(self.out, "{line}").map_err(|e| Error::io(&self.path, e))
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

pub fn write_all(path: impl AsRef<Path>, docs: &[DocumentRecord]) -> Result<()> {
    let mut w = DocWriter::create(path)?;
    docs.iter().try_for_each(|d| w.write(d))?;
    w.finish()
}
