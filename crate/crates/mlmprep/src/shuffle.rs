//! Disk-backed version of the seeded bucket shuffle.
//!
//! Pass one streams every input document into its bucket file; pass two
//! loads one bucket at a time, shuffles it and appends it to the output.
//! Only the largest bucket has to fit in memory, and the resulting order is
//! identical to [`mlmprep_core::corpus::shuffle`] over the concatenated
//! inputs.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use mlmprep_core::corpus::{bucket_of, shuffle_bucket};

use crate::docs::{DocReader, DocWriter};
use crate::{Error, Result};

/// Shuffles the documents of `inputs` (in order) into `output`. Returns
/// the number of documents written.
pub fn shuffle_files(inputs: &[PathBuf], output: &Path, seed: u64, buckets: u32) -> Result<u64> {
    if buckets == 0 {
        return Err(Error::Other("bucket count must be positive".into()));
    }
    let scratch = tempfile::tempdir().map_err(|e| Error::io(std::env::temp_dir(), e))?;
    let bucket_path = |b: u32| scratch.path().join(format!("bucket-{b:05}.jsonl"));

    let mut writers = (0..buckets)
        .map(|b| {
            let p = bucket_path(b);
            File::create(&p)
                .map(BufWriter::new)
                .map_err(|e| Error::io(&p, e))
        })
        .collect::<Result<Vec<_>>>()?;
    for input in inputs {
        for item in DocReader::open(input)?.raw() {
            let (line, doc) = item?;
            let b = bucket_of(seed, &doc.id, buckets);
            writeln!(writers[b as usize], "{line}").map_err(|e| Error::io(bucket_path(b), e))?;
        }
    }
    for (b, mut w) in writers.into_iter().enumerate() {
        w.flush().map_err(|e| Error::io(bucket_path(b as u32), e))?;
    }

    let mut out = DocWriter::create(output)?;
    let mut total = 0u64;
    for b in 0..buckets {
        let p = bucket_path(b);
        let file = File::open(&p).map_err(|e| Error::io(&p, e))?;
        let mut lines = BufReader::new(file)
            .lines()
            .collect::<std::io::Result<Vec<String>>>()
            .map_err(|e| Error::io(&p, e))?;
        shuffle_bucket(&mut lines, seed, b);
        for l in &lines {
            out.write_raw(l)?;
        }
        total += lines.len() as u64;
    }
    out.finish()?;
    Ok(total)
}
