//! Tokenizer model directories (`vocab.txt` + `merges.txt`) and training from
//! document files.

use std::path::{Path, PathBuf};

use mlmprep_core::bbpe::{
    parse_vocab, train_bpe, TokenizerModel, TrainConfig, MERGES_FILE, VOCAB_FILE,
};

use crate::docs::DocReader;
use crate::{Error, Result};

pub fn save_model(model: &TokenizerModel, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, text) in [
        (VOCAB_FILE, model.vocab_text()),
        (MERGES_FILE, model.merges_text()),
    ] {
        let p = dir.join(name);
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
    }
    Ok(())
}

pub fn load_model(dir: impl AsRef<Path>) -> Result<TokenizerModel> {
    let dir = dir.as_ref();
    let read = |name: &str| {
        let p = dir.join(name);
        std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))
    };
    let vocab = read(VOCAB_FILE)?;
    let merges = read(MERGES_FILE)?;
    parse_vocab(&vocab).map_err(|e| Error::file(dir.join(VOCAB_FILE), e))?;
    TokenizerModel::from_texts(&vocab, &merges).map_err(|e| Error::file(dir.join(MERGES_FILE), e))
}

/// Whether `dir` holds a saved model.
pub fn has_model(dir: impl AsRef<Path>) -> bool {
    let dir = dir.as_ref();
    dir.join(VOCAB_FILE).is_file() && dir.join(MERGES_FILE).is_file()
}

/// Trains on the `text` fields of JSON-lines document files.
pub fn train_from_files(inputs: &[PathBuf], config: &TrainConfig) -> Result<TokenizerModel> {
    let mut failure: Option<Error> = None;
    let mut readers = Vec::new();
    for p in inputs {
        readers.push(DocReader::open(p)?);
    }
    let texts = readers.into_iter().flatten().map_while(|d| match d {
        Ok(d) => Some(d.text),
        Err(e) => {
            failure = Some(e);
            None
        }
    });
    let model = train_bpe(texts, config);
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(model?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn save_load_and_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let m = train_bpe(["aaab aaab"], &TrainConfig::with_vocab_size(262)).unwrap();
        save_model(&m, dir.path()).unwrap();
        assert!(has_model(dir.path()));
        assert_eq!(load_model(dir.path()).unwrap(), m);

        std::fs::write(
            dir.path().join(MERGES_FILE),
            "#version: 1 pretokenizer=gpt2\na\n",
        )
        .unwrap();
        let err = load_model(dir.path()).unwrap_err().to_string();
        assert!(
            err.contains("merges.txt") && err.contains("line 2"),
            "{err}"
        );
    }
}
