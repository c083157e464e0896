//! Sentence-aligned packing of token streams into fixed-length sequences.
//!
//! Each [`PackedSequence`] is `<s> payload </s> <pad>...` with exactly
//! [`SEQUENCE_LENGTH`] positions. Sentences are packed greedily in stream
//! order: a sentence that does not fit the current payload starts a new
//! sequence, and a sentence longer than the payload is cut into
//! payload-sized pieces. Packing never crosses a document boundary.

mod sentences;
mod shard;

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::bbpe::{EncodedText, SpecialTokens, TokenizerModel};
use crate::defaults::{PAYLOAD_LENGTH, SEQUENCE_LENGTH};
use crate::{Error, Result};

pub use sentences::{sentence_spans, split_sentences, SentenceSpan};
pub use shard::{
    decode_shard, encode_shard, ShardHeader, ShardView, SHARD_FORMAT_VERSION, SHARD_HEADER_LEN,
    SHARD_MAGIC,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedSequence {
    pub ids: Vec<u32>,
    pub word_start: Vec<bool>,
    /// Positions up to and including `</s>`.
    pub n_real: usize,
}

impl PackedSequence {
    /// Wraps a payload of at most [`PAYLOAD_LENGTH`] tokens with `<s>`,
    /// `</s>` and padding. Flags on special and pad positions are `false`.
    pub fn from_payload(payload: &[u32], word_start: &[bool]) -> Result<Self> {
        if payload.len() > PAYLOAD_LENGTH || payload.len() != word_start.len() {
            return Err(Error::input(alloc::format!(
                "payload of {} tokens with {} flags does not fit {PAYLOAD_LENGTH} positions",
                payload.len(),
                word_start.len()
            )));
        }
        let mut ids = Vec::with_capacity(SEQUENCE_LENGTH);
        ids.push(SpecialTokens::BOS_ID);
        ids.extend_from_slice(payload);
        ids.push(SpecialTokens::EOS_ID);
        let n_real = ids.len();
        ids.resize(SEQUENCE_LENGTH, SpecialTokens::PAD_ID);
        let mut flags = Vec::with_capacity(SEQUENCE_LENGTH);
        flags.push(false);
        flags.extend_from_slice(word_start);
        flags.resize(SEQUENCE_LENGTH, false);
        Ok(PackedSequence {
            ids,
            word_start: flags,
            n_real,
        })
    }

    pub fn payload(&self) -> &[u32] {
        &self.ids[1..self.n_real - 1]
    }

    pub fn payload_word_start(&self) -> &[bool] {
        &self.word_start[1..self.n_real - 1]
    }

    /// Checks the shape invariants: fixed length, `<s>` first, `</s>` at
    /// `n_real - 1`, padding after it.
    pub fn validate(&self) -> Result<()> {
        if self.ids.len() != SEQUENCE_LENGTH || self.word_start.len() != SEQUENCE_LENGTH {
            return Err(Error::input("sequence does not have 512 positions"));
        }
        if !(2..=SEQUENCE_LENGTH).contains(&self.n_real) {
            return Err(Error::input(alloc::format!(
                "n_real {} out of range",
                self.n_real
            )));
        }
        if self.ids[0] != SpecialTokens::BOS_ID
            || self.ids[self.n_real - 1] != SpecialTokens::EOS_ID
        {
            return Err(Error::input("sequence is not framed by <s> ... </s>"));
        }
        if self.ids[self.n_real..]
            .iter()
            .any(|&i| i != SpecialTokens::PAD_ID)
        {
            return Err(Error::input("non-pad token after </s>"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackStats {
    pub documents: u64,
    pub sentences: u64,
    /// Sentences longer than the payload, which had to be cut.
    pub oversized_sentences: u64,
    pub sequences: u64,
    /// Payload tokens written; equals the tokens received.
    pub tokens: u64,
    pub pad_positions: u64,
}

/// Greedy first-fit packer over a stream of tokenized sentences.
#[derive(Debug, Default)]
pub struct Packer {
    ids: Vec<u32>,
    word_start: Vec<bool>,
    ready: Vec<PackedSequence>,
    stats: PackStats,
}

impl Packer {
    pub fn new() -> Self {
        Self::default()
    }

    fn flush(&mut self) {
        if self.ids.is_empty() {
            return;
        }
        let seq = PackedSequence::from_payload(&self.ids, &self.word_start)
            .expect("buffer never exceeds the payload");
        self.stats.sequences += 1;
        self.stats.pad_positions += (SEQUENCE_LENGTH - seq.n_real) as u64;
        self.ready.push(seq);
        self.ids.clear();
        self.word_start.clear();
    }

    /// Adds one sentence of the current document.
    pub fn push_sentence(&mut self, sentence: &EncodedText) {
        let n = sentence.len();
        if n == 0 {
            return;
        }
        self.stats.sentences += 1;
        self.stats.tokens += n as u64;
        if n > PAYLOAD_LENGTH {
            self.stats.oversized_sentences += 1;
            self.flush();
            let mut chunks = sentence
                .ids
                .chunks(PAYLOAD_LENGTH)
                .zip(sentence.word_start.chunks(PAYLOAD_LENGTH))
                .peekable();
            while let Some((ids, flags)) = chunks.next() {
                self.ids.extend_from_slice(ids);
                self.word_start.extend_from_slice(flags);
                // a cut can land inside a word; its tail opens a new word
                self.word_start[0] = true;
                if chunks.peek().is_some() {
                    self.flush();
                }
            }
            return;
        }
        if self.ids.len() + n > PAYLOAD_LENGTH {
            self.flush();
        }
        self.ids.extend_from_slice(&sentence.ids);
        self.word_start.extend_from_slice(&sentence.word_start);
    }

    /// Closes the current document; the next sentence starts a new sequence.
    pub fn end_document(&mut self) {
        self.stats.documents += 1;
        self.flush();
    }

    /// Sequences completed so far.
    pub fn drain(&mut self) -> alloc::vec::Drain<'_, PackedSequence> {
        self.ready.drain(..)
    }

    pub fn stats(&self) -> PackStats {
        self.stats
    }

    pub fn finish(mut self) -> (Vec<PackedSequence>, PackStats) {
        self.flush();
        (self.ready, self.stats)
    }
}

/// Packs already-tokenized sentences of a single document.
pub fn pack<'a, I>(sentences: I) -> (Vec<PackedSequence>, PackStats)
where
    I: IntoIterator<Item = &'a EncodedText>,
{
    let mut p = Packer::new();
    sentences.into_iter().for_each(|s| p.push_sentence(s));
    p.end_document();
    p.finish()
}

/// Splits a document into sentences and tokenizes each one. Every sentence
/// after the first is encoded with a single leading space, the form the
/// tokenizer sees for a word following a sentence break.
pub fn encode_document(model: &TokenizerModel, text: &str) -> Vec<EncodedText> {
    let mut buf = alloc::string::String::new();
    sentence_spans(text)
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            let body = &text[s.body];
            if i == 0 {
                model.encode(body)
            } else {
                buf.clear();
                buf.push(' ');
                buf.push_str(body);
                model.encode(&buf)
            }
        })
        .collect()
}
