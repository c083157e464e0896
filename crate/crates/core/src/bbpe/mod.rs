//! Byte-level BPE with word-boundary tracking.
//!
//! Id layout of a [`TokenizerModel`]:
//!
//! | ids            | tokens                                   |
//! |----------------|------------------------------------------|
//! | `0..5`         | `<s>`, `<pad>`, `</s>`, `<unk>`, `<mask>` |
//! | `5..261`       | the 256 single bytes, in byte order       |
//! | `261..`        | merged tokens, in order of first creation |
//!
//! Encoding first splits text into pretokenization units (see
//! [`pretokenize`]), then applies the merge rules inside each unit. The first
//! token of every unit is flagged in [`EncodedText::word_start`]; whole word
//! masking groups tokens by these flags.

mod bytes;
pub mod pretokenize;
mod serialize;
mod train;

use alloc::string::String;
use alloc::vec::Vec;

use hashbrown::HashMap;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use bytes::{byte_char, char_byte, from_printable, to_printable};
pub use serialize::{parse_vocab, MERGES_FILE, TOKENIZER_FORMAT_VERSION, VOCAB_FILE};
pub use train::{train_bpe, TrainConfig};

/// Number of special tokens; they occupy ids `0..NUM_SPECIALS`.
pub const NUM_SPECIALS: u32 = 5;
/// Id of the token for byte `0`.
pub const FIRST_BYTE_ID: u32 = NUM_SPECIALS;
/// Id of the first merged token.
pub const FIRST_MERGE_ID: u32 = FIRST_BYTE_ID + 256;

/// Special-token strings. Their ids are fixed: bos 0, pad 1, eos 2, unk 3,
/// mask 4.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecialTokens {
    pub bos: String,
    pub pad: String,
    pub eos: String,
    pub unk: String,
    pub mask: String,
}

impl SpecialTokens {
    pub const BOS_ID: u32 = 0;
    pub const PAD_ID: u32 = 1;
    pub const EOS_ID: u32 = 2;
    pub const UNK_ID: u32 = 3;
    pub const MASK_ID: u32 = 4;

    /// Strings in id order.
    pub fn as_array(&self) -> [&str; 5] {
        [&self.bos, &self.pad, &self.eos, &self.unk, &self.mask]
    }

    pub(crate) fn from_array(a: [String; 5]) -> Self {
        let [bos, pad, eos, unk, mask] = a;
        SpecialTokens {
            bos,
            pad,
            eos,
            unk,
            mask,
        }
    }

    fn validate(&self) -> Result<()> {
        let all = self.as_array();
        for (i, s) in all.iter().enumerate() {
            if s.is_empty() {
                return Err(Error::config("special token strings must be non-empty"));
            }
            if all[..i].contains(s) {
                return Err(Error::config(alloc::format!(
                    "duplicate special token {s:?}"
                )));
            }
        }
        Ok(())
    }
}

impl Default for SpecialTokens {
    fn default() -> Self {
        SpecialTokens {
            bos: "<s>".into(),
            pad: "<pad>".into(),
            eos: "</s>".into(),
            unk: "<unk>".into(),
            mask: "<mask>".into(),
        }
    }
}

/// Identifier of the word-splitting rule a model was trained with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Pretokenizer {
    Gpt2,
}

impl Pretokenizer {
    pub fn id(self) -> &'static str {
        match self {
            Pretokenizer::Gpt2 => "gpt2",
        }
    }

    pub fn from_id(id: &str) -> Option<Self> {
        match id {
            "gpt2" => Some(Pretokenizer::Gpt2),
            _ => None,
        }
    }
}

/// Token ids of an encoded text together with word-start flags.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EncodedText {
    pub ids: Vec<u32>,
    /// `true` on the first token of each pretokenization unit.
    pub word_start: Vec<bool>,
}

impl EncodedText {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// An immutable byte-level BPE vocabulary with ordered merge rules.
#[derive(Debug, Clone)]
pub struct TokenizerModel {
    specials: SpecialTokens,
    /// Bytes of every non-special token, indexed by `id - FIRST_BYTE_ID`.
    tokens: Vec<Vec<u8>>,
    /// Merge rules in priority order as `(left, right)` ids.
    merges: Vec<(u32, u32)>,
    pretokenizer: Pretokenizer,
    /// `(left, right)` → `(rank, merged id)`.
    ranks: HashMap<(u32, u32), (u32, u32)>,
    by_bytes: HashMap<Vec<u8>, u32>,
}

impl PartialEq for TokenizerModel {
    fn eq(&self, other: &Self) -> bool {
        self.specials == other.specials
            && self.tokens == other.tokens
            && self.merges == other.merges
            && self.pretokenizer == other.pretokenizer
    }
}

impl Eq for TokenizerModel {}

impl TokenizerModel {
    /// Assembles a model from its parts and checks every structural
    /// invariant.
    ///
    /// `tokens` holds the bytes of ids `5..`; it must start with the 256
    /// single bytes in order. Each later token must be produced by exactly the
    /// first merge whose concatenation equals it.
    pub fn from_parts(
        specials: SpecialTokens,
        tokens: Vec<Vec<u8>>,
        merges: Vec<(u32, u32)>,
        pretokenizer: Pretokenizer,
    ) -> Result<Self> {
        specials.validate()?;
        if tokens.len() < 256 {
            return Err(Error::input("vocabulary is missing byte tokens"));
        }
        for (b, t) in tokens[..256].iter().enumerate() {
            if t.as_slice() != [b as u8] {
                return Err(Error::input(alloc::format!(
                    "id {} must be the byte {b:#04x}",
                    b as u32 + FIRST_BYTE_ID
                )));
            }
        }
        let mut by_bytes = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if by_bytes
                .insert(t.clone(), i as u32 + FIRST_BYTE_ID)
                .is_some()
            {
                return Err(Error::input(alloc::format!(
                    "duplicate token {:?}",
                    to_printable(t)
                )));
            }
        }
        let end = FIRST_BYTE_ID + tokens.len() as u32;
        let mut ranks = HashMap::with_capacity(merges.len());
        let mut produced = alloc::vec![false; tokens.len()];
        produced[..256].iter_mut().for_each(|p| *p = true);
        for (rank, &(l, r)) in merges.iter().enumerate() {
            for id in [l, r] {
                if !(FIRST_BYTE_ID..end).contains(&id) {
                    return Err(Error::input(alloc::format!(
                        "merge {rank} refers to id {id} outside the regular vocabulary"
                    )));
                }
            }
            let mut joined = tokens[(l - FIRST_BYTE_ID) as usize].clone();
            joined.extend_from_slice(&tokens[(r - FIRST_BYTE_ID) as usize]);
            let out = *by_bytes.get(&joined).ok_or_else(|| {
                Error::input(alloc::format!(
                    "merge {rank} output {:?} is not in the vocabulary",
                    to_printable(&joined)
                ))
            })?;
            if ranks.insert((l, r), (rank as u32, out)).is_some() {
                return Err(Error::input(alloc::format!("merge {rank} is a duplicate")));
            }
            produced[(out - FIRST_BYTE_ID) as usize] = true;
        }
        if let Some(i) = produced.iter().position(|p| !p) {
            return Err(Error::input(alloc::format!(
                "token id {} is not produced by any merge",
                i as u32 + FIRST_BYTE_ID
            )));
        }
        Ok(TokenizerModel {
            specials,
            tokens,
            merges,
            pretokenizer,
            ranks,
            by_bytes,
        })
    }

    pub fn vocab_size(&self) -> usize {
        NUM_SPECIALS as usize + self.tokens.len()
    }

    pub fn merges(&self) -> &[(u32, u32)] {
        &self.merges
    }

    pub fn specials(&self) -> &SpecialTokens {
        &self.specials
    }

    pub fn pretokenizer(&self) -> Pretokenizer {
        self.pretokenizer
    }

    pub fn is_special(&self, id: u32) -> bool {
        id < NUM_SPECIALS
    }

    /// Raw bytes of a non-special token.
    pub fn token_bytes(&self, id: u32) -> Option<&[u8]> {
        id.checked_sub(FIRST_BYTE_ID)
            .and_then(|i| self.tokens.get(i as usize))
            .map(Vec::as_slice)
    }

    /// Display string of a token: the special string, or the byte-mapped form.
    pub fn id_to_token(&self, id: u32) -> Option<String> {
        if self.is_special(id) {
            return Some(self.specials.as_array()[id as usize].into());
        }
        self.token_bytes(id).map(to_printable)
    }

    /// Looks up a display string. Special strings take precedence over an
    /// identical byte-mapped token.
    pub fn token_to_id(&self, token: &str) -> Option<u32> {
        if let Some(i) = self.specials.as_array().iter().position(|s| *s == token) {
            return Some(i as u32);
        }
        from_printable(token).and_then(|b| self.by_bytes.get(&b).copied())
    }

    /// Encodes `text`; every byte sequence is representable, so this cannot
    /// fail.
    pub fn encode(&self, text: &str) -> EncodedText {
        let mut out = EncodedText::default();
        for unit in pretokenize::units(text) {
            let start = out.ids.len();
            self.encode_unit(text[unit].as_bytes(), &mut out.ids);
            out.word_start.push(true);
            out.word_start.resize(out.ids.len(), false);
            debug_assert!(out.ids.len() > start);
        }
        out
    }

    /// Applies the merges, lowest rank first, to one unit and appends the ids.
    fn encode_unit(&self, unit: &[u8], out: &mut Vec<u32>) {
        let mut symbols: Vec<u32> = unit.iter().map(|&b| FIRST_BYTE_ID + b as u32).collect();
        while symbols.len() > 1 {
            let best = symbols
                .windows(2)
                .filter_map(|w| {
                    self.ranks
                        .get(&(w[0], w[1]))
                        .map(|&(rank, out)| (rank, w[0], w[1], out))
                })
                .min();
            let Some((_, left, right, merged)) = best else {
                break;
            };
            symbols = apply_merge(&symbols, left, right, merged);
        }
        out.extend_from_slice(&symbols);
    }

    /// Decodes `ids` to bytes, dropping special tokens unless
    /// `keep_specials` is set.
    pub fn decode_bytes(&self, ids: &[u32], keep_specials: bool) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        for &id in ids {
            if self.is_special(id) {
                if keep_specials {
                    out.extend_from_slice(self.specials.as_array()[id as usize].as_bytes());
                }
                continue;
            }
            let bytes = self.token_bytes(id).ok_or_else(|| {
                Error::input(alloc::format!(
                    "token id {id} out of range for vocabulary of {}",
                    self.vocab_size()
                ))
            })?;
            out.extend_from_slice(bytes);
        }
        Ok(out)
    }

    /// Decodes `ids` to text. Byte sequences that are not valid UTF-8 (only
    /// possible for id sequences `encode` never produces) are replaced with
    /// U+FFFD.
    pub fn decode(&self, ids: &[u32], keep_specials: bool) -> Result<String> {
        let bytes = self.decode_bytes(ids, keep_specials)?;
        Ok(match String::from_utf8(bytes) {
            Ok(s) => s,
            Err(e) => String::from_utf8_lossy(e.as_bytes()).into_owned(),
        })
    }
}

/// Replaces non-overlapping occurrences of `(left, right)`, scanning left to
/// right.
pub(crate) fn apply_merge(symbols: &[u32], left: u32, right: u32, merged: u32) -> Vec<u32> {
    let mut out = Vec::with_capacity(symbols.len());
    let mut i = 0;
    while i < symbols.len() {
        if i + 1 < symbols.len() && symbols[i] == left && symbols[i + 1] == right {
            out.push(merged);
            i += 2;
        } else {
            out.push(symbols[i]);
            i += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn toy() -> TokenizerModel {
        train_bpe(["aaab aaab"], &TrainConfig::with_vocab_size(262)).unwrap()
    }

    #[test]
    fn empty_text() {
        let m = toy();
        let e = m.encode("");
        assert!(e.ids.is_empty() && e.word_start.is_empty());
        assert_eq!(m.decode(&[], false).unwrap(), "");
    }

    #[test]
    fn toy_encoding_applies_single_merge_greedily() {
        let m = toy();
        let e = m.encode("aaab");
        let tokens: Vec<_> = e.ids.iter().map(|&i| m.id_to_token(i).unwrap()).collect();
        assert_eq!(tokens, ["aa", "a", "b"]);
        assert_eq!(e.word_start, [true, false, false]);
    }

    #[test]
    fn emoji_round_trip() {
        let m = toy();
        let s = "Grüße 👋🏽 aus Köln\t\u{0}\r\n";
        assert_eq!(m.decode(&m.encode(s).ids, false).unwrap(), s);
    }

    #[test]
    fn specials_are_stripped_or_kept() {
        let m = toy();
        let ids = [
            SpecialTokens::BOS_ID,
            SpecialTokens::MASK_ID,
            SpecialTokens::EOS_ID,
        ];
        assert_eq!(m.decode(&ids, false).unwrap(), "");
        assert_eq!(m.decode(&ids, true).unwrap(), "<s><mask></s>");
    }

    #[test]
    fn out_of_range_id_is_rejected() {
        let m = toy();
        let err = m.decode(&[m.vocab_size() as u32], false).unwrap_err();
        assert!(matches!(err, Error::Input(_)));
    }

    #[test]
    fn lookup_by_string() {
        let m = toy();
        assert_eq!(m.token_to_id("<mask>"), Some(4));
        assert_eq!(m.token_to_id("a"), Some(FIRST_BYTE_ID + b'a' as u32));
        assert_eq!(m.token_to_id("aa"), Some(FIRST_MERGE_ID));
        assert_eq!(m.token_to_id("Ġ"), Some(FIRST_BYTE_ID + b' ' as u32));
        assert_eq!(m.token_to_id("zz"), None);
    }

    #[test]
    fn from_parts_rejects_unproduced_tokens() {
        let mut tokens: Vec<Vec<u8>> = (0..=255u8).map(|b| vec![b]).collect();
        tokens.push(b"ab".to_vec());
        let err = TokenizerModel::from_parts(
            SpecialTokens::default(),
            tokens,
            vec![],
            Pretokenizer::Gpt2,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Input(_)));
    }

    #[test]
    fn apply_merge_is_left_to_right() {
        assert_eq!(apply_merge(&[1, 1, 1], 1, 1, 9), [9, 1]);
        assert_eq!(apply_merge(&[1, 1, 1, 1], 1, 1, 9), [9, 9]);
        assert_eq!(apply_merge(&[2, 1, 1], 1, 1, 9), [2, 9]);
    }
}
