//! Dynamic whole word masking.
//!
//! Masks are a pure function of `(policy, seed, epoch, sequence index)`, so
//! a new epoch draws a fresh mask for every sequence and any number of
//! workers reproduce the same batch.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bbpe::{SpecialTokens, TokenizerModel, NUM_SPECIALS};
use crate::defaults;
use crate::packer::PackedSequence;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionProbs {
    pub mask: f64,
    pub random: f64,
    pub keep: f64,
}

impl Default for ActionProbs {
    fn default() -> Self {
        ActionProbs {
            mask: defaults::MASK_ACTION_PROB,
            random: defaults::RANDOM_ACTION_PROB,
            keep: defaults::KEEP_ACTION_PROB,
        }
    }
}

/// Granularity at which the corruption action is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActionMode {
    /// One action for all tokens of a selected word.
    #[default]
    PerWord,
    /// An independent action for each token of a selected word.
    PerToken,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaskPolicy {
    pub mask_prob: f64,
    pub action_probs: ActionProbs,
    pub ignore_sentinel: u32,
    pub mode: ActionMode,
}

impl Default for MaskPolicy {
    fn default() -> Self {
        MaskPolicy {
            mask_prob: defaults::MASK_PROB,
            action_probs: ActionProbs::default(),
            ignore_sentinel: defaults::IGNORE_SENTINEL,
            mode: ActionMode::PerWord,
        }
    }
}

impl MaskPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.mask_prob > 0.0 && self.mask_prob < 1.0) {
            return Err(Error::config("mask_prob must lie strictly between 0 and 1"));
        }
        let a = self.action_probs;
        if [a.mask, a.random, a.keep]
            .iter()
            .any(|p| !(0.0..=1.0).contains(p))
        {
            return Err(Error::config("action probabilities must lie in [0, 1]"));
        }
        if (a.mask + a.random + a.keep - 1.0).abs() > 1e-9 {
            return Err(Error::config("action probabilities must sum to 1"));
        }
        Ok(())
    }

    fn draw_action(&self, rng: &mut ChaCha8Rng) -> MaskAction {
        let u: f64 = rng.random();
        if u < self.action_probs.mask {
            MaskAction::Mask
        } else if u < self.action_probs.mask + self.action_probs.random {
            MaskAction::Random
        } else {
            MaskAction::Keep
        }
    }
}

/// What the masker needs to know about the vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaskVocab {
    pub vocab_size: u32,
    pub mask_id: u32,
}

impl MaskVocab {
    pub fn new(vocab_size: u32) -> Self {
        MaskVocab {
            vocab_size,
            mask_id: SpecialTokens::MASK_ID,
        }
    }
}

impl From<&TokenizerModel> for MaskVocab {
    fn from(m: &TokenizerModel) -> Self {
        MaskVocab::new(m.vocab_size() as u32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskAction {
    Mask,
    Random,
    Keep,
}

/// A selected word and the action applied to each of its tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskedWord {
    pub start: usize,
    pub end: usize,
    pub actions: Vec<MaskAction>,
}

/// Word spans `[start, end)` of a packed sequence.
///
/// Spans partition the positions that are neither special nor padding; each
/// starts at a `word_start` position.
pub fn group_words(seq: &PackedSequence) -> Result<Vec<(usize, usize)>> {
    if seq.ids.len() != seq.word_start.len() || seq.n_real < 2 || seq.n_real > seq.ids.len() {
        return Err(Error::input("malformed sequence"));
    }
    let mut spans = Vec::new();
    let mut open: Option<usize> = None;
    for pos in 0..seq.ids.len() {
        let maskable = pos > 0 && pos < seq.n_real - 1 && seq.ids[pos] >= NUM_SPECIALS;
        if !maskable {
            if seq.word_start[pos] {
                return Err(Error::input(alloc::format!(
                    "word start flag on special or pad position {pos}"
                )));
            }
            if let Some(s) = open.take() {
                spans.push((s, pos));
            }
            continue;
        }
        if seq.word_start[pos] {
            if let Some(s) = open.replace(pos) {
                spans.push((s, pos));
            }
        } else if open.is_none() {
            return Err(Error::input(alloc::format!(
                "token at position {pos} continues no word"
            )));
        }
    }
    if let Some(s) = open {
        spans.push((s, seq.ids.len()));
    }
    Ok(spans)
}

fn sequence_rng(seed: u64, epoch: u64, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&epoch.to_le_bytes());
    key[16..24].copy_from_slice(&index.to_le_bytes());
    key[24..27].copy_from_slice(b"wwm");
    ChaCha8Rng::from_seed(key)
}

/// `ceil(p * n)`, ignoring floating-point noise just above an integer.
fn token_budget(p: f64, n: usize) -> usize {
    let x = p * n as f64;
    let r = libm::round(x);
    if (x - r).abs() <= 1e-9 * x.max(1.0) {
        r as usize
    } else {
        libm::ceil(x) as usize
    }
}

/// One sequence after masking.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedSequence {
    pub input_ids: Vec<u32>,
    pub labels: Vec<u32>,
    pub words: Vec<MaskedWord>,
    /// Tokens eligible for selection.
    pub maskable: usize,
}

/// Masks one sequence.
///
/// Words are visited in a uniformly random order and selected until the
/// selected token count first reaches `ceil(mask_prob * maskable)`. Selected
/// positions keep their original id as label; every other label is the
/// sentinel.
pub fn mask_sequence(
    seq: &PackedSequence,
    policy: &MaskPolicy,
    vocab: MaskVocab,
    seed: u64,
    epoch: u64,
    index: u64,
) -> Result<MaskedSequence> {
    let words = group_words(seq)?;
    let maskable: usize = words.iter().map(|(s, e)| e - s).sum();
    let mut out = MaskedSequence {
        input_ids: seq.ids.clone(),
        labels: alloc::vec![policy.ignore_sentinel; seq.ids.len()],
        words: Vec::new(),
        maskable,
    };
    if maskable == 0 {
        return Ok(out);
    }
    let mut rng = sequence_rng(seed, epoch, index);
    let mut order: Vec<usize> = (0..words.len()).collect();
    order.shuffle(&mut rng);
    let budget = token_budget(policy.mask_prob, maskable);
    let mut taken = 0;
    let mut chosen: Vec<(usize, usize)> = Vec::new();
    for w in order {
        if taken >= budget {
            break;
        }
        let (s, e) = words[w];
        taken += e - s;
        chosen.push((s, e));
    }
    chosen.sort_unstable();

    for (s, e) in chosen {
        let actions: Vec<MaskAction> = match policy.mode {
            ActionMode::PerWord => alloc::vec![policy.draw_action(&mut rng); e - s],
            ActionMode::PerToken => (s..e).map(|_| policy.draw_action(&mut rng)).collect(),
        };
        for (pos, action) in (s..e).zip(&actions) {
            out.labels[pos] = seq.ids[pos];
            out.input_ids[pos] = match action {
                MaskAction::Mask => vocab.mask_id,
                MaskAction::Random => rng.random_range(NUM_SPECIALS..vocab.vocab_size),
                MaskAction::Keep => seq.ids[pos],
            };
        }
        out.words.push(MaskedWord {
            start: s,
            end: e,
            actions,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MaskedBatch {
    pub input_ids: Vec<Vec<u32>>,
    pub labels: Vec<Vec<u32>>,
    pub mask_meta: Vec<Vec<MaskedWord>>,
    pub maskable: Vec<usize>,
}

impl MaskedBatch {
    pub fn len(&self) -> usize {
        self.input_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.input_ids.is_empty()
    }

    pub fn push(&mut self, m: MaskedSequence) {
        self.input_ids.push(m.input_ids);
        self.labels.push(m.labels);
        self.mask_meta.push(m.words);
        self.maskable.push(m.maskable);
    }
}

fn check_vocab(policy: &MaskPolicy, vocab: MaskVocab) -> Result<()> {
    policy.validate()?;
    if vocab.vocab_size <= NUM_SPECIALS {
        return Err(Error::config("vocabulary has no regular tokens to sample"));
    }
    if policy.ignore_sentinel < vocab.vocab_size {
        return Err(Error::config(alloc::format!(
            "ignore sentinel {} collides with a vocabulary id",
            policy.ignore_sentinel
        )));
    }
    Ok(())
}

/// Masks `seqs`, whose global indices start at `first_index`.
pub fn mask_batch(
    seqs: &[PackedSequence],
    first_index: u64,
    policy: &MaskPolicy,
    vocab: MaskVocab,
    seed: u64,
    epoch: u64,
) -> Result<MaskedBatch> {
    check_vocab(policy, vocab)?;
    let mut batch = MaskedBatch::default();
    for (i, s) in seqs.iter().enumerate() {
        batch.push(mask_sequence(
            s,
            policy,
            vocab,
            seed,
            epoch,
            first_index + i as u64,
        )?);
    }
    Ok(batch)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionHistogram {
    pub mask: u64,
    pub random: u64,
    pub keep: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MaskStats {
    pub sequences: u64,
    pub maskable_tokens: u64,
    pub masked_tokens: u64,
    pub masked_fraction: f64,
    /// Token counts per action.
    pub action_histogram: ActionHistogram,
    pub selected_words: u64,
    pub words_per_seq: f64,
}

impl MaskStats {
    pub fn add_batch(&mut self, batch: &MaskedBatch) {
        for (words, &maskable) in batch.mask_meta.iter().zip(&batch.maskable) {
            self.sequences += 1;
            self.maskable_tokens += maskable as u64;
            self.selected_words += words.len() as u64;
            for a in words.iter().flat_map(|w| &w.actions) {
                self.masked_tokens += 1;
                match a {
                    MaskAction::Mask => self.action_histogram.mask += 1,
                    MaskAction::Random => self.action_histogram.random += 1,
                    MaskAction::Keep => self.action_histogram.keep += 1,
                }
            }
        }
        self.refresh();
    }

    pub fn merge(&mut self, other: &MaskStats) {
        self.sequences += other.sequences;
        self.maskable_tokens += other.maskable_tokens;
        self.masked_tokens += other.masked_tokens;
        self.selected_words += other.selected_words;
        self.action_histogram.mask += other.action_histogram.mask;
        self.action_histogram.random += other.action_histogram.random;
        self.action_histogram.keep += other.action_histogram.keep;
        self.refresh();
    }

    fn refresh(&mut self) {
        let div = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        self.masked_fraction = div(self.masked_tokens, self.maskable_tokens);
        self.words_per_seq = div(self.selected_words, self.sequences);
    }
}

/// Statistics over a set of batches.
pub fn mask_stats<'a, I>(batches: I) -> MaskStats
where
    I: IntoIterator<Item = &'a MaskedBatch>,
{
    let mut s = MaskStats::default();
    batches.into_iter().for_each(|b| s.add_batch(b));
    s
}
