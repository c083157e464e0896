use alloc::collections::BinaryHeap;
use alloc::vec::Vec;
use core::cmp::Ordering;

use hashbrown::{HashMap, HashSet};

use super::{
    apply_merge, pretokenize, Pretokenizer, SpecialTokens, TokenizerModel, FIRST_BYTE_ID,
    NUM_SPECIALS,
};
use crate::{defaults, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Final vocabulary size including specials and the 256 byte tokens.
    pub vocab_size: usize,
    pub specials: SpecialTokens,
    /// Pairs seen fewer times than this are never merged.
    pub min_frequency: u64,
    pub pretokenizer: Pretokenizer,
}

impl TrainConfig {
    pub fn with_vocab_size(vocab_size: usize) -> Self {
        TrainConfig {
            vocab_size,
            ..Self::default()
        }
    }

    /// Smallest admissible vocabulary: specials plus the byte alphabet.
    pub fn floor(&self) -> usize {
        NUM_SPECIALS as usize + 256
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            vocab_size: defaults::VOCAB_SIZE,
            specials: SpecialTokens::default(),
            min_frequency: 2,
            pretokenizer: Pretokenizer::Gpt2,
        }
    }
}

/// Heap entry: highest count first, then the lexicographically smallest
/// `(left bytes, right bytes)`.
#[derive(Debug, PartialEq, Eq)]
struct Candidate {
    count: u64,
    pair: (u32, u32),
    left: Vec<u8>,
    right: Vec<u8>,
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.count
            .cmp(&other.count)
            .then_with(|| (&other.left, &other.right).cmp(&(&self.left, &self.right)))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Trainer {
    tokens: Vec<Vec<u8>>,
    by_bytes: HashMap<Vec<u8>, u32>,
    words: Vec<Vec<u32>>,
    freqs: Vec<u64>,
    pair_counts: HashMap<(u32, u32), u64>,
    occurs_in: HashMap<(u32, u32), HashSet<usize>>,
    heap: BinaryHeap<Candidate>,
}

impl Trainer {
    fn bytes(&self, id: u32) -> &[u8] {
        &self.tokens[(id - FIRST_BYTE_ID) as usize]
    }

    fn push(&mut self, pair: (u32, u32), count: u64) {
        let left = self.bytes(pair.0).to_vec();
        let right = self.bytes(pair.1).to_vec();
        self.heap.push(Candidate {
            count,
            pair,
            left,
            right,
        });
    }

    fn intern(&mut self, bytes: Vec<u8>) -> u32 {
        if let Some(&id) = self.by_bytes.get(&bytes) {
            return id;
        }
        let id = FIRST_BYTE_ID + self.tokens.len() as u32;
        self.tokens.push(bytes.clone());
        self.by_bytes.insert(bytes, id);
        id
    }

    /// Pops the best pair whose heap entry is current.
    fn pop_best(&mut self) -> Option<(u32, u32, u64)> {
        while let Some(c) = self.heap.pop() {
            if self.pair_counts.get(&c.pair) == Some(&c.count) {
                return Some((c.pair.0, c.pair.1, c.count));
            }
        }
        None
    }

    fn merge(&mut self, left: u32, right: u32, merged: u32) {
        let mut affected: Vec<usize> = self
            .occurs_in
            .remove(&(left, right))
            .map(|s| s.into_iter().collect())
            .unwrap_or_default();
        affected.sort_unstable();

        let mut delta: HashMap<(u32, u32), i64> = HashMap::new();
        for w in affected {
            let word = &self.words[w];
            if !word.windows(2).any(|p| p[0] == left && p[1] == right) {
                continue;
            }
            let freq = self.freqs[w] as i64;
            let new_word = apply_merge(word, left, right, merged);
            for p in word.windows(2) {
                *delta.entry((p[0], p[1])).or_default() -= freq;
            }
            for p in new_word.windows(2) {
                *delta.entry((p[0], p[1])).or_default() += freq;
                self.occurs_in.entry((p[0], p[1])).or_default().insert(w);
            }
            self.words[w] = new_word;
        }

        let mut changed: Vec<((u32, u32), u64)> = Vec::new();
        for (pair, d) in delta {
            if d == 0 {
                continue;
            }
            let count = self.pair_counts.get(&pair).copied().unwrap_or(0) as i64 + d;
            debug_assert!(count >= 0);
            if count <= 0 {
                self.pair_counts.remove(&pair);
            } else {
                self.pair_counts.insert(pair, count as u64);
                changed.push((pair, count as u64));
            }
        }
        for (pair, count) in changed {
            self.push(pair, count);
        }
    }
}

/// Trains a byte-level BPE model on a stream of documents.
///
/// Pair counts include overlapping occurrences and are weighted by how often
/// each pretokenization unit occurs. Each step merges the most frequent pair;
/// ties go to the lexicographically smallest `(left, right)` byte pair, and
/// the merge replaces occurrences left to right. Training stops when the
/// vocabulary reaches `vocab_size` or no pair reaches `min_frequency`.
///
/// The result depends only on the multiset of units in the stream, never on
/// hash iteration order.
pub fn train_bpe<I, S>(docs: I, config: &TrainConfig) -> Result<TokenizerModel>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    if config.vocab_size < config.floor() {
        return Err(Error::config(alloc::format!(
            "vocab size {} is below the floor of {} (specials + 256 bytes)",
            config.vocab_size,
            config.floor()
        )));
    }
    let mut unit_counts: HashMap<Vec<u8>, u64> = HashMap::new();
    let mut n_docs = 0usize;
    for doc in docs {
        n_docs += 1;
        let text = doc.as_ref();
        for unit in pretokenize::units(text) {
            *unit_counts
                .entry(text.as_bytes()[unit].to_vec())
                .or_default() += 1;
        }
    }
    if n_docs == 0 {
        return Err(Error::input("training stream is empty"));
    }
    let mut units: Vec<(Vec<u8>, u64)> = unit_counts.into_iter().collect();
    units.sort_unstable();

    let tokens: Vec<Vec<u8>> = (0..=255u8).map(|b| alloc::vec![b]).collect();
    let by_bytes = tokens
        .iter()
        .enumerate()
        .map(|(i, t)| (t.clone(), i as u32 + FIRST_BYTE_ID))
        .collect();
    let mut trainer = Trainer {
        tokens,
        by_bytes,
        words: Vec::with_capacity(units.len()),
        freqs: Vec::with_capacity(units.len()),
        pair_counts: HashMap::new(),
        occurs_in: HashMap::new(),
        heap: BinaryHeap::new(),
    };
    for (w, (bytes, freq)) in units.into_iter().enumerate() {
        let word: Vec<u32> = bytes.iter().map(|&b| FIRST_BYTE_ID + b as u32).collect();
        for p in word.windows(2) {
            *trainer.pair_counts.entry((p[0], p[1])).or_default() += freq;
            trainer.occurs_in.entry((p[0], p[1])).or_default().insert(w);
        }
        trainer.words.push(word);
        trainer.freqs.push(freq);
    }
    let initial: Vec<_> = trainer.pair_counts.iter().map(|(&p, &c)| (p, c)).collect();
    for (pair, count) in initial {
        trainer.push(pair, count);
    }

    let min_frequency = config.min_frequency.max(1);
    let mut merges = Vec::new();
    while NUM_SPECIALS as usize + trainer.tokens.len() < config.vocab_size {
        let Some((left, right, count)) = trainer.pop_best() else {
            break;
        };
        if count < min_frequency {
            break;
        }
        let mut joined = trainer.bytes(left).to_vec();
        joined.extend_from_slice(trainer.bytes(right));
        let merged = trainer.intern(joined);
        merges.push((left, right));
        trainer.merge(left, right, merged);
    }

    TokenizerModel::from_parts(
        config.specials.clone(),
        trainer.tokens,
        merges,
        config.pretokenizer,
    )
}
