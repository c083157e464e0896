use std::collections::{BTreeMap, BTreeSet};
use std::sync::LazyLock;

use fancy_regex::Regex;
use mlmprep_core::bbpe::{pretokenize, train_bpe, TokenizerModel, TrainConfig};
use proptest::prelude::*;

const GPT2_PATTERN: &str =
    r"'s|'t|'re|'ve|'m|'ll|'d| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+(?!\S)|\s+";

static GPT2: LazyLock<Regex> = LazyLock::new(|| Regex::new(GPT2_PATTERN).unwrap());

fn regex_units(text: &str) -> Vec<&str> {
    GPT2.find_iter(text).map(|m| m.unwrap().as_str()).collect()
}

fn our_units(text: &str) -> Vec<&str> {
    pretokenize::units(text).map(|r| &text[r]).collect()
}

/// Naive trainer: recounts every pair from scratch after each merge.
fn oracle_merges(
    docs: &[String],
    vocab_size: usize,
    min_frequency: u64,
) -> Vec<(Vec<u8>, Vec<u8>)> {
    let mut counts: BTreeMap<Vec<u8>, u64> = BTreeMap::new();
    for d in docs {
        for u in regex_units(d) {
            *counts.entry(u.as_bytes().to_vec()).or_default() += 1;
        }
    }
    let mut words: Vec<(Vec<Vec<u8>>, u64)> = counts
        .into_iter()
        .map(|(b, c)| (b.iter().map(|&x| vec![x]).collect(), c))
        .collect();
    let mut vocab: BTreeSet<Vec<u8>> = (0..=255u8).map(|b| vec![b]).collect();
    let mut merges = Vec::new();
    while 5 + vocab.len() < vocab_size {
        let mut pairs: BTreeMap<(Vec<u8>, Vec<u8>), u64> = BTreeMap::new();
        for (w, c) in &words {
            for p in w.windows(2) {
                *pairs.entry((p[0].clone(), p[1].clone())).or_default() += c;
            }
        }
        // BTreeMap iterates pairs in ascending order, so the first maximum
        // is the lexicographically smallest one
        let Some((best, count)) = pairs.iter().fold(
            None::<(&(Vec<u8>, Vec<u8>), u64)>,
            |acc, (p, &c)| match acc {
                Some((_, bc)) if bc >= c => acc,
                _ => Some((p, c)),
            },
        ) else {
            break;
        };
        if count < min_frequency {
            break;
        }
        let (l, r) = best.clone();
        for (w, _) in words.iter_mut() {
            let mut out = Vec::with_capacity(w.len());
            let mut i = 0;
            while i < w.len() {
                if i + 1 < w.len() && w[i] == l && w[i + 1] == r {
                    out.push([l.clone(), r.clone()].concat());
                    i += 2;
                } else {
                    out.push(w[i].clone());
                    i += 1;
                }
            }
            *w = out;
        }
        vocab.insert([l.clone(), r.clone()].concat());
        merges.push((l, r));
    }
    merges
}

fn model_merges(m: &TokenizerModel) -> Vec<(Vec<u8>, Vec<u8>)> {
    m.merges()
        .iter()
        .map(|&(l, r)| {
            (
                m.token_bytes(l).unwrap().to_vec(),
                m.token_bytes(r).unwrap().to_vec(),
            )
        })
        .collect()
}

static GERMAN: LazyLock<TokenizerModel> = LazyLock::new(|| {
    let docs = [
        "Die Straße führt über die Brücke nach Köln.",
        "Größere Änderungen an der Verfassung müssen vom Bundestag beschlossen werden.",
        "Am 3. Oktober 1990 trat die DDR der Bundesrepublik bei.",
        "Übermorgen fährt der Zug um 7:45 Uhr ab – pünktlich, hoffentlich!",
        "Die Katze schläft; der Hund bellt. Die Katze wacht auf.",
    ];
    train_bpe(docs, &TrainConfig::with_vocab_size(420)).unwrap()
});

fn text_strategy() -> impl Strategy<Value = String> {
    proptest::collection::vec(
        prop_oneof![
            Just('a'),
            Just('b'),
            Just('c'),
            Just(' '),
            Just(' '),
            Just('ä'),
            Just('ß'),
            Just('1'),
            Just('.'),
            Just('\''),
            Just('\n'),
        ],
        0..60,
    )
    .prop_map(|v| v.into_iter().collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn merges_match_naive_trainer(docs in proptest::collection::vec(text_strategy(), 1..12), extra in 1usize..40) {
        prop_assume!(docs.iter().map(String::len).sum::<usize>() <= 1024);
        let vocab_size = 261 + extra;
        let model = train_bpe(&docs, &TrainConfig::with_vocab_size(vocab_size)).unwrap();
        prop_assert_eq!(model_merges(&model), oracle_merges(&docs, vocab_size, 2));
    }

    #[test]
    fn pretokenizer_matches_regex(text in "[a-zA-ZäöüÄÖÜß0-9 \t\n.,;:!?'\"()\\-–€]{0,80}") {
        prop_assert_eq!(our_units(&text), regex_units(&text));
    }

    #[test]
    fn encode_decode_round_trip(text in any::<String>()) {
        let m = &*GERMAN;
        let enc = m.encode(&text);
        prop_assert_eq!(m.decode(&enc.ids, false).unwrap(), text.clone());
        prop_assert_eq!(enc.ids.len(), enc.word_start.len());
        prop_assert_eq!(enc.word_start.iter().filter(|&&w| w).count(), our_units(&text).len());
    }

    #[test]
    fn serialization_round_trip(docs in proptest::collection::vec(text_strategy(), 1..6)) {
        let m = train_bpe(&docs, &TrainConfig::with_vocab_size(300)).unwrap();
        let back = TokenizerModel::from_texts(&m.vocab_text(), &m.merges_text()).unwrap();
        prop_assert_eq!(back, m);
    }
}

#[test]
fn pretokenizer_examples() {
    assert_eq!(our_units("Hallo Welt!"), ["Hallo", " Welt", "!"]);
    assert_eq!(our_units("it's  42 "), ["it", "'s", " ", " 42", " "]);
    assert_eq!(our_units("a\n\nb"), ["a", "\n", "\n", "b"]);
}

#[test]
fn fuzzed_round_trip_with_control_characters() {
    use rand::{Rng, SeedableRng};
    let m = &*GERMAN;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
    let pool: Vec<char> = "aäßZ09 \t\n\r\u{0}\u{7}\u{1b}\u{85}\u{a0}\u{200b}€😀中文ñ'.!"
        .chars()
        .collect();
    for _ in 0..2000 {
        let len = rng.random_range(0..40);
        let s: String = (0..len)
            .map(|_| {
                if rng.random_bool(0.2) {
                    char::from_u32(rng.random_range(0..0x11_0000)).unwrap_or('x')
                } else {
                    pool[rng.random_range(0..pool.len())]
                }
            })
            .collect();
        assert_eq!(m.decode(&m.encode(&s).ids, false).unwrap(), s);
    }
}
