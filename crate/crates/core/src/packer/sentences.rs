//! Rule-based sentence splitting tuned for German prose.

use alloc::vec::Vec;
use core::ops::Range;

/// Abbreviations (without the final period) that do not end a sentence.
const ABBREVIATIONS: &[&str] = &[
    "Abb", "Abs", "Abt", "Anm", "Art", "Aufl", "Bd", "Bsp", "bspw", "bzgl", "bzw", "ca", "Chr",
    "d.h", "Dipl", "Dr", "ebd", "etc", "evtl", "f", "ff", "Fr", "geb", "gem", "ggf", "Hr", "Hrsg",
    "i.d.R", "i.A", "inkl", "Ing", "Jh", "Jhd", "jun", "Kap", "lt", "max", "Mio", "min", "Mrd",
    "Nr", "o.ä", "o.g", "Prof", "rd", "s", "S", "s.o", "s.u", "sen", "sog", "St", "Std", "Str",
    "Tel", "u", "u.a", "u.ä", "usw", "v", "vgl", "z", "z.B", "z.T", "zzgl", "Mr", "Mrs", "Ms",
    "vs", "e.V", "GmbH", "Co",
];

const TERMINATORS: &[char] = &['.', '!', '?', '…'];
const CLOSERS: &[char] = &['"', '\'', '»', '«', '“', '”', '‘', '’', ')', ']'];
const OPENERS: &[char] = &['"', '\'', '»', '«', '„', '“', '‚', '‘', '(', '['];

/// One sentence of a text.
///
/// `tile` ranges of consecutive sentences are contiguous and cover the whole
/// input; whitespace between sentences belongs to the following tile.
/// `body` is the tile without surrounding whitespace and is never empty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentenceSpan {
    pub tile: Range<usize>,
    pub body: Range<usize>,
}

/// Sentence bodies of `text`.
pub fn split_sentences(text: &str) -> Vec<&str> {
    sentence_spans(text)
        .into_iter()
        .map(|s| &text[s.body])
        .collect()
}

/// Sentences of `text` with their byte ranges. Whitespace-only input has no
/// sentences.
pub fn sentence_spans(text: &str) -> Vec<SentenceSpan> {
    let mut cuts = Vec::new();
    let mut iter = text.char_indices().peekable();
    while let Some((i, c)) = iter.next() {
        if c.is_whitespace() {
            // paragraph break: a whitespace run with two or more newlines
            let mut end = i + c.len_utf8();
            let mut newlines = usize::from(c == '\n');
            while let Some(&(j, d)) = iter.peek() {
                if !d.is_whitespace() {
                    break;
                }
                newlines += usize::from(d == '\n');
                end = j + d.len_utf8();
                iter.next();
            }
            if newlines >= 2 && end < text.len() {
                cuts.push(i);
            }
            continue;
        }
        if !TERMINATORS.contains(&c) {
            continue;
        }
        let mut end = i + c.len_utf8();
        while let Some(&(j, d)) = iter.peek() {
            if TERMINATORS.contains(&d) || CLOSERS.contains(&d) {
                end = j + d.len_utf8();
                iter.next();
            } else {
                break;
            }
        }
        let after = &text[end..];
        if !after.starts_with(char::is_whitespace) {
            continue;
        }
        let Some(next) = after.trim_start().chars().next() else {
            continue;
        };
        if next.is_lowercase() {
            continue;
        }
        if &text[i..end] == "." && is_abbreviation(&text[..i]) {
            continue;
        }
        cuts.push(end);
    }

    let mut spans = Vec::with_capacity(cuts.len() + 1);
    let mut start = 0;
    cuts.dedup();
    for cut in cuts.into_iter().chain([text.len()]) {
        let tile = start..cut;
        let body_text = text[tile.clone()].trim();
        if body_text.is_empty() {
            // whitespace between cuts joins the next tile
            continue;
        }
        let lead = text[tile.clone()].len() - text[tile.clone()].trim_start().len();
        let body = tile.start + lead..tile.start + lead + body_text.len();
        spans.push(SentenceSpan { tile, body });
        start = cut;
    }
    if let Some(last) = spans.last_mut() {
        last.tile.end = text.len();
    }
    spans
}

/// Whether the word right before a period is an abbreviation, an initial or
/// a one- or two-digit ordinal.
fn is_abbreviation(before: &str) -> bool {
    let word = before
        .rsplit(char::is_whitespace)
        .next()
        .unwrap_or("")
        .trim_start_matches(OPENERS);
    if word.is_empty() {
        return false;
    }
    if ABBREVIATIONS.contains(&word) {
        return true;
    }
    let mut chars = word.chars();
    let first = chars.next().unwrap();
    let single = chars.next().is_none();
    (single && first.is_alphabetic())
        || (word.len() <= 2 && word.chars().all(|c| c.is_ascii_digit()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::String;

    #[test]
    fn examples() {
        assert!(split_sentences("").is_empty());
        assert_eq!(split_sentences("Hallo Welt."), ["Hallo Welt."]);
        assert_eq!(
            split_sentences("Dr. Müller kam. Er ging."),
            ["Dr. Müller kam.", "Er ging."]
        );
    }

    #[test]
    fn abbreviations_initials_ordinals() {
        assert_eq!(
            split_sentences("Am 3. Oktober kam A. Merkel, z.B. mit Prof. Schmidt. Dann ging sie."),
            [
                "Am 3. Oktober kam A. Merkel, z.B. mit Prof. Schmidt.",
                "Dann ging sie."
            ]
        );
        assert_eq!(
            split_sentences("Das war 1990. Danach nicht."),
            ["Das war 1990.", "Danach nicht."]
        );
    }

    #[test]
    fn other_terminators_and_quotes() {
        assert_eq!(
            split_sentences("Wirklich?! „Ja.“ Gut… Ende"),
            ["Wirklich?!", "„Ja.“", "Gut…", "Ende"]
        );
        assert_eq!(split_sentences("klein. weiter"), ["klein. weiter"]);
        assert_eq!(
            split_sentences("Version 2.0 ist da."),
            ["Version 2.0 ist da."]
        );
    }

    #[test]
    fn paragraphs() {
        assert_eq!(
            split_sentences("Titel\n\nText hier"),
            ["Titel", "Text hier"]
        );
        assert_eq!(split_sentences("eine\nZeile"), ["eine\nZeile"]);
    }

    #[test]
    fn tiles_cover_input() {
        for text in ["  Eins. Zwei.  ", "A\n\n\nB. C", "x", "   ", "Ende.\n\n"] {
            let spans = sentence_spans(text);
            let joined: String = spans.iter().map(|s| &text[s.tile.clone()]).collect();
            if text.trim().is_empty() {
                assert!(spans.is_empty());
            } else {
                assert_eq!(joined, text);
            }
            for s in &spans {
                assert!(!text[s.body.clone()].is_empty());
                assert_eq!(text[s.body.clone()].trim(), &text[s.body.clone()]);
            }
        }
    }
}
