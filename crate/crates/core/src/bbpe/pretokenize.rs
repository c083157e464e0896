//! GPT-2 style splitting of text into pretokenization units.
//!
//! The rule mirrors the GPT-2 pattern
//! `'s|'t|'re|'ve|'m|'ll|'d| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+(?!\S)|\s+`
//! evaluated by hand over `char` classes, so it needs neither `std` nor a
//! regex engine. Letters are `char::is_alphabetic`, numbers
//! `char::is_numeric`, whitespace `char::is_whitespace`.

use core::ops::Range;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Class {
    Letter,
    Number,
    Space,
    Other,
}

fn class(c: char) -> Class {
    if c.is_alphabetic() {
        Class::Letter
    } else if c.is_numeric() {
        Class::Number
    } else if c.is_whitespace() {
        Class::Space
    } else {
        Class::Other
    }
}

const CONTRACTIONS: [&str; 7] = ["'s", "'t", "'re", "'ve", "'m", "'ll", "'d"];

/// Iterator over the byte ranges of the pretokenization units of `text`.
///
/// The ranges tile the input: they are contiguous, non-empty and cover every
/// byte exactly once.
pub fn units(text: &str) -> Units<'_> {
    Units { text, pos: 0 }
}

#[derive(Debug, Clone)]
pub struct Units<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Units<'a> {
    /// End of the run of `cls` characters starting at byte `from`.
    fn run_end(&self, from: usize, cls: Class) -> usize {
        self.text[from..]
            .char_indices()
            .find(|&(_, c)| class(c) != cls)
            .map_or(self.text.len(), |(i, _)| from + i)
    }

    fn next_unit(&self) -> usize {
        let rest = &self.text[self.pos..];
        if let Some(c) = CONTRACTIONS.iter().find(|c| rest.starts_with(*c)) {
            return self.pos + c.len();
        }
        let mut chars = rest.chars();
        let first = chars.next().expect("called at end of text");
        let second = chars.next();
        let start_cls = class(first);

        // optional single leading space before a letter, number or symbol run
        if first == ' ' {
            if let Some(c) = second.map(class).filter(|&c| c != Class::Space) {
                return self.run_end(self.pos + 1, c);
            }
        }
        if start_cls != Class::Space {
            return self.run_end(self.pos, start_cls);
        }

        // whitespace: the run minus its last char when more text follows, so
        // a trailing space can attach to the next word
        let end = self.run_end(self.pos, Class::Space);
        if end == self.text.len() {
            return end;
        }
        let last = self.text[..end].chars().next_back().unwrap();
        let trimmed = end - last.len_utf8();
        if trimmed > self.pos {
            trimmed
        } else {
            end
        }
    }
}

impl<'a> Iterator for Units<'a> {
    type Item = Range<usize>;

    fn next(&mut self) -> Option<Range<usize>> {
        if self.pos >= self.text.len() {
            return None;
        }
        let start = self.pos;
        self.pos = self.next_unit();
        Some(start..self.pos)
    }
}
