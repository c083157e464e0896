//! Diffable two-file text format.
//!
//! `vocab.txt` holds one `token<TAB>id` line per id in increasing order.
//! Special tokens are written verbatim, regular tokens in their byte-mapped
//! printable form; `\`, tab, CR, LF and other control characters are
//! escaped as `\\`, `\t`, `\r`, `\n` and `\u{..}`.
//!
//! `merges.txt` starts with `#version: 1 pretokenizer=<id>` and then lists
//! one `left right` pair per line in merge order.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use super::{
    from_printable, to_printable, Pretokenizer, SpecialTokens, TokenizerModel, FIRST_BYTE_ID,
    NUM_SPECIALS,
};
use crate::{Error, Result};

pub const VOCAB_FILE: &str = "vocab.txt";
pub const MERGES_FILE: &str = "merges.txt";
pub const TOKENIZER_FORMAT_VERSION: u32 = 1;

const HEADER_PREFIX: &str = "#version: ";

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c if c.is_control() => {
                let _ = write!(out, "\\u{{{:x}}}", c as u32);
            }
            c => out.push(c),
        }
    }
    out
}

fn unescape(s: &str, line: usize) -> Result<String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some('u') => {
                if chars.next() != Some('{') {
                    return Err(Error::parse(line, "expected '{' after \\u"));
                }
                let hex: String = chars.by_ref().take_while(|&c| c != '}').collect();
                let c = u32::from_str_radix(&hex, 16)
                    .ok()
                    .and_then(char::from_u32)
                    .ok_or_else(|| Error::parse(line, alloc::format!("bad escape \\u{{{hex}}}")))?;
                out.push(c);
            }
            other => {
                return Err(Error::parse(
                    line,
                    alloc::format!("unknown escape \\{}", other.unwrap_or(' ')),
                ));
            }
        }
    }
    Ok(out)
}

impl TokenizerModel {
    /// Contents of `vocab.txt`.
    pub fn vocab_text(&self) -> String {
        let mut out = String::new();
        for (id, s) in self.specials.as_array().iter().enumerate() {
            let _ = writeln!(out, "{}\t{id}", escape(s));
        }
        for (i, t) in self.tokens.iter().enumerate() {
            let _ = writeln!(
                out,
                "{}\t{}",
                escape(&to_printable(t)),
                i as u32 + FIRST_BYTE_ID
            );
        }
        out
    }

    /// Contents of `merges.txt`.
    pub fn merges_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{HEADER_PREFIX}{TOKENIZER_FORMAT_VERSION} pretokenizer={}",
            self.pretokenizer.id()
        );
        for &(l, r) in &self.merges {
            let _ = writeln!(
                out,
                "{} {}",
                to_printable(self.token_bytes(l).unwrap()),
                to_printable(self.token_bytes(r).unwrap())
            );
        }
        out
    }

    /// Parses the two text files. Errors carry the 1-based line number; a
    /// failure that concerns the model as a whole (such as a vocabulary entry
    /// no merge produces, the sign of a truncated merges file) reports the
    /// line after the last merge.
    pub fn from_texts(vocab: &str, merges: &str) -> Result<Self> {
        let (specials, tokens) = parse_vocab(vocab)?;
        let mut lines = merges.lines().enumerate();
        let header = lines.next().map(|(_, l)| l).unwrap_or("");
        let pretokenizer = parse_header(header)?;

        let (merge_list, last_line) = parse_merges(lines, &tokens)?;
        TokenizerModel::from_parts(specials, tokens, merge_list, pretokenizer).map_err(
            |e| match e {
                Error::Input(m) => Error::parse(last_line + 1, m),
                other => other,
            },
        )
    }
}

/// Parses `vocab.txt` alone into the special tokens and the byte strings of
/// every non-special id.
pub fn parse_vocab(vocab: &str) -> Result<(SpecialTokens, Vec<Vec<u8>>)> {
    let mut specials: Vec<String> = Vec::with_capacity(5);
    let mut tokens: Vec<Vec<u8>> = Vec::new();
    for (i, line) in vocab.lines().enumerate() {
        let lineno = i + 1;
        let (token, id) = line
            .rsplit_once('\t')
            .ok_or_else(|| Error::parse(lineno, "expected token<TAB>id"))?;
        let id: usize = id
            .parse()
            .map_err(|_| Error::parse(lineno, alloc::format!("invalid id {id:?}")))?;
        if id != i {
            return Err(Error::parse(
                lineno,
                alloc::format!("expected id {i}, found {id}"),
            ));
        }
        let token = unescape(token, lineno)?;
        if id < NUM_SPECIALS as usize {
            specials.push(token);
        } else {
            let bytes = from_printable(&token).ok_or_else(|| {
                Error::parse(
                    lineno,
                    alloc::format!("token {token:?} is not in byte-mapped form"),
                )
            })?;
            tokens.push(bytes);
        }
    }
    let specials: [String; 5] = specials.try_into().map_err(|_| {
        Error::parse(
            vocab.lines().count() + 1,
            "vocabulary has fewer than 5 special tokens",
        )
    })?;
    Ok((SpecialTokens::from_array(specials), tokens))
}

fn parse_merges<'a>(
    lines: impl Iterator<Item = (usize, &'a str)>,
    tokens: &[Vec<u8>],
) -> Result<(Vec<(u32, u32)>, usize)> {
    let by_bytes: hashbrown::HashMap<&[u8], u32> = tokens
        .iter()
        .enumerate()
        .map(|(i, t)| (t.as_slice(), i as u32 + FIRST_BYTE_ID))
        .collect();
    let mut merge_list = Vec::new();
    let mut last_line = 1;
    for (i, line) in lines {
        let lineno = i + 1;
        last_line = lineno;
        let mut parts = line.split(' ');
        let (Some(l), Some(r), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::parse(
                lineno,
                "expected exactly two space-separated tokens",
            ));
        };
        let lookup = |s: &str| {
            from_printable(s)
                .and_then(|b| by_bytes.get(b.as_slice()).copied())
                .ok_or_else(|| Error::parse(lineno, alloc::format!("unknown token {s:?}")))
        };
        merge_list.push((lookup(l)?, lookup(r)?));
    }
    Ok((merge_list, last_line))
}

fn parse_header(header: &str) -> Result<Pretokenizer> {
    let rest = header
        .strip_prefix(HEADER_PREFIX)
        .ok_or_else(|| Error::parse(1, "missing '#version:' header"))?;
    let (version, tail) = rest.split_once(' ').unwrap_or((rest, ""));
    if version != alloc::format!("{TOKENIZER_FORMAT_VERSION}") {
        return Err(Error::parse(
            1,
            alloc::format!("unsupported merges version {version:?}"),
        ));
    }
    let id = tail
        .strip_prefix("pretokenizer=")
        .ok_or_else(|| Error::parse(1, "missing pretokenizer id"))?;
    Pretokenizer::from_id(id)
        .ok_or_else(|| Error::parse(1, alloc::format!("unknown pretokenizer {id:?}")))
}
