//! The GPT-2 byte-to-printable-character table.
//!
//! Every byte maps to a visible, non-space `char`, so token strings can be
//! written to line-oriented text files and joined with a single space.

use alloc::string::String;
use alloc::vec::Vec;

const fn is_direct(b: u8) -> bool {
    matches!(b, b'!'..=b'~' | 0xA1..=0xAC | 0xAE..=0xFF)
}

const BYTE_CHARS: [char; 256] = {
    let mut table = ['\0'; 256];
    let mut shifted = 0u32;
    let mut b = 0usize;
    while b < 256 {
        table[b] = if is_direct(b as u8) {
            b as u8 as char
        } else {
            shifted += 1;
            match char::from_u32(256 + shifted - 1) {
                Some(c) => c,
                None => panic!("code points 256..324 are valid"),
            }
        };
        b += 1;
    }
    table
};

/// `char` standing for byte `b`.
pub fn byte_char(b: u8) -> char {
    BYTE_CHARS[b as usize]
}

/// Inverse of [`byte_char`].
pub fn char_byte(c: char) -> Option<u8> {
    let cp = c as u32;
    if cp < 256 && is_direct(cp as u8) {
        return Some(cp as u8);
    }
    if !(256..256 + 68).contains(&cp) {
        return None;
    }
    (0..=255u8)
        .filter(|&b| !is_direct(b))
        .nth((cp - 256) as usize)
}

/// Printable form of a byte string.
pub fn to_printable(bytes: &[u8]) -> String {
    bytes.iter().map(|&b| byte_char(b)).collect()
}

/// Bytes behind a printable token string, or `None` if it contains a
/// character outside the table.
pub fn from_printable(s: &str) -> Option<Vec<u8>> {
    s.chars().map(char_byte).collect()
}
