//! Character set handling shared by the recognizer, dataset and artifacts.

use crate::error::{Error, Result};
use std::collections::HashMap;

/// Fixed, ordered character inventory. The CTC blank is not part of the
/// charset; it always occupies index `len()` in logit space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Charset {
    chars: Vec<char>,
    index: HashMap<char, usize>,
}

impl Charset {
    pub fn new(chars: impl IntoIterator<Item = char>) -> Result<Self> {
        let mut seen = HashMap::new();
        let mut list = Vec::new();
        for c in chars {
            if seen.contains_key(&c) {
                return Err(Error::Invalid(format!("duplicate charset character {c:?}")));
            }
            seen.insert(c, list.len());
            list.push(c);
        }
        if list.is_empty() {
            return Err(Error::EmptyCharset);
        }
        Ok(Charset {
            chars: list,
            index: seen,
        })
    }

    pub fn from_str_chars(s: &str) -> Result<Self> {
        Self::new(s.chars())
    }

    /// Default desk-scale inventory: lowercase letters, space, and the three
    /// digit confusables `0`, `1`, `2` that pair with `o`, `l`, `z`.
    pub fn default_desk() -> Self {
        Self::from_str_chars("abcdefghijklmnopqrstuvwxyz 012").expect("static charset is valid")
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    /// Index of the CTC blank in logit space (one past the last character).
    pub fn blank(&self) -> usize {
        self.chars.len()
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn char_at(&self, idx: usize) -> Option<char> {
        self.chars.get(idx).copied()
    }

    pub fn lookup(&self, c: char) -> Result<usize> {
        self.index.get(&c).copied().ok_or(Error::OutOfCharset(c))
    }

    pub fn contains(&self, c: char) -> bool {
        self.index.contains_key(&c)
    }

    pub fn encode(&self, text: &str) -> Result<Vec<usize>> {
        text.chars().map(|c| self.lookup(c)).collect()
    }

    pub fn decode(&self, labels: &[usize]) -> String {
        labels.iter().filter_map(|&l| self.char_at(l)).collect()
    }

    pub fn as_string(&self) -> String {
        self.chars.iter().collect()
    }

    /// Stable content hash used for artifact compatibility checks.
    pub fn hash(&self) -> u64 {
        fnv1a64(self.as_string().as_bytes())
    }
}

/// FNV-1a 64-bit. Used for artifact consistency checks, not security.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_desk_has_30_symbols() {
        let cs = Charset::default_desk();
        assert_eq!(cs.len(), 30);
        assert_eq!(cs.blank(), 30);
        assert!(cs.contains(' '));
        assert!(cs.contains('0'));
    }

    #[test]
    fn encode_rejects_out_of_charset() {
        let cs = Charset::default_desk();
        assert!(matches!(cs.encode("a#b"), Err(Error::OutOfCharset('#'))));
    }

    #[test]
    fn round_trip() {
        let cs = Charset::default_desk();
        let ids = cs.encode("hello 012").unwrap();
        assert_eq!(cs.decode(&ids), "hello 012");
    }

    #[test]
    fn duplicate_char_rejected() {
        assert!(Charset::from_str_chars("aba").is_err());
    }

    #[test]
    fn empty_rejected() {
        assert!(matches!(
            Charset::from_str_chars(""),
            Err(Error::EmptyCharset)
        ));
    }

    #[test]
    fn hash_is_content_stable() {
        let a = Charset::from_str_chars("abc").unwrap();
        let b = Charset::from_str_chars("abc").unwrap();
        let c = Charset::from_str_chars("acb").unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
    }
}
