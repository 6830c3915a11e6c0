use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const SPECIALS: [&str; 4] = [PAD, UNK, CLS, SEP];
pub const DEFAULT_CONTINUATION: &str = "##";

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const CLS_ID: u32 = 2;
pub const SEP_ID: u32 = 3;

/// Ordered subword table. Ids are line numbers in the vocab file; the four
/// specials always occupy ids 0..4.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    continuation_prefix: String,
}

impl Vocab {
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        Self::with_prefix(tokens, DEFAULT_CONTINUATION)
    }

    pub fn with_prefix(tokens: Vec<String>, continuation_prefix: &str) -> Result<Self> {
        if continuation_prefix.is_empty() {
            return Err(Error::Vocab("continuation prefix must be non-empty".into()));
        }
        for (id, special) in SPECIALS.iter().enumerate() {
            if tokens.get(id).map(String::as_str) != Some(*special) {
                return Err(Error::Vocab(format!("id {id} must be {special}")));
            }
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (id, tok) in tokens.iter().enumerate() {
            if tok.is_empty() || tok.chars().any(char::is_whitespace) {
                return Err(Error::Vocab(format!("token at id {id} is empty or contains whitespace")));
            }
            if index.insert(tok.clone(), id as u32).is_some() {
                return Err(Error::Vocab(format!("duplicate token {tok:?} at id {id}")));
            }
        }
        Ok(Vocab {
            tokens,
            index,
            continuation_prefix: continuation_prefix.to_string(),
        })
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::new(text.lines().map(str::to_string).collect())
    }

    /// File contents: one token per line, newline-terminated.
    pub fn to_file_string(&self) -> String {
        let mut s = String::new();
        for t in &self.tokens {
            s.push_str(t);
            s.push('\n');
        }
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_file_string()).map_err(|e| Error::io(path, e))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn continuation_prefix(&self) -> &str {
        &self.continuation_prefix
    }

    pub fn is_special(&self, id: u32) -> bool {
        (id as usize) < SPECIALS.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(extra: &[&str]) -> Vec<String> {
        SPECIALS.iter().chain(extra).map(|s| s.to_string()).collect()
    }

    #[test]
    fn specials_are_fixed() {
        let v = Vocab::new(toks(&["a"])).unwrap();
        assert_eq!(v.id(PAD), Some(PAD_ID));
        assert_eq!(v.id(SEP), Some(SEP_ID));
        assert_eq!(v.id("a"), Some(4));

        let mut swapped = toks(&[]);
        swapped.swap(0, 1);
        assert!(Vocab::new(swapped).is_err());
        assert!(Vocab::new(vec![PAD.into()]).is_err());
    }

    #[test]
    fn duplicates_rejected() {
        assert!(Vocab::new(toks(&["a", "b", "a"])).is_err());
    }

    #[test]
    fn file_round_trip() {
        let v = Vocab::new(toks(&["با", "##ران"])).unwrap();
        assert_eq!(Vocab::parse(&v.to_file_string()).unwrap(), v);
    }
}
