//! WordPiece-style subword tokenization with fixed-length output.

mod trainer;
mod vocab;

use serde::{Deserialize, Serialize};

pub use trainer::train_vocab;
pub use vocab::{
    Vocab, CLS, CLS_ID, DEFAULT_CONTINUATION, PAD, PAD_ID, SEP, SEP_ID, SPECIALS, UNK, UNK_ID,
};

use crate::error::{Error, Result};

/// Words longer than this many characters become `[UNK]` without a search.
pub const MAX_WORD_CHARS: usize = 100;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedInput {
    pub ids: Vec<u32>,
    pub mask: Vec<u8>,
    pub real_len: usize,
}

impl TokenizedInput {
    pub fn max_len(&self) -> usize {
        self.ids.len()
    }

    /// The non-padding prefix of `ids`.
    pub fn real_ids(&self) -> &[u32] {
        &self.ids[..self.real_len]
    }

    /// Checks every structural invariant; returns a description of the first
    /// violation.
    pub fn check(&self) -> std::result::Result<(), String> {
        self.check_real()?;
        match self.ids[self.real_len..].iter().position(|&id| id != PAD_ID) {
            Some(i) => Err(format!("id at {} disagrees with padding", self.real_len + i)),
            None => Ok(()),
        }
    }

    /// Like [`check`](Self::check) but ignores the ids at padding
    /// positions, which a model never reads.
    pub fn check_real(&self) -> std::result::Result<(), String> {
        let n = self.ids.len();
        if self.mask.len() != n {
            return Err(format!("mask length {} != ids length {n}", self.mask.len()));
        }
        if self.real_len < 2 || self.real_len > n {
            return Err(format!("real_len {} outside 2..={n}", self.real_len));
        }
        if self.ids[0] != CLS_ID {
            return Err("first id is not [CLS]".into());
        }
        if self.ids[self.real_len - 1] != SEP_ID {
            return Err("last real id is not [SEP]".into());
        }
        for i in 0..n {
            let real = i < self.real_len;
            if (self.mask[i] == 1) != real {
                return Err(format!("mask[{i}] = {} disagrees with real_len", self.mask[i]));
            }
            if real && self.ids[i] == PAD_ID {
                return Err(format!("[PAD] at real position {i}"));
            }
        }
        Ok(())
    }
}

/// Greedy longest-match segmentation of one word. `None` when some suffix
/// has no matching piece.
pub fn wordpiece(word: &str, vocab: &Vocab) -> Option<Vec<u32>> {
    let chars: Vec<(usize, char)> = word.char_indices().collect();
    if chars.is_empty() || chars.len() > MAX_WORD_CHARS {
        return None;
    }
    let prefix = vocab.continuation_prefix();
    let mut pieces = Vec::new();
    let mut start = 0;
    let mut candidate = String::new();
    while start < chars.len() {
        let from = chars[start].0;
        let mut found = None;
        for end in (start + 1..=chars.len()).rev() {
            let to = chars.get(end).map_or(word.len(), |&(b, _)| b);
            candidate.clear();
            if start > 0 {
                candidate.push_str(prefix);
            }
            candidate.push_str(&word[from..to]);
            if let Some(id) = vocab.id(&candidate) {
                found = Some((id, end));
                break;
            }
        }
        let (id, end) = found?;
        pieces.push(id);
        start = end;
    }
    Some(pieces)
}

/// `[CLS] pieces… [SEP] [PAD]…` of exactly `max_len` ids.
///
/// Panics if `max_len < 3`; use [`Tokenizer::new`] to validate up front.
pub fn encode(text: &str, vocab: &Vocab, max_len: usize) -> TokenizedInput {
    assert!(max_len >= 3, "max_len must be at least 3, got {max_len}");
    let budget = max_len - 2;
    let mut ids = Vec::with_capacity(max_len);
    ids.push(CLS_ID);
    'words: for word in text.split_whitespace() {
        let pieces = wordpiece(word, vocab).unwrap_or_else(|| vec![UNK_ID]);
        for id in pieces {
            if ids.len() - 1 == budget {
                break 'words;
            }
            ids.push(id);
        }
    }
    ids.push(SEP_ID);
    let real_len = ids.len();
    ids.resize(max_len, PAD_ID);
    let mask = (0..max_len).map(|i| u8::from(i < real_len)).collect();
    TokenizedInput { ids, mask, real_len }
}

/// Inverse of [`encode`] for fully covered text: specials are dropped and
/// continuation pieces are glued to the preceding word.
pub fn decode(ids: &[u32], vocab: &Vocab) -> Result<String> {
    let prefix = vocab.continuation_prefix();
    let mut words: Vec<String> = Vec::new();
    for (position, &id) in ids.iter().enumerate() {
        let tok = vocab.token(id).ok_or(Error::TokenOutOfRange {
            position,
            id,
            size: vocab.len(),
        })?;
        if vocab.is_special(id) {
            continue;
        }
        match (tok.strip_prefix(prefix), words.last_mut()) {
            (Some(rest), Some(last)) => last.push_str(rest),
            (Some(rest), None) => words.push(rest.to_string()),
            (None, _) => words.push(tok.to_string()),
        }
    }
    Ok(words.join(" "))
}

/// A vocabulary bound to a sequence length.
#[derive(Clone, Debug)]
pub struct Tokenizer {
    vocab: Vocab,
    max_len: usize,
}

impl Tokenizer {
    pub fn new(vocab: Vocab, max_len: usize) -> Result<Self> {
        if max_len < 3 {
            return Err(Error::Config(format!("max_len must be at least 3, got {max_len}")));
        }
        Ok(Tokenizer { vocab, max_len })
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn encode(&self, text: &str) -> TokenizedInput {
        encode(text, &self.vocab, self.max_len)
    }

    pub fn decode(&self, ids: &[u32]) -> Result<String> {
        decode(ids, &self.vocab)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Vocab {
        let mut t: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        t.extend(["با", "##ران", "باران", "ب", "##ا"].map(String::from));
        Vocab::new(t).unwrap()
    }

    fn toy_split() -> Vocab {
        let mut t: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        t.extend(["با", "##ران"].map(String::from));
        Vocab::new(t).unwrap()
    }

    #[test]
    fn empty_sentence() {
        let v = toy();
        let e = encode("", &v, 6);
        assert_eq!(e.ids, vec![CLS_ID, SEP_ID, 0, 0, 0, 0]);
        assert_eq!(e.mask, vec![1, 1, 0, 0, 0, 0]);
        assert_eq!(e.real_len, 2);
        e.check().unwrap();
    }

    #[test]
    fn whole_word_match_wins() {
        let v = toy();
        let e = encode("باران", &v, 5);
        assert_eq!(e.real_ids(), &[CLS_ID, v.id("باران").unwrap(), SEP_ID]);
    }

    #[test]
    fn greedy_split_on_toy_vocab() {
        let v = toy_split();
        let pieces = wordpiece("باران", &v).unwrap();
        let names: Vec<&str> = pieces.iter().map(|&i| v.token(i).unwrap()).collect();
        assert_eq!(names, vec!["با", "##ران"]);
        assert_eq!(decode(&pieces, &v).unwrap(), "باران");
    }

    #[test]
    fn uncovered_word_is_unk() {
        let v = toy_split();
        let e = encode("xyz باران", &v, 8);
        assert_eq!(e.ids[1], UNK_ID);
    }

    #[test]
    fn truncation_keeps_sep() {
        let v = toy_split();
        let e = encode("باران باران باران", &v, 4);
        assert_eq!(e.ids, vec![CLS_ID, 4, 5, SEP_ID]);
        e.check().unwrap();
    }

    #[test]
    fn decode_drops_specials_and_checks_range() {
        let v = toy_split();
        assert_eq!(decode(&[CLS_ID, SEP_ID], &v).unwrap(), "");
        let err = decode(&[CLS_ID, 99], &v).unwrap_err();
        assert!(matches!(err, Error::TokenOutOfRange { position: 1, id: 99, .. }));
    }

    #[test]
    fn padding_ids_only_matter_to_the_strict_check() {
        let mut x = encode("باران", &toy(), 6);
        x.ids[5] = 7;
        assert!(x.check().unwrap_err().contains("padding"));
        assert!(x.check_real().is_ok());
        x.ids[1] = PAD_ID;
        assert!(x.check_real().is_err());
    }

    #[test]
    fn tokenizer_validates_max_len() {
        assert!(Tokenizer::new(toy(), 2).is_err());
        assert!(Tokenizer::new(toy(), 3).is_ok());
    }
}
