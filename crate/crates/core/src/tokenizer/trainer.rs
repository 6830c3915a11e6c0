//! Frequency-merge vocabulary training.
//!
//! Starts from every character seen at least `min_freq` times (as both an
//! initial piece and a continuation piece), then repeatedly merges the most
//! frequent adjacent piece pair inside words. Ties go to the
//! lexicographically smallest pair, so the result depends only on the corpus
//! and the parameters.

use std::collections::{BTreeMap, BTreeSet};

use super::vocab::{Vocab, DEFAULT_CONTINUATION, SPECIALS};
use crate::error::{Error, Result};

pub fn train_vocab<'a, I>(corpus: I, target_size: usize, min_freq: usize) -> Result<Vocab>
where
    I: IntoIterator<Item = &'a str>,
{
    let prefix = DEFAULT_CONTINUATION;
    let mut word_counts: BTreeMap<String, usize> = BTreeMap::new();
    for line in corpus {
        for word in line.split_whitespace() {
            *word_counts.entry(word.to_string()).or_default() += 1;
        }
    }
    if word_counts.is_empty() {
        return Err(Error::Vocab("cannot train on an empty corpus".into()));
    }
    let min_freq = min_freq.max(1);

    let mut char_counts: BTreeMap<char, usize> = BTreeMap::new();
    for (word, &n) in &word_counts {
        for c in word.chars() {
            *char_counts.entry(c).or_default() += n;
        }
    }
    let alphabet: Vec<char> = char_counts
        .iter()
        .filter(|(_, &n)| n >= min_freq)
        .map(|(&c, _)| c)
        .collect();
    let required = SPECIALS.len() + 2 * alphabet.len();
    if target_size < required {
        return Err(Error::VocabTooSmall { requested: target_size, required });
    }

    let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
    tokens.extend(alphabet.iter().map(|c| c.to_string()));
    tokens.extend(alphabet.iter().map(|c| format!("{prefix}{c}")));
    let mut known: BTreeSet<String> = tokens.iter().cloned().collect();

    let mut words: Vec<(Vec<String>, usize)> = word_counts
        .into_iter()
        .map(|(w, n)| {
            let pieces = w
                .chars()
                .enumerate()
                .map(|(i, c)| if i == 0 { c.to_string() } else { format!("{prefix}{c}") })
                .collect();
            (pieces, n)
        })
        .collect();

    while tokens.len() < target_size {
        let mut pairs: BTreeMap<(&str, &str), usize> = BTreeMap::new();
        for (pieces, n) in &words {
            for w in pieces.windows(2) {
                if known.contains(&w[0]) && known.contains(&w[1]) {
                    *pairs.entry((w[0].as_str(), w[1].as_str())).or_default() += n;
                }
            }
        }
        let mut best: Option<((&str, &str), usize)> = None;
        for (pair, n) in pairs {
            if best.is_none_or(|(_, b)| n > b) {
                best = Some((pair, n));
            }
        }
        let Some(((left, right), count)) = best else { break };
        if count < min_freq {
            break;
        }
        let (left, right) = (left.to_string(), right.to_string());
        let merged = format!("{left}{}", &right[prefix.len()..]);
        if known.insert(merged.clone()) {
            tokens.push(merged.clone());
        }
        for (pieces, _) in &mut words {
            merge_in_place(pieces, &left, &right, &merged);
        }
    }
    Vocab::new(tokens)
}

fn merge_in_place(pieces: &mut Vec<String>, left: &str, right: &str, merged: &str) {
    if pieces.len() < 2 {
        return;
    }
    let mut out = Vec::with_capacity(pieces.len());
    let mut i = 0;
    while i < pieces.len() {
        if i + 1 < pieces.len() && pieces[i] == left && pieces[i + 1] == right {
            out.push(merged.to_string());
            i += 2;
        } else {
            out.push(std::mem::take(&mut pieces[i]));
            i += 1;
        }
    }
    *pieces = out;
}
