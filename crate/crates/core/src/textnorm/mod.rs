//! Script normalization for Arabic-script Sorani text.
//!
//! Steps, in order: strip control and zero-width characters (ZWNJ is kept),
//! unfold presentation forms, drop tatweel and harakat, apply the
//! unification table (with word-final entries applied last), lowercase
//! Latin letters, collapse whitespace.

mod table;

use serde::{Deserialize, Serialize};
use unicode_normalization::char::decompose_compatible;

pub use table::UnificationTable;

pub const ZWNJ: char = '\u{200C}';
const TATWEEL: char = '\u{0640}';

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizationConfig {
    pub unify_chars: bool,
    pub collapse_whitespace: bool,
    pub strip_controls: bool,
    pub casefold_latin: bool,
}

impl Default for NormalizationConfig {
    fn default() -> Self {
        NormalizationConfig {
            unify_chars: true,
            collapse_whitespace: true,
            strip_controls: true,
            casefold_latin: true,
        }
    }
}

/// Invisible formatting characters that are removed. ZWNJ is not among them.
pub(crate) fn is_removable(c: char) -> bool {
    if c.is_whitespace() {
        return false;
    }
    c.is_control()
        || matches!(c,
            '\u{00AD}' | '\u{061C}' | '\u{180E}' | '\u{200B}' | '\u{200D}' | '\u{200E}'
            | '\u{200F}' | '\u{202A}'..='\u{202E}' | '\u{2060}'..='\u{2064}'
            | '\u{2066}'..='\u{206F}' | '\u{FEFF}')
}

fn is_harakat(c: char) -> bool {
    matches!(c, '\u{064B}'..='\u{065F}' | '\u{0670}' | '\u{06D6}'..='\u{06ED}')
}

fn is_presentation_form(c: char) -> bool {
    matches!(c, '\u{FB50}'..='\u{FDFF}' | '\u{FE70}'..='\u{FEFE}')
}

fn is_latin_letter(c: char) -> bool {
    c.is_alphabetic()
        && matches!(c,
            'A'..='Z' | 'a'..='z' | '\u{00C0}'..='\u{024F}' | '\u{1E00}'..='\u{1EFF}'
            | '\u{2C60}'..='\u{2C7F}' | '\u{A720}'..='\u{A7FF}' | '\u{FF21}'..='\u{FF3A}'
            | '\u{FF41}'..='\u{FF5A}')
}

#[derive(Clone, Debug, Default)]
pub struct Normalizer {
    table: UnificationTable,
    config: NormalizationConfig,
}

impl Normalizer {
    pub fn new(table: UnificationTable, config: NormalizationConfig) -> Self {
        Normalizer { table, config }
    }

    pub fn table(&self) -> &UnificationTable {
        &self.table
    }

    pub fn config(&self) -> NormalizationConfig {
        self.config
    }

    fn push_char(&self, c: char, out: &mut Vec<char>) {
        let cfg = &self.config;
        if cfg.strip_controls && is_removable(c) {
            return;
        }
        if cfg.unify_chars {
            if is_presentation_form(c) {
                let mut parts = Vec::new();
                decompose_compatible(c, |d| parts.push(d));
                if parts != [c] {
                    // Isolated-harakat forms decompose with a leading space.
                    for d in parts.into_iter().filter(|d| !d.is_whitespace()) {
                        self.push_char(d, out);
                    }
                    return;
                }
            }
            if c == TATWEEL || is_harakat(c) {
                return;
            }
            out.push(self.table.map(c));
        } else {
            out.push(c);
        }
    }

    pub fn normalize(&self, text: &str) -> String {
        let cfg = &self.config;
        let mut chars = Vec::with_capacity(text.len());
        for c in text.chars() {
            self.push_char(c, &mut chars);
        }
        if cfg.unify_chars {
            for i in 0..chars.len() {
                let at_end = chars.get(i + 1).is_none_or(|n| !n.is_alphabetic());
                if at_end {
                    if let Some(d) = self.table.map_word_final(chars[i]) {
                        chars[i] = d;
                    }
                }
            }
        }
        let mut out = String::with_capacity(text.len());
        let mut pending_space = false;
        for c in chars {
            if cfg.collapse_whitespace && c.is_whitespace() {
                pending_space = !out.is_empty();
                continue;
            }
            if pending_space {
                out.push(' ');
                pending_space = false;
            }
            if cfg.casefold_latin && is_latin_letter(c) {
                out.extend(c.to_lowercase());
            } else {
                out.push(c);
            }
        }
        out
    }
}

/// Normalize with the bundled unification table.
pub fn normalize(text: &str, cfg: &NormalizationConfig) -> String {
    Normalizer::new(UnificationTable::default(), *cfg).normalize(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn norm(s: &str) -> String {
        normalize(s, &NormalizationConfig::default())
    }

    #[test]
    fn contract_examples() {
        assert_eq!(norm(""), "");
        assert_eq!(norm("A  B"), "a b");
        assert_eq!(norm("  \t x \n\n y  "), "x y");
    }

    #[test]
    fn kaf_becomes_keheh() {
        let input = "\u{0643}\u{0648}\u{0631}\u{062F}";
        assert_eq!(norm(input), "\u{06A9}\u{0648}\u{0631}\u{062F}");
    }

    #[test]
    fn teh_marbuta_only_word_final() {
        let t = '\u{0629}';
        let b = '\u{0628}';
        assert_eq!(norm(&format!("{b}{t} {b}{t}{b}")), format!("{b}\u{06D5} {b}{t}{b}"));
        assert_eq!(norm(&format!("{b}{t}\u{064E}")), format!("{b}\u{06D5}"));
    }

    #[test]
    fn zero_width_and_decorations() {
        assert_eq!(norm("\u{0628}\u{200C}\u{0631}"), "\u{0628}\u{200C}\u{0631}");
        assert_eq!(norm("\u{0628}\u{200B}\u{0631}\u{200F}"), "\u{0628}\u{0631}");
        assert_eq!(norm("\u{0628}\u{0640}\u{0640}\u{0631}"), "\u{0628}\u{0631}");
        assert_eq!(norm("\u{0628}\u{064E}\u{0631}\u{0651}"), "\u{0628}\u{0631}");
        assert_eq!(norm("a\u{0007}b\u{FEFF}"), "ab");
    }

    #[test]
    fn digits_become_ascii() {
        assert_eq!(norm("\u{0661}\u{0662}\u{06F3}"), "123");
    }

    #[test]
    fn presentation_forms_unfold() {
        // isolated kaf presentation form -> keheh
        assert_eq!(norm("\u{FED9}"), "\u{06A9}");
        // lam-alef ligature -> lam + alef
        assert_eq!(norm("\u{FEFB}"), "\u{0644}\u{0627}");
        // fathatan isolated form (decomposes with a space) vanishes
        assert_eq!(norm("x\u{FE70}y"), "xy");
    }

    #[test]
    fn arabic_is_untouched_by_casing() {
        let s = "برین کولاندنەوە";
        assert_eq!(norm(s), s);
    }

    #[test]
    fn flags_can_be_disabled() {
        let off = NormalizationConfig {
            unify_chars: false,
            collapse_whitespace: false,
            strip_controls: false,
            casefold_latin: false,
        };
        let s = " A\u{0643}\u{200B}  ";
        assert_eq!(normalize(s, &off), s);
    }
}
