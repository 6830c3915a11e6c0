use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

const DEFAULT_TABLE: &str = include_str!("../../data/unification.tsv");

/// Character unification mappings, loaded from a `SRC<TAB>DST` file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UnificationTable {
    version: Option<String>,
    anywhere: HashMap<char, char>,
    word_final: HashMap<char, char>,
}

impl Default for UnificationTable {
    fn default() -> Self {
        Self::parse(DEFAULT_TABLE).expect("bundled unification table parses")
    }
}

fn parse_code_point(field: &str, line: usize) -> Result<char> {
    let hex = field
        .strip_prefix("U+")
        .or_else(|| field.strip_prefix("u+"))
        .ok_or_else(|| Error::Table { line, message: format!("expected U+XXXX, got {field:?}") })?;
    let value = u32::from_str_radix(hex, 16)
        .map_err(|_| Error::Table { line, message: format!("bad hex in {field:?}") })?;
    char::from_u32(value)
        .ok_or_else(|| Error::Table { line, message: format!("{field} is not a scalar value") })
}

impl UnificationTable {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut version = None;
        let mut anywhere = HashMap::new();
        let mut word_final = HashMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if let Some(comment) = trimmed.strip_prefix('#') {
                if let Some(v) = comment.trim().strip_prefix("version:") {
                    version = Some(v.trim().to_string());
                }
                continue;
            }
            if trimmed.is_empty() {
                continue;
            }
            let fields: Vec<&str> = trimmed.split('\t').map(str::trim).collect();
            let (src, dst, context) = match fields.as_slice() {
                [s, d] => (*s, *d, None),
                [s, d, c] => (*s, *d, Some(*c)),
                _ => {
                    return Err(Error::Table {
                        line,
                        message: format!("expected 2 or 3 tab-separated fields, got {}", fields.len()),
                    })
                }
            };
            let src = parse_code_point(src, line)?;
            let dst = parse_code_point(dst, line)?;
            if dst.is_whitespace() || dst.is_control() || super::is_removable(dst) {
                return Err(Error::Table {
                    line,
                    message: format!("target U+{:04X} would be stripped or split words", dst as u32),
                });
            }
            let map = match context {
                None => &mut anywhere,
                Some("final") => &mut word_final,
                Some(other) => {
                    return Err(Error::Table { line, message: format!("unknown context {other:?}") })
                }
            };
            if map.insert(src, dst).is_some() {
                return Err(Error::Table {
                    line,
                    message: format!("U+{:04X} is mapped twice", src as u32),
                });
            }
        }
        let mut table = UnificationTable { version, anywhere, word_final };
        table.close_chains()?;
        Ok(table)
    }

    /// Follow `a → b → c` chains to their end so one lookup is enough and
    /// applying the table twice changes nothing.
    fn close_chains(&mut self) -> Result<()> {
        let resolve = |start: char, map: &HashMap<char, char>| -> Result<char> {
            let mut current = start;
            for _ in 0..=map.len() {
                match map.get(&current) {
                    Some(&next) if next != current => current = next,
                    _ => return Ok(current),
                }
            }
            Err(Error::Table {
                line: 0,
                message: format!("mapping cycle through U+{:04X}", start as u32),
            })
        };
        let mut closed = HashMap::new();
        for &src in self.anywhere.keys() {
            closed.insert(src, resolve(src, &self.anywhere)?);
        }
        for dst in self.word_final.values_mut() {
            *dst = resolve(*dst, &closed)?;
        }
        self.anywhere = closed;
        Ok(())
    }

    pub fn version(&self) -> Option<&str> {
        self.version.as_deref()
    }

    pub fn map(&self, c: char) -> char {
        self.anywhere.get(&c).copied().unwrap_or(c)
    }

    pub fn map_word_final(&self, c: char) -> Option<char> {
        self.word_final.get(&c).copied()
    }

    pub fn len(&self) -> usize {
        self.anywhere.len() + self.word_final.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every mapping as `(src, dst, word_final_only)`, sorted by source.
    pub fn entries(&self) -> Vec<(char, char, bool)> {
        let mut out: Vec<_> = self
            .anywhere
            .iter()
            .map(|(&s, &d)| (s, d, false))
            .chain(self.word_final.iter().map(|(&s, &d)| (s, d, true)))
            .collect();
        out.sort();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_table_has_required_entries() {
        let t = UnificationTable::default();
        assert_eq!(t.version(), Some("1"));
        assert_eq!(t.map('\u{064A}'), '\u{06CC}');
        assert_eq!(t.map('\u{0649}'), '\u{06CC}');
        assert_eq!(t.map('\u{0643}'), '\u{06A9}');
        assert_eq!(t.map('\u{0629}'), '\u{0629}');
        assert_eq!(t.map_word_final('\u{0629}'), Some('\u{06D5}'));
        for d in 0..10u32 {
            let ascii = char::from_u32(0x30 + d).unwrap();
            assert_eq!(t.map(char::from_u32(0x0660 + d).unwrap()), ascii);
            assert_eq!(t.map(char::from_u32(0x06F0 + d).unwrap()), ascii);
        }
    }

    #[test]
    fn chains_are_closed() {
        let t = UnificationTable::parse("U+0041\tU+0042\nU+0042\tU+0043\n").unwrap();
        assert_eq!(t.map('A'), 'C');
        assert_eq!(t.map('B'), 'C');
    }

    #[test]
    fn cycles_and_bad_lines_are_rejected() {
        assert!(UnificationTable::parse("U+0041\tU+0042\nU+0042\tU+0041\n").is_err());
        let err = UnificationTable::parse("# c\nU+0041 U+0042\n").unwrap_err();
        assert!(matches!(err, Error::Table { line: 2, .. }));
        assert!(UnificationTable::parse("U+0041\tU+0020\n").is_err());
        assert!(UnificationTable::parse("U+0041\tU+0042\tmedial\n").is_err());
        assert!(UnificationTable::parse("U+0041\tU+0042\nU+0041\tU+0043\n").is_err());
    }
}
