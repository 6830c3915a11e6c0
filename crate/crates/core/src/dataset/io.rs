use std::collections::HashMap;
use std::path::Path;

use super::{ClassInfo, Dataset, Example};
use crate::error::{Error, Result};

pub const HEADER: &str = "y\tx\tidiom_y";

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text)
}

/// Parses the tab-separated format. Labels are remapped to dense ids in
/// order of first appearance.
pub fn parse_dataset(text: &str) -> Result<Dataset> {
    let text = text.strip_prefix('\u{FEFF}').unwrap_or(text);
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end_matches('\r') == HEADER => {}
        Some((_, h)) => {
            return Err(Error::Malformed {
                line: 1,
                message: format!("expected header {HEADER:?}, got {h:?}"),
            })
        }
        None => return Err(Error::Malformed { line: 1, message: "missing header".into() }),
    }

    let mut ds = Dataset::default();
    // original label -> (dense id, first line)
    let mut seen: HashMap<i64, (usize, usize)> = HashMap::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        let raw = raw.trim_end_matches('\r');
        if raw.is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split('\t').collect();
        let [y, x, idiom] = fields.as_slice() else {
            return Err(Error::Malformed {
                line,
                message: format!("expected 3 tab-separated fields, got {}", fields.len()),
            });
        };
        let original: i64 = y.trim().parse().map_err(|_| Error::Malformed {
            line,
            message: format!("label {y:?} is not an integer"),
        })?;
        let surface = idiom.trim().to_string();
        let label = match seen.get(&original) {
            Some(&(label, first_line)) => {
                let known = &ds.classes[label].surface;
                if *known != surface {
                    return Err(Error::InconsistentLabel {
                        label: original,
                        first_line,
                        first_surface: known.clone(),
                        second_line: line,
                        second_surface: surface,
                    });
                }
                label
            }
            None => {
                let label = ds.classes.len();
                ds.classes.push(ClassInfo { surface: surface.clone(), original_label: original });
                seen.insert(original, (label, line));
                label
            }
        };
        ds.examples.push(Example {
            label,
            text: x.trim().to_string(),
            idiom_surface: surface,
        });
    }
    Ok(ds)
}

pub fn to_tsv(ds: &Dataset) -> String {
    let mut s = String::from(HEADER);
    s.push('\n');
    for e in &ds.examples {
        let original = ds.classes.get(e.label).map_or(e.label as i64, |c| c.original_label);
        s.push_str(&format!("{original}\t{}\t{}\n", e.text, e.idiom_surface));
    }
    s
}

pub fn save_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_tsv(ds)).map_err(|e| Error::io(path, e))
}
