//! Templated stand-in data with the same shape as the real corpus: a fixed
//! number of contexts per idiom, several grammatical variants per context,
//! and an optional non-idiom class built from the same frames.
//!
//! Each idiom is a unique two-word pseudo-phrase, so the classes are
//! separable by construction.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ClassInfo, Dataset, Example};
use crate::error::{Error, Result};
use crate::rng;

const SUBJECTS: [&str; 12] = [
    "شیلان", "ئازاد", "هێمن", "ڕێژین", "کاروان", "نەسرین", "دلێر", "ژیان", "سامان", "بەفرین",
    "هاوڕێکەم", "مامۆستاکە",
];

const TIMES: [&str; 10] = [
    "دوێنێ", "ئەمڕۆ", "بەیانی", "ئێوارە", "شەو", "هەفتەی ڕابردوو", "پار", "ئەمساڵ", "ڕۆژی هەینی",
    "دوای نیوەڕۆ",
];

const PLACES: [&str; 10] = [
    "لە بازاڕ", "لە قوتابخانە", "لە ماڵەوە", "لە کۆبوونەوەکە", "لە شار", "لە گوند", "لە ئۆفیس",
    "لە چایخانە", "لە زانکۆ", "لە باخچە",
];

const NEUTRAL: [&str; 8] = [
    "کارەکەی تەواو کرد", "نانی خوارد", "کتێبێکی خوێندەوە", "چاوەڕێی هاوڕێکەی کرد",
    "پیاسەیەکی کرد", "تەلەفۆنی کرد", "قاوەیەکی خواردەوە", "نامەیەکی نووسی",
];

const CONSONANTS: [char; 16] =
    ['ب', 'پ', 'ت', 'ج', 'چ', 'د', 'ر', 'ز', 'س', 'ش', 'ف', 'ک', 'گ', 'ل', 'م', 'ن'];
const VOWELS: [char; 6] = ['ا', 'ە', 'ی', 'ۆ', 'ێ', 'و'];

/// Sentence frames: declarative, question, conditional, reported,
/// sequential, temporal clause.
const TEMPLATES: usize = 6;

fn render(template: usize, subject: &str, time: &str, place: &str, phrase: &str) -> String {
    match template {
        0 => format!("{time} {subject} {place} {phrase}"),
        1 => format!("ئایا {subject} {time} {place} {phrase}؟"),
        2 => format!("ئەگەر {subject} {time} {place} {phrase}، هەموو شتێک ئاسایی دەبێت"),
        3 => format!("{subject} گوتی کە {time} {place} {phrase}"),
        4 => format!("{place} {subject} {time} {phrase} و پاشان ڕۆیشت"),
        _ => format!("کاتێک {subject} {place} بوو، {time} {phrase}"),
    }
}

pub const CONTEXT_CAPACITY: usize = SUBJECTS.len() * TIMES.len() * PLACES.len();

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_idioms: usize,
    pub contexts_per_idiom: usize,
    pub variants_per_context: usize,
    pub non_idiom_count: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.num_idioms == 0 || self.contexts_per_idiom == 0 || self.variants_per_context == 0 {
            return bad("idiom, context and variant counts must be at least 1".into());
        }
        if self.contexts_per_idiom > CONTEXT_CAPACITY {
            return bad(format!("at most {CONTEXT_CAPACITY} contexts per idiom"));
        }
        if self.variants_per_context > TEMPLATES {
            return bad(format!("at most {TEMPLATES} variants per context"));
        }
        if self.non_idiom_count > CONTEXT_CAPACITY * TEMPLATES {
            return bad(format!("at most {} non-idiom sentences", CONTEXT_CAPACITY * TEMPLATES));
        }
        if self.num_idioms > (CONSONANTS.len() * VOWELS.len()).pow(2) / 4 {
            return bad("too many idioms for the marker inventory".into());
        }
        Ok(())
    }

    pub fn expected_len(&self) -> usize {
        self.num_idioms * self.contexts_per_idiom * self.variants_per_context + self.non_idiom_count
    }
}

fn context(combo: usize) -> (&'static str, &'static str, &'static str) {
    let s = combo % SUBJECTS.len();
    let t = (combo / SUBJECTS.len()) % TIMES.len();
    let p = combo / (SUBJECTS.len() * TIMES.len());
    (SUBJECTS[s], TIMES[t], PLACES[p])
}

fn pseudo_word<R: Rng>(rng: &mut R) -> String {
    (0..2)
        .flat_map(|_| {
            [
                *CONSONANTS.choose(rng).expect("non-empty"),
                *VOWELS.choose(rng).expect("non-empty"),
            ]
        })
        .collect()
}

fn markers(spec: &SyntheticSpec) -> Vec<String> {
    let reserved: HashSet<&str> = SUBJECTS
        .iter()
        .chain(&TIMES)
        .chain(&PLACES)
        .chain(&NEUTRAL)
        .flat_map(|s| s.split_whitespace())
        .collect();
    let mut rng = rng::stream(spec.seed, &[0]);
    let mut used: HashSet<String> = HashSet::new();
    let mut out = Vec::with_capacity(spec.num_idioms);
    while out.len() < spec.num_idioms {
        let a = pseudo_word(&mut rng);
        let b = pseudo_word(&mut rng);
        if a == b || reserved.contains(a.as_str()) || reserved.contains(b.as_str()) {
            continue;
        }
        if used.contains(&a) || used.contains(&b) {
            continue;
        }
        used.insert(a.clone());
        used.insert(b.clone());
        out.push(format!("{a} {b}"));
    }
    out
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut ds = Dataset::default();
    let mut seen: HashSet<String> = HashSet::new();

    for (label, marker) in markers(spec).into_iter().enumerate() {
        ds.classes.push(ClassInfo { surface: marker.clone(), original_label: label as i64 });
        // the conditional frame carries an inflected form of the idiom
        let inflected = format!("{marker}ەوە");
        let mut combos: Vec<usize> = (0..CONTEXT_CAPACITY).collect();
        combos.shuffle(&mut rng::stream(spec.seed, &[1, label as u64]));
        let mut made = 0;
        for combo in combos {
            if made == spec.contexts_per_idiom {
                break;
            }
            let (subject, time, place) = context(combo);
            let sentences: Vec<String> = (0..spec.variants_per_context)
                .map(|v| {
                    let phrase = if v == 2 { &inflected } else { &marker };
                    render(v, subject, time, place, phrase)
                })
                .collect();
            if sentences.iter().any(|s| seen.contains(s)) {
                continue;
            }
            for text in sentences {
                seen.insert(text.clone());
                ds.examples.push(Example { label, text, idiom_surface: marker.clone() });
            }
            made += 1;
        }
    }

    if spec.non_idiom_count > 0 {
        let label = ds.classes.len();
        ds.classes.push(ClassInfo { surface: String::new(), original_label: label as i64 });
        let mut rng = rng::stream(spec.seed, &[2]);
        let mut slots: Vec<usize> = (0..CONTEXT_CAPACITY * TEMPLATES).collect();
        slots.shuffle(&mut rng);
        let mut made = 0;
        for slot in slots {
            if made == spec.non_idiom_count {
                break;
            }
            let (subject, time, place) = context(slot / TEMPLATES);
            let phrase = NEUTRAL.choose(&mut rng).expect("non-empty");
            let text = render(slot % TEMPLATES, subject, time, place, phrase);
            if !seen.insert(text.clone()) {
                continue;
            }
            ds.examples.push(Example { label, text, idiom_surface: String::new() });
            made += 1;
        }
    }

    if ds.len() != spec.expected_len() {
        return Err(Error::Config(format!(
            "could only build {} distinct sentences of {} requested",
            ds.len(),
            spec.expected_len()
        )));
    }
    Ok(ds)
}
