//! Structured scene representations (objects, relation triples, scene labels)
//! and their set-F1 comparison.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::sets::{set_prf, Prf};

/// Fixed spatial / part-whole predicate vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predicate {
    On,
    Over,
    Under,
    Inside,
    Covering,
    HangingOver,
    Enclosing,
    NextTo,
    PartOf,
}

impl Predicate {
    pub const ALL: [Predicate; 9] = [
        Predicate::On,
        Predicate::Over,
        Predicate::Under,
        Predicate::Inside,
        Predicate::Covering,
        Predicate::HangingOver,
        Predicate::Enclosing,
        Predicate::NextTo,
        Predicate::PartOf,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Predicate::On => "on",
            Predicate::Over => "over",
            Predicate::Under => "under",
            Predicate::Inside => "inside",
            Predicate::Covering => "covering",
            Predicate::HangingOver => "hanging_over",
            Predicate::Enclosing => "enclosing",
            Predicate::NextTo => "next_to",
            Predicate::PartOf => "part_of",
        }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Predicate {
    type Err = Error;

    /// Accepts `next_to`, `next to`, `Next-To` and similar spellings.
    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .trim()
            .to_lowercase()
            .split(|c: char| c.is_whitespace() || c == '-' || c == '_')
            .filter(|p| !p.is_empty())
            .collect::<Vec<_>>()
            .join("_");
        Predicate::ALL
            .into_iter()
            .find(|p| p.as_str() == key)
            .ok_or_else(|| Error::InvalidPredicate(s.to_owned()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Relation {
    pub subject: String,
    pub predicate: Predicate,
    pub object: String,
}

impl Relation {
    pub fn new(subject: &str, predicate: Predicate, object: &str) -> Self {
        Self {
            subject: lemmatize_phrase(subject),
            predicate,
            object: lemmatize_phrase(object),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneLabel {
    pub label: String,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StructuredScene {
    pub objects: BTreeSet<String>,
    pub relations: BTreeSet<Relation>,
    pub scenes: Vec<SceneLabel>,
}

impl StructuredScene {
    /// Builds a scene, lemmatizing names and clamping confidences to [0, 1].
    pub fn new(
        objects: impl IntoIterator<Item = impl AsRef<str>>,
        relations: impl IntoIterator<Item = Relation>,
        scenes: impl IntoIterator<Item = (String, f64)>,
    ) -> Self {
        let mut seen = BTreeSet::new();
        let scenes = scenes
            .into_iter()
            .filter_map(|(label, c)| {
                let label = lemmatize_phrase(&label);
                let confidence = if c.is_nan() { 0.0 } else { c.clamp(0.0, 1.0) };
                (!label.is_empty() && seen.insert(label.clone())).then_some(SceneLabel { label, confidence })
            })
            .collect();
        Self {
            objects: objects
                .into_iter()
                .map(|o| lemmatize_phrase(o.as_ref()))
                .filter(|o| !o.is_empty())
                .collect(),
            relations: relations.into_iter().collect(),
            scenes,
        }
    }

    pub fn scene_labels(&self) -> BTreeSet<String> {
        self.scenes.iter().map(|s| s.label.clone()).collect()
    }

    /// Checks names are lemmatized and confidences lie in [0, 1].
    pub fn validate(&self) -> Result<()> {
        let bad = |s: &str| lemmatize_phrase(s) != s;
        if let Some(o) = self.objects.iter().find(|o| bad(o)) {
            return Err(Error::InvalidArgument(format!("object {o:?} is not a lowercase lemma")));
        }
        for r in &self.relations {
            if bad(&r.subject) || bad(&r.object) {
                return Err(Error::InvalidArgument(format!("relation {r:?} has non-lemma arguments")));
            }
        }
        for s in &self.scenes {
            if !(0.0..=1.0).contains(&s.confidence) {
                return Err(Error::InvalidArgument(format!("scene {:?} confidence out of range", s.label)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructuredF1 {
    pub objects: Prf,
    pub triple: Prf,
    pub pair: Prf,
    pub predicate: Prf,
    pub scene: Prf,
}

/// Set-level precision/recall/F1 of `predicted` against `reference`.
/// Two empty sets count as perfect agreement.
pub fn structured_f1(predicted: &StructuredScene, reference: &StructuredScene) -> Result<StructuredF1> {
    predicted.validate()?;
    reference.validate()?;
    let pairs = |s: &StructuredScene| -> BTreeSet<(String, String)> {
        s.relations.iter().map(|r| (r.subject.clone(), r.object.clone())).collect()
    };
    let preds = |s: &StructuredScene| -> BTreeSet<Predicate> { s.relations.iter().map(|r| r.predicate).collect() };
    Ok(StructuredF1 {
        objects: set_prf(&reference.objects, &predicted.objects),
        triple: set_prf(&reference.relations, &predicted.relations),
        pair: set_prf(&pairs(reference), &pairs(predicted)),
        predicate: set_prf(&preds(reference), &preds(predicted)),
        scene: set_prf(&reference.scene_labels(), &predicted.scene_labels()),
    })
}

const IRREGULAR: &[(&str, &str)] = &[
    ("people", "person"),
    ("men", "man"),
    ("women", "woman"),
    ("children", "child"),
    ("mice", "mouse"),
    ("feet", "foot"),
    ("teeth", "tooth"),
    ("geese", "goose"),
    ("shelves", "shelf"),
    ("knives", "knife"),
    ("leaves", "leaf"),
    ("loaves", "loaf"),
    ("wolves", "wolf"),
    ("halves", "half"),
    ("calves", "calf"),
    ("ties", "tie"),
    ("movies", "movie"),
    ("cookies", "cookie"),
    ("pies", "pie"),
    ("scarves", "scarf"),
];

const INVARIANT: &[&str] = &["glasses", "pants", "scissors", "series", "species", "news", "sheep", "fish", "bus", "gas", "lens"];

/// Rule-based singularization of an English noun.
pub fn lemmatize_noun(word: &str) -> String {
    if let Some((_, lemma)) = IRREGULAR.iter().find(|(w, _)| *w == word) {
        return (*lemma).to_owned();
    }
    if INVARIANT.contains(&word) || word.len() <= 3 {
        return word.to_owned();
    }
    if let Some(stem) = word.strip_suffix("ies") {
        return format!("{stem}y");
    }
    for suffix in ["sses", "shes", "ches", "xes", "zzes"] {
        if word.ends_with(suffix) {
            return word[..word.len() - 2].to_owned();
        }
    }
    if word.ends_with("ss") || word.ends_with("us") || word.ends_with("is") {
        return word.to_owned();
    }
    word.strip_suffix('s').unwrap_or(word).to_owned()
}

/// Lowercases, turns `_`/`-` into spaces, collapses whitespace and
/// singularizes the head (last) word.
pub fn lemmatize_phrase(phrase: &str) -> String {
    let lower = phrase.to_lowercase().replace(['_', '-'], " ");
    let mut words: Vec<&str> = lower.split_whitespace().collect();
    let Some(last) = words.pop() else {
        return String::new();
    };
    let head = lemmatize_noun(last);
    words.push(&head);
    words.join(" ")
}
