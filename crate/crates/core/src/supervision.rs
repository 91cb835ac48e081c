//! Ground-truth relation targets for box-style entities (detections matched
//! to annotated objects) and word-style entities (lexical categories).

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::attention::EntitySet;
use crate::error::{Error, Result};
use crate::focus_loss::TargetMatrix;
use crate::numeric::RealMatrix;

/// Axis-aligned box `(x1, y1, x2, y2)` in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl From<[f64; 4]> for BBox {
    fn from([x1, y1, x2, y2]: [f64; 4]) -> Self {
        Self { x1, y1, x2, y2 }
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x1, b.y1, b.x2, b.y2]
    }
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        let b = Self { x1, y1, x2, y2 };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = [self.x1, self.y1, self.x2, self.y2]
            .iter()
            .all(|v| v.is_finite())
            && self.x1 < self.x2
            && self.y1 < self.y2;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidBox((*self).into()))
        }
    }

    pub fn area(&self) -> f64 {
        (self.x2 - self.x1) * (self.y2 - self.y1)
    }
}

/// Intersection over union of two well-ordered boxes.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let w = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let h = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = w * h;
    if inter <= 0.0 {
        return 0.0;
    }
    inter / (a.area() + b.area() - inter)
}

/// An annotated object: a box and its category.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthObject {
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub category: usize,
}

/// IoU threshold used when callers do not choose one.
pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

/// For each entity, the index of the ground-truth object with the highest
/// IoU if that IoU exceeds `iou_threshold`. Ties go to the lowest index.
pub fn entity_gt_matching(
    entities: &EntitySet,
    gt: &[GroundTruthObject],
    iou_threshold: f64,
) -> Result<Vec<Option<usize>>> {
    let boxes = entities.boxes().ok_or(Error::MissingBoxes)?;
    Ok(boxes
        .iter()
        .map(|b| {
            let mut best: Option<(usize, f64)> = None;
            for (g, obj) in gt.iter().enumerate() {
                let v = iou(b, &obj.bbox);
                if best.is_none_or(|(_, bv)| v > bv) {
                    best = Some((g, v));
                }
            }
            best.filter(|&(_, v)| v > iou_threshold).map(|(g, _)| g)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VisionMode {
    /// Matched objects must be distinct instances of different categories.
    DifferentCategory,
    /// Matched objects must be distinct instances; categories may repeat.
    DifferentInstance,
}

/// Builds the symmetric relation target for box entities: `t[m][n] = 1`
/// when `m` and `n` match two different ground-truth objects (and, in
/// `DifferentCategory` mode, those objects have different categories).
pub fn build_vision_target(
    entities: &EntitySet,
    gt: &[GroundTruthObject],
    mode: VisionMode,
    iou_threshold: f64,
) -> Result<TargetMatrix> {
    let matches = entity_gt_matching(entities, gt, iou_threshold)?;
    let n = entities.len();
    let t = RealMatrix::from_fn(n, n, |m, k| match (matches[m], matches[k]) {
        (Some(a), Some(b)) if a != b => {
            let ok = match mode {
                VisionMode::DifferentInstance => true,
                VisionMode::DifferentCategory => gt[a].category != gt[b].category,
            };
            f64::from(u8::from(ok))
        }
        _ => 0.0,
    });
    TargetMatrix::new(t)
}

/// Lexical (part-of-speech) categories, identified by their index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LexicalCategory {
    Noun,
    Verb,
    Adjective,
    Adverb,
    Pronoun,
    Preposition,
    Conjunction,
    Determiner,
    Numeral,
    Other,
}

impl LexicalCategory {
    pub const ALL: [LexicalCategory; 10] = [
        Self::Noun,
        Self::Verb,
        Self::Adjective,
        Self::Adverb,
        Self::Pronoun,
        Self::Preposition,
        Self::Conjunction,
        Self::Determiner,
        Self::Numeral,
        Self::Other,
    ];

    pub fn from_id(id: u32) -> Result<Self> {
        Self::ALL
            .get(id as usize)
            .copied()
            .ok_or_else(|| Error::UnknownCategory(id.to_string()))
    }

    pub fn id(self) -> u32 {
        self as u32
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Noun => "noun",
            Self::Verb => "verb",
            Self::Adjective => "adjective",
            Self::Adverb => "adverb",
            Self::Pronoun => "pronoun",
            Self::Preposition => "preposition",
            Self::Conjunction => "conjunction",
            Self::Determiner => "determiner",
            Self::Numeral => "numeral",
            Self::Other => "other",
        }
    }

    /// Converts raw annotation ids, failing on the first unknown one.
    pub fn parse_ids(ids: &[u32]) -> Result<Vec<Self>> {
        ids.iter().map(|&id| Self::from_id(id)).collect()
    }
}

impl fmt::Display for LexicalCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LexicalCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownCategory(s.to_string()))
    }
}

/// Unordered lexical-category pairs that count as semantically valid.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LexicalPairTable {
    pairs: BTreeSet<(LexicalCategory, LexicalCategory)>,
}

fn ordered(a: LexicalCategory, b: LexicalCategory) -> (LexicalCategory, LexicalCategory) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl LexicalPairTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// noun-noun, verb-noun, noun-adjective, adverb-verb, adverb-adjective.
    pub fn standard() -> Self {
        use LexicalCategory::*;
        [
            (Noun, Noun),
            (Verb, Noun),
            (Noun, Adjective),
            (Adverb, Verb),
            (Adverb, Adjective),
        ]
        .into_iter()
        .collect()
    }

    pub fn insert(&mut self, a: LexicalCategory, b: LexicalCategory) {
        self.pairs.insert(ordered(a, b));
    }

    pub fn contains(&self, a: LexicalCategory, b: LexicalCategory) -> bool {
        self.pairs.contains(&ordered(a, b))
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (LexicalCategory, LexicalCategory)> + '_ {
        self.pairs.iter().copied()
    }

    /// Parses the plain-text format: one `catA catB` pair per line, `#`
    /// starts a comment, blank lines are ignored.
    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let mut table = Self::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                source_name: source_name.to_string(),
                line: idx + 1,
                message,
            };
            let words: Vec<&str> = line.split_whitespace().collect();
            if words.len() != 2 {
                return Err(parse_err(format!(
                    "expected two categories, found {}",
                    words.len()
                )));
            }
            let a = words[0].parse().map_err(|e: Error| parse_err(e.to_string()))?;
            let b = words[1].parse().map_err(|e: Error| parse_err(e.to_string()))?;
            table.insert(a, b);
        }
        Ok(table)
    }

    pub fn to_text(&self) -> String {
        self.iter().map(|(a, b)| format!("{a} {b}\n")).collect()
    }
}

impl FromIterator<(LexicalCategory, LexicalCategory)> for LexicalPairTable {
    fn from_iter<I: IntoIterator<Item = (LexicalCategory, LexicalCategory)>>(iter: I) -> Self {
        let mut t = Self::new();
        for (a, b) in iter {
            t.insert(a, b);
        }
        t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LanguageMode {
    /// The category pair appears in the pair table.
    Semantic,
    DifferentCategory,
    SameCategory,
    /// The two tokens are different words.
    DifferentWord,
}

/// Builds the symmetric relation target for a tagged token sequence.
/// `tokens` is required for `DifferentWord`.
pub fn build_language_target(
    tags: &[LexicalCategory],
    tokens: Option<&[u32]>,
    table: &LexicalPairTable,
    mode: LanguageMode,
) -> Result<TargetMatrix> {
    let n = tags.len();
    if n == 0 {
        return Err(Error::InvalidArgument {
            arg: "tags",
            reason: "empty tag sequence".into(),
        });
    }
    let tokens = match (mode, tokens) {
        (LanguageMode::DifferentWord, None) => {
            return Err(Error::InvalidArgument {
                arg: "tokens",
                reason: "different_word supervision needs token identities".into(),
            })
        }
        (_, Some(t)) if t.len() != n => {
            return Err(Error::InvalidArgument {
                arg: "tokens",
                reason: format!("expected {n} tokens, got {}", t.len()),
            })
        }
        (_, t) => t,
    };
    let t = RealMatrix::from_fn(n, n, |m, k| {
        if m == k {
            return 0.0;
        }
        let related = match mode {
            LanguageMode::Semantic => table.contains(tags[m], tags[k]),
            LanguageMode::DifferentCategory => tags[m] != tags[k],
            LanguageMode::SameCategory => tags[m] == tags[k],
            LanguageMode::DifferentWord => tokens.is_some_and(|t| t[m] != t[k]),
        };
        f64::from(u8::from(related))
    });
    TargetMatrix::new(t)
}
