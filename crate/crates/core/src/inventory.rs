//! BFI-44 instrument: item key, survey rendering, response parsing and scoring.

use std::fmt;
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::persona::{PersonaProfile, TraitName};

pub const ITEM_COUNT: usize = 44;

#[derive(Debug, Error)]
pub enum InventoryError {
    #[error("key file not found: {0}")]
    KeyFileMissing(String),
    #[error("key file line {line}: {message}")]
    KeyFormat { line: usize, message: String },
    #[error("response value {0} outside 1..=5")]
    Range(u8),
    #[error("expected {ITEM_COUNT} responses, got {0}")]
    Length(usize),
}

/// Malformed numeric output: some valid tokens, but not exactly 44. A
/// completely empty reply also lands here with `found = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("expected {ITEM_COUNT} numeric answers, found {found}")]
pub struct ParseError {
    pub found: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Item {
    pub index: u8,
    pub text: String,
    #[serde(rename = "trait")]
    pub trait_name: TraitName,
    pub reverse_keyed: bool,
}

/// 44 Likert answers in item order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<u8>", into = "Vec<u8>")]
pub struct ResponseVector(Vec<u8>);

impl ResponseVector {
    pub fn new(values: Vec<u8>) -> Result<Self, InventoryError> {
        if values.len() != ITEM_COUNT {
            return Err(InventoryError::Length(values.len()));
        }
        if let Some(bad) = values.iter().find(|v| !(1..=5).contains(*v)) {
            return Err(InventoryError::Range(*bad));
        }
        Ok(Self(values))
    }

    pub fn uniform(value: u8) -> Result<Self, InventoryError> {
        Self::new(vec![value; ITEM_COUNT])
    }

    pub fn values(&self) -> &[u8] {
        &self.0
    }

    pub fn to_comma_list(&self) -> String {
        self.0.iter().map(u8::to_string).collect::<Vec<_>>().join(",")
    }
}

impl TryFrom<Vec<u8>> for ResponseVector {
    type Error = InventoryError;
    fn try_from(v: Vec<u8>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<ResponseVector> for Vec<u8> {
    fn from(v: ResponseVector) -> Self {
        v.0
    }
}

/// Per-trait scores in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TraitScores([f64; 5]);

impl TraitScores {
    pub fn new(values: [f64; 5]) -> Self {
        Self(values)
    }

    pub fn get(&self, t: TraitName) -> f64 {
        self.0[t.index()]
    }

    pub fn values(&self) -> [f64; 5] {
        self.0
    }
}

impl Serialize for TraitScores {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = serializer.serialize_map(Some(5))?;
        for t in TraitName::ALL {
            map.serialize_entry(t.as_str(), &self.get(t))?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for TraitScores {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let map = std::collections::BTreeMap::<TraitName, f64>::deserialize(deserializer)?;
        let mut out = [0.0; 5];
        for t in TraitName::ALL {
            out[t.index()] = *map
                .get(&t)
                .ok_or_else(|| serde::de::Error::custom(format!("missing trait {t}")))?;
        }
        Ok(Self(out))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Refusal {
    pub raw_text: String,
    /// The first labeling pattern found in the text, or empty if none matched.
    pub matched_pattern: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SurveyReply {
    Answered(ResponseVector),
    Refused(Refusal),
}

/// Phrases used only to label refusals. Detection itself is "no numeric
/// answers at all".
pub const REFUSAL_PATTERNS: &[&str] = &[
    "i cannot",
    "i can't",
    "i can not",
    "as an ai",
    "i am not able",
    "i'm not able",
    "i don't have personal",
    "i do not have personal",
    "i'm unable",
    "i am unable",
];

/// Scans for standalone integers 1..=5. A token is a maximal run of ASCII
/// digits; longer runs and out-of-range values are skipped.
pub fn parse_numeric_response(text: &str) -> Result<SurveyReply, ParseError> {
    let mut values = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i].is_ascii_digit() {
            let start = i;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            if i - start == 1 {
                let v = bytes[start] - b'0';
                if (1..=5).contains(&v) {
                    values.push(v);
                }
            }
        } else {
            i += 1;
        }
    }
    match values.len() {
        ITEM_COUNT => Ok(SurveyReply::Answered(ResponseVector(values))),
        0 if !text.trim().is_empty() => {
            let lower = text.to_lowercase();
            let matched_pattern = REFUSAL_PATTERNS
                .iter()
                .find(|p| lower.contains(*p))
                .map(|p| p.to_string())
                .unwrap_or_default();
            Ok(SurveyReply::Refused(Refusal {
                raw_text: text.to_string(),
                matched_pattern,
            }))
        }
        found => Err(ParseError { found }),
    }
}

/// The keyed instrument.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Inventory {
    items: Vec<Item>,
}

const BFI44_KEY: &str = include_str!("../data/bfi44.key");

impl Inventory {
    /// The standard BFI-44 key compiled into the binary.
    pub fn bfi44() -> &'static Inventory {
        static BFI: OnceLock<Inventory> = OnceLock::new();
        BFI.get_or_init(|| Inventory::from_key_str(BFI44_KEY).expect("builtin key file is valid"))
    }

    pub fn load(path: &Path) -> Result<Self, InventoryError> {
        let text = std::fs::read_to_string(path).map_err(|_| InventoryError::KeyFileMissing(path.display().to_string()))?;
        Self::from_key_str(&text)
    }

    /// Parses the tab-separated key format: `index<TAB>trait<TAB>R-flag<TAB>text`.
    /// Blank lines and `#` comments are ignored.
    pub fn from_key_str(text: &str) -> Result<Self, InventoryError> {
        let mut items = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line_no = n + 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: &str| InventoryError::KeyFormat {
                line: line_no,
                message: message.to_string(),
            };
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 4 {
                return Err(err("expected 4 tab-separated columns"));
            }
            let index: u8 = cols[0].trim().parse().map_err(|_| err("bad item index"))?;
            let trait_name: TraitName = cols[1].parse().map_err(|_| err("bad trait"))?;
            let reverse_keyed = match cols[2].trim() {
                "R" | "r" => true,
                "" => false,
                _ => return Err(err("reverse flag must be R or empty")),
            };
            items.push(Item {
                index,
                text: cols[3].trim().to_string(),
                trait_name,
                reverse_keyed,
            });
        }
        items.sort_by_key(|i| i.index);
        let indices: Vec<u8> = items.iter().map(|i| i.index).collect();
        let expected: Vec<u8> = (1..=ITEM_COUNT as u8).collect();
        if indices != expected {
            return Err(InventoryError::KeyFormat {
                line: 0,
                message: format!("item indices must cover 1..={ITEM_COUNT} exactly once"),
            });
        }
        if let Some(t) = TraitName::ALL.into_iter().find(|t| !items.iter().any(|i| i.trait_name == *t)) {
            return Err(InventoryError::KeyFormat {
                line: 0,
                message: format!("no items keyed to {t}"),
            });
        }
        Ok(Self { items })
    }

    pub fn items(&self) -> &[Item] {
        &self.items
    }

    pub fn items_for(&self, t: TraitName) -> impl Iterator<Item = &Item> {
        self.items.iter().filter(move |i| i.trait_name == t)
    }

    /// (forward-keyed, reverse-keyed) item counts for a trait.
    pub fn key_counts(&self, t: TraitName) -> (usize, usize) {
        let reverse = self.items_for(t).filter(|i| i.reverse_keyed).count();
        (self.items_for(t).count() - reverse, reverse)
    }

    pub fn score(&self, responses: &ResponseVector) -> TraitScores {
        let mut sums = [0u32; 5];
        let mut counts = [0u32; 5];
        for (item, raw) in self.items.iter().zip(responses.values()) {
            let k = item.trait_name.index();
            sums[k] += u32::from(recode(item, *raw).expect("ResponseVector values are in range"));
            counts[k] += 1;
        }
        let mut out = [0.0; 5];
        for k in 0..5 {
            out[k] = f64::from(sums[k]) / f64::from(counts[k]);
        }
        TraitScores(out)
    }

    /// The answers that score exactly to `target` anchors: the anchor on
    /// forward items and its mirror on reverse items.
    pub fn anchor_responses(&self, profile: &PersonaProfile) -> ResponseVector {
        let values = self
            .items
            .iter()
            .map(|item| {
                let anchor = profile.level(item.trait_name).anchor();
                if item.reverse_keyed {
                    6 - anchor
                } else {
                    anchor
                }
            })
            .collect();
        ResponseVector(values)
    }

    /// User message for one administration.
    pub fn render_survey(&self) -> String {
        let mut out = String::from(
            "Please rate how well each of the following statements describes you, using this scale:\n\
             1 = Disagree strongly, 2 = Disagree a little, 3 = Neither agree nor disagree, \
             4 = Agree a little, 5 = Agree strongly.\n\nI see myself as someone who...\n",
        );
        for item in &self.items {
            out.push_str(&format!("{}. {}\n", item.index, item.text));
        }
        out.push_str(
            "\nRespond with only numeric answers (1-5), formatted as a comma-separated list of 44 values, \
             in item order. Do not include any other text.",
        );
        out
    }
}

/// Reverse-keyed answers become `6 - raw`.
pub fn recode(item: &Item, raw: u8) -> Result<u8, InventoryError> {
    if !(1..=5).contains(&raw) {
        return Err(InventoryError::Range(raw));
    }
    Ok(if item.reverse_keyed { 6 - raw } else { raw })
}

pub fn target_scores(profile: &PersonaProfile) -> TraitScores {
    TraitScores(profile.levels().map(|l| f64::from(l.anchor())))
}

impl fmt::Display for TraitScores {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = TraitName::ALL
            .iter()
            .map(|t| format!("{}={:.3}", t.letter(), self.get(*t)))
            .collect();
        f.write_str(&parts.join(" "))
    }
}
