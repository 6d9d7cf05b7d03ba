//! Persona profiles and the five prompting conditions.
//!
//! A [`PersonaProfile`] assigns a [`TraitLevel`] to each Big Five trait. The
//! prompt text for each [`PromptStrategy`] is rendered from template files
//! shipped under `data/templates/`; a directory with the same file names can
//! be loaded instead with [`PromptTemplates::load_dir`].

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PersonaError {
    #[error("strategy {0} requires a persona profile")]
    ProfileMissing(PromptStrategy),
    #[error("strategy {0} does not take a persona profile")]
    ProfileUnexpected(PromptStrategy),
    #[error("unknown trait name: {0:?}")]
    UnknownTrait(String),
    #[error("unknown trait level: {0:?}")]
    UnknownLevel(String),
    #[error("unknown prompt strategy: {0:?}")]
    UnknownStrategy(String),
    #[error("invalid profile code {0:?} (expected five of H/M/L)")]
    BadProfileCode(String),
    #[error("template error: {0}")]
    Template(String),
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// One of the Big Five traits. The declaration order is the canonical order
/// (E, A, C, N, O) used for arrays, tables and rendered text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraitName {
    Extraversion,
    Agreeableness,
    Conscientiousness,
    Neuroticism,
    Openness,
}

impl TraitName {
    pub const ALL: [TraitName; 5] = [
        TraitName::Extraversion,
        TraitName::Agreeableness,
        TraitName::Conscientiousness,
        TraitName::Neuroticism,
        TraitName::Openness,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Lowercase name, as used in prompts and file formats.
    pub fn as_str(self) -> &'static str {
        match self {
            TraitName::Extraversion => "extraversion",
            TraitName::Agreeableness => "agreeableness",
            TraitName::Conscientiousness => "conscientiousness",
            TraitName::Neuroticism => "neuroticism",
            TraitName::Openness => "openness",
        }
    }

    /// Capitalized name for table headers.
    pub fn label(self) -> &'static str {
        match self {
            TraitName::Extraversion => "Extraversion",
            TraitName::Agreeableness => "Agreeableness",
            TraitName::Conscientiousness => "Conscientiousness",
            TraitName::Neuroticism => "Neuroticism",
            TraitName::Openness => "Openness",
        }
    }

    pub fn letter(self) -> char {
        match self {
            TraitName::Extraversion => 'E',
            TraitName::Agreeableness => 'A',
            TraitName::Conscientiousness => 'C',
            TraitName::Neuroticism => 'N',
            TraitName::Openness => 'O',
        }
    }
}

impl fmt::Display for TraitName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TraitName {
    type Err = PersonaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        TraitName::ALL
            .into_iter()
            .find(|t| t.as_str() == lower || lower.len() == 1 && t.letter().to_ascii_lowercase().to_string() == lower)
            .ok_or_else(|| PersonaError::UnknownTrait(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraitLevel {
    Low,
    Medium,
    High,
}

impl TraitLevel {
    /// Target score on the 1..5 Likert scale.
    pub fn anchor(self) -> u8 {
        match self {
            TraitLevel::Low => 1,
            TraitLevel::Medium => 3,
            TraitLevel::High => 5,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TraitLevel::Low => "low",
            TraitLevel::Medium => "medium",
            TraitLevel::High => "high",
        }
    }

    /// Short label used in descriptive tables.
    pub fn label(self) -> &'static str {
        match self {
            TraitLevel::Low => "Low",
            TraitLevel::Medium => "Med",
            TraitLevel::High => "High",
        }
    }

    pub fn code(self) -> char {
        match self {
            TraitLevel::Low => 'L',
            TraitLevel::Medium => 'M',
            TraitLevel::High => 'H',
        }
    }

    fn from_code(c: char) -> Option<Self> {
        match c.to_ascii_uppercase() {
            'L' => Some(TraitLevel::Low),
            'M' => Some(TraitLevel::Medium),
            'H' => Some(TraitLevel::High),
            _ => None,
        }
    }
}

impl fmt::Display for TraitLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TraitLevel {
    type Err = PersonaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "low" => Ok(TraitLevel::Low),
            "medium" | "med" => Ok(TraitLevel::Medium),
            "high" => Ok(TraitLevel::High),
            _ => Err(PersonaError::UnknownLevel(s.to_string())),
        }
    }
}

/// A level for every trait. Serialized as a five-letter code in canonical
/// trait order, e.g. `"HLHLH"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PersonaProfile {
    levels: [TraitLevel; 5],
}

impl PersonaProfile {
    pub fn new(levels: [TraitLevel; 5]) -> Self {
        Self { levels }
    }

    pub fn uniform(level: TraitLevel) -> Self {
        Self { levels: [level; 5] }
    }

    pub fn level(&self, trait_name: TraitName) -> TraitLevel {
        self.levels[trait_name.index()]
    }

    pub fn with(mut self, trait_name: TraitName, level: TraitLevel) -> Self {
        self.levels[trait_name.index()] = level;
        self
    }

    pub fn levels(&self) -> [TraitLevel; 5] {
        self.levels
    }

    pub fn code(&self) -> String {
        self.levels.iter().map(|l| l.code()).collect()
    }

    /// The single trait set to High while all others are Medium, if this is
    /// such a profile.
    pub fn single_high_trait(&self) -> Option<TraitName> {
        let highs: Vec<TraitName> = TraitName::ALL
            .into_iter()
            .filter(|t| self.level(*t) == TraitLevel::High)
            .collect();
        let rest_medium = TraitName::ALL
            .into_iter()
            .filter(|t| self.level(*t) != TraitLevel::High)
            .all(|t| self.level(t) == TraitLevel::Medium);
        match highs.as_slice() {
            [one] if rest_medium => Some(*one),
            _ => None,
        }
    }

    /// "high extraversion, low agreeableness, ..." in canonical order.
    pub fn trait_line(&self) -> String {
        TraitName::ALL
            .iter()
            .map(|t| format!("{} {}", self.level(*t).as_str(), t.as_str()))
            .collect::<Vec<_>>()
            .join(", ")
    }
}

impl fmt::Display for PersonaProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.code())
    }
}

impl FromStr for PersonaProfile {
    type Err = PersonaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let chars: Vec<char> = s.trim().chars().collect();
        if chars.len() != 5 {
            return Err(PersonaError::BadProfileCode(s.to_string()));
        }
        let mut levels = [TraitLevel::Medium; 5];
        for (slot, c) in levels.iter_mut().zip(chars) {
            *slot = TraitLevel::from_code(c).ok_or_else(|| PersonaError::BadProfileCode(s.to_string()))?;
        }
        Ok(Self { levels })
    }
}

impl Serialize for PersonaProfile {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.code())
    }
}

impl<'de> Deserialize<'de> for PersonaProfile {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// All 32 High/Low assignments. Profile `i` is the 5-bit integer `i` with
/// Extraversion as the most significant bit (1 = High).
pub fn enumerate_binary_profiles() -> Vec<PersonaProfile> {
    (0u8..32)
        .map(|mask| {
            let mut levels = [TraitLevel::Low; 5];
            for (i, level) in levels.iter_mut().enumerate() {
                if mask & (1 << (4 - i)) != 0 {
                    *level = TraitLevel::High;
                }
            }
            PersonaProfile::new(levels)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpecialProfiles {
    pub all_medium: PersonaProfile,
    /// One profile per trait, in canonical order: that trait High, the rest Medium.
    pub single_high: Vec<PersonaProfile>,
}

pub fn special_profiles() -> SpecialProfiles {
    let all_medium = PersonaProfile::uniform(TraitLevel::Medium);
    let single_high = TraitName::ALL
        .into_iter()
        .map(|t| all_medium.with(t, TraitLevel::High))
        .collect();
    SpecialProfiles { all_medium, single_high }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptStrategy {
    ZeroShot,
    Definition,
    DefinitionFacets,
    NoPrompt,
    TeamContext,
}

impl PromptStrategy {
    pub const ALL: [PromptStrategy; 5] = [
        PromptStrategy::ZeroShot,
        PromptStrategy::Definition,
        PromptStrategy::DefinitionFacets,
        PromptStrategy::NoPrompt,
        PromptStrategy::TeamContext,
    ];

    /// The three strategies that carry a persona.
    pub const PERSONA: [PromptStrategy; 3] = [
        PromptStrategy::ZeroShot,
        PromptStrategy::Definition,
        PromptStrategy::DefinitionFacets,
    ];

    pub fn requires_profile(self) -> bool {
        matches!(
            self,
            PromptStrategy::ZeroShot | PromptStrategy::Definition | PromptStrategy::DefinitionFacets
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PromptStrategy::ZeroShot => "zero_shot",
            PromptStrategy::Definition => "definition",
            PromptStrategy::DefinitionFacets => "definition_facets",
            PromptStrategy::NoPrompt => "no_prompt",
            PromptStrategy::TeamContext => "team_context",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            PromptStrategy::ZeroShot => "Zero-shot",
            PromptStrategy::Definition => "Definition",
            PromptStrategy::DefinitionFacets => "Definition + Facet",
            PromptStrategy::NoPrompt => "No Prompt",
            PromptStrategy::TeamContext => "Team Context",
        }
    }
}

impl fmt::Display for PromptStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PromptStrategy {
    type Err = PersonaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        PromptStrategy::ALL
            .into_iter()
            .find(|p| p.as_str() == norm)
            .ok_or_else(|| PersonaError::UnknownStrategy(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub system_text: String,
    pub strategy: PromptStrategy,
    pub profile: Option<PersonaProfile>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct TraitEntry {
    name: TraitName,
    definition: String,
    #[allow(dead_code)]
    reconstructed: bool,
    facets: Vec<(String, String)>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct TraitCatalogFile {
    definition_order: Vec<TraitName>,
    facet_order: Vec<TraitName>,
    #[serde(rename = "trait")]
    traits: Vec<TraitEntry>,
}

/// Prompt templates plus the trait definition/facet catalog.
#[derive(Debug, Clone)]
pub struct PromptTemplates {
    team_context: String,
    zero_shot: String,
    definition: String,
    definition_facets: String,
    definitions_block: String,
    facets_block: String,
}

const TEAM_CONTEXT: &str = include_str!("../data/templates/team_context.txt");
const ZERO_SHOT: &str = include_str!("../data/templates/zero_shot.txt");
const DEFINITION: &str = include_str!("../data/templates/definition.txt");
const DEFINITION_FACETS: &str = include_str!("../data/templates/definition_facets.txt");
const TRAITS: &str = include_str!("../data/templates/traits.toml");

impl PromptTemplates {
    /// Templates compiled into the binary.
    pub fn builtin() -> &'static PromptTemplates {
        static BUILTIN: OnceLock<PromptTemplates> = OnceLock::new();
        BUILTIN.get_or_init(|| {
            PromptTemplates::from_parts(TEAM_CONTEXT, ZERO_SHOT, DEFINITION, DEFINITION_FACETS, TRAITS)
                .expect("builtin templates are valid")
        })
    }

    /// Loads `team_context.txt`, `zero_shot.txt`, `definition.txt`,
    /// `definition_facets.txt` and `traits.toml` from `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, PersonaError> {
        let read = |name: &str| {
            let path = dir.join(name);
            std::fs::read_to_string(&path).map_err(|source| PersonaError::Io {
                path: path.display().to_string(),
                source,
            })
        };
        Self::from_parts(
            &read("team_context.txt")?,
            &read("zero_shot.txt")?,
            &read("definition.txt")?,
            &read("definition_facets.txt")?,
            &read("traits.toml")?,
        )
    }

    pub fn from_parts(
        team_context: &str,
        zero_shot: &str,
        definition: &str,
        definition_facets: &str,
        traits_toml: &str,
    ) -> Result<Self, PersonaError> {
        let catalog: TraitCatalogFile =
            toml::from_str(traits_toml).map_err(|e| PersonaError::Template(format!("traits.toml: {e}")))?;
        let lookup = |t: TraitName| {
            catalog
                .traits
                .iter()
                .find(|e| e.name == t)
                .ok_or_else(|| PersonaError::Template(format!("traits.toml has no entry for {t}")))
        };
        for order in [&catalog.definition_order, &catalog.facet_order] {
            let mut sorted = order.clone();
            sorted.sort();
            if sorted != TraitName::ALL {
                return Err(PersonaError::Template("trait order lists must name each trait once".into()));
            }
        }

        let mut definitions = Vec::new();
        for t in &catalog.definition_order {
            definitions.push(format!("{}: {}", t.label(), lookup(*t)?.definition));
        }
        let mut facets = Vec::new();
        for t in &catalog.facet_order {
            let entry = lookup(*t)?;
            if entry.facets.len() != 6 {
                return Err(PersonaError::Template(format!("{t} must list six facets")));
            }
            let mut block = format!("{}: {}\n\nFacets:", t.label(), entry.definition);
            for (name, gloss) in &entry.facets {
                block.push_str(&format!("\n- {name} -- {gloss}"));
            }
            facets.push(block);
        }

        let templates = Self {
            team_context: clean(team_context),
            zero_shot: clean(zero_shot),
            definition: clean(definition),
            definition_facets: clean(definition_facets),
            definitions_block: definitions.join("\n\n"),
            facets_block: facets.join("\n\n"),
        };
        for (name, text) in [
            ("zero_shot", &templates.zero_shot),
            ("definition", &templates.definition),
            ("definition_facets", &templates.definition_facets),
        ] {
            if !text.contains("{trait_line}") {
                return Err(PersonaError::Template(format!("{name} template lacks {{trait_line}}")));
            }
        }
        Ok(templates)
    }

    pub fn render(
        &self,
        profile: Option<&PersonaProfile>,
        strategy: PromptStrategy,
    ) -> Result<RenderedPrompt, PersonaError> {
        let profile = match (strategy.requires_profile(), profile) {
            (true, None) => return Err(PersonaError::ProfileMissing(strategy)),
            (false, Some(_)) => return Err(PersonaError::ProfileUnexpected(strategy)),
            (_, p) => p.copied(),
        };
        let fill = |template: &str, p: &PersonaProfile| {
            template
                .replace("{trait_line}", &p.trait_line())
                .replace("{definitions}", &self.definitions_block)
                .replace("{facets}", &self.facets_block)
        };
        let system_text = match (strategy, profile.as_ref()) {
            (PromptStrategy::NoPrompt, _) => String::new(),
            (PromptStrategy::TeamContext, _) => self.team_context.clone(),
            (PromptStrategy::ZeroShot, Some(p)) => fill(&self.zero_shot, p),
            (PromptStrategy::Definition, Some(p)) => fill(&self.definition, p),
            (PromptStrategy::DefinitionFacets, Some(p)) => fill(&self.definition_facets, p),
            _ => unreachable!("profile presence checked above"),
        };
        Ok(RenderedPrompt {
            system_text,
            strategy,
            profile,
        })
    }
}

/// Renders with the built-in templates.
pub fn render_prompt(
    profile: Option<&PersonaProfile>,
    strategy: PromptStrategy,
) -> Result<RenderedPrompt, PersonaError> {
    PromptTemplates::builtin().render(profile, strategy)
}

// Trailing newlines in template files are not part of the prompt.
fn clean(text: &str) -> String {
    text.replace("\r\n", "\n").trim_end().to_string()
}

const ASSIGNMENT_MARKER: &str = "You have the following personality:";

/// Recovers the persona from a rendered system message by reading its
/// assignment line. Returns `None` for prompts without one.
pub fn parse_trait_line(system_text: &str) -> Option<PersonaProfile> {
    let start = system_text.find(ASSIGNMENT_MARKER)? + ASSIGNMENT_MARKER.len();
    let rest = &system_text[start..];
    let line = rest.split(['\n', '.']).next()?;
    let mut levels: [Option<TraitLevel>; 5] = [None; 5];
    for part in line.split(',') {
        let mut words = part.split_whitespace();
        let level: TraitLevel = words.next()?.parse().ok()?;
        let trait_name: TraitName = words.next()?.parse().ok()?;
        if words.next().is_some() || levels[trait_name.index()].is_some() {
            return None;
        }
        levels[trait_name.index()] = Some(level);
    }
    let mut out = [TraitLevel::Medium; 5];
    for (slot, level) in out.iter_mut().zip(levels) {
        *slot = level?;
    }
    Some(PersonaProfile::new(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    use proptest::prelude::*;

    const APPENDIX_ZERO_SHOT: &str = "You are working in a collaborative team setting with other peers. You have the following personality: high extraversion, low agreeableness, high conscientiousness, low neuroticism, high openness.";

    fn hlhlh() -> PersonaProfile {
        "HLHLH".parse().unwrap()
    }

    #[test]
    fn thirty_two_distinct_profiles() {
        let profiles = enumerate_binary_profiles();
        assert_eq!(profiles.len(), 32);
        let unique: HashSet<_> = profiles.iter().collect();
        assert_eq!(unique.len(), 32);
        assert!(profiles.contains(&PersonaProfile::uniform(TraitLevel::High)));
        assert_eq!(profiles, enumerate_binary_profiles());
    }

    #[test]
    fn sixteen_profiles_have_high_extraversion() {
        // brute force over bitmasks, independent of the enumeration order
        let expected = (0u32..32).filter(|m| m & 0b10000 != 0).count();
        let got = enumerate_binary_profiles()
            .iter()
            .filter(|p| p.level(TraitName::Extraversion) == TraitLevel::High)
            .count();
        assert_eq!(expected, 16);
        assert_eq!(got, expected);
    }

    #[test]
    fn enumeration_is_binary_counting() {
        for (i, p) in enumerate_binary_profiles().iter().enumerate() {
            let mask = p
                .levels()
                .iter()
                .fold(0usize, |acc, l| acc << 1 | usize::from(*l == TraitLevel::High));
            assert_eq!(mask, i);
            assert!(p.levels().iter().all(|l| *l != TraitLevel::Medium));
        }
    }

    #[test]
    fn special_profiles_shape() {
        let sp = special_profiles();
        assert_eq!(sp.all_medium.levels().map(|l| l.anchor()), [3, 3, 3, 3, 3]);
        assert_eq!(sp.single_high.len(), 5);
        for (t, p) in TraitName::ALL.iter().zip(&sp.single_high) {
            assert_eq!(p.single_high_trait(), Some(*t));
        }
        assert_eq!(sp.single_high[0].code(), "HMMMM");
        assert_eq!(
            sp.single_high[0].trait_line(),
            "high extraversion, medium agreeableness, medium conscientiousness, medium neuroticism, medium openness"
        );
    }

    #[test]
    fn zero_shot_matches_appendix_example() {
        let r = render_prompt(Some(&hlhlh()), PromptStrategy::ZeroShot).unwrap();
        assert_eq!(r.system_text, APPENDIX_ZERO_SHOT);
    }

    #[test]
    fn baselines() {
        let tc = render_prompt(None, PromptStrategy::TeamContext).unwrap();
        assert_eq!(tc.system_text, "You are working in a collaborative team setting with other peers.");
        let np = render_prompt(None, PromptStrategy::NoPrompt).unwrap();
        assert!(np.system_text.is_empty());
        assert!(np.profile.is_none());
    }

    #[test]
    fn profile_presence_is_checked() {
        assert!(matches!(
            render_prompt(None, PromptStrategy::Definition),
            Err(PersonaError::ProfileMissing(PromptStrategy::Definition))
        ));
        assert!(matches!(
            render_prompt(Some(&hlhlh()), PromptStrategy::NoPrompt),
            Err(PersonaError::ProfileUnexpected(PromptStrategy::NoPrompt))
        ));
    }

    #[test]
    fn definition_prompt_layout() {
        let r = render_prompt(Some(&hlhlh()), PromptStrategy::Definition).unwrap();
        assert!(r.system_text.starts_with(APPENDIX_ZERO_SHOT));
        assert!(r.system_text.contains("\n\nHere are the definitions for these traits:\n\nNeuroticism: The tendency"));
        assert!(r
            .system_text
            .ends_with("\n\nPlease embody these personality characteristics in your responses and behavior."));
        let positions: Vec<usize> = ["Neuroticism:", "Extraversion:", "Openness:", "Agreeableness:", "Conscientiousness:"]
            .iter()
            .map(|h| r.system_text.find(h).unwrap())
            .collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn facets_prompt_has_six_facets_per_trait() {
        let r = render_prompt(Some(&hlhlh()), PromptStrategy::DefinitionFacets).unwrap();
        assert_eq!(r.system_text.matches("Facets:").count(), 5);
        assert_eq!(r.system_text.matches("\n- ").count(), 30);
        assert!(r
            .system_text
            .contains("- Warmth -- friendliness, affection, and personal connection with others."));
    }

    fn arb_profile() -> impl Strategy<Value = PersonaProfile> {
        prop::array::uniform5(prop_oneof![
            Just(TraitLevel::Low),
            Just(TraitLevel::Medium),
            Just(TraitLevel::High)
        ])
        .prop_map(PersonaProfile::new)
    }

    proptest! {
        #[test]
        fn each_trait_named_once_in_assignment(p in arb_profile(), s in 0usize..3) {
            let strategy = PromptStrategy::PERSONA[s];
            let r = render_prompt(Some(&p), strategy).unwrap();
            let line = r.system_text.lines().next().unwrap();
            for t in TraitName::ALL {
                prop_assert_eq!(line.matches(t.as_str()).count(), 1);
            }
            prop_assert_eq!(parse_trait_line(&r.system_text), Some(p));
            let again = render_prompt(Some(&p), strategy).unwrap();
            prop_assert_eq!(r, again);
        }

        #[test]
        fn profile_code_round_trips(p in arb_profile()) {
            prop_assert_eq!(p.code().parse::<PersonaProfile>().unwrap(), p);
        }
    }
}
