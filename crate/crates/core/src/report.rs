//! Analysis of assessment and simulation outputs, rendered as fixed-schema
//! tables in Markdown and CSV.
//!
//! Tables are numbered 2 through 8 and written to `tables/table{n}.{md,csv}`.
//! Both renderings are produced from the same cell strings.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::gateway::ProviderId;
use crate::lexicon::{self, CategoryLexicon, CategoryScores, Contrast};
use crate::persona::{PersonaProfile, PromptStrategy, TraitLevel, TraitName};
use crate::runner::TrialRecord;
use crate::simulator::{participation_stats, word_count, ParticipationRow, SimulationResult};
use crate::stats::{self, Df, PosthocRow, SampleSummary, TestResult, TwoWayAnova};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableKind {
    Descriptives,
    Controllability,
    Responsiveness,
    PromptTypes,
    BaselineProfiles,
    Participation,
    MarkerContrast,
}

impl TableKind {
    pub const ALL: [TableKind; 7] = [
        TableKind::Descriptives,
        TableKind::Controllability,
        TableKind::Responsiveness,
        TableKind::PromptTypes,
        TableKind::BaselineProfiles,
        TableKind::Participation,
        TableKind::MarkerContrast,
    ];

    pub fn number(self) -> u8 {
        match self {
            TableKind::Descriptives => 2,
            TableKind::Controllability => 3,
            TableKind::Responsiveness => 4,
            TableKind::PromptTypes => 5,
            TableKind::BaselineProfiles => 6,
            TableKind::Participation => 7,
            TableKind::MarkerContrast => 8,
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            TableKind::Descriptives => "Trait scores by model, prompt type and target level, mean (SD)",
            TableKind::Controllability => "High vs. low targets by trait",
            TableKind::Responsiveness => "High vs. low targets by model, pooled over traits",
            TableKind::PromptTypes => "High vs. low targets by prompt type",
            TableKind::BaselineProfiles => "Baseline profiles without a persona",
            TableKind::Participation => "Agent participation by persona condition",
            TableKind::MarkerContrast => "Trait markers in conversation and memory, high vs. rest",
        }
    }

    pub fn header(self) -> Vec<String> {
        let traits = TraitName::ALL.iter().map(|t| t.label());
        let cols: Vec<&str> = match self {
            TableKind::Descriptives => ["Model", "Prompt Type", "Level", "N"].into_iter().chain(traits).collect(),
            TableKind::Controllability => vec!["Trait", "High M", "Low M", "Difference", "Cohen's d", "p"],
            TableKind::Responsiveness => vec!["Model", "High M", "Low M", "Cohen's d", "p"],
            TableKind::PromptTypes => vec!["Prompt Type", "Cohen's d"],
            TableKind::BaselineProfiles => {
                ["Model", "Condition", "N", "Refusals"].into_iter().chain(traits).collect()
            }
            TableKind::Participation => vec!["Personality", "N Turns", "Total WC", "Mean WC (SD)"],
            TableKind::MarkerContrast => vec![
                "Trait",
                "Metric",
                "Conversation High",
                "Conversation Rest",
                "Conversation d",
                "Conversation p",
                "Memory High",
                "Memory Rest",
                "Memory d",
                "Memory p",
            ],
        };
        cols.into_iter().map(String::from).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Md,
    Csv,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Md => "md",
            Format::Csv => "csv",
        }
    }
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "md" | "markdown" => Ok(Format::Md),
            "csv" => Ok(Format::Csv),
            other => Err(format!("unknown format {other:?} (expected md or csv)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub kind: TableKind,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub notes: Vec<String>,
}

impl Table {
    fn new(kind: TableKind) -> Self {
        Self { kind, header: kind.header(), rows: Vec::new(), notes: Vec::new() }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn file_name(&self, format: Format) -> String {
        format!("table{}.{}", self.kind.number(), format.extension())
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Md => self.to_markdown(),
            Format::Csv => self.to_csv(),
        }
    }

    pub fn to_markdown(&self) -> String {
        let mut out = format!("### Table {}. {}\n\n", self.kind.number(), self.kind.title());
        let line = |cells: &[String]| format!("| {} |\n", cells.join(" | "));
        out.push_str(&line(&self.header));
        out.push_str(&line(&vec!["---".to_string(); self.header.len()]));
        for row in &self.rows {
            out.push_str(&line(row));
        }
        for note in &self.notes {
            let _ = write!(out, "\n{note}\n");
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("write to memory");
        for row in &self.rows {
            w.write_record(row).expect("write to memory");
        }
        String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv output is utf-8")
    }

    /// Cell value by row index and column name.
    pub fn cell(&self, row: usize, column: &str) -> Option<&str> {
        let c = self.header.iter().position(|h| h == column)?;
        self.rows.get(row).map(|r| r[c].as_str())
    }
}

/// Writes each table to `dir/tables/` in each format; returns the paths.
pub fn write_tables(dir: &Path, tables: &[Table], formats: &[Format]) -> std::io::Result<Vec<PathBuf>> {
    let dir = dir.join("tables");
    std::fs::create_dir_all(&dir)?;
    let mut paths = Vec::new();
    for t in tables {
        for &f in formats {
            let p = dir.join(t.file_name(f));
            std::fs::write(&p, t.render(f))?;
            paths.push(p);
        }
    }
    Ok(paths)
}

// ---------------------------------------------------------------- formatting

pub fn fmt_fixed(x: f64, decimals: usize) -> String {
    let s = format!("{x:.decimals$}");
    // no "-0.000"
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_string()
    } else {
        s
    }
}

/// "4.791 (0.170)"
pub fn fmt_mean_sd(s: &SampleSummary) -> String {
    format!("{} ({})", fmt_fixed(s.mean, 3), fmt_fixed(s.sd, 3))
}

pub fn stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}

/// "<.001" or ".042"
pub fn fmt_p_short(p: f64) -> String {
    if p < 0.001 {
        "<.001".into()
    } else {
        let s = fmt_fixed(p, 3);
        s.strip_prefix('0').map(String::from).unwrap_or(s)
    }
}

/// "<0.001***", "0.0079**", "0.4591"
pub fn fmt_p_starred(p: f64) -> String {
    if p < 0.001 {
        "<0.001***".into()
    } else {
        format!("{}{}", fmt_fixed(p, 4), stars(p))
    }
}

fn opt(x: Option<f64>, f: impl Fn(f64) -> String) -> String {
    x.map_or_else(|| "n/a".to_string(), f)
}

fn fmt_df(df: f64) -> String {
    if df.fract() == 0.0 {
        format!("{df:.0}")
    } else {
        format!("{df:.2}")
    }
}

fn fmt_stat(x: f64) -> String {
    if x.is_finite() {
        fmt_fixed(x, 2)
    } else {
        "inf".into()
    }
}

/// "F(4, 8104) = 15.51, p < .001, η² = .008"
pub fn fmt_f_test(r: &TestResult) -> String {
    let df = match r.df {
        Df::Two(a, b) => format!("{}, {}", fmt_df(a), fmt_df(b)),
        Df::One(a) => fmt_df(a),
    };
    let p = if r.p < 0.001 { "p < .001".to_string() } else { format!("p = {}", fmt_p_short(r.p)) };
    let mut s = format!("F({df}) = {}, {p}", fmt_stat(r.statistic));
    if let Some(eta) = r.effect {
        let e = fmt_fixed(eta, 3);
        let _ = write!(s, ", η² = {}", e.strip_prefix('0').unwrap_or(&e));
    }
    s
}

/// "t(9598) = 407.27, p < .001, d = 8.31"
pub fn fmt_t_test(r: &TestResult) -> String {
    let df = match r.df {
        Df::One(a) => fmt_df(a),
        Df::Two(a, b) => format!("{}, {}", fmt_df(a), fmt_df(b)),
    };
    let p = if r.p < 0.001 { "p < .001".to_string() } else { format!("p = {}", fmt_p_short(r.p)) };
    let mut s = format!("t({df}) = {}, {p}", fmt_stat(r.statistic));
    if let Some(d) = r.effect {
        let _ = write!(s, ", d = {}", fmt_fixed(d, 2));
    }
    s
}

// ------------------------------------------------------------------- labels

/// Display names for providers; unknown ids display as themselves.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ModelLabels(BTreeMap<String, String>);

impl ModelLabels {
    pub fn from_config(config: &Config) -> Self {
        Self(config.providers.iter().map(|p| (p.name.clone(), p.display_label().to_string())).collect())
    }

    pub fn insert(&mut self, provider: impl Into<String>, label: impl Into<String>) {
        self.0.insert(provider.into(), label.into());
    }

    pub fn get(&self, provider: &ProviderId) -> String {
        self.0.get(provider.as_str()).cloned().unwrap_or_else(|| provider.to_string())
    }
}

// ------------------------------------------------------------ observations

/// One trait score of one scored persona trial.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub provider: ProviderId,
    pub strategy: PromptStrategy,
    pub trait_name: TraitName,
    pub level: TraitLevel,
    pub score: f64,
}

impl Observation {
    /// Distance from the scale midpoint toward the target; None for Medium.
    pub fn extremity(&self) -> Option<f64> {
        match self.level {
            TraitLevel::High => Some(self.score - 3.0),
            TraitLevel::Low => Some(3.0 - self.score),
            TraitLevel::Medium => None,
        }
    }
}

pub fn persona_observations(records: &[TrialRecord]) -> Vec<Observation> {
    let mut out = Vec::new();
    for r in records {
        let (Some(profile), Some(scores)) = (r.spec.profile, r.outcome.scores()) else { continue };
        for t in TraitName::ALL {
            out.push(Observation {
                provider: r.spec.provider.clone(),
                strategy: r.spec.strategy,
                trait_name: t,
                level: profile.level(t),
                score: scores.get(t),
            });
        }
    }
    out
}

fn providers_in_order(records: &[TrialRecord]) -> Vec<ProviderId> {
    let mut out: Vec<ProviderId> = Vec::new();
    for r in records {
        if !out.contains(&r.spec.provider) {
            out.push(r.spec.provider.clone());
        }
    }
    out
}

fn high_low<'a>(obs: impl Iterator<Item = &'a Observation>) -> (Vec<f64>, Vec<f64>) {
    let (mut high, mut low) = (Vec::new(), Vec::new());
    for o in obs {
        match o.level {
            TraitLevel::High => high.push(o.score),
            TraitLevel::Low => low.push(o.score),
            TraitLevel::Medium => {}
        }
    }
    (high, low)
}

fn contrast_of(high: &[f64], low: &[f64]) -> Option<Contrast> {
    lexicon::contrast_values(high, low).ok()
}

// ----------------------------------------------------------------- analysis

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastRow {
    pub label: String,
    pub contrast: Contrast,
}

impl ContrastRow {
    fn diff(&self) -> f64 {
        self.contrast.mean_high - self.contrast.mean_rest
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Headline {
    pub high: SampleSummary,
    pub low: SampleSummary,
    /// Absent when pooled variance is zero.
    pub test: Option<TestResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub headline: Option<Headline>,
    pub controllability: Vec<ContrastRow>,
    pub responsiveness: Vec<ContrastRow>,
    pub prompt_types: Vec<ContrastRow>,
    pub level_by_provider: Option<TwoWayAnova>,
    pub level_by_prompt: Option<TwoWayAnova>,
    pub prompt_type_anova: Option<TestResult>,
    pub provider_tukey: Vec<PosthocRow>,
    pub baseline_anova: BTreeMap<TraitName, TestResult>,
    pub skipped: Vec<String>,
}

/// Sorts rows by descending d; undefined d goes last, ties keep input order.
fn sort_by_d(rows: &mut [ContrastRow]) {
    rows.sort_by(|a, b| match (a.contrast.d, b.contrast.d) {
        (Some(x), Some(y)) => y.total_cmp(&x),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
}

pub fn analyze(records: &[TrialRecord], labels: &ModelLabels) -> Analysis {
    let obs = persona_observations(records);
    let mut skipped = Vec::new();

    let (high, low) = high_low(obs.iter());
    let headline = match (SampleSummary::from_slice(&high), SampleSummary::from_slice(&low)) {
        (Some(h), Some(l)) => Some(Headline { high: h, low: l, test: stats::t_test_pooled(&high, &low).ok() }),
        _ => None,
    };

    let mut controllability: Vec<ContrastRow> = TraitName::ALL
        .iter()
        .filter_map(|&t| {
            let (h, l) = high_low(obs.iter().filter(|o| o.trait_name == t));
            contrast_of(&h, &l).map(|contrast| ContrastRow { label: t.label().into(), contrast })
        })
        .collect();
    sort_by_d(&mut controllability);

    let providers = providers_in_order(records);
    let mut responsiveness: Vec<ContrastRow> = providers
        .iter()
        .filter_map(|p| {
            let (h, l) = high_low(obs.iter().filter(|o| &o.provider == p));
            contrast_of(&h, &l).map(|contrast| ContrastRow { label: labels.get(p), contrast })
        })
        .collect();
    sort_by_d(&mut responsiveness);

    let mut prompt_types: Vec<ContrastRow> = PromptStrategy::PERSONA
        .iter()
        .filter_map(|&s| {
            let (h, l) = high_low(obs.iter().filter(|o| o.strategy == s));
            contrast_of(&h, &l).map(|contrast| ContrastRow { label: s.label().into(), contrast })
        })
        .collect();
    sort_by_d(&mut prompt_types);

    let targeted: Vec<&Observation> = obs.iter().filter(|o| o.level != TraitLevel::Medium).collect();
    let level_by_provider = if providers.len() >= 2 {
        let rows: Vec<(TraitLevel, String, f64)> =
            targeted.iter().map(|o| (o.level, labels.get(&o.provider), o.score)).collect();
        stats::two_way_anova(&rows).map_err(|e| skipped.push(format!("level x provider ANOVA: {e}"))).ok()
    } else {
        None
    };
    let strategies_present: Vec<PromptStrategy> =
        PromptStrategy::PERSONA.into_iter().filter(|s| targeted.iter().any(|o| o.strategy == *s)).collect();
    let level_by_prompt = if strategies_present.len() >= 2 {
        let rows: Vec<(TraitLevel, PromptStrategy, f64)> =
            targeted.iter().map(|o| (o.level, o.strategy, o.score)).collect();
        stats::two_way_anova(&rows).map_err(|e| skipped.push(format!("level x prompt ANOVA: {e}"))).ok()
    } else {
        None
    };
    let prompt_type_anova = if strategies_present.len() >= 2 {
        let groups: Vec<Vec<f64>> = strategies_present
            .iter()
            .map(|s| targeted.iter().filter(|o| o.strategy == *s).filter_map(|o| o.extremity()).collect())
            .collect();
        stats::one_way_anova(&groups).map_err(|e| skipped.push(format!("prompt type ANOVA: {e}"))).ok()
    } else {
        None
    };
    let provider_tukey = if providers.len() >= 2 {
        let groups: Vec<(String, Vec<f64>)> = providers
            .iter()
            .map(|p| (labels.get(p), targeted.iter().filter(|o| &o.provider == p).filter_map(|o| o.extremity()).collect()))
            .collect();
        stats::tukey_hsd(&groups).unwrap_or_else(|e| {
            skipped.push(format!("provider Tukey HSD: {e}"));
            Vec::new()
        })
    } else {
        Vec::new()
    };

    let mut baseline_anova = BTreeMap::new();
    if providers.len() >= 2 {
        for t in TraitName::ALL {
            let groups: Vec<Vec<f64>> = providers
                .iter()
                .map(|p| {
                    records
                        .iter()
                        .filter(|r| &r.spec.provider == p && r.spec.strategy == PromptStrategy::TeamContext)
                        .filter_map(|r| r.outcome.scores().map(|s| s.get(t)))
                        .collect()
                })
                .collect();
            match stats::one_way_anova(&groups) {
                Ok(r) => {
                    baseline_anova.insert(t, r);
                }
                Err(e) => skipped.push(format!("baseline ANOVA {}: {e}", t.label())),
            }
        }
    }

    Analysis {
        headline,
        controllability,
        responsiveness,
        prompt_types,
        level_by_provider,
        level_by_prompt,
        prompt_type_anova,
        provider_tukey,
        baseline_anova,
        skipped,
    }
}

// ------------------------------------------------------------------- tables

pub fn descriptives_table(records: &[TrialRecord], labels: &ModelLabels) -> Table {
    let mut table = Table::new(TableKind::Descriptives);
    let groups: [(PromptStrategy, Option<TraitLevel>); 11] = [
        (PromptStrategy::NoPrompt, None),
        (PromptStrategy::TeamContext, None),
        (PromptStrategy::ZeroShot, Some(TraitLevel::Low)),
        (PromptStrategy::ZeroShot, Some(TraitLevel::Medium)),
        (PromptStrategy::ZeroShot, Some(TraitLevel::High)),
        (PromptStrategy::Definition, Some(TraitLevel::Low)),
        (PromptStrategy::Definition, Some(TraitLevel::Medium)),
        (PromptStrategy::Definition, Some(TraitLevel::High)),
        (PromptStrategy::DefinitionFacets, Some(TraitLevel::Low)),
        (PromptStrategy::DefinitionFacets, Some(TraitLevel::Medium)),
        (PromptStrategy::DefinitionFacets, Some(TraitLevel::High)),
    ];
    for p in providers_in_order(records) {
        for (strategy, level) in groups {
            let in_group = |profile: &Option<PersonaProfile>, t: TraitName| match (level, profile) {
                (None, _) => true,
                (Some(l), Some(prof)) => prof.level(t) == l,
                (Some(_), None) => false,
            };
            let relevant: Vec<&TrialRecord> =
                records.iter().filter(|r| r.spec.provider == p && r.spec.strategy == strategy).collect();
            if !relevant.iter().any(|r| TraitName::ALL.iter().any(|&t| in_group(&r.spec.profile, t))) {
                continue;
            }
            let cells: Vec<Vec<f64>> = TraitName::ALL
                .iter()
                .map(|&t| {
                    relevant
                        .iter()
                        .filter(|r| in_group(&r.spec.profile, t))
                        .filter_map(|r| r.outcome.scores().map(|s| s.get(t)))
                        .collect()
                })
                .collect();
            let min = cells.iter().map(Vec::len).min().unwrap_or(0);
            let max = cells.iter().map(Vec::len).max().unwrap_or(0);
            let n = if min == max { min.to_string() } else { format!("{min}-{max}") };
            let level_label = level.map_or("--", |l| match l {
                TraitLevel::Low => "Low",
                TraitLevel::Medium => "Med",
                TraitLevel::High => "High",
            });
            let mut row = vec![labels.get(&p), strategy.label().to_string(), level_label.to_string(), n];
            row.extend(cells.iter().map(|c| SampleSummary::from_slice(c).map_or_else(|| "--".into(), |s| fmt_mean_sd(&s))));
            table.push(row);
        }
    }
    table
}

fn contrast_cells(c: &Contrast, decimals: usize) -> (String, String, String, String) {
    (
        fmt_fixed(c.mean_high, decimals),
        fmt_fixed(c.mean_rest, decimals),
        opt(c.d, |d| fmt_fixed(d, decimals)),
        opt(c.p, fmt_p_short),
    )
}

pub fn controllability_table(analysis: &Analysis) -> Table {
    let mut table = Table::new(TableKind::Controllability);
    for row in &analysis.controllability {
        let (h, l, d, p) = contrast_cells(&row.contrast, 2);
        table.push(vec![row.label.clone(), h, l, fmt_fixed(row.diff(), 2), d, p]);
    }
    if let Some(h) = &analysis.headline {
        let mut note = format!(
            "Pooled over traits: high M = {}, SD = {}; low M = {}, SD = {}",
            fmt_fixed(h.high.mean, 2),
            fmt_fixed(h.high.sd, 2),
            fmt_fixed(h.low.mean, 2),
            fmt_fixed(h.low.sd, 2)
        );
        match &h.test {
            Some(t) => {
                let _ = write!(note, "; {}.", fmt_t_test(t));
            }
            None => note.push_str("; t undefined (zero variance)."),
        }
        table.notes.push(note);
    }
    table
}

pub fn responsiveness_table(analysis: &Analysis) -> Table {
    let mut table = Table::new(TableKind::Responsiveness);
    for row in &analysis.responsiveness {
        let (h, l, d, p) = contrast_cells(&row.contrast, 2);
        table.push(vec![row.label.clone(), h, l, d, p]);
    }
    if let Some(a) = &analysis.level_by_provider {
        table.notes.push(format!(
            "Level x Provider ANOVA: provider {}; interaction {}.",
            fmt_f_test(&a.factor_b),
            fmt_f_test(&a.interaction)
        ));
    }
    if !analysis.provider_tukey.is_empty() {
        let pairs: Vec<String> = analysis
            .provider_tukey
            .iter()
            .map(|r| format!("{} vs {}: diff = {}, p = {}", r.group_a, r.group_b, fmt_fixed(r.mean_diff, 3), fmt_p_short(r.p_adjusted)))
            .collect();
        table.notes.push(format!("Tukey HSD on extremity: {}.", pairs.join("; ")));
    }
    table
}

pub fn prompt_types_table(analysis: &Analysis) -> Table {
    let mut table = Table::new(TableKind::PromptTypes);
    for row in &analysis.prompt_types {
        table.push(vec![row.label.clone(), opt(row.contrast.d, |d| fmt_fixed(d, 2))]);
    }
    if let Some(r) = &analysis.prompt_type_anova {
        table.notes.push(format!("One-way ANOVA of extremity across prompt types: {}.", fmt_f_test(r)));
    }
    if let Some(a) = &analysis.level_by_prompt {
        table.notes.push(format!("Level x Prompt Type interaction: {}.", fmt_f_test(&a.interaction)));
    }
    table
}

pub fn baseline_table(records: &[TrialRecord], labels: &ModelLabels, analysis: &Analysis) -> Table {
    let mut table = Table::new(TableKind::BaselineProfiles);
    for p in providers_in_order(records) {
        for strategy in [PromptStrategy::NoPrompt, PromptStrategy::TeamContext] {
            let rs: Vec<&TrialRecord> =
                records.iter().filter(|r| r.spec.provider == p && r.spec.strategy == strategy).collect();
            if rs.is_empty() {
                continue;
            }
            let refusals = rs.iter().filter(|r| r.outcome.label() == "refusal").count();
            let mut row = vec![
                labels.get(&p),
                strategy.label().to_string(),
                rs.len().to_string(),
                format!("{refusals}/{}", rs.len()),
            ];
            for t in TraitName::ALL {
                let xs: Vec<f64> = rs.iter().filter_map(|r| r.outcome.scores().map(|s| s.get(t))).collect();
                row.push(SampleSummary::from_slice(&xs).map_or_else(|| "--".into(), |s| fmt_mean_sd(&s)));
            }
            table.push(row);
        }
    }
    if !analysis.baseline_anova.is_empty() {
        let parts: Vec<String> =
            analysis.baseline_anova.iter().map(|(t, r)| format!("{} {}", t.label(), fmt_f_test(r))).collect();
        table.notes.push(format!("Team Context, one-way ANOVA across models: {}.", parts.join("; ")));
    }
    table
}

pub fn participation_table(rows: &[ParticipationRow]) -> Table {
    let mut table = Table::new(TableKind::Participation);
    for r in rows {
        let name = r.condition.strip_prefix("High ").unwrap_or(&r.condition).to_string();
        let mean_sd = match (r.mean_words, r.sd_words) {
            (Some(m), Some(s)) => format!("{} ({})", fmt_fixed(m, 1), fmt_fixed(s, 1)),
            (Some(m), None) => format!("{} (n/a)", fmt_fixed(m, 1)),
            _ => "n/a".into(),
        };
        table.push(vec![name, r.n_turns.to_string(), r.total_words.to_string(), mean_sd]);
    }
    let groups: Vec<&[f64]> = rows.iter().map(|r| r.turn_words.as_slice()).collect();
    if let Ok(r) = stats::one_way_anova(&groups) {
        table.notes.push(format!("Note. {}", fmt_f_test(&r)));
    }
    table
}

/// A scored document and the single High trait of the persona behind it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDoc {
    pub id: String,
    pub condition: Option<TraitName>,
    pub scores: CategoryScores,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MarkerCorpora {
    /// One document per injected utterance.
    pub conversation: Vec<LabeledDoc>,
    /// One document per simulation run: all of its memory entries.
    pub memory: Vec<LabeledDoc>,
}

pub fn conversation_doc_id(conversation: &str, persona: &PersonaProfile, after_index: u32) -> String {
    format!("{conversation}:{}:{after_index}", persona.code())
}

pub fn memory_doc_id(conversation: &str, persona: &PersonaProfile) -> String {
    format!("{conversation}:{}", persona.code())
}

pub fn marker_corpora(results: &[SimulationResult], lex: &CategoryLexicon) -> MarkerCorpora {
    let mut out = MarkerCorpora::default();
    for r in results {
        let condition = r.persona.single_high_trait();
        for t in &r.injected {
            out.conversation.push(LabeledDoc {
                id: conversation_doc_id(&r.conversation_id, &r.persona, t.after_index),
                condition,
                scores: lexicon::score_text(&t.text, lex),
            });
        }
        let memory: Vec<String> = r.ltm_log.iter().filter_map(|s| s.entry()).map(|e| e.text()).collect();
        if !memory.is_empty() {
            out.memory.push(LabeledDoc {
                id: memory_doc_id(&r.conversation_id, &r.persona),
                condition,
                scores: lexicon::score_text(&memory.join("\n"), lex),
            });
        }
    }
    out
}

/// Labels imported score rows by the persona code embedded in their id.
/// Rows whose id carries no code are dropped.
pub fn label_imported(rows: Vec<(String, CategoryScores)>) -> Vec<LabeledDoc> {
    rows.into_iter()
        .filter_map(|(id, scores)| {
            let code = id.split(':').nth(1)?;
            let profile: PersonaProfile = code.parse().ok()?;
            Some(LabeledDoc { condition: profile.single_high_trait(), id, scores })
        })
        .collect()
}

/// Replaces or adds imported metrics (such as Analytic) on matching docs.
pub fn merge_imported(docs: &mut [LabeledDoc], imported: &[LabeledDoc]) {
    let by_id: BTreeMap<&str, &CategoryScores> = imported.iter().map(|d| (d.id.as_str(), &d.scores)).collect();
    for d in docs {
        if let Some(s) = by_id.get(d.id.as_str()) {
            d.scores.pct.extend(s.pct.iter().map(|(k, v)| (k.clone(), *v)));
        }
    }
}

fn split_high_rest(docs: &[LabeledDoc], t: TraitName) -> (Vec<CategoryScores>, Vec<CategoryScores>) {
    let mut high = Vec::new();
    let mut rest = Vec::new();
    for d in docs {
        match d.condition {
            Some(c) if c == t => high.push(d.scores.clone()),
            Some(_) => rest.push(d.scores.clone()),
            None => {}
        }
    }
    (high, rest)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkerRow {
    pub trait_name: TraitName,
    pub metric: String,
    pub conversation: Option<Contrast>,
    pub memory: Option<Contrast>,
}

pub fn marker_contrasts(corpora: &MarkerCorpora) -> Vec<MarkerRow> {
    let mut rows = Vec::new();
    for t in TraitName::ALL {
        let (ch, cr) = split_high_rest(&corpora.conversation, t);
        let (mh, mr) = split_high_rest(&corpora.memory, t);
        for m in lexicon::trait_metrics(t) {
            rows.push(MarkerRow {
                trait_name: t,
                metric: m.to_string(),
                conversation: lexicon::contrast(&ch, &cr, m).ok(),
                memory: lexicon::contrast(&mh, &mr, m).ok(),
            });
        }
    }
    rows
}

pub fn marker_contrast_table(rows: &[MarkerRow]) -> Table {
    let mut table = Table::new(TableKind::MarkerContrast);
    let cells = |c: &Option<Contrast>| -> [String; 4] {
        match c {
            Some(c) => [
                fmt_fixed(c.mean_high, 3),
                fmt_fixed(c.mean_rest, 3),
                opt(c.d, |d| fmt_fixed(d, 3)),
                opt(c.p, fmt_p_starred),
            ],
            None => std::array::from_fn(|_| "n/a".to_string()),
        }
    };
    for r in rows {
        let mut row = vec![r.trait_name.label().to_string(), r.metric.clone()];
        row.extend(cells(&r.conversation));
        row.extend(cells(&r.memory));
        table.push(row);
    }
    let sizes = |pick: fn(&MarkerRow) -> Option<Contrast>| -> String {
        let parts: Vec<String> = TraitName::ALL
            .iter()
            .filter_map(|&t| {
                rows.iter().find(|r| r.trait_name == t).and_then(pick).map(|c| format!("{} n = {}", t.label(), c.n_high))
            })
            .collect();
        parts.join(", ")
    };
    let conv = sizes(|r| r.conversation);
    let mem = sizes(|r| r.memory);
    if !conv.is_empty() || !mem.is_empty() {
        table.notes.push(format!("High-group sizes. Conversation: {conv}. Memory: {mem}."));
    }
    table.notes.push("* p < .05, ** p < .01, *** p < .001. n/a: undefined or unavailable.".into());
    table
}

/// Every table from assessment records and simulation results.
pub fn build_tables(
    records: &[TrialRecord],
    simulations: &[SimulationResult],
    corpora: &MarkerCorpora,
    labels: &ModelLabels,
) -> (Analysis, Vec<Table>) {
    let analysis = analyze(records, labels);
    let tables = vec![
        descriptives_table(records, labels),
        controllability_table(&analysis),
        responsiveness_table(&analysis),
        prompt_types_table(&analysis),
        baseline_table(records, labels, &analysis),
        participation_table(&participation_stats(simulations)),
        marker_contrast_table(&marker_contrasts(corpora)),
    ];
    (analysis, tables)
}

/// Total words over injected turns, for cross-checking against the tables.
pub fn total_agent_words(results: &[SimulationResult]) -> usize {
    results.iter().flat_map(|r| &r.injected).map(|t| word_count(&t.text)).sum()
}
