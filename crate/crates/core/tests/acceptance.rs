//! The twelve acceptance criteria, each checked against an oracle written
//! independently of the code under test. Every test prints one PASS/FAIL line.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use persona_align::config::Config;
use persona_align::gateway::{ChatRequest, ChatResponse, Completer, Gateway, GatewayError, ProviderId};
use persona_align::inventory::{Inventory, ResponseVector};
use persona_align::lexicon::{self, CategoryLexicon, CategoryScores};
use persona_align::memory::{MemoryConfig, MemoryStore, SnapshotTarget};
use persona_align::persona::{PromptStrategy, TraitName};
use persona_align::report::{self, LabeledDoc, MarkerCorpora, ModelLabels};
use persona_align::runner::{self, build_plan, ExecuteOptions, ExperimentSummary, RecordStore, TrialRecord};
use persona_align::selftest::{self, fixed_clock};
use persona_align::simulator::{participation_stats, AgentTurn, Conversation, SimulationResult, TranscriptMessage};
use persona_align::stats::{self, dist, Df};

fn verdict(n: u32, name: &str, ok: bool, detail: String) {
    println!("{} criterion {n:>2} ({name}): {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {n} ({name}) failed: {detail}");
}

fn run_plan(providers: &[&str], runs: u32, keep: impl Fn(&runner::TrialSpec) -> bool) -> Vec<TrialRecord> {
    let config = Config::mock_only();
    let ids: Vec<ProviderId> = providers.iter().map(|p| ProviderId::new(*p)).collect();
    let plan: Vec<_> = build_plan(&ids, runs).unwrap().into_iter().filter(|s| keep(s)).collect();
    let gw = Gateway::from_config(&config, &ids, true).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let clock = fixed_clock();
    let mut store = RecordStore::open(&dir.path().join("r.jsonl")).unwrap();
    runner::execute(&plan, &gw, &mut store, &ExecuteOptions::new(&clock)).unwrap();
    store.records().to_vec()
}

// The published BFI-44 key, transcribed by hand: (trait letter, reversed).
const KEY: [(char, bool); 44] = [
    ('E', false), ('A', true), ('C', false), ('N', false), ('O', false),
    ('E', true), ('A', false), ('C', true), ('N', true), ('O', false),
    ('E', false), ('A', true), ('C', false), ('N', false), ('O', false),
    ('E', false), ('A', false), ('C', true), ('N', false), ('O', false),
    ('E', true), ('A', false), ('C', true), ('N', true), ('O', false),
    ('E', false), ('A', true), ('C', false), ('N', false), ('O', false),
    ('E', true), ('A', false), ('C', false), ('N', true), ('O', true),
    ('E', false), ('A', true), ('C', false), ('N', false), ('O', false),
    ('O', true), ('A', false), ('C', true), ('O', false),
];

fn brute_force_score(raw: &[u8]) -> BTreeMap<char, f64> {
    let mut out = BTreeMap::new();
    for letter in ['E', 'A', 'C', 'N', 'O'] {
        let mut sum = 0.0;
        let mut n = 0.0;
        for (k, &(t, rev)) in KEY.iter().enumerate() {
            if t == letter {
                sum += if rev { 6.0 - raw[k] as f64 } else { raw[k] as f64 };
                n += 1.0;
            }
        }
        out.insert(letter, sum / n);
    }
    out
}

#[test]
fn c01_scoring_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let inv = Inventory::bfi44();
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let raw: Vec<u8> = (0..44).map(|_| rng.random_range(1..=5)).collect();
        let scores = inv.score(&ResponseVector::new(raw.clone()).unwrap());
        let oracle = brute_force_score(&raw);
        for t in TraitName::ALL {
            worst = worst.max((scores.get(t) - oracle[&t.letter()]).abs());
        }
    }
    verdict(1, "scoring oracle", worst <= 1e-12, format!("1000 vectors, max |diff| = {worst:e} (tol 1e-12)"));
}

#[test]
fn c02_grid_cardinality() {
    let ids: Vec<ProviderId> = (0..4).map(|k| ProviderId::new(format!("p{k}"))).collect();
    let four = build_plan(&ids, 5).unwrap().len();
    let one = build_plan(&ids[..1], 5).unwrap().len();
    // 32 binary profiles x 3 strategies + 1 all-medium x 3 + 2 baselines, times 5 runs
    let expected_one = (32 * 3 + 3 + 2) * 5;
    verdict(
        2,
        "grid cardinality",
        four == 2020 && one == 505 && one == expected_one,
        format!("4 providers: {four} (want 2020); 1 provider: {one} (want 505)"),
    );
}

#[test]
fn c03_anchor_end_to_end() {
    let records = run_plan(&["mock:anchor"], 5, |_| true);
    let obs = report::persona_observations(&records);
    let mut exact = true;
    let mut lines = Vec::new();
    for t in TraitName::ALL {
        let pick = |want: persona_align::persona::TraitLevel| -> Vec<f64> {
            obs.iter().filter(|o| o.trait_name == t && o.level == want).map(|o| o.score).collect()
        };
        let hi = pick(persona_align::persona::TraitLevel::High);
        let lo = pick(persona_align::persona::TraitLevel::Low);
        let (mh, ml) = (stats::mean(&hi), stats::mean(&lo));
        exact &= mh == 5.0 && ml == 1.0 && mh - ml == 4.0;
        lines.push(format!("{} {mh:.3}/{ml:.3}", t.letter()));
    }

    let noisy = run_plan(&[selftest::NOISE_PROVIDER], 5, |_| true);
    let obs = report::persona_observations(&noisy);
    let hi: Vec<f64> = obs.iter().filter(|o| o.level == persona_align::persona::TraitLevel::High).map(|o| o.score).collect();
    let lo: Vec<f64> = obs.iter().filter(|o| o.level == persona_align::persona::TraitLevel::Low).map(|o| o.score).collect();
    // pooled d from first principles
    let var = |xs: &[f64]| {
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
    };
    let (vh, vl) = (var(&hi), var(&lo));
    let sp = (((hi.len() - 1) as f64 * vh + (lo.len() - 1) as f64 * vl) / (hi.len() + lo.len() - 2) as f64).sqrt();
    let d = (stats::mean(&hi) - stats::mean(&lo)) / sp;
    let sd_ok = (vh.sqrt() - 0.35).abs() < 0.1 && (vl.sqrt() - 0.35).abs() < 0.1;
    verdict(
        3,
        "anchor end-to-end",
        exact && sd_ok && (6.0..=14.0).contains(&d),
        format!(
            "anchor high/low {}; noisy SD high {:.3}, low {:.3} (target ~0.35), pooled d = {d:.3} (want 6..14)",
            lines.join(", "),
            vh.sqrt(),
            vl.sqrt()
        ),
    );
}

#[test]
fn c04_refusal_mechanism() {
    let records = run_plan(&["mock:refuser", "mock:refuser:context"], 5, |s| !s.strategy.requires_profile());
    let s = ExperimentSummary::from_records(&records);
    let plain = s.cell(&ProviderId::new("mock:refuser"), PromptStrategy::NoPrompt);
    let framed = s.cell(&ProviderId::new("mock:refuser:context"), PromptStrategy::TeamContext);
    let ok = plain.refusals == plain.total() && plain.total() == 5 && framed.refusals == 0 && framed.scored == 5;
    verdict(
        4,
        "refusal mechanism",
        ok,
        format!(
            "no prompt: {}/{} refused; team context (context-sensitive): {}/{} refused",
            plain.refusals,
            plain.total(),
            framed.refusals,
            framed.total()
        ),
    );
}

#[test]
fn c05_statistics_fixtures() {
    let t = stats::t_test_pooled(&[1.0, 2.0, 3.0], &[3.0, 4.0, 5.0]).unwrap();
    let t_ok = (t.statistic - (-2.4495)).abs() <= 1e-4 && t.df == Df::One(4.0);

    // means 2, 3, 4: SSB = 6 on 2 df; within SS 2 + 2 + 8 = 12 on 6 df
    let a = stats::one_way_anova(&[vec![1.0, 2.0, 3.0], vec![2.0, 3.0, 4.0], vec![2.0, 4.0, 6.0]]).unwrap();
    let f_ok = (a.statistic - 1.5).abs() <= 1e-9 && a.df == Df::Two(2.0, 6.0);

    let g1 = [2.1, 3.4, 1.9, 4.4, 3.0];
    let g2 = [5.2, 4.1, 6.3, 4.8];
    let f2 = stats::one_way_anova(&[g1.to_vec(), g2.to_vec()]).unwrap();
    let t2 = stats::t_test_pooled(&g1, &g2).unwrap();
    let identity = (f2.statistic - t2.statistic.powi(2)).abs();

    let tukey = stats::tukey_hsd(&[("a", g1.to_vec()), ("b", g2.to_vec())]).unwrap();
    let tukey_gap = (tukey[0].p_adjusted - t2.p).abs();

    let bonf = stats::bonferroni(0.05, 10);
    verdict(
        5,
        "statistics fixtures",
        t_ok && f_ok && identity <= 1e-9 && tukey_gap <= 1e-6 && bonf == 0.005,
        format!(
            "t = {:.4} df {:?}; F = {} df {:?}; |F - t^2| = {identity:e}; |p_tukey - p_t| = {tukey_gap:e}; bonferroni = {bonf}",
            t.statistic, t.df, a.statistic, a.df
        ),
    );
}

/// Composite Simpson integral of the t density, a check independent of the
/// incomplete beta code path.
fn t_cdf_by_quadrature(x: f64, df: f64) -> f64 {
    let ln_c = ln_gamma_ref((df + 1.0) / 2.0) - ln_gamma_ref(df / 2.0) - 0.5 * (df * std::f64::consts::PI).ln();
    let pdf = |t: f64| (ln_c - (df + 1.0) / 2.0 * (1.0 + t * t / df).ln()).exp();
    let n = 20_000;
    let h = x / n as f64;
    let mut s = pdf(0.0) + pdf(x);
    for k in 1..n {
        s += pdf(k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    0.5 + s * h / 3.0
}

// Stirling series; accurate to well below 1e-10 for x >= 2 after shifting.
fn ln_gamma_ref(x: f64) -> f64 {
    let mut x = x;
    let mut shift = 0.0;
    while x < 10.0 {
        shift -= x.ln();
        x += 1.0;
    }
    shift + (x - 0.5) * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI).ln() + 1.0 / (12.0 * x) - 1.0 / (360.0 * x.powi(3))
        + 1.0 / (1260.0 * x.powi(5))
}

#[test]
fn c06_distribution_functions() {
    let at_zero = dist::t_cdf(0.0, 4.0).unwrap();
    let v = dist::t_cdf(2.4495, 4.0).unwrap();
    let oracle = t_cdf_by_quadrature(2.4495, 4.0);
    let mut monotone = true;
    let mut prev = 0.0;
    for k in 0..=400 {
        let f = dist::f_cdf(k as f64 * 0.25, 3.0, 12.0).unwrap();
        monotone &= f >= prev && (0.0..=1.0).contains(&f);
        prev = f;
    }
    let tail = dist::f_cdf(1e6, 3.0, 12.0).unwrap();
    verdict(
        6,
        "distribution functions",
        at_zero == 0.5 && (v - 0.9646).abs() <= 1e-3 && (v - oracle).abs() <= 1e-3 && monotone && (1.0 - tail) < 1e-9,
        format!("t_cdf(0) = {at_zero}; t_cdf(2.4495, 4) = {v:.6}, quadrature {oracle:.6}; F cdf monotone = {monotone}, F(1e6) = {tail}"),
    );
}

fn snapshot_json(_: &ChatRequest) -> Result<ChatResponse, GatewayError> {
    Ok(ChatResponse {
        text: r#"{"summary":"s","insights":["i"],"key_points":["k"],"personal_reflection":"r"}"#.into(),
        latency_ms: 0,
        usage: None,
    })
}

#[test]
fn c07_memory_cadence() {
    let completer: Arc<dyn Completer> = Arc::new(snapshot_json);
    let mut failures = Vec::new();
    for n in 0..=200u32 {
        let target = SnapshotTarget {
            provider: ProviderId::new("mock:x"),
            system_text: String::new(),
            decoding: Default::default(),
            scope: format!("n{n}"),
        };
        let mut mem = MemoryStore::new(MemoryConfig::default(), target);
        for i in 1..=n {
            let msg = TranscriptMessage { index: i, speaker: "S1".into(), text: format!("message {i}") };
            mem.observe(&msg, completer.as_ref()).unwrap();
        }
        let ltm = mem.ltm();
        let mut next = 1;
        let mut tiles = true;
        for slot in ltm {
            let c = slot.covers();
            tiles &= c.first == next && c.last == next + 19;
            next = c.last + 1;
        }
        if ltm.len() != (n / 20) as usize || mem.stm_len() != n.min(20) as usize || !tiles {
            failures.push(n);
        }
    }
    verdict(7, "memory cadence", failures.is_empty(), format!("n = 0..=200, failures at {failures:?}"));
}

fn fixture_dir() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/fixtures/transcripts")
}

fn file_digests(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        out.insert(p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap());
    }
    out
}

#[test]
fn c08_transcript_immutability() {
    let before = file_digests(&fixture_dir());
    let conversations = Conversation::load_dir(&fixture_dir()).unwrap();
    let config = Config::builtin();
    let results = selftest::run_study2(&config, &conversations, "mock:script").unwrap();
    let after = file_digests(&fixture_dir());
    let mut mismatched = 0;
    for r in &results {
        let input = conversations.iter().find(|c| c.id == r.conversation_id).unwrap();
        // re-serialize both sides to bytes
        let a = serde_json::to_vec(&input.messages).unwrap();
        let b = serde_json::to_vec(&r.original).unwrap();
        if a != b || Conversation::digest(&r.original) != Conversation::digest(&input.messages) {
            mismatched += 1;
        }
    }
    verdict(
        8,
        "transcript immutability",
        mismatched == 0 && before == after && results.len() == conversations.len() * 5,
        format!("{} simulations, {mismatched} altered originals, fixture files unchanged = {}", results.len(), before == after),
    );
}

#[test]
fn c09_participation_ordering() {
    let config = Config::builtin();
    let results = selftest::run_study2(&config, &Conversation::fixtures(), "mock:script").unwrap();
    let rows = participation_stats(&results);
    let turns: Vec<usize> = rows.iter().map(|r| r.n_turns).collect();
    let e = TraitName::Extraversion.index();
    let n = TraitName::Neuroticism.index();
    let order_ok = rows.len() == 5
        && (0..5).all(|k| k == e || turns[k] < turns[e])
        && (0..5).all(|k| k == n || turns[k] > turns[n]);

    // hand-counted: 3 + 5 + 4 words
    let persona = selftest::simulation_personas()[0];
    let turn = |i: u32, text: &str| AgentTurn { after_index: i, text: text.into(), decision_rationale: None, persona };
    let hand = SimulationResult {
        conversation_id: "h".into(),
        persona,
        policy: "threshold".into(),
        original: vec![],
        injected: vec![turn(1, "one two three"), turn(2, "a b c d e"), turn(3, "we're all in, ok")],
        ltm_log: vec![],
        counters: Default::default(),
    };
    let hr = &participation_stats(std::slice::from_ref(&hand))[0];
    let words_ok = hr.n_turns == 3 && hr.total_words == 12 && hr.mean_words == Some(4.0) && hr.sd_words == Some(1.0);
    verdict(
        9,
        "participation ordering",
        order_ok && words_ok,
        format!(
            "turns by condition {:?}; hand fixture mean {:?} sd {:?} (want 4, 1)",
            rows.iter().map(|r| (r.condition.as_str(), r.n_turns)).collect::<Vec<_>>(),
            hr.mean_words,
            hr.sd_words
        ),
    );
}

#[test]
fn c10_lexicon_exactness() {
    let lex = CategoryLexicon::builtin();
    // we | are | happy | the | team | is | happy  -> 7 tokens; team* is social and affiliation
    let s = lexicon::score_text("We are happy, the team is happy!", lex);
    let pct = |k: f64| 100.0 * k / 7.0;
    let expected = [("emo_pos", 2.0), ("we", 1.0), ("affiliation", 2.0), ("social", 1.0), ("focuspresent", 2.0), ("article", 1.0), ("i", 0.0)];
    let hand_ok = s.word_count == 7 && expected.iter().all(|(c, k)| s.get(c) == Some(pct(*k)));
    let wild = lexicon::score_text("worried worrying unhappy", lex);
    let wild_ok = wild.get("emo_anx") == Some(200.0 / 3.0) && wild.get("emo_pos") == Some(0.0);

    let doc = |t: TraitName, v: f64, zero: f64| LabeledDoc {
        id: String::new(),
        condition: Some(t),
        scores: CategoryScores {
            word_count: 50,
            pct: BTreeMap::from([("emo_pos".to_string(), v), ("you".to_string(), zero)]),
        },
    };
    let mut docs = Vec::new();
    for k in 0..30 {
        let base = 1.0 + (k % 6) as f64 * 0.2;
        docs.push(doc(TraitName::Extraversion, 2.0 * base, 0.0));
        for t in &TraitName::ALL[1..] {
            docs.push(doc(*t, base, 0.0));
        }
    }
    let rows = report::marker_contrasts(&MarkerCorpora { conversation: docs.clone(), memory: docs });
    let emo = rows.iter().find(|r| r.trait_name == TraitName::Extraversion && r.metric == "emo_pos").unwrap();
    let c = emo.conversation.unwrap();
    let contrast_ok = c.d.unwrap() > 0.0 && c.p.unwrap() < 0.001;
    let table = report::marker_contrast_table(&rows);
    let you_row = table.rows.iter().position(|r| r[0] == "Extraversion" && r[1] == "you").unwrap();
    let na_ok = table.cell(you_row, "Memory d") == Some("n/a") && table.cell(you_row, "Memory p") == Some("n/a");
    verdict(
        10,
        "lexicon exactness",
        hand_ok && wild_ok && contrast_ok && na_ok,
        format!(
            "hand corpus {:?}; wildcard emo_anx {:?}; doubled emo_pos d = {:.3}, p = {:e}; zero-variance cells {:?}",
            expected.iter().map(|(c, _)| (*c, s.get(c))).collect::<Vec<_>>(),
            wild.get("emo_anx"),
            c.d.unwrap(),
            c.p.unwrap(),
            (table.cell(you_row, "Memory d"), table.cell(you_row, "Memory p"))
        ),
    );
}

fn is_mean_sd_cell(s: &str) -> bool {
    // d.ddd (d.ddd)
    let b = s.as_bytes();
    let digit = |i: usize| b[i].is_ascii_digit();
    b.len() == 13
        && digit(0)
        && b[1] == b'.'
        && (2..5).all(digit)
        && &s[5..7] == " ("
        && digit(7)
        && b[8] == b'.'
        && (9..12).all(digit)
        && b[12] == b')'
}

#[test]
fn c11_table_shapes() {
    let mut records = run_plan(&[selftest::NOISE_PROVIDER, "mock:anchor-noise:1.2"], 2, |_| true);
    records.extend(run_plan(&["mock:refuser"], 2, |s| !s.strategy.requires_profile()));
    let sims = selftest::run_study2(&Config::builtin(), &Conversation::fixtures(), "mock:script").unwrap();
    let corpora = report::marker_corpora(&sims, CategoryLexicon::builtin());
    let (_, tables) = report::build_tables(&records, &sims, &corpora, &ModelLabels::default());
    let by_number = |n: u8| tables.iter().find(|t| t.kind.number() == n).unwrap();
    let traits = ["Extraversion", "Agreeableness", "Conscientiousness", "Neuroticism", "Openness"];
    let expected: Vec<(u8, Vec<&str>)> = vec![
        (2, [&["Model", "Prompt Type", "Level", "N"][..], &traits].concat()),
        (3, vec!["Trait", "High M", "Low M", "Difference", "Cohen's d", "p"]),
        (4, vec!["Model", "High M", "Low M", "Cohen's d", "p"]),
        (5, vec!["Prompt Type", "Cohen's d"]),
        (7, vec!["Personality", "N Turns", "Total WC", "Mean WC (SD)"]),
        (
            8,
            vec![
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
        ),
    ];
    let mut problems = Vec::new();
    for (n, header) in &expected {
        let t = by_number(*n);
        if &t.header != header {
            problems.push(format!("table {n} header {:?}", t.header));
        }
        if t.rows.is_empty() {
            problems.push(format!("table {n} empty"));
        }
        let csv_rows = csv::Reader::from_reader(t.to_csv().as_bytes()).records().count();
        if csv_rows != t.rows.len() {
            problems.push(format!("table {n} csv rows {csv_rows}"));
        }
    }
    let t2 = by_number(2);
    let bad_cells: Vec<&String> = t2.rows.iter().flat_map(|r| &r[4..]).filter(|c| *c != "--" && !is_mean_sd_cell(c)).collect();
    if !bad_cells.is_empty() {
        problems.push(format!("table 2 cells {bad_cells:?}"));
    }
    let t3_sorted = {
        let t = by_number(3);
        let ds: Vec<f64> = t.rows.iter().map(|r| r[4].parse().unwrap()).collect();
        ds.windows(2).all(|w| w[0] >= w[1])
    };
    if !t3_sorted {
        problems.push("table 3 not sorted by d".into());
    }
    verdict(
        11,
        "table shapes",
        problems.is_empty(),
        format!("tables 2, 3, 4, 5, 7, 8 checked; e.g. table 2 cell {:?}; problems {problems:?}", t2.rows[0][4]),
    );
}

fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn c12_selftest_determinism() {
    let config = Config::builtin();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = selftest::run(&config, a.path()).unwrap();
    let rb = selftest::run(&config, b.path()).unwrap();
    let (ta, tb) = (tree(a.path()), tree(b.path()));
    let differing: Vec<&String> = ta.keys().filter(|k| ta.get(*k) != tb.get(*k)).collect();
    verdict(
        12,
        "determinism",
        ta == tb && !ta.is_empty() && ra.all_passed() && rb.all_passed(),
        format!("{} files compared, differing {differing:?}, selftest checks passed = {}", ta.len(), ra.all_passed()),
    );
}
