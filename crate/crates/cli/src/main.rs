use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use persona_align::config::{Config, ConfigError};
use persona_align::gateway::{Decoding, Gateway, GatewayError, ProviderId};
use persona_align::lexicon::{self, CategoryLexicon};
use persona_align::persona::{special_profiles, TraitName};
use persona_align::report::{self, Format, MarkerCorpora, ModelLabels};
use persona_align::runner::{self, ExecuteOptions, RecordStore, RunnerError, SystemClock, TrialRecord};
use persona_align::selftest::{self, SelftestError};
use persona_align::simulator::{self, Conversation, DecisionPolicy, SimError, SimulationOptions, SimulationResult, ThresholdPolicy};

/// Persona prompting experiments: inventory runs, conversation replay,
/// analysis and tables.
#[derive(Debug, Parser)]
#[command(name = "persona-align", version)]
struct Cli {
    /// Config file. Falls back to $PERSONA_ALIGN_CONFIG, then built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the size of the trial grid.
    Plan {
        /// Comma-separated provider ids (config names or mock:*).
        #[arg(long, value_delimiter = ',', required = true)]
        providers: Vec<String>,
        #[arg(long)]
        runs: Option<u32>,
        /// Also list every trial id.
        #[arg(long)]
        list: bool,
    },
    /// Administer the inventory over the full grid. Resumes an existing run.
    RunBfi {
        #[arg(long, value_delimiter = ',')]
        providers: Vec<String>,
        #[arg(long)]
        runs: Option<u32>,
        /// Output directory; records go to records.jsonl inside it.
        #[arg(long)]
        out: PathBuf,
        /// Replay responses from this cassette instead of calling providers.
        #[arg(long, conflicts_with = "record")]
        cassette: Option<PathBuf>,
        /// Record every response to this cassette.
        #[arg(long)]
        record: Option<PathBuf>,
        /// Offline; defaults the provider list to the noisy anchor mock.
        #[arg(long)]
        mock: bool,
        #[arg(long, default_value_t = 8)]
        workers: usize,
    },
    /// Replay transcripts with an injected persona agent.
    Simulate {
        /// Directory of *.jsonl transcripts; the bundled samples if omitted.
        #[arg(long)]
        transcripts: Option<PathBuf>,
        /// Traits to give a High persona (one run per trait); all five if omitted.
        #[arg(long = "trait", value_delimiter = ',')]
        traits: Vec<String>,
        #[arg(long, value_enum, default_value_t = PolicyArg::Threshold)]
        policy: PolicyArg,
        /// Provider for generation, decisions and memory snapshots.
        #[arg(long)]
        provider: Option<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, conflicts_with = "record")]
        cassette: Option<PathBuf>,
        #[arg(long)]
        record: Option<PathBuf>,
        /// Offline; defaults the provider to the scripted mock.
        #[arg(long)]
        mock: bool,
    },
    /// Summarize inventory records and print the trait table.
    Analyze {
        /// records.jsonl, or a run directory containing it.
        #[arg(long)]
        records: PathBuf,
        /// Write analysis.json here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write tables 2 to 8 under <out>/tables.
    Report {
        #[arg(long)]
        records: Option<PathBuf>,
        /// Directory written by `simulate`.
        #[arg(long)]
        simulation: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// md or csv; both if omitted.
        #[arg(long, value_delimiter = ',')]
        format: Vec<Format>,
        /// Word-category dictionary; the bundled one if omitted.
        #[arg(long)]
        lexicon: Option<PathBuf>,
        /// Externally computed scores for utterance documents.
        #[arg(long)]
        scores_conversation: Option<PathBuf>,
        /// Externally computed scores for memory documents.
        #[arg(long)]
        scores_memory: Option<PathBuf>,
    },
    /// Run both studies offline against mocks and check the results.
    Selftest {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PolicyArg {
    Threshold,
    Judge,
    Always,
    Never,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            let line = serde_json::json!({ "error": error_kind(&e), "message": error_message(&e) });
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}

/// The cause chain joined with ": ", skipping causes already spelled out by
/// the error above them.
fn error_message(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !out.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

fn error_kind(e: &anyhow::Error) -> &'static str {
    for cause in e.chain() {
        if let Some(g) = cause.downcast_ref::<GatewayError>() {
            return g.kind();
        }
        if cause.is::<ConfigError>() {
            return "config";
        }
        if cause.is::<RunnerError>() {
            return "runner";
        }
        if cause.is::<SimError>() {
            return "simulation";
        }
        if cause.is::<SelftestError>() {
            return "selftest";
        }
        if cause.is::<std::io::Error>() {
            return "io";
        }
    }
    "usage"
}

fn run(cli: Cli) -> Result<ExitCode> {
    let config = Config::resolve(cli.config.as_deref())?;
    match cli.command {
        Command::Plan { providers, runs, list } => {
            let ids = provider_ids(&providers);
            let plan = runner::build_plan(&ids, runs.unwrap_or(config.runs_per_config))?;
            if list {
                for spec in &plan {
                    println!("{}", spec.id());
                }
            }
            println!("{} trials", plan.len());
        }
        Command::RunBfi { providers, runs, out, cassette, record, mock, workers } => {
            let mut ids = provider_ids(&providers);
            if ids.is_empty() {
                ids = if mock {
                    vec![ProviderId::new(selftest::NOISE_PROVIDER)]
                } else {
                    config.providers.iter().map(|p| ProviderId::new(p.name.clone())).collect()
                };
            }
            let plan = runner::build_plan(&ids, runs.unwrap_or(config.runs_per_config))?;
            let gateway = gateway(&config, &ids, mock || cassette.is_some(), cassette.as_deref(), record.as_deref())?;
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let mut store = RecordStore::open(&out.join("records.jsonl"))?;
            let clock = SystemClock;
            let mut opts = ExecuteOptions::new(&clock);
            opts.workers = workers;
            opts.decoding = Decoding::from(config.decoding);
            let summary = runner::execute(&plan, &gateway, &mut store, &opts)?;
            gateway.flush()?;
            let t = summary.total();
            println!(
                "{} trials: {} run, {} already done; scored {}, refusals {}, parse errors {}, gateway errors {}",
                plan.len(),
                summary.executed,
                summary.skipped,
                t.scored,
                t.refusals,
                t.parse_errors,
                t.gateway_errors
            );
            if t.gateway_errors > 0 {
                eprintln!("{} trials failed at the gateway; rerun the same command to retry them", t.gateway_errors);
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Simulate { transcripts, traits, policy, provider, out, cassette, record, mock } => {
            let conversations = match transcripts.or(config.paths.transcripts.clone()) {
                Some(dir) => Conversation::load_dir(&dir)?,
                None => Conversation::fixtures(),
            };
            if conversations.is_empty() {
                bail!("no transcripts found");
            }
            let personas = personas(&traits)?;
            let provider = provider.unwrap_or_else(|| {
                if mock {
                    "mock:script".into()
                } else {
                    config.simulation.provider.clone()
                }
            });
            let id = ProviderId::new(provider);
            let offline = mock || cassette.is_some() || id.is_mock();
            let gateway =
                gateway(&config, std::slice::from_ref(&id), offline, cassette.as_deref(), record.as_deref())?;
            let mut opts = SimulationOptions::from_config(&config.simulation, Decoding::from(config.decoding));
            opts.provider = id;
            let policy = match policy {
                PolicyArg::Threshold => DecisionPolicy::Threshold(ThresholdPolicy::from_config(
                    &config.policy,
                    &config.simulation.agent_name,
                    config.seed,
                )),
                PolicyArg::Judge => DecisionPolicy::LlmJudge,
                PolicyArg::Always => DecisionPolicy::AlwaysContribute,
                PolicyArg::Never => DecisionPolicy::AlwaysSilent,
            };
            let results = simulator::simulate_all(&conversations, &personas, &gateway, &policy, &opts)?;
            gateway.flush()?;
            simulator::write_outputs(&out, &results)?;
            let table = report::participation_table(&simulator::participation_stats(&results));
            print!("{}", table.to_markdown());
        }
        Command::Analyze { records, out } => {
            let records = load_records(&records)?;
            let labels = ModelLabels::from_config(&config);
            let analysis = report::analyze(&records, &labels);
            print!("{}", report::controllability_table(&analysis).to_markdown());
            for s in &analysis.skipped {
                eprintln!("skipped: {s}");
            }
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                std::fs::write(dir.join("analysis.json"), serde_json::to_string_pretty(&analysis)? + "\n")?;
            }
        }
        Command::Report { records, simulation, out, format, lexicon, scores_conversation, scores_memory } => {
            let records = match records {
                Some(p) => load_records(&p)?,
                None => Vec::new(),
            };
            let sims: Vec<SimulationResult> = match simulation {
                Some(dir) => {
                    let p = dir.join("results.json");
                    let text = std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
                    serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
                }
                None => Vec::new(),
            };
            let lex = match lexicon.or(config.paths.lexicon.clone()) {
                Some(p) => CategoryLexicon::load(&p)?,
                None => CategoryLexicon::builtin().clone(),
            };
            let mut corpora: MarkerCorpora = report::marker_corpora(&sims, &lex);
            if let Some(p) = scores_conversation {
                report::merge_imported(&mut corpora.conversation, &report::label_imported(lexicon::import_csv(&p)?));
            }
            if let Some(p) = scores_memory {
                report::merge_imported(&mut corpora.memory, &report::label_imported(lexicon::import_csv(&p)?));
            }
            let labels = ModelLabels::from_config(&config);
            let (analysis, tables) = report::build_tables(&records, &sims, &corpora, &labels);
            let formats = if format.is_empty() { vec![Format::Md, Format::Csv] } else { format };
            for p in report::write_tables(&out, &tables, &formats)? {
                println!("{}", p.display());
            }
            std::fs::write(out.join("analysis.json"), serde_json::to_string_pretty(&analysis)? + "\n")?;
        }
        Command::Selftest { out } => {
            let report = selftest::run(&config, &out)?;
            print!("{report}");
            if !report.all_passed() {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn provider_ids(names: &[String]) -> Vec<ProviderId> {
    names.iter().map(|s| s.trim()).filter(|s| !s.is_empty()).map(ProviderId::new).collect()
}

fn personas(traits: &[String]) -> Result<Vec<persona_align::persona::PersonaProfile>> {
    let all = special_profiles().single_high;
    if traits.is_empty() {
        return Ok(all);
    }
    traits
        .iter()
        .map(|t| {
            let t: TraitName = t.parse()?;
            Ok(all[t.index()])
        })
        .collect()
}

fn gateway(
    config: &Config,
    ids: &[ProviderId],
    offline: bool,
    cassette: Option<&Path>,
    record: Option<&Path>,
) -> Result<Gateway> {
    let mut b = Gateway::builder_from_config(config, ids, offline)?;
    if let Some(p) = cassette {
        b = b.replay_from(p)?;
    }
    if let Some(p) = record {
        b = b.record_to(p)?;
    }
    Ok(b.build())
}

fn load_records(path: &Path) -> Result<Vec<TrialRecord>> {
    let file = if path.is_dir() { path.join("records.jsonl") } else { path.to_path_buf() };
    Ok(runner::load_records(&file)?)
}
