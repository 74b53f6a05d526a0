use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use litcoref::analysis::{analyze_corpus, AnalysisConfig, AnalysisReport, RepetitionThresholds};
use litcoref::dataset::{self, group_records, validate_corpus, SplitConfig, SplitError, WithheldNovels};
use litcoref::records::{read_jsonl, write_jsonl, CorpusRecord, PredictionRecord, RecordError};
use litcoref::report::{join_records, GoldRecord, JoinedCorpus, RecordKey, ScoreReport, Suite, TOOLKIT, VERSION};
use litcoref::strict::LengthGateMode;
use litcoref::{parse_lenient, DiagnosticKind};

#[derive(Parser)]
#[command(
    name = "litcoref",
    version,
    about = "Inline coreference markup, scoring and dataset tools"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a corpus file for parse failures and annotation convention problems.
    Validate {
        corpus: PathBuf,
        #[arg(long, default_value_t = 50)]
        min_sentences: usize,
    },
    /// Split a corpus into train/val/test pair files plus a manifest.
    Split {
        corpus: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Comma-separated novel ids kept entirely for testing.
        #[arg(long, value_delimiter = ',')]
        withhold: Vec<String>,
        /// Withhold the N largest novels when no ids are given.
        #[arg(long, default_value_t = 5)]
        withhold_largest: usize,
        #[arg(long, default_value_t = 40)]
        train_per_novel: usize,
        #[arg(long, default_value_t = 2)]
        val_per_novel: usize,
        #[arg(long, default_value_t = 50)]
        min_sentences: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Score predictions against gold annotations.
    Score {
        gold: PathBuf,
        predictions: PathBuf,
        #[arg(long, default_value_t = Suite::All)]
        suite: Suite,
        #[arg(long, default_value_t = LengthGateMode::Char)]
        gate: LengthGateMode,
        /// Write the JSON report here.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Label failures, tabulate word replacements and list hallucinated tails.
    Analyze {
        gold: PathBuf,
        predictions: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        min_repeat_len: usize,
        #[arg(long, default_value_t = 3)]
        min_repeat_count: usize,
        #[arg(long, default_value_t = 3)]
        max_indel_tokens: usize,
    },
    /// Remove annotation markup from every line of a text file.
    Strip { input: PathBuf, output: PathBuf },
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{}: {source}", .path.display())]
    Records {
        path: PathBuf,
        #[source]
        source: RecordError,
    },
    #[error("{0}")]
    Domain(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Io { .. } | CliError::Records { .. } => 2,
            CliError::Domain(_) => 1,
        }
    }

    fn io(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
        move |source| CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

fn domain(e: impl ToString) -> CliError {
    CliError::Domain(e.to_string())
}

fn read_records<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    let file = File::open(path).map_err(CliError::io(path))?;
    read_jsonl(BufReader::new(file)).map_err(|source| CliError::Records {
        path: path.to_path_buf(),
        source,
    })
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    fs::write(path, contents).map_err(CliError::io(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut json = serde_json::to_string_pretty(value).expect("report serializes");
    json.push('\n');
    write_file(path, json.as_bytes())
}

fn validate(corpus: &Path, min_sentences: usize) -> Result<(), CliError> {
    let novels = group_records(read_records::<CorpusRecord>(corpus)?);
    let (excluded, violations): (Vec<_>, Vec<_>) = validate_corpus(&novels, min_sentences)
        .into_iter()
        .partition(|v| v.is_exclusion());
    for v in &excluded {
        println!("note: {v}");
    }
    for v in &violations {
        println!("{v}");
    }
    println!("{} violations", violations.len());
    if violations.is_empty() {
        Ok(())
    } else {
        Err(CliError::Domain(format!(
            "{}: {} violations",
            corpus.display(),
            violations.len()
        )))
    }
}

#[allow(clippy::too_many_arguments)]
fn split(
    corpus: &Path,
    out_dir: &Path,
    withhold: Vec<String>,
    withhold_largest: usize,
    train_per_novel: usize,
    val_per_novel: usize,
    min_sentences: usize,
    seed: u64,
) -> Result<(), CliError> {
    let config = SplitConfig {
        withheld: if withhold.is_empty() {
            WithheldNovels::Largest(withhold_largest)
        } else {
            WithheldNovels::Ids(withhold.into_iter().collect::<BTreeSet<_>>())
        },
        train_per_novel,
        val_per_novel,
        min_sentences,
        seed,
    };
    config.check().map_err(domain)?;
    let novels = group_records(read_records::<CorpusRecord>(corpus)?);
    let out = dataset::split(&novels, &config).map_err(|e| match e {
        SplitError::InvalidCorpus(violations) => {
            for v in &violations {
                eprintln!("{v}");
            }
            domain(SplitError::InvalidCorpus(violations))
        }
        other => domain(other),
    })?;

    fs::create_dir_all(out_dir).map_err(CliError::io(out_dir))?;
    for (name, records) in [
        ("train.jsonl", &out.train),
        ("val.jsonl", &out.val),
        ("test.jsonl", &out.test),
    ] {
        let path = out_dir.join(name);
        let file = File::create(&path).map_err(CliError::io(&path))?;
        write_jsonl(BufWriter::new(file), records).map_err(CliError::io(&path))?;
    }
    write_file(&out_dir.join("manifest.json"), out.manifest.to_json().as_bytes())?;
    let c = out.manifest.counts;
    println!(
        "train {} / val {} / test {} / excluded {}",
        c.train, c.val, c.test, c.excluded
    );
    Ok(())
}

fn load_joined(gold: &Path, predictions: &Path) -> Result<JoinedCorpus, CliError> {
    let gold = read_records::<GoldRecord>(gold)?;
    let predictions = read_records::<PredictionRecord>(predictions)?;
    join_records(gold, predictions).map_err(domain)
}

fn score(
    gold: &Path,
    predictions: &Path,
    suite: Suite,
    gate: LengthGateMode,
    output: Option<&Path>,
) -> Result<(), CliError> {
    let joined = load_joined(gold, predictions)?;
    let report = ScoreReport::compute(&joined.pairs, suite, gate).map_err(domain)?;
    let label = predictions
        .file_stem()
        .map_or_else(|| "predictions".into(), |s| s.to_string_lossy().into_owned());
    print!("{}", report.table(&label));
    if let Some(path) = output {
        write_json(path, &report)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct AnalyzeDocument<'a> {
    toolkit: &'a str,
    version: &'a str,
    config: AnalysisConfig,
    keys: &'a [RecordKey],
    report: &'a AnalysisReport,
}

fn print_analysis(keys: &[RecordKey], report: &AnalysisReport) {
    println!("Failure labels ({} sentences)", report.sentences);
    for (kind, count) in &report.histogram {
        let pct = if report.sentences == 0 {
            0.0
        } else {
            100.0 * *count as f64 / report.sentences as f64
        };
        println!("  {:<22} {count:>6} {pct:>7.2}%", kind.to_string());
    }
    println!();
    println!("Replacements");
    if report.replacements.is_empty() {
        println!("  (none)");
    }
    for r in &report.replacements {
        println!("  {:<20} -> {:<20} {:>6}", r.original, r.substituted, r.count);
    }
    println!();
    println!("Hallucinated tails");
    if report.hallucinations.is_empty() {
        println!("  (none)");
    }
    for h in &report.hallucinations {
        let (novel_id, sent_id) = &keys[h.index];
        let repetition = h
            .tail
            .repetition
            .as_ref()
            .map(|r| format!(" [repeats {:?} x{}]", r.unit, r.count))
            .unwrap_or_default();
        println!(
            "  {novel_id}/{sent_id} @{}: {:?}{repetition}",
            h.tail.start, h.tail.text
        );
    }
}

fn analyze(gold: &Path, predictions: &Path, output: Option<&Path>, config: AnalysisConfig) -> Result<(), CliError> {
    let joined = load_joined(gold, predictions)?;
    let report = analyze_corpus(&joined.pairs, &config);
    print_analysis(&joined.keys, &report);
    if let Some(path) = output {
        let doc = AnalyzeDocument {
            toolkit: TOOLKIT,
            version: VERSION,
            config,
            keys: &joined.keys,
            report: &report,
        };
        write_json(path, &doc)?;
    }
    Ok(())
}

fn strip_file(input: &Path, output: &Path) -> Result<(), CliError> {
    let text = fs::read_to_string(input).map_err(CliError::io(input))?;
    let mut out = String::with_capacity(text.len());
    for (i, line) in text.split_inclusive('\n').enumerate() {
        let body = line.trim_end_matches(['\n', '\r']);
        let (clean, diagnostics) = parse_lenient(body);
        for d in diagnostics.iter().filter(|d| d.kind != DiagnosticKind::EmptyInput) {
            eprintln!("{}:{}: {d}", input.display(), i + 1);
        }
        out.push_str(clean.clean_text());
        out.push_str(&line[body.len()..]);
    }
    let file = File::create(output).map_err(CliError::io(output))?;
    let mut w = BufWriter::new(file);
    w.write_all(out.as_bytes())
        .and_then(|_| w.flush())
        .map_err(CliError::io(output))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Validate { corpus, min_sentences } => validate(&corpus, min_sentences),
        Command::Split {
            corpus,
            out_dir,
            withhold,
            withhold_largest,
            train_per_novel,
            val_per_novel,
            min_sentences,
            seed,
        } => split(
            &corpus,
            &out_dir,
            withhold,
            withhold_largest,
            train_per_novel,
            val_per_novel,
            min_sentences,
            seed,
        ),
        Command::Score {
            gold,
            predictions,
            suite,
            gate,
            output,
        } => score(&gold, &predictions, suite, gate, output.as_deref()),
        Command::Analyze {
            gold,
            predictions,
            output,
            min_repeat_len,
            min_repeat_count,
            max_indel_tokens,
        } => analyze(
            &gold,
            &predictions,
            output.as_deref(),
            AnalysisConfig {
                repetition: RepetitionThresholds {
                    min_len: min_repeat_len,
                    min_count: min_repeat_count,
                },
                max_indel_tokens,
            },
        ),
        Command::Strip { input, output } => strip_file(&input, &output),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
